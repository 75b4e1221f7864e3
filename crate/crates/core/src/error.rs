use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("no sub-box fits: n = {n} < m + g(m) + ell = {needed}")]
    TilingTooSmall { n: usize, needed: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("conditioning event has zero mass (log mass = {log_mass})")]
    ZeroMassConditioning { log_mass: f64 },

    #[error("exact computation needs {states} states, over the budget of {budget}")]
    BudgetExceeded { states: usize, budget: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("power iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("improper grid function: {0}")]
    Improper(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
