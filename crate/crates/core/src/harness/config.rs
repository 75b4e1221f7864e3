//! TOML experiment configuration. Every section except `[model]` is optional
//! and every key has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::entropy::BASIS_RADII;
use crate::error::{Error, Result};
use crate::field::{
    AffineMap, CheckMode, DecouplingParams, EventConfig, FieldModel, Hypotheses, LocalControlEntry, LocalControlParams, ModelKind,
    Shape, ValueSpace,
};
use crate::table::StepTable;

/// Scalars or vectors; scalars are points of `R^1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Points {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

impl Points {
    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        match self {
            Points::Scalar(v) => v.iter().map(|x| vec![*x]).collect(),
            Points::Vector(v) => v.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Points::Scalar(_) => 1,
            Points::Vector(v) => v.first().map_or(1, |p| p.len()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindName {
    Iid,
    Markov,
    AffineImage,
    ProductOfMarginals,
    Conditioned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: KindName,
    pub atoms: Option<Points>,
    pub labels: Option<Vec<String>>,
    /// Normalized on load.
    pub weights: Option<Vec<f64>>,
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub lattice_dim: usize,
    /// Block side of product and conditioned models.
    pub m: Option<usize>,
    /// Kept atom indices of a conditioned model.
    #[serde(rename = "K")]
    pub keep: Option<Vec<usize>>,
    pub linear: Option<Vec<Vec<f64>>>,
    pub offset: Option<Vec<f64>>,
    pub base: Option<Box<ModelSpec>>,
}

fn one() -> usize {
    1
}

fn missing(key: &str, kind: KindName) -> Error {
    Error::Config(format!("missing key `{key}` in [model] of kind {kind:?}"))
}

impl ModelSpec {
    fn space(&self) -> Result<ValueSpace> {
        let atoms = self.atoms.as_ref().ok_or_else(|| missing("atoms", self.kind))?;
        ValueSpace::new(atoms.dim(), atoms.to_vecs(), self.labels.clone())
    }

    fn base(&self) -> Result<FieldModel> {
        self.base.as_ref().ok_or_else(|| missing("base", self.kind))?.build()
    }

    fn block(&self) -> Result<usize> {
        self.m.ok_or_else(|| missing("m", self.kind))
    }

    /// The model with default hypotheses attached: independence for i.i.d.
    /// fields, the Doeblin certificate for chains, and the base parameters
    /// for derived models.
    pub fn build(&self) -> Result<FieldModel> {
        let model = match self.kind {
            KindName::Iid => {
                let space = self.space()?;
                let w = self.weights.clone().unwrap_or_else(|| vec![1.0; space.len()]);
                let s: f64 = w.iter().sum();
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::Config("weights must have a positive finite sum".into()));
                }
                FieldModel::iid(space, w.iter().map(|x| x / s).collect(), self.lattice_dim)?
                    .with_hypotheses(Hypotheses { decoupling: Some(DecouplingParams::independent()), local_control: None })
            }
            KindName::Markov => {
                let p = self.transition.clone().ok_or_else(|| missing("transition", self.kind))?;
                if self.lattice_dim != 1 {
                    return Err(Error::Config("markov models live on a one-dimensional lattice".into()));
                }
                let m = FieldModel::markov(self.space()?, p)?;
                let dec = match m.kind() {
                    ModelKind::Markov { chain } => DecouplingParams::doeblin(chain),
                    _ => unreachable!(),
                };
                m.with_hypotheses(Hypotheses { decoupling: Some(dec), local_control: None })
            }
            KindName::AffineImage => {
                let linear = self.linear.clone().ok_or_else(|| missing("linear", self.kind))?;
                let offset = self.offset.clone().unwrap_or_else(|| vec![0.0; linear.len()]);
                self.base()?.affine_image(AffineMap::new(linear, offset)?)?
            }
            KindName::ProductOfMarginals => self.base()?.product_of_marginals(self.block()?)?,
            KindName::Conditioned => {
                let keep = self.keep.clone().ok_or_else(|| missing("K", self.kind))?;
                self.base()?.conditioned(self.block()?, &keep)?
            }
        };
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct GridsConfig {
    pub lambda_half_width: f64,
    pub lambda_points: usize,
    /// Defaults to the sup norm of the atoms plus 0.5.
    pub x_half_width: Option<f64>,
    pub x_points: usize,
    /// Target points of `verify` and `entropy`.
    pub x: Points,
}

impl Default for GridsConfig {
    fn default() -> Self {
        Self {
            lambda_half_width: 5.0,
            lambda_points: 201,
            x_half_width: None,
            x_points: 201,
            x: Points::Scalar(vec![0.0, 0.3, -0.3, 0.6, -0.6]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct EntropyConfig {
    pub volumes: Vec<usize>,
    /// Box basis radii reported by `entropy`.
    pub radii: Vec<f64>,
    /// Neighborhood radius used by `verify`.
    pub radius: f64,
    pub eps: f64,
    pub delta: f64,
    /// Monte Carlo samples per volume.
    pub samples: usize,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self { volumes: vec![50, 100, 200, 400], radii: BASIS_RADII.to_vec(), radius: 0.025, eps: 0.1, delta: 0.01, samples: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct Tolerances {
    /// Two-sided `|s_est + p*|` tolerance of `verify`.
    pub duality: f64,
    /// `s_est <= -p* + factor · h · slope`.
    pub upper_margin_factor: f64,
    pub convexity: f64,
    pub block: f64,
    /// Slack tolerance of exact inequality checks.
    pub exact: f64,
    pub mosco_m2: f64,
    pub mosco_m1: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { duality: 0.02, upper_margin_factor: 3.0, convexity: 1e-9, block: 1e-10, exact: 1e-9, mosco_m2: 1e-6, mosco_m1: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: CheckMode,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 0, mode: CheckMode::Exact, out: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct TilingConfig {
    pub n: usize,
    pub m: usize,
    /// Defaults to the model's `g(m)`.
    pub g: Option<usize>,
    /// Defaults to the model's translation step.
    pub ell: Option<usize>,
    /// `m` values of the `ρ` table, with `n(m) = m^n-power`.
    pub ms: Vec<usize>,
    pub n_power: u32,
    pub thresholds: Vec<f64>,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self { n: 64, m: 8, g: None, ell: None, ms: (2..=40).collect(), n_power: 2, thresholds: vec![0.5, 0.25, 0.1] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct HypothesesConfig {
    /// Box side of decoupling test events.
    pub n: usize,
    /// `[[n, g(n)], ...]`
    pub g_table: Option<Vec<(usize, usize)>>,
    /// `[[n, c(n)], ...]`
    pub c_table: Option<Vec<(usize, f64)>>,
    /// `[[r, t], ...]` for `V = (-r, r)^k`.
    pub t_table: Option<Vec<(f64, f64)>>,
    /// `[[r, α], ...]`; missing radii get the exact constant.
    pub alpha_table: Option<Vec<(f64, f64)>>,
    pub decay_horizon: usize,
    pub events: EventConfig,
}

impl Default for HypothesesConfig {
    fn default() -> Self {
        Self { n: 4, g_table: None, c_table: None, t_table: None, alpha_table: None, decay_horizon: 1000, events: EventConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct MoscoConfig {
    /// Largest index `M` of the family.
    pub max_m: usize,
    /// `K_m` keeps the first `min(|atoms|, m + offset)` atoms.
    pub offset: usize,
    /// Explicit `K_1, K_2, ...` overriding the schedule.
    pub keep: Option<Vec<Vec<usize>>>,
    /// Radius in grid steps of the first window of the suffix.
    pub budget: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub x_points: usize,
}

impl Default for MoscoConfig {
    fn default() -> Self {
        Self { max_m: 12, offset: 2, keep: None, budget: 3, x_lo: -0.1, x_hi: 1.0, x_points: 111 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SubadditiveConfig {
    pub ms: Vec<usize>,
    pub ns: Vec<usize>,
    pub centers: Points,
    pub radii: Vec<f64>,
    pub eps: Vec<f64>,
    /// `λ` values of the pressure subadditivity check.
    pub lambdas: Points,
    /// Concavity pairs `[x1, x2]` (scalar fields).
    pub pairs: Vec<(f64, f64)>,
}

impl Default for SubadditiveConfig {
    fn default() -> Self {
        Self {
            ms: vec![2, 4, 8],
            ns: vec![32, 64, 128],
            centers: Points::Scalar(vec![0.0, 0.2]),
            radii: vec![1.0, 0.7, 0.2],
            eps: vec![0.5, 0.1],
            lambdas: Points::Scalar(vec![-1.0, 0.0, 0.5, 2.0]),
            pairs: vec![(-0.4, 0.4)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ChebyshevConfig {
    pub cases: usize,
    pub max_n: usize,
    pub min_radius: f64,
    pub max_radius: f64,
}

impl Default for ChebyshevConfig {
    fn default() -> Self {
        Self { cases: 100, max_n: 200, min_radius: 0.02, max_radius: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grids: GridsConfig,
    #[serde(default)]
    pub entropy: EntropyConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub tiling: TilingConfig,
    #[serde(default)]
    pub hypotheses: HypothesesConfig,
    #[serde(default)]
    pub mosco: MoscoConfig,
    #[serde(default)]
    pub subadditive: SubadditiveConfig,
    #[serde(default)]
    pub chebyshev: ChebyshevConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let g = &self.grids;
        if g.lambda_points == 0 || g.x_points == 0 || g.lambda_half_width.is_nan() || g.lambda_half_width <= 0.0 {
            return bad("grids must be non-empty with a positive half width".into());
        }
        let v = &self.entropy.volumes;
        if v.is_empty() || v[0] == 0 || v.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("entropy.volumes must be positive and increasing, got {v:?}"));
        }
        if !(self.entropy.eps > 0.0 && self.entropy.eps < 1.0) {
            return bad(format!("entropy.eps must lie in (0, 1), got {}", self.entropy.eps));
        }
        if self.subadditive.eps.iter().any(|e| !(*e >= 0.0 && *e < 1.0)) {
            return bad("subadditive.eps values must lie in [0, 1)".into());
        }
        if self.mosco.max_m < 2 {
            return bad("mosco.max-m must be at least 2".into());
        }
        Ok(())
    }

    /// The configured model with hypothesis tables from `[hypotheses]` applied.
    pub fn model(&self) -> Result<FieldModel> {
        let model = self.model.build()?;
        let h = &self.hypotheses;
        let mut hyp = model.hypotheses().clone();
        if h.g_table.is_some() || h.c_table.is_some() {
            let base = hyp.decoupling.clone().unwrap_or_else(DecouplingParams::independent);
            let g = match &h.g_table {
                Some(t) => StepTable::new(t.clone())?,
                None => base.g.clone(),
            };
            let c = match &h.c_table {
                Some(t) => StepTable::new(t.clone())?,
                None => base.c.clone(),
            };
            hyp.decoupling = Some(DecouplingParams::new(g, c)?);
        }
        if let Some(ts) = &h.t_table {
            let k = model.space().dim();
            let mut entries = Vec::with_capacity(ts.len());
            for &(r, t) in ts {
                let shape = Shape::Box { radii: vec![r; k] };
                let claimed = h.alpha_table.as_ref().and_then(|a| a.iter().find(|(ra, _)| (ra - r).abs() < 1e-12).map(|x| x.1));
                entries.push(match claimed {
                    Some(alpha) => LocalControlEntry { shape, t, alpha },
                    None => LocalControlEntry::exact(&model, shape, t)?,
                });
            }
            hyp.local_control = Some(LocalControlParams::Table(entries));
        }
        Ok(model.with_hypotheses(hyp))
    }

    pub fn decoupling(&self, model: &FieldModel) -> DecouplingParams {
        model.hypotheses().decoupling.clone().unwrap_or_else(DecouplingParams::independent)
    }
}
