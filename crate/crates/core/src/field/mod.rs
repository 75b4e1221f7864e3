//! Lattice-field laws with finitely many values.

pub mod hypotheses;
pub mod law;
pub mod model;
pub mod sample;
pub mod space;

pub use hypotheses::{
    check_decoupling, check_local_control, local_control_alpha, CheckMode, DecouplingParams, EventConfig, Hypotheses,
    LocalControlEntry, LocalControlParams,
};
pub use law::{cylinder_log_prob, mean_law_box, mean_law_exact, Cylinder, IndexLaw, MeanLaw, MeanPoint, DEFAULT_BUDGET};
pub use model::{FieldModel, MarkovChain, ModelKind};
pub use sample::{sample, sample_with, stream_rng, Configuration};
pub use space::{AffineMap, ConvexNbhd, Shape, ValueSpace, BOUNDARY_GUARD};
