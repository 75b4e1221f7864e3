use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::hypotheses::{Hypotheses, LocalControlParams};
use crate::field::law::IndexLaw;
use crate::field::space::{AffineMap, ValueSpace};
use crate::numeric::log_sum_exp;

const ROW_SUM_TOL: f64 = 1e-12;

/// A finite-state chain whose every transition probability is at least
/// `delta > 0` (Doeblin minorization), started from its stationary law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkovChain {
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    delta: f64,
}

impl MarkovChain {
    pub fn new(transition: Vec<Vec<f64>>) -> Result<Self> {
        let a = transition.len();
        if a == 0 || transition.iter().any(|r| r.len() != a) {
            return Err(Error::InvalidModel("transition matrix must be square and non-empty".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidModel(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!("row {i} sums to {s}, not 1")));
            }
        }
        let delta = transition.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        if delta <= 0.0 {
            return Err(Error::InvalidModel("chain has a zero transition; no Doeblin minorization".into()));
        }
        let stationary = stationary_law(&transition)?;
        Ok(Self { transition, stationary, delta })
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Smallest transition probability.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.transition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transition.is_empty()
    }
}

/// Solves `π (P - I) = 0, Σ π = 1` by Gaussian elimination with partial pivoting.
fn stationary_law(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let a = p.len();
    // Rows: equations. Unknown j is π_j. Equation i < a-1: Σ_j π_j (P[j][i] - [i==j]) = 0.
    let mut m: Vec<Vec<f64>> = (0..a)
        .map(|i| {
            let mut row: Vec<f64> = (0..a).map(|j| p[j][i] - if i == j { 1.0 } else { 0.0 }).collect();
            row.push(0.0);
            row
        })
        .collect();
    m[a - 1] = vec![1.0; a + 1];
    for col in 0..a {
        let piv = (col..a).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap_or(col);
        if m[piv][col].abs() < 1e-300 {
            return Err(Error::InvalidModel("stationary law is not unique".into()));
        }
        m.swap(col, piv);
        let pivot = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / pivot[col];
                if f != 0.0 {
                    for (x, p) in row[col..=a].iter_mut().zip(&pivot[col..=a]) {
                        *x -= f * p;
                    }
                }
            }
        }
    }
    let pi: Vec<f64> = (0..a).map(|i| (m[i][a] / m[i][i]).max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|v| v / s).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Iid { weights: Vec<f64> },
    Markov { chain: MarkovChain },
    AffineImage { base: Box<FieldModel>, map: AffineMap },
    /// `μ_Λ(m)`: independent copies of the base law restricted to blocks of side `block`.
    ProductOfMarginals { base: Box<FieldModel>, block: usize },
    /// `μ_Λ(m)^K`: as above, each block conditioned on every site taking an atom of `keep`.
    Conditioned { base: Box<FieldModel>, block: usize, keep: Vec<bool>, log_mass: f64 },
}

/// The law of a field `η : Z^d → Y` with finitely many values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldModel {
    kind: ModelKind,
    space: ValueSpace,
    lattice_dim: usize,
    step: usize,
    hypotheses: Hypotheses,
}

impl FieldModel {
    pub fn iid(space: ValueSpace, weights: Vec<f64>, lattice_dim: usize) -> Result<Self> {
        check_lattice_dim(lattice_dim)?;
        if weights.len() != space.len() {
            return Err(Error::InvalidModel(format!("{} weights for {} atoms", weights.len(), space.len())));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidModel("weights must be positive".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!("weights sum to {s}, not 1")));
        }
        Ok(Self { kind: ModelKind::Iid { weights }, space, lattice_dim, step: 1, hypotheses: Hypotheses::default() })
    }

    /// A uniform law over the atoms.
    pub fn uniform(space: ValueSpace, lattice_dim: usize) -> Result<Self> {
        let n = space.len();
        Self::iid(space, vec![1.0 / n as f64; n], lattice_dim)
    }

    /// Stationary Markov chain on `Z` (lattice dimension 1 only).
    pub fn markov(space: ValueSpace, transition: Vec<Vec<f64>>) -> Result<Self> {
        let chain = MarkovChain::new(transition)?;
        if chain.len() != space.len() {
            return Err(Error::InvalidModel(format!("{} chain states for {} atoms", chain.len(), space.len())));
        }
        Ok(Self { kind: ModelKind::Markov { chain }, space, lattice_dim: 1, step: 1, hypotheses: Hypotheses::default() })
    }

    /// The field `A η + b`. Decoupling parameters carry over unchanged; local
    /// control parameters are pushed forward through `A^{-1}` and the shift.
    pub fn affine_image(&self, map: AffineMap) -> Result<Self> {
        let space = self.space.mapped(&map)?;
        let hypotheses = Hypotheses {
            decoupling: self.hypotheses.decoupling.clone(),
            local_control: self
                .hypotheses
                .local_control
                .clone()
                .map(|base| LocalControlParams::Affine { base: Box::new(base), map: map.clone() }),
        };
        Ok(Self {
            kind: ModelKind::AffineImage { base: Box::new(self.clone()), map },
            space,
            lattice_dim: self.lattice_dim,
            step: self.step,
            hypotheses,
        })
    }

    /// `μ_Λ(m)` with blocks of side `block`.
    pub fn product_of_marginals(&self, block: usize) -> Result<Self> {
        self.check_block_base(block)?;
        let out = Self {
            kind: ModelKind::ProductOfMarginals { base: Box::new(self.clone()), block },
            space: self.space.clone(),
            lattice_dim: self.lattice_dim,
            step: block,
            hypotheses: self.hypotheses.clone(),
        };
        out.law()?;
        Ok(out)
    }

    /// `μ_Λ(m)^K` where `K` is given by atom indices.
    pub fn conditioned(&self, block: usize, keep: &[usize]) -> Result<Self> {
        self.check_block_base(block)?;
        let mut mask = vec![false; self.space.len()];
        for &i in keep {
            if i >= mask.len() {
                return Err(Error::InvalidModel(format!("atom index {i} out of range")));
            }
            mask[i] = true;
        }
        let log_mass = self.law()?.block_log_mass(block, self.lattice_dim, &mask)?;
        if log_mass == f64::NEG_INFINITY {
            return Err(Error::ZeroMassConditioning { log_mass });
        }
        Ok(Self {
            kind: ModelKind::Conditioned { base: Box::new(self.clone()), block, keep: mask, log_mass },
            space: self.space.clone(),
            lattice_dim: self.lattice_dim,
            step: block,
            hypotheses: self.hypotheses.clone(),
        })
    }

    fn check_block_base(&self, block: usize) -> Result<()> {
        if block == 0 {
            return Err(Error::InvalidModel("block side must be positive".into()));
        }
        if self.is_block_model() {
            return Err(Error::Unsupported("block constructions over block models".into()));
        }
        Ok(())
    }

    pub fn with_hypotheses(mut self, hypotheses: Hypotheses) -> Self {
        self.hypotheses = hypotheses;
        self
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn space(&self) -> &ValueSpace {
        &self.space
    }

    pub fn lattice_dim(&self) -> usize {
        self.lattice_dim
    }

    /// `ℓ` such that the law is invariant under translations by `(ℓZ)^d`.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn hypotheses(&self) -> &Hypotheses {
        &self.hypotheses
    }

    pub fn is_block_model(&self) -> bool {
        match &self.kind {
            ModelKind::ProductOfMarginals { .. } | ModelKind::Conditioned { .. } => true,
            ModelKind::AffineImage { base, .. } => base.is_block_model(),
            _ => false,
        }
    }

    /// Block side for block models.
    pub fn block(&self) -> Option<usize> {
        match &self.kind {
            ModelKind::ProductOfMarginals { block, .. } | ModelKind::Conditioned { block, .. } => Some(*block),
            ModelKind::AffineImage { base, .. } => base.block(),
            _ => None,
        }
    }

    /// `log P(every site of Λ(m) takes a kept atom)` for conditioned models.
    pub fn conditioning_log_mass(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::Conditioned { log_mass, .. } => Some(*log_mass),
            ModelKind::AffineImage { base, .. } => base.conditioning_log_mass(),
            _ => None,
        }
    }

    /// The law of the atom-index field.
    pub fn law(&self) -> Result<IndexLaw> {
        IndexLaw::of(self)
    }

    /// Law of a single site `η(z)` for shift-invariant models (IID, Markov and
    /// their affine images).
    pub fn site_marginal(&self) -> Result<Vec<f64>> {
        match &self.kind {
            ModelKind::Iid { weights } => Ok(weights.clone()),
            ModelKind::Markov { chain } => Ok(chain.stationary().to_vec()),
            ModelKind::AffineImage { base, .. } => base.site_marginal(),
            _ => Err(Error::Unsupported("single-site marginal of a block model depends on the site".into())),
        }
    }

    /// `ν(K)` under the single-site marginal.
    pub fn site_mass(&self, keep: &[bool]) -> Result<f64> {
        let w = self.site_marginal()?;
        Ok(w.iter().zip(keep).filter(|(_, k)| **k).map(|(p, _)| p).sum())
    }

    /// Short human-readable identifier.
    pub fn describe(&self) -> String {
        match &self.kind {
            ModelKind::Iid { .. } => format!("iid[{}]d{}", self.space.len(), self.lattice_dim),
            ModelKind::Markov { chain } => format!("markov[{}]delta={}", chain.len(), chain.delta()),
            ModelKind::AffineImage { base, .. } => format!("affine({})", base.describe()),
            ModelKind::ProductOfMarginals { base, block } => format!("product({},{block})", base.describe()),
            ModelKind::Conditioned { base, block, keep, .. } => {
                format!("conditioned({},{block},|K|={})", base.describe(), keep.iter().filter(|k| **k).count())
            }
        }
    }
}

fn check_lattice_dim(d: usize) -> Result<()> {
    if d == 1 || d == 2 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("lattice dimension must be 1 or 2, got {d}")))
    }
}

pub(crate) fn log_weights(w: &[f64]) -> Vec<f64> {
    w.iter().map(|p| p.ln()).collect()
}

/// `ln Σ_{a ∈ mask} e^{lw_a}`.
pub(crate) fn masked_lse(lw: &[f64], mask: &[bool]) -> f64 {
    log_sum_exp(lw.iter().zip(mask).filter(|(_, k)| **k).map(|(v, _)| *v))
}
