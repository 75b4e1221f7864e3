//! Exact samplers. Conditioned blocks are drawn forward with the backward
//! weights `h`, so no rejection is ever needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::law::{ChainLaw, IndexLaw};
use crate::field::model::FieldModel;
use crate::lattice::{BoxSpec, Site};

/// A seeded generator for stream `stream` of `seed`. Independent streams keep
/// reports identical regardless of how work is split across threads.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Atom indices on a box, in `BoxSpec::sites` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub region: BoxSpec,
    pub atoms: Vec<usize>,
}

impl Configuration {
    pub fn atom_at(&self, site: &Site) -> Option<usize> {
        if !self.region.contains(*site) {
            return None;
        }
        let c = self.region.corner();
        let n = self.region.side() as i64;
        let idx = match self.region.dim() {
            1 => site[0] - c[0],
            _ => (site[0] - c[0]) * n + (site[1] - c[1]),
        };
        Some(self.atoms[idx as usize])
    }

    /// Empirical mean of the atom values.
    pub fn mean(&self, model: &FieldModel) -> Vec<f64> {
        let space = model.space();
        let mut m = vec![0.0; space.dim()];
        for &a in &self.atoms {
            for (acc, v) in m.iter_mut().zip(space.atom(a)) {
                *acc += v;
            }
        }
        let n = self.atoms.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

fn draw(log_w: &[f64], rng: &mut impl Rng) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, wi) in w.iter().enumerate() {
        if *wi > 0.0 {
            last = i;
            if u < *wi {
                return i;
            }
            u -= wi;
        }
    }
    last
}

fn sample_chain(c: &ChainLaw, lo: i64, hi: i64, rng: &mut impl Rng) -> Vec<usize> {
    let a = c.log_start.len();
    let mut out = Vec::with_capacity((hi - lo + 1) as usize);
    match c.block {
        None => {
            let mut x = draw(&c.log_start, rng);
            out.push(x);
            for _ in lo..hi {
                x = draw(&c.log_p[x], rng);
                out.push(x);
            }
        }
        Some(j) => {
            let j = j as i64;
            let first = lo.div_euclid(j);
            let last = hi.div_euclid(j);
            for b in first..=last {
                let start = b * j;
                let w: Vec<f64> = (0..a).map(|s| c.log_start[s] + c.h[(j - 1) as usize][s]).collect();
                let mut x = draw(&w, rng);
                for pos in start..start + j {
                    if pos > start {
                        let rest = (start + j - 1 - pos) as usize;
                        let w: Vec<f64> = (0..a).map(|s| c.log_p[x][s] + c.h[rest][s]).collect();
                        x = draw(&w, rng);
                    }
                    if (lo..=hi).contains(&pos) {
                        out.push(x);
                    }
                }
            }
        }
    }
    out
}

/// Draws the model restricted to `region`.
pub fn sample_with(law: &IndexLaw, region: &BoxSpec, rng: &mut impl Rng) -> Result<Configuration> {
    let atoms = match law {
        IndexLaw::Iid { log_w, .. } => (0..region.cardinality()).map(|_| draw(log_w, rng)).collect(),
        IndexLaw::Chain(c) => {
            if region.dim() != 1 {
                return Err(Error::Unsupported("chain models live on Z".into()));
            }
            let lo = region.corner()[0];
            sample_chain(c, lo, lo + region.side() as i64 - 1, rng)
        }
    };
    Ok(Configuration { region: region.clone(), atoms })
}

/// Draws the model restricted to `region`, deterministically in `seed`.
pub fn sample(model: &FieldModel, region: &BoxSpec, seed: u64) -> Result<Configuration> {
    if region.dim() != model.lattice_dim() {
        return Err(Error::InvalidArgument("box and model lattice dimensions differ".into()));
    }
    sample_with(&model.law()?, region, &mut stream_rng(seed, 0))
}
