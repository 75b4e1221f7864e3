//! Exact finite-volume laws. Every model reduces to a law on atom indices:
//! either i.i.d. sites or a (possibly blocked, possibly conditioned) chain on
//! `Z`. Sums over a box are tracked by forward dynamic programming over
//! `(position, current atom, running sum)`, with running sums quantized so
//! that sums reached along different paths merge.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::model::{log_weights, masked_lse, FieldModel, ModelKind};
use crate::field::space::ConvexNbhd;
use crate::lattice::{BoxSpec, Site};
use crate::numeric::{dot, log_add_exp, log_sum_exp};

/// Default cap on the number of `(atom, sum)` states of the dynamic program.
pub const DEFAULT_BUDGET: usize = 4_000_000;

/// Running sums closer than this are merged.
const QUANTUM: f64 = 1.0 / (1u64 << 30) as f64;

type Key = [i64; 2];

fn key_of(s: [f64; 2]) -> Key {
    [(s[0] / QUANTUM).round() as i64, (s[1] / QUANTUM).round() as i64]
}

#[derive(Clone, Debug, Default)]
pub(crate) struct SumDist {
    map: BTreeMap<Key, ([f64; 2], f64)>,
}

impl SumDist {
    fn point(logp: f64) -> Self {
        let mut d = Self::default();
        d.add([0.0; 2], logp);
        d
    }

    fn add(&mut self, sum: [f64; 2], logp: f64) {
        if logp == f64::NEG_INFINITY {
            return;
        }
        self.map
            .entry(key_of(sum))
            .and_modify(|e| e.1 = log_add_exp(e.1, logp))
            .or_insert((sum, logp));
    }

    fn shifted_into(&self, out: &mut SumDist, dv: [f64; 2], dlp: f64) {
        if dlp == f64::NEG_INFINITY {
            return;
        }
        for (s, lp) in self.map.values() {
            out.add([s[0] + dv[0], s[1] + dv[1]], lp + dlp);
        }
    }

    fn len(&self) -> usize {
        self.map.len()
    }

    fn total(&self) -> f64 {
        log_sum_exp(self.map.values().map(|e| e.1))
    }
}

/// A chain on `Z` started from `log_start`, with log transition matrix
/// `log_p`. When `block` is set, the chain restarts independently at every
/// multiple of the block side; conditioned blocks carry the kept-atom mask in
/// the columns of `log_p` and in `log_start`, together with `h[t][a]`, the
/// log-probability that the next `t` sites stay in the kept set.
#[derive(Clone, Debug)]
pub struct ChainLaw {
    pub(crate) log_p: Vec<Vec<f64>>,
    pub(crate) log_start: Vec<f64>,
    pub(crate) block: Option<usize>,
    pub(crate) log_mass: f64,
    pub(crate) h: Vec<Vec<f64>>,
}

impl ChainLaw {
    fn atoms(&self) -> usize {
        self.log_start.len()
    }

    fn offset(&self, x: i64) -> usize {
        self.block.map_or(0, |j| x.rem_euclid(j as i64) as usize)
    }

    /// Whether the transition `x → x + 1` crosses a block boundary.
    fn restarts_after(&self, x: i64) -> bool {
        self.block.is_some_and(|j| (x + 1).rem_euclid(j as i64) == 0)
    }

    fn push(&self, v: &[f64]) -> Vec<f64> {
        (0..self.atoms()).map(|b| log_sum_exp((0..self.atoms()).map(|a| v[a] + self.log_p[a][b]))).collect()
    }

    /// Unnormalized forward weights at `x`: log P(block prefix up to `x` kept, η(x) = a).
    fn init(&self, x: i64) -> Vec<f64> {
        let mut v = self.log_start.clone();
        for _ in 0..self.offset(x) {
            v = self.push(&v);
        }
        v
    }

    /// Per-atom closing weight at `x`, completing the current block.
    fn close(&self, x: i64) -> Vec<f64> {
        match self.block {
            Some(j) => {
                let rest = j - 1 - self.offset(x);
                self.h[rest].iter().map(|v| v - self.log_mass).collect()
            }
            None => vec![0.0; self.atoms()],
        }
    }

    fn mask_chain(log_p: &[Vec<f64>], log_start: &[f64], keep: &[bool]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let lp = log_p
            .iter()
            .map(|row| row.iter().zip(keep).map(|(v, k)| if *k { *v } else { f64::NEG_INFINITY }).collect())
            .collect();
        let ls = log_start.iter().zip(keep).map(|(v, k)| if *k { *v } else { f64::NEG_INFINITY }).collect();
        (lp, ls)
    }

    fn with_blocks(log_p: Vec<Vec<f64>>, log_start: Vec<f64>, block: usize) -> Self {
        let a = log_start.len();
        let mut h = vec![vec![0.0; a]];
        for t in 1..block {
            let prev = &h[t - 1];
            let next = (0..a).map(|i| log_sum_exp((0..a).map(|b| log_p[i][b] + prev[b]))).collect();
            h.push(next);
        }
        let log_mass = log_sum_exp((0..a).map(|i| log_start[i] + h[block - 1][i]));
        Self { log_p, log_start, block: Some(block), log_mass, h }
    }
}

/// Law of the atom-index field of a model.
#[derive(Clone, Debug)]
pub enum IndexLaw {
    Iid { log_w: Vec<f64>, dim: usize },
    Chain(ChainLaw),
}

impl IndexLaw {
    pub(crate) fn of(model: &FieldModel) -> Result<Self> {
        match model.kind() {
            ModelKind::Iid { weights } => Ok(IndexLaw::Iid { log_w: log_weights(weights), dim: model.lattice_dim() }),
            ModelKind::Markov { chain } => Ok(IndexLaw::Chain(ChainLaw {
                log_p: chain.transition().iter().map(|r| log_weights(r)).collect(),
                log_start: log_weights(chain.stationary()),
                block: None,
                log_mass: 0.0,
                h: Vec::new(),
            })),
            ModelKind::AffineImage { base, .. } => base.law(),
            ModelKind::ProductOfMarginals { base, block } => match base.law()? {
                iid @ IndexLaw::Iid { .. } => Ok(iid),
                IndexLaw::Chain(c) if c.block.is_none() => Ok(IndexLaw::Chain(ChainLaw::with_blocks(c.log_p, c.log_start, *block))),
                IndexLaw::Chain(_) => Err(Error::Unsupported("nested block constructions".into())),
            },
            ModelKind::Conditioned { base, block, keep, .. } => match base.law()? {
                IndexLaw::Iid { log_w, dim } => {
                    let z = masked_lse(&log_w, keep);
                    let log_w = log_w.iter().zip(keep).map(|(v, k)| if *k { v - z } else { f64::NEG_INFINITY }).collect();
                    Ok(IndexLaw::Iid { log_w, dim })
                }
                IndexLaw::Chain(c) if c.block.is_none() => {
                    let (lp, ls) = ChainLaw::mask_chain(&c.log_p, &c.log_start, keep);
                    Ok(IndexLaw::Chain(ChainLaw::with_blocks(lp, ls, *block)))
                }
                IndexLaw::Chain(_) => Err(Error::Unsupported("nested block constructions".into())),
            },
        }
    }

    /// `log P(every site of a block of side `block` takes an atom of `keep`)`.
    pub(crate) fn block_log_mass(&self, block: usize, dim: usize, keep: &[bool]) -> Result<f64> {
        match self {
            IndexLaw::Iid { log_w, .. } => {
                let per_site = masked_lse(log_w, keep);
                Ok(if per_site == f64::NEG_INFINITY { per_site } else { (block.pow(dim as u32)) as f64 * per_site })
            }
            IndexLaw::Chain(c) if c.block.is_none() => {
                let (lp, ls) = ChainLaw::mask_chain(&c.log_p, &c.log_start, keep);
                Ok(ChainLaw::with_blocks(lp, ls, block).log_mass)
            }
            IndexLaw::Chain(_) => Err(Error::Unsupported("nested block constructions".into())),
        }
    }

    pub fn atoms(&self) -> usize {
        match self {
            IndexLaw::Iid { log_w, .. } => log_w.len(),
            IndexLaw::Chain(c) => c.atoms(),
        }
    }

    /// Exact `inf P(η(z) ∈ target | η(w), w ≠ z)` over all sites `z` and all
    /// conditioning configurations of positive probability. Conditioning on a
    /// convex event of finitely many other sites averages these conditionals,
    /// so this is the best constant in the local-control inequality.
    pub fn site_conditional_min(&self, target: &[bool]) -> f64 {
        match self {
            IndexLaw::Iid { log_w, .. } => masked_lse(log_w, target).exp(),
            IndexLaw::Chain(c) => {
                let a = c.atoms();
                let ratio = |weights: &dyn Fn(usize) -> f64| {
                    let all = log_sum_exp((0..a).map(weights));
                    if all == f64::NEG_INFINITY {
                        return None;
                    }
                    let hit = log_sum_exp((0..a).filter(|b| target[*b]).map(weights));
                    Some((hit - all).exp())
                };
                let mut best = f64::INFINITY;
                let mut take = |r: Option<f64>| {
                    if let Some(r) = r {
                        best = best.min(r);
                    }
                };
                match c.block {
                    None => {
                        for x in 0..a {
                            for y in 0..a {
                                take(ratio(&|b| c.log_p[x][b] + c.log_p[b][y]));
                            }
                        }
                    }
                    Some(1) => take(ratio(&|b| c.log_start[b])),
                    Some(_) => {
                        for y in 0..a {
                            take(ratio(&|b| c.log_start[b] + c.log_p[b][y]));
                        }
                        for x in 0..a {
                            take(ratio(&|b| c.log_p[x][b]));
                            for y in 0..a {
                                take(ratio(&|b| c.log_p[x][b] + c.log_p[b][y]));
                            }
                        }
                    }
                }
                best
            }
        }
    }
}

/// Per-site atom masks `{ site ↦ allowed atoms }`; the event that every
/// listed site takes an allowed atom.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cylinder {
    constraints: BTreeMap<Site, Vec<bool>>,
}

impl Cylinder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a constraint, intersecting with any existing one at the same site.
    pub fn with(mut self, site: Site, mask: Vec<bool>) -> Self {
        self.restrict(site, mask);
        self
    }

    pub fn restrict(&mut self, site: Site, mask: Vec<bool>) {
        self.constraints
            .entry(site)
            .and_modify(|m| m.iter_mut().zip(&mask).for_each(|(a, b)| *a = *a && *b))
            .or_insert(mask);
    }

    pub fn merged(&self, other: &Cylinder) -> Cylinder {
        let mut out = self.clone();
        for (s, m) in &other.constraints {
            out.restrict(*s, m.clone());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Site, &Vec<bool>)> {
        self.constraints.iter()
    }

    pub fn get(&self, site: &Site) -> Option<&Vec<bool>> {
        self.constraints.get(site)
    }

    /// Whether an index configuration (given as a lookup) lies in the cylinder.
    pub fn holds(&self, atom_at: impl Fn(&Site) -> usize) -> bool {
        self.constraints.iter().all(|(s, m)| m[atom_at(s)])
    }
}

/// Exact `log P(cylinder)`.
pub fn cylinder_log_prob(model: &FieldModel, cyl: &Cylinder) -> Result<f64> {
    if cyl.is_empty() {
        return Ok(0.0);
    }
    let law = model.law()?;
    match &law {
        IndexLaw::Iid { log_w, .. } => Ok(cyl.iter().map(|(_, m)| masked_lse(log_w, m)).sum()),
        IndexLaw::Chain(c) => {
            let masks: BTreeMap<i64, &[bool]> = cyl
                .iter()
                .map(|(s, m)| {
                    if s[1] != 0 {
                        Err(Error::Unsupported("chain models live on Z; second coordinate must be 0".into()))
                    } else {
                        Ok((s[0], m.as_slice()))
                    }
                })
                .collect::<Result<_>>()?;
            let lo = *masks.keys().next().unwrap_or(&0);
            let hi = *masks.keys().last().unwrap_or(&0);
            let zeros = vec![[0.0; 2]; c.atoms()];
            Ok(chain_sum_dist(c, &zeros, lo, hi, &masks, DEFAULT_BUDGET)?.total())
        }
    }
}

/// Per-site log factors of `log P(cyl)` when the law factorizes over sites.
pub(crate) fn cylinder_site_terms(model: &FieldModel, cyl: &Cylinder) -> Result<Option<Vec<f64>>> {
    match model.law()? {
        IndexLaw::Iid { log_w, .. } => Ok(Some(cyl.iter().map(|(_, m)| masked_lse(&log_w, m)).collect())),
        IndexLaw::Chain(_) => Ok(None),
    }
}

/// Law of `Σ_{x ∈ [lo, hi]} value(η(x))` jointly with the masks in `masks`;
/// total mass is the probability of the masked event.
fn chain_sum_dist(
    c: &ChainLaw,
    values: &[[f64; 2]],
    lo: i64,
    hi: i64,
    masks: &BTreeMap<i64, &[bool]>,
    budget: usize,
) -> Result<SumDist> {
    let a = c.atoms();
    let allowed = |x: i64, b: usize| masks.get(&x).is_none_or(|m| m[b]);
    let init = c.init(lo);
    let mut states: Vec<SumDist> = (0..a)
        .map(|b| {
            let mut d = SumDist::default();
            if allowed(lo, b) {
                d.add(values[b], init[b]);
            }
            d
        })
        .collect();
    for x in lo..hi {
        let mut next: Vec<SumDist> = vec![SumDist::default(); a];
        if c.restarts_after(x) {
            let mut merged = SumDist::default();
            for s in &states {
                s.shifted_into(&mut merged, [0.0; 2], -c.log_mass);
            }
            for b in 0..a {
                if allowed(x + 1, b) {
                    merged.shifted_into(&mut next[b], values[b], c.log_start[b]);
                }
            }
        } else {
            for b in 0..a {
                if !allowed(x + 1, b) {
                    continue;
                }
                for (s, row) in states.iter().zip(&c.log_p) {
                    s.shifted_into(&mut next[b], values[b], row[b]);
                }
            }
        }
        let size: usize = next.iter().map(SumDist::len).sum();
        if size > budget {
            return Err(Error::BudgetExceeded { states: size, budget });
        }
        states = next;
    }
    let close = c.close(hi);
    let mut out = SumDist::default();
    for (s, w) in states.iter().zip(close) {
        s.shifted_into(&mut out, [0.0; 2], w);
    }
    Ok(out)
}

fn iid_sum_dist(log_w: &[f64], values: &[[f64; 2]], count: usize, budget: usize) -> Result<SumDist> {
    let mut d = SumDist::point(0.0);
    for _ in 0..count {
        let mut next = SumDist::default();
        for (v, lw) in values.iter().zip(log_w) {
            d.shifted_into(&mut next, *v, *lw);
        }
        if next.len() > budget {
            return Err(Error::BudgetExceeded { states: next.len(), budget });
        }
        d = next;
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanPoint {
    pub sum: [f64; 2],
    pub mean: [f64; 2],
    pub log_prob: f64,
}

/// Exact law of the empirical mean `𝔪_Λ η` over a box.
#[derive(Clone, Debug, Serialize)]
pub struct MeanLaw {
    volume: usize,
    dim: usize,
    points: Vec<MeanPoint>,
}

impl MeanLaw {
    fn from_sums(d: SumDist, volume: usize, dim: usize) -> Self {
        let points = d
            .map
            .into_values()
            .map(|(sum, log_prob)| MeanPoint { sum, mean: [sum[0] / volume as f64, sum[1] / volume as f64], log_prob })
            .collect();
        Self { volume, dim, points }
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    /// Dimension `k` of the value space.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[MeanPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `log P(pred(𝔪))`.
    pub fn log_prob_where(&self, pred: impl Fn(&[f64]) -> bool) -> f64 {
        log_sum_exp(self.points.iter().filter(|p| pred(&p.mean[..self.dim])).map(|p| p.log_prob))
    }

    /// `log P(𝔪 ∈ C)` for an open convex `C`.
    pub fn log_prob_in(&self, c: &ConvexNbhd) -> f64 {
        self.log_prob_where(|x| c.contains(x))
    }

    pub fn total_log_mass(&self) -> f64 {
        log_sum_exp(self.points.iter().map(|p| p.log_prob))
    }

    /// `log E[exp ⟨λ, Σ η(z)⟩]`.
    pub fn log_mgf(&self, lambda: &[f64]) -> f64 {
        log_sum_exp(self.points.iter().map(|p| p.log_prob + dot(lambda, &p.sum[..self.dim])))
    }

    /// `p_Λ(λ) = log E[exp ⟨λ, Σ η(z)⟩] / |Λ|`, normalized by the total
    /// mass so that rounding in the law never moves `p_Λ(0)` off zero.
    pub fn pressure(&self, lambda: &[f64]) -> f64 {
        if lambda.iter().all(|l| *l == 0.0) {
            return 0.0;
        }
        (self.log_mgf(lambda) - self.total_log_mass()) / self.volume as f64
    }
}

/// Exact law of `𝔪_Λ(n)` for the box `Λ(n)` at the origin.
pub fn mean_law_exact(model: &FieldModel, n: usize) -> Result<MeanLaw> {
    mean_law_box(model, &BoxSpec::origin(n, model.lattice_dim())?, DEFAULT_BUDGET)
}

/// Exact law of `𝔪_Λ` for an arbitrary box, within a DP state budget.
pub fn mean_law_box(model: &FieldModel, b: &BoxSpec, budget: usize) -> Result<MeanLaw> {
    if b.dim() != model.lattice_dim() {
        return Err(Error::InvalidArgument(format!(
            "box dimension {} differs from lattice dimension {}",
            b.dim(),
            model.lattice_dim()
        )));
    }
    let values = model.space().padded();
    let d = match model.law()? {
        IndexLaw::Iid { log_w, .. } => iid_sum_dist(&log_w, &values, b.cardinality(), budget)?,
        IndexLaw::Chain(c) => {
            let lo = b.corner()[0];
            chain_sum_dist(&c, &values, lo, lo + b.side() as i64 - 1, &BTreeMap::new(), budget)?
        }
    };
    Ok(MeanLaw::from_sums(d, b.cardinality(), model.space().dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::space::ValueSpace;

    fn rademacher() -> FieldModel {
        FieldModel::uniform(ValueSpace::scalar(&[-1.0, 1.0]).unwrap(), 1).unwrap()
    }

    fn doeblin() -> FieldModel {
        FieldModel::markov(ValueSpace::scalar(&[-1.0, 1.0]).unwrap(), vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()
    }

    /// Brute-force path enumeration oracle for chain models on `[0, n)`.
    fn enumerate_chain(p: &[Vec<f64>], start: &[f64], n: usize, keep: Option<&[bool]>) -> BTreeMap<i64, f64> {
        let a = start.len();
        let mut out = BTreeMap::new();
        let mut total_kept = 0.0;
        for code in 0..a.pow(n as u32) {
            let path: Vec<usize> = (0..n).map(|i| (code / a.pow(i as u32)) % a).collect();
            if let Some(k) = keep {
                if path.iter().any(|x| !k[*x]) {
                    continue;
                }
            }
            let mut w = start[path[0]];
            for i in 1..n {
                w *= p[path[i - 1]][path[i]];
            }
            total_kept += w;
            // atoms are -1, +1: sum = 2 * (#ones) - n
            let s = path.iter().map(|x| if *x == 1 { 1 } else { -1 }).sum::<i64>();
            *out.entry(s).or_insert(0.0) += w;
        }
        out.values_mut().for_each(|v| *v /= total_kept);
        out
    }

    #[test]
    fn rademacher_two_sites() {
        let law = mean_law_exact(&rademacher(), 2).unwrap();
        let probs: Vec<(f64, f64)> = law.points().iter().map(|p| (p.mean[0], p.log_prob.exp())).collect();
        assert_eq!(probs.len(), 3);
        assert!((probs[0].0 + 1.0).abs() < 1e-15 && (probs[0].1 - 0.25).abs() < 1e-15);
        assert!(probs[1].0.abs() < 1e-15 && (probs[1].1 - 0.5).abs() < 1e-15);
        assert!((probs[2].1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rademacher_twenty_sites_binomial() {
        let law = mean_law_exact(&rademacher(), 20).unwrap();
        let p0 = law.log_prob_where(|x| x[0].abs() < 1e-9).exp();
        // C(20,10) / 2^20
        let binom = (1..=10).fold(1.0, |acc, i| acc * (10 + i) as f64 / i as f64) / 2f64.powi(20);
        assert!((p0 - binom).abs() < 1e-14);
        assert!((law.total_log_mass()).abs() < 1e-12);
    }

    #[test]
    fn uniform_rows_chain_matches_iid() {
        let chain =
            FieldModel::markov(ValueSpace::scalar(&[-1.0, 1.0]).unwrap(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let a = mean_law_exact(&chain, 12).unwrap();
        let b = mean_law_exact(&rademacher(), 12).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!((p.log_prob - q.log_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn markov_law_matches_path_enumeration() {
        let m = doeblin();
        let pi = [4.0 / 7.0, 3.0 / 7.0];
        let p = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let oracle = enumerate_chain(&p, &pi, 7, None);
        let law = mean_law_exact(&m, 7).unwrap();
        for pt in law.points() {
            let s = pt.sum[0].round() as i64;
            assert!((pt.log_prob.exp() - oracle[&s]).abs() < 1e-13);
        }
    }

    #[test]
    fn conditioned_chain_block_matches_path_enumeration() {
        let space = ValueSpace::scalar(&[-1.0, 0.5, 1.0]).unwrap();
        let p = vec![vec![0.5, 0.2, 0.3], vec![0.1, 0.6, 0.3], vec![0.3, 0.3, 0.4]];
        let m = FieldModel::markov(space, p.clone()).unwrap();
        let cm = m.conditioned(3, &[0, 2]).unwrap();
        let pi = m.site_marginal().unwrap();
        // Paths over the kept atoms {-1, +1}, so sums are integers.
        let keep = [true, false, true];
        let mut oracle: BTreeMap<i64, f64> = BTreeMap::new();
        let mut total = 0.0;
        for code in 0..27usize {
            let path: Vec<usize> = (0..3).map(|i| (code / 3usize.pow(i)) % 3).collect();
            if path.iter().any(|x| !keep[*x]) {
                continue;
            }
            let w = pi[path[0]] * p[path[0]][path[1]] * p[path[1]][path[2]];
            total += w;
            let s: i64 = path.iter().map(|x| if *x == 0 { -1 } else { 1 }).sum();
            *oracle.entry(s).or_insert(0.0) += w;
        }
        assert!((cm.conditioning_log_mass().unwrap() - total.ln()).abs() < 1e-13);
        let law = mean_law_exact(&cm, 3).unwrap();
        assert_eq!(law.len(), oracle.len());
        for pt in law.points() {
            let s = pt.sum[0].round() as i64;
            assert!((pt.log_prob.exp() - oracle[&s] / total).abs() < 1e-13);
        }
        // Two blocks are independent copies.
        let law6 = mean_law_exact(&cm, 6).unwrap();
        for pt in law6.points() {
            let s = pt.sum[0].round() as i64;
            let conv: f64 = oracle
                .iter()
                .filter_map(|(s1, p1)| oracle.get(&(s - s1)).map(|p2| p1 * p2 / (total * total)))
                .sum();
            assert!((pt.log_prob.exp() - conv).abs() < 1e-13);
        }
    }

    #[test]
    fn full_support_conditioning_equals_product() {
        let m = doeblin();
        let a = mean_law_exact(&m.conditioned(3, &[0, 1]).unwrap(), 7).unwrap();
        let b = mean_law_exact(&m.product_of_marginals(3).unwrap(), 7).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!((p.log_prob - q.log_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_conditioning() {
        let m = rademacher().conditioned(1, &[1]).unwrap();
        let law = mean_law_exact(&m, 5).unwrap();
        assert_eq!(law.len(), 1);
        assert_eq!(law.points()[0].mean[0], 1.0);
        assert!(law.points()[0].log_prob.abs() < 1e-15);
    }

    #[test]
    fn cylinder_probabilities() {
        let m = doeblin();
        let c = Cylinder::new().with([0, 0], vec![true, false]).with([2, 0], vec![false, true]);
        // P(η0 = a0, η2 = a1) = π0 · P²(0, 1)
        let p2 = 0.7 * 0.3 + 0.3 * 0.6;
        let lp = cylinder_log_prob(&m, &c).unwrap();
        assert!((lp.exp() - 4.0 / 7.0 * p2).abs() < 1e-14);
        let iid = rademacher();
        let lp = cylinder_log_prob(&iid, &c).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-14);
        assert_eq!(cylinder_log_prob(&iid, &Cylinder::new()).unwrap(), 0.0);
    }

    #[test]
    fn two_dimensional_iid_mean_law() {
        let m = FieldModel::uniform(ValueSpace::scalar(&[0.0, 1.0]).unwrap(), 2).unwrap();
        let law = mean_law_exact(&m, 3).unwrap();
        assert_eq!(law.volume(), 9);
        assert_eq!(law.len(), 10);
        assert!(law.total_log_mass().abs() < 1e-12);
    }

    #[test]
    fn budget_guard() {
        let r = mean_law_box(&rademacher(), &BoxSpec::origin(50, 1).unwrap(), 10);
        assert!(matches!(r, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn site_conditionals() {
        let law = doeblin().law().unwrap();
        let p = [[0.7, 0.3], [0.4, 0.6]];
        let mut oracle = f64::INFINITY;
        for a in 0..2 {
            for c in 0..2 {
                let num = p[a][1] * p[1][c];
                let den = p[a][0] * p[0][c] + num;
                oracle = oracle.min(num / den);
            }
        }
        assert!((law.site_conditional_min(&[false, true]) - oracle).abs() < 1e-14);
        assert_eq!(law.site_conditional_min(&[true, true]), 1.0);
        let iid = rademacher().law().unwrap();
        assert!((iid.site_conditional_min(&[false, true]) - 0.5).abs() < 1e-15);
    }
}
