//! Decoupling `(g, c)` and local-control `(t, α)` parameters, their exact
//! values for the supported models, and randomized verifiers over convex
//! cylinder events.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::law::{cylinder_log_prob, cylinder_site_terms, Cylinder, IndexLaw};
use crate::field::model::{FieldModel, MarkovChain};
use crate::field::sample::{sample_with, stream_rng};
use crate::field::space::{AffineMap, Shape};
use crate::lattice::{BoxSpec, Site};
use crate::report::{Status, VerificationReport};
use crate::table::StepTable;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Hypotheses {
    pub decoupling: Option<DecouplingParams>,
    pub local_control: Option<LocalControlParams>,
}

/// Gap `g(n)` and cost `c(n)` of the decoupling inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingParams {
    pub g: StepTable<usize>,
    pub c: StepTable<f64>,
}

impl DecouplingParams {
    pub fn new(g: StepTable<usize>, c: StepTable<f64>) -> Result<Self> {
        if c.entries().iter().any(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("decoupling costs must be finite and non-negative".into()));
        }
        Ok(Self { g, c })
    }

    /// `g ≡ 0, c ≡ 0`: exact independence across boxes.
    pub fn independent() -> Self {
        Self { g: StepTable::constant(0), c: StepTable::constant(0.0) }
    }

    /// Certificate for a chain whose transitions are all `>= δ`: with at
    /// least one free site between the regions, every joint density differs
    /// from the product of marginals by a factor of at least `δ` per
    /// boundary, so `g ≡ 1, c ≡ -2 ln δ`.
    pub fn doeblin(chain: &MarkovChain) -> Self {
        Self { g: StepTable::constant(1), c: StepTable::constant(-2.0 * chain.delta().ln()) }
    }

    pub fn at(&self, n: usize) -> (usize, f64) {
        (self.g.at(n), self.c.at(n))
    }

    /// Checks that `g(n)/n` and `c(n)/n^d` are non-increasing over the
    /// tabulated keys extended by `horizon`, and reports their last values.
    pub fn decay_check(&self, dim: usize, horizon: usize) -> VerificationReport {
        let mut keys: Vec<usize> = self.g.entries().iter().map(|e| e.0).chain(self.c.entries().iter().map(|e| e.0)).collect();
        keys.push(horizon.max(1));
        keys.sort_unstable();
        keys.dedup();
        let mut report = VerificationReport::new("decoupling_decay", 0.0);
        let ratio = |n: usize| {
            let (g, c) = self.at(n);
            (g as f64 / n as f64, c / (n as f64).powi(dim as i32))
        };
        for w in keys.windows(2) {
            let (g0, c0) = ratio(w[0]);
            let (g1, c1) = ratio(w[1]);
            report.check(format!("g(n)/n n={}->{}", w[0], w[1]), g0, g1);
            report.check(format!("c(n)/n^d n={}->{}", w[0], w[1]), c0, c1);
        }
        let (g, c) = ratio(*keys.last().unwrap_or(&1));
        report.note(format!("at n={}: g(n)/n = {g}, c(n)/n^d = {c}", keys.last().unwrap_or(&1)));
        report
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalControlEntry {
    pub shape: Shape,
    pub t: f64,
    pub alpha: f64,
}

impl LocalControlEntry {
    /// The exact `α` for `(V, t)`: the smallest conditional probability of
    /// `η(z) ∈ tV` given the rest of the field.
    pub fn exact(model: &FieldModel, shape: Shape, t: f64) -> Result<Self> {
        let alpha = local_control_alpha(model, &shape, t)?;
        Ok(Self { shape, t, alpha })
    }
}

/// `V ↦ (t(V), α(V))`, tabulated on a finite family of neighborhoods and
/// pushed forward through affine maps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LocalControlParams {
    Table(Vec<LocalControlEntry>),
    /// Parameters of `A η + b` from those of `η`: `t(A^{-1} V) + M_V(-b)` and `α(A^{-1} V)`.
    Affine { base: Box<LocalControlParams>, map: AffineMap },
}

impl LocalControlParams {
    pub fn at(&self, v: &Shape) -> Option<(f64, f64)> {
        match self {
            LocalControlParams::Table(entries) => entries.iter().find(|e| e.shape.approx_eq(v, 1e-12)).map(|e| (e.t, e.alpha)),
            LocalControlParams::Affine { base, map } => {
                let (t, alpha) = base.at(&v.preimage(&map.linear))?;
                let minus_b: Vec<f64> = map.offset.iter().map(|b| -b).collect();
                Some((t + v.gauge(&minus_b), alpha))
            }
        }
    }
}

/// Atom mask of `tV`.
pub fn scaled_mask(model: &FieldModel, shape: &Shape, t: f64) -> Vec<bool> {
    let tv = shape.scaled(t);
    model.space().mask(|a| tv.contains(a))
}

/// Exact best local-control constant `α` for `(V, t)`.
pub fn local_control_alpha(model: &FieldModel, shape: &Shape, t: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidArgument(format!("scale t must be positive, got {t}")));
    }
    Ok(model.law()?.site_conditional_min(&scaled_mask(model, shape, t)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    #[default]
    Exact,
    Mc,
}

/// How random test events are drawn and judged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EventConfig {
    pub events: usize,
    pub seed: u64,
    /// Upper bound on `|S|`.
    pub max_sites: usize,
    /// How far beyond the excluded zone the sites of `S` may lie.
    pub reach: i64,
    /// Probability that a given site of the box carries a constraint.
    pub constrain_prob: f64,
    pub mode: CheckMode,
    /// Monte Carlo sample count per event.
    pub samples: usize,
    /// Monte Carlo rejection threshold in standard errors.
    pub sigmas: f64,
    /// Fewer hits than this makes a Monte Carlo event inconclusive.
    pub min_hits: usize,
    /// Exact-mode slack tolerance.
    pub tolerance: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            events: 200,
            seed: 0,
            max_sites: 4,
            reach: 6,
            constrain_prob: 0.5,
            mode: CheckMode::Exact,
            samples: 20_000,
            sigmas: 3.0,
            min_hits: 30,
            tolerance: 1e-9,
        }
    }
}

pub(crate) fn support(law: &IndexLaw) -> Vec<bool> {
    match law {
        IndexLaw::Iid { log_w, .. } => log_w.iter().map(|v| *v > f64::NEG_INFINITY).collect(),
        IndexLaw::Chain(c) => c.log_start.iter().map(|v| *v > f64::NEG_INFINITY).collect(),
    }
}

/// A random open box in value space around a random supported atom,
/// returned as the mask of atoms it contains.
pub(crate) fn random_site_mask(model: &FieldModel, supp: &[bool], rng: &mut impl Rng) -> Vec<bool> {
    let space = model.space();
    let k = space.dim();
    let candidates: Vec<usize> = (0..space.len()).filter(|i| supp[*i]).collect();
    let anchor = space.atom(candidates[rng.gen_range(0..candidates.len())]).to_vec();
    let spread: Vec<f64> = (0..k)
        .map(|i| {
            let lo = space.atoms().iter().map(|a| a[i]).fold(f64::INFINITY, f64::min);
            let hi = space.atoms().iter().map(|a| a[i]).fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    let radii: Vec<f64> = spread.iter().map(|s| s * rng.gen_range(0.05..1.0)).collect();
    let center: Vec<f64> = anchor.iter().zip(&radii).map(|(a, r)| a + r * rng.gen_range(-0.5..0.5)).collect();
    space.mask(|a| (0..k).all(|i| (a[i] - center[i]).abs() < radii[i]))
}

pub(crate) fn random_site(rng: &mut impl Rng, dim: usize, lo: i64, hi: i64) -> Site {
    let mut s = [0i64; 2];
    for c in s.iter_mut().take(dim) {
        *c = rng.gen_range(lo..=hi);
    }
    s
}

fn bounding_box(sites: &[Site], dim: usize) -> Result<BoxSpec> {
    let lo: Vec<i64> = (0..dim).map(|i| sites.iter().map(|s| s[i]).min().unwrap_or(0)).collect();
    let side = (0..dim).map(|i| sites.iter().map(|s| s[i]).max().unwrap_or(0) - lo[i] + 1).max().unwrap_or(1);
    BoxSpec::new(&lo, side as usize, dim)
}

/// Outcome of one event: exact log-probabilities or Monte Carlo estimates.
struct EventOutcome {
    label: String,
    lhs: f64,
    rhs: f64,
    slack: f64,
    status: Status,
}

/// Estimates `log P` of each cylinder from shared samples of their bounding box.
/// Returns `None` when some event has fewer than `min_hits` hits.
fn mc_log_probs(
    law: &IndexLaw,
    dim: usize,
    cyls: &[&Cylinder],
    cfg: &EventConfig,
    rng: &mut impl Rng,
) -> Result<Option<Vec<(f64, f64)>>> {
    let sites: Vec<Site> = cyls.iter().flat_map(|c| c.iter().map(|(s, _)| *s)).collect();
    if sites.is_empty() {
        return Ok(Some(vec![(0.0, 0.0); cyls.len()]));
    }
    let region = bounding_box(&sites, dim)?;
    let mut hits = vec![0usize; cyls.len()];
    for _ in 0..cfg.samples {
        let conf = sample_with(law, &region, rng)?;
        for (h, c) in hits.iter_mut().zip(cyls) {
            if c.holds(|s| conf.atom_at(s).unwrap_or(0)) {
                *h += 1;
            }
        }
    }
    if hits.iter().any(|h| *h < cfg.min_hits) {
        return Ok(None);
    }
    let n = cfg.samples as f64;
    Ok(Some(
        hits.iter()
            .map(|h| {
                let p = *h as f64 / n;
                // delta method: Var(log p̂) ≈ (1 - p) / (n p)
                (p.ln(), (1.0 - p) / (n * p))
            })
            .collect(),
    ))
}

/// Judges `log P(A ∩ B) >= shift + log P(A) + log P(B)` (with `B` optional).
#[allow(clippy::too_many_arguments)]
fn judge(
    label: String,
    model: &FieldModel,
    law: &IndexLaw,
    joint: &Cylinder,
    parts: &[&Cylinder],
    shift: f64,
    cfg: &EventConfig,
    rng: &mut impl Rng,
) -> Result<EventOutcome> {
    match cfg.mode {
        CheckMode::Exact => {
            let lhs = cylinder_log_prob(model, joint)?;
            let mut rhs = shift;
            for p in parts {
                rhs += cylinder_log_prob(model, p)?;
            }
            let slack = factorized_slack(model, joint, parts, shift)?.unwrap_or_else(|| crate::report::slack_of(lhs, rhs));
            let status = if slack.is_nan() {
                Status::Inconclusive
            } else if slack >= -cfg.tolerance {
                Status::Pass
            } else {
                Status::Fail
            };
            Ok(EventOutcome { label, lhs, rhs, slack, status })
        }
        CheckMode::Mc => {
            let mut all: Vec<&Cylinder> = vec![joint];
            all.extend_from_slice(parts);
            match mc_log_probs(law, model.lattice_dim(), &all, cfg, rng)? {
                None => Ok(EventOutcome {
                    label: format!("{label} (too few hits)"),
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    slack: f64::NAN,
                    status: Status::Inconclusive,
                }),
                Some(est) => {
                    let lhs = est[0].0;
                    let rhs = shift + est[1..].iter().map(|e| e.0).sum::<f64>();
                    let sd = est.iter().map(|e| e.1).sum::<f64>().sqrt();
                    let slack = lhs - rhs;
                    let status = if slack >= -cfg.sigmas * sd { Status::Pass } else { Status::Fail };
                    Ok(EventOutcome { label: format!("{label} sd={sd:.3e}"), lhs, rhs, slack, status })
                }
            }
        }
    }
}

/// `lhs - rhs` for site-factorized laws, summed as matched differences of
/// sorted site factors so that identical factor sets give exactly `-shift`.
fn factorized_slack(model: &FieldModel, joint: &Cylinder, parts: &[&Cylinder], shift: f64) -> Result<Option<f64>> {
    let Some(mut j) = cylinder_site_terms(model, joint)? else { return Ok(None) };
    let mut p = Vec::with_capacity(j.len());
    for part in parts {
        match cylinder_site_terms(model, part)? {
            Some(t) => p.extend(t),
            None => return Ok(None),
        }
    }
    if j.len() != p.len() || j.iter().chain(&p).any(|v| !v.is_finite()) {
        return Ok(None);
    }
    j.sort_by(|a, b| a.total_cmp(b));
    p.sort_by(|a, b| a.total_cmp(b));
    Ok(Some(j.iter().zip(&p).map(|(a, b)| a - b).sum::<f64>() - shift))
}

fn finish(mut report: VerificationReport, outcomes: Vec<Result<EventOutcome>>) -> Result<VerificationReport> {
    for o in outcomes {
        let o = o?;
        report.push(o.label, o.lhs, o.rhs, o.slack, o.status);
    }
    Ok(report)
}

/// Tests `P(η_Λ(z;n) ∈ C, η_S ∈ D) >= e^{-c(n)} P(η_Λ(z;n) ∈ C) P(η_S ∈ D)`
/// for random product-of-boxes events `C`, `D` with `dist(S, Λ(z;n)) > g(n)`.
pub fn check_decoupling(model: &FieldModel, params: &DecouplingParams, n: usize, cfg: &EventConfig) -> Result<VerificationReport> {
    let (g, c) = params.at(n);
    let law = model.law()?;
    let supp = support(&law);
    let dim = model.lattice_dim();
    let mut report = VerificationReport::new("decoupling", if cfg.mode == CheckMode::Exact { cfg.tolerance } else { cfg.sigmas });
    report.note(format!(
        "model {}, n = {n}, g(n) = {g}, c(n) = {c}, mode {:?}; {} random product-of-box cylinder events, not the universal statement",
        model.describe(),
        cfg.mode,
        cfg.events
    ));
    let outcomes: Vec<Result<EventOutcome>> = (0..cfg.events)
        .into_par_iter()
        .map(|e| {
            let mut rng = stream_rng(cfg.seed, e as u64);
            let corner: Vec<i64> = (0..dim).map(|_| rng.gen_range(-cfg.reach..=cfg.reach)).collect();
            let region = BoxSpec::new(&corner, n, dim)?;
            let mut cyl_c = Cylinder::new();
            for s in region.sites() {
                if rng.gen_bool(cfg.constrain_prob) {
                    cyl_c.restrict(s, random_site_mask(model, &supp, &mut rng));
                }
            }
            let size = rng.gen_range(1..=cfg.max_sites.max(1));
            let mut cyl_d = Cylinder::new();
            let span = g as i64 + cfg.reach;
            let (lo, hi) = (corner.iter().min().copied().unwrap_or(0) - span - 1, corner.iter().max().copied().unwrap_or(0) + n as i64 + span);
            while cyl_d.len() < size {
                let s = random_site(&mut rng, dim, lo, hi);
                if region.distance_to_site(s) > g as i64 && cyl_d.get(&s).is_none() {
                    cyl_d.restrict(s, random_site_mask(model, &supp, &mut rng));
                }
            }
            let joint = cyl_c.merged(&cyl_d);
            judge(format!("event {e}"), model, &law, &joint, &[&cyl_c, &cyl_d], -c, cfg, &mut rng)
        })
        .collect();
    finish(report, outcomes)
}

/// Tests `P(η(z) ∈ tV, η_S ∈ D) >= α P(η_S ∈ D)` for random product-of-boxes `D`.
pub fn check_local_control(model: &FieldModel, shape: &Shape, t: f64, alpha: f64, cfg: &EventConfig) -> Result<VerificationReport> {
    let law = model.law()?;
    let supp = support(&law);
    let dim = model.lattice_dim();
    let target = scaled_mask(model, shape, t);
    let mut report = VerificationReport::new("local_control", if cfg.mode == CheckMode::Exact { cfg.tolerance } else { cfg.sigmas });
    report.note(format!(
        "model {}, t = {t}, alpha = {alpha}, mode {:?}; {} random product-of-box cylinder events, not the universal statement",
        model.describe(),
        cfg.mode,
        cfg.events
    ));
    if !(alpha > 0.0 && alpha <= 1.0) {
        report.mark(Status::Fail, format!("alpha = {alpha} is outside (0, 1]"));
    }
    let log_alpha = alpha.ln();
    let near = 2i64.min(cfg.reach.max(1));
    let outcomes: Vec<Result<EventOutcome>> = (0..cfg.events)
        .into_par_iter()
        .map(|e| {
            let mut rng = stream_rng(cfg.seed, e as u64);
            let z = random_site(&mut rng, dim, -cfg.reach, cfg.reach);
            let size = rng.gen_range(1..=cfg.max_sites.max(1));
            let mut cyl_d = Cylinder::new();
            while cyl_d.len() < size {
                // Neighbors carry most of the conditioning information; favor them.
                let r = if rng.gen_bool(0.7) { near } else { cfg.reach.max(1) };
                let mut s = z;
                for c in s.iter_mut().take(dim) {
                    *c += rng.gen_range(-r..=r);
                }
                if s != z && cyl_d.get(&s).is_none() {
                    cyl_d.restrict(s, random_site_mask(model, &supp, &mut rng));
                }
            }
            let joint = cyl_d.clone().with(z, target.clone());
            judge(format!("event {e}"), model, &law, &joint, &[&cyl_d], log_alpha, cfg, &mut rng)
        })
        .collect();
    finish(report, outcomes)
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

    #[test]
    fn iid_decoupling_is_exact_equality() {
        let cfg = EventConfig { events: 50, ..EventConfig::default() };
        let r = check_decoupling(&rademacher(), &DecouplingParams::independent(), 6, &cfg).unwrap();
        assert!(r.passed());
        assert!(r.records.iter().all(|x| x.slack.abs() <= 1e-12), "{}", r.worst_slack);
    }

    #[test]
    fn doeblin_certificate_passes() {
        let m = doeblin();
        let chain = match m.kind() {
            crate::field::model::ModelKind::Markov { chain } => chain.clone(),
            _ => unreachable!(),
        };
        let cfg = EventConfig { events: 100, ..EventConfig::default() };
        let r = check_decoupling(&m, &DecouplingParams::doeblin(&chain), 5, &cfg).unwrap();
        assert!(r.passed(), "{r:?}");
        // The chain is not independent: some event must be strictly away from equality.
        assert!(r.records.iter().any(|x| x.slack.abs() > 1e-6));
    }

    #[test]
    fn local_control_sure_event() {
        let r = check_local_control(&rademacher(), &Shape::interval(1.0), 2.0, 1.0, &EventConfig::default()).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn local_control_exact_alpha_is_tight() {
        let m = doeblin();
        let v = Shape::interval(1.0);
        // t = 1.5 keeps only... both atoms have |a| = 1 < 1.5: alpha = 1.
        assert_eq!(local_control_alpha(&m, &v, 1.5).unwrap(), 1.0);
        let shifted = m.affine_image(AffineMap::new(vec![vec![1.0]], vec![-1.0]).unwrap()).unwrap();
        // η - 1 takes values {-2, 0}; t = 1 keeps the atom 0 (originally +1).
        let alpha = local_control_alpha(&shifted, &v, 1.0).unwrap();
        let cfg = EventConfig { events: 200, ..EventConfig::default() };
        assert!(check_local_control(&shifted, &v, 1.0, alpha, &cfg).unwrap().passed());
        // A slightly larger claim must be refuted by some event with both neighbors pinned.
        let strict = EventConfig { max_sites: 2, reach: 1, constrain_prob: 1.0, events: 400, ..EventConfig::default() };
        let r = check_local_control(&shifted, &v, 1.0, alpha * 1.05, &strict).unwrap();
        assert_eq!(r.status, Status::Fail);
    }

    #[test]
    fn affine_pushforward_of_local_control() {
        let m = rademacher().with_hypotheses(Hypotheses {
            decoupling: Some(DecouplingParams::independent()),
            local_control: Some(LocalControlParams::Table(vec![
                LocalControlEntry { shape: Shape::interval(1.0), t: 2.0, alpha: 1.0 },
                LocalControlEntry { shape: Shape::interval(0.5), t: 3.0, alpha: 1.0 },
            ])),
        });
        let v = Shape::interval(1.0);
        let id = m.affine_image(AffineMap::scaling(1.0).unwrap()).unwrap();
        assert_eq!(id.hypotheses().local_control.as_ref().unwrap().at(&v), Some((2.0, 1.0)));
        let doubled = m.affine_image(AffineMap::scaling(2.0).unwrap()).unwrap();
        // t(λ^{-1} V) with λ^{-1}(-1, 1) = (-1/2, 1/2)
        assert_eq!(doubled.hypotheses().local_control.as_ref().unwrap().at(&v), Some((3.0, 1.0)));
        let shifted = m.affine_image(AffineMap::new(vec![vec![1.0]], vec![-0.5]).unwrap()).unwrap();
        assert_eq!(shifted.hypotheses().local_control.as_ref().unwrap().at(&v), Some((2.5, 1.0)));
        assert_eq!(doubled.hypotheses().decoupling, Some(DecouplingParams::independent()));
    }

    #[test]
    fn decay_of_parameters() {
        let p = DecouplingParams::new(StepTable::constant(1), StepTable::constant(2.0)).unwrap();
        assert!(p.decay_check(1, 64).passed());
        let bad = DecouplingParams::new(StepTable::new(vec![(1, 0), (10, 20)]).unwrap(), StepTable::constant(0.0)).unwrap();
        assert!(!bad.decay_check(1, 64).passed());
    }

    #[test]
    fn monte_carlo_mode_agrees() {
        let cfg = EventConfig { events: 20, mode: CheckMode::Mc, samples: 5_000, max_sites: 2, constrain_prob: 0.2, ..EventConfig::default() };
        let r = check_decoupling(&rademacher(), &DecouplingParams::independent(), 4, &cfg).unwrap();
        assert_ne!(r.status, Status::Fail);
    }
}
