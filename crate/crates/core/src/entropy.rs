//! Empirical entropy `(1/|Λ(n)|) log P(𝔪_Λ(n) ∈ x + V)`, the subadditive
//! lower bounds behind it, and the exponential Chebyshev upper bound.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::duality::{Axis, GridFunction};
use crate::error::{Error, Result};
use crate::field::{mean_law_exact, CheckMode, ConvexNbhd, DecouplingParams, FieldModel, MeanLaw, Shape};
use crate::lattice::{tile, Tiling};
use crate::numeric::{ext_real, ext_real_vec, fmt_ext};
use crate::pressure::sample_sums;
use crate::report::{Status, VerificationReport};

/// Radii of the default box basis around a point.
pub const BASIS_RADII: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

#[derive(Clone, Debug, Serialize)]
pub struct EntropyEstimate {
    pub nbhd: ConvexNbhd,
    pub volumes: Vec<usize>,
    #[serde(with = "ext_real_vec")]
    pub values: Vec<f64>,
    /// Monte Carlo confidence intervals of `values`.
    pub ci: Option<Vec<[f64; 2]>>,
    /// Value at the largest volume.
    #[serde(with = "ext_real")]
    pub s_est: f64,
    /// Minimum over the last half of the volumes.
    #[serde(with = "ext_real")]
    pub tail_min: f64,
    #[serde(with = "ext_real")]
    pub tail_oscillation: f64,
    /// No volume gave the neighborhood positive probability.
    pub empty: bool,
    pub mode: CheckMode,
}

impl EntropyEstimate {
    fn new(nbhd: ConvexNbhd, volumes: Vec<usize>, values: Vec<f64>, ci: Option<Vec<[f64; 2]>>, mode: CheckMode) -> Self {
        let tail = &values[values.len() / 2..];
        let tail_min = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let tail_max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tail_oscillation = if tail_min == f64::NEG_INFINITY {
            if tail_max == f64::NEG_INFINITY {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            tail_max - tail_min
        };
        Self {
            nbhd,
            s_est: *values.last().unwrap_or(&f64::NEG_INFINITY),
            empty: values.iter().all(|v| *v == f64::NEG_INFINITY),
            volumes,
            values,
            ci,
            tail_min,
            tail_oscillation,
            mode,
        }
    }

    /// Largest radius of the neighborhood shape, or NaN for preimages.
    pub fn radius(&self) -> f64 {
        match &self.nbhd.shape {
            Shape::Box { radii } => radii.iter().copied().fold(0.0, f64::max),
            Shape::Ball { radius } => *radius,
            Shape::Preimage { .. } => f64::NAN,
        }
    }
}

fn check_volumes(ns: &[usize]) -> Result<()> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::InvalidArgument(format!("volumes must be positive and increasing, got {ns:?}")));
    }
    Ok(())
}

/// Exact mean laws at each volume, computed in parallel.
pub fn mean_laws(model: &FieldModel, ns: &[usize]) -> Result<Vec<MeanLaw>> {
    check_volumes(ns)?;
    ns.par_iter().map(|n| mean_law_exact(model, *n)).collect()
}

/// Estimate from precomputed laws at the side lengths `ns`.
pub fn entropy_from_laws(laws: &[MeanLaw], ns: &[usize], nbhd: &ConvexNbhd) -> EntropyEstimate {
    let values = laws.iter().map(|l| l.log_prob_in(nbhd).min(0.0) / l.volume() as f64).collect();
    EntropyEstimate::new(nbhd.clone(), ns.to_vec(), values, None, CheckMode::Exact)
}

/// Exact estimate from box probabilities at the side lengths `ns`.
pub fn entropy_estimate(model: &FieldModel, nbhd: &ConvexNbhd, ns: &[usize]) -> Result<EntropyEstimate> {
    let laws = mean_laws(model, ns)?;
    Ok(entropy_from_laws(&laws, ns, nbhd))
}

/// Monte Carlo estimate: hit frequencies of `x + V` among sampled box means,
/// with a delta-method interval on the log frequency.
pub fn entropy_mc(model: &FieldModel, nbhd: &ConvexNbhd, ns: &[usize], samples: usize, seed: u64) -> Result<EntropyEstimate> {
    Ok(entropy_mc_many(model, std::slice::from_ref(nbhd), ns, samples, seed)?.remove(0))
}

/// [`entropy_mc`] for several neighborhoods sharing one set of samples per volume.
pub fn entropy_mc_many(model: &FieldModel, nbhds: &[ConvexNbhd], ns: &[usize], samples: usize, seed: u64) -> Result<Vec<EntropyEstimate>> {
    check_volumes(ns)?;
    let mut values = vec![Vec::with_capacity(ns.len()); nbhds.len()];
    let mut ci = vec![Vec::with_capacity(ns.len()); nbhds.len()];
    for (i, &n) in ns.iter().enumerate() {
        let sums = sample_sums(model, n, samples, seed.wrapping_add(i as u64))?;
        let vol = (n as f64).powi(model.lattice_dim() as i32);
        let means: Vec<Vec<f64>> = sums.iter().map(|s| s.iter().map(|v| v / vol).collect()).collect();
        for (j, nbhd) in nbhds.iter().enumerate() {
            let hits = means.iter().filter(|m| nbhd.contains(m)).count();
            let p = hits as f64 / samples as f64;
            let v = p.ln() / vol;
            let half = if hits == 0 { f64::INFINITY } else { 1.96 * ((1.0 - p) / (samples as f64 * p)).sqrt() / vol };
            values[j].push(v);
            ci[j].push([v - half, (v + half).min(0.0)]);
        }
    }
    Ok(nbhds
        .iter()
        .zip(values.into_iter().zip(ci))
        .map(|(c, (v, ci))| EntropyEstimate::new(c.clone(), ns.to_vec(), v, Some(ci), CheckMode::Mc))
        .collect())
}

/// Boxes `x + (-r, r)^k` for each radius.
pub fn box_basis(x: &[f64], radii: &[f64], eps: f64) -> Result<Vec<ConvexNbhd>> {
    radii
        .iter()
        .map(|r| ConvexNbhd::new(x.to_vec(), Shape::Box { radii: vec![*r; x.len()] }, eps))
        .collect()
}

/// Rows `(x, radius, n, log_prob_over_volume, mode)`; `x` is written as
/// `x_1[;x_2]` in one column.
pub fn write_entropy_csv<W: Write>(w: W, estimates: &[EntropyEstimate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "radius", "n", "log_prob_over_volume", "mode"])?;
    for e in estimates {
        let x: Vec<String> = e.nbhd.center.iter().map(|v| fmt_ext(*v)).collect();
        let mode = match e.mode {
            CheckMode::Exact => "exact",
            CheckMode::Mc => "mc",
        };
        for (n, v) in e.volumes.iter().zip(&e.values) {
            out.write_record([x.join(";"), fmt_ext(e.radius()), n.to_string(), fmt_ext(*v), mode.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Smallest conditional probability that a margin site lands in
/// `y + (ε/ρ) V`; 1 when there is no margin.
fn margin_alpha(model: &FieldModel, c: &ConvexNbhd, rho: f64) -> Result<f64> {
    if rho == 0.0 {
        return Ok(1.0);
    }
    let scale = if c.eps == 0.0 { 0.0 } else { c.eps / rho };
    if scale == 0.0 {
        return Ok(0.0);
    }
    let shape = c.shape.scaled(scale);
    let mask = model.space().mask(|a| {
        let d: Vec<f64> = a.iter().zip(&c.center).map(|(u, v)| u - v).collect();
        shape.contains(&d)
    });
    Ok(model.law()?.site_conditional_min(&mask))
}

fn log_term(rho: f64, alpha: f64) -> f64 {
    if rho == 0.0 {
        0.0
    } else {
        rho * alpha.ln()
    }
}

/// `(1/|Λ(n)|) log P(𝔪_Λ(n) ∈ C) >= (1/|Λ(m)|) log P(𝔪_Λ(m) ∈ C(y, ε)) - c(m)/|Λ(m)| + ρ log α`,
/// where `α` is the exact local-control constant of the event
/// `η(z) ∈ y + (ε/ρ) V` and the tiling uses the model's `g(m)` and step.
pub fn subadditive_lemma_check(
    model: &FieldModel,
    c: &ConvexNbhd,
    m: usize,
    n: usize,
    decoupling: &DecouplingParams,
    tol: f64,
) -> Result<VerificationReport> {
    let laws = mean_laws(model, &if m == n { vec![m] } else { vec![m.min(n), m.max(n)] })?;
    let (law_m, law_n) = if m <= n { (&laws[0], laws.last().unwrap()) } else { (laws.last().unwrap(), &laws[0]) };
    subadditive_from_laws(model, c, law_m, law_n, decoupling, tol)
}

/// As [`subadditive_lemma_check`] with precomputed laws at volumes `m` and `n`.
pub fn subadditive_from_laws(
    model: &FieldModel,
    c: &ConvexNbhd,
    law_m: &MeanLaw,
    law_n: &MeanLaw,
    decoupling: &DecouplingParams,
    tol: f64,
) -> Result<VerificationReport> {
    let d = model.lattice_dim();
    let (m, n) = (side(law_m.volume(), d), side(law_n.volume(), d));
    let (g, cost) = decoupling.at(m);
    let tiling = tile(n, m, g, model.step(), d)?;
    let rho = tiling.rho();
    let alpha = margin_alpha(model, c, rho)?;
    let vol_m = law_m.volume() as f64;
    let lhs = law_n.log_prob_in(c) / law_n.volume() as f64;
    let rm = law_m.log_prob_in(&c.shrunk()) / vol_m;
    let rhs = rm - cost / vol_m + log_term(rho, alpha);
    let mut report = VerificationReport::new("subadditive_lemma", tol);
    report.note(format!(
        "model {}, C = {:?} + {:?}, eps = {}, m = {m}, n = {n}, g = {g}, c = {cost}, rho = {rho}, alpha = {alpha}",
        model.describe(),
        c.center,
        c.shape,
        c.eps
    ));
    if rhs == f64::NEG_INFINITY {
        report.note(if alpha == 0.0 && rho > 0.0 {
            "vacuous: no atom lies in the margin neighborhood"
        } else {
            "vacuous: the shrunk neighborhood has probability zero at volume m"
        });
    }
    report.check(format!("m={m} n={n}"), lhs, rhs);
    Ok(report)
}

fn side(volume: usize, d: usize) -> usize {
    match d {
        1 => volume,
        _ => (volume as f64).sqrt().round() as usize,
    }
}

/// Whether a subadditive or concavity report compared two finite sides.
pub fn is_vacuous(report: &VerificationReport) -> bool {
    report.records.iter().all(|r| r.rhs == f64::NEG_INFINITY)
}

/// Finite-volume concavity: with `A = (x1 + x2)/2 + V`, `A_x = x1 + (1 - ε)V`
/// and `A_y = x2 + (1 - ε)V`, sub-boxes of the tiling alternate between
/// `A_x` and `A_y`, giving
/// `(1/|Λ(n)|) log P(𝔪 ∈ A) >= ½[s_m(A_x) + s_m(A_y)] - c(m)/|Λ(m)| + ρ' log α`
/// where an odd last sub-box is moved into the margin (`ρ'`).
#[allow(clippy::too_many_arguments)]
pub fn concavity_check(
    model: &FieldModel,
    x1: &[f64],
    x2: &[f64],
    shape: &Shape,
    eps: f64,
    m: usize,
    n: usize,
    decoupling: &DecouplingParams,
    tol: f64,
) -> Result<VerificationReport> {
    let d = model.lattice_dim();
    let (g, cost) = decoupling.at(m);
    let tiling: Tiling = tile(n, m, g, model.step(), d)?;
    let boxes = tiling.sub_boxes.len();
    if boxes < 2 {
        return Err(Error::TilingTooSmall { n, needed: 2 * (m + g + model.step()) });
    }
    let paired = boxes - boxes % 2;
    let vol_n = tiling.outer.cardinality() as f64;
    let vol_m = (m as f64).powi(d as i32);
    let rho = 1.0 - paired as f64 * vol_m / vol_n;
    let mid: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| 0.5 * (a + b)).collect();
    let a = ConvexNbhd::new(mid, shape.clone(), eps)?;
    let ax = ConvexNbhd::new(x1.to_vec(), shape.clone(), eps)?.shrunk();
    let ay = ConvexNbhd::new(x2.to_vec(), shape.clone(), eps)?.shrunk();
    let laws = mean_laws(model, &if m < n { vec![m, n] } else { vec![n] })?;
    let (law_m, law_n) = (&laws[0], laws.last().unwrap());
    let alpha = margin_alpha(model, &a, rho)?;
    let lhs = law_n.log_prob_in(&a) / vol_n;
    let sx = law_m.log_prob_in(&ax) / vol_m;
    let sy = law_m.log_prob_in(&ay) / vol_m;
    let rhs = 0.5 * (sx + sy) - cost / vol_m + log_term(rho, alpha);
    let mut report = VerificationReport::new("concavity", tol);
    report.note(format!(
        "model {}, x1 = {x1:?}, x2 = {x2:?}, V = {shape:?}, eps = {eps}, m = {m}, n = {n}, {paired} paired boxes, rho' = {rho}, alpha = {alpha}",
        model.describe()
    ));
    report.check(format!("m={m} n={n}"), lhs, rhs);
    Ok(report)
}

/// `log` of `exp[-|Λ| sup_λ (inf_{x∈A} ⟨λ, x⟩ - p_Λ(λ))]` with the sup over
/// grid points, and the maximizing `λ`.
pub fn chebyshev_bound(law: &MeanLaw, a: &ConvexNbhd, axes: &[Axis]) -> Result<(f64, Vec<f64>)> {
    if axes.len() != law.dim() || a.dim() != law.dim() {
        return Err(Error::InvalidArgument("grid, neighborhood and law dimensions differ".into()));
    }
    let vol = law.volume() as f64;
    let exps = GridFunction::try_from_fn(axes.to_vec(), |l| {
        let inf = a.inf_linear(l).ok_or_else(|| Error::Unsupported("linear infimum over a preimage shape".into()))?;
        Ok(vol * (law.pressure(l) - inf))
    })?;
    let i = exps.argmin().ok_or_else(|| Error::InvalidArgument("empty grid".into()))?;
    Ok((exps.values[i].min(0.0), exps.point(i)))
}

/// Relative rounding allowance of the Chebyshev comparison.
pub const CHEBYSHEV_GUARD: f64 = 1e-12;

/// Exact `P(𝔪_Λ(n) ∈ A)` against the grid Chebyshev bound.
pub fn chebyshev_upper_check(model: &FieldModel, a: &ConvexNbhd, n: usize, axes: &[Axis]) -> Result<VerificationReport> {
    let law = mean_law_exact(model, n)?;
    let mut report = VerificationReport::new("chebyshev_upper", 0.0);
    chebyshev_record(&mut report, &law, a, axes, format!("n={n}"))?;
    report.note(format!("model {}, A = {:?} + {:?}, {} grid points", model.describe(), a.center, a.shape, axes.iter().map(|x| x.len).product::<usize>()));
    Ok(report)
}

/// Adds one Chebyshev comparison to `report`.
pub fn chebyshev_record(report: &mut VerificationReport, law: &MeanLaw, a: &ConvexNbhd, axes: &[Axis], label: String) -> Result<()> {
    let (bound, lambda) = chebyshev_bound(law, a, axes)?;
    let lp = law.log_prob_in(a);
    let guard = CHEBYSHEV_GUARD * bound.abs().max(1.0);
    let slack = crate::report::slack_of(bound, lp);
    let status = if slack >= -guard { Status::Pass } else { Status::Fail };
    report.push(format!("{label} lambda*={lambda:?}"), bound, lp, slack, status);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{MarkovChain, ValueSpace};

    fn rademacher() -> FieldModel {
        FieldModel::uniform(ValueSpace::scalar(&[-1.0, 1.0]).unwrap(), 1).unwrap()
    }

    fn doeblin() -> FieldModel {
        FieldModel::markov(ValueSpace::scalar(&[-1.0, 1.0]).unwrap(), vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()
    }

    fn doeblin_params() -> DecouplingParams {
        DecouplingParams::doeblin(&MarkovChain::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap())
    }

    /// `log P(|S_n| < n r)` for a symmetric walk, by direct binomial sums.
    fn binomial_log_prob(n: usize, lo: f64, hi: f64) -> f64 {
        let mut lc = vec![0.0f64; n + 1];
        for k in 1..=n {
            lc[k] = lc[k - 1] + ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let terms: Vec<f64> = (0..=n)
            .filter(|k| {
                let mean = (2.0 * *k as f64 - n as f64) / n as f64;
                lo < mean && mean < hi
            })
            .map(|k| lc[k] - n as f64 * 2f64.ln())
            .collect();
        crate::numeric::log_sum_exp(terms)
    }

    #[test]
    fn rademacher_entropy_matches_binomial_sums() {
        let c = ConvexNbhd::interval(0.3, 0.05).unwrap();
        let e = entropy_estimate(&rademacher(), &c, &[100, 200, 400]).unwrap();
        for (n, v) in e.volumes.iter().zip(&e.values) {
            let oracle = binomial_log_prob(*n, 0.25, 0.35) / *n as f64;
            assert!((v - oracle).abs() < 1e-12, "n={n}: {v} vs {oracle}");
        }
        let cramer = 0.65 * 1.3f64.ln() + 0.35 * 0.7f64.ln();
        // the neighborhood contains x = 0.25, where the rate is smaller
        assert!(e.s_est > -cramer - 0.02 && e.s_est < 0.0);
    }

    #[test]
    fn entropy_near_zero_vanishes_and_outside_hull_is_empty() {
        let m = rademacher();
        let e = entropy_estimate(&m, &ConvexNbhd::interval(0.0, 0.1).unwrap(), &[20, 100, 400]).unwrap();
        assert!(e.values[2] > e.values[0] && e.s_est > -0.01);
        let out = entropy_estimate(&m, &ConvexNbhd::interval(1.5, 0.2).unwrap(), &[10, 20]).unwrap();
        assert!(out.empty && out.s_est == f64::NEG_INFINITY);
    }

    #[test]
    fn tail_summary() {
        let e = entropy_estimate(&rademacher(), &ConvexNbhd::interval(0.2, 0.1).unwrap(), &[10, 20, 40, 80]).unwrap();
        let tail = &e.values[2..];
        assert_eq!(e.tail_min, tail[0].min(tail[1]));
        assert!((e.tail_oscillation - (tail[0] - tail[1]).abs()).abs() < 1e-15);
    }

    #[test]
    fn mc_estimate_brackets_exact() {
        let m = doeblin();
        let c = ConvexNbhd::interval(0.1, 0.15).unwrap();
        let exact = entropy_estimate(&m, &c, &[8, 16]).unwrap();
        let mc = entropy_mc(&m, &c, &[8, 16], 20_000, 1).unwrap();
        for (i, v) in exact.values.iter().enumerate() {
            let [lo, hi] = mc.ci.as_ref().unwrap()[i];
            assert!(lo - 1e-3 <= *v && *v <= hi + 1e-3, "{v} not in [{lo}, {hi}]");
        }
    }

    #[test]
    fn subadditive_lemma_for_iid_and_chain() {
        for (model, dec) in [(rademacher(), DecouplingParams::independent()), (doeblin(), doeblin_params())] {
            for c in [
                ConvexNbhd::interval(0.0, 1.0).unwrap().with_eps(0.5).unwrap(),
                ConvexNbhd::interval(0.2, 0.5).unwrap().with_eps(0.5).unwrap(),
                ConvexNbhd::interval(0.1, 0.2).unwrap().with_eps(0.1).unwrap(),
            ] {
                for (m, n) in [(2, 32), (4, 64), (8, 32)] {
                    let r = subadditive_lemma_check(&model, &c, m, n, &dec, 1e-9).unwrap();
                    assert!(r.passed(), "{}", r.to_json().unwrap());
                }
            }
        }
    }

    #[test]
    fn margin_alpha_counts_atoms_in_scaled_neighborhood() {
        // ρ = 0.4, ε = 0.5: the margin event is y + 1.25 V = (-0.425, 0.825)
        let c = ConvexNbhd::interval(0.2, 0.5).unwrap().with_eps(0.5).unwrap();
        assert_eq!(margin_alpha(&rademacher(), &c, 0.4).unwrap(), 0.0);
        let c = ConvexNbhd::interval(0.2, 0.7).unwrap().with_eps(0.5).unwrap();
        assert_eq!(margin_alpha(&rademacher(), &c, 0.4).unwrap(), 0.5);
        assert_eq!(margin_alpha(&rademacher(), &c, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn concavity_for_symmetric_pair() {
        let shape = Shape::interval(0.6);
        let r = concavity_check(&rademacher(), &[-0.4], &[0.4], &shape, 0.5, 4, 64, &DecouplingParams::independent(), 1e-9).unwrap();
        assert!(r.passed(), "{}", r.to_json().unwrap());
        let r = concavity_check(&doeblin(), &[-0.4], &[0.4], &shape, 0.5, 4, 64, &doeblin_params(), 1e-9).unwrap();
        assert!(r.passed(), "{}", r.to_json().unwrap());
    }

    #[test]
    fn chebyshev_bound_dominates_binomial_probability() {
        let axes = [Axis::symmetric(5.0, 201).unwrap()];
        let a = ConvexNbhd::interval(0.3, 0.05).unwrap();
        let r = chebyshev_upper_check(&rademacher(), &a, 100, &axes).unwrap();
        assert!(r.passed());
        let law = mean_law_exact(&rademacher(), 100).unwrap();
        let (bound, _) = chebyshev_bound(&law, &a, &axes).unwrap();
        // the grid sup can only fall short of -100 I(0.25)
        let i = 0.625 * 1.25f64.ln() + 0.375 * 0.75f64.ln();
        assert!(bound >= -100.0 * i - 1e-9 && bound <= -100.0 * i + 0.25, "{bound}");
        let zero = [Axis::new(0.0, 0.0, 1).unwrap()];
        assert_eq!(chebyshev_bound(&law, &a, &zero).unwrap().0, 0.0);
    }
}
