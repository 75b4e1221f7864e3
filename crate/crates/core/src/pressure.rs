//! Finite-volume pressure `p_Λ(λ) = |Λ|^{-1} log E exp⟨λ, Σ_{z∈Λ} η(z)⟩`,
//! its infinite-volume limit, and the inequalities built from it.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::duality::{convexity_violations, Axis, GridFunction};
use crate::error::{Error, Result};
use crate::field::hypotheses::{random_site, random_site_mask, support};
use crate::field::{
    cylinder_log_prob, mean_law_exact, sample_with, stream_rng, Cylinder, DecouplingParams, EventConfig, FieldModel, IndexLaw,
    MeanLaw, Shape,
};
use crate::lattice::{tile, BoxSpec};
use crate::numeric::{dot, fmt_ext, log_sum_exp};
use crate::report::{Status, VerificationReport};

pub const POWER_ITERATIONS: usize = 10_000;
pub const POWER_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Exact,
    TransferMatrix,
    MonteCarlo,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Exact => "exact",
            Estimator::TransferMatrix => "transfer-matrix",
            Estimator::MonteCarlo => "monte-carlo",
        }
    }
}

/// A pressure curve on a `λ`-grid. `volume` is `None` for the limit.
#[derive(Clone, Debug, Serialize)]
pub struct PressureCurve {
    pub model: String,
    pub volume: Option<usize>,
    pub estimator: Estimator,
    pub curve: GridFunction,
    /// Per-point confidence interval (Monte Carlo only).
    pub ci: Option<Vec<(f64, f64)>>,
}

impl PressureCurve {
    /// Columns `lambda_1[, lambda_2], value, mode, ci_low, ci_high`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = ["lambda_1", "lambda_2"].into_iter().take(self.curve.dim()).collect();
        header.extend(["value", "mode", "ci_low", "ci_high"]);
        out.write_record(&header)?;
        for i in 0..self.curve.len() {
            let mut row: Vec<String> = self.curve.point(i).iter().map(|v| fmt_ext(*v)).collect();
            row.push(fmt_ext(self.curve.values[i]));
            row.push(self.estimator.as_str().into());
            match &self.ci {
                Some(ci) => row.extend([fmt_ext(ci[i].0), fmt_ext(ci[i].1)]),
                None => row.extend([String::new(), String::new()]),
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_lambda(model: &FieldModel, lambda: &[f64]) -> Result<()> {
    if lambda.len() != model.space().dim() {
        return Err(Error::InvalidArgument(format!(
            "lambda has {} coordinates, the value space has {}",
            lambda.len(),
            model.space().dim()
        )));
    }
    Ok(())
}

fn check_axes(model: &FieldModel, axes: &[Axis]) -> Result<()> {
    if axes.len() != model.space().dim() {
        return Err(Error::InvalidArgument(format!("{} grid axes for a {}-dimensional value space", axes.len(), model.space().dim())));
    }
    Ok(())
}

/// Exact `p_Λ(n)(λ)`.
pub fn pressure_finite(model: &FieldModel, n: usize, lambda: &[f64]) -> Result<f64> {
    check_lambda(model, lambda)?;
    Ok(mean_law_exact(model, n)?.pressure(lambda))
}

/// Exact `p_Λ(n)` on a grid from a single mean law.
pub fn pressure_finite_curve(model: &FieldModel, n: usize, axes: &[Axis]) -> Result<PressureCurve> {
    check_axes(model, axes)?;
    let law = mean_law_exact(model, n)?;
    Ok(PressureCurve {
        model: model.describe(),
        volume: Some(n),
        estimator: Estimator::Exact,
        curve: curve_of_law(&law, axes)?,
        ci: None,
    })
}

pub fn curve_of_law(law: &MeanLaw, axes: &[Axis]) -> Result<GridFunction> {
    GridFunction::from_fn(axes.to_vec(), |l| law.pressure(l))
}

/// Monte Carlo estimate of `p_Λ(n)(λ)` with a delta-method confidence interval.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct McPressure {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Estimates `p_Λ(n)` on a grid from `samples` draws of the box sums; all grid
/// points reuse the same draws.
pub fn pressure_mc_curve(model: &FieldModel, n: usize, axes: &[Axis], samples: usize, seed: u64) -> Result<PressureCurve> {
    check_axes(model, axes)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least two samples".into()));
    }
    let sums = sample_sums(model, n, samples, seed)?;
    let volume = BoxSpec::origin(n, model.lattice_dim())?.cardinality() as f64;
    let probe = GridFunction::new(axes.to_vec(), vec![0.0; axes.iter().map(|a| a.len).product()])?;
    let est: Vec<McPressure> = (0..probe.len()).into_par_iter().map(|i| mc_point(&sums, &probe.point(i), volume)).collect();
    Ok(PressureCurve {
        model: model.describe(),
        volume: Some(n),
        estimator: Estimator::MonteCarlo,
        curve: GridFunction::new(axes.to_vec(), est.iter().map(|e| e.value).collect())?,
        ci: Some(est.iter().map(|e| (e.ci_low, e.ci_high)).collect()),
    })
}

/// Box sums `Σ_{z∈Λ(n)} η(z)` of independent draws, one stream per draw.
pub fn sample_sums(model: &FieldModel, n: usize, samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let law = model.law()?;
    let region = BoxSpec::origin(n, model.lattice_dim())?;
    (0..samples)
        .into_par_iter()
        .map(|s| {
            let conf = sample_with(&law, &region, &mut stream_rng(seed, s as u64))?;
            let mut sum = vec![0.0; model.space().dim()];
            for &a in &conf.atoms {
                for (acc, v) in sum.iter_mut().zip(model.space().atom(a)) {
                    *acc += v;
                }
            }
            Ok(sum)
        })
        .collect()
}

fn mc_point(sums: &[Vec<f64>], lambda: &[f64], volume: f64) -> McPressure {
    let n = sums.len() as f64;
    let s: Vec<f64> = sums.iter().map(|x| dot(lambda, x)).collect();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let value = (max + mean.ln()) / volume;
    // delta method on log of the empirical MGF
    let half = 1.96 * (var / n).sqrt() / mean / volume;
    McPressure { value, ci_low: value - half, ci_high: value + half }
}

/// Largest eigenvalue of `T(a, b) = P(a, b) e^{s_b}` in log form, by power
/// iteration on the row-rescaled matrix.
pub fn perron_log_root(log_p: &[Vec<f64>], tilt: &[f64]) -> Result<f64> {
    let k = log_p.len();
    let shift = tilt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t: Vec<Vec<f64>> = log_p.iter().map(|row| row.iter().zip(tilt).map(|(lp, s)| (lp + s - shift).exp()).collect()).collect();
    let mut u = vec![1.0 / k as f64; k];
    let mut root = f64::NAN;
    for _ in 0..POWER_ITERATIONS {
        let v: Vec<f64> = t.iter().map(|row| dot(row, &u)).collect();
        let norm: f64 = v.iter().sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidModel("tilted transfer matrix is degenerate".into()));
        }
        u = v.iter().map(|x| x / norm).collect();
        if (norm - root).abs() <= POWER_TOLERANCE * norm {
            return Ok(norm.ln() + shift);
        }
        root = norm;
    }
    Err(Error::NoConvergence { iterations: POWER_ITERATIONS })
}

/// How the limit pressure of a model is evaluated.
enum LimitForm {
    Iid(Vec<f64>),
    Chain(Vec<Vec<f64>>),
    Block(MeanLaw),
}

fn limit_form(model: &FieldModel) -> Result<LimitForm> {
    if let Some(j) = model.block() {
        return Ok(LimitForm::Block(mean_law_exact(model, j)?));
    }
    match model.law()? {
        IndexLaw::Iid { log_w, .. } => Ok(LimitForm::Iid(log_w)),
        IndexLaw::Chain(c) => Ok(LimitForm::Chain(c.log_p)),
    }
}

fn eval_limit(form: &LimitForm, model: &FieldModel, lambda: &[f64]) -> Result<f64> {
    if lambda.iter().all(|l| *l == 0.0) {
        return Ok(0.0);
    }
    let tilt: Vec<f64> = model.space().atoms().iter().map(|a| dot(lambda, a)).collect();
    match form {
        LimitForm::Iid(log_w) => Ok(log_sum_exp(log_w.iter().zip(&tilt).map(|(w, s)| w + s)) - log_sum_exp(log_w.iter().copied())),
        LimitForm::Chain(log_p) => perron_log_root(log_p, &tilt),
        LimitForm::Block(law) => Ok(law.pressure(lambda)),
    }
}

/// `p(λ) = lim p_Λ(n)(λ)`: closed form for i.i.d. fields, log Perron root of
/// the tilted transfer matrix for chains, and the block pressure for block models.
pub fn pressure_limit(model: &FieldModel, lambda: &[f64]) -> Result<f64> {
    check_lambda(model, lambda)?;
    eval_limit(&limit_form(model)?, model, lambda)
}

pub fn pressure_limit_curve(model: &FieldModel, axes: &[Axis]) -> Result<PressureCurve> {
    check_axes(model, axes)?;
    let form = limit_form(model)?;
    let estimator = match form {
        LimitForm::Chain(_) => Estimator::TransferMatrix,
        _ => Estimator::Exact,
    };
    Ok(PressureCurve {
        model: model.describe(),
        volume: None,
        estimator,
        curve: GridFunction::try_from_fn(axes.to_vec(), |l| eval_limit(&form, model, l))?,
        ci: None,
    })
}

/// Midpoint convexity along every grid line and `p(0) = 0`.
pub fn convexity_check(curve: &GridFunction, tol: f64) -> VerificationReport {
    let mut report = VerificationReport::new("pressure_convexity", tol);
    let bad = convexity_violations(curve, tol);
    report.note(format!("{} grid points, midpoint triples along every grid line", curve.len()));
    for (p, excess) in &bad {
        report.push(format!("lambda={p:?}"), -excess, 0.0, -excess, Status::Fail);
    }
    if bad.is_empty() {
        report.push("all triples", 0.0, 0.0, 0.0, Status::Pass);
    }
    let zero: Vec<f64> = vec![0.0; curve.dim()];
    let mut idx = [0usize; 2];
    let mut on_grid = true;
    for (a, ax) in curve.axes.iter().enumerate() {
        match ax.index_of(0.0, 1e-12) {
            Some(i) => idx[a] = i,
            None => on_grid = false,
        }
    }
    if on_grid {
        let v = curve.values[curve.flat(idx)];
        let status = if v == 0.0 { Status::Pass } else { Status::Fail };
        report.push(format!("p({zero:?}) = 0"), v, 0.0, -v.abs(), status);
    }
    report
}

/// `max_n n |p_Λ(n) - p|` over the grid, the measured constant `C` of a `C/n` envelope.
pub fn finite_volume_constant(model: &FieldModel, ns: &[usize], axes: &[Axis]) -> Result<f64> {
    let limit = pressure_limit_curve(model, axes)?.curve;
    let mut c: f64 = 0.0;
    for &n in ns {
        let fin = pressure_finite_curve(model, n, axes)?.curve;
        for (a, b) in fin.values.iter().zip(&limit.values) {
            c = c.max(n as f64 * (a - b).abs());
        }
    }
    Ok(c)
}

/// `|p_Λ(kj)(λ) - p_Λ(j)(λ)| <= tol` for a block model with block side `j`.
pub fn block_pressure_identity_check(model: &FieldModel, axes: &[Axis], ks: &[usize], tol: f64) -> Result<VerificationReport> {
    check_axes(model, axes)?;
    let j = model
        .block()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a block model", model.describe())))?;
    let base = pressure_finite_curve(model, j, axes)?.curve;
    let mut report = VerificationReport::new("block_pressure_identity", tol);
    report.note(format!("model {}, block side {j}, k in {ks:?}, {} grid points", model.describe(), base.len()));
    for &k in ks {
        let big = pressure_finite_curve(model, k * j, axes)?.curve;
        let mut worst = (0usize, 0.0f64);
        for (i, (a, b)) in big.values.iter().zip(&base.values).enumerate() {
            let d = (a - b).abs();
            if d > worst.1 || d.is_nan() {
                worst = (i, d);
            }
        }
        let i = worst.0;
        let status = if worst.1 <= tol { Status::Pass } else { Status::Fail };
        report.push(format!("k={k} worst at lambda={:?}", base.point(i)), big.values[i], base.values[i], tol - worst.1, status);
    }
    Ok(report)
}

/// The best `(t, α)` for the scalar field `⟨λ, η⟩` and `V = (-1, 1)`:
/// minimizes `t - ln α` over scales just above each `|⟨λ, a⟩|`, with `α`
/// the exact local-control constant at that scale.
pub fn scalar_local_control(model: &FieldModel, lambda: &[f64]) -> Result<(f64, f64)> {
    check_lambda(model, lambda)?;
    let law = model.law()?;
    let s: Vec<f64> = model.space().atoms().iter().map(|a| dot(lambda, a)).collect();
    let mut best: Option<(f64, f64)> = None;
    for r in s.iter().map(|v| v.abs()) {
        let t = r * (1.0 + 1e-9) + 1e-12;
        let v = Shape::interval(1.0).scaled(t);
        let mask: Vec<bool> = s.iter().map(|x| v.contains(&[*x])).collect();
        let alpha = law.site_conditional_min(&mask);
        if alpha > 0.0 && best.is_none_or(|(bt, ba)| t - alpha.ln() < bt - ba.ln()) {
            best = Some((t, alpha));
        }
    }
    best.ok_or_else(|| Error::InvalidModel("no scale gives a positive local-control constant".into()))
}

/// `p_Λ(n)(λ) >= (1 - ρ) p_Λ(m)(λ) - c(m)/|Λ(m)| - ρ (t - ln α)` on the
/// tiling of `Λ(n)` by boxes `Λ(m)` with gap `g(m)` and step `ℓ` of the model.
/// `(t, α)` default to [`scalar_local_control`].
pub fn pressure_subadditivity_check(
    model: &FieldModel,
    lambda: &[f64],
    m: usize,
    n: usize,
    decoupling: &DecouplingParams,
    local: Option<(f64, f64)>,
    tol: f64,
) -> Result<VerificationReport> {
    check_lambda(model, lambda)?;
    let (g, c) = decoupling.at(m);
    let d = model.lattice_dim();
    let tiling = tile(n, m, g, model.step(), d)?;
    let rho = tiling.rho();
    let (t, alpha) = match local {
        Some(p) => p,
        None => scalar_local_control(model, lambda)?,
    };
    let pn = pressure_finite(model, n, lambda)?;
    let pm = pressure_finite(model, m, lambda)?;
    let vol_m = (m as f64).powi(d as i32);
    let margin = if rho == 0.0 { 0.0 } else { rho * (t - alpha.ln()) };
    let rhs = (1.0 - rho) * pm - c / vol_m - margin;
    let mut report = VerificationReport::new("pressure_subadditivity", tol);
    report.note(format!(
        "model {}, lambda {lambda:?}, m = {m}, n = {n}, g = {g}, c = {c}, rho = {rho}, t = {t}, alpha = {alpha}",
        model.describe()
    ));
    report.check(format!("m={m} n={n}"), pn, rhs);
    Ok(report)
}

/// `E[e^{η(z)} | η_S ∈ D] >= e^{-t} α` for a scalar field, over random
/// product-of-boxes conditioning events near `z` (exact probabilities).
pub fn residual_beta_check(model: &FieldModel, t: f64, alpha: f64, cfg: &EventConfig) -> Result<VerificationReport> {
    if model.space().dim() != 1 {
        return Err(Error::InvalidArgument("the residual bound is stated for scalar fields".into()));
    }
    let law = model.law()?;
    let supp = support(&law);
    let dim = model.lattice_dim();
    let log_beta = alpha.ln() - t;
    let mut report = VerificationReport::new("residual_beta", cfg.tolerance);
    report.note(format!(
        "model {}, t = {t}, alpha = {alpha}, log beta = {log_beta}; {} random conditioning cylinders",
        model.describe(),
        cfg.events
    ));
    let atoms = model.space().len();
    let outcomes: Vec<Result<(f64, f64)>> = (0..cfg.events)
        .into_par_iter()
        .map(|e| {
            let mut rng = stream_rng(cfg.seed, e as u64);
            let z = random_site(&mut rng, dim, -cfg.reach, cfg.reach);
            let size = rng.gen_range(1..=cfg.max_sites.max(1));
            let mut cyl = Cylinder::new();
            let r = cfg.reach.max(1);
            while cyl.len() < size {
                let mut s = z;
                for c in s.iter_mut().take(dim) {
                    *c += rng.gen_range(-r..=r);
                }
                if s != z && cyl.get(&s).is_none() {
                    cyl.restrict(s, random_site_mask(model, &supp, &mut rng));
                }
            }
            let log_d = cylinder_log_prob(model, &cyl)?;
            let mut terms = Vec::with_capacity(atoms);
            for a in 0..atoms {
                let mut only = vec![false; atoms];
                only[a] = true;
                terms.push(cylinder_log_prob(model, &cyl.clone().with(z, only))? + model.space().atom(a)[0]);
            }
            Ok((log_sum_exp(terms) - log_d, log_d))
        })
        .collect();
    for (e, o) in outcomes.into_iter().enumerate() {
        let (lhs, log_d) = o?;
        if log_d == f64::NEG_INFINITY {
            report.push(format!("event {e} (null conditioning)"), f64::NAN, log_beta, f64::NAN, Status::Inconclusive);
        } else {
            report.check(format!("event {e}"), lhs, log_beta);
        }
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        report.mark(Status::Fail, format!("alpha = {alpha} is outside (0, 1]"));
    }
    Ok(report)
}
