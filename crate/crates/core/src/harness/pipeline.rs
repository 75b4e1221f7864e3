//! One runner per subcommand. Each writes its artifacts into the output
//! directory and returns the aggregated [`Summary`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::duality::{
    conjugate_at, lft, mosco_m1_check, mosco_m2_check, uniform_properness_check, Axis, GridFunction, MoscoM1, MoscoM2, ProperWitness,
};
use crate::entropy::{
    box_basis, chebyshev_record, concavity_check, entropy_from_laws, entropy_mc_many, is_vacuous, mean_laws, subadditive_from_laws,
    write_entropy_csv, EntropyEstimate,
};
use crate::error::{Error, Result};
use crate::field::{
    check_decoupling, check_local_control, stream_rng, CheckMode, ConvexNbhd, FieldModel, LocalControlParams, Shape, ValueSpace,
};
use crate::harness::config::ExperimentConfig;
use crate::harness::output::{OutDir, Summary};
use crate::lattice::{rho_limit_check, tile};
use crate::numeric::fmt_ext;
use crate::pressure::{
    block_pressure_identity_check, convexity_check, finite_volume_constant, pressure_finite_curve, pressure_limit_curve,
    pressure_mc_curve, pressure_subadditivity_check, residual_beta_check, scalar_local_control, PressureCurve,
};
use crate::report::{Status, VerificationReport};
use crate::table::StepTable;

/// Command-line overrides merged over `[run]`.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    pub mode: CheckMode,
    pub out: PathBuf,
}

impl RunOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self { seed: cfg.run.seed, mode: cfg.run.mode, out: cfg.run.out.clone() }
    }
}

pub fn lambda_axes(cfg: &ExperimentConfig, k: usize) -> Result<Vec<Axis>> {
    let g = &cfg.grids;
    (0..k).map(|_| Axis::symmetric(g.lambda_half_width, g.lambda_points)).collect()
}

pub fn x_axes(cfg: &ExperimentConfig, model: &FieldModel) -> Result<Vec<Axis>> {
    let g = &cfg.grids;
    let w = g.x_half_width.unwrap_or(model.space().sup_norm() + 0.5);
    (0..model.space().dim()).map(|_| Axis::symmetric(w, g.x_points)).collect()
}

fn fmt_point(x: &[f64]) -> String {
    x.iter().map(|v| fmt_ext(*v)).collect::<Vec<_>>().join(";")
}

/// Atoms the model can actually produce.
fn support_space(model: &FieldModel) -> Result<ValueSpace> {
    let supp = crate::field::hypotheses::support(&model.law()?);
    let atoms: Vec<Vec<f64>> = (0..model.space().len()).filter(|i| supp[*i]).map(|i| model.space().atom(i).to_vec()).collect();
    ValueSpace::new(model.space().dim(), atoms, None)
}

pub fn run_tiling(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    let model = cfg.model()?;
    let t = &cfg.tiling;
    let dec = cfg.decoupling(&model);
    let ell = t.ell.unwrap_or(model.step());
    let g = t.g.unwrap_or(dec.g.at(t.m));
    let d = model.lattice_dim();
    let tiling = tile(t.n, t.m, g, ell, d)?;
    let mut out = OutDir::create(&opts.out)?;
    let mut summary = Summary::new("tiling", opts.seed);
    let again = tile(t.n, t.m, g, ell, d)?;
    let mut verify = tiling.verify();
    verify.push("deterministic", 0.0, 0.0, 0.0, if again == tiling { Status::Pass } else { Status::Fail });
    verify.note(format!("rho = {}, bound = {}", tiling.rho(), tiling.rho_bound()));
    summary.add(verify);
    #[derive(Serialize)]
    struct TilingArtifact<'a> {
        tiling: &'a crate::lattice::Tiling,
        rho: f64,
        rho_bound: f64,
    }
    out.json("tiling_layout.json", &TilingArtifact { tiling: &tiling, rho: tiling.rho(), rho_bound: tiling.rho_bound() })?;
    let gt = match t.g {
        Some(g) => StepTable::constant(g),
        None => dec.g.clone(),
    };
    let rho = rho_limit_check(&t.ms, &gt, ell, |m| m.pow(t.n_power), &t.thresholds, d)?;
    let mut w = csv::Writer::from_writer(out.file("rho.csv")?);
    w.write_record(["m", "n", "g", "k", "r", "margin", "rho", "bound"])?;
    for r in &rho.rows {
        w.write_record([r.m.to_string(), r.n.to_string(), r.g.to_string(), r.k.to_string(), r.r.to_string(), r.margin.to_string(), fmt_ext(r.rho), fmt_ext(r.bound)])?;
    }
    w.flush()?;
    summary.add(rho.report);
    out.finish(summary)
}

/// Shapes at which local control is checked: the configured table, or
/// `(-1, 1)^k` at two scales with exact constants.
fn local_control_cases(model: &FieldModel) -> Result<Vec<(Shape, f64, f64)>> {
    let k = model.space().dim();
    let unit = Shape::Box { radii: vec![1.0; k] };
    match &model.hypotheses().local_control {
        Some(LocalControlParams::Table(entries)) => Ok(entries.iter().map(|e| (e.shape.clone(), e.t, e.alpha)).collect()),
        Some(p @ LocalControlParams::Affine { .. }) => {
            let (t, a) = p.at(&unit).ok_or_else(|| Error::Config("pushed-forward local control has no entry for (-1, 1)^k".into()))?;
            Ok(vec![(unit, t, a)])
        }
        None => {
            let s = model.space().sup_norm();
            let mut out = Vec::new();
            for t in [0.5 * s, s * (1.0 + 1e-9) + 1e-12] {
                let alpha = crate::field::local_control_alpha(model, &unit, t)?;
                if alpha > 0.0 {
                    out.push((unit.clone(), t, alpha));
                }
            }
            Ok(out)
        }
    }
}

pub fn run_check_hypotheses(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    let model = cfg.model()?;
    let h = &cfg.hypotheses;
    let ev = crate::field::EventConfig { seed: opts.seed, mode: opts.mode, ..h.events.clone() };
    let dec = cfg.decoupling(&model);
    let out = OutDir::create(&opts.out)?;
    let mut summary = Summary::new("check-hypotheses", opts.seed);
    summary.add(check_decoupling(&model, &dec, h.n, &ev)?);
    summary.add(dec.decay_check(model.lattice_dim(), h.decay_horizon));
    let mut lc = VerificationReport::new("local_control", ev.tolerance);
    for (shape, t, alpha) in local_control_cases(&model)? {
        lc.absorb(check_local_control(&model, &shape, t, alpha, &ev)?);
    }
    if lc.events == 0 {
        lc.mark(Status::Inconclusive, "no local-control parameters to check");
    }
    summary.add(lc);
    if model.space().dim() == 1 && ev.mode == CheckMode::Exact {
        let (t, alpha) = scalar_local_control(&model, &[1.0])?;
        summary.add(residual_beta_check(&model, t, alpha, &ev)?);
    }
    out.finish(summary)
}

pub fn run_pressure(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    let model = cfg.model()?;
    let axes = lambda_axes(cfg, model.space().dim())?;
    let tol = &cfg.tolerances;
    let mut out = OutDir::create(&opts.out)?;
    let mut summary = Summary::new("pressure", opts.seed);
    let mut convexity = VerificationReport::new("pressure_convexity", tol.convexity);
    let write = |out: &mut OutDir, name: &str, c: &PressureCurve| -> Result<()> { c.write_csv(out.file(name)?) };
    for &n in &cfg.entropy.volumes {
        let c = match opts.mode {
            CheckMode::Exact => pressure_finite_curve(&model, n, &axes)?,
            CheckMode::Mc => pressure_mc_curve(&model, n, &axes, cfg.entropy.samples, opts.seed)?,
        };
        write(&mut out, &format!("pressure_n{n}.csv"), &c)?;
        let mut r = convexity_check(&c.curve, tol.convexity);
        r.id = format!("n={n}");
        convexity.absorb(r);
    }
    let limit = pressure_limit_curve(&model, &axes)?;
    write(&mut out, "pressure_limit.csv", &limit)?;
    let mut r = convexity_check(&limit.curve, tol.convexity);
    r.id = "limit".into();
    convexity.absorb(r);
    summary.add(convexity);
    if model.block().is_some() {
        summary.add(block_pressure_identity_check(&model, &axes, &[2, 3], tol.block)?);
    }
    if opts.mode == CheckMode::Exact {
        let c = finite_volume_constant(&model, &cfg.entropy.volumes, &axes)?;
        let mut r = VerificationReport::new("finite_volume_envelope", 0.0);
        r.note(format!("max_n n |p_n - p| over the grid = {c} (the measured C of a C/n envelope)"));
        summary.add(r);
    }
    out.finish(summary)
}

fn estimates(cfg: &ExperimentConfig, model: &FieldModel, nbhds: &[ConvexNbhd], opts: &RunOptions) -> Result<Vec<EntropyEstimate>> {
    let ns = &cfg.entropy.volumes;
    match opts.mode {
        CheckMode::Exact => {
            let laws = mean_laws(model, ns)?;
            Ok(nbhds.par_iter().map(|c| entropy_from_laws(&laws, ns, c)).collect())
        }
        CheckMode::Mc => entropy_mc_many(model, nbhds, &cfg.entropy.volumes, cfg.entropy.samples, opts.seed),
    }
}

pub fn run_entropy(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    let model = cfg.model()?;
    let mut out = OutDir::create(&opts.out)?;
    let mut summary = Summary::new("entropy", opts.seed);
    let mut radii = cfg.entropy.radii.clone();
    radii.sort_by(|a, b| a.total_cmp(b));
    let mut nbhds = Vec::new();
    for x in cfg.grids.x.to_vecs() {
        nbhds.extend(box_basis(&x, &radii, cfg.entropy.eps)?);
    }
    let est = estimates(cfg, &model, &nbhds, opts)?;
    write_entropy_csv(out.file("entropy.csv")?, &est)?;
    out.json("entropy_estimates.json", &est)?;
    let mut bounds = VerificationReport::new("entropy_log_prob_nonpositive", 0.0);
    for e in &est {
        for (n, v) in e.volumes.iter().zip(&e.values) {
            bounds.check(format!("x={} r={} n={n}", fmt_point(&e.nbhd.center), e.radius()), 0.0, *v);
        }
    }
    summary.add(bounds);
    if opts.mode == CheckMode::Exact {
        // Nested boxes around one point: larger radius, larger probability.
        let mut mono = VerificationReport::new("entropy_monotone_in_v", 0.0);
        for group in est.chunks(radii.len()) {
            for w in group.windows(2) {
                for (i, n) in w[0].volumes.iter().enumerate() {
                    mono.check(format!("x={} r={}<{} n={n}", fmt_point(&w[0].nbhd.center), w[0].radius(), w[1].radius()), w[1].values[i], w[0].values[i]);
                }
            }
        }
        summary.add(mono);
    }
    out.finish(summary)
}

/// Reads a curve CSV with columns `lambda_1[, lambda_2], value, ...`.
pub fn read_curve(path: &Path) -> Result<GridFunction> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let dim = if header.iter().any(|h| h == "lambda_2") { 2 } else { 1 };
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).ok_or_else(|| Error::InvalidArgument(format!("short row in {}", path.display())))?;
            s.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("not a number: {s:?}")))
        };
        let p: Vec<f64> = (0..dim).map(num).collect::<Result<_>>()?;
        rows.push((p, num(dim)?));
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no rows", path.display())));
    }
    let axes: Vec<Axis> = (0..dim)
        .map(|a| {
            let mut v: Vec<f64> = rows.iter().map(|r| r.0[a]).collect();
            v.sort_by(|x, y| x.total_cmp(y));
            v.dedup();
            Axis::new(v[0], v[v.len() - 1], v.len())
        })
        .collect::<Result<_>>()?;
    let n: usize = axes.iter().map(|a| a.len).product();
    if rows.len() != n {
        return Err(Error::InvalidArgument(format!("{} rows do not form a product grid of {n} points", rows.len())));
    }
    let mut values = vec![f64::NAN; n];
    let probe = GridFunction::new(axes.clone(), vec![0.0; n])?;
    for (p, v) in rows {
        let mut idx = [0usize; 2];
        for (a, ax) in axes.iter().enumerate() {
            let tol = 1e-9 * ax.step().max(1e-300);
            idx[a] = ax.index_of(p[a], tol.max(1e-12)).ok_or_else(|| Error::InvalidArgument(format!("point {p:?} is off the uniform grid")))?;
        }
        values[probe.flat(idx)] = v;
    }
    GridFunction::new(axes, values)
}

/// Conjugate x-axis for a curve read from disk: the range of its end slopes.
fn slope_axes(f: &GridFunction, points: usize) -> Result<Vec<Axis>> {
    (0..f.dim())
        .map(|_| {
            let w = (1.1 * f.max_slope()).max(1.0);
            Axis::symmetric(w, points)
        })
        .collect()
}

pub fn run_lft(input: &Path, cfg: Option<&ExperimentConfig>, opts: &RunOptions) -> Result<Summary> {
    let f = read_curve(input)?;
    let x = match cfg.and_then(|c| c.grids.x_half_width.map(|w| (w, c.grids.x_points))) {
        Some((w, p)) => (0..f.dim()).map(|_| Axis::symmetric(w, p)).collect::<Result<Vec<_>>>()?,
        None => slope_axes(&f, cfg.map_or(201, |c| c.grids.x_points))?,
    };
    let conj = lft(&f, &x)?;
    let mut out = OutDir::create(&opts.out)?;
    conj.write_csv(out.file("lft.csv")?, &["x_1", "x_2"], "value")?;
    let mut summary = Summary::new("lft", opts.seed);
    let mut fy = VerificationReport::new("fenchel_young", 0.0);
    let mut worst = (f64::INFINITY, String::new());
    for (i, lam) in f.points().iter().enumerate() {
        for (j, xv) in conj.points().iter().enumerate() {
            let s = f.values[i] + conj.values[j] - crate::numeric::dot(lam, xv);
            if s < worst.0 {
                worst = (s, format!("lambda={lam:?} x={xv:?}"));
            }
        }
    }
    fy.push(format!("worst pair {}", worst.1), worst.0, 0.0, worst.0, if worst.0 >= -1e-12 * f.max_slope().max(1.0) { Status::Pass } else { Status::Fail });
    summary.add(fy);
    out.finish(summary)
}

pub fn run_chebyshev(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    let model = cfg.model()?;
    let k = model.space().dim();
    let axes = lambda_axes(cfg, k)?;
    let ch = &cfg.chebyshev;
    let max_n = if model.lattice_dim() == 2 { ch.max_n.min(12) } else { ch.max_n };
    let range: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let v = model.space().atoms().iter().map(|a| a[i]);
            (v.clone().fold(f64::INFINITY, f64::min) - 0.1, v.fold(f64::NEG_INFINITY, f64::max) + 0.1)
        })
        .collect();
    let cases: Vec<Result<VerificationReport>> = (0..ch.cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(opts.seed, i as u64);
            let n = rng.gen_range(1..=max_n.max(1));
            let center: Vec<f64> = range.iter().map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect();
            let r = rng.gen_range(ch.min_radius..=ch.max_radius);
            let a = ConvexNbhd::new(center, Shape::Box { radii: vec![r; k] }, 0.0)?;
            let law = crate::field::mean_law_exact(&model, n)?;
            let mut rep = VerificationReport::new(format!("case {i}"), 0.0);
            chebyshev_record(&mut rep, &law, &a, &axes, format!("n={n} A={:?}+(-{r},{r})^{k}", a.center))?;
            Ok(rep)
        })
        .collect();
    let mut report = VerificationReport::new("chebyshev_upper", 0.0);
    report.note(format!("model {}, {} randomized (A, n) cases, n <= {max_n}", model.describe(), ch.cases));
    for c in cases {
        report.absorb(c?);
    }
    let out = OutDir::create(&opts.out)?;
    let mut summary = Summary::new("chebyshev", opts.seed);
    summary.add(report);
    out.finish(summary)
}

pub fn run_subadditive(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    let model = cfg.model()?;
    let sa = &cfg.subadditive;
    let dec = cfg.decoupling(&model);
    let tol = cfg.tolerances.exact;
    let k = model.space().dim();
    let mut vols: Vec<usize> = sa.ms.iter().chain(&sa.ns).copied().collect();
    vols.sort_unstable();
    vols.dedup();
    let laws: BTreeMap<usize, crate::field::MeanLaw> = vols.iter().copied().zip(mean_laws(&model, &vols)?).collect();
    let mut lemma = VerificationReport::new("subadditive_lemma", tol);
    let mut vacuous = 0;
    for y in sa.centers.to_vecs() {
        for &r in &sa.radii {
            for &eps in &sa.eps {
                let c = ConvexNbhd::new(y.clone(), Shape::Box { radii: vec![r; k] }, eps)?;
                for &m in &sa.ms {
                    for &n in &sa.ns {
                        let mut rep = subadditive_from_laws(&model, &c, &laws[&m], &laws[&n], &dec, tol)?;
                        if is_vacuous(&rep) {
                            vacuous += 1;
                        }
                        rep.id = format!("y={} r={r} eps={eps}", fmt_point(&y));
                        lemma.absorb(rep);
                    }
                }
            }
        }
    }
    lemma.note(format!("{vacuous} of {} cases have a right-hand side of -inf", lemma.events));
    let mut summary = Summary::new("subadditive", opts.seed);
    summary.add(lemma);
    let mut press = VerificationReport::new("pressure_subadditivity", tol);
    for lam in sa.lambdas.to_vecs() {
        if lam.len() != k {
            return Err(Error::Config(format!("subadditive.lambdas entries must have {k} coordinates")));
        }
        for &m in &sa.ms {
            for &n in &sa.ns {
                let mut rep = pressure_subadditivity_check(&model, &lam, m, n, &dec, None, tol)?;
                rep.id = format!("lambda={}", fmt_point(&lam));
                press.absorb(rep);
            }
        }
    }
    summary.add(press);
    if k == 1 {
        let mut conc = VerificationReport::new("concavity", tol);
        for &(x1, x2) in &sa.pairs {
            for &r in &sa.radii {
                for &eps in &sa.eps {
                    for &m in &sa.ms {
                        for &n in &sa.ns {
                            match concavity_check(&model, &[x1], &[x2], &Shape::interval(r), eps, m, n, &dec, tol) {
                                Ok(mut rep) => {
                                    rep.id = format!("x=({x1},{x2}) r={r} eps={eps}");
                                    conc.absorb(rep);
                                }
                                Err(Error::TilingTooSmall { .. }) => conc.note(format!("m={m} n={n}: fewer than two sub-boxes, skipped")),
                                Err(e) => return Err(e),
                            }
                        }
                    }
                }
            }
        }
        summary.add(conc);
    }
    let out = OutDir::create(&opts.out)?;
    out.finish(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityRow {
    pub x: Vec<f64>,
    #[serde(with = "crate::numeric::ext_real")]
    pub s_est: f64,
    #[serde(with = "crate::numeric::ext_real")]
    pub minus_pstar: f64,
    #[serde(with = "crate::numeric::ext_real")]
    pub gap: f64,
    pub tolerance: f64,
    pub upper_margin: f64,
    pub status: Status,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityOutcome {
    pub rows: Vec<DualityRow>,
    pub estimates: Vec<EntropyEstimate>,
    pub upper: VerificationReport,
    pub two_sided: VerificationReport,
    pub convexity: VerificationReport,
    pub pressure: PressureCurve,
}

/// Limit pressure on the `λ`-grid, its grid conjugate at each target `x`,
/// and box entropies at radius `entropy.radius`, compared in both directions.
pub fn verify_duality(cfg: &ExperimentConfig, model: &FieldModel, opts: &RunOptions) -> Result<DualityOutcome> {
    let k = model.space().dim();
    let axes = lambda_axes(cfg, k)?;
    let pressure = pressure_limit_curve(model, &axes)?;
    let p = &pressure.curve;
    let h = axes.iter().map(|a| a.step()).fold(0.0, f64::max);
    let margin = cfg.tolerances.upper_margin_factor * h * p.max_slope();
    let tol = cfg.tolerances.duality;
    let xs = cfg.grids.x.to_vecs();
    if xs.iter().any(|x| x.len() != k) {
        return Err(Error::Config(format!("grids.x entries must have {k} coordinates")));
    }
    let nbhds: Vec<ConvexNbhd> = xs
        .iter()
        .map(|x| ConvexNbhd::new(x.clone(), Shape::Box { radii: vec![cfg.entropy.radius; k] }, cfg.entropy.eps))
        .collect::<Result<_>>()?;
    let est = estimates(cfg, model, &nbhds, opts)?;
    let hull = support_space(model)?;
    let mut upper = VerificationReport::new("duality_upper", 0.0);
    upper.note(format!("s_est <= -p*_grid + {margin} at every volume ({} x h x grid slope)", cfg.tolerances.upper_margin_factor));
    let mut two = VerificationReport::new("duality_two_sided", tol);
    two.note(format!("radius {}, eps {}, delta {} (echoed)", cfg.entropy.radius, cfg.entropy.eps, cfg.entropy.delta));
    let mut rows = Vec::with_capacity(xs.len());
    for (x, e) in xs.iter().zip(&est) {
        let minus_pstar = -conjugate_at(p, x) + 0.0;
        let inside = hull.hull_contains(x, 1e-12);
        for (n, v) in e.volumes.iter().zip(&e.values) {
            upper.check(format!("x={} n={n}", fmt_point(x)), minus_pstar + margin, *v);
        }
        let (gap, status) = if inside {
            let gap = if e.s_est.is_finite() { (e.s_est - minus_pstar).abs() } else { f64::INFINITY };
            let st = if e.s_est == f64::NEG_INFINITY && e.mode == CheckMode::Mc {
                Status::Inconclusive
            } else if gap <= tol {
                Status::Pass
            } else {
                Status::Fail
            };
            (gap, st)
        } else {
            // Outside the hull the box probability must vanish.
            let st = if e.s_est == f64::NEG_INFINITY { Status::Pass } else { Status::Fail };
            (if e.s_est == f64::NEG_INFINITY { 0.0 } else { f64::INFINITY }, st)
        };
        two.push(format!("x={}{}", fmt_point(x), if inside { "" } else { " (outside hull)" }), e.s_est, minus_pstar, tol - gap, status);
        let st = status.and(Status::all(upper.records.iter().rev().take(e.volumes.len()).map(|r| r.status)));
        rows.push(DualityRow { x: x.clone(), s_est: e.s_est, minus_pstar, gap, tolerance: tol, upper_margin: margin, status: st });
    }
    let convexity = convexity_check(p, cfg.tolerances.convexity);
    Ok(DualityOutcome { rows, estimates: est, upper, two_sided: two, convexity, pressure })
}

pub fn write_duality_csv<W: std::io::Write>(w: W, rows: &[DualityRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "s_est", "minus_pstar", "gap", "tolerance", "status"])?;
    for r in rows {
        out.write_record([
            fmt_point(&r.x),
            fmt_ext(r.s_est),
            fmt_ext(r.minus_pstar),
            fmt_ext(r.gap),
            fmt_ext(r.tolerance),
            format!("{:?}", r.status).to_lowercase(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn run_verify(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    let model = cfg.model()?;
    let outcome = verify_duality(cfg, &model, opts)?;
    let mut out = OutDir::create(&opts.out)?;
    write_duality_csv(out.file("verify.csv")?, &outcome.rows)?;
    outcome.pressure.write_csv(out.file("pressure_limit.csv")?)?;
    write_entropy_csv(out.file("entropy.csv")?, &outcome.estimates)?;
    let mut summary = Summary::new("verify", opts.seed);
    summary.add(outcome.upper);
    summary.add(outcome.two_sided);
    summary.add(outcome.convexity);
    let ev = crate::field::EventConfig { seed: opts.seed, mode: opts.mode, ..cfg.hypotheses.events.clone() };
    summary.add(check_decoupling(&model, &cfg.decoupling(&model), cfg.hypotheses.n, &ev)?);
    out.finish(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct MassRow {
    pub m: usize,
    pub block: usize,
    pub keep: Vec<usize>,
    pub mass: f64,
    pub required: f64,
    pub block_mass: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MoscoBundle {
    pub masses: Vec<MassRow>,
    pub properness: ProperWitness,
    pub m2: MoscoM2,
    pub m1: MoscoM1,
    pub block_identity: VerificationReport,
    pub reports: Vec<VerificationReport>,
}

/// Kept atoms of `K_m`, 1-based `m`.
fn keep_set(cfg: &ExperimentConfig, atoms: usize, m: usize) -> Result<Vec<usize>> {
    match &cfg.mosco.keep {
        Some(lists) => lists.get(m - 1).cloned().ok_or_else(|| Error::Config(format!("mosco.keep has no entry for m = {m}"))),
        None => Ok((0..atoms.min(m + cfg.mosco.offset)).collect()),
    }
}

/// Conditioned family `μ_Λ(j_m)^{K_m}`, `j_m = m + g(m) + ℓ`, with the mass
/// schedule `ν(K_m) >= 1 - 1/(m |Λ(j_m)|)` checked first, then properness,
/// M2 and M1 on the limit pressures.
pub fn run_mosco_pipeline(cfg: &ExperimentConfig, base: &FieldModel) -> Result<MoscoBundle> {
    if base.space().dim() != 1 || base.is_block_model() {
        return Err(Error::Unsupported("the truncation family is built over a scalar, shift-invariant base".into()));
    }
    let mc = &cfg.mosco;
    let dec = cfg.decoupling(base);
    let d = base.lattice_dim() as i32;
    let mut masses = Vec::with_capacity(mc.max_m);
    for m in 1..=mc.max_m {
        let keep = keep_set(cfg, base.space().len(), m)?;
        let j = m + dec.g.at(m) + base.step();
        let mut mask = vec![false; base.space().len()];
        for &i in &keep {
            if i >= mask.len() {
                return Err(Error::Config(format!("mosco.keep index {i} is out of range")));
            }
            mask[i] = true;
        }
        let mass = base.site_mass(&mask)?;
        let required = 1.0 - 1.0 / (m as f64 * (j as f64).powi(d));
        masses.push(MassRow { m, block: j, keep, mass, required, block_mass: mass.powi((j as i32).pow(d as u32)), ok: mass >= required });
    }
    if let Some(bad) = masses.iter().find(|r| !r.ok) {
        return Err(Error::Config(format!(
            "mass schedule unmet at m = {}: nu(K_m) = {} < 1 - 1/(m |Lambda({})|) = {} (K_m = {:?})",
            bad.m, bad.mass, bad.block, bad.required, bad.keep
        )));
    }
    let axes = lambda_axes(cfg, 1)?;
    let models: Vec<FieldModel> = masses.iter().map(|r| base.conditioned(r.block, &r.keep)).collect::<Result<_>>()?;
    let fs: Vec<GridFunction> = models.par_iter().map(|m| pressure_limit_curve(m, &axes).map(|c| c.curve)).collect::<Result<_>>()?;
    let f = pressure_limit_curve(base, &axes)?.curve;
    let mut block_identity = VerificationReport::new("block_pressure_identity", cfg.tolerances.block);
    for (row, m) in masses.iter().zip(&models) {
        let mut r = block_pressure_identity_check(m, &axes, &[2, 3], cfg.tolerances.block)?;
        r.id = format!("m={}", row.m);
        block_identity.absorb(r);
    }
    let properness = uniform_properness_check(&fs);
    let m2 = mosco_m2_check(&fs, &f, mc.budget, cfg.tolerances.mosco_m2)?;
    // Interior of the common hull of K_m over the suffix.
    let (lo, hi) = masses[m2.suffix[0] - 1..].iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), r| {
        let v: Vec<f64> = r.keep.iter().map(|i| base.space().atom(*i)[0]).collect();
        (lo.max(v.iter().copied().fold(f64::INFINITY, f64::min)), hi.min(v.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
    });
    let x_axis = Axis::new(mc.x_lo, mc.x_hi, mc.x_points)?;
    let mut m1 = mosco_m1_check(&fs, &f, std::slice::from_ref(&x_axis), mc.budget, cfg.tolerances.mosco_m1, |x| x[0] > lo + 1e-9 && x[0] < hi - 1e-9)?;
    m1.report.note(format!("interior targets: x in ({lo}, {hi}), the common hull of K_m over the suffix"));
    let mut mass_report = VerificationReport::new("mosco_mass_schedule", 0.0);
    for r in &masses {
        mass_report.check(format!("m={} |K|={} j={}", r.m, r.keep.len(), r.block), r.mass, r.required);
    }
    let mut prop = VerificationReport::new("uniform_properness", 0.0);
    prop.push(format!("sup_m f_m(lambda_m) ({})", properness.note), properness.sup, f64::INFINITY, f64::INFINITY, properness.status);
    let reports = vec![mass_report, prop, m2.report.clone(), m1.report.clone(), block_identity.clone()];
    Ok(MoscoBundle { masses, properness, m2, m1, block_identity, reports })
}

pub fn run_mosco(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary> {
    let base = cfg.model()?;
    let bundle = run_mosco_pipeline(cfg, &base)?;
    let mut out = OutDir::create(&opts.out)?;
    out.json("mosco_bundle.json", &bundle)?;
    let mut w = csv::Writer::from_writer(out.file("mosco_m2.csv")?);
    w.write_record(["lambda", "f", "raw_margin", "margin"])?;
    for r in &bundle.m2.rows {
        w.write_record([fmt_point(&r.lambda), fmt_ext(r.f), fmt_ext(r.raw_margin), fmt_ext(r.margin)])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(out.file("mosco_m1.csv")?);
    w.write_record(["x", "target", "tail_max", "slack"])?;
    for r in &bundle.m1.rows {
        w.write_record([fmt_point(&r.x), fmt_ext(r.target), fmt_ext(r.tail_max), fmt_ext(r.slack)])?;
    }
    w.flush()?;
    let mut summary = Summary::new("mosco", opts.seed);
    for r in bundle.reports {
        summary.add(r);
    }
    out.finish(summary)
}

/// `lft` of a grid function read from disk, exposed for tests.
pub fn conjugate_file(input: &Path, points: usize) -> Result<GridFunction> {
    let f = read_curve(input)?;
    lft(&f, &slope_axes(&f, points)?)
}
