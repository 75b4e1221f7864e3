//! Finite-range diagnostics for Mosco convergence of a sequence `f_1..f_M`
//! towards `f`. Limits in `m` are replaced by tail extrema over the suffix
//! `m ∈ [M/2, M]`, and converging argument sequences by grid windows that
//! shrink linearly to a single point at `m = M`.

use rayon::prelude::*;
use serde::Serialize;

use crate::duality::grid::{Axis, GridFunction};
use crate::duality::lft::lft;
use crate::error::{Error, Result};
use crate::numeric::ext_real;
use crate::report::{slack_of, Status, VerificationReport};

/// `λ_m` with `sup_m f_m(λ_m) < ∞`.
#[derive(Clone, Debug, Serialize)]
pub struct ProperWitness {
    pub lambdas: Vec<Vec<f64>>,
    #[serde(with = "ext_real")]
    pub sup: f64,
    pub status: Status,
    pub note: String,
}

pub fn uniform_properness_check(fs: &[GridFunction]) -> ProperWitness {
    if fs.is_empty() {
        return ProperWitness { lambdas: vec![], sup: f64::NEG_INFINITY, status: Status::Inconclusive, note: "empty family".into() };
    }
    let zeros: Vec<Option<usize>> = fs
        .iter()
        .map(|f| {
            let mut idx = [0usize; 2];
            for (a, ax) in f.axes.iter().enumerate() {
                idx[a] = ax.index_of(0.0, 1e-12 * ax.step().max(1.0))?;
            }
            Some(f.flat(idx))
        })
        .collect();
    if zeros.iter().zip(fs).all(|(z, f)| z.is_some_and(|i| f.values[i] == 0.0)) {
        return ProperWitness {
            lambdas: fs.iter().map(|f| vec![0.0; f.dim()]).collect(),
            sup: 0.0,
            status: Status::Pass,
            note: "every f_m vanishes at 0".into(),
        };
    }
    let mut lambdas = Vec::with_capacity(fs.len());
    let mut sup = f64::NEG_INFINITY;
    for (m, f) in fs.iter().enumerate() {
        match f.argmin() {
            Some(i) => {
                lambdas.push(f.point(i));
                sup = sup.max(f.values[i]);
            }
            None => {
                return ProperWitness {
                    lambdas,
                    sup: f64::INFINITY,
                    status: Status::Fail,
                    note: format!("f_{} has no finite value on the grid", m + 1),
                }
            }
        }
    }
    ProperWitness { lambdas, sup, status: Status::Pass, note: "per-m grid minimizers".into() }
}

/// The suffix `[M/2, M]` of 1-based indices and its shrinking window radii.
fn suffix_windows(count: usize, budget: usize) -> (usize, Vec<usize>) {
    let start = (count / 2).max(1);
    let t = count - start + 1;
    let windows = (0..t).map(|i| if t == 1 { 0 } else { budget * (t - 1 - i) / (t - 1) }).collect();
    (start, windows)
}

fn window(f: &GridFunction, center: usize, w: usize) -> Vec<usize> {
    let c = f.indices(center);
    let range = |a: usize| c[a].saturating_sub(w)..=(c[a] + w).min(f.axes[a].len - 1);
    match f.dim() {
        1 => range(0).collect(),
        _ => range(0).flat_map(|i| range(1).map(move |j| [i, j])).map(|idx| f.flat(idx)).collect(),
    }
}

/// Smallest value over `idx` (first index on ties).
fn min_over(f: &GridFunction, idx: &[usize]) -> (usize, f64) {
    let mut best = (idx[0], f.values[idx[0]]);
    for &i in &idx[1..] {
        if f.values[i] < best.1 {
            best = (i, f.values[i]);
        }
    }
    best
}

fn check_family(fs: &[GridFunction], f: &GridFunction) -> Result<()> {
    if fs.is_empty() {
        return Err(Error::InvalidArgument("empty function family".into()));
    }
    if fs.iter().any(|g| g.axes != f.axes) {
        return Err(Error::InvalidArgument("family and limit must share one grid".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct M2Row {
    pub lambda: Vec<f64>,
    #[serde(with = "ext_real")]
    pub f: f64,
    /// Tail minimum of `f_m(λ_m)` minus `f(λ)`.
    #[serde(with = "ext_real")]
    pub raw_margin: f64,
    /// Tail minimum of `f_m(λ_m) - min_{W_m} f`: the part of the drop not
    /// explained by `f` itself varying over the window.
    #[serde(with = "ext_real")]
    pub margin: f64,
    pub witness: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MoscoM2 {
    pub suffix: [usize; 2],
    pub windows: Vec<usize>,
    pub rows: Vec<M2Row>,
    pub report: VerificationReport,
}

/// `liminf f_m(λ_m) >= f(λ)` for adversarial `λ_m → λ`.
pub fn mosco_m2_check(fs: &[GridFunction], f: &GridFunction, budget: usize, tol: f64) -> Result<MoscoM2> {
    check_family(fs, f)?;
    let (start, windows) = suffix_windows(fs.len(), budget);
    let rows: Vec<M2Row> = (0..f.len())
        .into_par_iter()
        .map(|i| {
            let mut raw = f64::INFINITY;
            let mut comp = f64::INFINITY;
            let mut witness = Vec::with_capacity(windows.len());
            for (t, &w) in windows.iter().enumerate() {
                let fm = &fs[start - 1 + t];
                let idx = window(f, i, w);
                let (arg, v) = min_over(fm, &idx);
                let (_, floor) = min_over(f, &idx);
                witness.push(fm.point(arg));
                raw = raw.min(v);
                comp = comp.min(slack_of(v, floor));
            }
            M2Row { lambda: f.point(i), f: f.values[i], raw_margin: slack_of(raw, f.values[i]), margin: comp, witness }
        })
        .collect();
    let mut report = VerificationReport::new("mosco_m2", tol);
    report.note(format!("tail suffix m in [{start}, {}], window radii {windows:?}", fs.len()));
    for r in &rows {
        if r.f == f64::INFINITY {
            continue;
        }
        report.push(format!("lambda={:?}", r.lambda), r.margin, 0.0, r.margin, if r.margin >= -tol {
            Status::Pass
        } else {
            Status::Fail
        });
    }
    Ok(MoscoM2 { suffix: [start, fs.len()], windows, rows, report })
}

#[derive(Clone, Debug, Serialize)]
pub struct M1Row {
    pub x: Vec<f64>,
    #[serde(with = "ext_real")]
    pub target: f64,
    #[serde(with = "ext_real")]
    pub tail_max: f64,
    /// `tail_max - f*(x)`; the check passes when this is at most the tolerance.
    #[serde(with = "ext_real")]
    pub slack: f64,
    pub witness: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MoscoM1 {
    pub suffix: [usize; 2],
    pub windows: Vec<usize>,
    pub rows: Vec<M1Row>,
    pub report: VerificationReport,
}

/// `∃ y_m → x` with `limsup f_m*(y_m) <= f*(x)`, searched greedily: `y_m`
/// minimizes `f_m*` over the shrinking window around `x`.
pub fn mosco_m1_check(
    fs: &[GridFunction],
    f: &GridFunction,
    x_axes: &[Axis],
    budget: usize,
    tol: f64,
    interior: impl Fn(&[f64]) -> bool + Sync,
) -> Result<MoscoM1> {
    check_family(fs, f)?;
    let target = lft(f, x_axes)?;
    let conj: Vec<GridFunction> = fs.iter().map(|g| lft(g, x_axes)).collect::<Result<_>>()?;
    let (start, windows) = suffix_windows(fs.len(), budget);
    let rows: Vec<M1Row> = (0..target.len())
        .into_par_iter()
        .filter(|&i| {
            let idx = target.indices(i);
            let inner = (0..target.dim()).all(|a| idx[a] > 0 && idx[a] + 1 < target.axes[a].len);
            inner && interior(&target.point(i))
        })
        .map(|i| {
            let mut tail = f64::NEG_INFINITY;
            let mut witness = Vec::with_capacity(windows.len());
            for (t, &w) in windows.iter().enumerate() {
                let g = &conj[start - 1 + t];
                let (arg, v) = min_over(g, &window(g, i, w));
                witness.push(g.point(arg));
                tail = tail.max(v);
            }
            M1Row { x: target.point(i), target: target.values[i], tail_max: tail, slack: slack_of(tail, target.values[i]), witness }
        })
        .collect();
    let mut report = VerificationReport::new("mosco_m1", tol);
    report.note(format!("tail suffix m in [{start}, {}], window radii {windows:?}", fs.len()));
    for r in &rows {
        report.check(format!("x={:?}", r.x), r.target, r.tail_max);
    }
    if rows.is_empty() {
        report.mark(Status::Inconclusive, "no interior target points");
    }
    Ok(MoscoM1 { suffix: [start, fs.len()], windows, rows, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis() -> Axis {
        Axis::symmetric(2.0, 41).unwrap()
    }

    fn quad(shift: f64) -> GridFunction {
        GridFunction::from_fn(vec![axis()], move |l| (l[0] - shift).powi(2)).unwrap()
    }

    #[test]
    fn constant_sequence_has_zero_margins() {
        let f = quad(0.0);
        let fs = vec![f.clone(); 12];
        let m2 = mosco_m2_check(&fs, &f, 3, 1e-12).unwrap();
        assert!(m2.report.passed());
        assert!(m2.rows.iter().all(|r| r.margin == 0.0));
        assert_eq!(m2.suffix, [6, 12]);
        assert_eq!(*m2.windows.last().unwrap(), 0);
        let m1 = mosco_m1_check(&fs, &f, &[Axis::symmetric(1.0, 21).unwrap()], 3, 1e-12, |_| true).unwrap();
        assert!(m1.report.passed());
        assert!(m1.rows.iter().all(|r| r.slack <= 0.0));
    }

    #[test]
    fn sequence_dropping_below_limit_fails_m2() {
        let f = quad(0.0);
        let fs: Vec<GridFunction> = (0..12)
            .map(|_| GridFunction::from_fn(vec![axis()], |l| l[0] * l[0] - 0.1).unwrap())
            .collect();
        assert!(!mosco_m2_check(&fs, &f, 2, 1e-6).unwrap().report.passed());
    }

    #[test]
    fn properness_witnesses() {
        let w = uniform_properness_check(&[quad(0.0), quad(0.0)]);
        assert_eq!(w.status, Status::Pass);
        assert_eq!(w.lambdas, vec![vec![0.0], vec![0.0]]);
        let w = uniform_properness_check(&[quad(1.0), quad(1.0)]);
        assert_eq!(w.lambdas, vec![vec![1.0], vec![1.0]]);
        assert_eq!(w.sup, 0.0);
        let inf = GridFunction::new(vec![axis()], vec![f64::INFINITY; 41]).unwrap();
        assert_eq!(uniform_properness_check(&[quad(0.0), inf]).status, Status::Fail);
    }
}
