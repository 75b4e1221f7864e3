//! Discrete Legendre–Fenchel transform `f*(x) = max_λ (⟨λ, x⟩ - f(λ))` over
//! grid points, in linear time per axis.

use crate::duality::grid::{Axis, GridFunction};
use crate::error::{Error, Result};
use crate::numeric::dot;

/// Largest `|grid| × |x-grid|` product accepted by the quadratic-time transform.
pub const DIRECT_BUDGET: usize = 200_000_000;

/// Conjugate of one line `f` on `lam` at increasing points `xs`, with the
/// maximizing grid index (smallest one on ties). Entries equal to `+inf`
/// never maximize; an all-`+inf` line has conjugate `-inf` everywhere.
pub fn lft_line(lam: &Axis, f: &[f64], xs: &[f64]) -> (Vec<f64>, Vec<Option<usize>>) {
    // Lower convex hull of the finite points, keeping only extreme points so
    // that the leftmost point of any face is a vertex.
    let mut hull: Vec<usize> = Vec::new();
    for (i, v) in f.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (lam.at(a) - lam.at(o)) * (v - f[o]) - (f[a] - f[o]) * (lam.at(i) - lam.at(o));
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    if hull.is_empty() {
        return (vec![f64::NEG_INFINITY; xs.len()], vec![None; xs.len()]);
    }
    let value = |j: usize, x: f64| lam.at(hull[j]) * x - f[hull[j]];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut vals = vec![0.0; xs.len()];
    let mut arg = vec![None; xs.len()];
    let mut j = 0;
    for &k in &order {
        let x = xs[k];
        // For fixed x the objective is unimodal along the hull and its
        // maximizer moves right as x grows.
        while j + 1 < hull.len() && value(j + 1, x) > value(j, x) {
            j += 1;
        }
        vals[k] = value(j, x);
        arg[k] = Some(hull[j]);
    }
    (vals, arg)
}

/// `f*` on the product grid `x_axes`. Two-dimensional inputs are conjugated
/// one axis at a time, which is exact on product grids because a maximum
/// over a product set is an iterated maximum.
pub fn lft(f: &GridFunction, x_axes: &[Axis]) -> Result<GridFunction> {
    f.ensure_proper()?;
    check_axes(f, x_axes)?;
    match f.dim() {
        1 => {
            let (vals, _) = lft_line(&f.axes[0], &f.values, &x_axes[0].points());
            GridFunction::new(x_axes.to_vec(), vals)
        }
        _ => {
            let (l1, l2) = (&f.axes[0], &f.axes[1]);
            let (x1, x2) = (x_axes[0].points(), x_axes[1].points());
            // h[i][j] = max_{λ2} (λ2 x2_j - f(λ1_i, λ2))
            let h: Vec<Vec<f64>> = (0..l1.len).map(|i| lft_line(l2, &f.line(1, i), &x2).0).collect();
            let mut out = vec![0.0; x1.len() * x2.len()];
            for j in 0..x2.len() {
                let g: Vec<f64> = (0..l1.len).map(|i| -h[i][j]).collect();
                let (col, _) = lft_line(l1, &g, &x1);
                for (i, v) in col.into_iter().enumerate() {
                    out[i * x2.len() + j] = v;
                }
            }
            GridFunction::new(x_axes.to_vec(), out)
        }
    }
}

/// 1-D conjugate together with the maximizing `λ` at each `x`.
pub fn lft_with_argmax(f: &GridFunction, x_axis: &Axis) -> Result<(GridFunction, Vec<f64>)> {
    f.ensure_proper()?;
    if f.dim() != 1 {
        return Err(Error::InvalidArgument("argmax is tracked for one-dimensional grids only".into()));
    }
    let (vals, arg) = lft_line(&f.axes[0], &f.values, &x_axis.points());
    let lam = arg.iter().map(|a| a.map_or(f64::NAN, |i| f.axes[0].at(i))).collect();
    Ok((GridFunction::new(vec![x_axis.clone()], vals)?, lam))
}

/// Quadratic-time reference transform.
pub fn lft_direct(f: &GridFunction, x_axes: &[Axis]) -> Result<GridFunction> {
    f.ensure_proper()?;
    check_axes(f, x_axes)?;
    let nx: usize = x_axes.iter().map(|a| a.len).product();
    if nx.saturating_mul(f.len()) > DIRECT_BUDGET {
        return Err(Error::BudgetExceeded { states: nx * f.len(), budget: DIRECT_BUDGET });
    }
    let pts = f.points();
    GridFunction::from_fn(x_axes.to_vec(), |x| sup_over(&pts, &f.values, x))
}

fn sup_over(pts: &[Vec<f64>], vals: &[f64], x: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (p, v) in pts.iter().zip(vals) {
        if v.is_finite() {
            let c = dot(p, x) - v;
            if c > best {
                best = c;
            }
        }
    }
    best
}

/// `f*(x)` at an arbitrary point, by direct maximization over the grid.
pub fn conjugate_at(f: &GridFunction, x: &[f64]) -> f64 {
    sup_over(&f.points(), &f.values, x)
}

/// `f**` on the grid of `f`, conjugating through `x_axes`.
pub fn biconjugate(f: &GridFunction, x_axes: &[Axis]) -> Result<GridFunction> {
    lft(&lft(f, x_axes)?, &f.axes)
}

fn check_axes(f: &GridFunction, x_axes: &[Axis]) -> Result<()> {
    if x_axes.len() != f.dim() {
        return Err(Error::InvalidArgument(format!("{} x-axes for a {}-dimensional grid", x_axes.len(), f.dim())));
    }
    Ok(())
}
