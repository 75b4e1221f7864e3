use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ext_real_vec, fmt_ext};

/// `len` equally spaced points from `lo` to `hi` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, len: usize) -> Result<Self> {
        let ok = lo.is_finite() && hi.is_finite() && ((len == 1 && lo == hi) || (len >= 2 && hi > lo));
        if !ok {
            return Err(Error::InvalidArgument(format!("bad grid axis [{lo}, {hi}] with {len} points")));
        }
        Ok(Self { lo, hi, len })
    }

    /// `[-l, l]` with `len` points.
    pub fn symmetric(l: f64, len: usize) -> Result<Self> {
        Self::new(-l, l, len)
    }

    pub fn step(&self) -> f64 {
        if self.len < 2 {
            0.0
        } else {
            (self.hi - self.lo) / (self.len - 1) as f64
        }
    }

    pub fn at(&self, i: usize) -> f64 {
        if i + 1 == self.len {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.at(i)).collect()
    }

    /// Index of the grid point nearest to `x` (ties toward the smaller point).
    pub fn nearest(&self, x: f64) -> usize {
        if self.len < 2 {
            return 0;
        }
        let t = ((x - self.lo) / self.step()).clamp(0.0, (self.len - 1) as f64);
        let lo = t.floor() as usize;
        if lo + 1 < self.len && (self.at(lo + 1) - x).abs() < (x - self.at(lo)).abs() {
            lo + 1
        } else {
            lo
        }
    }

    /// Index of a grid point equal to `x` up to `tol`.
    pub fn index_of(&self, x: f64, tol: f64) -> Option<usize> {
        let i = self.nearest(x);
        ((self.at(i) - x).abs() <= tol).then_some(i)
    }
}

/// Extended-real values on a product grid, stored row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridFunction {
    pub axes: Vec<Axis>,
    #[serde(with = "ext_real_vec")]
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidArgument("grid functions live on 1 or 2 axes".into()));
        }
        let n: usize = axes.iter().map(|a| a.len).product();
        if values.len() != n {
            return Err(Error::InvalidArgument(format!("{} values for a grid of {n} points", values.len())));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("grid values must not be NaN".into()));
        }
        Ok(Self { axes, values })
    }

    /// Tabulates `f`, evaluating grid points in parallel. The result does not
    /// depend on the schedule since each point is computed independently.
    pub fn from_fn(axes: Vec<Axis>, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.len).product();
        let probe = Self { axes: axes.clone(), values: Vec::new() };
        let values = (0..n).into_par_iter().map(|i| f(&probe.point(i))).collect();
        Self::new(axes, values)
    }

    pub fn try_from_fn(axes: Vec<Axis>, f: impl Fn(&[f64]) -> Result<f64> + Sync) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.len).product();
        let probe = Self { axes: axes.clone(), values: Vec::new() };
        let values = (0..n).into_par_iter().map(|i| f(&probe.point(i))).collect::<Result<Vec<f64>>>()?;
        Self::new(axes, values)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn indices(&self, i: usize) -> [usize; 2] {
        match self.axes.len() {
            1 => [i, 0],
            _ => [i / self.axes[1].len, i % self.axes[1].len],
        }
    }

    pub fn flat(&self, idx: [usize; 2]) -> usize {
        match self.axes.len() {
            1 => idx[0],
            _ => idx[0] * self.axes[1].len + idx[1],
        }
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let idx = self.indices(i);
        self.axes.iter().enumerate().map(|(a, ax)| ax.at(idx[a])).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Proper: no `-inf` and at least one finite value.
    pub fn is_proper(&self) -> bool {
        self.values.iter().all(|v| *v > f64::NEG_INFINITY) && self.values.iter().any(|v| v.is_finite())
    }

    pub fn ensure_proper(&self) -> Result<()> {
        if self.values.contains(&f64::NEG_INFINITY) {
            return Err(Error::Improper("takes the value -inf".into()));
        }
        if !self.values.iter().any(|v| v.is_finite()) {
            return Err(Error::Improper("identically +inf".into()));
        }
        Ok(())
    }

    /// Largest `|Δf| / h` between adjacent finite grid values along any axis.
    pub fn max_slope(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.len() {
            let idx = self.indices(i);
            for (a, ax) in self.axes.iter().enumerate() {
                if idx[a] + 1 < ax.len {
                    let mut j = idx;
                    j[a] += 1;
                    let (u, v) = (self.values[i], self.values[self.flat(j)]);
                    if u.is_finite() && v.is_finite() {
                        best = best.max((v - u).abs() / ax.step());
                    }
                }
            }
        }
        best
    }

    /// Index of the smallest value (first in grid order on ties).
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, v) in self.values.iter().enumerate() {
            if v.is_finite() && best.is_none_or(|b| *v < self.values[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Value at the grid point nearest to `x`.
    pub fn value_near(&self, x: &[f64]) -> f64 {
        let mut idx = [0usize; 2];
        for (a, ax) in self.axes.iter().enumerate() {
            idx[a] = ax.nearest(x[a]);
        }
        self.values[self.flat(idx)]
    }

    /// One 1-D slice along `axis`, the other index fixed at `other`.
    pub fn line(&self, axis: usize, other: usize) -> Vec<f64> {
        (0..self.axes[axis].len)
            .map(|k| {
                let idx = if axis == 0 { [k, other] } else { [other, k] };
                self.values[self.flat(idx)]
            })
            .collect()
    }

    /// Writes `(coordinate columns..., value)` rows.
    pub fn write_csv<W: Write>(&self, w: W, coord_names: &[&str], value_name: &str) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = coord_names.iter().take(self.dim()).copied().collect();
        header.push(value_name);
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| fmt_ext(*v)).collect();
            row.push(fmt_ext(self.values[i]));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Checks midpoint convexity `f(λ_i) <= (f(λ_{i-k}) + f(λ_{i+k})) / 2 + tol`
/// over every symmetric grid triple along every grid line.
pub fn convexity_violations(f: &GridFunction, tol: f64) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::new();
    for axis in 0..f.dim() {
        let others = if f.dim() == 1 { 1 } else { f.axes[1 - axis].len };
        for o in 0..others {
            let line = f.line(axis, o);
            let n = line.len();
            for i in 1..n.saturating_sub(1) {
                for k in 1..=i.min(n - 1 - i) {
                    let avg = 0.5 * (line[i - k] + line[i + k]);
                    let excess = line[i] - avg;
                    if excess > tol {
                        let idx = if axis == 0 { [i, o] } else { [o, i] };
                        out.push((f.point(f.flat(idx)), excess));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_points() {
        let a = Axis::symmetric(5.0, 201).unwrap();
        assert!((a.step() - 0.05).abs() < 1e-15);
        assert_eq!(a.at(200), 5.0);
        assert_eq!(a.at(100), 0.0);
        assert_eq!(a.index_of(0.3, 1e-9), Some(106));
        assert!(Axis::new(1.0, 0.0, 3).is_err());
        assert!(Axis::new(0.0, 0.0, 1).is_ok());
    }

    #[test]
    fn properness() {
        let ax = vec![Axis::new(0.0, 1.0, 2).unwrap()];
        assert!(GridFunction::new(ax.clone(), vec![f64::INFINITY, 0.0]).unwrap().is_proper());
        assert!(!GridFunction::new(ax.clone(), vec![f64::INFINITY; 2]).unwrap().is_proper());
        assert!(!GridFunction::new(ax, vec![f64::NEG_INFINITY, 0.0]).unwrap().is_proper());
    }

    #[test]
    fn convexity_detects_concave_points() {
        let ax = vec![Axis::symmetric(1.0, 21).unwrap()];
        let convex = GridFunction::from_fn(ax.clone(), |l| l[0] * l[0]).unwrap();
        assert!(convexity_violations(&convex, 1e-12).is_empty());
        let concave = GridFunction::from_fn(ax, |l| -l[0].abs()).unwrap();
        assert!(!convexity_violations(&concave, 1e-12).is_empty());
    }

    #[test]
    fn two_dimensional_layout() {
        let axes = vec![Axis::new(0.0, 1.0, 2).unwrap(), Axis::new(0.0, 2.0, 3).unwrap()];
        let f = GridFunction::from_fn(axes, |p| p[0] * 10.0 + p[1]).unwrap();
        assert_eq!(f.values, vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(f.line(0, 2), vec![2.0, 12.0]);
        assert_eq!(f.point(4), vec![1.0, 1.0]);
    }
}
