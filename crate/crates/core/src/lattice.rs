//! Integer-lattice geometry: cubic boxes, sublattice-aligned tilings with
//! gaps, the marginal sites they leave uncovered, and their density.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::report::{Status, VerificationReport};
use crate::table::StepTable;

/// A lattice site in `Z^d`, `d <= 2`. The unused coordinate is zero when `d = 1`.
pub type Site = [i64; 2];

/// `corner + [0, side)^dim ∩ Z^dim`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BoxSpec {
    corner: Site,
    side: usize,
    dim: usize,
}

impl BoxSpec {
    pub fn new(corner: &[i64], side: usize, dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidBox(format!("dimension must be 1 or 2, got {dim}")));
        }
        if side == 0 {
            return Err(Error::InvalidBox("side must be positive".into()));
        }
        if corner.len() != dim {
            return Err(Error::InvalidBox(format!(
                "corner has {} coordinates, expected {dim}",
                corner.len()
            )));
        }
        let mut c = [0i64; 2];
        c[..dim].copy_from_slice(corner);
        Ok(Self { corner: c, side, dim })
    }

    /// `Λ(n)`: the box of side `n` anchored at the origin.
    pub fn origin(side: usize, dim: usize) -> Result<Self> {
        Self::new(&[0, 0][..dim], side, dim)
    }

    pub fn corner(&self) -> Site {
        self.corner
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cardinality(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn contains(&self, site: Site) -> bool {
        (0..self.dim).all(|i| {
            let off = site[i] - self.corner[i];
            off >= 0 && (off as usize) < self.side
        }) && (self.dim == 2 || site[1] == 0)
    }

    /// Sites in lexicographic order.
    pub fn sites(&self) -> Vec<Site> {
        let s = self.side as i64;
        let [a, b] = self.corner;
        match self.dim {
            1 => (0..s).map(|i| [a + i, 0]).collect(),
            _ => (0..s)
                .flat_map(|i| (0..s).map(move |j| [a + i, b + j]))
                .collect(),
        }
    }

    /// Sup-norm distance between two boxes (0 when they intersect).
    pub fn distance(&self, other: &BoxSpec) -> i64 {
        (0..self.dim)
            .map(|i| {
                let (a0, a1) = (self.corner[i], self.corner[i] + self.side as i64 - 1);
                let (b0, b1) = (other.corner[i], other.corner[i] + other.side as i64 - 1);
                if a1 < b0 {
                    b0 - a1
                } else if b1 < a0 {
                    a0 - b1
                } else {
                    0
                }
            })
            .max()
            .unwrap_or(0)
    }

    /// Sup-norm distance from a site to the box (0 inside).
    pub fn distance_to_site(&self, site: Site) -> i64 {
        (0..self.dim)
            .map(|i| {
                let lo = self.corner[i];
                let hi = lo + self.side as i64 - 1;
                if site[i] < lo {
                    lo - site[i]
                } else if site[i] > hi {
                    site[i] - hi
                } else {
                    0
                }
            })
            .max()
            .unwrap_or(0)
    }
}

/// Sup-norm distance between two sites.
pub fn site_distance(a: Site, b: Site) -> i64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// The tiling of `Λ(n)` by `k^d` boxes of side `m`, each placed at the
/// lexicographically least point of `R_ℓ = (ℓZ)^d` inside its cell of side
/// `m + g + ℓ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tiling {
    pub outer: BoxSpec,
    pub inner_side: usize,
    pub gap: usize,
    pub sublattice_step: usize,
    /// Cells per axis.
    pub k: usize,
    /// Remainder `n - k (m + g + ℓ)`.
    pub r: usize,
    pub cells: Vec<BoxSpec>,
    pub sub_boxes: Vec<BoxSpec>,
    /// Sites of the outer box not covered by any sub-box, sorted lexicographically.
    pub margin: Vec<Site>,
}

impl Tiling {
    pub fn margin_len(&self) -> usize {
        self.margin.len()
    }

    /// `ρ_{m,n} = |S_0| / n^d`.
    pub fn rho(&self) -> f64 {
        self.margin.len() as f64 / self.outer.cardinality() as f64
    }

    /// `d ((g + ℓ)/(m + g + ℓ) + r/n)`, an upper bound for `rho`.
    pub fn rho_bound(&self) -> f64 {
        let cell = (self.inner_side + self.gap + self.sublattice_step) as f64;
        let d = self.outer.dim() as f64;
        d * ((self.gap + self.sublattice_step) as f64 / cell + self.r as f64 / self.outer.side() as f64)
    }
}

impl Tiling {
    /// Exact integer checks of the partition identity, the gap property and
    /// sublattice alignment; each record counts violations.
    pub fn verify(&self) -> VerificationReport {
        let mut report = VerificationReport::new("tiling", 0.0);
        let (n, m, g, ell) = (self.outer.side(), self.inner_side, self.gap, self.sublattice_step);
        let cell = m + g + ell;
        report.note(format!("n = {n}, m = {m}, g = {g}, ell = {ell}, d = {}", self.outer.dim()));
        let mut count = |label: &str, bad: usize| {
            let status = if bad == 0 { Status::Pass } else { Status::Fail };
            report.push(label, 0.0, bad as f64, -(bad as f64), status);
        };
        count("n = k (m + g + ell) + r, r < m + g + ell", usize::from(n != self.k * cell + self.r || self.r >= cell));
        count("k^d sub-boxes", usize::from(self.sub_boxes.len() != self.k.pow(self.outer.dim() as u32)));
        let covered: usize = self.sub_boxes.iter().map(|b| b.cardinality()).sum();
        count("sum |sub-box| + |S0| = n^d", usize::from(covered + self.margin.len() != self.outer.cardinality()));
        let stray = self.sub_boxes.iter().filter(|b| b.side() != m || !b.sites().iter().all(|s| self.outer.contains(*s))).count();
        count("sub-boxes of side m inside the outer box", stray);
        let margin_hits = self.margin.iter().filter(|s| !self.outer.contains(**s) || self.sub_boxes.iter().any(|b| b.contains(**s))).count();
        count("margin disjoint from sub-boxes", margin_hits);
        let mut close = 0;
        for (i, a) in self.sub_boxes.iter().enumerate() {
            for b in &self.sub_boxes[i + 1..] {
                if a.distance(b) <= g as i64 {
                    close += 1;
                }
            }
        }
        count("pairwise distance > g", close);
        let misaligned = self
            .sub_boxes
            .iter()
            .zip(&self.cells)
            .filter(|(b, c)| {
                let corner = b.corner();
                (0..b.dim()).any(|a| corner[a].rem_euclid(ell as i64) != 0) || !b.sites().iter().all(|s| c.contains(*s))
            })
            .count();
        count("corners on the sublattice, inside their cells", misaligned);
        report
    }
}

fn ceil_to_multiple(a: i64, step: i64) -> i64 {
    let rem = a.rem_euclid(step);
    if rem == 0 {
        a
    } else {
        a + (step - rem)
    }
}

/// Tiles `Λ(n)` (anchored at the origin).
pub fn tile(n: usize, m: usize, g: usize, ell: usize, dim: usize) -> Result<Tiling> {
    tile_box(&BoxSpec::origin(n, dim)?, m, g, ell)
}

/// Tiles an arbitrary outer box. Sub-box corners lie on the absolute sublattice `(ℓZ)^d`.
pub fn tile_box(outer: &BoxSpec, m: usize, g: usize, ell: usize) -> Result<Tiling> {
    if m == 0 || ell == 0 {
        return Err(Error::InvalidArgument("inner side and sublattice step must be positive".into()));
    }
    let cell = m + g + ell;
    let n = outer.side();
    if n < cell {
        return Err(Error::TilingTooSmall { n, needed: cell });
    }
    let dim = outer.dim();
    let k = n / cell;
    let r = n - k * cell;
    let corner = outer.corner();

    let mut cells = Vec::with_capacity(k.pow(dim as u32));
    let mut sub_boxes = Vec::with_capacity(cells.capacity());
    let idx: Vec<[usize; 2]> = match dim {
        1 => (0..k).map(|i| [i, 0]).collect(),
        _ => (0..k).flat_map(|i| (0..k).map(move |j| [i, j])).collect(),
    };
    for q in idx {
        let mut c = [0i64; 2];
        let mut b = [0i64; 2];
        for a in 0..dim {
            c[a] = corner[a] + (q[a] * cell) as i64;
            b[a] = ceil_to_multiple(c[a], ell as i64);
        }
        // The least R_ℓ point of the cell is within ℓ-1 of its corner, so a
        // side-m box placed there stays inside the cell.
        debug_assert!((0..dim).all(|a| b[a] - c[a] < ell as i64));
        cells.push(BoxSpec::new(&c[..dim], cell, dim)?);
        sub_boxes.push(BoxSpec::new(&b[..dim], m, dim)?);
    }

    let margin = outer
        .sites()
        .into_iter()
        .filter(|s| !sub_boxes.iter().any(|b| b.contains(*s)))
        .collect();

    Ok(Tiling { outer: outer.clone(), inner_side: m, gap: g, sublattice_step: ell, k, r, cells, sub_boxes, margin })
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoRow {
    pub m: usize,
    pub n: usize,
    pub g: usize,
    pub k: usize,
    pub r: usize,
    pub margin: usize,
    pub rho: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoReport {
    pub rows: Vec<RhoRow>,
    /// For each threshold, the first `m` from which every later `ρ` is below it.
    pub eventually_below: Vec<(f64, Option<usize>)>,
    pub report: VerificationReport,
}

/// Tabulates `ρ_{m, n(m)}` along `ms` and checks that it is eventually below
/// each threshold and never above the `d((g+ℓ)/(m+g+ℓ) + r/n)` bound.
pub fn rho_limit_check(
    ms: &[usize],
    g: &StepTable<usize>,
    ell: usize,
    n_of_m: impl Fn(usize) -> usize,
    thresholds: &[f64],
    dim: usize,
) -> Result<RhoReport> {
    let mut rows = Vec::with_capacity(ms.len());
    let mut report = VerificationReport::new("rho_limit", 0.0);
    for &m in ms {
        let gm = g.at(m);
        let n = n_of_m(m);
        let t = tile(n, m, gm, ell, dim)?;
        let row = RhoRow {
            m,
            n,
            g: gm,
            k: t.k,
            r: t.r,
            margin: t.margin_len(),
            rho: t.rho(),
            bound: t.rho_bound(),
        };
        report.check(format!("rho_bound m={m} n={n}"), row.bound, row.rho);
        rows.push(row);
    }
    let mut eventually_below = Vec::new();
    for &thr in thresholds {
        let mut first = None;
        for (i, row) in rows.iter().enumerate().rev() {
            if row.rho < thr {
                first = Some(i);
            } else {
                break;
            }
        }
        let from = first.map(|i| rows[i].m);
        match from {
            Some(m) => report.note(format!("rho < {thr} for all m >= {m}")),
            None => report.mark(Status::Fail, format!("rho is not eventually below {thr}")),
        }
        eventually_below.push((thr, from));
    }
    Ok(RhoReport { rows, eventually_below, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counting oracle: walk every site of the outer box and test membership
    /// against each sub-box independently of the tiling's margin list.
    fn count_uncovered(t: &Tiling) -> usize {
        t.outer.sites().iter().filter(|s| t.sub_boxes.iter().all(|b| !b.contains(**s))).count()
    }

    #[test]
    fn make_box_examples() {
        let b = BoxSpec::new(&[0], 1, 1).unwrap();
        assert_eq!(b.cardinality(), 1);
        assert_eq!(b.sites(), vec![[0, 0]]);
        assert_eq!(BoxSpec::new(&[0, 0], 3, 2).unwrap().cardinality(), 9);
        let b = BoxSpec::new(&[5], 4, 1).unwrap();
        assert_eq!(b.sites(), vec![[5, 0], [6, 0], [7, 0], [8, 0]]);
        assert!(b.contains([8, 0]) && !b.contains([9, 0]) && !b.contains([4, 0]));
    }

    #[test]
    fn make_box_rejects_bad_input() {
        assert!(BoxSpec::new(&[0], 0, 1).is_err());
        assert!(BoxSpec::new(&[0, 0, 0], 2, 3).is_err());
        assert!(BoxSpec::new(&[0, 0], 2, 1).is_err());
    }

    #[test]
    fn tile_one_dimensional_example() {
        let t = tile(10, 2, 1, 1, 1).unwrap();
        assert_eq!((t.k, t.r), (2, 2));
        assert_eq!(t.sub_boxes.len(), 2);
        assert!(t.sub_boxes.iter().all(|b| b.side() == 2));
        assert_eq!(count_uncovered(&t), 6);
        assert_eq!(t.margin_len(), 6);
        assert!((t.rho() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn tile_two_dimensional_example() {
        let t = tile(10, 2, 1, 1, 2).unwrap();
        assert_eq!(t.sub_boxes.len(), 4);
        assert_eq!(count_uncovered(&t), 84);
        assert_eq!(t.margin_len(), 84);
        assert!((t.rho() - 0.84).abs() < 1e-15);
    }

    #[test]
    fn exact_fit_gives_one_box() {
        let t = tile(7, 4, 2, 1, 1).unwrap();
        assert_eq!((t.k, t.r), (1, 0));
        assert_eq!(t.sub_boxes.len(), 1);
    }

    #[test]
    fn too_small_outer_box_is_rejected() {
        assert!(matches!(tile(6, 4, 2, 1, 1), Err(Error::TilingTooSmall { n: 6, needed: 7 })));
    }

    #[test]
    fn sublattice_alignment_with_offset_corner() {
        let outer = BoxSpec::new(&[3, -5], 40, 2).unwrap();
        let t = tile_box(&outer, 4, 1, 3).unwrap();
        for b in &t.sub_boxes {
            assert!(b.corner().iter().all(|c| c.rem_euclid(3) == 0));
        }
        for (cell, b) in t.cells.iter().zip(&t.sub_boxes) {
            assert!(b.sites().iter().all(|s| cell.contains(*s)));
        }
    }

    #[test]
    fn rho_table_with_vanishing_gap() {
        let g = StepTable::constant(0usize);
        let ms: Vec<usize> = (2..=20).collect();
        let rep = rho_limit_check(&ms, &g, 1, |m| m * m, &[0.5, 0.2], 1).unwrap();
        assert!(rep.report.passed(), "{:?}", rep.report);
        // Counting oracle at m = 2: n = 4, one box of side 2, two marginal sites.
        assert!((rep.rows[0].rho - 0.5).abs() < 1e-15);
        assert!(rep.rows.windows(2).all(|w| w[1].rho <= w[0].rho));
        assert!(rep.rows.last().unwrap().rho < 0.06);
    }

    #[test]
    fn rho_table_with_linear_gap_stays_away_from_zero() {
        let g = StepTable::new((1..=30).map(|m| (m, m)).collect()).unwrap();
        let ms: Vec<usize> = (3..=30).collect();
        let rep = rho_limit_check(&ms, &g, 1, |m| m * m, &[0.2], 1).unwrap();
        assert_eq!(rep.report.status, Status::Fail);
        assert!(rep.rows.iter().all(|r| r.rho > 0.4));
    }

    #[test]
    fn single_cell_tiling_leaves_remainder() {
        let t = tile(5, 4, 0, 1, 1).unwrap();
        // cell = 5 fits once; the single box of side 4 leaves one site.
        assert_eq!(t.margin_len(), 1);
        let t = tile(1, 1, 0, 1, 1);
        assert!(t.is_err());
    }
}
