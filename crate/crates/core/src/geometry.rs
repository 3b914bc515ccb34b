//! Box-counting experiments: intersections of Cantor sets with affine
//! copies, sumset dimensions, slices of planar self-similar sets and
//! projections of planar measures.
//!
//! Covers are unions of half-open cells `[kδ, (k+1)δ)`, so every count is
//! an upper bound for the covering number of the set being covered. Cell
//! boundaries are located with a relative slack of [`CELL_SLACK`] so that
//! grid-aligned endpoints do not spill into a neighbouring cell through
//! rounding.

use serde::Serialize;

use crate::dyadic_measure::{atom_capacity, AtomicMeasure};
use crate::error::{Error, Result};
use crate::fit::linear_fit;

pub const CELL_SLACK: f64 = 1e-9;
/// Finest cell side accepted by [`planar_attractor`].
pub const RESOLUTION_FLOOR: f64 = 1.0 / (1u64 << 40) as f64;
/// Fits with `r²` below this are flagged as unstable.
pub const STABLE_R2: f64 = 0.9;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
pub const GOLDEN: f64 = 1.618_033_988_749_895;
pub const SQRT_5: f64 = 2.236_067_977_499_79;

/// Cells `[kδ, (k+1)δ)` on the line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSet1D {
    pub scale: f64,
    pub cells: Vec<i64>,
}

impl CellSet1D {
    pub fn new(scale: f64, mut cells: Vec<i64>) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Argument(format!("cell scale {scale} is outside (0, 1]")));
        }
        cells.sort_unstable();
        cells.dedup();
        Ok(CellSet1D { scale, cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// The cover as disjoint sorted intervals, adjacent cells merged.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(i64, i64)> = vec![];
        for &k in &self.cells {
            match out.last_mut() {
                Some(last) if last.1 == k => last.1 = k + 1,
                _ => out.push((k, k + 1)),
            }
        }
        out.into_iter().map(|(a, b)| (a as f64 * self.scale, b as f64 * self.scale)).collect()
    }
}

/// Cells `[iδ, (i+1)δ) × [jδ, (j+1)δ)` in the plane.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSet2D {
    pub scale: f64,
    pub cells: Vec<(i64, i64)>,
}

impl CellSet2D {
    pub fn new(scale: f64, mut cells: Vec<(i64, i64)>) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Argument(format!("cell scale {scale} is outside (0, 1]")));
        }
        cells.sort_unstable();
        cells.dedup();
        Ok(CellSet2D { scale, cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Index range of the `ε`-cells meeting `[lo, hi)`.
pub fn cell_range(lo: f64, hi: f64, eps: f64) -> (i64, i64) {
    let a = (lo / eps + CELL_SLACK).floor() as i64;
    let b = (hi / eps - CELL_SLACK).ceil() as i64;
    (a, b.max(a + 1))
}

/// Number of `ε`-cells meeting a union of sorted disjoint intervals.
fn count_cells(intervals: &[(f64, f64)], eps: f64) -> u64 {
    let mut total = 0u64;
    let mut last_end = i64::MIN;
    for &(lo, hi) in intervals {
        let (a, b) = cell_range(lo, hi, eps);
        let a = a.max(last_end);
        if b > a {
            total += (b - a) as u64;
            last_end = b;
        }
    }
    total
}

fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Left endpoints, in units of `p^-n`, of the depth-`n` cylinders of the
/// base-`p` Cantor set with the given digits.
pub fn cantor_cells(p: u32, digits: &[u32], n: u32) -> Result<CellSet1D> {
    if p < 2 {
        return Err(Error::Argument(format!("base {p} must be at least 2")));
    }
    if digits.is_empty() {
        return Err(Error::Argument("digit set is empty".into()));
    }
    if let Some(d) = digits.iter().find(|&&d| d >= p) {
        return Err(Error::Argument(format!("digit {d} is not below the base {p}")));
    }
    let mut ds = digits.to_vec();
    ds.sort_unstable();
    ds.dedup();
    let count = (ds.len() as u128).checked_pow(n).unwrap_or(u128::MAX);
    let cap = atom_capacity() as u128;
    if count > cap {
        return Err(Error::Capacity { what: "Cantor cells".into(), needed: count, cap });
    }
    let scale = (p as f64).powi(-(n as i32));
    if (p as f64).powi(n as i32) >= 2f64.powi(62) {
        return Err(Error::Range(format!("{p}^{n} does not fit the cell index type")));
    }
    let mut cells = vec![0i64];
    for _ in 0..n {
        cells = cells.iter().flat_map(|&c| ds.iter().map(move |&d| c * p as i64 + d as i64)).collect();
    }
    CellSet1D::new(scale, cells)
}

/// Covering number at scale `ε` of `cover(A) ∩ (t cover(B) + u)`.
pub fn intersect_affine(a: &CellSet1D, b: &CellSet1D, t: f64, u: f64, eps: f64) -> Result<u64> {
    if !(eps > 0.0) || !t.is_finite() || !u.is_finite() {
        return Err(Error::Argument("need eps > 0 and finite t, u".into()));
    }
    if a.scale > eps * (1.0 + CELL_SLACK) || b.scale > eps * (1.0 + CELL_SLACK) {
        return Err(Error::Argument(format!("cell scales {} and {} must not exceed eps = {eps}", a.scale, b.scale)));
    }
    let ia = a.intervals();
    let mut ib: Vec<(f64, f64)> = b
        .intervals()
        .into_iter()
        .map(|(lo, hi)| {
            let (x, y) = (t * lo + u, t * hi + u);
            (x.min(y), x.max(y))
        })
        .collect();
    ib.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut both = vec![];
    let (mut i, mut j) = (0, 0);
    while i < ia.len() && j < ib.len() {
        let lo = ia[i].0.max(ib[j].0);
        let hi = ia[i].1.min(ib[j].1);
        if lo < hi {
            both.push((lo, hi));
        }
        if ia[i].1 < ib[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(count_cells(&both, eps))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub unstable: bool,
    /// Number of finest scales entering the fit.
    pub used: usize,
}

/// Slope of `log N` against `log(1/ε)` over the finest half of the scales
/// (at least three).
pub fn exponent_fit(counts: &[(f64, u64)]) -> Result<ExponentFit> {
    if counts.len() < 3 {
        return Err(Error::Data(format!("exponent fit needs at least 3 scales, got {}", counts.len())));
    }
    if counts.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::Data("eps must be strictly decreasing".into()));
    }
    if counts.iter().any(|c| c.1 == 0 || !(c.0 > 0.0)) {
        return Err(Error::Data("counts must be positive at positive eps".into()));
    }
    let used = counts.len().div_ceil(2).max(3);
    let tail = &counts[counts.len() - used..];
    let xs: Vec<f64> = tail.iter().map(|c| -c.0.log2()).collect();
    let ys: Vec<f64> = tail.iter().map(|c| (c.1 as f64).log2()).collect();
    let f = linear_fit(&xs, &ys).ok_or_else(|| Error::Data("degenerate scale grid".into()))?;
    Ok(ExponentFit { slope: f.slope, intercept: f.intercept, r2: f.r2, unstable: f.r2 < STABLE_R2, used })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntersectionRow {
    pub depth: u32,
    pub eps: f64,
    pub count: u64,
    /// `log N / log(1/ε)`.
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntersectionReport {
    pub t: f64,
    pub u: f64,
    pub rows: Vec<IntersectionRow>,
    pub fit: Option<ExponentFit>,
    /// `max(dim A + dim B - 1, 0)` for the two Cantor sets.
    pub bound: f64,
    pub non_increasing: bool,
}

/// Intersects the depth-`n` cover of a base-`p` Cantor set with an affine
/// copy of itself at `ε = p^-n`, for every depth in the range.
pub fn cantor_intersection_profile(
    p: u32,
    digits: &[u32],
    t: f64,
    u: f64,
    depths: std::ops::RangeInclusive<u32>,
) -> Result<IntersectionReport> {
    let mut rows = vec![];
    for n in depths {
        let c = cantor_cells(p, digits, n)?;
        let count = intersect_affine(&c, &c, t, u, c.scale)?;
        let exponent = if count == 0 { 0.0 } else { (count as f64).ln() / -c.scale.ln() };
        rows.push(IntersectionRow { depth: n, eps: c.scale, count, exponent });
    }
    let pairs: Vec<(f64, u64)> = rows.iter().map(|r| (r.eps, r.count)).collect();
    let fit = exponent_fit(&pairs).ok();
    let dim = (digits.len() as f64).ln() / (p as f64).ln();
    let non_increasing = rows.windows(2).all(|w| w[1].exponent <= w[0].exponent + 1e-12);
    Ok(IntersectionReport { t, u, rows, fit, bound: (2.0 * dim - 1.0).max(0.0), non_increasing })
}

/// Box counts of `cover(A) + cover(B)` over an `ε` grid, with the fitted
/// exponent.
pub fn sumset_dimension(a: &CellSet1D, b: &CellSet1D, eps_grid: &[f64]) -> Result<(Vec<(f64, u64)>, ExponentFit)> {
    let pairs = a.len() as u128 * b.len() as u128;
    let cap = atom_capacity() as u128;
    if pairs > cap {
        return Err(Error::Capacity { what: "sumset cell pairs".into(), needed: pairs, cap });
    }
    let coarse = a.scale.max(b.scale);
    if let Some(e) = eps_grid.iter().find(|&&e| e < coarse * (1.0 - CELL_SLACK)) {
        return Err(Error::Argument(format!("eps = {e} is finer than the cell scale {coarse}")));
    }
    let ia = a.intervals();
    let ib = b.intervals();
    let sums = merge_intervals(ia.iter().flat_map(|x| ib.iter().map(move |y| (x.0 + y.0, x.1 + y.1))).collect());
    let counts: Vec<(f64, u64)> = eps_grid.iter().map(|&e| (e, count_cells(&sums, e))).collect();
    let fit = exponent_fit(&counts)?;
    Ok((counts, fit))
}

fn rotate(v: (f64, f64), (c, s): (f64, f64)) -> (f64, f64) {
    (c * v.0 - s * v.1, s * v.0 + c * v.1)
}

/// Depth-`n` cover of the attractor of `x ↦ λR_α x + λt_i`.
///
/// Each cylinder is the image of a bounding region of the attractor: its
/// bounding box when `α = 0`, otherwise the invariant disk around the
/// origin. Cells have side `λ^n`.
pub fn planar_attractor(lambda: f64, alpha: f64, translations: &[(f64, f64)], n: u32) -> Result<CellSet2D> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("lambda = {lambda} must lie in (0, 1)")));
    }
    if translations.is_empty() {
        return Err(Error::Argument("no translations".into()));
    }
    let delta = lambda.powi(n as i32);
    if delta < RESOLUTION_FLOOR {
        return Err(Error::Range(format!("lambda^n = {delta:e} is below the resolution floor 2^-40")));
    }
    let count = (translations.len() as u128).checked_pow(n).unwrap_or(u128::MAX);
    let cap = atom_capacity() as u128;
    if count > cap {
        return Err(Error::Capacity { what: "planar cylinders".into(), needed: count, cap });
    }
    let ((x0, x1), (y0, y1)) = if alpha == 0.0 {
        let r = lambda / (1.0 - lambda);
        let xs = translations.iter().map(|t| t.0);
        let ys = translations.iter().map(|t| t.1);
        (
            (r * xs.clone().fold(f64::INFINITY, f64::min), r * xs.fold(f64::NEG_INFINITY, f64::max)),
            (r * ys.clone().fold(f64::INFINITY, f64::min), r * ys.fold(f64::NEG_INFINITY, f64::max)),
        )
    } else {
        let r = lambda * translations.iter().map(|t| t.0.hypot(t.1)).fold(0.0, f64::max) / (1.0 - lambda);
        ((-r, r), (-r, r))
    };
    let anchors = planar_anchors(lambda, alpha, translations, n);
    let mut cells = vec![];
    for p in anchors {
        let (ia, ib) = cell_range(p.0 + delta * x0, p.0 + delta * x1, delta);
        let (ja, jb) = cell_range(p.1 + delta * y0, p.1 + delta * y1, delta);
        for i in ia..ib {
            for j in ja..jb {
                cells.push((i, j));
            }
        }
    }
    CellSet2D::new(delta.min(1.0), cells)
}

/// Anchors `p_u = Σ_{i=1}^{n} λ^i R^{i-1} t_{u_i}` of the depth-`n`
/// cylinders, in lexicographic word order.
fn planar_anchors(lambda: f64, alpha: f64, translations: &[(f64, f64)], n: u32) -> Vec<(f64, f64)> {
    let rot = (alpha.cos(), alpha.sin());
    let mut anchors = vec![(0.0f64, 0.0f64)];
    let mut lin = (lambda, 0.0);
    for _ in 0..n {
        let mut next = Vec::with_capacity(anchors.len() * translations.len());
        for a in &anchors {
            for t in translations {
                let v = rotate(*t, lin);
                next.push((a.0 + v.0, a.1 + v.1));
            }
        }
        anchors = next;
        lin = rotate((lin.0 * lambda, lin.1 * lambda), rot);
    }
    anchors
}

/// Depth-`n` approximation of the self-similar measure with weights `p_i`:
/// mass `Π p_{u_i}` at each cylinder anchor. `None` means uniform weights.
pub fn planar_attractor_atoms(
    lambda: f64,
    alpha: f64,
    translations: &[(f64, f64)],
    weights: Option<&[f64]>,
    n: u32,
) -> Result<Vec<((f64, f64), f64)>> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("lambda = {lambda} must lie in (0, 1)")));
    }
    if translations.is_empty() {
        return Err(Error::Argument("no translations".into()));
    }
    let k = translations.len();
    let uniform = vec![1.0 / k as f64; k];
    let w = weights.unwrap_or(&uniform);
    if w.len() != k || w.iter().any(|&x| !(x > 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::Argument("weights must be positive, one per translation, summing to 1".into()));
    }
    let count = (k as u128).checked_pow(n).unwrap_or(u128::MAX);
    let cap = atom_capacity() as u128;
    if count > cap {
        return Err(Error::Capacity { what: "planar cylinders".into(), needed: count, cap });
    }
    let mut masses = vec![1.0f64];
    for _ in 0..n {
        masses = masses.iter().flat_map(|m| w.iter().map(move |p| m * p)).collect();
    }
    Ok(planar_anchors(lambda, alpha, translations, n).into_iter().zip(masses).collect())
}

fn unit(d: (f64, f64)) -> Result<(f64, f64)> {
    let r = d.0.hypot(d.1);
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Argument("direction must be a nonzero finite vector".into()));
    }
    Ok((d.0 / r, d.1 / r))
}

/// `ε`-cells of the grid that contain the center of a cell meeting the
/// closed `ε`-neighbourhood of the line `{x : ⟨x, n⟩ = offset}`, where `n`
/// is the unit normal `(-d_y, d_x)`.
pub fn slice_count(cells: &CellSet2D, direction: (f64, f64), offset: f64, eps: f64) -> Result<u64> {
    if eps < cells.scale * (1.0 - CELL_SLACK) {
        return Err(Error::Argument(format!("eps = {eps} is finer than the cell scale {}", cells.scale)));
    }
    let d = unit(direction)?;
    let nrm = (-d.1, d.0);
    let h = cells.scale;
    let reach = 0.5 * h * (nrm.0.abs() + nrm.1.abs());
    let mut hit: Vec<(i64, i64)> = cells
        .cells
        .iter()
        .filter_map(|&(i, j)| {
            let c = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let dist = (c.0 * nrm.0 + c.1 * nrm.1 - offset).abs() - reach;
            (dist <= eps * (1.0 + CELL_SLACK)).then(|| ((c.0 / eps).floor() as i64, (c.1 / eps).floor() as i64))
        })
        .collect();
    hit.sort_unstable();
    hit.dedup();
    Ok(hit.len() as u64)
}

/// Image of a planar atomic measure under `y ↦ ⟨direction, y⟩`, with
/// coinciding atoms merged. `direction = (1, t)` gives `Π_t`.
pub fn project_measure(atoms: &[((f64, f64), f64)], direction: (f64, f64)) -> Result<AtomicMeasure> {
    if !(direction.0 != 0.0 || direction.1 != 0.0) || !direction.0.is_finite() || !direction.1.is_finite() {
        return Err(Error::Argument("direction must be a nonzero finite vector".into()));
    }
    AtomicMeasure::new(atoms.iter().map(|&((x, y), m)| (direction.0 * x + direction.1 * y, m)).collect())
}

/// Atoms of `μ₁ × μ₂`.
pub fn product_atoms(a: &AtomicMeasure, b: &AtomicMeasure) -> Vec<((f64, f64), f64)> {
    a.atoms().iter().flat_map(|&(x, p)| b.atoms().iter().map(move |&(y, q)| ((x, y), p * q))).collect()
}
