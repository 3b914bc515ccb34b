//! Finitely supported measures on the line and their discretizations on the
//! dyadic grid `2^-m Z` (line) or `2^-m Z / Z` (circle).

use std::cmp::Ordering;
use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::QuadNum;

/// Float atoms closer than this are merged into one.
pub const MERGE_TOL: f64 = 1.0 / (1u64 << 48) as f64;

/// Largest scale for sparse storage.
pub const MAX_SCALE_SPARSE: u32 = 60;
/// Largest scale at which a dense vector over the whole circle is allowed.
pub const MAX_SCALE_DENSE: u32 = 34;

const DIRECT_CONV_LIMIT: u128 = 1 << 22;
const MAX_FFT_LEN: usize = 1 << 26;
const MAX_DENSE_SPAN: u64 = 1 << 28;
const FFT_CLAMP: f64 = 1e-14;

pub const DEFAULT_CAPACITY: u64 = 1 << 24;

/// Atom-count cap, overridable through `FRACTAL_LQ_CAPACITY`.
pub fn atom_capacity() -> u64 {
    std::env::var("FRACTAL_LQ_CAPACITY")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&c| c > 0)
        .unwrap_or(DEFAULT_CAPACITY)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Circle,
    Line,
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Geometry::Circle => "circle",
            Geometry::Line => "line",
        })
    }
}

/// Coordinates that atoms can live at: plain floats or exact field elements.
pub trait Location: Clone + fmt::Debug + Send + Sync + 'static {
    fn origin() -> Self;
    fn unit() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn cmp_loc(&self, o: &Self) -> Ordering;
    /// Whether two locations are the same point for merging purposes.
    fn coincides(&self, o: &Self) -> bool;
    fn to_f64(&self) -> f64;
}

impl Location for f64 {
    fn origin() -> Self {
        0.0
    }
    fn unit() -> Self {
        1.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn cmp_loc(&self, o: &Self) -> Ordering {
        self.total_cmp(o)
    }
    fn coincides(&self, o: &Self) -> bool {
        (self - o).abs() <= MERGE_TOL
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Location for QuadNum {
    fn origin() -> Self {
        QuadNum::zero()
    }
    fn unit() -> Self {
        QuadNum::one()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn cmp_loc(&self, o: &Self) -> Ordering {
        self.cmp(o)
    }
    fn coincides(&self, o: &Self) -> bool {
        self == o
    }
    fn to_f64(&self) -> f64 {
        QuadNum::to_f64(self)
    }
}

/// Probability-like measure with finitely many atoms, kept sorted and merged.
///
/// `merged` counts atoms absorbed into a coincident neighbour over the whole
/// construction history, which is how exact overlaps are reported.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure<L: Location = f64> {
    atoms: Vec<(L, f64)>,
    total_mass: f64,
    merged: u64,
}

impl<L: Location> AtomicMeasure<L> {
    pub fn dirac(at: L) -> Self {
        AtomicMeasure { atoms: vec![(at, 1.0)], total_mass: 1.0, merged: 0 }
    }

    pub fn new(atoms: Vec<(L, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Degenerate("measure with no atoms".into()));
        }
        for (_, m) in &atoms {
            if !(m.is_finite() && *m > 0.0) {
                return Err(Error::Argument(format!("atom mass {m} is not strictly positive")));
            }
        }
        Ok(Self::from_unsorted(atoms, 0))
    }

    /// Uniform probability on the given locations.
    pub fn uniform(locs: Vec<L>) -> Result<Self> {
        let w = 1.0 / locs.len() as f64;
        Self::new(locs.into_iter().map(|l| (l, w)).collect())
    }

    fn from_unsorted(mut atoms: Vec<(L, f64)>, merged_before: u64) -> Self {
        // The standard stable sort detects pre-sorted runs, which is the
        // common case for shifted copies of a sorted measure.
        atoms.sort_by(|a, b| a.0.cmp_loc(&b.0));
        let before = atoms.len();
        let mut out: Vec<(L, f64)> = Vec::with_capacity(before);
        for (loc, m) in atoms {
            match out.last_mut() {
                Some(last) if last.0.coincides(&loc) => last.1 += m,
                _ => out.push((loc, m)),
            }
        }
        out.shrink_to_fit();
        let merged = merged_before + (before - out.len()) as u64;
        let total_mass = out.iter().map(|a| a.1).sum();
        AtomicMeasure { atoms: out, total_mass, merged }
    }

    pub fn atoms(&self) -> &[(L, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Number of coincidences merged while building this measure.
    pub fn merged(&self) -> u64 {
        self.merged
    }

    pub fn locations_f64(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.0.to_f64()).collect()
    }

    pub fn to_float(&self) -> AtomicMeasure<f64> {
        let atoms = self.atoms.iter().map(|(l, m)| (l.to_f64(), *m)).collect();
        let mut out = AtomicMeasure::from_unsorted(atoms, self.merged);
        out.total_mass = self.total_mass;
        out
    }

    /// Push-forward under `x -> scale * x + offset`.
    pub fn affine_image(&self, scale: &L, offset: &L) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|(l, m)| (l.mul(scale).add(offset), *m))
            .collect();
        Self::from_unsorted(atoms, self.merged)
    }

    /// Convolution, refusing to materialise more than `cap` product atoms.
    pub fn convolve_capped(&self, other: &Self, cap: u64) -> Result<Self> {
        let needed = self.len() as u128 * other.len() as u128;
        if needed > cap as u128 {
            return Err(Error::Capacity { what: "atom count".into(), needed, cap: cap as u128 });
        }
        let (big, small) = if self.len() >= other.len() { (self, other) } else { (other, self) };
        let mut atoms = Vec::with_capacity(needed as usize);
        for (s, ms) in &small.atoms {
            atoms.extend(big.atoms.iter().map(|(b, mb)| (b.add(s), mb * ms)));
        }
        Ok(Self::from_unsorted(atoms, self.merged + other.merged))
    }

    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.convolve_capped(other, atom_capacity())
    }

    /// Projects onto another coordinate type, keeping masses.
    pub fn map_locations<M: Location>(&self, f: impl Fn(&L) -> M) -> AtomicMeasure<M> {
        let atoms = self.atoms.iter().map(|(l, m)| (f(l), *m)).collect();
        AtomicMeasure::from_unsorted(atoms, self.merged)
    }

    pub fn min_location(&self) -> &L {
        &self.atoms[0].0
    }

    pub fn max_location(&self) -> &L {
        &self.atoms[self.atoms.len() - 1].0
    }
}

/// Free-function form of [`AtomicMeasure::affine_image`] on float atoms.
pub fn affine_image(src: &AtomicMeasure, scale: f64, offset: f64) -> AtomicMeasure {
    src.affine_image(&scale, &offset)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomicJson {
    atoms: Vec<(f64, f64)>,
}

impl Serialize for AtomicMeasure<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AtomicJson { atoms: self.atoms.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for AtomicMeasure<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = AtomicJson::deserialize(d)?;
        AtomicMeasure::new(j.atoms).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Sparse(Vec<(i64, f64)>),
    Dense { offset: i64, masses: Vec<f64> },
}

/// A measure on the grid of scale `2^-m`, stored sparse or dense depending
/// on occupancy.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicMeasure {
    geometry: Geometry,
    scale_m: u32,
    storage: Storage,
}

fn check_scale(m: u32) -> Result<()> {
    if m > MAX_SCALE_SPARSE {
        return Err(Error::Argument(format!("scale m = {m} exceeds the cap of {MAX_SCALE_SPARSE}")));
    }
    Ok(())
}

impl DyadicMeasure {
    /// Builds from arbitrary `(index, mass)` pairs: duplicates add up, circle
    /// indices are reduced, zero masses are dropped.
    pub fn from_entries(geometry: Geometry, scale_m: u32, entries: Vec<(i64, f64)>) -> Result<Self> {
        check_scale(scale_m)?;
        for &(_, m) in &entries {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::Argument(format!("grid mass {m} is negative or not finite")));
            }
        }
        Ok(Self::from_raw(geometry, scale_m, entries))
    }

    fn from_raw(geometry: Geometry, scale_m: u32, mut entries: Vec<(i64, f64)>) -> Self {
        if geometry == Geometry::Circle {
            let mask = (1i64 << scale_m) - 1;
            for e in entries.iter_mut() {
                e.0 &= mask;
            }
        }
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(i64, f64)> = Vec::with_capacity(entries.len());
        for (k, m) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += m,
                _ => merged.push((k, m)),
            }
        }
        merged.retain(|e| e.1 > 0.0);
        Self::pack(geometry, scale_m, merged)
    }

    fn pack(geometry: Geometry, scale_m: u32, sorted: Vec<(i64, f64)>) -> Self {
        let storage = match (sorted.first(), sorted.last()) {
            (Some(&(lo, _)), Some(&(hi, _))) => {
                let (offset, span) = match geometry {
                    Geometry::Circle => (0, 1u64 << scale_m.min(63)),
                    Geometry::Line => (lo, (hi - lo) as u64 + 1),
                };
                let dense_ok = geometry == Geometry::Line || scale_m <= MAX_SCALE_DENSE;
                if dense_ok && span <= MAX_DENSE_SPAN && sorted.len() as u64 * 8 > span {
                    let mut masses = vec![0.0; span as usize];
                    for (k, m) in sorted {
                        masses[(k - offset) as usize] = m;
                    }
                    Storage::Dense { offset, masses }
                } else {
                    Storage::Sparse(sorted)
                }
            }
            _ => Storage::Sparse(sorted),
        };
        DyadicMeasure { geometry, scale_m, storage }
    }

    fn from_dense(geometry: Geometry, scale_m: u32, offset: i64, masses: Vec<f64>) -> Self {
        let entries = masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, &m)| (offset + i as i64, m))
            .collect();
        Self::pack(geometry, scale_m, entries)
    }

    pub fn dirac(geometry: Geometry, scale_m: u32, index: i64) -> Result<Self> {
        Self::from_entries(geometry, scale_m, vec![(index, 1.0)])
    }

    /// Uniform probability on all `2^m` cells of `[0, 1)`.
    pub fn uniform(geometry: Geometry, scale_m: u32) -> Result<Self> {
        if scale_m > MAX_SCALE_DENSE {
            return Err(Error::Argument(format!("uniform measure at m = {scale_m} is too large")));
        }
        let n = 1usize << scale_m;
        Ok(Self::from_dense(geometry, scale_m, 0, vec![1.0 / n as f64; n]))
    }

    /// Uniform probability on the given grid indices.
    pub fn uniform_on(geometry: Geometry, scale_m: u32, indices: &[i64]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Degenerate("uniform measure on an empty set".into()));
        }
        let w = 1.0 / indices.len() as f64;
        Self::from_entries(geometry, scale_m, indices.iter().map(|&k| (k, w)).collect())
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn scale_m(&self) -> u32 {
        self.scale_m
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense { .. })
    }

    /// Nonzero entries in increasing index order.
    pub fn entries(&self) -> Box<dyn Iterator<Item = (i64, f64)> + '_> {
        match &self.storage {
            Storage::Sparse(v) => Box::new(v.iter().copied()),
            Storage::Dense { offset, masses } => Box::new(
                masses
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m > 0.0)
                    .map(move |(i, &m)| (offset + i as i64, m)),
            ),
        }
    }

    pub fn to_entries(&self) -> Vec<(i64, f64)> {
        self.entries().collect()
    }

    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Sparse(v) => v.len(),
            Storage::Dense { masses, .. } => masses.iter().filter(|&&m| m > 0.0).count(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.entries().map(|e| e.1).sum()
    }

    pub fn mass_at(&self, index: i64) -> f64 {
        let k = match self.geometry {
            Geometry::Circle => index.rem_euclid(1i64 << self.scale_m),
            Geometry::Line => index,
        };
        match &self.storage {
            Storage::Sparse(v) => v.binary_search_by_key(&k, |e| e.0).map(|i| v[i].1).unwrap_or(0.0),
            Storage::Dense { offset, masses } => {
                let i = k - offset;
                if i < 0 || i as usize >= masses.len() {
                    0.0
                } else {
                    masses[i as usize]
                }
            }
        }
    }

    pub fn max_mass(&self) -> f64 {
        self.entries().map(|e| e.1).fold(0.0, f64::max)
    }

    /// Support as sorted indices.
    pub fn support(&self) -> Vec<i64> {
        self.entries().map(|e| e.0).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DyadicJson {
    geometry: Geometry,
    scale_m: u32,
    entries: Vec<(i64, f64)>,
}

impl Serialize for DyadicMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DyadicJson { geometry: self.geometry, scale_m: self.scale_m, entries: self.to_entries() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DyadicMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = DyadicJson::deserialize(d)?;
        DyadicMeasure::from_entries(j.geometry, j.scale_m, j.entries).map_err(serde::de::Error::custom)
    }
}

fn grid_index(x: f64, m: u32) -> Result<i64> {
    let y = (x * (m as f64).exp2()).floor();
    if !y.is_finite() || y.abs() >= 9.0e18 {
        return Err(Error::Range(format!("location {x} does not fit the grid at scale {m}")));
    }
    Ok(y as i64)
}

/// Mass of every atom goes to the cell `[j 2^-m, (j+1) 2^-m)` containing it.
/// On the circle locations are first reduced mod 1.
pub fn discretize<L: Location>(src: &AtomicMeasure<L>, m: u32, geometry: Geometry) -> Result<DyadicMeasure> {
    check_scale(m)?;
    let size = 1i64 << m;
    let mut entries = Vec::with_capacity(src.len());
    for (loc, mass) in src.atoms() {
        let x = loc.to_f64();
        let k = match geometry {
            Geometry::Circle => {
                let frac = x - x.floor();
                grid_index(frac, m)?.clamp(0, size - 1)
            }
            Geometry::Line => grid_index(x, m)?,
        };
        entries.push((k, *mass));
    }
    Ok(DyadicMeasure::from_raw(geometry, m, entries))
}

/// Line discretization after mapping the declared window `[lo, hi]` onto
/// `[0, 1]`; the right endpoint lands in the last cell.
pub fn discretize_in<L: Location>(src: &AtomicMeasure<L>, m: u32, window: (f64, f64)) -> Result<DyadicMeasure> {
    check_scale(m)?;
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::Argument(format!("empty window [{lo}, {hi}]")));
    }
    let size = 1i64 << m;
    let scale = 1.0 / (hi - lo);
    let mut entries = Vec::with_capacity(src.len());
    for (loc, mass) in src.atoms() {
        let x = loc.to_f64();
        if x < lo || x > hi {
            return Err(Error::Range(format!("atom at {x} lies outside the window [{lo}, {hi}]")));
        }
        let k = grid_index((x - lo) * scale, m)?.clamp(0, size - 1);
        entries.push((k, *mass));
    }
    Ok(DyadicMeasure::from_raw(Geometry::Line, m, entries))
}

/// `Σ_k μ(k)^q`, or the largest mass for `q = ∞`.
pub fn lq_norm(dm: &DyadicMeasure, q: f64) -> Result<f64> {
    if q.is_nan() || q <= 1.0 {
        return Err(Error::Domain(format!("L^q norm needs q > 1, got {q}")));
    }
    if q.is_infinite() {
        return Ok(dm.max_mass());
    }
    Ok(dm.entries().map(|(_, m)| m.powf(q)).sum())
}

pub fn convolve(a: &DyadicMeasure, b: &DyadicMeasure, geometry: Geometry) -> Result<DyadicMeasure> {
    if a.scale_m != b.scale_m {
        return Err(Error::Argument(format!(
            "scale mismatch: {} vs {}",
            a.scale_m, b.scale_m
        )));
    }
    if a.geometry != geometry || b.geometry != geometry {
        return Err(Error::Argument(format!(
            "geometry mismatch: convolving {} and {} measures in {} geometry",
            a.geometry, b.geometry, geometry
        )));
    }
    let m = a.scale_m;
    let ea = a.to_entries();
    let eb = b.to_entries();
    if ea.is_empty() || eb.is_empty() {
        return Ok(DyadicMeasure::from_raw(geometry, m, vec![]));
    }
    let work = ea.len() as u128 * eb.len() as u128;
    let fft_len = match geometry {
        Geometry::Circle if m <= MAX_SCALE_DENSE => Some(1usize << m),
        Geometry::Circle => None,
        Geometry::Line => {
            let span = (ea[ea.len() - 1].0 - ea[0].0) as u128 + (eb[eb.len() - 1].0 - eb[0].0) as u128 + 1;
            Some(span.next_power_of_two() as usize)
        }
    };
    match fft_len {
        Some(n) if work > DIRECT_CONV_LIMIT && n <= MAX_FFT_LEN => Ok(convolve_fft(&ea, &eb, geometry, m, n)),
        _ => Ok(convolve_direct(&ea, &eb, geometry, m)),
    }
}

fn convolve_direct(ea: &[(i64, f64)], eb: &[(i64, f64)], geometry: Geometry, m: u32) -> DyadicMeasure {
    let lo = ea[0].0 + eb[0].0;
    let hi = ea[ea.len() - 1].0 + eb[eb.len() - 1].0;
    let span = (hi - lo) as u64 + 1;
    let work = ea.len() as u64 * eb.len() as u64;
    if span <= MAX_DENSE_SPAN && span <= 4 * work.max(1024) {
        let mask = (1i64 << m.min(62)) - 1;
        let (offset, len) = match geometry {
            Geometry::Circle if m <= MAX_SCALE_DENSE && (1u64 << m) <= span => (0, 1usize << m),
            _ => (lo, span as usize),
        };
        let mut acc = vec![0.0; len];
        let wrap = len == (1usize << m.min(62)) && geometry == Geometry::Circle && offset == 0;
        for &(i, mi) in ea {
            for &(j, mj) in eb {
                let k = if wrap { (i + j) & mask } else { i + j - offset };
                acc[k as usize] += mi * mj;
            }
        }
        if geometry == Geometry::Circle && !wrap && hi >> m.min(62) != 0 {
            let out = acc.iter().enumerate().filter(|e| *e.1 > 0.0).map(|(i, &w)| (offset + i as i64, w)).collect();
            return DyadicMeasure::from_raw(geometry, m, out);
        }
        return DyadicMeasure::from_dense(geometry, m, offset, acc);
    }
    let mut out = Vec::with_capacity(work as usize);
    for &(i, mi) in ea {
        for &(j, mj) in eb {
            out.push((i + j, mi * mj));
        }
    }
    DyadicMeasure::from_raw(geometry, m, out)
}

fn convolve_fft(ea: &[(i64, f64)], eb: &[(i64, f64)], geometry: Geometry, m: u32, n: usize) -> DyadicMeasure {
    let (oa, ob) = match geometry {
        Geometry::Circle => (0, 0),
        Geometry::Line => (ea[0].0, eb[0].0),
    };
    let mut fa = vec![Complex::new(0.0, 0.0); n];
    let mut fb = vec![Complex::new(0.0, 0.0); n];
    for &(i, w) in ea {
        fa[(i - oa) as usize].re += w;
    }
    for &(j, w) in eb {
        fb[(j - ob) as usize].re += w;
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut fa);
    planner.plan_fft_forward(n).process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    planner.plan_fft_inverse(n).process(&mut fa);
    let mass: f64 = ea.iter().map(|e| e.1).sum::<f64>() * eb.iter().map(|e| e.1).sum::<f64>();
    let scale = 1.0 / n as f64;
    let mut out: Vec<f64> = fa
        .iter()
        .map(|c| {
            let v = c.re * scale;
            if v < FFT_CLAMP * mass {
                0.0
            } else {
                v
            }
        })
        .collect();
    let got: f64 = out.iter().sum();
    if got > 0.0 {
        let r = mass / got;
        out.iter_mut().for_each(|v| *v *= r);
    }
    DyadicMeasure::from_dense(geometry, m, oa + ob, out)
}

/// Normalised restriction to the dyadic interval `[j 2^-s, (j+1) 2^-s)`.
pub fn restrict_normalize(dm: &DyadicMeasure, s: u32, j: i64) -> Result<DyadicMeasure> {
    if s > dm.scale_m {
        return Err(Error::Argument(format!(
            "interval scale {s} is finer than the measure scale {}",
            dm.scale_m
        )));
    }
    let shift = dm.scale_m - s;
    let kept: Vec<(i64, f64)> = dm.entries().filter(|&(k, _)| k >> shift == j).collect();
    let mass: f64 = kept.iter().map(|e| e.1).sum();
    if mass <= 0.0 {
        return Err(Error::EmptyRestriction);
    }
    let entries = kept.into_iter().map(|(k, w)| (k, w / mass)).collect();
    Ok(DyadicMeasure::pack(dm.geometry, dm.scale_m, entries))
}

/// Re-bins onto the coarser grid of scale `m_coarse`.
pub fn coarsen(dm: &DyadicMeasure, m_coarse: u32) -> Result<DyadicMeasure> {
    if m_coarse > dm.scale_m {
        return Err(Error::Argument(format!(
            "cannot coarsen scale {} to the finer scale {m_coarse}",
            dm.scale_m
        )));
    }
    let shift = dm.scale_m - m_coarse;
    let mut out: Vec<(i64, f64)> = Vec::new();
    for (k, w) in dm.entries() {
        let c = k >> shift;
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += w,
            _ => out.push((c, w)),
        }
    }
    Ok(DyadicMeasure::pack(dm.geometry, m_coarse, out))
}

/// Mass per cell for a sorted float measure, without building the grid.
/// Used where the discretization would be large but only its L^q sum is
/// needed.
pub fn lq_sum_streaming(src: &AtomicMeasure, m: u32, window: (f64, f64), q: f64) -> Result<f64> {
    if q.is_nan() || q <= 1.0 {
        return Err(Error::Domain(format!("L^q norm needs q > 1, got {q}")));
    }
    check_scale(m)?;
    let (lo, hi) = window;
    let size = 1i64 << m;
    let scale = 1.0 / (hi - lo);
    let mut sum = 0.0;
    let mut cur: Option<(i64, f64)> = None;
    let mut max_cell = 0.0f64;
    for &(x, w) in src.atoms() {
        if x < lo || x > hi {
            return Err(Error::Range(format!("atom at {x} lies outside the window [{lo}, {hi}]")));
        }
        let k = grid_index((x - lo) * scale, m)?.clamp(0, size - 1);
        match cur {
            Some((c, ref mut acc)) if c == k => *acc += w,
            _ => {
                if let Some((_, acc)) = cur {
                    sum += acc.powf(q);
                    max_cell = max_cell.max(acc);
                }
                cur = Some((k, w));
            }
        }
    }
    if let Some((_, acc)) = cur {
        sum += acc.powf(q);
        max_cell = max_cell.max(acc);
    }
    Ok(if q.is_infinite() { max_cell } else { sum })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn am(atoms: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::new(atoms.to_vec()).unwrap()
    }

    #[test]
    fn circle_convolution_wraps_short_spans() {
        let a = DyadicMeasure::from_entries(Geometry::Circle, 4, vec![(9, 0.5), (10, 0.5)]).unwrap();
        let b = DyadicMeasure::dirac(Geometry::Circle, 4, 9).unwrap();
        let c = convolve(&a, &b, Geometry::Circle).unwrap();
        assert_eq!(c.to_entries(), vec![(2, 0.5), (3, 0.5)]);
    }

    #[test]
    fn discretize_examples() {
        let d = discretize(&AtomicMeasure::dirac(0.0), 5, Geometry::Circle).unwrap();
        assert_eq!(d.to_entries(), vec![(0, 1.0)]);
        let d = discretize(&am(&[(0.0, 0.5), (0.5, 0.5)]), 1, Geometry::Circle).unwrap();
        assert_eq!(d.to_entries(), vec![(0, 0.5), (1, 0.5)]);
        let d = discretize(&am(&[(0.3, 0.25), (0.31, 0.75)]), 3, Geometry::Line).unwrap();
        assert_eq!(d.to_entries(), vec![(2, 1.0)]);
    }

    #[test]
    fn discretize_circle_reduces_and_line_window_checks() {
        let d = discretize(&am(&[(1.25, 1.0)]), 2, Geometry::Circle).unwrap();
        assert_eq!(d.to_entries(), vec![(1, 1.0)]);
        let d = discretize(&am(&[(-0.25, 1.0)]), 2, Geometry::Line).unwrap();
        assert_eq!(d.to_entries(), vec![(-1, 1.0)]);
        assert!(matches!(discretize_in(&am(&[(2.0, 1.0)]), 2, (0.0, 1.0)), Err(Error::Range(_))));
        let d = discretize_in(&am(&[(0.0, 0.5), (1.5, 0.5)]), 2, (0.0, 1.5)).unwrap();
        assert_eq!(d.to_entries(), vec![(0, 0.5), (3, 0.5)]);
    }

    #[test]
    fn lq_norm_examples() {
        let u = DyadicMeasure::uniform(Geometry::Circle, 6).unwrap();
        for q in [1.5f64, 2.0, 4.0] {
            let want = (6.0f64 * (1.0 - q)).exp2();
            assert!((lq_norm(&u, q).unwrap() - want).abs() < 1e-15);
        }
        let one = DyadicMeasure::dirac(Geometry::Line, 4, 3).unwrap();
        assert_eq!(lq_norm(&one, 3.0).unwrap(), 1.0);
        let v = DyadicMeasure::from_entries(Geometry::Circle, 2, vec![(0, 0.5), (1, 0.25), (2, 0.25)]).unwrap();
        assert!((lq_norm(&v, 2.0).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(lq_norm(&v, f64::INFINITY).unwrap(), 0.5);
        assert!(matches!(lq_norm(&v, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn convolve_examples() {
        let half = DyadicMeasure::from_entries(Geometry::Circle, 1, vec![(0, 0.5), (1, 0.5)]).unwrap();
        let c = convolve(&half, &half, Geometry::Circle).unwrap();
        assert_eq!(c.to_entries(), vec![(0, 0.5), (1, 0.5)]);
        let half_l = DyadicMeasure::from_entries(Geometry::Line, 1, vec![(0, 0.5), (1, 0.5)]).unwrap();
        let c = convolve(&half_l, &half_l, Geometry::Line).unwrap();
        assert_eq!(c.to_entries(), vec![(0, 0.25), (1, 0.5), (2, 0.25)]);
        let mu = DyadicMeasure::from_entries(Geometry::Circle, 4, vec![(3, 0.2), (9, 0.5), (15, 0.3)]).unwrap();
        let delta = DyadicMeasure::dirac(Geometry::Circle, 4, 0).unwrap();
        assert_eq!(convolve(&delta, &mu, Geometry::Circle).unwrap().to_entries(), mu.to_entries());
    }

    #[test]
    fn convolve_rejects_mismatches() {
        let a = DyadicMeasure::dirac(Geometry::Circle, 3, 0).unwrap();
        let b = DyadicMeasure::dirac(Geometry::Circle, 4, 0).unwrap();
        assert!(matches!(convolve(&a, &b, Geometry::Circle), Err(Error::Argument(_))));
        let c = DyadicMeasure::dirac(Geometry::Line, 3, 0).unwrap();
        assert!(matches!(convolve(&a, &c, Geometry::Circle), Err(Error::Argument(_))));
    }

    #[test]
    fn fft_path_matches_direct_path() {
        let m = 12;
        let n = 1usize << m;
        let ea: Vec<(i64, f64)> = (0..n as i64).map(|k| (k, 1.0 + (k % 7) as f64)).collect();
        let eb: Vec<(i64, f64)> = (0..n as i64).step_by(2).map(|k| (k, 1.0 + (k % 5) as f64)).collect();
        let za: f64 = ea.iter().map(|e| e.1).sum();
        let zb: f64 = eb.iter().map(|e| e.1).sum();
        let ea: Vec<_> = ea.into_iter().map(|(k, w)| (k, w / za)).collect();
        let eb: Vec<_> = eb.into_iter().map(|(k, w)| (k, w / zb)).collect();
        for g in [Geometry::Circle, Geometry::Line] {
            let fast = convolve_fft(&ea, &eb, g, m, if g == Geometry::Circle { n } else { 2 * n });
            let slow = convolve_direct(&ea, &eb, g, m);
            let (f, s) = (fast.to_entries(), slow.to_entries());
            assert_eq!(f.len(), s.len());
            for (x, y) in f.iter().zip(&s) {
                assert_eq!(x.0, y.0);
                assert!((x.1 - y.1).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn affine_image_examples() {
        let mu = am(&[(0.0, 0.25), (0.7, 0.75)]);
        assert_eq!(affine_image(&mu, 1.0, 0.0), mu);
        let d = affine_image(&AtomicMeasure::dirac(1.0), 1.0 / 3.0, 0.0);
        assert_eq!(d.atoms(), &[(1.0 / 3.0, 1.0)]);
        let sym = am(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(affine_image(&sym, -1.0, 1.0).atoms(), sym.atoms());
    }

    #[test]
    fn atoms_merge_and_count() {
        let mu = am(&[(0.5, 0.25), (0.0, 0.25), (0.5 + 1e-16, 0.5)]);
        assert_eq!(mu.len(), 2);
        assert_eq!(mu.merged(), 1);
        assert_eq!(mu.atoms()[1].1, 0.75);
        let e = AtomicMeasure::new(vec![(QuadNum::from_ratio(1, 3), 0.5), (QuadNum::from_ratio(2, 6), 0.5)]).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.merged(), 1);
        assert!(AtomicMeasure::new(vec![(0.0, 0.0)]).is_err());
    }

    #[test]
    fn convolve_atomic_respects_cap() {
        let mu = am(&[(0.0, 0.5), (1.0, 0.5)]);
        assert!(mu.convolve_capped(&mu, 4).is_ok());
        assert!(matches!(mu.convolve_capped(&mu, 3), Err(Error::Capacity { .. })));
    }

    #[test]
    fn restrict_examples() {
        let u = DyadicMeasure::uniform(Geometry::Circle, 2).unwrap();
        assert_eq!(restrict_normalize(&u, 0, 0).unwrap(), u);
        let r = restrict_normalize(&u, 1, 0).unwrap();
        assert_eq!(r.to_entries(), vec![(0, 0.5), (1, 0.5)]);
        let v = DyadicMeasure::from_entries(Geometry::Circle, 2, vec![(0, 0.1), (2, 0.9)]).unwrap();
        assert_eq!(restrict_normalize(&v, 1, 1).unwrap().to_entries(), vec![(2, 1.0)]);
        let w = DyadicMeasure::from_entries(Geometry::Circle, 2, vec![(0, 1.0)]).unwrap();
        assert_eq!(restrict_normalize(&w, 1, 1), Err(Error::EmptyRestriction));
    }

    #[test]
    fn coarsen_examples() {
        let u = DyadicMeasure::uniform(Geometry::Circle, 2).unwrap();
        assert_eq!(coarsen(&u, 2).unwrap(), u);
        assert_eq!(coarsen(&u, 1).unwrap().to_entries(), vec![(0, 0.5), (1, 0.5)]);
        let v = DyadicMeasure::from_entries(Geometry::Line, 1, vec![(0, 0.25), (1, 0.75)]).unwrap();
        assert_eq!(coarsen(&v, 0).unwrap().to_entries(), vec![(0, 1.0)]);
        assert!(matches!(coarsen(&v, 2), Err(Error::Argument(_))));
    }

    #[test]
    fn storage_switches_with_occupancy() {
        assert!(DyadicMeasure::uniform(Geometry::Circle, 8).unwrap().is_dense());
        let sparse = DyadicMeasure::from_entries(Geometry::Circle, 40, vec![(5, 0.5), (1 << 39, 0.5)]).unwrap();
        assert!(!sparse.is_dense());
        assert_eq!(sparse.mass_at(1 << 39), 0.5);
        assert!(DyadicMeasure::from_entries(Geometry::Circle, 61, vec![]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let v = DyadicMeasure::from_entries(Geometry::Circle, 3, vec![(1, 0.5), (9, 0.5)]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"geometry":"circle","scale_m":3,"entries":[[1,1.0]]}"#);
        let back: DyadicMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        let a = am(&[(0.0, 0.5), (1.0, 0.5)]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"atoms":[[0.0,0.5],[1.0,0.5]]}"#);
        assert_eq!(serde_json::from_str::<AtomicMeasure>(&s).unwrap(), a);
        assert!(serde_json::from_str::<DyadicMeasure>(r#"{"geometry":"circle","scale_m":3,"entries":[],"x":1}"#).is_err());
    }

    #[test]
    fn streaming_sum_matches_grid() {
        let mu = am(&[(0.0, 0.1), (0.2, 0.2), (0.21, 0.3), (0.9, 0.4)]);
        for m in [1, 3, 6] {
            let d = discretize_in(&mu, m, (0.0, 1.0)).unwrap();
            let a = lq_norm(&d, 2.0).unwrap();
            let b = lq_sum_streaming(&mu, m, (0.0, 1.0), 2.0).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }
}
