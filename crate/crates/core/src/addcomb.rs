//! Additive combinatorics on `2^-m` sets: sumsets, doubling, additive
//! energy, the `2^D`-ary branching tree, and the regularization steps
//! (uniform subsets, collapsing, centering) behind the inverse-theorem
//! witness report.
//!
//! Sets are sorted integer index lists at a scale `m`; index `k` stands for
//! the point `k 2^-m`. Every size is an exact integer.

use std::collections::{BTreeSet, HashMap};

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dyadic_measure::{convolve, DyadicMeasure, Geometry, MAX_SCALE_SPARSE};
use crate::error::{Error, Result};

const BITSET_SPAN: u64 = 1 << 28;
const FFT_MAX_LEN: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSet")]
pub struct DyadicSet {
    scale_m: u32,
    indices: Vec<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSet {
    scale_m: u32,
    indices: Vec<i64>,
}

impl TryFrom<RawSet> for DyadicSet {
    type Error = Error;
    fn try_from(r: RawSet) -> Result<Self> {
        DyadicSet::new(r.scale_m, r.indices)
    }
}

impl DyadicSet {
    /// Sorts and deduplicates.
    pub fn new(scale_m: u32, mut indices: Vec<i64>) -> Result<Self> {
        if scale_m > MAX_SCALE_SPARSE {
            return Err(Error::Argument(format!("scale m = {scale_m} exceeds the cap of {MAX_SCALE_SPARSE}")));
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(DyadicSet { scale_m, indices })
    }

    pub fn full(scale_m: u32) -> Result<Self> {
        if scale_m > 30 {
            return Err(Error::Argument(format!("full grid at m = {scale_m} is too large")));
        }
        Self::new(scale_m, (0..1i64 << scale_m).collect())
    }

    pub fn singleton(scale_m: u32, k: i64) -> Result<Self> {
        Self::new(scale_m, vec![k])
    }

    /// Points whose base-`2^D` digits at level `s` lie in `digits[s]`.
    pub fn from_digits(d: u32, digits: &[Vec<u32>]) -> Result<Self> {
        let m = d * digits.len() as u32;
        let mut pts = vec![0i64];
        for (s, ds) in digits.iter().enumerate() {
            if ds.iter().any(|&x| x >= 1 << d) {
                return Err(Error::Argument(format!("digit at level {s} does not fit in base 2^{d}")));
            }
            let shift = m - (s as u32 + 1) * d;
            pts = pts.iter().flat_map(|p| ds.iter().map(move |&x| p + ((x as i64) << shift))).collect();
        }
        Self::new(m, pts)
    }

    pub fn support_of(dm: &DyadicMeasure) -> Self {
        DyadicSet { scale_m: dm.scale_m(), indices: dm.support() }
    }

    pub fn scale_m(&self) -> u32 {
        self.scale_m
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: i64) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// `A + x`, reduced mod `2^m` on the circle.
    pub fn translate(&self, x: i64, geometry: Geometry) -> Self {
        let size = 1i64 << self.scale_m;
        let idx = self
            .indices
            .iter()
            .map(|k| match geometry {
                Geometry::Circle => (k + x).rem_euclid(size),
                Geometry::Line => k + x,
            })
            .collect();
        Self::new(self.scale_m, idx).expect("scale already checked")
    }

    /// Uniform probability measure on the set.
    pub fn indicator_measure(&self, geometry: Geometry) -> Result<DyadicMeasure> {
        if self.is_empty() {
            return Err(Error::Degenerate("empty set carries no measure".into()));
        }
        DyadicMeasure::uniform_on(geometry, self.scale_m, &self.indices)
    }

    fn check_circle(&self) -> Result<()> {
        let size = 1i64 << self.scale_m;
        match (self.indices.first(), self.indices.last()) {
            (Some(&lo), Some(&hi)) if lo < 0 || hi >= size => Err(Error::Argument(format!(
                "indices must lie in [0, 2^{}) for this operation",
                self.scale_m
            ))),
            _ => Ok(()),
        }
    }
}

fn same_scale(a: &DyadicSet, b: &DyadicSet) -> Result<()> {
    if a.scale_m != b.scale_m {
        return Err(Error::Argument(format!("scale mismatch: {} vs {}", a.scale_m, b.scale_m)));
    }
    Ok(())
}

fn ell_of(m: u32, d: u32) -> Result<u32> {
    if d == 0 || m % d != 0 {
        return Err(Error::Argument(format!("D = {d} must divide m = {m}")));
    }
    Ok(m / d)
}

/// `{a + b}`, mod `2^m` on the circle.
pub fn sumset(a: &DyadicSet, b: &DyadicSet, geometry: Geometry) -> Result<DyadicSet> {
    same_scale(a, b)?;
    let m = a.scale_m;
    if a.is_empty() || b.is_empty() {
        return DyadicSet::new(m, vec![]);
    }
    let (lo, span) = match geometry {
        Geometry::Circle => {
            a.check_circle()?;
            b.check_circle()?;
            (0i64, 1u64 << m)
        }
        Geometry::Line => {
            let lo = a.indices[0] + b.indices[0];
            (lo, (a.indices[a.len() - 1] + b.indices[b.len() - 1] - lo) as u64 + 1)
        }
    };
    let size = 1i64 << m;
    let reduce = |s: i64| match geometry {
        Geometry::Circle => s & (size - 1),
        Geometry::Line => s,
    };
    let out = if span <= BITSET_SPAN {
        let mut bits = vec![0u64; span.div_ceil(64) as usize];
        for &x in &a.indices {
            for &y in &b.indices {
                let k = (reduce(x + y) - lo) as usize;
                bits[k / 64] |= 1 << (k % 64);
            }
        }
        let mut out = vec![];
        for (w, &word) in bits.iter().enumerate() {
            let mut v = word;
            while v != 0 {
                let t = v.trailing_zeros() as usize;
                out.push(lo + (w * 64 + t) as i64);
                v &= v - 1;
            }
        }
        out
    } else {
        let mut out: Vec<i64> = a.indices.iter().flat_map(|&x| b.indices.iter().map(move |&y| reduce(x + y))).collect();
        out.sort_unstable();
        out.dedup();
        out
    };
    Ok(DyadicSet { scale_m: m, indices: out })
}

/// `|A + A| / |A|` on the line.
pub fn doubling(a: &DyadicSet) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Degenerate("doubling of the empty set".into()));
    }
    Ok(sumset(a, a, Geometry::Line)?.len() as f64 / a.len() as f64)
}

/// Representation function `r(s) = #{(a, b) : a + b = s}` on the line.
pub fn representation_counts(a: &DyadicSet, b: &DyadicSet) -> HashMap<i64, u64> {
    let mut r = HashMap::with_capacity(a.len() * b.len());
    for &x in &a.indices {
        for &y in &b.indices {
            *r.entry(x + y).or_insert(0) += 1;
        }
    }
    r
}

/// `E(A, B) = Σ_s r(s)^2` by direct counting.
pub fn additive_energy_direct(a: &DyadicSet, b: &DyadicSet) -> Result<u128> {
    same_scale(a, b)?;
    Ok(representation_counts(a, b).values().map(|&c| (c as u128) * (c as u128)).sum())
}

/// `E(A, B)` from the FFT of the indicator functions.
pub fn additive_energy_fft(a: &DyadicSet, b: &DyadicSet) -> Result<u128> {
    same_scale(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Ok(0);
    }
    let span_a = (a.indices[a.len() - 1] - a.indices[0]) as u64 + 1;
    let span_b = (b.indices[b.len() - 1] - b.indices[0]) as u64 + 1;
    let len = (span_a + span_b - 1).next_power_of_two();
    if len > FFT_MAX_LEN as u64 {
        return Err(Error::Capacity { what: "FFT length for additive energy".into(), needed: len as u128, cap: FFT_MAX_LEN as u128 });
    }
    let len = len as usize;
    let mut fa = vec![Complex::new(0.0, 0.0); len];
    let mut fb = vec![Complex::new(0.0, 0.0); len];
    for &x in &a.indices {
        fa[(x - a.indices[0]) as usize].re = 1.0;
    }
    for &y in &b.indices {
        fb[(y - b.indices[0]) as usize].re = 1.0;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut fa);
    planner.plan_fft_forward(len).process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    planner.plan_fft_inverse(len).process(&mut fa);
    Ok(fa
        .iter()
        .map(|c| {
            let r = (c.re / len as f64).round() as u128;
            r * r
        })
        .sum())
}

/// Additive energy, picking the FFT when the pair count is large and the
/// spans are small enough.
pub fn additive_energy(a: &DyadicSet, b: &DyadicSet) -> Result<u128> {
    let pairs = a.len() as u64 * b.len() as u64;
    if pairs > 1 << 20 {
        match additive_energy_fft(a, b) {
            Err(Error::Capacity { .. }) => {}
            r => return r,
        }
    }
    additive_energy_direct(a, b)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelBranching {
    Uniform(u64),
    /// Offspring counts differ; `histogram` lists `(count, intervals)`.
    Nonuniform { min: u64, max: u64, histogram: Vec<(u64, u64)> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BranchingProfile {
    pub d: u32,
    pub ell: u32,
    pub per_level: Vec<LevelBranching>,
}

impl BranchingProfile {
    pub fn is_uniform(&self) -> bool {
        self.per_level.iter().all(|l| matches!(l, LevelBranching::Uniform(_)))
    }

    /// `R_s` for every level when the profile is uniform.
    pub fn counts(&self) -> Option<Vec<u64>> {
        self.per_level
            .iter()
            .map(|l| match l {
                LevelBranching::Uniform(r) => Some(*r),
                _ => None,
            })
            .collect()
    }
}

/// Offspring counts of each level-`s` interval, in index order.
fn children_per_interval(indices: &[i64], m: u32, d: u32, s: u32) -> Vec<(i64, u64)> {
    let hi = m - s * d;
    let lo = m - (s + 1) * d;
    let mut out: Vec<(i64, u64)> = vec![];
    let mut last_child = None;
    for &k in indices {
        let p = k >> hi;
        let c = k >> lo;
        match out.last_mut() {
            Some((q, n)) if *q == p => {
                if last_child != Some(c) {
                    *n += 1;
                }
            }
            _ => out.push((p, 1)),
        }
        last_child = Some(c);
    }
    out
}

pub fn branching(a: &DyadicSet, d: u32) -> Result<BranchingProfile> {
    let ell = ell_of(a.scale_m, d)?;
    if a.is_empty() {
        return Err(Error::Degenerate("branching of the empty set".into()));
    }
    let per_level = (0..ell)
        .map(|s| {
            let counts = children_per_interval(&a.indices, a.scale_m, d, s);
            let min = counts.iter().map(|c| c.1).min().unwrap();
            let max = counts.iter().map(|c| c.1).max().unwrap();
            if min == max {
                LevelBranching::Uniform(min)
            } else {
                let mut h: std::collections::BTreeMap<u64, u64> = Default::default();
                for c in &counts {
                    *h.entry(c.1).or_insert(0) += 1;
                }
                LevelBranching::Nonuniform { min, max, histogram: h.into_iter().collect() }
            }
        })
        .collect();
    Ok(BranchingProfile { d, ell, per_level })
}

/// Keeps, in every level-`s` interval with at least `r` children, the points
/// under its `r` leftmost children; drops the other intervals.
fn keep_leftmost(indices: &[i64], m: u32, d: u32, s: u32, r: u64) -> Vec<i64> {
    let hi = m - s * d;
    let lo = m - (s + 1) * d;
    let counts: HashMap<i64, u64> = children_per_interval(indices, m, d, s).into_iter().collect();
    let mut out = vec![];
    let mut cur: Option<(i64, i64, u64)> = None; // (parent, child, rank)
    for &k in indices {
        let (p, c) = (k >> hi, k >> lo);
        let rank = match cur {
            Some((pp, cc, rk)) if pp == p => {
                if cc == c {
                    rk
                } else {
                    rk + 1
                }
            }
            _ => 1,
        };
        cur = Some((p, c, rank));
        if counts[&p] >= r && rank <= r {
            out.push(k);
        }
    }
    out
}

/// A `(D, ℓ)`-uniform subset by bottom-up pruning of the branching tree.
///
/// At each level, going up, the kept offspring count `r` maximises the
/// number of surviving points (ties to the smaller `r`); every interval
/// with at least `r` children keeps its `r` leftmost ones. Since
/// `Σ_I N_I ≤ H_{2^D} max_r r #{I : N_I ≥ r}`, each level keeps at least
/// `1/(2D)` of the points.
pub fn extract_uniform(a: &DyadicSet, d: u32) -> Result<DyadicSet> {
    let ell = ell_of(a.scale_m, d)?;
    let m = a.scale_m;
    let mut cur = a.indices.clone();
    for s in (0..ell).rev() {
        if cur.is_empty() {
            break;
        }
        let counts = children_per_interval(&cur, m, d, s);
        let mut ns: Vec<u64> = counts.iter().map(|c| c.1).collect();
        ns.sort_unstable();
        let mut best = (0u64, 0u64);
        for (i, &r) in ns.iter().enumerate() {
            let score = r * (ns.len() - i) as u64;
            if score > best.1 {
                best = (r, score);
            }
        }
        cur = keep_leftmost(&cur, m, d, s, best.0);
    }
    Ok(DyadicSet { scale_m: m, indices: cur })
}

/// Keeps only the leftmost child at each chosen level of a uniform set.
pub fn collapse(a: &DyadicSet, d: u32, levels: &BTreeSet<u32>) -> Result<DyadicSet> {
    let ell = ell_of(a.scale_m, d)?;
    if let Some(&s) = levels.iter().find(|&&s| s >= ell) {
        return Err(Error::Argument(format!("level {s} is outside [0, {ell})")));
    }
    if a.is_empty() || !branching(a, d)?.is_uniform() {
        return Err(Error::Precondition("collapse needs a nonempty (D, l)-uniform set".into()));
    }
    let mut cur = a.indices.clone();
    for &s in levels {
        cur = keep_leftmost(&cur, a.scale_m, d, s, 1);
    }
    Ok(DyadicSet { scale_m: a.scale_m, indices: cur })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Centering {
    /// `x` in `[0, 2^m)`.
    pub translation: i64,
    /// `t_s ∈ {0, ±2^{m - sD - 2}}` per level, in index units.
    pub shifts: Vec<i64>,
    /// `A' ⊂ A`, untranslated.
    pub subset: DyadicSet,
}

fn in_middle_half(y: i64, len: i64) -> bool {
    let r = y.rem_euclid(len);
    4 * r >= len && 4 * r < 3 * len
}

/// True when `y + x` lies in the middle half of its `2^{-sD}` interval for
/// every `y ∈ A` and `s ∈ [ℓ]`.
pub fn is_centered(a: &DyadicSet, translation: i64, d: u32) -> Result<bool> {
    let ell = ell_of(a.scale_m, d)?;
    Ok((0..ell).all(|s| {
        let len = 1i64 << (a.scale_m - s * d);
        a.indices.iter().all(|&y| in_middle_half(y + translation, len))
    }))
}

/// A translation `x` and a subset `A'` with `|A'| ≥ 3^{-ℓ}|A|` such that
/// every `y + x`, `y ∈ A'`, sits in the middle half of its `2^{-sD}`
/// interval at every level. Shifts prefer 0, then `+`, then `-`.
pub fn center(a: &DyadicSet, d: u32) -> Result<Centering> {
    let ell = ell_of(a.scale_m, d)?;
    if d < 2 {
        return Err(Error::Argument("centering needs D >= 2".into()));
    }
    a.check_circle()?;
    let m = a.scale_m;
    let mut cur = a.indices.clone();
    let mut x = 0i64;
    let mut shifts = vec![0i64; ell as usize];
    for s in (0..ell).rev() {
        let len = 1i64 << (m - s * d);
        let quarter = len / 4;
        let mut best: Option<(i64, usize)> = None;
        for t in [0, quarter, -quarter] {
            let n = cur.iter().filter(|&&y| in_middle_half(y + x + t, len)).count();
            if best.is_none_or(|b| n > b.1) {
                best = Some((t, n));
            }
        }
        let t = best.unwrap().0;
        cur.retain(|&y| in_middle_half(y + x + t, len));
        x += t;
        shifts[s as usize] = t;
    }
    Ok(Centering { translation: x.rem_euclid(1i64 << m), shifts, subset: DyadicSet { scale_m: m, indices: cur } })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelMode {
    /// `2^{-j-1}‖μ‖_q^{q'} < μ(x) ≤ 2^{-j}‖μ‖_q^{q'}`, ranked by `‖μ|_A‖_q^q`.
    Lq,
    /// `2^{-j-1}2^{-m} < ν(y) ≤ 2^{-j}2^{-m}`, ranked by `ν(B)`.
    Mass,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelInfo {
    pub j: i64,
    pub size: usize,
    /// Captured fraction of `‖μ‖_q^q` (Lq mode) or of the mass.
    pub captured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSelection {
    pub mode: LevelMode,
    pub set: DyadicSet,
    pub j: i64,
    /// The reference value `‖μ‖_q^{q'}` or `2^{-m}`.
    pub reference: f64,
    /// `(2^{-j-1} ref, 2^{-j} ref]`.
    pub bounds: (f64, f64),
    pub captured: f64,
    /// `⌈2 ε q' m⌉`.
    pub j_bound: i64,
    pub within_bound: bool,
    pub levels: Vec<LevelInfo>,
}

fn level_index(mass: f64, reference: f64) -> i64 {
    let mut j = (reference / mass).log2().floor() as i64;
    while mass > reference * (-(j as f64)).exp2() {
        j -= 1;
    }
    while mass <= reference * (-(j as f64) - 1.0).exp2() {
        j += 1;
    }
    j
}

/// Splits the support into dyadic mass levels and selects the level that
/// captures the most (ties to the smaller `j`).
pub fn level_sets(mu: &DyadicMeasure, q: f64, epsilon: f64, mode: LevelMode) -> Result<LevelSelection> {
    if !(q > 1.0) || q.is_infinite() {
        return Err(Error::Domain(format!("level sets need finite q > 1, got {q}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Argument(format!("epsilon = {epsilon} must be nonnegative")));
    }
    let entries = mu.to_entries();
    if entries.is_empty() {
        return Err(Error::Degenerate("measure has empty support".into()));
    }
    let m = mu.scale_m();
    let norm_qq: f64 = entries.iter().map(|e| e.1.powf(q)).sum();
    let total: f64 = entries.iter().map(|e| e.1).sum();
    let reference = match mode {
        LevelMode::Lq => norm_qq.powf(1.0 / (q - 1.0)),
        LevelMode::Mass => (-(m as f64)).exp2(),
    };
    let mut groups: std::collections::BTreeMap<i64, (Vec<i64>, f64)> = Default::default();
    for &(k, w) in &entries {
        let g = groups.entry(level_index(w, reference)).or_default();
        g.0.push(k);
        g.1 += match mode {
            LevelMode::Lq => w.powf(q) / norm_qq,
            LevelMode::Mass => w / total,
        };
    }
    let levels: Vec<LevelInfo> = groups.iter().map(|(&j, g)| LevelInfo { j, size: g.0.len(), captured: g.1 }).collect();
    let best = levels.iter().fold(&levels[0], |b, l| if l.captured > b.captured { l } else { b });
    let j = best.j;
    let q_dual = q / (q - 1.0);
    let j_bound = (2.0 * epsilon * q_dual * m as f64).ceil() as i64;
    Ok(LevelSelection {
        mode,
        set: DyadicSet::new(m, groups.remove(&j).unwrap().0)?,
        j,
        reference,
        bounds: (reference * (-(j as f64) - 1.0).exp2(), reference * (-(j as f64)).exp2()),
        captured: best.captured,
        j_bound,
        within_bound: j <= j_bound,
        levels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clause {
    pub id: String,
    pub statement: String,
    pub value: f64,
    pub bound: f64,
    pub passes: bool,
    /// Guaranteed by the construction; otherwise only measured.
    pub by_construction: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessReport {
    pub label: String,
    pub m: u32,
    pub d: u32,
    pub ell: u32,
    pub q: f64,
    pub delta: f64,
    /// `‖μ*ν‖_q / ‖μ‖_q` on the circle.
    pub hypothesis_ratio: f64,
    /// `-log2(hypothesis_ratio) / m`, the smallest ε for which the
    /// non-flattening hypothesis holds.
    pub epsilon: f64,
    pub translation_mu: i64,
    pub translation_nu: i64,
    /// Translated sets `A` and `B`.
    pub a: DyadicSet,
    pub b: DyadicSet,
    pub r_prime: Vec<u64>,
    pub r_double_prime: Vec<u64>,
    /// Levels with `R'_s ≥ 2^{(1-δ)D}`.
    pub full_branching: Vec<u32>,
    pub clauses: Vec<Clause>,
}

impl WitnessReport {
    pub fn clause(&self, id: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.id == id)
    }
}

pub const WITNESS_LABEL: &str = "empirical witness: the BSG/Bourgain extraction is not implemented";

fn to_circle(mu: &DyadicMeasure) -> Result<DyadicMeasure> {
    let size = 1i64 << mu.scale_m();
    let e = mu.to_entries();
    if e.iter().any(|x| x.0 < 0 || x.0 >= size) {
        return Err(Error::Argument(format!("measure must live on [0, 2^{}) for the witness", mu.scale_m())));
    }
    DyadicMeasure::from_entries(Geometry::Circle, mu.scale_m(), e)
}

fn regularize(set: &DyadicSet, d: u32) -> Result<(i64, DyadicSet)> {
    let c = center(set, d)?;
    let moved = c.subset.translate(c.translation, Geometry::Circle);
    Ok((c.translation, extract_uniform(&moved, d)?))
}

/// Runs level sets, centering and uniform extraction on `μ` and `ν`, then
/// evaluates every clause of the structure statement on the result.
pub fn inverse_witness(mu: &DyadicMeasure, nu: &DyadicMeasure, q: f64, d: u32, delta: f64) -> Result<WitnessReport> {
    if mu.scale_m() != nu.scale_m() {
        return Err(Error::Argument(format!("scale mismatch: {} vs {}", mu.scale_m(), nu.scale_m())));
    }
    let m = mu.scale_m();
    let ell = ell_of(m, d)?;
    if d < 2 {
        return Err(Error::Argument("the witness needs D >= 2".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Argument(format!("delta = {delta} must be positive")));
    }
    if !(q > 1.0) || q.is_infinite() {
        return Err(Error::Domain(format!("witness needs finite q > 1, got {q}")));
    }
    let mu = to_circle(mu)?;
    let nu = to_circle(nu)?;
    let nq = |x: &DyadicMeasure| x.entries().map(|e| e.1.powf(q)).sum::<f64>();
    let mu_qq = nq(&mu);
    let nu_qq = nq(&nu);
    let conv_qq = nq(&convolve(&mu, &nu, Geometry::Circle)?);
    let hypothesis_ratio = (conv_qq / mu_qq).powf(1.0 / q);
    let epsilon = (-hypothesis_ratio.log2() / m as f64).max(0.0);

    let a0 = level_sets(&mu, q, epsilon, LevelMode::Lq)?;
    let b0 = level_sets(&nu, q, epsilon, LevelMode::Mass)?;
    let (xa, a) = regularize(&a0.set, d)?;
    let (xb, b) = regularize(&b0.set, d)?;
    let size = 1i64 << m;
    let mu_at = |y: &i64| mu.mass_at((y - xa).rem_euclid(size));
    let nu_at = |y: &i64| nu.mass_at((y - xb).rem_euclid(size));
    let dm = delta * m as f64;

    let mut clauses = vec![];
    let mut push = |id: &str, statement: &str, value: f64, bound: f64, passes: bool, by_construction: bool| {
        clauses.push(Clause { id: id.into(), statement: statement.into(), value, bound, passes, by_construction });
    };

    let a_qq: f64 = a.indices.iter().map(|y| mu_at(y).powf(q)).sum();
    let v = (a_qq / mu_qq).log2() / q;
    push("A-i", "log2(|mu restricted to A|_q / |mu|_q) >= -delta m", v, -dm, v >= -dm, false);
    let ratio = |xs: Vec<f64>| {
        let hi = xs.iter().copied().fold(0.0, f64::max);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    };
    let ra = ratio(a.indices.iter().map(mu_at).collect());
    push("A-ii", "max mu / min mu on A <= 2", ra, 2.0, ra <= 2.0, true);
    let pa = branching(&a, d)?;
    push("A-iii", "A is (D, l)-uniform", pa.is_uniform() as u8 as f64, 1.0, pa.is_uniform(), true);
    let ca = is_centered(&a, 0, d)?;
    push("A-iv", "every point of A is in the middle half of its 2^-sD interval", ca as u8 as f64, 1.0, ca, true);

    let nb: f64 = b.indices.iter().map(nu_at).sum();
    let v = nb.log2();
    push("B-i", "log2 nu(B) >= -delta m", v, -dm, v >= -dm, false);
    let rb = ratio(b.indices.iter().map(nu_at).collect());
    push("B-ii", "max nu / min nu on B <= 2", rb, 2.0, rb <= 2.0, true);
    let pb = branching(&b, d)?;
    push("B-iii", "B is (D, l)-uniform", pb.is_uniform() as u8 as f64, 1.0, pb.is_uniform(), true);
    let cb = is_centered(&b, 0, d)?;
    push("B-iv", "every point of B is in the middle half of its 2^-sD interval", cb as u8 as f64, 1.0, cb, true);

    let r1 = pa.counts().unwrap_or_default();
    let r2 = pb.counts().unwrap_or_default();
    let full = ((1.0 - delta) * d as f64).exp2();
    let full_branching: Vec<u32> = (0..ell).filter(|&s| r1.get(s as usize).is_some_and(|&r| r as f64 >= full)).collect();
    let bad = (0..ell as usize)
        .filter(|&s| !(r2.get(s) == Some(&1) || r1.get(s).is_some_and(|&r| r as f64 >= full)))
        .count();
    push("v", "each level has R''_s = 1 or R'_s >= 2^((1-delta) D); value counts violating levels", bad as f64, 0.0, bad == 0 && !r1.is_empty() && !r2.is_empty(), false);

    let ds = (d as usize * full_branching.len()) as f64;
    let lower = -nu_qq.log2() / (q - 1.0) - dm;
    let upper = -mu_qq.log2() / (q - 1.0) + dm;
    push("vi-lower", "log2 |nu|_q^-q' - delta m <= D |S|", ds, lower, lower <= ds, false);
    push("vi-upper", "D |S| <= log2 |mu|_q^-q' + delta m", ds, upper, ds <= upper, false);

    Ok(WitnessReport {
        label: WITNESS_LABEL.into(),
        m,
        d,
        ell,
        q,
        delta,
        hypothesis_ratio,
        epsilon,
        translation_mu: xa,
        translation_nu: xb,
        a,
        b,
        r_prime: r1,
        r_double_prime: r2,
        full_branching,
        clauses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SumsetBound {
    /// `|A + H|` on the line.
    pub lhs: u64,
    /// `|H| Π_{s : R_s = 1} R'_s`.
    pub rhs_numerator: u128,
    /// `2^{-ℓ} rhs_numerator`.
    pub rhs: f64,
    pub passes: bool,
}

/// `|A + H| ≥ 2^{-m/D} |H| Π_{s : R_s = 1} R'_s` for uniform `A` (profile
/// `R'`) and `H` (profile `R`), checked in integers.
pub fn sumset_bound_check(a: &DyadicSet, h: &DyadicSet, d: u32) -> Result<SumsetBound> {
    same_scale(a, h)?;
    let ell = ell_of(a.scale_m, d)?;
    let (ra, rh) = match (branching(a, d)?.counts(), branching(h, d)?.counts()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::Precondition("both sets must be (D, l)-uniform".into())),
    };
    let lhs = sumset(a, h, Geometry::Line)?.len() as u64;
    let rhs_numerator = rh
        .iter()
        .zip(&ra)
        .filter(|(r, _)| **r == 1)
        .fold(h.len() as u128, |acc, (_, rp)| acc * *rp as u128);
    Ok(SumsetBound {
        lhs,
        rhs_numerator,
        rhs: rhs_numerator as f64 * (-(ell as f64)).exp2(),
        passes: (lhs as u128) << ell >= rhs_numerator,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QTo2 {
    /// Smallest κ with `‖1_A*1_B‖_q ≥ 2^{-κm}|A|^{1/q}|B|`.
    pub kappa: f64,
    pub energy: u128,
    /// `log2` of `2^{-max(q,q')κm}|A||B|^2`.
    pub rhs_log2: f64,
    pub passes: bool,
}

/// The `L^q` to `L^2` transfer for `1_A * 1_B` on the line, at the
/// tightest κ.
pub fn q_to_2_check(a: &DyadicSet, b: &DyadicSet, q: f64) -> Result<QTo2> {
    same_scale(a, b)?;
    if !(q > 1.0) || q.is_infinite() {
        return Err(Error::Domain(format!("need finite q > 1, got {q}")));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("empty set".into()));
    }
    let m = a.scale_m.max(1) as f64;
    let r = representation_counts(a, b);
    let sq: f64 = r.values().map(|&c| (c as f64).powf(q)).sum();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let kappa = ((na.log2() / q + nb.log2()) - sq.log2() / q) / m;
    let energy: u128 = r.values().map(|&c| (c as u128) * (c as u128)).sum();
    let qd = q / (q - 1.0);
    let rhs_log2 = -q.max(qd) * kappa * m + na.log2() + 2.0 * nb.log2();
    Ok(QTo2 { kappa, energy, rhs_log2, passes: (energy as f64).log2() >= rhs_log2 - 1e-9 })
}
