//! Exponential separation: the minimum of `|P(λ)|` over nonzero polynomials
//! with coefficients in a finite set, minimum atom gaps of `μ_{x,n}`, exact
//! overlap detection, and scans of `(1/n) log2 min |P(λ)|`.
//!
//! The polynomial search is a depth-first branch and bound over the
//! coefficients `c_0, c_1, ..., c_n`. A partial sum `S_k` is pruned once
//! `|S_k| - c_max Σ_{i>k} λ^i` cannot beat the incumbent. Pruning always
//! uses outward-rounded intervals; the mode only decides how leaves are
//! evaluated and what is returned.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_measure::AtomicMeasure;
use crate::error::{Error, Result};
use crate::exact::{common_radicand, Interval, QuadNum, Scalar};
use crate::models::{Model, State};

pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

const FLUSH_EVERY: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Interval,
    Float,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "interval" => Ok(Mode::Interval),
            "float" => Ok(Mode::Float),
            _ => Err(Error::Parse(format!("unknown mode {s:?}; expected exact, interval or float"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Interval => "interval",
            Mode::Float => "float",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SearchOptions {
    /// Node budget; exceeding it is a `Budget` error carrying the best value.
    pub budget: u64,
    /// Split the top-level coefficient choices across the rayon pool.
    pub parallel: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { budget: DEFAULT_BUDGET, parallel: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyMin {
    pub mode: Mode,
    pub degree: u32,
    /// The minimum as a float; the upper end of the enclosure in interval mode.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<QuadNum>,
    /// Certified `[lo, hi]` around the minimum (interval mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enclosure: Option<(f64, f64)>,
    /// Coefficients `c_0..c_n` of a minimising polynomial.
    #[serde(skip)]
    pub witness: Vec<f64>,
    #[serde(skip)]
    pub nodes: u64,
}

impl PolyMin {
    pub fn is_zero(&self) -> bool {
        match (&self.exact, self.enclosure) {
            (Some(q), _) => q.is_zero(),
            (None, Some((_, hi))) => hi == 0.0,
            _ => self.value == 0.0,
        }
    }
}

/// `E - E` for a digit set `E`.
pub fn difference_set(digits: &[Scalar]) -> Vec<Scalar> {
    let mut out: Vec<Scalar> = vec![];
    for a in digits {
        for b in digits {
            let d = match (&a.exact, &b.exact) {
                (Some(x), Some(y)) => Scalar::exact(x - y),
                _ => Scalar::float(a.value - b.value),
            };
            if !out.iter().any(|o| same(o, &d)) {
                out.push(d);
            }
        }
    }
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    out
}

fn same(a: &Scalar, b: &Scalar) -> bool {
    match (&a.exact, &b.exact) {
        (Some(x), Some(y)) => x == y,
        _ => a.value == b.value,
    }
}

fn enclose(s: &Scalar) -> Interval {
    match &s.exact {
        Some(q) => q.enclosure(),
        None => Interval::point(s.value),
    }
}

fn abs_iv(iv: Interval) -> Interval {
    Interval::new(iv.mig(), iv.mag())
}

struct Best {
    hi: f64,
    lo_min: f64,
    exact: Option<QuadNum>,
    witness: Vec<usize>,
}

struct Search {
    n: usize,
    mode: Mode,
    coef: Vec<f64>,
    zero: Vec<bool>,
    terms_iv: Vec<Vec<Interval>>,
    terms_f: Vec<Vec<f64>>,
    terms_ex: Option<Vec<Vec<QuadNum>>>,
    /// Upper bound on `|Σ_{i>k} c_i λ^i|`, indexed by `k`.
    tail_hi: Vec<f64>,
    symmetric: bool,
    budget: u64,
    nodes: AtomicU64,
    bound: AtomicU64,
    stop: AtomicBool,
    over_budget: AtomicBool,
    best: Mutex<Best>,
}

struct Child {
    j: usize,
    iv: Interval,
    f: f64,
    nonzero: bool,
}

impl Search {
    fn bound(&self) -> f64 {
        f64::from_bits(self.bound.load(Ordering::Relaxed))
    }

    fn children(&self, k: usize, s_iv: Interval, s_f: f64, nonzero: bool) -> Vec<Child> {
        let mut kids: Vec<Child> = (0..self.coef.len())
            .filter(|&j| !(self.symmetric && !nonzero && self.coef[j] < 0.0))
            .map(|j| Child {
                j,
                iv: s_iv + self.terms_iv[k][j],
                f: s_f + self.terms_f[k][j],
                nonzero: nonzero || !self.zero[j],
            })
            .collect();
        kids.sort_by(|a, b| b.f.abs().total_cmp(&a.f.abs()).then(a.j.cmp(&b.j)));
        kids
    }

    fn count(&self, local: &mut u64) -> bool {
        *local += 1;
        if *local >= FLUSH_EVERY {
            self.flush(local);
        }
        !self.stop.load(Ordering::Relaxed)
    }

    fn flush(&self, local: &mut u64) {
        let total = self.nodes.fetch_add(*local, Ordering::Relaxed) + *local;
        *local = 0;
        if total > self.budget {
            self.over_budget.store(true, Ordering::Relaxed);
            self.stop.store(true, Ordering::Relaxed);
        }
    }

    fn pruned(&self, k: usize, c: &Child) -> bool {
        if !c.nonzero {
            return false;
        }
        let lb = (Interval::point(c.iv.mig()) - Interval::point(self.tail_hi[k])).lo;
        lb >= self.bound()
    }

    fn visit(&self, k: usize, c: Child, path: &mut Vec<usize>, local: &mut u64) {
        if !self.count(local) || self.pruned(k, &c) {
            return;
        }
        path.push(c.j);
        if k == self.n {
            if c.nonzero {
                self.leaf(c.iv, c.f, path);
            }
        } else {
            for kid in self.children(k + 1, c.iv, c.f, c.nonzero) {
                self.visit(k + 1, kid, path, local);
                if self.stop.load(Ordering::Relaxed) {
                    break;
                }
            }
        }
        path.pop();
    }

    fn exact_value(&self, path: &[usize]) -> QuadNum {
        let t = self.terms_ex.as_ref().expect("exact terms");
        path.iter().enumerate().fold(QuadNum::zero(), |acc, (i, &j)| &acc + &t[i][j]).abs()
    }

    fn leaf(&self, iv: Interval, f: f64, path: &[usize]) {
        let a = abs_iv(iv);
        if !(a.lo < self.bound()) {
            return;
        }
        match self.mode {
            Mode::Float => {
                let v = f.abs();
                self.offer(v, v, None, path);
            }
            Mode::Interval => {
                let a = if a.lo == 0.0 && self.terms_ex.is_some() {
                    self.exact_value(path).enclosure()
                } else {
                    a
                };
                self.offer(a.lo, a.hi, None, path);
            }
            Mode::Exact => {
                let v = self.exact_value(path);
                let e = v.enclosure();
                self.offer(e.lo, e.hi, Some(v), path);
            }
        }
    }

    fn offer(&self, lo: f64, hi: f64, exact: Option<QuadNum>, path: &[usize]) {
        let mut b = self.best.lock().unwrap();
        b.lo_min = b.lo_min.min(lo);
        let better = match (&exact, &b.exact) {
            (Some(v), Some(cur)) => v < cur,
            _ => hi < b.hi,
        };
        if better {
            let zero = exact.as_ref().map_or(hi == 0.0, |v| v.is_zero());
            b.hi = hi;
            b.exact = exact;
            b.witness = path.to_vec();
            self.bound.store(hi.to_bits(), Ordering::Relaxed);
            if zero {
                self.stop.store(true, Ordering::Relaxed);
            }
        }
    }
}

/// Minimum of `|P(λ)|` over nonzero polynomials of degree at most `n` with
/// coefficients in `coeffs`.
pub fn min_poly_value(coeffs: &[Scalar], lambda: &Scalar, n: u32, mode: Mode) -> Result<PolyMin> {
    min_poly_value_with(coeffs, lambda, n, mode, SearchOptions::default())
}

pub fn min_poly_value_with(
    coeffs: &[Scalar],
    lambda: &Scalar,
    n: u32,
    mode: Mode,
    opts: SearchOptions,
) -> Result<PolyMin> {
    if n == 0 {
        return Err(Error::Argument("degree n must be at least 1".into()));
    }
    if !(lambda.value > 0.0 && lambda.value < 1.0) {
        return Err(Error::Domain(format!("lambda = {} must lie in (0, 1)", lambda.value)));
    }
    let mut set: Vec<Scalar> = vec![];
    for c in coeffs {
        if !set.iter().any(|o| same(o, c)) {
            set.push(c.clone());
        }
    }
    set.sort_by(|a, b| a.value.total_cmp(&b.value));
    if !set.iter().any(|c| c.value == 0.0) {
        return Err(Error::Precondition("coefficient set must contain 0 (it is a difference set E - E)".into()));
    }
    if set.len() < 2 {
        return Err(Error::Degenerate("coefficient set has no nonzero element".into()));
    }
    let want_exact = mode == Mode::Exact || (mode == Mode::Interval && lambda.exact.is_some() && set.iter().all(|c| c.exact.is_some()));
    let exact_inputs = if want_exact {
        let l = lambda.require_exact("lambda")?.clone();
        let cs = set.iter().map(|c| c.require_exact("coefficient").cloned()).collect::<Result<Vec<_>>>()?;
        common_radicand(cs.iter().chain(std::iter::once(&l)))?;
        Some((l, cs))
    } else {
        None
    };

    let n = n as usize;
    let l_iv = enclose(lambda);
    let mut pows_iv = vec![Interval::point(1.0)];
    let mut pows_f = vec![1.0f64];
    for i in 1..=n {
        pows_iv.push(pows_iv[i - 1] * l_iv);
        pows_f.push(pows_f[i - 1] * lambda.value);
    }
    let c_iv: Vec<Interval> = set.iter().map(enclose).collect();
    let c_max = c_iv.iter().map(|c| c.mag()).fold(0.0, f64::max);
    let terms_iv: Vec<Vec<Interval>> = pows_iv.iter().map(|p| c_iv.iter().map(|c| *c * *p).collect()).collect();
    let terms_f: Vec<Vec<f64>> = pows_f.iter().map(|p| set.iter().map(|c| c.value * p).collect()).collect();
    let terms_ex = exact_inputs.as_ref().map(|(l, cs)| {
        (0..=n)
            .map(|i| {
                let p = l.pow(i as u32);
                cs.iter().map(|c| c * &p).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    });
    let mut tail_hi = vec![0.0; n + 1];
    let mut acc = Interval::point(0.0);
    for k in (0..n).rev() {
        acc = acc + Interval::point(c_max) * pows_iv[k + 1];
        tail_hi[k] = acc.hi;
    }
    let symmetric = set.iter().all(|c| {
        set.iter().any(|o| match (&c.exact, &o.exact) {
            (Some(x), Some(y)) => &-x.clone() == y,
            _ => o.value == -c.value,
        })
    });
    let zero: Vec<bool> = set.iter().map(|c| c.value == 0.0).collect();

    // Seed with c_min λ^n, preferring a positive coefficient.
    let j_min = (0..set.len())
        .filter(|&j| !zero[j])
        .min_by(|&a, &b| set[a].value.abs().total_cmp(&set[b].value.abs()).then(set[b].value.total_cmp(&set[a].value)))
        .unwrap();
    let zero_j = zero.iter().position(|&z| z).unwrap();
    let mut seed_path = vec![zero_j; n];
    seed_path.push(j_min);

    let search = Search {
        n,
        mode,
        coef: set.iter().map(|c| c.value).collect(),
        zero,
        terms_iv,
        terms_f,
        terms_ex,
        tail_hi,
        symmetric,
        budget: opts.budget,
        nodes: AtomicU64::new(0),
        bound: AtomicU64::new(f64::INFINITY.to_bits()),
        stop: AtomicBool::new(false),
        over_budget: AtomicBool::new(false),
        best: Mutex::new(Best { hi: f64::INFINITY, lo_min: f64::INFINITY, exact: None, witness: vec![] }),
    };
    search.leaf(
        search.terms_iv[n][j_min],
        search.terms_f[n][j_min],
        &seed_path,
    );

    let top = search.children(0, Interval::point(0.0), 0.0, false);
    let run = |c: Child| {
        let mut path = Vec::with_capacity(n + 1);
        let mut local = 0;
        search.visit(0, c, &mut path, &mut local);
        search.flush(&mut local);
    };
    if opts.parallel {
        top.into_par_iter().for_each(run);
    } else {
        top.into_iter().for_each(run);
    }

    let best = search.best.into_inner().unwrap();
    if search.over_budget.load(Ordering::Relaxed) {
        return Err(Error::Budget { budget: opts.budget, best_so_far: best.hi });
    }
    let witness = best.witness.iter().map(|&j| set[j].value).collect();
    let nodes = search.nodes.load(Ordering::Relaxed);
    Ok(match mode {
        Mode::Exact => {
            let v = best.exact.expect("seeded");
            PolyMin { mode, degree: n as u32, value: v.to_f64(), exact: Some(v), enclosure: None, witness, nodes }
        }
        Mode::Interval => PolyMin {
            mode,
            degree: n as u32,
            value: best.hi,
            exact: None,
            enclosure: Some((best.lo_min.min(best.hi), best.hi)),
            witness,
            nodes,
        },
        Mode::Float => PolyMin { mode, degree: n as u32, value: best.hi, exact: None, enclosure: None, witness, nodes },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomGap {
    /// Smallest distance between distinct atoms; 0 when atoms coincided.
    pub gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_exact: Option<QuadNum>,
    /// Coincidences merged while building the measure. Exact in exact mode;
    /// within the 2^-48 merge tolerance for float atoms.
    pub overlaps: u64,
}

fn gap_check_len<L>(am: &AtomicMeasure<L>) -> Result<()>
where
    L: crate::dyadic_measure::Location,
{
    if am.len() < 2 && am.merged() == 0 {
        return Err(Error::Degenerate("a single atom has no gap".into()));
    }
    Ok(())
}

pub fn min_atom_gap(am: &AtomicMeasure) -> Result<AtomGap> {
    gap_check_len(am)?;
    let overlaps = am.merged();
    let gap = if overlaps > 0 {
        0.0
    } else {
        am.atoms().windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min)
    };
    Ok(AtomGap { gap, gap_exact: None, overlaps })
}

pub fn min_atom_gap_exact(am: &AtomicMeasure<QuadNum>) -> Result<AtomGap> {
    gap_check_len(am)?;
    let overlaps = am.merged();
    let g = if overlaps > 0 {
        QuadNum::zero()
    } else {
        am.atoms().windows(2).map(|w| &w[1].0 - &w[0].0).min().expect("two atoms")
    };
    Ok(AtomGap { gap: g.to_f64(), gap_exact: Some(g), overlaps })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileRow {
    pub n: u64,
    /// `+∞` for a single-atom stage.
    pub min_gap: f64,
    pub overlap_count: u64,
    /// `λ^{Rn}`.
    pub threshold: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CertifiedTo(u64),
    FailsAt(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationProfile {
    pub mode: Mode,
    pub r: f64,
    pub per_n: Vec<ProfileRow>,
    pub verdict: Verdict,
}

impl SeparationProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,gap,threshold,pass\n");
        for r in &self.per_n {
            s.push_str(&format!("{},{:e},{:e},{}\n", r.n, r.min_gap, r.threshold, r.passes));
        }
        s
    }
}

/// Atom gaps of `μ_{x,n}` for `n = 1..=n_max` against `λ^{Rn}`.
///
/// Exact mode needs a model with exact atoms and contraction. Interval mode
/// is not offered for profiles: exact mode covers it wherever it applies.
pub fn separation_profile(model: &Model, x: &State, n_max: u64, r: f64, mode: Mode) -> Result<SeparationProfile> {
    if n_max == 0 {
        return Err(Error::Argument("n_max must be at least 1".into()));
    }
    if !(r > 0.0) {
        return Err(Error::Argument(format!("separation exponent R = {r} must be positive")));
    }
    let lambda = model.lambda();
    let mut per_n = vec![];
    let row = |n: u64, gap: Option<AtomGap>, passes_gap: &dyn Fn(&AtomGap, f64) -> bool| {
        let threshold = lambda.powf(r * n as f64);
        match gap {
            None => ProfileRow { n, min_gap: f64::INFINITY, overlap_count: 0, threshold, passes: true },
            Some(g) => {
                let passes = g.overlaps == 0 && passes_gap(&g, threshold);
                ProfileRow { n, min_gap: g.gap, overlap_count: g.overlaps, threshold, passes }
            }
        }
    };
    match mode {
        Mode::Exact => {
            let l = model.lambda_exact().cloned();
            let mut st = model.stages_exact(x)?;
            for n in 1..=n_max {
                let mu = st.advance()?;
                let g = if mu.len() < 2 && mu.merged() == 0 { None } else { Some(min_atom_gap_exact(mu)?) };
                // Integer exponents compare exactly; otherwise the gap's
                // enclosure must clear the threshold with a margin.
                let rn = r * n as f64;
                let check = |g: &AtomGap, thr: f64| {
                    let ge = g.gap_exact.as_ref().expect("exact gap");
                    match &l {
                        Some(l) if rn.fract() == 0.0 && rn <= u32::MAX as f64 => ge >= &l.pow(rn as u32),
                        _ => ge.enclosure().lo > thr * (1.0 + 1e-12),
                    }
                };
                per_n.push(row(n, g, &check));
            }
        }
        Mode::Float => {
            let mut st = model.stages(x)?;
            for n in 1..=n_max {
                let mu = st.advance()?;
                let g = if mu.len() < 2 && mu.merged() == 0 { None } else { Some(min_atom_gap(mu)?) };
                per_n.push(row(n, g, &|g: &AtomGap, thr: f64| g.gap >= thr * (1.0 - 1e-12)));
            }
        }
        Mode::Interval => {
            return Err(Error::Argument("separation profiles run in exact or float mode".into()));
        }
    }
    let verdict = match per_n.iter().find(|r| !r.passes) {
        Some(row) => Verdict::FailsAt(row.n),
        None => Verdict::CertifiedTo(n_max),
    };
    Ok(SeparationProfile { mode, r, per_n, verdict })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapTypes {
    /// Differences within the first factor.
    pub first: f64,
    /// Differences within the second, `e^x`-scaled factor.
    pub second: f64,
    /// Differences where both factors change.
    pub mixed: f64,
}

fn nonzero_differences(am: &AtomicMeasure) -> Vec<f64> {
    let locs = am.locations_f64();
    let mut d: Vec<f64> = locs
        .iter()
        .flat_map(|a| locs.iter().map(move |b| a - b))
        .filter(|v| *v != 0.0)
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

/// The three kinds of atom differences of a convolution model at stage `n`,
/// in float mode: `|(a - a') + (b - b')|` with `a` from the first factor
/// and `b` from the second.
pub fn convolution_gap_types(model: &Model, x: &State, n: u64) -> Result<GapTypes> {
    let (a, b) = model.convolution_factors(x, n)?;
    let min_gap = |m: &AtomicMeasure| m.atoms().windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min);
    let da = nonzero_differences(&a);
    let db = nonzero_differences(&b);
    let mut mixed = f64::INFINITY;
    for d in &da {
        let i = db.partition_point(|e| *e < -d);
        for e in db[i.saturating_sub(1)..(i + 1).min(db.len())].iter() {
            mixed = mixed.min((d + e).abs());
        }
    }
    Ok(GapTypes { first: min_gap(&a), second: min_gap(&b), mixed })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub lambda: f64,
    /// `(1/n) log2 min |P(λ)|`; `-∞` when an exact zero was found.
    pub value: f64,
    pub min_value: f64,
}

/// `(1/n) log2 min_{P} |P(λ)|` across a grid of contractions.
pub fn superexp_scan(coeffs: &[Scalar], grid: &[Scalar], n: u32, mode: Mode, opts: SearchOptions) -> Result<Vec<ScanPoint>> {
    grid.iter()
        .map(|l| {
            let r = min_poly_value_with(coeffs, l, n, mode, opts)?;
            let value = if r.is_zero() { f64::NEG_INFINITY } else { r.value.log2() / n as f64 };
            Ok(ScanPoint { lambda: l.value, value, min_value: r.value })
        })
        .collect()
}
