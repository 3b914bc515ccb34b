//! Dynamically driven self-similar models `(X, T, Δ, λ)` and their finite
//! stages `μ_{x,n} = ∗_{i<n} S_{λ^i} Δ(T^i x)`, plus non-homogeneous IFS
//! cylinder measures.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dyadic_measure::{atom_capacity, AtomicMeasure, Location};
use crate::error::{Error, Result};
use crate::exact::{common_radicand, QuadNum, Scalar};

/// A point of a model's state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    Trivial,
    Circle(f64),
    Torus(Vec<f64>),
    /// A base state together with a residue in the cyclic group of order k.
    Product(Box<State>, usize),
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Trivial => write!(f, "*"),
            State::Circle(x) => write!(f, "{x}"),
            State::Torus(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(";"))
            }
            State::Product(b, j) => write!(f, "({b};{j})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StateSpace {
    Trivial,
    Circle { period: f64 },
    Torus { periods: Vec<f64> },
    Product { base: Box<StateSpace>, k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keep {
    Multiples,
    NonMultiples,
}

#[derive(Clone, Debug)]
enum Kind {
    SelfSimilar {
        delta: AtomicMeasure,
        delta_exact: Option<AtomicMeasure<QuadNum>>,
    },
    Convolution {
        d1: AtomicMeasure,
        d2: AtomicMeasure,
        a1: f64,
        a2: f64,
    },
    Multi {
        deltas: Vec<AtomicMeasure>,
        /// `a[j] = |ln λ_j|`, decreasing; the last entry drives the model.
        a: Vec<f64>,
    },
    Projection {
        planar: Vec<([f64; 2], f64)>,
        alpha: f64,
    },
    Skip {
        base: Box<Model>,
        k: usize,
        keep: Keep,
    },
}

/// A ratio whose irrationality the theory needs, with what we could check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioCheck {
    pub label: String,
    pub value: f64,
    /// Set when the value is within 1e-12 of `p/q` with `q ≤ 10^4`.
    pub near_rational: Option<(i64, i64)>,
}

#[derive(Clone, Debug)]
pub struct Model {
    kind: Kind,
    lambda: f64,
    lambda_exact: Option<QuadNum>,
    support: (f64, f64),
    asserted_irrational: Option<bool>,
}

fn check_lambda(l: f64, what: &str) -> Result<()> {
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::Argument(format!("{what} = {l} must lie in (0, 1)")));
    }
    Ok(())
}

fn range_of(d: &AtomicMeasure) -> (f64, f64) {
    (*d.min_location(), *d.max_location())
}

fn norm_q(d: &AtomicMeasure, q: f64) -> f64 {
    d.atoms().iter().map(|a| a.1.powf(q)).sum()
}

/// Best rational approximation with denominator at most `max_den` when it
/// is within `tol`.
pub fn near_rational(x: f64, max_den: i64, tol: f64) -> Option<(i64, i64)> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1).and_then(|v| v.checked_add(h0))?;
        let k2 = a.checked_mul(k1).and_then(|v| v.checked_add(k0))?;
        if k2 > max_den {
            break;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

pub fn make_selfsimilar(delta: &AtomicMeasure, lambda: f64) -> Result<Model> {
    check_lambda(lambda, "lambda")?;
    Ok(Model {
        support: range_of(delta),
        kind: Kind::SelfSimilar { delta: delta.clone(), delta_exact: None },
        lambda,
        lambda_exact: None,
        asserted_irrational: None,
    })
}

/// Self-similar model with exact atoms and contraction, usable in exact mode.
pub fn make_selfsimilar_exact(delta: &AtomicMeasure<QuadNum>, lambda: &QuadNum) -> Result<Model> {
    common_radicand(delta.atoms().iter().map(|a| &a.0).chain([lambda]))?;
    let mut m = make_selfsimilar(&delta.to_float(), lambda.to_f64())?;
    m.lambda_exact = Some(lambda.clone());
    if let Kind::SelfSimilar { delta_exact, .. } = &mut m.kind {
        *delta_exact = Some(delta.clone());
    }
    Ok(m)
}

/// Rotation model whose fibres are `η_1 ∗ S_{e^x} η_2`: state space
/// `[0, a_2)`, rotation by `a_1`, with `a_i = |ln λ_i|`.
pub fn make_convolution(d1: &AtomicMeasure, l1: f64, d2: &AtomicMeasure, l2: f64) -> Result<Model> {
    check_lambda(l1, "lambda1")?;
    check_lambda(l2, "lambda2")?;
    if !(l2 < l1) {
        return Err(Error::Argument(format!("need 0 < lambda2 < lambda1 < 1, got lambda1 = {l1}, lambda2 = {l2}")));
    }
    let (a1, a2) = (-l1.ln(), -l2.ln());
    let (lo1, hi1) = range_of(d1);
    let (lo2, hi2) = range_of(d2);
    let e = 1.0 / l1;
    let support = (lo1 + lo2.min(0.0).min(lo2 * e), hi1 + hi2.max(0.0).max(hi2 * e));
    let m = Model {
        kind: Kind::Convolution { d1: d1.clone(), d2: d2.clone(), a1, a2 },
        lambda: l1,
        lambda_exact: None,
        support,
        asserted_irrational: None,
    };
    m.warn_near_rational();
    Ok(m)
}

/// Torus model for `η_1 ∗ ... ∗ η_k` with contractions ascending.
pub fn make_multi_convolution(deltas: &[AtomicMeasure], lambdas: &[f64]) -> Result<Model> {
    let k = deltas.len();
    if k < 2 || lambdas.len() != k {
        return Err(Error::Argument(format!(
            "multi-convolution needs k >= 2 measures and as many contractions, got {k} and {}",
            lambdas.len()
        )));
    }
    for (i, &l) in lambdas.iter().enumerate() {
        check_lambda(l, &format!("lambdas[{i}]"))?;
        if i > 0 && !(lambdas[i - 1] < l) {
            return Err(Error::Argument("lambdas must be strictly increasing".into()));
        }
    }
    let a: Vec<f64> = lambdas.iter().map(|l| -l.ln()).collect();
    let e = (a[k - 1]).exp();
    let (mut lo, mut hi) = range_of(&deltas[k - 1]);
    for d in &deltas[..k - 1] {
        let (l, h) = range_of(d);
        lo += l.min(0.0).min(l * e);
        hi += h.max(0.0).max(h * e);
    }
    let m = Model {
        kind: Kind::Multi { deltas: deltas.to_vec(), a },
        lambda: lambdas[k - 1],
        lambda_exact: None,
        support: (lo, hi),
        asserted_irrational: None,
    };
    m.warn_near_rational();
    Ok(m)
}

/// Projections of the planar system `{λ R_α y + t}`: state is an angle,
/// `T θ = θ - α`, and `Δ(θ)` is the image of the planar digit measure under
/// `y ↦ <(cos θ, sin θ), y>`.
pub fn make_projection(planar_delta: &[([f64; 2], f64)], lambda: f64, alpha: f64) -> Result<Model> {
    check_lambda(lambda, "lambda")?;
    if planar_delta.is_empty() {
        return Err(Error::Degenerate("planar measure with no atoms".into()));
    }
    let r = planar_delta
        .iter()
        .map(|(p, _)| p[0].hypot(p[1]))
        .fold(0.0, f64::max);
    let m = Model {
        kind: Kind::Projection { planar: planar_delta.to_vec(), alpha },
        lambda,
        lambda_exact: None,
        support: (-r, r),
        asserted_irrational: None,
    };
    m.warn_near_rational();
    Ok(m)
}

/// Splits a model along residues mod `k`. `NonMultiples` keeps the stages
/// `i ≢ 0 (mod k)` on `X × Z/k`; `Multiples` is `(X, T^k, Δ, λ^k)`.
/// The caller asserts that `T` has no periodic points of period dividing `k`.
pub fn make_skip(base: &Model, k: usize, keep: Keep) -> Result<Model> {
    if k < 2 {
        return Err(Error::Argument(format!("skip factor k = {k} must be at least 2")));
    }
    let (lambda, lambda_exact) = match keep {
        Keep::NonMultiples => (base.lambda, base.lambda_exact.clone()),
        Keep::Multiples => (base.lambda.powi(k as i32), base.lambda_exact.as_ref().map(|l| l.pow(k as u32))),
    };
    let support = (base.support.0.min(0.0), base.support.1.max(0.0));
    Ok(Model {
        kind: Kind::Skip { base: Box::new(base.clone()), k, keep },
        lambda,
        lambda_exact,
        support,
        asserted_irrational: base.asserted_irrational,
    })
}

impl Model {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_exact(&self) -> Option<&QuadNum> {
        self.lambda_exact.as_ref()
    }

    /// Interval containing the support of every `Δ(x)`.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Window containing every finite stage `μ_{x,n}`.
    pub fn window(&self) -> (f64, f64) {
        let c = 1.0 / (1.0 - self.lambda);
        let (lo, hi) = self.support;
        let (lo, hi) = (lo.min(0.0) * c, hi.max(0.0) * c);
        if hi > lo {
            (lo, hi)
        } else {
            (lo, lo + 1.0)
        }
    }

    pub fn with_irrationality_assertion(mut self, asserted: Option<bool>) -> Self {
        self.asserted_irrational = asserted;
        self
    }

    pub fn asserted_irrational(&self) -> Option<bool> {
        self.asserted_irrational
    }

    pub fn state_space(&self) -> StateSpace {
        match &self.kind {
            Kind::SelfSimilar { .. } => StateSpace::Trivial,
            Kind::Convolution { a2, .. } => StateSpace::Circle { period: *a2 },
            Kind::Multi { a, .. } => StateSpace::Torus { periods: a[..a.len() - 1].to_vec() },
            Kind::Projection { .. } => StateSpace::Circle { period: TAU },
            Kind::Skip { base, k, keep } => match keep {
                Keep::NonMultiples => StateSpace::Product { base: Box::new(base.state_space()), k: *k },
                Keep::Multiples => base.state_space(),
            },
        }
    }

    /// A reference state: the origin of the state space.
    pub fn default_state(&self) -> State {
        origin_of(&self.state_space())
    }

    /// Ratios whose irrationality makes the driving system uniquely ergodic.
    pub fn irrationality_checks(&self) -> Vec<RatioCheck> {
        let mk = |label: String, value: f64| RatioCheck { near_rational: near_rational(value, 10_000, 1e-12), label, value };
        match &self.kind {
            Kind::SelfSimilar { .. } => vec![],
            Kind::Convolution { a1, a2, .. } => vec![mk("log(lambda2)/log(lambda1)".into(), a2 / a1)],
            Kind::Multi { a, .. } => {
                let mut out = vec![];
                for i in 0..a.len() {
                    for j in i + 1..a.len() {
                        out.push(mk(format!("log(lambda{})/log(lambda{})", i + 1, j + 1), a[i] / a[j]));
                    }
                }
                out
            }
            Kind::Projection { alpha, .. } => vec![mk("alpha/pi".into(), alpha / std::f64::consts::PI)],
            Kind::Skip { base, .. } => base.irrationality_checks(),
        }
    }

    fn warn_near_rational(&self) {
        for c in self.irrationality_checks() {
            if let Some((p, q)) = c.near_rational {
                log::warn!("{} = {} is within 1e-12 of {p}/{q}; unique ergodicity may fail", c.label, c.value);
            }
        }
    }

    pub fn validate_state(&self, x: &State) -> Result<()> {
        let ok = match (&self.kind, x) {
            (Kind::SelfSimilar { .. }, State::Trivial) => true,
            (Kind::Convolution { .. } | Kind::Projection { .. }, State::Circle(v)) => v.is_finite(),
            (Kind::Multi { a, .. }, State::Torus(v)) => v.len() + 1 == a.len() && v.iter().all(|t| t.is_finite()),
            (Kind::Skip { base, k, keep: Keep::NonMultiples }, State::Product(b, j)) => {
                *j < *k && base.validate_state(b).is_ok()
            }
            (Kind::Skip { base, keep: Keep::Multiples, .. }, s) => base.validate_state(s).is_ok(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("state {x} does not belong to the state space {:?}", self.state_space())))
        }
    }

    /// `T^n x`, in closed form rather than by iteration.
    pub fn step(&self, x: &State, n: u64) -> State {
        match (&self.kind, x) {
            (Kind::SelfSimilar { .. }, _) => State::Trivial,
            (Kind::Convolution { a1, a2, .. }, State::Circle(v)) => State::Circle(rotate(*v, n, *a1, *a2)),
            (Kind::Multi { a, .. }, State::Torus(v)) => {
                let ak = a[a.len() - 1];
                State::Torus(v.iter().zip(a).map(|(t, aj)| rotate(*t, n, ak, *aj)).collect())
            }
            (Kind::Projection { alpha, .. }, State::Circle(v)) => State::Circle(rotate(*v, n, -alpha, TAU)),
            (Kind::Skip { base, k, keep: Keep::NonMultiples }, State::Product(b, j)) => {
                State::Product(Box::new(base.step(b, n)), ((*j as u64 + n) % *k as u64) as usize)
            }
            (Kind::Skip { base, k, keep: Keep::Multiples }, s) => base.step(s, n * *k as u64),
            (_, s) => s.clone(),
        }
    }

    /// The symbol measure `Δ(x)`.
    pub fn delta(&self, x: &State) -> Result<AtomicMeasure> {
        self.validate_state(x)?;
        self.delta_unchecked(x)
    }

    fn delta_unchecked(&self, x: &State) -> Result<AtomicMeasure> {
        match (&self.kind, x) {
            (Kind::SelfSimilar { delta, .. }, _) => Ok(delta.clone()),
            (Kind::Convolution { d1, d2, a1, a2 }, State::Circle(v)) => {
                let v = v.rem_euclid(*a2);
                if v < *a1 {
                    d1.convolve(&d2.affine_image(&v.exp(), &0.0))
                } else {
                    Ok(d1.clone())
                }
            }
            (Kind::Multi { deltas, a }, State::Torus(v)) => {
                let k = deltas.len();
                let ak = a[k - 1];
                let mut acc = deltas[k - 1].clone();
                for (j, t) in v.iter().enumerate() {
                    let t = t.rem_euclid(a[j]);
                    if t < ak {
                        acc = acc.convolve(&deltas[j].affine_image(&t.exp(), &0.0))?;
                    }
                }
                Ok(acc)
            }
            (Kind::Projection { planar, .. }, State::Circle(v)) => {
                let (s, c) = v.sin_cos();
                AtomicMeasure::new(planar.iter().map(|(p, w)| (c * p[0] + s * p[1], *w)).collect())
            }
            (Kind::Skip { base, keep: Keep::NonMultiples, .. }, State::Product(b, j)) => {
                if *j == 0 {
                    Ok(AtomicMeasure::dirac(0.0))
                } else {
                    base.delta_unchecked(b)
                }
            }
            (Kind::Skip { base, keep: Keep::Multiples, .. }, s) => base.delta_unchecked(s),
            _ => Err(Error::Argument(format!("state {x} does not fit the model"))),
        }
    }

    fn delta_exact(&self, x: &State) -> Result<AtomicMeasure<QuadNum>> {
        match (&self.kind, x) {
            (Kind::SelfSimilar { delta_exact: Some(d), .. }, _) => Ok(d.clone()),
            (Kind::Skip { keep: Keep::NonMultiples, .. }, State::Product(_, 0)) => {
                Ok(AtomicMeasure::dirac(QuadNum::zero()))
            }
            (Kind::Skip { base, keep: Keep::NonMultiples, .. }, State::Product(b, _)) => base.delta_exact(b),
            (Kind::Skip { base, keep: Keep::Multiples, .. }, s) => base.delta_exact(s),
            _ => Err(Error::Argument(
                "exact mode needs exact atoms and contraction; this model is float-only".into(),
            )),
        }
    }

    /// For a convolution model, the two factors of `μ_{x,n} = A * B`:
    /// `A = *_{i<n} S_{λ^i} Δ1` and `B = *_{i<n, x_i<a1} S_{λ^i e^{x_i}} Δ2`.
    pub fn convolution_factors(&self, x: &State, n: u64) -> Result<(AtomicMeasure, AtomicMeasure)> {
        self.validate_state(x)?;
        let Kind::Convolution { d1, d2, a1, a2 } = &self.kind else {
            return Err(Error::Argument("factor split needs a convolution model".into()));
        };
        let cap = atom_capacity();
        let mut a = AtomicMeasure::dirac(0.0);
        let mut b = AtomicMeasure::dirac(0.0);
        let mut scale = 1.0;
        for i in 0..n {
            a = a.convolve_capped(&d1.affine_image(&scale, &0.0), cap)?;
            if let State::Circle(v) = self.step(x, i) {
                let v = v.rem_euclid(*a2);
                if v < *a1 {
                    b = b.convolve_capped(&d2.affine_image(&(scale * v.exp()), &0.0), cap)?;
                }
            }
            scale *= self.lambda;
        }
        Ok((a, b))
    }

    pub fn supports_exact(&self) -> bool {
        self.lambda_exact.is_some() && self.delta_exact(&self.default_state()).is_ok()
    }

    /// Piece boundaries of `x ↦ Δ(x)` near which Birkhoff samples are skipped.
    fn near_boundary(&self, x: &State) -> bool {
        const EPS: f64 = 1e-9;
        match (&self.kind, x) {
            (Kind::Convolution { a1, a2, .. }, State::Circle(v)) => {
                let v = v.rem_euclid(*a2);
                v < EPS || (v - a1).abs() < EPS || a2 - v < EPS
            }
            (Kind::Multi { a, .. }, State::Torus(v)) => {
                let ak = a[a.len() - 1];
                v.iter().zip(a).any(|(t, aj)| {
                    let t = t.rem_euclid(*aj);
                    t < EPS || (t - ak).abs() < EPS || aj - t < EPS
                })
            }
            (Kind::Projection { planar, .. }, State::Circle(v)) => {
                let (s, c) = v.sin_cos();
                planar.iter().enumerate().any(|(i, (p, _))| {
                    planar[i + 1..].iter().any(|(r, _)| {
                        let (dx, dy) = (p[0] - r[0], p[1] - r[1]);
                        let len = dx.hypot(dy);
                        len > 0.0 && (c * dx + s * dy).abs() < EPS * len
                    })
                })
            }
            (Kind::Skip { base, .. }, State::Product(b, _)) => base.near_boundary(b),
            (Kind::Skip { base, .. }, s) => base.near_boundary(s),
            _ => false,
        }
    }

    /// Progressive generator of the stages `μ_{x,0}, μ_{x,1}, ...`.
    pub fn stages(&self, x: &State) -> Result<Stages<'_, f64>> {
        self.validate_state(x)?;
        Stages::new(self, x.clone(), self.lambda)
    }

    pub fn stages_exact(&self, x: &State) -> Result<Stages<'_, QuadNum>> {
        self.validate_state(x)?;
        let l = self
            .lambda_exact
            .clone()
            .ok_or_else(|| Error::Argument("exact mode needs an exact contraction".into()))?;
        self.delta_exact(x)?;
        Stages::new(self, x.clone(), l)
    }

    /// `ln ‖Δ(x)‖_q^q` averaged against the invariant measure: closed form
    /// where the norms factor, Birkhoff average over `x_samples` orbit points
    /// otherwise.
    pub fn log_norm_integral(&self, q: f64, x_samples: usize) -> Result<f64> {
        if !(q > 1.0) {
            return Err(Error::Domain(format!("q must exceed 1, got {q}")));
        }
        match &self.kind {
            Kind::SelfSimilar { delta, .. } => Ok(norm_q(delta, q).ln()),
            Kind::Convolution { d1, d2, a1, a2 } => Ok(norm_q(d1, q).ln() + a1 / a2 * norm_q(d2, q).ln()),
            Kind::Multi { deltas, a } => {
                let k = deltas.len();
                let ak = a[k - 1];
                let mut s = norm_q(&deltas[k - 1], q).ln();
                for j in 0..k - 1 {
                    s += ak / a[j] * norm_q(&deltas[j], q).ln();
                }
                Ok(s)
            }
            Kind::Projection { .. } => self.birkhoff_log_norm(q, &self.default_state(), x_samples),
            Kind::Skip { base, k, keep } => {
                let b = base.log_norm_integral(q, x_samples)?;
                Ok(match keep {
                    Keep::NonMultiples => b * (*k as f64 - 1.0) / *k as f64,
                    Keep::Multiples => b,
                })
            }
        }
    }

    /// Orbit average of `ln ‖Δ(T^i x0)‖_q^q`, skipping samples that fall
    /// within 1e-9 of a piece boundary.
    pub fn birkhoff_log_norm(&self, q: f64, x0: &State, samples: usize) -> Result<f64> {
        if samples == 0 {
            return Err(Error::Argument("need at least one Birkhoff sample".into()));
        }
        self.validate_state(x0)?;
        let mut sum = 0.0;
        let mut used = 0usize;
        let mut i = 0u64;
        while used < samples {
            let x = self.step(x0, i);
            i += 1;
            if self.near_boundary(&x) {
                if i > 4 * samples as u64 + 16 {
                    return Err(Error::Degenerate("orbit keeps hitting piece boundaries".into()));
                }
                continue;
            }
            sum += norm_q(&self.delta_unchecked(&x)?, q).ln();
            used += 1;
        }
        Ok(sum / samples as f64)
    }

    /// Equidistributed states for uniform-in-x checks (Kronecker sequence).
    pub fn sample_states(&self, count: usize) -> Vec<State> {
        sample_space(&self.state_space(), count)
    }
}

fn origin_of(space: &StateSpace) -> State {
    match space {
        StateSpace::Trivial => State::Trivial,
        StateSpace::Circle { .. } => State::Circle(0.0),
        StateSpace::Torus { periods } => State::Torus(vec![0.0; periods.len()]),
        StateSpace::Product { base, .. } => State::Product(Box::new(origin_of(base)), 0),
    }
}

fn kronecker(i: usize, dim: usize, coord: usize) -> f64 {
    // Generalised golden ratio of dimension `dim` gives good low-discrepancy
    // sequences in every dimension.
    let mut phi = 2.0f64;
    for _ in 0..32 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alpha = phi.powi(-(coord as i32 + 1));
    (0.5 + alpha * i as f64).fract()
}

fn sample_space(space: &StateSpace, count: usize) -> Vec<State> {
    (0..count)
        .map(|i| match space {
            StateSpace::Trivial => State::Trivial,
            StateSpace::Circle { period } => State::Circle(kronecker(i, 1, 0) * period),
            StateSpace::Torus { periods } => State::Torus(
                periods
                    .iter()
                    .enumerate()
                    .map(|(c, p)| kronecker(i, periods.len(), c) * p)
                    .collect(),
            ),
            StateSpace::Product { base, k } => {
                State::Product(Box::new(sample_space(base, i + 1).pop().unwrap()), i % k)
            }
        })
        .collect()
}

fn rotate(x: f64, n: u64, step: f64, period: f64) -> f64 {
    let shift = (n as f64 * step).rem_euclid(period);
    (x.rem_euclid(period) + shift).rem_euclid(period)
}

/// Coordinate types a model can be generated in.
pub trait StageLocation: Location {
    fn delta_of(model: &Model, x: &State) -> Result<AtomicMeasure<Self>>;
}

impl StageLocation for f64 {
    fn delta_of(model: &Model, x: &State) -> Result<AtomicMeasure<f64>> {
        model.delta_unchecked(x)
    }
}

impl StageLocation for QuadNum {
    fn delta_of(model: &Model, x: &State) -> Result<AtomicMeasure<QuadNum>> {
        model.delta_exact(x)
    }
}

/// Holds `μ_{x,n}` and extends it one stage at a time.
pub struct Stages<'a, L: StageLocation> {
    model: &'a Model,
    x: State,
    n: u64,
    acc: AtomicMeasure<L>,
    lambda: L,
    lambda_pow: L,
    cap: u64,
    /// Product of the support sizes of the stage symbols.
    naive_count: u128,
}

impl<'a, L: StageLocation> Stages<'a, L> {
    fn new(model: &'a Model, x: State, lambda: L) -> Result<Self> {
        Ok(Stages {
            model,
            x,
            n: 0,
            acc: AtomicMeasure::dirac(L::origin()),
            lambda,
            lambda_pow: L::unit(),
            cap: atom_capacity(),
            naive_count: 1,
        })
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn current(&self) -> &AtomicMeasure<L> {
        &self.acc
    }

    pub fn into_current(self) -> AtomicMeasure<L> {
        self.acc
    }

    /// Product of symbol support sizes so far; exceeds the atom count by
    /// the number of coincidences.
    pub fn naive_count(&self) -> u128 {
        self.naive_count
    }

    pub fn advance(&mut self) -> Result<&AtomicMeasure<L>> {
        let xi = self.model.step(&self.x, self.n);
        let d = L::delta_of(self.model, &xi)?;
        let scaled = d.affine_image(&self.lambda_pow, &L::origin());
        self.acc = self.acc.convolve_capped(&scaled, self.cap)?;
        self.naive_count = self.naive_count.saturating_mul(d.len() as u128);
        self.lambda_pow = self.lambda_pow.mul(&self.lambda);
        self.n += 1;
        Ok(&self.acc)
    }

    pub fn advance_to(&mut self, n: u64) -> Result<&AtomicMeasure<L>> {
        while self.n < n {
            self.advance()?;
        }
        Ok(&self.acc)
    }
}

/// `μ_{x,n}` for a model.
pub fn generate_atoms(model: &Model, x: &State, n: u64) -> Result<AtomicMeasure> {
    let mut s = model.stages(x)?;
    s.advance_to(n)?;
    Ok(s.into_current())
}

/// `μ_{x,n}` with exact coordinates; coincidences are counted by `merged()`.
pub fn generate_atoms_exact(model: &Model, x: &State, n: u64) -> Result<AtomicMeasure<QuadNum>> {
    let mut s = model.stages_exact(x)?;
    s.advance_to(n)?;
    Ok(s.into_current())
}

/// `min(∫ log ‖Δ(x)‖_q^q dℙ / ((q-1) log λ), 1)`.
pub fn theoretical_dimension(model: &Model, q: f64, x_samples: usize) -> Result<f64> {
    if !(q > 1.0) {
        return Err(Error::Domain(format!("q must exceed 1, got {q}")));
    }
    let i = model.log_norm_integral(q, x_samples)?;
    Ok((i / ((q - 1.0) * model.lambda.ln())).min(1.0))
}

/// IFS `{λ_i x + t_i}` with probability weights `p_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonHomIFS {
    maps: Vec<(f64, f64)>,
    weights: Vec<f64>,
}

impl NonHomIFS {
    pub fn new(maps: Vec<(f64, f64)>, weights: Vec<f64>) -> Result<Self> {
        if maps.is_empty() || maps.len() != weights.len() {
            return Err(Error::Argument("need one weight per map and at least one map".into()));
        }
        for (i, (l, t)) in maps.iter().enumerate() {
            if !(l.abs() < 1.0 && *l != 0.0 && t.is_finite()) {
                return Err(Error::Argument(format!("map {i}: contraction {l} must satisfy 0 < |lambda| < 1")));
            }
        }
        if weights.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Argument("weights must be strictly positive".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::Argument(format!("weights sum to {s}, not 1")));
        }
        Ok(NonHomIFS { maps, weights })
    }

    pub fn maps(&self) -> &[(f64, f64)] {
        &self.maps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Words of `Ω_m` sharing one contraction ratio.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioClass {
    pub ratio: f64,
    pub words: usize,
    pub mass: f64,
}

#[derive(Clone, Debug)]
pub struct NonHomStage {
    pub measure: AtomicMeasure,
    /// `|Ω_m|`.
    pub word_count: usize,
    /// The partition `Λ_m` of `Ω_m` by `|λ_u|`, ascending.
    pub classes: Vec<RatioClass>,
    /// The words themselves (1-based letters) when `|Ω_m|` is small.
    pub words: Option<Vec<Vec<usize>>>,
}

const WORD_LIST_LIMIT: usize = 4096;

/// `μ_m = Σ_{u ∈ Ω_m} p_u δ(t_u)` where `Ω_m` holds the words with
/// `|λ_u| ≤ 2^-m` whose parent is above `2^-m`.
pub fn generate_nonhom(ifs: &NonHomIFS, m: u32) -> Result<NonHomStage> {
    let cap = atom_capacity();
    let thr = (-(m as f64)).exp2();
    struct Node {
        lam: f64,
        t: f64,
        p: f64,
        word: Vec<usize>,
    }
    let mut leaves: Vec<(f64, f64, f64)> = vec![];
    let mut words: Vec<Vec<usize>> = vec![];
    let mut keep_words = true;
    let mut stack = vec![Node { lam: 1.0, t: 0.0, p: 1.0, word: vec![] }];
    while let Some(u) = stack.pop() {
        if u.lam.abs() <= thr {
            leaves.push((u.lam.abs(), u.t, u.p));
            if leaves.len() as u64 > cap {
                return Err(Error::Capacity { what: "stopping set".into(), needed: leaves.len() as u128, cap: cap as u128 });
            }
            if keep_words {
                if words.len() < WORD_LIST_LIMIT {
                    words.push(u.word);
                } else {
                    keep_words = false;
                    words.clear();
                }
            }
            continue;
        }
        for (i, (&(l, t), &p)) in ifs.maps.iter().zip(&ifs.weights).enumerate().rev() {
            let mut word = Vec::new();
            if keep_words {
                word = u.word.clone();
                word.push(i + 1);
            }
            stack.push(Node { lam: u.lam * l, t: u.t + u.lam * t, p: u.p * p, word });
        }
    }
    let word_count = leaves.len();
    let mut ratios: Vec<(f64, f64)> = leaves.iter().map(|&(l, _, p)| (l, p)).collect();
    ratios.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut classes: Vec<RatioClass> = vec![];
    for (l, p) in ratios {
        match classes.last_mut() {
            Some(c) if (l - c.ratio).abs() <= 1e-12 * c.ratio => {
                c.words += 1;
                c.mass += p;
            }
            _ => classes.push(RatioClass { ratio: l, words: 1, mass: p }),
        }
    }
    let measure = AtomicMeasure::new(leaves.into_iter().map(|(_, t, p)| (t, p)).collect())?;
    Ok(NonHomStage { measure, word_count, classes, words: keep_words.then_some(words) })
}

/// Atom list in JSON: `{"atoms": [[location, mass], ...]}` with exact or
/// float entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomsSpec {
    pub atoms: Vec<(Scalar, Scalar)>,
}

impl AtomsSpec {
    fn check_masses(&self) -> Result<()> {
        let s: f64 = self.atoms.iter().map(|a| a.1.value).sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::Argument(format!("atom masses sum to {s}, not 1")));
        }
        Ok(())
    }

    pub fn to_measure(&self) -> Result<AtomicMeasure> {
        self.check_masses()?;
        AtomicMeasure::new(self.atoms.iter().map(|(l, m)| (l.value, m.value)).collect())
    }

    /// Exact coordinates when every location is exact.
    pub fn to_exact(&self) -> Option<AtomicMeasure<QuadNum>> {
        let atoms: Option<Vec<_>> = self
            .atoms
            .iter()
            .map(|(l, m)| l.exact.clone().map(|e| (e, m.value)))
            .collect();
        AtomicMeasure::new(atoms?).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarAtom {
    pub at: [f64; 2],
    pub mass: f64,
}

/// JSON description of a model, tagged by `"type"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Selfsimilar {
        delta: AtomsSpec,
        lambda: Scalar,
    },
    Convolution {
        delta1: AtomsSpec,
        lambda1: Scalar,
        delta2: AtomsSpec,
        lambda2: Scalar,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        irrational: Option<bool>,
    },
    Multiconvolution {
        deltas: Vec<AtomsSpec>,
        lambdas: Vec<Scalar>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        irrational: Option<bool>,
    },
    Projection {
        atoms: Vec<PlanarAtom>,
        lambda: Scalar,
        alpha: Scalar,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        irrational: Option<bool>,
    },
    Skip {
        base: Box<ModelSpec>,
        k: usize,
        keep: Keep,
    },
    Nonhom {
        maps: Vec<(Scalar, Scalar)>,
        weights: Vec<Scalar>,
    },
}

impl ModelSpec {
    pub fn to_model(&self) -> Result<Model> {
        match self {
            ModelSpec::Selfsimilar { delta, lambda } => {
                delta.check_masses()?;
                match (delta.to_exact(), &lambda.exact) {
                    (Some(d), Some(l)) => make_selfsimilar_exact(&d, l),
                    _ => make_selfsimilar(&delta.to_measure()?, lambda.value),
                }
            }
            ModelSpec::Convolution { delta1, lambda1, delta2, lambda2, irrational } => Ok(make_convolution(
                &delta1.to_measure()?,
                lambda1.value,
                &delta2.to_measure()?,
                lambda2.value,
            )?
            .with_irrationality_assertion(*irrational)),
            ModelSpec::Multiconvolution { deltas, lambdas, irrational } => {
                let ds = deltas.iter().map(|d| d.to_measure()).collect::<Result<Vec<_>>>()?;
                let ls: Vec<f64> = lambdas.iter().map(|l| l.value).collect();
                Ok(make_multi_convolution(&ds, &ls)?.with_irrationality_assertion(*irrational))
            }
            ModelSpec::Projection { atoms, lambda, alpha, irrational } => {
                let s: f64 = atoms.iter().map(|a| a.mass).sum();
                if (s - 1.0).abs() > 1e-10 || atoms.iter().any(|a| !(a.mass > 0.0)) {
                    return Err(Error::Argument(format!("planar masses must be positive and sum to 1, got {s}")));
                }
                let pl: Vec<_> = atoms.iter().map(|a| (a.at, a.mass)).collect();
                Ok(make_projection(&pl, lambda.value, alpha.value)?.with_irrationality_assertion(*irrational))
            }
            ModelSpec::Skip { base, k, keep } => make_skip(&base.to_model()?, *k, *keep),
            ModelSpec::Nonhom { .. } => Err(Error::Argument(
                "a non-homogeneous IFS is not a (X, T, Delta, lambda) model; use it where an IFS is accepted".into(),
            )),
        }
    }

    pub fn to_nonhom(&self) -> Result<NonHomIFS> {
        match self {
            ModelSpec::Nonhom { maps, weights } => NonHomIFS::new(
                maps.iter().map(|(l, t)| (l.value, t.value)).collect(),
                weights.iter().map(|w| w.value).collect(),
            ),
            _ => Err(Error::Argument("expected a model of type nonhom".into())),
        }
    }

    pub fn is_nonhom(&self) -> bool {
        matches!(self, ModelSpec::Nonhom { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(locs: &[f64]) -> AtomicMeasure {
        AtomicMeasure::uniform(locs.to_vec()).unwrap()
    }

    fn same_atoms(a: &AtomicMeasure, b: &AtomicMeasure, tol: f64) {
        assert_eq!(a.len(), b.len(), "atom counts differ");
        for (x, y) in a.atoms().iter().zip(b.atoms()) {
            assert!((x.0 - y.0).abs() <= tol, "locations {} vs {}", x.0, y.0);
            assert!((x.1 - y.1).abs() <= 1e-12, "masses {} vs {}", x.1, y.1);
        }
    }

    // Expansion of ∗_{i<n} S_{λ^i} Δ straight from the definition.
    fn expand(delta: &AtomicMeasure, lambda: f64, n: usize, scale: f64) -> AtomicMeasure {
        let mut atoms = vec![(0.0, 1.0)];
        for i in 0..n {
            let s = scale * lambda.powi(i as i32);
            let mut next = vec![];
            for &(x, w) in &atoms {
                for &(y, v) in delta.atoms() {
                    next.push((x + s * y, w * v));
                }
            }
            atoms = next;
        }
        AtomicMeasure::new(atoms).unwrap()
    }

    fn q(s: &str) -> QuadNum {
        QuadNum::parse(s).unwrap()
    }

    #[test]
    fn empty_stage_is_dirac() {
        let m = make_selfsimilar(&uni(&[0.0, 1.0]), 0.4).unwrap();
        assert_eq!(generate_atoms(&m, &State::Trivial, 0).unwrap(), AtomicMeasure::dirac(0.0));
    }

    #[test]
    fn cantor_two_stages() {
        let d = AtomicMeasure::uniform(vec![q("0"), q("1")]).unwrap();
        let m = make_selfsimilar_exact(&d, &q("1/3")).unwrap();
        let g = generate_atoms_exact(&m, &State::Trivial, 2).unwrap();
        let want = [q("0"), q("1/3"), q("1"), q("4/3")];
        assert_eq!(g.len(), 4);
        for (a, w) in g.atoms().iter().zip(want) {
            assert_eq!(a.0, w);
            assert_eq!(a.1, 0.25);
        }
        let f = generate_atoms(&m, &State::Trivial, 2).unwrap();
        same_atoms(&f, &uni(&[0.0, 1.0 / 3.0, 1.0, 4.0 / 3.0]), 1e-15);
    }

    #[test]
    fn preconditions() {
        let d = uni(&[0.0, 1.0]);
        assert!(make_selfsimilar(&d, 1.0).is_err());
        assert!(make_convolution(&d, 0.5, &d, 0.5).is_err());
        assert!(make_multi_convolution(&[d.clone()], &[0.5]).is_err());
        let base = make_selfsimilar(&d, 0.5).unwrap();
        assert!(make_skip(&base, 1, Keep::Multiples).is_err());
        assert!(base.stages(&State::Circle(0.0)).is_err());
    }

    #[test]
    fn convolution_pieces() {
        let d1 = uni(&[0.0, 1.0]);
        let d2 = uni(&[0.0, 0.25]);
        let m = make_convolution(&d1, 0.5, &d2, 1.0 / 3.0).unwrap();
        let g = generate_atoms(&m, &State::Circle(0.0), 1).unwrap();
        same_atoms(&g, &uni(&[0.0, 0.25, 1.0, 1.25]), 1e-15);
        let a1 = 2f64.ln();
        let x = 0.5 * (a1 + 3f64.ln());
        same_atoms(&m.delta(&State::Circle(x)).unwrap(), &d1, 0.0);
        same_atoms(&m.delta(&State::Circle(a1)).unwrap(), &d1, 0.0);
        let y = 0.3;
        same_atoms(&m.delta(&State::Circle(y)).unwrap(), &uni(&[0.0, 0.25 * y.exp(), 1.0, 1.0 + 0.25 * y.exp()]), 1e-15);
    }

    #[test]
    fn convolution_orbit_identity() {
        let d = uni(&[0.0, 1.0]);
        let (l1, l2) = (0.5, 1.0 / 3.0);
        let m = make_convolution(&d, l1, &d, l2).unwrap();
        let x = 0.37;
        for n in [1u64, 5, 17, 100, 1000] {
            let State::Circle(tn) = m.step(&State::Circle(x), n) else { panic!() };
            let lhs = tn.exp() * l1.powi(n as i32);
            let w = ((x + n as f64 * -l1.ln() - tn) / -l2.ln()).round();
            let rhs = x.exp() * l2.powi(w as i32);
            assert!((lhs / rhs - 1.0).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn convolution_stage_expansion() {
        let d1 = uni(&[0.0, 2.0]);
        let d2 = uni(&[0.0, 2.0]);
        let (l1, l2) = (1.0 / 3.0, 0.25);
        let m = make_convolution(&d1, l1, &d2, l2).unwrap();
        let (a1, a2) = (-l1.ln(), -l2.ln());
        for &x in &[0.0, 0.2, 1.2, 1.38] {
            for n in 1..=7 {
                let visits = (0..n).filter(|&i| (x + i as f64 * a1).rem_euclid(a2) < a1).count();
                let left = expand(&d1, l1, n, 1.0);
                // For x in [a1, a2) the first Δ2 factor only enters after a wrap.
                let scale = if x < a1 { x.exp() } else { x.exp() * l2 };
                let right = expand(&d2, l2, visits, scale);
                let want = left.convolve(&right).unwrap();
                let got = generate_atoms(&m, &State::Circle(x), n as u64).unwrap();
                same_atoms(&got, &want, 1e-12);
            }
        }
    }

    #[test]
    fn multi_with_two_factors_is_the_convolution_model() {
        let da = uni(&[0.0, 1.0]);
        let db = AtomicMeasure::new(vec![(0.0, 0.25), (0.5, 0.75)]).unwrap();
        let multi = make_multi_convolution(&[da.clone(), db.clone()], &[0.3, 0.6]).unwrap();
        let conv = make_convolution(&db, 0.6, &da, 0.3).unwrap();
        for x in [0.0, 0.4, 1.0] {
            for n in 0..=4 {
                let a = generate_atoms(&multi, &State::Torus(vec![x]), n).unwrap();
                let b = generate_atoms(&conv, &State::Circle(x), n).unwrap();
                same_atoms(&a, &b, 1e-13);
            }
        }
    }

    #[test]
    fn multi_origin_and_space() {
        let ds = [uni(&[0.0, 1.0]), uni(&[0.0, 0.5]), uni(&[0.0, 0.1])];
        let m = make_multi_convolution(&ds, &[0.2, 1.0 / 3.0, 0.5]).unwrap();
        let origin = m.default_state();
        assert_eq!(origin, State::Torus(vec![0.0, 0.0]));
        let g = generate_atoms(&m, &origin, 1).unwrap();
        let want = ds[0].convolve(&ds[1]).unwrap().convolve(&ds[2]).unwrap();
        same_atoms(&g, &want, 1e-15);
        let m = make_multi_convolution(&ds, &[0.5, 1.0 / 3.0 + 0.3, 0.9]).unwrap();
        assert!(matches!(m.state_space(), StateSpace::Torus { ref periods } if periods.len() == 2));
    }

    #[test]
    fn projection_axis_aligned_is_selfsimilar() {
        let planar = [([0.0, 0.0], 0.5), ([1.0, 5.0], 0.5)];
        let p = make_projection(&planar, 0.4, 0.0).unwrap();
        let s = make_selfsimilar(&uni(&[0.0, 1.0]), 0.4).unwrap();
        for n in 0..6 {
            same_atoms(
                &generate_atoms(&p, &State::Circle(0.0), n).unwrap(),
                &generate_atoms(&s, &State::Trivial, n).unwrap(),
                1e-14,
            );
        }
    }

    #[test]
    fn projection_matches_planar_stage() {
        let planar = [([0.0, 0.0], 1.0 / 3.0), ([0.0, 1.0], 1.0 / 3.0), ([1.0, 0.0], 1.0 / 3.0)];
        let (lambda, alpha): (f64, f64) = (1.0 / 3.0, 2f64.sqrt());
        let p = make_projection(&planar, lambda, alpha).unwrap();
        let theta: f64 = 0.7;
        for n in 0..5 {
            // Planar stage ∗_{i<n} λ^i R_α^i Δ̃, then ⟨(cos θ, sin θ), ·⟩.
            let mut pts = vec![([0.0f64, 0.0f64], 1.0f64)];
            for i in 0..n {
                let (s, c) = (alpha * i as f64).sin_cos();
                let r = lambda.powi(i);
                let mut next = vec![];
                for &(p0, w) in &pts {
                    for &(y, v) in &planar {
                        let ry = [c * y[0] - s * y[1], s * y[0] + c * y[1]];
                        next.push(([p0[0] + r * ry[0], p0[1] + r * ry[1]], w * v));
                    }
                }
                pts = next;
            }
            let (s, c) = theta.sin_cos();
            let want = AtomicMeasure::new(pts.iter().map(|(p0, w)| (c * p0[0] + s * p0[1], *w)).collect()).unwrap();
            let got = generate_atoms(&p, &State::Circle(theta), n as u64).unwrap();
            same_atoms(&got, &want, 1e-13);
        }
    }

    #[test]
    fn gasket_projection_symbol() {
        let planar = [([0.0, 0.0], 1.0 / 3.0), ([0.0, 1.0], 1.0 / 3.0), ([1.0, 0.0], 1.0 / 3.0)];
        let p = make_projection(&planar, 1.0 / 3.0, 0.0).unwrap();
        let t = 0.4f64;
        let d = p.delta(&State::Circle(t)).unwrap();
        same_atoms(&d, &uni(&[0.0, t.sin(), t.cos()]), 1e-15);
    }

    #[test]
    fn skip_multiples_of_bernoulli_convolution() {
        let d = uni(&[-1.0, 1.0]);
        let base = make_selfsimilar(&d, 0.8).unwrap();
        for k in [2usize, 3] {
            let mult = make_skip(&base, k, Keep::Multiples).unwrap();
            let direct = make_selfsimilar(&d, 0.8f64.powi(k as i32)).unwrap();
            for n in 0..5 {
                same_atoms(
                    &generate_atoms(&mult, &State::Trivial, n).unwrap(),
                    &generate_atoms(&direct, &State::Trivial, n).unwrap(),
                    1e-13,
                );
            }
        }
    }

    #[test]
    fn skip_stagewise_identity_exact() {
        let d = AtomicMeasure::uniform(vec![q("-1"), q("1")]).unwrap();
        for lam in ["1/2", "2/3", "(sqrt(5)-1)/2"] {
            let base = make_selfsimilar_exact(&d, &q(lam)).unwrap();
            for k in [2usize, 3] {
                let non = make_skip(&base, k, Keep::NonMultiples).unwrap();
                let mult = make_skip(&base, k, Keep::Multiples).unwrap();
                for n in 0..=3u64 {
                    let whole = generate_atoms_exact(&base, &State::Trivial, k as u64 * n).unwrap();
                    let a = generate_atoms_exact(&non, &State::Product(Box::new(State::Trivial), 0), k as u64 * n).unwrap();
                    let b = generate_atoms_exact(&mult, &State::Trivial, n).unwrap();
                    let prod = a.convolve(&b).unwrap();
                    assert_eq!(prod.len(), whole.len(), "lambda={lam} k={k} n={n}");
                    for (x, y) in prod.atoms().iter().zip(whole.atoms()) {
                        assert_eq!(x.0, y.0);
                        assert!((x.1 - y.1).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn skip_identity_on_a_dynamical_base() {
        let base = make_convolution(&uni(&[0.0, 1.0]), 0.5, &uni(&[0.0, 1.0]), 0.3).unwrap();
        let x = State::Circle(0.4);
        for k in [2usize, 3] {
            let non = make_skip(&base, k, Keep::NonMultiples).unwrap();
            let mult = make_skip(&base, k, Keep::Multiples).unwrap();
            for n in 0..=3u64 {
                let whole = generate_atoms(&base, &x, k as u64 * n).unwrap();
                let a = generate_atoms(&non, &State::Product(Box::new(x.clone()), 0), k as u64 * n).unwrap();
                let b = generate_atoms(&mult, &x, n).unwrap();
                same_atoms(&a.convolve(&b).unwrap(), &whole, 1e-12);
            }
        }
    }

    #[test]
    fn self_similarity_relation() {
        let base = make_convolution(&uni(&[0.0, 1.0]), 0.6, &uni(&[0.0, 1.0, 3.0]), 0.35).unwrap();
        let x = State::Circle(0.1);
        for (n, n2) in [(1u64, 2u64), (3, 3), (4, 2)] {
            let whole = generate_atoms(&base, &x, n + n2).unwrap();
            let head = generate_atoms(&base, &x, n).unwrap();
            let tail = generate_atoms(&base, &base.step(&x, n), n2).unwrap();
            let s = base.lambda().powi(n as i32);
            let rebuilt = head.convolve(&tail.affine_image(&s, &0.0)).unwrap();
            same_atoms(&rebuilt, &whole, 1e-12);
            assert!((whole.total_mass() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn orbit_closed_form() {
        let base = make_convolution(&uni(&[0.0, 1.0]), 0.6, &uni(&[0.0, 1.0]), 0.35).unwrap();
        let (a1, a2) = (-(0.6f64).ln(), -(0.35f64).ln());
        let mut it = 0.25f64;
        for n in 0..=2000u64 {
            let State::Circle(v) = base.step(&State::Circle(0.25), n) else { panic!() };
            let d = (v - it).abs();
            assert!(d.min(a2 - d) < 1e-11, "n={n}: {v} vs {it}");
            it = (it + a1) % a2;
        }
    }

    #[test]
    fn nonhom_words() {
        let ifs = NonHomIFS::new(vec![(0.5, 0.0), (0.25, 0.5)], vec![0.5, 0.5]).unwrap();
        let st = generate_nonhom(&ifs, 2).unwrap();
        let mut words = st.words.clone().unwrap();
        words.sort();
        assert_eq!(words, vec![vec![1, 1], vec![1, 2], vec![2]]);
        assert_eq!(st.word_count, 3);
        assert!((st.measure.total_mass() - 1.0).abs() < 1e-15);
        let st0 = generate_nonhom(&ifs, 0).unwrap();
        assert_eq!(st0.words.unwrap(), vec![Vec::<usize>::new()]);

        let hom = NonHomIFS::new(vec![(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)], vec![0.5, 0.5]).unwrap();
        for m in 1..=12u32 {
            let st = generate_nonhom(&hom, m).unwrap();
            let len = (m as f64 / 3f64.log2()).ceil() as usize;
            assert!(st.words.unwrap().iter().all(|w| w.len() == len));
            assert_eq!(st.word_count, 1 << len);
            assert_eq!(st.classes.len(), 1);
        }
    }

    #[test]
    fn nonhom_ratio_classes_grow_polynomially() {
        let ifs = NonHomIFS::new(vec![(0.5, 0.0), (1.0 / 3.0, 0.6)], vec![0.4, 0.6]).unwrap();
        for m in 2..=20u32 {
            let st = generate_nonhom(&ifs, m).unwrap();
            assert!(st.classes.len() <= ((m + 1) * (m + 1)) as usize);
            let mass: f64 = st.classes.iter().map(|c| c.mass).sum();
            assert!((mass - 1.0).abs() < 1e-12);
            let words: usize = st.classes.iter().map(|c| c.words).sum();
            assert_eq!(words, st.word_count);
        }
    }

    #[test]
    fn theoretical_dimension_examples() {
        let two = uni(&[0.0, 1.0]);
        for q in [1.5, 2.0, 5.0] {
            let m = make_selfsimilar(&two, 1.0 / 3.0).unwrap();
            let d = theoretical_dimension(&m, q, 1).unwrap();
            assert!((d - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
            let m = make_selfsimilar(&two, 0.5).unwrap();
            assert!((theoretical_dimension(&m, q, 1).unwrap() - 1.0).abs() < 1e-12);
        }
        let m = make_convolution(&uni(&[0.0, 2.0]), 1.0 / 3.0, &uni(&[0.0, 2.0]), 0.25).unwrap();
        assert_eq!(theoretical_dimension(&m, 2.0, 1).unwrap(), 1.0);
        assert!(matches!(theoretical_dimension(&m, 1.0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn birkhoff_average_agrees_with_closed_form() {
        let m = make_convolution(&uni(&[0.0, 2.0]), 0.2, &AtomicMeasure::new(vec![(0.0, 0.3), (1.0, 0.7)]).unwrap(), 0.1).unwrap();
        let closed = m.log_norm_integral(2.0, 1).unwrap();
        let avg = m.birkhoff_log_norm(2.0, &State::Circle(0.123), 20_000).unwrap();
        assert!((closed - avg).abs() < 1e-3, "{closed} vs {avg}");
    }

    #[test]
    fn skip_dimensions() {
        let base = make_selfsimilar(&uni(&[0.0, 1.0]), 0.25).unwrap();
        let b = theoretical_dimension(&base, 2.0, 1).unwrap();
        let non = make_skip(&base, 3, Keep::NonMultiples).unwrap();
        let mult = make_skip(&base, 3, Keep::Multiples).unwrap();
        assert!((theoretical_dimension(&non, 2.0, 1).unwrap() - b * 2.0 / 3.0).abs() < 1e-12);
        assert!((theoretical_dimension(&mult, 2.0, 1).unwrap() - b / 3.0).abs() < 1e-12);
    }

    #[test]
    fn near_rational_heuristic() {
        assert_eq!(near_rational(0.75, 10_000, 1e-12), Some((3, 4)));
        assert_eq!(near_rational(2f64.sqrt(), 10_000, 1e-12), None);
        let m = make_convolution(&uni(&[0.0, 1.0]), 0.5, &uni(&[0.0, 1.0]), 0.25).unwrap();
        assert_eq!(m.irrationality_checks()[0].near_rational, Some((2, 1)));
    }

    #[test]
    fn spec_json() {
        let s = r#"{"type":"selfsimilar","delta":{"atoms":[["0","1/2"],["1","1/2"]]},"lambda":"1/3"}"#;
        let spec: ModelSpec = serde_json::from_str(s).unwrap();
        let m = spec.to_model().unwrap();
        assert!(m.supports_exact());
        let s = r#"{"type":"skip","base":{"type":"selfsimilar","delta":{"atoms":[[-1,0.5],[1,0.5]]},"lambda":0.7},"k":2,"keep":"non_multiples"}"#;
        let spec: ModelSpec = serde_json::from_str(s).unwrap();
        assert!(!spec.to_model().unwrap().supports_exact());
        let bad = r#"{"type":"selfsimilar","delta":{"atoms":[]},"lambda":"1/3","extra":1}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad).is_err());
        let nh = r#"{"type":"nonhom","maps":[["1/2",0],["1/4","1/2"]],"weights":["1/2","1/2"]}"#;
        let spec: ModelSpec = serde_json::from_str(nh).unwrap();
        assert!(spec.to_model().is_err());
        assert_eq!(spec.to_nonhom().unwrap().maps().len(), 2);
        let st: State = serde_json::from_str(r#"{"product":[{"circle":0.5},1]}"#).unwrap();
        assert_eq!(st, State::Product(Box::new(State::Circle(0.5)), 1));
    }
}
