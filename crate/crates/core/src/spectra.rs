//! Empirical and theoretical L^q spectra, Legendre transforms, Frostman
//! exponents, the τ̃ equation of non-homogeneous systems, and
//! sub-multiplicativity diagnostics for `φ_n = ‖μ_{x,n}^{(m(n))}‖_q^q`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dyadic_measure::{coarsen, lq_norm, lq_sum_streaming, AtomicMeasure, DyadicMeasure, MAX_SCALE_SPARSE};
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::models::{theoretical_dimension, Model, NonHomIFS, Stages, State};

/// Default q grid, dense near 1 and reaching into the large-q regime.
pub const DEFAULT_Q_GRID: [f64; 10] = [1.01, 1.1, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 20.0];

const BIRKHOFF_SAMPLES: usize = 4096;

/// Extra binary digits of resolution the stage measure gets beyond the cell
/// size, so cell masses settle to those of the limit measure.
pub const GUARD_BITS: u32 = 5;

/// What to measure: a model stage sequence from a fixed state, or a grid
/// measure coarsened to each scale.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    Model { model: &'a Model, state: &'a State },
    Measure(&'a DyadicMeasure),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleValue {
    pub m: u32,
    /// `log2 Σ_I μ(I)^q`.
    pub log2_sum: f64,
    /// `-log2 Σ_I μ(I)^q / m`.
    pub tau_single: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub q: f64,
    pub per_scale: Vec<ScaleValue>,
    /// Slope of `-log2 Σ μ(I)^q` against `m` over the top half of scales.
    pub regression_tau: f64,
    pub theoretical_tau: Option<f64>,
    pub lq_dimension: f64,
}

impl SpectrumReport {
    pub fn theoretical_dimension(&self) -> Option<f64> {
        self.theoretical_tau.map(|t| t / (self.q - 1.0))
    }
}

/// Stage count whose contraction first reaches scale `2^-m`.
pub fn stage_for_scale(lambda: f64, m: u32) -> u64 {
    (m as f64 / (1.0 / lambda).log2() - 1e-9).ceil().max(0.0) as u64
}

/// Smallest `m` with `2^-m ≤ λ^n`.
pub fn scale_for_stage(lambda: f64, n: u64) -> u32 {
    (n as f64 * (1.0 / lambda).log2() - 1e-9).ceil().max(0.0) as u32
}

/// Advances to at least the matching stage for scale `m`, then refines by up
/// to `GUARD_BITS` more digits while the atom capacity allows.
fn stage_at_scale<'s, 'a>(stages: &'s mut Stages<'a, f64>, lambda: f64, m: u32) -> Result<&'s AtomicMeasure> {
    stages.advance_to(stage_for_scale(lambda, m))?;
    let target = stage_for_scale(lambda, m + GUARD_BITS);
    while stages.n() < target {
        match stages.advance() {
            Ok(_) => {}
            Err(Error::Capacity { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(stages.current())
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 1.0) || q.is_infinite() {
        return Err(Error::Domain(format!("spectra need finite q > 1, got {q}")));
    }
    Ok(())
}

/// `log2 Σ_I μ(I)^q` for every q and every scale in `m_min..=m_max`.
fn scale_sums(source: Source<'_>, qs: &[f64], m_min: u32, m_max: u32) -> Result<Vec<Vec<(u32, f64)>>> {
    if !(4 <= m_min && m_min < m_max && m_max <= MAX_SCALE_SPARSE) {
        return Err(Error::Argument(format!(
            "need 4 <= m_min < m_max <= {MAX_SCALE_SPARSE}, got m_min = {m_min}, m_max = {m_max}"
        )));
    }
    for &q in qs {
        check_q(q)?;
    }
    let mut out = vec![Vec::new(); qs.len()];
    match source {
        Source::Measure(dm) => {
            if m_max > dm.scale_m() {
                return Err(Error::Argument(format!(
                    "m_max = {m_max} exceeds the measure scale {}",
                    dm.scale_m()
                )));
            }
            for m in m_min..=m_max {
                let c = coarsen(dm, m)?;
                for (qi, &q) in qs.iter().enumerate() {
                    out[qi].push((m, lq_norm(&c, q)?.log2()));
                }
            }
        }
        Source::Model { model, state } => {
            let window = model.window();
            let mut stages = model.stages(state)?;
            for m in m_min..=m_max {
                let mu = stage_at_scale(&mut stages, model.lambda(), m)?;
                for (qi, &q) in qs.iter().enumerate() {
                    out[qi].push((m, lq_sum_streaming(mu, m, window, q)?.log2()));
                }
            }
        }
    }
    Ok(out)
}

fn top_half_slope(sums: &[(u32, f64)], m_min: u32, m_max: u32) -> f64 {
    let from = m_min + (m_max - m_min) / 2;
    let (xs, ys): (Vec<f64>, Vec<f64>) = sums
        .iter()
        .filter(|(m, _)| *m >= from)
        .map(|&(m, s)| (m as f64, -s))
        .unzip();
    linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN)
}

/// Spectrum reports for several q at once, sharing the stage generation.
pub fn empirical_spectrum(source: Source<'_>, qs: &[f64], m_min: u32, m_max: u32) -> Result<Vec<SpectrumReport>> {
    let sums = scale_sums(source, qs, m_min, m_max)?;
    let mut out = Vec::with_capacity(qs.len());
    for (&q, s) in qs.iter().zip(sums) {
        let regression_tau = top_half_slope(&s, m_min, m_max);
        let theoretical_tau = match source {
            Source::Model { model, .. } => Some((q - 1.0) * theoretical_dimension(model, q, BIRKHOFF_SAMPLES)?),
            Source::Measure(_) => None,
        };
        let per_scale = s
            .into_iter()
            .map(|(m, log2_sum)| ScaleValue { m, log2_sum, tau_single: -log2_sum / m as f64 })
            .collect();
        out.push(SpectrumReport { q, per_scale, regression_tau, theoretical_tau, lq_dimension: regression_tau / (q - 1.0) });
    }
    Ok(out)
}

pub fn empirical_tau(source: Source<'_>, q: f64, m_min: u32, m_max: u32) -> Result<SpectrumReport> {
    Ok(empirical_spectrum(source, &[q], m_min, m_max)?.remove(0))
}

/// `(q-1) min(log ‖Δ‖_q^q / ((q-1) log λ), 1)` for homogeneous systems.
pub fn theoretical_tau_homogeneous(delta: &AtomicMeasure, lambda: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Argument(format!("lambda = {lambda} must lie in (0, 1)")));
    }
    let norm: f64 = delta.atoms().iter().map(|a| a.1.powf(q)).sum();
    Ok((q - 1.0) * (norm.ln() / ((q - 1.0) * lambda.ln())).min(1.0))
}

/// CSV with columns `q, m, tau_single, tau_regression, dimension, theoretical`.
pub fn spectrum_csv(reports: &[SpectrumReport]) -> String {
    let mut s = String::from("q,m,tau_single,tau_regression,dimension,theoretical\n");
    for r in reports {
        let th = r.theoretical_dimension().map(|t| format!("{t:.10}")).unwrap_or_default();
        for v in &r.per_scale {
            let _ = writeln!(
                s,
                "{},{},{:.10},{:.10},{:.10},{}",
                r.q, v.m, v.tau_single, r.regression_tau, r.lq_dimension, th
            );
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TauTilde {
    pub tau: f64,
    /// `min(τ̃/(q-1), 1)`.
    pub dimension: f64,
    pub residual: f64,
}

/// Root of `Σ p_i^q |λ_i|^{-τ} = 1`. The left side is strictly increasing
/// in τ and below 1 at τ = 0, so the root is unique and positive.
pub fn tau_tilde(ifs: &NonHomIFS, q: f64) -> Result<TauTilde> {
    check_q(q)?;
    let terms: Vec<(f64, f64)> = ifs
        .maps()
        .iter()
        .zip(ifs.weights())
        .map(|(&(l, _), &p)| (q * p.ln(), -l.abs().ln()))
        .collect();
    // g(τ) = Σ exp(q ln p + τ ln(1/|λ|)) - 1 and its derivative.
    let g = |t: f64| terms.iter().map(|(a, b)| (a + t * b).exp()).sum::<f64>() - 1.0;
    let dg = |t: f64| terms.iter().map(|(a, b)| b * (a + t * b).exp()).sum::<f64>();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Domain("tau-tilde bracket diverged".into()));
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = g(t);
        if v == 0.0 {
            break;
        }
        if v < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - v / dg(t);
        t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * hi.max(1.0) || g(t).abs() < 1e-15 {
            break;
        }
    }
    let residual = g(t).abs();
    Ok(TauTilde { tau: t, dimension: (t / (q - 1.0)).min(1.0), residual })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LegendreValue {
    pub alpha: f64,
    /// Grid infimum of `α q - τ(q)`.
    pub value: f64,
    pub q_star: f64,
    /// The infimum sits at an end of the grid, so the true transform may be
    /// smaller.
    pub boundary: bool,
    /// Finite-difference `α(q) = τ'(q)` on the grid.
    pub alpha_grid: Vec<(f64, f64)>,
}

/// Central differences inside the grid, one-sided at the ends.
pub fn derivative_grid(samples: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            (samples[i].0, (samples[b].1 - samples[a].1) / (samples[b].0 - samples[a].0))
        })
        .collect()
}

/// `τ*(α) = inf_q α q - τ(q)` over a sampled concave spectrum.
pub fn legendre(samples: &[(f64, f64)], alpha: f64) -> Result<LegendreValue> {
    if samples.len() < 8 {
        return Err(Error::Data(format!("need at least 8 samples, got {}", samples.len())));
    }
    for w in samples.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Data("q grid must be strictly increasing".into()));
        }
    }
    for (i, w) in samples.windows(3).enumerate() {
        let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
        if s2 > s1 + 1e-6 {
            return Err(Error::Data(format!(
                "samples are not concave near q = {} (slope rises from {s1} to {s2})",
                samples[i + 1].0
            )));
        }
    }
    let (idx, value) = samples
        .iter()
        .map(|&(q, t)| alpha * q - t)
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
    Ok(LegendreValue {
        alpha,
        value,
        q_star: samples[idx].0,
        boundary: idx == 0 || idx == samples.len() - 1,
        alpha_grid: derivative_grid(samples),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrostmanReport {
    /// `(m, -log2 max_I μ(I) / m)`.
    pub per_scale: Vec<(u32, f64)>,
    /// Slope of `-log2 max_I μ(I)` against `m`.
    pub slope: f64,
}

/// Max-mass exponents per scale.
pub fn frostman_exponent(source: Source<'_>, m_min: u32, m_max: u32) -> Result<FrostmanReport> {
    if !(m_min < m_max) || m_min == 0 {
        return Err(Error::Argument(format!("need 1 <= m_min < m_max, got {m_min}, {m_max}")));
    }
    let mut per_scale = vec![];
    match source {
        Source::Measure(dm) => {
            if m_max > dm.scale_m() {
                return Err(Error::Argument(format!("m_max = {m_max} exceeds the measure scale {}", dm.scale_m())));
            }
            for m in m_min..=m_max {
                per_scale.push((m, -coarsen(dm, m)?.max_mass().log2() / m as f64));
            }
        }
        Source::Model { model, state } => {
            let window = model.window();
            let mut stages = model.stages(state)?;
            for m in m_min..=m_max {
                let mu = stage_at_scale(&mut stages, model.lambda(), m)?;
                per_scale.push((m, -lq_sum_streaming(mu, m, window, f64::INFINITY)?.log2() / m as f64));
            }
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = per_scale.iter().map(|&(m, a)| (m as f64, a * m as f64)).unzip();
    let slope = linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN);
    Ok(FrostmanReport { per_scale, slope })
}

/// Frostman exponent implied by `D(μ, q) > s`: `(1 - 1/q) s`.
pub fn frostman_bound(q: f64, s: f64) -> f64 {
    (1.0 - 1.0 / q) * s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CocycleReport {
    pub q: f64,
    pub grid: Vec<u64>,
    /// `(n, log2 φ_n(x))` for every `n` up to twice the grid maximum.
    pub log2_phi: Vec<(u64, f64)>,
    /// `defects[i][j]` for `n = grid[i]`, `n' = grid[j]`:
    /// `log2 φ_{n+n'}(x) - log2 φ_n(x) - log2 φ_{n'}(T^n x)`.
    pub defects: Vec<Vec<f64>>,
    pub max_defect: f64,
    /// Row maxima `(n, max_{n'} defect)`.
    pub row_max: Vec<(u64, f64)>,
    /// Slope of the row maxima against `n`.
    pub slope: f64,
}

fn log2_phi(model: &Model, x: &State, ns: &[u64], q: f64) -> Result<Vec<f64>> {
    let window = model.window();
    let mut stages = model.stages(x)?;
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let mu = stages.advance_to(n)?;
        out.push(lq_sum_streaming(mu, scale_for_stage(model.lambda(), n), window, q)?.log2());
    }
    Ok(out)
}

/// Sub-multiplicativity defects of `φ_n^q` over a grid of stage counts.
pub fn cocycle_check(model: &Model, x: &State, q: f64, n_grid: &[u64]) -> Result<CocycleReport> {
    check_q(q)?;
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::Argument("empty stage grid".into()));
    }
    let top = grid[grid.len() - 1];
    let all: Vec<u64> = (0..=2 * top).collect();
    let from_x = log2_phi(model, x, &all, q)?;
    let mut defects = vec![];
    for &n in &grid {
        let y = model.step(x, n);
        let phi_y = log2_phi(model, &y, &grid, q)?;
        defects.push(
            grid.iter()
                .zip(&phi_y)
                .map(|(&n2, p2)| from_x[(n + n2) as usize] - from_x[n as usize] - p2)
                .collect::<Vec<f64>>(),
        );
    }
    let row_max: Vec<(u64, f64)> = grid
        .iter()
        .zip(&defects)
        .map(|(&n, row)| (n, row.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
        .collect();
    let max_defect = row_max.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = row_max.iter().map(|&(n, d)| (n as f64, d)).unzip();
    let slope = linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(0.0);
    Ok(CocycleReport {
        q,
        grid,
        log2_phi: all.into_iter().zip(from_x).collect(),
        defects,
        max_defect,
        row_max,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic_measure::Geometry;
    use crate::models::{make_selfsimilar, NonHomIFS};

    fn uni(locs: &[f64]) -> AtomicMeasure {
        AtomicMeasure::uniform(locs.to_vec()).unwrap()
    }

    #[test]
    fn uniform_and_dirac_measures() {
        let u = DyadicMeasure::uniform(Geometry::Circle, 20).unwrap();
        let r = empirical_tau(Source::Measure(&u), 2.0, 4, 20).unwrap();
        assert!(r.per_scale.iter().all(|v| (v.tau_single - 1.0).abs() < 1e-12));
        assert!((r.lq_dimension - 1.0).abs() < 1e-12);
        let d = DyadicMeasure::dirac(Geometry::Circle, 20, 12345).unwrap();
        for q in [1.5, 3.0] {
            let r = empirical_tau(Source::Measure(&d), q, 4, 20).unwrap();
            assert!(r.regression_tau.abs() < 1e-12);
        }
    }

    #[test]
    fn middle_thirds_regression() {
        let m = make_selfsimilar(&uni(&[0.0, 1.0]), 1.0 / 3.0).unwrap();
        let reps = empirical_spectrum(Source::Model { model: &m, state: &State::Trivial }, &[1.5, 2.0, 4.0], 4, 20).unwrap();
        for r in reps {
            assert!((r.lq_dimension - 2f64.ln() / 3f64.ln()).abs() < 0.02, "{r:?}");
            for v in &r.per_scale {
                assert!(v.tau_single >= -1e-9 && v.tau_single <= r.q - 1.0 + 1e-9);
            }
            for w in r.per_scale.windows(2) {
                assert!(w[1].log2_sum <= w[0].log2_sum + 1e-12);
            }
        }
    }

    #[test]
    fn homogeneous_closed_forms() {
        let t = theoretical_tau_homogeneous(&uni(&[0.0, 1.0]), 0.5, 3.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        let t = theoretical_tau_homogeneous(&uni(&[0.0, 1.0, 2.0]), 0.25, 2.0).unwrap();
        assert!((t - 3f64.ln() / 4f64.ln()).abs() < 1e-12);
        let d = AtomicMeasure::new(vec![(0.0, 0.75), (1.0, 0.25)]).unwrap();
        let t = theoretical_tau_homogeneous(&d, 0.5, 2.0).unwrap();
        assert!((t - 1.6f64.log2()).abs() < 1e-12);
        assert!(theoretical_tau_homogeneous(&d, 0.5, 1.0).is_err());
    }

    #[test]
    fn tau_tilde_closed_forms() {
        let hom = NonHomIFS::new(vec![(1.0 / 3.0, 0.0), (1.0 / 3.0, 1.0)], vec![0.5, 0.5]).unwrap();
        let r = tau_tilde(&hom, 2.0).unwrap();
        assert!((r.tau - 2f64.ln() / 3f64.ln()).abs() < 1e-10);
        assert!(r.residual < 1e-12);
        let quad = NonHomIFS::new(vec![(0.5, 0.0), (0.25, 0.5)], vec![0.5, 0.5]).unwrap();
        let r = tau_tilde(&quad, 2.0).unwrap();
        assert!((r.tau - ((17f64.sqrt() - 1.0) / 2.0).log2()).abs() < 1e-10);
    }

    #[test]
    fn legendre_linear_spectrum() {
        let s = 0.6;
        let samples: Vec<(f64, f64)> = (0..10).map(|i| (1.0 + i as f64, s * i as f64)).collect();
        let v = legendre(&samples, s).unwrap();
        assert!((v.value - s).abs() < 1e-12);
        // Off the slope the transform is degenerate; α q - τ grows with q,
        // so the grid infimum sits at the left end.
        let v = legendre(&samples, s + 0.5).unwrap();
        assert!(v.boundary);
        assert_eq!(v.q_star, 1.0);
        assert!((v.value - (s + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn legendre_rejects_bad_samples() {
        let few: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 0.0)).collect();
        assert!(matches!(legendre(&few, 1.0), Err(Error::Data(_))));
        let convex: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, (i * i) as f64)).collect();
        assert!(matches!(legendre(&convex, 1.0), Err(Error::Data(_))));
    }

    #[test]
    fn legendre_identity_for_a_multifractal() {
        let tau = |q: f64| -((0.75f64).powf(q) + (0.25f64).powf(q)).log2();
        let samples: Vec<(f64, f64)> = (0..=400).map(|i| 1.01 + 0.01 * i as f64).map(|q| (q, tau(q))).collect();
        let ders = derivative_grid(&samples);
        for &i in &[50usize, 150, 300] {
            let (q, a) = ders[i];
            let v = legendre(&samples, a).unwrap();
            assert!(!v.boundary);
            assert!((v.value - (q * a - tau(q))).abs() < 1e-4, "q={q}");
        }
    }

    #[test]
    fn frostman_examples() {
        let u = DyadicMeasure::uniform(Geometry::Circle, 12).unwrap();
        let r = frostman_exponent(Source::Measure(&u), 2, 12).unwrap();
        assert!(r.per_scale.iter().all(|v| (v.1 - 1.0).abs() < 1e-12));
        let d = DyadicMeasure::dirac(Geometry::Circle, 12, 7).unwrap();
        let r = frostman_exponent(Source::Measure(&d), 2, 12).unwrap();
        assert!(r.per_scale.iter().all(|v| v.1 == 0.0));
        assert!((frostman_bound(2.0, 0.8) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn cocycle_of_a_point_mass_is_flat() {
        let m = make_selfsimilar(&AtomicMeasure::dirac(0.0), 0.5).unwrap();
        let r = cocycle_check(&m, &State::Trivial, 2.0, &[1, 2, 3, 4]).unwrap();
        assert!(r.defects.iter().flatten().all(|d| *d == 0.0));
        assert_eq!(r.max_defect, 0.0);
    }
}
