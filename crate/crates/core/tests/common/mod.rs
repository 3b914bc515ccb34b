// Independent oracles and seeded generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use fractal_lq::addcomb::DyadicSet;
use fractal_lq::geometry::{CellSet1D, CellSet2D, CELL_SLACK};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every coefficient vector `(c_0, ..., c_n)` over `set`, not all zero.
fn for_each_poly(set: &[i64], n: u32, mut f: impl FnMut(&[i64])) {
    let len = n as usize + 1;
    let mut idx = vec![0usize; len];
    let mut c = vec![set[0]; len];
    loop {
        if c.iter().any(|&x| x != 0) {
            f(&c);
        }
        let mut i = 0;
        loop {
            if i == len {
                return;
            }
            idx[i] += 1;
            if idx[i] < set.len() {
                c[i] = set[idx[i]];
                break;
            }
            idx[i] = 0;
            c[i] = set[0];
            i += 1;
        }
    }
}

/// `min |Σ c_i (p/q)^i|` over all nonzero polynomials of degree `≤ n`, as
/// the numerator over `q^n`.
pub fn exhaustive_min_rational(set: &[i64], p: i64, q: i64, n: u32) -> i128 {
    let pp: Vec<i128> = (0..=n).map(|i| (p as i128).pow(i) * (q as i128).pow(n - i)).collect();
    let mut best = i128::MAX;
    for_each_poly(set, n, |c| {
        let v: i128 = c.iter().zip(&pp).map(|(&a, &w)| a as i128 * w).sum();
        best = best.min(v.abs());
    });
    best
}

/// Same search at `λ = (√5 - 1)/2`, in `Z[λ]` with `λ² = 1 - λ`.
/// Returns the minimum value and whether it is exactly zero.
pub fn exhaustive_min_golden(set: &[i64], n: u32) -> (f64, bool) {
    let lam = (5f64.sqrt() - 1.0) / 2.0;
    // λ^i = a_i + b_i λ.
    let mut pw = vec![(1i64, 0i64)];
    for _ in 0..n {
        let (a, b) = *pw.last().unwrap();
        pw.push((b, a - b));
    }
    let mut best = (f64::INFINITY, false);
    for_each_poly(set, n, |c| {
        let (mut a, mut b) = (0i64, 0i64);
        for (&ci, &(x, y)) in c.iter().zip(&pw) {
            a += ci * x;
            b += ci * y;
        }
        if a == 0 && b == 0 {
            best = (0.0, true);
        } else if !best.1 {
            best.0 = best.0.min((a as f64 + b as f64 * lam).abs());
        }
    });
    best
}

/// Pairwise intersection of the two covers, rasterised cell by cell.
pub fn naive_intersect(a: &CellSet1D, b: &CellSet1D, t: f64, u: f64, eps: f64) -> u64 {
    let mut hit = BTreeSet::new();
    for &i in &a.cells {
        let (alo, ahi) = (i as f64 * a.scale, (i + 1) as f64 * a.scale);
        for &j in &b.cells {
            let (x, y) = (t * j as f64 * b.scale + u, t * (j + 1) as f64 * b.scale + u);
            let lo = alo.max(x.min(y));
            let hi = ahi.min(x.max(y));
            if lo < hi {
                let first = (lo / eps + CELL_SLACK).floor() as i64;
                let last = ((hi / eps - CELL_SLACK).ceil() as i64).max(first + 1);
                hit.extend(first..last);
            }
        }
    }
    hit.len() as u64
}

/// A cell meets the closed `ε`-strip when the range of `⟨corner, n⟩` over
/// its four corners reaches `[offset - ε, offset + ε]`.
pub fn naive_slice(cells: &CellSet2D, direction: (f64, f64), offset: f64, eps: f64) -> u64 {
    let r = direction.0.hypot(direction.1);
    let n = (-direction.1 / r, direction.0 / r);
    let h = cells.scale;
    let slack = eps * CELL_SLACK;
    let mut hit = BTreeSet::new();
    for &(i, j) in &cells.cells {
        let xs = [i as f64 * h, (i + 1) as f64 * h];
        let ys = [j as f64 * h, (j + 1) as f64 * h];
        let proj: Vec<f64> = xs.iter().flat_map(|x| ys.iter().map(move |y| x * n.0 + y * n.1)).collect();
        let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo <= offset + eps + slack && hi >= offset - eps - slack {
            let c = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            hit.insert(((c.0 / eps).floor() as i64, (c.1 / eps).floor() as i64));
        }
    }
    hit.len() as u64
}

/// Random subset of `[0, 2^m)` with up to `max_len` points.
pub fn random_set(r: &mut ChaCha8Rng, m: u32, max_len: usize) -> DyadicSet {
    let size = 1i64 << m;
    let len = r.gen_range(1..=max_len.min(size as usize));
    let pts: Vec<i64> = if len as i64 * 4 > size {
        let mut all: Vec<i64> = (0..size).collect();
        all.shuffle(r);
        all.truncate(len);
        all
    } else {
        (0..len).map(|_| r.gen_range(0..size)).collect()
    };
    DyadicSet::new(m, pts).unwrap()
}

/// Random `(D, ℓ)`-uniform set: at each level every interval keeps a
/// random `R_s`-subset of its `2^D` children.
pub fn random_uniform_set(r: &mut ChaCha8Rng, d: u32, ell: u32, max_r: u32) -> (DyadicSet, Vec<u64>) {
    let base = 1u32 << d;
    let rs: Vec<u64> = (0..ell).map(|_| r.gen_range(1..=max_r.min(base)) as u64).collect();
    let mut pts = vec![0i64];
    for &rr in &rs {
        let mut next = vec![];
        for p in &pts {
            let mut kids: Vec<i64> = (0..base as i64).collect();
            kids.shuffle(r);
            next.extend(kids[..rr as usize].iter().map(|k| (p << d) + k));
        }
        pts = next;
    }
    (DyadicSet::new(d * ell, pts).unwrap(), rs)
}

/// Probability vector with `k` random positive entries.
pub fn random_weights(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| r.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Random cell set on `[0, 2^m)` with `len` distinct cells.
pub fn random_cells_1d(r: &mut ChaCha8Rng, m: u32, len: usize) -> CellSet1D {
    let size = 1i64 << m;
    CellSet1D::new(1.0 / size as f64, (0..len).map(|_| r.gen_range(0..size)).collect()).unwrap()
}
