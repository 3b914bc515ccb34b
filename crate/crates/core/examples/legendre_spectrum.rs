//! Multifractal spectrum of a biased Bernoulli measure by Legendre transform
//! of its τ(q) samples.

use fractal_lq::models::NonHomIFS;
use fractal_lq::spectra::{derivative_grid, legendre, tau_tilde};

fn main() -> fractal_lq::Result<()> {
    let ifs = NonHomIFS::new(vec![(0.5, 0.0), (0.5, 0.5)], vec![0.75, 0.25])?;
    let samples: Vec<(f64, f64)> = (0..=36)
        .map(|i| {
            let q = 1.1 + 0.25 * i as f64;
            tau_tilde(&ifs, q).map(|t| (q, t.tau))
        })
        .collect::<fractal_lq::Result<_>>()?;

    // Slopes τ'(q) reached on the grid; q > 1 only sees the dense end.
    let grid = derivative_grid(&samples);
    for &(_, alpha) in grid.iter().step_by(6) {
        let v = legendre(&samples, alpha)?;
        println!("alpha = {alpha:.3}  f(alpha) = {:.4}  q* = {:<5} {}", v.value, v.q_star, if v.boundary { "(edge)" } else { "" });
    }
    Ok(())
}
