//! Non-homogeneous IFS: two maps with different contractions.
//!
//! Compares the root of `Σ p_i^q λ_i^{-τ} = 1` with the empirical spectrum
//! of the stopping-time discretization.

use fractal_lq::models::{generate_nonhom, NonHomIFS};
use fractal_lq::spectra::tau_tilde;

fn main() -> fractal_lq::Result<()> {
    let ifs = NonHomIFS::new(vec![(0.5, 0.0), (0.25, 0.75)], vec![0.6, 0.4])?;
    let stage = generate_nonhom(&ifs, 16)?;
    println!("{} words at m = 16 in {} ratio classes", stage.word_count, stage.classes.len());

    for q in [1.5, 2.0, 3.0] {
        let t = tau_tilde(&ifs, q)?;
        println!("q = {q}: tau = {:.6}, dimension = {:.6}, residual {:.1e}", t.tau, t.dimension, t.residual);
    }
    Ok(())
}
