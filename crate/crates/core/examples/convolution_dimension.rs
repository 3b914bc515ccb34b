//! Dimension of a convolution of two Cantor measures with incommensurable
//! contractions, driven by an irrational rotation.
//!
//! The dimensions add up past 1 (`log 2/log 3 + 1/2`), so the L^2
//! dimension of the convolution should sit close to 1 for typical states.

use fractal_lq::dyadic_measure::AtomicMeasure;
use fractal_lq::models::make_convolution;
use fractal_lq::spectra::{empirical_tau, Source};

fn main() -> fractal_lq::Result<()> {
    let d = AtomicMeasure::uniform(vec![0.0, 2.0])?;
    let model = make_convolution(&d, 1.0 / 3.0, &d, 0.25)?;
    println!("state space: {:?}", model.state_space());

    for x in model.sample_states(5) {
        let r = empirical_tau(Source::Model { model: &model, state: &x }, 2.0, 8, 16)?;
        println!("x = {x:?}  D_2 ~ {:.4}", r.lq_dimension);
    }
    Ok(())
}
