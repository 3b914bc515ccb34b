//! Splitting a self-similar measure into the convolution of two
//! skip-digit measures, and comparing their spectra.

use fractal_lq::dyadic_measure::AtomicMeasure;
use fractal_lq::models::{make_selfsimilar, make_skip, Keep};
use fractal_lq::spectra::{empirical_tau, Source};

fn main() -> fractal_lq::Result<()> {
    let delta = AtomicMeasure::uniform(vec![0.0, 1.0, 3.0])?;
    let base = make_selfsimilar(&delta, 0.25)?;
    let x = base.default_state();

    let whole = empirical_tau(Source::Model { model: &base, state: &x }, 2.0, 8, 20)?;
    println!("full measure      D_2 ~ {:.4} (closed form {:.4})", whole.lq_dimension, 3f64.ln() / 4f64.ln());

    // Every 3rd digit: contraction 4^-3, so the L^2 sum only moves every
    // 6 binary scales and the fit needs a long range.
    let sparse = make_skip(&base, 3, Keep::Multiples)?;
    let r = empirical_tau(Source::Model { model: &sparse, state: &sparse.default_state() }, 2.0, 8, 44)?;
    println!("every 3rd digit   D_2 ~ {:.4} (closed form {:.4})", r.lq_dimension, 3f64.ln() / 64f64.ln());

    let rest = make_skip(&base, 3, Keep::NonMultiples)?;
    let r = empirical_tau(Source::Model { model: &rest, state: &rest.default_state() }, 2.0, 8, 38)?;
    println!("the other digits  D_2 ~ {:.4} (closed form {:.4})", r.lq_dimension, 2.0 * 3f64.ln() / 64f64.ln());
    Ok(())
}
