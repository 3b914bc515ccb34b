//! Slices of the Sierpinski gasket along a line of irrational slope.
//!
//! Counts the ε-cells met by the strip around the line as ε shrinks and
//! fits the growth exponent.

use fractal_lq::geometry::{exponent_fit, planar_attractor, slice_count, GOLDEN};

fn main() -> fractal_lq::Result<()> {
    let gasket = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
    let depth = 9;
    let cells = planar_attractor(0.5, 0.0, &gasket, depth)?;
    println!("{} cells at side {:.2e}", cells.len(), cells.scale);

    let dir = (1.0, GOLDEN);
    let mut pts = vec![];
    for k in 3..=depth {
        let eps = 2f64.powi(-(k as i32));
        let n = slice_count(&cells, dir, 0.2, eps)?;
        println!("eps = 2^-{k:<2} cells on slice = {n}");
        pts.push((eps, n));
    }
    let fit = exponent_fit(&pts)?;
    // Almost every slice has dimension log 3/log 2 - 1.
    println!("slice exponent {:.4} (r2 {:.3}), typical value {:.4}", fit.slope, fit.r2, 3f64.log2() - 1.0);
    Ok(())
}
