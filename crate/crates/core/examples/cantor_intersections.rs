//! Intersections of the middle-thirds Cantor set with an irrationally
//! scaled copy of itself.

use fractal_lq::geometry::{cantor_cells, cantor_intersection_profile, sumset_dimension, SQRT_2};

fn main() -> fractal_lq::Result<()> {
    let rep = cantor_intersection_profile(3, &[0, 2], SQRT_2, 0.0, 6..=11)?;
    for row in &rep.rows {
        println!("depth {:<2} eps {:.2e} count {:<6} exponent {:.4}", row.depth, row.eps, row.count, row.exponent);
    }
    if let Some(fit) = &rep.fit {
        println!("fit slope {:.4} (r2 {:.3})", fit.slope, fit.r2);
    }
    println!("non-increasing: {}, dimension bound {:.4}", rep.non_increasing, rep.bound);

    // The sum of two Cantor sets whose dimensions add past 1.
    let a = cantor_cells(3, &[0, 2], 10)?;
    let b = cantor_cells(4, &[0, 2], 8)?;
    let grid: Vec<f64> = (6..=12).map(|k| 2f64.powi(-k)).collect();
    let (_, fit) = sumset_dimension(&a, &b, &grid)?;
    println!("box dimension of C_3 + C_4 ~ {:.4}", fit.slope);
    Ok(())
}
