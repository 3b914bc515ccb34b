//! Structural witness for a pair of measures with large L^q mass: level
//! sets, centering, uniform extraction and the branching clauses.
//!
//! The extraction here is empirical; the sub-steps that would come from the
//! Balog-Szemerédi-Gowers theorem are not implemented.

use fractal_lq::addcomb::{branching, inverse_witness, DyadicSet, WITNESS_LABEL};
use fractal_lq::dyadic_measure::Geometry;

fn main() -> fractal_lq::Result<()> {
    // Free choice of 2 of 4 children on even levels, all 4 on odd ones.
    let digits: Vec<Vec<u32>> = (0..6).map(|s| if s % 2 == 0 { vec![1, 2] } else { vec![0, 1, 2, 3] }).collect();
    let a = DyadicSet::from_digits(2, &digits)?;
    let mu = a.indicator_measure(Geometry::Circle)?;
    let rep = inverse_witness(&mu, &mu, 2.0, 2, 0.5)?;
    println!("{WITNESS_LABEL}");
    println!("|A| = {}, |B| = {}", rep.a.len(), rep.b.len());
    println!("R' = {:?}", rep.r_prime);
    println!("R'' = {:?}", rep.r_double_prime);
    println!("full branching at levels {:?}", rep.full_branching);
    for c in &rep.clauses {
        println!("[{}] {:<8} {} ({:.3} vs {:.3})", if c.passes { "ok" } else { "--" }, c.id, c.statement, c.value, c.bound);
    }
    println!("branching of A: {:?}", branching(&rep.a, 2)?.counts());
    Ok(())
}
