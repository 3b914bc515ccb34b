//! Grid measures, convolution and additive energy on a dyadic Cantor-type
//! set.

use fractal_lq::addcomb::{additive_energy, doubling, q_to_2_check, sumset, DyadicSet};
use fractal_lq::dyadic_measure::{coarsen, convolve, lq_norm, Geometry};

fn main() -> fractal_lq::Result<()> {
    // Base-4 digits {0, 2} at every level: a set of size 2^8 at scale 2^-16.
    let digits: Vec<Vec<u32>> = (0..8).map(|_| vec![0, 2]).collect();
    let a = DyadicSet::from_digits(2, &digits)?;
    let mu = a.indicator_measure(Geometry::Line)?;

    let e = additive_energy(&a, &a)?;
    let n = a.len() as f64;
    println!("|A| = {}, E(A, A) = {e} = |A|^{:.3}", a.len(), (e as f64).ln() / n.ln());
    println!("|A + A| = {}, doubling {:.2}", sumset(&a, &a, Geometry::Line)?.len(), doubling(&a)?);

    let mm = convolve(&mu, &mu, Geometry::Line)?;
    for m in [4, 8, 12, 16] {
        let c = coarsen(&mu, m)?;
        let cc = coarsen(&mm, m)?;
        println!(
            "m = {m:<2} log2 |mu|_2^2 / m = {:.4}  log2 |mu*mu|_2^2 / m = {:.4}",
            lq_norm(&c, 2.0)?.log2() / m as f64,
            lq_norm(&cc, 2.0)?.log2() / m as f64
        );
    }

    let t = q_to_2_check(&a, &a, 2.0)?;
    println!("kappa = {:.4}, transfer holds: {}", t.kappa, t.passes);
    Ok(())
}
