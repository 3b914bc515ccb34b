//! Exponential separation for Bernoulli-type digit sets.
//!
//! Minimises `|P(λ)|` over polynomials with coefficients in `{-1, 0, 1}`.
//! At `λ = 1/2` the minimum is `2^-n`; at the golden ratio inverse the
//! polynomial `1 - x - x²` vanishes, so separation fails at `n = 2`.

use fractal_lq::exact::Scalar;
use fractal_lq::separation::{difference_set, min_poly_value, Mode};

fn main() -> fractal_lq::Result<()> {
    let digits = [Scalar::parse("0")?, Scalar::parse("1")?];
    let coeffs = difference_set(&digits);

    for lam in ["1/2", "2/5", "(sqrt(5)-1)/2", "sqrt(2)-1"] {
        let lambda = Scalar::parse(lam)?;
        println!("lambda = {lam}");
        for n in [2, 4, 8, 12] {
            let p = min_poly_value(&coeffs, &lambda, n, Mode::Exact)?;
            let exact = p.exact.as_ref().map(|e| e.to_string()).unwrap_or_default();
            let rate = if p.is_zero() { f64::NEG_INFINITY } else { p.value.log2() / n as f64 };
            println!("  n = {n:<2} min = {:<12.4e} exact = {exact:<24} (1/n) log2 = {rate:.4}", p.value);
        }
    }
    Ok(())
}
