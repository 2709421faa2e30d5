//! Expands functions in the Hermite basis and uses the coefficients to
//! predict moments of subordinated Gaussians without any sampling.

use cltlab::hermite::{expand, subordinated_cov, HermiteExpansion};

fn main() -> cltlab::Result<()> {
    // A polynomial has an exact finite expansion: x^3 + x = H_3 + 4 H_1.
    let cubic = HermiteExpansion::from_coeffs(vec![0.0, 4.0, 0.0, 1.0]);
    println!("f(x) = x^3 + x");
    println!("  coefficients {:?}", cubic.coeffs());
    println!("  rank {:?}  even {}  variance {}", cubic.rank(), cubic.is_even(), cubic.variance());

    // Nonsmooth functions get a numerical expansion; |x| is even, so only
    // even orders survive.
    let abs = expand(f64::abs, 8, None)?;
    println!("f(x) = |x|");
    print!("  coefficients");
    for c in abs.coeffs() {
        print!(" {c:+.5}");
    }
    println!();
    println!("  rank {:?}  even {}", abs.rank(), abs.is_even());

    // Cov[f(X), f(Y)] for jointly standard-normal pairs is a polynomial in
    // the correlation: sum c_q^2 q! rho^q.
    println!("correlation of x^3 + x under joint normality:");
    for rho in [-0.8, -0.2, 0.0, 0.2, 0.8] {
        println!("  rho {rho:+.1}  cov {:+.6}", subordinated_cov(&cubic, rho)?);
    }
    Ok(())
}
