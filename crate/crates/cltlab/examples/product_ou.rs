//! The product of independent Gaussian- and jump-driven OU processes:
//! exact variance of its time average, Monte-Carlo agreement, asymptotic
//! normality, and the closed-form decay of the four bound terms.

use cltlab::distance::{sample_moments, standardize, wasserstein1_to_std_normal};
use cltlab::functionals::{
    product_ou_bounds, product_ou_samples, product_ou_variance_exact, ProductOUConfig,
};
use cltlab::jumps::LevyMeasure;

fn main() -> cltlab::Result<()> {
    let lambda = 1.0;
    println!("exact variance of the normalized time average (lambda 1):");
    for t in [10.0, 50.0, 200.0, 1e6] {
        println!("  T {t:>9}  variance {:.6}", product_ou_variance_exact(lambda, t)?);
    }
    println!("  limit 1/lambda = 1");

    for t_end in [10.0, 200.0] {
        let cfg = ProductOUConfig::standard(lambda, t_end, 2000)?;
        let samples = product_ou_samples(&cfg, 51)?;
        let (mean, sd) = sample_moments(&samples)?;
        let w1 = wasserstein1_to_std_normal(&standardize(&samples)?)?;
        println!("monte carlo at T {t_end}, 2000 replications:");
        println!(
            "  mean {mean:+.4}  variance {:.4} (exact {:.4})  wasserstein {w1:.4}",
            sd * sd,
            product_ou_variance_exact(lambda, t_end)?
        );
    }

    // The four terms controlling the distance to normal scale like
    // T^0, T^(-1/2), T^(-1), T^(-1); the slowest decides the rate.
    let measure = LevyMeasure::symmetric_atoms(1.0, 0.5)?;
    println!("bound terms across horizons:");
    println!(
        "  {:>6} {:>12} {:>12} {:>12} {:>12}",
        "T", "gradient^4", "third-moment", "contraction", "second-deriv"
    );
    for t in [10.0, 100.0, 1000.0] {
        let b = product_ou_bounds(lambda, &measure, t)?;
        println!(
            "  {t:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            b.gradient_fourth, b.third_moment, b.contraction, b.second_derivative
        );
    }
    Ok(())
}
