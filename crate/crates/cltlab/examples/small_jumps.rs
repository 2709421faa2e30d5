//! Truncation analysis of an infinite-activity jump measure: when the
//! small-jump part may be replaced by a Gaussian, and how close the
//! compensated small-jump integral already is to normal.

use cltlab::distance::{ks_to_std_normal, sample_moments, standardize};
use cltlab::jumps::{
    gaussian_substitution_valid, sample_small_jump_functional, sigma_eps, third_moment_ratio,
    LevyMeasure,
};

fn main() -> cltlab::Result<()> {
    let measure = LevyMeasure::power_law(0.5, 1.0, 1.0)?;
    let eps_grid = [1e-2, 1e-3, 1e-4];

    println!("two-sided power law, exponent 2.5, support [-1, 1]:");
    println!("  {:>8} {:>12} {:>14} {:>16}", "eps", "sigma(eps)", "sigma/eps", "third-moment");
    for &eps in &eps_grid {
        let sigma = sigma_eps(&measure, eps)?;
        println!(
            "  {eps:>8.0e} {sigma:>12.5e} {:>14.4e} {:>16.4e}",
            sigma / eps,
            third_moment_ratio(&measure, eps)?
        );
    }
    let report = gaussian_substitution_valid(&measure, &eps_grid)?;
    println!("  substitution verdict: {:?}", report.verdict);

    // Compensated integral of an exponential kernel against the jumps in
    // the band (inner, eps], normalized by sigma(eps).
    let (lambda, t) = (1.0f64, 5.0);
    let h = move |s: f64| (2.0 * lambda).sqrt() * (-lambda * (t - s)).exp();
    let samples = sample_small_jump_functional(&measure, 1e-4, h, t, 1e-6, 4000, 31)?;
    let (mean, sd) = sample_moments(&samples)?;
    println!("band integral at eps 1e-4, 4000 samples:");
    println!("  mean {mean:+.4}  variance {:.4}", sd * sd);
    println!(
        "  kolmogorov distance after standardization {:.4}",
        ks_to_std_normal(&standardize(&samples)?)?
    );
    Ok(())
}
