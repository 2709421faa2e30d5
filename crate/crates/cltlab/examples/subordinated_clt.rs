//! Central limit behaviour of a time-averaged function of a long-memory
//! Gaussian process: empirical variance against the quadrature oracle and
//! the limiting value, plus distances to the standard normal.

use cltlab::covariance::{asymptotic_variance, time_average_variance, CovarianceModel, DecayClass};
use cltlab::distance::{ks_to_std_normal, sample_moments, standardize, wasserstein1_to_std_normal};
use cltlab::functionals::{subordinated_samples, SubordinatedConfig};
use cltlab::hermite::HermiteExpansion;

fn main() -> cltlab::Result<()> {
    let model = CovarianceModel::fbm_increments(0.7)?;
    let f = HermiteExpansion::from_coeffs(vec![0.0, 4.0, 0.0, 1.0]);
    let cfg = SubordinatedConfig {
        model,
        f: f.clone(),
        t_end: 500.0,
        dt: 1.0,
        replications: 600,
    };
    cfg.validate()?;

    let samples = subordinated_samples(&cfg, 21)?;
    let (mean, sd) = sample_moments(&samples)?;
    let oracle = time_average_variance(&model, &f, cfg.t_end)?;
    println!("normalized time average of f(X), f = x^3 + x, hurst 0.7:");
    println!("  T {}  replications {}", cfg.t_end, cfg.replications);
    println!("  sample mean      {mean:+.4}");
    println!("  sample variance  {:.4}", sd * sd);
    println!("  quadrature value {oracle:.4}");
    if let DecayClass::PowerDecay { m, .. } = model.decay() {
        println!("  limiting value   {:.4}", asymptotic_variance(m, f.coeffs()[1]));
    }

    let standardized = standardize(&samples)?;
    println!("distance of the standardized sample to N(0,1):");
    println!("  wasserstein {:.4}", wasserstein1_to_std_normal(&standardized)?);
    println!("  kolmogorov  {:.4}", ks_to_std_normal(&standardized)?);
    Ok(())
}
