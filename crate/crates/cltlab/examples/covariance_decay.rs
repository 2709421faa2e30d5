//! Classifies covariance decay, evaluates the induced normalization, and
//! shows which chaos orders survive in the normalized double integrals.

use cltlab::covariance::{
    normalized_power_integral, predicted_rate, vtilde, CovarianceModel, DecayClass,
};

fn main() -> cltlab::Result<()> {
    let slow = CovarianceModel::fbm_increments(0.7)?;
    let fast = CovarianceModel::ou_exponential(1.0)?;

    for model in [&slow, &fast] {
        println!("model {}:", model.id());
        match model.decay() {
            DecayClass::PowerDecay { alpha, m } => {
                println!("  power decay, alpha {alpha:.2}, constant {m:.2}")
            }
            DecayClass::IntegrableCovariance => println!("  integrable covariance"),
        }
        for t in [100.0, 10_000.0] {
            println!(
                "  T {t:>8}  normalization {:.4e}  predicted rate {:.4e}",
                vtilde(model.decay(), t)?,
                predicted_rate(model.decay(), t)?
            );
        }
    }

    // Under slow decay only the first chaos contributes in the limit: the
    // normalized q-th power integral tends to 2m for q = 1 and to zero for
    // higher q.
    println!("normalized double integrals of C^q, hurst 0.7:");
    println!("  {:>8} {:>10} {:>10} {:>10}", "T", "q=1", "q=2", "q=3");
    for t in [100.0, 1000.0, 10_000.0] {
        print!("  {t:>8}");
        for q in 1..=3 {
            print!(" {:>10.5}", normalized_power_integral(&slow, q, t)?);
        }
        println!();
    }
    println!("  limit of the q=1 column: 0.56");
    Ok(())
}
