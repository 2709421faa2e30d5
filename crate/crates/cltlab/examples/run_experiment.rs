//! Drives a registered experiment through the library API: resolve a
//! config, run it, and inspect the checks and tables the report carries.
//! The `cltlab` binary exposes the same flow on the command line.

use cltlab::experiments::{default_config, registry, run};

fn main() -> cltlab::Result<()> {
    println!("registered experiments:");
    for name in registry() {
        println!("  {name}");
    }

    // A scaled-down product-OU run; defaults reproduce the full study.
    let mut config = default_config("product-ou")?;
    config.replications = 500;
    config
        .parameters
        .insert("t_grid".into(), serde_json::json!([5.0, 25.0]));
    config
        .parameters
        .insert("trend_limit".into(), serde_json::json!(0.3));
    config
        .parameters
        .insert("w1_limit".into(), serde_json::json!(0.3));

    let report = run(&config)?;
    println!("report for {} (seed {}):", report.experiment, report.seed);
    for row in &report.summary {
        println!(
            "  T {:>4}  variance {:.4}  exact {:.4}  wasserstein {:.4}",
            row.sweep,
            row.variance,
            row.exact_variance.unwrap_or(f64::NAN),
            row.w1.unwrap_or(f64::NAN)
        );
    }
    for c in &report.checks {
        println!("  {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    println!("overall: {}", if report.passed { "PASS" } else { "FAIL" });
    Ok(())
}
