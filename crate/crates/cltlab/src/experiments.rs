//! Named, self-checking experiments with deterministic reports.
//!
//! Each experiment resolves a typed parameter set from a generic key-value
//! config, runs seeded simulations and their analytic oracles, and returns
//! a report holding the resolved inputs, per-sweep statistics, fitted
//! rates, and a list of named pass/fail checks. Reports serialize to JSON
//! plus flat CSV (one fixed schema, versioned by a comment line) and are
//! byte-identical for a fixed seed.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::chaos::{
    energy_report, expected_product, insert_jump, jump_quotient, malliavin_derivative,
    multiple_integral, ou_generator, ou_generator_inverse, product_formula_check, sample_noise,
    skorohod, AtomGrid, ChaosFunctional, Kernel,
};
use crate::covariance::{
    asymptotic_variance, time_average_variance, CovarianceModel, DecayClass,
};
use crate::distance::{
    ks_to_std_normal, rate_fit, rate_rows_csv, sample_moments, standardize,
    wasserstein1_bootstrap_se, wasserstein1_to_std_normal, RateFit, RateRow,
};
use crate::error::{Error, Result};
use crate::flp::{fbm_gram, gram_value, simulate_flp_hybrid, FractionalKernel};
use crate::functionals::{
    product_ou_bounds, product_ou_samples, product_ou_variance_exact, subordinated_samples,
    OuStart, ProductOUConfig, SubordinatedConfig, DEFAULT_LAMBDA_DT,
};
use crate::hermite::HermiteExpansion;
use crate::jumps::{
    gaussian_substitution_valid, sample_small_jump_functional, sigma_eps, third_moment_ratio,
    LevyMeasure, SubstitutionVerdict,
};
use crate::rng::replicate_rng;

/// Version comment every CSV starts with.
pub const SCHEMA_LINE: &str = "# schema=1";

/// Registered experiment names, sorted.
pub fn registry() -> &'static [&'static str] {
    &[
        "chaos-identities",
        "clt-subordinated",
        "flp-hybrid",
        "product-ou",
        "rate-table",
        "small-jumps",
    ]
}

/// Generic experiment invocation: a registered name, a parameter map the
/// experiment resolves against its defaults, and the reproducibility seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub parameters: serde_json::Map<String, Value>,
    pub seed: u64,
    pub replications: usize,
    #[serde(default)]
    pub output_path: Option<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !registry().contains(&self.experiment.as_str()) {
            return Err(Error::UnknownExperiment(self.experiment.clone()));
        }
        if self.replications < 1 {
            return Err(Error::InvalidParameter(
                "replications must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The default invocation of a registered experiment: empty parameter map
/// (so every parameter takes its registered default) and a fixed seed.
pub fn default_config(experiment: &str) -> Result<ExperimentConfig> {
    let (seed, replications) = match experiment {
        "chaos-identities" => (27, 20_000),
        "clt-subordinated" => (8601, 2000),
        "flp-hybrid" => (2301, 10_000),
        "product-ou" => (101, 10_000),
        "rate-table" => (977, 4000),
        "small-jumps" => (4201, 10_000),
        other => return Err(Error::UnknownExperiment(other.into())),
    };
    Ok(ExperimentConfig {
        experiment: experiment.into(),
        parameters: serde_json::Map::new(),
        seed,
        replications,
        output_path: None,
    })
}

/// One named assertion: passes when `observed <= bound` and observed is
/// finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
}

fn check(name: impl Into<String>, observed: f64, bound: f64) -> Check {
    Check {
        name: name.into(),
        observed,
        bound,
        passed: observed.is_finite() && observed <= bound,
    }
}

/// Per-sweep-point Monte-Carlo summary. `sweep` is the varying abscissa,
/// a time horizon or a truncation level depending on the experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep: f64,
    pub replications: usize,
    pub mean: f64,
    pub variance: f64,
    pub exact_variance: Option<f64>,
    pub w1: Option<f64>,
    pub ks: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub replications: usize,
    /// Fully resolved parameters, defaults included.
    pub parameters: Value,
    pub summary: Vec<SummaryRow>,
    pub rate: Option<RateFit>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub summary_csv: String,
    pub rates_csv: Option<String>,
}

/// Runs the named experiment and returns its report.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.experiment.as_str() {
        "chaos-identities" => run_chaos_identities(config),
        "clt-subordinated" => run_clt_subordinated(config),
        "flp-hybrid" => run_flp_hybrid(config),
        "product-ou" => run_product_ou(config),
        "rate-table" => run_rate_table(config),
        "small-jumps" => run_small_jumps(config),
        other => Err(Error::UnknownExperiment(other.into())),
    }
}

/// Writes the JSON report at `path` and its CSV tables alongside, as
/// `<path>.summary.csv` and `<path>.rates.csv` with the extension swapped.
pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text)?;
    fs::write(path.with_extension("summary.csv"), &report.summary_csv)?;
    if let Some(csv) = &report.rates_csv {
        fs::write(path.with_extension("rates.csv"), csv)?;
    }
    Ok(())
}

fn params<T: DeserializeOwned>(config: &ExperimentConfig) -> Result<T> {
    Ok(serde_json::from_value(Value::Object(
        config.parameters.clone(),
    ))?)
}

fn render_summary_csv(experiment: &str, seed: u64, rows: &[SummaryRow]) -> String {
    let mut out = format!("{SCHEMA_LINE}\nexperiment,T,replications,mean,variance,w1,ks,seed\n");
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{experiment},{},{},{},{},{},{},{seed}\n",
            r.sweep,
            r.replications,
            r.mean,
            r.variance,
            opt(r.w1),
            opt(r.ks),
        ));
    }
    out
}

fn assemble(
    config: &ExperimentConfig,
    parameters: Value,
    summary: Vec<SummaryRow>,
    rate: Option<RateFit>,
    checks: Vec<Check>,
    rates_csv: Option<String>,
) -> ExperimentReport {
    let summary_csv = render_summary_csv(&config.experiment, config.seed, &summary);
    let passed = checks.iter().all(|c| c.passed);
    ExperimentReport {
        experiment: config.experiment.clone(),
        seed: config.seed,
        replications: config.replications,
        parameters,
        summary,
        rate,
        checks,
        passed,
        summary_csv,
        rates_csv,
    }
}

/// Sample mean, variance, and the moment-based standard error of the
/// variance estimate.
fn variance_with_se(sample: &[f64]) -> Result<(f64, f64, f64)> {
    let (mean, sd) = sample_moments(sample)?;
    let var = sd * sd;
    let n = sample.len() as f64;
    let m4 = sample.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    Ok((mean, var, ((m4 - var * var).max(0.0) / n).sqrt()))
}

fn distances(sample: &[f64]) -> Result<(f64, f64)> {
    let st = standardize(sample)?;
    Ok((wasserstein1_to_std_normal(&st)?, ks_to_std_normal(&st)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltSubordinatedParams {
    pub model: CovarianceModel,
    /// Hermite coefficients of the subordinating function, index = order.
    pub coeffs: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub w1_limit: f64,
    /// Relative band around the limiting variance the quadrature oracle
    /// must land in (slowly decaying covariance only).
    pub oracle_rel_limit: f64,
}

impl Default for CltSubordinatedParams {
    fn default() -> Self {
        CltSubordinatedParams {
            model: CovarianceModel::fbm_increments(0.7).expect("valid default"),
            coeffs: vec![0.0, 4.0, 0.0, 1.0],
            t_end: 2000.0,
            dt: 1.0,
            w1_limit: 0.05,
            oracle_rel_limit: 0.15,
        }
    }
}

fn run_clt_subordinated(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let p: CltSubordinatedParams = params(config)?;
    let parameters = serde_json::to_value(&p)?;
    let f = HermiteExpansion::from_coeffs(p.coeffs.clone());
    let sub = SubordinatedConfig {
        model: p.model,
        f: f.clone(),
        t_end: p.t_end,
        dt: p.dt,
        replications: config.replications,
    };
    sub.validate()?;
    let samples = subordinated_samples(&sub, config.seed)?;
    let (mean, variance, se) = variance_with_se(&samples)?;
    let oracle = time_average_variance(&p.model, &f, p.t_end)?;
    let (w1, ks) = distances(&samples)?;

    let mut checks = vec![check(
        "empirical variance within three standard errors of the quadrature oracle",
        (variance - oracle).abs(),
        3.0 * se,
    )];
    if let DecayClass::PowerDecay { m, .. } = p.model.decay() {
        let c1 = f.coeffs().get(1).copied().unwrap_or(0.0);
        let limit = asymptotic_variance(m, c1);
        if limit > 0.0 {
            checks.push(check(
                "quadrature oracle within the relative band of the limiting variance",
                (oracle / limit - 1.0).abs(),
                p.oracle_rel_limit,
            ));
        }
    }
    checks.push(check(
        "wasserstein distance of the standardized sample below the limit",
        w1,
        p.w1_limit,
    ));
    let summary = vec![SummaryRow {
        sweep: p.t_end,
        replications: samples.len(),
        mean,
        variance,
        exact_variance: Some(oracle),
        w1: Some(w1),
        ks: Some(ks),
    }];
    Ok(assemble(config, parameters, summary, None, checks, None))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallJumpsParams {
    pub measure: LevyMeasure,
    /// Exponential-kernel rate of the integrand sqrt(2 lambda) e^(-lambda (t-s)).
    pub lambda: f64,
    pub t: f64,
    /// Strictly decreasing truncation levels; distances are asserted at the
    /// last (smallest) one.
    pub eps_grid: Vec<f64>,
    pub inner_eps: f64,
    pub ks_limit: f64,
}

impl Default for SmallJumpsParams {
    fn default() -> Self {
        SmallJumpsParams {
            measure: LevyMeasure::power_law(0.5, 1.0, 1.0).expect("valid default"),
            lambda: 1.0,
            t: 5.0,
            eps_grid: vec![1e-2, 1e-3, 1e-4],
            inner_eps: 1e-6,
            ks_limit: 0.02,
        }
    }
}

fn run_small_jumps(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let p: SmallJumpsParams = params(config)?;
    let parameters = serde_json::to_value(&p)?;
    let substitution = gaussian_substitution_valid(&p.measure, &p.eps_grid)?;
    let (lambda, t) = (p.lambda, p.t);
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveParameter {
            name: "lambda",
            value: lambda,
        });
    }
    let h = move |s: f64| (2.0 * lambda).sqrt() * (-lambda * (t - s)).exp();
    let energy = 1.0 - (-2.0 * lambda * t).exp();

    let mut summary = Vec::new();
    let mut checks = Vec::new();
    let mut ratios = Vec::new();
    let last = p.eps_grid.len() - 1;
    for (i, &eps) in p.eps_grid.iter().enumerate() {
        let samples = sample_small_jump_functional(
            &p.measure,
            eps,
            h,
            t,
            p.inner_eps,
            config.replications,
            config.seed + i as u64,
        )?;
        let sigma = sigma_eps(&p.measure, eps)?;
        let discarded = (sigma_eps(&p.measure, p.inner_eps)? / sigma).powi(2);
        let target = (1.0 - discarded) * energy;
        let (mean, variance, se) = variance_with_se(&samples)?;
        let (w1, ks) = distances(&samples)?;
        summary.push(SummaryRow {
            sweep: eps,
            replications: samples.len(),
            mean,
            variance,
            exact_variance: Some(target),
            w1: Some(w1),
            ks: Some(ks),
        });
        checks.push(check(
            format!("variance at truncation {eps} within three standard errors of the band value"),
            (variance - target).abs(),
            3.0 * se,
        ));
        if i == last {
            checks.push(check(
                "kolmogorov distance of the standardized sample below the limit",
                ks,
                p.ks_limit,
            ));
        }
        ratios.push(third_moment_ratio(&p.measure, eps)?);
    }
    let worst_rise = ratios
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(check(
        "third-moment ratio decreases along the truncation grid",
        worst_rise,
        0.0,
    ));
    checks.push(check(
        "sigma(eps)/eps diverges, licensing the Gaussian substitution",
        match substitution.verdict {
            SubstitutionVerdict::Diverging => 0.0,
            SubstitutionVerdict::Inconclusive => 1.0,
        },
        0.0,
    ));
    Ok(assemble(config, parameters, summary, None, checks, None))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlpHybridParams {
    /// Hurst indices whose kernel Gram matrix is held against the
    /// fractional covariance.
    pub hursts: Vec<f64>,
    /// Time grid for the Gram comparison, strictly positive.
    pub grid: Vec<f64>,
    pub gram_tol: f64,
    pub measure: LevyMeasure,
    pub eps: f64,
    /// Hurst index of the simulated hybrid process.
    pub sim_hurst: f64,
}

impl Default for FlpHybridParams {
    fn default() -> Self {
        FlpHybridParams {
            hursts: vec![0.3, 0.7],
            grid: vec![0.4, 0.8, 1.2, 1.6, 2.0],
            gram_tol: 1e-3,
            measure: LevyMeasure::power_law(0.5, 1.0, 1.0).expect("valid default"),
            eps: 1e-3,
            sim_hurst: 0.7,
        }
    }
}

fn run_flp_hybrid(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let p: FlpHybridParams = params(config)?;
    let parameters = serde_json::to_value(&p)?;
    let mut checks = Vec::new();
    for &hurst in &p.hursts {
        let kernel = FractionalKernel::molchan_golosov(hurst)?;
        let mut worst = 0.0f64;
        for &t in &p.grid {
            for &s in &p.grid {
                worst = worst.max((gram_value(&kernel, t, s)? - fbm_gram(hurst, t, s)).abs());
            }
        }
        checks.push(check(
            format!("kernel gram matches the fractional covariance at hurst {hurst}"),
            worst,
            p.gram_tol,
        ));
    }

    let kernel = FractionalKernel::molchan_golosov(p.sim_hurst)?;
    let paths = simulate_flp_hybrid(
        &kernel,
        &p.measure,
        p.eps,
        2,
        1.0,
        config.replications,
        config.seed,
    )?;
    let endpoint: Vec<f64> = paths.iter().map(|g| g.values[1]).collect();
    let (mean, variance, se) = variance_with_se(&endpoint)?;
    let sigma = sigma_eps(&p.measure, p.eps)?;
    let tail_second = p.measure.second_moment()? - sigma * sigma;
    let decomposition = sigma * sigma + tail_second * gram_value(&kernel, 1.0, 1.0)?;
    let (w1, ks) = distances(&endpoint)?;
    checks.push(check(
        "unit-time variance within three standard errors of the two-region decomposition",
        (variance - decomposition).abs(),
        3.0 * se,
    ));
    let summary = vec![SummaryRow {
        sweep: 1.0,
        replications: endpoint.len(),
        mean,
        variance,
        exact_variance: Some(decomposition),
        w1: Some(w1),
        ks: Some(ks),
    }];
    Ok(assemble(config, parameters, summary, None, checks, None))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProductOuParams {
    pub lambda: f64,
    pub t_grid: Vec<f64>,
    /// Step as a fraction of 1/lambda.
    pub lambda_dt: f64,
    pub measure: LevyMeasure,
    /// Allowed gap |lambda Var - 1| at the largest horizon.
    pub trend_limit: f64,
    pub w1_limit: f64,
}

impl Default for ProductOuParams {
    fn default() -> Self {
        ProductOuParams {
            lambda: 1.0,
            t_grid: vec![10.0, 50.0, 200.0],
            lambda_dt: DEFAULT_LAMBDA_DT,
            measure: LevyMeasure::symmetric_atoms(1.0, 0.5).expect("valid default"),
            trend_limit: 0.05,
            w1_limit: 0.05,
        }
    }
}

fn run_product_ou(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let p: ProductOuParams = params(config)?;
    let parameters = serde_json::to_value(&p)?;
    let t_max = p.t_grid.iter().fold(0.0f64, |a, &b| a.max(b));
    if p.t_grid.is_empty() || !(t_max > 0.0) {
        return Err(Error::InvalidParameter(
            "t_grid must hold positive horizons".into(),
        ));
    }
    let mut summary = Vec::new();
    let mut checks = Vec::new();
    for (i, &t_end) in p.t_grid.iter().enumerate() {
        let cfg = ProductOUConfig {
            lambda: p.lambda,
            measure: p.measure.clone(),
            t_end,
            dt: p.lambda_dt / p.lambda,
            replications: config.replications,
            start: OuStart::FromZero,
        };
        let samples = product_ou_samples(&cfg, config.seed + i as u64)?;
        let (mean, variance, se) = variance_with_se(&samples)?;
        let exact = product_ou_variance_exact(p.lambda, t_end)?;
        let (w1, ks) = distances(&samples)?;
        summary.push(SummaryRow {
            sweep: t_end,
            replications: samples.len(),
            mean,
            variance,
            exact_variance: Some(exact),
            w1: Some(w1),
            ks: Some(ks),
        });
        checks.push(check(
            format!("empirical variance within three standard errors of the closed form at horizon {t_end}"),
            (variance - exact).abs(),
            3.0 * se,
        ));
        if t_end == t_max {
            checks.push(check(
                "closed-form variance near its large-horizon limit",
                (product_ou_variance_exact(p.lambda, t_end)? * p.lambda - 1.0).abs(),
                p.trend_limit,
            ));
            checks.push(check(
                "wasserstein distance of the standardized sample below the limit",
                w1,
                p.w1_limit,
            ));
        }
    }

    let near = product_ou_bounds(p.lambda, &p.measure, t_max)?;
    let far = product_ou_bounds(p.lambda, &p.measure, 2.0 * t_max)?;
    let worst = [
        (near.gradient_fourth, far.gradient_fourth, 0.0f64),
        (near.third_moment, far.third_moment, -0.5),
        (near.contraction, far.contraction, -1.0),
        (near.second_derivative, far.second_derivative, -1.0),
    ]
    .iter()
    .map(|&(a, b, e)| (b / a / 2.0f64.powf(e) - 1.0).abs())
    .fold(0.0f64, f64::max);
    checks.push(check(
        "bound terms scale with the horizon at their closed-form exponents",
        worst,
        1e-12,
    ));
    Ok(assemble(config, parameters, summary, None, checks, None))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosIdentitiesParams {
    pub sigma: f64,
    pub horizon: f64,
    pub steps: usize,
    /// Jump marks (size, rate) attached to every time cell.
    pub marks: Vec<(f64, f64)>,
    /// Grid refinements for the product-formula gap exponent.
    pub mesh_steps: Vec<usize>,
    pub mesh_replications: usize,
    /// Random-kernel draws for the variance-energy battery.
    pub kernel_trials: u64,
    pub exact_tol: f64,
}

impl Default for ChaosIdentitiesParams {
    fn default() -> Self {
        ChaosIdentitiesParams {
            sigma: 1.0,
            horizon: 1.0,
            steps: 2,
            marks: vec![(0.8, 1.0), (-0.5, 0.6)],
            mesh_steps: vec![4, 8, 16, 32],
            mesh_replications: 2000,
            kernel_trials: 50,
            exact_tol: 1e-12,
        }
    }
}

fn uniform_kernel(order: usize, n: usize, seed: u64, stream: u64) -> Result<Kernel> {
    use rand::Rng;
    let mut rng = replicate_rng(seed, stream);
    let count = n.pow(order as u32);
    let values = (0..count).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    Kernel::new(order, n, values)
}

fn run_chaos_identities(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let p: ChaosIdentitiesParams = params(config)?;
    let parameters = serde_json::to_value(&p)?;
    let grid = AtomGrid::new(p.sigma, p.horizon, p.steps, &p.marks)?;
    let n = grid.len();
    if n < 3 {
        return Err(Error::InvalidParameter(
            "identity battery needs at least three atoms".into(),
        ));
    }
    let mut checks = Vec::new();
    let draws = sample_noise(&grid, config.replications, config.seed)?;

    // Isometry: E[I_p I_q] against the exact kernel inner products.
    let kernels: Vec<Kernel> = (1..=3)
        .map(|q| uniform_kernel(q, n, config.seed, 10 + q as u64))
        .collect::<Result<_>>()?;
    let funcs: Vec<ChaosFunctional> = kernels
        .iter()
        .map(|k| ChaosFunctional::from_kernel(k.clone()))
        .collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> = draws
        .iter()
        .map(|w| {
            kernels
                .iter()
                .map(|k| multiple_integral(k, w))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mut worst_z = 0.0f64;
    for a in 0..3 {
        for b in a..3 {
            let products: Vec<f64> = values.iter().map(|v| v[a] * v[b]).collect();
            let (mean, sd) = sample_moments(&products)?;
            let se = sd / (products.len() as f64).sqrt();
            let want = expected_product(&funcs[a], &funcs[b], &grid)?;
            worst_z = worst_z.max((mean - want).abs() / se);
        }
    }
    checks.push(check(
        "multiple-integral isometry within three standard errors",
        worst_z,
        3.0,
    ));

    // Jump quotient against the chaos derivative, pathwise.
    let mixed = ChaosFunctional::new(
        n,
        vec![
            Kernel::constant(0.3),
            kernels[0].clone(),
            kernels[1].clone(),
            kernels[2].clone(),
        ],
    )?;
    let mut worst_quotient = 0.0f64;
    for w in draws.iter().take(5) {
        for (z, atom) in grid.atoms().iter().enumerate() {
            if !atom.is_jump() {
                continue;
            }
            let quotient = jump_quotient(&mixed, &grid, w, z)?;
            let derivative = malliavin_derivative(&mixed, z)?.evaluate(w)?;
            worst_quotient = worst_quotient.max((quotient - derivative).abs());
        }
    }
    checks.push(check(
        "jump quotient equals the chaos derivative",
        worst_quotient,
        p.exact_tol,
    ));

    // Derivative product rule on a pure-jump grid.
    if !p.marks.is_empty() {
        let jump_grid = AtomGrid::new(0.0, p.horizon, p.steps, &p.marks)?;
        let m = jump_grid.len();
        let f = ChaosFunctional::from_kernel(uniform_kernel(1, m, config.seed, 20)?)?;
        let g = ChaosFunctional::from_kernel(uniform_kernel(1, m, config.seed, 21)?)?;
        let jump_draws = sample_noise(&jump_grid, 5, config.seed + 1)?;
        let mut worst_rule = 0.0f64;
        for w in &jump_draws {
            for (z, atom) in jump_grid.atoms().iter().enumerate() {
                let x = atom.jump_size;
                let bumped = insert_jump(&jump_grid, w, z)?;
                let lhs = (f.evaluate(&bumped)? * g.evaluate(&bumped)?
                    - f.evaluate(w)? * g.evaluate(w)?)
                    / x;
                let df = jump_quotient(&f, &jump_grid, w, z)?;
                let dg = jump_quotient(&g, &jump_grid, w, z)?;
                let rhs = df * g.evaluate(w)? + f.evaluate(w)? * dg + x * df * dg;
                worst_rule = worst_rule.max((lhs - rhs).abs());
            }
        }
        checks.push(check(
            "derivative product rule holds pathwise on jump noise",
            worst_rule,
            p.exact_tol,
        ));
    }

    // Number-operator composition recenters: L L^-1 F = F - E[F].
    let centered = ou_generator(&ou_generator_inverse(&mixed));
    let mut worst_centering = centered.mean().abs();
    for w in draws.iter().take(5) {
        let gap = centered.evaluate(w)? - (mixed.evaluate(w)? - mixed.mean());
        worst_centering = worst_centering.max(gap.abs());
    }
    checks.push(check(
        "number-operator composition recenters the functional",
        worst_centering,
        p.exact_tol,
    ));

    // Adjoint-integral duality, analytic and by Monte Carlo.
    let f2 = uniform_kernel(2, n, config.seed, 30)?;
    let field: Vec<ChaosFunctional> = (0..n)
        .map(|z| {
            let row = Kernel::new(1, n, (0..n).map(|j| f2.get(&[z, j])).collect())?;
            ChaosFunctional::from_kernel(row)
        })
        .collect::<Result<_>>()?;
    let adjoint = skorohod(&field)?;
    let target = ChaosFunctional::from_kernel(uniform_kernel(2, n, config.seed, 31)?.symmetrized())?;
    let lhs = expected_product(&adjoint, &target, &grid)?;
    let mut rhs = 0.0;
    for (z, atom) in grid.atoms().iter().enumerate() {
        let dg = malliavin_derivative(&target, z)?;
        rhs += atom.weight * expected_product(&field[z], &dg, &grid)?;
    }
    checks.push(check(
        "adjoint integral is dual to the derivative",
        (lhs - rhs).abs(),
        p.exact_tol,
    ));
    let pairs: Vec<f64> = draws
        .iter()
        .map(|w| Ok(adjoint.evaluate(w)? * target.evaluate(w)?))
        .collect::<Result<_>>()?;
    let (mean, sd) = sample_moments(&pairs)?;
    let se = sd / (pairs.len() as f64).sqrt();
    checks.push(check(
        "adjoint duality within three standard errors by Monte Carlo",
        (mean - lhs).abs() / se,
        3.0,
    ));

    // Variance-energy battery over random kernels: the ordering holds and
    // equality appears exactly on chaos order <= 1.
    let mut violations = 0u64;
    for trial in 0..p.kernel_trials {
        let low_only = trial % 2 == 0;
        let mut list = vec![
            Kernel::constant(0.0),
            uniform_kernel(1, n, config.seed, 100 + 3 * trial)?,
        ];
        if !low_only {
            list.push(uniform_kernel(2, n, config.seed, 101 + 3 * trial)?);
            if trial % 3 == 0 {
                list.push(uniform_kernel(3, n, config.seed, 102 + 3 * trial)?);
            }
        }
        let func = ChaosFunctional::new(n, list)?;
        let report = energy_report(&func, &grid, 2, config.seed + trial)?;
        let ok = report.poincare_slack >= 0.0
            && report.inverse_derivative_energy <= report.derivative_energy
            && report.equality_case == low_only
            && (report.poincare_slack == 0.0) == low_only
            && report.pairing == report.variance;
        if !ok {
            violations += 1;
        }
    }
    checks.push(check(
        "variance-energy ordering with equality exactly on first-order chaos",
        violations as f64,
        0.0,
    ));

    // Product formula: exact gap law on one atom, then the L2 gap exponent
    // across mesh refinements.
    let single = AtomGrid::new(p.sigma.max(0.5), p.horizon, 1, &[])?;
    let mu = single.atoms()[0].weight;
    let unit = Kernel::new(1, 1, vec![1.0])?;
    let single_draws = sample_noise(&single, config.replications, config.seed + 2)?;
    let mut worst_gap_law = 0.0f64;
    let mut gaps_sq = Vec::with_capacity(single_draws.len());
    for w in &single_draws {
        let (lhs, rhs) = product_formula_check(&unit, &unit, &single, w)?;
        let m = w.values[0];
        worst_gap_law = worst_gap_law.max((lhs - rhs - (m * m - mu)).abs());
        gaps_sq.push((lhs - rhs) * (lhs - rhs));
    }
    checks.push(check(
        "single-atom product-formula gap equals the quadratic compensator",
        worst_gap_law,
        p.exact_tol,
    ));
    let (gap_mean, gap_sd) = sample_moments(&gaps_sq)?;
    let gap_se = gap_sd / (gaps_sq.len() as f64).sqrt();
    checks.push(check(
        "single-atom gap second moment within three standard errors",
        (gap_mean - 2.0 * mu * mu).abs(),
        3.0 * gap_se,
    ));

    let mut meshes = Vec::new();
    let mut norms = Vec::new();
    for (i, &steps) in p.mesh_steps.iter().enumerate() {
        let refine = AtomGrid::new(p.sigma.max(0.5), p.horizon, steps, &[])?;
        let count = refine.len();
        let flat = Kernel::new(1, count, vec![1.0; count])?;
        let mesh_draws = sample_noise(&refine, p.mesh_replications, config.seed + 3 + i as u64)?;
        let mut acc = 0.0;
        for w in &mesh_draws {
            let (lhs, rhs) = product_formula_check(&flat, &flat, &refine, w)?;
            acc += (lhs - rhs) * (lhs - rhs);
        }
        meshes.push(refine.mesh());
        norms.push((acc / mesh_draws.len() as f64).sqrt());
    }
    let fit = rate_fit(&meshes, &norms)?;
    checks.push(check(
        "product-formula gap shrinks like the square root of the mesh",
        (fit.slope - 0.5).abs(),
        0.15,
    ));

    Ok(assemble(config, parameters, Vec::new(), Some(fit), checks, None))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateTableParams {
    pub model: CovarianceModel,
    pub coeffs: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub dt: f64,
    /// Bootstrap resamples behind the distance standard errors.
    pub bootstrap: usize,
    /// Largest admissible fitted slope of the Wasserstein decay.
    pub slope_limit: f64,
}

impl Default for RateTableParams {
    fn default() -> Self {
        RateTableParams {
            model: CovarianceModel::fbm_increments(0.3).expect("valid default"),
            coeffs: vec![1.0, 0.0, 1.0],
            t_grid: vec![250.0, 500.0, 1000.0, 2000.0],
            dt: 1.0,
            bootstrap: 200,
            slope_limit: -0.15,
        }
    }
}

fn run_rate_table(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let p: RateTableParams = params(config)?;
    let parameters = serde_json::to_value(&p)?;
    let f = HermiteExpansion::from_coeffs(p.coeffs.clone());
    let mut summary = Vec::new();
    let mut rows = Vec::new();
    for (i, &t_end) in p.t_grid.iter().enumerate() {
        let sub = SubordinatedConfig {
            model: p.model,
            f: f.clone(),
            t_end,
            dt: p.dt,
            replications: config.replications,
        };
        sub.validate()?;
        let samples = subordinated_samples(&sub, config.seed + i as u64)?;
        let (mean, variance, _) = variance_with_se(&samples)?;
        let standardized = standardize(&samples)?;
        let w1 = wasserstein1_to_std_normal(&standardized)?;
        let ks = ks_to_std_normal(&standardized)?;
        let mut rng = replicate_rng(config.seed, 7_000_000 + i as u64);
        let se = wasserstein1_bootstrap_se(&standardized, p.bootstrap, &mut rng)?;
        summary.push(SummaryRow {
            sweep: t_end,
            replications: samples.len(),
            mean,
            variance,
            exact_variance: None,
            w1: Some(w1),
            ks: Some(ks),
        });
        rows.push(RateRow { t: t_end, w1, ks, se });
    }
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let ws: Vec<f64> = rows.iter().map(|r| r.w1).collect();
    let fit = rate_fit(&ts, &ws)?;
    let checks = vec![check(
        "fitted wasserstein slope at most the registered bound",
        fit.slope,
        p.slope_limit,
    )];
    let rates_csv = format!("{SCHEMA_LINE}\n{}", rate_rows_csv(&rows));
    Ok(assemble(
        config,
        parameters,
        summary,
        Some(fit),
        checks,
        Some(rates_csv),
    ))
}
