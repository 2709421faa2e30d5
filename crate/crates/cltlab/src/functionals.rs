//! The two central-limit functionals: the normalized time average of a
//! function of a stationary Gaussian path, and the normalized time integral
//! of a product of two independent Ornstein-Uhlenbeck processes, one driven
//! by Brownian motion and one by compensated jumps. Both come with exact
//! variance baselines and closed-form normal-approximation bounds.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{vtilde, CovarianceModel, DecayClass};
use crate::error::{Error, Result};
use crate::hermite::HermiteExpansion;
use crate::jumps::LevyMeasure;
use crate::paths::{sample_stationary, sample_stationary_circulant, PathGrid};
use crate::quad::KahanSum;
use crate::rng::replicate_rng;

/// Stability ceiling for the exact OU recursions.
pub const MAX_LAMBDA_DT: f64 = 0.1;

/// Default step: twenty grid points per relaxation time.
pub const DEFAULT_LAMBDA_DT: f64 = 0.05;

/// Tolerance on the unit-second-moment normalization of the jump measure.
const MOMENT_TOL: f64 = 1e-8;

/// Grid size beyond which the spectral path sampler is tried first.
const DENSE_SWITCH: usize = 512;

/// Time average of f(X_t) - E[f(Z)] over [0, T], normalized so its variance
/// has a finite nonzero limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubordinatedConfig {
    pub model: CovarianceModel,
    pub f: HermiteExpansion,
    pub t_end: f64,
    pub dt: f64,
    pub replications: usize,
}

impl SubordinatedConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (name, value) in [("t_end", self.t_end), ("dt", self.dt)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        if self.dt > self.t_end {
            return Err(Error::InvalidParameter(format!(
                "dt {} exceeds the horizon {}",
                self.dt, self.t_end
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter(
                "replications must be at least 1".into(),
            ));
        }
        // Admissibility of f: slow covariance decay needs a nonvanishing
        // first coefficient (it carries the limit variance); an integrable
        // covariance needs an even f.
        match self.model.decay() {
            DecayClass::PowerDecay { .. } => {
                if self.f.coeffs().get(1).copied().unwrap_or(0.0) == 0.0 {
                    return Err(Error::InvalidParameter(
                        "slowly decaying covariance needs a function with a nonzero \
                         first coefficient"
                            .into(),
                    ));
                }
            }
            DecayClass::IntegrableCovariance => {
                if !self.f.is_even() {
                    return Err(Error::InvalidParameter(
                        "integrable covariance needs an even function".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Grid points covering [0, t_end] at step dt.
    pub fn grid_points(&self) -> usize {
        (self.t_end / self.dt).round() as usize + 1
    }
}

fn trapezoid(values: impl Iterator<Item = f64>, n: usize, dt: f64) -> f64 {
    let mut acc = KahanSum::new();
    for (k, v) in values.enumerate() {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc.add(w * v);
    }
    acc.value() * dt
}

/// The normalized time average for one path.
pub fn subordinated_functional(path: &PathGrid, cfg: &SubordinatedConfig) -> Result<f64> {
    let n = cfg.grid_points();
    if path.len() != n {
        return Err(Error::GridMismatch {
            expected: n,
            got: path.len(),
        });
    }
    let c0 = cfg.f.mean();
    let integral = trapezoid(path.values.iter().map(|&x| cfg.f.eval(x) - c0), n, path.dt);
    Ok(integral / vtilde(cfg.model.decay(), cfg.t_end)?.sqrt())
}

/// Stationary Gaussian paths for the model, preferring the spectral sampler
/// on large grids and falling back to dense factorization if the embedding
/// fails.
fn stationary_paths(
    model: &CovarianceModel,
    n: usize,
    dt: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<PathGrid>> {
    if n > DENSE_SWITCH {
        match sample_stationary_circulant(model, n, dt, count, seed) {
            Ok(paths) => return Ok(paths),
            Err(Error::NotPsd { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    sample_stationary(model, n, dt, count, seed)
}

/// Replicated samples of the time-average functional, one RNG stream per
/// replicate.
pub fn subordinated_samples(cfg: &SubordinatedConfig, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let paths = stationary_paths(&cfg.model, cfg.grid_points(), cfg.dt, cfg.replications, seed)?;
    paths
        .iter()
        .map(|p| subordinated_functional(p, cfg))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuStart {
    /// Both processes start at zero, matching the covariance
    /// e^(-lambda |t-s|) - e^(-lambda (t+s)) exactly.
    #[default]
    FromZero,
    /// The Gaussian process starts in its stationary law, removing the O(1)
    /// transient for long-horizon runs.
    Stationary,
}

/// Product-of-OU functional: T^(-1/2) int_0^T Y_t Z_t dt with Y Gaussian,
/// Z jump-driven, both with relaxation rate lambda and unit stationary
/// variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductOUConfig {
    pub lambda: f64,
    pub measure: LevyMeasure,
    pub t_end: f64,
    pub dt: f64,
    pub replications: usize,
    #[serde(default)]
    pub start: OuStart,
}

impl ProductOUConfig {
    /// The reference setup: jumps of size +-1 with mass 1/2 each, so every
    /// moment the bounds need equals one, and dt giving lambda dt = 0.05.
    pub fn standard(lambda: f64, t_end: f64, replications: usize) -> Result<Self> {
        let cfg = ProductOUConfig {
            lambda,
            measure: LevyMeasure::symmetric_atoms(1.0, 0.5)?,
            t_end,
            dt: DEFAULT_LAMBDA_DT / lambda,
            replications,
            start: OuStart::FromZero,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("lambda", self.lambda),
            ("t_end", self.t_end),
            ("dt", self.dt),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        if self.lambda * self.dt > MAX_LAMBDA_DT {
            return Err(Error::UnstableStep(self.lambda * self.dt));
        }
        if self.dt > self.t_end {
            return Err(Error::InvalidParameter(format!(
                "dt {} exceeds the horizon {}",
                self.dt, self.t_end
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter(
                "replications must be at least 1".into(),
            ));
        }
        self.measure.validate()?;
        let m2 = self.measure.second_moment()?;
        if (m2 - 1.0).abs() > MOMENT_TOL {
            return Err(Error::InvalidParameter(format!(
                "jump measure must have unit second moment, got {m2}"
            )));
        }
        self.measure.fourth_moment()?;
        Ok(())
    }

    pub fn grid_points(&self) -> usize {
        (self.t_end / self.dt).round() as usize + 1
    }
}

/// One (Y, Z) pair on the grid k dt, exact in law at the grid points:
/// Y by the AR(1) recursion with the integrated-kernel step variance, Z by
/// superposing exponentially decayed jump responses and subtracting the
/// analytic compensator response. The replicate index selects the RNG
/// stream.
pub fn product_ou_paths(
    cfg: &ProductOUConfig,
    seed: u64,
    replicate: u64,
) -> Result<(PathGrid, PathGrid)> {
    cfg.validate()?;
    let atoms: Vec<(f64, f64)> = match &cfg.measure {
        LevyMeasure::Atomic { atoms } => {
            atoms.iter().copied().filter(|&(_, m)| m > 0.0).collect()
        }
        other => {
            // Exact jump-by-jump simulation needs finitely many atoms.
            return Err(Error::InfiniteActivity {
                expected: other.tail_mass(0.0) * cfg.t_end,
                budget: 0.0,
            });
        }
    };
    let n = cfg.grid_points();
    let lambda = cfg.lambda;
    let dt = cfg.dt;
    let horizon = (n - 1) as f64 * dt;
    let decay = (-lambda * dt).exp();
    let noise_sd = (1.0 - decay * decay).sqrt();
    let mut rng = replicate_rng(seed, replicate);

    let mut y = Vec::with_capacity(n);
    let mut state = match cfg.start {
        OuStart::FromZero => 0.0,
        OuStart::Stationary => rng.sample::<f64, _>(StandardNormal),
    };
    y.push(state);
    for _ in 1..n {
        let xi: f64 = rng.sample(StandardNormal);
        state = decay * state + noise_sd * xi;
        y.push(state);
    }

    let total: f64 = atoms.iter().map(|&(_, m)| m).sum();
    let m1: f64 = atoms.iter().map(|&(x, m)| x * m).sum();
    let mut z = vec![0.0; n];
    if total > 0.0 && horizon > 0.0 {
        let poisson = Poisson::new(total * horizon)
            .map_err(|_| Error::InvalidParameter(format!("bad jump rate {total} * {horizon}")))?;
        let jumps = poisson.sample(&mut rng) as usize;
        let mut arrivals: Vec<(f64, f64)> = (0..jumps)
            .map(|_| {
                let tau = rng.random::<f64>() * horizon;
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut size = atoms[atoms.len() - 1].0;
                for &(x, mass) in &atoms {
                    acc += mass;
                    if u < acc {
                        size = x;
                        break;
                    }
                }
                (tau, size)
            })
            .collect();
        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut response = 0.0;
        let mut next = 0;
        for (k, zk) in z.iter_mut().enumerate().skip(1) {
            let t_k = k as f64 * dt;
            response *= decay;
            while next < arrivals.len() && arrivals[next].0 <= t_k {
                let (tau, x) = arrivals[next];
                response += (-lambda * (t_k - tau)).exp() * x;
                next += 1;
            }
            *zk = response;
        }
    }
    let gain = (2.0 * lambda).sqrt();
    for (k, zk) in z.iter_mut().enumerate() {
        let t_k = k as f64 * dt;
        let drift = m1 * (1.0 - (-lambda * t_k).exp()) / lambda;
        *zk = gain * (*zk - drift);
    }

    let grid = |values: Vec<f64>| PathGrid {
        t0: 0.0,
        dt,
        values,
        seed,
    };
    Ok((grid(y), grid(z)))
}

/// T^(-1/2) times the trapezoid integral of the pointwise product.
pub fn product_ou_functional(y: &PathGrid, z: &PathGrid, t_end: f64) -> Result<f64> {
    if y.len() != z.len() {
        return Err(Error::GridMismatch {
            expected: y.len(),
            got: z.len(),
        });
    }
    if y.dt != z.dt || y.t0 != z.t0 {
        return Err(Error::InvalidParameter(
            "product functional needs both paths on one grid".into(),
        ));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "t_end",
            value: t_end,
        });
    }
    let n = y.len();
    let integral = trapezoid(
        y.values.iter().zip(&z.values).map(|(&a, &b)| a * b),
        n,
        y.dt,
    );
    Ok(integral / t_end.sqrt())
}

/// Replicated samples of the product functional, one RNG stream per
/// replicate.
pub fn product_ou_samples(cfg: &ProductOUConfig, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let (y, z) = product_ou_paths(cfg, seed, r as u64)?;
            product_ou_functional(&y, &z, cfg.t_end)
        })
        .collect()
}

/// Closed-form Var[F_T] for the product functional:
/// T^(-1)(T/lambda - 6(1-e^(-2 lambda T))/(4 lambda^2) + 4 T e^(-2 lambda T)
/// + (1-e^(-2 lambda T))^2/(4 lambda^2)), which tends to 1/lambda.
pub fn product_ou_variance_exact(lambda: f64, t_end: f64) -> Result<f64> {
    for (name, value) in [("lambda", lambda), ("t_end", t_end)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveParameter { name, value });
        }
    }
    let e = (-2.0 * lambda * t_end).exp();
    let ll = 4.0 * lambda * lambda;
    Ok((t_end / lambda - 6.0 * (1.0 - e) / ll + 4.0 * t_end * e + (1.0 - e) * (1.0 - e) / ll)
        / t_end)
}

/// The four closed-form bounds controlling the normal approximation of the
/// product functional. The first is O(1); the rest decay at the stated
/// rates, so they certify an O(T^(-1/4)) distance after the fourth root.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductOuBounds {
    /// E||DF||^4 bound, constant in T.
    pub gradient_fourth: f64,
    /// E<|x|, |DF|^3> bound, O(T^(-1/2)).
    pub third_moment: f64,
    /// Contraction-norm bound, O(T^(-1)).
    pub contraction: f64,
    /// Second-derivative bound, O(T^(-1)).
    pub second_derivative: f64,
}

pub fn product_ou_bounds(
    lambda: f64,
    measure: &LevyMeasure,
    t_end: f64,
) -> Result<ProductOuBounds> {
    for (name, value) in [("lambda", lambda), ("t_end", t_end)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveParameter { name, value });
        }
    }
    measure.validate()?;
    let m4 = measure.fourth_moment()?;
    let m3 = measure.abs_third_moment()?;
    Ok(ProductOuBounds {
        gradient_fourth: 2.0 * (4.0 + lambda * m4) * (2.0 / lambda).powi(2),
        third_moment: 4.0 * 2f64.sqrt() * m3 / (lambda.powf(1.5) * t_end.sqrt()),
        contraction: 8.0 / (t_end * lambda * lambda),
        second_derivative: 4.0 / (lambda * lambda * t_end),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::time_average_variance;
    use crate::distance::sample_moments;
    use approx::assert_relative_eq;

    fn cube_plus_x() -> HermiteExpansion {
        // x^3 + x = H_3 + 4 H_1.
        HermiteExpansion::from_coeffs(vec![0.0, 4.0, 0.0, 1.0])
    }

    fn variance_se(xs: &[f64]) -> f64 {
        let (mean, sd) = sample_moments(xs).unwrap();
        let n = xs.len() as f64;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        ((m4 - sd.powi(4)).max(0.0) / n).sqrt()
    }

    #[test]
    fn admissibility_checks_follow_the_decay_class() {
        let slow = CovarianceModel::fbm_increments(0.7).unwrap();
        let no_first = SubordinatedConfig {
            model: slow.clone(),
            f: HermiteExpansion::from_coeffs(vec![0.0, 0.0, 1.0]),
            t_end: 10.0,
            dt: 0.5,
            replications: 4,
        };
        assert!(no_first.validate().is_err());

        let integrable = CovarianceModel::fbm_increments(0.3).unwrap();
        let odd = SubordinatedConfig {
            model: integrable.clone(),
            f: HermiteExpansion::from_coeffs(vec![0.0, 1.0]),
            t_end: 10.0,
            dt: 0.5,
            replications: 4,
        };
        assert!(odd.validate().is_err());

        let fine = SubordinatedConfig {
            model: integrable,
            f: HermiteExpansion::from_coeffs(vec![0.0, 0.0, 1.0]),
            t_end: 10.0,
            dt: 0.5,
            replications: 4,
        };
        fine.validate().unwrap();
        let fine_slow = SubordinatedConfig {
            model: slow,
            f: cube_plus_x(),
            t_end: 10.0,
            dt: 0.5,
            replications: 4,
        };
        fine_slow.validate().unwrap();
    }

    #[test]
    fn constant_function_gives_exactly_zero() {
        let cfg = SubordinatedConfig {
            model: CovarianceModel::ou_exponential(1.0).unwrap(),
            f: HermiteExpansion::from_coeffs(vec![2.5]),
            t_end: 5.0,
            dt: 0.5,
            replications: 1,
        };
        let path = PathGrid {
            t0: 0.0,
            dt: 0.5,
            values: (0..11).map(|k| (k as f64).sin()).collect(),
            seed: 0,
        };
        assert_eq!(subordinated_functional(&path, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn functional_rejects_a_mismatched_grid() {
        let cfg = SubordinatedConfig {
            model: CovarianceModel::ou_exponential(1.0).unwrap(),
            f: HermiteExpansion::from_coeffs(vec![0.0, 0.0, 1.0]),
            t_end: 5.0,
            dt: 0.5,
            replications: 1,
        };
        let path = PathGrid {
            t0: 0.0,
            dt: 0.5,
            values: vec![0.0; 7],
            seed: 0,
        };
        assert!(matches!(
            subordinated_functional(&path, &cfg),
            Err(Error::GridMismatch {
                expected: 11,
                got: 7
            })
        ));
    }

    #[test]
    fn identity_function_average_is_centered() {
        // f(x) = x with odd part allowed: use the slow-decay model so the
        // admissibility check passes; the integrand is exactly centered.
        let cfg = SubordinatedConfig {
            model: CovarianceModel::fbm_increments(0.7).unwrap(),
            f: HermiteExpansion::from_coeffs(vec![0.0, 1.0]),
            t_end: 50.0,
            dt: 0.5,
            replications: 400,
        };
        let samples = subordinated_samples(&cfg, 17).unwrap();
        let (mean, sd) = sample_moments(&samples).unwrap();
        let se = sd / (samples.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn time_average_variance_matches_the_quadrature_oracle() {
        let model = CovarianceModel::fbm_increments(0.7).unwrap();
        let cfg = SubordinatedConfig {
            model: model.clone(),
            f: cube_plus_x(),
            t_end: 200.0,
            dt: 1.0,
            replications: 800,
        };
        let samples = subordinated_samples(&cfg, 23).unwrap();
        let (_, sd) = sample_moments(&samples).unwrap();
        let var = sd * sd;
        let want = time_average_variance(&model, &cfg.f, cfg.t_end).unwrap();
        let se = variance_se(&samples);
        assert!(
            (var - want).abs() < 3.0 * se,
            "var {var}, oracle {want}, se {se}"
        );
    }

    #[test]
    fn halving_the_step_leaves_the_variance_inside_the_noise_band() {
        let model = CovarianceModel::fbm_increments(0.7).unwrap();
        let coarse = SubordinatedConfig {
            model: model.clone(),
            f: cube_plus_x(),
            t_end: 50.0,
            dt: 1.0,
            replications: 600,
        };
        let fine = SubordinatedConfig {
            dt: 0.5,
            ..coarse.clone()
        };
        let a = subordinated_samples(&coarse, 29).unwrap();
        let b = subordinated_samples(&fine, 31).unwrap();
        let var = |xs: &[f64]| {
            let (_, sd) = sample_moments(xs).unwrap();
            sd * sd
        };
        let gap = (var(&a) - var(&b)).abs();
        let se = (variance_se(&a).powi(2) + variance_se(&b).powi(2)).sqrt();
        assert!(gap < 3.0 * se, "gap {gap}, se {se}");
    }

    #[test]
    fn exact_product_variance_known_values() {
        assert_relative_eq!(
            product_ou_variance_exact(1.0, 10.0).unwrap(),
            0.875,
            max_relative = 1e-7
        );
        assert_relative_eq!(
            product_ou_variance_exact(1.0, 1e8).unwrap(),
            1.0,
            max_relative = 1e-6
        );
        assert_relative_eq!(
            product_ou_variance_exact(2.0, 1e8).unwrap(),
            0.5,
            max_relative = 1e-6
        );
    }

    #[test]
    fn product_config_guards() {
        let mut cfg = ProductOUConfig::standard(1.0, 10.0, 8).unwrap();
        cfg.dt = 0.2;
        assert!(matches!(cfg.validate(), Err(Error::UnstableStep(_))));

        let wrong_scale = ProductOUConfig {
            measure: LevyMeasure::symmetric_atoms(2.0, 0.5).unwrap(),
            ..ProductOUConfig::standard(1.0, 10.0, 8).unwrap()
        };
        assert!(wrong_scale.validate().is_err());

        let density = ProductOUConfig {
            measure: LevyMeasure::power_law(0.5, 1.0, 1.0).unwrap(),
            ..ProductOUConfig::standard(1.0, 10.0, 8).unwrap()
        };
        assert!(density.validate().is_err());
        // Edges 1/16 give the power law a unit second moment, so this one
        // passes normalization and must fail on activity instead.
        let density_unit = ProductOUConfig {
            measure: LevyMeasure::power_law(0.5, 0.0625, 0.0625).unwrap(),
            ..ProductOUConfig::standard(1.0, 10.0, 8).unwrap()
        };
        assert!(matches!(
            product_ou_paths(&density_unit, 0, 0),
            Err(Error::InfiniteActivity { .. })
        ));
    }

    #[test]
    fn jump_ou_matches_its_covariance_at_fixed_times() {
        let cfg = ProductOUConfig::standard(1.0, 5.0, 1500).unwrap();
        let mut z_end = Vec::with_capacity(cfg.replications);
        let mut z_half = Vec::with_capacity(cfg.replications);
        for r in 0..cfg.replications {
            let (_, z) = product_ou_paths(&cfg, 41, r as u64).unwrap();
            z_half.push(z.values[10]);
            z_end.push(*z.values.last().unwrap());
        }
        let (mean_end, sd_end) = sample_moments(&z_end).unwrap();
        let se_mean = sd_end / (z_end.len() as f64).sqrt();
        assert!(mean_end.abs() < 3.0 * se_mean, "mean {mean_end}");
        let var_end = sd_end * sd_end;
        let want_end = 1.0 - (-2.0f64 * 5.0).exp();
        assert!(
            (var_end - want_end).abs() < 3.0 * variance_se(&z_end),
            "var {var_end} vs {want_end}"
        );
        let (_, sd_half) = sample_moments(&z_half).unwrap();
        let var_half = sd_half * sd_half;
        let want_half = 1.0 - (-2.0f64 * 0.5).exp();
        assert!(
            (var_half - want_half).abs() < 3.0 * variance_se(&z_half),
            "var {var_half} vs {want_half}"
        );
    }

    #[test]
    fn gaussian_ou_covariance_matches_the_closed_form() {
        let cfg = ProductOUConfig::standard(1.0, 4.0, 3000).unwrap();
        let idx = |t: f64| (t / cfg.dt).round() as usize;
        let grid = [(0.5, 1.0), (1.0, 2.0), (2.0, 4.0), (1.0, 4.0)];
        let mut products: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
        for r in 0..cfg.replications {
            let (y, _) = product_ou_paths(&cfg, 43, r as u64).unwrap();
            for (slot, &(s, t)) in products.iter_mut().zip(&grid) {
                slot.push(y.values[idx(s)] * y.values[idx(t)]);
            }
        }
        for (slot, &(s, t)) in products.iter().zip(&grid) {
            let (mean, sd) = sample_moments(slot).unwrap();
            let se = sd / (slot.len() as f64).sqrt();
            let want = (-cfg.lambda * (t - s)).exp() - (-cfg.lambda * (t + s)).exp();
            assert!(
                (mean - want).abs() < 3.0 * se,
                "cov({s},{t}) {mean} vs {want}"
            );
        }
    }

    #[test]
    fn stationary_start_removes_the_transient() {
        let mut cfg = ProductOUConfig::standard(1.0, 2.0, 4000).unwrap();
        cfg.start = OuStart::Stationary;
        let mut y0 = Vec::with_capacity(cfg.replications);
        let mut lag = Vec::with_capacity(cfg.replications);
        let idx = (1.0 / cfg.dt).round() as usize;
        for r in 0..cfg.replications {
            let (y, _) = product_ou_paths(&cfg, 47, r as u64).unwrap();
            y0.push(y.values[0]);
            lag.push(y.values[0] * y.values[idx]);
        }
        let (_, sd0) = sample_moments(&y0).unwrap();
        let var0 = sd0 * sd0;
        assert!((var0 - 1.0).abs() < 3.0 * variance_se(&y0), "var {var0}");
        let (mean, sd) = sample_moments(&lag).unwrap();
        let se = sd / (lag.len() as f64).sqrt();
        let want = (-1.0f64).exp();
        assert!((mean - want).abs() < 3.0 * se, "lag cov {mean} vs {want}");
    }

    #[test]
    fn product_functional_zero_and_centered() {
        let cfg = ProductOUConfig::standard(1.0, 10.0, 2000).unwrap();
        let (y, z) = product_ou_paths(&cfg, 53, 0).unwrap();
        let zero = PathGrid {
            values: vec![0.0; y.len()],
            ..z.clone()
        };
        assert_eq!(product_ou_functional(&y, &zero, cfg.t_end).unwrap(), 0.0);

        let samples = product_ou_samples(&cfg, 53).unwrap();
        let (mean, sd) = sample_moments(&samples).unwrap();
        let se = sd / (samples.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}");
        let var = sd * sd;
        let want = product_ou_variance_exact(cfg.lambda, cfg.t_end).unwrap();
        assert!(
            (var - want).abs() < 3.0 * variance_se(&samples),
            "var {var} vs {want}"
        );
    }

    #[test]
    fn product_functional_rejects_mismatched_grids() {
        let cfg = ProductOUConfig::standard(1.0, 10.0, 4).unwrap();
        let (y, z) = product_ou_paths(&cfg, 3, 0).unwrap();
        let short = PathGrid {
            values: z.values[..z.len() - 1].to_vec(),
            ..z.clone()
        };
        assert!(matches!(
            product_ou_functional(&y, &short, cfg.t_end),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn closed_form_bounds_and_their_scaling() {
        let m = LevyMeasure::symmetric_atoms(1.0, 0.5).unwrap();
        let b100 = product_ou_bounds(1.0, &m, 100.0).unwrap();
        assert_relative_eq!(b100.gradient_fourth, 40.0);
        assert_relative_eq!(b100.contraction, 0.08);
        assert_relative_eq!(b100.second_derivative, 0.04);
        assert_relative_eq!(b100.third_moment, 4.0 * 2f64.sqrt() / 10.0);

        let b200 = product_ou_bounds(1.0, &m, 200.0).unwrap();
        assert_relative_eq!(b200.gradient_fourth, b100.gradient_fourth);
        assert_relative_eq!(
            b200.third_moment,
            b100.third_moment / 2f64.sqrt(),
            max_relative = 1e-14
        );
        assert_relative_eq!(b200.contraction, b100.contraction / 2.0);
        assert_relative_eq!(b200.second_derivative, b100.second_derivative / 2.0);
    }

    #[test]
    fn product_samples_are_reproducible() {
        let cfg = ProductOUConfig::standard(1.0, 5.0, 6).unwrap();
        let a = product_ou_samples(&cfg, 71).unwrap();
        let b = product_ou_samples(&cfg, 71).unwrap();
        assert_eq!(a, b);
        let (y0, _) = product_ou_paths(&cfg, 71, 0).unwrap();
        let (y1, _) = product_ou_paths(&cfg, 71, 1).unwrap();
        assert_ne!(y0.values, y1.values);
    }
}
