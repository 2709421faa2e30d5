//! Gaussian path samplers on uniform grids: exact-in-distribution
//! stationary sampling through a dense covariance factorization, fBm by
//! cumulated fractional noise, an Euler-discretized fractional OU, and an
//! FFT circulant sampler as an optional fast path.
//!
//! Replicates draw from independent RNG streams keyed by (seed, index), so
//! output is reproducible bit for bit regardless of thread count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::covariance::{fbm_increment_cov, CovarianceModel};
use crate::error::{Error, Result};
use crate::rng::replicate_rng;

/// Largest grid handled by the dense factorization.
const DENSE_CAP: usize = 4096;

/// Relative diagonal jitter added before factorization.
const JITTER: f64 = 1e-10;

/// Pivots below this (relative to the variance) mean the matrix is not
/// positive semidefinite rather than merely ill-conditioned.
const PIVOT_FLOOR: f64 = -1e-9;

/// A sampled trajectory on the uniform grid t0, t0+dt, t0+2dt, ...
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl PathGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// CSV rendering with header `t,value`, one row per grid point.
    pub fn csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.time(k), v));
        }
        out
    }
}

/// Packed lower-triangular Cholesky factor of an n x n covariance matrix.
#[derive(Debug)]
struct CholeskyFactor {
    n: usize,
    l: Vec<f64>,
}

impl CholeskyFactor {
    /// Factors cov(i, j) + jitter on the diagonal. Pivots slightly negative
    /// (above `PIVOT_FLOOR * scale`) are flattened to zero; anything lower
    /// is reported as not positive semidefinite.
    fn new(n: usize, scale: f64, cov: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut l = vec![0.0; n * (n + 1) / 2];
        let row = |i: usize| i * (i + 1) / 2;
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = (0..j)
                    .map(|k| l[row(i) + k] * l[row(j) + k])
                    .sum();
                let a = cov(i, j) + if i == j { JITTER * scale } else { 0.0 };
                if i == j {
                    let pivot = a - dot;
                    if pivot < PIVOT_FLOOR * scale {
                        return Err(Error::NotPsd { index: i, pivot });
                    }
                    l[row(i) + j] = pivot.max(0.0).sqrt();
                } else {
                    let diag = l[row(j) + j];
                    l[row(i) + j] = if diag == 0.0 { 0.0 } else { (a - dot) / diag };
                }
            }
        }
        Ok(CholeskyFactor { n, l })
    }

    /// out = L z.
    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let row = |i: usize| i * (i + 1) / 2;
        (0..self.n)
            .map(|i| {
                self.l[row(i)..row(i) + i + 1]
                    .iter()
                    .zip(z)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Max-norm of L L^T - cov, for factorization round-trip checks.
    #[cfg(test)]
    fn round_trip_error(&self, cov: impl Fn(usize, usize) -> f64) -> f64 {
        let row = |i: usize| i * (i + 1) / 2;
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..=i {
                let m = j.min(i);
                let dot: f64 = (0..=m)
                    .map(|k| self.l[row(i) + k] * self.l[row(j) + k])
                    .sum();
                worst = worst.max((dot - cov(i, j)).abs());
            }
        }
        worst
    }
}

pub(crate) fn check_grid(n: usize, dt: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("grid needs at least one point".into()));
    }
    if n > DENSE_CAP {
        return Err(Error::InvalidParameter(format!(
            "grid size {n} above the dense factorization cap {DENSE_CAP}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "dt",
            value: dt,
        });
    }
    Ok(())
}

/// Draws `count` vectors L z with independent standard-normal z, one RNG
/// stream per replicate.
fn factor_draws(factor: &CholeskyFactor, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let z: Vec<f64> = (0..factor.n).map(|_| rng.sample(StandardNormal)).collect();
            factor.apply(&z)
        })
        .collect()
}

/// `count` centered Gaussian paths with exact covariance C(|i-j| dt).
///
/// The `fou` model is rejected: its covariance is known only asymptotically
/// at large lags, so factorizing it on a fine grid would sample the wrong
/// law. Use `sample_fou` instead.
pub fn sample_stationary(
    model: &CovarianceModel,
    n: usize,
    dt: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<PathGrid>> {
    model.validate()?;
    check_grid(n, dt)?;
    if matches!(model, CovarianceModel::Fou { .. }) {
        return Err(Error::InvalidParameter(
            "fou covariance is asymptotic-only; sample it with the fou path sampler".into(),
        ));
    }
    let c0 = model.variance_at_zero();
    let factor = CholeskyFactor::new(n, c0, |i, j| model.eval(i.abs_diff(j) as f64 * dt))?;
    Ok(factor_draws(&factor, count, seed)
        .into_iter()
        .map(|values| PathGrid {
            t0: 0.0,
            dt,
            values,
            seed,
        })
        .collect())
}

/// Fractional Brownian motion on times k dt, B_0 = 0, built by cumulating
/// stationary fractional Gaussian noise.
pub fn sample_fbm(hurst: f64, n: usize, dt: f64, count: usize, seed: u64) -> Result<Vec<PathGrid>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::HurstOutOfRange(hurst, "(0, 1)"));
    }
    check_grid(n, dt)?;
    let step = dt.powf(hurst);
    let draws: Vec<Vec<f64>> = if n == 1 {
        vec![Vec::new(); count]
    } else {
        // Unit-lag fGn; self-similarity moves the dt dependence into `step`.
        let factor = CholeskyFactor::new(n - 1, 1.0, |i, j| {
            fbm_increment_cov(hurst, i.abs_diff(j) as f64).expect("checked hurst")
        })?;
        factor_draws(&factor, count, seed)
    };
    Ok(draws
        .into_iter()
        .map(|incs| {
            let mut values = Vec::with_capacity(n);
            values.push(0.0);
            let mut acc = 0.0;
            for w in incs {
                acc += step * w;
                values.push(acc);
            }
            PathGrid {
                t0: 0.0,
                dt,
                values,
                seed,
            }
        })
        .collect())
}

/// Default burn-in for the fractional OU sampler: ten relaxation times.
pub fn default_burnin(lambda: f64, dt: f64) -> usize {
    (10.0 / (lambda * dt)).ceil() as usize
}

/// Fractional Ornstein-Uhlenbeck by the Euler recursion
/// Y_{k+1} = Y_k (1 - lambda dt) + sigma_t dB^H_k, started at zero with
/// `burnin` discarded steps. The driving increments are exact fGn, so the
/// only bias is the O(lambda dt) Euler error.
pub fn sample_fou(
    hurst: f64,
    lambda: f64,
    sigma_t: f64,
    n: usize,
    dt: f64,
    burnin: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<PathGrid>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::HurstOutOfRange(hurst, "(0, 1)"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "lambda",
            value: lambda,
        });
    }
    if !(sigma_t >= 0.0 && sigma_t.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "sigma_t",
            value: sigma_t,
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "dt",
            value: dt,
        });
    }
    if lambda * dt >= 1.0 {
        return Err(Error::UnstableStep(lambda * dt));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("grid needs at least one point".into()));
    }
    let steps = burnin + n - 1;
    if steps > DENSE_CAP {
        return Err(Error::InvalidParameter(format!(
            "burnin + n - 1 = {steps} above the dense factorization cap {DENSE_CAP}"
        )));
    }
    let a = 1.0 - lambda * dt;
    let step = dt.powf(hurst) * sigma_t;
    let paths: Vec<Vec<f64>> = if steps == 0 {
        vec![vec![0.0]; count]
    } else {
        let factor = CholeskyFactor::new(steps, 1.0, |i, j| {
            fbm_increment_cov(hurst, i.abs_diff(j) as f64).expect("checked hurst")
        })?;
        factor_draws(&factor, count, seed)
            .into_par_iter()
            .map(|incs| {
                let mut values = Vec::with_capacity(n);
                let mut y = 0.0;
                if burnin == 0 {
                    values.push(y);
                }
                for (k, w) in incs.into_iter().enumerate() {
                    y = y * a + step * w;
                    if k + 1 >= burnin {
                        values.push(y);
                    }
                }
                values
            })
            .collect()
    };
    Ok(paths
        .into_iter()
        .map(|values| PathGrid {
            t0: 0.0,
            dt,
            values,
            seed,
        })
        .collect())
}

/// Circulant-embedding sampler: same law as `sample_stationary` when the
/// embedding is nonnegative, O(n log n) per path. Errors with the offending
/// spectral index otherwise.
pub fn sample_stationary_circulant(
    model: &CovarianceModel,
    n: usize,
    dt: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<PathGrid>> {
    model.validate()?;
    if n < 2 {
        return Err(Error::InvalidParameter(
            "circulant sampler needs at least two grid points".into(),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "dt",
            value: dt,
        });
    }
    if matches!(model, CovarianceModel::Fou { .. }) {
        return Err(Error::InvalidParameter(
            "fou covariance is asymptotic-only; sample it with the fou path sampler".into(),
        ));
    }
    let m = 2 * (n - 1);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|k| Complex::new(model.eval(k.min(m - k) as f64 * dt), 0.0))
        .collect();
    fft.process(&mut buf);
    // Unnormalized DFT, so eigenvalue scale grows with m.
    let floor = PIVOT_FLOOR * model.variance_at_zero() * m as f64;
    let mut lam = Vec::with_capacity(m);
    for (index, v) in buf.iter().enumerate() {
        if v.re < floor {
            return Err(Error::NotPsd {
                index,
                pivot: v.re,
            });
        }
        lam.push(v.re.max(0.0));
    }
    let ifft = planner.plan_fft_inverse(m);
    let half = m / 2;
    let amp: Vec<f64> = lam.iter().map(|l| (l / m as f64).sqrt()).collect();
    Ok((0..count)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let mut spec = vec![Complex::new(0.0, 0.0); m];
            spec[0] = Complex::new(amp[0] * rng.sample::<f64, _>(StandardNormal), 0.0);
            for k in 1..half {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let s = amp[k] / std::f64::consts::SQRT_2;
                spec[k] = Complex::new(s * re, s * im);
                spec[m - k] = spec[k].conj();
            }
            spec[half] = Complex::new(amp[half] * rng.sample::<f64, _>(StandardNormal), 0.0);
            ifft.process(&mut spec);
            let values: Vec<f64> = spec[..n].iter().map(|z| z.re).collect();
            PathGrid {
                t0: 0.0,
                dt,
                values,
                seed,
            }
        })
        .collect())
}
