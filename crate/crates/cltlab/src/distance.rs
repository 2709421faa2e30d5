//! Empirical distances to the standard normal, and rate fitting.
//!
//! The Wasserstein-1 distance is computed exactly for an empirical
//! distribution: between consecutive order statistics the empirical CDF is
//! constant, so `int |F_n - Phi|` reduces to closed-form pieces built from
//! the antiderivative `I(x) = x Phi(x) + phi(x)`, with each piece split at
//! the point where Phi crosses the step level. No binning, no truncation.
//!
//! Kolmogorov-Smirnov is the usual one-sample statistic. Samples are
//! standardized by the empirical standard deviation before a distance is
//! computed, unless the caller supplies exact moments.

use crate::error::{Error, Result};
use crate::quad::KahanSum;
use rand::Rng;

/// Standard normal CDF, accurate to a few ulps via libm's erfc.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile function. One Newton step on top of the
/// library inverse takes its ~1e-11 error down to machine precision.
pub fn normal_quantile(p: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    let pdf = normal_pdf(x);
    if pdf > 0.0 {
        x - (normal_cdf(x) - p) / pdf
    } else {
        x
    }
}

/// Antiderivative of Phi, vanishing at -infinity.
fn big_i(x: f64) -> f64 {
    x * normal_cdf(x) + normal_pdf(x)
}

fn sorted_copy(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample value".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    Ok(xs)
}

/// Exact Wasserstein-1 distance between the empirical distribution of
/// `sample` and the standard normal.
pub fn wasserstein1_to_std_normal(sample: &[f64]) -> Result<f64> {
    let xs = sorted_copy(sample)?;
    let n = xs.len();
    let nf = n as f64;

    let mut acc = KahanSum::new();
    // tails: int_{-inf}^{x_1} Phi and int_{x_n}^{inf} (1 - Phi)
    acc.add(big_i(xs[0]));
    acc.add(big_i(xs[n - 1]) - xs[n - 1]);

    for i in 1..n {
        let (u, v) = (xs[i - 1], xs[i]);
        if u == v {
            continue;
        }
        let c = i as f64 / nf;
        let cross = normal_quantile(c);
        // int_u^v |c - Phi|, split where Phi crosses the level c
        let seg = |lo: f64, hi: f64| (big_i(hi) - big_i(lo)) - c * (hi - lo);
        if cross <= u {
            acc.add(seg(u, v));
        } else if cross >= v {
            acc.add(-seg(u, v));
        } else {
            acc.add(-seg(u, cross));
            acc.add(seg(cross, v));
        }
    }
    Ok(acc.value())
}

/// One-sample Kolmogorov-Smirnov statistic against the standard normal.
pub fn ks_to_std_normal(sample: &[f64]) -> Result<f64> {
    let xs = sorted_copy(sample)?;
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let p = normal_cdf(x);
        d = d.max((i + 1) as f64 / n - p).max(p - i as f64 / n);
    }
    Ok(d)
}

/// Mean and standard deviation (n-1 denominator) of a sample.
pub fn sample_moments(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two points for a standard deviation".into(),
        ));
    }
    let n = sample.len() as f64;
    let mean = kahan_mean(sample);
    let mut acc = KahanSum::new();
    for &x in sample {
        acc.add((x - mean) * (x - mean));
    }
    let var = acc.value() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

fn kahan_mean(sample: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &x in sample {
        acc.add(x);
    }
    acc.value() / sample.len() as f64
}

/// Centers and scales by the empirical moments. `ZeroVariance` if the
/// sample is degenerate.
pub fn standardize(sample: &[f64]) -> Result<Vec<f64>> {
    let (mean, sd) = sample_moments(sample)?;
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::ZeroVariance);
    }
    Ok(sample.iter().map(|x| (x - mean) / sd).collect())
}

/// Centers and scales by externally known moments (exact variance route).
pub fn standardize_with(sample: &[f64], mean: f64, sd: f64) -> Result<Vec<f64>> {
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(sample.iter().map(|x| (x - mean) / sd).collect())
}

/// Nonparametric bootstrap standard error of the Wasserstein-1 statistic.
pub fn wasserstein1_bootstrap_se(
    sample: &[f64],
    resamples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if sample.is_empty() || resamples < 2 {
        return Err(Error::InvalidParameter(
            "bootstrap needs a sample and at least two resamples".into(),
        ));
    }
    let n = sample.len();
    let mut stats = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; n];
    for _ in 0..resamples {
        for slot in buf.iter_mut() {
            *slot = sample[rng.random_range(0..n)];
        }
        stats.push(wasserstein1_to_std_normal(&buf)?);
    }
    let (_, sd) = sample_moments(&stats)?;
    Ok(sd)
}

/// Least-squares fit of `ln d = intercept + slope ln T`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits a log-log rate through (T_i, d_i) pairs. Everything must be
/// strictly positive.
pub fn rate_fit(ts: &[f64], ds: &[f64]) -> Result<RateFit> {
    if ts.len() != ds.len() {
        return Err(Error::GridMismatch {
            expected: ts.len(),
            got: ds.len(),
        });
    }
    if ts.len() < 2 {
        return Err(Error::InvalidParameter(
            "rate fit needs at least two points".into(),
        ));
    }
    for &v in ts.iter().chain(ds) {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveInput(v));
        }
    }
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
    let n = xs.len() as f64;
    let xbar = kahan_mean(&xs);
    let ybar = kahan_mean(&ys);
    let mut sxx = KahanSum::new();
    let mut sxy = KahanSum::new();
    let mut syy = KahanSum::new();
    for (x, y) in xs.iter().zip(&ys) {
        sxx.add((x - xbar) * (x - xbar));
        sxy.add((x - xbar) * (y - ybar));
        syy.add((y - ybar) * (y - ybar));
    }
    let (sxx, sxy, syy) = (sxx.value(), sxy.value(), syy.value());
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "rate fit needs at least two distinct abscissas".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    let _ = n;
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

/// One row of a rate table.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateRow {
    pub t: f64,
    pub w1: f64,
    pub ks: f64,
    pub se: f64,
}

/// Renders rate rows as CSV with a `T,w1,ks,se` header.
pub fn rate_rows_csv(rows: &[RateRow]) -> String {
    let mut out = String::from("T,w1,ks,se\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.t, r.w1, r.ks, r.se));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn cdf_quantile_roundtrip() {
        for &p in &[1e-8, 1e-3, 0.2, 0.5, 0.9, 1.0 - 1e-6] {
            assert_abs_diff_eq!(normal_cdf(normal_quantile(p)), p, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.8413447460685429, epsilon = 1e-14);
    }

    #[test]
    fn w1_of_point_mass_is_absolute_moment() {
        // W1(delta_0, N(0,1)) = E|Z| = sqrt(2/pi)
        let got = wasserstein1_to_std_normal(&[0.0]).unwrap();
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn w1_of_exact_normal_quantiles_is_small() {
        let n = 10_000;
        let xs: Vec<f64> = (1..=n)
            .map(|i| normal_quantile((i as f64 - 0.5) / n as f64))
            .collect();
        let got = wasserstein1_to_std_normal(&xs).unwrap();
        assert!(got < 1e-3, "got {got}");
    }

    #[test]
    fn w1_of_shifted_quantiles_recovers_shift() {
        let n = 10_000;
        let c = 0.7;
        let xs: Vec<f64> = (1..=n)
            .map(|i| normal_quantile((i as f64 - 0.5) / n as f64) + c)
            .collect();
        let got = wasserstein1_to_std_normal(&xs).unwrap();
        assert_abs_diff_eq!(got, c, epsilon = 2e-3);
    }

    #[test]
    fn w1_is_reflection_symmetric() {
        let xs = [0.3, -1.2, 2.4, 0.0, -0.7, 1.1];
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let a = wasserstein1_to_std_normal(&xs).unwrap();
        let b = wasserstein1_to_std_normal(&neg).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn ks_of_point_mass_is_half() {
        let got = ks_to_std_normal(&[0.0]).unwrap();
        assert_abs_diff_eq!(got, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ks_of_raw_uniform_sample() {
        // population value: sup |F_U - Phi| on top of U(-1,1) is attained at
        // the endpoints, 1 - Phi(1)
        let want = 1.0 - normal_cdf(1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = ks_to_std_normal(&xs).unwrap();
        assert!((got - want).abs() < 0.02, "got {got}, want ~{want}");
    }

    #[test]
    fn ks_of_standardized_uniform_sample() {
        // after standardization the sample is close to U(-sqrt3, sqrt3); the
        // sup sits at the interior point where phi(x) = 1/(2 sqrt 3)
        let c = 3.0f64.sqrt();
        let mut lo = 0.1;
        let mut hi = 3.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_pdf(mid) > 1.0 / (2.0 * c) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let xstar = 0.5 * (lo + hi);
        let want = (xstar / (2.0 * c) + 0.5 - normal_cdf(xstar)).abs();
        assert!(xstar > 0.0 && xstar < c, "interior maximizer expected");

        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let std = standardize(&xs).unwrap();
        let got = ks_to_std_normal(&std).unwrap();
        assert!((got - want).abs() < 0.02, "got {got}, want ~{want}");
    }

    #[test]
    fn standardize_rejects_degenerate_sample() {
        assert!(matches!(
            standardize(&[1.0, 1.0, 1.0]),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn standardized_sample_has_unit_moments() {
        let xs = [0.4, 1.8, -2.2, 0.9, 3.1, -0.6];
        let std = standardize(&xs).unwrap();
        let (m, s) = sample_moments(&std).unwrap();
        assert_abs_diff_eq!(m, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rate_fit_recovers_pure_power_law() {
        let ts = [250.0f64, 500.0, 1000.0, 2000.0];
        let ds: Vec<f64> = ts.iter().map(|t| 3.2 * t.powf(-0.25)).collect();
        let fit = rate_fit(&ts, &ds).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 3.2f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rate_fit_rejects_non_positive_values() {
        assert!(matches!(
            rate_fit(&[1.0, 2.0], &[0.5, -0.1]),
            Err(Error::NonPositiveInput(_))
        ));
        assert!(matches!(
            rate_fit(&[0.0, 2.0], &[0.5, 0.1]),
            Err(Error::NonPositiveInput(_))
        ));
    }

    #[test]
    fn bootstrap_se_is_positive_and_small_for_large_samples() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..2000)
            .map(|_| rng.random_range(-1.0..1.0f64) + rng.random_range(-1.0..1.0f64))
            .collect();
        let se = wasserstein1_bootstrap_se(&xs, 24, &mut rng).unwrap();
        assert!(se > 0.0 && se < 0.05, "se = {se}");
    }

    #[test]
    fn rate_rows_render_with_header() {
        let rows = [RateRow {
            t: 10.0,
            w1: 0.5,
            ks: 0.25,
            se: 0.01,
        }];
        let csv = rate_rows_csv(&rows);
        assert_eq!(csv, "T,w1,ks,se\n10,0.5,0.25,0.01\n");
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // W1 obeys the triangle inequality through the point mass at zero:
        // int |F_n - Phi| <= mean |x| + E|Z|.
        #[test]
        fn w1_triangle_bound(xs in proptest::collection::vec(-50.0..50.0f64, 1..40)) {
            let d = wasserstein1_to_std_normal(&xs).unwrap();
            let mean_abs = xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64;
            let bound = mean_abs + (2.0 / std::f64::consts::PI).sqrt();
            prop_assert!(d >= 0.0);
            prop_assert!(d <= bound + 1e-9, "d = {}, bound = {}", d, bound);
        }

        // KS lies in (0, 1] and does not depend on sample order.
        #[test]
        fn ks_range_and_permutation_invariance(
            mut xs in proptest::collection::vec(-10.0..10.0f64, 2..30),
        ) {
            let a = ks_to_std_normal(&xs).unwrap();
            xs.reverse();
            let b = ks_to_std_normal(&xs).unwrap();
            prop_assert!(a > 0.0 && a <= 1.0);
            prop_assert!((a - b).abs() < 1e-15);
        }
    }
}
