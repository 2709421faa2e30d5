//! Stationary covariance models and the quantities their tail behaviour
//! induces: the decay classification, the CLT normalizer, the limiting
//! variance of subordinated time averages, and predicted convergence rates.
//!
//! Three models are built in, nameable from configs by string id:
//! `fbm-increments`, `fou`, `ou-exponential`. The fractional OU covariance
//! is known here only through its large-lag expansion, so its `eval` is
//! trustworthy for `lambda * t` of order ten and beyond; the short-lag
//! regime is served by the SDE path sampler instead.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::hermite::HermiteExpansion;
use crate::quad::{graded_edges, GaussLegendre, KahanSum};

/// Expansion order used for the fractional OU covariance. Each extra term
/// gains a factor of order (lambda*t)^-2, so three terms put the truncation
/// error near 1e-6 once lambda*t >= 10.
const FOU_EXPANSION_TERMS: usize = 3;

fn check_hurst(hurst: f64, exclude_half: bool) -> Result<()> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::HurstOutOfRange(hurst, "(0, 1)"));
    }
    if exclude_half && hurst == 0.5 {
        return Err(Error::HurstOutOfRange(hurst, "(0, 1) excluding 1/2"));
    }
    Ok(())
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

/// Tail behaviour of a stationary covariance. `PowerDecay` means
/// C(t) ~ m * t^-alpha with alpha in (0, 1); everything decaying faster is
/// `IntegrableCovariance`. The boundary alpha = 1 (logarithmic normalizer)
/// is rejected as input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecayClass {
    IntegrableCovariance,
    PowerDecay { alpha: f64, m: f64 },
}

impl DecayClass {
    pub fn power(alpha: f64, m: f64) -> Result<Self> {
        let class = DecayClass::PowerDecay { alpha, m };
        class.validate()?;
        Ok(class)
    }

    pub fn validate(&self) -> Result<()> {
        if let DecayClass::PowerDecay { alpha, m } = *self {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "power decay exponent alpha must lie in (0, 1), got {alpha}"
                )));
            }
            if m == 0.0 || !m.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "power decay constant m must be nonzero and finite, got {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Built-in stationary covariance models.
///
/// Parameters are validated by the constructors and by `validate`; models
/// deserialized straight from JSON should be validated before use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum CovarianceModel {
    /// Unit-lag increments of fractional Brownian motion.
    FbmIncrements { hurst: f64 },
    /// Fractional Ornstein-Uhlenbeck with speed `lambda` and noise scale
    /// `sigma`; covariance available as a large-lag expansion only.
    Fou {
        hurst: f64,
        lambda: f64,
        sigma: f64,
    },
    /// Classical OU covariance e^(-lambda |t|).
    OuExponential { lambda: f64 },
}

impl CovarianceModel {
    pub fn fbm_increments(hurst: f64) -> Result<Self> {
        let model = CovarianceModel::FbmIncrements { hurst };
        model.validate()?;
        Ok(model)
    }

    pub fn fou(hurst: f64, lambda: f64, sigma: f64) -> Result<Self> {
        let model = CovarianceModel::Fou {
            hurst,
            lambda,
            sigma,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn ou_exponential(lambda: f64) -> Result<Self> {
        let model = CovarianceModel::OuExponential { lambda };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CovarianceModel::FbmIncrements { hurst } => check_hurst(hurst, false),
            CovarianceModel::Fou {
                hurst,
                lambda,
                sigma,
            } => {
                check_hurst(hurst, true)?;
                check_positive("lambda", lambda)?;
                check_positive("sigma", sigma)
            }
            CovarianceModel::OuExponential { lambda } => check_positive("lambda", lambda),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            CovarianceModel::FbmIncrements { .. } => "fbm-increments",
            CovarianceModel::Fou { .. } => "fou",
            CovarianceModel::OuExponential { .. } => "ou-exponential",
        }
    }

    /// Covariance at lag `t` (even in `t`). Parameters must have passed
    /// `validate`. For `Fou` this is the large-lag expansion; do not read
    /// it below lags of about 10 / lambda.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        match *self {
            CovarianceModel::FbmIncrements { hurst } => {
                fbm_increment_cov(hurst, t).expect("validated hurst")
            }
            CovarianceModel::Fou {
                hurst,
                lambda,
                sigma,
            } => {
                if t == 0.0 {
                    self.variance_at_zero()
                } else {
                    fou_cov_asymptotic(hurst, lambda, sigma, FOU_EXPANSION_TERMS, t)
                        .expect("validated parameters")
                }
            }
            CovarianceModel::OuExponential { lambda } => (-lambda * t).exp(),
        }
    }

    pub fn variance_at_zero(&self) -> f64 {
        match *self {
            CovarianceModel::FbmIncrements { .. } => 1.0,
            CovarianceModel::Fou {
                hurst,
                lambda,
                sigma,
            } => sigma * sigma * hurst * gamma(2.0 * hurst) * lambda.powf(-2.0 * hurst),
            CovarianceModel::OuExponential { .. } => 1.0,
        }
    }

    pub fn decay(&self) -> DecayClass {
        match *self {
            CovarianceModel::FbmIncrements { hurst } if hurst > 0.5 => DecayClass::PowerDecay {
                alpha: 2.0 - 2.0 * hurst,
                m: hurst * (2.0 * hurst - 1.0),
            },
            CovarianceModel::Fou {
                hurst,
                lambda,
                sigma,
            } if hurst > 0.5 => DecayClass::PowerDecay {
                alpha: 2.0 - 2.0 * hurst,
                m: sigma * sigma * hurst * (2.0 * hurst - 1.0) / (lambda * lambda),
            },
            _ => DecayClass::IntegrableCovariance,
        }
    }
}

/// Covariance of unit-lag fBm increments:
/// ((t+1)^2H + |t-1|^2H - 2 t^2H) / 2.
pub fn fbm_increment_cov(hurst: f64, t: f64) -> Result<f64> {
    check_hurst(hurst, false)?;
    let t = t.abs();
    let h2 = 2.0 * hurst;
    Ok(0.5 * ((t + 1.0).powf(h2) + (t - 1.0).abs().powf(h2) - 2.0 * t.powf(h2)))
}

/// Large-lag expansion of the fractional OU covariance:
/// (sigma^2 / 2) * sum_{n=1..terms} lambda^-2n (prod_{k<2n} (2H - k)) t^(2H-2n).
///
/// Asymptotic in `lambda * t`; the caller picks `terms` and a lag range
/// where the terms still shrink.
pub fn fou_cov_asymptotic(
    hurst: f64,
    lambda: f64,
    sigma_t: f64,
    terms: usize,
    t: f64,
) -> Result<f64> {
    check_hurst(hurst, true)?;
    check_positive("lambda", lambda)?;
    check_positive("sigma_t", sigma_t)?;
    check_positive("t", t)?;
    if terms == 0 {
        return Err(Error::InvalidParameter(
            "fou covariance expansion needs at least one term".into(),
        ));
    }
    let h2 = 2.0 * hurst;
    let mut acc = 0.0;
    let mut falling = 1.0;
    for n in 1..=terms {
        falling *= (h2 - (2 * n - 2) as f64) * (h2 - (2 * n - 1) as f64);
        acc += lambda.powi(-2 * n as i32) * falling * t.powf(h2 - 2.0 * n as f64);
    }
    Ok(0.5 * sigma_t * sigma_t * acc)
}

/// CLT normalizer: T for integrable covariance, and the double integral of
/// the decay rate, T^(2-alpha) / ((1-alpha)(2-alpha)), for power decay.
pub fn vtilde(decay: DecayClass, t: f64) -> Result<f64> {
    check_positive("t", t)?;
    decay.validate()?;
    Ok(match decay {
        DecayClass::IntegrableCovariance => t,
        DecayClass::PowerDecay { alpha, .. } => {
            t.powf(2.0 - alpha) / ((1.0 - alpha) * (2.0 - alpha))
        }
    })
}

/// Limiting variance 2 m c1^2 of the normalized time average in the
/// power-decay regime. Zero (c1 = 0) marks a function outside the admissible
/// class; callers treat that as a configuration error.
pub fn asymptotic_variance(m: f64, c1: f64) -> f64 {
    2.0 * m * c1 * c1
}

/// Predicted distance-to-normal decay for the time-average CLT:
/// T^(-1/4) for integrable covariance, and for decay rate V(t) = t^-alpha
/// the quantity max(V(t), t |V'(t)|)^(1/4) = (max(1, alpha) t^-alpha)^(1/4).
pub fn predicted_rate(decay: DecayClass, t: f64) -> Result<f64> {
    check_positive("t", t)?;
    decay.validate()?;
    Ok(match decay {
        DecayClass::IntegrableCovariance => t.powf(-0.25),
        DecayClass::PowerDecay { alpha, .. } => (alpha.max(1.0) * t.powf(-alpha)).powf(0.25),
    })
}

/// Double integral of C(t-s)^q over [0, T]^2, reduced by stationarity to
/// 2 int_0^T (T-x) C(x)^q dx and evaluated on panels graded toward the
/// non-smooth lags x = 0 and x = 1.
///
/// Rejected for the `Fou` model: its covariance is asymptotic-only and not
/// integrable through lag zero.
pub fn covariance_power_integral(model: &CovarianceModel, q: u32, t_max: f64) -> Result<f64> {
    check_positive("t_max", t_max)?;
    if q == 0 {
        return Err(Error::InvalidParameter(
            "covariance power q must be at least 1".into(),
        ));
    }
    if matches!(model, CovarianceModel::Fou { .. }) {
        return Err(Error::InvalidParameter(
            "fou covariance is asymptotic-only; its short lags cannot be integrated".into(),
        ));
    }
    let near_end = t_max.min(1.0);
    let mut edges = graded_edges(0.0, near_end, near_end * 1e-4, 2.0);
    if t_max > 1.0 {
        let first = 1e-3_f64.min(0.5 * (t_max - 1.0));
        edges.extend(graded_edges(1.0, t_max, first, 2.0).into_iter().skip(1));
    }
    let gl = GaussLegendre::new(16);
    let value = gl.integrate_panels(&edges, |x| (t_max - x) * model.eval(x).powi(q as i32));
    Ok(2.0 * value)
}

/// `covariance_power_integral` divided by the model's normalizer. Under
/// power decay this tends to 2m for q = 1 and to 0 for q >= 2 as T grows.
pub fn normalized_power_integral(model: &CovarianceModel, q: u32, t_max: f64) -> Result<f64> {
    let vt = vtilde(model.decay(), t_max)?;
    Ok(covariance_power_integral(model, q, t_max)? / vt)
}

/// Exact finite-T variance of the normalized time average of f(X_t), f
/// given by its Hermite expansion:
/// Vtilde(T)^-1 sum_q c_q^2 q! int int C(t-s)^q dt ds.
pub fn time_average_variance(
    model: &CovarianceModel,
    f: &HermiteExpansion,
    t_max: f64,
) -> Result<f64> {
    let vt = vtilde(model.decay(), t_max)?;
    let mut acc = KahanSum::new();
    let mut factorial = 1.0;
    for (q, &c) in f.coeffs().iter().enumerate().skip(1) {
        factorial *= q as f64;
        if c != 0.0 {
            acc.add(c * c * factorial * covariance_power_integral(model, q as u32, t_max)?);
        }
    }
    Ok(acc.value() / vt)
}
