//! Levy jump measures: truncation variance, tail jump sampling, and
//! Monte-Carlo sampling of compensated small-jump integrals.
//!
//! Small-jump bands can carry enormous activity (the interesting regime),
//! so the sampler picks between two exact-in-law routes: direct compound
//! Poisson while the expected total jump count fits a work budget, and
//! quantile sampling through the characteristic function when it does not.
//! Both produce samples of the same integral; tests hold them against each
//! other.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{tanh_sinh, GaussLegendre, KahanSum};
use crate::rng::replicate_rng;

/// Inverse-CDF table resolution for jump-size sampling.
const TABLE_POINTS: usize = 1 << 14;

/// Largest expected total jump count (per call, all replicates) the direct
/// compound-Poisson route will simulate.
const DIRECT_BUDGET: f64 = 5e7;

/// Discarded variance fraction sigma(inner)^2 / sigma(eps)^2 above which the
/// inner truncation is refused.
const DISCARD_LIMIT: f64 = 0.1;

/// Cosine-series terms kept in the characteristic-function exponent.
const CF_TERMS: usize = 14;

/// Largest admissible magnitude of the final series term; beyond this the
/// truncated exponent is not trusted.
const CF_TAIL_TOL: f64 = 1e-9;

/// Jump measure on [-a, b] \ {0}: either the two-sided power-law density
/// |x|^-(2+delta) or a finite list of atoms (x, mass).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevyMeasure {
    PowerLaw { delta: f64, a: f64, b: f64 },
    Atomic { atoms: Vec<(f64, f64)> },
}

impl LevyMeasure {
    pub fn power_law(delta: f64, a: f64, b: f64) -> Result<Self> {
        let m = LevyMeasure::PowerLaw { delta, a, b };
        m.validate()?;
        Ok(m)
    }

    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let m = LevyMeasure::Atomic { atoms };
        m.validate()?;
        Ok(m)
    }

    /// Atoms at +x and -x with equal mass.
    pub fn symmetric_atoms(x: f64, mass: f64) -> Result<Self> {
        Self::atomic(vec![(x, mass), (-x, mass)])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LevyMeasure::PowerLaw { delta, a, b } => {
                if !delta.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "power-law exponent delta must be finite, got {delta}"
                    )));
                }
                for (name, v) in [("a", *a), ("b", *b)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::NonPositiveParameter { name, value: v });
                    }
                }
                // Square integrability near zero, checked by quadrature.
                self.second_moment()?;
                Ok(())
            }
            LevyMeasure::Atomic { atoms } => {
                for &(x, mass) in atoms {
                    if x == 0.0 || !x.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "atom location must be nonzero and finite, got {x}"
                        )));
                    }
                    if !(mass >= 0.0 && mass.is_finite()) {
                        return Err(Error::InvalidParameter(format!(
                            "atom mass must be nonnegative, got {mass}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Integral of |x|^k over inner < |x| <= eps (within the support).
    /// `inner = 0` reaches the origin; the double-exponential rule absorbs
    /// the singularity there and reports genuine divergence as an error.
    fn band_abs_moment(&self, inner: f64, eps: f64, k: u32) -> Result<f64> {
        match self {
            LevyMeasure::PowerLaw { delta, a, b } => {
                let mut total = 0.0;
                for edge in [*b, *a] {
                    let hi = eps.min(edge);
                    if hi <= inner {
                        continue;
                    }
                    let p = k as f64 - 2.0 - delta;
                    total += if inner == 0.0 {
                        tanh_sinh(0.0, hi, 1e-12, "truncated jump moment", |x| x.powf(p))?
                    } else {
                        side_integral(inner, hi, |x| x.powf(p))
                    };
                }
                Ok(total)
            }
            LevyMeasure::Atomic { atoms } => Ok(atoms
                .iter()
                .filter(|(x, _)| x.abs() > inner && x.abs() <= eps)
                .map(|(x, mass)| x.abs().powi(k as i32) * mass)
                .sum()),
        }
    }

    /// Integral of x (signed) over inner < |x| <= eps, inner > 0 for
    /// densities; the compensator rate of the band.
    fn band_signed_mean(&self, inner: f64, eps: f64) -> f64 {
        match self {
            LevyMeasure::PowerLaw { delta, a, b } => {
                let mut total = 0.0;
                for (sign, edge) in [(1.0, *b), (-1.0, *a)] {
                    let hi = eps.min(edge);
                    if hi > inner {
                        total += sign * side_integral(inner, hi, |x| x.powf(-1.0 - delta));
                    }
                }
                total
            }
            LevyMeasure::Atomic { atoms } => atoms
                .iter()
                .filter(|(x, _)| x.abs() > inner && x.abs() <= eps)
                .map(|(x, mass)| x * mass)
                .sum(),
        }
    }

    /// nu(|x| > eps), the finite tail mass. Infinite at eps = 0 for
    /// densities.
    pub fn tail_mass(&self, eps: f64) -> f64 {
        match self {
            LevyMeasure::PowerLaw { delta, a, b } => {
                if eps <= 0.0 {
                    return f64::INFINITY;
                }
                let mut total = 0.0;
                for edge in [*b, *a] {
                    if edge > eps {
                        total += side_integral(eps, edge, |x| x.powf(-2.0 - delta));
                    }
                }
                total
            }
            LevyMeasure::Atomic { atoms } => atoms
                .iter()
                .filter(|(x, _)| x.abs() > eps)
                .map(|(_, mass)| mass)
                .sum(),
        }
    }

    /// Integral of x over |x| > eps, eps > 0; zero for symmetric measures.
    pub fn tail_signed_mean(&self, eps: f64) -> f64 {
        let hi = match self {
            LevyMeasure::PowerLaw { a, b, .. } => a.max(*b),
            LevyMeasure::Atomic { atoms } => atoms
                .iter()
                .fold(0.0f64, |acc, (x, _)| acc.max(x.abs())),
        };
        if hi <= eps {
            0.0
        } else {
            self.band_signed_mean(eps, hi)
        }
    }

    /// Full second moment of the measure.
    pub fn second_moment(&self) -> Result<f64> {
        self.band_abs_moment(0.0, f64::INFINITY, 2)
    }

    /// Full fourth moment.
    pub fn fourth_moment(&self) -> Result<f64> {
        self.band_abs_moment(0.0, f64::INFINITY, 4)
    }

    /// Full absolute third moment.
    pub fn abs_third_moment(&self) -> Result<f64> {
        self.band_abs_moment(0.0, f64::INFINITY, 3)
    }
}

/// Smooth one-sided integral on [lo, hi], 0 < lo < hi, on log-graded panels.
fn side_integral(lo: f64, hi: f64, f: impl FnMut(f64) -> f64) -> f64 {
    GaussLegendre::new(16).integrate_panels(&log_edges(lo, hi, 8), f)
}

fn log_edges(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let mut edges: Vec<f64> = (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / n as f64))
        .collect();
    edges.push(hi);
    edges
}

/// sigma(eps): square root of the second moment truncated to |x| <= eps.
pub fn sigma_eps(m: &LevyMeasure, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "truncation level eps must be nonnegative, got {eps}"
        )));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    Ok(m.band_abs_moment(0.0, eps, 2)?.max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubstitutionVerdict {
    Diverging,
    Inconclusive,
}

/// sigma(eps)/eps along a decreasing grid; `Diverging` when the ratios grow
/// strictly, which licenses replacing the small jumps by a Gaussian.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubstitutionReport {
    pub eps_grid: Vec<f64>,
    pub ratios: Vec<f64>,
    pub verdict: SubstitutionVerdict,
}

pub fn gaussian_substitution_valid(
    m: &LevyMeasure,
    eps_grid: &[f64],
) -> Result<SubstitutionReport> {
    if eps_grid.is_empty()
        || eps_grid.iter().any(|&e| !(e > 0.0))
        || eps_grid.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidParameter(
            "eps grid must be positive and strictly decreasing".into(),
        ));
    }
    let mut ratios = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        ratios.push(sigma_eps(m, eps)? / eps);
    }
    let verdict = if ratios.windows(2).all(|w| w[1] > w[0]) {
        SubstitutionVerdict::Diverging
    } else {
        SubstitutionVerdict::Inconclusive
    };
    Ok(SubstitutionReport {
        eps_grid: eps_grid.to_vec(),
        ratios,
        verdict,
    })
}

/// Berry-Esseen-type ratio: truncated third absolute moment over sigma^3.
pub fn third_moment_ratio(m: &LevyMeasure, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveParameter {
            name: "eps",
            value: eps,
        });
    }
    let sigma = sigma_eps(m, eps)?;
    if sigma == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(m.band_abs_moment(0.0, eps, 3)? / sigma.powi(3))
}

/// Jumps of a truncated Levy process: paired times (sorted) and sizes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpSample {
    pub times: Vec<f64>,
    pub sizes: Vec<f64>,
}

impl JumpSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Inverse-CDF table for |x| on one side of a power-law band.
pub(crate) struct SideTable {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl SideTable {
    fn build(lo: f64, hi: f64, delta: f64) -> (Self, f64) {
        let density = |x: f64| x.powf(-2.0 - delta);
        let xs: Vec<f64> = (0..=TABLE_POINTS)
            .map(|i| lo * (hi / lo).powf(i as f64 / TABLE_POINTS as f64))
            .collect();
        let gl = GaussLegendre::new(8);
        let mut acc = KahanSum::new();
        let mut cdf = Vec::with_capacity(xs.len());
        cdf.push(0.0);
        for w in xs.windows(2) {
            acc.add(gl.integrate(w[0], w[1], density));
            cdf.push(acc.value());
        }
        let mass = acc.value();
        for c in cdf.iter_mut() {
            *c /= mass;
        }
        (SideTable { xs, cdf }, mass)
    }

    fn sample(&self, p: f64) -> f64 {
        let i = self
            .cdf
            .partition_point(|&c| c < p)
            .clamp(1, self.xs.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 {
            ((p - c0) / (c1 - c0)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        self.xs[i - 1] + frac * (self.xs[i] - self.xs[i - 1])
    }
}

/// Size sampler for jumps restricted to inner < |x| <= eps. The side is
/// drawn first (the cutoffs may differ), then the magnitude.
pub(crate) enum BandSampler {
    Table {
        pos: Option<SideTable>,
        neg: Option<SideTable>,
        neg_mass: f64,
        total: f64,
    },
    Atoms {
        xs: Vec<f64>,
        cdf: Vec<f64>,
        total: f64,
    },
}

impl BandSampler {
    pub(crate) fn new(m: &LevyMeasure, inner: f64, eps: f64) -> Result<Self> {
        match m {
            LevyMeasure::PowerLaw { delta, a, b } => {
                if inner <= 0.0 {
                    return Err(Error::NonPositiveParameter {
                        name: "inner truncation",
                        value: inner,
                    });
                }
                let build = |edge: f64| {
                    let hi = eps.min(edge);
                    if hi > inner {
                        let (table, mass) = SideTable::build(inner, hi, *delta);
                        (Some(table), mass)
                    } else {
                        (None, 0.0)
                    }
                };
                let (pos, pos_mass) = build(*b);
                let (neg, neg_mass) = build(*a);
                Ok(BandSampler::Table {
                    pos,
                    neg,
                    neg_mass,
                    total: pos_mass + neg_mass,
                })
            }
            LevyMeasure::Atomic { atoms } => {
                let picked: Vec<(f64, f64)> = atoms
                    .iter()
                    .copied()
                    .filter(|(x, mass)| x.abs() > inner && x.abs() <= eps && *mass > 0.0)
                    .collect();
                let mut cdf = Vec::with_capacity(picked.len());
                let mut acc = 0.0;
                for &(_, mass) in &picked {
                    acc += mass;
                    cdf.push(acc);
                }
                Ok(BandSampler::Atoms {
                    xs: picked.iter().map(|&(x, _)| x).collect(),
                    cdf,
                    total: acc,
                })
            }
        }
    }

    pub(crate) fn total_mass(&self) -> f64 {
        match self {
            BandSampler::Table { total, .. } => *total,
            BandSampler::Atoms { total, .. } => *total,
        }
    }

    pub(crate) fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            BandSampler::Table {
                pos,
                neg,
                neg_mass,
                total,
            } => {
                let negative = rng.random::<f64>() * total < *neg_mass;
                let p = rng.random::<f64>();
                if negative {
                    -neg.as_ref().expect("negative side has mass").sample(p)
                } else {
                    pos.as_ref().expect("positive side has mass").sample(p)
                }
            }
            BandSampler::Atoms { xs, cdf, total } => {
                let p = rng.random::<f64>() * total;
                let i = cdf.partition_point(|&c| c < p).min(xs.len() - 1);
                xs[i]
            }
        }
    }
}

/// The jumps larger than `eps` on [0, horizon]: Poisson count, uniform
/// times, sizes from the normalized tail restriction of the measure.
pub fn sample_large_jumps(
    m: &LevyMeasure,
    eps: f64,
    horizon: f64,
    seed: u64,
) -> Result<JumpSample> {
    for (name, v) in [("eps", eps), ("horizon", horizon)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveParameter { name, value: v });
        }
    }
    let upper = match m {
        LevyMeasure::PowerLaw { a, b, .. } => a.max(*b),
        LevyMeasure::Atomic { atoms } => atoms
            .iter()
            .fold(0.0f64, |acc, (x, _)| acc.max(x.abs())),
    };
    let sampler = BandSampler::new(m, eps, upper.max(eps))?;
    if sampler.total_mass() <= 0.0 {
        return Err(Error::EmptyTail { eps });
    }
    let mut rng = replicate_rng(seed, 0);
    let lambda = sampler.total_mass() * horizon;
    let count = Poisson::new(lambda)
        .map_err(|_| Error::InvalidParameter(format!("bad Poisson rate {lambda}")))?
        .sample(&mut rng) as usize;
    let mut jumps: Vec<(f64, f64)> = (0..count)
        .map(|_| {
            let time = rng.random::<f64>() * horizon;
            let size = sampler.sample(&mut rng);
            (time, size)
        })
        .collect();
    jumps.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(JumpSample {
        times: jumps.iter().map(|j| j.0).collect(),
        sizes: jumps.iter().map(|j| j.1).collect(),
    })
}

/// Context shared by both small-jump sampling routes.
struct SmallJumpPlan {
    inner: f64,
    eps: f64,
    sigma: f64,
    t: f64,
}

/// Samples of the compensated jump integral sum h(s_j) x_j over the band
/// inner_eps < |x| <= eps, normalized by sigma(eps).
///
/// Route selection is by expected work: direct compound Poisson while the
/// total expected jump count fits the budget, otherwise exact quantile
/// sampling through the characteristic function (symmetric bands only).
pub fn sample_small_jump_functional(
    m: &LevyMeasure,
    eps: f64,
    h: impl Fn(f64) -> f64 + Sync,
    t: f64,
    inner_eps: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::NonPositiveParameter { name: "t", value: t });
    }
    if !(inner_eps > 0.0 && inner_eps < eps) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < inner_eps < eps, got inner_eps {inner_eps}, eps {eps}"
        )));
    }
    let sigma = sigma_eps(m, eps)?;
    if sigma == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sigma_inner = sigma_eps(m, inner_eps)?;
    let fraction = (sigma_inner / sigma).powi(2);
    if fraction > DISCARD_LIMIT + 1e-9 {
        return Err(Error::TruncationTooCoarse { fraction });
    }
    let plan = SmallJumpPlan {
        inner: inner_eps,
        eps,
        sigma,
        t,
    };
    let band_mass = m.band_abs_moment(inner_eps, eps, 0)?;
    let expected_total = band_mass * t * count as f64;
    if expected_total <= DIRECT_BUDGET {
        small_jump_direct(m, &plan, &h, count, seed)
    } else {
        small_jump_cf(m, &plan, &h, count, seed, expected_total)
    }
}

fn weight_integral(h: &impl Fn(f64) -> f64, t: f64) -> f64 {
    GaussLegendre::new(32).integrate_panels(&[0.0, 0.25 * t, 0.5 * t, 0.75 * t, t], h)
}

fn small_jump_direct(
    m: &LevyMeasure,
    plan: &SmallJumpPlan,
    h: &(impl Fn(f64) -> f64 + Sync),
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = BandSampler::new(m, plan.inner, plan.eps)?;
    let lambda = sampler.total_mass() * plan.t;
    let compensator = m.band_signed_mean(plan.inner, plan.eps) * weight_integral(h, plan.t);
    if lambda <= 0.0 {
        return Ok(vec![-compensator / plan.sigma; count]);
    }
    let poisson = Poisson::new(lambda)
        .map_err(|_| Error::InvalidParameter(format!("bad Poisson rate {lambda}")))?;
    Ok((0..count)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let n = poisson.sample(&mut rng) as usize;
            let mut acc = KahanSum::new();
            for _ in 0..n {
                let s = rng.random::<f64>() * plan.t;
                let x = sampler.sample(&mut rng);
                acc.add(h(s) * x);
            }
            (acc.value() - compensator) / plan.sigma
        })
        .collect())
}

/// Quantile table for a law given by a tabulated CDF.
struct CfQuantileTable {
    ys: Vec<f64>,
    cdf: Vec<f64>,
}

impl CfQuantileTable {
    fn sample(&self, p: f64) -> f64 {
        let i = self
            .cdf
            .partition_point(|&c| c < p)
            .clamp(1, self.ys.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 {
            ((p - c0) / (c1 - c0)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        self.ys[i - 1] + frac * (self.ys[i] - self.ys[i - 1])
    }
}

/// Exact-law sampling when direct simulation is infeasible. The functional's
/// characteristic function is
///   psi(u) = exp( int_0^t int_band (cos(u h(s) x / sigma) - 1) nu(dx) ds ),
/// real because the band is symmetric. Expanding the cosine turns the
/// exponent into an even polynomial with coefficients built from band
/// moments I_2k and weight-power integrals H_2k; the moments concentrate at
/// small x, so few terms carry the whole series. The CDF then follows from
/// the inversion formula
///   F(y) = 1/2 + (1/pi) int_0^inf sin(u y) psi(u) / u du,
/// tabulated once and sampled by inverse CDF.
fn small_jump_cf(
    m: &LevyMeasure,
    plan: &SmallJumpPlan,
    h: &(impl Fn(f64) -> f64 + Sync),
    count: usize,
    seed: u64,
    expected_total: f64,
) -> Result<Vec<f64>> {
    let symmetric_band = match m {
        LevyMeasure::PowerLaw { a, b, .. } => plan.eps <= a.min(*b),
        LevyMeasure::Atomic { .. } => false,
    };
    if !symmetric_band {
        return Err(Error::InfiniteActivity {
            expected: expected_total,
            budget: DIRECT_BUDGET,
        });
    }

    // Exponent coefficients: (-1)^k H_2k I_2k / (2k)! for k = 1..CF_TERMS.
    let gl = GaussLegendre::new(32);
    let edges: Vec<f64> = (0..=8).map(|i| plan.t * i as f64 / 8.0).collect();
    let mut coef = Vec::with_capacity(CF_TERMS);
    let mut factorial = 1.0;
    for k in 1..=CF_TERMS {
        factorial *= ((2 * k - 1) * (2 * k)) as f64;
        let h2k = gl.integrate_panels(&edges, |s| (h(s) / plan.sigma).powi(2 * k as i32));
        let i2k = m.band_abs_moment(plan.inner, plan.eps, 2 * k as u32)?;
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        coef.push(sign * h2k * i2k / factorial);
    }
    let variance = -2.0 * coef[0];
    if !(variance > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let sd = variance.sqrt();

    let exponent = |u: f64| -> f64 {
        let u2 = u * u;
        let mut p = 1.0;
        let mut acc = 0.0;
        for c in &coef {
            p *= u2;
            acc += c * p;
        }
        acc
    };
    // psi below e^-44 is noise; scan for the cutoff.
    let step = 0.25 / sd;
    let mut u_max = step;
    let mut iters = 0usize;
    while exponent(u_max) > -44.0 {
        u_max += step;
        iters += 1;
        if iters > 100_000 {
            return Err(Error::InvalidParameter(
                "characteristic function decays too slowly to invert".into(),
            ));
        }
    }
    // Series validity over the whole inversion range: the last kept term
    // must be negligible, else the polynomial has left its convergent zone.
    let tail = (coef[CF_TERMS - 1] * u_max.powi(2 * CF_TERMS as i32)).abs();
    if !exponent(u_max).is_finite() || tail > CF_TAIL_TOL {
        return Err(Error::InfiniteActivity {
            expected: expected_total,
            budget: DIRECT_BUDGET,
        });
    }

    // Fixed inversion nodes; psi evaluated once per node.
    let panels = 64;
    let rule = GaussLegendre::new(16);
    let mut nodes = Vec::with_capacity(panels * rule.nodes().len());
    for p in 0..panels {
        let (a, b) = (
            u_max * p as f64 / panels as f64,
            u_max * (p + 1) as f64 / panels as f64,
        );
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (x, w) in rule.nodes().iter().zip(rule.weights()) {
            let u = mid + half * x;
            nodes.push((u, half * w * exponent(u).exp() / u));
        }
    }

    let y_max = 8.5 * sd;
    let grid = 4096;
    let ys: Vec<f64> = (0..=grid)
        .map(|i| -y_max + 2.0 * y_max * i as f64 / grid as f64)
        .collect();
    let mut cdf: Vec<f64> = ys
        .par_iter()
        .map(|&y| {
            let mut acc = KahanSum::new();
            for &(u, w) in &nodes {
                acc.add(w * (u * y).sin());
            }
            0.5 + acc.value() / std::f64::consts::PI
        })
        .collect();
    // Inversion noise is far below the grid scale; enforce monotonicity and
    // the unit range.
    let mut run = 0.0f64;
    for c in cdf.iter_mut() {
        run = run.max(c.clamp(0.0, 1.0));
        *c = run;
    }
    let table = CfQuantileTable { ys, cdf };

    Ok((0..count)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            table.sample(rng.random::<f64>())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::sample_moments;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn power_law(delta: f64) -> LevyMeasure {
        LevyMeasure::power_law(delta, 1.0, 1.0).unwrap()
    }

    /// sigma(eps)^2 = 2 eps^(1-delta) / (1-delta) for eps within [-a, b].
    fn sigma_closed(delta: f64, eps: f64) -> f64 {
        (2.0 * eps.powf(1.0 - delta) / (1.0 - delta)).sqrt()
    }

    #[test]
    fn measures_parse_from_json() {
        let m: LevyMeasure =
            serde_json::from_str(r#"{"kind":"power-law","delta":0.5,"a":1.0,"b":1.0}"#).unwrap();
        assert_eq!(m, power_law(0.5));
        let a: LevyMeasure =
            serde_json::from_str(r#"{"kind":"atomic","atoms":[[1.0,0.5],[-1.0,0.5]]}"#).unwrap();
        assert_eq!(a, LevyMeasure::symmetric_atoms(1.0, 0.5).unwrap());
    }

    #[test]
    fn validation_rejects_divergent_and_malformed_measures() {
        // Second moment diverges at delta >= 1; caught numerically.
        assert!(matches!(
            LevyMeasure::power_law(1.2, 1.0, 1.0),
            Err(Error::IntegralDiverged(_))
        ));
        assert!(LevyMeasure::power_law(0.5, 0.0, 1.0).is_err());
        assert!(LevyMeasure::atomic(vec![(0.0, 1.0)]).is_err());
        assert!(LevyMeasure::atomic(vec![(1.0, -0.5)]).is_err());
    }

    #[test]
    fn sigma_matches_the_power_law_closed_form() {
        for delta in [0.5, -0.5] {
            let m = power_law(delta);
            for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
                let got = sigma_eps(&m, eps).unwrap();
                let want = sigma_closed(delta, eps);
                assert_relative_eq!(got, want, max_relative = 1e-10);
            }
        }
        assert_relative_eq!(
            sigma_eps(&power_law(0.5), 0.01).unwrap(),
            0.4f64.sqrt(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn sigma_edge_cases() {
        assert_eq!(sigma_eps(&power_law(0.5), 0.0).unwrap(), 0.0);
        let atoms = LevyMeasure::symmetric_atoms(1.0, 0.5).unwrap();
        assert_eq!(sigma_eps(&atoms, 0.5).unwrap(), 0.0);
        assert_relative_eq!(sigma_eps(&atoms, 1.0).unwrap(), 1.0, max_relative = 1e-12);
        assert!(sigma_eps(&atoms, -1.0).is_err());
    }

    #[test]
    fn sigma_monotone_and_saturating() {
        let m = LevyMeasure::power_law(0.5, 0.7, 1.0).unwrap();
        let mut prev = 0.0;
        for eps in [1e-3, 1e-2, 1e-1, 0.5, 0.7, 1.0, 2.0] {
            let s = sigma_eps(&m, eps).unwrap();
            assert!(s >= prev);
            prev = s;
        }
        // Beyond max(a, b) nothing more accrues: the full second moment.
        assert_relative_eq!(
            sigma_eps(&m, 2.0).unwrap().powi(2),
            m.second_moment().unwrap(),
            max_relative = 1e-10
        );
        // At min(a, b) both sides contribute their full truncated mass.
        assert_relative_eq!(
            sigma_eps(&m, 0.7).unwrap().powi(2),
            2.0 * 2.0 * 0.7f64.powf(0.5),
            max_relative = 1e-10
        );
    }

    #[test]
    fn moments_match_closed_forms() {
        let m = power_law(0.5);
        assert_relative_eq!(m.second_moment().unwrap(), 4.0, max_relative = 1e-10);
        assert_relative_eq!(
            m.abs_third_moment().unwrap(),
            2.0 / 1.5,
            max_relative = 1e-10
        );
        assert_relative_eq!(m.fourth_moment().unwrap(), 2.0 / 2.5, max_relative = 1e-10);
        let atoms = LevyMeasure::symmetric_atoms(1.0, 0.5).unwrap();
        assert_abs_diff_eq!(atoms.second_moment().unwrap(), 1.0);
        assert_abs_diff_eq!(atoms.fourth_moment().unwrap(), 1.0);
        assert_abs_diff_eq!(atoms.abs_third_moment().unwrap(), 1.0);
        assert_abs_diff_eq!(atoms.tail_signed_mean(0.5), 0.0);
    }

    #[test]
    fn substitution_ratios_follow_the_power_law() {
        let grid = [1e-1, 1e-2, 1e-3, 1e-4];
        for (delta, decade_factor) in [(0.5, 10f64.powf(0.75)), (-0.5, 10f64.powf(0.25))] {
            let report = gaussian_substitution_valid(&power_law(delta), &grid).unwrap();
            assert_eq!(report.verdict, SubstitutionVerdict::Diverging);
            for w in report.ratios.windows(2) {
                assert_relative_eq!(w[1] / w[0], decade_factor, max_relative = 1e-6);
            }
        }
        let atoms = LevyMeasure::symmetric_atoms(1.0, 0.5).unwrap();
        let report = gaussian_substitution_valid(&atoms, &[0.5, 0.25]).unwrap();
        assert_eq!(report.verdict, SubstitutionVerdict::Inconclusive);
        assert_eq!(report.ratios, vec![0.0, 0.0]);
        assert!(gaussian_substitution_valid(&atoms, &[0.1, 0.5]).is_err());
    }

    #[test]
    fn third_moment_ratio_behaviour() {
        let m = power_law(0.5);
        let closed =
            |eps: f64| (2.0 * eps.powf(1.5) / 1.5) / (2.0 * eps.powf(0.5) / 0.5).powf(1.5);
        let mut prev = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let r = third_moment_ratio(&m, eps).unwrap();
            assert_relative_eq!(r, closed(eps), max_relative = 1e-9);
            assert!(r < prev);
            prev = r;
            // The ratio is dominated by eps / sigma(eps) on the band.
            assert!(r <= eps / sigma_eps(&m, eps).unwrap() + 1e-12);
        }
        let atoms = LevyMeasure::symmetric_atoms(1.0, 0.5).unwrap();
        assert!(matches!(
            third_moment_ratio(&atoms, 0.5),
            Err(Error::ZeroVariance)
        ));
        let near = LevyMeasure::symmetric_atoms(0.3, 1.0).unwrap();
        assert_relative_eq!(
            third_moment_ratio(&near, 0.5).unwrap(),
            (2.0 * 0.3f64.powi(3)) / (2.0 * 0.3f64.powi(2)).powf(1.5),
            max_relative = 1e-12
        );
    }

    #[test]
    fn large_jumps_atomic_rate() {
        let m = LevyMeasure::symmetric_atoms(1.0, 0.5).unwrap();
        let runs = 1000;
        let mut counts = Vec::with_capacity(runs);
        for seed in 0..runs {
            let sample = sample_large_jumps(&m, 0.5, 10.0, seed as u64).unwrap();
            assert!(sample.sizes.iter().all(|&x| x.abs() == 1.0));
            assert!(sample.times.windows(2).all(|w| w[0] <= w[1]));
            assert!(sample.times.iter().all(|&t| (0.0..=10.0).contains(&t)));
            counts.push(sample.len() as f64);
        }
        let (mean, sd) = sample_moments(&counts).unwrap();
        let se = sd / (runs as f64).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn large_jumps_empty_cases() {
        let m = LevyMeasure::symmetric_atoms(1.0, 0.5).unwrap();
        assert!(matches!(
            sample_large_jumps(&m, 2.0, 1.0, 0),
            Err(Error::EmptyTail { .. })
        ));
        let tiny = sample_large_jumps(&m, 0.5, 1e-9, 1).unwrap();
        assert!(tiny.is_empty());
    }

    #[test]
    fn large_jumps_power_law_statistics() {
        let m = power_law(0.5);
        let eps = 0.1;
        let mass = 2.0 / 1.5 * (0.1f64.powf(-1.5) - 1.0);
        assert_relative_eq!(m.tail_mass(eps), mass, max_relative = 1e-10);

        let runs = 300;
        let mut counts = Vec::with_capacity(runs);
        let mut sizes: Vec<f64> = Vec::new();
        for seed in 0..runs {
            let s = sample_large_jumps(&m, eps, 1.0, seed as u64).unwrap();
            counts.push(s.len() as f64);
            sizes.extend_from_slice(&s.sizes);
        }
        let (mean_count, sd_count) = sample_moments(&counts).unwrap();
        let se = sd_count / (runs as f64).sqrt();
        assert!((mean_count - mass).abs() < 3.0 * se, "{mean_count} vs {mass}");

        // Conditional absolute-size mean of the normalized tail law.
        let want_abs = 4.0 * (0.1f64.powf(-0.5) - 1.0) / mass;
        let abs_sizes: Vec<f64> = sizes.iter().map(|x| x.abs()).collect();
        let (mean_abs, sd_abs) = sample_moments(&abs_sizes).unwrap();
        let se_abs = sd_abs / (abs_sizes.len() as f64).sqrt();
        assert!((mean_abs - want_abs).abs() < 3.0 * se_abs);

        // Table accuracy at one quantile of the size law.
        let p_small =
            abs_sizes.iter().filter(|&&x| x <= 0.2).count() as f64 / abs_sizes.len() as f64;
        let want_p = (0.1f64.powf(-1.5) - 0.2f64.powf(-1.5)) / (0.1f64.powf(-1.5) - 1.0);
        let se_p = (want_p * (1.0 - want_p) / abs_sizes.len() as f64).sqrt();
        assert!((p_small - want_p).abs() < 3.0 * se_p, "{p_small} vs {want_p}");
    }

    #[test]
    fn small_jump_zero_weight_gives_zeros() {
        let m = power_law(-0.5);
        let out = sample_small_jump_functional(&m, 1e-2, |_| 0.0, 1.0, 1e-4, 64, 5).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn small_jump_guards() {
        let m = power_law(0.5);
        assert!(matches!(
            sample_small_jump_functional(&m, 1e-2, |_| 1.0, 1.0, 1e-2 / 3.0, 8, 0),
            Err(Error::TruncationTooCoarse { .. })
        ));
        assert!(sample_small_jump_functional(&m, 1e-2, |_| 1.0, 1.0, 2e-2, 8, 0).is_err());
        assert!(sample_small_jump_functional(&m, 1e-2, |_| 1.0, 1.0, 0.0, 8, 0).is_err());
        let atoms = LevyMeasure::symmetric_atoms(1.0, 0.5).unwrap();
        assert!(matches!(
            sample_small_jump_functional(&atoms, 0.5, |_| 1.0, 1.0, 0.1, 8, 0),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn direct_route_is_an_isometry() {
        // Light tail (delta = -0.5) keeps the direct route fast.
        let m = power_law(-0.5);
        let (eps, inner, t) = (1e-2, 1e-4, 2.0);
        let h = |s: f64| std::f64::consts::SQRT_2 * (-(t - s)).exp();
        let out = sample_small_jump_functional(&m, eps, h, t, inner, 4000, 11).unwrap();
        let (mean, sd) = sample_moments(&out).unwrap();
        let n = out.len() as f64;
        assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean {mean}");

        let discard = (sigma_eps(&m, inner).unwrap() / sigma_eps(&m, eps).unwrap()).powi(2);
        let want_var = (1.0 - discard) * (1.0 - (-2.0f64 * t).exp());
        let var = sd * sd;
        let var_se = var * (2.0 / (n - 1.0)).sqrt();
        assert!((var - want_var).abs() < 3.0 * var_se, "{var} vs {want_var}");
    }

    #[test]
    fn cf_route_matches_direct_route() {
        let m = power_law(-0.5);
        let (eps, inner, t) = (1e-2, 1e-4, 2.0);
        let h = |s: f64| std::f64::consts::SQRT_2 * (-(t - s)).exp();
        let sigma = sigma_eps(&m, eps).unwrap();
        let plan = SmallJumpPlan {
            inner,
            eps,
            sigma,
            t,
        };
        let n = 2000usize;
        let direct = small_jump_direct(&m, &plan, &h, n, 21).unwrap();
        let expected = m.band_abs_moment(inner, eps, 0).unwrap() * t * n as f64;
        let cf = small_jump_cf(&m, &plan, &h, n, 22, expected).unwrap();

        let (m1, s1) = sample_moments(&direct).unwrap();
        let (m2, s2) = sample_moments(&cf).unwrap();
        let mean_se = ((s1 * s1 + s2 * s2) / n as f64).sqrt();
        assert!((m1 - m2).abs() < 3.0 * mean_se);
        let var_se = ((s1.powi(4) + s2.powi(4)) * 2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (s1 * s1 - s2 * s2).abs() < 3.0 * var_se,
            "vars {} vs {}",
            s1 * s1,
            s2 * s2
        );

        // Two-sample KS between the routes.
        let mut a = direct.clone();
        let mut b = cf.clone();
        a.sort_unstable_by(f64::total_cmp);
        b.sort_unstable_by(f64::total_cmp);
        let mut d = 0.0f64;
        let (mut i, mut j) = (0usize, 0usize);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        assert!(d < 0.06, "two-sample KS {d}");
    }

    #[test]
    fn cf_route_is_an_isometry_on_heavy_bands() {
        // delta = 0.5 with a tight band carries ~4e7 expected jumps per
        // sample, far beyond the direct budget: the CF route must engage.
        let m = power_law(0.5);
        let out = sample_small_jump_functional(&m, 1e-3, |_| 1.0, 1.0, 1e-5, 3000, 33).unwrap();
        let (mean, sd) = sample_moments(&out).unwrap();
        let n = out.len() as f64;
        assert!(mean.abs() < 3.0 * sd / n.sqrt());
        // The discarded variance fraction is exactly 0.1 here.
        let var = sd * sd;
        let var_se = var * (2.0 / (n - 1.0)).sqrt();
        assert!((var - 0.9).abs() < 3.0 * var_se, "var {var}");
    }

    #[test]
    fn small_jump_samples_are_reproducible() {
        let m = power_law(-0.5);
        let a = sample_small_jump_functional(&m, 1e-2, |_| 1.0, 0.5, 1e-4, 16, 3).unwrap();
        let b = sample_small_jump_functional(&m, 1e-2, |_| 1.0, 0.5, 1e-4, 16, 3).unwrap();
        assert_eq!(a, b);
    }
}
