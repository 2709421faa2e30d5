//! Fractional kernels on a compact interval and on the whole line, plus the
//! hybrid simulator that represents a fractional Levy process as a Gaussian
//! part scaled by the truncation level and a finite sum over large jumps.
//!
//! The compact-interval kernel needs care: its inner integrand is singular
//! where the arguments meet, and the kernel itself blows up (integrably) at
//! both ends of the time interval. Evaluation splits the inner integral at
//! min(s, t-s), integrates the frozen singular factor exactly there, and
//! covers the rest with log-spaced panels; every piece is positive, so the
//! scheme has no cancellation anywhere in (0, t).

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::jumps::{sigma_eps, BandSampler, LevyMeasure};
use crate::paths::{sample_fbm, PathGrid};
use crate::quad::GaussLegendre;
use crate::rng::replicate_rng;

/// Default graded-panel count for the inner kernel integral.
pub const DEFAULT_PANELS: usize = 256;

const MIN_PANELS: usize = 8;

/// Relative cutoff for quadratures that approach the kernel's integrable
/// endpoint singularities; the truncated mass is O(cutoff^(2-2H)).
const REL_CUTOFF: f64 = 1e-13;

/// Interpolation-table half size and smallest tabulated argument.
const TABLE_HALF: usize = 1024;
const TABLE_XMIN: f64 = 1e-8;

/// Symmetry tolerance on the signed tail mean of a jump measure.
const SYMMETRY_TOL: f64 = 1e-9;

static GL16: OnceLock<GaussLegendre> = OnceLock::new();

fn gl16() -> &'static GaussLegendre {
    GL16.get_or_init(|| GaussLegendre::new(16))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    MolchanGolosov,
    MandelbrotVanNess,
}

/// A fractional kernel of index `hurst`, evaluated with `quad_points`
/// graded panels in the singular region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionalKernel {
    hurst: f64,
    kind: KernelKind,
    #[serde(default = "default_panels")]
    quad_points: usize,
}

fn default_panels() -> usize {
    DEFAULT_PANELS
}

impl FractionalKernel {
    pub fn new(hurst: f64, kind: KernelKind, quad_points: usize) -> Result<Self> {
        let k = FractionalKernel {
            hurst,
            kind,
            quad_points,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn molchan_golosov(hurst: f64) -> Result<Self> {
        Self::new(hurst, KernelKind::MolchanGolosov, DEFAULT_PANELS)
    }

    pub fn mandelbrot_van_ness(hurst: f64) -> Result<Self> {
        Self::new(hurst, KernelKind::MandelbrotVanNess, DEFAULT_PANELS)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) || self.hurst == 0.5 {
            return Err(Error::HurstOutOfRange(
                self.hurst,
                "(0, 1) excluding 1/2",
            ));
        }
        if self.quad_points < MIN_PANELS {
            return Err(Error::InvalidParameter(format!(
                "quad_points must be at least {MIN_PANELS}, got {}",
                self.quad_points
            )));
        }
        Ok(())
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn quad_points(&self) -> usize {
        self.quad_points
    }
}

/// Normalization for the rough branch (H < 1/2) of the compact kernel.
fn c_lower(h: f64) -> f64 {
    (2.0 * h / ((1.0 - 2.0 * h) * beta(1.0 - 2.0 * h, h + 0.5))).sqrt()
}

/// Normalization for the smooth branch (H > 1/2) of the compact kernel.
fn c_upper(h: f64) -> f64 {
    (h * (2.0 * h - 1.0) / beta(2.0 - 2.0 * h, h - 0.5)).sqrt()
}

/// Normalization of the whole-line kernel.
fn mvn_constant(h: f64) -> f64 {
    2.0 * h * (std::f64::consts::PI * h).sin() * gamma(2.0 * h) / gamma(h + 0.5)
}

/// Geometric edges on [0, v0] with first panel ~ v0 * e^-30.
fn graded(v0: f64, n: usize) -> Vec<f64> {
    let r = (30.0 / n as f64).exp();
    let denom = r.powi(n as i32) - 1.0;
    (0..=n)
        .map(|j| v0 * (r.powi(j as i32) - 1.0) / denom)
        .collect()
}

/// Log-spaced edges on [lo, hi], four panels per decade.
fn log_mesh(lo: f64, hi: f64) -> Vec<f64> {
    let n = ((hi / lo).log10() * 4.0).ceil().max(1.0) as usize;
    let mut edges: Vec<f64> = (0..n)
        .map(|j| lo * (hi / lo).powf(j as f64 / n as f64))
        .collect();
    edges.push(hi);
    edges
}

/// Compact-interval kernel at (s, s + gap); `gap` is passed exactly so the
/// caller controls cancellation near the diagonal.
fn mg_eval(h: f64, panels: usize, s: f64, gap: f64) -> f64 {
    let gl = gl16();
    let v0 = s.min(gap);
    if h > 0.5 {
        // inner = int_0^gap v^(h-3/2) (s+v)^(h-1/2) dv, all pieces positive
        let frozen = s.powf(h - 0.5);
        let exact = frozen * v0.powf(h - 0.5) / (h - 0.5);
        let near = gl.integrate_panels(&graded(v0, panels), |v| {
            v.powf(h - 1.5) * ((s + v).powf(h - 0.5) - frozen)
        });
        let far = if gap > v0 {
            gl.integrate_panels(&log_mesh(v0, gap), |v| {
                v.powf(h - 1.5) * (s + v).powf(h - 0.5)
            })
        } else {
            0.0
        };
        c_upper(h) * s.powf(0.5 - h) * (exact + near + far)
    } else {
        // j = int_0^gap v^(h-1/2) (s+v)^(h-3/2) dv enters with a negative
        // prefactor that flips its sign: again a sum of positive pieces.
        let frozen = s.powf(h - 1.5);
        let exact = frozen * v0.powf(h + 0.5) / (h + 0.5);
        let near = gl.integrate_panels(&graded(v0, panels), |v| {
            v.powf(h - 0.5) * ((s + v).powf(h - 1.5) - frozen)
        });
        let far = if gap > v0 {
            gl.integrate_panels(&log_mesh(v0, gap), |v| {
                v.powf(h - 0.5) * (s + v).powf(h - 1.5)
            })
        } else {
            0.0
        };
        let j = exact + near + far;
        let leading = ((s + gap) / s).powf(h - 0.5) * gap.powf(h - 0.5);
        c_lower(h) * (leading - (h - 0.5) * s.powf(0.5 - h) * j)
    }
}

/// Compact-interval kernel K(t, s) for 0 < s < t.
pub fn mg_kernel(k: &FractionalKernel, t: f64, s: f64) -> Result<f64> {
    if !(t > 0.0 && s > 0.0 && s < t) {
        return Err(Error::SingularPoint { t, s });
    }
    Ok(mg_eval(k.hurst, k.quad_points, s, t - s))
}

/// Whole-line kernel at s < t.
pub fn mvn_kernel(k: &FractionalKernel, t: f64, s: f64) -> Result<f64> {
    if !(s < t) {
        return Err(Error::SingularPoint { t, s });
    }
    let h = k.hurst;
    let first = (t - s).powf(h - 0.5);
    let second = if s < 0.0 { (-s).powf(h - 0.5) } else { 0.0 };
    Ok(mvn_constant(h) * (first - second))
}

/// Fractional Brownian covariance (t^2H + s^2H - |t-s|^2H) / 2.
pub fn fbm_gram(h: f64, t: f64, s: f64) -> f64 {
    0.5 * (t.abs().powf(2.0 * h) + s.abs().powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
}

/// Numeric Gram integral of the compact kernel over (0, min(t, s)). The
/// integrand is singular at both ends, so the range splits at the midpoint
/// with log grading toward each endpoint and exact gaps near the diagonal.
pub fn gram_value(k: &FractionalKernel, t: f64, s: f64) -> Result<f64> {
    if !(t > 0.0 && s > 0.0) {
        return Err(Error::SingularPoint { t, s });
    }
    let h = k.hurst;
    let qp = k.quad_points;
    let b = t.min(s);
    let d = t.max(s) - b;
    let gl = gl16();
    let cut = REL_CUTOFF * b;
    let left = gl.integrate_panels(&log_mesh(cut, 0.5 * b), |u| {
        mg_eval(h, qp, u, b - u) * mg_eval(h, qp, u, d + (b - u))
    });
    let right = gl.integrate_panels(&log_mesh(cut, 0.5 * b), |w| {
        mg_eval(h, qp, b - w, w) * mg_eval(h, qp, b - w, d + w)
    });
    Ok(left + right)
}

/// CSV table of kernel values, one row per requested pair.
pub fn kernel_table(k: &FractionalKernel, pairs: &[(f64, f64)]) -> Result<String> {
    let mut out = String::from("t,s,K\n");
    for &(t, s) in pairs {
        let value = match k.kind {
            KernelKind::MolchanGolosov => mg_kernel(k, t, s)?,
            KernelKind::MandelbrotVanNess => mvn_kernel(k, t, s)?,
        };
        out.push_str(&format!("{t},{s},{value}\n"));
    }
    Ok(out)
}

/// K(1, x) on (0, 1) by interpolation. The kernel behaves like
/// x^-|H-1/2| at the left end and (1-x)^(H-1/2) at the right end; the table
/// stores the bounded remainder on log-uniform grids from each end and the
/// singular factors are restored per lookup.
pub(crate) struct KernelTable {
    h: f64,
    lo_ln: f64,
    step: f64,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl KernelTable {
    pub(crate) fn build(h: f64, panels: usize) -> Self {
        let q0 = (h - 0.5).abs();
        let q1 = 0.5 - h;
        let lo_ln = TABLE_XMIN.ln();
        let step = (0.5f64.ln() - lo_ln) / (TABLE_HALF - 1) as f64;
        let left = (0..TABLE_HALF)
            .map(|i| {
                let x = (lo_ln + step * i as f64).exp();
                mg_eval(h, panels, x, 1.0 - x) * x.powf(q0) * (1.0 - x).powf(q1)
            })
            .collect();
        let right = (0..TABLE_HALF)
            .map(|i| {
                let w = (lo_ln + step * i as f64).exp();
                mg_eval(h, panels, 1.0 - w, w) * (1.0 - w).powf(q0) * w.powf(q1)
            })
            .collect();
        KernelTable {
            h,
            lo_ln,
            step,
            left,
            right,
        }
    }

    fn interp(table: &[f64], pos: f64) -> f64 {
        let pos = pos.clamp(0.0, (table.len() - 1) as f64);
        let i = (pos as usize).min(table.len() - 2);
        let frac = pos - i as f64;
        table[i] + frac * (table[i + 1] - table[i])
    }

    /// K(1, x) for x in (0, 1).
    pub(crate) fn eval(&self, x: f64) -> f64 {
        let q0 = (self.h - 0.5).abs();
        let q1 = 0.5 - self.h;
        if x <= 0.5 {
            let r = Self::interp(&self.left, (x.ln() - self.lo_ln) / self.step);
            r * x.powf(-q0) * (1.0 - x).powf(-q1)
        } else {
            let w = 1.0 - x;
            let r = Self::interp(&self.right, (w.ln() - self.lo_ln) / self.step);
            r * x.powf(-q0) * w.powf(-q1)
        }
    }
}

/// Hybrid fractional-Levy paths on the grid t_k = k dt, k < n: a fractional
/// Brownian part scaled by sigma(eps) plus the summed kernel response to the
/// jumps above eps. Requires the compact-interval kernel (the jump part
/// lives on [0, t]) and a measure symmetric above eps (no compensator).
pub fn simulate_flp_hybrid(
    k: &FractionalKernel,
    m: &LevyMeasure,
    eps: f64,
    n: usize,
    dt: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<PathGrid>> {
    if k.kind != KernelKind::MolchanGolosov {
        return Err(Error::InvalidParameter(
            "hybrid simulation needs the compact-interval (molchan-golosov) kernel".into(),
        ));
    }
    k.validate()?;
    m.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "eps",
            value: eps,
        });
    }
    let mean = m.tail_signed_mean(eps);
    if mean.abs() > SYMMETRY_TOL {
        return Err(Error::AsymmetricMeasure { mean });
    }
    let h = k.hurst;
    let sigma = sigma_eps(m, eps)?;

    let mut paths: Vec<PathGrid> = if sigma > 0.0 {
        sample_fbm(h, n, dt, count, seed)?
            .into_iter()
            .map(|mut g| {
                for v in g.values.iter_mut() {
                    *v *= sigma;
                }
                g
            })
            .collect()
    } else {
        crate::paths::check_grid(n, dt)?;
        (0..count)
            .map(|_| PathGrid {
                t0: 0.0,
                dt,
                values: vec![0.0; n],
                seed,
            })
            .collect()
    };

    let horizon = (n - 1) as f64 * dt;
    let sampler = BandSampler::new(m, eps, f64::INFINITY)?;
    if sampler.total_mass() > 0.0 && horizon > 0.0 {
        let rate = sampler.total_mass() * horizon;
        let poisson = Poisson::new(rate)
            .map_err(|_| Error::InvalidParameter(format!("bad Poisson rate {rate}")))?;
        let table = KernelTable::build(h, k.quad_points);
        let scale: Vec<f64> = (0..n).map(|j| (j as f64 * dt).powf(h - 0.5)).collect();
        let jump_parts: Vec<Vec<f64>> = (0..count)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(seed, (count + r) as u64);
                let jumps = poisson.sample(&mut rng) as usize;
                let mut vals = vec![0.0; n];
                for _ in 0..jumps {
                    let tau = rng.random::<f64>() * horizon;
                    let x = sampler.sample(&mut rng);
                    let start = (tau / dt).floor() as usize + 1;
                    for (j, v) in vals.iter_mut().enumerate().skip(start) {
                        let t_j = j as f64 * dt;
                        *v += scale[j] * table.eval(tau / t_j) * x;
                    }
                }
                vals
            })
            .collect();
        for (path, jumps) in paths.iter_mut().zip(jump_parts) {
            for (v, j) in path.values.iter_mut().zip(jumps) {
                *v += j;
            }
        }
    }
    Ok(paths)
}
