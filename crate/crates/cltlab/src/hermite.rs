//! Probabilists' Hermite polynomials and expansions of functions of a
//! standard Gaussian.
//!
//! With H_0 = 1, H_1 = x and H_{q+1}(x) = x H_q(x) - q H_{q-1}(x), the
//! polynomials are orthogonal with E[H_p(Z) H_q(Z)] = q! when p = q and 0
//! otherwise. Any f with E[f(Z)^2] finite expands as
//! f = sum_q c_q H_q with c_q = E[f(Z) H_q(Z)] / q!, and for jointly
//! standard-normal (Z_1, Z_2) with correlation rho,
//!
//! ```text
//! Cov[f(Z_1), f(Z_2)] = sum_{q >= 1} c_q^2 q! rho^q
//! ```
//!
//! That last series is what converts a covariance model of a Gaussian
//! process into the covariance of a subordinated process f(X_t), so it gets
//! an explicit entry point here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{GaussHermite, KahanSum};

/// Coefficients below this absolute size are snapped to zero by [`expand`],
/// so structural zeros (odd coefficients of even functions and vice versa)
/// come out exact.
pub const COEFF_ZERO_TOL: f64 = 1e-10;

/// H_q(x) by the three-term recurrence.
pub fn hermite_eval(q: usize, x: f64) -> f64 {
    match q {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0; // H_0
            let mut cur = x; // H_1
            for k in 1..q {
                let next = x * cur - k as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// A truncated expansion f ~ sum_{q=0}^{Q} coeffs[q] H_q.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermiteExpansion {
    coeffs: Vec<f64>,
}

impl HermiteExpansion {
    /// Wraps raw coefficients c_0..c_Q.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Truncation order Q.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// E[f(Z)] under the expansion, i.e. c_0.
    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    /// Hermite rank: the smallest q >= 1 with c_q != 0, or None if all
    /// fluctuating coefficients vanish.
    pub fn rank(&self) -> Option<usize> {
        self.coeffs.iter().skip(1).position(|&c| c != 0.0).map(|p| p + 1)
    }

    /// True if every odd coefficient vanishes, i.e. f(Z) and f(-Z) have the
    /// same law up to the expansion order.
    pub fn is_even(&self) -> bool {
        self.coeffs.iter().skip(1).step_by(2).all(|&c| c == 0.0)
    }

    /// Pointwise evaluation sum_q c_q H_q(x).
    pub fn eval(&self, x: f64) -> f64 {
        let mut prev = 1.0;
        let mut cur = x;
        let mut acc = KahanSum::new();
        acc.add(self.coeffs[0]);
        for (q, &c) in self.coeffs.iter().enumerate().skip(1) {
            if q >= 2 {
                let next = x * cur - (q - 1) as f64 * prev;
                prev = cur;
                cur = next;
            }
            acc.add(c * if q == 1 { x } else { cur });
        }
        acc.value()
    }

    /// Var[f(Z)] under the truncation: sum_{q>=1} c_q^2 q!.
    pub fn variance(&self) -> f64 {
        subordinated_cov_unchecked(&self.coeffs, 1.0)
    }
}

/// Expands f in the Hermite basis up to order `q_max` by Gauss-Hermite
/// quadrature: c_q = E[f(Z) H_q(Z)] / q!.
///
/// `nodes` overrides the rule size; the default max(64, 2 q_max) integrates
/// f H_q exactly whenever f is a polynomial of degree <= q_max. Fails with
/// `NonFiniteFunctionValue` if f is not finite at a node.
pub fn expand(f: impl Fn(f64) -> f64, q_max: usize, nodes: Option<usize>) -> Result<HermiteExpansion> {
    let n = nodes.unwrap_or_else(|| 64.max(2 * q_max));
    let gh = GaussHermite::new(n);

    // one pass over nodes: cache f values, then run the H_q recurrence per node
    let mut fx = Vec::with_capacity(gh.len());
    for &x in gh.nodes() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteFunctionValue { node: x });
        }
        fx.push(v);
    }

    let mut coeffs = Vec::with_capacity(q_max + 1);
    let mut factorial = 1.0;
    for q in 0..=q_max {
        if q > 0 {
            factorial *= q as f64;
        }
        let mut acc = KahanSum::new();
        for ((&x, &w), &v) in gh.nodes().iter().zip(gh.weights()).zip(&fx) {
            acc.add(w * v * hermite_eval(q, x));
        }
        let c = acc.value() / factorial;
        coeffs.push(if c.abs() < COEFF_ZERO_TOL { 0.0 } else { c });
    }
    Ok(HermiteExpansion::from_coeffs(coeffs))
}

fn subordinated_cov_unchecked(coeffs: &[f64], rho: f64) -> f64 {
    let mut acc = KahanSum::new();
    let mut factorial = 1.0;
    let mut rho_pow = 1.0;
    for (q, &c) in coeffs.iter().enumerate().skip(1) {
        factorial *= q as f64;
        rho_pow *= rho;
        acc.add(c * c * factorial * rho_pow);
    }
    acc.value()
}

/// Cov[f(Z_1), f(Z_2)] for standard normals with correlation `rho`, from the
/// expansion of f: sum_{q>=1} c_q^2 q! rho^q.
pub fn subordinated_cov(expansion: &HermiteExpansion, rho: f64) -> Result<f64> {
    if !(rho.is_finite() && (-1.0..=1.0).contains(&rho)) {
        return Err(Error::RhoOutOfRange(rho));
    }
    Ok(subordinated_cov_unchecked(expansion.coeffs(), rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::GaussHermite;
    use approx::assert_abs_diff_eq;

    // explicit polynomial forms, independent of the recurrence
    fn h_explicit(q: usize, x: f64) -> f64 {
        match q {
            0 => 1.0,
            1 => x,
            2 => x * x - 1.0,
            3 => x.powi(3) - 3.0 * x,
            4 => x.powi(4) - 6.0 * x * x + 3.0,
            5 => x.powi(5) - 10.0 * x.powi(3) + 15.0 * x,
            6 => x.powi(6) - 15.0 * x.powi(4) + 45.0 * x * x - 15.0,
            _ => unreachable!(),
        }
    }

    #[test]
    fn recurrence_matches_explicit_polynomials() {
        for q in 0..=6 {
            for &x in &[-2.5, -1.0, -0.3, 0.0, 0.7, 1.9, 3.2] {
                assert_abs_diff_eq!(hermite_eval(q, x), h_explicit(q, x), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn h2_at_two_is_three() {
        assert_eq!(hermite_eval(2, 2.0), 3.0);
    }

    #[test]
    fn orthogonality_against_quadrature() {
        // E[H_p H_q] = q! delta_pq, within 1e-8 in absolute terms up to q = 10
        let gh = GaussHermite::new(64);
        let mut factorial = vec![1.0f64];
        for q in 1..=10 {
            factorial.push(factorial[q - 1] * q as f64);
        }
        for p in 0..=10usize {
            for q in 0..=10usize {
                let got = gh.expect(|x| hermite_eval(p, x) * hermite_eval(q, x));
                let exact = if p == q { factorial[q] } else { 0.0 };
                assert!(
                    (got - exact).abs() < 1e-8,
                    "p={p} q={q}: got {got}, want {exact}"
                );
            }
        }
    }

    #[test]
    fn expand_cubic_plus_linear() {
        // x^3 + x = 4 H_1 + H_3
        let e = expand(|x| x.powi(3) + x, 6, None).unwrap();
        let want = [0.0, 4.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        for (c, w) in e.coeffs().iter().zip(want) {
            assert_abs_diff_eq!(*c, w, epsilon = 1e-12);
        }
        assert_eq!(e.rank(), Some(1));
        assert!(!e.is_even());
    }

    #[test]
    fn expand_square() {
        // x^2 = H_0 + H_2
        let e = expand(|x| x * x, 4, None).unwrap();
        assert_abs_diff_eq!(e.coeffs()[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(e.coeffs()[2], 1.0, epsilon = 1e-13);
        assert_eq!(e.coeffs()[1], 0.0);
        assert_eq!(e.coeffs()[3], 0.0);
        assert_eq!(e.rank(), Some(2));
        assert!(e.is_even());
    }

    #[test]
    fn expand_cosine() {
        // E[cos(Z) H_q(Z)] = e^{-1/2} cos(q pi/2), so c_q = e^{-1/2}(-1)^{q/2}/q!
        // for even q and 0 for odd q.
        let e = expand(|x| x.cos(), 8, None).unwrap();
        let s = (-0.5f64).exp();
        assert_abs_diff_eq!(e.coeffs()[0], s, epsilon = 1e-12);
        assert_abs_diff_eq!(e.coeffs()[2], -s / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.coeffs()[4], s / 24.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.coeffs()[6], -s / 720.0, epsilon = 1e-12);
        for q in [1, 3, 5, 7] {
            assert_eq!(e.coeffs()[q], 0.0, "odd coefficient {q} should snap to zero");
        }
        assert_eq!(e.rank(), Some(2));
        assert!(e.is_even());
    }

    #[test]
    fn expand_rejects_non_finite_values() {
        let err = expand(|x| x.ln(), 4, None).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFunctionValue { .. }));
    }

    #[test]
    fn eval_reconstructs_polynomials() {
        let e = expand(|x| x.powi(3) + x, 5, None).unwrap();
        for &x in &[-2.0, -0.5, 0.0, 1.3, 2.4] {
            assert_abs_diff_eq!(e.eval(x), x.powi(3) + x, epsilon = 1e-10);
        }
    }

    #[test]
    fn subordinated_cov_square() {
        // Cov[Z_1^2, Z_2^2] = 2 rho^2
        let e = expand(|x| x * x, 4, None).unwrap();
        assert_abs_diff_eq!(subordinated_cov(&e, 0.5).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(subordinated_cov(&e, -0.5).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(subordinated_cov(&e, 0.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn subordinated_cov_rejects_bad_rho() {
        let e = expand(|x| x, 2, None).unwrap();
        assert!(matches!(
            subordinated_cov(&e, 1.2),
            Err(Error::RhoOutOfRange(_))
        ));
        assert!(matches!(
            subordinated_cov(&e, f64::NAN),
            Err(Error::RhoOutOfRange(_))
        ));
    }

    /// Independent two-dimensional quadrature oracle: Z_2 = rho Z_1 +
    /// sqrt(1-rho^2) Y with Y independent of Z_1, integrated on a tensor
    /// Gauss-Hermite grid.
    fn cov_2d_oracle(f: impl Fn(f64) -> f64, rho: f64, n: usize) -> f64 {
        let gh = GaussHermite::new(n);
        let root = (1.0 - rho * rho).sqrt();
        let mean = gh.expect(&f);
        let mut acc = KahanSum::new();
        for (&x, &wx) in gh.nodes().iter().zip(gh.weights()) {
            for (&y, &wy) in gh.nodes().iter().zip(gh.weights()) {
                acc.add(wx * wy * f(x) * f(rho * x + root * y));
            }
        }
        acc.value() - mean * mean
    }

    #[test]
    fn subordinated_cov_matches_2d_quadrature() {
        let cases: [(&str, fn(f64) -> f64); 4] = [
            ("x", |x| x),
            ("x^2", |x| x * x),
            ("x^3+x", |x| x.powi(3) + x),
            ("cos", |x| x.cos()),
        ];
        for (name, f) in cases {
            let e = expand(f, 12, None).unwrap();
            for rho in [-0.9, -0.5, 0.0, 0.5, 0.9] {
                let series = subordinated_cov(&e, rho).unwrap();
                let oracle = cov_2d_oracle(f, rho, 64);
                assert!(
                    (series - oracle).abs() < 1e-6,
                    "f={name} rho={rho}: series {series} vs oracle {oracle}"
                );
            }
        }
    }

    #[test]
    fn truncation_tail_shrinks_monotonically() {
        // once Q reaches the polynomial degree the series stops moving, and
        // for cos the added terms shrink with Q
        let mut prev_gap = f64::INFINITY;
        let mut prev = 0.0;
        for q_max in [2usize, 4, 6, 8, 10] {
            let e = expand(|x| x.cos(), q_max, None).unwrap();
            let v = subordinated_cov(&e, 0.8).unwrap();
            if q_max > 2 {
                let gap = (v - prev).abs();
                assert!(gap <= prev_gap + 1e-15, "gap grew at Q={q_max}");
                prev_gap = gap;
            }
            prev = v;
        }
    }
}
