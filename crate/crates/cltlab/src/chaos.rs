//! A finite-atom model of mixed Gaussian and compensated-Poisson noise in
//! which multiple integrals, contractions, Malliavin derivatives, the
//! number operator and its inverse, the adjoint integral, and the
//! variance-energy inequalities are finite sums, so every identity can be
//! checked exactly or against an explicit expectation.
//!
//! Multiple integrals are off-diagonal multilinear sums, the discrete
//! analogue of diagonal-free continuum integrals. The pathwise product
//! formula therefore holds only up to diagonal terms of size O(mesh): the
//! gap shrinks like mesh^(1/2) in L^2, and tests pin that exponent rather
//! than expecting exactness at a fixed mesh.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::KahanSum;
use crate::rng::replicate_rng;

/// Atom budget: dense order-3 kernels over 64 atoms stay around 2 MB.
pub const MAX_ATOMS: usize = 64;

/// Highest chaos order a stored functional may carry.
pub const MAX_ORDER: usize = 3;

/// Entry budget for transient kernels produced by contractions.
const ENTRY_CAP: usize = 1 << 22;

/// One cell of the discretized control measure: a Gaussian atom carries
/// weight sigma^2 dt, a jump atom carries an independent Poisson count of
/// jumps of one fixed size and weight x^2 intensity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub time: f64,
    /// Zero marks a Gaussian atom; otherwise the jump size.
    pub jump_size: f64,
    /// Poisson rate of the cell; zero for Gaussian atoms.
    pub intensity: f64,
    /// Control-measure weight of the cell.
    pub weight: f64,
}

impl Atom {
    pub fn is_jump(&self) -> bool {
        self.jump_size != 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomGrid {
    atoms: Vec<Atom>,
    sigma: f64,
    horizon: f64,
    mesh: f64,
}

impl AtomGrid {
    /// Uniform time discretization of [0, horizon] into `steps` cells, one
    /// Gaussian atom per cell when sigma > 0 plus one jump atom per
    /// (size, rate) mark.
    pub fn new(sigma: f64, horizon: f64, steps: usize, marks: &[(f64, f64)]) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::NonPositiveParameter {
                name: "horizon",
                value: horizon,
            });
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::NonPositiveParameter {
                name: "sigma",
                value: sigma,
            });
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        for &(x, nu) in marks {
            if x == 0.0 || !x.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "jump mark size must be finite and nonzero, got {x}"
                )));
            }
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::NonPositiveParameter {
                    name: "jump rate",
                    value: nu,
                });
            }
        }
        for (i, &(x, _)) in marks.iter().enumerate() {
            if marks[..i].iter().any(|&(y, _)| y == x) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate jump mark at size {x}"
                )));
            }
        }
        let per_step = usize::from(sigma > 0.0) + marks.len();
        let total = steps * per_step;
        if total == 0 {
            return Err(Error::InvalidParameter(
                "grid needs a Gaussian component or at least one jump mark".into(),
            ));
        }
        if total > MAX_ATOMS {
            return Err(Error::InvalidParameter(format!(
                "{total} atoms exceed the budget of {MAX_ATOMS}"
            )));
        }
        let dt = horizon / steps as f64;
        let mut atoms = Vec::with_capacity(total);
        for i in 0..steps {
            let time = (i as f64 + 0.5) * dt;
            if sigma > 0.0 {
                atoms.push(Atom {
                    time,
                    jump_size: 0.0,
                    intensity: 0.0,
                    weight: sigma * sigma * dt,
                });
            }
            for &(x, nu) in marks {
                atoms.push(Atom {
                    time,
                    jump_size: x,
                    intensity: nu * dt,
                    weight: x * x * nu * dt,
                });
            }
        }
        let grid = AtomGrid {
            atoms,
            sigma,
            horizon,
            mesh: dt,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn total_weight(&self) -> f64 {
        let mut acc = KahanSum::new();
        for a in &self.atoms {
            acc.add(a.weight);
        }
        acc.value()
    }

    pub fn validate(&self) -> Result<()> {
        let mut marks = 0.0;
        let mut seen: Vec<(f64, f64)> = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(Error::NonPositiveParameter {
                    name: "atom weight",
                    value: a.weight,
                });
            }
            if a.is_jump() {
                if !(a.intensity > 0.0) {
                    return Err(Error::NonPositiveParameter {
                        name: "atom intensity",
                        value: a.intensity,
                    });
                }
                marks += a.jump_size * a.jump_size * a.intensity;
            } else if a.intensity != 0.0 {
                return Err(Error::InvalidParameter(
                    "Gaussian atom with nonzero intensity".into(),
                ));
            }
            if seen.contains(&(a.time, a.jump_size)) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate atom at time {}, size {}",
                    a.time, a.jump_size
                )));
            }
            seen.push((a.time, a.jump_size));
        }
        // Cell intensities already carry dt, so the jump weights summed over
        // all cells equal (sum x^2 nu) * horizon directly.
        let expected = self.sigma * self.sigma * self.horizon + marks;
        let total = self.total_weight();
        if (total - expected).abs() > 1e-12 * (1.0 + expected.abs()) {
            return Err(Error::InvalidParameter(format!(
                "atom weights sum to {total}, measure says {expected}"
            )));
        }
        Ok(())
    }
}

/// A kernel of fixed order: a dense array over atom tuples. Values are
/// stored as given; the evaluation sum is symmetrization-invariant by
/// construction, and [`Kernel::symmetrized`] gives the canonical form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    order: usize,
    n: usize,
    values: Vec<f64>,
}

fn entries(n: usize, order: usize) -> Option<usize> {
    if order == 0 {
        return Some(1);
    }
    n.checked_pow(order as u32).filter(|&e| e <= ENTRY_CAP)
}

fn decode(mut flat: usize, n: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % n;
        flat /= n;
    }
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(d - 1) {
        for slot in 0..=p.len() {
            let mut q = p.clone();
            q.insert(slot, d - 1);
            out.push(q);
        }
    }
    out
}

impl Kernel {
    pub fn new(order: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        let expect = entries(n, order).ok_or(Error::OrderTooLarge {
            order,
            atoms: n,
            limit: MAX_ORDER,
        })?;
        if values.len() != expect {
            return Err(Error::GridMismatch {
                expected: expect,
                got: values.len(),
            });
        }
        Ok(Kernel { order, n, values })
    }

    pub fn constant(c: f64) -> Self {
        Kernel {
            order: 0,
            n: 0,
            values: vec![c],
        }
    }

    pub fn zero(order: usize, n: usize) -> Result<Self> {
        let expect = entries(n, order).ok_or(Error::OrderTooLarge {
            order,
            atoms: n,
            limit: MAX_ORDER,
        })?;
        Ok(Kernel {
            order,
            n,
            values: vec![0.0; expect],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn atom_count(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn idx(&self, tuple: &[usize]) -> usize {
        tuple.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn get(&self, tuple: &[usize]) -> f64 {
        self.values[self.idx(tuple)]
    }

    pub fn set(&mut self, tuple: &[usize], value: f64) {
        let i = self.idx(tuple);
        self.values[i] = value;
    }

    pub fn scaled(&self, c: f64) -> Kernel {
        Kernel {
            order: self.order,
            n: self.n,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Average over all argument permutations.
    pub fn symmetrized(&self) -> Kernel {
        if self.order < 2 {
            return self.clone();
        }
        let perms = permutations(self.order);
        let mut tuple = vec![0usize; self.order];
        let mut scratch = vec![0usize; self.order];
        let values = (0..self.values.len())
            .map(|flat| {
                decode(flat, self.n, &mut tuple);
                let mut acc = 0.0;
                for p in &perms {
                    for (k, &src) in p.iter().enumerate() {
                        scratch[k] = tuple[src];
                    }
                    acc += self.values[self.idx(&scratch)];
                }
                acc / perms.len() as f64
            })
            .collect();
        Kernel {
            order: self.order,
            n: self.n,
            values,
        }
    }
}

/// One draw of every atom's centered measure value: N(0, weight) for
/// Gaussian atoms and jump_size (N - intensity) with N Poisson for jump
/// atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub values: Vec<f64>,
    pub seed: u64,
}

/// `count` independent realizations, one RNG stream per replicate.
pub fn sample_noise(grid: &AtomGrid, count: usize, seed: u64) -> Result<Vec<NoiseRealization>> {
    grid.validate()?;
    let dists: Vec<Option<Poisson<f64>>> = grid
        .atoms
        .iter()
        .map(|a| {
            if a.is_jump() {
                Ok(Some(Poisson::new(a.intensity).map_err(|_| {
                    Error::NonPositiveParameter {
                        name: "atom intensity",
                        value: a.intensity,
                    }
                })?))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    Ok((0..count)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let values = grid
                .atoms
                .iter()
                .zip(&dists)
                .map(|(a, d)| match d {
                    Some(poisson) => a.jump_size * (poisson.sample(&mut rng) - a.intensity),
                    None => a.weight.sqrt() * rng.sample::<f64, _>(StandardNormal),
                })
                .collect();
            NoiseRealization { values, seed }
        })
        .collect())
}

/// The realization with one extra jump inserted at a jump atom; the
/// centered value moves by exactly the jump size.
pub fn insert_jump(grid: &AtomGrid, w: &NoiseRealization, index: usize) -> Result<NoiseRealization> {
    let atom = *grid.atoms.get(index).ok_or(Error::UnknownAtom {
        index,
        atoms: grid.len(),
    })?;
    if !atom.is_jump() {
        return Err(Error::InvalidParameter(format!(
            "atom {index} is Gaussian; only jump atoms accept an extra jump"
        )));
    }
    let mut out = w.clone();
    out.values[index] += atom.jump_size;
    Ok(out)
}

/// Off-diagonal multilinear sum of `f` against the atom values, skipping
/// atoms whose bit is set in `mask`. Empty index ranges sum to zero.
fn off_diagonal(f: &Kernel, m: &[f64], mask: u64, prefix: &[usize]) -> f64 {
    let mut idx = vec![0usize; f.order];
    idx[..prefix.len()].copy_from_slice(prefix);
    let mut acc = KahanSum::new();
    fn rec(
        f: &Kernel,
        m: &[f64],
        mask: u64,
        idx: &mut Vec<usize>,
        depth: usize,
        prod: f64,
        acc: &mut KahanSum,
    ) {
        if depth == f.order {
            acc.add(prod * f.get(idx));
            return;
        }
        for i in 0..m.len() {
            if mask & (1 << i) != 0 {
                continue;
            }
            idx[depth] = i;
            rec(f, m, mask | (1 << i), idx, depth + 1, prod * m[i], acc);
        }
    }
    rec(f, m, mask, &mut idx, prefix.len(), 1.0, &mut acc);
    acc.value()
}

/// I_q(f) on one realization: the sum of f over ordered tuples of distinct
/// atoms times the product of their measure values. I_0 is the constant.
pub fn multiple_integral(f: &Kernel, w: &NoiseRealization) -> Result<f64> {
    if f.order == 0 {
        return Ok(f.values[0]);
    }
    if f.n != w.values.len() {
        return Err(Error::GridMismatch {
            expected: f.n,
            got: w.values.len(),
        });
    }
    if f.order > f.n {
        return Err(Error::OrderTooLarge {
            order: f.order,
            atoms: f.n,
            limit: f.n,
        });
    }
    Ok(off_diagonal(f, &w.values, 0, &[]))
}

/// Ordered-distinct-tuple inner product sum f g prod(weights); with
/// symmetrized arguments this makes E[I_q(f) I_q(g)] = q! inner(f, g).
fn od_inner(f: &Kernel, g: &Kernel, weights: &[f64]) -> f64 {
    debug_assert_eq!(f.order, g.order);
    if f.order == 0 {
        return f.values[0] * g.values[0];
    }
    let mut idx = vec![0usize; f.order];
    let mut acc = KahanSum::new();
    fn rec(
        f: &Kernel,
        g: &Kernel,
        weights: &[f64],
        mask: u64,
        idx: &mut Vec<usize>,
        depth: usize,
        prod: f64,
        acc: &mut KahanSum,
    ) {
        if depth == f.order {
            acc.add(prod * f.get(idx) * g.get(idx));
            return;
        }
        for i in 0..weights.len() {
            if mask & (1 << i) != 0 {
                continue;
            }
            idx[depth] = i;
            rec(f, g, weights, mask | (1 << i), idx, depth + 1, prod * weights[i], acc);
        }
    }
    rec(f, g, weights, 0, &mut idx, 0, 1.0, &mut acc);
    acc.value()
}

/// A finite chaos expansion: kernels[q] is the order-q kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosFunctional {
    n: usize,
    kernels: Vec<Kernel>,
}

impl ChaosFunctional {
    pub fn new(n: usize, kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidParameter(
                "a chaos functional needs at least the constant kernel".into(),
            ));
        }
        if kernels.len() - 1 > MAX_ORDER {
            return Err(Error::OrderTooLarge {
                order: kernels.len() - 1,
                atoms: n,
                limit: MAX_ORDER,
            });
        }
        for (q, k) in kernels.iter().enumerate() {
            if k.order != q {
                return Err(Error::InvalidParameter(format!(
                    "kernel at slot {q} has order {}",
                    k.order
                )));
            }
            if q > 0 && k.n != n {
                return Err(Error::GridMismatch {
                    expected: n,
                    got: k.n,
                });
            }
        }
        Ok(ChaosFunctional { n, kernels })
    }

    /// The functional I_q(f) alone, lower kernels zero.
    pub fn from_kernel(f: Kernel) -> Result<Self> {
        let n = f.n;
        let mut kernels = Vec::with_capacity(f.order + 1);
        for q in 0..f.order {
            kernels.push(if q == 0 {
                Kernel::constant(0.0)
            } else {
                Kernel::zero(q, n)?
            });
        }
        kernels.push(f);
        ChaosFunctional::new(n, kernels)
    }

    pub fn constant(c: f64) -> Self {
        ChaosFunctional {
            n: 0,
            kernels: vec![Kernel::constant(c)],
        }
    }

    pub fn atom_count(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> usize {
        self.kernels.len() - 1
    }

    pub fn kernel(&self, q: usize) -> Option<&Kernel> {
        self.kernels.get(q)
    }

    pub fn mean(&self) -> f64 {
        self.kernels[0].values[0]
    }

    /// Pathwise value sum_q I_q(f_q).
    pub fn evaluate(&self, w: &NoiseRealization) -> Result<f64> {
        if self.n != 0 && self.n != w.values.len() {
            return Err(Error::GridMismatch {
                expected: self.n,
                got: w.values.len(),
            });
        }
        let mut acc = self.mean();
        for k in &self.kernels[1..] {
            acc += off_diagonal(k, &w.values, 0, &[]);
        }
        Ok(acc)
    }

    /// Coefficient-wise map c(q) * f_q over orders q >= 1.
    fn order_map(&self, c: impl Fn(usize) -> f64, keep_mean: bool) -> ChaosFunctional {
        let kernels = self
            .kernels
            .iter()
            .enumerate()
            .map(|(q, k)| {
                if q == 0 {
                    Kernel::constant(if keep_mean { k.values[0] } else { 0.0 })
                } else {
                    k.scaled(c(q))
                }
            })
            .collect();
        ChaosFunctional {
            n: self.n,
            kernels,
        }
    }
}

/// E[F G] by the exact isometry: mean product plus sum_q q! <f_q, g_q>.
pub fn expected_product(a: &ChaosFunctional, b: &ChaosFunctional, grid: &AtomGrid) -> Result<f64> {
    for f in [a, b] {
        if f.n != 0 && f.n != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                got: f.n,
            });
        }
    }
    let weights: Vec<f64> = grid.atoms.iter().map(|at| at.weight).collect();
    let mut acc = a.mean() * b.mean();
    let mut factorial = 1.0;
    for q in 1..=a.max_order().min(b.max_order()) {
        factorial *= q as f64;
        let (fa, fb) = (a.kernels[q].symmetrized(), b.kernels[q].symmetrized());
        acc += factorial * od_inner(&fa, &fb, &weights);
    }
    Ok(acc)
}

/// Discrete contraction: the first r variables of each kernel are matched
/// and summed against the weights, the next s variables are shared and
/// multiplied by the jump size of the shared atom (zero when it is
/// Gaussian), and the result is symmetrized.
pub fn contraction(f: &Kernel, g: &Kernel, r: usize, s: usize, grid: &AtomGrid) -> Result<Kernel> {
    let n = grid.len();
    for k in [f, g] {
        if k.order > 0 && k.n != n {
            return Err(Error::GridMismatch {
                expected: n,
                got: k.n,
            });
        }
    }
    let (p, q) = (f.order, g.order);
    if r > p.min(q) || r + s > p.min(q) {
        return Err(Error::IndexOutOfRange {
            index: r + s,
            len: p.min(q) + 1,
        });
    }
    let d = p + q - 2 * r - s;
    let count = entries(n.max(1), d).ok_or(Error::OrderTooLarge {
        order: d,
        atoms: n,
        limit: MAX_ORDER,
    })?;
    let f_rest = p - r - s;
    let mut out = vec![0.0; count];
    let mut tuple = vec![0usize; d];
    let mut f_idx = vec![0usize; p];
    let mut g_idx = vec![0usize; q];
    for (flat, slot) in out.iter_mut().enumerate() {
        decode(flat, n.max(1), &mut tuple);
        let shared = &tuple[..s];
        let size_factor: f64 = shared.iter().map(|&v| grid.atoms[v].jump_size).product();
        if s > 0 && size_factor == 0.0 {
            continue;
        }
        f_idx[r..r + s].copy_from_slice(shared);
        g_idx[r..r + s].copy_from_slice(shared);
        f_idx[r + s..].copy_from_slice(&tuple[s..s + f_rest]);
        g_idx[r + s..].copy_from_slice(&tuple[s + f_rest..]);
        let mut acc = KahanSum::new();
        fn rec(
            f: &Kernel,
            g: &Kernel,
            grid: &AtomGrid,
            f_idx: &mut Vec<usize>,
            g_idx: &mut Vec<usize>,
            depth: usize,
            r: usize,
            prod: f64,
            acc: &mut KahanSum,
        ) {
            if depth == r {
                acc.add(prod * f.get(f_idx) * g.get(g_idx));
                return;
            }
            for i in 0..grid.len() {
                f_idx[depth] = i;
                g_idx[depth] = i;
                rec(
                    f,
                    g,
                    grid,
                    f_idx,
                    g_idx,
                    depth + 1,
                    r,
                    prod * grid.atoms[i].weight,
                    acc,
                );
            }
        }
        rec(f, g, grid, &mut f_idx, &mut g_idx, 0, r, 1.0, &mut acc);
        *slot = size_factor * acc.value();
    }
    let raw = Kernel {
        order: d,
        n: if d == 0 { 0 } else { n },
        values: out,
    };
    Ok(raw.symmetrized())
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Both sides of the product identity on one realization: the pathwise
/// product I_p(f) I_q(g), and the contraction expansion
/// sum_{r,s} r! s! (p r)(q r)(p-r s)(q-r s) I_{p+q-2r-s}(f (x)_r^s g).
/// Contraction orders beyond the atom count contribute empty sums.
pub fn product_formula_check(
    f: &Kernel,
    g: &Kernel,
    grid: &AtomGrid,
    w: &NoiseRealization,
) -> Result<(f64, f64)> {
    let f = f.symmetrized();
    let g = g.symmetrized();
    let lhs_f = if f.order == 0 {
        f.values[0]
    } else {
        multiple_integral(&f, w)?
    };
    let lhs_g = if g.order == 0 {
        g.values[0]
    } else {
        multiple_integral(&g, w)?
    };
    let lhs = lhs_f * lhs_g;
    let (p, q) = (f.order, g.order);
    let mut rhs = KahanSum::new();
    for r in 0..=p.min(q) {
        for s in 0..=(p.min(q) - r) {
            let coeff = factorial(r)
                * factorial(s)
                * binom(p, r)
                * binom(q, r)
                * binom(p - r, s)
                * binom(q - r, s);
            let kernel = contraction(&f, &g, r, s, grid)?;
            let value = if kernel.order == 0 {
                kernel.values[0]
            } else {
                off_diagonal(&kernel, &w.values, 0, &[])
            };
            rhs.add(coeff * value);
        }
    }
    Ok((lhs, rhs.value()))
}

/// D_z F as a chaos functional: kernels q f_q(z, .), with every entry that
/// still touches z zeroed so later sums exclude the differentiated atom.
pub fn malliavin_derivative(f: &ChaosFunctional, z: usize) -> Result<ChaosFunctional> {
    if z >= f.n {
        return Err(Error::UnknownAtom {
            index: z,
            atoms: f.n,
        });
    }
    if f.max_order() == 0 {
        return Ok(ChaosFunctional::constant(0.0));
    }
    let n = f.n;
    let mut kernels = Vec::with_capacity(f.max_order());
    for q in 1..=f.max_order() {
        let src = f.kernels[q].symmetrized();
        let order = q - 1;
        let mut values = vec![0.0; entries(n, order).expect("within stored budget")];
        let mut tuple = vec![0usize; order];
        let mut full = vec![0usize; q];
        full[0] = z;
        for (flat, slot) in values.iter_mut().enumerate() {
            decode(flat, n, &mut tuple);
            if tuple.contains(&z) {
                continue;
            }
            full[1..].copy_from_slice(&tuple);
            *slot = q as f64 * src.get(&full);
        }
        kernels.push(if order == 0 {
            Kernel::constant(values[0])
        } else {
            Kernel { order, n, values }
        });
    }
    ChaosFunctional::new(n, kernels)
}

/// (F(w with one extra jump at z) - F(w)) / jump size: the pathwise
/// difference-quotient derivative at a jump atom.
pub fn jump_quotient(
    f: &ChaosFunctional,
    grid: &AtomGrid,
    w: &NoiseRealization,
    z: usize,
) -> Result<f64> {
    let bumped = insert_jump(grid, w, z)?;
    Ok((f.evaluate(&bumped)? - f.evaluate(w)?) / grid.atoms[z].jump_size)
}

/// Number-operator action L F = sum -q I_q(f_q).
pub fn ou_generator(f: &ChaosFunctional) -> ChaosFunctional {
    f.order_map(|q| -(q as f64), false)
}

/// Pseudo-inverse L^-1 F = sum -(1/q) I_q(f_q), zero on constants; the
/// composition L L^-1 recovers F - E[F].
pub fn ou_generator_inverse(f: &ChaosFunctional) -> ChaosFunctional {
    f.order_map(|q| -1.0 / q as f64, false)
}

/// Semigroup action T_t F = sum e^(-q t) I_q(f_q).
pub fn ou_semigroup(f: &ChaosFunctional, t: f64) -> ChaosFunctional {
    f.order_map(|q| (-(q as f64) * t).exp(), true)
}

/// Adjoint integral of an atom-indexed field: order-q kernels of u(z)
/// become the symmetrized order-(q+1) kernels of the result.
pub fn skorohod(u: &[ChaosFunctional]) -> Result<ChaosFunctional> {
    let n = u.len();
    if n == 0 || n > MAX_ATOMS {
        return Err(Error::InvalidParameter(format!(
            "adjoint integral needs between 1 and {MAX_ATOMS} atom slots, got {n}"
        )));
    }
    let mut max_q = 0;
    for field in u {
        if field.n != 0 && field.n != n {
            return Err(Error::GridMismatch {
                expected: n,
                got: field.n,
            });
        }
        max_q = max_q.max(field.max_order());
    }
    if max_q + 1 > MAX_ORDER {
        return Err(Error::OrderTooLarge {
            order: max_q + 1,
            atoms: n,
            limit: MAX_ORDER,
        });
    }
    let mut kernels = vec![Kernel::constant(0.0)];
    for q in 0..=max_q {
        let order = q + 1;
        let mut values = vec![0.0; entries(n, order).expect("within stored budget")];
        let mut tuple = vec![0usize; order];
        for (flat, slot) in values.iter_mut().enumerate() {
            decode(flat, n, &mut tuple);
            let z = tuple[0];
            *slot = match u[z].kernel(q) {
                Some(k) if q == 0 => k.values[0],
                Some(k) => k.get(&tuple[1..]),
                None => 0.0,
            };
        }
        kernels.push(Kernel { order, n, values }.symmetrized());
    }
    ChaosFunctional::new(n, kernels)
}

/// Exact variance and derivative energies plus Monte-Carlo diagnostics of
/// the normal-approximation quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Var[F] = sum q! ||f_q||^2, exact.
    pub variance: f64,
    /// E||DF||^2 = sum q q! ||f_q||^2, exact.
    pub derivative_energy: f64,
    /// E||DL^-1 F||^2 = sum (q!/q) ||f_q||^2, exact.
    pub inverse_derivative_energy: f64,
    /// E<DF, -DL^-1 F> = Var[F], exact.
    pub pairing: f64,
    /// derivative_energy - variance >= 0, with equality only on chaos
    /// order <= 1.
    pub poincare_slack: f64,
    pub equality_case: bool,
    /// Monte-Carlo E|<DF, -DL^-1 F> - Var F|.
    pub pairing_gap_mean_abs: f64,
    /// Monte-Carlo E sum_z weight |x_z| (D_z F)^2 |D_z L^-1 F|.
    pub jump_term_mean: f64,
    pub replications: usize,
    pub seed: u64,
}

/// Per-atom derivative values of F on one realization, with the inverse
/// variant (coefficient 1 instead of q) alongside.
fn derivative_profile(
    f: &ChaosFunctional,
    w: &NoiseRealization,
    symmetrized: &[Kernel],
) -> (Vec<f64>, Vec<f64>) {
    let n = f.n;
    let mut direct = vec![0.0; n];
    let mut inverse = vec![0.0; n];
    for z in 0..n {
        let mut d = 0.0;
        let mut dinv = 0.0;
        for (q, k) in symmetrized.iter().enumerate() {
            if q == 0 {
                continue;
            }
            let partial = off_diagonal(k, &w.values, 1 << z, &[z]);
            d += q as f64 * partial;
            dinv += partial;
        }
        direct[z] = d;
        inverse[z] = dinv;
    }
    (direct, inverse)
}

/// The variance-energy report for a centered functional: the exact kernel
/// sums, the ordering checks they satisfy, and sampled diagnostics for the
/// quantities the normal-approximation bound is built from.
pub fn energy_report(
    f: &ChaosFunctional,
    grid: &AtomGrid,
    replications: usize,
    seed: u64,
) -> Result<EnergyReport> {
    if f.mean() != 0.0 {
        return Err(Error::NotCentered(f.mean()));
    }
    if f.n != grid.len() {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            got: f.n,
        });
    }
    if replications < 2 {
        return Err(Error::InvalidParameter(
            "diagnostics need at least two replications".into(),
        ));
    }
    let weights: Vec<f64> = grid.atoms.iter().map(|a| a.weight).collect();
    let symmetrized: Vec<Kernel> = f.kernels.iter().map(|k| k.symmetrized()).collect();
    let mut variance = 0.0;
    let mut derivative_energy = 0.0;
    let mut inverse_derivative_energy = 0.0;
    let mut equality_case = true;
    let mut factorial = 1.0;
    for (q, k) in symmetrized.iter().enumerate().skip(1) {
        factorial *= q as f64;
        let norm2 = od_inner(k, k, &weights);
        variance += factorial * norm2;
        derivative_energy += q as f64 * factorial * norm2;
        inverse_derivative_energy += factorial / q as f64 * norm2;
        if q >= 2 && norm2 > 0.0 {
            equality_case = false;
        }
    }

    let draws = sample_noise(grid, replications, seed)?;
    let stats: Vec<(f64, f64)> = draws
        .par_iter()
        .map(|w| {
            let (direct, inverse) = derivative_profile(f, w, &symmetrized);
            let mut pairing = KahanSum::new();
            let mut jump_term = KahanSum::new();
            for (z, atom) in grid.atoms.iter().enumerate() {
                pairing.add(atom.weight * direct[z] * inverse[z]);
                if atom.is_jump() {
                    jump_term.add(
                        atom.weight
                            * atom.jump_size.abs()
                            * direct[z]
                            * direct[z]
                            * inverse[z].abs(),
                    );
                }
            }
            ((pairing.value() - variance).abs(), jump_term.value())
        })
        .collect();
    let mut gap = KahanSum::new();
    let mut jump = KahanSum::new();
    for &(g, j) in &stats {
        gap.add(g);
        jump.add(j);
    }
    let scale = replications as f64;
    Ok(EnergyReport {
        variance,
        derivative_energy,
        inverse_derivative_energy,
        pairing: variance,
        poincare_slack: derivative_energy - variance,
        equality_case,
        pairing_gap_mean_abs: gap.value() / scale,
        jump_term_mean: jump.value() / scale,
        replications,
        seed,
    })
}
