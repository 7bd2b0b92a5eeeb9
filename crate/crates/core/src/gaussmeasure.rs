//! The Gaussian product measure `P = prod N_{a_i}` truncated to finitely many
//! coordinates: seeded Monte Carlo, tensor Gauss–Hermite quadrature, and the
//! partial integral `f -> f_n` over the coordinates beyond `n`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, EvalError, Result};
use crate::symfun::{Compiled, CylinderFn, Expr, Node, PointFn, Var, C64};

/// Maximum number of tensor Gauss–Hermite nodes.
pub const GH_BUDGET: usize = 2_000_000;
const CHUNK: usize = 8192;

/// The scales `a_i` of the coordinate Gaussians and the truncation dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    /// Explicit leading scales; indices beyond the list use `2^{-(i+1)}`.
    #[serde(default)]
    pub scales: Vec<f64>,
    pub trunc_dim: usize,
}

impl GaussianSpec {
    /// Default scales `a_i = 2^{-(i+1)}`.
    pub fn new(trunc_dim: usize) -> Self {
        GaussianSpec {
            scales: Vec::new(),
            trunc_dim,
        }
    }

    pub fn with_scales(scales: Vec<f64>, trunc_dim: usize) -> Result<Self> {
        if let Some(bad) = scales.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::Precondition(format!("scale {bad} is not positive")));
        }
        Ok(GaussianSpec { scales, trunc_dim })
    }

    /// `a_i` for `i >= 1`.
    pub fn a(&self, i: usize) -> f64 {
        assert!(i >= 1, "scale index must be >= 1");
        self.scales
            .get(i - 1)
            .copied()
            .unwrap_or_else(|| 0.5f64.powi(i as i32 + 1))
    }

    /// `sum_{i<=n} a_i` plus the closed-form geometric tail beyond the
    /// explicit list; must be `< 1`.
    pub fn scale_sum_bound(&self) -> f64 {
        let k = self.scales.len().max(self.trunc_dim);
        let head: f64 = (1..=k).map(|i| self.a(i)).sum();
        head + 0.5f64.powi(k as i32 + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trunc_dim == 0 {
            return Err(Error::Precondition("trunc_dim must be >= 1".into()));
        }
        if self.scale_sum_bound() >= 1.0 {
            return Err(Error::Precondition(format!(
                "sum of scales {} is not < 1",
                self.scale_sum_bound()
            )));
        }
        Ok(())
    }

    /// Product of the coordinate Gaussian densities (w.r.t. Lebesgue measure on
    /// `C^n`) as an expression in the first `n` coordinates.
    pub fn density(&self, n: usize) -> Expr {
        let mut acc = Expr::one();
        for i in 1..=n {
            let a2 = self.a(i).powi(2);
            let q = (Expr::x(i).powi(2) + Expr::y(i).powi(2)) * (-1.0 / (2.0 * a2));
            acc = acc * q.exp() * (1.0 / (2.0 * std::f64::consts::PI * a2));
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quadrature {
    MonteCarlo { samples: usize, seed: u64 },
    GaussHermite { nodes: usize },
}

impl Quadrature {
    pub fn is_deterministic(&self) -> bool {
        matches!(self, Quadrature::GaussHermite { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: C64,
    /// Sample standard deviation over `sqrt(samples)`; 0 for deterministic rules.
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

impl MCEstimate {
    pub fn exact(value: C64) -> Self {
        MCEstimate {
            mean: value,
            stderr: 0.0,
            samples: 0,
            seed: 0,
        }
    }
}

/// Two integrals of the same measure estimated at shared points, with the
/// standard error of their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedResidual {
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    /// `|lhs - rhs|`.
    pub residual: f64,
    /// Standard error of `lhs - rhs` (0 under deterministic quadrature).
    pub stderr: f64,
    pub deterministic: bool,
}

impl PairedResidual {
    pub fn from_triple(lhs: MCEstimate, rhs: MCEstimate, diff: MCEstimate, deterministic: bool) -> Self {
        PairedResidual {
            lhs,
            rhs,
            residual: diff.mean.norm(),
            stderr: diff.stderr,
            deterministic,
        }
    }

    /// `residual <= 3 stderr` under Monte Carlo, `residual <= det_tol` otherwise.
    pub fn passes(&self, det_tol: f64) -> bool {
        if self.deterministic {
            self.residual <= det_tol
        } else {
            self.residual <= 3.0 * self.stderr
        }
    }
}

/// Nodes and probability weights of the `m`-point Gauss rule for the standard
/// normal density, by Golub–Welsch on the probabilists' Hermite recurrence.
pub fn gauss_hermite_rule(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "need at least one node");
    let mut j = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let b = (k as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // polish nodes by Newton on the orthonormal Hermite polynomial and take
    // Christoffel weights, which is far more accurate than eigenvectors
    for pair in &mut pairs {
        let mut x = pair.0;
        for _ in 0..4 {
            let p = orthonormal_hermite(m, x);
            let step = p[m] / ((m as f64).sqrt() * p[m - 1]);
            if !step.is_finite() {
                break;
            }
            x -= step;
        }
        let p = orthonormal_hermite(m, x);
        *pair = (x, 1.0 / p[..m].iter().map(|v| v * v).sum::<f64>());
    }
    // symmetrize to remove eigen-solver asymmetry
    let n = pairs.len();
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let (x1, w1) = pairs[k];
        let (x2, w2) = pairs[n - 1 - k];
        nodes[k] = 0.5 * (x1 - x2);
        weights[k] = 0.5 * (w1 + w2);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (nodes, weights)
}

/// `p_0..=p_m` at `x`, orthonormal for the standard normal density.
fn orthonormal_hermite(m: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; m + 1];
    p[0] = 1.0;
    if m >= 1 {
        p[1] = x;
    }
    for k in 1..m {
        p[k + 1] = (x * p[k] - (k as f64).sqrt() * p[k - 1]) / ((k + 1) as f64).sqrt();
    }
    p
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn fill_sample(rng: &mut ChaCha8Rng, scales: &[f64], point: &mut [f64]) {
    for (k, v) in point.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        *v = scales[k / 2] * z;
    }
}

/// `N` points of `C^n` (flat real layout) drawn from `P_n`; deterministic per
/// `(seed, N, n)` independently of thread count.
pub fn sample(spec: &GaussianSpec, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = spec.trunc_dim;
    let scales: Vec<f64> = (1..=n).map(|i| spec.a(i)).collect();
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK.min(samples - c * CHUNK);
            let scales = scales.clone();
            (0..len).map(move |_| {
                let mut p = vec![0.0; 2 * n];
                fill_sample(&mut rng, &scales, &mut p);
                p
            })
        })
        .collect()
}

#[derive(Clone)]
struct Welford {
    count: usize,
    mean: Vec<C64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(width: usize) -> Self {
        Welford {
            count: 0,
            mean: vec![C64::new(0.0, 0.0); width],
            m2: vec![0.0; width],
        }
    }

    fn push(&mut self, x: &[C64]) {
        self.count += 1;
        let n = self.count as f64;
        for k in 0..x.len() {
            let d = x[k] - self.mean[k];
            self.mean[k] += d / n;
            let d2 = x[k] - self.mean[k];
            self.m2[k] += (d.conj() * d2).re;
        }
    }

    fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let d = other.mean[k] - self.mean[k];
            self.mean[k] += d * (nb / n);
            self.m2[k] += other.m2[k] + d.norm_sqr() * na * nb / n;
        }
        self.count += other.count;
    }
}

/// Integrate every output of `tape` against `P`, sharing one set of points.
///
/// Monte Carlo samples all `trunc_dim` coordinates; Gauss–Hermite uses the
/// tensor rule over the coordinates the tape actually reads.
pub fn integrate_tape(spec: &GaussianSpec, quad: &Quadrature, tape: &Compiled) -> Result<Vec<MCEstimate>> {
    let dim_used = tape.slots().div_ceil(2);
    if dim_used > spec.trunc_dim {
        return Err(Error::Precondition(format!(
            "integrand reads {dim_used} coordinates but trunc_dim is {}",
            spec.trunc_dim
        )));
    }
    let width = tape.n_outputs();
    match *quad {
        Quadrature::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::Precondition("Monte Carlo needs >= 2 samples".into()));
            }
            let n = spec.trunc_dim;
            let scales: Vec<f64> = (1..=n).map(|i| spec.a(i)).collect();
            let chunks = samples.div_ceil(CHUNK);
            let parts: Vec<Welford> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = chunk_rng(seed, c);
                    let len = CHUNK.min(samples - c * CHUNK);
                    let mut acc = Welford::new(width);
                    let mut p = vec![0.0; 2 * n];
                    let mut out = vec![C64::new(0.0, 0.0); width];
                    let mut ev = tape.evaluator();
                    for _ in 0..len {
                        fill_sample(&mut rng, &scales, &mut p);
                        ev.eval_into(&p, &mut out).map_err(|e| Error::eval(&p, e))?;
                        acc.push(&out);
                    }
                    Ok(acc)
                })
                .collect::<Result<_>>()?;
            let mut total = Welford::new(width);
            for p in &parts {
                total.merge(p);
            }
            let nf = total.count as f64;
            Ok((0..width)
                .map(|k| MCEstimate {
                    mean: total.mean[k],
                    stderr: (total.m2[k] / (nf - 1.0)).max(0.0).sqrt() / nf.sqrt(),
                    samples,
                    seed,
                })
                .collect())
        }
        Quadrature::GaussHermite { nodes } => {
            let axes = 2 * dim_used;
            let total = checked_pow(nodes, axes)
                .filter(|&t| t <= GH_BUDGET)
                .ok_or(Error::QuadratureBudget { nodes, axes })?;
            let (xs, ws) = gauss_hermite_rule(nodes);
            let scales: Vec<f64> = (1..=dim_used).map(|i| spec.a(i)).collect();
            let chunks = total.div_ceil(CHUNK);
            let parts: Vec<Vec<C64>> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut acc = vec![C64::new(0.0, 0.0); width];
                    let mut p = vec![0.0; 2 * dim_used];
                    let mut out = vec![C64::new(0.0, 0.0); width];
                    let mut ev = tape.evaluator();
                    for flat in c * CHUNK..((c + 1) * CHUNK).min(total) {
                        let mut rest = flat;
                        let mut w = 1.0;
                        for (k, v) in p.iter_mut().enumerate() {
                            let d = rest % nodes;
                            rest /= nodes;
                            *v = scales[k / 2] * xs[d];
                            w *= ws[d];
                        }
                        ev.eval_into(&p, &mut out).map_err(|e| Error::eval(&p, e))?;
                        for k in 0..width {
                            acc[k] += out[k] * w;
                        }
                    }
                    Ok(acc)
                })
                .collect::<Result<_>>()?;
            let mut sum = vec![C64::new(0.0, 0.0); width];
            for p in &parts {
                for k in 0..width {
                    sum[k] += p[k];
                }
            }
            Ok(sum.into_iter().map(MCEstimate::exact).collect())
        }
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Integrate several expressions at shared points.
pub fn integrate_many(spec: &GaussianSpec, quad: &Quadrature, exprs: &[Expr]) -> Result<Vec<MCEstimate>> {
    integrate_tape(spec, quad, &Compiled::new(exprs))
}

/// `∫ f dP`.
pub fn integrate(f: &CylinderFn, spec: &GaussianSpec, quad: &Quadrature) -> Result<MCEstimate> {
    Ok(integrate_many(spec, quad, std::slice::from_ref(&f.expr))?[0])
}

/// `(∫ a dP, ∫ b dP)` with the standard error of their difference.
pub fn paired(spec: &GaussianSpec, quad: &Quadrature, a: &Expr, b: &Expr) -> Result<PairedResidual> {
    let est = integrate_many(spec, quad, &[a.clone(), b.clone(), a - b])?;
    Ok(PairedResidual::from_triple(est[0], est[1], est[2], quad.is_deterministic()))
}

/// Gauss–Green: `∫ D_{x_m} f dP = ∫ (x_m / a_m^2) f dP`.
pub fn gauss_green_residual(f: &CylinderFn, m: usize, spec: &GaussianSpec, quad: &Quadrature) -> Result<PairedResidual> {
    gauss_green_residual_with_scale(f, m, spec, quad, spec.a(m))
}

/// Gauss–Green with the right-hand side built from an arbitrary scale `a_rhs`
/// in place of `a_m`; any `a_rhs != a_m` breaks the identity.
pub fn gauss_green_residual_with_scale(
    f: &CylinderFn,
    m: usize,
    spec: &GaussianSpec,
    quad: &Quadrature,
    a_rhs: f64,
) -> Result<PairedResidual> {
    if m == 0 || m > spec.trunc_dim {
        return Err(Error::Precondition(format!(
            "coordinate {m} outside 1..={}",
            spec.trunc_dim
        )));
    }
    let lhs = f.expr.d_dx(m);
    let rhs = Expr::x(m) * f.expr.clone() * (1.0 / (a_rhs * a_rhs));
    paired(spec, quad, &lhs, &rhs)
}

// ---------------------------------------------------------------------------
// Partial integration over the tail coordinates.

const MAX_MOMENT: u32 = 8;

/// Polynomial in the tail slots with tail-free coefficients.
type TailPoly = BTreeMap<Vec<u32>, Expr>;

fn poly_const(e: Expr, width: usize) -> TailPoly {
    let mut p = BTreeMap::new();
    if !e.is_zero() {
        p.insert(vec![0; width], e);
    }
    p
}

fn poly_add(mut a: TailPoly, b: TailPoly, sign: f64) -> TailPoly {
    for (k, v) in b {
        let v = if sign < 0.0 { -v } else { v };
        let e = match a.remove(&k) {
            Some(x) => x + v,
            None => v,
        };
        a.insert(k, e);
    }
    a
}

fn poly_mul(a: &TailPoly, b: &TailPoly) -> Option<TailPoly> {
    let mut out = TailPoly::new();
    for (ka, va) in a {
        for (kb, vb) in b {
            let k: Vec<u32> = ka.iter().zip(kb).map(|(x, y)| x + y).collect();
            if k.iter().any(|&d| d > MAX_MOMENT) {
                return None;
            }
            let term = va * vb;
            let e = match out.remove(&k) {
                Some(x) => x + term,
                None => term,
            };
            out.insert(k, e);
        }
    }
    Some(out)
}

struct TailDecomp {
    n: usize,
    width: usize,
}

impl TailDecomp {
    fn slot(&self, v: Var) -> Option<usize> {
        if v.index() > self.n {
            Some(v.slot() - 2 * self.n)
        } else {
            None
        }
    }

    fn run(&self, e: &Expr) -> Option<TailPoly> {
        if e.max_index() <= self.n {
            return Some(poly_const(e.clone(), self.width));
        }
        match e.node() {
            Node::X(i) | Node::Y(i) => {
                let v = if matches!(e.node(), Node::X(_)) { Var::X(*i) } else { Var::Y(*i) };
                let s = self.slot(v)?;
                let mut k = vec![0; self.width];
                k[s] = 1;
                Some(BTreeMap::from([(k, Expr::one())]))
            }
            Node::Add(a, b) => Some(poly_add(self.run(a)?, self.run(b)?, 1.0)),
            Node::Sub(a, b) => Some(poly_add(self.run(a)?, self.run(b)?, -1.0)),
            Node::Neg(a) => Some(poly_add(TailPoly::new(), self.run(a)?, -1.0)),
            Node::Mul(a, b) => poly_mul(&self.run(a)?, &self.run(b)?),
            Node::Div(a, b) if b.max_index() <= self.n => {
                let p = self.run(a)?;
                Some(p.into_iter().map(|(k, v)| (k, v / b)).collect())
            }
            Node::Pow(a, n) if *n >= 0 => {
                let base = self.run(a)?;
                let mut acc = poly_const(Expr::one(), self.width);
                for _ in 0..*n {
                    acc = poly_mul(&acc, &base)?;
                }
                Some(acc)
            }
            Node::Conj(a) => {
                let p = self.run(a)?;
                Some(p.into_iter().map(|(k, v)| (k, v.conj())).collect())
            }
            _ => None,
        }
    }
}

/// `E[x^k]` for `x ~ N(0, a^2)`: `(k-1)!! a^k` for even `k`, else 0.
pub fn gaussian_moment(k: u32, a: f64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut dfact = 1.0;
    let mut j = k as i64 - 1;
    while j > 1 {
        dfact *= j as f64;
        j -= 2;
    }
    dfact * a.powi(k as i32)
}

/// Inner rule used by quadrature-backed partial integrals.
#[derive(Debug, Clone)]
struct TailRule {
    /// Flat tail points (`2(m-n)` reals each) and their weights.
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TailRule {
    fn build(spec: &GaussianSpec, n: usize, m: usize, quad: &Quadrature) -> TailRule {
        let axes = 2 * (m - n);
        let gh_nodes = match *quad {
            Quadrature::GaussHermite { nodes } => nodes,
            Quadrature::MonteCarlo { .. } => 10,
        };
        if let Some(total) = checked_pow(gh_nodes, axes).filter(|&t| t <= 20_000) {
            let (xs, ws) = gauss_hermite_rule(gh_nodes);
            let mut points = Vec::with_capacity(total);
            let mut weights = Vec::with_capacity(total);
            for flat in 0..total {
                let mut rest = flat;
                let mut w = 1.0;
                let mut p = vec![0.0; axes];
                for (k, v) in p.iter_mut().enumerate() {
                    let d = rest % gh_nodes;
                    rest /= gh_nodes;
                    *v = spec.a(n + 1 + k / 2) * xs[d];
                    w *= ws[d];
                }
                points.push(p);
                weights.push(w);
            }
            return TailRule { points, weights };
        }
        let (samples, seed) = match *quad {
            Quadrature::MonteCarlo { samples, seed } => (samples.min(4096), seed),
            Quadrature::GaussHermite { .. } => (4096, 0),
        };
        let inner_seed = seed ^ 0x9E37_79B9_7F4A_7C15 ^ ((n as u64) << 32 | m as u64);
        let scales: Vec<f64> = (n + 1..=m).map(|i| spec.a(i)).collect();
        let mut rng = chunk_rng(inner_seed, 0);
        let points = (0..samples)
            .map(|_| {
                let mut p = vec![0.0; axes];
                fill_sample(&mut rng, &scales, &mut p);
                p
            })
            .collect();
        TailRule {
            points,
            weights: vec![1.0 / samples as f64; samples],
        }
    }
}

/// `f_n(z_n) = ∫ f(z_n, z^n) dP_n(z^n)` evaluated by an inner rule.
#[derive(Debug)]
pub struct ReducedFn {
    expr: Expr,
    tape: Compiled,
    n: usize,
    m: usize,
    rule: Arc<TailRule>,
    support: Option<f64>,
}

impl PointFn for ReducedFn {
    fn eval(&self, point: &[f64]) -> std::result::Result<C64, EvalError> {
        let mut full = vec![0.0; 2 * self.m];
        full[..2 * self.n].copy_from_slice(&point[..2 * self.n]);
        let mut ev = self.tape.evaluator();
        let mut out = [C64::new(0.0, 0.0)];
        let mut acc = C64::new(0.0, 0.0);
        for (p, w) in self.rule.points.iter().zip(&self.rule.weights) {
            full[2 * self.n..].copy_from_slice(p);
            ev.eval_into(&full, &mut out)?;
            acc += out[0] * *w;
        }
        Ok(acc)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn partial(&self, var: Var) -> Option<Arc<dyn PointFn>> {
        let d = self.expr.d(var);
        Some(Arc::new(ReducedFn {
            tape: d.compile(),
            expr: d,
            n: self.n,
            m: self.m,
            rule: self.rule.clone(),
            support: self.support,
        }))
    }

    fn support_radius(&self) -> Option<f64> {
        self.support
    }
}

/// The partial integral of `f` over every coordinate beyond `n`.
///
/// Exact (Gaussian moments) when the tail dependence is polynomial of degree
/// `<= 8` per coordinate; otherwise an inner tensor Gauss–Hermite rule when it
/// has at most 20 000 nodes, else 4096 Monte Carlo points with a seed derived
/// from the quadrature seed.
pub fn reduce(f: &CylinderFn, n: usize, spec: &GaussianSpec, quad: &Quadrature) -> Result<CylinderFn> {
    let m = f.expr.max_index();
    if m <= n {
        return Ok(f.clone());
    }
    let width = 2 * (m - n);
    let dec = TailDecomp { n, width };
    if let Some(poly) = dec.run(&f.expr) {
        let mut out = Expr::zero();
        for (k, coeff) in poly {
            let mut mom = 1.0;
            for (s, &d) in k.iter().enumerate() {
                mom *= gaussian_moment(d, spec.a(n + 1 + s / 2));
            }
            if mom != 0.0 {
                out = out + coeff * mom;
            }
        }
        return Ok(CylinderFn {
            dim: out.max_index(),
            expr: out,
            support_radius: f.support_radius,
        });
    }
    let rule = Arc::new(TailRule::build(spec, n, m, quad));
    let r = ReducedFn {
        tape: f.expr.compile(),
        expr: f.expr.clone(),
        n,
        m,
        rule,
        support: f.support_radius,
    };
    Ok(CylinderFn {
        expr: Expr::opaque(Arc::new(r)),
        dim: n,
        support_radius: f.support_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::symfun::parse;
    use rand::SeedableRng;

    fn gh(n: usize) -> Quadrature {
        Quadrature::GaussHermite { nodes: n }
    }

    #[test]
    fn default_scales() {
        let s = GaussianSpec::new(4);
        assert_eq!(s.a(1), 0.25);
        assert_eq!(s.a(3), 0.0625);
        assert!((s.scale_sum_bound() - 0.5).abs() < 1e-15);
        s.validate().unwrap();
        let bad = GaussianSpec::with_scales(vec![0.6, 0.5], 2).unwrap();
        assert!(bad.validate().is_err());
        assert!(GaussianSpec::with_scales(vec![-0.1], 2).is_err());
    }

    #[test]
    fn gh_rule_moments() {
        for m in [1usize, 2, 5, 10, 20, 40] {
            let (x, w) = gauss_hermite_rule(m);
            for k in 0..(2 * m as u32) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let scale: f64 = x.iter().zip(&w).map(|(x, w)| w * x.abs().powi(k as i32)).sum();
                let want = gaussian_moment(k, 1.0);
                assert!(
                    (got - want).abs() <= 1e-12 * scale.max(1.0),
                    "m={m} k={k}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn integrate_examples() {
        let spec = GaussianSpec::new(3);
        let q = gh(6);
        let x2 = CylinderFn::parse("x(1)^2").unwrap();
        assert!((integrate(&x2, &spec, &q).unwrap().mean.re - 0.0625).abs() < 1e-15);
        let xy = CylinderFn::parse("x(1)*x(2)").unwrap();
        assert!(integrate(&xy, &spec, &q).unwrap().mean.norm() < 1e-17);
        let z2 = CylinderFn::parse("z(1)*zb(1)").unwrap();
        assert!((integrate(&z2, &spec, &q).unwrap().mean.re - 0.125).abs() < 1e-15);
        let one = CylinderFn::new(Expr::one());
        assert_eq!(integrate(&one, &spec, &q).unwrap().mean.re, 1.0);
    }

    #[test]
    fn gh_polynomials_exact() {
        let spec = GaussianSpec::new(2);
        let f = CylinderFn::parse("x(1)^4*y(2)^2 + 3*x(2)^2*y(1)^2 - x(1)^3").unwrap();
        let got = integrate(&f, &spec, &gh(4)).unwrap().mean.re;
        let (a1, a2) = (0.25f64, 0.125f64);
        let want = 3.0 * a1.powi(4) * a2.powi(2) + 3.0 * a2.powi(2) * a1.powi(2);
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn gh_budget_enforced() {
        let spec = GaussianSpec::new(4);
        let f = CylinderFn::parse("x(4)").unwrap();
        assert!(matches!(
            integrate(&f, &spec, &gh(10)),
            Err(Error::QuadratureBudget { .. })
        ));
    }

    #[test]
    fn monte_carlo_moments() {
        let spec = GaussianSpec::new(2);
        let q = Quadrature::MonteCarlo {
            samples: 1_000_000,
            seed: 5,
        };
        let est = integrate_many(
            &spec,
            &q,
            &[parse("x(1)").unwrap(), parse("x(1)^2").unwrap(), Expr::one()],
        )
        .unwrap();
        assert!(est[0].mean.norm() <= 4.0 * 0.25 / 1000.0);
        assert!((est[1].mean.re - 0.0625).abs() <= 4.0 * est[1].stderr);
        assert!((est[2].mean.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_matches_integration_points() {
        let spec = GaussianSpec::new(2);
        let pts = sample(&spec, 20_000, 9);
        assert_eq!(pts.len(), 20_000);
        let mean: f64 = pts.iter().map(|p| p[0] * p[0]).sum::<f64>() / 20_000.0;
        let est = integrate(
            &CylinderFn::parse("x(1)^2").unwrap(),
            &spec,
            &Quadrature::MonteCarlo { samples: 20_000, seed: 9 },
        )
        .unwrap();
        assert!((est.mean.re - mean).abs() < 1e-15);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = GaussianSpec::new(3);
        let q = Quadrature::MonteCarlo { samples: 100_000, seed: 42 };
        let f = parse("exp(x(1)*y(2)) + sin(x(3))*z(2)").unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| integrate_many(&spec, &q, std::slice::from_ref(&f)).unwrap()[0])
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mean.re.to_bits(), b.mean.re.to_bits());
        assert_eq!(a.mean.im.to_bits(), b.mean.im.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn gauss_green_examples() {
        let spec = GaussianSpec::new(2);
        let q = Quadrature::MonteCarlo { samples: 200_000, seed: 1 };
        let x1 = CylinderFn::parse("x(1)").unwrap();
        let r = gauss_green_residual(&x1, 1, &spec, &q).unwrap();
        assert!((r.lhs.mean.re - 1.0).abs() < 1e-15);
        assert!(r.passes(0.0));
        let bb = CylinderFn::parse("bump(4*x(1))*bump(4*y(1))").unwrap();
        assert!(gauss_green_residual(&bb, 1, &spec, &q).unwrap().passes(0.0));
        let c = CylinderFn::new(Expr::real(2.0));
        let r = gauss_green_residual(&c, 2, &spec, &q).unwrap();
        assert_eq!(r.lhs.mean.re, 0.0);
        assert!(r.passes(0.0));
        let det = gauss_green_residual(&x1, 1, &spec, &gh(4)).unwrap();
        assert!(det.residual < 1e-14);
    }

    #[test]
    fn gauss_green_perturbed_scale_fails() {
        let spec = GaussianSpec::new(1);
        let f = CylinderFn::parse("x(1)").unwrap();
        let r = gauss_green_residual_with_scale(&f, 1, &spec, &gh(4), 0.3).unwrap();
        assert!(!r.passes(1e-8));
    }

    #[test]
    fn reduce_closed_forms() {
        let spec = GaussianSpec::new(3);
        let q = gh(8);
        let f = CylinderFn::parse("x(1)^2 + y(1)").unwrap();
        let r = reduce(&f, 1, &spec, &q).unwrap();
        assert!(Arc::ptr_eq(&r.expr.0, &f.expr.0));
        let odd = CylinderFn::parse("x(1)*x(2)").unwrap();
        let r = reduce(&odd, 1, &spec, &q).unwrap();
        assert!(r.expr.is_zero());
        let sq = CylinderFn::parse("x(2)^2").unwrap();
        let r = reduce(&sq, 1, &spec, &q).unwrap();
        assert_eq!(r.expr.as_const().unwrap().re, 0.125f64.powi(2));
        let mixed = CylinderFn::parse("exp(x(1))*(z(2)*zb(2))^2").unwrap();
        let r = reduce(&mixed, 1, &spec, &q).unwrap();
        // E|z|^4 = 8 a^4 for a complex Gaussian with per-axis scale a
        let want = 0.3f64.exp() * 8.0 * 0.125f64.powi(4);
        assert!((r.expr.eval(&[0.3, 0.0]).unwrap().re - want).abs() < 1e-15);
    }

    #[test]
    fn reduce_quadrature_backed() {
        let spec = GaussianSpec::new(2);
        let f = CylinderFn::parse("exp(x(1) + x(2))").unwrap();
        let r = reduce(&f, 1, &spec, &gh(12)).unwrap();
        // E exp(x_2) = exp(a_2^2/2)
        let want = 0.2f64.exp() * (0.125f64.powi(2) / 2.0).exp();
        assert!((r.expr.eval(&[0.2, 0.0]).unwrap().re - want).abs() < 1e-13);
        let d = r.expr.d_dx(1);
        assert!((d.eval(&[0.2, 0.0]).unwrap().re - want).abs() < 1e-13);
        assert!(r.expr.d_dx(2).is_zero());
    }

    #[test]
    fn contraction_on_random_functions() {
        let spec = GaussianSpec::new(3);
        let q = gh(5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let f = CylinderFn::new(fixtures::random_smooth(&mut rng, 3, 3));
            let nf = integrate(&f.map(|e| e.abs_sq()), &spec, &q).unwrap().mean.re;
            for n in 1..3 {
                let r = reduce(&f, n, &spec, &q).unwrap();
                let nr = integrate(&r.map(|e| e.abs_sq()), &spec, &q).unwrap().mean.re;
                assert!(nr <= nf * (1.0 + 1e-9) + 1e-12, "n={n}: {nr} > {nf}");
            }
        }
    }
}
