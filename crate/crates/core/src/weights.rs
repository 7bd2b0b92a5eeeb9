//! Cut-offs `X_k = h_k(η)`, the majorant `ψ`, convex increasing majorants,
//! the `C^2` majorant `G`, weight triples `(φ-2ψ, φ-ψ, φ)`, and the
//! plurisubharmonicity condition on `φ`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::forms::Form;
use crate::gaussmeasure::{sample, GaussianSpec};
use crate::symfun::realfn::{germ, smooth_step};
use crate::symfun::{Compiled, CylinderFn, Expr, RealFn, C64};

/// Over-estimation factor applied to sampled suprema.
pub const SUP_SAFETY: f64 = 1.5;

// ---------------------------------------------------------------------------
// Cut-offs

/// `h_k(t)`: 1 for `t < k`, `(t-k-1)^2 (2t+1-2k)` on `[k, k+1]`, 0 for `t > k+1`.
#[derive(Debug, Clone, Copy)]
pub struct CubicCutoff {
    pub k: f64,
}

impl RealFn for CubicCutoff {
    fn eval(&self, order: usize, t: f64) -> f64 {
        let k = self.k;
        if t < k {
            return if order == 0 { 1.0 } else { 0.0 };
        }
        if t > k + 1.0 {
            return 0.0;
        }
        let u = t - k;
        match order {
            0 => (u - 1.0).powi(2) * (2.0 * u + 1.0),
            1 => 6.0 * (u - 1.0) * u,
            2 => 6.0 * (2.0 * u - 1.0),
            3 => 12.0,
            _ => 0.0,
        }
    }

    fn name(&self) -> &str {
        "h_k"
    }
}

/// The cut-off `X_k = h_k(η)`; only `C^1`, so derivatives past the first
/// jump at `η = k, k+1`.
#[derive(Clone)]
pub struct CutoffFamily {
    pub k: usize,
    pub h: Arc<CubicCutoff>,
}

impl CutoffFamily {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Precondition("cut-off index k must be >= 1".into()));
        }
        Ok(CutoffFamily {
            k,
            h: Arc::new(CubicCutoff { k: k as f64 }),
        })
    }

    pub fn apply(&self, eta: &Expr) -> Expr {
        eta.apply(self.h.clone(), 0)
    }
}

/// `f(t - shift)`.
pub struct Shifted {
    inner: Arc<dyn RealFn>,
    shift: f64,
    name: String,
}

impl RealFn for Shifted {
    fn eval(&self, order: usize, t: f64) -> f64 {
        self.inner.eval(order, t - self.shift)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// `h_ρ(x) = h(x - ρ)` for the smooth germ `h`: 1 for `x <= ρ`, 0 for `x >= ρ+1`.
pub fn shifted_germ(rho: f64) -> Result<Arc<dyn RealFn>> {
    if !(rho > 0.0) {
        return Err(Error::Precondition(format!("ρ = {rho} must be positive")));
    }
    Ok(Arc::new(Shifted {
        inner: germ(),
        shift: rho,
        name: format!("germ(x-{rho})"),
    }))
}

// ---------------------------------------------------------------------------
// Smooth staircases

/// `base + Σ height_j S((t - start_j) / width_j)` for the smooth step `S`;
/// nondecreasing when all heights are nonnegative.
pub struct Staircase {
    base: f64,
    jumps: Vec<(f64, f64, f64)>,
    step: Arc<dyn RealFn>,
}

impl Staircase {
    /// Through the nondecreasing `levels = [c_1, c_2, ...]`: equal to `c_1`
    /// for `t <= 0` and at least `c_{j+1}` for `t >= j`.
    pub fn through_levels(levels: &[f64]) -> Self {
        let base = levels.first().copied().unwrap_or(0.0);
        let jumps = levels
            .windows(2)
            .enumerate()
            .map(|(j, w)| (j as f64, 1.0, (w[1] - w[0]).max(0.0)))
            .filter(|j| j.2 > 0.0)
            .collect();
        Staircase {
            base,
            jumps,
            step: smooth_step(),
        }
    }

    pub fn limit(&self) -> f64 {
        self.base + self.jumps.iter().map(|j| j.2).sum::<f64>()
    }
}

impl RealFn for Staircase {
    fn eval(&self, order: usize, t: f64) -> f64 {
        let mut acc = if order == 0 { self.base } else { 0.0 };
        for &(start, width, height) in &self.jumps {
            acc += height * self.step.eval(order, (t - start) / width) / width.powi(order as i32);
        }
        acc
    }

    fn name(&self) -> &str {
        "staircase"
    }
}

fn running_max(v: &mut [f64]) {
    let mut m = f64::NEG_INFINITY;
    for x in v.iter_mut() {
        m = m.max(*x);
        *x = m;
    }
}

/// Sampled `(η, value)` pairs over interior points of `domain`.
fn sampled_pairs(domain: &Domain, n: usize, value: &Expr, samples: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let eta = domain.eta(n).expr;
    let tape = Compiled::new(&[eta, value.clone()]);
    let mut out = Vec::with_capacity(samples);
    for p in domain.sample_interior(n, samples, seed, 1.0) {
        let v = tape.eval(&p).map_err(|e| Error::eval(&p, e))?;
        if v[0].re.is_finite() && v[1].re.is_finite() {
            out.push((v[0].re, v[1].re));
        }
    }
    if out.is_empty() {
        return Err(Error::Resolution(format!("no interior samples of {domain:?}")));
    }
    Ok(out)
}

/// `sup_{V_j} value` for `j = 1..=levels` (0 where `V_j` has no sample),
/// made nondecreasing.
fn sublevel_sups(pairs: &[(f64, f64)], levels: usize) -> Vec<f64> {
    let mut sups: Vec<f64> = (1..=levels)
        .map(|j| {
            pairs
                .iter()
                .filter(|(e, _)| *e <= j as f64)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max)
        })
        .collect();
    running_max(&mut sups);
    sups
}

// ---------------------------------------------------------------------------
// ψ

/// `ln(1 + (9/4) Σ_{i<=n} |∂̄_i η|^2)`, the quantity `ψ` must dominate.
pub fn psi_target(domain: &Domain, n: usize) -> Expr {
    let eta = domain.eta(n).expr;
    let sum: Expr = (1..=n).map(|i| eta.delbar(i).abs_sq()).sum();
    (sum * 2.25 + 1.0).ln()
}

#[derive(Clone)]
pub struct PsiMajorant {
    pub psi: CylinderFn,
    /// `c_1, ..., c_{J+1}` with `c_j = 1.5 sup_{V_j} target`.
    pub levels: Vec<f64>,
    pub staircase: Arc<Staircase>,
    pub j_max: usize,
    pub n: usize,
}

/// `ψ = H(η)` for a smooth nondecreasing staircase `H` with
/// `H >= 1.5 sup_{V_{j+1}} target` on `η > j`, sup estimated from
/// `samples` interior points.
pub fn psi_majorant(domain: &Domain, n: usize, j_max: usize, samples: usize, seed: u64) -> Result<PsiMajorant> {
    let pairs = sampled_pairs(domain, n, &psi_target(domain, n), samples, seed)?;
    let levels: Vec<f64> = sublevel_sups(&pairs, j_max + 1)
        .into_iter()
        .map(|s| SUP_SAFETY * s)
        .collect();
    let staircase = Arc::new(Staircase::through_levels(&levels));
    let psi = domain.eta(n).expr.apply(staircase.clone(), 0);
    Ok(PsiMajorant {
        psi: CylinderFn::new(psi),
        levels,
        staircase,
        j_max,
        n,
    })
}

/// Min of `ψ - target` over fresh samples in `V_{J}` (nonnegative when `ψ`
/// dominates), with the number of points audited.
pub fn psi_domination_margin(
    maj: &PsiMajorant,
    domain: &Domain,
    samples: usize,
    seed: u64,
) -> Result<(f64, usize)> {
    let diff = &maj.psi.expr - &psi_target(domain, maj.n);
    let pairs = sampled_pairs(domain, maj.n, &diff, samples, seed)?;
    let inside: Vec<f64> = pairs
        .iter()
        .filter(|(e, _)| *e <= maj.j_max as f64)
        .map(|(_, v)| *v)
        .collect();
    Ok((inside.iter().copied().fold(f64::INFINITY, f64::min), inside.len()))
}

// ---------------------------------------------------------------------------
// Convex increasing majorant

/// `g(x) = Σ_n p_n x^n` with `p_n = a_0 a_1 ... a_n`, built from `g0` so
/// that `g'' >= g' >= g >= g0` on `[0, ∞)`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexMajorant {
    /// `N_1, N_2, ...` (index `k - 1`).
    pub n_k: Vec<usize>,
    /// `a_0, ..., a_{order+2}`.
    pub a: Vec<f64>,
    ln_p: Vec<f64>,
    pub order: usize,
    pub x_max: f64,
    /// Relative tail bound of `g, g', g''` at `x_max`.
    pub tail_bound: f64,
}

const TAIL_TOL: f64 = 1e-9;
const MAX_ORDER: usize = 200_000;

struct Coefficients<'a> {
    g0: &'a dyn Fn(f64) -> f64,
    n_k: Vec<usize>,
    a: Vec<f64>,
}

impl Coefficients<'_> {
    fn g0(&self, x: f64) -> f64 {
        (self.g0)(x).max(1.0)
    }

    /// Extend `N_k` and `a_l` so that `a` has at least `len` entries.
    fn extend(&mut self, len: usize) {
        if self.a.is_empty() {
            self.a.push(self.g0(2.0) * std::f64::consts::E);
            self.n_k.push(1);
        }
        while self.a.len() < len {
            let k = self.n_k.len();
            // N_{k+1} = floor(max{ln g0(k+2) / ln((k+1)/k), N_k}) + 1
            let kk = (k + 1) as f64;
            let bound = self.g0(kk + 1.0).ln() / (kk / (kk - 1.0)).ln();
            let prev = self.n_k[k - 1];
            let next = (bound.max(prev as f64)).floor() as usize + 1;
            self.n_k.push(next);
            let factor = self.g0(k as f64 + 1.0).powf(1.0 / prev as f64) / k as f64;
            for l in prev..next {
                debug_assert_eq!(l, self.a.len());
                self.a.push(factor * (1.0 / (l as f64).sqrt()).exp());
            }
        }
    }
}

fn falling(n: usize, d: usize) -> f64 {
    (0..d).map(|j| (n - j) as f64).product()
}

impl ConvexMajorant {
    /// Build the majorant of `g0` (treated as `max(g0, 1)`) certified on
    /// `[0, x_max]`. With `order = None` the truncation order is the
    /// smallest one meeting the tail tolerance; an explicit order that does
    /// not meet it is a truncation error.
    pub fn build(g0: &dyn Fn(f64) -> f64, x_max: f64, order: Option<usize>) -> Result<Self> {
        if !(x_max >= 0.0) || !x_max.is_finite() {
            return Err(Error::Precondition(format!("x_max = {x_max}")));
        }
        let mut c = Coefficients {
            g0,
            n_k: Vec::new(),
            a: Vec::new(),
        };
        let x = x_max.max(1.0);
        let mut ln_p: Vec<f64> = Vec::new();
        let mut n = 0usize;
        loop {
            c.extend(n + 3);
            while ln_p.len() < n + 3 {
                let l = ln_p.len();
                let prev = ln_p.last().copied().unwrap_or(0.0);
                ln_p.push(prev + c.a[l].ln());
            }
            let done = match order {
                Some(o) => n >= o,
                None => n >= 2 && tail_bound(&ln_p, &c.a, n, x) <= TAIL_TOL,
            };
            if done {
                break;
            }
            if n >= MAX_ORDER {
                return Err(Error::Truncation(format!(
                    "series needs more than {MAX_ORDER} terms on [0, {x_max}]"
                )));
            }
            n += 1;
        }
        let tail = tail_bound(&ln_p, &c.a, n, x);
        if tail > TAIL_TOL {
            return Err(Error::Truncation(format!(
                "order {n} leaves relative tail {tail:.3e} at x = {x_max}"
            )));
        }
        ln_p.truncate(n + 1);
        Ok(ConvexMajorant {
            n_k: c.n_k,
            a: c.a,
            ln_p,
            order: n,
            x_max,
            tail_bound: tail,
        })
    }

    pub fn p(&self, n: usize) -> f64 {
        self.ln_p[n].exp()
    }

    fn series(ln_p: &[f64], d: usize, x: f64) -> f64 {
        if ln_p.len() <= d {
            return 0.0;
        }
        if x == 0.0 {
            return falling(d, d) * ln_p[d].exp();
        }
        let lx = x.abs().ln();
        let mut acc = 0.0;
        for (n, &lp) in ln_p.iter().enumerate().skip(d) {
            let sign = if x < 0.0 && (n - d) % 2 == 1 { -1.0 } else { 1.0 };
            acc += sign * falling(n, d) * (lp + (n - d) as f64 * lx).exp();
        }
        acc
    }

    /// See [`majorant_audit`].
    pub fn audit(&self, g0: &dyn Fn(f64) -> f64, grid: &[f64]) -> f64 {
        majorant_audit(self, g0, grid)
    }
}

/// Relative bound on the tails past `n` of `g^{(d)}(x)`, `d = 0, 1, 2`.
fn tail_bound(ln_p: &[f64], a: &[f64], n: usize, x: f64) -> f64 {
    let lx = x.ln();
    let mut worst = 0.0f64;
    for d in 0..=2usize {
        if n + 1 < d {
            continue;
        }
        // consecutive term ratios past n are at most ((n+2)/(n+1))^d a_{n+2} x
        let rho = ((n + 2) as f64 / (n + 1) as f64).powi(d as i32) * a[n + 2] * x;
        if rho >= 1.0 {
            return f64::INFINITY;
        }
        let first = falling(n + 1, d) * (ln_p[n + 1] + (n + 1 - d) as f64 * lx).exp();
        let total = ConvexMajorant::series(&ln_p[..=n], d, x).abs().max(1.0);
        worst = worst.max(first / (1.0 - rho) / total);
    }
    worst
}

impl RealFn for ConvexMajorant {
    fn eval(&self, order: usize, t: f64) -> f64 {
        ConvexMajorant::series(&self.ln_p, order, t)
    }

    fn name(&self) -> &str {
        "convex_majorant"
    }
}

// ---------------------------------------------------------------------------
// C^2 majorant vanishing near the origin

/// `G = ∫_{-∞}^x h` with `h = d_1 + Σ (d_{j+1} - d_j) φ_j`, so that `G = 0`
/// on `(-∞, x1]`, `G'' >= 0`, and `G, G' >= g` on `[0, x_max]`.
#[derive(Debug, Clone, Serialize)]
pub struct CalculusG {
    /// Knots `r_0 = 0, r_1 = x1, r_2 = (x1+x2)/2, r_3 = x2, ...`.
    pub knots: Vec<f64>,
    /// `λ_j = sup_{[0, r_j]} g`, index `j`.
    pub lambda: Vec<f64>,
    /// `d_j = sup_{[0, r_j]} max{Φ', g}`, index `j`.
    pub d: Vec<f64>,
}

fn step_max_slope() -> f64 {
    static M: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *M.get_or_init(|| {
        let s = smooth_step();
        (1..100_000)
            .map(|k| s.eval(1, k as f64 / 100_000.0))
            .fold(0.0, f64::max)
    })
}

/// `∫_0^u S` for the smooth step, by adaptive Simpson.
fn step_integral(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let s = smooth_step();
    let f = |t: f64| s.eval(0, t);
    if u >= 1.0 {
        static FULL: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
        let full = *FULL.get_or_init(|| adaptive_simpson(&f, 0.0, 1.0, 1e-14, 40));
        return full + (u - 1.0);
    }
    adaptive_simpson(&f, 0.0, u, 1e-14, 40)
}

pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let l = simpson(f, a, m);
        let r = simpson(f, m, b);
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            return l + r + (l + r - whole) / 15.0;
        }
        rec(f, a, m, l, tol / 2.0, depth - 1) + rec(f, m, b, r, tol / 2.0, depth - 1)
    }
    rec(f, a, b, simpson(f, a, b), tol, depth)
}

impl CalculusG {
    /// `g` must be nondecreasing and vanish on `[0, x2]`; knots past `x2`
    /// are spaced `(x2 - x1)/2` apart until they pass `x_max`.
    pub fn build(g: &dyn Fn(f64) -> f64, x1: f64, x2: f64, x_max: f64) -> Result<Self> {
        if !(0.0 < x1 && x1 < x2) {
            return Err(Error::Precondition(format!("need 0 < x1 < x2, got {x1}, {x2}")));
        }
        let spacing = 0.5 * (x2 - x1);
        let mut knots = vec![0.0, x1, 0.5 * (x1 + x2), x2];
        while *knots.last().unwrap() < x_max + 2.0 * spacing {
            let next = knots.last().unwrap() + spacing;
            knots.push(next);
        }
        let lambda: Vec<f64> = knots.iter().map(|&r| if r <= x2 { 0.0 } else { g(r) }).collect();
        let slope = step_max_slope() * 1.01;
        // Φ' on [r_{k-1}, r_k] peaks at (λ_{k+1} - λ_k) S'_max / (r_k - r_{k-1})
        let mut d = vec![0.0; knots.len()];
        let mut running = 0.0f64;
        for j in 1..knots.len() {
            if j + 1 < lambda.len() {
                let w = knots[j] - knots[j - 1];
                running = running.max((lambda[j + 1] - lambda[j]) * slope / w);
            }
            running = running.max(lambda[j]);
            d[j] = if knots[j] <= 0.5 * (x1 + x2) { 0.0 } else { running };
        }
        Ok(CalculusG { knots, lambda, d })
    }

    fn phi_j(&self, j: usize, order: usize, x: f64) -> f64 {
        let (a, b) = (self.knots[j - 1], self.knots[j]);
        let w = b - a;
        smooth_step().eval(order, (x - a) / w) / w.powi(order as i32)
    }

    /// `Φ = Σ_{j>=1} (λ_{j+1} - λ_j) φ_j`.
    pub fn big_phi(&self, order: usize, x: f64) -> f64 {
        (1..self.knots.len() - 1)
            .map(|j| (self.lambda[j + 1] - self.lambda[j]) * self.phi_j(j, order, x))
            .sum()
    }

    /// `h = G'`.
    pub fn h(&self, order: usize, x: f64) -> f64 {
        (1..self.knots.len() - 1)
            .map(|j| (self.d[j + 1] - self.d[j]) * self.phi_j(j, order, x))
            .sum()
    }
}

impl RealFn for CalculusG {
    fn eval(&self, order: usize, x: f64) -> f64 {
        if order >= 1 {
            return self.h(order - 1, x);
        }
        (1..self.knots.len() - 1)
            .filter(|&j| self.d[j + 1] != self.d[j])
            .map(|j| {
                let (a, b) = (self.knots[j - 1], self.knots[j]);
                let w = b - a;
                (self.d[j + 1] - self.d[j]) * w * step_integral((x - a) / w)
            })
            .sum()
    }

    fn name(&self) -> &str {
        "calculus_G"
    }
}

// ---------------------------------------------------------------------------
// Weights

#[derive(Clone, Debug)]
pub struct WeightTriple {
    pub w1: CylinderFn,
    pub w2: CylinderFn,
    pub w3: CylinderFn,
    pub phi: CylinderFn,
    pub psi: CylinderFn,
}

impl WeightTriple {
    /// `(φ - 2ψ, φ - ψ, φ)`.
    pub fn new(phi: CylinderFn, psi: CylinderFn) -> Self {
        let p = phi.expr.clone();
        let s = psi.expr.clone();
        WeightTriple {
            w1: CylinderFn::new(&p - &(s.clone() * 2.0)),
            w2: CylinderFn::new(&p - &s),
            w3: phi.clone(),
            phi,
            psi,
        }
    }

    /// Max over points of `|w3 - w2 - ψ|`, `|w2 - w1 - ψ|`, `|w3 - φ|`.
    pub fn identity_residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        let tape = Compiled::new(&[
            self.w1.expr.clone(),
            self.w2.expr.clone(),
            self.w3.expr.clone(),
            self.phi.expr.clone(),
            self.psi.expr.clone(),
        ]);
        let mut worst = 0.0f64;
        for p in points {
            let v = tape.eval(p).map_err(|e| Error::eval(p, e))?;
            worst = worst
                .max((v[2] - v[1] - v[4]).norm())
                .max((v[1] - v[0] - v[4]).norm())
                .max((v[2] - v[3]).norm());
        }
        Ok(worst)
    }
}

/// `φ = g(η)` on the first `n` coordinates.
pub fn phi_from_eta(domain: &Domain, n: usize, g: Arc<dyn RealFn>) -> CylinderFn {
    CylinderFn::new(domain.eta(n).expr.apply(g, 0))
}

#[derive(Debug, Clone, Serialize)]
pub struct Cond4Report {
    /// `min over points of (λ_min(Levi φ) - (2 Σ |∂_i ψ|^2 + 2 e^ψ - 1/2))`.
    pub margin: f64,
    pub worst_point: Vec<f64>,
    pub points: usize,
    /// Largest bound `2 Σ |∂_i ψ|^2 + 2 e^ψ - 1/2` seen.
    pub max_bound: f64,
}

impl Cond4Report {
    pub fn holds(&self, tol: f64) -> bool {
        self.margin >= -tol
    }
}

/// The Levi form of `φ` against `(2 Σ_{i<=n} |∂_i ψ|^2 + 2 e^ψ - 1/2) I` at
/// each point.
pub fn check_cond4(
    phi: &Expr,
    psi: &Expr,
    domain: &Domain,
    n: usize,
    points: &[Vec<f64>],
) -> Result<Cond4Report> {
    let mut exprs = Vec::with_capacity(n * n + 1);
    for i in 1..=n {
        let di = phi.del(i);
        for j in 1..=n {
            exprs.push(di.delbar(j));
        }
    }
    let grad: Expr = (1..=n).map(|i| psi.del(i).abs_sq()).sum();
    exprs.push(grad * 2.0 + psi.exp() * 2.0 - 0.5);
    let tape = Compiled::new(&exprs);
    let mut margin = f64::INFINITY;
    let mut worst_point = Vec::new();
    let mut max_bound = f64::NEG_INFINITY;
    for p in points {
        if !domain.contains(p) {
            return Err(Error::DomainBoundary(p.clone()));
        }
        let mut q = p.clone();
        if q.len() < 2 * n {
            q.resize(2 * n, 0.0);
        }
        let v = tape.eval(&q).map_err(|e| Error::eval(&q, e))?;
        let h = DMatrix::from_row_slice(n, n, &v[..n * n]);
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let lmin = SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let bound = v[n * n].re;
        max_bound = max_bound.max(bound);
        let m = lmin - bound;
        if !m.is_finite() {
            return Err(Error::eval(&q, crate::error::EvalError::NonFinite));
        }
        if m < margin {
            margin = m;
            worst_point = p.clone();
        }
    }
    Ok(Cond4Report {
        margin,
        worst_point,
        points: points.len(),
        max_bound,
    })
}

// ---------------------------------------------------------------------------
// Weight adapted to a target form

#[derive(Debug, Clone)]
pub struct TargetWeightOptions {
    pub n: usize,
    pub j_max: usize,
    /// Interior points used for every sampled supremum.
    pub samples: usize,
    /// Points of `P` used for the annulus masses.
    pub measure_samples: usize,
    pub seed: u64,
    pub majorant: MajorantKind,
}

/// Which increasing convex `g >= g0` the target weight uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajorantKind {
    /// The real-analytic series of [`ConvexMajorant`]; valid for any `g0`,
    /// but its coefficients grow like `g0(2)^n`.
    #[default]
    Series,
    /// `C e^x` with `C = sup g0(x) e^{-x}`; valid because the recipe's `g0`
    /// is constant past `J + 1`.
    Exponential,
}

/// `g(x) = c e^x`, so `g'' = g' = g`.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentialMajorant {
    pub c: f64,
}

impl ExponentialMajorant {
    /// Smallest `c` with `c e^x >= g0(x)` on `[0, ∞)` for a staircase equal
    /// to `levels[k]` on `(k-1, k]` (`levels[0]` at 0) and to the last level beyond.
    pub fn for_staircase(levels: &[f64]) -> Self {
        let c = levels
            .iter()
            .enumerate()
            .map(|(k, l)| l.max(1.0) * (-(k.saturating_sub(1) as f64)).exp())
            .fold(0.0, f64::max);
        ExponentialMajorant { c }
    }
}

impl RealFn for ExponentialMajorant {
    fn eval(&self, _order: usize, t: f64) -> f64 {
        self.c * t.exp()
    }

    fn name(&self) -> &str {
        "exp_majorant"
    }
}

/// Max over the grid of `g0 - g`, `g - g'` and `g' - g''`, each relative to
/// `max(1, larger side)`; all are `<= 1e-9` when the inequalities hold.
pub fn majorant_audit(g: &dyn RealFn, g0: &dyn Fn(f64) -> f64, grid: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &x in grid {
        let (v, d1, d2) = (g.eval(0, x), g.eval(1, x), g.eval(2, x));
        let base = g0(x);
        for (lo, hi) in [(v, base), (d1, v), (d2, d1)] {
            worst = worst.max((hi - lo) / lo.abs().max(hi.abs()).max(1.0));
        }
    }
    worst
}

impl Default for TargetWeightOptions {
    fn default() -> Self {
        TargetWeightOptions {
            n: 2,
            j_max: 3,
            samples: 10_000,
            measure_samples: 20_000,
            seed: 0,
            majorant: MajorantKind::Series,
        }
    }
}

pub struct TargetWeight {
    /// The domain with normalized exhaustion `η >= 0`, Levi form `>= I`.
    pub domain: Domain,
    pub psi: PsiMajorant,
    /// `m_j = Σ' c ∫_{V_{j+1} \ V_j} |f|^2 dP`, `j = 1..=J`.
    pub masses: Vec<f64>,
    /// `Σ' c ∫_{V_1} |f|^2 dP`.
    pub mass_v1: f64,
    /// `b_j = 2^{-j} / (1 + m_j)`.
    pub b: Vec<f64>,
    /// `g0` at `x = 0, 1, ..., J+1` (constant past `J+1`).
    pub g0_levels: Vec<f64>,
    pub g: Arc<dyn RealFn>,
    /// `g` at the smallest sampled `η`, subtracted from `g(η)` so that `φ`
    /// starts near 0; shifting `φ` leaves its Levi form unchanged.
    pub offset: f64,
    pub weights: WeightTriple,
}

impl TargetWeight {
    pub fn g0(&self, x: f64) -> f64 {
        let idx = if x <= 0.0 { 0 } else { (x.ceil() as usize).min(self.g0_levels.len() - 1) };
        self.g0_levels[idx]
    }
}

/// Construct `φ = g(η)` adapted to `f` on a domain: masses of `f` on the
/// annuli `V_{j+1} \ V_j`, `b_j`, the staircase `h`, `g0 = 1 + h + 1.5 sup_{V_x}(2|∂ψ|^2 + 2e^ψ)`,
/// then the convex majorant `g` of `g0`.
pub fn weight_for_target(
    f: &Form,
    domain: &Domain,
    spec: &GaussianSpec,
    opts: &TargetWeightOptions,
) -> Result<TargetWeight> {
    let n = opts.n.max(f.dim()).max(domain.intrinsic_dim());
    if n > spec.trunc_dim {
        return Err(Error::Precondition(format!(
            "form and domain need {n} coordinates but trunc_dim is {}",
            spec.trunc_dim
        )));
    }
    let j_max = opts.j_max.max(1);
    let domain = domain.normalize_eta(n, opts.samples, opts.seed)?;
    let eta = domain.eta(n).expr;

    // annulus masses under P
    let density = f.norm_integrand(&Expr::zero())?;
    let tape = Compiled::new(&[eta.clone(), density]);
    let mut masses = vec![0.0; j_max];
    let mut mass_v1 = 0.0;
    let pts = sample(spec, opts.measure_samples, opts.seed ^ 0x5eed);
    for p in &pts {
        if !domain.contains(p) {
            continue;
        }
        let v = tape.eval(p).map_err(|e| Error::eval(p, e))?;
        let (e, w) = (v[0].re, v[1].re);
        if e <= 1.0 {
            mass_v1 += w;
        } else {
            let j = (e.ceil() as usize).saturating_sub(1);
            if (1..=j_max).contains(&j) {
                masses[j - 1] += w;
            }
        }
    }
    let count = pts.len() as f64;
    mass_v1 /= count;
    for m in &mut masses {
        *m /= count;
    }
    let b: Vec<f64> = masses
        .iter()
        .enumerate()
        .map(|(j, m)| 0.5f64.powi(j as i32 + 1) / (1.0 + m))
        .collect();

    let psi = psi_majorant(&domain, n, j_max, opts.samples, opts.seed.wrapping_add(1))?;
    let psi_e = psi.psi.expr.clone();
    let grad: Expr = (1..=n).map(|i| psi_e.del(i).abs_sq()).sum();
    let rhs = grad * 2.0 + psi_e.exp() * 2.0;
    let tape = Compiled::new(&[eta.clone(), psi_e, rhs]);
    let mut pairs = Vec::new();
    for p in domain.sample_interior(n, opts.samples, opts.seed.wrapping_add(2), 1.0) {
        let v = tape.eval(&p).map_err(|e| Error::eval(&p, e))?;
        pairs.push((v[0].re, v[1].re, v[2].re));
    }
    // sup of ψ over each annulus (ψ >= 0, so scaling up is safe)
    let annulus_sup: Vec<f64> = (1..=j_max)
        .map(|j| {
            SUP_SAFETY
                * pairs
                    .iter()
                    .filter(|(e, _, _)| *e > j as f64 && *e <= (j + 1) as f64)
                    .map(|(_, s, _)| *s)
                    .fold(0.0, f64::max)
        })
        .collect();
    // h(x) = Σ_{i<=j} |ln(1/b_i) + sup ψ| for j < x <= j+1
    let mut h_levels = vec![0.0; j_max + 2];
    for j in 1..=j_max + 1 {
        let i = j.min(j_max);
        h_levels[j] = h_levels[j - 1]
            + if j <= j_max {
                ((1.0 / b[i - 1]).ln() + annulus_sup[i - 1]).abs()
            } else {
                0.0
            };
    }
    // g0 at integer x uses V_{max(x,1)} for the sup and h on (x-1, x]
    let rhs_pairs: Vec<(f64, f64)> = pairs.iter().map(|(e, _, r)| (*e, *r)).collect();
    let sups = sublevel_sups(&rhs_pairs, j_max + 2);
    let g0_levels: Vec<f64> = (0..=j_max + 1)
        .map(|x| {
            let h = if x <= 1 { 0.0 } else { h_levels[x - 1] };
            1.0 + h + SUP_SAFETY * sups[x.max(1) - 1]
        })
        .collect();
    let g0 = |x: f64| {
        let idx = if x <= 0.0 { 0 } else { (x.ceil() as usize).min(g0_levels.len() - 1) };
        g0_levels[idx]
    };
    let g: Arc<dyn RealFn> = match opts.majorant {
        MajorantKind::Series => Arc::new(ConvexMajorant::build(&g0, (j_max + 1) as f64, None)?),
        MajorantKind::Exponential => Arc::new(ExponentialMajorant::for_staircase(&g0_levels)),
    };
    let eta_min = pairs.iter().map(|(e, _, _)| *e).fold(f64::INFINITY, f64::min);
    let offset = g.eval(0, eta_min.max(0.0));
    let phi = CylinderFn::new(eta.apply(g.clone(), 0) - offset);
    let weights = WeightTriple::new(phi, psi.psi.clone());
    Ok(TargetWeight {
        domain,
        psi,
        masses,
        mass_v1,
        b,
        g0_levels,
        g,
        offset,
        weights,
    })
}
