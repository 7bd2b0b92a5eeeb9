//! Mollification of cylinder functions on a uniform grid in `C^n` (n <= 2),
//! and the cut-off/mollify pipeline `η_ρ · f_{n,δ}` approximating a form.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domains::Domain;
use crate::error::{Error, EvalError, Result};
use crate::fixtures::random_point_in_ball;
use crate::forms::Form;
use crate::gaussmeasure::{reduce, GaussianSpec, Quadrature};
use crate::symfun::realfn::bump;
use crate::symfun::{Compiled, CylinderFn, Expr, PointFn, Var, C64};
use crate::weights::{adaptive_simpson, shifted_germ};

/// Largest supported real grid dimension `2n`.
pub const MAX_GRID_DIM: usize = 4;
/// The kernel radius must span at least this many grid spacings.
pub const MIN_POINTS_PER_DELTA: f64 = 2.0;

/// `γ_{n,δ}(z) = δ^{-2n} γ_n(z/δ)` with `γ_n(z) = C_n exp(-1/(1-|z|^2))` on
/// the unit ball of `C^n` and `C_n` fixing unit mass.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Mollifier {
    pub n: usize,
    pub delta: f64,
    /// `C_n`.
    pub norm: f64,
}

fn sphere_area(real_dim: usize) -> f64 {
    // |S^{d-1}| = 2 π^{d/2} / Γ(d/2), here d = 2n even
    let n = real_dim / 2;
    let fact: f64 = (1..n).map(|k| k as f64).product();
    2.0 * std::f64::consts::PI.powi(n as i32) / fact
}

impl Mollifier {
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        if n == 0 || !(delta > 0.0) {
            return Err(Error::Precondition(format!("mollifier needs n >= 1 and δ > 0, got n={n}, δ={delta}")));
        }
        let d = 2 * n;
        let b = bump();
        let radial = adaptive_simpson(&|r: f64| r.powi(d as i32 - 1) * b.eval(0, r), 0.0, 1.0, 1e-15, 50);
        Ok(Mollifier {
            n,
            delta,
            norm: 1.0 / (sphere_area(d) * radial),
        })
    }

    /// `γ_{n,δ}` at a point of `R^{2n}`.
    pub fn eval(&self, p: &[f64]) -> f64 {
        let r2: f64 = p.iter().map(|v| v * v).sum::<f64>() / (self.delta * self.delta);
        if r2 >= 1.0 {
            return 0.0;
        }
        self.norm * (-1.0 / (1.0 - r2)).exp() / self.delta.powi(2 * self.n as i32)
    }

    /// Tensor midpoint-rule mass over the support cube with `points` nodes per axis.
    pub fn grid_mass(&self, points: usize) -> f64 {
        let grid = Grid::centered(self.n, self.delta, points, true);
        let vol = grid.h.powi(2 * self.n as i32);
        (0..grid.len())
            .into_par_iter()
            .map(|k| self.eval(&grid.point(k)))
            .sum::<f64>()
            * vol
    }
}

/// Uniform tensor grid on `[-half, half]^{2n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub n: usize,
    pub half: f64,
    pub res: usize,
    pub h: f64,
    /// Midpoint grid (cell centers) rather than endpoints included.
    midpoint: bool,
}

impl Grid {
    fn centered(n: usize, half: f64, res: usize, midpoint: bool) -> Self {
        let h = if midpoint {
            2.0 * half / res as f64
        } else {
            2.0 * half / (res - 1) as f64
        };
        Grid {
            n,
            half,
            res,
            h,
            midpoint,
        }
    }

    pub fn len(&self) -> usize {
        self.res.pow(2 * self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coord(&self, i: usize) -> f64 {
        let off = if self.midpoint { 0.5 } else { 0.0 };
        -self.half + (i as f64 + off) * self.h
    }

    fn multi(&self, mut k: usize) -> Vec<usize> {
        let mut out = vec![0; 2 * self.n];
        for slot in out.iter_mut() {
            *slot = k % self.res;
            k /= self.res;
        }
        out
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &i| acc * self.res + i)
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        self.multi(k).into_iter().map(|i| self.coord(i)).collect()
    }

    fn cell_volume(&self) -> f64 {
        self.h.powi(2 * self.n as i32)
    }

    fn sample(&self, f: &Expr) -> Result<Vec<C64>> {
        let tape = f.compile();
        (0..self.len())
            .into_par_iter()
            .map(|k| {
                let p = self.point(k);
                tape.eval_fast(&p).map_err(|e| Error::eval(&p, e))
            })
            .collect()
    }
}

/// Normalized discrete kernel: per-axis offsets and weights summing to 1.
fn stencil(m: &Mollifier, grid: &Grid) -> Vec<(Vec<isize>, f64)> {
    let reach = (m.delta / grid.h).floor() as isize;
    let width = (2 * reach + 1) as usize;
    let dims = 2 * grid.n;
    let mut out = Vec::new();
    for k in 0..width.pow(dims as u32) {
        let mut r = k;
        let off: Vec<isize> = (0..dims)
            .map(|_| {
                let v = (r % width) as isize - reach;
                r /= width;
                v
            })
            .collect();
        let p: Vec<f64> = off.iter().map(|&o| o as f64 * grid.h).collect();
        let w = m.eval(&p);
        if w > 0.0 {
            out.push((off, w));
        }
    }
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut out {
        *w /= total;
    }
    out
}

fn convolve(grid: &Grid, values: &[C64], kernel: &[(Vec<isize>, f64)]) -> Vec<C64> {
    (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let idx = grid.multi(k);
            let mut acc = C64::new(0.0, 0.0);
            let mut src = vec![0usize; idx.len()];
            'outer: for (off, w) in kernel {
                for (d, (&i, &o)) in idx.iter().zip(off).enumerate() {
                    let j = i as isize - o;
                    if j < 0 || j >= grid.res as isize {
                        continue 'outer;
                    }
                    src[d] = j as usize;
                }
                acc += values[grid.flat(&src)] * *w;
            }
            acc
        })
        .collect()
}

/// Grid values with multilinear interpolation, zero outside the grid box.
#[derive(Debug, Clone)]
pub struct GridFn {
    pub grid: Grid,
    pub values: Arc<Vec<C64>>,
    pub support: Option<f64>,
    /// Derivatives taken so far by central differences.
    pub stencil_order: usize,
}

impl GridFn {
    pub fn into_cylinder(self) -> CylinderFn {
        let n = self.grid.n;
        let support = self.support;
        CylinderFn {
            expr: Expr::opaque(Arc::new(self)),
            dim: n,
            support_radius: support,
        }
    }

    /// `(Σ |a - b|^2 φ_n h^{2n})^{1/2}` against the grid samples `other`.
    fn l2_p(&self, other: &[C64], spec: &GaussianSpec, pow: impl Fn(C64, C64) -> f64 + Sync) -> f64 {
        let density = spec.density(self.grid.n).compile();
        let vol = self.grid.cell_volume();
        (0..self.grid.len())
            .into_par_iter()
            .map(|k| {
                let p = self.grid.point(k);
                let w = density.eval_fast(&p).map(|v| v.re).unwrap_or(0.0);
                pow(self.values[k], other[k]) * w
            })
            .sum::<f64>()
            * vol
    }
}

impl PointFn for GridFn {
    fn eval(&self, point: &[f64]) -> std::result::Result<C64, EvalError> {
        let g = &self.grid;
        let dims = 2 * g.n;
        if point.len() < dims {
            return Err(EvalError::MissingVariable {
                needed: g.n,
                supplied: point.len() / 2,
            });
        }
        let mut base = vec![0usize; dims];
        let mut frac = vec![0.0; dims];
        for d in 0..dims {
            let t = (point[d] + g.half) / g.h;
            if !(0.0..=(g.res - 1) as f64).contains(&t) {
                return Ok(C64::new(0.0, 0.0));
            }
            let i = (t.floor() as usize).min(g.res - 2);
            base[d] = i;
            frac[d] = t - i as f64;
        }
        let mut acc = C64::new(0.0, 0.0);
        let mut idx = vec![0usize; dims];
        for corner in 0..(1usize << dims) {
            let mut w = 1.0;
            for d in 0..dims {
                let up = (corner >> d) & 1 == 1;
                idx[d] = base[d] + up as usize;
                w *= if up { frac[d] } else { 1.0 - frac[d] };
            }
            if w != 0.0 {
                acc += self.values[g.flat(&idx)] * w;
            }
        }
        Ok(acc)
    }

    fn dim(&self) -> usize {
        self.grid.n
    }

    /// Central differences on the grid (one-sided at the box faces).
    fn partial(&self, var: Var) -> Option<Arc<dyn PointFn>> {
        let g = self.grid;
        let axis = var.slot();
        if axis >= 2 * g.n {
            return Some(Arc::new(GridFn {
                grid: g,
                values: Arc::new(vec![C64::new(0.0, 0.0); g.len()]),
                support: self.support,
                stencil_order: self.stencil_order + 1,
            }));
        }
        let values: Vec<C64> = (0..g.len())
            .map(|k| {
                let idx = g.multi(k);
                let i = idx[axis];
                let (lo, hi) = (i.saturating_sub(1), (i + 1).min(g.res - 1));
                let mut a = idx.clone();
                a[axis] = lo;
                let mut b = idx;
                b[axis] = hi;
                (self.values[g.flat(&b)] - self.values[g.flat(&a)]) / ((hi - lo) as f64 * g.h)
            })
            .collect();
        Some(Arc::new(GridFn {
            grid: g,
            values: Arc::new(values),
            support: self.support,
            stencil_order: self.stencil_order + 1,
        }))
    }

    fn support_radius(&self) -> Option<f64> {
        self.support
    }
}

fn check_grid(n: usize, delta: f64, grid: &Grid) -> Result<()> {
    if 2 * n > MAX_GRID_DIM {
        return Err(Error::Unsupported(format!(
            "grid convolution in real dimension {} (max {MAX_GRID_DIM})",
            2 * n
        )));
    }
    if grid.res < 5 || delta / grid.h < MIN_POINTS_PER_DELTA {
        return Err(Error::Resolution(format!(
            "grid spacing {:.3e} is too coarse for δ = {delta} (need δ/h >= {MIN_POINTS_PER_DELTA})",
            grid.h
        )));
    }
    Ok(())
}

fn support_of(f: &CylinderFn) -> Result<f64> {
    f.support_radius
        .ok_or_else(|| Error::Precondition("mollification needs a compactly supported function".into()))
}

/// Grid over `[-(R+δ), R+δ]^{2n}`, `grid_res` points per axis.
fn grid_for(n: usize, radius: f64, delta: f64, grid_res: usize) -> Result<Grid> {
    let grid = Grid::centered(n, radius + delta, grid_res.max(2), false);
    check_grid(n, delta, &grid)?;
    Ok(grid)
}

/// `f_{n,δ} = f * γ_{n,δ}` for `f` depending on at most the first `n`
/// coordinates, as a grid-backed function supported in radius `R + δ`.
pub fn mollify(f: &CylinderFn, n: usize, delta: f64, grid_res: usize) -> Result<GridFn> {
    if f.dim > n {
        return Err(Error::Precondition(format!(
            "function depends on {} coordinates, mollifying in {n}",
            f.dim
        )));
    }
    let radius = support_of(f)?;
    let grid = grid_for(n, radius, delta, grid_res)?;
    let m = Mollifier::new(n, delta)?;
    let values = grid.sample(&f.expr)?;
    let out = convolve(&grid, &values, &stencil(&m, &grid));
    Ok(GridFn {
        grid,
        values: Arc::new(out),
        support: Some(radius + delta),
        stencil_order: 0,
    })
}

/// `‖f_{n,δ} - f‖_{L^2(P)}` and `∫ ||f_{n,δ}|^2 - |f|^2| dP` by quadrature on
/// the mollification grid (which covers both supports).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MollifyError {
    pub delta: f64,
    pub l2: f64,
    pub abs_sq_l1: f64,
}

pub fn mollify_error(f: &CylinderFn, n: usize, delta: f64, grid_res: usize, spec: &GaussianSpec) -> Result<MollifyError> {
    let g = mollify(f, n, delta, grid_res)?;
    let exact = g.grid.sample(&f.expr)?;
    let l2 = g.l2_p(&exact, spec, |a, b| (a - b).norm_sqr()).sqrt();
    let abs_sq_l1 = g.l2_p(&exact, spec, |a, b| (a.norm_sqr() - b.norm_sqr()).abs());
    Ok(MollifyError { delta, l2, abs_sq_l1 })
}

/// `|∫ f_{n,δ} g dP - ∫ f φ_n^{-1} (g_n φ_n)_{n,δ} dP|` with both sides by
/// grid quadrature; `f`, `g` are first reduced to `n` coordinates.
pub fn convolution_adjoint_residual(
    f: &CylinderFn,
    g: &CylinderFn,
    n: usize,
    delta: f64,
    grid_res: usize,
    spec: &GaussianSpec,
    quad: &Quadrature,
) -> Result<f64> {
    let f_n = reduce(f, n, spec, quad)?;
    let g_n = reduce(g, n, spec, quad)?;
    let radius = support_of(&f_n)?.max(support_of(&g_n)?);
    let grid = grid_for(n, radius, delta, grid_res)?;
    let kernel = stencil(&Mollifier::new(n, delta)?, &grid);
    let fv = grid.sample(&f_n.expr)?;
    let gv = grid.sample(&g_n.expr)?;
    let phi: Vec<f64> = grid.sample(&spec.density(n))?.iter().map(|v| v.re).collect();
    let f_delta = convolve(&grid, &fv, &kernel);
    let g_phi: Vec<C64> = gv.iter().zip(&phi).map(|(g, p)| g * p).collect();
    let g_phi_delta = convolve(&grid, &g_phi, &kernel);
    let vol = grid.cell_volume();
    let mut lhs = C64::new(0.0, 0.0);
    let mut rhs = C64::new(0.0, 0.0);
    for k in 0..grid.len() {
        lhs += f_delta[k] * gv[k] * phi[k];
        if phi[k] > 0.0 {
            rhs += fv[k] / phi[k] * g_phi_delta[k] * phi[k];
        }
    }
    Ok(((lhs - rhs) * vol).norm())
}

/// `expr` inside `domain` (tested on the first `n` coordinates), 0 outside.
#[derive(Debug)]
struct Masked {
    domain: Domain,
    expr: Expr,
    tape: Compiled,
    n: usize,
}

impl Masked {
    fn new(domain: Domain, expr: Expr, n: usize) -> Self {
        Masked {
            tape: expr.compile(),
            domain,
            expr,
            n,
        }
    }
}

impl PointFn for Masked {
    fn eval(&self, point: &[f64]) -> std::result::Result<C64, EvalError> {
        let head = &point[..(2 * self.n).min(point.len())];
        if !self.domain.contains(head) {
            return Ok(C64::new(0.0, 0.0));
        }
        self.tape.eval_fast(point)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn partial(&self, var: Var) -> Option<Arc<dyn PointFn>> {
        Some(Arc::new(Masked::new(self.domain.clone(), self.expr.d(var), self.n)))
    }
}

/// `η_ρ = h_ρ(η)` on the domain, extended by 0.
pub fn domain_cutoff(domain: &Domain, n: usize, rho: f64) -> Result<Expr> {
    let h = shifted_germ(rho)?;
    let eta = domain.eta(n).expr.apply(h, 0);
    Ok(Expr::opaque(Arc::new(Masked::new(domain.clone(), eta, n))))
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub rho: f64,
    pub n: usize,
    pub delta: f64,
    pub grid_res: usize,
    /// Points of the support ball used to audit `supp f ⊂ V_r`, `r < ρ`.
    pub audit_points: usize,
    pub seed: u64,
}

/// `η_ρ · f_{n,δ}` coefficient-wise: reduce to `n` coordinates, mollify,
/// multiply by the cut-off.
pub fn approx_pipeline(
    f: &Form,
    domain: &Domain,
    spec: &GaussianSpec,
    quad: &Quadrature,
    opts: &PipelineOptions,
) -> Result<Form> {
    let (s, t) = f.degree();
    let mut out = Form::zero(s, t, f.family().clone());
    if f.is_zero() {
        return Ok(out);
    }
    let radius = f
        .support_radius()
        .ok_or_else(|| Error::Precondition("pipeline needs compactly supported coefficients".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let dim = f.dim().max(opts.n);
    for _ in 0..opts.audit_points {
        let p = random_point_in_ball(&mut rng, dim, radius);
        let e = domain.eval_eta(&p).map_err(|_| {
            Error::Precondition(format!("support radius {radius} reaches outside the domain at {p:?}"))
        })?;
        if e >= opts.rho {
            return Err(Error::Precondition(format!(
                "η = {e} >= ρ = {} on the support of f",
                opts.rho
            )));
        }
    }
    let cut = domain_cutoff(domain, opts.n, opts.rho)?;
    for ((i, j), c) in f.iter() {
        let c_n = reduce(c, opts.n, spec, quad)?;
        let m = mollify(&c_n, opts.n, opts.delta, opts.grid_res)?;
        let support = m.support;
        let coeff = m.into_cylinder();
        out.set(
            i.clone(),
            j.clone(),
            CylinderFn::with_support(coeff.expr * cut.clone(), support),
        )?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LadderRow {
    pub n: usize,
    pub delta: f64,
    pub norm_error: f64,
    pub stderr: f64,
}

/// `‖η_ρ f_{n,δ} - f‖_{w}` over a list of `(n, δ)`.
pub fn approx_ladder(
    f: &Form,
    domain: &Domain,
    w: &Expr,
    spec: &GaussianSpec,
    quad: &Quadrature,
    base: &PipelineOptions,
    ladder: &[(usize, f64)],
) -> Result<Vec<LadderRow>> {
    ladder
        .iter()
        .map(|&(n, delta)| {
            let opts = PipelineOptions { n, delta, ..base.clone() };
            let approx = approx_pipeline(f, domain, spec, quad, &opts)?;
            let diff = approx.sub(f)?;
            let est = diff.norm_sq(w, spec, quad)?;
            let norm = est.mean.re.max(0.0).sqrt();
            // d sqrt(x) = dx / (2 sqrt(x))
            let stderr = if norm > 0.0 { est.stderr / (2.0 * norm) } else { est.stderr.sqrt() };
            Ok(LadderRow {
                n,
                delta,
                norm_error: norm,
                stderr,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiindex::{MultiIndex, WeightFamily};
    use crate::symfun::parse;
    use crate::symfun::realfn::germ;

    #[test]
    fn mollifier_unit_mass() {
        for n in [1, 2] {
            let m = Mollifier::new(n, 0.3).unwrap();
            let res = if n == 1 { 400 } else { 48 };
            let mass = m.grid_mass(res);
            assert!((mass - 1.0).abs() <= 1e-6, "n={n}: {mass}");
            assert_eq!(m.eval(&vec![0.3; 2 * n]), 0.0);
            let a = m.eval(&[0.1, 0.05]);
            let b = m.eval(&[-0.05, 0.1]);
            if n == 1 {
                assert!((a - b).abs() <= 1e-12 * a);
            }
        }
    }

    fn plateau(radius: f64, width: f64) -> CylinderFn {
        // 1 on |z| <= radius, 0 beyond radius + width
        let r = Expr::norm_sq(1).powi(1);
        let t = (r - radius * radius) * (1.0 / ((radius + width).powi(2) - radius * radius));
        CylinderFn::with_support(t.apply(germ(), 0), Some(radius + width))
    }

    #[test]
    fn constant_plateau_is_preserved() {
        let f = plateau(0.5, 0.3);
        let delta = 0.1;
        let g = mollify(&f, 1, delta, 161).unwrap();
        let mut checked = 0;
        for k in 0..g.grid.len() {
            let p = g.grid.point(k);
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if r <= 0.5 - delta {
                assert!((g.values[k] - 1.0).norm() <= 1e-13);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn support_grows_by_delta() {
        let f = CylinderFn::with_cutoff(parse("1 + x(1)*y(1)").unwrap(), 1, 0.4);
        let g = mollify(&f, 1, 0.15, 121).unwrap();
        let mut exterior = 0;
        for k in 0..g.grid.len() {
            let p = g.grid.point(k);
            if (p[0] * p[0] + p[1] * p[1]).sqrt() > 0.55 {
                assert_eq!(g.values[k], C64::new(0.0, 0.0));
                exterior += 1;
            }
        }
        assert!(exterior > 0);
        let e = g.clone().into_cylinder();
        assert_eq!(e.expr.eval(&[2.0, 0.0]).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn delta_ladder_improves() {
        let spec = GaussianSpec::new(1);
        let f = CylinderFn::with_cutoff(parse("1 + x(1)").unwrap(), 1, 0.6);
        let errs: Vec<MollifyError> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&d| mollify_error(&f, 1, d, 241, &spec).unwrap())
            .collect();
        for w in errs.windows(2) {
            assert!(w[1].l2 < w[0].l2, "{errs:?}");
            assert!(w[1].abs_sq_l1 < w[0].abs_sq_l1, "{errs:?}");
        }
    }

    #[test]
    fn coarse_grid_and_high_dimension_rejected() {
        let f = CylinderFn::with_cutoff(Expr::one(), 1, 0.5);
        assert!(matches!(mollify(&f, 1, 0.01, 21), Err(Error::Resolution(_))));
        let g = CylinderFn::with_cutoff(Expr::one(), 3, 0.5);
        assert!(matches!(mollify(&g, 3, 0.2, 21), Err(Error::Unsupported(_))));
        let h = CylinderFn::parse("x(1)").unwrap();
        assert!(matches!(mollify(&h, 1, 0.2, 21), Err(Error::Precondition(_))));
    }

    #[test]
    fn mollify_in_two_dimensions() {
        let f = CylinderFn::with_cutoff(parse("1 + x(1)*y(2)").unwrap(), 2, 0.5);
        let g = mollify(&f, 2, 0.2, 29).unwrap();
        let p = [0.1, 0.05, -0.1, 0.0];
        let exact = f.expr.eval(&p).unwrap();
        let v = PointFn::eval(&g, &p).unwrap();
        assert!((v - exact).norm() < 0.05, "{v} vs {exact}");
    }

    #[test]
    fn adjoint_identity_on_grid() {
        let spec = GaussianSpec::new(1);
        let quad = Quadrature::GaussHermite { nodes: 8 };
        let f = CylinderFn::with_cutoff(parse("1 + z(1)").unwrap(), 1, 0.5);
        let g = CylinderFn::with_cutoff(parse("x(1) - 2*y(1)^2").unwrap(), 1, 0.7);
        let r = convolution_adjoint_residual(&f, &g, 1, 0.1, 121, &spec, &quad).unwrap();
        assert!(r <= 1e-4, "{r}");
        let zero = CylinderFn::with_support(Expr::zero(), Some(0.5));
        assert_eq!(convolution_adjoint_residual(&f, &zero, 1, 0.1, 121, &spec, &quad).unwrap(), 0.0);
        let r = convolution_adjoint_residual(&f, &f, 1, 0.1, 121, &spec, &quad).unwrap();
        assert!(r <= 1e-4, "{r}");
    }

    #[test]
    fn grid_partials_match_the_symbolic_ones() {
        let f = CylinderFn::with_cutoff(parse("1 + x(1)").unwrap(), 1, 0.6);
        let g = mollify(&f, 1, 0.1, 241).unwrap();
        let dg = g.partial(Var::X(1)).unwrap();
        let df = f.expr.d_dx(1);
        for p in [[0.0, 0.0], [0.2, -0.1], [-0.3, 0.25]] {
            let a = dg.eval(&p).unwrap();
            let b = df.eval(&p).unwrap();
            assert!((a - b).norm() < 0.05, "{a} vs {b}");
        }
    }

    fn bump_form(radius: f64) -> Form {
        let mut f = Form::zero(0, 1, WeightFamily::default());
        let c = CylinderFn::with_cutoff(parse("1 + z(1) + x(2)").unwrap(), 2, radius);
        f.set(MultiIndex::empty(), MultiIndex::single(1), c).unwrap();
        f
    }

    #[test]
    fn pipeline_zero_form() {
        let spec = GaussianSpec::new(2);
        let quad = Quadrature::GaussHermite { nodes: 6 };
        let f = Form::zero(0, 1, WeightFamily::default());
        let opts = PipelineOptions {
            rho: 2.0,
            n: 1,
            delta: 0.1,
            grid_res: 81,
            audit_points: 100,
            seed: 1,
        };
        let out = approx_pipeline(&f, &Domain::unit_ball(), &spec, &quad, &opts).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn pipeline_ladder_decreases() {
        let spec = GaussianSpec::new(2);
        let quad = Quadrature::GaussHermite { nodes: 10 };
        let domain = Domain::unit_ball();
        let f = bump_form(0.5);
        let base = PipelineOptions {
            rho: 2.0,
            n: 2,
            delta: 0.2,
            grid_res: 25,
            audit_points: 200,
            seed: 3,
        };
        // η = -ln(1 - |z|^2) <= ln(4/3) < ρ on the support, so the cut-off is 1 there
        let cut = domain_cutoff(&domain, 2, base.rho).unwrap();
        assert_eq!(cut.eval(&[0.3, 0.1, 0.2, 0.0]).unwrap(), C64::new(1.0, 0.0));
        assert_eq!(cut.eval(&[1.3, 0.1, 0.2, 0.0]).unwrap(), C64::new(0.0, 0.0));
        let rows = approx_ladder(&f, &domain, &Expr::zero(), &spec, &quad, &base, &[(2, 0.3), (2, 0.2)]).unwrap();
        assert!(rows[1].norm_error < rows[0].norm_error, "{rows:?}");
        let bad = PipelineOptions { rho: 0.1, ..base };
        assert!(matches!(approx_pipeline(&f, &domain, &spec, &quad, &bad), Err(Error::Precondition(_))));
    }
}
