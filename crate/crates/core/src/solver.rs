//! Minimal-norm Galerkin solutions of `∂̄u = f` on a tensor Hermite basis,
//! and audits of the weighted `L^2` estimates a solution must satisfy.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::dbarops::{dbar, max_abs_form, tstar, OperatorContext};
use crate::domains::{Domain, DomainKind};
use crate::error::{Error, EvalError, Result};
use crate::forms::Form;
use crate::gaussmeasure::{gauss_hermite_rule, integrate_many, GaussianSpec, MCEstimate, Quadrature};
use crate::multiindex::{check_conditions, epsilon, insert, MultiIndex};
use crate::symfun::{Compiled, CylinderFn, Expr, PointFn, C64};
use crate::weights::{check_cond4, WeightTriple};

pub const RIDGE: f64 = 1e-10;
pub const TOL_CLOSED: f64 = 1e-8;

const ZERO: C64 = C64::new(0.0, 0.0);

/// `c_0^{s,t}` of the context's family, enumerated over indices `<= max(n, s+t+2)`.
pub fn family_c0(ctx: &OperatorContext, n: usize, s: usize, t: usize) -> Result<f64> {
    let rep = check_conditions(&ctx.family, n.max(s + t + 2), s, t)?;
    if !rep.multiplicative_ok || !(rep.c0_inf > 0.0) || !rep.c1_sup.is_finite() {
        return Err(Error::Precondition(format!(
            "weight family fails the ratio conditions for ({s},{t}): c0 = {}, c1 = {}, multiplicative = {}",
            rep.c0_inf, rep.c1_sup, rep.multiplicative_ok
        )));
    }
    Ok(rep.c0_inf)
}

// ---------------------------------------------------------------------------
// Basis

/// Tensor Hermite polynomials `Π_d He_{α_d}(x_d / a) / sqrt(α_d!)` of total
/// degree `<= degree` in the `2n` real coordinates, orthonormal in `L^2(P)`,
/// optionally multiplied by a cut-off, one copy per `(I,J)` component.
#[derive(Debug, Clone)]
pub struct HermiteBasis {
    pub n: usize,
    pub degree: usize,
    pub s: usize,
    pub t: usize,
    pub components: Vec<(MultiIndex, MultiIndex)>,
    pub exponents: Vec<Vec<usize>>,
    pub cutoff: Option<CylinderFn>,
    scales: Vec<f64>,
}

fn exponents(dims: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                let used: usize = prefix.iter().sum();
                (0..=degree - used).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out.sort_by_key(|v| (v.iter().sum::<usize>(), std::cmp::Reverse(v.clone())));
    out
}

/// `He_k(t) / sqrt(k!)` and the derivative in `t`, `k = 0..=degree`.
fn hermite_row(degree: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let mut he = vec![1.0; degree + 1];
    if degree >= 1 {
        he[1] = t;
    }
    for k in 1..degree {
        he[k + 1] = t * he[k] - k as f64 * he[k - 1];
    }
    let mut fact = 1.0;
    let mut val = vec![0.0; degree + 1];
    let mut der = vec![0.0; degree + 1];
    for k in 0..=degree {
        if k > 0 {
            fact *= k as f64;
        }
        let norm = fact.sqrt();
        val[k] = he[k] / norm;
        der[k] = if k == 0 { 0.0 } else { k as f64 * he[k - 1] / norm };
    }
    (val, der)
}

impl HermiteBasis {
    pub fn new(n: usize, degree: usize, s: usize, t: usize, spec: &GaussianSpec, cutoff: Option<CylinderFn>) -> Result<Self> {
        if n == 0 || s > n || t > n {
            return Err(Error::Precondition(format!("basis ({s},{t}) in dimension {n}")));
        }
        let mut components = Vec::new();
        for i in MultiIndex::all(s, n) {
            for j in MultiIndex::all(t, n) {
                components.push((i.clone(), j));
            }
        }
        Ok(HermiteBasis {
            n,
            degree,
            s,
            t,
            components,
            exponents: exponents(2 * n, degree),
            cutoff,
            scales: (1..=n).map(|i| spec.a(i)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.components.len() * self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis_scale(&self, d: usize) -> f64 {
        self.scales[d / 2]
    }

    /// Per-axis normalized Hermite expressions `He_k(x_d / a) / sqrt(k!)`.
    fn axis_exprs(&self) -> Vec<Vec<Expr>> {
        (0..2 * self.n)
            .map(|d| {
                let i = d / 2 + 1;
                let x = if d % 2 == 0 { Expr::x(i) } else { Expr::y(i) } * (1.0 / self.axis_scale(d));
                let mut he = vec![Expr::one(), x.clone()];
                for k in 1..self.degree {
                    let next = x.clone() * he[k].clone() - he[k - 1].clone() * k as f64;
                    he.push(next);
                }
                he.truncate(self.degree + 1);
                let mut fact = 1.0;
                he.into_iter()
                    .enumerate()
                    .map(|(k, e)| {
                        if k > 0 {
                            fact *= k as f64;
                        }
                        e * (1.0 / fact.sqrt())
                    })
                    .collect()
            })
            .collect()
    }

    /// `Σ_k coeffs[k] e_k` as a form.
    pub fn to_form(&self, coeffs: &[C64], family: &crate::multiindex::WeightFamily) -> Result<Form> {
        let axes = self.axis_exprs();
        let mut out = Form::zero(self.s, self.t, family.clone());
        for (c, (i, j)) in self.components.iter().enumerate() {
            let mut acc = Expr::zero();
            for (e, alpha) in self.exponents.iter().enumerate() {
                let a = coeffs[c * self.exponents.len() + e];
                if a == ZERO {
                    continue;
                }
                let mut term = Expr::constant(a);
                for (d, &k) in alpha.iter().enumerate() {
                    if k > 0 {
                        term = term * axes[d][k].clone();
                    }
                }
                acc = acc + term;
            }
            if acc.is_zero() {
                continue;
            }
            let coeff = match &self.cutoff {
                Some(cut) => CylinderFn::with_support(acc * cut.expr.clone(), cut.support_radius),
                None => CylinderFn::new(acc),
            };
            out.set(i.clone(), j.clone(), coeff)?;
        }
        Ok(out)
    }

    /// The `k`-th basis element as a form.
    pub fn element(&self, k: usize, family: &crate::multiindex::WeightFamily) -> Result<Form> {
        let mut c = vec![ZERO; self.len()];
        c[k] = C64::new(1.0, 0.0);
        self.to_form(&c, family)
    }
}

/// Values of all polynomial factors and their `∂̄_i` at one point.
struct PointEval {
    /// `P_α(p)`.
    value: Vec<f64>,
    /// `∂̄_i P_α(p)`, index `[i-1][α]`.
    dbar: Vec<Vec<C64>>,
}

impl HermiteBasis {
    fn eval_point(&self, p: &[f64]) -> PointEval {
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..2 * self.n)
            .map(|d| hermite_row(self.degree, p[d] / self.axis_scale(d)))
            .collect();
        let mut value = Vec::with_capacity(self.exponents.len());
        let mut dbar = vec![Vec::with_capacity(self.exponents.len()); self.n];
        for alpha in &self.exponents {
            let v: f64 = alpha.iter().enumerate().map(|(d, &k)| rows[d].0[k]).product();
            value.push(v);
            for i in 0..self.n {
                let partial = |axis: usize| -> f64 {
                    alpha
                        .iter()
                        .enumerate()
                        .map(|(d, &k)| {
                            if d == axis {
                                rows[d].1[k] / self.axis_scale(d)
                            } else {
                                rows[d].0[k]
                            }
                        })
                        .product()
                };
                let (dx, dy) = (partial(2 * i), partial(2 * i + 1));
                dbar[i].push(C64::new(0.5 * dx, 0.5 * dy));
            }
        }
        PointEval { value, dbar }
    }
}

// ---------------------------------------------------------------------------
// Quadrature

struct Rule {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// Tensor Gauss–Hermite rule for `P` on the first `n` coordinates, keeping
/// only nodes inside the domain.
fn tensor_rule(spec: &GaussianSpec, n: usize, nodes: usize, domain: &Domain) -> Result<Rule> {
    let axes = 2 * n;
    let total = nodes
        .checked_pow(axes as u32)
        .filter(|&t| t <= crate::gaussmeasure::GH_BUDGET)
        .ok_or(Error::QuadratureBudget { nodes, axes })?;
    let (x, w) = gauss_hermite_rule(nodes);
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for k in 0..total {
        let mut r = k;
        let mut p = vec![0.0; axes];
        let mut wt = 1.0;
        for (d, slot) in p.iter_mut().enumerate() {
            let j = r % nodes;
            r /= nodes;
            *slot = x[j] * spec.a(d / 2 + 1);
            wt *= w[j];
        }
        if domain.contains(&p) {
            points.push(p);
            weights.push(wt);
        }
    }
    Ok(Rule { points, weights })
}

// ---------------------------------------------------------------------------
// Problem and solve

#[derive(Debug, Clone)]
pub struct SolveProblem {
    pub ctx: OperatorContext,
    pub domain: Domain,
    /// The `(s, t+1)` right-hand side.
    pub f: Form,
    pub n: usize,
    pub degree: usize,
    pub cutoff: Option<CylinderFn>,
    /// Gauss–Hermite nodes per real axis.
    pub nodes: usize,
    pub tol_closed: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub audit_points: usize,
    pub seed: u64,
    /// Relative slack in `sqrt(c0) ‖u‖_{w1} <= ‖f‖_{w2} (1 + tol)`.
    pub bound_tol: f64,
}

impl SolveProblem {
    pub fn new(ctx: OperatorContext, domain: Domain, f: Form, n: usize, degree: usize) -> Self {
        SolveProblem {
            ctx,
            domain,
            f,
            n,
            degree,
            cutoff: None,
            nodes: degree + 6,
            tol_closed: TOL_CLOSED,
            cg_tol: 1e-12,
            cg_max_iter: 0,
            audit_points: 200,
            seed: 0,
            bound_tol: 1e-6,
        }
    }

    fn spec(&self) -> GaussianSpec {
        GaussianSpec {
            scales: self.ctx.spec.scales.clone(),
            trunc_dim: self.n,
        }
    }

    fn quad(&self) -> Quadrature {
        Quadrature::GaussHermite { nodes: self.nodes }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// `‖∂̄u - f‖_{w2} / ‖f‖_{w2}` (0 when `f = 0`).
    pub residual: f64,
    pub norm_u_w1: f64,
    pub norm_f_w2: f64,
    pub c0: f64,
    pub bound_pass: bool,
    pub cg_iters: usize,
    pub basis_dim: usize,
    /// Rank of the `w1` Gram matrix actually used.
    pub effective_dim: usize,
    /// Largest `|<u, k>_{w1}| / ‖u‖_{w1}` over unit vectors `k` of the discrete kernel of `T`.
    pub kernel_gram_residual: f64,
    pub kernel_dim: usize,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: DVector<C64>,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Conjugate gradients for Hermitian positive (semi)definite `a`, from `x = 0`.
pub fn conjugate_gradient(a: &DMatrix<C64>, b: &DVector<C64>, tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let bnorm = b.norm();
    let mut x = DVector::from_element(b.len(), ZERO);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            history: vec![0.0],
        });
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut history = vec![1.0];
    for it in 1..=max_iter {
        let ap = a * &p;
        let pap = p.dotc(&ap).re;
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        x.axpy(C64::new(alpha, 0.0), &p, C64::new(1.0, 0.0));
        r.axpy(C64::new(-alpha, 0.0), &ap, C64::new(1.0, 0.0));
        let rr_new = r.norm_squared();
        let rel = rr_new.sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                history,
            });
        }
        p = &r + &p * C64::new(rr_new / rr, 0.0);
        rr = rr_new;
    }
    Err(Error::NoConvergence {
        iterations: history.len() - 1,
        last: *history.last().unwrap(),
        history,
    })
}

/// `(s,t+1)` components hit by `∂̄` of the basis components, with the sign
/// `(-1)^s ε^K_{iJ}`: for each basis component, a list of `(i, target, sign)`.
fn dbar_targets(basis: &HermiteBasis, targets: &[(MultiIndex, MultiIndex)]) -> Vec<Vec<(usize, usize, f64)>> {
    let sgn_s = if basis.s.is_multiple_of(2) { 1.0 } else { -1.0 };
    basis
        .components
        .iter()
        .map(|(i_idx, j)| {
            (1..=basis.n)
                .filter_map(|i| {
                    let (_, k) = insert(i, j);
                    let k = k?;
                    let pos = targets.iter().position(|(ti, tk)| ti == i_idx && *tk == k)?;
                    Some((i, pos, sgn_s * epsilon(i, j, &k) as f64))
                })
                .collect()
        })
        .collect()
}

/// Normal matrix `N = A* A`, `b = A* F`, and the `w1` Gram matrix, where `A`
/// maps basis coefficients to `√(W c e^{-w2}) (∂̄u)_{I,K}` at the nodes.
struct Assembly {
    normal: DMatrix<C64>,
    rhs: DVector<C64>,
    gram: DMatrix<C64>,
}

fn assemble(p: &SolveProblem, basis: &HermiteBasis, rule: &Rule) -> Result<Assembly> {
    let (s, t1) = p.f.degree();
    let targets: Vec<(MultiIndex, MultiIndex)> = MultiIndex::all(s, p.n)
        .into_iter()
        .flat_map(|i| MultiIndex::all(t1, p.n).into_iter().map(move |k| (i.clone(), k)))
        .collect();
    let c_targets: Vec<f64> = targets
        .iter()
        .map(|(i, k)| p.ctx.family.coeff(i, k))
        .collect::<Result<_>>()?;
    let c_basis: Vec<f64> = basis
        .components
        .iter()
        .map(|(i, j)| p.ctx.family.coeff(i, j))
        .collect::<Result<_>>()?;
    let hits = dbar_targets(basis, &targets);

    let mut exprs = vec![p.ctx.w1.expr.clone(), p.ctx.w2.expr.clone()];
    for (i, k) in &targets {
        exprs.push(p.f.coeff(i, k));
    }
    let (cut_value, cut_dbar) = match &basis.cutoff {
        Some(c) => (c.expr.clone(), (1..=p.n).map(|i| c.expr.delbar(i)).collect()),
        None => (Expr::one(), vec![Expr::zero(); p.n]),
    };
    exprs.push(cut_value);
    exprs.extend(cut_dbar);
    let tape = Compiled::new(&exprs);

    let m = basis.exponents.len();
    let kdim = basis.len();
    let nt = targets.len();
    let chunk = 64;
    let partials: Vec<Result<Assembly>> = rule
        .points
        .par_chunks(chunk)
        .zip(rule.weights.par_chunks(chunk))
        .map(|(pts, wts)| {
            let mut normal = DMatrix::from_element(kdim, kdim, ZERO);
            let mut rhs = DVector::from_element(kdim, ZERO);
            let mut gram = DMatrix::from_element(kdim, kdim, ZERO);
            let mut ev = tape.evaluator();
            let mut out = vec![ZERO; tape.n_outputs()];
            let mut rows = DMatrix::from_element(nt, kdim, ZERO);
            let mut fvec = DVector::from_element(nt, ZERO);
            for (q, &wq) in pts.iter().zip(wts) {
                ev.eval_into(q, &mut out).map_err(|e| Error::eval(q, e))?;
                let e1 = (-out[0].re).exp();
                let e2 = (-out[1].re).exp();
                if !e1.is_finite() || !e2.is_finite() {
                    return Err(Error::eval(q, EvalError::NonFinite));
                }
                let chi = out[2 + nt];
                let chi_dbar = &out[3 + nt..];
                let pe = basis.eval_point(q);
                rows.fill(ZERO);
                for (c, comp_hits) in hits.iter().enumerate() {
                    for &(i, tgt, sign) in comp_hits {
                        let scale = (wq * c_targets[tgt] * e2).sqrt() * sign;
                        for a in 0..m {
                            let d = chi_dbar[i - 1] * pe.value[a] + chi * pe.dbar[i - 1][a];
                            rows[(tgt, c * m + a)] += d * scale;
                        }
                    }
                }
                for tgt in 0..nt {
                    fvec[tgt] = out[2 + tgt] * (wq * c_targets[tgt] * e2).sqrt();
                }
                normal.gemm_ad(C64::new(1.0, 0.0), &rows, &rows, C64::new(1.0, 0.0));
                rhs.gemv_ad(C64::new(1.0, 0.0), &rows, &fvec, C64::new(1.0, 0.0));
                for (c, &cc) in c_basis.iter().enumerate() {
                    let w = wq * cc * e1 * chi.norm_sqr();
                    for a in 0..m {
                        for b in 0..m {
                            gram[(c * m + a, c * m + b)] += C64::new(w * pe.value[a] * pe.value[b], 0.0);
                        }
                    }
                }
            }
            Ok(Assembly { normal, rhs, gram })
        })
        .collect();
    let mut total = Assembly {
        normal: DMatrix::from_element(kdim, kdim, ZERO),
        rhs: DVector::from_element(kdim, ZERO),
        gram: DMatrix::from_element(kdim, kdim, ZERO),
    };
    for part in partials {
        let part = part?;
        total.normal += part.normal;
        total.rhs += part.rhs;
        total.gram += part.gram;
    }
    Ok(total)
}

fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// `‖f‖^2_w` by the problem's quadrature.
fn norm_sq_with(f: &Form, w: &Expr, spec: &GaussianSpec, quad: &Quadrature) -> Result<MCEstimate> {
    f.norm_sq(w, spec, quad)
}

/// Pointwise closedness `∂̄f = 0` at interior sample points.
pub fn closedness_residual(f: &Form, domain: &Domain, n: usize, points: usize, seed: u64) -> Result<f64> {
    let pts = domain.sample_interior(n.max(f.dim()), points, seed, 1.0);
    max_abs_form(&dbar(f), &pts)
}

/// The minimal-`w1`-norm `u` in the Galerkin space minimizing `‖∂̄u - f‖_{w2}`:
/// conjugate gradients on the `w1`-orthonormalized normal equations with a
/// `1e-10` ridge, from zero so the iterate stays off the discrete kernel.
pub fn solve_min_norm(p: &SolveProblem) -> Result<(Form, SolveReport)> {
    let (s, t1) = p.f.degree();
    if t1 == 0 {
        return Err(Error::DegreeMismatch("right-hand side must have t >= 1".into()));
    }
    let t = t1 - 1;
    if p.f.dim() > p.n {
        return Err(Error::Precondition(format!(
            "right-hand side depends on {} coordinates, basis has {}",
            p.f.dim(),
            p.n
        )));
    }
    let closed = closedness_residual(&p.f, &p.domain, p.n, p.audit_points, p.seed)?;
    if closed > p.tol_closed {
        return Err(Error::Precondition(format!(
            "right-hand side is not ∂̄-closed: residual {closed:.3e} > {:.1e}",
            p.tol_closed
        )));
    }
    let c0 = family_c0(&p.ctx, p.n, s, t)?;
    let basis = HermiteBasis::new(p.n, p.degree, s, t, &p.ctx.spec, p.cutoff.clone())?;
    let spec = p.spec();
    let quad = p.quad();
    let family = p.f.family().clone();

    if p.f.is_zero() {
        let u = Form::zero(s, t, family);
        return Ok((
            u,
            SolveReport {
                residual: 0.0,
                norm_u_w1: 0.0,
                norm_f_w2: 0.0,
                c0,
                bound_pass: true,
                cg_iters: 0,
                basis_dim: basis.len(),
                effective_dim: 0,
                kernel_gram_residual: 0.0,
                kernel_dim: 0,
            },
        ));
    }

    let rule = tensor_rule(&spec, p.n, p.nodes, &p.domain)?;
    let asm = assemble(p, &basis, &rule)?;

    // w1-orthonormal coordinates α = Q β
    let g_eig = SymmetricEigen::new(hermitian_part(&asm.gram));
    let gmax = g_eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..basis.len())
        .filter(|&k| g_eig.eigenvalues[k] > 1e-12 * gmax)
        .collect();
    let q = DMatrix::from_fn(basis.len(), keep.len(), |r, c| {
        g_eig.eigenvectors[(r, keep[c])] / g_eig.eigenvalues[keep[c]].sqrt()
    });
    let mq = hermitian_part(&(q.adjoint() * &asm.normal * &q));
    let rhs = q.adjoint() * &asm.rhs;
    let mut ridged = mq.clone();
    for k in 0..keep.len() {
        ridged[(k, k)] += C64::new(RIDGE, 0.0);
    }
    let max_iter = if p.cg_max_iter == 0 { 20 * keep.len().max(1) } else { p.cg_max_iter };
    let cg = conjugate_gradient(&ridged, &rhs, p.cg_tol, max_iter)?;
    let alpha = &q * &cg.x;

    // minimality against the discrete kernel of T
    let m_eig = SymmetricEigen::new(mq.clone());
    let mmax = m_eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let beta_norm = cg.x.norm();
    let mut kernel_dim = 0;
    let mut kernel_gram_residual = 0.0f64;
    for k in 0..keep.len() {
        if m_eig.eigenvalues[k] <= 1e-9 * mmax {
            kernel_dim += 1;
            let v = m_eig.eigenvectors.column(k);
            let dot = v.dotc(&cg.x).norm();
            if beta_norm > 0.0 {
                kernel_gram_residual = kernel_gram_residual.max(dot / beta_norm);
            }
        }
    }

    let u = basis.to_form(alpha.as_slice(), &family)?;
    let diff = dbar(&u).sub(&p.f)?;
    let res = norm_sq_with(&diff, &p.ctx.w2.expr, &spec, &quad)?.mean.re.max(0.0).sqrt();
    let norm_f = norm_sq_with(&p.f, &p.ctx.w2.expr, &spec, &quad)?.mean.re.max(0.0).sqrt();
    let norm_u = norm_sq_with(&u, &p.ctx.w1.expr, &spec, &quad)?.mean.re.max(0.0).sqrt();
    let report = SolveReport {
        residual: if norm_f > 0.0 { res / norm_f } else { res },
        norm_u_w1: norm_u,
        norm_f_w2: norm_f,
        c0,
        bound_pass: c0.sqrt() * norm_u <= norm_f * (1.0 + p.bound_tol),
        cg_iters: cg.iterations,
        basis_dim: basis.len(),
        effective_dim: keep.len(),
        kernel_gram_residual,
        kernel_dim,
    };
    Ok((u, report))
}

/// Galerkin matrices `T_{mk} = <T e_k, e'_m>_{w2}` and
/// `T*_{km} = <T* e'_m, e_k>_{w1}` built independently through the symbolic
/// operators; returns `max |T*_{km} - conj(T_{mk})|`.
pub fn galerkin_adjoint_defect(
    ctx: &OperatorContext,
    n: usize,
    degree: usize,
    s: usize,
    t: usize,
    nodes: usize,
) -> Result<f64> {
    let spec = GaussianSpec {
        scales: ctx.spec.scales.clone(),
        trunc_dim: n,
    };
    let quad = Quadrature::GaussHermite { nodes };
    let family = &ctx.family;
    let src = HermiteBasis::new(n, degree, s, t, &ctx.spec, None)?;
    let dst = HermiteBasis::new(n, degree, s, t + 1, &ctx.spec, None)?;
    let src_forms: Vec<Form> = (0..src.len()).map(|k| src.element(k, family)).collect::<Result<_>>()?;
    let dst_forms: Vec<Form> = (0..dst.len()).map(|k| dst.element(k, family)).collect::<Result<_>>()?;
    let t_images: Vec<Form> = src_forms.iter().map(dbar).collect();
    let ts_images: Vec<Form> = dst_forms.iter().map(|f| tstar(f, ctx)).collect::<Result<_>>()?;
    let mut exprs = Vec::new();
    for tk in &t_images {
        for em in &dst_forms {
            exprs.push(tk.inner_integrand(em, &ctx.w2.expr)?);
        }
    }
    for tm in &ts_images {
        for ek in &src_forms {
            exprs.push(tm.inner_integrand(ek, &ctx.w1.expr)?);
        }
    }
    let vals = integrate_many(&spec, &quad, &exprs)?;
    let (nk, nm) = (src.len(), dst.len());
    let mut worst = 0.0f64;
    for k in 0..nk {
        for m in 0..nm {
            let t_mk = vals[k * nm + m].mean;
            let ts_km = vals[nk * nm + m * nk + k].mean;
            worst = worst.max((ts_km - t_mk.conj()).norm());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Estimates

#[derive(Debug, Clone, Serialize)]
pub struct KeyInequalityReport {
    /// `‖T*f‖^2_{w1} + ‖Sf‖^2_{w3}`.
    pub lhs: f64,
    /// `c0 ‖f‖^2_{w2}`.
    pub rhs: f64,
    pub margin: f64,
    pub stderr: f64,
    pub c0: f64,
    pub pass: bool,
    pub cond4_margin: f64,
}

/// `‖T*f‖^2_{w1} + ‖Sf‖^2_{w3} >= c0 ‖f‖^2_{w2}` for weights
/// `(φ-2ψ, φ-ψ, φ)`; refused unless the weights pass the
/// plurisubharmonicity condition at `audit` and the family passes the ratio
/// conditions.
pub fn key_inequality_check(
    f: &Form,
    ctx: &OperatorContext,
    weights: &WeightTriple,
    domain: &Domain,
    n: usize,
    audit: &[Vec<f64>],
    quad: &Quadrature,
) -> Result<KeyInequalityReport> {
    let (s, t1) = f.degree();
    if t1 == 0 {
        return Err(Error::DegreeMismatch("key inequality needs t+1 >= 1".into()));
    }
    let cond4 = check_cond4(&weights.phi.expr, &weights.psi.expr, domain, n, audit)?;
    if !cond4.holds(1e-6) {
        return Err(Error::Precondition(format!(
            "weights fail the Levi-form condition: margin {:.3e} at {:?}",
            cond4.margin, cond4.worst_point
        )));
    }
    let c0 = family_c0(ctx, n, s, t1 - 1)?;
    if f.is_zero() {
        return Ok(KeyInequalityReport {
            lhs: 0.0,
            rhs: 0.0,
            margin: 0.0,
            stderr: 0.0,
            c0,
            pass: true,
            cond4_margin: cond4.margin,
        });
    }
    let ts = tstar(f, ctx)?;
    let sf = dbar(f);
    let a = if ts.is_zero() { Expr::zero() } else { ts.norm_integrand(&ctx.w1.expr)? };
    let b = if sf.is_zero() { Expr::zero() } else { sf.norm_integrand(&ctx.w3.expr)? };
    let c = f.norm_integrand(&ctx.w2.expr)?;
    let diff = a.clone() + b.clone() - c.clone() * c0;
    let v = integrate_many(&ctx.spec, quad, &[a, b, c, diff])?;
    let lhs = v[0].mean.re + v[1].mean.re;
    let rhs = c0 * v[2].mean.re;
    let margin = v[3].mean.re;
    let stderr = v[3].stderr;
    let pass = if quad.is_deterministic() {
        margin >= -1e-10 * rhs.abs().max(1.0)
    } else {
        margin >= -3.0 * stderr
    };
    Ok(KeyInequalityReport {
        lhs,
        rhs,
        margin,
        stderr,
        c0,
        pass,
        cond4_margin: cond4.margin,
    })
}

fn levi_min_eigs(phi: &Expr, n: usize, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut exprs = Vec::with_capacity(n * n);
    for i in 1..=n {
        let di = phi.del(i);
        for j in 1..=n {
            exprs.push(di.delbar(j));
        }
    }
    let tape = Compiled::new(&exprs);
    points
        .iter()
        .map(|p| {
            let v = tape.eval(p).map_err(|e| Error::eval(p, e))?;
            let h = hermitian_part(&DMatrix::from_row_slice(n, n, &v));
            Ok(SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub stderr: f64,
    pub pass: bool,
}

fn bound_report(lhs: &MCEstimate, rhs: &MCEstimate, diff: &MCEstimate, rhs_scale: f64, tol: f64) -> BoundReport {
    let l = lhs.mean.re;
    let r = rhs.mean.re * rhs_scale;
    BoundReport {
        lhs: l,
        rhs: r,
        margin: r - l,
        stderr: diff.stderr,
        pass: l <= r * (1.0 + tol) + 1e-300,
    }
}

/// `Σ' c ∫ |u|^2 e^{-φ} dP <= 2 Σ' c ∫ (|f|^2 / c_fn) e^{-φ} dP / (c0 (t+1))`,
/// refused unless the Levi form of `φ` dominates `c_fn` at `audit`.
#[allow(clippy::too_many_arguments)]
pub fn weighted_bound_check(
    u: &Form,
    f: &Form,
    ctx: &OperatorContext,
    phi: &Expr,
    c_fn: &Expr,
    n: usize,
    audit: &[Vec<f64>],
    quad: &Quadrature,
    tol: f64,
) -> Result<BoundReport> {
    let eigs = levi_min_eigs(phi, n, audit)?;
    let c_tape = c_fn.compile();
    for (p, lmin) in audit.iter().zip(eigs) {
        let c = c_tape.eval1(p).map_err(|e| Error::eval(p, e))?.re;
        if !(c > 0.0) || lmin < c - 1e-9 * c.max(1.0) {
            return Err(Error::Precondition(format!(
                "Levi form of φ ({lmin:.6}) does not dominate c = {c:.6} at {p:?}"
            )));
        }
    }
    let (s, t1) = f.degree();
    let c0 = family_c0(ctx, n, s, t1.saturating_sub(1))?;
    let lhs = u.norm_integrand(phi)?;
    let rhs = f.norm_integrand(phi)? / c_fn.clone();
    let scale = 2.0 / (c0 * t1 as f64);
    let diff = rhs.clone() * scale - lhs.clone();
    let v = integrate_many(&ctx.spec, quad, &[lhs, rhs, diff])?;
    Ok(bound_report(&v[0], &v[1], &v[2], scale, tol))
}

/// Upper bound of `‖z‖^2` over a bounded catalog domain.
pub fn sup_norm_sq(domain: &Domain) -> Option<f64> {
    match &domain.kind {
        DomainKind::Ball { center, radius } => {
            let c: f64 = center.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            Some((c + radius).powi(2))
        }
        DomainKind::Normalized { base, .. } => sup_norm_sq(base),
        _ => None,
    }
}

/// `∫ |u|^2 e^{-φ} (1+‖z‖^2)^{-2} dP <= Σ' c ∫|f|^2 e^{-φ} dP / (c0 (t+1))`;
/// on a bounded domain the factor moves to the right as `(1 + sup ‖z‖^2)^2`.
#[allow(clippy::too_many_arguments)]
pub fn hormander_bound_check(
    u: &Form,
    f: &Form,
    ctx: &OperatorContext,
    phi: &Expr,
    domain: &Domain,
    n: usize,
    audit: &[Vec<f64>],
    quad: &Quadrature,
    tol: f64,
) -> Result<BoundReport> {
    let eigs = levi_min_eigs(phi, n, audit)?;
    if let Some((p, l)) = audit.iter().zip(&eigs).find(|(_, l)| **l < -1e-9) {
        return Err(Error::Precondition(format!("φ is not plurisubharmonic at {p:?}: {l:.3e}")));
    }
    let (s, t1) = f.degree();
    let c0 = family_c0(ctx, n, s, t1.saturating_sub(1))?;
    let scale_base = 1.0 / (c0 * t1 as f64);
    let u_int = u.norm_integrand(phi)?;
    let (lhs, scale) = match sup_norm_sq(domain) {
        Some(sup) => (u_int, scale_base * (1.0 + sup).powi(2)),
        None => {
            let w = (Expr::norm_sq(ctx.spec.trunc_dim) + 1.0).powi(-2);
            (u_int * w, scale_base)
        }
    };
    let rhs = f.norm_integrand(phi)?;
    let diff = rhs.clone() * scale - lhs.clone();
    let v = integrate_many(&ctx.spec, quad, &[lhs, rhs, diff])?;
    Ok(bound_report(&v[0], &v[1], &v[2], scale, tol))
}

// ---------------------------------------------------------------------------
// Cauchy transform in one variable

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for k in 0..m {
        let mut t = (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for j in 2..=m {
                let p2 = ((2 * j - 1) as f64 * t * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { t } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (t * pm - pm1) / (t * t - 1.0);
            let step = pm / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[k] = t;
        w[k] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// `u_c(z) = -(1/π) ∬ f(ζ) / (ζ - z) dA(ζ)` for compactly supported `f` on
/// `C`, computed in polar coordinates around `z` where the integrand
/// `-(1/π) f(z + r e^{iθ}) e^{-iθ}` is smooth.
#[derive(Debug)]
pub struct CauchyTransform {
    tape: Compiled,
    radius: f64,
    radial: (Vec<f64>, Vec<f64>),
    panels: usize,
    angles: usize,
}

impl CauchyTransform {
    pub fn new(f: &CylinderFn, radial_nodes: usize, panels: usize, angles: usize) -> Result<Self> {
        if f.dim > 1 {
            return Err(Error::Unsupported("Cauchy transform in more than one variable".into()));
        }
        let radius = f
            .support_radius
            .ok_or_else(|| Error::Precondition("Cauchy transform needs compact support".into()))?;
        Ok(CauchyTransform {
            tape: f.expr.compile(),
            radius,
            radial: gauss_legendre(radial_nodes),
            panels,
            angles,
        })
    }

    pub fn into_cylinder(self) -> CylinderFn {
        CylinderFn::new(Expr::opaque(std::sync::Arc::new(self)))
    }
}

impl PointFn for CauchyTransform {
    fn eval(&self, point: &[f64]) -> std::result::Result<C64, EvalError> {
        let (x, y) = (point[0], point[1]);
        let rmax = (x * x + y * y).sqrt() + self.radius;
        let width = rmax / self.panels as f64;
        let mut acc = ZERO;
        let mut buf = [0.0, 0.0];
        for a in 0..self.angles {
            let th = 2.0 * std::f64::consts::PI * a as f64 / self.angles as f64;
            let (sn, cs) = th.sin_cos();
            let mut line = ZERO;
            for panel in 0..self.panels {
                let lo = panel as f64 * width;
                for (t, w) in self.radial.0.iter().zip(&self.radial.1) {
                    let r = lo + 0.5 * width * (t + 1.0);
                    buf[0] = x + r * cs;
                    buf[1] = y + r * sn;
                    line += self.tape.eval_fast(&buf)? * (0.5 * width * w);
                }
            }
            acc += line * C64::new(cs, -sn);
        }
        Ok(-acc * (2.0 / self.angles as f64))
    }

    fn dim(&self) -> usize {
        1
    }
}

/// Max over the grid `[-half, half]^2` of `|∂̄u - f|` with `∂̄` by central
/// differences of step `h`.
pub fn cauchy_dbar_residual(u: &CylinderFn, f: &Expr, half: f64, res: usize, h: f64) -> Result<f64> {
    let ut = u.expr.compile();
    let ft = f.compile();
    let pts: Vec<[f64; 2]> = (0..res * res)
        .map(|k| {
            let (i, j) = (k % res, k / res);
            let step = 2.0 * half / (res - 1) as f64;
            [-half + i as f64 * step, -half + j as f64 * step]
        })
        .collect();
    let errs: Vec<Result<f64>> = pts
        .par_iter()
        .map(|p| {
            let at = |dx: f64, dy: f64| {
                let q = [p[0] + dx, p[1] + dy];
                ut.eval1(&q).map_err(|e| Error::eval(&q, e))
            };
            let ux = (at(h, 0.0)? - at(-h, 0.0)?) / (2.0 * h);
            let uy = (at(0.0, h)? - at(0.0, -h)?) / (2.0 * h);
            let d = (ux + C64::new(0.0, 1.0) * uy) * 0.5;
            let fv = ft.eval1(p).map_err(|e| Error::eval(p, e))?;
            Ok((d - fv).norm())
        })
        .collect();
    errs.into_iter().try_fold(0.0f64, |acc, e| Ok(acc.max(e?)))
}
