//! The operators `T = S = ∂̄` on forms, the explicit adjoint `T*`, and
//! residual checks for the integration-by-parts identities behind them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::forms::{Form, Key};
use crate::gaussmeasure::{paired, GaussianSpec, PairedResidual, Quadrature};
use crate::multiindex::{epsilon, insert, MultiIndex, WeightFamily};
use crate::symfun::{Compiled, CylinderFn, Expr};

/// Everything `T*` depends on besides its argument.
#[derive(Clone, Debug)]
pub struct OperatorContext {
    pub spec: GaussianSpec,
    pub family: WeightFamily,
    pub w1: CylinderFn,
    pub w2: CylinderFn,
    pub w3: CylinderFn,
    /// The real function `φ` entering `σ_i = δ_i - ∂_i φ`.
    pub varphi: CylinderFn,
}

impl OperatorContext {
    /// Unweighted context: `w1 = w2 = w3 = φ = 0`.
    pub fn flat(spec: GaussianSpec, family: WeightFamily) -> Self {
        let zero = CylinderFn::new(Expr::zero());
        OperatorContext {
            spec,
            family,
            w1: zero.clone(),
            w2: zero.clone(),
            w3: zero.clone(),
            varphi: zero,
        }
    }

    pub fn with_weights(mut self, w1: CylinderFn, w2: CylinderFn, w3: CylinderFn) -> Self {
        self.w1 = w1;
        self.w2 = w2;
        self.w3 = w3;
        self
    }

    pub fn with_varphi(mut self, varphi: CylinderFn) -> Self {
        self.varphi = varphi;
        self
    }

    /// Check that the weights and `φ` are real (to 1e-12) at the given points.
    pub fn check_real(&self, points: &[Vec<f64>]) -> Result<()> {
        let tape = Compiled::new(&[
            self.w1.expr.clone(),
            self.w2.expr.clone(),
            self.w3.expr.clone(),
            self.varphi.expr.clone(),
        ]);
        for p in points {
            let v = tape.eval(p).map_err(|e| Error::eval(p, e))?;
            for (name, z) in ["w1", "w2", "w3", "varphi"].iter().zip(v) {
                if z.im.abs() > 1e-12 {
                    return Err(Error::Precondition(format!(
                        "{name} has imaginary part {:.3e} at {p:?}",
                        z.im
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct Accumulator(BTreeMap<Key, CylinderFn>);

impl Accumulator {
    fn add(&mut self, key: Key, term: Expr, radius: Option<f64>) {
        if term.is_zero() {
            return;
        }
        match self.0.get_mut(&key) {
            Some(c) => {
                c.expr = c.expr.clone() + term;
                c.dim = c.expr.max_index();
                c.support_radius = match (c.support_radius, radius) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
            }
            None => {
                self.0.insert(key, CylinderFn::with_support(term, radius));
            }
        }
    }

    fn into_form(self, s: usize, t: usize, family: WeightFamily) -> Form {
        let mut out = Form::zero(s, t, family);
        for ((i, j), c) in self.0 {
            out.set(i, j, c).expect("accumulated keys have the target degree");
        }
        out
    }
}

/// `∂̄f = (-1)^s Σ'_{I,K} Σ_{i,J} ε^K_{iJ} ∂̄_i f_{I,J} dz_I ∧ dz̄_K`.
///
/// Only `i` up to the max index of each coefficient can contribute, so the
/// sum is exact.
pub fn dbar(f: &Form) -> Form {
    let (s, t) = f.degree();
    let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
    let mut acc = Accumulator::default();
    for ((i_idx, j), c) in f.iter() {
        for i in 1..=c.expr.max_index() {
            let (_, Some(k)) = insert(i, j) else {
                continue;
            };
            let e = epsilon(i, j, &k) as f64;
            acc.add((i_idx.clone(), k), c.expr.delbar(i) * (sign * e), c.support_radius);
        }
    }
    acc.into_form(s, t + 1, f.family().clone())
}

/// The explicit adjoint of `T: L^2_{(s,t)}(w1) -> L^2_{(s,t+1)}(w2)` on an
/// `(s,t+1)`-form:
/// `(-1)^{s+1} e^{w1-w2} Σ (c_{I,iL}/c_{I,L}) (δ_i f_{I,iL} - f_{I,iL} ∂_i w2) dz_I ∧ dz̄_L`.
pub fn tstar(f: &Form, ctx: &OperatorContext) -> Result<Form> {
    let (s, t1) = f.degree();
    if t1 == 0 {
        return Err(Error::DegreeMismatch("T* needs a form with t >= 1".into()));
    }
    let sign = if s % 2 == 0 { -1.0 } else { 1.0 };
    let w2 = &ctx.w2.expr;
    let mut acc = Accumulator::default();
    for ((i_idx, k), c) in f.iter() {
        for &i in k.indices() {
            let l = k.without(i);
            let e = epsilon(i, &l, k) as f64;
            let ratio = ctx.family.coeff(i_idx, k)? / ctx.family.coeff(i_idx, &l)?;
            let a = ctx.spec.a(i);
            let body = c.expr.delta(i, a) - c.expr.clone() * w2.del(i);
            acc.add((i_idx.clone(), l), body * (sign * e * ratio), c.support_radius);
        }
    }
    let out = acc.into_form(s, t1 - 1, ctx.family.clone());
    let shift = &ctx.w1.expr - &ctx.w2.expr;
    if shift.is_zero() {
        Ok(out)
    } else {
        let factor = shift.exp();
        Ok(out.mul_fn(&factor))
    }
}

/// `|<Tu, f>_{w2} - <u, T*f>_{w1}|` with both sides on shared points.
pub fn adjoint_residual(u: &Form, f: &Form, ctx: &OperatorContext, quad: &Quadrature) -> Result<PairedResidual> {
    let (s, t) = u.degree();
    if f.degree() != (s, t + 1) {
        return Err(Error::DegreeMismatch(format!(
            "u is ({s},{t}) but f is {:?}",
            f.degree()
        )));
    }
    let u = u.clone().with_family(ctx.family.clone());
    let f = f.clone().with_family(ctx.family.clone());
    let lhs = dbar(&u).inner_integrand(&f, &ctx.w2.expr)?;
    let rhs = u.inner_integrand(&tstar(&f, ctx)?, &ctx.w1.expr)?;
    paired(&ctx.spec, quad, &lhs, &rhs)
}

/// Which integration-by-parts identity [`ibp_residual`] checks.
#[derive(Clone, Debug)]
pub enum IbpVariant {
    /// `∫ ∂̄_i f ḡ dP = -∫ f conj(δ_i g) dP`.
    Delta,
    /// `∫ ∂̄_i f ḡ e^{-φ} dP = -∫ f conj(σ_i g) e^{-φ} dP`.
    Sigma(Expr),
}

pub fn ibp_residual(
    f: &CylinderFn,
    g: &CylinderFn,
    i: usize,
    spec: &GaussianSpec,
    quad: &Quadrature,
    variant: &IbpVariant,
) -> Result<PairedResidual> {
    let a = spec.a(i);
    let (other, weight) = match variant {
        IbpVariant::Delta => (g.expr.delta(i, a), Expr::one()),
        IbpVariant::Sigma(phi) => (g.expr.sigma(i, a, phi), (-phi).exp()),
    };
    let lhs = f.expr.delbar(i) * g.expr.conj() * weight.clone();
    let rhs = -(f.expr.clone() * other.conj() * weight);
    paired(spec, quad, &lhs, &rhs)
}

/// Max over `points` of
/// `|(∂̄_i σ_j - σ_j ∂̄_i) h + h ∂̄_i ∂_j φ + δ_{ij} h / (2 a_j^2)|`.
pub fn commutator_residual(
    h: &Expr,
    i: usize,
    j: usize,
    ctx: &OperatorContext,
    points: &[Vec<f64>],
) -> Result<f64> {
    let a = ctx.spec.a(j);
    let phi = &ctx.varphi.expr;
    let lhs = h.sigma(j, a, phi).delbar(i) - h.delbar(i).sigma(j, a, phi);
    let mut expr = lhs + h.clone() * phi.del(j).delbar(i);
    if i == j {
        expr = expr + h.clone() * (1.0 / (2.0 * a * a));
    }
    max_abs(&[expr], points)
}

/// Residual of the weak-∂̄ identity for one component `(I,K)`:
/// `(-1)^{s+1} ∫ Σ_{i∈K} ε^K_{iJ} f_{I,J} conj(δ_i φ) dP` against
/// `∫ g_{I,K} conj(φ) dP`, with `J = K \ {i}`.
pub fn weak_dbar_residual(
    f: &Form,
    g: &Form,
    test: &CylinderFn,
    i_idx: &MultiIndex,
    k: &MultiIndex,
    spec: &GaussianSpec,
    quad: &Quadrature,
) -> Result<PairedResidual> {
    let (s, t) = f.degree();
    if g.degree() != (s, t + 1) || i_idx.len() != s || k.len() != t + 1 {
        return Err(Error::DegreeMismatch(format!(
            "f {:?}, g {:?}, I={i_idx}, K={k}",
            f.degree(),
            g.degree()
        )));
    }
    let sign = if s % 2 == 0 { -1.0 } else { 1.0 };
    let mut lhs = Expr::zero();
    for &i in k.indices() {
        let j = k.without(i);
        let e = epsilon(i, &j, k) as f64;
        let fc = f.coeff(i_idx, &j);
        if fc.is_zero() {
            continue;
        }
        lhs = lhs + fc * test.expr.delta(i, spec.a(i)).conj() * (sign * e);
    }
    let rhs = g.coeff(i_idx, k) * test.expr.conj();
    paired(spec, quad, &lhs, &rhs)
}

/// Max coefficient-wise residual of `T(m f) - m Tf - (Tm) ∧ f` over `points`.
pub fn multiplier_residual(m: &Expr, f: &Form, points: &[Vec<f64>]) -> Result<f64> {
    let mt = m.compile();
    for p in points {
        let v = mt.eval1(p).map_err(|e| Error::eval(p, e))?;
        if !v.norm().is_finite() {
            return Err(Error::Precondition(format!("multiplier not finite at {p:?}")));
        }
    }
    let lhs = dbar(&f.mul_fn(m));
    let tm = dbar(&Form::function(CylinderFn::new(m.clone()), f.family().clone()));
    let rhs = dbar(f).mul_fn(m).add(&tm.wedge(f))?;
    max_abs_form(&lhs.sub(&rhs)?, points)
}

/// Max coefficient of `∂̄∂̄u` over `points`.
pub fn dbar_dbar_residual(u: &Form, points: &[Vec<f64>]) -> Result<f64> {
    max_abs_form(&dbar(&dbar(u)), points)
}

/// Max modulus of any coefficient of `f` over `points`.
pub fn max_abs_form(f: &Form, points: &[Vec<f64>]) -> Result<f64> {
    let exprs: Vec<Expr> = f.iter().map(|(_, c)| c.expr.clone()).collect();
    max_abs(&exprs, points)
}

fn max_abs(exprs: &[Expr], points: &[Vec<f64>]) -> Result<f64> {
    if exprs.is_empty() {
        return Ok(0.0);
    }
    let tape = Compiled::new(exprs);
    let mut worst = 0.0f64;
    for p in points {
        let v = tape.eval(p).map_err(|e| Error::eval(p, e))?;
        for z in v {
            worst = worst.max(z.norm());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::symfun::{parse, C64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mi(v: &[usize]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    fn cf(text: &str) -> CylinderFn {
        CylinderFn::parse(text).unwrap()
    }

    fn points(seed: u64, n: usize, dim: usize, r: f64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| fixtures::random_point(&mut rng, dim, r)).collect()
    }

    fn ctx(n: usize) -> OperatorContext {
        OperatorContext::flat(GaussianSpec::new(n), WeightFamily::default())
    }

    #[test]
    fn dbar_examples() {
        let fam = WeightFamily::default();
        let hol = Form::function(cf("z(1)^2"), fam.clone());
        assert!(max_abs_form(&dbar(&hol), &points(0, 50, 1, 2.0)).unwrap() <= 1e-14);

        let f = Form::function(cf("zb(1)"), fam.clone());
        let d = dbar(&f);
        assert_eq!(d.degree(), (0, 1));
        assert_eq!(d.len(), 1);
        let v = d.coeff(&MultiIndex::empty(), &mi(&[1])).eval(&[0.3, 0.2]).unwrap();
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-15);

        let mut g = Form::zero(0, 1, fam);
        g.set(MultiIndex::empty(), mi(&[1]), cf("zb(2)")).unwrap();
        let d = dbar(&g);
        let v = d.coeff(&MultiIndex::empty(), &mi(&[1, 2])).eval(&[0.1; 4]).unwrap();
        assert!((v - C64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dbar_sign_for_holomorphic_degree() {
        // (1,0)-form zb(2) dz_1: the (-1)^s factor flips the sign
        let mut f = Form::zero(1, 0, WeightFamily::default());
        f.set(mi(&[1]), MultiIndex::empty(), cf("zb(2)")).unwrap();
        let d = dbar(&f);
        let v = d.coeff(&mi(&[1]), &mi(&[2])).eval(&[0.0; 4]).unwrap();
        assert!((v + 1.0).norm() < 1e-15);
    }

    #[test]
    fn tstar_examples() {
        let c = ctx(2);
        let a = c.spec.a(1);
        let p = [0.3, -0.4, 0.2, 0.1];
        let zb1 = C64::new(p[0], -p[1]);

        let mut f = Form::zero(0, 1, WeightFamily::default());
        f.set(MultiIndex::empty(), mi(&[1]), cf("x(1)*y(2)")).unwrap();
        let ts = tstar(&f, &c).unwrap();
        let g = parse("x(1)*y(2)").unwrap();
        let want = -(g.delta(1, a).eval(&p).unwrap());
        let got = ts.coeff(&MultiIndex::empty(), &MultiIndex::empty()).eval(&p).unwrap();
        assert!((got - want).norm() < 1e-14);

        let mut one = Form::zero(0, 1, WeightFamily::default());
        one.set(MultiIndex::empty(), mi(&[1]), cf("1")).unwrap();
        let got = tstar(&one, &c).unwrap().coeff(&MultiIndex::empty(), &MultiIndex::empty());
        let want = zb1 / (2.0 * a * a);
        assert!((got.eval(&p).unwrap() - want).norm() < 1e-13);

        let x1 = cf("x(1)");
        let cw = c.clone().with_weights(x1.clone(), x1.clone(), x1);
        let got = tstar(&one, &cw).unwrap().coeff(&MultiIndex::empty(), &MultiIndex::empty());
        assert!((got.eval(&p).unwrap() - (want + 0.5)).norm() < 1e-13);
    }

    #[test]
    fn tstar_rejects_functions() {
        let f = Form::function(cf("1"), WeightFamily::default());
        assert!(tstar(&f, &ctx(1)).is_err());
    }

    #[test]
    fn adjoint_zero_inputs() {
        let c = ctx(2);
        let quad = Quadrature::GaussHermite { nodes: 6 };
        let u = Form::zero(0, 0, WeightFamily::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = fixtures::random_form(&mut rng, 0, 1, 1, 0.6, 1, WeightFamily::default());
        let r = adjoint_residual(&u, &f, &c, &quad).unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn adjoint_deterministic_dim_one() {
        let c = ctx(1);
        let quad = Quadrature::GaussHermite { nodes: 60 };
        let u = Form::function(cf("exp(-z(1)*zb(1)) * (1 + x(1))"), WeightFamily::default());
        let mut f = Form::zero(0, 1, WeightFamily::default());
        f.set(MultiIndex::empty(), mi(&[1]), cf("exp(-2*z(1)*zb(1)) * (y(1) + 2*x(1)^2)"))
            .unwrap();
        let r = adjoint_residual(&u, &f, &c, &quad).unwrap();
        assert!(r.residual <= 1e-8, "{r:?}");
        assert!(r.lhs.mean.norm() > 1e-3);
    }

    #[test]
    fn adjoint_monte_carlo_with_weights_and_family() {
        let spec = GaussianSpec::new(2);
        let fam = WeightFamily::gaussian_scaled(|i| 2f64.powi(-(i as i32 + 1)));
        let w1 = cf("x(1)^2 + y(2)");
        let w2 = cf("x(1)^2 + 0.5*y(2) - x(2)");
        let c = OperatorContext::flat(spec, fam.clone()).with_weights(w1, w2, cf("0"));
        let quad = Quadrature::MonteCarlo { samples: 40_000, seed: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..3 {
            let u = fixtures::random_form(&mut rng, 0, 1, 2, 0.5, 2, fam.clone());
            let f = fixtures::random_form(&mut rng, 0, 2, 2, 0.5, 1, fam.clone());
            let r = adjoint_residual(&u, &f, &c, &quad).unwrap();
            assert!(r.passes(1e-8), "{r:?}");
        }
    }

    #[test]
    fn ibp_examples() {
        let spec = GaussianSpec::new(1);
        let gh = Quadrature::GaussHermite { nodes: 60 };
        let f = cf("exp(-z(1)*zb(1)) * x(1)");
        let g = cf("exp(-2*z(1)*zb(1)) * (1 + y(1))");
        let r = ibp_residual(&f, &g, 1, &spec, &gh, &IbpVariant::Delta).unwrap();
        assert!(r.residual <= 1e-8, "{r:?}");

        let phi = parse("x(1)^2").unwrap();
        let r = ibp_residual(&f, &g, 1, &spec, &gh, &IbpVariant::Sigma(phi)).unwrap();
        assert!(r.residual <= 1e-8, "{r:?}");

        let mc = Quadrature::MonteCarlo { samples: 20_000, seed: 5 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = fixtures::random_compact(&mut rng, 1, 0.5);
        let r = ibp_residual(&cf("2"), &g, 1, &spec, &mc, &IbpVariant::Delta).unwrap();
        assert!(r.passes(0.0));

        let a = ibp_residual(&f, &g, 1, &spec, &gh, &IbpVariant::Delta).unwrap();
        let b = ibp_residual(&f, &g, 1, &spec, &gh, &IbpVariant::Sigma(Expr::zero())).unwrap();
        assert_eq!(a.residual, b.residual);
    }

    #[test]
    fn commutator_examples() {
        let pts = points(8, 100, 3, 1.0);
        let c = ctx(3).with_varphi(cf("x(1)^2 + 3*y(2)^2 + x(1)*y(2)"));
        let r = commutator_residual(&Expr::real(2.0), 1, 1, &c, &pts).unwrap();
        assert!(r <= 1e-12);
        let c3 = ctx(3).with_varphi(cf("x(3)^2 * y(3)"));
        let h = parse("z(1)*zb(2)").unwrap();
        assert!(commutator_residual(&h, 1, 2, &c3, &pts).unwrap() <= 1e-12);
        let c1 = ctx(3).with_varphi(cf("x(1)^2"));
        assert!(commutator_residual(&h, 1, 1, &c1, &pts).unwrap() <= 1e-10);
    }

    #[test]
    fn commutator_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts = points(13, 20, 4, 0.8);
        for _ in 0..10 {
            let h = fixtures::random_smooth(&mut rng, 3, 4);
            let phi = fixtures::random_smooth(&mut rng, 2, 4);
            let phi = (phi.clone() + phi.conj()) * 0.5;
            let c = ctx(4).with_varphi(CylinderFn::new(phi));
            for i in 1..=4 {
                for j in 1..=4 {
                    let r = commutator_residual(&h, i, j, &c, &pts).unwrap();
                    assert!(r <= 1e-10, "i={i} j={j}: {r}");
                }
            }
        }
    }

    #[test]
    fn weak_dbar_accepts_dbar_and_rejects_perturbation() {
        let spec = GaussianSpec::new(2);
        let quad = Quadrature::MonteCarlo { samples: 50_000, seed: 21 };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let fam = WeightFamily::default();
        let f = fixtures::random_form(&mut rng, 0, 0, 2, 0.6, 1, fam.clone());
        let g = dbar(&f);
        let test = fixtures::random_compact(&mut rng, 2, 0.5);
        for k in [mi(&[1]), mi(&[2])] {
            let r = weak_dbar_residual(&f, &g, &test, &MultiIndex::empty(), &k, &spec, &quad).unwrap();
            assert!(r.passes(1e-8), "{r:?}");
        }
        let mut bad = Form::zero(0, 1, fam.clone());
        bad.set(MultiIndex::empty(), mi(&[1]), CylinderFn::with_cutoff(Expr::one(), 2, 0.6))
            .unwrap();
        let wrong = g.add(&bad).unwrap();
        let test = CylinderFn::with_cutoff(Expr::one(), 2, 0.5);
        let r = weak_dbar_residual(&f, &wrong, &test, &MultiIndex::empty(), &mi(&[1]), &spec, &quad)
            .unwrap();
        assert!(r.residual > 5.0 * r.stderr, "{r:?}");

        let zero = Form::zero(0, 0, fam.clone());
        let gz = Form::zero(0, 1, fam);
        let r = weak_dbar_residual(&zero, &gz, &test, &MultiIndex::empty(), &mi(&[1]), &spec, &quad)
            .unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn multiplier_examples() {
        let pts = points(2, 100, 2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fam = WeightFamily::default();
        let f = fixtures::random_form(&mut rng, 1, 1, 2, 0.9, 3, fam.clone());
        assert!(multiplier_residual(&Expr::real(3.0), &f, &pts).unwrap() <= 1e-12);
        let mut g = Form::zero(0, 1, fam.clone());
        g.set(MultiIndex::empty(), mi(&[2]), cf("z(1)*exp(y(2))")).unwrap();
        assert!(multiplier_residual(&Expr::x(1), &g, &pts).unwrap() <= 1e-10);
        assert!(multiplier_residual(&Expr::x(1), &f, &pts).unwrap() <= 1e-10);
        let zero = Form::zero(0, 2, fam);
        assert_eq!(multiplier_residual(&Expr::x(1), &zero, &pts).unwrap(), 0.0);
    }

    #[test]
    fn dbar_squared_vanishes() {
        let pts = points(31, 100, 3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for (s, t) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            for _ in 0..5 {
                let u = fixtures::random_form(&mut rng, s, t, 3, 1.2, 3, WeightFamily::default());
                assert!(dbar_dbar_residual(&u, &pts).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn operators_preserve_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let c = ctx(2);
        let f = fixtures::random_form(&mut rng, 0, 1, 2, 0.5, 2, WeightFamily::default());
        let r = f.support_radius().unwrap();
        let outside: Vec<Vec<f64>> = (0..500)
            .map(|_| fixtures::random_point_outside(&mut rng, 2, r))
            .collect();
        let ts = tstar(&f, &c).unwrap();
        assert_eq!(ts.support_radius(), Some(r));
        assert!(max_abs_form(&ts, &outside).unwrap() <= 1e-12);
        assert!(max_abs_form(&dbar(&f), &outside).unwrap() <= 1e-12);
    }

    #[test]
    fn complex_weights_rejected() {
        let c = ctx(1).with_weights(cf("z(1)"), cf("0"), cf("0"));
        assert!(c.check_real(&points(1, 5, 1, 1.0)).is_err());
        assert!(ctx(1).check_real(&points(1, 5, 1, 1.0)).is_ok());
    }
}
