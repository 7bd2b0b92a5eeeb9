//! Sparse `(s,t)`-forms `Σ' f_{I,J} dz_I ∧ dz̄_J` with cylinder-function
//! coefficients, their weighted `L^2` inner products, and the contraction
//! `f_{I,iL}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmeasure::{integrate_many, GaussianSpec, MCEstimate, Quadrature};
use crate::multiindex::{epsilon, insert, merge, MultiIndex, WeightFamily};
use crate::symfun::{parse, CylinderFn, Expr, C64};

pub type Key = (MultiIndex, MultiIndex);

#[derive(Clone, Debug)]
pub struct Form {
    s: usize,
    t: usize,
    coeffs: BTreeMap<Key, CylinderFn>,
    family: WeightFamily,
}

/// One coefficient of a form literal: `{I: [...], J: [...], coeff: "expr"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormEntry {
    #[serde(rename = "I", default)]
    pub i: Vec<usize>,
    #[serde(rename = "J", default)]
    pub j: Vec<usize>,
    pub coeff: String,
    /// Optional cut-off radius; the coefficient is multiplied by `bump(|z|^2/R^2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
}

impl Form {
    pub fn zero(s: usize, t: usize, family: WeightFamily) -> Self {
        Form {
            s,
            t,
            coeffs: BTreeMap::new(),
            family,
        }
    }

    /// A `(0,0)`-form, i.e. a function.
    pub fn function(f: CylinderFn, family: WeightFamily) -> Self {
        let mut form = Form::zero(0, 0, family);
        form.set(MultiIndex::empty(), MultiIndex::empty(), f).unwrap();
        form
    }

    pub fn from_entries(s: usize, t: usize, entries: &[FormEntry], family: WeightFamily) -> Result<Self> {
        let mut f = Form::zero(s, t, family);
        for e in entries {
            let expr = parse(&e.coeff)?;
            let i = MultiIndex::new(e.i.clone())?;
            let j = MultiIndex::new(e.j.clone())?;
            let c = match e.cutoff {
                Some(r) => {
                    let dim = expr.max_index().max(i.max_entry()).max(j.max_entry()).max(1);
                    CylinderFn::with_cutoff(expr, dim, r)
                }
                None => CylinderFn::new(expr),
            };
            let c = match f.get(&i, &j) {
                Some(prev) => CylinderFn {
                    expr: prev.expr.clone() + c.expr,
                    dim: prev.dim.max(c.dim),
                    support_radius: max_radius(prev.support_radius, c.support_radius),
                },
                None => c,
            };
            f.set(i, j, c)?;
        }
        Ok(f)
    }

    pub fn degree(&self) -> (usize, usize) {
        (self.s, self.t)
    }

    pub fn family(&self) -> &WeightFamily {
        &self.family
    }

    pub fn with_family(mut self, family: WeightFamily) -> Self {
        self.family = family;
        self
    }

    /// Set one coefficient; a literally-zero expression removes the key.
    pub fn set(&mut self, i: MultiIndex, j: MultiIndex, f: CylinderFn) -> Result<()> {
        if i.len() != self.s || j.len() != self.t {
            return Err(Error::DegreeMismatch(format!(
                "key ({i},{j}) in a ({},{})-form",
                self.s, self.t
            )));
        }
        if f.expr.is_zero() {
            self.coeffs.remove(&(i, j));
        } else {
            self.coeffs.insert((i, j), f);
        }
        Ok(())
    }

    pub fn get(&self, i: &MultiIndex, j: &MultiIndex) -> Option<&CylinderFn> {
        self.coeffs.get(&(i.clone(), j.clone()))
    }

    /// Coefficient expression, zero when absent.
    pub fn coeff(&self, i: &MultiIndex, j: &MultiIndex) -> Expr {
        self.get(i, j).map(|c| c.expr.clone()).unwrap_or_else(Expr::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &CylinderFn)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest index in any key or coefficient.
    pub fn max_index(&self) -> usize {
        self.coeffs
            .iter()
            .map(|((i, j), c)| i.max_entry().max(j.max_entry()).max(c.dim))
            .max()
            .unwrap_or(0)
    }

    /// Largest coordinate any coefficient reads.
    pub fn dim(&self) -> usize {
        self.coeffs.values().map(|c| c.dim).max().unwrap_or(0)
    }

    /// Max declared radius over coefficients; `None` if any is unbounded,
    /// `Some(0)` for the zero form.
    pub fn support_radius(&self) -> Option<f64> {
        self.coeffs
            .values()
            .try_fold(0.0f64, |acc, c| c.support_radius.map(|r| acc.max(r)))
    }

    fn check_same(&self, other: &Form) -> Result<()> {
        if self.degree() != other.degree() {
            return Err(Error::DegreeMismatch(format!(
                "{:?} vs {:?}",
                self.degree(),
                other.degree()
            )));
        }
        Ok(())
    }

    fn combine(&self, other: &Form, sign: f64) -> Result<Form> {
        self.check_same(other)?;
        let mut out = self.clone();
        for ((i, j), c) in &other.coeffs {
            let merged = match self.coeffs.get(&(i.clone(), j.clone())) {
                Some(a) => CylinderFn {
                    expr: a.expr.clone() + c.expr.clone() * sign,
                    dim: a.dim.max(c.dim),
                    support_radius: max_radius(a.support_radius, c.support_radius),
                },
                None => c.map(|e| e.clone() * sign),
            };
            out.set(i.clone(), j.clone(), merged)?;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Form) -> Result<Form> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Form) -> Result<Form> {
        self.combine(other, -1.0)
    }

    pub fn scale(&self, c: C64) -> Form {
        let mut out = Form::zero(self.s, self.t, self.family.clone());
        if c == C64::new(0.0, 0.0) {
            return out;
        }
        for ((i, j), f) in &self.coeffs {
            out.coeffs.insert((i.clone(), j.clone()), f.map(|e| e.clone() * c));
        }
        out
    }

    /// Multiply every coefficient by a function.
    pub fn mul_fn(&self, m: &Expr) -> Form {
        self.map_coeffs(|e| e * m)
    }

    /// Apply a support-preserving map to every coefficient.
    pub fn map_coeffs(&self, f: impl Fn(&Expr) -> Expr) -> Form {
        let mut out = Form::zero(self.s, self.t, self.family.clone());
        for ((i, j), c) in &self.coeffs {
            let m = c.map(&f);
            if !m.expr.is_zero() {
                out.coeffs.insert((i.clone(), j.clone()), m);
            }
        }
        out
    }

    /// `f_{I,iL} = Σ'_J ε^J_{iL} f_{I,J}`: zero when `i ∈ L`, otherwise
    /// `ε f_{I,K}` with `K = sorted({i} ∪ L)`.
    pub fn contract(&self, i_idx: &MultiIndex, i: usize, l: &MultiIndex) -> Result<Expr> {
        if l.len() + 1 != self.t || i_idx.len() != self.s {
            return Err(Error::DegreeMismatch(format!(
                "contract ({i_idx}, {i}, {l}) on a ({},{})-form",
                self.s, self.t
            )));
        }
        Ok(match insert(i, l) {
            (_, None) => Expr::zero(),
            (_, Some(k)) => {
                let e = epsilon(i, l, &k);
                self.coeff(i_idx, &k) * e as f64
            }
        })
    }

    /// `Σ' c_{I,J} u_{I,J} conj(v_{I,J}) e^{-w}` as one expression.
    pub fn inner_integrand(&self, other: &Form, w: &Expr) -> Result<Expr> {
        self.check_same(other)?;
        let mut acc = Expr::zero();
        for ((i, j), u) in &self.coeffs {
            if let Some(v) = other.coeffs.get(&(i.clone(), j.clone())) {
                let c = self.family.coeff(i, j)?;
                acc = acc + u.expr.clone() * v.expr.conj() * c;
            }
        }
        Ok(acc * (-w).exp())
    }

    /// `Σ' c_{I,J} |f_{I,J}|^2 e^{-w}`.
    pub fn norm_integrand(&self, w: &Expr) -> Result<Expr> {
        self.inner_integrand(self, w)
    }

    /// `<u, v>_w = Σ' c_{I,J} ∫ u_{I,J} conj(v_{I,J}) e^{-w} dP`.
    pub fn inner(&self, other: &Form, w: &Expr, spec: &GaussianSpec, quad: &Quadrature) -> Result<MCEstimate> {
        let e = self.inner_integrand(other, w)?;
        Ok(integrate_many(spec, quad, &[e])?[0])
    }

    /// `‖f‖_w^2`.
    pub fn norm_sq(&self, w: &Expr, spec: &GaussianSpec, quad: &Quadrature) -> Result<MCEstimate> {
        if self.is_zero() {
            return Ok(MCEstimate::exact(C64::new(0.0, 0.0)));
        }
        let mut est = self.inner(self, w, spec, quad)?;
        est.mean = C64::new(est.mean.re, 0.0);
        Ok(est)
    }

    /// Wedge product of an `(s1,t1)` form with an `(s2,t2)` form, reordering
    /// `dz_{I1} ∧ dz̄_{J1} ∧ dz_{I2} ∧ dz̄_{J2}` into `± dz_I ∧ dz̄_J`.
    pub fn wedge(&self, other: &Form) -> Form {
        let (s, t) = (self.s + other.s, self.t + other.t);
        let swap = if (self.t * other.s).is_multiple_of(2) { 1.0 } else { -1.0 };
        let mut acc: BTreeMap<Key, CylinderFn> = BTreeMap::new();
        for ((i1, j1), a) in &self.coeffs {
            for ((i2, j2), b) in &other.coeffs {
                let (si, ki) = merge(i1, i2);
                let (sj, kj) = merge(j1, j2);
                let (Some(ki), Some(kj)) = (ki, kj) else {
                    continue;
                };
                let sign = swap * (si * sj) as f64;
                let term = a.expr.clone() * b.expr.clone() * sign;
                let radius = min_radius(a.support_radius, b.support_radius);
                let entry = acc.entry((ki, kj)).or_insert(CylinderFn {
                    expr: Expr::zero(),
                    dim: 0,
                    support_radius: radius,
                });
                entry.expr = entry.expr.clone() + term;
                entry.dim = entry.expr.max_index();
                entry.support_radius = max_radius(entry.support_radius, radius);
            }
        }
        let mut out = Form::zero(s, t, self.family.clone());
        for ((i, j), c) in acc {
            out.set(i, j, c).expect("wedge keys have the right degree");
        }
        out
    }

    /// Evaluate every coefficient at a point.
    pub fn eval_coeffs(&self, point: &[f64]) -> Result<Vec<(Key, C64)>> {
        let keys: Vec<Key> = self.coeffs.keys().cloned().collect();
        let exprs: Vec<Expr> = self.coeffs.values().map(|c| c.expr.clone()).collect();
        let vals = crate::symfun::Compiled::new(&exprs)
            .eval(point)
            .map_err(|e| Error::eval(point, e))?;
        Ok(keys.into_iter().zip(vals).collect())
    }
}

fn max_radius(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a?.max(b?))
}

fn min_radius(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}
