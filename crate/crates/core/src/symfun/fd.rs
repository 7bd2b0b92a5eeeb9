//! Central finite differences, used as an independent derivative oracle and as
//! the fallback partial of opaque functions.

use std::sync::Arc;

use super::{Expr, PointFn, Var, C64};
use crate::error::{EvalError, Result};

/// Central-difference partial of an opaque function.
#[derive(Debug)]
pub struct FdPartial {
    f: Arc<dyn PointFn>,
    var: Var,
    h: f64,
}

impl FdPartial {
    pub fn new(f: Arc<dyn PointFn>, var: Var) -> Self {
        FdPartial { f, var, h: 1e-4 }
    }
}

impl PointFn for FdPartial {
    fn eval(&self, point: &[f64]) -> std::result::Result<C64, EvalError> {
        let s = self.var.slot();
        let mut p = point.to_vec();
        p[s] = point[s] + self.h;
        let up = self.f.eval(&p)?;
        p[s] = point[s] - self.h;
        let dn = self.f.eval(&p)?;
        Ok((up - dn) / (2.0 * self.h))
    }

    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn support_radius(&self) -> Option<f64> {
        self.f.support_radius().map(|r| r + self.h)
    }
}

/// Central-difference estimate of `d e / d var` at `point`.
pub fn central_difference(e: &Expr, var: Var, point: &[f64], h: f64) -> Result<C64> {
    let tape = e.compile();
    let s = var.slot();
    let mut p = point.to_vec();
    if p.len() <= s {
        p.resize(s + 1, 0.0);
    }
    p[s] += h;
    let up = tape.eval1(&p).map_err(|err| crate::Error::eval(&p, err))?;
    p[s] -= 2.0 * h;
    let dn = tape.eval1(&p).map_err(|err| crate::Error::eval(&p, err))?;
    Ok((up - dn) / (2.0 * h))
}

/// Max over every coordinate of the point of `|symbolic - central difference|`.
pub fn fd_check(e: &Expr, point: &[f64], h: f64) -> Result<f64> {
    assert!(h > 0.0, "step must be positive");
    let n = point.len() / 2;
    let mut worst: f64 = 0.0;
    for v in Var::all(n) {
        let sym = e
            .d(v)
            .eval(point)
            .map_err(|err| crate::Error::eval(point, err))?;
        let fd = central_difference(e, v, point, h)?;
        worst = worst.max((sym - fd).norm());
    }
    Ok(worst)
}
