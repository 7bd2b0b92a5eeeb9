//! Real functions of one real variable with derivatives of every order, used
//! as `Apply` leaves inside expressions.

use std::sync::{Arc, OnceLock};

use super::{Compiled, Expr};

pub trait RealFn: Send + Sync {
    /// The `order`-th derivative at `t`.
    fn eval(&self, order: usize, t: f64) -> f64;
    fn name(&self) -> &str;
}

/// `bump(t) = exp(-1/(1-t^2))` on `(-1,1)`, zero elsewhere.
///
/// `bump^{(k)}(t) = bump(t) P_k(t) / (1-t^2)^{2k}` with `P_0 = 1` and
/// `P_{k+1} = P_k' s^2 + 4 k t s P_k - 2 t P_k`, `s = 1 - t^2`.
pub struct Bump {
    polys: Vec<Vec<f64>>,
}

const BUMP_MAX_ORDER: usize = 12;

impl Bump {
    fn new() -> Self {
        let mut polys = vec![vec![1.0]];
        for k in 0..BUMP_MAX_ORDER {
            let p = &polys[k];
            // s = 1 - t^2, s^2 = 1 - 2t^2 + t^4
            let dp: Vec<f64> = (1..p.len()).map(|j| j as f64 * p[j]).collect();
            let mut next = vec![0.0; p.len() + 4];
            for (j, &c) in dp.iter().enumerate() {
                next[j] += c;
                next[j + 2] -= 2.0 * c;
                next[j + 4] += c;
            }
            let kk = 4.0 * k as f64;
            for (j, &c) in p.iter().enumerate() {
                // 4k t (1 - t^2) P - 2 t P
                next[j + 1] += (kk - 2.0) * c;
                next[j + 3] -= kk * c;
            }
            while next.len() > 1 && *next.last().unwrap() == 0.0 {
                next.pop();
            }
            polys.push(next);
        }
        Bump { polys }
    }
}

impl RealFn for Bump {
    fn eval(&self, order: usize, t: f64) -> f64 {
        if !(t > -1.0 && t < 1.0) {
            return 0.0;
        }
        let s = 1.0 - t * t;
        let e = (-1.0 / s).exp();
        if e == 0.0 {
            return 0.0;
        }
        if order == 0 {
            return e;
        }
        let p = self
            .polys
            .get(order)
            .unwrap_or_else(|| panic!("bump derivatives beyond order {BUMP_MAX_ORDER}"));
        let pv = p.iter().rev().fold(0.0, |acc, &c| acc * t + c);
        e * pv / s.powi(2 * order as i32)
    }

    fn name(&self) -> &str {
        "bump"
    }
}

pub fn bump() -> Arc<dyn RealFn> {
    static B: OnceLock<Arc<Bump>> = OnceLock::new();
    B.get_or_init(|| Arc::new(Bump::new())).clone()
}

const EXPR_MAX_ORDER: usize = 8;

/// A real function given by an expression in `x(1)` on the open interval
/// `(lo, hi)`, extended by constants outside (all derivatives zero there).
/// Derivative expressions are built and compiled lazily.
pub struct ExprRealFn {
    name: String,
    lo: f64,
    hi: f64,
    left: f64,
    right: f64,
    exprs: Vec<OnceLock<Expr>>,
    tapes: Vec<OnceLock<Compiled>>,
}

impl ExprRealFn {
    pub fn new(name: impl Into<String>, expr: Expr, lo: f64, hi: f64, left: f64, right: f64) -> Self {
        let exprs: Vec<OnceLock<Expr>> = (0..=EXPR_MAX_ORDER).map(|_| OnceLock::new()).collect();
        let _ = exprs[0].set(expr);
        ExprRealFn {
            name: name.into(),
            lo,
            hi,
            left,
            right,
            exprs,
            tapes: (0..=EXPR_MAX_ORDER).map(|_| OnceLock::new()).collect(),
        }
    }

    fn expr(&self, order: usize) -> &Expr {
        if let Some(e) = self.exprs[order].get() {
            return e;
        }
        let prev = self.expr(order - 1).d_dx(1);
        self.exprs[order].get_or_init(|| prev)
    }

    fn tape(&self, order: usize) -> &Compiled {
        assert!(
            order <= EXPR_MAX_ORDER,
            "{}: derivatives beyond order {EXPR_MAX_ORDER}",
            self.name
        );
        self.tapes[order].get_or_init(|| self.expr(order).compile())
    }
}

impl RealFn for ExprRealFn {
    fn eval(&self, order: usize, t: f64) -> f64 {
        if t <= self.lo {
            return if order == 0 { self.left } else { 0.0 };
        }
        if t >= self.hi {
            return if order == 0 { self.right } else { 0.0 };
        }
        let v = self.tape(order).eval_fast(&[t, 0.0]).map(|c| c.re);
        // Interior underflow (e.g. exp(-1/u) near an endpoint) yields 0*inf
        // patterns the zero-product rule already absorbs; anything else is a bug.
        v.unwrap_or_else(|e| panic!("{} ({order}) at {t}: {e}", self.name))
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// The smooth decreasing germ `(e^{1/(x-1)} - 1) e^{-e^{1/(x-1)}/x} + 1` on
/// `(0,1)`: equal to 1 for `x <= 0` and 0 for `x >= 1`, flat to all orders at
/// both ends.
pub fn germ() -> Arc<dyn RealFn> {
    static G: OnceLock<Arc<ExprRealFn>> = OnceLock::new();
    G.get_or_init(|| {
        let x = Expr::x(1);
        let e = (1.0 / (x.clone() - 1.0)).exp();
        let expr = (e.clone() - 1.0) * (-(e / x)).exp() + 1.0;
        Arc::new(ExprRealFn::new("germ", expr, 0.0, 1.0, 1.0, 0.0))
    })
    .clone()
}

/// `1 - germ(u)`: a smooth nondecreasing step from 0 (u <= 0) to 1 (u >= 1).
pub fn smooth_step() -> Arc<dyn RealFn> {
    static S: OnceLock<Arc<ExprRealFn>> = OnceLock::new();
    S.get_or_init(|| {
        let x = Expr::x(1);
        let e = (1.0 / (x.clone() - 1.0)).exp();
        let expr = -((e.clone() - 1.0) * (-(e / x)).exp());
        Arc::new(ExprRealFn::new("step", expr, 0.0, 1.0, 0.0, 1.0))
    })
    .clone()
}
