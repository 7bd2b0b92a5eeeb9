use std::collections::HashMap;
use std::sync::Arc;

use super::fd::FdPartial;
use super::{Expr, Node, Var};

pub(super) struct Differentiator {
    var: Var,
    memo: HashMap<*const Node, Expr>,
}

impl Differentiator {
    pub(super) fn new(var: Var) -> Self {
        Differentiator {
            var,
            memo: HashMap::new(),
        }
    }

    pub(super) fn diff(&mut self, e: &Expr) -> Expr {
        if let Some(d) = self.memo.get(&e.ptr()) {
            return d.clone();
        }
        let d = self.rule(e);
        self.memo.insert(e.ptr(), d.clone());
        d
    }

    fn rule(&mut self, e: &Expr) -> Expr {
        match e.node() {
            Node::Const(_) => Expr::zero(),
            Node::X(i) => indicator(self.var == Var::X(*i)),
            Node::Y(i) => indicator(self.var == Var::Y(*i)),
            Node::Add(a, b) => self.diff(a) + self.diff(b),
            Node::Sub(a, b) => self.diff(a) - self.diff(b),
            Node::Mul(a, b) => {
                let (da, db) = (self.diff(a), self.diff(b));
                da * b + a * db
            }
            Node::Div(a, b) => {
                let (da, db) = (self.diff(a), self.diff(b));
                if db.is_zero() {
                    da / b
                } else {
                    da / b - a * db / b.powi(2)
                }
            }
            Node::Neg(a) => -self.diff(a),
            Node::Pow(a, n) => {
                let da = self.diff(a);
                if da.is_zero() {
                    return Expr::zero();
                }
                a.powi(n - 1) * (*n as f64) * da
            }
            Node::Exp(a) => {
                let da = self.diff(a);
                e * da
            }
            Node::Log(a) => {
                let da = self.diff(a);
                da / a
            }
            Node::Sin(a) => {
                let da = self.diff(a);
                a.cos() * da
            }
            Node::Cos(a) => {
                let da = self.diff(a);
                -(a.sin() * da)
            }
            Node::Conj(a) => self.diff(a).conj(),
            Node::Apply { f, order, arg } => {
                let da = self.diff(arg);
                if da.is_zero() {
                    return Expr::zero();
                }
                let da = if is_real(arg) { da } else { da.re() };
                arg.apply(f.clone(), order + 1) * da
            }
            Node::Opaque(p) => {
                if p.dim() < self.var.index() {
                    return Expr::zero();
                }
                match p.partial(self.var) {
                    Some(dp) => Expr::opaque(dp),
                    None => Expr::opaque(Arc::new(FdPartial::new(p.clone(), self.var))),
                }
            }
        }
    }
}

fn indicator(b: bool) -> Expr {
    if b {
        Expr::one()
    } else {
        Expr::zero()
    }
}

/// Syntactic check that an expression is real-valued wherever it is defined.
fn is_real(e: &Expr) -> bool {
    match e.node() {
        Node::Const(c) => c.im == 0.0,
        Node::X(_) | Node::Y(_) | Node::Apply { .. } => true,
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            is_real(a) && is_real(b)
        }
        Node::Neg(a) | Node::Pow(a, _) | Node::Exp(a) | Node::Sin(a) | Node::Cos(a) => is_real(a),
        Node::Log(_) | Node::Conj(_) | Node::Opaque(_) => false,
    }
}
