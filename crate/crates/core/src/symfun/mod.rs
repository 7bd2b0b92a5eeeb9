//! Complex-valued expressions in the real coordinates `x_i, y_i` with exact
//! symbolic partial derivatives, Wirtinger operators and the Gaussian-weighted
//! `delta_i` / `sigma_i` operators.
//!
//! Points are flat slices `[x_1, y_1, x_2, y_2, ...]`.

mod compile;
mod diff;
pub mod fd;
mod parse;
pub mod realfn;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

pub use compile::{Compiled, Evaluator};
pub use parse::parse;
pub use realfn::{Bump, ExprRealFn, RealFn};

use crate::error::EvalError;

pub type C64 = Complex64;

/// One real coordinate: `X(i)` is `Re z_i`, `Y(i)` is `Im z_i` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    Y(usize),
}

impl Var {
    /// Position in the flat point layout.
    pub fn slot(self) -> usize {
        match self {
            Var::X(i) => 2 * (i - 1),
            Var::Y(i) => 2 * (i - 1) + 1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Var::X(i) | Var::Y(i) => i,
        }
    }

    /// Every coordinate of the first `n` complex variables.
    pub fn all(n: usize) -> Vec<Var> {
        (1..=n).flat_map(|i| [Var::X(i), Var::Y(i)]).collect()
    }
}

/// A function of a point that is not expressible symbolically, e.g. a
/// quadrature-backed partial integral or a grid convolution.
pub trait PointFn: Send + Sync + fmt::Debug {
    fn eval(&self, point: &[f64]) -> Result<C64, EvalError>;
    /// Number of complex coordinates read.
    fn dim(&self) -> usize;
    /// Exact partial derivative if available; `None` falls back to central differences.
    fn partial(&self, _var: Var) -> Option<Arc<dyn PointFn>> {
        None
    }
    /// Radius outside which the function vanishes, when known.
    fn support_radius(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug)]
pub enum Node {
    Const(C64),
    X(usize),
    Y(usize),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Pow(Expr, i32),
    Exp(Expr),
    Log(Expr),
    Sin(Expr),
    Cos(Expr),
    Conj(Expr),
    /// `f^{(order)}(Re arg)` for a real function of one real variable.
    Apply {
        f: Arc<dyn RealFn>,
        order: usize,
        arg: Expr,
    },
    Opaque(Arc<dyn PointFn>),
}

#[derive(Clone)]
pub struct Expr(pub(crate) Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

fn is_zero(c: C64) -> bool {
    c.re == 0.0 && c.im == 0.0
}

fn is_one(c: C64) -> bool {
    c.re == 1.0 && c.im == 0.0
}

impl Expr {
    fn new(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    pub fn constant(c: impl Into<C64>) -> Expr {
        Expr::new(Node::Const(c.into()))
    }

    pub fn real(v: f64) -> Expr {
        Expr::constant(C64::new(v, 0.0))
    }

    pub fn zero() -> Expr {
        Expr::real(0.0)
    }

    pub fn one() -> Expr {
        Expr::real(1.0)
    }

    pub fn imag_unit() -> Expr {
        Expr::constant(C64::new(0.0, 1.0))
    }

    pub fn x(i: usize) -> Expr {
        assert!(i >= 1, "variable index must be >= 1");
        Expr::new(Node::X(i))
    }

    pub fn y(i: usize) -> Expr {
        assert!(i >= 1, "variable index must be >= 1");
        Expr::new(Node::Y(i))
    }

    pub fn var(v: Var) -> Expr {
        match v {
            Var::X(i) => Expr::x(i),
            Var::Y(i) => Expr::y(i),
        }
    }

    /// `z_i = x_i + i y_i`.
    pub fn z(i: usize) -> Expr {
        Expr::x(i) + Expr::imag_unit() * Expr::y(i)
    }

    /// `conj(z_i) = x_i - i y_i`.
    pub fn zb(i: usize) -> Expr {
        Expr::x(i) - Expr::imag_unit() * Expr::y(i)
    }

    /// `|z_1|^2 + ... + |z_n|^2`.
    pub fn norm_sq(n: usize) -> Expr {
        (1..=n).fold(Expr::zero(), |acc, i| {
            acc + Expr::x(i).powi(2) + Expr::y(i).powi(2)
        })
    }

    pub fn opaque(f: Arc<dyn PointFn>) -> Expr {
        Expr::new(Node::Opaque(f))
    }

    pub fn as_const(&self) -> Option<C64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(is_zero)
    }

    pub fn powi(&self, n: i32) -> Expr {
        if n == 0 {
            return Expr::one();
        }
        if n == 1 {
            return self.clone();
        }
        if let Some(c) = self.as_const() {
            return Expr::constant(c.powi(n));
        }
        Expr::new(Node::Pow(self.clone(), n))
    }

    pub fn exp(&self) -> Expr {
        if let Some(c) = self.as_const() {
            return Expr::constant(c.exp());
        }
        Expr::new(Node::Exp(self.clone()))
    }

    pub fn ln(&self) -> Expr {
        if let Some(c) = self.as_const() {
            if is_one(c) {
                return Expr::zero();
            }
        }
        Expr::new(Node::Log(self.clone()))
    }

    pub fn sin(&self) -> Expr {
        if self.is_zero() {
            return Expr::zero();
        }
        Expr::new(Node::Sin(self.clone()))
    }

    pub fn cos(&self) -> Expr {
        if self.is_zero() {
            return Expr::one();
        }
        Expr::new(Node::Cos(self.clone()))
    }

    /// `bump(t) = exp(-1/(1-t^2))` on `(-1,1)`, zero elsewhere, applied to `Re self`.
    pub fn bump(&self) -> Expr {
        self.apply(realfn::bump(), 0)
    }

    pub fn apply(&self, f: Arc<dyn RealFn>, order: usize) -> Expr {
        Expr::new(Node::Apply {
            f,
            order,
            arg: self.clone(),
        })
    }

    /// Complex conjugate, pushed through the tree symbolically.
    pub fn conj(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(c.conj()),
            Node::X(_) | Node::Y(_) | Node::Apply { .. } => self.clone(),
            Node::Add(a, b) => a.conj() + b.conj(),
            Node::Sub(a, b) => a.conj() - b.conj(),
            Node::Mul(a, b) => a.conj() * b.conj(),
            Node::Div(a, b) => a.conj() / b.conj(),
            Node::Neg(a) => -a.conj(),
            Node::Pow(a, n) => a.conj().powi(*n),
            Node::Exp(a) => a.conj().exp(),
            Node::Log(a) => a.conj().ln(),
            Node::Sin(a) => a.conj().sin(),
            Node::Cos(a) => a.conj().cos(),
            Node::Conj(a) => a.clone(),
            Node::Opaque(_) => Expr::new(Node::Conj(self.clone())),
        }
    }

    /// Real part, `(e + conj e)/2`.
    pub fn re(&self) -> Expr {
        (self.clone() + self.conj()) * 0.5
    }

    /// `|e|^2 = e * conj(e)`.
    pub fn abs_sq(&self) -> Expr {
        self.clone() * self.conj()
    }

    /// Largest variable index appearing (0 for constants).
    pub fn max_index(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut best = 0;
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            match e.node() {
                Node::Const(_) => {}
                Node::X(i) | Node::Y(i) => best = best.max(*i),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
                Node::Neg(a)
                | Node::Pow(a, _)
                | Node::Exp(a)
                | Node::Log(a)
                | Node::Sin(a)
                | Node::Cos(a)
                | Node::Conj(a) => stack.push(a.clone()),
                Node::Apply { arg, .. } => stack.push(arg.clone()),
                Node::Opaque(f) => best = best.max(f.dim()),
            }
        }
        best
    }

    /// Partial derivative in one real coordinate.
    pub fn d(&self, v: Var) -> Expr {
        diff::Differentiator::new(v).diff(self)
    }

    pub fn d_dx(&self, i: usize) -> Expr {
        self.d(Var::X(i))
    }

    pub fn d_dy(&self, i: usize) -> Expr {
        self.d(Var::Y(i))
    }

    /// `∂_i = (d/dx_i - i d/dy_i)/2`.
    pub fn del(&self, i: usize) -> Expr {
        (self.d_dx(i) - Expr::imag_unit() * self.d_dy(i)) * 0.5
    }

    /// `∂̄_i = (d/dx_i + i d/dy_i)/2`.
    pub fn delbar(&self, i: usize) -> Expr {
        (self.d_dx(i) + Expr::imag_unit() * self.d_dy(i)) * 0.5
    }

    pub fn wirtinger(&self, i: usize) -> (Expr, Expr) {
        (self.del(i), self.delbar(i))
    }

    /// `δ_i f = ∂_i f - conj(z_i) f / (2 a_i^2)`.
    pub fn delta(&self, i: usize, a_i: f64) -> Expr {
        assert!(a_i > 0.0, "a_i must be positive");
        self.del(i) - Expr::zb(i) * self.clone() * (1.0 / (2.0 * a_i * a_i))
    }

    /// `σ_i f = δ_i f - f ∂_i φ`.
    pub fn sigma(&self, i: usize, a_i: f64, varphi: &Expr) -> Expr {
        self.delta(i, a_i) - self.clone() * varphi.del(i)
    }

    /// Substitute coordinates: every `X(i)` / `Y(i)` is replaced by `map(var)`.
    /// Opaque leaves are left untouched, so callers must not substitute into them.
    pub fn substitute(&self, map: &dyn Fn(Var) -> Expr) -> Expr {
        let mut memo = std::collections::HashMap::new();
        subst(self, map, &mut memo)
    }

    pub fn compile(&self) -> Compiled {
        Compiled::new(std::slice::from_ref(self))
    }

    /// Convenience single-point evaluation (compiles on every call).
    pub fn eval(&self, point: &[f64]) -> Result<C64, EvalError> {
        self.compile().eval1(point)
    }
}

fn subst(
    e: &Expr,
    map: &dyn Fn(Var) -> Expr,
    memo: &mut std::collections::HashMap<*const Node, Expr>,
) -> Expr {
    if let Some(r) = memo.get(&e.ptr()) {
        return r.clone();
    }
    let mut s = |x: &Expr| subst(x, map, memo);
    let r = match e.node() {
        Node::Const(_) | Node::Opaque(_) => e.clone(),
        Node::X(i) => map(Var::X(*i)),
        Node::Y(i) => map(Var::Y(*i)),
        Node::Add(a, b) => s(a) + s(b),
        Node::Sub(a, b) => s(a) - s(b),
        Node::Mul(a, b) => s(a) * s(b),
        Node::Div(a, b) => s(a) / s(b),
        Node::Neg(a) => -s(a),
        Node::Pow(a, n) => s(a).powi(*n),
        Node::Exp(a) => s(a).exp(),
        Node::Log(a) => s(a).ln(),
        Node::Sin(a) => s(a).sin(),
        Node::Cos(a) => s(a).cos(),
        Node::Conj(a) => s(a).conj(),
        Node::Apply { f, order, arg } => s(arg).apply(f.clone(), *order),
    };
    memo.insert(e.ptr(), r.clone());
    r
}

macro_rules! binop {
    ($trait:ident, $method:ident, $build:ident) => {
        impl std::ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $build(self, rhs)
            }
        }
        impl std::ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $build(self.clone(), rhs.clone())
            }
        }
        impl std::ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $build(self, rhs.clone())
            }
        }
        impl std::ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $build(self.clone(), rhs)
            }
        }
        impl std::ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $build(self, Expr::real(rhs))
            }
        }
        impl std::ops::$trait<C64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: C64) -> Expr {
                $build(self, Expr::constant(rhs))
            }
        }
        impl std::ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $build(Expr::real(self), rhs)
            }
        }
    };
}

fn build_add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::constant(x + y),
        (Some(x), _) if is_zero(x) => b,
        (_, Some(y)) if is_zero(y) => a,
        _ => Expr::new(Node::Add(a, b)),
    }
}

fn build_sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::constant(x - y),
        (Some(x), _) if is_zero(x) => -b,
        (_, Some(y)) if is_zero(y) => a,
        _ => Expr::new(Node::Sub(a, b)),
    }
}

fn build_mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::constant(x * y),
        (Some(x), _) if is_zero(x) => Expr::zero(),
        (_, Some(y)) if is_zero(y) => Expr::zero(),
        (Some(x), _) if is_one(x) => b,
        (_, Some(y)) if is_one(y) => a,
        _ => Expr::new(Node::Mul(a, b)),
    }
}

fn build_div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if !is_zero(y) => Expr::constant(x / y),
        (Some(x), _) if is_zero(x) => Expr::zero(),
        (_, Some(y)) if is_one(y) => a,
        _ => Expr::new(Node::Div(a, b)),
    }
}

binop!(Add, add, build_add);
binop!(Sub, sub, build_sub);
binop!(Mul, mul, build_mul);
binop!(Div, div, build_div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        if let Some(c) = self.as_const() {
            return Expr::constant(-c);
        }
        if let Node::Neg(a) = self.node() {
            return a.clone();
        }
        Expr::new(Node::Neg(self))
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -self.clone()
    }
}

impl std::iter::Sum for Expr {
    fn sum<It: Iterator<Item = Expr>>(iter: It) -> Expr {
        iter.fold(Expr::zero(), |a, b| a + b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => {
                if c.im == 0.0 {
                    write!(f, "{}", c.re)
                } else {
                    write!(f, "({}+{}*i)", c.re, c.im)
                }
            }
            Node::X(i) => write!(f, "x({i})"),
            Node::Y(i) => write!(f, "y({i})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "{a}*{b}"),
            Node::Div(a, b) => write!(f, "{a}/({b})"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Pow(a, n) => write!(f, "({a})^{n}"),
            Node::Exp(a) => write!(f, "exp({a})"),
            Node::Log(a) => write!(f, "log({a})"),
            Node::Sin(a) => write!(f, "sin({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
            Node::Conj(a) => write!(f, "conj({a})"),
            Node::Apply { f: func, order, arg } => {
                if *order == 0 {
                    write!(f, "{}({arg})", func.name())
                } else {
                    write!(f, "{}^({order})({arg})", func.name())
                }
            }
            Node::Opaque(p) => write!(f, "<{p:?}>"),
        }
    }
}

/// An expression together with its dimension and declared support radius.
#[derive(Clone, Debug)]
pub struct CylinderFn {
    pub expr: Expr,
    pub dim: usize,
    /// `Some(R)`: the function vanishes whenever `|z_1|^2+...+|z_dim|^2 > R^2`.
    pub support_radius: Option<f64>,
}

impl CylinderFn {
    pub fn new(expr: Expr) -> Self {
        let dim = expr.max_index();
        CylinderFn {
            expr,
            dim,
            support_radius: None,
        }
    }

    /// Multiply by `bump(|z|^2 / R^2)`, which vanishes for `|z| >= R`.
    pub fn with_cutoff(expr: Expr, dim: usize, radius: f64) -> Self {
        let cut = (Expr::norm_sq(dim) * (1.0 / (radius * radius))).bump();
        let expr = expr * cut;
        let dim = expr.max_index().max(dim);
        CylinderFn {
            expr,
            dim,
            support_radius: Some(radius),
        }
    }

    /// Declare a support radius already guaranteed by the expression.
    pub fn with_support(expr: Expr, radius: Option<f64>) -> Self {
        let mut f = CylinderFn::new(expr);
        f.support_radius = radius;
        f
    }

    pub fn parse(text: &str) -> crate::error::Result<Self> {
        Ok(CylinderFn::new(parse(text)?))
    }

    /// Apply a support-preserving map (derivative, scaling, product with anything).
    pub fn map(&self, f: impl FnOnce(&Expr) -> Expr) -> Self {
        let expr = f(&self.expr);
        let dim = expr.max_index();
        CylinderFn {
            expr,
            dim,
            support_radius: self.support_radius,
        }
    }
}

impl From<Expr> for CylinderFn {
    fn from(e: Expr) -> Self {
        CylinderFn::new(e)
    }
}

#[cfg(test)]
mod tests;
