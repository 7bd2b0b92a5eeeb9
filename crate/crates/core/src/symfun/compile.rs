use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use super::{Expr, Node, PointFn, RealFn, C64};
use crate::error::EvalError;

#[derive(Debug, Clone)]
enum Instr {
    Const(C64),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Pow(usize, i32),
    Exp(usize),
    Log(usize),
    Sin(usize),
    Cos(usize),
    Conj(usize),
    Apply(Arc<dyn RealFn>, usize, usize),
    Opaque(Arc<dyn PointFn>),
}

impl std::fmt::Debug for dyn RealFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// A flattened evaluation tape for one or more expressions sharing subtrees.
///
/// Evaluation uses zero-extension semantics: a product with an exact zero
/// factor is zero even when the other factor is undefined, so coefficients
/// that vanish outside a domain mask weights that are undefined there.
#[derive(Debug, Clone)]
pub struct Compiled {
    instrs: Vec<Instr>,
    outputs: Vec<usize>,
    slots: usize,
}

impl Compiled {
    pub fn new(exprs: &[Expr]) -> Self {
        let mut b = Builder {
            instrs: Vec::new(),
            index: HashMap::new(),
            slots: 0,
        };
        let outputs = exprs.iter().map(|e| b.emit(e)).collect();
        Compiled {
            instrs: b.instrs,
            outputs,
            slots: b.slots,
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Minimum flat point length the tape reads.
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn tape_len(&self) -> usize {
        self.instrs.len()
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator {
            tape: self,
            regs: vec![C64::new(0.0, 0.0); self.instrs.len()],
        }
    }

    pub fn eval1(&self, point: &[f64]) -> Result<C64, EvalError> {
        let mut out = [C64::new(0.0, 0.0)];
        self.evaluator().eval_into(point, &mut out[..1.min(self.outputs.len())])?;
        Ok(out[0])
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<C64>, EvalError> {
        let mut out = vec![C64::new(0.0, 0.0); self.outputs.len()];
        self.evaluator().eval_into(point, &mut out)?;
        Ok(out)
    }
}

struct Builder {
    instrs: Vec<Instr>,
    index: HashMap<*const Node, usize>,
    slots: usize,
}

impl Builder {
    fn emit(&mut self, e: &Expr) -> usize {
        if let Some(&k) = self.index.get(&e.ptr()) {
            return k;
        }
        let ins = match e.node() {
            Node::Const(c) => Instr::Const(*c),
            Node::X(_) | Node::Y(_) => {
                let v = match e.node() {
                    Node::X(i) => super::Var::X(*i),
                    Node::Y(i) => super::Var::Y(*i),
                    _ => unreachable!(),
                };
                self.slots = self.slots.max(v.slot() + 1);
                Instr::Var(v.slot())
            }
            Node::Add(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Instr::Add(a, b)
            }
            Node::Sub(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Instr::Sub(a, b)
            }
            Node::Mul(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Instr::Mul(a, b)
            }
            Node::Div(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Instr::Div(a, b)
            }
            Node::Neg(a) => Instr::Neg(self.emit(a)),
            Node::Pow(a, n) => Instr::Pow(self.emit(a), *n),
            Node::Exp(a) => Instr::Exp(self.emit(a)),
            Node::Log(a) => Instr::Log(self.emit(a)),
            Node::Sin(a) => Instr::Sin(self.emit(a)),
            Node::Cos(a) => Instr::Cos(self.emit(a)),
            Node::Conj(a) => Instr::Conj(self.emit(a)),
            Node::Apply { f, order, arg } => Instr::Apply(f.clone(), *order, self.emit(arg)),
            Node::Opaque(p) => {
                self.slots = self.slots.max(2 * p.dim());
                Instr::Opaque(p.clone())
            }
        };
        self.instrs.push(ins);
        let k = self.instrs.len() - 1;
        self.index.insert(e.ptr(), k);
        k
    }
}

/// Reusable evaluation scratch space for one thread.
pub struct Evaluator<'a> {
    tape: &'a Compiled,
    regs: Vec<C64>,
}

const NAN: C64 = C64::new(f64::NAN, f64::NAN);

fn exact_zero(c: C64) -> bool {
    c.re == 0.0 && c.im == 0.0
}

impl Evaluator<'_> {
    pub fn eval_into(&mut self, point: &[f64], out: &mut [C64]) -> Result<(), EvalError> {
        self.tape.run(&mut self.regs, point, out)
    }
}

thread_local! {
    static SCRATCH: RefCell<Vec<C64>> = const { RefCell::new(Vec::new()) };
}

impl Compiled {
    /// First output at `point`, using a thread-local register file when it is free.
    pub fn eval_fast(&self, point: &[f64]) -> Result<C64, EvalError> {
        let mut out = [C64::new(0.0, 0.0)];
        let n = 1.min(self.outputs.len());
        SCRATCH.with(|s| match s.try_borrow_mut() {
            Ok(mut regs) => {
                if regs.len() < self.instrs.len() {
                    regs.resize(self.instrs.len(), C64::new(0.0, 0.0));
                }
                self.run(&mut regs, point, &mut out[..n])
            }
            Err(_) => self.evaluator().eval_into(point, &mut out[..n]),
        })?;
        Ok(out[0])
    }

    fn run(&self, regs: &mut [C64], point: &[f64], out: &mut [C64]) -> Result<(), EvalError> {
        let tape = self;
        if point.len() < tape.slots {
            return Err(EvalError::MissingVariable {
                needed: tape.slots.div_ceil(2),
                supplied: point.len() / 2,
            });
        }
        let mut first_err: Option<EvalError> = None;
        for (k, ins) in tape.instrs.iter().enumerate() {
            let v = match ins {
                Instr::Const(c) => *c,
                Instr::Var(s) => C64::new(point[*s], 0.0),
                Instr::Add(a, b) => regs[*a] + regs[*b],
                Instr::Sub(a, b) => regs[*a] - regs[*b],
                Instr::Mul(a, b) => {
                    let (x, y) = (regs[*a], regs[*b]);
                    if exact_zero(x) || exact_zero(y) {
                        C64::new(0.0, 0.0)
                    } else {
                        x * y
                    }
                }
                Instr::Div(a, b) => {
                    let (x, y) = (regs[*a], regs[*b]);
                    if exact_zero(y) {
                        first_err.get_or_insert(EvalError::DivisionByZero);
                        NAN
                    } else if exact_zero(x) {
                        C64::new(0.0, 0.0)
                    } else {
                        x / y
                    }
                }
                Instr::Neg(a) => -regs[*a],
                Instr::Pow(a, n) => {
                    let x = regs[*a];
                    if *n < 0 && exact_zero(x) {
                        first_err.get_or_insert(EvalError::DivisionByZero);
                        NAN
                    } else {
                        match n {
                            2 => x * x,
                            3 => x * x * x,
                            _ => x.powi(*n),
                        }
                    }
                }
                Instr::Exp(a) => {
                    let x = regs[*a];
                    if x.im == 0.0 {
                        C64::new(x.re.exp(), 0.0)
                    } else {
                        x.exp()
                    }
                }
                Instr::Log(a) => {
                    let x = regs[*a];
                    if x.im == 0.0 && x.re <= 0.0 {
                        first_err.get_or_insert(EvalError::LogNonPositive(x.re));
                        NAN
                    } else if x.im == 0.0 {
                        C64::new(x.re.ln(), 0.0)
                    } else {
                        x.ln()
                    }
                }
                Instr::Sin(a) => {
                    let x = regs[*a];
                    if x.im == 0.0 {
                        C64::new(x.re.sin(), 0.0)
                    } else {
                        x.sin()
                    }
                }
                Instr::Cos(a) => {
                    let x = regs[*a];
                    if x.im == 0.0 {
                        C64::new(x.re.cos(), 0.0)
                    } else {
                        x.cos()
                    }
                }
                Instr::Conj(a) => regs[*a].conj(),
                Instr::Apply(f, order, a) => {
                    let t = regs[*a].re;
                    if t.is_nan() {
                        NAN
                    } else {
                        C64::new(f.eval(*order, t), 0.0)
                    }
                }
                Instr::Opaque(p) => match p.eval(point) {
                    Ok(v) => v,
                    Err(e) => {
                        first_err.get_or_insert(e);
                        NAN
                    }
                },
            };
            regs[k] = v;
        }
        for (o, &k) in out.iter_mut().zip(&tape.outputs) {
            let v = regs[k];
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(first_err.unwrap_or(EvalError::NonFinite));
            }
            *o = v;
        }
        Ok(())
    }
}
