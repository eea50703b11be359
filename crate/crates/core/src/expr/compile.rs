use std::collections::HashMap;

use super::{BinOp, Expr, ExprError, Func, Node};

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    Var(usize),
    Neg(usize),
    Bin(BinOp, usize, usize),
    Call(Func, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Const(u64),
    Var(usize),
    Neg(usize),
    Bin(BinOp, usize, usize),
    Call(Func, usize),
}

/// A batch of expressions compiled against a fixed variable ordering.
///
/// Structurally identical subexpressions are evaluated once per call, which
/// matters for the derivative-heavy expressions built by the algebroid code.
#[derive(Debug, Clone)]
pub struct Program {
    instrs: Vec<Instr>,
    outputs: Vec<usize>,
    vars: Vec<String>,
}

struct Builder<'a> {
    vars: &'a [&'a str],
    instrs: Vec<Instr>,
    by_key: HashMap<Key, usize>,
    by_ptr: HashMap<*const Node, usize>,
}

impl Builder<'_> {
    fn push(&mut self, key: Key, instr: Instr) -> usize {
        if let Some(&slot) = self.by_key.get(&key) {
            return slot;
        }
        let slot = self.instrs.len();
        self.instrs.push(instr);
        self.by_key.insert(key, slot);
        slot
    }

    fn emit(&mut self, e: &Expr) -> Result<usize, ExprError> {
        if let Some(&slot) = self.by_ptr.get(&e.ptr()) {
            return Ok(slot);
        }
        let slot = match e.node() {
            Node::Const(v) => self.push(Key::Const(v.to_bits()), Instr::Const(*v)),
            Node::Pi => {
                let v = std::f64::consts::PI;
                self.push(Key::Const(v.to_bits()), Instr::Const(v))
            }
            Node::Var(name) => {
                let idx = self
                    .vars
                    .iter()
                    .position(|v| *v == &**name)
                    .ok_or_else(|| ExprError::UnboundVariable(name.to_string()))?;
                self.push(Key::Var(idx), Instr::Var(idx))
            }
            Node::Neg(a) => {
                let a = self.emit(a)?;
                self.push(Key::Neg(a), Instr::Neg(a))
            }
            Node::Binary(op, a, b) => {
                let a = self.emit(a)?;
                let b = self.emit(b)?;
                self.push(Key::Bin(*op, a, b), Instr::Bin(*op, a, b))
            }
            Node::Call(f, a) => {
                let a = self.emit(a)?;
                self.push(Key::Call(*f, a), Instr::Call(*f, a))
            }
        };
        self.by_ptr.insert(e.ptr(), slot);
        Ok(slot)
    }
}

impl Program {
    pub fn new(exprs: &[Expr], vars: &[&str]) -> Result<Program, ExprError> {
        let mut b = Builder { vars, instrs: Vec::new(), by_key: HashMap::new(), by_ptr: HashMap::new() };
        let outputs = exprs.iter().map(|e| b.emit(e)).collect::<Result<Vec<_>, _>>()?;
        Ok(Program { instrs: b.instrs, outputs, vars: vars.iter().map(|s| s.to_string()).collect() })
    }

    pub fn single(expr: &Expr, vars: &[&str]) -> Result<Program, ExprError> {
        Program::new(std::slice::from_ref(expr), vars)
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn eval_into(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<(), ExprError> {
        debug_assert_eq!(x.len(), self.vars.len());
        debug_assert_eq!(out.len(), self.outputs.len());
        scratch.clear();
        scratch.reserve(self.instrs.len());
        for instr in &self.instrs {
            let v = match *instr {
                Instr::Const(c) => c,
                Instr::Var(i) => x[i],
                Instr::Neg(a) => -scratch[a],
                Instr::Bin(op, a, b) => op.apply(scratch[a], scratch[b])?,
                Instr::Call(f, a) => f.apply(scratch[a])?,
            };
            scratch.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot];
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut out = vec![0.0; self.outputs.len()];
        let mut scratch = Vec::new();
        self.eval_into(x, &mut scratch, &mut out)?;
        Ok(out)
    }

    pub fn eval_scalar(&self, x: &[f64]) -> Result<f64, ExprError> {
        Ok(self.eval(x)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn shares_common_subexpressions() {
        let a = parse("sqrt(x^2+y^2)*2").unwrap();
        let b = parse("sqrt(x^2+y^2)+1").unwrap();
        let p = Program::new(&[a, b], &["x", "y"]).unwrap();
        // x, 2, x^2, y, y^2, +, sqrt, *2, 1, +1
        assert_eq!(p.instrs.len(), 10);
        let v = p.eval(&[3.0, 4.0]).unwrap();
        assert_eq!(v, vec![10.0, 6.0]);
    }

    #[test]
    fn reports_unbound_variables_at_compile_time() {
        let e = parse("x + w").unwrap();
        assert_eq!(Program::single(&e, &["x"]).unwrap_err(), ExprError::UnboundVariable("w".into()));
    }

    #[test]
    fn matches_tree_walk() {
        let e = parse("exp(-x*y)/(1+cos(x)^2) - log(2+sin(y))").unwrap();
        let p = Program::single(&e, &["x", "y"]).unwrap();
        for &(x, y) in &[(0.1, 0.2), (-1.0, 3.0), (2.5, -0.7)] {
            assert_eq!(p.eval_scalar(&[x, y]).unwrap(), e.eval_at(&["x", "y"], &[x, y]).unwrap());
        }
    }
}
