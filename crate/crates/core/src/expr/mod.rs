//! Scalar expressions over named coordinates.
//!
//! Expressions are immutable DAGs (`Arc`-shared nodes), so cloning is cheap and
//! symbolic derivatives can reuse subtrees of the original. Numerical work goes
//! through [`Program`], which flattens one or more expressions into a
//! register machine with structural common-subexpression elimination.

mod compile;
mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops;
use std::sync::Arc;

pub use compile::Program;
pub use parse::parse;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub(crate) fn apply(self, x: f64) -> Result<f64, ExprError> {
        match self {
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Exp => Ok(x.exp()),
            Func::Log if x > 0.0 => Ok(x.ln()),
            Func::Log => Err(ExprError::Domain(format!("log of non-positive value {x}"))),
            Func::Sqrt if x >= 0.0 => Ok(x.sqrt()),
            Func::Sqrt => Err(ExprError::Domain(format!("sqrt of negative value {x}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub(crate) fn apply(self, a: f64, b: f64) -> Result<f64, ExprError> {
        match self {
            BinOp::Add => Ok(a + b),
            BinOp::Sub => Ok(a - b),
            BinOp::Mul => Ok(a * b),
            BinOp::Div if b == 0.0 => Err(ExprError::Domain(format!("division of {a} by zero"))),
            BinOp::Div => Ok(a / b),
            BinOp::Pow => {
                let v = a.powf(b);
                if v.is_nan() && !a.is_nan() && !b.is_nan() {
                    Err(ExprError::Domain(format!("{a}^{b} is undefined")))
                } else if a == 0.0 && b < 0.0 {
                    Err(ExprError::Domain(format!("0^{b} is undefined")))
                } else {
                    Ok(v)
                }
            }
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Pi,
    Var(Arc<str>),
    Neg(Expr),
    Binary(BinOp, Expr, Expr),
    Call(Func, Expr),
}

/// A scalar expression.
#[derive(Clone, PartialEq)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    pub fn constant(v: f64) -> Expr {
        Expr(Arc::new(Node::Const(v)))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn pi() -> Expr {
        Expr(Arc::new(Node::Pi))
    }

    pub fn var(name: &str) -> Expr {
        Expr(Arc::new(Node::Var(Arc::from(name))))
    }

    /// Literal value if the expression is a numeric constant (`pi` included).
    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(v) => Some(*v),
            Node::Pi => Some(std::f64::consts::PI),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Ok(v) = op.apply(x, y) {
                if v.is_finite() {
                    return Expr::constant(v);
                }
            }
        }
        match op {
            BinOp::Add if a.is_zero() => return b,
            BinOp::Add | BinOp::Sub if b.is_zero() => return a,
            BinOp::Sub if a.is_zero() => return -b,
            BinOp::Mul if a.is_zero() || b.is_zero() => return Expr::zero(),
            BinOp::Mul if a.is_one() => return b,
            BinOp::Mul | BinOp::Div if b.is_one() => return a,
            BinOp::Div if a.is_zero() => return Expr::zero(),
            BinOp::Pow if b.is_zero() => return Expr::one(),
            BinOp::Pow if b.is_one() => return a,
            _ => {}
        }
        Expr(Arc::new(Node::Binary(op, a, b)))
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        if let Some(x) = arg.as_const() {
            if let Ok(v) = f.apply(x) {
                return Expr::constant(v);
            }
        }
        Expr(Arc::new(Node::Call(f, arg)))
    }

    pub fn pow(&self, e: impl Into<Expr>) -> Expr {
        Expr::binary(BinOp::Pow, self.clone(), e.into())
    }

    pub fn powi(&self, n: i32) -> Expr {
        self.pow(Expr::constant(n as f64))
    }

    pub fn sin(&self) -> Expr {
        Expr::call(Func::Sin, self.clone())
    }

    pub fn cos(&self) -> Expr {
        Expr::call(Func::Cos, self.clone())
    }

    pub fn exp(&self) -> Expr {
        Expr::call(Func::Exp, self.clone())
    }

    pub fn ln(&self) -> Expr {
        Expr::call(Func::Log, self.clone())
    }

    pub fn sqrt(&self) -> Expr {
        Expr::call(Func::Sqrt, self.clone())
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self.node() {
            Node::Const(_) | Node::Pi => {}
            Node::Var(v) => {
                out.insert(v.to_string());
            }
            Node::Neg(a) | Node::Call(_, a) => a.collect_vars(out),
            Node::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Symbolic partial derivative. The result is constant-folded but
    /// otherwise unsimplified.
    pub fn diff(&self, var: &str) -> Expr {
        let mut memo = HashMap::new();
        self.diff_memo(var, &mut memo)
    }

    fn diff_memo(&self, var: &str, memo: &mut HashMap<*const Node, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.ptr()) {
            return d.clone();
        }
        let d = match self.node() {
            Node::Const(_) | Node::Pi => Expr::zero(),
            Node::Var(v) => {
                if &**v == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Neg(a) => -a.diff_memo(var, memo),
            Node::Binary(op, a, b) => {
                let da = a.diff_memo(var, memo);
                let db = b.diff_memo(var, memo);
                match op {
                    BinOp::Add => &da + &db,
                    BinOp::Sub => &da - &db,
                    BinOp::Mul => &(&da * b) + &(a * &db),
                    BinOp::Div => &(&(&da * b) - &(a * &db)) / &b.powi(2),
                    BinOp::Pow => match b.as_const() {
                        Some(c) => &(&Expr::constant(c) * &a.pow(Expr::constant(c - 1.0))) * &da,
                        None => {
                            // d(a^b) = a^b (b' ln a + b a'/a)
                            let term = &(&db * &a.ln()) + &(&(b * &da) / a);
                            &self.clone() * &term
                        }
                    },
                }
            }
            Node::Call(f, a) => {
                let da = a.diff_memo(var, memo);
                if da.is_zero() {
                    Expr::zero()
                } else {
                    let outer = match f {
                        Func::Sin => a.cos(),
                        Func::Cos => -a.sin(),
                        Func::Exp => self.clone(),
                        Func::Log => &Expr::one() / a,
                        Func::Sqrt => &Expr::constant(0.5) / self,
                    };
                    &outer * &da
                }
            }
        };
        memo.insert(self.ptr(), d.clone());
        d
    }

    /// Replace every occurrence of `var` by `with`.
    pub fn subst(&self, var: &str, with: &Expr) -> Expr {
        let mut memo = HashMap::new();
        self.subst_memo(var, with, &mut memo)
    }

    fn subst_memo(&self, var: &str, with: &Expr, memo: &mut HashMap<*const Node, Expr>) -> Expr {
        if let Some(e) = memo.get(&self.ptr()) {
            return e.clone();
        }
        let e = match self.node() {
            Node::Const(_) | Node::Pi => self.clone(),
            Node::Var(v) => {
                if &**v == var {
                    with.clone()
                } else {
                    self.clone()
                }
            }
            Node::Neg(a) => -a.subst_memo(var, with, memo),
            Node::Binary(op, a, b) => {
                Expr::binary(*op, a.subst_memo(var, with, memo), b.subst_memo(var, with, memo))
            }
            Node::Call(f, a) => Expr::call(*f, a.subst_memo(var, with, memo)),
        };
        memo.insert(self.ptr(), e.clone());
        e
    }

    /// Tree-walking evaluation with a name lookup.
    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        match self.node() {
            Node::Const(v) => Ok(*v),
            Node::Pi => Ok(std::f64::consts::PI),
            Node::Var(v) => lookup(v).ok_or_else(|| ExprError::UnboundVariable(v.to_string())),
            Node::Neg(a) => Ok(-a.eval_with(lookup)?),
            Node::Binary(op, a, b) => op.apply(a.eval_with(lookup)?, b.eval_with(lookup)?),
            Node::Call(f, a) => f.apply(a.eval_with(lookup)?),
        }
    }

    pub fn eval(&self, env: &HashMap<String, f64>) -> Result<f64, ExprError> {
        self.eval_with(&|name| env.get(name).copied())
    }

    /// Evaluate with variables bound positionally to `names`.
    pub fn eval_at(&self, names: &[&str], values: &[f64]) -> Result<f64, ExprError> {
        self.eval_with(&|name| names.iter().position(|n| *n == name).map(|i| values[i]))
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::constant(v)
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.node() {
            Node::Const(v) => Expr::constant(-v),
            Node::Neg(a) => a.clone(),
            _ => Expr(Arc::new(Node::Neg(self.clone()))),
        }
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, self.clone(), rhs.clone())
            }
        }
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, self, rhs.clone())
            }
        }
        impl ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self.clone(), rhs)
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::constant(rhs))
            }
        }
        impl ops::$trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self.clone(), Expr::constant(rhs))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::constant(self), rhs)
            }
        }
        impl ops::$trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, Expr::constant(self), rhs.clone())
            }
        }
    };
}

impl_binop!(Add, add, BinOp::Add);
impl_binop!(Sub, sub, BinOp::Sub);
impl_binop!(Mul, mul, BinOp::Mul);
impl_binop!(Div, div, BinOp::Div);

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    fn write_prec(&self, f: &mut fmt::Formatter<'_>, outer: u8) -> fmt::Result {
        match self.node() {
            Node::Const(v) => {
                if *v < 0.0 && outer > 0 {
                    write!(f, "({v})")
                } else {
                    write!(f, "{v}")
                }
            }
            Node::Pi => write!(f, "pi"),
            Node::Var(v) => write!(f, "{v}"),
            Node::Neg(a) => {
                if outer > 1 {
                    write!(f, "(")?;
                }
                write!(f, "-")?;
                a.write_prec(f, 3)?;
                if outer > 1 {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Node::Binary(op, a, b) => {
                let p = op.precedence();
                let paren = p < outer || (p == outer && *op == BinOp::Pow);
                if paren {
                    write!(f, "(")?;
                }
                let (lp, rp) = match op {
                    BinOp::Pow => (p + 1, p),
                    _ => (p, p + 1),
                };
                a.write_prec(f, lp)?;
                write!(f, "{}", op.symbol())?;
                b.write_prec(f, rp)?;
                if paren {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Node::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_prec(f, 0)?;
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, names: &[&str], values: &[f64]) -> Result<f64, ExprError> {
        parse(src).unwrap().eval_at(names, values)
    }

    #[test]
    fn parse_and_evaluate_examples() {
        assert_eq!(ev("x^2+y", &["x", "y"], &[2.0, 1.0]).unwrap(), 5.0);
        assert_eq!(ev("exp(r^2/2)", &["r"], &[0.0]).unwrap(), 1.0);
        let v = ev("4*pi*r/exp(r^2/2)", &["r"], &[1.0]).unwrap();
        let expected = 4.0 * std::f64::consts::PI * (-0.5f64).exp();
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 7.6218).abs() < 1e-4);
    }

    #[test]
    fn eval_edge_cases() {
        assert_eq!(Expr::constant(3.5).eval(&HashMap::new()).unwrap(), 3.5);
        assert!(matches!(ev("x/y", &["x", "y"], &[1.0, 0.0]), Err(ExprError::Domain(_))));
        assert!(matches!(ev("sqrt(x)", &["x"], &[-1.0]), Err(ExprError::Domain(_))));
        assert!(matches!(ev("log(x)", &["x"], &[0.0]), Err(ExprError::Domain(_))));
        assert!((ev("sin(pi/2)", &[], &[]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            parse("x+z").unwrap().eval_at(&["x"], &[1.0]),
            Err(ExprError::UnboundVariable("z".into()))
        );
    }

    #[test]
    fn derivative_examples() {
        let d = parse("x^2").unwrap().diff("x");
        assert_eq!(d.eval_at(&["x"], &[3.0]).unwrap(), 6.0);
        let d = parse("exp(r^2/2)").unwrap().diff("r");
        assert!((d.eval_at(&["r"], &[1.0]).unwrap() - 0.5f64.exp()).abs() < 1e-14);
        assert!(parse("y").unwrap().diff("x").is_zero());
    }

    #[test]
    fn general_power_derivative() {
        let e = parse("x^y").unwrap();
        let dx = e.diff("x").eval_at(&["x", "y"], &[2.0, 3.0]).unwrap();
        let dy = e.diff("y").eval_at(&["x", "y"], &[2.0, 3.0]).unwrap();
        assert!((dx - 12.0).abs() < 1e-12);
        assert!((dy - 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn display_round_trips_through_parser() {
        for src in ["-x^2", "(x-y)-(z-1)", "a/(b*c)", "2^3^x", "-(x+y)*sin(-z)", "x-(-2)"] {
            let e = parse(src).unwrap();
            let again = parse(&e.to_string()).unwrap();
            let pt = [0.3, -1.2, 0.7, 1.1, 0.4, 2.0];
            let names = ["x", "y", "z", "a", "b", "c"];
            assert_eq!(e.eval_at(&names, &pt), again.eval_at(&names, &pt), "{src} vs {e}");
        }
    }

    #[test]
    fn substitution_and_free_vars() {
        let a = parse("exp(r^2/2)").unwrap();
        let r = parse("sqrt(x^2+y^2+z^2)").unwrap();
        let ax = a.subst("r", &r);
        let names: Vec<String> = ax.free_vars().into_iter().collect();
        assert_eq!(names, vec!["x", "y", "z"]);
        let v = ax.eval_at(&["x", "y", "z"], &[1.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.5f64.exp()).abs() < 1e-14);
    }
}
