//! Scalar expression language used to describe the vector fields.
//!
//! Grammar (lowest to highest precedence): `+ -`, `* /`, unary `-`, `^`.
//! Exponents are integer literals and `^` is right associative. Recognised
//! functions are `sin`, `cos`, `exp`, `sqrt` and `abs`; `pi` is a built-in
//! constant.

mod compile;
mod diff;
mod parse;

use std::collections::HashMap;
use std::fmt;

pub use compile::CompiledExpr;
pub use parse::{parse, parse_with, ParseError};

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
        }
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    SqrtNegative(f64),
    #[error("non-finite result")]
    NonFinite,
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Evaluate with named bindings. `pi` resolves to π unless rebound.
    pub fn eval(&self, bindings: &HashMap<String, f64>) -> Result<f64, EvalError> {
        let v = self.eval_inner(bindings)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_inner(&self, b: &HashMap<String, f64>) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => match b.get(name) {
                Some(v) => *v,
                None if name == "pi" => std::f64::consts::PI,
                None => return Err(EvalError::Unbound(name.clone())),
            },
            Expr::Neg(a) => -a.eval_inner(b)?,
            Expr::Add(l, r) => l.eval_inner(b)? + r.eval_inner(b)?,
            Expr::Sub(l, r) => l.eval_inner(b)? - r.eval_inner(b)?,
            Expr::Mul(l, r) => l.eval_inner(b)? * r.eval_inner(b)?,
            Expr::Div(l, r) => {
                let den = r.eval_inner(b)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                l.eval_inner(b)? / den
            }
            Expr::Pow(a, n) => {
                let base = a.eval_inner(b)?;
                if base == 0.0 && *n < 0 {
                    return Err(EvalError::DivisionByZero);
                }
                base.powi(*n)
            }
            Expr::Call(f, a) => {
                let v = a.eval_inner(b)?;
                if *f == Func::Sqrt && v < 0.0 {
                    return Err(EvalError::SqrtNegative(v));
                }
                f.apply(v)
            }
        })
    }

    /// Names of free variables, sorted and deduplicated. `pi` is excluded.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => {
                if n != "pi" {
                    out.push(n.clone())
                }
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, var: &str) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(n) => n == var,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.depends_on(var) || r.depends_on(var)
            }
        }
    }

    /// True when the tree contains `abs`, whose derivative is undefined at 0.
    pub fn has_nonsmooth(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Call(Func::Abs, _) => true,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.has_nonsmooth(),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.has_nonsmooth() || r.has_nonsmooth()
            }
        }
    }

    /// Replace variables by constants and fold.
    pub fn substitute(&self, values: &HashMap<String, f64>) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(n) => match values.get(n) {
                Some(v) => Expr::Num(*v),
                None => Expr::Var(n.clone()),
            },
            Expr::Neg(a) => diff::neg(a.substitute(values)),
            Expr::Add(l, r) => diff::add(l.substitute(values), r.substitute(values)),
            Expr::Sub(l, r) => diff::sub(l.substitute(values), r.substitute(values)),
            Expr::Mul(l, r) => diff::mul(l.substitute(values), r.substitute(values)),
            Expr::Div(l, r) => diff::div(l.substitute(values), r.substitute(values)),
            Expr::Pow(a, n) => diff::pow(a.substitute(values), *n),
            Expr::Call(f, a) => diff::call(*f, a.substitute(values)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, needs_parens: bool) -> fmt::Result {
    if needs_parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "({v})")
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Neg(a) => {
                // `-2` would re-parse as a negative literal, keep the node explicit
                let lit = matches!(**a, Expr::Num(v) if !v.is_sign_negative());
                write!(f, "-")?;
                write_child(f, a, lit || a.precedence() < p)
            }
            Expr::Add(l, r) | Expr::Mul(l, r) => {
                write_child(f, l, l.precedence() < p)?;
                write!(
                    f,
                    "{}",
                    if matches!(self, Expr::Add(..)) {
                        " + "
                    } else {
                        "*"
                    }
                )?;
                write_child(f, r, r.precedence() <= p)
            }
            Expr::Sub(l, r) | Expr::Div(l, r) => {
                write_child(f, l, l.precedence() < p)?;
                write!(
                    f,
                    "{}",
                    if matches!(self, Expr::Sub(..)) {
                        " - "
                    } else {
                        "/"
                    }
                )?;
                write_child(f, r, r.precedence() <= p)
            }
            Expr::Pow(a, n) => {
                write_child(f, a, a.precedence() < 5)?;
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn eval_example_field_component() {
        let e = parse("x2 - x1*(x1^2+x2^2-1)").unwrap();
        assert_eq!(e.eval(&b(&[("x1", 0.0), ("x2", 1.0)])).unwrap(), 1.0);
    }

    #[test]
    fn eval_cube_and_constant() {
        assert_eq!(
            parse("x1^3").unwrap().eval(&b(&[("x1", 2.0)])).unwrap(),
            8.0
        );
        assert_eq!(
            parse("2*3 - 1").unwrap().eval(&HashMap::new()).unwrap(),
            5.0
        );
    }

    #[test]
    fn eval_sin_half_angle() {
        let e = parse("sin(t/2)").unwrap();
        let v = e.eval(&b(&[("t", std::f64::consts::PI)])).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eval_errors() {
        let e = parse("x1/x2").unwrap();
        assert_eq!(
            e.eval(&b(&[("x1", 1.0)])),
            Err(EvalError::Unbound("x2".into()))
        );
        assert_eq!(
            e.eval(&b(&[("x1", 1.0), ("x2", 0.0)])),
            Err(EvalError::DivisionByZero)
        );
        let s = parse("sqrt(x1)").unwrap();
        assert!(matches!(
            s.eval(&b(&[("x1", -1.0)])),
            Err(EvalError::SqrtNegative(_))
        ));
        let big = parse("exp(x1)").unwrap();
        assert_eq!(big.eval(&b(&[("x1", 1e4)])), Err(EvalError::NonFinite));
    }

    #[test]
    fn display_round_trips_awkward_shapes() {
        let cases = [
            Expr::Neg(Box::new(Expr::Num(2.0))),
            Expr::Num(-2.0),
            Expr::Pow(Box::new(Expr::Num(-2.0)), 3),
            Expr::Pow(Box::new(Expr::Pow(Box::new(Expr::var("x1")), 2)), 3),
            Expr::Sub(
                Box::new(Expr::var("a")),
                Box::new(Expr::Sub(
                    Box::new(Expr::var("b")),
                    Box::new(Expr::var("c")),
                )),
            ),
            Expr::Neg(Box::new(Expr::Mul(
                Box::new(Expr::var("a")),
                Box::new(Expr::var("b")),
            ))),
            Expr::Pow(Box::new(Expr::var("x1")), -2),
        ];
        for e in cases {
            let text = e.to_string();
            let back = parse_with(&text, &["a", "b", "c"]).unwrap();
            assert_eq!(back, e, "{text}");
        }
    }
}
