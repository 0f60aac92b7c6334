use std::collections::HashMap;

use super::{Expr, Func};

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Slot(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

/// Expression lowered for fast repeated evaluation at `(t, x1, x2)`.
///
/// Parameters are folded in at compile time. Evaluation is unchecked: a
/// division by zero yields a non-finite value that the integrator detects.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
}

/// Slot order used by [`CompiledExpr::eval`].
pub const SLOTS: [&str; 3] = ["t", "x1", "x2"];

impl CompiledExpr {
    /// Lower `e` after substituting `params`; every remaining free variable
    /// must be one of `t`, `x1`, `x2`.
    pub fn new(e: &Expr, params: &HashMap<String, f64>) -> Result<CompiledExpr, String> {
        let mut values = params.clone();
        values
            .entry("pi".to_string())
            .or_insert(std::f64::consts::PI);
        let folded = e.substitute(&values);
        Ok(CompiledExpr {
            root: lower(&folded)?,
        })
    }

    pub fn constant(v: f64) -> CompiledExpr {
        CompiledExpr { root: Node::Num(v) }
    }

    /// Some(v) when the expression folded to a constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x1: f64, x2: f64) -> f64 {
        run(&self.root, &[t, x1, x2])
    }
}

fn lower(e: &Expr) -> Result<Node, String> {
    Ok(match e {
        Expr::Num(v) => Node::Num(*v),
        Expr::Var(n) => match SLOTS.iter().position(|s| s == n) {
            Some(i) => Node::Slot(i),
            None => return Err(format!("unbound variable `{n}`")),
        },
        Expr::Neg(a) => Node::Neg(Box::new(lower(a)?)),
        Expr::Add(l, r) => Node::Add(Box::new(lower(l)?), Box::new(lower(r)?)),
        Expr::Sub(l, r) => Node::Sub(Box::new(lower(l)?), Box::new(lower(r)?)),
        Expr::Mul(l, r) => Node::Mul(Box::new(lower(l)?), Box::new(lower(r)?)),
        Expr::Div(l, r) => Node::Div(Box::new(lower(l)?), Box::new(lower(r)?)),
        Expr::Pow(a, n) => Node::Pow(Box::new(lower(a)?), *n),
        Expr::Call(f, a) => Node::Call(*f, Box::new(lower(a)?)),
    })
}

fn run(n: &Node, s: &[f64; 3]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Slot(i) => s[*i],
        Node::Neg(a) => -run(a, s),
        Node::Add(l, r) => run(l, s) + run(r, s),
        Node::Sub(l, r) => run(l, s) - run(r, s),
        Node::Mul(l, r) => run(l, s) * run(r, s),
        Node::Div(l, r) => run(l, s) / run(r, s),
        Node::Pow(a, k) => run(a, s).powi(*k),
        Node::Call(f, a) => f.apply(run(a, s)),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_with;
    use super::*;

    #[test]
    fn compiled_matches_tree_evaluation() {
        let e = parse_with("a*x1*sin(t/2) - x2^2/(1 + x1^2) + pi", &["a"]).unwrap();
        let params: HashMap<String, f64> = [("a".to_string(), 0.3)].into();
        let c = CompiledExpr::new(&e, &params).unwrap();
        for &(t, x1, x2) in &[(0.0, 1.0, 2.0), (1.3, -0.4, 0.7), (-5.0, 3.0, -1.0)] {
            let mut b = params.clone();
            b.insert("t".into(), t);
            b.insert("x1".into(), x1);
            b.insert("x2".into(), x2);
            assert!((c.eval(t, x1, x2) - e.eval(&b).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn unbound_parameter_is_rejected() {
        let e = parse_with("a*x1", &["a"]).unwrap();
        assert!(CompiledExpr::new(&e, &HashMap::new()).is_err());
    }

    #[test]
    fn constants_fold() {
        let e = parse_with("2*a + 1", &["a"]).unwrap();
        let c = CompiledExpr::new(&e, &[("a".to_string(), 2.0)].into()).unwrap();
        assert_eq!(c.as_constant(), Some(5.0));
    }
}
