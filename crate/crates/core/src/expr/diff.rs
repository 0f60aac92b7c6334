use super::{Expr, Func};

fn constant(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (constant(&a), constant(&b)) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(inner) => Expr::Sub(Box::new(a), inner),
            b => Expr::Add(Box::new(a), Box::new(b)),
        },
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (constant(&a), constant(&b)) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(inner) => Expr::Add(Box::new(a), inner),
            b => Expr::Sub(Box::new(a), Box::new(b)),
        },
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (constant(&a), constant(&b)) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        // keep constants on the left so folding can meet them
        (None, Some(_)) => Expr::Mul(Box::new(b), Box::new(a)),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (constant(&a), constant(&b)) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Num(x / y),
        (Some(x), _) if x == 0.0 => Expr::Num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn pow(a: Expr, n: i32) -> Expr {
    match (constant(&a), n) {
        (_, 0) => Expr::Num(1.0),
        (_, 1) => a,
        (Some(x), n) if x != 0.0 || n > 0 => Expr::Num(x.powi(n)),
        _ => Expr::Pow(Box::new(a), n),
    }
}

pub(crate) fn call(f: Func, a: Expr) -> Expr {
    match constant(&a) {
        Some(x) if !(f == Func::Sqrt && x < 0.0) => Expr::Num(f.apply(x)),
        _ => Expr::Call(f, Box::new(a)),
    }
}

impl Expr {
    /// Symbolic partial derivative with respect to `var`.
    ///
    /// The derivative of `abs(u)` is written as `u/abs(u)·u'`, which is
    /// undefined where `u = 0`; check [`Expr::has_nonsmooth`] to surface that.
    pub fn diff(&self, var: &str) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(n) => Expr::Num(if n == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(var)),
            Expr::Add(l, r) => add(l.diff(var), r.diff(var)),
            Expr::Sub(l, r) => sub(l.diff(var), r.diff(var)),
            Expr::Mul(l, r) => add(
                mul(l.diff(var), (**r).clone()),
                mul((**l).clone(), r.diff(var)),
            ),
            Expr::Div(l, r) => {
                let dl = l.diff(var);
                let dr = r.diff(var);
                if constant(&dr) == Some(0.0) {
                    div(dl, (**r).clone())
                } else {
                    div(
                        sub(mul(dl, (**r).clone()), mul((**l).clone(), dr)),
                        pow((**r).clone(), 2),
                    )
                }
            }
            Expr::Pow(a, n) => mul(
                mul(Expr::Num(*n as f64), pow((**a).clone(), n - 1)),
                a.diff(var),
            ),
            Expr::Call(f, a) => {
                let da = a.diff(var);
                if constant(&da) == Some(0.0) {
                    return Expr::Num(0.0);
                }
                let u = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, u),
                    Func::Cos => neg(call(Func::Sin, u)),
                    Func::Exp => call(Func::Exp, u),
                    Func::Sqrt => div(Expr::Num(0.5), call(Func::Sqrt, u)),
                    Func::Abs => div(u.clone(), call(Func::Abs, u)),
                };
                mul(outer, da)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn at(t: f64, x1: f64, x2: f64) -> HashMap<String, f64> {
        [("t", t), ("x1", x1), ("x2", x2)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect()
    }

    fn central(e: &Expr, var: &str, b: &HashMap<String, f64>) -> f64 {
        let h = 1e-5;
        let mut p = b.clone();
        *p.get_mut(var).unwrap() += h;
        let mut m = b.clone();
        *m.get_mut(var).unwrap() -= h;
        (e.eval(&p).unwrap() - e.eval(&m).unwrap()) / (2.0 * h)
    }

    #[test]
    fn example_component_derivative() {
        let e = parse("x2 - x1*(x1^2+x2^2-1)").unwrap();
        let d = e.diff("x1");
        let reference = parse("-3*x1^2 - x2^2 + 1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let b = at(0.0, rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let got = d.eval(&b).unwrap();
            assert!((got - reference.eval(&b).unwrap()).abs() <= 1e-12 * (1.0 + got.abs()));
            assert!((got - central(&e, "x1", &b)).abs() <= 1e-5 * (1.0 + got.abs()));
        }
    }

    #[test]
    fn trivial_derivatives_fold() {
        assert_eq!(parse("x1").unwrap().diff("t"), Expr::Num(0.0));
        assert_eq!(parse("3*x1").unwrap().diff("x1"), Expr::Num(3.0));
        assert_eq!(parse("x1^1 + 0").unwrap().diff("x1"), Expr::Num(1.0));
        assert_eq!(
            parse("sin(x1*x2)").unwrap().diff("x1"),
            parse("cos(x1*x2)*x2").unwrap()
        );
    }

    #[test]
    fn abs_is_flagged() {
        let e = parse("abs(x1)").unwrap();
        assert!(e.has_nonsmooth());
        assert!(e.diff("x1").has_nonsmooth());
        assert!(e.diff("x1").eval(&at(0.0, 0.0, 0.0)).is_err());
        assert!(!parse("sin(x1)").unwrap().has_nonsmooth());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let sources = [
            "x2 - x1*(x1^2+x2^2-1)",
            "-x1 - x2*(x1^2+x2^2-1)",
            "(x2*x1 + x1)*(x1*cos(t) - x2*sin(t) + 0.1*sin(t/2))",
            "exp(x1*x2/4)/(2 + x1^2)",
            "sqrt(5 + x1^2*x2^2) - x2^(-1)*0.01*x1^3",
            "cos(sin(x1 - t)*x2)^3",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for src in sources {
            let e = parse(src).unwrap();
            for var in ["t", "x1", "x2"] {
                let d = e.diff(var);
                for var2 in ["x1", "x2"] {
                    let dd = d.diff(var2);
                    for _ in 0..100 {
                        let mut b;
                        loop {
                            b = at(
                                rng.gen_range(-2.0..2.0),
                                rng.gen_range(-2.0..2.0),
                                rng.gen_range(-2.0..2.0),
                            );
                            if b["x2"].abs() > 0.2 {
                                break;
                            }
                        }
                        let got = d.eval(&b).unwrap();
                        let fd = central(&e, var, &b);
                        assert!(
                            (got - fd).abs() <= 1e-5 * (1.0 + got.abs()),
                            "d{src}/d{var}: {got} vs {fd}"
                        );
                        let got2 = dd.eval(&b).unwrap();
                        let fd2 = central(&d, var2, &b);
                        assert!(
                            (got2 - fd2).abs() <= 1e-5 * (1.0 + got2.abs()),
                            "d2{src}/d{var}d{var2}: {got2} vs {fd2}"
                        );
                    }
                }
            }
        }
    }
}
