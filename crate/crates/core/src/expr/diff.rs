//! Symbolic differentiation with light constant folding.
//!
//! Kinks follow a fixed convention so the derivative is always defined:
//! `abs'(0) = 0`, and `max`/`min` take the derivative of their first argument
//! on ties. `step` differentiates to zero (its point mass is dropped).

use super::{Expr, Func, Var};

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(w) if *w == v)
}

fn folded(v: f64, fallback: impl FnOnce() -> Expr) -> Expr {
    if v.is_finite() {
        Expr::Num(v)
    } else {
        fallback()
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => folded(x + y, || {
            Expr::Add(Box::new(a.clone()), Box::new(b.clone()))
        }),
        _ if is_num(&a, 0.0) => b,
        _ if is_num(&b, 0.0) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => folded(x - y, || {
            Expr::Sub(Box::new(a.clone()), Box::new(b.clone()))
        }),
        _ if is_num(&b, 0.0) => a,
        _ if is_num(&a, 0.0) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => folded(x * y, || {
            Expr::Mul(Box::new(a.clone()), Box::new(b.clone()))
        }),
        _ if is_num(&a, 0.0) || is_num(&b, 0.0) => Expr::Num(0.0),
        _ if is_num(&a, 1.0) => b,
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) if *y != 0.0 => folded(x / y, || {
            Expr::Div(Box::new(a.clone()), Box::new(b.clone()))
        }),
        _ if is_num(&a, 0.0) => Expr::Num(0.0),
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_num(&b, 0.0) => Expr::Num(1.0),
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

fn step(a: Expr) -> Expr {
    call(Func::Step, a)
}

impl Expr {
    /// Symbolic derivative with respect to `v`.
    pub fn differentiate(&self, v: Var) -> Expr {
        if !self.depends_on(v) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(w) => Expr::Num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(v)),
            Expr::Add(a, b) => add(a.differentiate(v), b.differentiate(v)),
            Expr::Sub(a, b) => sub(a.differentiate(v), b.differentiate(v)),
            Expr::Mul(a, b) => add(
                mul(a.differentiate(v), (**b).clone()),
                mul((**a).clone(), b.differentiate(v)),
            ),
            Expr::Div(a, b) => {
                let num = sub(
                    mul(a.differentiate(v), (**b).clone()),
                    mul((**a).clone(), b.differentiate(v)),
                );
                div(num, pow((**b).clone(), Expr::Num(2.0)))
            }
            Expr::Pow(a, b) => {
                if !b.depends_on(v) {
                    // d(f^c) = c f^(c-1) f'
                    let c = (**b).clone();
                    let cm1 = sub(c.clone(), Expr::Num(1.0));
                    mul(mul(c, pow((**a).clone(), cm1)), a.differentiate(v))
                } else {
                    // d(f^g) = f^g (g' log f + g f'/f)
                    let term1 = mul(b.differentiate(v), call(Func::Log, (**a).clone()));
                    let term2 = div(mul((**b).clone(), a.differentiate(v)), (**a).clone());
                    mul(self.clone(), add(term1, term2))
                }
            }
            Expr::Call(f, a) => {
                let inner = (**a).clone();
                let da = a.differentiate(v);
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Log => div(Expr::Num(1.0), inner),
                    Func::Sqrt => div(Expr::Num(0.5), call(Func::Sqrt, inner)),
                    // sign(u) = step(u) - step(-u), which is 0 at u = 0
                    Func::Abs => sub(step(inner.clone()), step(neg(inner))),
                    Func::Step => Expr::Num(0.0),
                };
                mul(outer, da)
            }
            Expr::Max(a, b) => {
                // first argument wins ties
                let pick = step(sub((**a).clone(), (**b).clone()));
                add(
                    mul(pick.clone(), a.differentiate(v)),
                    mul(sub(Expr::Num(1.0), pick), b.differentiate(v)),
                )
            }
            Expr::Min(a, b) => {
                let pick = step(sub((**b).clone(), (**a).clone()));
                add(
                    mul(pick.clone(), a.differentiate(v)),
                    mul(sub(Expr::Num(1.0), pick), b.differentiate(v)),
                )
            }
        }
    }

    /// `n`-th derivative with respect to `v`.
    pub fn nth_derivative(&self, v: Var, n: usize) -> Expr {
        let mut e = self.clone();
        for _ in 0..n {
            e = e.differentiate(v);
        }
        e
    }
}
