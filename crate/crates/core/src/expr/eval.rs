use thiserror::Error;

use super::{Expr, Func, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable '{}' is not bound", .0.name())]
    UnboundVariable(Var),
    #[error("{op} is undefined at {arg}")]
    DomainError { op: &'static str, arg: f64 },
    #[error("{op} overflowed at {arg}")]
    NonFinite { op: &'static str, arg: f64 },
}

/// Values for the free variables of an expression.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    vals: [Option<f64>; 4],
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, v: Var, value: f64) -> Self {
        self.vals[v as usize] = Some(value);
        self
    }

    pub fn x(self, value: f64) -> Self {
        self.set(Var::X, value)
    }

    pub fn y(self, value: f64) -> Self {
        self.set(Var::Y, value)
    }

    pub fn z(self, value: f64) -> Self {
        self.set(Var::Z, value)
    }

    pub fn t(self, value: f64) -> Self {
        self.set(Var::T, value)
    }

    pub fn get(&self, v: Var) -> Option<f64> {
        self.vals[v as usize]
    }
}

fn finite(op: &'static str, arg: f64, v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite { op, arg })
    }
}

impl Expr {
    /// Evaluate in IEEE double precision.
    ///
    /// Undefined operations (`log` of a non-positive number, division by zero,
    /// a negative base under a fractional power, ...) are reported as errors
    /// instead of propagating NaN or infinity.
    pub fn eval(&self, b: &Bindings) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(v) => b.get(*v).ok_or(EvalError::UnboundVariable(*v)),
            Expr::Neg(a) => Ok(-a.eval(b)?),
            Expr::Add(l, r) => {
                let (l, r) = (l.eval(b)?, r.eval(b)?);
                finite("+", l, l + r)
            }
            Expr::Sub(l, r) => {
                let (l, r) = (l.eval(b)?, r.eval(b)?);
                finite("-", l, l - r)
            }
            Expr::Mul(l, r) => {
                let (l, r) = (l.eval(b)?, r.eval(b)?);
                finite("*", l, l * r)
            }
            Expr::Div(l, r) => {
                let (l, r) = (l.eval(b)?, r.eval(b)?);
                if r == 0.0 {
                    return Err(EvalError::DomainError {
                        op: "division",
                        arg: r,
                    });
                }
                finite("/", l, l / r)
            }
            Expr::Pow(l, r) => {
                let (base, ex) = (l.eval(b)?, r.eval(b)?);
                pow(base, ex)
            }
            Expr::Max(l, r) => {
                let (l, r) = (l.eval(b)?, r.eval(b)?);
                Ok(if l >= r { l } else { r })
            }
            Expr::Min(l, r) => {
                let (l, r) = (l.eval(b)?, r.eval(b)?);
                Ok(if l <= r { l } else { r })
            }
            Expr::Call(f, a) => {
                let v = a.eval(b)?;
                match f {
                    Func::Sin => Ok(v.sin()),
                    Func::Cos => Ok(v.cos()),
                    Func::Exp => finite("exp", v, v.exp()),
                    Func::Log => {
                        if v <= 0.0 {
                            Err(EvalError::DomainError { op: "log", arg: v })
                        } else {
                            Ok(v.ln())
                        }
                    }
                    Func::Sqrt => {
                        if v < 0.0 {
                            Err(EvalError::DomainError { op: "sqrt", arg: v })
                        } else {
                            Ok(v.sqrt())
                        }
                    }
                    Func::Abs => Ok(v.abs()),
                    Func::Step => Ok(if v >= 0.0 { 1.0 } else { 0.0 }),
                }
            }
        }
    }

    /// Evaluate a function of `x` alone.
    pub fn eval_x(&self, x: f64) -> Result<f64, EvalError> {
        self.eval(&Bindings::new().x(x))
    }
}

fn pow(base: f64, ex: f64) -> Result<f64, EvalError> {
    if base == 0.0 && ex < 0.0 {
        return Err(EvalError::DomainError {
            op: "power of zero",
            arg: ex,
        });
    }
    if base < 0.0 && ex.fract() != 0.0 {
        return Err(EvalError::DomainError {
            op: "fractional power",
            arg: base,
        });
    }
    let v = if ex.fract() == 0.0 && ex.abs() <= i32::MAX as f64 {
        base.powi(ex as i32)
    } else {
        base.powf(ex)
    };
    finite("^", base, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn ev(s: &str, b: Bindings) -> Result<f64, EvalError> {
        parse(s).unwrap().eval(&b)
    }

    #[test]
    fn basic_values() {
        assert_eq!(ev("2+3*4", Bindings::new()).unwrap(), 14.0);
        assert_eq!(ev("sin(x)", Bindings::new().x(0.0)).unwrap(), 0.0);
        assert_eq!(ev("abs(x-y)", Bindings::new().x(1.0).y(3.0)).unwrap(), 2.0);
        assert_eq!(ev("2^3^2", Bindings::new()).unwrap(), 512.0);
        assert_eq!(ev("-2^2", Bindings::new()).unwrap(), -4.0);
        assert_eq!(ev("pow(2, 0.5)", Bindings::new()).unwrap(), 2f64.sqrt());
        assert_eq!(ev("max(1, t)", Bindings::new().t(4.0)).unwrap(), 4.0);
        assert_eq!(ev("step(0) + step(-1e-300)", Bindings::new()).unwrap(), 1.0);
    }

    #[test]
    fn unbound_variable_is_reported() {
        assert_eq!(
            ev("x + z", Bindings::new().x(1.0)),
            Err(EvalError::UnboundVariable(Var::Z))
        );
    }

    #[test]
    fn domain_errors_are_not_nan() {
        assert!(matches!(
            ev("log(-1)", Bindings::new()),
            Err(EvalError::DomainError { .. })
        ));
        assert!(matches!(
            ev("log(0)", Bindings::new()),
            Err(EvalError::DomainError { .. })
        ));
        assert!(matches!(
            ev("sqrt(x)", Bindings::new().x(-2.0)),
            Err(EvalError::DomainError { .. })
        ));
        assert!(matches!(
            ev("1/(x-x)", Bindings::new().x(3.0)),
            Err(EvalError::DomainError { .. })
        ));
        assert!(matches!(
            ev("(-8)^(1/3)", Bindings::new()),
            Err(EvalError::DomainError { .. })
        ));
        assert!(matches!(
            ev("exp(1000)", Bindings::new()),
            Err(EvalError::NonFinite { .. })
        ));
        assert_eq!(ev("(-2)^3", Bindings::new()).unwrap(), -8.0);
    }
}
