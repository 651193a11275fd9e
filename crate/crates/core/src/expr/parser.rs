use thiserror::Error;

use super::{Expr, Func, Var};

/// Nesting limit; deeper input is rejected rather than risking the stack.
const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at position {position}: {message}")]
pub struct ParseError {
    /// Byte offset into the input where the problem was detected.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn err(position: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        position,
        message: message.into(),
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| err(start, format!("malformed number '{text}'")))?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(err(start, format!("unexpected character '{ch}'")));
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
}

/// Parse an expression.
///
/// Precedence from loosest to tightest: `+ -`, `* /`, unary `-`, `^`
/// (right-associative). Function calls: `sin cos exp log sqrt abs step`
/// take one argument, `max min pow` take two.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        depth: 0,
    };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::RParen => Err(err(p.offset(), "unbalanced ')'")),
        t => Err(err(p.offset(), format!("unexpected {}", t.describe()))),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(err(self.offset(), "expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.enter()?;
            self.bump();
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.enter()?;
            self.bump();
            let exp = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                match self.peek() {
                    Tok::RParen => {
                        self.bump();
                        Ok(e)
                    }
                    _ => Err(err(self.offset(), "expected ')'")),
                }
            }
            Tok::Ident(name) => {
                if let Some(v) = Var::from_name(&name) {
                    return Ok(Expr::Var(v));
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                let arity = match name.as_str() {
                    "sin" | "cos" | "exp" | "log" | "sqrt" | "abs" | "step" => 1,
                    "max" | "min" | "pow" => 2,
                    _ => return Err(err(at, format!("unknown identifier '{name}'"))),
                };
                self.call(&name, arity, at)
            }
            Tok::End => Err(err(at, "unexpected end of input")),
            t => Err(err(at, format!("unexpected {}", t.describe()))),
        }
    }

    fn call(&mut self, name: &str, arity: usize, at: usize) -> Result<Expr, ParseError> {
        if *self.peek() != Tok::LParen {
            return Err(err(self.offset(), format!("expected '(' after '{name}'")));
        }
        self.bump();
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        match self.peek() {
            Tok::RParen => {
                self.bump();
            }
            Tok::End => return Err(err(self.offset(), format!("unclosed call to '{name}'"))),
            t => {
                return Err(err(
                    self.offset(),
                    format!(
                        "expected ',' or ')' in call to '{name}', found {}",
                        t.describe()
                    ),
                ))
            }
        }
        if args.len() != arity {
            return Err(err(
                at,
                format!("'{name}' takes {arity} argument(s), got {}", args.len()),
            ));
        }
        let mut it = args.into_iter();
        let a = Box::new(it.next().expect("arity checked"));
        Ok(match name {
            "sin" => Expr::Call(Func::Sin, a),
            "cos" => Expr::Call(Func::Cos, a),
            "exp" => Expr::Call(Func::Exp, a),
            "log" => Expr::Call(Func::Log, a),
            "sqrt" => Expr::Call(Func::Sqrt, a),
            "abs" => Expr::Call(Func::Abs, a),
            "step" => Expr::Call(Func::Step, a),
            other => {
                let b = Box::new(it.next().expect("arity checked"));
                match other {
                    "max" => Expr::Max(a, b),
                    "min" => Expr::Min(a, b),
                    _ => Expr::Pow(a, b),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(v: f64) -> Box<Expr> {
        Box::new(Expr::Num(v))
    }

    fn x() -> Box<Expr> {
        Box::new(Expr::Var(Var::X))
    }

    #[test]
    fn affine_sine() {
        let e = parse("1 + 0.1*sin(x)").unwrap();
        assert_eq!(
            e,
            Expr::Add(
                n(1.0),
                Box::new(Expr::Mul(n(0.1), Box::new(Expr::Call(Func::Sin, x()))))
            )
        );
    }

    #[test]
    fn power_is_right_associative() {
        let e = parse("x^2^3").unwrap();
        assert_eq!(e, Expr::Pow(x(), Box::new(Expr::Pow(n(2.0), n(3.0)))));
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        assert_eq!(
            parse("-x^2").unwrap(),
            Expr::Neg(Box::new(Expr::Pow(x(), n(2.0))))
        );
        assert_eq!(
            parse("2^-x").unwrap(),
            Expr::Pow(n(2.0), Box::new(Expr::Neg(x())))
        );
    }

    #[test]
    fn unbalanced_call_reports_end_position() {
        let e = parse("max(x,").unwrap_err();
        assert_eq!(e.position, 6);
    }

    #[test]
    fn error_cases() {
        assert_eq!(parse("foo(x)").unwrap_err().position, 0);
        assert!(parse("sin(x, 1)").unwrap_err().message.contains("argument"));
        assert!(parse("max(x)").is_err());
        assert!(parse("(x + 1").is_err());
        assert_eq!(parse("x + 1)").unwrap_err().position, 5);
        assert!(parse("").is_err());
        assert!(parse("x $ 2").is_err());
        assert!(parse("1..2").is_err());
        assert!(parse("w").is_err());
    }

    #[test]
    fn whitespace_insensitive() {
        assert_eq!(parse(" x*  ( 1+y )").unwrap(), parse("x*(1+y)").unwrap());
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1.5e-3").unwrap(), Expr::Num(1.5e-3));
        assert_eq!(parse("2E2").unwrap(), Expr::Num(200.0));
        assert_eq!(parse("pi").unwrap(), Expr::Num(std::f64::consts::PI));
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let s = "(".repeat(10_000) + "x" + &")".repeat(10_000);
        assert!(parse(&s).is_err());
        let s = "-".repeat(10_000) + "x";
        assert!(parse(&s).is_err());
    }
}
