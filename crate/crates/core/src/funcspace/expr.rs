//! Expression trees over the single variable `x`.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' factor)?
//! base   := number | 'x' | ident '(' expr ')' | '(' expr ')'
//! ident  := exp | log | sqrt
//! ```
//!
//! A leading `-` on a factor is accepted as shorthand for `0 - factor`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at {pos}")]
    UnknownIdent { pos: usize, name: String },
    #[error("`{name}` at {pos} takes exactly one argument, got {got}")]
    Arity { pos: usize, name: String, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.syntax("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Raw IEEE evaluation; may return NaN or infinities.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => pow(a.eval(x), b.eval(x)),
            Expr::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    /// Natural log of the value, computed structurally where possible so that
    /// `exp(...)` factors far beyond the f64 range still have a finite log.
    /// Returns NaN when the value is not positive.
    pub fn ln_eval(&self, x: f64) -> f64 {
        let structural = match self {
            Expr::Call(Func::Exp, a) => a.eval(x),
            Expr::Call(Func::Sqrt, a) => 0.5 * a.ln_eval(x),
            Expr::Mul(a, b) => a.ln_eval(x) + b.ln_eval(x),
            Expr::Div(a, b) => a.ln_eval(x) - b.ln_eval(x),
            Expr::Pow(a, b) => b.eval(x) * a.ln_eval(x),
            Expr::X => x.ln(),
            Expr::Const(c) => c.ln(),
            _ => f64::NAN,
        };
        if structural.is_finite() {
            structural
        } else {
            let v = self.eval(x);
            if v > 0.0 {
                v.ln()
            } else {
                f64::NAN
            }
        }
    }

    /// Symbolic derivative with respect to `x`.
    pub fn diff(&self) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            X => Const(1.0),
            Add(a, b) => add(a.diff(), b.diff()),
            Sub(a, b) => sub(a.diff(), b.diff()),
            Mul(a, b) => add(mul(a.diff(), (**b).clone()), mul((**a).clone(), b.diff())),
            Div(a, b) => div(
                sub(mul(a.diff(), (**b).clone()), mul((**a).clone(), b.diff())),
                mul((**b).clone(), (**b).clone()),
            ),
            Pow(a, b) => match **b {
                Const(c) => mul(mul(Const(c), pow_expr((**a).clone(), Const(c - 1.0))), a.diff()),
                _ => {
                    // d(a^b) = a^b (b' ln a + b a'/a)
                    let term = add(
                        mul(b.diff(), Call(Func::Log, a.clone())),
                        div(mul((**b).clone(), a.diff()), (**a).clone()),
                    );
                    mul(self.clone(), term)
                }
            },
            Call(Func::Exp, a) => mul(self.clone(), a.diff()),
            Call(Func::Log, a) => div(a.diff(), (**a).clone()),
            Call(Func::Sqrt, a) => div(a.diff(), mul(Const(2.0), self.clone())),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Pow(..) => 3,
            Expr::Const(c) if c.is_sign_negative() => 0,
            _ => 4,
        }
    }
}

fn pow(base: f64, exponent: f64) -> f64 {
    if exponent == 0.5 {
        base.sqrt()
    } else {
        base.powf(exponent)
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    Expr::Add(Box::new(a), Box::new(b))
}
fn sub(a: Expr, b: Expr) -> Expr {
    Expr::Sub(Box::new(a), Box::new(b))
}
fn mul(a: Expr, b: Expr) -> Expr {
    Expr::Mul(Box::new(a), Box::new(b))
}
fn div(a: Expr, b: Expr) -> Expr {
    Expr::Div(Box::new(a), Box::new(b))
}
fn pow_expr(a: Expr, b: Expr) -> Expr {
    Expr::Pow(Box::new(a), Box::new(b))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Operands are wrapped whenever their precedence does not exceed the
        // parent's; this over-parenthesizes a little but always re-parses to
        // the same tree shape.
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if e.precedence() > min {
                write!(f, "{e}")
            } else {
                write!(f, "({e})")
            }
        };
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::X => f.write_str("x"),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let op = if matches!(self, Expr::Add(..)) { '+' } else { '-' };
                wrap(f, a, 0)?;
                write!(f, "{op}")?;
                wrap(f, b, 1)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                let op = if matches!(self, Expr::Mul(..)) { '*' } else { '/' };
                wrap(f, a, 1)?;
                write!(f, "{op}")?;
                wrap(f, b, 2)
            }
            Expr::Pow(a, b) => {
                wrap(f, a, 3)?;
                f.write_str("^")?;
                wrap(f, b, 2)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn syntax(&self, msg: &str) -> ParseError {
        ParseError::Syntax { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = add(lhs, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = mul(lhs, self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = div(lhs, self.factor()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(match self.factor()? {
                Expr::Const(c) => Expr::Const(-c),
                other => sub(Expr::Const(0.0), other),
            });
        }
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.factor()?;
            Ok(pow_expr(base, exponent))
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.syntax(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.syntax("malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
                return Err(self.syntax("malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ParseError::Syntax { pos: start, msg: "malformed number".into() })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii ident");
        if name == "x" {
            return Ok(Expr::X);
        }
        let Some(func) = Func::from_name(name) else {
            return Err(ParseError::UnknownIdent { pos: start, name: name.to_string() });
        };
        self.expect(b'(')?;
        if self.peek() == Some(b')') {
            return Err(ParseError::Arity { pos: start, name: name.to_string(), got: 0 });
        }
        let arg = self.expr()?;
        let mut got = 1;
        while self.peek() == Some(b',') {
            self.pos += 1;
            self.expr()?;
            got += 1;
        }
        if got != 1 {
            return Err(ParseError::Arity { pos: start, name: name.to_string(), got });
        }
        self.expect(b')')?;
        Ok(Expr::Call(func, Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1+2*3", 0.0), 7.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("8/4/2", 0.0), 1.0);
        assert_eq!(ev("10-3-2", 0.0), 5.0);
        assert_eq!(ev("-x^2", 3.0), -9.0);
        assert_eq!(ev("x^-1", 4.0), 0.25);
        assert_eq!(ev("1.5e2 + .5", 0.0), 150.5);
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(
            Expr::parse("foo(x)"),
            Err(ParseError::UnknownIdent { pos: 0, name: "foo".into() })
        );
        assert!(matches!(Expr::parse("exp(x, 2)"), Err(ParseError::Arity { got: 2, .. })));
        assert!(matches!(Expr::parse("sqrt()"), Err(ParseError::Arity { got: 0, .. })));
        assert!(matches!(Expr::parse("x +"), Err(ParseError::Syntax { pos: 3, .. })));
        assert!(matches!(Expr::parse("(x"), Err(ParseError::Syntax { .. })));
        assert!(matches!(Expr::parse("x x"), Err(ParseError::Syntax { pos: 2, .. })));
        assert!(matches!(Expr::parse("1e"), Err(ParseError::Syntax { .. })));
        assert!(matches!(Expr::parse("exp x"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn print_reparses_to_same_tree() {
        for s in ["x-(x-1)", "(x^2)^3", "x^(2^3)", "1/(x*x)", "-2*x", "exp(-x)/x", "2-(-3)"] {
            let e = Expr::parse(s).unwrap();
            assert_eq!(Expr::parse(&e.to_string()).unwrap(), e, "{s} -> {e}");
        }
    }

    #[test]
    fn ln_eval_survives_overflow() {
        let e = Expr::parse("exp(2*(sqrt(x)-1))*(1+1/x)").unwrap();
        let x = 1.0e8;
        assert!(e.eval(x).is_infinite());
        let expect = 2.0 * (x.sqrt() - 1.0) + (1.0 + 1.0 / x).ln();
        assert!((e.ln_eval(x) - expect).abs() < 1e-9);
        assert!(Expr::parse("0-x").unwrap().ln_eval(2.0).is_nan());
    }

    #[test]
    fn symbolic_derivatives() {
        let d = |s: &str, x: f64| Expr::parse(s).unwrap().diff().eval(x);
        assert_eq!(d("x^2", 3.0), 6.0);
        assert_eq!(d("sqrt(x)", 4.0), 0.25);
        assert!((d("x^x", 2.0) - 4.0 * (2f64.ln() + 1.0)).abs() < 1e-12);
        assert!((d("log(x)/x", 1.0) - 1.0).abs() < 1e-15);
    }
}
