//! Coordinate expressions for frame fields and test functions.
//!
//! Model files describe vector-field components as strings like
//! `"-0.5*x2 + sin(x1)"` in chart coordinates `x1, .., xD`. This module
//! parses them into a small AST and evaluates them through [`Jet`]
//! arithmetic, so every field component delivers exact derivatives up to
//! the tracked order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::jet::{Jet, JetError};

/// Errors raised while parsing or evaluating a coordinate expression.
#[derive(Debug, Clone, thiserror::Error)]
pub enum ExprError {
    #[error("parse error at byte {at}: {msg} (in `{src}`)")]
    Parse { at: usize, msg: String, src: String },
    #[error("variable x{} used in a {dim}-dimensional chart", index + 1)]
    VariableOutOfRange { index: usize, dim: usize },
    #[error("while evaluating `{src}`: {source}")]
    Eval {
        src: String,
        #[source]
        source: JetError,
    },
}

/// Expression tree over chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index (surface syntax `x1` is index 0).
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    /// Parse the surface syntax: `+ - * / ^`, parentheses, `sin cos exp`,
    /// float literals, and coordinates `x1..xD` (D checked at eval time).
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { src, bytes: src.as_bytes(),cursor: 0 };
        p.skip_ws();
        let e = p.expr()?;
        p.skip_ws();
        if p.cursor != p.bytes.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Largest coordinate index mentioned, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.max_var()
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (None, m) | (m, None) => m,
                    (Some(x), Some(y)) => Some(x.max(y)),
                }
            }
        }
    }

    /// Evaluate on coordinate jets (one per chart coordinate).
    pub fn eval(&self, vars: &[Jet]) -> Result<Jet, ExprError> {
        let dim = vars.len();
        let ord = vars.first().map_or(0, Jet::order);
        match self {
            Expr::Const(c) => Ok(Jet::constant(dim, ord, *c)),
            Expr::Var(i) => {
                if *i >= dim {
                    Err(ExprError::VariableOutOfRange { index: *i, dim })
                } else {
                    Ok(vars[*i].clone())
                }
            }
            Expr::Neg(a) => Ok(-a.eval(vars)?),
            Expr::Add(a, b) => Ok(a.eval(vars)? + b.eval(vars)?),
            Expr::Sub(a, b) => Ok(a.eval(vars)? - b.eval(vars)?),
            Expr::Mul(a, b) => Ok(a.eval(vars)? * b.eval(vars)?),
            Expr::Div(a, b) => {
                let num = a.eval(vars)?;
                let den = b.eval(vars)?;
                num.try_div(&den).map_err(|e| ExprError::Eval {
                    src: format!("{self}"),
                    source: e,
                })
            }
            Expr::Pow(a, k) => Ok(a.eval(vars)?.powi(*k)),
            Expr::Sin(a) => Ok(a.eval(vars)?.sin()),
            Expr::Cos(a) => Ok(a.eval(vars)?.cos()),
            Expr::Exp(a) => Ok(a.eval(vars)?.exp()),
        }
    }

    /// Plain numeric evaluation at a point.
    pub fn eval_value(&self, p: &[f64]) -> Result<f64, ExprError> {
        if p.is_empty() {
            // Jets need at least one coordinate; a closed expression can be
            // evaluated against a dummy one, but any variable must fail.
            if let Some(index) = self.max_var() {
                return Err(ExprError::VariableOutOfRange { index, dim: 0 });
            }
            return Ok(self.eval(&Jet::variables(&[0.0], 0))?.value());
        }
        Ok(self.eval(&Jet::variables(p, 0))?.value())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a}*{b})"),
            Expr::Div(a, b) => write!(f, "({a}/{b})"),
            Expr::Pow(a, k) => write!(f, "{a}^{k}"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

/// Serialize as the surface-syntax string so model files round-trip.
impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    cursor: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError::Parse {
            at: self.cursor,
            msg: msg.to_string(),
            src: self.src.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.cursor < self.bytes.len() && self.bytes[self.cursor].is_ascii_whitespace() {
            self.cursor += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.cursor).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.cursor += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            if self.eat(b'+') {
                acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
            } else if self.eat(b'-') {
                acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.unary()?;
        loop {
            self.skip_ws();
            if self.eat(b'*') {
                acc = Expr::Mul(Box::new(acc), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                acc = Expr::Div(Box::new(acc), Box::new(self.unary()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        self.skip_ws();
        if self.eat(b'^') {
            self.skip_ws();
            let start = self.cursor;
            while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                self.cursor += 1;
            }
            if start == self.cursor {
                return Err(self.err("expected a non-negative integer exponent after `^`"));
            }
            let k: u32 = self.src[start..self.cursor]
                .parse()
                .map_err(|_| self.err("exponent out of range"))?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.cursor += 1;
                let e = self.expr()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => self.number(),
            Some(b) if b.is_ascii_alphabetic() => self.ident(),
            _ => Err(self.err("expected a number, coordinate, function, or `(`")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.cursor;
        while self.peek().is_some_and(|b| b.is_ascii_digit() || b == b'.') {
            self.cursor += 1;
        }
        // scientific notation: 1e-3, 2.5E+4
        if self.peek().is_some_and(|b| b == b'e' || b == b'E') {
            let mark = self.cursor;
            self.cursor += 1;
            if self.peek().is_some_and(|b| b == b'+' || b == b'-') {
                self.cursor += 1;
            }
            if self.peek().is_some_and(|b| b.is_ascii_digit()) {
                while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                    self.cursor += 1;
                }
            } else {
                self.cursor = mark; // the `e` was an identifier, not an exponent
            }
        }
        self.src[start..self.cursor]
            .parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| self.err("malformed number"))
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.cursor;
        while self.peek().is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_') {
            self.cursor += 1;
        }
        let name = &self.src[start..self.cursor];
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(n) = rest.parse::<usize>() {
                if n == 0 {
                    return Err(self.err("coordinates are numbered from x1"));
                }
                return Ok(Expr::Var(n - 1));
            }
        }
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        let func = match name {
            "sin" => Expr::Sin as fn(Box<Expr>) -> Expr,
            "cos" => Expr::Cos,
            "exp" => Expr::Exp,
            _ => return Err(self.err(&format!("unknown identifier `{name}`"))),
        };
        self.skip_ws();
        if !self.eat(b'(') {
            return Err(self.err(&format!("expected `(` after `{name}`")));
        }
        let arg = self.expr()?;
        self.skip_ws();
        if !self.eat(b')') {
            return Err(self.err("expected `)`"));
        }
        Ok(func(Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn val(src: &str, p: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval_value(p).unwrap()
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_relative_eq!(val("1 + 2*3", &[]), 7.0);
        assert_relative_eq!(val("(1 + 2)*3", &[]), 9.0);
        assert_relative_eq!(val("2^3", &[]), 8.0);
        // `^` takes a single literal exponent; chaining is a parse error.
        assert!(Expr::parse("2^3^0").is_err());
        assert_relative_eq!(val("-x1^2", &[3.0]), -9.0);
        assert_relative_eq!(val("6/4", &[]), 1.5);
        assert_relative_eq!(val("1e-3 + 2.5E2", &[]), 250.001);
        assert_relative_eq!(val("pi", &[]), std::f64::consts::PI);
    }

    #[test]
    fn coordinates_and_functions() {
        assert_relative_eq!(val("x1*x2 - 0.5*x3", &[2.0, 3.0, 4.0]), 4.0);
        assert_relative_eq!(val("sin(x1)*cos(x1) + exp(-x1)", &[0.3]),
            0.3f64.sin() * 0.3f64.cos() + (-0.3f64).exp());
    }

    #[test]
    fn jet_evaluation_differentiates() {
        let e = Expr::parse("x1^2*sin(x2)").unwrap();
        let p = [1.2, 0.7];
        let j = e.eval(&Jet::variables(&p, 2)).unwrap();
        assert_relative_eq!(j.value(), 1.44 * 0.7f64.sin(), epsilon = 1e-14);
        assert_relative_eq!(j.partial(0), 2.4 * 0.7f64.sin(), epsilon = 1e-14);
        assert_relative_eq!(j.partial(1), 1.44 * 0.7f64.cos(), epsilon = 1e-14);
        assert_relative_eq!(j.partial2(0, 1), 2.4 * 0.7f64.cos(), epsilon = 1e-14);
    }

    #[test]
    fn parse_errors_carry_location() {
        match Expr::parse("x1 + @") {
            Err(ExprError::Parse { at, .. }) => assert_eq!(at, 5),
            other => panic!("expected a parse error, got {other:?}"),
        }
        assert!(Expr::parse("sin x1").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("2^-1").is_err());
        assert!(Expr::parse("foo(x1)").is_err());
        assert!(Expr::parse("x1 x2").is_err());
    }

    #[test]
    fn out_of_range_variables_surface_at_eval() {
        let e = Expr::parse("x5").unwrap();
        assert_eq!(e.max_var(), Some(4));
        assert!(matches!(
            e.eval_value(&[1.0, 2.0]),
            Err(ExprError::VariableOutOfRange { index: 4, dim: 2 })
        ));
    }

    #[test]
    fn display_round_trips_through_parse() {
        let src = "x1^2*sin(x2) - exp(-x3)/(1 + x1^2)";
        let e = Expr::parse(src).unwrap();
        let e2 = Expr::parse(&e.to_string()).unwrap();
        let p = [0.3, -1.1, 0.9];
        assert_relative_eq!(e.eval_value(&p).unwrap(), e2.eval_value(&p).unwrap(), epsilon = 1e-15);
    }
}
