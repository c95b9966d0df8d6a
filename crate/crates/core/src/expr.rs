//! A small expression language over the chart parameters `u` and `v`.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := factor (('*' | '/') factor)*
//! factor   := '-' factor | atom ('^' exponent)?
//! exponent := '-' exponent | atom
//! atom     := number | 'u' | 'v' | fn '(' expr ')' | '(' expr ')'
//! fn       := 'sin' | 'cos' | 'exp' | 'ln'
//! ```
//!
//! `^` binds tighter than unary minus (`-2^2 == -4`) and does not chain.
//! Expressions evaluate to [`Jet2`]s, so every field defined in a scene file
//! comes with exact first and second derivatives.

use std::fmt;

use thiserror::Error;

use crate::jet::{Jet2, JetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
}

impl Func {
    pub const ALL: [Func; 4] = [Func::Sin, Func::Cos, Func::Exp, Func::Ln];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
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

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Parameter by index: `u` is 0, `v` is 1.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

pub const VARIABLES: [&str; 2] = ["u", "v"];

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot evaluate `{expr}`: {source}")]
pub struct EvalError {
    pub expr: String,
    #[source]
    pub source: JetError,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut k = i + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    i = k;
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| ParseError {
                offset: start,
                expected: vec!["number"],
                found: format!("`{text}`"),
            })?;
            out.push((start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap();
            return Err(ParseError {
                offset: i,
                expected: vec!["number", "identifier", "operator", "`(`", "`)`"],
                found: format!("`{ch}`"),
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

const ATOM_START: [&str; 5] = ["number", "`u`", "`v`", "function", "`(`"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        ParseError { offset: self.offset(), expected: expected.to_vec(), found: self.peek().to_string() }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == &Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.exponent()?;
            if self.peek() == &Tok::Sym('^') {
                return Err(self.error(&["operator other than `^` (use parentheses to chain powers)"]));
            }
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.exponent()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Const(x))
            }
            Tok::Ident(name) => {
                if let Some(idx) = VARIABLES.iter().position(|v| *v == name) {
                    self.bump();
                    return Ok(Expr::Var(idx));
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(self.error(&ATOM_START));
                };
                self.bump();
                if !self.eat('(') {
                    return Err(self.error(&["`(`"]));
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error(&["`)`", "operator"]));
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Tok::Sym('(') => {
                self.bump();
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error(&["`)`", "operator"]));
                }
                Ok(inner)
            }
            _ => Err(self.error(&ATOM_START)),
        }
    }
}

/// Parses an expression in `u`, `v`.
pub fn parse_tau(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    if p.peek() == &Tok::End {
        return Err(p.error(&ATOM_START));
    }
    let e = p.expr()?;
    if p.peek() != &Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_tau(s)
    }
}

impl Expr {
    /// Evaluates with jet seeds for the parameters.
    pub fn eval_jet(&self, vars: &[Jet2]) -> Result<Jet2, JetError> {
        let dim = vars[0].dim();
        Ok(match self {
            Expr::Const(c) => Jet2::constant(dim, *c),
            Expr::Var(i) => vars[*i],
            Expr::Neg(e) => -e.eval_jet(vars)?,
            Expr::Bin(op, a, b) => {
                let x = a.eval_jet(vars)?;
                let y = b.eval_jet(vars)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x.checked_div(&y)?,
                    BinOp::Pow => x.pow(&y)?,
                }
            }
            Expr::Call(func, e) => {
                let x = e.eval_jet(vars)?;
                match func {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Ln => x.ln()?,
                }
            }
        })
    }

    /// Jet of the expression at a parameter point.
    pub fn jet_at(&self, point: &[f64]) -> Result<Jet2, EvalError> {
        self.eval_jet(&Jet2::seeds(point)).map_err(|source| EvalError { expr: self.to_string(), source })
    }

    /// Plain value at a point.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        self.jet_at(point).map(|j| j.value())
    }

    /// Highest variable index used, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Call(_, e) => e.arity(),
            Expr::Bin(_, a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.arity() == 0
    }

    fn is_atom(&self) -> bool {
        matches!(self, Expr::Const(_) | Expr::Var(_) | Expr::Call(..))
    }
}

fn fmt_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    // Rust's shortest round-trip representation, always lexable by `lex`.
    if c.fract() == 0.0 && c.abs() < 1e15 {
        write!(f, "{c:.0}")
    } else {
        write!(f, "{c:?}")
    }
}

/// Prints with the minimal parentheses needed to reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn paren(e: &Expr, wrap: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if wrap {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        let additive = |e: &Expr| matches!(e, Expr::Bin(BinOp::Add | BinOp::Sub, ..));
        let multiplicative = |e: &Expr| matches!(e, Expr::Bin(BinOp::Mul | BinOp::Div, ..));
        match self {
            Expr::Const(c) => fmt_const(*c, f),
            Expr::Var(i) => f.write_str(VARIABLES[*i]),
            Expr::Neg(e) => {
                f.write_str("-")?;
                paren(e, additive(e) || multiplicative(e), f)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, a, b) => match op {
                BinOp::Add | BinOp::Sub => {
                    paren(a, false, f)?;
                    f.write_str(if *op == BinOp::Add { " + " } else { " - " })?;
                    paren(b, additive(b), f)
                }
                BinOp::Mul | BinOp::Div => {
                    paren(a, additive(a), f)?;
                    f.write_str(if *op == BinOp::Mul { " * " } else { " / " })?;
                    paren(b, additive(b) || multiplicative(b), f)
                }
                BinOp::Pow => {
                    paren(a, !a.is_atom(), f)?;
                    f.write_str("^")?;
                    paren(b, !b.is_atom(), f)
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Box<Expr> {
        Box::new(Expr::Const(x))
    }

    fn var(i: usize) -> Box<Expr> {
        Box::new(Expr::Var(i))
    }

    #[test]
    fn scaled_sine() {
        assert_eq!(
            parse_tau("0.3*sin(u)").unwrap(),
            Expr::Bin(BinOp::Mul, c(0.3), Box::new(Expr::Call(Func::Sin, var(0))))
        );
    }

    #[test]
    fn constant_function() {
        assert_eq!(parse_tau("2").unwrap(), Expr::Const(2.0));
        assert!(parse_tau("2").unwrap().is_constant());
    }

    #[test]
    fn product_of_sines() {
        let e = parse_tau("sin(u)*sin(v)").unwrap();
        assert_eq!(
            e,
            Expr::Bin(
                BinOp::Mul,
                Box::new(Expr::Call(Func::Sin, var(0))),
                Box::new(Expr::Call(Func::Sin, var(1)))
            )
        );
        let j = e.jet_at(&[0.5, 0.5]).unwrap();
        let (s, co) = (0.5f64.sin(), 0.5f64.cos());
        assert!((j.value() - s * s).abs() < 1e-15);
        assert!((j.d(0) - co * s).abs() < 1e-15);
        assert!((j.dd(0, 1) - co * co).abs() < 1e-15);
        assert!((j.dd(1, 1) + s * s).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_tau("1 - 2 - 3").unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), -4.0);
        assert_eq!(parse_tau("8 / 4 / 2").unwrap().eval(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(parse_tau("-2^2").unwrap().eval(&[0.0, 0.0]).unwrap(), -4.0);
        assert_eq!(parse_tau("2^-1").unwrap().eval(&[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(parse_tau("1 + 2 * 3^2").unwrap().eval(&[0.0, 0.0]).unwrap(), 19.0);
        assert_eq!(parse_tau("(1 + 2) * 3").unwrap().eval(&[0.0, 0.0]).unwrap(), 9.0);
        assert_eq!(parse_tau("1e-1 * u").unwrap().eval(&[2.0, 0.0]).unwrap(), 0.2);
        assert_eq!(parse_tau("(-2)^3").unwrap().eval(&[0.0, 0.0]).unwrap(), -8.0);
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse_tau("0.3*sin u").unwrap_err();
        assert_eq!(e.offset, 8);
        assert_eq!(e.expected, vec!["`(`"]);
        let e = parse_tau("1 +").unwrap_err();
        assert_eq!(e.offset, 3);
        assert!(e.expected.contains(&"number"));
        let e = parse_tau("u v").unwrap_err();
        assert_eq!(e.offset, 2);
        assert!(parse_tau("").is_err());
        assert!(parse_tau("2^3^2").is_err());
        assert!(parse_tau("tan(u)").is_err());
        assert_eq!(parse_tau("u # v").unwrap_err().offset, 2);
        assert_eq!(parse_tau("(u").unwrap_err().expected, vec!["`)`", "operator"]);
    }

    #[test]
    fn evaluation_errors_are_reported() {
        assert!(parse_tau("ln(u)").unwrap().jet_at(&[-1.0, 0.0]).is_err());
        assert!(parse_tau("1/u").unwrap().jet_at(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn printing_minimal_parentheses() {
        for (src, printed) in [
            ("0.3*sin(u)", "0.3 * sin(u)"),
            ("(u+v)*(u-v)", "(u + v) * (u - v)"),
            ("u-(v-1)", "u - (v - 1)"),
            ("-(u*v)", "-(u * v)"),
            ("(u*v)^2", "(u * v)^2"),
            ("2^(-u)", "2^(-u)"),
            ("u/(v*2)", "u / (v * 2)"),
        ] {
            let e = parse_tau(src).unwrap();
            assert_eq!(e.to_string(), printed);
            assert_eq!(parse_tau(printed).unwrap(), e);
        }
    }
}
