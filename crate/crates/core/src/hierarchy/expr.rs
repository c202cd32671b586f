//! Infix expressions over named coordinates.
//!
//! Grammar: `+ - * / ^`, parentheses, decimal literals, identifiers and the
//! functions `exp sin cos sqrt` (the functions and the constant `pi` are
//! rejected where a rational function is required).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

use super::rational::RationalFunction;

/// Line/column (1-based) of the first character of an expression inside its
/// enclosing document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    pub line: usize,
    pub column: usize,
}

impl Default for Origin {
    fn default() -> Self {
        Origin { line: 1, column: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Exp,
    Sin,
    Cos,
    Sqrt,
}

impl Function {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "exp" => Function::Exp,
            "sin" => Function::Sin,
            "cos" => Function::Cos,
            "sqrt" => Function::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Function::Exp => x.exp(),
            Function::Sin => x.sin(),
            Function::Cos => x.cos(),
            Function::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Number(BigRational),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Function, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    /// Byte offset of the node inside the source expression.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Op(char),
    End,
}

struct Parser<'a> {
    src: &'a str,
    origin: Origin,
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

fn location(src: &str, origin: Origin, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let newlines = before.matches('\n').count();
    if newlines == 0 {
        (origin.line, origin.column + before.chars().count())
    } else {
        let tail = before.rsplit('\n').next().unwrap_or("");
        (origin.line + newlines, 1 + tail.chars().count())
    }
}

fn err_at(src: &str, origin: Origin, offset: usize, message: impl Into<String>) -> Error {
    let (line, column) = location(src, origin, offset);
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_decimal(text: &str) -> Option<BigRational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let n: BigInt = digits.parse().ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    Some(if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    })
}

fn tokenize(src: &str, origin: Origin) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value = parse_decimal(text)
                .ok_or_else(|| err_at(src, origin, start, format!("malformed number '{text}'")))?;
            out.push((Tok::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap();
            return Err(err_at(
                src,
                origin,
                i,
                format!("unexpected character '{ch}'"),
            ));
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, offset: usize, msg: impl Into<String>) -> Error {
        err_at(self.src, self.origin, offset, msg)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let (tok, off) = self.peek().clone();
            match tok {
                Tok::Op('+') => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr {
                        kind: ExprKind::Add(Box::new(lhs), Box::new(rhs)),
                        offset: off,
                    };
                }
                Tok::Op('-') => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr {
                        kind: ExprKind::Sub(Box::new(lhs), Box::new(rhs)),
                        offset: off,
                    };
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let (tok, off) = self.peek().clone();
            match tok {
                Tok::Op('*') => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr {
                        kind: ExprKind::Mul(Box::new(lhs), Box::new(rhs)),
                        offset: off,
                    };
                }
                Tok::Op('/') => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr {
                        kind: ExprKind::Div(Box::new(lhs), Box::new(rhs)),
                        offset: off,
                    };
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        let (tok, off) = self.peek().clone();
        match tok {
            Tok::Op('-') => {
                self.bump();
                let inner = self.unary()?;
                Ok(Expr {
                    kind: ExprKind::Neg(Box::new(inner)),
                    offset: off,
                })
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        let (tok, off) = self.peek().clone();
        if tok == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Pow(Box::new(base), Box::new(exp)),
                offset: off,
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let (tok, off) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr {
                kind: ExprKind::Number(v),
                offset: off,
            }),
            Tok::Ident(name) => {
                if self.peek().0 == Tok::Op('(') {
                    let func = Function::from_name(&name)
                        .ok_or_else(|| self.error(off, format!("unknown function '{name}'")))?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_close(off)?;
                    Ok(Expr {
                        kind: ExprKind::Call(func, Box::new(arg)),
                        offset: off,
                    })
                } else {
                    Ok(Expr {
                        kind: ExprKind::Var(name),
                        offset: off,
                    })
                }
            }
            Tok::Op('(') => {
                let inner = self.expr()?;
                self.expect_close(off)?;
                Ok(inner)
            }
            Tok::End => Err(self.error(off, "unexpected end of expression")),
            Tok::Op(c) => Err(self.error(off, format!("unexpected '{c}'"))),
        }
    }

    fn expect_close(&mut self, open: usize) -> Result<()> {
        let (tok, off) = self.bump();
        if tok == Tok::Op(')') {
            Ok(())
        } else {
            let _ = open;
            Err(self.error(off, "expected ')'"))
        }
    }
}

/// A parsed expression together with its source, for error locations.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedExpr {
    pub source: String,
    pub origin: Origin,
    pub root: Expr,
}

pub fn parse_expression(src: &str, origin: Origin) -> Result<ParsedExpr> {
    let toks = tokenize(src, origin)?;
    let mut p = Parser {
        src,
        origin,
        toks,
        pos: 0,
    };
    let root = p.expr()?;
    let (tok, off) = p.peek().clone();
    if tok != Tok::End {
        return Err(p.error(off, "unexpected trailing input"));
    }
    Ok(ParsedExpr {
        source: src.to_string(),
        origin,
        root,
    })
}

impl ParsedExpr {
    fn error(&self, offset: usize, msg: impl Into<String>) -> Error {
        err_at(&self.source, self.origin, offset, msg)
    }

    /// Converts to an exact rational function of `vars`.
    pub fn to_rational(&self, vars: &[&str]) -> Result<RationalFunction> {
        self.rational(&self.root, vars)
    }

    fn rational(&self, e: &Expr, vars: &[&str]) -> Result<RationalFunction> {
        let n = vars.len();
        Ok(match &e.kind {
            ExprKind::Number(v) => RationalFunction::constant(n, v.clone()),
            ExprKind::Var(name) => match vars.iter().position(|v| v == name) {
                Some(i) => RationalFunction::variable(n, i),
                None => {
                    return Err(self.error(
                        e.offset,
                        format!("unknown variable '{name}' (expected one of {vars:?})"),
                    ))
                }
            },
            ExprKind::Neg(a) => self.rational(a, vars)?.neg(),
            ExprKind::Add(a, b) => self.rational(a, vars)?.add(&self.rational(b, vars)?),
            ExprKind::Sub(a, b) => self.rational(a, vars)?.sub(&self.rational(b, vars)?),
            ExprKind::Mul(a, b) => self.rational(a, vars)?.mul(&self.rational(b, vars)?),
            ExprKind::Div(a, b) => self
                .rational(a, vars)?
                .div(&self.rational(b, vars)?)
                .ok_or_else(|| {
                    self.error(e.offset, "division by an identically zero expression")
                })?,
            ExprKind::Pow(a, b) => {
                let exp = self.rational(b, vars)?;
                let k = exp
                    .numerator()
                    .as_constant()
                    .filter(|c| c.is_integer() && exp.denominator().as_constant().is_some())
                    .and_then(|c| c.to_integer().to_i64())
                    .filter(|k| k.abs() <= 64)
                    .ok_or_else(|| {
                        self.error(
                            b.offset,
                            "exponent must be an integer constant with |n| ≤ 64",
                        )
                    })?;
                self.rational(a, vars)?
                    .powi(k)
                    .ok_or_else(|| self.error(e.offset, "zero raised to a negative power"))?
            }
            ExprKind::Call(f, _) => {
                return Err(self.error(
                    e.offset,
                    format!("function {f:?} is not allowed in a rational expression"),
                ))
            }
        })
    }

    /// Checks that every identifier is in `vars` (or `pi`), so that
    /// evaluation cannot fail later.
    pub fn validate(&self, vars: &[&str]) -> Result<()> {
        fn walk(p: &ParsedExpr, e: &Expr, vars: &[&str]) -> Result<()> {
            match &e.kind {
                ExprKind::Number(_) => Ok(()),
                ExprKind::Var(name) => {
                    if name == "pi" || vars.contains(&name.as_str()) {
                        Ok(())
                    } else {
                        Err(p.error(
                            e.offset,
                            format!("unknown variable '{name}' (expected one of {vars:?})"),
                        ))
                    }
                }
                ExprKind::Neg(a) | ExprKind::Call(_, a) => walk(p, a, vars),
                ExprKind::Add(a, b)
                | ExprKind::Sub(a, b)
                | ExprKind::Mul(a, b)
                | ExprKind::Div(a, b)
                | ExprKind::Pow(a, b) => {
                    walk(p, a, vars)?;
                    walk(p, b, vars)
                }
            }
        }
        walk(self, &self.root, vars)
    }

    /// Floating-point evaluation; `values[i]` is the value of `vars[i]`.
    pub fn eval(&self, vars: &[&str], values: &[f64]) -> f64 {
        fn go(e: &Expr, vars: &[&str], values: &[f64]) -> f64 {
            match &e.kind {
                ExprKind::Number(v) => v.to_f64().unwrap_or(f64::NAN),
                ExprKind::Var(name) => vars
                    .iter()
                    .position(|v| v == name)
                    .map(|i| values[i])
                    .unwrap_or(if name == "pi" {
                        std::f64::consts::PI
                    } else {
                        f64::NAN
                    }),
                ExprKind::Neg(a) => -go(a, vars, values),
                ExprKind::Add(a, b) => go(a, vars, values) + go(b, vars, values),
                ExprKind::Sub(a, b) => go(a, vars, values) - go(b, vars, values),
                ExprKind::Mul(a, b) => go(a, vars, values) * go(b, vars, values),
                ExprKind::Div(a, b) => go(a, vars, values) / go(b, vars, values),
                ExprKind::Pow(a, b) => {
                    let base = go(a, vars, values);
                    let exp = go(b, vars, values);
                    if exp.fract() == 0.0 && exp.abs() < 1e9 {
                        base.powi(exp as i32)
                    } else {
                        base.powf(exp)
                    }
                }
                ExprKind::Call(f, a) => f.apply(go(a, vars, values)),
            }
        }
        go(&self.root, vars, values)
    }

    /// True when the expression is the literal number zero.
    pub fn is_literal_zero(&self) -> bool {
        matches!(&self.root.kind, ExprKind::Number(v) if v.is_zero())
    }
}

fn uses(e: &Expr, out: &mut Vec<String>) {
    match &e.kind {
        ExprKind::Number(_) => {}
        ExprKind::Var(name) => {
            if name != "pi" && !out.contains(name) {
                out.push(name.clone());
            }
        }
        ExprKind::Neg(a) | ExprKind::Call(_, a) => uses(a, out),
        ExprKind::Add(a, b)
        | ExprKind::Sub(a, b)
        | ExprKind::Mul(a, b)
        | ExprKind::Div(a, b)
        | ExprKind::Pow(a, b) => {
            uses(a, out);
            uses(b, out);
        }
    }
}

fn node(kind: ExprKind) -> Expr {
    Expr { kind, offset: 0 }
}

fn one() -> Expr {
    node(ExprKind::Number(BigRational::from_integer(BigInt::from(1))))
}

/// Signed summands of `e` (`true` = subtracted).
fn summands(e: &Expr, negate: bool, out: &mut Vec<(bool, Expr)>) {
    match &e.kind {
        ExprKind::Add(a, b) => {
            summands(a, negate, out);
            summands(b, negate, out);
        }
        ExprKind::Sub(a, b) => {
            summands(a, negate, out);
            summands(b, !negate, out);
        }
        ExprKind::Neg(a) => summands(a, !negate, out),
        _ => out.push((negate, e.clone())),
    }
}

/// Multiplicative factors of `e` (`true` = divisor). An exponential of a
/// sum becomes one exponential per summand.
fn factors(e: &Expr, inverse: bool, out: &mut Vec<(bool, Expr)>) {
    match &e.kind {
        ExprKind::Mul(a, b) => {
            factors(a, inverse, out);
            factors(b, inverse, out);
        }
        ExprKind::Div(a, b) => {
            factors(a, inverse, out);
            factors(b, !inverse, out);
        }
        ExprKind::Call(Function::Exp, arg) => {
            let mut terms = Vec::new();
            summands(arg, false, &mut terms);
            for (neg, t) in terms {
                let t = if neg { node(ExprKind::Neg(Box::new(t))) } else { t };
                out.push((inverse, node(ExprKind::Call(Function::Exp, Box::new(t)))));
            }
        }
        _ => out.push((inverse, e.clone())),
    }
}

impl ParsedExpr {
    /// Splits the expression into `f(a) · g(b)` when its product structure
    /// allows it exactly; constants go to the first factor.
    pub fn separate(&self, a: &str, b: &str) -> Option<(ParsedExpr, ParsedExpr)> {
        let mut fs = Vec::new();
        factors(&self.root, false, &mut fs);
        let (mut left, mut right) = (one(), one());
        for (inverse, f) in fs {
            let mut vars = Vec::new();
            uses(&f, &mut vars);
            let side = if vars.iter().all(|v| v == a) {
                &mut left
            } else if vars.iter().all(|v| v == b) {
                &mut right
            } else {
                return None;
            };
            let prev = std::mem::replace(side, one());
            *side = node(if inverse {
                ExprKind::Div(Box::new(prev), Box::new(f))
            } else {
                ExprKind::Mul(Box::new(prev), Box::new(f))
            });
        }
        let wrap = |root| ParsedExpr {
            source: self.source.clone(),
            origin: self.origin,
            root,
        };
        Some((wrap(left), wrap(right)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_power() {
        let e = parse_expression("1 + 2*x^2 - -x/4", Origin::default()).unwrap();
        let v = e.eval(&["x"], &[3.0]);
        assert!((v - (1.0 + 18.0 + 0.75)).abs() < 1e-14);
    }

    #[test]
    fn exact_decimals() {
        let e = parse_expression("0.1*q + 1e-3", Origin::default()).unwrap();
        let r = e.to_rational(&["q"]).unwrap();
        let ten = RationalFunction::variable(1, 0).scale(&BigRational::new(1.into(), 10.into()));
        let c = RationalFunction::constant(1, BigRational::new(1.into(), 1000.into()));
        assert!(r.equals(&ten.add(&c)));
    }

    #[test]
    fn error_locations() {
        let origin = Origin {
            line: 7,
            column: 12,
        };
        match parse_expression("q^2 + $", origin) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (7, 18)),
            other => panic!("{other:?}"),
        }
        let e = parse_expression("q^2/2 + sin(q)", origin).unwrap();
        match e.to_rational(&["q"]) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (7, 20)),
            other => panic!("{other:?}"),
        }
        match parse_expression("(q + 1", origin) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 18),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_integer_exponent_rejected() {
        let e = parse_expression("q^0.5", Origin::default()).unwrap();
        assert!(e.to_rational(&["q"]).is_err());
        let e = parse_expression("y + 1", Origin::default()).unwrap();
        assert!(e.to_rational(&["q"]).is_err());
    }

    #[test]
    fn separation_of_products_and_exponentials() {
        let e = parse_expression("2*exp(-q^2/2 - p^2)*(1+cos(pi*p))/(3+q)", Origin::default())
            .unwrap();
        let (f, g) = e.separate("q", "p").unwrap();
        for (q, p) in [(0.3, -1.2), (-0.7, 0.4), (1.5, 2.0)] {
            let whole = e.eval(&["q", "p"], &[q, p]);
            let split = f.eval(&["q"], &[q]) * g.eval(&["p"], &[p]);
            assert!((whole - split).abs() < 1e-14 * whole.abs().max(1.0));
        }
        let mixed = parse_expression("exp(-(q-p)^2)", Origin::default()).unwrap();
        assert!(mixed.separate("q", "p").is_none());
        let sum = parse_expression("q + p", Origin::default()).unwrap();
        assert!(sum.separate("q", "p").is_none());
    }
}
