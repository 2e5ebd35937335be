//! A small arithmetic grammar for fields and data: `+ - * / ^`, `abs`,
//! `min`, `max`, numbers and coordinates `x1..xn`. Parsed expressions are
//! differentiated symbolically so fields built from them carry analytic
//! gradients and Hessians.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' digits | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::ScalarField;
use crate::symmat::SymMatrix;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// Only produced by differentiation.
    Sign(Box<Expr>),
    /// `if a <= b { then } else { other }`; only produced by differentiation.
    IfLe(Box<Expr>, Box<Expr>, Box<Expr>, Box<Expr>),
}

use Expr::*;

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Const(c) => *c,
            Var(i) => x[*i],
            Neg(a) => -a.eval(x),
            Add(a, c) => a.eval(x) + c.eval(x),
            Sub(a, c) => a.eval(x) - c.eval(x),
            Mul(a, c) => a.eval(x) * c.eval(x),
            Div(a, c) => a.eval(x) / c.eval(x),
            Pow(a, c) => {
                let base = a.eval(x);
                match **c {
                    Const(p) if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 => {
                        base.powi(p as i32)
                    }
                    _ => base.powf(c.eval(x)),
                }
            }
            Abs(a) => a.eval(x).abs(),
            Min(a, c) => a.eval(x).min(c.eval(x)),
            Max(a, c) => a.eval(x).max(c.eval(x)),
            Sign(a) => {
                let v = a.eval(x);
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            IfLe(p, q, t, e) => {
                if p.eval(x) <= q.eval(x) {
                    t.eval(x)
                } else {
                    e.eval(x)
                }
            }
        }
    }

    /// Number of coordinates referenced: one more than the largest index.
    pub fn arity(&self) -> usize {
        match self {
            Const(_) => 0,
            Var(i) => i + 1,
            Neg(a) | Abs(a) | Sign(a) => a.arity(),
            Add(a, c) | Sub(a, c) | Mul(a, c) | Div(a, c) | Pow(a, c) | Min(a, c) | Max(a, c) => {
                a.arity().max(c.arity())
            }
            IfLe(p, q, t, e) => p.arity().max(q.arity()).max(t.arity()).max(e.arity()),
        }
    }

    fn is_const(&self) -> Option<f64> {
        match self {
            Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Symbolic partial derivative with respect to coordinate `i`.
    /// Non-constant exponents are rejected.
    pub fn diff(&self, i: usize) -> Result<Expr> {
        Ok(match self {
            Const(_) => Const(0.0),
            Var(j) => Const(if *j == i { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(i)?),
            Add(a, c) => add(a.diff(i)?, c.diff(i)?),
            Sub(a, c) => sub(a.diff(i)?, c.diff(i)?),
            Mul(a, c) => add(mul(a.diff(i)?, (**c).clone()), mul((**a).clone(), c.diff(i)?)),
            Div(a, c) => div(
                sub(mul(a.diff(i)?, (**c).clone()), mul((**a).clone(), c.diff(i)?)),
                pow((**c).clone(), 2.0),
            ),
            Pow(a, c) => {
                let p = c.is_const().ok_or_else(|| {
                    Error::InvalidParameter(
                        "cannot differentiate a power with a non-constant exponent".into(),
                    )
                })?;
                if p == 0.0 {
                    Const(0.0)
                } else {
                    mul(mul(Const(p), pow((**a).clone(), p - 1.0)), a.diff(i)?)
                }
            }
            Abs(a) => mul(Sign(a.clone()), a.diff(i)?),
            Min(a, c) => if_le((**a).clone(), (**c).clone(), a.diff(i)?, c.diff(i)?),
            Max(a, c) => if_le((**a).clone(), (**c).clone(), c.diff(i)?, a.diff(i)?),
            Sign(_) => Const(0.0),
            IfLe(p, q, t, e) => if_le((**p).clone(), (**q).clone(), t.diff(i)?, e.diff(i)?),
        })
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Const(c) => Const(-c),
        Neg(inner) => *inner,
        a => Neg(b(a)),
    }
}

fn add(a: Expr, c: Expr) -> Expr {
    match (a.is_const(), c.is_const()) {
        (Some(x), Some(y)) => Const(x + y),
        (Some(z), _) if z == 0.0 => c,
        (_, Some(z)) if z == 0.0 => a,
        _ => Add(b(a), b(c)),
    }
}

fn sub(a: Expr, c: Expr) -> Expr {
    match (a.is_const(), c.is_const()) {
        (Some(x), Some(y)) => Const(x - y),
        (Some(z), _) if z == 0.0 => neg(c),
        (_, Some(z)) if z == 0.0 => a,
        _ => Sub(b(a), b(c)),
    }
}

fn mul(a: Expr, c: Expr) -> Expr {
    match (a.is_const(), c.is_const()) {
        (Some(x), Some(y)) => Const(x * y),
        (Some(z), _) | (_, Some(z)) if z == 0.0 => Const(0.0),
        (Some(o), _) if o == 1.0 => c,
        (_, Some(o)) if o == 1.0 => a,
        _ => Mul(b(a), b(c)),
    }
}

fn div(a: Expr, c: Expr) -> Expr {
    match (a.is_const(), c.is_const()) {
        (Some(z), _) if z == 0.0 => Const(0.0),
        (_, Some(o)) if o == 1.0 => a,
        _ => Div(b(a), b(c)),
    }
}

fn pow(a: Expr, p: f64) -> Expr {
    if p == 1.0 {
        a
    } else if p == 0.0 {
        Const(1.0)
    } else if let Some(x) = a.is_const() {
        Const(x.powf(p))
    } else {
        Pow(b(a), b(Const(p)))
    }
}

fn if_le(p: Expr, q: Expr, t: Expr, e: Expr) -> Expr {
    if t == e {
        t
    } else {
        IfLe(b(p), b(q), b(t), b(e))
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Add(..) | Sub(..) => 1,
        Mul(..) | Div(..) => 2,
        Neg(_) => 3,
        Pow(..) => 4,
        Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(c) => write!(f, "{c}"),
            Var(i) => write!(f, "x{}", i + 1),
            Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 4)
            }
            Add(a, c) => {
                wrap(f, a, 1)?;
                write!(f, "+")?;
                wrap(f, c, 2)
            }
            Sub(a, c) => {
                wrap(f, a, 1)?;
                write!(f, "-")?;
                wrap(f, c, 2)
            }
            Mul(a, c) => {
                wrap(f, a, 2)?;
                write!(f, "*")?;
                wrap(f, c, 3)
            }
            Div(a, c) => {
                wrap(f, a, 2)?;
                write!(f, "/")?;
                wrap(f, c, 3)
            }
            Pow(a, c) => {
                wrap(f, a, 5)?;
                write!(f, "^")?;
                wrap(f, c, 5)
            }
            Abs(a) => write!(f, "abs({a})"),
            Min(a, c) => write!(f, "min({a},{c})"),
            Max(a, c) => write!(f, "max({a},{c})"),
            Sign(a) => write!(f, "sign({a})"),
            IfLe(p, q, t, e) => write!(f, "if({p}<={q},{t},{e})"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(1, self.pos + 1, msg)
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Add(b(lhs), b(self.term()?));
            } else if self.eat(b'-') {
                lhs = Sub(b(lhs), b(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Mul(b(lhs), b(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Div(b(lhs), b(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Neg(b(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            let exp = match fold(&exp) {
                Some(c) => Const(c),
                None => exp,
            };
            return Ok(Pow(b(base), b(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let c = self.peek().ok_or_else(|| self.err("unexpected end of expression"))?;
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            if let Some(idx) = word.strip_prefix('x') {
                if !idx.is_empty() && idx.bytes().all(|d| d.is_ascii_digit()) {
                    let k: usize = idx.parse().map_err(|_| self.err("bad coordinate index"))?;
                    if k == 0 {
                        self.pos = start;
                        return Err(self.err("coordinates are numbered from x1"));
                    }
                    return Ok(Var(k - 1));
                }
            }
            return match word {
                "abs" => {
                    let args = self.args(1)?;
                    Ok(Abs(b(args.into_iter().next().expect("one arg"))))
                }
                "min" | "max" => {
                    let args = self.args(0)?;
                    if args.len() < 2 {
                        return Err(self.err(format!("{word} needs at least two arguments")));
                    }
                    let mut it = args.into_iter();
                    let first = it.next().expect("nonempty");
                    Ok(it.fold(first, |acc, e| {
                        if word == "min" {
                            Min(b(acc), b(e))
                        } else {
                            Max(b(acc), b(e))
                        }
                    }))
                }
                _ => {
                    self.pos = start;
                    Err(self.err(format!("unknown identifier '{word}'")))
                }
            };
        }
        Err(self.err(format!("unexpected character '{}'", c as char)))
    }

    /// Parenthesized comma-separated arguments; `exact` of 0 means any count.
    fn args(&mut self, exact: usize) -> Result<Vec<Expr>> {
        self.expect(b'(')?;
        let mut out = vec![self.expr()?];
        while self.eat(b',') {
            out.push(self.expr()?);
        }
        self.expect(b')')?;
        if exact > 0 && out.len() != exact {
            return Err(self.err(format!("expected {exact} argument(s), got {}", out.len())));
        }
        Ok(out)
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Const).map_err(|_| {
            self.pos = start;
            self.err(format!("invalid number '{text}'"))
        })
    }
}

/// Constant-folds an expression without variables.
fn fold(e: &Expr) -> Option<f64> {
    if e.arity() == 0 {
        Some(e.eval(&[]))
    } else {
        None
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser {
            src: s.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        if p.peek().is_some() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }
}

/// Parses `text` and builds an `n`-dimensional field with symbolic
/// gradient and Hessian. When differentiation is impossible (non-constant
/// exponent) the field falls back to finite differences.
pub fn field_from_expr(text: &str, n: usize) -> Result<ScalarField> {
    let e: Expr = text.parse()?;
    if e.arity() > n {
        return Err(Error::InvalidParameter(format!(
            "expression '{text}' uses x{} but the dimension is {n}",
            e.arity()
        )));
    }
    let e = Arc::new(e);
    let value = Arc::clone(&e);
    let mut field = ScalarField::new(n, text.trim(), move |x| value.eval(x));
    let grads: Result<Vec<Expr>> = (0..n).map(|i| e.diff(i)).collect();
    if let Ok(grads) = grads {
        let hess: Result<Vec<Expr>> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| grads[i].diff(j))
            .collect();
        let g = Arc::new(grads);
        field = field.with_gradient(move |x| g.iter().map(|d| d.eval(x)).collect());
        if let Ok(hess) = hess {
            field = field.with_hessian(move |x| {
                SymMatrix::from_upper(n, hess.iter().map(|d| d.eval(x)).collect())
                    .unwrap_or_else(|_| SymMatrix::from_fn(n, |_, _| f64::NAN))
            });
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: &[f64]) -> f64 {
        s.parse::<Expr>().unwrap().eval(x)
    }

    #[test]
    fn precedence_and_functions() {
        assert_eq!(ev("1+2*3", &[]), 7.0);
        assert_eq!(ev("-2^2", &[]), -4.0);
        assert_eq!(ev("2^3^2", &[]), 512.0);
        assert_eq!(ev("(1+2)*3", &[]), 9.0);
        assert_eq!(ev("min(3, x1, 2)", &[5.0]), 2.0);
        assert_eq!(ev("max(x1,x2)", &[1.0, -1.0]), 1.0);
        assert_eq!(ev("abs(x1)^(5/2)", &[-4.0]), 32.0);
        assert_eq!(ev("1.5e1/3", &[]), 5.0);
        assert_eq!(ev("x1 - x2 - x3", &[1.0, 2.0, 3.0]), -4.0);
        assert_eq!(ev("8/2/2", &[]), 2.0);
    }

    #[test]
    fn parse_errors_carry_columns() {
        for (src, col) in [("1 + * 2", 5), ("x0", 1), ("foo(1)", 1), ("(1+2", 5), ("1 2", 3)] {
            match src.parse::<Expr>() {
                Err(Error::Parse { line, column, .. }) => {
                    assert_eq!(line, 1);
                    assert_eq!(column, col, "{src}");
                }
                other => panic!("{src}: expected parse error, got {other:?}"),
            }
        }
        assert!(field_from_expr("x3", 2).is_err());
    }

    #[test]
    fn display_round_trips() {
        for src in ["-abs(x1)^2.5+x1^2*x2^2+x2^10", "(x1-x2)/(1+x1^2)", "-(x1+x2)", "min(x1,-x2)"] {
            let e: Expr = src.parse().unwrap();
            let again: Expr = e.to_string().parse().unwrap();
            for x in [[0.3, -1.2], [2.0, 0.5]] {
                assert_eq!(e.eval(&x), again.eval(&x), "{src} -> {e}");
            }
        }
    }

    #[test]
    fn symbolic_derivatives_match_differences() {
        for src in [
            "0.5*x1^2 - 0.5*x2^2",
            "(x1^2 + x2^2)^2/12",
            "x1^3*x2 + x1/(2 + x2^2)",
            "abs(x1 - 3)^2.5 + x1*x2",
            "max(x1, x2)^2 + min(x1, 2*x2)",
        ] {
            let u = field_from_expr(src, 2).unwrap();
            assert!(u.has_hessian(), "{src}");
            u.check_derivatives(11).unwrap();
        }
    }

    #[test]
    fn counterexample_field_hessian_vanishes_at_origin() {
        let u = field_from_expr("-abs(x1)^(5/2) + x1^2*x2^2 + x2^10", 2).unwrap();
        let h = u.hessian(&[0.0, 0.0]);
        assert_eq!(h.max_abs(), 0.0);
    }
}
