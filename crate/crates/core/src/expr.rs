//! Arithmetic expressions over `x1..xN`: parsing and a register-tape
//! evaluator for plain values and for jets.
//!
//! Grammar (usual precedence, `^` binds tighter than unary minus):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' '-'? integer)?
//! atom  := number | xK | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | exp
//! ```

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::jet::JetSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Powi(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Powi(a, n) => a.eval(x).powi(*n),
            Expr::Call(f, a) => {
                let v = a.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                }
            }
        }
    }

    /// True when the expression does not depend on any variable.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Powi(a, _) | Expr::Call(_, a) => a.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.is_constant() && b.is_constant(),
        }
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
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Powi(a, n) => write!(f, "({a}^{n})"),
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    column0: usize,
    nvars: usize,
}

impl Parser<'_> {
    fn column(&self) -> usize {
        self.column0 + self.pos
    }

    fn syntax(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
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

    fn describe(&mut self) -> String {
        match self.peek() {
            Some(c) => format!("unexpected '{}'", c as char),
            None => "unexpected end of expression".to_string(),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == b'+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == b'*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        let neg = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(if self.peek().is_some() {
                self.syntax("exponent must be an integer")
            } else {
                self.syntax("missing exponent")
            });
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let mut n: i32 = text.parse().map_err(|_| {
            self.pos = start;
            self.syntax("exponent out of range")
        })?;
        if neg {
            n = -n;
        }
        Ok(Expr::Powi(Box::new(base), n))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    let what = self.describe();
                    return Err(self.syntax(format!("expected ')', {what}")));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            _ => {
                let msg = self.describe();
                Err(self.syntax(msg))
            }
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
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
        let text = core::str::from_utf8(&bytes[start..i]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos = i;
                Ok(Expr::Const(v))
            }
            Err(_) => Err(self.syntax(format!("malformed number '{text}'"))),
        }
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let func = match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        };
        if let Some(f) = func {
            if self.peek() != Some(b'(') {
                return Err(self.syntax(format!("expected '(' after {name}")));
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                let what = self.describe();
                return Err(self.syntax(format!("expected ')', {what}")));
            }
            self.pos += 1;
            return Ok(Expr::Call(f, Box::new(arg)));
        }
        let index = name
            .strip_prefix('x')
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&k| k >= 1 && k <= self.nvars);
        match index {
            Some(k) => Ok(Expr::Var(k - 1)),
            None => Err(Error::UnknownVariable {
                name: name.to_string(),
                line: self.line,
                column: self.column0 + start,
            }),
        }
    }
}

/// Parses one expression. `line` and `column` locate the first character of
/// `text` in its source (both one-based) for error reporting.
pub fn parse_expr_at(text: &str, nvars: usize, line: usize, column: usize) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        line,
        column0: column,
        nvars,
    };
    let e = p.expr()?;
    if p.peek().is_some() {
        let msg = p.describe();
        return Err(p.syntax(msg));
    }
    Ok(e)
}

pub fn parse_expr(text: &str, nvars: usize) -> Result<Expr> {
    parse_expr_at(text, nvars, 1, 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Powi(usize, i32),
    Call(Func, usize),
}

/// Straight-line program evaluating several expressions into registers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Self {
        let mut tape = Self {
            ops: Vec::new(),
            outputs: Vec::new(),
        };
        for e in exprs {
            let r = tape.emit(e);
            tape.outputs.push(r);
        }
        tape
    }

    fn emit(&mut self, e: &Expr) -> usize {
        let op = match e {
            Expr::Const(c) => Op::Const(*c),
            Expr::Var(i) => Op::Var(*i),
            Expr::Neg(a) => Op::Neg(self.emit(a)),
            Expr::Add(a, b) => Op::Add(self.emit(a), self.emit(b)),
            Expr::Sub(a, b) => Op::Sub(self.emit(a), self.emit(b)),
            Expr::Mul(a, b) => Op::Mul(self.emit(a), self.emit(b)),
            Expr::Div(a, b) => Op::Div(self.emit(a), self.emit(b)),
            Expr::Powi(a, n) => Op::Powi(self.emit(a), *n),
            Expr::Call(f, a) => Op::Call(*f, self.emit(a)),
        };
        self.ops.push(op);
        self.ops.len() - 1
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let mut regs = vec![0.0; self.ops.len()];
        for (k, op) in self.ops.iter().enumerate() {
            regs[k] = match *op {
                Op::Const(c) => c,
                Op::Var(i) => x[i],
                Op::Neg(a) => -regs[a],
                Op::Add(a, b) => regs[a] + regs[b],
                Op::Sub(a, b) => regs[a] - regs[b],
                Op::Mul(a, b) => regs[a] * regs[b],
                Op::Div(a, b) => regs[a] / regs[b],
                Op::Powi(a, n) => regs[a].powi(n),
                Op::Call(Func::Sin, a) => regs[a].sin(),
                Op::Call(Func::Cos, a) => regs[a].cos(),
                Op::Call(Func::Exp, a) => regs[a].exp(),
            };
        }
        for (o, &r) in out.iter_mut().zip(&self.outputs) {
            *o = regs[r];
        }
    }

    /// Jets of every output at `x`; output `k` occupies
    /// `out[k * space.len()..(k + 1) * space.len()]`.
    pub fn eval_jets(&self, space: &JetSpace, x: &[f64], out: &mut [f64]) {
        let m = space.len();
        let mut regs = vec![0.0; self.ops.len() * m];
        let mut tmp = vec![0.0; m];
        for (k, op) in self.ops.iter().enumerate() {
            let (done, rest) = regs.split_at_mut(k * m);
            let dst = &mut rest[..m];
            let reg = |i: usize| &done[i * m..(i + 1) * m];
            match *op {
                Op::Const(c) => dst[0] = c,
                Op::Var(i) => {
                    dst[0] = x[i];
                    if space.order() >= 1 {
                        dst[1 + i] = 1.0;
                    }
                }
                Op::Neg(a) => dst.iter_mut().zip(reg(a)).for_each(|(d, s)| *d = -s),
                Op::Add(a, b) => {
                    for ((d, s), t) in dst.iter_mut().zip(reg(a)).zip(reg(b)) {
                        *d = s + t;
                    }
                }
                Op::Sub(a, b) => {
                    for ((d, s), t) in dst.iter_mut().zip(reg(a)).zip(reg(b)) {
                        *d = s - t;
                    }
                }
                Op::Mul(a, b) => {
                    if reg(a)[1..].iter().all(|&v| v == 0.0) {
                        let c = reg(a)[0];
                        dst.iter_mut().zip(reg(b)).for_each(|(d, s)| *d = c * s);
                    } else if reg(b)[1..].iter().all(|&v| v == 0.0) {
                        let c = reg(b)[0];
                        dst.iter_mut().zip(reg(a)).for_each(|(d, s)| *d = c * s);
                    } else {
                        space.mul_into(dst, reg(a), reg(b));
                    }
                }
                Op::Div(a, b) => {
                    if reg(b)[1..].iter().all(|&v| v == 0.0) {
                        let c = reg(b)[0];
                        dst.iter_mut().zip(reg(a)).for_each(|(d, s)| *d = s / c);
                    } else {
                        space.recip_into(&mut tmp, reg(b));
                        space.mul_into(dst, reg(a), &tmp);
                    }
                }
                Op::Powi(a, n) => space.powi_into(dst, reg(a), n),
                Op::Call(Func::Sin, a) => space.sin_into(dst, reg(a)),
                Op::Call(Func::Cos, a) => space.cos_into(dst, reg(a)),
                Op::Call(Func::Exp, a) => space.exp_into(dst, reg(a)),
            }
        }
        for (k, &r) in self.outputs.iter().enumerate() {
            out[k * m..(k + 1) * m].copy_from_slice(&regs[r * m..(r + 1) * m]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let e = parse_expr("1 + 2*x1^2 - -x2/4", 2).unwrap();
        assert_eq!(e.eval(&[3.0, 8.0]), 1.0 + 18.0 + 2.0);
        assert_eq!(parse_expr("-x1^2", 1).unwrap().eval(&[3.0]), -9.0);
        assert_eq!(parse_expr("2^-1", 1).unwrap().eval(&[0.0]), 0.5);
        assert_eq!(parse_expr("(x1+1)*(x1-1)", 1).unwrap().eval(&[3.0]), 8.0);
        assert_eq!(parse_expr("1.5e1", 1).unwrap().eval(&[0.0]), 15.0);
        assert!((parse_expr("sin(x1)^2 + cos(x1)^2", 1).unwrap().eval(&[0.7]) - 1.0).abs() < 1e-15);
        assert!(parse_expr("exp(0)", 1).unwrap().is_constant());
    }

    #[test]
    fn syntax_errors_point_at_the_offender() {
        match parse_expr("x1+*x2", 2) {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 4)),
            other => panic!("{other:?}"),
        }
        match parse_expr_at("x1 + y", 2, 3, 10) {
            Err(Error::UnknownVariable { name, line, column }) => {
                assert_eq!((name.as_str(), line, column), ("y", 3, 15))
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr("x3", 2), Err(Error::UnknownVariable { .. })));
        assert!(matches!(parse_expr("(x1", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("x1^1.5", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("x1 x1", 1), Err(Error::Syntax { .. })));
    }

    #[test]
    fn display_round_trips() {
        let e = parse_expr("-x2/2 + sin(x1)^3", 2).unwrap();
        let again = parse_expr(&e.to_string(), 2).unwrap();
        assert_eq!(e.eval(&[0.3, 0.9]), again.eval(&[0.3, 0.9]));
    }

    #[test]
    fn tape_matches_tree() {
        let exprs = [
            parse_expr("x1*x2 - 3", 2).unwrap(),
            parse_expr("exp(x1)/(1 + x2^2)", 2).unwrap(),
        ];
        let tape = Tape::compile(&exprs);
        let x = [0.4, -1.3];
        let mut out = [0.0; 2];
        tape.eval(&x, &mut out);
        assert_eq!(out[0], exprs[0].eval(&x));
        assert_eq!(out[1], exprs[1].eval(&x));

        let space = JetSpace::new(2, 2);
        let mut jets = vec![0.0; 2 * space.len()];
        tape.eval_jets(&space, &x, &mut jets);
        assert!((jets[0] - out[0]).abs() < 1e-15);
        assert!((jets[space.len()] - out[1]).abs() < 1e-14);
        // ∂/∂x2 of exp(x1)/(1+x2²) = -2 x2 exp(x1)/(1+x2²)²
        let d = space.derivative(&jets[space.len()..], &[0, 1]);
        let expect = -2.0 * x[1] * x[0].exp() / (1.0 + x[1] * x[1]).powi(2);
        assert!((d - expect).abs() < 1e-13);
    }
}
