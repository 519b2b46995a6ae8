//! Closed-form coefficient expressions.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := number | symbol | 'pi' | func '(' expr ')' | '(' expr ')' | '-' factor
//! func   := 'cos' | 'sin' | 'exp'
//! ```
//!
//! Cell data may reference `y1`, `y2`; macro sources `x1`, `x2`. Both map to the
//! first/second coordinate of the evaluation point.

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Y1,
    Y2,
    X1,
    X2,
}

impl Symbol {
    pub const CELL: &'static [Symbol] = &[Symbol::Y1, Symbol::Y2];
    pub const MACRO: &'static [Symbol] = &[Symbol::X1, Symbol::X2];

    fn name(self) -> &'static str {
        match self {
            Symbol::Y1 => "y1",
            Symbol::Y2 => "y2",
            Symbol::X1 => "x1",
            Symbol::X2 => "x2",
        }
    }

    /// Coordinate index the symbol reads from.
    pub fn axis(self) -> usize {
        match self {
            Symbol::Y1 | Symbol::X1 => 0,
            Symbol::Y2 | Symbol::X2 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Cos,
    Sin,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Exp => "exp",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Cos => v.cos(),
            Func::Sin => v.sin(),
            Func::Exp => v.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    Var(Symbol),
    Neg(Box<Node>),
    Call(Func, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
}

impl Node {
    /// Value of a symbol-free subtree, if it is one.
    fn constant_value(&self) -> Option<f64> {
        match self {
            Node::Num(v) => Some(*v),
            Node::Pi => Some(std::f64::consts::PI),
            Node::Var(_) => None,
            Node::Neg(a) => a.constant_value().map(|v| -v),
            Node::Call(f, a) => a.constant_value().map(|v| f.apply(v)),
            Node::Binary(op, a, b) => Some(op.apply(a.constant_value()?, b.constant_value()?)),
        }
    }

    fn eval(&self, p: [f64; 2]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Pi => std::f64::consts::PI,
            Node::Var(s) => p[s.axis()],
            Node::Neg(a) => -a.eval(p),
            Node::Call(f, a) => f.apply(a.eval(p)),
            Node::Binary(op, a, b) => {
                let l = a.eval(p);
                let r = b.eval(p);
                op.apply(l, r)
            }
        }
    }

    fn collect_symbols(&self, out: &mut Vec<Symbol>) {
        match self {
            Node::Var(s) => {
                if !out.contains(s) {
                    out.push(*s);
                }
            }
            Node::Neg(a) | Node::Call(_, a) => a.collect_symbols(out),
            Node::Binary(_, a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
            Node::Num(_) | Node::Pi => {}
        }
    }
}

impl fmt::Display for Node {
    /// Fully parenthesised form; re-parses to the identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Pi => write!(f, "pi"),
            Node::Var(s) => write!(f, "{}", s.name()),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

/// A parsed, immutable expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
}

impl Expression {
    pub fn constant(v: f64) -> Self {
        Expression { root: Node::Num(v) }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// `factor * self`, used for scaled macro sources.
    pub fn scaled(&self, factor: f64) -> Self {
        Expression {
            root: Node::Binary(
                BinOp::Mul,
                Box::new(Node::Num(factor)),
                Box::new(self.root.clone()),
            ),
        }
    }

    /// Constant value if the expression has no free symbols.
    pub fn as_constant(&self) -> Option<f64> {
        self.root.constant_value()
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        self.root.collect_symbols(&mut out);
        out
    }

    /// Evaluates at `point`, left-to-right depth-first.
    pub fn eval(&self, point: [f64; 2]) -> Result<f64> {
        let v = self.root.eval(point);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                expr: self.to_string(),
                x: point[0],
                y: point[1],
            })
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl FromStr for Expression {
    type Err = Error;

    /// Parses with every symbol allowed.
    fn from_str(s: &str) -> Result<Self> {
        parse_expression(s, &[Symbol::Y1, Symbol::Y2, Symbol::X1, Symbol::X2])
    }
}

/// Parses `text`, rejecting symbols outside `allowed`.
pub fn parse_expression(text: &str, allowed: &[Symbol]) -> Result<Expression> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        allowed,
    };
    p.skip_ws();
    if p.pos == p.src.len() {
        return Err(Error::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let root = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(Expression { root })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    allowed: &'a [Symbol],
}

impl Parser<'_> {
    fn syntax(&self, message: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.to_string(),
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

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            self.skip_ws();
            let at = self.pos;
            let rhs = self.factor()?;
            if op == BinOp::Div && rhs.constant_value() == Some(0.0) {
                return Err(Error::ZeroDenominator { offset: at });
            }
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.word(),
            Some(_) => Err(self.syntax("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && s[i].is_ascii_digit() {
            i += 1;
        }
        if i < s.len() && s[i] == b'.' {
            i += 1;
            while i < s.len() && s[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).map_err(|_| self.syntax("invalid utf-8"))?;
        let value: f64 = text.parse().map_err(|_| Error::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        if !value.is_finite() {
            return Err(Error::Syntax {
                offset: start,
                message: format!("number `{text}` overflows"),
            });
        }
        self.pos = i;
        Ok(Node::Num(value))
    }

    fn word(&mut self) -> Result<Node> {
        let start = self.pos;
        let mut i = self.pos;
        while i < self.src.len() && self.src[i].is_ascii_alphanumeric() {
            i += 1;
        }
        let word = std::str::from_utf8(&self.src[start..i]).unwrap_or_default();
        self.pos = i;
        let func = match word {
            "pi" => return Ok(Node::Pi),
            "cos" => Some(Func::Cos),
            "sin" => Some(Func::Sin),
            "exp" => Some(Func::Exp),
            _ => None,
        };
        if let Some(func) = func {
            self.expect(b'(')?;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Node::Call(func, Box::new(arg)));
        }
        let sym = match word {
            "y1" => Symbol::Y1,
            "y2" => Symbol::Y2,
            "x1" => Symbol::X1,
            "x2" => Symbol::X2,
            _ => {
                return Err(Error::UnknownSymbol {
                    symbol: word.to_string(),
                    offset: start,
                })
            }
        };
        if !self.allowed.contains(&sym) {
            return Err(Error::UnknownSymbol {
                symbol: word.to_string(),
                offset: start,
            });
        }
        Ok(Node::Var(sym))
    }
}
