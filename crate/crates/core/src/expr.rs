//! Small arithmetic expression language used by configuration files.
//!
//! Full grammar: numbers, named variables, `+ - * / ^`, unary minus,
//! parentheses and the functions `max`, `min` (any arity ≥ 1), `pow`,
//! `sqrt`, `abs`. Profile mode restricts to `+ * max min pow` (and `^`),
//! nonnegative constants and the variables `t1..tι`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("`{0}` is not allowed in a profile expression")]
    Forbidden(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Max(Vec<Node>),
    Min(Vec<Node>),
    Sqrt(Box<Node>),
    Abs(Box<Node>),
}

impl Node {
    fn eval(&self, vals: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => vals[*i],
            Node::Neg(a) => -a.eval(vals),
            Node::Add(a, b) => a.eval(vals) + b.eval(vals),
            Node::Sub(a, b) => a.eval(vals) - b.eval(vals),
            Node::Mul(a, b) => a.eval(vals) * b.eval(vals),
            Node::Div(a, b) => a.eval(vals) / b.eval(vals),
            Node::Pow(a, b) => pow(a.eval(vals), b.eval(vals)),
            Node::Max(xs) => xs.iter().map(|x| x.eval(vals)).fold(f64::NEG_INFINITY, f64::max),
            Node::Min(xs) => xs.iter().map(|x| x.eval(vals)).fold(f64::INFINITY, f64::min),
            Node::Sqrt(a) => a.eval(vals).sqrt(),
            Node::Abs(a) => a.eval(vals).abs(),
        }
    }
}

fn pow(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= 64.0 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

/// A parsed expression with variables resolved to positional slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
    arity: usize,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Parses with the full grammar; `vars[i]` binds slot `i`.
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self, ExprError> {
        let root = Parser::new(src, vars, false).run()?;
        Ok(Self {
            root,
            source: src.to_string(),
            arity: vars.len(),
        })
    }

    /// Parses a multiradial profile over `t1..t{layers}`.
    pub fn parse_profile(src: &str, layers: usize) -> Result<Self, ExprError> {
        let names: Vec<String> = (1..=layers).map(|i| format!("t{i}")).collect();
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let root = Parser::new(src, &vars, true).run()?;
        Ok(Self {
            root,
            source: src.to_string(),
            arity: layers,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval(&self, vals: &[f64]) -> f64 {
        debug_assert_eq!(vals.len(), self.arity);
        self.root.eval(vals)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
    profile: bool,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, vars: &'a [&'a str], profile: bool) -> Self {
        Self {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            vars,
            profile,
        }
    }

    fn run(mut self) -> Result<Node, ExprError> {
        let node = self.sum()?;
        self.skip_ws();
        if self.pos < self.bytes.len() {
            return Err(self.error("unexpected trailing input"));
        }
        Ok(node)
    }

    fn error(&self, msg: &str) -> ExprError {
        ExprError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn forbid(&self, what: &str) -> Result<(), ExprError> {
        if self.profile {
            Err(ExprError::Forbidden(what.to_string()))
        } else {
            Ok(())
        }
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Some(b'-') => {
                    self.forbid("-")?;
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.forbid("/")?;
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek() == Some(b'-') {
            self.forbid("-")?;
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // right associative; binds tighter than unary minus on the left
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let mut end = start;
        while end < self.bytes.len() && (self.bytes[end].is_ascii_digit() || self.bytes[end] == b'.') {
            end += 1;
        }
        if end < self.bytes.len() && (self.bytes[end] == b'e' || self.bytes[end] == b'E') {
            let mut k = end + 1;
            if k < self.bytes.len() && (self.bytes[k] == b'+' || self.bytes[k] == b'-') {
                k += 1;
            }
            if k < self.bytes.len() && self.bytes[k].is_ascii_digit() {
                while k < self.bytes.len() && self.bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let text = &self.src[start..end];
        let value: f64 = text.parse().map_err(|_| self.error(&format!("bad number `{text}`")))?;
        self.pos = end;
        Ok(Node::Const(value))
    }

    fn identifier(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut args = vec![self.sum()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                args.push(self.sum()?);
            }
            self.expect(b')')?;
            return self.call(name, args, start);
        }
        match self.vars.iter().position(|v| *v == name) {
            Some(i) => Ok(Node::Var(i)),
            None if name == "pi" && !self.profile => Ok(Node::Const(std::f64::consts::PI)),
            None => Err(ExprError::UnknownVariable(name.to_string())),
        }
    }

    fn call(&self, name: &str, mut args: Vec<Node>, at: usize) -> Result<Node, ExprError> {
        let arity_error = |n: usize| ExprError::Parse {
            pos: at,
            msg: format!("`{name}` takes {n} argument(s), got {}", args.len()),
        };
        match name {
            "max" => Ok(Node::Max(args)),
            "min" => Ok(Node::Min(args)),
            "pow" => {
                if args.len() != 2 {
                    return Err(arity_error(2));
                }
                let exp = args.pop().unwrap();
                let base = args.pop().unwrap();
                Ok(Node::Pow(Box::new(base), Box::new(exp)))
            }
            "sqrt" | "abs" => {
                self.forbid(name)?;
                if args.len() != 1 {
                    return Err(arity_error(1));
                }
                let a = Box::new(args.pop().unwrap());
                Ok(if name == "sqrt" { Node::Sqrt(a) } else { Node::Abs(a) })
            }
            _ => Err(ExprError::Parse {
                pos: at,
                msg: format!("unknown function `{name}`"),
            }),
        }
    }
}
