//! Dynamics expressions over the closed grammar
//! `{ +, -, *, const, x_i, theta_j, sin, cos }`.
//!
//! The grammar is closed on purpose: every operation has an exact symbolic
//! partial derivative and a finite interval image, which is what the verifier
//! needs to produce certified Lipschitz bounds. State variables are written
//! `x1..xn`, disturbance variables `th1..thm` (the spelling `theta1` is also
//! accepted).

use crate::error::{Error, Result};
use crate::interval::Interval;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// State variable, zero-based index (`x1` parses to `State(0)`).
    State(usize),
    /// Disturbance variable, zero-based index.
    Noise(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        Parser::new(text).parse()
    }

    pub fn eval(&self, x: &[f64], theta: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::State(i) => x[*i],
            Expr::Noise(j) => theta[*j],
            Expr::Neg(a) => -a.eval(x, theta),
            Expr::Add(a, b) => a.eval(x, theta) + b.eval(x, theta),
            Expr::Sub(a, b) => a.eval(x, theta) - b.eval(x, theta),
            Expr::Mul(a, b) => a.eval(x, theta) * b.eval(x, theta),
            Expr::Sin(a) => a.eval(x, theta).sin(),
            Expr::Cos(a) => a.eval(x, theta).cos(),
        }
    }

    /// Interval enclosure of the image over a state box times a noise box.
    pub fn eval_interval(&self, x: &[Interval], theta: &[Interval]) -> Interval {
        match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::State(i) => x[*i],
            Expr::Noise(j) => theta[*j],
            Expr::Neg(a) => -a.eval_interval(x, theta),
            Expr::Add(a, b) => a.eval_interval(x, theta) + b.eval_interval(x, theta),
            Expr::Sub(a, b) => a.eval_interval(x, theta) - b.eval_interval(x, theta),
            Expr::Mul(a, b) => a.eval_interval(x, theta) * b.eval_interval(x, theta),
            Expr::Sin(a) => a.eval_interval(x, theta).sin(),
            Expr::Cos(a) => a.eval_interval(x, theta).cos(),
        }
    }

    /// Exact symbolic partial derivative with respect to state variable `i`.
    pub fn diff_state(&self, i: usize) -> Expr {
        match self {
            Expr::Const(_) | Expr::Noise(_) => Expr::Const(0.0),
            Expr::State(j) => Expr::Const(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff_state(i)),
            Expr::Add(a, b) => add(a.diff_state(i), b.diff_state(i)),
            Expr::Sub(a, b) => sub(a.diff_state(i), b.diff_state(i)),
            Expr::Mul(a, b) => add(
                mul(a.diff_state(i), (**b).clone()),
                mul((**a).clone(), b.diff_state(i)),
            ),
            Expr::Sin(a) => mul(Expr::Cos(a.clone()), a.diff_state(i)),
            Expr::Cos(a) => neg(mul(Expr::Sin(a.clone()), a.diff_state(i))),
        }
    }

    /// Smallest state dimension under which the expression is well formed.
    pub fn min_state_dim(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Noise(_) => 0,
            Expr::State(i) => i + 1,
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) => a.min_state_dim(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.min_state_dim().max(b.min_state_dim())
            }
        }
    }

    /// Smallest noise dimension under which the expression is well formed.
    pub fn min_noise_dim(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::State(_) => 0,
            Expr::Noise(j) => j + 1,
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) => a.min_noise_dim(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.min_noise_dim().max(b.min_noise_dim())
            }
        }
    }
}

// Constant-folding constructors keep derivative trees from blowing up.

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(c), b) if c == 0.0 => b,
        (a, Expr::Const(c)) if c == 0.0 => a,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (a, Expr::Const(c)) if c == 0.0 => a,
        (Expr::Const(c), b) if c == 0.0 => neg(b),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(c), _) | (_, Expr::Const(c)) if c == 0.0 => Expr::Const(0.0),
        (Expr::Const(c), b) if c == 1.0 => b,
        (a, Expr::Const(c)) if c == 1.0 => a,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

/// Recursive-descent parser. Precedence: `+`/`-` < `*` < unary minus < atoms.
struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { text, bytes: text.as_bytes(), pos: 0 }
    }

    fn parse(mut self) -> Result<Expr> {
        let e = self.expr()?;
        self.skip_ws();
        if self.pos != self.bytes.len() {
            return Err(self.err("trailing input"));
        }
        Ok(e)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { position: self.pos, message: message.into() }
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

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            acc = Expr::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.err(format!("unexpected character '{}'", c as char))),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E')
                && self.pos > start
                && self.bytes[self.pos - 1].is_ascii_digit()
            {
                // exponent, optionally signed
                let mut next = self.pos + 1;
                if matches!(self.bytes.get(next), Some(b'+') | Some(b'-')) {
                    next += 1;
                }
                if matches!(self.bytes.get(next), Some(d) if d.is_ascii_digit()) {
                    self.pos = next;
                } else {
                    break;
                }
            } else {
                break;
            }
        }
        let lit = &self.text[start..self.pos];
        lit.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| Error::Parse { position: start, message: format!("bad number '{lit}'") })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let name = &self.text[start..self.pos];
        match name {
            "sin" | "cos" => {
                if self.peek() != Some(b'(') {
                    return Err(self.err(format!("expected '(' after '{name}'")));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(if name == "sin" {
                    Expr::Sin(Box::new(arg))
                } else {
                    Expr::Cos(Box::new(arg))
                })
            }
            "x" | "th" | "theta" => {
                let idx = self.var_index(start, name)?;
                Ok(if name == "x" { Expr::State(idx) } else { Expr::Noise(idx) })
            }
            other => Err(Error::Parse {
                position: start,
                message: format!("unknown identifier '{other}'"),
            }),
        }
    }

    fn var_index(&mut self, start: usize, name: &str) -> Result<usize> {
        let digits_start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if digits_start == self.pos {
            return Err(Error::Parse {
                position: start,
                message: format!("variable '{name}' needs a 1-based index, e.g. {name}1"),
            });
        }
        let n: usize = self.text[digits_start..self.pos]
            .parse()
            .map_err(|_| Error::Parse { position: digits_start, message: "index overflow".into() })?;
        if n == 0 {
            return Err(Error::Parse {
                position: digits_start,
                message: "variable indices are 1-based".into(),
            });
        }
        Ok(n - 1)
    }
}
