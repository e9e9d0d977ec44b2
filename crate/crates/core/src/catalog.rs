//! Analytic-expression catalog for configuration files.
//!
//! An expression is a signed sum of products. Each factor is a number,
//! `pi`, one of the variables `x`, `y`, `t`, or `cos(·)`, `sin(·)`, `exp(·)`
//! applied to an affine combination of the variables:
//!
//! ```text
//! 0.1*cos(pi*x)
//! 2*exp(-t)*cos(pi*x)*cos(pi*y) + 0.5 - x
//! ```

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stepper::SpaceTimeFn;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Cos,
    Sin,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    X,
    Y,
    T,
}

/// `c0 + cx x + cy y + ct t`
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine([f64; 4]);

impl Affine {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        self.0[0] + self.0[1] * x + self.0[2] * y + self.0[3] * t
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Factor {
    Var(Var),
    Call(Func, Affine),
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    coeff: f64,
    factors: Vec<Factor>,
}

/// A parsed catalog expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    terms: Vec<Term>,
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text)?;
        let mut p = Parser { tokens, pos: 0 };
        let terms = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(Error::validation("expression", format!("unexpected input in '{text}'")));
        }
        Ok(Self {
            source: text.trim().to_string(),
            terms,
        })
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| {
                term.factors.iter().fold(term.coeff, |acc, f| {
                    acc * match f {
                        Factor::Var(Var::X) => x,
                        Factor::Var(Var::Y) => y,
                        Factor::Var(Var::T) => t,
                        Factor::Call(Func::Cos, a) => a.eval(x, y, t).cos(),
                        Factor::Call(Func::Sin, a) => a.eval(x, y, t).sin(),
                        Factor::Call(Func::Exp, a) => a.eval(x, y, t).exp(),
                    }
                })
            })
            .sum()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn depends_on_time(&self) -> bool {
        self.terms.iter().flat_map(|t| &t.factors).any(|f| match f {
            Factor::Var(v) => *v == Var::T,
            Factor::Call(_, a) => a.0[3] != 0.0,
        })
    }

    pub fn depends_on_y(&self) -> bool {
        self.terms.iter().flat_map(|t| &t.factors).any(|f| match f {
            Factor::Var(v) => *v == Var::Y,
            Factor::Call(_, a) => a.0[2] != 0.0,
        })
    }

    /// The constant value, if the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if self.terms.iter().all(|t| t.factors.is_empty()) {
            Some(self.terms.iter().map(|t| t.coeff).sum())
        } else {
            None
        }
    }

    pub fn into_fn(self) -> SpaceTimeFn {
        if let Some(c) = self.as_constant() {
            return SpaceTimeFn::constant(c);
        }
        let label = self.source.clone();
        let steady = !self.depends_on_time();
        let e = Arc::new(self);
        if steady {
            SpaceTimeFn::steady(label, move |x, y| e.eval(x, y, 0.0))
        } else {
            SpaceTimeFn::new(label, move |x, y, t| e.eval(x, y, t))
        }
    }
}

/// Parse and compile in one go.
pub fn compile(text: &str) -> Result<SpaceTimeFn> {
    Ok(Expr::parse(text)?.into_fn())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<Tok>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '(' => {
                out.push(Tok::Open);
                i += 1;
            }
            ')' => {
                out.push(Tok::Close);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s = &text[start..i];
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::validation("expression", format!("bad number '{s}'")))?;
                out.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Tok::Ident(text[start..i].to_string()));
            }
            _ => {
                return Err(Error::validation("expression", format!("unexpected character '{c}' in '{text}'")));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::validation("expression", "empty expression"));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn sum(&mut self) -> Result<Vec<Term>> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        loop {
            while let Some(Tok::Minus | Tok::Plus) = self.peek() {
                if self.next() == Some(Tok::Minus) {
                    sign = -sign;
                }
            }
            let mut term = self.product()?;
            term.coeff *= sign;
            terms.push(term);
            match self.peek() {
                Some(Tok::Plus) | Some(Tok::Minus) => sign = 1.0,
                _ => return Ok(terms),
            }
        }
    }

    fn product(&mut self) -> Result<Term> {
        let mut term = Term {
            coeff: 1.0,
            factors: Vec::new(),
        };
        loop {
            match self.next() {
                Some(Tok::Num(v)) => term.coeff *= v,
                Some(Tok::Ident(name)) => match name.as_str() {
                    "pi" => term.coeff *= std::f64::consts::PI,
                    "x" => term.factors.push(Factor::Var(Var::X)),
                    "y" => term.factors.push(Factor::Var(Var::Y)),
                    "t" => term.factors.push(Factor::Var(Var::T)),
                    "cos" | "sin" | "exp" => {
                        let f = match name.as_str() {
                            "cos" => Func::Cos,
                            "sin" => Func::Sin,
                            _ => Func::Exp,
                        };
                        if self.next() != Some(Tok::Open) {
                            return Err(Error::validation("expression", format!("expected '(' after {name}")));
                        }
                        let inner = self.sum()?;
                        if self.next() != Some(Tok::Close) {
                            return Err(Error::validation("expression", format!("unclosed '(' after {name}")));
                        }
                        term.factors.push(Factor::Call(f, affine(&inner)?));
                    }
                    other => {
                        return Err(Error::validation("expression", format!("unknown name '{other}'")));
                    }
                },
                _ => return Err(Error::validation("expression", "expected a factor")),
            }
            if self.peek() == Some(&Tok::Star) {
                self.pos += 1;
            } else {
                return Ok(term);
            }
        }
    }
}

fn affine(terms: &[Term]) -> Result<Affine> {
    let mut a = [0.0; 4];
    for term in terms {
        match term.factors.as_slice() {
            [] => a[0] += term.coeff,
            [Factor::Var(v)] => {
                let k = match v {
                    Var::X => 1,
                    Var::Y => 2,
                    Var::T => 3,
                };
                a[k] += term.coeff;
            }
            _ => {
                return Err(Error::validation(
                    "expression",
                    "function arguments must be affine in x, y, t",
                ))
            }
        }
    }
    Ok(Affine(a))
}
