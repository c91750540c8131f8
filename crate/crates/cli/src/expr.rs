//! A small arithmetic grammar over path features for inline coefficients.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := '-' unary | atom
//! atom   := number | variable | ('min' | 'max') '(' expr ',' expr ')' | '(' expr ')'
//! ```
//!
//! Variables: `x` (endpoint), `integral` (running integral), `runmax`
//! (running maximum), `t` (current time), `u` (control), `y` and `z` (BSDE
//! value and gradient, driver only) and, for lifted problems, `w` (Brownian
//! endpoint).

use std::fmt;

use anyhow::{anyhow, bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Integral,
    RunMax,
    T,
    U,
    Y,
    Z,
    W,
}

impl Var {
    fn parse(name: &str) -> Option<Var> {
        Some(match name {
            "x" => Var::X,
            "integral" => Var::Integral,
            "runmax" => Var::RunMax,
            "t" => Var::T,
            "u" => Var::U,
            "y" => Var::Y,
            "z" => Var::Z,
            "w" => Var::W,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Integral => "integral",
            Var::RunMax => "runmax",
            Var::T => "t",
            Var::U => "u",
            Var::Y => "y",
            Var::Z => "z",
            Var::W => "w",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

/// Variable values at one evaluation point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env {
    pub x: f64,
    pub integral: f64,
    pub runmax: f64,
    pub t: f64,
    pub u: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Expr {
    /// Parses `src`, accepting only the variables in `allowed`.
    pub fn parse(src: &str, allowed: &[Var]) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, allowed };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            bail!("unexpected `{}` in `{src}`", p.tokens[p.pos]);
        }
        Ok(e)
    }

    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => match v {
                Var::X => env.x,
                Var::Integral => env.integral,
                Var::RunMax => env.runmax,
                Var::T => env.t,
                Var::U => env.u,
                Var::Y => env.y,
                Var::Z => env.z,
                Var::W => env.w,
            },
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Min(a, b) => a.eval(env).min(b.eval(env)),
            Expr::Max(a, b) => a.eval(env).max(b.eval(env)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Sym(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "{v}"),
            Token::Ident(s) => f.write_str(s),
            Token::Sym(c) => write!(f, "{c}"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| anyhow!("bad number `{text}`"))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*(),".contains(c) {
            out.push(Token::Sym(c));
            i += 1;
        } else {
            bail!("unexpected character `{c}` in `{src}`");
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    allowed: &'a [Var],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Token::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(t) => bail!("expected `{c}`, found `{t}`"),
                None => bail!("expected `{c}`, found end of expression"),
            }
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            if self.eat('+') {
                e = Expr::Add(Box::new(e), Box::new(self.term()?));
            } else if self.eat('-') {
                e = Expr::Sub(Box::new(e), Box::new(self.term()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        while self.eat('*') {
            e = Expr::Mul(Box::new(e), Box::new(self.unary()?));
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.peek().cloned().ok_or_else(|| anyhow!("unexpected end of expression"))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Ident(name) if name == "min" || name == "max" => {
                self.expect('(')?;
                let a = Box::new(self.expr()?);
                self.expect(',')?;
                let b = Box::new(self.expr()?);
                self.expect(')')?;
                Ok(if name == "min" { Expr::Min(a, b) } else { Expr::Max(a, b) })
            }
            Token::Ident(name) => {
                let var = Var::parse(&name).ok_or_else(|| anyhow!("unknown variable `{name}`"))?;
                if !self.allowed.contains(&var) {
                    let names: Vec<&str> = self.allowed.iter().map(Var::name).collect();
                    bail!("variable `{name}` is not available here (allowed: {})", names.join(", "));
                }
                Ok(Expr::Var(var))
            }
            Token::Sym(c) => bail!("unexpected `{c}`"),
        }
    }
}
