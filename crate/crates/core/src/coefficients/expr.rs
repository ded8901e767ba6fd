//! Expression trees over the time variable `t`.
//!
//! Grammar (precedence low to high):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 't' | 'pi' | name | name '(' args ')' | '(' expr ')'
//! ```
//!
//! Functions: `exp log sin cos abs` (one argument) and `pow(a, b)`.
//! Named profiles usable anywhere in an expression: `sin` and `cos` (bare,
//! meaning `sin(t)` and `cos(t)`), `sin_damped(a)`, `const(c)`,
//! `exp_decay(k)`, `power_decay(k)`.
//! Tabulated data: `table(linear | cubic, t0:v0, t1:v1, ...)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    Cubic,
}

/// Tabulated samples with linear or natural-cubic-spline interpolation.
/// Outside the sampled range the end values are held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub interpolation: Interpolation,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    second_derivs: Vec<f64>,
}

impl Table {
    pub fn new(interpolation: Interpolation, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() || knots.len() < 2 {
            return Err(Error::Validation(
                "a table needs at least two (t, value) pairs".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "table knots must be strictly increasing".into(),
            ));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("table entries must be finite".into()));
        }
        let second_derivs = match interpolation {
            Interpolation::Linear => vec![0.0; knots.len()],
            Interpolation::Cubic => natural_spline_second_derivs(&knots, &values),
        };
        Ok(Table {
            interpolation,
            knots,
            values,
            second_derivs,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return self.values[0];
        }
        if t >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let hi = self.knots.partition_point(|&k| k <= t).min(n - 1);
        let lo = hi - 1;
        let h = self.knots[hi] - self.knots[lo];
        let a = (self.knots[hi] - t) / h;
        let b = 1.0 - a;
        let linear = a * self.values[lo] + b * self.values[hi];
        match self.interpolation {
            Interpolation::Linear => linear,
            Interpolation::Cubic => {
                linear
                    + ((a * a * a - a) * self.second_derivs[lo]
                        + (b * b * b - b) * self.second_derivs[hi])
                        * h
                        * h
                        / 6.0
            }
        }
    }
}

// Tridiagonal solve for the natural spline (zero curvature at both ends).
fn natural_spline_second_derivs(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let sub = h0;
        let diag = 2.0 * (h0 + h1);
        let sup = h1;
        let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        let denom = diag - sub * c_prime[i - 1];
        c_prime[i] = sup / denom;
        d_prime[i] = (rhs - sub * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    Unary(UnaryFn, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Table(Arc<Table>),
}

impl Expr {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Time => t,
            Expr::Unary(f, e) => {
                let v = e.eval(t);
                match f {
                    UnaryFn::Neg => -v,
                    UnaryFn::Exp => v.exp(),
                    UnaryFn::Log => v.ln(),
                    UnaryFn::Sin => v.sin(),
                    UnaryFn::Cos => v.cos(),
                    UnaryFn::Abs => v.abs(),
                }
            }
            Expr::Binary(op, l, r) => {
                let (a, b) = (l.eval(t), r.eval(t));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Table(tab) => tab.eval(t),
        }
    }

    /// True when the expression does not reference `t`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Time | Expr::Table(_) => false,
            Expr::Unary(_, e) => e.is_constant(),
            Expr::Binary(_, l, r) => l.is_constant() && r.is_constant(),
        }
    }

    /// True when the expression is the literal zero function.
    pub fn is_identically_zero(&self) -> bool {
        self.is_constant() && self.eval(0.0) == 0.0
    }

    /// Knots of every embedded table; useful as quadrature breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(&mut out);
        out
    }

    fn collect_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Expr::Table(tab) => out.extend_from_slice(&tab.knots),
            Expr::Unary(_, e) => e.collect_breakpoints(out),
            Expr::Binary(_, l, r) => {
                l.collect_breakpoints(out);
                r.collect_breakpoints(out);
            }
            Expr::Const(_) | Expr::Time => {}
        }
    }

    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Time => write!(f, "t"),
            Expr::Unary(UnaryFn::Neg, e) => write!(f, "(-{e})"),
            Expr::Unary(func, e) => {
                let name = match func {
                    UnaryFn::Exp => "exp",
                    UnaryFn::Log => "log",
                    UnaryFn::Sin => "sin",
                    UnaryFn::Cos => "cos",
                    UnaryFn::Abs => "abs",
                    UnaryFn::Neg => unreachable!(),
                };
                write!(f, "{name}({e})")
            }
            Expr::Binary(op, l, r) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l} {sym} {r})")
            }
            Expr::Table(tab) => {
                let kind = match tab.interpolation {
                    Interpolation::Linear => "linear",
                    Interpolation::Cubic => "cubic",
                };
                write!(f, "table({kind}")?;
                for (k, v) in tab.knots.iter().zip(&tab.values) {
                    write!(f, ", {k}:{v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Parse error location inside a single expression (0-based byte offset).
#[derive(Debug)]
struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

fn unary(f: UnaryFn, e: Expr) -> Expr {
    Expr::Unary(f, Box::new(e))
}

fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
    Expr::Binary(op, Box::new(l), Box::new(r))
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            line: 1,
            column: self.pos + 1,
            message: msg.to_string(),
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
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = binary(BinOp::Add, lhs, self.term()?);
            } else if self.eat(b'-') {
                lhs = binary(BinOp::Sub, lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = binary(BinOp::Mul, lhs, self.unary()?);
            } else if self.eat(b'/') {
                lhs = binary(BinOp::Div, lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(unary(UnaryFn::Neg, self.unary()?));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            return Ok(binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        if i < s.len() && (s[i] == b'-' || s[i] == b'+') {
            i += 1;
        }
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'-' || s[j] == b'+') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                i = j;
                while i < s.len() && s[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        let text = std::str::from_utf8(&s[start..i]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos = i;
                Ok(v)
            }
            Err(_) => Err(self.err("expected a number")),
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        let mut out = Vec::new();
        if self.eat(b')') {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat(b')') {
                return Ok(out);
            }
            self.expect(b',')?;
        }
    }

    fn constant_arg(&self, name: &str, args: &[Expr]) -> Result<f64> {
        if args.len() != 1 {
            return Err(self.err(&format!("{name} takes exactly one argument")));
        }
        if !args[0].is_constant() {
            return Err(self.err(&format!("the parameter of {name} must not depend on t")));
        }
        Ok(args[0].eval(0.0))
    }

    fn table(&mut self) -> Result<Expr> {
        self.expect(b'(')?;
        let kind = self.ident();
        let interpolation = match kind.as_str() {
            "linear" => Interpolation::Linear,
            "cubic" => Interpolation::Cubic,
            _ => return Err(self.err("table interpolation must be 'linear' or 'cubic'")),
        };
        let mut knots = Vec::new();
        let mut values = Vec::new();
        while self.eat(b',') {
            knots.push(self.number()?);
            self.expect(b':')?;
            values.push(self.number()?);
        }
        self.expect(b')')?;
        let at = self.pos;
        Table::new(interpolation, knots, values)
            .map(|tab| Expr::Table(Arc::new(tab)))
            .map_err(|e| Error::Parse {
                line: 1,
                column: at,
                message: e.to_string(),
            })
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Const(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let name_pos = self.pos;
                let name = self.ident();
                if name == "table" {
                    return self.table();
                }
                if !self.eat(b'(') {
                    return match name.as_str() {
                        "t" => Ok(Expr::Time),
                        "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                        "sin" => Ok(unary(UnaryFn::Sin, Expr::Time)),
                        "cos" => Ok(unary(UnaryFn::Cos, Expr::Time)),
                        _ => {
                            self.pos = name_pos;
                            Err(self.err(&format!("unknown name '{name}'")))
                        }
                    };
                }
                let args = self.args()?;
                let one = |p: &Self, f: UnaryFn, args: Vec<Expr>| -> Result<Expr> {
                    let mut args = args;
                    if args.len() != 1 {
                        return Err(p.err(&format!("{name} takes exactly one argument")));
                    }
                    Ok(unary(f, args.remove(0)))
                };
                // (1 + t)
                let one_plus_t = || binary(BinOp::Add, Expr::Const(1.0), Expr::Time);
                match name.as_str() {
                    "exp" => one(self, UnaryFn::Exp, args),
                    "log" => one(self, UnaryFn::Log, args),
                    "sin" => one(self, UnaryFn::Sin, args),
                    "cos" => one(self, UnaryFn::Cos, args),
                    "abs" => one(self, UnaryFn::Abs, args),
                    "pow" => {
                        let mut args = args;
                        if args.len() != 2 {
                            return Err(self.err("pow takes exactly two arguments"));
                        }
                        let e = args.pop().unwrap();
                        let b = args.pop().unwrap();
                        Ok(binary(BinOp::Pow, b, e))
                    }
                    "const" => Ok(Expr::Const(self.constant_arg(&name, &args)?)),
                    "sin_damped" => {
                        let a = self.constant_arg(&name, &args)?;
                        Ok(binary(
                            BinOp::Div,
                            unary(UnaryFn::Sin, Expr::Time),
                            binary(BinOp::Pow, one_plus_t(), Expr::Const(a)),
                        ))
                    }
                    "exp_decay" => {
                        let k = self.constant_arg(&name, &args)?;
                        Ok(unary(
                            UnaryFn::Exp,
                            binary(BinOp::Mul, Expr::Const(-k), Expr::Time),
                        ))
                    }
                    "power_decay" => {
                        let k = self.constant_arg(&name, &args)?;
                        Ok(binary(BinOp::Pow, one_plus_t(), Expr::Const(-k)))
                    }
                    _ => {
                        self.pos = name_pos;
                        Err(self.err(&format!("unknown function '{name}'")))
                    }
                }
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }
}
