//! Small symbolic expression language for coefficient fields.
//!
//! Expressions are parsed from strings such as `"sin(x0) * exp(-x1^2)"`,
//! differentiated symbolically, and compiled to a stack program for fast
//! evaluation inside Monte Carlo loops. Variables are `x0, x1, ...` (with
//! aliases `x`, `y`, `z` for the first three) and `t` for time.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Tanh,
    Abs,
    Sign,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Tanh => x.tanh(),
            Func::Abs => x.abs(),
            Func::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Time,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Powi(Box<Expr>, i32),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable with respect to which we differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrt {
    Var(usize),
    Time,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Whether the expression mentions `t`.
    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Powi(a, _) | Expr::Call(_, a) => a.depends_on_time(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on_time() || b.depends_on_time()
            }
        }
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) | Expr::Time => None,
            Expr::Neg(a) | Expr::Powi(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Time => t,
            Expr::Neg(a) => -a.eval(x, t),
            Expr::Add(a, b) => a.eval(x, t) + b.eval(x, t),
            Expr::Sub(a, b) => a.eval(x, t) - b.eval(x, t),
            Expr::Mul(a, b) => a.eval(x, t) * b.eval(x, t),
            Expr::Div(a, b) => a.eval(x, t) / b.eval(x, t),
            Expr::Powi(a, n) => a.eval(x, t).powi(*n),
            Expr::Pow(a, b) => a.eval(x, t).powf(b.eval(x, t)),
            Expr::Call(f, a) => f.apply(a.eval(x, t)),
        }
    }

    pub fn diff(&self, wrt: Wrt) -> Result<Expr> {
        Ok(match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(i) => Expr::Const(if wrt == Wrt::Var(*i) { 1.0 } else { 0.0 }),
            Expr::Time => Expr::Const(if wrt == Wrt::Time { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(wrt)?),
            Expr::Add(a, b) => add(a.diff(wrt)?, b.diff(wrt)?),
            Expr::Sub(a, b) => sub(a.diff(wrt)?, b.diff(wrt)?),
            Expr::Mul(a, b) => add(
                mul(a.diff(wrt)?, (**b).clone()),
                mul((**a).clone(), b.diff(wrt)?),
            ),
            Expr::Div(a, b) => {
                let num = sub(
                    mul(a.diff(wrt)?, (**b).clone()),
                    mul((**a).clone(), b.diff(wrt)?),
                );
                div(num, powi((**b).clone(), 2))
            }
            Expr::Powi(a, n) => mul(
                mul(Expr::Const(*n as f64), powi((**a).clone(), n - 1)),
                a.diff(wrt)?,
            ),
            Expr::Pow(a, b) => {
                // d(a^b) = a^b (b' ln a + b a'/a)
                let inner = add(
                    mul(b.diff(wrt)?, call(Func::Ln, (**a).clone())),
                    div(mul((**b).clone(), a.diff(wrt)?), (**a).clone()),
                );
                mul(self.clone(), inner)
            }
            Expr::Call(f, a) => {
                let da = a.diff(wrt)?;
                if da.is_zero() {
                    return Ok(Expr::zero());
                }
                let a = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Exp => call(Func::Exp, a),
                    Func::Ln => div(Expr::Const(1.0), a),
                    Func::Sqrt => div(Expr::Const(0.5), call(Func::Sqrt, a)),
                    Func::Tanh => sub(Expr::Const(1.0), powi(call(Func::Tanh, a), 2)),
                    Func::Abs | Func::Sign => {
                        return Err(Error::MissingDerivative(format!(
                            "{}(...) is not differentiable",
                            f.name()
                        )))
                    }
                };
                mul(outer, da)
            }
        })
    }

    pub fn diff_var(&self, i: usize) -> Result<Expr> {
        self.diff(Wrt::Var(i))
    }

    /// Replace `t` by `t_shift - t` (used for time-reversed drivers).
    pub fn reflect_time(&self, t_shift: f64) -> Expr {
        match self {
            Expr::Time => sub(Expr::Const(t_shift), Expr::Time),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => neg(a.reflect_time(t_shift)),
            Expr::Add(a, b) => add(a.reflect_time(t_shift), b.reflect_time(t_shift)),
            Expr::Sub(a, b) => sub(a.reflect_time(t_shift), b.reflect_time(t_shift)),
            Expr::Mul(a, b) => mul(a.reflect_time(t_shift), b.reflect_time(t_shift)),
            Expr::Div(a, b) => div(a.reflect_time(t_shift), b.reflect_time(t_shift)),
            Expr::Powi(a, n) => powi(a.reflect_time(t_shift), *n),
            Expr::Pow(a, b) => Expr::Pow(
                Box::new(a.reflect_time(t_shift)),
                Box::new(b.reflect_time(t_shift)),
            ),
            Expr::Call(f, a) => call(*f, a.reflect_time(t_shift)),
        }
    }

    pub fn compile(&self) -> Compiled {
        let mut ops = Vec::new();
        emit(self, &mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Var(_) | Op::Time => depth += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => depth -= 1,
                _ => {}
            }
            max_depth = max_depth.max(depth);
        }
        Compiled { ops, max_depth }
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(z), e) | (e, Expr::Const(z)) if z == 0.0 => e,
        (a, Expr::Neg(b)) => Expr::Sub(Box::new(a), b),
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (e, Expr::Const(z)) if z == 0.0 => e,
        (Expr::Const(z), e) if z == 0.0 => neg(e),
        (a, Expr::Neg(b)) => Expr::Add(Box::new(a), b),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::zero(),
        (Expr::Const(o), e) | (e, Expr::Const(o)) if o == 1.0 => e,
        (Expr::Const(m), e) | (e, Expr::Const(m)) if m == -1.0 => neg(e),
        (e, c @ Expr::Const(_)) => Expr::Mul(Box::new(c), Box::new(e)),
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if y != 0.0 => Expr::Const(x / y),
        (Expr::Const(z), _) if z == 0.0 => Expr::zero(),
        (e, Expr::Const(o)) if o == 1.0 => e,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn powi(a: Expr, n: i32) -> Expr {
    match (a, n) {
        (_, 0) => Expr::Const(1.0),
        (e, 1) => e,
        (Expr::Const(c), n) => Expr::Const(c.powi(n)),
        (Expr::Powi(inner, m), n) => Expr::Powi(inner, m * n),
        (e, n) => Expr::Powi(Box::new(e), n),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(f.apply(c)),
        other => Expr::Call(f, Box::new(other)),
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        add(self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        mul(self, rhs)
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        div(self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Expr> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Time => write!(f, "t"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "{a} * {b}"),
            Expr::Div(a, b) => write!(f, "{a} / ({b})"),
            Expr::Powi(a, n) => write!(f, "({a})^{n}"),
            Expr::Pow(a, b) => write!(f, "({a})^({b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Time,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Powi(i32),
    Pow,
    Call(Func),
}

fn emit(e: &Expr, ops: &mut Vec<Op>) {
    match e {
        Expr::Const(c) => ops.push(Op::Const(*c)),
        Expr::Var(i) => ops.push(Op::Var(*i)),
        Expr::Time => ops.push(Op::Time),
        Expr::Neg(a) => {
            emit(a, ops);
            ops.push(Op::Neg);
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(match e {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                Expr::Mul(..) => Op::Mul,
                Expr::Div(..) => Op::Div,
                _ => Op::Pow,
            });
        }
        Expr::Powi(a, n) => {
            emit(a, ops);
            ops.push(Op::Powi(*n));
        }
        Expr::Call(f, a) => {
            emit(a, ops);
            ops.push(Op::Call(*f));
        }
    }
}

const STACK: usize = 32;

/// Stack-machine form of an [`Expr`].
#[derive(Clone, Debug, PartialEq)]
pub struct Compiled {
    ops: Vec<Op>,
    max_depth: usize,
}

impl Compiled {
    pub fn is_zero(&self) -> bool {
        matches!(self.ops.as_slice(), [Op::Const(c)] if *c == 0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(c)] => Some(*c),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        if let [Op::Const(c)] = self.ops.as_slice() {
            return *c;
        }
        if self.max_depth > STACK {
            let mut stack = Vec::with_capacity(self.max_depth);
            return run(&self.ops, x, t, &mut stack);
        }
        let mut buf = [0.0f64; STACK];
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    buf[sp] = c;
                    sp += 1;
                }
                Op::Var(i) => {
                    buf[sp] = x[i];
                    sp += 1;
                }
                Op::Time => {
                    buf[sp] = t;
                    sp += 1;
                }
                Op::Neg => buf[sp - 1] = -buf[sp - 1],
                Op::Powi(n) => buf[sp - 1] = buf[sp - 1].powi(n),
                Op::Call(f) => buf[sp - 1] = f.apply(buf[sp - 1]),
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => {
                    sp -= 1;
                    let b = buf[sp];
                    let a = &mut buf[sp - 1];
                    *a = binary(*op, *a, b);
                }
            }
        }
        buf[0]
    }
}

#[inline]
fn binary(op: Op, a: f64, b: f64) -> f64 {
    match op {
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Div => a / b,
        _ => a.powf(b),
    }
}

fn run(ops: &[Op], x: &[f64], t: f64, stack: &mut Vec<f64>) -> f64 {
    for op in ops {
        match *op {
            Op::Const(c) => stack.push(c),
            Op::Var(i) => stack.push(x[i]),
            Op::Time => stack.push(t),
            Op::Neg => {
                let v = stack.last_mut().unwrap();
                *v = -*v;
            }
            Op::Powi(n) => {
                let v = stack.last_mut().unwrap();
                *v = v.powi(n);
            }
            Op::Call(f) => {
                let v = stack.last_mut().unwrap();
                *v = f.apply(*v);
            }
            _ => {
                let b = stack.pop().unwrap();
                let a = stack.last_mut().unwrap();
                *a = binary(*op, *a, b);
            }
        }
    }
    stack[0]
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
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
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = add(lhs, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = mul(lhs, self.unary()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = div(lhs, self.unary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(neg(self.unary()?))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(match exp.as_const() {
                Some(n) if n.fract() == 0.0 && n.abs() < 1e6 => powi(base, n as i32),
                _ => Expr::Pow(Box::new(base), Box::new(exp)),
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                if let Some(f) = Func::from_name(name) {
                    self.expect(b'(')?;
                    let arg = self.expr()?;
                    self.expect(b')')?;
                    return Ok(call(f, arg));
                }
                match name {
                    "t" => Ok(Expr::Time),
                    "x" => Ok(Expr::Var(0)),
                    "y" => Ok(Expr::Var(1)),
                    "z" => Ok(Expr::Var(2)),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    _ => match name.strip_prefix('x').and_then(|n| n.parse::<usize>().ok()) {
                        Some(i) => Ok(Expr::Var(i)),
                        None => {
                            self.pos = start;
                            Err(self.error(&format!("unknown identifier `{name}`")))
                        }
                    },
                }
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
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
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        text.parse::<f64>().map(Expr::Const).map_err(|_| Error::Parse {
            pos: start,
            msg: format!("bad number `{text}`"),
        })
    }
}
