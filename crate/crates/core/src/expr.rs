//! Arithmetic expressions over named scalar variables.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, `pi`, and the
//! functions `abs exp log sqrt sin cos tanh min max pow`. Expressions compile to a
//! postfix program evaluated on a fixed-size stack, so evaluation never allocates.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::Error;

/// Deepest evaluation stack a compiled expression may need.
pub const MAX_STACK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    PowInt(i32),
    Abs,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    ops: Vec<Op>,
    source: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>, Error> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < b.len() && ((b[i] as char).is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && (b[j] as char).is_ascii_digit() {
                    i = j;
                    while i < b.len() && (b[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit = &s[start..i];
            let v: f64 = lit
                .parse()
                .map_err(|_| Error::Expression(format!("bad number `{lit}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(s[start..i].to_string()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    vars: &'a [(&'a str, usize)],
    ops: Vec<Op>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), Error> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Expression(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<(), Error> {
        self.term()?;
        loop {
            if self.eat('+') {
                self.term()?;
                self.ops.push(Op::Add);
            } else if self.eat('-') {
                self.term()?;
                self.ops.push(Op::Sub);
            } else {
                return Ok(());
            }
        }
    }

    fn term(&mut self) -> Result<(), Error> {
        self.unary()?;
        loop {
            if self.eat('*') {
                self.unary()?;
                self.ops.push(Op::Mul);
            } else if self.eat('/') {
                self.unary()?;
                self.ops.push(Op::Div);
            } else {
                return Ok(());
            }
        }
    }

    fn unary(&mut self) -> Result<(), Error> {
        if self.eat('-') {
            self.unary()?;
            self.ops.push(Op::Neg);
            Ok(())
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    // `^` binds tighter than unary minus on its left and is right-associative.
    fn power(&mut self) -> Result<(), Error> {
        self.atom()?;
        if self.eat('^') {
            let mark = self.ops.len();
            self.unary()?;
            if self.ops.len() == mark + 1 {
                if let Op::Const(e) = self.ops[mark] {
                    if e == libm::trunc(e) && libm::fabs(e) <= 64.0 {
                        self.ops.pop();
                        self.ops.push(Op::PowInt(e as i32));
                        return Ok(());
                    }
                }
            }
            self.ops.push(Op::Pow);
        }
        Ok(())
    }

    fn atom(&mut self) -> Result<(), Error> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                self.ops.push(Op::Const(v));
                Ok(())
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                self.expr()?;
                self.expect(')')
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    return self.call(&name);
                }
                if name == "pi" {
                    self.ops.push(Op::Const(core::f64::consts::PI));
                    return Ok(());
                }
                match self.vars.iter().find(|(v, _)| *v == name) {
                    Some(&(_, k)) => {
                        self.ops.push(Op::Var(k));
                        Ok(())
                    }
                    None => Err(Error::Expression(format!("unknown variable `{name}`"))),
                }
            }
            Some(t) => Err(Error::Expression(format!("unexpected token {t:?}"))),
            None => Err(Error::Expression("unexpected end of input".to_string())),
        }
    }

    fn call(&mut self, name: &str) -> Result<(), Error> {
        let (arity, op) = match name {
            "abs" => (1, Op::Abs),
            "exp" => (1, Op::Exp),
            "log" => (1, Op::Log),
            "sqrt" => (1, Op::Sqrt),
            "sin" => (1, Op::Sin),
            "cos" => (1, Op::Cos),
            "tanh" => (1, Op::Tanh),
            "min" => (2, Op::Min),
            "max" => (2, Op::Max),
            "pow" => (2, Op::Pow),
            _ => return Err(Error::Expression(format!("unknown function `{name}`"))),
        };
        self.expr()?;
        for _ in 1..arity {
            self.expect(',')?;
            self.expr()?;
        }
        self.expect(')')?;
        self.ops.push(op);
        Ok(())
    }
}

fn stack_effect(op: &Op) -> isize {
    match op {
        Op::Const(_) | Op::Var(_) => 1,
        Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow | Op::Min | Op::Max => -1,
        _ => 0,
    }
}

impl Expr {
    /// Compiles `source`; `vars[k]` is bound to `values[k]` at evaluation time.
    pub fn compile(source: &str, vars: &[&str]) -> Result<Self, Error> {
        let slots: Vec<(&str, usize)> = vars.iter().enumerate().map(|(k, v)| (*v, k)).collect();
        Self::compile_slots(source, &slots)
    }

    /// Like [`Expr::compile`] with explicit `(name, slot)` bindings; several names
    /// may share a slot.
    pub fn compile_slots(source: &str, vars: &[(&str, usize)]) -> Result<Self, Error> {
        let toks = tokenize(source)?;
        let mut p = Parser {
            toks,
            pos: 0,
            vars,
            ops: Vec::new(),
        };
        p.expr()?;
        if p.pos != p.toks.len() {
            return Err(Error::Expression(format!("trailing input in `{source}`")));
        }
        let mut depth = 0isize;
        for op in &p.ops {
            depth += stack_effect(op);
            if depth as usize > MAX_STACK {
                return Err(Error::Expression("expression too deep".to_string()));
            }
        }
        Ok(Expr {
            ops: p.ops,
            source: source.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        let mut st = [0.0f64; MAX_STACK];
        let mut n = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(v) => {
                    st[n] = v;
                    n += 1;
                }
                Op::Var(k) => {
                    st[n] = values[k];
                    n += 1;
                }
                Op::Neg => st[n - 1] = -st[n - 1],
                Op::PowInt(e) => st[n - 1] = powi(st[n - 1], e),
                Op::Abs => st[n - 1] = libm::fabs(st[n - 1]),
                Op::Exp => st[n - 1] = libm::exp(st[n - 1]),
                Op::Log => st[n - 1] = libm::log(st[n - 1]),
                Op::Sqrt => st[n - 1] = libm::sqrt(st[n - 1]),
                Op::Sin => st[n - 1] = libm::sin(st[n - 1]),
                Op::Cos => st[n - 1] = libm::cos(st[n - 1]),
                Op::Tanh => st[n - 1] = libm::tanh(st[n - 1]),
                binary => {
                    let r = st[n - 1];
                    let l = st[n - 2];
                    n -= 1;
                    st[n - 1] = match binary {
                        Op::Add => l + r,
                        Op::Sub => l - r,
                        Op::Mul => l * r,
                        Op::Div => l / r,
                        Op::Pow => libm::pow(l, r),
                        Op::Min => l.min(r),
                        Op::Max => l.max(r),
                        _ => unreachable!(),
                    };
                }
            }
        }
        st[0]
    }
}

fn powi(x: f64, e: i32) -> f64 {
    let mut base = if e < 0 { 1.0 / x } else { x };
    let mut k = e.unsigned_abs();
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
}
