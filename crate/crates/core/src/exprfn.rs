//! Math expressions of `(x, y, t)` with named constants.
//!
//! Coefficients, boundary values, initial values and exact solutions are all
//! supplied as text, e.g. `"2*beta*g*t*exp(-beta*t^2)*(x - 1)"`. The grammar
//! is a small muparser-like subset:
//!
//! ```text
//! expr    := compare
//! compare := sum (('<' | '<=' | '>' | '>=' | '==') sum)*
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | ident | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus on its base (`-x^2 == -(x^2)`) and is
//! right-associative. `if(cond, a, b)` only evaluates the selected branch.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("function `{name}` expects {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("unbound constant `{0}`")]
    UnboundConstant(String),
    #[error("non-finite value {value} at (x={x}, y={y}, t={t})")]
    NonFinite { value: f64, x: f64, y: f64, t: f64 },
    #[error("invalid constant name `{0}`")]
    InvalidName(String),
    #[error("expected 1 or 2 vector components, got {0}")]
    Components(usize),
}

pub type Result<T> = std::result::Result<T, ExprError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    T,
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
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Log,
    Abs,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, a: f64) -> f64 {
        match self {
            Func::Exp => a.exp(),
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Log => a.ln(),
            Func::Abs => a.abs(),
            Func::Sqrt => a.sqrt(),
        }
    }
}

impl BinOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

impl CmpOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        let r = match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
        };
        if r {
            1.0
        } else {
            0.0
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Const(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Names of all constants referenced by the expression.
    pub fn constants(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_constants(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_constants<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Const(name) => out.push(name),
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_constants(out),
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => {
                a.collect_constants(out);
                b.collect_constants(out);
            }
            Expr::If(c, a, b) => {
                c.collect_constants(out);
                a.collect_constants(out);
                b.collect_constants(out);
            }
        }
    }

    /// True for a literal zero, possibly wrapped in signs.
    pub fn is_literal_zero(&self) -> bool {
        match self {
            Expr::Num(v) => *v == 0.0,
            Expr::Neg(a) => a.is_literal_zero(),
            _ => false,
        }
    }

    fn eval_raw(&self, b: &Bindings, x: f64, y: f64, t: f64) -> Result<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Var(Var::T) => t,
            Expr::Const(name) => b
                .get(name)
                .ok_or_else(|| ExprError::UnboundConstant(name.clone()))?,
            Expr::Neg(a) => -a.eval_raw(b, x, y, t)?,
            Expr::Binary(op, l, r) => op.apply(l.eval_raw(b, x, y, t)?, r.eval_raw(b, x, y, t)?),
            Expr::Compare(op, l, r) => {
                op.apply(l.eval_raw(b, x, y, t)?, r.eval_raw(b, x, y, t)?)
            }
            Expr::Call(f, a) => f.apply(a.eval_raw(b, x, y, t)?),
            Expr::If(c, a, e) => {
                if c.eval_raw(b, x, y, t)? != 0.0 {
                    a.eval_raw(b, x, y, t)?
                } else {
                    e.eval_raw(b, x, y, t)?
                }
            }
        })
    }
}

/// Fully parenthesized rendering; re-parses to an expression with identical
/// evaluations.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    write!(f, "(-{:e})", -v)
                } else {
                    write!(f, "{:e}", v)
                }
            }
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Const(name) => f.write_str(name),
            Expr::Neg(a) => write!(f, "(-{})", a),
            Expr::Binary(op, l, r) => write!(f, "({} {} {})", l, op.symbol(), r),
            Expr::Compare(op, l, r) => write!(f, "({} {} {})", l, op.symbol(), r),
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
            Expr::If(c, a, b) => write!(f, "if({}, {}, {})", c, a, b),
        }
    }
}

/// Named constants available to an expression.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    values: BTreeMap<String, f64>,
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `name`; `x`, `y`, `t` and function names are reserved.
    pub fn insert(&mut self, name: &str, value: f64) -> Result<()> {
        if !valid_identifier(name)
            || matches!(name, "x" | "y" | "t" | "if")
            || Func::from_name(name).is_some()
        {
            return Err(ExprError::InvalidName(name.to_string()));
        }
        self.values.insert(name.to_string(), value);
        Ok(())
    }

    pub fn with(mut self, name: &str, value: f64) -> Result<Self> {
        self.insert(name, value)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Parses `alpha=2, v=-5`. Each value is itself an expression without
    /// variables, e.g. `epsilon=1.e-14` or `h=2*0.5`.
    pub fn parse_list(source: &str) -> Result<Self> {
        let mut out = Bindings::new();
        let mut offset = 0;
        for item in source.split(',') {
            let item_offset = offset;
            offset += item.len() + 1;
            if item.trim().is_empty() {
                continue;
            }
            let (name, value) = item.split_once('=').ok_or_else(|| ExprError::Syntax {
                offset: item_offset,
                message: format!("expected `name=value`, got `{}`", item.trim()),
            })?;
            let expr = parse(value).map_err(|e| shift_offset(e, item_offset + name.len() + 1))?;
            let v = expr.eval_raw(&out, 0.0, 0.0, 0.0)?;
            out.insert(name.trim(), v)?;
        }
        Ok(out)
    }

    /// Inverse of [`Bindings::parse_list`] with round-trip exact values.
    pub fn to_list_string(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{}={:e}", k, v))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn shift_offset(e: ExprError, by: usize) -> ExprError {
    match e {
        ExprError::Syntax { offset, message } => ExprError::Syntax {
            offset: offset + by,
            message,
        },
        ExprError::UnknownFunction { name, offset } => ExprError::UnknownFunction {
            name,
            offset: offset + by,
        },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Token, usize)>> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Token::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Token, usize)> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Token::End, start));
        };
        let two = bytes.get(self.pos + 1).copied();
        let tok = match c {
            b'0'..=b'9' | b'.' => return self.number(start),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                return Ok((Token::Ident(self.src[start..self.pos].to_string()), start));
            }
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b',' => Token::Comma,
            b'+' => Token::Op("+"),
            b'-' => Token::Op("-"),
            b'*' => Token::Op("*"),
            b'/' => Token::Op("/"),
            b'^' => Token::Op("^"),
            b'<' if two == Some(b'=') => {
                self.pos += 1;
                Token::Op("<=")
            }
            b'>' if two == Some(b'=') => {
                self.pos += 1;
                Token::Op(">=")
            }
            b'=' if two == Some(b'=') => {
                self.pos += 1;
                Token::Op("==")
            }
            b'<' => Token::Op("<"),
            b'>' => Token::Op(">"),
            _ => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", c as char),
                })
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<(Token, usize)> {
        let bytes = self.src.as_bytes();
        let digits = |lx: &mut Lexer| {
            let s = lx.pos;
            while lx.pos < bytes.len() && bytes[lx.pos].is_ascii_digit() {
                lx.pos += 1;
            }
            lx.pos - s
        };
        let mut n = digits(self);
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(ExprError::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        // Rust's float parser rejects a trailing '.' before an exponent ("1.e-14").
        let normalized = text.replacen(".e", ".0e", 1).replacen(".E", ".0E", 1);
        let v: f64 = normalized.parse().map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("malformed number `{}`", text),
        })?;
        Ok((Token::Num(v), start))
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(ExprError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Token, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {}", what))
        }
    }

    fn compare(&mut self) -> Result<Expr> {
        let mut lhs = self.sum()?;
        loop {
            let op = match self.peek() {
                Token::Op("<") => CmpOp::Lt,
                Token::Op("<=") => CmpOp::Le,
                Token::Op(">") => CmpOp::Gt,
                Token::Op(">=") => CmpOp::Ge,
                Token::Op("==") => CmpOp::Eq,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.sum()?;
            lhs = Expr::Compare(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Token::Op("+") => BinOp::Add,
                Token::Op("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Op("*") => BinOp::Mul,
                Token::Op("/") => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Token::Op("-") => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Token::Op("+") => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if *self.peek() == Token::Op("^") {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.bump() {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let e = self.compare()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(e)
            }
            Token::Ident(name) => {
                if *self.peek() == Token::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Token::RParen {
                        loop {
                            args.push(self.compare()?);
                            if *self.peek() == Token::Comma {
                                self.bump();
                                continue;
                            }
                            break;
                        }
                    }
                    self.expect(Token::RParen, "`)` or `,`")?;
                    return call(name, args, at);
                }
                Ok(match name.as_str() {
                    "x" => Expr::Var(Var::X),
                    "y" => Expr::Var(Var::Y),
                    "t" => Expr::Var(Var::T),
                    _ => Expr::Const(name),
                })
            }
            Token::End => Err(ExprError::Syntax {
                offset: at,
                message: "unexpected end of expression".into(),
            }),
            other => Err(ExprError::Syntax {
                offset: at,
                message: format!("unexpected token {:?}", other),
            }),
        }
    }
}

fn call(name: String, mut args: Vec<Expr>, offset: usize) -> Result<Expr> {
    if name == "if" {
        if args.len() != 3 {
            return Err(ExprError::Arity {
                name,
                expected: 3,
                found: args.len(),
            });
        }
        let e = args.pop().unwrap();
        let a = args.pop().unwrap();
        let c = args.pop().unwrap();
        return Ok(Expr::If(Box::new(c), Box::new(a), Box::new(e)));
    }
    let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
        name: name.clone(),
        offset,
    })?;
    if args.len() != 1 {
        return Err(ExprError::Arity {
            name,
            expected: 1,
            found: args.len(),
        });
    }
    Ok(Expr::Call(func, Box::new(args.pop().unwrap())))
}

/// Parses a scalar expression.
pub fn parse(source: &str) -> Result<Expr> {
    if source.trim().is_empty() {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        tokens: Lexer::tokens(source)?,
        pos: 0,
    };
    let e = p.compare()?;
    if *p.peek() != Token::End {
        return p.error("unexpected trailing input");
    }
    Ok(e)
}

/// Parses semicolon-separated components, e.g. `"vmax*y; 0"`.
pub fn parse_vector(source: &str) -> Result<Vec<Expr>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for part in source.split(';') {
        out.push(parse(part).map_err(|e| shift_offset(e, offset))?);
        offset += part.len() + 1;
    }
    if out.is_empty() || out.len() > 2 {
        return Err(ExprError::Components(out.len()));
    }
    Ok(out)
}

/// Evaluates `e`, failing on unbound constants or a non-finite result.
pub fn eval(e: &Expr, b: &Bindings, x: f64, y: f64, t: f64) -> Result<f64> {
    let v = e.eval_raw(b, x, y, t)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::NonFinite { value: v, x, y, t })
    }
}

pub fn vector_eval(exprs: &[Expr], b: &Bindings, x: f64, y: f64, t: f64) -> Result<Vec<f64>> {
    if exprs.is_empty() || exprs.len() > 2 {
        return Err(ExprError::Components(exprs.len()));
    }
    exprs.iter().map(|e| eval(e, b, x, y, t)).collect()
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Push(f64),
    X,
    Y,
    T,
    Neg,
    Bin(BinOp),
    Cmp(CmpOp),
    Call(Func),
    JumpIfZero(usize),
    Jump(usize),
}

/// An expression compiled to a flat stack program with its constants folded
/// in. This is the form evaluated inside assembly loops.
#[derive(Debug, Clone)]
pub struct ParsedFunction {
    source: String,
    bindings: Bindings,
    program: Arc<[Op]>,
    zero: bool,
}

impl PartialEq for ParsedFunction {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.bindings == other.bindings
    }
}

impl ParsedFunction {
    /// Parses and compiles `source`; every referenced constant must be bound.
    pub fn new(source: &str, bindings: &Bindings) -> Result<Self> {
        let expr = parse(source)?;
        Self::from_expr(source, &expr, bindings)
    }

    pub fn from_expr(source: &str, expr: &Expr, bindings: &Bindings) -> Result<Self> {
        for name in expr.constants() {
            if bindings.get(name).is_none() {
                return Err(ExprError::UnboundConstant(name.to_string()));
            }
        }
        let mut program = Vec::new();
        compile(expr, bindings, &mut program);
        Ok(ParsedFunction {
            source: source.to_string(),
            bindings: bindings.clone(),
            program: program.into(),
            zero: expr.is_literal_zero(),
        })
    }

    pub fn constant(value: f64) -> Self {
        let expr = Expr::Num(value);
        Self::from_expr(&format!("{:e}", value), &expr, &Bindings::new()).expect("literal")
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn bindings(&self) -> &Bindings {
        &self.bindings
    }

    pub fn is_literal_zero(&self) -> bool {
        self.zero
    }

    /// Raw evaluation; the result may be non-finite.
    pub fn value(&self, x: f64, y: f64, t: f64) -> f64 {
        let mut stack: Vec<f64> = Vec::with_capacity(16);
        let mut pc = 0;
        let prog = &self.program;
        while pc < prog.len() {
            match prog[pc] {
                Op::Push(v) => stack.push(v),
                Op::X => stack.push(x),
                Op::Y => stack.push(y),
                Op::T => stack.push(t),
                Op::Neg => {
                    let a = stack.last_mut().unwrap();
                    *a = -*a;
                }
                Op::Bin(op) => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a = op.apply(*a, b);
                }
                Op::Cmp(op) => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a = op.apply(*a, b);
                }
                Op::Call(f) => {
                    let a = stack.last_mut().unwrap();
                    *a = f.apply(*a);
                }
                Op::JumpIfZero(target) => {
                    if stack.pop().unwrap() == 0.0 {
                        pc = target;
                        continue;
                    }
                }
                Op::Jump(target) => {
                    pc = target;
                    continue;
                }
            }
            pc += 1;
        }
        stack.pop().unwrap()
    }

    pub fn try_value(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        let v = self.value(x, y, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite { value: v, x, y, t })
        }
    }
}

fn compile(e: &Expr, b: &Bindings, out: &mut Vec<Op>) {
    match e {
        Expr::Num(v) => out.push(Op::Push(*v)),
        Expr::Var(Var::X) => out.push(Op::X),
        Expr::Var(Var::Y) => out.push(Op::Y),
        Expr::Var(Var::T) => out.push(Op::T),
        Expr::Const(name) => out.push(Op::Push(b.get(name).unwrap_or(f64::NAN))),
        Expr::Neg(a) => {
            compile(a, b, out);
            out.push(Op::Neg);
        }
        Expr::Binary(op, l, r) => {
            compile(l, b, out);
            compile(r, b, out);
            out.push(Op::Bin(*op));
        }
        Expr::Compare(op, l, r) => {
            compile(l, b, out);
            compile(r, b, out);
            out.push(Op::Cmp(*op));
        }
        Expr::Call(f, a) => {
            compile(a, b, out);
            out.push(Op::Call(*f));
        }
        Expr::If(c, a, e) => {
            compile(c, b, out);
            let jz = out.len();
            out.push(Op::JumpIfZero(0));
            compile(a, b, out);
            let jmp = out.len();
            out.push(Op::Jump(0));
            out[jz] = Op::JumpIfZero(out.len());
            compile(e, b, out);
            out[jmp] = Op::Jump(out.len());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, b: &Bindings, x: f64, y: f64, t: f64) -> f64 {
        eval(&parse(src).unwrap(), b, x, y, t).unwrap()
    }

    #[test]
    fn arithmetic_and_precedence() {
        let b = Bindings::new();
        assert_eq!(ev("2*x + 1", &b, 3.0, 0.0, 0.0), 7.0);
        assert_eq!(ev("-x^2", &b, 3.0, 0.0, 0.0), -9.0);
        assert_eq!(ev("2^3^2", &b, 0.0, 0.0, 0.0), 512.0);
        assert_eq!(ev("x^-1", &b, 4.0, 0.0, 0.0), 0.25);
        assert_eq!(ev("1 + 2 < 4", &b, 0.0, 0.0, 0.0), 1.0);
        assert_eq!(ev("  ( 1+2 ) * 3 ", &b, 0.0, 0.0, 0.0), 9.0);
        assert_eq!(ev("1.e-14", &b, 0.0, 0.0, 0.0), 1e-14);
        assert_eq!(ev("1.", &b, 0.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn exp_of_zero_time() {
        let b = Bindings::new().with("beta", 10.0).unwrap();
        assert_eq!(ev("exp(-beta*t^2)", &b, 0.3, 0.0, 0.0), 1.0);
    }

    #[test]
    fn if_selects_branch() {
        let b = Bindings::new();
        assert_eq!(ev("if(x<0.5, 1, 0)", &b, 0.25, 0.0, 0.0), 1.0);
        assert_eq!(ev("if(x<0.5, 1, 0)", &b, 0.75, 0.0, 0.0), 0.0);
    }

    #[test]
    fn guarded_branch_never_divides_by_zero() {
        let b = Bindings::parse_list("epsilon=1.e-14, alpha=2, vmax=-5, g=-2, beta=10").unwrap();
        let src = "if(y < epsilon, g + (g - g*x)*(exp(-beta*t^2) - 1), \
                   g + (g - (g*(exp((vmax*x*y)/alpha) - 1))/(exp((vmax*y)/alpha) - 1))*(exp(-beta*t^2) - 1))";
        assert_eq!(ev(src, &b, 0.4, 0.0, 0.0), -2.0);
        let f = ParsedFunction::new(src, &b).unwrap();
        assert_eq!(f.try_value(0.4, 0.0, 0.0).unwrap(), -2.0);
    }

    #[test]
    fn division_by_zero_is_non_finite() {
        let e = parse("x/ (x - x)").unwrap();
        assert!(matches!(
            eval(&e, &Bindings::new(), 1.0, 0.0, 0.0),
            Err(ExprError::NonFinite { .. })
        ));
    }

    #[test]
    fn mms_source_vanishes_at_initial_time() {
        let b = Bindings::parse_list("alpha=2, v=-5, g=-2, beta=10").unwrap();
        let src = "2*beta*g*t*exp(-beta*t^2)*((exp(v*x/alpha) - 1)/(exp(v/alpha) - 1) - 1)";
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(ev(src, &b, x, 0.0, 0.0), 0.0);
        }
    }

    #[test]
    fn vector_components() {
        let b = Bindings::new().with("vmax", -5.0).unwrap();
        let v = parse_vector("vmax*y; 0").unwrap();
        assert_eq!(vector_eval(&v, &b, 0.0, 2.0, 0.0).unwrap(), vec![-10.0, 0.0]);
        let z = parse_vector("0; 0").unwrap();
        assert_eq!(vector_eval(&z, &b, 1.0, 1.0, 0.0).unwrap(), vec![0.0, 0.0]);
        let one = parse_vector("1").unwrap();
        assert_eq!(vector_eval(&one, &b, 0.0, 0.0, 0.0).unwrap(), vec![1.0]);
        assert!(matches!(parse_vector("1;2;3"), Err(ExprError::Components(3))));
    }

    #[test]
    fn errors() {
        assert!(matches!(parse(""), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("2 +"), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!(parse("2 $ 3"), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("tanh(x)"), Err(ExprError::UnknownFunction { .. })));
        assert!(matches!(parse("exp(x, y)"), Err(ExprError::Arity { expected: 1, .. })));
        assert!(matches!(parse("if(x, y)"), Err(ExprError::Arity { expected: 3, .. })));
        assert!(matches!(parse("2 x"), Err(ExprError::Syntax { .. })));
        let e = parse("a*x").unwrap();
        assert_eq!(
            eval(&e, &Bindings::new(), 1.0, 0.0, 0.0),
            Err(ExprError::UnboundConstant("a".into()))
        );
        assert!(ParsedFunction::new("a*x", &Bindings::new()).is_err());
        assert!(Bindings::new().with("x", 1.0).is_err());
        assert!(Bindings::new().with("1a", 1.0).is_err());
        assert!(Bindings::new().with("exp", 1.0).is_err());
    }

    #[test]
    fn bindings_list_round_trip() {
        let b = Bindings::parse_list("epsilon=1.e-14, alpha=2, vmax=-5, g=-2*1.000000001").unwrap();
        assert_eq!(b.get("g"), Some(-2.000000002));
        assert_eq!(Bindings::parse_list(&b.to_list_string()).unwrap(), b);
    }

    #[test]
    fn compiled_matches_tree() {
        let b = Bindings::parse_list("a=1.5, c=-0.25").unwrap();
        let src = "if(x >= a*y, sqrt(abs(x - c)) + log(2 + t), -cos(x*y)^2 / (1 + exp(c*t))) <= 0.5";
        let e = parse(src).unwrap();
        let f = ParsedFunction::new(src, &b).unwrap();
        for i in 0..50 {
            let (x, y, t) = (0.1 * i as f64 - 2.0, 0.05 * i as f64, 0.02 * i as f64);
            assert_eq!(f.value(x, y, t), eval(&e, &b, x, y, t).unwrap());
        }
    }
}
