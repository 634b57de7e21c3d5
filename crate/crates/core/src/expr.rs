//! A small expression language for right-hand sides, boundary data and
//! level-set domains.
//!
//! Grammar (recursive descent, one token of lookahead):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := unary ('^' factor)?          right-associative, constant exponent
//! unary  := '-'? atom
//! atom   := number | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func   := min | max | abs | exp | log | sqrt | sin | cos
//! ```
//!
//! Variables are `x1, y1, x2, y2` (real coordinates of `z1, z2`), `t = |z|^2`
//! and `r = |z|`. Note that `-x1^2` parses as `(-x1)^2`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier '{name}' at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("variable '{name}' is not available in dimension {n}")]
    VariableOutOfDimension { name: String, n: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("domain error in '{node}': {msg}")]
    Domain { node: String, msg: &'static str },
    #[error("variable '{0}' is unbound")]
    Unbound(Var),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X1,
    Y1,
    X2,
    Y2,
    T,
    R,
}

impl Var {
    const ALL: [Var; 6] = [Var::X1, Var::Y1, Var::X2, Var::Y2, Var::T, Var::R];

    pub fn name(self) -> &'static str {
        match self {
            Var::X1 => "x1",
            Var::Y1 => "y1",
            Var::X2 => "x2",
            Var::Y2 => "y2",
            Var::T => "t",
            Var::R => "r",
        }
    }

    fn from_name(s: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Coordinate axis for `x1, y1, x2, y2`.
    fn axis(self) -> Option<usize> {
        match self {
            Var::X1 => Some(0),
            Var::Y1 => Some(1),
            Var::X2 => Some(2),
            Var::Y2 => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Func {
    const ALL: [Func; 8] = [
        Func::Min,
        Func::Max,
        Func::Abs,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Sin,
        Func::Cos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }

    fn variadic(self) -> bool {
        matches!(self, Func::Min | Func::Max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Vec<Expr>),
}

/// Fully parenthesized rendering that parses back to an equivalent tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Pow(b, p) => {
                if *p < 0.0 {
                    write!(f, "({b}^(-{:?}))", -p)
                } else {
                    write!(f, "({b}^{p:?})")
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| ParseError::Syntax {
                pos: start,
                msg: format!("malformed number '{text}'"),
            })?;
            out.push((Tok::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Sym(c), i));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                pos: i,
                msg: format!("unexpected character '{ch}'"),
            });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let found = match self.peek() {
            Tok::End => "end of input".to_string(),
            Tok::Num(x) => format!("number {x}"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Sym(c) => format!("'{c}'"),
        };
        Err(ParseError::Syntax {
            pos: self.pos(),
            msg: format!("{}, found {found}", msg.into()),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.unary()?;
        if *self.peek() != Tok::Sym('^') {
            return Ok(base);
        }
        self.bump();
        let exp_pos = self.pos();
        let exponent = self.factor()?;
        if exponent.has_variables() {
            return Err(ParseError::Syntax {
                pos: exp_pos,
                msg: "exponent must be a constant".into(),
            });
        }
        let p = exponent.eval(&Env::new()).map_err(|e| ParseError::Syntax {
            pos: exp_pos,
            msg: format!("exponent does not evaluate: {e}"),
        })?;
        Ok(Expr::Pow(Box::new(base), p))
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Sym('-') {
            self.bump();
            Ok(Expr::Neg(Box::new(self.atom()?)))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Num(x))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(v) = Var::from_name(&name) {
                    return Ok(Expr::Var(v));
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError::UnknownIdentifier { name, pos });
                };
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Sym(',') {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(')')?;
                if !func.variadic() && args.len() != 1 {
                    return Err(ParseError::Syntax {
                        pos,
                        msg: format!("'{}' takes exactly one argument", func.name()),
                    });
                }
                Ok(Expr::Call(func, args))
            }
            _ => self.error("expected a number, variable, function or '('"),
        }
    }
}

/// Parses `src` into an expression tree.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, at: 0 };
    if *p.peek() == Tok::End {
        return p.error("empty expression");
    }
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.error("unexpected trailing input");
    }
    Ok(e)
}

/// Parses and checks that only coordinates of `C^n` are referenced.
pub fn parse_for_dim(src: &str, n: usize) -> Result<Expr, ParseError> {
    let e = parse(src)?;
    e.check_dimension(n)?;
    Ok(e)
}

/// Variable valuation. `t` and `r` fall back to values derived from the
/// bound coordinates when not bound explicitly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Env {
    values: [Option<f64>; 6],
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `x1, y1, ...` from a point of `R^{2n}`.
    pub fn point(coords: &[f64]) -> Self {
        let mut env = Self::new();
        for (axis, &x) in coords.iter().enumerate().take(4) {
            env.values[axis] = Some(x);
        }
        env
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        self.values[var as usize] = Some(value);
        self
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        if let Some(v) = self.values[var as usize] {
            return Some(v);
        }
        let coords: Vec<f64> = self.values[..4].iter().flatten().copied().collect();
        if coords.is_empty() {
            return None;
        }
        let t: f64 = coords.iter().map(|x| x * x).sum();
        match var {
            Var::T => Some(t),
            Var::R => Some(t.sqrt()),
            _ => None,
        }
    }
}

impl Expr {
    pub fn has_variables(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(e) | Expr::Pow(e, _) => e.has_variables(),
            Expr::Bin(_, l, r) => l.has_variables() || r.has_variables(),
            Expr::Call(_, args) => args.iter().any(Expr::has_variables),
        }
    }

    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Expr::Neg(e) | Expr::Pow(e, _) => e.collect_vars(out),
            Expr::Bin(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn check_dimension(&self, n: usize) -> Result<(), ParseError> {
        for v in self.variables() {
            if v.axis().is_some_and(|a| a >= 2 * n) {
                return Err(ParseError::VariableOutOfDimension {
                    name: v.name().to_string(),
                    n,
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        let fault = |msg| EvalError::Domain {
            node: self.to_string(),
            msg,
        };
        let v = match self {
            Expr::Num(x) => *x,
            Expr::Var(v) => env.get(*v).ok_or(EvalError::Unbound(*v))?,
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(env)?, r.eval(env)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(fault("division by zero"));
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(b, p) => {
                let base = b.eval(env)?;
                if base == 0.0 && *p < 0.0 {
                    return Err(fault("zero raised to a negative power"));
                }
                let v = if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
                    base.powi(*p as i32)
                } else {
                    base.powf(*p)
                };
                if v.is_nan() {
                    return Err(fault("negative base with fractional exponent"));
                }
                v
            }
            Expr::Call(func, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval(env))
                    .collect::<Result<Vec<_>, _>>()?;
                let x = vals[0];
                match func {
                    Func::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                    Func::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Func::Abs => x.abs(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(fault("logarithm of a nonpositive value"));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(fault("square root of a negative value"));
                        }
                        x.sqrt()
                    }
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                }
            }
        };
        Ok(v)
    }

    /// Evaluates at a point of `R^{2n}` with `t` and `r` derived from it.
    pub fn eval_at(&self, coords: &[f64]) -> Result<f64, EvalError> {
        self.eval(&Env::point(coords))
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}
