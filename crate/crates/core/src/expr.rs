//! Arithmetic expressions in `x` and `y`.
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'x' | 'y' | 'pi' | ident '(' sum ')' | '(' sum ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`, and it is right
//! associative: `2^3^2` is `2^(3^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Ln,
    Abs,
    Sqrt,
}

impl UnaryOp {
    const FUNCTIONS: [UnaryOp; 8] = [
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tan,
        UnaryOp::Atan,
        UnaryOp::Exp,
        UnaryOp::Ln,
        UnaryOp::Abs,
        UnaryOp::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Atan => "atan",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    fn from_function_name(name: &str) -> Option<UnaryOp> {
        Self::FUNCTIONS.into_iter().find(|op| op.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// Syntax tree of a scalar function of `x` and `y`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expression>),
    Binary(BinaryOp, Box<Expression>, Box<Expression>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("function `{name}` at byte {offset} takes 1 argument, got {found}")]
    Arity {
        offset: usize,
        name: String,
        found: usize,
    },
}

/// `|cos(a)|` below this makes `tan(a)` undefined.
const TAN_POLE_EPS: f64 = 1e-12;

impl Expression {
    pub fn var(v: Var) -> Self {
        Expression::Var(v)
    }

    pub fn unary(op: UnaryOp, arg: Expression) -> Self {
        Expression::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expression, rhs: Expression) -> Self {
        Expression::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Evaluates the expression. Non-finite results (poles, `ln` of a
    /// non-positive number, division by zero) come back as NaN or infinity.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expression::Const(c) => *c,
            Expression::Var(Var::X) => x,
            Expression::Var(Var::Y) => y,
            Expression::Unary(op, arg) => {
                let a = arg.eval(x, y);
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tan => {
                        if a.cos().abs() <= TAN_POLE_EPS {
                            f64::NAN
                        } else {
                            a.tan()
                        }
                    }
                    UnaryOp::Atan => a.atan(),
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Ln => {
                        if a > 0.0 {
                            a.ln()
                        } else {
                            f64::NAN
                        }
                    }
                    UnaryOp::Abs => a.abs(),
                    UnaryOp::Sqrt => {
                        if a >= 0.0 {
                            a.sqrt()
                        } else {
                            f64::NAN
                        }
                    }
                }
            }
            Expression::Binary(op, lhs, rhs) => {
                let a = lhs.eval(x, y);
                let b = rhs.eval(x, y);
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            f64::NAN
                        } else {
                            a / b
                        }
                    }
                    BinaryOp::Pow => pow(a, b),
                }
            }
        }
    }

    /// Conservative check that the expression has no singularity inside the
    /// box `[x0, x1] × [y0, y1]`: returns `false` when a tan pole, a zero
    /// divisor, or a non-positive `ln`/negative `sqrt` argument may lie inside.
    pub fn is_regular_on(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> bool {
        self.enclose(Interval::new(x0, x1), Interval::new(y0, y1))
            .is_some()
    }

    fn enclose(&self, x: Interval, y: Interval) -> Option<Interval> {
        match self {
            Expression::Const(c) => Some(Interval::point(*c)),
            Expression::Var(Var::X) => Some(x),
            Expression::Var(Var::Y) => Some(y),
            Expression::Unary(op, arg) => {
                let a = arg.enclose(x, y)?;
                match op {
                    UnaryOp::Neg => Some(Interval::new(-a.hi, -a.lo)),
                    UnaryOp::Sin => Some(a.sin()),
                    UnaryOp::Cos => Some(a.shift(std::f64::consts::FRAC_PI_2).sin()),
                    UnaryOp::Tan => a.tan(),
                    UnaryOp::Atan => Some(Interval::new(a.lo.atan(), a.hi.atan())),
                    UnaryOp::Exp => Some(Interval::new(a.lo.exp(), a.hi.exp())),
                    UnaryOp::Ln => (a.lo > 0.0).then(|| Interval::new(a.lo.ln(), a.hi.ln())),
                    UnaryOp::Abs => Some(a.abs()),
                    UnaryOp::Sqrt => {
                        (a.lo >= 0.0).then(|| Interval::new(a.lo.sqrt(), a.hi.sqrt()))
                    }
                }
            }
            Expression::Binary(op, lhs, rhs) => {
                let a = lhs.enclose(x, y)?;
                let b = rhs.enclose(x, y)?;
                match op {
                    BinaryOp::Add => Some(Interval::new(a.lo + b.lo, a.hi + b.hi)),
                    BinaryOp::Sub => Some(Interval::new(a.lo - b.hi, a.hi - b.lo)),
                    BinaryOp::Mul => Some(a.mul(b)),
                    BinaryOp::Div => {
                        if b.lo <= 0.0 && b.hi >= 0.0 {
                            None
                        } else {
                            Some(a.mul(Interval::new(1.0 / b.hi, 1.0 / b.lo)))
                        }
                    }
                    BinaryOp::Pow => a.pow(b),
                }
            }
        }
    }
}

fn pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

/// Closed interval used only for singularity detection. Infinite or NaN
/// bounds mean "unbounded" and never trigger a false regularity claim.
#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn new(a: f64, b: f64) -> Self {
        if a.is_nan() || b.is_nan() {
            return Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            };
        }
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    fn point(c: f64) -> Self {
        Interval::new(c, c)
    }

    fn width(self) -> f64 {
        self.hi - self.lo
    }

    fn shift(self, by: f64) -> Self {
        Interval::new(self.lo + by, self.hi + by)
    }

    fn abs(self) -> Self {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            Interval::new(-self.hi, -self.lo)
        } else {
            Interval::new(0.0, self.hi.max(-self.lo))
        }
    }

    fn mul(self, o: Interval) -> Self {
        let c = [
            self.lo * o.lo,
            self.lo * o.hi,
            self.hi * o.lo,
            self.hi * o.hi,
        ];
        if c.iter().any(|v| v.is_nan()) {
            return Interval::new(f64::NAN, f64::NAN);
        }
        Interval {
            lo: c.iter().copied().fold(f64::INFINITY, f64::min),
            hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn contains_point_of(self, period: f64, phase: f64) -> bool {
        // Is there an integer k with lo <= phase + k*period <= hi?
        let k = ((self.lo - phase) / period).ceil();
        phase + k * period <= self.hi
    }

    fn sin(self) -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        if !self.width().is_finite() || self.width() >= 2.0 * PI {
            return Interval::new(-1.0, 1.0);
        }
        let mut lo = self.lo.sin().min(self.hi.sin());
        let mut hi = self.lo.sin().max(self.hi.sin());
        if self.contains_point_of(2.0 * PI, FRAC_PI_2) {
            hi = 1.0;
        }
        if self.contains_point_of(2.0 * PI, -FRAC_PI_2) {
            lo = -1.0;
        }
        Interval::new(lo, hi)
    }

    fn tan(self) -> Option<Self> {
        use std::f64::consts::{FRAC_PI_2, PI};
        if !self.width().is_finite() || self.width() >= PI {
            return None;
        }
        // Pad by the same tolerance the point evaluator uses for poles.
        let padded = Interval::new(self.lo - TAN_POLE_EPS, self.hi + TAN_POLE_EPS);
        if padded.contains_point_of(PI, FRAC_PI_2) {
            return None;
        }
        Some(Interval::new(self.lo.tan(), self.hi.tan()))
    }

    fn pow(self, e: Interval) -> Option<Self> {
        let integral = e.lo == e.hi && e.lo.fract() == 0.0;
        if integral {
            let n = e.lo;
            if n < 0.0 && self.lo <= 0.0 && self.hi >= 0.0 {
                return None;
            }
            let a = pow(self.lo, n);
            let b = pow(self.hi, n);
            let even = n % 2.0 == 0.0;
            if even && n > 0.0 && self.lo < 0.0 && self.hi > 0.0 {
                return Some(Interval::new(0.0, a.max(b)));
            }
            return Some(Interval::new(a, b));
        }
        if self.lo > 0.0 {
            let c = [
                self.lo.powf(e.lo),
                self.lo.powf(e.hi),
                self.hi.powf(e.lo),
                self.hi.powf(e.hi),
            ];
            return Some(Interval::new(
                c.iter().copied().fold(f64::INFINITY, f64::min),
                c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ));
        }
        // A non-integral power of a possibly non-positive base is undefined
        // somewhere in the box.
        None
    }
}

impl fmt::Display for Expression {
    /// Fully parenthesized rendering that parses back to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Const(c) => write!(f, "{c:?}"),
            Expression::Var(Var::X) => f.write_str("x"),
            Expression::Var(Var::Y) => f.write_str("y"),
            Expression::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expression::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expression::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

impl std::str::FromStr for Expression {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expression(s)
    }
}

pub fn parse_expression(text: &str) -> Result<Expression, ParseError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.sum()?;
    if let Some(tok) = parser.peek() {
        return Err(ParseError::Syntax {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(n) => format!("number {n}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Op(c) => format!("operator `{c}`"),
            TokenKind::LParen => "`(`".to_string(),
            TokenKind::RParen => "`)`".to_string(),
            TokenKind::Comma => "`,`".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'0'..=b'9' | b'.' => {
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
                let literal = &text[start..i];
                let value: f64 = literal.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{literal}`"),
                })?;
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    offset: start,
                });
                continue;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    offset: start,
                });
                continue;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => TokenKind::Op(c as char),
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b',' => TokenKind::Comma,
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        tokens.push(Token {
            kind,
            offset: start,
        });
        i += 1;
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ParseError> {
        let offset = self.offset();
        match self.next() {
            Some(tok) if tok.kind == kind => Ok(()),
            Some(tok) => Err(ParseError::Syntax {
                offset,
                message: format!("expected {}, found {}", kind.describe(), tok.kind.describe()),
            }),
            None => Err(ParseError::Syntax {
                offset,
                message: format!("expected {}, found end of input", kind.describe()),
            }),
        }
    }

    fn sum(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.product()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.product()?;
            let op = if op == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Expression::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if op == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Expression::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Expression::unary(UnaryOp::Neg, self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exponent = self.unary()?;
            return Ok(Expression::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expression, ParseError> {
        let offset = self.offset();
        let Some(tok) = self.next() else {
            return Err(ParseError::Syntax {
                offset,
                message: "unexpected end of input".to_string(),
            });
        };
        match tok.kind {
            TokenKind::Number(v) => Ok(Expression::Const(v)),
            TokenKind::LParen => {
                let inner = self.sum()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => match name.as_str() {
                "x" => Ok(Expression::Var(Var::X)),
                "y" => Ok(Expression::Var(Var::Y)),
                "pi" => Ok(Expression::Const(std::f64::consts::PI)),
                _ => {
                    let Some(op) = UnaryOp::from_function_name(&name) else {
                        return Err(ParseError::UnknownIdentifier { offset, name });
                    };
                    self.call(op, name, offset)
                }
            },
            other => Err(ParseError::Syntax {
                offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn call(&mut self, op: UnaryOp, name: String, offset: usize) -> Result<Expression, ParseError> {
        self.expect(TokenKind::LParen)?;
        let mut args = Vec::new();
        if !matches!(self.peek().map(|t| &t.kind), Some(TokenKind::RParen)) {
            args.push(self.sum()?);
            while matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Comma)) {
                self.pos += 1;
                args.push(self.sum()?);
            }
        }
        self.expect(TokenKind::RParen)?;
        if args.len() != 1 {
            return Err(ParseError::Arity {
                offset,
                name,
                found: args.len(),
            });
        }
        Ok(Expression::unary(op, args.pop().expect("one argument")))
    }
}
