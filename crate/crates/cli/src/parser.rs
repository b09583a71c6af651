//! Textual syntax for kernels, mean functions, likelihoods and priors.
//!
//! Expressions follow the constructor syntax of the library:
//!
//! ```text
//! expr   := term ('+' term)*
//! term   := factor ('*' factor)*
//! factor := call | '(' expr ')'
//! call   := ident '(' [arg (',' arg)*] ')'
//! arg    := number | int '/' int | '[' args ']' | zeros(int) | collect(int:int)
//!         | name | expr
//! ```
//!
//! A scalar length scale selects the isotropic form of a kernel and a vector
//! selects the ARD form. Parsing happens in two stages: a syntax pass builds
//! an untyped call tree carrying byte positions, then a lowering pass checks
//! identifiers and arities and produces the typed trees below.

use std::fmt;

use gp_core::{Kernel, LengthScale, Likelihood, MaternOrder, MeanFunction, Prior};
use gp_core::DMatrix;

/// A parse failure. Offsets are 1-based byte positions into the source, so
/// an error at the end of `"SE(0,0"` is reported at offset 7.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseError {
    Syntax { offset: usize, expected: Vec<String>, found: String },
    Arity { offset: usize, name: String, expected: String, found: usize },
    Invalid { offset: usize, message: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::Arity { offset, .. } | ParseError::Invalid { offset, .. } => {
                *offset
            }
        }
    }

    fn invalid(pos: usize, message: impl Into<String>) -> Self {
        ParseError::Invalid { offset: pos + 1, message: message.into() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Syntax { offset, expected, found } => {
                let list = match expected.as_slice() {
                    [] => String::from("nothing"),
                    [one] => one.clone(),
                    [init @ .., last] => format!("{} or {last}", init.join(", ")),
                };
                write!(f, "syntax error at offset {offset}: expected {list}, found {found}")
            }
            ParseError::Arity { offset, name, expected, found } => {
                write!(f, "arity error at offset {offset}: {name} takes {expected}, got {found}")
            }
            ParseError::Invalid { offset, message } => write!(f, "invalid expression at offset {offset}: {message}"),
        }
    }
}

impl std::error::Error for ParseError {}

// -------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Colon,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Num(s) => format!("number '{s}'"),
            Tok::End => "end of input".into(),
            other => format!("'{}'", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrack => "[",
            Tok::RBrack => "]",
            Tok::Comma => ",",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Colon => ":",
            _ => "",
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBrack),
            ']' => Some(Tok::RBrack),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            ':' => Some(Tok::Colon),
            _ => None,
        };
        if let Some(tok) = single {
            chars.next();
            out.push(Token { tok, pos });
        } else if c.is_ascii_digit() || c == '.' {
            let mut end = pos;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut k = end + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = &src[pos..end];
            if text.parse::<f64>().is_err() {
                return Err(ParseError::invalid(pos, format!("malformed number '{text}'")));
            }
            out.push(Token { tok: Tok::Num(text.to_string()), pos });
            while chars.peek().is_some_and(|&(p, _)| p < end) {
                chars.next();
            }
        } else if c.is_alphabetic() || c == '_' {
            let mut name = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_alphanumeric() || c == '_' {
                    name.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Token { tok: Tok::Ident(name), pos });
        } else {
            return Err(ParseError::Syntax {
                offset: pos + 1,
                expected: vec!["an expression".into()],
                found: format!("character '{c}'"),
            });
        }
    }
    out.push(Token { tok: Tok::End, pos: src.len() });
    Ok(out)
}

// -------------------------------------------------------------------------
// Syntax pass

#[derive(Debug, Clone)]
enum Node {
    Call { name: String, pos: usize, args: Vec<Arg> },
    Sum(Box<Node>, Box<Node>),
    Product(Box<Node>, Box<Node>),
}

impl Node {
    fn pos(&self) -> usize {
        match self {
            Node::Call { pos, .. } => *pos,
            Node::Sum(l, _) | Node::Product(l, _) => l.pos(),
        }
    }
}

#[derive(Debug, Clone)]
struct Arg {
    pos: usize,
    kind: ArgKind,
}

#[derive(Debug, Clone)]
enum ArgKind {
    Num { value: f64, integer: Option<u64> },
    Ratio(u64, u64),
    List(Vec<Arg>),
    Zeros(usize),
    Range(u64, u64),
    Name(String),
    Expr(Node),
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

const CLOSE_OR_COMMA: &[&str] = &["')'", "','"];

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser { toks: lex(src)?, at: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> usize {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError::Syntax {
            offset: self.pos() + 1,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &[&str]) -> Result<Token, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            Err(self.error(expected))
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::End => Ok(()),
            _ => Err(self.error(&["'+'", "'*'", "end of input"])),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while *self.peek() == Tok::Plus {
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Sum(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::Product(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        match self.peek().clone() {
            Tok::Ident(_) => self.call(),
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, &["')'", "'+'", "'*'"])?;
                Ok(inner)
            }
            _ => Err(self.error(&["a function name", "'('"])),
        }
    }

    fn call(&mut self) -> Result<Node, ParseError> {
        let Token { tok: Tok::Ident(name), pos } = self.bump() else {
            unreachable!("call() is entered on an identifier")
        };
        self.expect(Tok::LParen, &["'('"])?;
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(Node::Call { name, pos, args });
        }
        loop {
            args.push(self.arg()?);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(Node::Call { name, pos, args });
                }
                _ => return Err(self.error(CLOSE_OR_COMMA)),
            }
        }
    }

    fn integer(&mut self) -> Result<u64, ParseError> {
        match self.peek().clone() {
            Tok::Num(text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                let pos = self.pos();
                self.bump();
                text.parse().map_err(|_| ParseError::invalid(pos, format!("integer '{text}' is too large")))
            }
            _ => Err(self.error(&["an integer"])),
        }
    }

    fn number(&mut self, negative: bool) -> Result<ArgKind, ParseError> {
        let Tok::Num(text) = self.peek().clone() else {
            return Err(self.error(&["a number"]));
        };
        self.bump();
        let integer = text.bytes().all(|b| b.is_ascii_digit()).then(|| text.parse().ok()).flatten();
        if let (Some(num), false, Tok::Slash) = (integer, negative, self.peek()) {
            self.bump();
            let den = self.integer()?;
            return Ok(ArgKind::Ratio(num, den));
        }
        let value: f64 = text.parse().expect("lexer validated the literal");
        Ok(ArgKind::Num { value: if negative { -value } else { value }, integer: integer.filter(|_| !negative) })
    }

    fn arg(&mut self) -> Result<Arg, ParseError> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Num(_) => self.number(false)?,
            Tok::Minus | Tok::Plus => {
                let negative = *self.peek() == Tok::Minus;
                self.bump();
                self.number(negative)?
            }
            Tok::LBrack => {
                self.bump();
                let mut items = Vec::new();
                if *self.peek() != Tok::RBrack {
                    loop {
                        items.push(self.arg()?);
                        match self.peek() {
                            Tok::Comma => {
                                self.bump();
                            }
                            Tok::RBrack => break,
                            _ => return Err(self.error(&["']'", "','"])),
                        }
                    }
                }
                self.bump();
                ArgKind::List(items)
            }
            Tok::Ident(name) if *self.peek2() == Tok::LParen && name == "zeros" => {
                self.bump();
                self.bump();
                let n = self.integer()?;
                self.expect(Tok::RParen, &["')'"])?;
                ArgKind::Zeros(n as usize)
            }
            Tok::Ident(name) if *self.peek2() == Tok::LParen && name == "collect" => {
                self.bump();
                self.bump();
                let lo = self.integer()?;
                self.expect(Tok::Colon, &["':'"])?;
                let hi = self.integer()?;
                self.expect(Tok::RParen, &["')'"])?;
                ArgKind::Range(lo, hi)
            }
            Tok::Ident(_) if *self.peek2() == Tok::LParen => ArgKind::Expr(self.expr()?),
            Tok::Ident(name) => {
                self.bump();
                ArgKind::Name(name)
            }
            Tok::LParen => ArgKind::Expr(self.expr()?),
            _ => return Err(self.error(&["a number", "'['", "a name", "an expression"])),
        };
        Ok(Arg { pos, kind })
    }
}

fn parse_tree(src: &str) -> Result<Node, ParseError> {
    let mut p = Parser::new(src)?;
    let node = p.expr()?;
    p.finish()?;
    Ok(node)
}

// -------------------------------------------------------------------------
// Typed trees

/// Length-scale argument as written.
#[derive(Debug, Clone, PartialEq)]
pub enum Scale {
    Scalar(f64),
    Vector(Vec<f64>),
    /// `zeros(d)`: an ARD vector of `d` zeros.
    Zeros(usize),
}

impl Scale {
    fn len(&self) -> usize {
        match self {
            Scale::Scalar(_) => 1,
            Scale::Vector(v) => v.len(),
            Scale::Zeros(d) => *d,
        }
    }

    fn to_length_scale(&self) -> LengthScale {
        match self {
            Scale::Scalar(l) => LengthScale::Iso(*l),
            Scale::Vector(v) => LengthScale::Ard(v.clone()),
            Scale::Zeros(d) => LengthScale::Ard(vec![0.0; *d]),
        }
    }
}

/// Active input dimensions of a masked kernel, 1-based as written.
#[derive(Debug, Clone, PartialEq)]
pub enum Dims {
    List(Vec<usize>),
    /// `collect(a:b)`, inclusive.
    Range(usize, usize),
}

impl Dims {
    fn zero_based(&self) -> Vec<usize> {
        match self {
            Dims::List(v) => v.iter().map(|d| d - 1).collect(),
            Dims::Range(a, b) => (*a - 1..*b).collect(),
        }
    }
}

/// Parameter names usable in `fix(kernel, name...)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Length,
    Scale,
    Period,
    Alpha,
    Offset,
}

impl Role {
    fn from_name(name: &str) -> Option<Role> {
        Some(match name {
            "ℓ" | "l" | "ell" => Role::Length,
            "σ" | "sigma" => Role::Scale,
            "p" | "period" => Role::Period,
            "α" | "alpha" => Role::Alpha,
            "c" => Role::Offset,
            _ => return None,
        })
    }

    fn symbol(self) -> &'static str {
        match self {
            Role::Length => "ℓ",
            Role::Scale => "σ",
            Role::Period => "p",
            Role::Alpha => "α",
            Role::Offset => "c",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelExpr {
    Const { log_sigma: f64 },
    Lin { ls: Scale },
    Matern { order: MaternOrder, ls: Scale, log_sigma: f64 },
    SE { ls: Scale, log_sigma: f64 },
    Periodic { log_ell: f64, log_sigma: f64, log_p: f64 },
    Poly { log_c: f64, log_sigma: f64, degree: u32 },
    Noise { log_sigma: f64 },
    RQ { ls: Scale, log_sigma: f64, log_alpha: f64 },
    /// Freezes the named parameters of a base kernel, or every parameter
    /// when `roles` is empty.
    Fix { inner: Box<KernelExpr>, roles: Vec<Role> },
    Masked { inner: Box<KernelExpr>, dims: Dims },
    Sum(Box<KernelExpr>, Box<KernelExpr>),
    Product(Box<KernelExpr>, Box<KernelExpr>),
}

impl KernelExpr {
    /// Roles of a base kernel's parameters in flattening order, or `None`
    /// for combinators.
    fn roles(&self) -> Option<Vec<Role>> {
        let lengths = |ls: &Scale| vec![Role::Length; ls.len()];
        Some(match self {
            KernelExpr::Const { .. } | KernelExpr::Noise { .. } => vec![Role::Scale],
            KernelExpr::Lin { ls } => lengths(ls),
            KernelExpr::Matern { ls, .. } | KernelExpr::SE { ls, .. } => [lengths(ls), vec![Role::Scale]].concat(),
            KernelExpr::Periodic { .. } => vec![Role::Length, Role::Scale, Role::Period],
            KernelExpr::Poly { .. } => vec![Role::Offset, Role::Scale],
            KernelExpr::RQ { ls, .. } => [lengths(ls), vec![Role::Scale, Role::Alpha]].concat(),
            _ => return None,
        })
    }

    /// Builds the covariance function. Sums and products of the same kind
    /// are flattened into one n-ary node.
    pub fn to_kernel(&self) -> gp_core::Result<Kernel> {
        Ok(match self {
            KernelExpr::Const { log_sigma } => Kernel::constant(*log_sigma),
            KernelExpr::Lin { ls } => Kernel::Lin { ls: ls.to_length_scale() },
            KernelExpr::Matern { order, ls, log_sigma } => {
                Kernel::Matern { order: *order, ls: ls.to_length_scale(), log_sigma: *log_sigma }
            }
            KernelExpr::SE { ls, log_sigma } => Kernel::SE { ls: ls.to_length_scale(), log_sigma: *log_sigma },
            KernelExpr::Periodic { log_ell, log_sigma, log_p } => Kernel::periodic(*log_ell, *log_sigma, *log_p),
            KernelExpr::Poly { log_c, log_sigma, degree } => Kernel::poly(*log_c, *log_sigma, *degree),
            KernelExpr::Noise { log_sigma } => Kernel::noise(*log_sigma),
            KernelExpr::RQ { ls, log_sigma, log_alpha } => {
                Kernel::RQ { ls: ls.to_length_scale(), log_sigma: *log_sigma, log_alpha: *log_alpha }
            }
            KernelExpr::Fix { inner, roles } => {
                let kernel = inner.to_kernel()?;
                if roles.is_empty() {
                    Kernel::fix_all(kernel)
                } else {
                    let own = inner.roles().unwrap_or_default();
                    Kernel::fixed(kernel, own.iter().map(|r| !roles.contains(r)).collect())?
                }
            }
            KernelExpr::Masked { inner, dims } => Kernel::masked(inner.to_kernel()?, dims.zero_based())?,
            KernelExpr::Sum(..) => {
                let mut parts = Vec::new();
                self.flatten(true, &mut parts)?;
                Kernel::Sum(parts)
            }
            KernelExpr::Product(..) => {
                let mut parts = Vec::new();
                self.flatten(false, &mut parts)?;
                Kernel::Product(parts)
            }
        })
    }

    fn flatten(&self, sum: bool, out: &mut Vec<Kernel>) -> gp_core::Result<()> {
        match (self, sum) {
            (KernelExpr::Sum(l, r), true) | (KernelExpr::Product(l, r), false) => {
                l.flatten(sum, out)?;
                r.flatten(sum, out)
            }
            _ => {
                out.push(self.to_kernel()?);
                Ok(())
            }
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Scalar(x) => f.write_str(&num(*x)),
            Scale::Vector(v) => write!(f, "[{}]", v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")),
            Scale::Zeros(d) => write!(f, "zeros({d})"),
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dims::List(v) => write!(f, "[{}]", v.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")),
            Dims::Range(a, b) => write!(f, "collect({a}:{b})"),
        }
    }
}

impl fmt::Display for KernelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelExpr::Const { log_sigma } => write!(f, "Const({})", num(*log_sigma)),
            KernelExpr::Lin { ls } => write!(f, "Lin({ls})"),
            KernelExpr::Matern { order, ls, log_sigma } => {
                write!(f, "Matern({}, {ls}, {})", order.as_ratio(), num(*log_sigma))
            }
            KernelExpr::SE { ls, log_sigma } => write!(f, "SE({ls}, {})", num(*log_sigma)),
            KernelExpr::Periodic { log_ell, log_sigma, log_p } => {
                write!(f, "Periodic({}, {}, {})", num(*log_ell), num(*log_sigma), num(*log_p))
            }
            KernelExpr::Poly { log_c, log_sigma, degree } => {
                write!(f, "Poly({}, {}, {degree})", num(*log_c), num(*log_sigma))
            }
            KernelExpr::Noise { log_sigma } => write!(f, "Noise({})", num(*log_sigma)),
            KernelExpr::RQ { ls, log_sigma, log_alpha } => {
                write!(f, "RQ({ls}, {}, {})", num(*log_sigma), num(*log_alpha))
            }
            KernelExpr::Fix { inner, roles } => {
                write!(f, "fix({inner}")?;
                for r in roles {
                    write!(f, ", {}", r.symbol())?;
                }
                f.write_str(")")
            }
            KernelExpr::Masked { inner, dims } => write!(f, "Masked({inner}, {dims})"),
            KernelExpr::Sum(l, r) => {
                let wrap = matches!(**r, KernelExpr::Sum(..));
                write!(f, "{l} + ")?;
                bracket(f, r, wrap)
            }
            KernelExpr::Product(l, r) => {
                bracket(f, l, matches!(**l, KernelExpr::Sum(..)))?;
                f.write_str(" * ")?;
                bracket(f, r, matches!(**r, KernelExpr::Sum(..) | KernelExpr::Product(..)))
            }
        }
    }
}

fn bracket<T: fmt::Display>(f: &mut fmt::Formatter<'_>, x: &T, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({x})")
    } else {
        write!(f, "{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeanExpr {
    Zero,
    Const(f64),
    Lin(Vec<f64>),
    /// One coefficient vector per power, lowest power first.
    Poly(Vec<Vec<f64>>),
    Sum(Box<MeanExpr>, Box<MeanExpr>),
    Product(Box<MeanExpr>, Box<MeanExpr>),
}

impl MeanExpr {
    pub fn to_mean(&self) -> MeanFunction {
        match self {
            MeanExpr::Zero => MeanFunction::Zero,
            MeanExpr::Const(c) => MeanFunction::Const(*c),
            MeanExpr::Lin(t) => MeanFunction::Lin(t.clone()),
            MeanExpr::Poly(cols) => {
                let d = cols[0].len();
                MeanFunction::Poly(DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]))
            }
            MeanExpr::Sum(l, r) => MeanFunction::Sum(vec![l.to_mean(), r.to_mean()]),
            MeanExpr::Product(l, r) => MeanFunction::Product(vec![l.to_mean(), r.to_mean()]),
        }
    }
}

fn vector(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", "))
}

impl fmt::Display for MeanExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanExpr::Zero => f.write_str("MeanZero()"),
            MeanExpr::Const(c) => write!(f, "MeanConst({})", num(*c)),
            MeanExpr::Lin(t) => write!(f, "MeanLin({})", vector(t)),
            MeanExpr::Poly(cols) => {
                write!(f, "MeanPoly([{}])", cols.iter().map(|c| vector(c)).collect::<Vec<_>>().join(", "))
            }
            MeanExpr::Sum(l, r) => {
                write!(f, "{l} + ")?;
                bracket(f, r, matches!(**r, MeanExpr::Sum(..)))
            }
            MeanExpr::Product(l, r) => {
                bracket(f, l, matches!(**l, MeanExpr::Sum(..)))?;
                f.write_str(" * ")?;
                bracket(f, r, matches!(**r, MeanExpr::Sum(..) | MeanExpr::Product(..)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LikSpec {
    Bernoulli,
    Binomial(u32),
    Exponential,
    Gaussian(f64),
    Poisson,
    StudentT { nu: f64, log_sigma: f64 },
}

impl LikSpec {
    pub fn to_likelihood(&self) -> Likelihood {
        match *self {
            LikSpec::Bernoulli => Likelihood::Bernoulli,
            LikSpec::Binomial(trials) => Likelihood::Binomial { trials },
            LikSpec::Exponential => Likelihood::Exponential,
            LikSpec::Gaussian(log_sigma) => Likelihood::Gaussian { log_sigma },
            LikSpec::Poisson => Likelihood::Poisson,
            LikSpec::StudentT { nu, log_sigma } => Likelihood::StudentT { nu, log_sigma },
        }
    }
}

impl fmt::Display for LikSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LikSpec::Bernoulli => f.write_str("BernLik()"),
            LikSpec::Binomial(n) => write!(f, "BinLik({n})"),
            LikSpec::Exponential => f.write_str("ExpLik()"),
            LikSpec::Gaussian(s) => write!(f, "GaussLik({})", num(*s)),
            LikSpec::Poisson => f.write_str("PoisLik()"),
            LikSpec::StudentT { nu, log_sigma } => write!(f, "StuTLik({}, {})", num(*nu), num(*log_sigma)),
        }
    }
}

// -------------------------------------------------------------------------
// Lowering

fn arity(name: &str, pos: usize, args: &[Arg], expected: &[&str]) -> Result<(), ParseError> {
    if args.len() == expected.len() {
        return Ok(());
    }
    let count = match expected.len() {
        0 => "no arguments".to_string(),
        1 => "1 argument".to_string(),
        n => format!("{n} arguments"),
    };
    let expected = if expected.is_empty() { count } else { format!("{count} ({})", expected.join(", ")) };
    Err(ParseError::Arity { offset: pos + 1, name: name.to_string(), expected, found: args.len() })
}

fn scalar(arg: &Arg) -> Result<f64, ParseError> {
    match arg.kind {
        ArgKind::Num { value, .. } => Ok(value),
        _ => Err(ParseError::invalid(arg.pos, "expected a number")),
    }
}

fn numbers(arg: &Arg) -> Result<Vec<f64>, ParseError> {
    match &arg.kind {
        ArgKind::List(items) => items.iter().map(scalar).collect(),
        _ => Err(ParseError::invalid(arg.pos, "expected a vector such as [0.0, 0.0]")),
    }
}

fn scale(arg: &Arg) -> Result<Scale, ParseError> {
    match &arg.kind {
        ArgKind::Num { value, .. } => Ok(Scale::Scalar(*value)),
        ArgKind::List(items) if items.is_empty() => Err(ParseError::invalid(arg.pos, "empty length-scale vector")),
        ArgKind::List(_) => Ok(Scale::Vector(numbers(arg)?)),
        ArgKind::Zeros(0) => Err(ParseError::invalid(arg.pos, "zeros(0) has no entries")),
        ArgKind::Zeros(d) => Ok(Scale::Zeros(*d)),
        _ => Err(ParseError::invalid(arg.pos, "expected a length scale: a number or a vector")),
    }
}

fn positive_int(arg: &Arg, what: &str) -> Result<u64, ParseError> {
    match arg.kind {
        ArgKind::Num { integer: Some(n), .. } if n >= 1 => Ok(n),
        _ => Err(ParseError::invalid(arg.pos, format!("{what} must be a positive integer"))),
    }
}

/// Splits names such as `SEArd` or `Mat32Iso` into a family and an optional
/// variant constraint (`Some(true)` for ARD).
fn kernel_family(name: &str) -> Option<(&'static str, Option<bool>, Option<MaternOrder>)> {
    Some(match name {
        "Const" => ("Const", None, None),
        "Lin" => ("Lin", None, None),
        "LinIso" => ("Lin", Some(false), None),
        "LinArd" => ("Lin", Some(true), None),
        "Matern" => ("Matern", None, None),
        "Mat12Iso" => ("Matern", Some(false), Some(MaternOrder::Half)),
        "Mat12Ard" => ("Matern", Some(true), Some(MaternOrder::Half)),
        "Mat32Iso" => ("Matern", Some(false), Some(MaternOrder::ThreeHalves)),
        "Mat32Ard" => ("Matern", Some(true), Some(MaternOrder::ThreeHalves)),
        "Mat52Iso" => ("Matern", Some(false), Some(MaternOrder::FiveHalves)),
        "Mat52Ard" => ("Matern", Some(true), Some(MaternOrder::FiveHalves)),
        "SE" => ("SE", None, None),
        "SEIso" => ("SE", Some(false), None),
        "SEArd" => ("SE", Some(true), None),
        "Periodic" => ("Periodic", None, None),
        "Poly" => ("Poly", None, None),
        "Noise" => ("Noise", None, None),
        "RQ" => ("RQ", None, None),
        "RQIso" => ("RQ", Some(false), None),
        "RQArd" => ("RQ", Some(true), None),
        "fix" => ("fix", None, None),
        "Masked" | "masked" => ("Masked", None, None),
        _ => return None,
    })
}

fn lower_kernel(node: &Node) -> Result<KernelExpr, ParseError> {
    let (name, pos, args) = match node {
        Node::Sum(l, r) => return Ok(KernelExpr::Sum(Box::new(lower_kernel(l)?), Box::new(lower_kernel(r)?))),
        Node::Product(l, r) => {
            return Ok(KernelExpr::Product(Box::new(lower_kernel(l)?), Box::new(lower_kernel(r)?)))
        }
        Node::Call { name, pos, args } => (name.as_str(), *pos, args.as_slice()),
    };
    let Some((family, ard, order)) = kernel_family(name) else {
        return Err(ParseError::invalid(pos, format!("unknown kernel '{name}'")));
    };
    let ls_arg = |arg: &Arg| -> Result<Scale, ParseError> {
        let ls = scale(arg)?;
        match (ard, &ls) {
            (Some(false), Scale::Scalar(_)) | (Some(true), Scale::Vector(_) | Scale::Zeros(_)) | (None, _) => Ok(ls),
            (Some(true), _) => Err(ParseError::invalid(arg.pos, format!("{name} needs a vector of length scales"))),
            (Some(false), _) => Err(ParseError::invalid(arg.pos, format!("{name} needs a scalar length scale"))),
        }
    };
    Ok(match family {
        "Const" => {
            arity(name, pos, args, &["log σ"])?;
            KernelExpr::Const { log_sigma: scalar(&args[0])? }
        }
        "Lin" => {
            arity(name, pos, args, &["log ℓ"])?;
            KernelExpr::Lin { ls: ls_arg(&args[0])? }
        }
        "Matern" => {
            let (order, rest) = match order {
                Some(o) => {
                    arity(name, pos, args, &["log ℓ", "log σ"])?;
                    (o, args)
                }
                None => {
                    arity(name, pos, args, &["ν", "log ℓ", "log σ"])?;
                    let order = match args[0].kind {
                        ArgKind::Ratio(1, 2) => MaternOrder::Half,
                        ArgKind::Ratio(3, 2) => MaternOrder::ThreeHalves,
                        ArgKind::Ratio(5, 2) => MaternOrder::FiveHalves,
                        _ => return Err(ParseError::invalid(args[0].pos, "Matern order must be 1/2, 3/2 or 5/2")),
                    };
                    (order, &args[1..])
                }
            };
            KernelExpr::Matern { order, ls: ls_arg(&rest[0])?, log_sigma: scalar(&rest[1])? }
        }
        "SE" => {
            arity(name, pos, args, &["log ℓ", "log σ"])?;
            KernelExpr::SE { ls: ls_arg(&args[0])?, log_sigma: scalar(&args[1])? }
        }
        "Periodic" => {
            arity(name, pos, args, &["log ℓ", "log σ", "log p"])?;
            KernelExpr::Periodic { log_ell: scalar(&args[0])?, log_sigma: scalar(&args[1])?, log_p: scalar(&args[2])? }
        }
        "Poly" => {
            arity(name, pos, args, &["log c", "log σ", "degree"])?;
            let degree = positive_int(&args[2], "polynomial degree")?;
            let degree = u32::try_from(degree).map_err(|_| ParseError::invalid(args[2].pos, "degree too large"))?;
            KernelExpr::Poly { log_c: scalar(&args[0])?, log_sigma: scalar(&args[1])?, degree }
        }
        "Noise" => {
            arity(name, pos, args, &["log σ"])?;
            KernelExpr::Noise { log_sigma: scalar(&args[0])? }
        }
        "RQ" => {
            arity(name, pos, args, &["log ℓ", "log σ", "log α"])?;
            KernelExpr::RQ { ls: ls_arg(&args[0])?, log_sigma: scalar(&args[1])?, log_alpha: scalar(&args[2])? }
        }
        "fix" => {
            if args.is_empty() {
                return Err(ParseError::Arity {
                    offset: pos + 1,
                    name: name.into(),
                    expected: "a kernel followed by parameter names".into(),
                    found: 0,
                });
            }
            let inner = kernel_arg(&args[0])?;
            let mut roles = Vec::new();
            for arg in &args[1..] {
                let ArgKind::Name(n) = &arg.kind else {
                    return Err(ParseError::invalid(arg.pos, "expected a parameter name such as σ or ℓ"));
                };
                let role = Role::from_name(n)
                    .ok_or_else(|| ParseError::invalid(arg.pos, format!("unknown parameter name '{n}'")))?;
                let Some(own) = inner.roles() else {
                    return Err(ParseError::invalid(arg.pos, "named parameters can only be fixed on a base kernel"));
                };
                if !own.contains(&role) {
                    return Err(ParseError::invalid(arg.pos, format!("the kernel has no parameter '{n}'")));
                }
                if roles.contains(&role) {
                    return Err(ParseError::invalid(arg.pos, format!("parameter '{n}' listed twice")));
                }
                roles.push(role);
            }
            KernelExpr::Fix { inner: Box::new(inner), roles }
        }
        "Masked" => {
            arity(name, pos, args, &["kernel", "dimensions"])?;
            let inner = kernel_arg(&args[0])?;
            let dims = match &args[1].kind {
                ArgKind::List(items) if !items.is_empty() => Dims::List(
                    items.iter().map(|a| positive_int(a, "dimension").map(|d| d as usize)).collect::<Result<_, _>>()?,
                ),
                ArgKind::Num { .. } => Dims::List(vec![positive_int(&args[1], "dimension")? as usize]),
                ArgKind::Range(a, b) if *a >= 1 && a <= b => Dims::Range(*a as usize, *b as usize),
                _ => {
                    return Err(ParseError::invalid(
                        args[1].pos,
                        "expected dimensions as [i, j, ...] or collect(a:b), 1-based",
                    ))
                }
            };
            KernelExpr::Masked { inner: Box::new(inner), dims }
        }
        _ => unreachable!("kernel_family returns known families"),
    })
}

fn kernel_arg(arg: &Arg) -> Result<KernelExpr, ParseError> {
    match &arg.kind {
        ArgKind::Expr(node) => lower_kernel(node),
        _ => Err(ParseError::invalid(arg.pos, "expected a kernel expression")),
    }
}

fn lower_mean(node: &Node) -> Result<MeanExpr, ParseError> {
    let (name, pos, args) = match node {
        Node::Sum(l, r) => return Ok(MeanExpr::Sum(Box::new(lower_mean(l)?), Box::new(lower_mean(r)?))),
        Node::Product(l, r) => return Ok(MeanExpr::Product(Box::new(lower_mean(l)?), Box::new(lower_mean(r)?))),
        Node::Call { name, pos, args } => (name.as_str(), *pos, args.as_slice()),
    };
    Ok(match name {
        "MeanZero" => {
            arity(name, pos, args, &[])?;
            MeanExpr::Zero
        }
        "MeanConst" => {
            arity(name, pos, args, &["θ"])?;
            MeanExpr::Const(scalar(&args[0])?)
        }
        "MeanLin" => {
            arity(name, pos, args, &["[θ_1, ..., θ_d]"])?;
            MeanExpr::Lin(numbers(&args[0])?)
        }
        "MeanPoly" => {
            arity(name, pos, args, &["[θ_1, ..., θ_D]"])?;
            let cols = match &args[0].kind {
                ArgKind::List(items) if !items.is_empty() => items.iter().map(numbers).collect::<Result<Vec<_>, _>>()?,
                _ => return Err(ParseError::invalid(args[0].pos, "expected a list of coefficient vectors")),
            };
            if cols[0].is_empty() || cols.iter().any(|c| c.len() != cols[0].len()) {
                return Err(ParseError::invalid(args[0].pos, "coefficient vectors must be non-empty and of equal length"));
            }
            MeanExpr::Poly(cols)
        }
        _ => return Err(ParseError::invalid(pos, format!("unknown mean function '{name}'"))),
    })
}

fn lower_lik(node: &Node) -> Result<LikSpec, ParseError> {
    let Node::Call { name, pos, args } = node else {
        return Err(ParseError::invalid(node.pos(), "likelihoods cannot be combined with + or *"));
    };
    let (name, pos) = (name.as_str(), *pos);
    Ok(match name {
        "BernLik" => {
            arity(name, pos, args, &[])?;
            LikSpec::Bernoulli
        }
        "BinLik" => {
            arity(name, pos, args, &["n"])?;
            let n = positive_int(&args[0], "trial count")?;
            LikSpec::Binomial(u32::try_from(n).map_err(|_| ParseError::invalid(args[0].pos, "trial count too large"))?)
        }
        "ExpLik" => {
            arity(name, pos, args, &[])?;
            LikSpec::Exponential
        }
        "GaussLik" => {
            arity(name, pos, args, &["log σ"])?;
            LikSpec::Gaussian(scalar(&args[0])?)
        }
        "PoisLik" => {
            arity(name, pos, args, &[])?;
            LikSpec::Poisson
        }
        "StuTLik" => {
            arity(name, pos, args, &["ν", "log σ"])?;
            let nu = scalar(&args[0])?;
            if !(nu > 0.0) {
                return Err(ParseError::invalid(args[0].pos, "degrees of freedom must be positive"));
            }
            LikSpec::StudentT { nu, log_sigma: scalar(&args[1])? }
        }
        _ => return Err(ParseError::invalid(pos, format!("unknown likelihood '{name}'"))),
    })
}

fn lower_prior(node: &Node) -> Result<Prior, ParseError> {
    let Node::Call { name, pos, args } = node else {
        return Err(ParseError::invalid(node.pos(), "priors cannot be combined with + or *"));
    };
    let (name, pos) = (name.as_str(), *pos);
    match name {
        "Flat" => {
            arity(name, pos, args, &[])?;
            Ok(Prior::Flat)
        }
        "Normal" => {
            arity(name, pos, args, &["μ", "s"])?;
            let sd = scalar(&args[1])?;
            if !(sd > 0.0) {
                return Err(ParseError::invalid(args[1].pos, "standard deviation must be positive"));
            }
            Ok(Prior::Normal { mean: scalar(&args[0])?, sd })
        }
        "Uniform" => {
            arity(name, pos, args, &["a", "b"])?;
            let (lower, upper) = (scalar(&args[0])?, scalar(&args[1])?);
            if !(lower < upper) {
                return Err(ParseError::invalid(args[0].pos, "uniform bounds need a < b"));
            }
            Ok(Prior::Uniform { lower, upper })
        }
        _ => Err(ParseError::invalid(pos, format!("unknown prior '{name}'"))),
    }
}

// -------------------------------------------------------------------------
// Entry points

pub fn parse_kernel(src: &str) -> Result<KernelExpr, ParseError> {
    lower_kernel(&parse_tree(src)?)
}

pub fn parse_mean(src: &str) -> Result<MeanExpr, ParseError> {
    lower_mean(&parse_tree(src)?)
}

pub fn parse_lik(src: &str) -> Result<LikSpec, ParseError> {
    lower_lik(&parse_tree(src)?)
}

/// Parses a comma-separated list such as `Normal(0, 1), Flat()`.
pub fn parse_priors(src: &str) -> Result<Vec<Prior>, ParseError> {
    let mut p = Parser::new(src)?;
    let mut out = Vec::new();
    if *p.peek() == Tok::End {
        return Ok(out);
    }
    loop {
        out.push(lower_prior(&p.factor()?)?);
        match p.peek() {
            Tok::Comma => {
                p.bump();
            }
            Tok::End => return Ok(out),
            _ => return Err(p.error(&["','", "end of input"])),
        }
    }
}
