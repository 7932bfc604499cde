//! Scalar expressions over the state variables `q1..qd` and the reaction
//! variable `u`.
//!
//! The grammar is a small calculator parsed with a Pratt loop. Precedence,
//! from tightest: `^`, unary `-`, `* /`, `+ -`. All binary operators are
//! left-associative, so `2^3^2` is `(2^3)^2` and `-q1^2` is `-(q1^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` takes {expected} argument(s), got {got} (byte {offset})")]
    Arity {
        name: &'static str,
        expected: usize,
        got: usize,
        offset: usize,
    },
    #[error("variable q{index} exceeds state dimension {dim} (byte {offset})")]
    DimensionExceeded { index: usize, dim: usize, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: &'static str },
    #[error("expression needs q{needed} but point has dimension {dim}")]
    Dimension { needed: usize, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Zero-based state coordinate; `q1` is `Q(0)`.
    Q(usize),
    U,
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
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression. Evaluation is pure, so a `ScalarExpr` can be shared
/// freely between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    root: Node,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

const EXPECT_OPERAND: &[&str] = &["number", "identifier", "`(`", "`-`"];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
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
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                expected: vec!["number"],
                found: format!("`{text}`"),
            })?;
            out.push((Tok::Num(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    expected: vec!["operator", "operand"],
                    found: format!("`{ch}`"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: Option<usize>,
}

const PREFIX_NEG_BP: u8 = 5;

fn infix_bp(op: char) -> Option<(u8, u8, BinOp)> {
    Some(match op {
        '+' => (1, 2, BinOp::Add),
        '-' => (1, 2, BinOp::Sub),
        '*' => (3, 4, BinOp::Mul),
        '/' => (3, 4, BinOp::Div),
        '^' => (7, 8, BinOp::Pow),
        _ => return None,
    })
}

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, expected: &[&'static str]) -> ParseError {
        let (tok, offset) = self.peek();
        ParseError::Syntax {
            offset: *offset,
            expected: expected.to_vec(),
            found: tok.describe(),
        }
    }

    fn expr_bp(&mut self, min_bp: u8) -> Result<Node, ParseError> {
        let (tok, offset) = self.bump();
        let mut lhs = match tok {
            Tok::Num(v) => Node::Num(v),
            Tok::Op('-') => Node::Neg(Box::new(self.expr_bp(PREFIX_NEG_BP)?)),
            Tok::LParen => {
                let inner = self.expr_bp(0)?;
                if self.peek().0 != Tok::RParen {
                    return Err(self.syntax(&["`)`", "operator"]));
                }
                self.bump();
                inner
            }
            Tok::Ident(name) => self.ident(name, offset)?,
            other => {
                return Err(ParseError::Syntax {
                    offset,
                    expected: EXPECT_OPERAND.to_vec(),
                    found: other.describe(),
                });
            }
        };
        loop {
            let op = match &self.peek().0 {
                Tok::Op(c) => *c,
                Tok::End | Tok::RParen | Tok::Comma => break,
                _ => return Err(self.syntax(&["operator", "`)`", "end of input"])),
            };
            let Some((l_bp, r_bp, bin)) = infix_bp(op) else {
                return Err(self.syntax(&["operator"]));
            };
            if l_bp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr_bp(r_bp)?;
            lhs = Node::Bin(bin, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn ident(&mut self, name: String, offset: usize) -> Result<Node, ParseError> {
        if let Some(func) = Func::from_name(&name) {
            if self.peek().0 != Tok::LParen {
                return Err(self.syntax(&["`(`"]));
            }
            self.bump();
            let mut args = vec![self.expr_bp(0)?];
            while self.peek().0 == Tok::Comma {
                self.bump();
                args.push(self.expr_bp(0)?);
            }
            if self.peek().0 != Tok::RParen {
                return Err(self.syntax(&["`)`", "`,`", "operator"]));
            }
            self.bump();
            if args.len() != func.arity() {
                return Err(ParseError::Arity {
                    name: func.name(),
                    expected: func.arity(),
                    got: args.len(),
                    offset,
                });
            }
            return Ok(Node::Call(func, args));
        }
        if name == "u" {
            return Ok(Node::Var(Var::U));
        }
        if let Some(digits) = name.strip_prefix('q') {
            if let Ok(k) = digits.parse::<usize>() {
                if k >= 1 && !digits.starts_with('0') {
                    if let Some(dim) = self.dim {
                        if k > dim {
                            return Err(ParseError::DimensionExceeded { index: k, dim, offset });
                        }
                    }
                    return Ok(Node::Var(Var::Q(k - 1)));
                }
            }
        }
        Err(ParseError::UnknownIdentifier { name, offset })
    }
}

/// Parses `src` into an expression tree.
pub fn parse_expression(src: &str) -> Result<ScalarExpr, ParseError> {
    parse_with_dim(src, None)
}

/// Parses `src` and rejects variables `qk` with `k > dim`.
pub fn parse_with_dim(src: &str, dim: Option<usize>) -> Result<ScalarExpr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, dim };
    if p.peek().0 == Tok::End {
        return Err(p.syntax(EXPECT_OPERAND));
    }
    let root = p.expr_bp(0)?;
    if p.peek().0 != Tok::End {
        return Err(p.syntax(&["operator", "end of input"]));
    }
    Ok(ScalarExpr { root })
}

fn domain(node: &Node, reason: &'static str) -> EvalError {
    EvalError::Domain {
        expr: node.to_string(),
        reason,
    }
}

impl Node {
    fn eval(&self, q: &[f64], u: f64) -> Result<f64, EvalError> {
        let v = match self {
            Node::Num(v) => *v,
            Node::Var(Var::Q(i)) => match q.get(*i) {
                Some(v) => *v,
                None => {
                    return Err(EvalError::Dimension {
                        needed: i + 1,
                        dim: q.len(),
                    })
                }
            },
            Node::Var(Var::U) => u,
            Node::Neg(a) => -a.eval(q, u)?,
            Node::Bin(op, a, b) => {
                let x = a.eval(q, u)?;
                let y = b.eval(q, u)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(domain(self, "division by zero"));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        if x < 0.0 && y.fract() != 0.0 {
                            return Err(domain(self, "negative base with fractional exponent"));
                        }
                        if x == 0.0 && y < 0.0 {
                            return Err(domain(self, "zero to a negative power"));
                        }
                        powf_int_aware(x, y)
                    }
                }
            }
            Node::Call(f, args) => {
                let x = args[0].eval(q, u)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(domain(self, "log of a non-positive number"));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(domain(self, "sqrt of a negative number"));
                        }
                        x.sqrt()
                    }
                    Func::Tanh => x.tanh(),
                    Func::Abs => x.abs(),
                    Func::Min => x.min(args[1].eval(q, u)?),
                    Func::Max => x.max(args[1].eval(q, u)?),
                }
            }
        };
        if !v.is_finite() {
            return Err(domain(self, "non-finite result"));
        }
        Ok(v)
    }

    fn max_q(&self) -> Option<usize> {
        match self {
            Node::Num(_) | Node::Var(Var::U) => None,
            Node::Var(Var::Q(i)) => Some(*i),
            Node::Neg(a) => a.max_q(),
            Node::Bin(_, a, b) => a.max_q().max(b.max_q()),
            Node::Call(_, args) => args.iter().filter_map(Node::max_q).max(),
        }
    }

    fn uses_u(&self) -> bool {
        match self {
            Node::Num(_) | Node::Var(Var::Q(_)) => false,
            Node::Var(Var::U) => true,
            Node::Neg(a) => a.uses_u(),
            Node::Bin(_, a, b) => a.uses_u() || b.uses_u(),
            Node::Call(_, args) => args.iter().any(Node::uses_u),
        }
    }

    fn constant_value(&self) -> Option<f64> {
        match self {
            Node::Num(v) => Some(*v),
            Node::Var(_) => None,
            Node::Neg(a) => a.constant_value().map(|v| -v),
            Node::Bin(..) | Node::Call(..) => {
                if self.max_q().is_none() && !self.uses_u() {
                    self.eval(&[], 0.0).ok()
                } else {
                    None
                }
            }
        }
    }

    fn is_polynomial(&self) -> bool {
        match self {
            Node::Num(_) | Node::Var(_) => true,
            Node::Neg(a) => a.is_polynomial(),
            Node::Bin(BinOp::Add | BinOp::Sub | BinOp::Mul, a, b) => a.is_polynomial() && b.is_polynomial(),
            Node::Bin(BinOp::Div, a, b) => a.is_polynomial() && b.constant_value().is_some_and(|v| v != 0.0),
            Node::Bin(BinOp::Pow, a, b) => {
                a.is_polynomial() && b.constant_value().is_some_and(|v| v >= 0.0 && v.fract() == 0.0)
            }
            Node::Call(..) => false,
        }
    }

    /// Symbolic derivative; only called on polynomial trees.
    fn diff(&self, var: Var) -> Node {
        use Node::*;
        match self {
            Num(_) => Num(0.0),
            Var(v) => Num(if *v == var { 1.0 } else { 0.0 }),
            Neg(a) => Neg(Box::new(a.diff(var))),
            Bin(BinOp::Add, a, b) => Bin(BinOp::Add, Box::new(a.diff(var)), Box::new(b.diff(var))),
            Bin(BinOp::Sub, a, b) => Bin(BinOp::Sub, Box::new(a.diff(var)), Box::new(b.diff(var))),
            Bin(BinOp::Mul, a, b) => Bin(
                BinOp::Add,
                Box::new(Bin(BinOp::Mul, Box::new(a.diff(var)), b.clone())),
                Box::new(Bin(BinOp::Mul, a.clone(), Box::new(b.diff(var)))),
            ),
            Bin(BinOp::Div, a, b) => Bin(BinOp::Div, Box::new(a.diff(var)), b.clone()),
            Bin(BinOp::Pow, a, b) => {
                let n = b.constant_value().unwrap_or(0.0);
                if n == 0.0 {
                    return Num(0.0);
                }
                Bin(
                    BinOp::Mul,
                    Box::new(Bin(
                        BinOp::Mul,
                        Box::new(Num(n)),
                        Box::new(Bin(BinOp::Pow, a.clone(), Box::new(Num(n - 1.0)))),
                    )),
                    Box::new(a.diff(var)),
                )
            }
            Call(..) => Num(f64::NAN),
        }
    }

    fn simplify(self) -> Node {
        use Node::*;
        match self {
            Neg(a) => match a.simplify() {
                Num(v) => Num(-v),
                other => Neg(Box::new(other)),
            },
            Bin(op, a, b) => {
                let a = a.simplify();
                let b = b.simplify();
                match (op, &a, &b) {
                    (_, Num(x), Num(y)) => {
                        let folded = Bin(op, Box::new(Num(*x)), Box::new(Num(*y)));
                        match folded.eval(&[], 0.0) {
                            Ok(v) => Num(v),
                            Err(_) => folded,
                        }
                    }
                    (BinOp::Add, Num(z), _) if *z == 0.0 => b,
                    (BinOp::Add | BinOp::Sub, _, Num(z)) if *z == 0.0 => a,
                    (BinOp::Mul, Num(z), _) | (BinOp::Mul, _, Num(z)) if *z == 0.0 => Num(0.0),
                    (BinOp::Mul, Num(o), _) if *o == 1.0 => b,
                    (BinOp::Mul | BinOp::Div | BinOp::Pow, _, Num(o)) if *o == 1.0 => a,
                    (BinOp::Div, Num(z), _) if *z == 0.0 => Num(0.0),
                    _ => Bin(op, Box::new(a), Box::new(b)),
                }
            }
            other => other,
        }
    }
}

fn powf_int_aware(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() <= 64.0 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

impl ScalarExpr {
    pub fn constant(v: f64) -> ScalarExpr {
        ScalarExpr { root: Node::Num(v) }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Evaluates at a state point; `u` is taken as 0.
    pub fn eval(&self, q: &[f64]) -> Result<f64, EvalError> {
        self.root.eval(q, 0.0)
    }

    pub fn eval_with_u(&self, q: &[f64], u: f64) -> Result<f64, EvalError> {
        self.root.eval(q, u)
    }

    /// Number of state coordinates the expression refers to (`qk` → `k`).
    pub fn dimension(&self) -> usize {
        self.root.max_q().map_or(0, |i| i + 1)
    }

    pub fn uses_u(&self) -> bool {
        self.root.uses_u()
    }

    /// The value when the expression does not depend on any variable.
    pub fn constant_value(&self) -> Option<f64> {
        self.root.constant_value()
    }

    pub fn is_polynomial(&self) -> bool {
        self.root.is_polynomial()
    }

    /// Analytic partial derivative with respect to `q{index+1}`, available
    /// only for polynomial expressions.
    pub fn derivative(&self, index: usize) -> Option<ScalarExpr> {
        if !self.is_polynomial() {
            return None;
        }
        Some(ScalarExpr {
            root: self.root.diff(Var::Q(index)).simplify(),
        })
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => {
                if *v < 0.0 {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Node::Var(Var::Q(i)) => write!(f, "q{}", i + 1),
            Node::Var(Var::U) => write!(f, "u"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                    BinOp::Pow => '^',
                };
                write!(f, "({a} {sym} {b})")
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl std::str::FromStr for ScalarExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expression(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, q: &[f64]) -> f64 {
        parse_expression(src).unwrap().eval(q).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(ev("q1^2/2", &[1.0]), 0.5);
        assert_eq!(ev("2 + cos(q1)", &[0.0]), 3.0);
        assert_eq!(ev("q1*q2", &[2.0, 3.0]), 6.0);
        assert_eq!(ev("exp(0)", &[]), 1.0);
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        match parse_expression("sin(") {
            Err(ParseError::Syntax { offset, expected, .. }) => {
                assert_eq!(offset, 4);
                assert!(expected.contains(&"number"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("-q1^2", &[3.0]), -9.0);
        assert_eq!(ev("2^3^2", &[]), 64.0);
        assert_eq!(ev("1 - 2 - 3", &[]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[]), 1.0);
        assert_eq!(ev("2 + 3 * 4", &[]), 14.0);
        assert_eq!(ev("2^-1", &[]), 0.5);
        assert_eq!(ev("-2 * 3", &[]), -6.0);
        assert_eq!(ev("min(q1, 2) + max(1, 3)", &[5.0]), 5.0);
        assert_eq!(ev("1.5e-1 * 2", &[]), 0.3);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_expression("foo + 1"),
            Err(ParseError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression(""),
            Err(ParseError::Syntax { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression("1 +"),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            parse_expression("(1"),
            Err(ParseError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(parse_expression("min(1)"), Err(ParseError::Arity { .. })));
        assert!(matches!(
            parse_expression("1 $ 2"),
            Err(ParseError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(
            parse_with_dim("q3", Some(2)),
            Err(ParseError::DimensionExceeded { index: 3, .. })
        ));
        assert!(matches!(
            parse_expression("q0"),
            Err(ParseError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn domain_errors_name_subexpression() {
        let e = parse_expression("1 + sqrt(q1)").unwrap();
        match e.eval(&[-1.0]) {
            Err(EvalError::Domain { expr, .. }) => assert_eq!(expr, "sqrt(q1)"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_expression("log(q1)").unwrap().eval(&[0.0]).is_err());
        assert!(parse_expression("1/q1").unwrap().eval(&[0.0]).is_err());
        assert!(parse_expression("q1^0.5").unwrap().eval(&[-2.0]).is_err());
        assert!(matches!(
            parse_expression("q2").unwrap().eval(&[1.0]),
            Err(EvalError::Dimension { needed: 2, dim: 1 })
        ));
    }

    #[test]
    fn polynomial_derivatives() {
        let e = parse_expression("q1^2/2 + 3*q1*q2 - q2^3").unwrap();
        assert!(e.is_polynomial());
        let d1 = e.derivative(0).unwrap();
        let d2 = e.derivative(1).unwrap();
        let q = [1.5, -0.5];
        assert!((d1.eval(&q).unwrap() - (1.5 + 3.0 * -0.5)).abs() < 1e-14);
        assert!((d2.eval(&q).unwrap() - (3.0 * 1.5 - 3.0 * 0.25)).abs() < 1e-14);
        let t = parse_expression("2 + cos(q1)").unwrap();
        assert!(!t.is_polynomial());
        assert!(t.derivative(0).is_none());
        assert!(!parse_expression("q1/q2").unwrap().is_polynomial());
    }

    #[test]
    fn constants_and_metadata() {
        let e = parse_expression("-(2*3)").unwrap();
        assert_eq!(e.constant_value(), Some(-6.0));
        let c = parse_expression("u*(1-u)").unwrap();
        assert!(c.uses_u());
        assert_eq!(c.dimension(), 0);
        assert_eq!(parse_expression("q2 + q1").unwrap().dimension(), 2);
    }

    fn arb_node() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (0.1f64..5.0).prop_map(|v| format!("{v}")),
            Just("q1".to_string()),
            Just("q2".to_string()),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} + {b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} - {b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} * {b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} / (2 + {b}^2)")),
                inner.clone().prop_map(|a| format!("-{a}")),
                inner.clone().prop_map(|a| format!("({a})^2")),
                inner.clone().prop_map(|a| format!("sin({a})")),
                inner.clone().prop_map(|a| format!("cos({a}) * 2")),
                inner.clone().prop_map(|a| format!("tanh({a})")),
                inner.clone().prop_map(|a| format!("exp(-abs({a}))")),
                inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
                inner.clone().prop_map(|a| format!("log(2 + ({a})^2)")),
                (inner.clone(), inner).prop_map(|(a, b)| format!("max({a}, {b}) - min({a}, {b})")),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(src in arb_node(), pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 10)) {
            let e = parse_expression(&src).unwrap();
            let printed = e.to_string();
            let e2 = parse_expression(&printed).unwrap();
            for (x, y) in pts {
                let q = [x, y];
                match (e.eval(&q), e2.eval(&q)) {
                    (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{src} -> {printed}: {a} vs {b}"),
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "{src}: {a:?} vs {b:?}"),
                }
            }
        }
    }
}
