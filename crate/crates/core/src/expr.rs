//! Scalar coefficient expressions `a(t)`.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-'? base ('^' unsigned-integer)?
//! base   := number | 't' | '(' expr ')' | ('sin' | 'cos' | 'exp') '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-t^2` is `-(t^2)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, ParseError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, t: f64) -> Result<f64> {
        Ok(match self {
            Node::Num(v) => *v,
            Node::Var => t,
            Node::Neg(a) => -a.eval(t)?,
            Node::Add(a, b) => a.eval(t)? + b.eval(t)?,
            Node::Sub(a, b) => a.eval(t)? - b.eval(t)?,
            Node::Mul(a, b) => a.eval(t)? * b.eval(t)?,
            Node::Div(a, b) => {
                let num = a.eval(t)?;
                let den = b.eval(t)?;
                if den == 0.0 {
                    return Err(Error::Eval {
                        t,
                        message: "division by zero".into(),
                    });
                }
                num / den
            }
            Node::Pow(a, k) => a.eval(t)?.powi(*k),
            Node::Call(f, a) => {
                let x = a.eval(t)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                }
            }
        })
    }
}

/// A parsed coefficient `t ↦ a(t)`. Evaluation is a pure function of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientExpr {
    source: String,
    root: Node,
}

impl CoefficientExpr {
    pub fn source_text(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.root.eval(t)
    }
}

impl fmt::Display for CoefficientExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for CoefficientExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> std::result::Result<Self, ParseError> {
        parse_coefficient(s)
    }
}

pub fn parse_coefficient(text: &str) -> std::result::Result<CoefficientExpr, ParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.chars().count(),
    };
    let root = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(ParseError {
            position: tok.pos,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    Ok(CoefficientExpr {
        source: text.to_string(),
        root,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Int(u32),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(v) => format!("number {v}"),
            TokKind::Int(v) => format!("number {v}"),
            TokKind::Ident(s) => format!("identifier '{s}'"),
            TokKind::Op(c) => format!("'{c}'"),
            TokKind::LParen => "'('".into(),
            TokKind::RParen => "')'".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    pos: usize,
}

fn tokenize(text: &str) -> std::result::Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut integral = true;
            if i < chars.len() && chars[i] == '.' {
                integral = false;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lexeme: String = chars[start..i].iter().collect();
            let value: f64 = lexeme.parse().map_err(|_| ParseError {
                position: start,
                message: format!("malformed number '{lexeme}'"),
            })?;
            let kind = match (integral, lexeme.parse::<u32>()) {
                (true, Ok(k)) => TokKind::Int(k),
                _ => TokKind::Num(value),
            };
            out.push(Token { kind, pos: start });
            continue;
        }
        if c.is_ascii_alphabetic() {
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let ident: String = chars[start..i].iter().collect();
            match ident.as_str() {
                "t" | "sin" | "cos" | "exp" => out.push(Token {
                    kind: TokKind::Ident(ident),
                    pos: start,
                }),
                _ => {
                    return Err(ParseError {
                        position: start,
                        message: format!("unknown identifier '{ident}'"),
                    })
                }
            }
            continue;
        }
        let kind = match c {
            '+' | '-' | '*' | '/' | '^' => TokKind::Op(c),
            '(' => TokKind::LParen,
            ')' => TokKind::RParen,
            _ => {
                return Err(ParseError {
                    position: start,
                    message: format!("unexpected character '{c}'"),
                })
            }
        };
        out.push(Token { kind, pos: start });
        i += 1;
    }
    Ok(out)
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

    fn next_is_op(&self, op: char) -> bool {
        matches!(self.peek(), Some(Token { kind: TokKind::Op(c), .. }) if *c == op)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn fail<T>(&self, message: impl Into<String>) -> std::result::Result<T, ParseError> {
        Err(ParseError {
            position: self.here(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> std::result::Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.next_is_op('+') {
                self.pos += 1;
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.next_is_op('-') {
                self.pos += 1;
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> std::result::Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            if self.next_is_op('*') {
                self.pos += 1;
                lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.next_is_op('/') {
                self.pos += 1;
                lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> std::result::Result<Node, ParseError> {
        let negate = if self.next_is_op('-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut node = self.base()?;
        if self.next_is_op('^') {
            self.pos += 1;
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokKind::Int(k)) if k <= i32::MAX as u32 => {
                    self.pos += 1;
                    node = Node::Pow(Box::new(node), k as i32);
                }
                _ => return self.fail("expected unsigned integer exponent after '^'"),
            }
        }
        Ok(if negate {
            Node::Neg(Box::new(node))
        } else {
            node
        })
    }

    fn base(&mut self) -> std::result::Result<Node, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.fail("unexpected end of input");
        };
        match tok.kind {
            TokKind::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            TokKind::Int(k) => {
                self.pos += 1;
                Ok(Node::Num(f64::from(k)))
            }
            TokKind::Ident(name) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "t" => return Ok(Node::Var),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    _ => Func::Exp,
                };
                self.expect_lparen()?;
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(Node::Call(func, Box::new(arg)))
            }
            TokKind::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            other => self.fail(format!("unexpected {}", other.describe())),
        }
    }

    fn expect_lparen(&mut self) -> std::result::Result<(), ParseError> {
        match self.peek() {
            Some(Token {
                kind: TokKind::LParen,
                ..
            }) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.fail("expected '(' after function name"),
        }
    }

    fn expect_rparen(&mut self) -> std::result::Result<(), ParseError> {
        match self.peek() {
            Some(Token {
                kind: TokKind::RParen,
                ..
            }) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.fail("expected ')'"),
        }
    }
}
