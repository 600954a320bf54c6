//! A small expression language for analytic boundary fields.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | '+' unary | atom
//! atom   := number | 'pi' | coord | func '(' expr ')' | '(' expr ')'
//! coord  := 'y' | 'y1' | 'y2' | 'y3'
//! func   := 'cos' | 'sin' | 'exp'
//! ```
//!
//! `×`, `·`, `÷` and `−` are accepted as aliases of `*`, `*`, `/` and `-`.

use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unexpected character '{ch}' at offset {pos}")]
    UnexpectedChar { pos: usize, ch: char },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token '{found}' at offset {pos}")]
    UnexpectedToken { pos: usize, found: String },
    #[error("unknown identifier '{0}'")]
    UnknownIdent(String),
    #[error("malformed number '{0}'")]
    BadNumber(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Cos,
    Sin,
    Exp,
}

impl Func {
    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Cos => x.cos(),
            Func::Sin => x.sin(),
            Func::Exp => x.exp(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Exp => "exp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index.
    Coord(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(src)?;
        let mut parser = Parser { tokens, pos: 0 };
        let expr = parser.expr()?;
        match parser.tokens.get(parser.pos) {
            None => Ok(expr),
            Some((pos, tok)) => Err(ExprError::UnexpectedToken {
                pos: *pos,
                found: tok.to_string(),
            }),
        }
    }

    /// Evaluates at a boundary point. Coordinates beyond `y.len()` read as 0.
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Coord(i) => y.get(*i).copied().unwrap_or(0.0),
            Expr::Neg(e) => -e.eval(y),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(y), b.eval(y));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Call(f, e) => f.apply(e.eval(y)),
        }
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Coord(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_coord(),
            Expr::Bin(_, a, b) => match (a.max_coord(), b.max_coord()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Coord(i) => write!(f, "y{}", i + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "{v}"),
            Token::Ident(s) => write!(f, "{s}"),
            Token::Op(c) => write!(f, "{c}"),
            Token::LParen => write!(f, "("),
            Token::RParen => write!(f, ")"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        match ch {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                // Exponent part, e.g. 1e-3.
                if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].1.is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().map(|c| c.1).collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| ExprError::BadNumber(text.clone()))?;
                out.push((pos, Token::Num(value)));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].1.is_ascii_alphanumeric() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().map(|c| c.1).collect();
                out.push((pos, Token::Ident(text)));
            }
            '+' | '-' | '*' | '/' => {
                out.push((pos, Token::Op(ch)));
                i += 1;
            }
            '−' => {
                out.push((pos, Token::Op('-')));
                i += 1;
            }
            '×' | '·' => {
                out.push((pos, Token::Op('*')));
                i += 1;
            }
            '÷' => {
                out.push((pos, Token::Op('/')));
                i += 1;
            }
            '(' => {
                out.push((pos, Token::LParen));
                i += 1;
            }
            ')' => {
                out.push((pos, Token::RParen));
                i += 1;
            }
            _ => return Err(ExprError::UnexpectedChar { pos, ch }),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn next(&mut self) -> Result<(usize, Token), ExprError> {
        let tok = self.tokens.get(self.pos).cloned().ok_or(ExprError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(tok)
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let (pos, tok) = self.next()?;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Token::Ident(name) => {
                let func = match name.as_str() {
                    "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                    "y" | "y1" => return Ok(Expr::Coord(0)),
                    "y2" => return Ok(Expr::Coord(1)),
                    "y3" => return Ok(Expr::Coord(2)),
                    "cos" => Func::Cos,
                    "sin" => Func::Sin,
                    "exp" => Func::Exp,
                    _ => return Err(ExprError::UnknownIdent(name)),
                };
                match self.next()? {
                    (_, Token::LParen) => {}
                    (pos, other) => {
                        return Err(ExprError::UnexpectedToken {
                            pos,
                            found: other.to_string(),
                        })
                    }
                }
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            other => Err(ExprError::UnexpectedToken {
                pos,
                found: other.to_string(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.next()? {
            (_, Token::RParen) => Ok(()),
            (pos, other) => Err(ExprError::UnexpectedToken {
                pos,
                found: other.to_string(),
            }),
        }
    }
}
