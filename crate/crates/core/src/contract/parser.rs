//! Recursive-descent parser for contract expressions.
//!
//! ```text
//! expr       := and_expr ( "||" and_expr )*
//! and_expr   := unary ( "&&" unary )*
//! unary      := "!" unary | primary
//! primary    := comparison | "(" expr ")"
//! comparison := FIELD OP NUMBER
//! FIELD      := mean | std | min | max | range | count
//! OP         := >= | <= | > | < | ==
//! ```
//!
//! Error offsets are 1-based byte positions; end of input reports `len + 1`.

use std::fmt;

use thiserror::Error;

use super::{CmpOp, ContractExpr, StatField};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at offset {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Op(CmpOp),
    And,
    Or,
    Not,
    LParen,
    RParen,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier {s:?}"),
            Tok::Number(n) => write!(f, "number {n}"),
            Tok::Op(op) => write!(f, "operator {op}"),
            Tok::And => f.write_str("\"&&\""),
            Tok::Or => f.write_str("\"||\""),
            Tok::Not => f.write_str("\"!\""),
            Tok::LParen => f.write_str("\"(\""),
            Tok::RParen => f.write_str("\")\""),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset: usize, message: String| ParseError {
        offset: offset + 1,
        message,
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let two = |s: &[u8]| bytes[i..].starts_with(s);
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            _ if two(b"&&") => {
                i += 2;
                Tok::And
            }
            _ if two(b"||") => {
                i += 2;
                Tok::Or
            }
            _ if two(b">=") => {
                i += 2;
                Tok::Op(CmpOp::Ge)
            }
            _ if two(b"<=") => {
                i += 2;
                Tok::Op(CmpOp::Le)
            }
            _ if two(b"==") => {
                i += 2;
                Tok::Op(CmpOp::Eq)
            }
            b'>' => {
                i += 1;
                Tok::Op(CmpOp::Gt)
            }
            b'<' => {
                i += 1;
                Tok::Op(CmpOp::Lt)
            }
            b'!' => {
                i += 1;
                Tok::Not
            }
            b'0'..=b'9' | b'.' | b'-' | b'+' => {
                i += 1;
                while i < bytes.len() {
                    let d = bytes[i];
                    let exp_sign = (d == b'-' || d == b'+') && matches!(bytes[i - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let text = &src[start..i];
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => Tok::Number(v),
                    _ => return Err(err(start, format!("invalid number {text:?}"))),
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Tok::Ident(src[start..i].to_string())
            }
            _ => {
                let ch = src[start..].chars().next().expect("in bounds");
                return Err(err(start, format!("unexpected character {ch:?}")));
            }
        };
        out.push((start, tok));
    }
    out.push((src.len(), Tok::Eof));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0 + 1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expected(&self, what: &str) -> ParseError {
        let found = self.peek();
        let message = if *found == Tok::Eof {
            format!("expected {what}")
        } else {
            format!("expected {what}, found {found}")
        };
        ParseError {
            offset: self.offset(),
            message,
        }
    }

    fn expr(&mut self) -> Result<ContractExpr, ParseError> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = ContractExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<ContractExpr, ParseError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.unary()?;
            lhs = ContractExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<ContractExpr, ParseError> {
        if *self.peek() == Tok::Not {
            self.bump();
            return Ok(ContractExpr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<ContractExpr, ParseError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.expected("\")\""));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                let field = StatField::from_name(&name).ok_or_else(|| ParseError {
                    offset: self.offset(),
                    message: format!(
                        "unknown field {name:?} (expected one of mean, std, min, max, range, count)"
                    ),
                })?;
                self.bump();
                let op = match self.peek() {
                    Tok::Op(op) => *op,
                    _ => return Err(self.expected("comparison operator")),
                };
                self.bump();
                let value = match self.peek() {
                    Tok::Number(v) => *v,
                    _ => return Err(self.expected("number")),
                };
                self.bump();
                Ok(ContractExpr::Compare { field, op, value })
            }
            _ => Err(self.expected("field name, \"!\" or \"(\"")),
        }
    }
}

pub fn parse_contract(text: &str) -> Result<ContractExpr, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let expr = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.expected("\"&&\", \"||\" or end of input"));
    }
    Ok(expr)
}
