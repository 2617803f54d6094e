//! Recursive-descent parser for the QoI expression language.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' INTEGER)?
//! base   := NUMBER | IDENT | '(' expr ')' | 'sqrt' '(' expr ')'
//! ```
//!
//! A chain of `+`/`-` becomes a single weighted [`QoiExpr::Sum`] with
//! weights `±1`; a constant factor becomes a [`QoiExpr::Scale`]; subtrees
//! without variables are folded to constants.

use thiserror::Error;

use crate::error::Error;

use super::QoiExpr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("exponent `{text}` at byte {offset} is not a positive integer")]
    InvalidExponent { text: String, offset: usize },
    #[error("constant subexpression ending at byte {offset} is undefined: {message}")]
    ConstantDomain { offset: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Num(f64, &'a str),
    Ident(&'a str),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn describe(tok: &Tok<'_>) -> String {
    match tok {
        Tok::Num(_, s) => format!("number `{s}`"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of input".into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok<'_>, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((tok, start));
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
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
            let s = &text[start..i];
            let value: f64 = s.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{s}`"),
            })?;
            out.push((Tok::Num(value, s), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(&text[start..i]), start));
        } else {
            let ch = text[start..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                offset: start,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'a, 'n> {
    toks: Vec<(Tok<'a>, usize)>,
    pos: usize,
    names: &'n [String],
}

impl<'a> Parser<'a, '_> {
    fn peek(&self) -> &Tok<'a> {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok<'a>, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: format!("expected {wanted}, found {}", describe(self.peek())),
        })
    }

    fn expect(&mut self, tok: Tok<'static>, wanted: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.unexpected(wanted)
        }
    }

    fn folded(&self, r: crate::error::Result<QoiExpr>) -> Result<QoiExpr, ParseError> {
        r.map_err(|e| ParseError::ConstantDomain {
            offset: self.offset(),
            message: match e {
                Error::Domain(m) => m,
                other => other.to_string(),
            },
        })
    }

    fn expr(&mut self) -> Result<QoiExpr, ParseError> {
        let first = self.term()?;
        let mut terms = vec![(1.0, first)];
        loop {
            let weight = match self.peek() {
                Tok::Plus => 1.0,
                Tok::Minus => -1.0,
                _ => break,
            };
            self.bump();
            terms.push((weight, self.term()?));
        }
        Ok(if terms.len() == 1 {
            terms.pop().map(|(_, t)| t).unwrap_or(QoiExpr::Const(0.0))
        } else {
            QoiExpr::sum(terms)
        })
    }

    fn term(&mut self) -> Result<QoiExpr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.factor()?;
                    acc = QoiExpr::product(acc, rhs);
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.factor()?;
                    acc = self.folded(QoiExpr::quotient(acc, rhs))?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<QoiExpr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.factor()?;
            return Ok(QoiExpr::scale(-1.0, inner));
        }
        let base = self.base()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let offset = self.offset();
        let invalid = |text: &str| ParseError::InvalidExponent {
            text: text.to_owned(),
            offset,
        };
        match self.bump().0 {
            Tok::Num(_, text) => {
                if !text.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(invalid(text));
                }
                match text.parse::<u32>() {
                    Ok(n) if n >= 1 => Ok(QoiExpr::power(base, n)),
                    _ => Err(invalid(text)),
                }
            }
            Tok::Minus => Err(invalid("-")),
            other => Err(ParseError::Syntax {
                offset,
                message: format!("expected an integer exponent, found {}", describe(&other)),
            }),
        }
    }

    fn base(&mut self) -> Result<QoiExpr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v, _) => {
                self.bump();
                Ok(QoiExpr::Const(v))
            }
            Tok::Ident("sqrt") if self.toks[self.pos + 1].0 == Tok::LParen => {
                self.bump();
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                self.folded(QoiExpr::sqrt(inner))
            }
            Tok::Ident(name) => {
                self.bump();
                self.names
                    .iter()
                    .position(|n| n == name)
                    .map(QoiExpr::Var)
                    .ok_or_else(|| ParseError::UnknownIdentifier {
                        name: name.to_owned(),
                        offset,
                    })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            _ => self.unexpected("a number, identifier, `sqrt(` or `(`"),
        }
    }
}

/// Parses `text` into an expression over `variable_names`; identifier `k`
/// in the list becomes `Var(k)`.
pub fn parse_qoi(text: &str, variable_names: &[String]) -> Result<QoiExpr, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        names: variable_names,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.unexpected("an operator or end of input");
    }
    Ok(e)
}
