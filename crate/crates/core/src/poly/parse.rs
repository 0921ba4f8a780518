//! Recursive-descent reader for polynomial strings.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := ['-'] factor ('*' factor)*
//! factor := base ('^' nat)?
//! base   := rational | identifier | '(' expr ')'
//! rational := int ('/' nat)? | decimal
//! ```
//!
//! A leading `-` on a term is accepted so that inputs like `-x2` parse.
//! Decimals are converted exactly (`0.5` becomes `1/2`).

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

use super::{MultiIndex, Poly, PolyError, Rational, DEFAULT_DEGREE_CAP};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected {0}")]
    UnexpectedToken(String),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unknown identifier {0:?}")]
    UnknownIdentifier(String),
    #[error("exponent must be a non-negative integer")]
    NonIntegerExponent,
    #[error("denominator must be a positive integer")]
    BadDenominator,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Parse failure with the 0-based character offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at column {pos}: {kind}")]
pub struct ParseError {
    pub pos: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Decimal(Rational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    Slash,
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Int(i) => format!("number {i}"),
            Tok::Decimal(d) => format!("number {d}"),
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Caret => "'^'".into(),
            Tok::Slash => "'/'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let tok = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '^' => Tok::Caret,
            '/' => Tok::Slash,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            d if d.is_ascii_digit() => {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let int_part: String = chars[start..i].iter().collect();
                if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                    i += 1;
                    let frac_start = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    let frac: String = chars[frac_start..i].iter().collect();
                    let digits: BigInt = format!("{int_part}{frac}").parse().expect("digits");
                    let scale = num_traits::pow(BigInt::from(10), frac.len());
                    out.push((start, Tok::Decimal(Rational::new(digits, scale))));
                } else {
                    out.push((start, Tok::Int(int_part.parse().expect("digits"))));
                }
                continue;
            }
            a if a.is_ascii_alphabetic() || a == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(chars[start..i].iter().collect())));
                continue;
            }
            other => {
                return Err(ParseError {
                    pos: start,
                    kind: ParseErrorKind::UnexpectedChar(other),
                })
            }
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    vars: &'a [&'a str],
    cap: u32,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            pos: self.offset(),
            kind,
        }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Some(t) => self.err(ParseErrorKind::UnexpectedToken(t.describe())),
            None => self.err(ParseErrorKind::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<Poly, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc = acc + self.term()?;
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc = acc - self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Poly, ParseError> {
        let negate = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut acc = self.factor()?;
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            let at = self.offset();
            let rhs = self.factor()?;
            acc = acc.checked_mul(&rhs, self.cap).map_err(|e| ParseError {
                pos: at,
                kind: e.into(),
            })?;
        }
        Ok(if negate { -acc } else { acc })
    }

    fn factor(&mut self) -> Result<Poly, ParseError> {
        let base = self.base()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        let at = self.offset();
        let exp = match self.peek() {
            Some(Tok::Int(i)) => {
                let e: u32 = i
                    .try_into()
                    .map_err(|_| self.err(ParseErrorKind::NonIntegerExponent))?;
                self.pos += 1;
                e
            }
            Some(Tok::Decimal(_)) | Some(Tok::Minus) | Some(Tok::Ident(_)) | Some(Tok::LParen) => {
                return Err(self.err(ParseErrorKind::NonIntegerExponent))
            }
            _ => return Err(self.unexpected()),
        };
        if self.peek() == Some(&Tok::Caret) {
            return Err(self.unexpected());
        }
        base.checked_pow(exp, self.cap).map_err(|e| ParseError {
            pos: at,
            kind: e.into(),
        })
    }

    fn base(&mut self) -> Result<Poly, ParseError> {
        let nvars = self.vars.len();
        match self.peek().cloned() {
            Some(Tok::Int(num)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Slash) {
                    self.pos += 1;
                    match self.peek().cloned() {
                        Some(Tok::Int(den)) if !den.is_zero() => {
                            self.pos += 1;
                            Ok(Poly::constant(nvars, Rational::new(num, den)))
                        }
                        _ => Err(self.err(ParseErrorKind::BadDenominator)),
                    }
                } else {
                    Ok(Poly::constant(nvars, Rational::from_integer(num)))
                }
            }
            Some(Tok::Decimal(d)) => {
                self.pos += 1;
                Ok(Poly::constant(nvars, d))
            }
            Some(Tok::Ident(name)) => match self.vars.iter().position(|v| *v == name) {
                Some(i) => {
                    self.pos += 1;
                    Ok(Poly::monomial(MultiIndex::unit(nvars, i), Rational::one()))
                }
                None => Err(self.err(ParseErrorKind::UnknownIdentifier(name))),
            },
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.unexpected());
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(self.unexpected()),
        }
    }
}

/// Parses `text` as a polynomial in the ordered `variables`, with the default
/// degree cap.
pub fn parse_poly(text: &str, variables: &[&str]) -> Result<Poly, ParseError> {
    parse_poly_with_cap(text, variables, DEFAULT_DEGREE_CAP)
}

pub fn parse_poly_with_cap(text: &str, variables: &[&str], cap: u32) -> Result<Poly, ParseError> {
    let toks = lex(text)?;
    let end = text.chars().count();
    let mut parser = Parser {
        toks,
        pos: 0,
        end,
        vars: variables,
        cap,
    };
    let poly = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return Err(parser.unexpected());
    }
    Ok(poly)
}
