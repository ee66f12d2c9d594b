//! Text grammar for polynomials.
//!
//! ```text
//! poly   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := number | name ['^' integer] | '(' poly ')' ['^' integer]
//! ```
//!
//! Whitespace is insignificant. Example: `x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1`.

use std::collections::HashMap;

use super::Polynomial;
use crate::error::{Error, Result};

/// Ordered variable names; position in the list is the variable index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarNames {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl VarNames {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut lookup = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if !is_identifier(n) {
                return Err(Error::domain(format!("invalid variable name `{n}`")));
            }
            if lookup.insert(n.clone(), i).is_some() {
                return Err(Error::domain(format!("variable `{n}` declared twice")));
            }
        }
        Ok(VarNames { names, lookup })
    }

    /// `x1, …, xn`.
    pub fn indexed(n: usize) -> Self {
        VarNames::new((1..=n).map(|i| format!("x{i}"))).expect("indexed names are valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses `text` as a polynomial over `names`. Error positions are 1-based
/// (line 1, column counted in characters).
pub fn parse_polynomial(text: &str, names: &VarNames) -> Result<Polynomial> {
    parse_polynomial_at(text, names, 1, 1)
}

/// As [`parse_polynomial`], reporting positions relative to a location in
/// a larger document.
pub(crate) fn parse_polynomial_at(
    text: &str,
    names: &VarNames,
    line: usize,
    column: usize,
) -> Result<Polynomial> {
    let tokens = tokenize(text, line, column)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        names,
        end: (line, column + text.chars().count()),
    };
    let p = parser.poly()?;
    if let Some(tok) = parser.peek() {
        return Err(parser.error_at(tok, "expected `+`, `-`, `*` or end of expression"));
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    kind: Kind,
    text: String,
    line: usize,
    column: usize,
}

fn tokenize(text: &str, line: usize, column: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = column + i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Kind::Plus),
            '-' => Some(Kind::Minus),
            '*' => Some(Kind::Star),
            '^' => Some(Kind::Caret),
            '(' => Some(Kind::LParen),
            ')' => Some(Kind::RParen),
            _ => None,
        };
        if let Some(kind) = single {
            out.push(Token {
                kind,
                text: c.to_string(),
                line,
                column: col,
            });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // Optional exponent: e[+-]digits
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line,
                column: col,
                message: format!("malformed number `{s}`"),
            })?;
            out.push(Token {
                kind: Kind::Number(v),
                text: s,
                line,
                column: col,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Token {
                kind: Kind::Ident(s.clone()),
                text: s,
                line,
                column: col,
            });
            continue;
        }
        return Err(Error::Parse {
            line,
            column: col,
            message: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    names: &'a VarNames,
    end: (usize, usize),
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn error_at(&self, tok: &Token, expected: &str) -> Error {
        Error::Parse {
            line: tok.line,
            column: tok.column,
            message: format!("{expected}, found `{}`", tok.text),
        }
    }

    fn error_here(&self, expected: &str) -> Error {
        match self.peek() {
            Some(t) => self.error_at(t, expected),
            None => Error::Parse {
                line: self.end.0,
                column: self.end.1,
                message: format!("{expected}, found end of expression"),
            },
        }
    }

    fn poly(&mut self) -> Result<Polynomial> {
        let n = self.names.len();
        let mut acc = Polynomial::zero(n);
        let mut sign = 1.0;
        match self.peek().map(|t| &t.kind) {
            Some(Kind::Plus) => {
                self.pos += 1;
            }
            Some(Kind::Minus) => {
                self.pos += 1;
                sign = -1.0;
            }
            _ => {}
        }
        loop {
            let t = self.term()?;
            acc = &acc + &t.scale(sign);
            match self.peek().map(|t| &t.kind) {
                Some(Kind::Plus) => sign = 1.0,
                Some(Kind::Minus) => sign = -1.0,
                _ => return Ok(acc),
            }
            self.pos += 1;
        }
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.factor()?;
        while matches!(self.peek().map(|t| &t.kind), Some(Kind::Star)) {
            self.pos += 1;
            let f = self.factor()?;
            acc = &acc * &f;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial> {
        let n = self.names.len();
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_here("expected a number, variable or `(`"));
        };
        match tok.kind {
            Kind::Number(v) => {
                self.pos += 1;
                Ok(Polynomial::constant(n, v))
            }
            Kind::Ident(ref name) => {
                self.pos += 1;
                let Some(i) = self.names.index_of(name) else {
                    return Err(Error::Parse {
                        line: tok.line,
                        column: tok.column,
                        message: format!("undeclared variable `{name}`"),
                    });
                };
                let e = self.exponent()?;
                let mut exps = vec![0; n];
                exps[i] = e;
                Ok(Polynomial::monomial(exps.into(), 1.0))
            }
            Kind::LParen => {
                self.pos += 1;
                let inner = self.poly()?;
                match self.peek().map(|t| &t.kind) {
                    Some(Kind::RParen) => self.pos += 1,
                    _ => return Err(self.error_here("expected `)`")),
                }
                let e = self.exponent()?;
                Ok(inner.pow(e))
            }
            _ => Err(self.error_at(&tok, "expected a number, variable or `(`")),
        }
    }

    fn exponent(&mut self) -> Result<u32> {
        if !matches!(self.peek().map(|t| &t.kind), Some(Kind::Caret)) {
            return Ok(1);
        }
        self.pos += 1;
        match self.next() {
            Some(Token {
                kind: Kind::Number(v),
                ref text,
                ..
            }) if text.chars().all(|c| c.is_ascii_digit()) && v <= u32::MAX as f64 => Ok(v as u32),
            Some(t) => Err(self.error_at(&t, "expected a nonnegative integer exponent")),
            None => {
                self.pos -= 1;
                Err(self.error_here("expected a nonnegative integer exponent"))
            }
        }
    }
}
