//! Problem-file format.
//!
//! ```text
//! # comment
//! vars: x1, x2
//! minimize: x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1
//! subject_to:
//!   1 - x1^2 - x2^2 >= 0
//!   x1 - x2 == 0
//! ball_radius: 4
//! ```
//!
//! Keys may appear in any order; `subject_to:` owns every following line
//! that is not another key. A constraint is `lhs OP rhs` with `OP` one of
//! `>=`, `<=`, `==`; it is stored as `lhs − rhs` (or `rhs − lhs` for `<=`).
//! `ball_radius: R` appends `R − ‖x‖² ≥ 0`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::polynomial::parse_polynomial_at;
use crate::polynomial::{Polynomial, VarNames};
use crate::relaxation::Problem;

const KEYS: [&str; 4] = ["vars", "minimize", "subject_to", "ball_radius"];

/// A parsed problem file; `ball_radius` is kept apart from the constraints
/// so printing reproduces the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub problem: Problem,
    pub ball_radius: Option<f64>,
}

impl ProblemFile {
    /// The problem with the ball constraint appended, if any.
    pub fn to_problem(&self) -> Result<Problem> {
        match self.ball_radius {
            Some(r) => self.problem.with_ball(r),
            None => Ok(self.problem.clone()),
        }
    }
}

/// A fragment of the file with its 1-based position.
#[derive(Debug, Clone)]
struct Span<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Drops a trailing `#` comment.
fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(a, _)| a)
}

/// Advances `s` past leading whitespace, moving `column` along.
fn trim_start(s: Span<'_>) -> Span<'_> {
    let trimmed = s.text.trim_start();
    let skipped = s.text[..s.text.len() - trimmed.len()].chars().count();
    Span {
        text: trimmed.trim_end(),
        line: s.line,
        column: s.column + skipped,
    }
}

/// Splits `key: rest` when `key` is one of [`KEYS`].
fn split_key(s: &Span<'_>) -> Option<(&'static str, usize)> {
    let (head, _) = s.text.split_once(':')?;
    let key = KEYS.iter().find(|k| **k == head.trim_end())?;
    Some((key, head.len() + 1))
}

fn after<'a>(s: &Span<'a>, bytes: usize) -> Span<'a> {
    trim_start(Span {
        text: &s.text[bytes..],
        line: s.line,
        column: s.column + s.text[..bytes].chars().count(),
    })
}

#[derive(Default)]
struct Raw<'a> {
    vars: Option<Span<'a>>,
    minimize: Option<Span<'a>>,
    constraints: Vec<Span<'a>>,
    ball: Option<Span<'a>>,
}

/// Parses a problem file. Errors carry the line and column of the
/// offending token.
pub fn parse_problem_file(text: &str) -> Result<ProblemFile> {
    let mut raw = Raw::default();
    let mut in_constraints = false;
    let mut last_line = 0;
    for (i, line) in text.lines().enumerate() {
        last_line = i + 1;
        let span = trim_start(Span {
            text: strip_comment(line),
            line: i + 1,
            column: 1,
        });
        if span.text.is_empty() {
            continue;
        }
        let Some((key, offset)) = split_key(&span) else {
            if in_constraints {
                raw.constraints.push(span);
                continue;
            }
            return Err(parse_error(
                span.line,
                span.column,
                "expected one of `vars:`, `minimize:`, `subject_to:`, `ball_radius:`",
            ));
        };
        let rest = after(&span, offset);
        in_constraints = key == "subject_to";
        let slot = match key {
            "vars" => &mut raw.vars,
            "minimize" => &mut raw.minimize,
            "ball_radius" => &mut raw.ball,
            _ => {
                if !rest.text.is_empty() {
                    raw.constraints.push(rest);
                }
                continue;
            }
        };
        if slot.is_some() {
            return Err(parse_error(
                span.line,
                span.column,
                format!("`{key}:` given twice"),
            ));
        }
        if rest.text.is_empty() {
            return Err(parse_error(
                rest.line,
                rest.column,
                format!("expected a value after `{key}:`"),
            ));
        }
        *slot = Some(rest);
    }

    let eof = (last_line + 1, 1);
    let vars = raw
        .vars
        .ok_or_else(|| parse_error(eof.0, eof.1, "missing `vars:` line"))?;
    let names = parse_vars(&vars)?;
    let minimize = raw
        .minimize
        .ok_or_else(|| parse_error(eof.0, eof.1, "missing `minimize:` line"))?;
    let objective = parse_polynomial_at(minimize.text, &names, minimize.line, minimize.column)?;
    let mut inequalities = Vec::new();
    let mut equalities = Vec::new();
    for c in &raw.constraints {
        let (rel, poly) = parse_constraint(c, &names)?;
        match rel {
            Relation::Ge => inequalities.push(poly),
            Relation::Eq => equalities.push(poly),
        }
    }
    let ball_radius = raw.ball.as_ref().map(parse_radius).transpose()?;
    let problem =
        Problem::new(names, objective, inequalities, equalities).map_err(|e| match e {
            Error::Parse { .. } => e,
            other => parse_error(minimize.line, minimize.column, other.to_string()),
        })?;
    Ok(ProblemFile {
        problem,
        ball_radius,
    })
}

/// Parses a problem file and applies its ball constraint.
pub fn parse_problem(text: &str) -> Result<Problem> {
    parse_problem_file(text)?.to_problem()
}

fn parse_vars(s: &Span<'_>) -> Result<VarNames> {
    let mut names: Vec<String> = Vec::new();
    let mut col = s.column;
    for piece in s.text.split(',') {
        let mut cursor = 0;
        for word in piece.split_whitespace() {
            let start = cursor + piece[cursor..].find(word).unwrap_or(0);
            cursor = start + word.len();
            let at = col + piece[..start].chars().count();
            if names.iter().any(|n| n == word) {
                return Err(parse_error(
                    s.line,
                    at,
                    format!("variable `{word}` declared twice"),
                ));
            }
            if VarNames::new([word]).is_err() {
                return Err(parse_error(
                    s.line,
                    at,
                    format!("invalid variable name `{word}`"),
                ));
            }
            names.push(word.to_string());
        }
        col += piece.chars().count() + 1;
    }
    if names.is_empty() {
        return Err(parse_error(
            s.line,
            s.column,
            "expected at least one variable",
        ));
    }
    VarNames::new(names)
}

enum Relation {
    Ge,
    Eq,
}

fn parse_constraint(s: &Span<'_>, names: &VarNames) -> Result<(Relation, Polynomial)> {
    let ops = [">=", "<=", "=="];
    let mut found: Vec<(usize, &str)> = ops
        .iter()
        .flat_map(|op| s.text.match_indices(op).map(|(i, _)| (i, *op)))
        .collect();
    found.sort_unstable();
    let (idx, op) = match found.as_slice() {
        [one] => *one,
        [] => {
            return Err(parse_error(
                s.line,
                s.column + s.text.chars().count(),
                "expected `>=`, `<=` or `==`",
            ))
        }
        [_, second, ..] => {
            let at = s.column + s.text[..second.0].chars().count();
            return Err(parse_error(
                s.line,
                at,
                "more than one relation in a constraint",
            ));
        }
    };
    let lhs_text = &s.text[..idx];
    let lhs_trim = lhs_text.trim();
    if lhs_trim.is_empty() {
        return Err(parse_error(
            s.line,
            s.column,
            "expected a polynomial before the relation",
        ));
    }
    let lhs = parse_polynomial_at(lhs_trim, names, s.line, s.column)?;
    let rhs_span = after(s, idx + op.len());
    if rhs_span.text.is_empty() {
        return Err(parse_error(
            rhs_span.line,
            rhs_span.column,
            "expected a polynomial after the relation",
        ));
    }
    let rhs = parse_polynomial_at(rhs_span.text, names, rhs_span.line, rhs_span.column)?;
    Ok(match op {
        ">=" => (Relation::Ge, &lhs - &rhs),
        "<=" => (Relation::Ge, &rhs - &lhs),
        _ => (Relation::Eq, &lhs - &rhs),
    })
}

fn parse_radius(s: &Span<'_>) -> Result<f64> {
    let r: f64 = s
        .text
        .parse()
        .map_err(|_| parse_error(s.line, s.column, "expected a number"))?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(parse_error(
            s.line,
            s.column,
            "ball radius must be positive",
        ));
    }
    Ok(r)
}

/// Prints `file` in the format read by [`parse_problem_file`].
pub fn format_problem_file(file: &ProblemFile) -> String {
    let p = &file.problem;
    let names = &p.names;
    let mut out = String::new();
    let _ = writeln!(out, "vars: {}", names.names().join(", "));
    let _ = writeln!(out, "minimize: {}", p.objective.display_with(names));
    if !p.inequalities.is_empty() || !p.equalities.is_empty() {
        out.push_str("subject_to:\n");
        for g in &p.inequalities {
            let _ = writeln!(out, "  {} >= 0", g.display_with(names));
        }
        for h in &p.equalities {
            let _ = writeln!(out, "  {} == 0", h.display_with(names));
        }
    }
    if let Some(r) = file.ball_radius {
        let _ = writeln!(out, "ball_radius: {r:?}");
    }
    out
}
