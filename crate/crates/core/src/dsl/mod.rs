//! Plain-text problem files.
//!
//! ```text
//! occurelax-problem v1
//! [domain]
//! n = 1
//! omega = [0, 1]
//! [spaces]
//! m = 1
//! y = [-0.5, 1.5]
//! z = [-1, 3]
//! p = inf
//! [objective]
//! L = z11^2
//! [boundary]
//! A = y1 - x1
//! ```
//!
//! Sections are `[domain]`, `[spaces]`, `[objective]`, `[constraints]`,
//! `[boundary]` and `[control]`. Keys `A`, `B`, `C` and `weak` may repeat.
//! `#` starts a comment.

mod lexer;
mod parser;
mod validate;

use std::fmt;
use std::fmt::Write as _;

use crate::expr::{Block, Expr};
use lexer::tokenize;
use parser::{Parser, Scope};

pub use validate::validate_problem;

pub const VERSION_HEADER: &str = "occurelax-problem v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Span {
    pub fn new(line: usize, col_start: usize, col_end: usize) -> Self {
        Span { line, col_start, col_end }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    Syntax,
    Semantic,
    Hypothesis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub(crate) fn error(span: Span, message: String) -> Self {
        Diagnostic { severity: Severity::Error, kind: DiagnosticKind::Syntax, span, message }
    }
    pub(crate) fn semantic(span: Span, message: String) -> Self {
        Diagnostic { severity: Severity::Error, kind: DiagnosticKind::Semantic, span, message }
    }
    pub(crate) fn warning(span: Span, message: String) -> Self {
        Diagnostic { severity: Severity::Warning, kind: DiagnosticKind::Hypothesis, span, message }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}: {}", self.span.line, self.span.col_start, self.message)
    }
}

/// Closed axis-aligned box, one `(lo, hi)` pair per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain(pub Vec<(f64, f64)>);

impl BoxDomain {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
    pub fn volume(&self) -> f64 {
        self.0.iter().map(|(a, b)| b - a).product()
    }
    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.0.iter().zip(p).all(|(&(a, b), &v)| v >= a - tol && v <= b + tol)
    }
    pub fn diameter(&self) -> f64 {
        self.0.iter().map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
    }
}

impl fmt::Display for BoxDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (a, b)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" x ")?;
            }
            write!(f, "[{a}, {b}]")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exponent {
    Finite(u32),
    Infinity,
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    CalculusOfVariations,
    OptimalControl,
}

/// Places two `y` components on `count` equally spaced points of a circle
/// instead of a tensor grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CirclePlacement {
    pub first: usize,
    pub second: usize,
    pub count: usize,
    pub radius: f64,
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestSpace {
    /// Test functions vanishing on the boundary of Ω.
    Compact,
    Free,
}

/// A family `∫ ∇φ(x)ᵀ V(x, y, z) dx = 0` for all test functions `φ` of the
/// given space. `coefficient` holds the `n` components of `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakFamily {
    pub coefficient: Vec<Expr>,
    pub test_space: TestSpace,
}

/// Where each expression came from in the source file. Never part of
/// problem equality.
#[derive(Clone, Debug, Default)]
pub struct SourceMap {
    pub lagrangian: Span,
    pub boundary_lagrangian: Span,
    pub eq: Vec<Span>,
    pub ineq: Vec<Span>,
    pub integral: Vec<Span>,
    pub boundary_eq: Vec<Span>,
    pub boundary_ineq: Vec<Span>,
    pub boundary_integral: Vec<Span>,
    pub weak: Vec<Span>,
    pub spaces: Span,
}

impl PartialEq for SourceMap {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub n: usize,
    pub m: usize,
    /// Control dimension, 0 for calculus-of-variations problems.
    pub d: usize,
    pub omega: BoxDomain,
    pub y_box: BoxDomain,
    /// Row-major `m × n` intervals for `z11, z12, …`.
    pub z_box: BoxDomain,
    pub u_box: Option<BoxDomain>,
    pub u_boundary_box: Option<BoxDomain>,
    pub p: Exponent,
    pub y_circle: Option<CirclePlacement>,
    pub lagrangian: Expr,
    pub boundary_lagrangian: Expr,
    pub eq: Vec<Expr>,
    pub ineq: Vec<Expr>,
    pub integral: Vec<Expr>,
    pub boundary_eq: Vec<Expr>,
    pub boundary_ineq: Vec<Expr>,
    pub boundary_integral: Vec<Expr>,
    pub weak: Vec<WeakFamily>,
    pub source: SourceMap,
}

impl Problem {
    pub fn kind(&self) -> ProblemKind {
        if self.d > 0 {
            ProblemKind::OptimalControl
        } else {
            ProblemKind::CalculusOfVariations
        }
    }

    pub fn d_boundary(&self) -> usize {
        self.u_boundary_box.as_ref().map_or(0, |b| b.dim())
    }

    /// Bulk pointwise constraints that involve neither `z` nor `u`; they
    /// describe the set `Y` and therefore apply on the boundary as well.
    pub fn y_set_constraints(&self) -> (Vec<&Expr>, Vec<&Expr>) {
        let free = |e: &&Expr| !e.uses(Block::Z) && !e.uses(Block::U);
        (self.eq.iter().filter(free).collect(), self.ineq.iter().filter(free).collect())
    }

    /// Canonical text form; parsing it yields an identical problem.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{VERSION_HEADER}");
        let _ = writeln!(s, "[domain]");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "omega = {}", self.omega);
        let _ = writeln!(s, "[spaces]");
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "y = {}", self.y_box);
        let _ = writeln!(s, "z = {}", self.z_box);
        let _ = writeln!(s, "p = {}", self.p);
        if let Some(c) = &self.y_circle {
            let _ = writeln!(
                s,
                "y_circle = {}, {}, {}, {}, {}",
                c.first + 1,
                c.second + 1,
                c.count,
                c.radius,
                c.phase
            );
        }
        let _ = writeln!(s, "[objective]");
        let _ = writeln!(s, "L = {}", self.lagrangian);
        let _ = writeln!(s, "L_boundary = {}", self.boundary_lagrangian);
        let _ = writeln!(s, "[constraints]");
        for e in &self.eq {
            let _ = writeln!(s, "A = {e}");
        }
        for e in &self.ineq {
            let _ = writeln!(s, "B = {e}");
        }
        for e in &self.integral {
            let _ = writeln!(s, "C = {e}");
        }
        for w in &self.weak {
            let list: Vec<String> = w.coefficient.iter().map(|e| e.to_string()).collect();
            let space = match w.test_space {
                TestSpace::Compact => "compact",
                TestSpace::Free => "free",
            };
            let _ = writeln!(s, "weak = {} ; {space}", list.join(", "));
        }
        let _ = writeln!(s, "[boundary]");
        for e in &self.boundary_eq {
            let _ = writeln!(s, "A = {e}");
        }
        for e in &self.boundary_ineq {
            let _ = writeln!(s, "B = {e}");
        }
        for e in &self.boundary_integral {
            let _ = writeln!(s, "C = {e}");
        }
        if self.d > 0 {
            let _ = writeln!(s, "[control]");
            let _ = writeln!(s, "d = {}", self.d);
            if let Some(b) = &self.u_box {
                let _ = writeln!(s, "u = {b}");
            }
            if let Some(b) = &self.u_boundary_box {
                let _ = writeln!(s, "u_boundary = {b}");
            }
        }
        s
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    Domain,
    Spaces,
    Objective,
    Constraints,
    Boundary,
    Control,
}

struct Entry<'a> {
    section: Section,
    key: &'a str,
    value: &'a str,
    line: usize,
    key_col: usize,
    value_col: usize,
}

/// Parses a problem file. On failure returns every error found, each with
/// a location inside `text`.
pub fn parse_problem(text: &str) -> Result<Problem, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut entries = Vec::new();
    let mut section = Section::None;
    let mut saw_header = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lead = line.len() - line.trim_start().len();
        let col = lead + 1;
        if !saw_header {
            saw_header = true;
            if trimmed != VERSION_HEADER {
                let msg = if trimmed.starts_with("occurelax-problem") {
                    format!("unsupported version `{trimmed}`, expected `{VERSION_HEADER}`")
                } else {
                    format!("missing version header `{VERSION_HEADER}`")
                };
                diags.push(Diagnostic::error(Span::new(line_no, col, col + trimmed.len()), msg));
                return Err(diags);
            }
            continue;
        }
        if trimmed.starts_with('[') && trimmed.ends_with(']') {
            section = match &trimmed[1..trimmed.len() - 1] {
                "domain" => Section::Domain,
                "spaces" => Section::Spaces,
                "objective" => Section::Objective,
                "constraints" => Section::Constraints,
                "boundary" => Section::Boundary,
                "control" => Section::Control,
                other => {
                    diags.push(Diagnostic::error(
                        Span::new(line_no, col, col + trimmed.len()),
                        format!("unknown section `[{other}]`"),
                    ));
                    Section::None
                }
            };
            continue;
        }
        let Some(eq) = line.find('=') else {
            diags.push(Diagnostic::error(
                Span::new(line_no, col, col + trimmed.len()),
                "expected `key = value`".to_string(),
            ));
            continue;
        };
        let key = line[..eq].trim();
        let value_raw = &line[eq + 1..];
        let value_lead = value_raw.len() - value_raw.trim_start().len();
        entries.push(Entry {
            section,
            key,
            value: value_raw.trim(),
            line: line_no,
            key_col: col,
            value_col: eq + 2 + value_lead,
        });
    }
    if !saw_header {
        diags.push(Diagnostic::error(Span::new(1, 1, 1), format!("missing version header `{VERSION_HEADER}`")));
        return Err(diags);
    }

    let mut b = Builder::default();
    // dimensions first; expressions need them
    for e in &entries {
        let r = match (e.section, e.key) {
            (Section::Domain, "n") => b.n.set(e, parse_count(e)),
            (Section::Spaces, "m") => b.m.set(e, parse_count(e)),
            (Section::Control, "d") => b.d.set(e, parse_count(e)),
            _ => Ok(()),
        };
        if let Err(d) = r {
            diags.push(d);
        }
    }
    let n = b.n.value.unwrap_or(0);
    let m = b.m.value.unwrap_or(0);
    let d = b.d.value.unwrap_or(0);
    let eof = Span::new(text.lines().count().max(1), 1, 1);
    if b.n.value.is_none() {
        diags.push(Diagnostic::error(eof, "`[domain]` must declare `n`".to_string()));
    }
    if b.m.value.is_none() {
        diags.push(Diagnostic::error(eof, "`[spaces]` must declare `m`".to_string()));
    }
    if n == 0 || m == 0 || n > 9 || m > 9 {
        if b.n.value.is_some() && b.m.value.is_some() {
            diags.push(Diagnostic::semantic(eof, "dimensions must satisfy 1 ≤ n, m ≤ 9".to_string()));
        }
        return Err(diags);
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let bulk = Scope { n, m, d, allow_z: true, what: "bulk expression" };
    let boundary = Scope { n, m, d: 0, allow_z: false, what: "boundary expression" };
    let mut p = Problem {
        n,
        m,
        d,
        omega: BoxDomain(vec![]),
        y_box: BoxDomain(vec![]),
        z_box: BoxDomain(vec![]),
        u_box: None,
        u_boundary_box: None,
        p: Exponent::Infinity,
        y_circle: None,
        lagrangian: Expr::zero(),
        boundary_lagrangian: Expr::zero(),
        eq: vec![],
        ineq: vec![],
        integral: vec![],
        boundary_eq: vec![],
        boundary_ineq: vec![],
        boundary_integral: vec![],
        weak: vec![],
        source: SourceMap::default(),
    };
    // the boundary-control box decides whether boundary expressions may use u
    let mut boundary_scope = boundary;
    for e in &entries {
        if e.section == Section::Control && e.key == "u_boundary" {
            if let Ok(bx) = parse_box(e, bulk) {
                boundary_scope.d = bx.len();
            }
        }
    }

    let mut seen_l = false;
    let mut seen = std::collections::HashSet::new();
    for e in &entries {
        let once = matches!(
            (e.section, e.key),
            (Section::Domain, _) | (Section::Spaces, _) | (Section::Control, _) | (Section::Objective, _)
        );
        if once && !seen.insert((e.section as u8, e.key)) {
            diags.push(Diagnostic::error(
                Span::new(e.line, e.key_col, e.key_col + e.key.len()),
                format!("duplicate key `{}`", e.key),
            ));
            continue;
        }
        let span = Span::new(e.line, e.value_col, e.value_col + e.value.len().max(1));
        let r: Result<(), Diagnostic> = (|| {
            match (e.section, e.key) {
                (Section::Domain, "n") | (Section::Spaces, "m") | (Section::Control, "d") => {}
                (Section::Domain, "omega") => {
                    p.omega = BoxDomain(expect_dim(e, parse_box(e, bulk)?, n, "omega")?);
                }
                (Section::Spaces, "y") => {
                    p.y_box = BoxDomain(expect_dim(e, parse_box(e, bulk)?, m, "y")?);
                    p.source.spaces = span;
                }
                (Section::Spaces, "z") => {
                    p.z_box = BoxDomain(expect_dim(e, parse_box(e, bulk)?, m * n, "z")?);
                }
                (Section::Spaces, "p") => {
                    p.p = match e.value {
                        "inf" => Exponent::Infinity,
                        v => match v.parse::<u32>() {
                            Ok(k) if k >= 1 => Exponent::Finite(k),
                            _ => return Err(Diagnostic::error(span, format!("invalid exponent `{v}`"))),
                        },
                    };
                }
                (Section::Spaces, "y_circle") => {
                    let toks = tokenize(e.value, e.line, e.value_col)?;
                    let mut ps = Parser::new(&toks, bulk, span);
                    let nums = ps.number_list()?;
                    ps.finish()?;
                    if nums.len() != 5 {
                        return Err(Diagnostic::error(
                            span,
                            "y_circle expects `first, second, count, radius, phase`".to_string(),
                        ));
                    }
                    let idx = |v: f64| -> Result<usize, Diagnostic> {
                        if v.fract() == 0.0 && v >= 1.0 && (v as usize) <= m {
                            Ok(v as usize - 1)
                        } else {
                            Err(Diagnostic::semantic(span, format!("y_circle component {v} out of range")))
                        }
                    };
                    let first = idx(nums[0])?;
                    let second = idx(nums[1])?;
                    if first == second || nums[2] < 1.0 || nums[2].fract() != 0.0 || !(nums[3] > 0.0) {
                        return Err(Diagnostic::semantic(span, "invalid y_circle placement".to_string()));
                    }
                    p.y_circle = Some(CirclePlacement {
                        first,
                        second,
                        count: nums[2] as usize,
                        radius: nums[3],
                        phase: nums[4],
                    });
                }
                (Section::Objective, "L") => {
                    seen_l = true;
                    p.lagrangian = parse_expr(e, bulk)?;
                    p.source.lagrangian = span;
                }
                (Section::Objective, "L_boundary") => {
                    p.boundary_lagrangian = parse_expr(e, boundary_scope)?;
                    p.source.boundary_lagrangian = span;
                }
                (Section::Constraints, "A") => {
                    p.eq.push(parse_expr(e, bulk)?);
                    p.source.eq.push(span);
                }
                (Section::Constraints, "B") => {
                    p.ineq.push(parse_expr(e, bulk)?);
                    p.source.ineq.push(span);
                }
                (Section::Constraints, "C") => {
                    p.integral.push(parse_expr(e, bulk)?);
                    p.source.integral.push(span);
                }
                (Section::Constraints, "weak") => {
                    p.weak.push(parse_weak(e, bulk, span)?);
                    p.source.weak.push(span);
                }
                (Section::Boundary, "A") => {
                    p.boundary_eq.push(parse_expr(e, boundary_scope)?);
                    p.source.boundary_eq.push(span);
                }
                (Section::Boundary, "B") => {
                    p.boundary_ineq.push(parse_expr(e, boundary_scope)?);
                    p.source.boundary_ineq.push(span);
                }
                (Section::Boundary, "C") => {
                    p.boundary_integral.push(parse_expr(e, boundary_scope)?);
                    p.source.boundary_integral.push(span);
                }
                (Section::Control, "u") => {
                    p.u_box = Some(BoxDomain(expect_dim(e, parse_box(e, bulk)?, d, "u")?));
                }
                (Section::Control, "u_boundary") => {
                    p.u_boundary_box = Some(BoxDomain(parse_box(e, bulk)?));
                }
                (Section::None, _) => {
                    return Err(Diagnostic::error(
                        Span::new(e.line, e.key_col, e.key_col + e.key.len()),
                        "key outside of any section".to_string(),
                    ))
                }
                (_, key) => {
                    return Err(Diagnostic::error(
                        Span::new(e.line, e.key_col, e.key_col + key.len()),
                        format!("unknown key `{key}` in this section"),
                    ))
                }
            }
            Ok(())
        })();
        if let Err(d) = r {
            diags.push(d);
        }
    }
    for (bx, name) in [(&p.omega, "omega"), (&p.y_box, "y"), (&p.z_box, "z")] {
        if bx.dim() == 0 {
            diags.push(Diagnostic::error(eof, format!("missing required box `{name}`")));
        }
    }
    if !seen_l {
        diags.push(Diagnostic::error(eof, "missing objective `L`".to_string()));
    }
    if d > 0 && p.u_box.is_none() {
        diags.push(Diagnostic::error(eof, "`[control]` with d > 0 requires a `u` box".to_string()));
    }
    if p.omega.0.iter().any(|(a, b)| !(b > a)) {
        diags.push(Diagnostic::semantic(eof, "omega must have positive extent on every axis".to_string()));
    }
    if diags.is_empty() {
        Ok(p)
    } else {
        Err(diags)
    }
}

#[derive(Default)]
struct Slot {
    value: Option<usize>,
}

impl Slot {
    fn set(&mut self, _e: &Entry<'_>, v: Result<usize, Diagnostic>) -> Result<(), Diagnostic> {
        self.value = Some(v?);
        Ok(())
    }
}

#[derive(Default)]
struct Builder {
    n: Slot,
    m: Slot,
    d: Slot,
}

fn value_span(e: &Entry<'_>) -> Span {
    Span::new(e.line, e.value_col, e.value_col + e.value.len().max(1))
}

fn parse_count(e: &Entry<'_>) -> Result<usize, Diagnostic> {
    e.value
        .parse::<usize>()
        .map_err(|_| Diagnostic::error(value_span(e), format!("expected a nonnegative integer, got `{}`", e.value)))
}

fn parse_box(e: &Entry<'_>, scope: Scope) -> Result<Vec<(f64, f64)>, Diagnostic> {
    let toks = tokenize(e.value, e.line, e.value_col)?;
    let mut p = Parser::new(&toks, scope, value_span(e));
    let bx = p.interval_box()?;
    p.finish()?;
    if bx.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Diagnostic::semantic(value_span(e), "boxes must have finite bounds".to_string()));
    }
    Ok(bx)
}

fn expect_dim(e: &Entry<'_>, bx: Vec<(f64, f64)>, want: usize, name: &str) -> Result<Vec<(f64, f64)>, Diagnostic> {
    if bx.len() != want {
        return Err(Diagnostic::semantic(
            value_span(e),
            format!("box `{name}` has {} intervals, expected {want}", bx.len()),
        ));
    }
    Ok(bx)
}

fn parse_expr(e: &Entry<'_>, scope: Scope) -> Result<Expr, Diagnostic> {
    let toks = tokenize(e.value, e.line, e.value_col)?;
    let mut p = Parser::new(&toks, scope, value_span(e));
    let ex = p.expr()?;
    p.finish()?;
    Ok(ex)
}

fn parse_weak(e: &Entry<'_>, scope: Scope, span: Span) -> Result<WeakFamily, Diagnostic> {
    let toks = tokenize(e.value, e.line, e.value_col)?;
    let mut p = Parser::new(&toks, scope, value_span(e));
    let coefficient = p.expr_list()?;
    let test_space = if p.eat(lexer::Tok::Semicolon) {
        let (word, wspan) = p.ident()?;
        match word.as_str() {
            "compact" => TestSpace::Compact,
            "free" => TestSpace::Free,
            _ => return Err(Diagnostic::error(wspan, format!("unknown test space `{word}`"))),
        }
    } else {
        TestSpace::Compact
    };
    p.finish()?;
    if coefficient.len() != scope.n {
        return Err(Diagnostic::semantic(
            span,
            format!("weak family needs {} coefficient components, got {}", scope.n, coefficient.len()),
        ));
    }
    Ok(WeakFamily { coefficient, test_space })
}

/// Parses a single expression in the given dimensions, outside of a file.
pub fn parse_expression(src: &str, n: usize, m: usize, d: usize) -> Result<Expr, Diagnostic> {
    let scope = Scope { n, m, d, allow_z: true, what: "expression" };
    let toks = tokenize(src, 1, 1)?;
    let mut p = Parser::new(&toks, scope, Span::new(1, src.len() + 1, src.len() + 1));
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "occurelax-problem v1
[domain]
n = 1
omega = [0, 1]
[spaces]
m = 1
y = [0, 1]
z = [-1, 3]
[objective]
L = z11^2
";

    const EX42: &str = "occurelax-problem v1
[domain]
n = 1
omega = [0, 1]
[spaces]
m = 2
y = [-1, 1] x [-1, 1]
z = [-1, 1] x [-1, 1]
[objective]
L = y1*y2 + z11^2 + z21^2
[constraints]
A = y1^2 - 1
A = y2^2 - 1
C = -y1*y2
";

    #[test]
    fn minimal_file() {
        let p = parse_problem(MINIMAL).unwrap();
        assert_eq!((p.n, p.m, p.d), (1, 1, 0));
        assert_eq!(p.lagrangian.to_string(), "z11^2");
        assert!(p.eq.is_empty() && p.ineq.is_empty() && p.integral.is_empty());
        assert_eq!(p.p, Exponent::Infinity);
    }

    #[test]
    fn example_with_two_equalities_and_one_integral() {
        let p = parse_problem(EX42).unwrap();
        assert_eq!(p.eq.len(), 2);
        assert_eq!(p.integral.len(), 1);
        assert_eq!(p.integral[0].to_string(), "-y1*y2");
    }

    #[test]
    fn undeclared_variable_is_located() {
        let text = EX42.replace("C = -y1*y2", "C = -y1*y3");
        let errs = parse_problem(&text).unwrap_err();
        assert_eq!(errs.len(), 1);
        let e = &errs[0];
        assert_eq!(e.kind, DiagnosticKind::Semantic);
        assert_eq!(e.span.line, 14);
        let line = text.lines().nth(13).unwrap();
        assert_eq!(&line[e.span.col_start - 1..e.span.col_end - 1], "y3");
    }

    #[test]
    fn z_in_boundary_is_rejected() {
        let text = format!("{MINIMAL}[boundary]\nA = z11 - 1\n");
        let errs = parse_problem(&text).unwrap_err();
        assert!(errs[0].message.contains("may not reference z"));
    }

    #[test]
    fn syntax_errors() {
        let text = MINIMAL.replace("L = z11^2", "L = (z11^2");
        let errs = parse_problem(&text).unwrap_err();
        assert!(errs[0].message.contains("unbalanced"));
        let text = MINIMAL.replace("L = z11^2", "L = z11 $ 2");
        assert!(parse_problem(&text).is_err());
    }

    #[test]
    fn version_header_is_mandatory() {
        let text = MINIMAL.replace("v1", "v2");
        let errs = parse_problem(&text).unwrap_err();
        assert!(errs[0].message.contains("unsupported version"));
        let text = MINIMAL.replace("occurelax-problem v1\n", "");
        assert!(parse_problem(&text).is_err());
    }

    #[test]
    fn print_parse_round_trip() {
        let p = parse_problem(EX42).unwrap();
        let q = parse_problem(&p.to_text()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.to_text(), q.to_text());
    }

    #[test]
    fn weak_family_and_control() {
        let text = "occurelax-problem v1
[domain]
n = 2
omega = [0, 1] x [0, 1]
[spaces]
m = 1
y = [-1, 1]
z = [-2, 2] x [-2, 2]
[objective]
L = z11^2 + z12^2 + 0*u1
[constraints]
weak = z11, z12 ; compact
A = z11 - u1
[control]
d = 1
u = [-2, 2]
";
        let p = parse_problem(text).unwrap();
        assert_eq!(p.weak.len(), 1);
        assert_eq!(p.weak[0].test_space, TestSpace::Compact);
        assert_eq!(p.kind(), ProblemKind::OptimalControl);
        assert_eq!(parse_problem(&p.to_text()).unwrap(), p);
    }
}
