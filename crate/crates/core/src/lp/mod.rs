//! Linear programs in general form, an embedded revised simplex solver
//! with sifting for wide programs,
//! a brute-force vertex oracle and free-format MPS interchange.

mod mps;
mod oracle;
mod sifting;
mod simplex;

use std::fmt;

use thiserror::Error;

pub use mps::{export_mps, parse_mps, MpsError};
pub use oracle::{enumerate_vertices_oracle, OracleError, OracleVerdict, ORACLE_MAX_ROWS, ORACLE_MAX_VARS};
pub use sifting::solve_lp;

/// Where a row comes from. The ordinal counts rows of the same kind and
/// gives each row a stable name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowTag {
    Mass,
    Liouville(usize),
    Integral(usize),
    Weak(usize),
    Plumbing(usize),
}

impl RowTag {
    pub fn name(&self) -> String {
        match self {
            RowTag::Mass => "MASS".to_string(),
            RowTag::Liouville(k) => format!("LIOU_{k}"),
            RowTag::Integral(k) => format!("INTG_{k}"),
            RowTag::Weak(k) => format!("WEAK_{k}"),
            RowTag::Plumbing(k) => format!("PLMB_{k}"),
        }
    }

    pub fn from_name(s: &str) -> Option<RowTag> {
        if s == "MASS" {
            return Some(RowTag::Mass);
        }
        let (head, k) = s.split_once('_')?;
        let k: usize = k.parse().ok()?;
        match head {
            "LIOU" => Some(RowTag::Liouville(k)),
            "INTG" => Some(RowTag::Integral(k)),
            "WEAK" => Some(RowTag::Weak(k)),
            "PLMB" => Some(RowTag::Plumbing(k)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub tag: RowTag,
    pub relation: Relation,
    /// Sparse coefficients `(column, value)`, columns strictly increasing.
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `min cᵀx` subject to the rows and `lower ≤ x ≤ upper`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a nonnegative column and returns its index.
    pub fn add_column(&mut self, name: impl Into<String>, cost: f64) -> usize {
        self.add_bounded_column(name, cost, 0.0, f64::INFINITY)
    }

    pub fn add_bounded_column(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        self.columns.push(Column { name: name.into(), cost, lower, upper });
        self.columns.len() - 1
    }

    /// Adds a row; coefficients are sorted by column and duplicates summed.
    pub fn add_row(&mut self, tag: RowTag, relation: Relation, mut coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        coeffs.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (j, v) in coeffs {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        self.rows.push(Row { tag, relation, coeffs: merged, rhs });
        self.rows.len() - 1
    }

    /// Next free ordinal for rows of the same kind as `tag`.
    pub fn next_ordinal(&self, kind: fn(usize) -> RowTag) -> usize {
        let probe = kind(0);
        self.rows
            .iter()
            .filter(|r| std::mem::discriminant(&r.tag) == std::mem::discriminant(&probe))
            .count()
    }

    pub fn num_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.columns.iter().zip(x).map(|(c, v)| c.cost * v).sum()
    }

    pub fn row_activity(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (i, r) in self.rows.iter().enumerate() {
            let a = self.row_activity(i, x);
            let v = match r.relation {
                Relation::Eq => (a - r.rhs).abs(),
                Relation::Le => (a - r.rhs).max(0.0),
                Relation::Ge => (r.rhs - a).max(0.0),
            };
            worst = worst.max(v);
        }
        for (c, &v) in self.columns.iter().zip(x) {
            worst = worst.max(c.lower - v).max(v - c.upper);
        }
        worst
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rows.iter().fold(0.0f64, |a, r| a.max(r.rhs.abs()))
    }

    pub fn validate(&self) -> Result<(), LpError> {
        if self.columns.is_empty() {
            return Err(LpError::Empty);
        }
        for (j, c) in self.columns.iter().enumerate() {
            if !c.cost.is_finite() || c.lower.is_nan() || c.upper.is_nan() || c.lower == f64::INFINITY {
                return Err(LpError::NonFinite { row: None, col: Some(j) });
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() || r.coeffs.iter().any(|&(j, v)| !v.is_finite() || j >= self.columns.len()) {
                return Err(LpError::NonFinite { row: Some(i), col: None });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "iteration-limit",
        })
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual value per row, sign convention of `min` with `y ≤ 0` on
    /// `≤` rows and `y ≥ 0` on `≥` rows.
    pub duals: Vec<f64>,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `Σ |yᵢ · slackᵢ|` over rows.
    pub complementarity: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iters: 500_000, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program has no variables")]
    Empty,
    #[error("non-finite data (row {row:?}, column {col:?})")]
    NonFinite { row: Option<usize>, col: Option<usize> },
    #[error("singular basis during refactorization (row {row}, column {col})")]
    NumericalBreakdown { row: usize, col: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_names_round_trip() {
        for t in [RowTag::Mass, RowTag::Liouville(3), RowTag::Integral(0), RowTag::Weak(7), RowTag::Plumbing(12)] {
            assert_eq!(RowTag::from_name(&t.name()), Some(t));
        }
        assert_eq!(RowTag::from_name("COST"), None);
    }

    #[test]
    fn add_row_merges_duplicates() {
        let mut lp = LinearProgram::new();
        lp.add_column("a", 1.0);
        lp.add_column("b", 1.0);
        lp.add_row(RowTag::Mass, Relation::Eq, vec![(1, 2.0), (0, 1.0), (1, -2.0), (0, 0.5)], 1.0);
        assert_eq!(lp.rows[0].coeffs, vec![(0, 1.5)]);
        assert_eq!(lp.next_ordinal(RowTag::Liouville), 0);
    }
}
