//! Brute-force vertex enumeration. Shares no code with the simplex solver
//! so that it can serve as an independent check.

use thiserror::Error;

use super::{LinearProgram, Relation};

pub const ORACLE_MAX_VARS: usize = 12;
pub const ORACLE_MAX_ROWS: usize = 12;

const SINGULAR: f64 = 1e-10;
const FEAS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleVerdict {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle limited to {ORACLE_MAX_VARS} variables and {ORACLE_MAX_ROWS} rows, got {vars} and {rows}")]
    SizeExceeded { vars: usize, rows: usize },
}

/// Dense equality form `A s = b, s ≥ 0` with objective `offset + cᵀs`.
struct Dense {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    offset: f64,
}

fn to_dense(lp: &LinearProgram) -> Dense {
    // per original column: list of (dense column, sign), plus shift
    let mut ncols = 0;
    let mut expand: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut shift = Vec::new();
    let mut c = Vec::new();
    let mut offset = 0.0;
    let mut upper_rows = Vec::new();
    for col in &lp.columns {
        if col.lower.is_finite() {
            expand.push(vec![(ncols, 1.0)]);
            shift.push(col.lower);
            c.push(col.cost);
            offset += col.cost * col.lower;
            if col.upper.is_finite() {
                upper_rows.push((ncols, col.upper - col.lower));
            }
            ncols += 1;
        } else if col.upper.is_finite() {
            expand.push(vec![(ncols, -1.0)]);
            shift.push(col.upper);
            c.push(-col.cost);
            offset += col.cost * col.upper;
            ncols += 1;
        } else {
            expand.push(vec![(ncols, 1.0), (ncols + 1, -1.0)]);
            shift.push(0.0);
            c.push(col.cost);
            c.push(-col.cost);
            ncols += 2;
        }
    }
    let n_slacks = lp.rows.iter().filter(|r| r.relation != Relation::Eq).count() + upper_rows.len();
    let total = ncols + n_slacks;
    c.resize(total, 0.0);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut next_slack = ncols;
    for r in &lp.rows {
        let mut row = vec![0.0; total];
        let mut rhs = r.rhs;
        for &(j, v) in &r.coeffs {
            rhs -= v * shift[j];
            for &(k, s) in &expand[j] {
                row[k] += v * s;
            }
        }
        match r.relation {
            Relation::Eq => {}
            Relation::Le => {
                row[next_slack] = 1.0;
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
            }
        }
        a.push(row);
        b.push(rhs);
    }
    for (k, ub) in upper_rows {
        let mut row = vec![0.0; total];
        row[k] = 1.0;
        row[next_slack] = 1.0;
        next_slack += 1;
        a.push(row);
        b.push(ub);
    }
    Dense { a, b, c, offset }
}

/// Row-reduces `[A | b]`, dropping dependent rows. `None` if inconsistent.
fn reduce_rows(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| r.iter().copied().chain([v]).collect()).collect();
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len() - 1);
    let scale = m.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (p, pv) = (rank..rows).map(|i| (i, m[i][col].abs())).fold((rank, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pv <= SINGULAR * scale {
            continue;
        }
        m.swap(rank, p);
        for i in 0..rows {
            if i != rank {
                let f = m[i][col] / m[rank][col];
                if f != 0.0 {
                    for k in col..=cols {
                        m[i][k] -= f * m[rank][k];
                    }
                }
            }
        }
        rank += 1;
    }
    for row in m.iter().skip(rank) {
        if row[cols].abs() > 1e-8 * scale {
            return None;
        }
    }
    m.truncate(rank);
    let bb = m.iter().map(|r| r[cols]).collect();
    let aa = m.into_iter().map(|mut r| {
        r.pop();
        r
    });
    Some((aa.collect(), bb))
}

/// Solves the square system with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < SINGULAR {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for i in col + 1..n {
            let f = a[i][col] / a[col][col];
            for k in col..n {
                a[i][k] -= f * a[col][k];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Minimum of `cᵀs` over basic feasible solutions of `A s = b, s ≥ 0`
/// (full row rank `A`), or `None` if there is none.
fn best_vertex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let r = a.len();
    let n = c.len();
    if r == 0 {
        return Some(0.0);
    }
    if r > n {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        let sub: Vec<Vec<f64>> = a.iter().map(|row| idx.iter().map(|&j| row[j]).collect()).collect();
        if let Some(s) = solve_square(sub, b.to_vec()) {
            if s.iter().all(|&v| v >= -FEAS) {
                let val: f64 = idx.iter().zip(&s).map(|(&j, &v)| c[j] * v).sum();
                best = Some(best.map_or(val, |bv: f64| bv.min(val)));
            }
        }
        // next combination in lexicographic order
        let mut k = r;
        while k > 0 && idx[k - 1] == n - r + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return best;
        }
        k -= 1;
        idx[k] += 1;
        for t in k + 1..r {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Exact optimum of a small LP by enumerating every basis.
pub fn enumerate_vertices_oracle(lp: &LinearProgram) -> Result<OracleVerdict, OracleError> {
    if lp.num_vars() > ORACLE_MAX_VARS || lp.num_rows() > ORACLE_MAX_ROWS {
        return Err(OracleError::SizeExceeded { vars: lp.num_vars(), rows: lp.num_rows() });
    }
    let d = to_dense(lp);
    let Some((a, b)) = reduce_rows(&d.a, &d.b) else {
        return Ok(OracleVerdict::Infeasible);
    };
    let n = d.c.len();
    if a.is_empty() {
        return Ok(if d.c.iter().any(|&v| v < 0.0) {
            OracleVerdict::Unbounded
        } else {
            OracleVerdict::Optimal(d.offset)
        });
    }
    let Some(val) = best_vertex(&a, &b, &d.c) else {
        return Ok(OracleVerdict::Infeasible);
    };
    // recession cone {A r = 0, r ≥ 0} normalized by Σ r = 1
    let mut ray_a: Vec<Vec<f64>> = a.clone();
    ray_a.push(vec![1.0; n]);
    let mut ray_b = vec![0.0; a.len()];
    ray_b.push(1.0);
    if let Some((ra, rb)) = reduce_rows(&ray_a, &ray_b) {
        if let Some(slope) = best_vertex(&ra, &rb, &d.c) {
            if slope < -FEAS {
                return Ok(OracleVerdict::Unbounded);
            }
        }
    }
    Ok(OracleVerdict::Optimal(d.offset + val))
}

#[cfg(test)]
mod tests {
    use super::super::RowTag;
    use super::*;

    #[test]
    fn simplex_edge_case() {
        let mut lp = LinearProgram::new();
        lp.add_column("x1", 1.0);
        lp.add_column("x2", 0.0);
        lp.add_row(RowTag::Mass, Relation::Eq, vec![(0, 1.0), (1, 1.0)], 1.0);
        assert_eq!(enumerate_vertices_oracle(&lp).unwrap(), OracleVerdict::Optimal(0.0));
    }

    #[test]
    fn infeasible_pair() {
        let mut lp = LinearProgram::new();
        lp.add_column("x1", 1.0);
        lp.add_row(RowTag::Plumbing(0), Relation::Eq, vec![(0, 1.0)], 1.0);
        lp.add_row(RowTag::Plumbing(1), Relation::Eq, vec![(0, 1.0)], 2.0);
        assert_eq!(enumerate_vertices_oracle(&lp).unwrap(), OracleVerdict::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new();
        lp.add_column("x1", -1.0);
        lp.add_column("x2", 0.0);
        lp.add_row(RowTag::Plumbing(0), Relation::Ge, vec![(0, 1.0), (1, -1.0)], 0.0);
        assert_eq!(enumerate_vertices_oracle(&lp).unwrap(), OracleVerdict::Unbounded);
    }

    #[test]
    fn bounded_and_free_columns() {
        let mut lp = LinearProgram::new();
        lp.add_bounded_column("x", -1.0, -1.0, 3.0);
        lp.add_bounded_column("y", -2.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(RowTag::Plumbing(0), Relation::Le, vec![(0, 1.0), (1, 1.0)], 4.0);
        lp.add_row(RowTag::Plumbing(1), Relation::Ge, vec![(0, 1.0), (1, -1.0)], -2.0);
        match enumerate_vertices_oracle(&lp).unwrap() {
            OracleVerdict::Optimal(v) => assert!((v + 7.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn size_limit() {
        let mut lp = LinearProgram::new();
        for k in 0..13 {
            lp.add_column(format!("x{k}"), 1.0);
        }
        assert!(enumerate_vertices_oracle(&lp).is_err());
    }
}
