//! Sifting: the simplex method on a growing working set of columns, priced
//! against the full program after each restricted solve. Used when the
//! program has many more columns than rows.

use super::simplex::{dual_certificate, solve_simplex};
use super::{Column, LinearProgram, LpError, LpSolution, LpStatus, Row, SolveOptions};

/// Fewest nonnegative columns for which sifting is used.
const MIN_COLUMNS: usize = 4000;

/// Columns `j` with `lower = 0` and no upper bound may be left out of the
/// working set, where they sit at zero.
fn siftable(c: &Column) -> bool {
    c.lower == 0.0 && c.upper == f64::INFINITY
}

struct Sifter<'a> {
    lp: &'a LinearProgram,
    by_col: Vec<Vec<(usize, f64)>>,
    in_set: Vec<bool>,
    batch: usize,
}

impl<'a> Sifter<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let mut by_col = vec![Vec::new(); lp.num_vars()];
        for (i, r) in lp.rows.iter().enumerate() {
            for &(j, v) in &r.coeffs {
                by_col[j].push((i, v));
            }
        }
        let in_set = lp.columns.iter().map(|c| !siftable(c)).collect();
        let batch = (2 * lp.num_rows()).max(100);
        Sifter { lp, by_col, in_set, batch }
    }

    fn set(&self) -> Vec<usize> {
        (0..self.lp.num_vars()).filter(|&j| self.in_set[j]).collect()
    }

    /// The program over the working set; with `elastic`, every real cost is
    /// zero and each row gets a pair of unit-cost artificials.
    fn restricted(&self, set: &[usize], elastic: bool) -> LinearProgram {
        let m = self.lp.num_rows();
        let mut rows: Vec<Row> = self
            .lp
            .rows
            .iter()
            .map(|r| Row { tag: r.tag, relation: r.relation, coeffs: Vec::new(), rhs: r.rhs })
            .collect();
        let mut columns = Vec::with_capacity(set.len() + 2 * m);
        for (k, &j) in set.iter().enumerate() {
            let mut c = self.lp.columns[j].clone();
            if elastic {
                c.cost = 0.0;
            }
            columns.push(c);
            for &(i, v) in &self.by_col[j] {
                rows[i].coeffs.push((k, v));
            }
        }
        if elastic {
            for (i, row) in rows.iter_mut().enumerate() {
                for sign in [1.0, -1.0] {
                    row.coeffs.push((columns.len(), sign));
                    columns.push(Column { name: format!("ART_{i}"), cost: 1.0, lower: 0.0, upper: f64::INFINITY });
                }
            }
        }
        LinearProgram { columns, rows }
    }

    /// Adds the most negative reduced costs among columns outside the set;
    /// returns how many were added.
    fn price(&mut self, duals: &[f64], phase_one: bool, tol: f64) -> usize {
        let mut cands: Vec<(f64, usize)> = (0..self.lp.num_vars())
            .filter(|&j| !self.in_set[j])
            .filter_map(|j| {
                let c = if phase_one { 0.0 } else { self.lp.columns[j].cost };
                let d = c - self.by_col[j].iter().map(|&(i, v)| duals[i] * v).sum::<f64>();
                (d < -tol).then_some((d, j))
            })
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.truncate(self.batch);
        for &(_, j) in &cands {
            self.in_set[j] = true;
        }
        cands.len()
    }

    fn expand(&self, set: &[usize], sub: &LpSolution, status: LpStatus, iterations: usize) -> LpSolution {
        let lp = self.lp;
        let mut x = vec![0.0; lp.num_vars()];
        for (k, &j) in set.iter().enumerate() {
            x[j] = sub.x[k];
        }
        let (dual_objective, dual_residual, complementarity) = dual_certificate(lp, &x, &sub.duals);
        let objective = match status {
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => lp.objective(&x),
        };
        LpSolution {
            status,
            primal_residual: lp.primal_residual(&x),
            x,
            objective,
            duals: sub.duals.clone(),
            dual_objective,
            dual_residual,
            complementarity,
            iterations,
        }
    }
}

/// Solves `lp`, by sifting when it has many more nonnegative columns than
/// rows and by the simplex method directly otherwise.
pub fn solve_lp(lp: &LinearProgram, opts: &SolveOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n_sift = lp.columns.iter().filter(|c| siftable(c)).count();
    if n_sift < MIN_COLUMNS || n_sift < 10 * (lp.num_rows() + 1) {
        return solve_simplex(lp, opts);
    }
    let mut s = Sifter::new(lp);
    let mut iterations = 0;
    let feas_tol = 1e-9 * (1.0 + lp.rhs_norm());

    loop {
        let set = s.set();
        let sub = solve_simplex(&s.restricted(&set, true), opts)?;
        iterations += sub.iterations;
        if sub.status == LpStatus::IterationLimit {
            return Ok(s.expand(&set, &sub, LpStatus::IterationLimit, iterations));
        }
        if sub.objective <= feas_tol {
            break;
        }
        if s.price(&sub.duals, true, opts.tol) == 0 {
            let mut out = s.expand(&set, &sub, LpStatus::Infeasible, iterations);
            out.duals = sub.duals;
            return Ok(out);
        }
    }

    loop {
        let set = s.set();
        let sub = solve_simplex(&s.restricted(&set, false), opts)?;
        iterations += sub.iterations;
        match sub.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                // the elastic phase found the set feasible; fall back on the
                // full program rather than trust a marginal verdict
                let mut full = solve_simplex(lp, opts)?;
                full.iterations += iterations;
                return Ok(full);
            }
            status => return Ok(s.expand(&set, &sub, status, iterations)),
        }
        if s.price(&sub.duals, false, opts.tol) == 0 {
            return Ok(s.expand(&set, &sub, LpStatus::Optimal, iterations));
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::lp::{Relation, RowTag};

    /// Transportation-like program with many more columns than rows.
    fn wide(seed: u64, rows: usize, cols: usize, feasible: bool) -> LinearProgram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lp = LinearProgram::new();
        for j in 0..cols {
            lp.add_column(format!("x{j}"), rng.gen_range(-1.0..1.0));
        }
        lp.add_row(RowTag::Mass, Relation::Eq, (0..cols).map(|j| (j, 1.0)).collect(), 1.0);
        for i in 1..rows {
            let coeffs = (0..cols).map(|j| (j, rng.gen_range(-1.0..1.0))).collect();
            let rel = if i % 3 == 0 { Relation::Le } else { Relation::Eq };
            lp.add_row(RowTag::Plumbing(i), rel, coeffs, 0.0);
        }
        if !feasible {
            lp.add_row(RowTag::Plumbing(rows), Relation::Ge, (0..cols).map(|j| (j, 1.0)).collect(), 2.0);
        }
        lp
    }

    #[test]
    fn sifting_matches_the_plain_simplex() {
        for seed in 0..3 {
            let lp = wide(seed, 12, 5000, true);
            let a = solve_lp(&lp, &SolveOptions::default()).unwrap();
            let b = solve_simplex(&lp, &SolveOptions::default()).unwrap();
            assert_eq!(a.status, LpStatus::Optimal);
            assert_eq!(b.status, LpStatus::Optimal);
            assert!((a.objective - b.objective).abs() < 1e-9, "{} vs {}", a.objective, b.objective);
            assert!(a.primal_residual < 1e-9 && a.dual_residual < 1e-9);
        }
    }

    #[test]
    fn sifting_detects_infeasibility() {
        let lp = wide(7, 6, 5000, false);
        assert_eq!(solve_lp(&lp, &SolveOptions::default()).unwrap().status, LpStatus::Infeasible);
    }
}
