//! Two-phase revised simplex with a dense explicit basis inverse.

use nalgebra::DMatrix;

use super::{LinearProgram, LpError, LpSolution, LpStatus, Relation, SolveOptions};

const REFACTOR_EVERY: usize = 100;
const PIVOT_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-11;
const STALL_LIMIT: usize = 200;
const PERTURB: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// `x = lower + s`
    Shift { col: usize, lower: f64 },
    /// `x = upper - s`
    Flip { col: usize, upper: f64 },
    /// `x = s⁺ - s⁻`
    Split { pos: usize, neg: usize },
}

/// `min cᵀs` subject to `A s = b`, `s ≥ 0`, `b ≥ 0`.
struct StdForm {
    m: usize,
    n: usize,
    /// Columns in compressed sparse form.
    ptr: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    vars: Vec<VarMap>,
    /// Standard row index and factor for each original row:
    /// standard row = factor · original row.
    row_map: Vec<(usize, f64)>,
    /// Column that may start basic in each standard row.
    slack_of_row: Vec<Option<usize>>,
}

impl StdForm {
    fn build(lp: &LinearProgram) -> StdForm {
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut cost = Vec::new();
        let mut vars = Vec::with_capacity(lp.columns.len());
        for c in &lp.columns {
            let lo = c.lower.is_finite();
            let hi = c.upper.is_finite();
            let v = if lo {
                cols.push(vec![]);
                cost.push(c.cost);
                VarMap::Shift { col: cols.len() - 1, lower: c.lower }
            } else if hi {
                cols.push(vec![]);
                cost.push(-c.cost);
                VarMap::Flip { col: cols.len() - 1, upper: c.upper }
            } else {
                cols.push(vec![]);
                cost.push(c.cost);
                cols.push(vec![]);
                cost.push(-c.cost);
                VarMap::Split { pos: cols.len() - 2, neg: cols.len() - 1 }
            };
            vars.push(v);
        }

        let mut b = Vec::new();
        let mut row_map = Vec::with_capacity(lp.rows.len());
        let mut slack_of_row = Vec::new();
        let mut push_row = |entries: Vec<(usize, f64)>,
                            mut rhs: f64,
                            slack: f64,
                            cols: &mut Vec<Vec<(usize, f64)>>,
                            cost: &mut Vec<f64>|
         -> (usize, f64) {
            let i = b.len();
            let scale = entries.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
            let scale = if scale > 0.0 { scale } else { 1.0 };
            let mut factor = 1.0 / scale;
            if rhs < 0.0 {
                factor = -factor;
            }
            rhs *= factor;
            for (j, v) in entries {
                cols[j].push((i, v * factor));
            }
            let mut basic = None;
            if slack != 0.0 {
                cols.push(vec![(i, slack * factor)]);
                cost.push(0.0);
                if slack * factor > 0.0 {
                    basic = Some(cols.len() - 1);
                }
            }
            b.push(rhs);
            slack_of_row.push(basic);
            (i, factor)
        };

        for r in &lp.rows {
            let mut rhs = r.rhs;
            let mut entries = Vec::with_capacity(r.coeffs.len());
            for &(j, a) in &r.coeffs {
                match vars[j] {
                    VarMap::Shift { col, lower } => {
                        rhs -= a * lower;
                        entries.push((col, a));
                    }
                    VarMap::Flip { col, upper } => {
                        rhs -= a * upper;
                        entries.push((col, -a));
                    }
                    VarMap::Split { pos, neg } => {
                        entries.push((pos, a));
                        entries.push((neg, -a));
                    }
                }
            }
            let slack = match r.relation {
                Relation::Eq => 0.0,
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
            };
            row_map.push(push_row(entries, rhs, slack, &mut cols, &mut cost));
        }
        for (j, c) in lp.columns.iter().enumerate() {
            if let VarMap::Shift { col, lower } = vars[j] {
                if c.upper.is_finite() {
                    push_row(vec![(col, 1.0)], c.upper - lower, 1.0, &mut cols, &mut cost);
                }
            }
        }
        let mut ptr = vec![0];
        let (mut idx, mut val) = (vec![], vec![]);
        for c in &cols {
            for &(r, v) in c {
                idx.push(r as u32);
                val.push(v);
            }
            ptr.push(idx.len());
        }
        StdForm { m: b.len(), n: cols.len(), ptr, idx, val, cost, b, vars, row_map, slack_of_row }
    }

    fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.ptr[j]..self.ptr[j + 1];
        self.idx[r.clone()].iter().zip(&self.val[r]).map(|(&i, &v)| (i as usize, v))
    }

    /// `aⱼ · y`.
    fn dot(&self, j: usize, y: &[f64]) -> f64 {
        let r = self.ptr[j]..self.ptr[j + 1];
        self.idx[r.clone()].iter().zip(&self.val[r]).map(|(&i, &v)| y[i as usize] * v).sum()
    }

    fn recover(&self, s: &[f64], n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (j, v) in self.vars.iter().enumerate() {
            x[j] = match *v {
                VarMap::Shift { col, lower } => lower + s[col],
                VarMap::Flip { col, upper } => upper - s[col],
                VarMap::Split { pos, neg } => s[pos] - s[neg],
            };
        }
        x
    }
}

enum Phase {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Tableau<'a> {
    sf: &'a StdForm,
    /// All standard columns followed by one artificial per row.
    n_real: usize,
    basis: Vec<usize>,
    pos_in_basis: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    /// Right-hand side in use; differs from `sf.b` while perturbed.
    rhs: Vec<f64>,
    perturbed: bool,
    pivots_since_refactor: usize,
    iterations: usize,
}

impl<'a> Tableau<'a> {
    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n_real {
            self.sf.col(j).collect()
        } else {
            vec![(j - self.n_real, 1.0)]
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.sf.m;
        let mut w = vec![0.0; m];
        let apply = |w: &mut Vec<f64>, r: usize, v: f64| {
            for i in 0..m {
                w[i] += self.binv[i * m + r] * v;
            }
        };
        if j < self.n_real {
            for (r, v) in self.sf.col(j) {
                apply(&mut w, r, v);
            }
        } else {
            apply(&mut w, j - self.n_real, 1.0);
        }
        w
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.sf.m;
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let c = cost[bj];
            if c != 0.0 {
                for k in 0..m {
                    y[k] += c * self.binv[i * m + k];
                }
            }
        }
        y
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let m = self.sf.m;
        let mut bm = DMatrix::<f64>::zeros(m, m);
        for (i, &bj) in self.basis.iter().enumerate() {
            for (r, v) in self.column(bj) {
                bm[(r, i)] = v;
            }
        }
        bm
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.sf.m;
        let mut bm = self.basis_matrix();
        if self.repair(&bm) {
            bm = self.basis_matrix();
        }
        let inv = bm.clone().try_inverse().ok_or_else(|| {
            let lu = bm.lu();
            let u = lu.u();
            let k = (0..m).find(|&k| u[(k, k)].abs() < 1e-14).unwrap_or(0);
            LpError::NumericalBreakdown { row: k, col: self.basis.get(k).copied().unwrap_or(0) }
        })?;
        for i in 0..m {
            for k in 0..m {
                self.binv[i * m + k] = inv[(i, k)];
            }
        }
        for i in 0..m {
            self.xb[i] = (0..m).map(|k| self.binv[i * m + k] * self.rhs[k]).sum();
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Replaces numerically dependent basic columns by the artificials of
    /// the rows they leave uncovered. Returns whether the basis changed.
    fn repair(&mut self, bm: &DMatrix<f64>) -> bool {
        let m = self.sf.m;
        let mut a = bm.clone();
        let mut row_used = vec![false; m];
        let mut dependent = vec![];
        for c in 0..m {
            let norm = (0..m).fold(0.0f64, |s, r| s.max(bm[(r, c)].abs())).max(1.0);
            let pr = (0..m).filter(|&r| !row_used[r]).max_by(|&p, &q| a[(p, c)].abs().total_cmp(&a[(q, c)].abs()));
            let Some(pr) = pr.filter(|&r| a[(r, c)].abs() > SINGULAR_TOL * norm) else {
                dependent.push(c);
                continue;
            };
            row_used[pr] = true;
            let pv = a[(pr, c)];
            for r in 0..m {
                if r != pr && a[(r, c)] != 0.0 {
                    let f = a[(r, c)] / pv;
                    for k in c..m {
                        a[(r, k)] -= f * a[(pr, k)];
                    }
                }
            }
        }
        if dependent.is_empty() {
            return false;
        }
        let free_rows: Vec<usize> = (0..m).filter(|&r| !row_used[r]).collect();
        for (&c, &r) in dependent.iter().zip(&free_rows) {
            let old = self.basis[c];
            self.pos_in_basis[old] = None;
            // an uncovered row's artificial cannot already be basic
            let art = self.n_real + r;
            self.basis[c] = art;
            self.pos_in_basis[art] = Some(c);
        }
        true
    }

    fn pivot(&mut self, r: usize, q: usize, w: &[f64]) -> Result<(), LpError> {
        let m = self.sf.m;
        let piv = w[r];
        let theta = self.xb[r] / piv;
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * w[i];
            }
        }
        self.xb[r] = theta;
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        for i in 0..m {
            if i != r && w[i] != 0.0 {
                let f = w[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
            }
        }
        let old = self.basis[r];
        self.pos_in_basis[old] = None;
        self.basis[r] = q;
        self.pos_in_basis[q] = Some(r);
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Shifts the basic values by small deterministic amounts to break
    /// ties in the ratio test; undone by [`Tableau::unperturb`].
    fn perturb(&mut self) -> Result<(), LpError> {
        let m = self.sf.m;
        let delta: Vec<f64> = (0..m)
            .map(|i| {
                let h = ((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / (1u64 << 53) as f64;
                PERTURB * (1.0 + h) * (1.0 + self.xb[i].abs())
            })
            .collect();
        for (i, &bj) in self.basis.iter().enumerate() {
            for (r, v) in self.column(bj) {
                self.rhs[r] += v * delta[i];
            }
        }
        self.perturbed = true;
        self.refactor()
    }

    fn unperturb(&mut self) -> Result<(), LpError> {
        if self.perturbed {
            self.rhs.clone_from(&self.sf.b);
            self.perturbed = false;
            self.refactor()?;
        }
        Ok(())
    }

    /// Primal simplex on columns `0..limit` with the given costs. A stalled
    /// objective first triggers a perturbation, then Bland's rule.
    fn run(&mut self, cost: &[f64], limit: usize, opts: &SolveOptions) -> Result<Phase, LpError> {
        let m = self.sf.m;
        let mut bland = false;
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        loop {
            if self.iterations >= opts.max_iters {
                return Ok(Phase::IterationLimit);
            }
            let y = self.duals(cost);
            let mut enter = None;
            let mut best = -opts.tol;
            for j in 0..limit {
                if self.pos_in_basis[j].is_some() {
                    continue;
                }
                let d = if j < self.n_real { cost[j] - self.sf.dot(j, &y) } else { cost[j] - y[j - self.n_real] };
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = enter else {
                if self.pivots_since_refactor > 0 {
                    self.refactor()?;
                    continue;
                }
                return Ok(Phase::Optimal);
            };
            let w = self.ftran(q);
            let mut leave: Option<usize> = None;
            let mut min_ratio = f64::INFINITY;
            for i in 0..m {
                if w[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / w[i];
                    let take = match leave {
                        None => true,
                        Some(l) => {
                            if ratio < min_ratio - 1e-12 {
                                true
                            } else if ratio <= min_ratio + 1e-12 {
                                if bland {
                                    self.basis[i] < self.basis[l]
                                } else {
                                    w[i] > w[l]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if take {
                        leave = Some(i);
                        min_ratio = min_ratio.min(ratio);
                    }
                }
            }
            let Some(r) = leave else {
                if self.pivots_since_refactor > 0 {
                    self.refactor()?;
                    continue;
                }
                return Ok(Phase::Unbounded);
            };
            if self.xb[r] < 0.0 {
                self.xb[r] = 0.0;
            }
            self.pivot(r, q, &w)?;
            self.iterations += 1;
            let obj: f64 = self.basis.iter().zip(&self.xb).map(|(&j, &v)| cost[j] * v).sum();
            if obj < last_obj - 1e-12 * (1.0 + obj.abs()) {
                stall = 0;
            } else {
                stall += 1;
                if stall > STALL_LIMIT {
                    if self.perturbed {
                        bland = true;
                    } else {
                        self.perturb()?;
                        stall = 0;
                    }
                }
            }
            last_obj = obj;
        }
    }

    fn values(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_real];
        for (i, &bj) in self.basis.iter().enumerate() {
            if bj < self.n_real {
                s[bj] = self.xb[i];
            }
        }
        s
    }
}

/// Solves `lp` by the two-phase revised simplex method with Dantzig
/// pricing. Optimality and unboundedness are confirmed on a fresh
/// factorization.
pub fn solve_simplex(lp: &LinearProgram, opts: &SolveOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let sf = StdForm::build(lp);
    let m = sf.m;
    let n_real = sf.n;

    if m == 0 {
        return Ok(trivial_solution(lp, &sf));
    }

    let mut basis = Vec::with_capacity(m);
    let mut pos = vec![None; n_real + m];
    for i in 0..m {
        let j = sf.slack_of_row[i].unwrap_or(n_real + i);
        pos[j] = Some(i);
        basis.push(j);
    }
    let mut t = Tableau {
        sf: &sf,
        n_real,
        basis,
        pos_in_basis: pos,
        binv: vec![0.0; m * m],
        xb: vec![0.0; m],
        rhs: sf.b.clone(),
        perturbed: false,
        pivots_since_refactor: 0,
        iterations: 0,
    };
    t.refactor()?;

    let bnorm = sf.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let art = |j: usize| j >= n_real;
    let needs_phase1 = t.basis.iter().any(|&j| art(j));
    if needs_phase1 {
        let c1: Vec<f64> = (0..n_real + m).map(|j| if art(j) { 1.0 } else { 0.0 }).collect();
        let ph = t.run(&c1, n_real + m, opts)?;
        t.unperturb()?;
        t.refactor()?;
        let infeas: f64 = t.basis.iter().zip(&t.xb).filter(|(&j, _)| art(j)).map(|(_, &v)| v.max(0.0)).sum();
        if matches!(ph, Phase::IterationLimit) {
            return Ok(finish(lp, &sf, &t, LpStatus::IterationLimit));
        }
        if infeas > 1e-8 * (1.0 + bnorm) {
            return Ok(finish(lp, &sf, &t, LpStatus::Infeasible));
        }
        // drive remaining zero-level artificials out where possible
        for r in 0..m {
            if !art(t.basis[r]) {
                continue;
            }
            let row: Vec<f64> = t.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n_real {
                if t.pos_in_basis[j].is_some() {
                    continue;
                }
                let v = sf.dot(j, &row);
                if v.abs() > 1e-7 && best.map_or(true, |(_, bv)| v.abs() > bv.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                t.xb[r] = 0.0;
                let w = t.ftran(j);
                t.pivot(r, j, &w)?;
            }
        }
        t.refactor()?;
    }

    let c2: Vec<f64> = (0..n_real + m).map(|j| if j < n_real { sf.cost[j] } else { 0.0 }).collect();
    let ph = t.run(&c2, n_real, opts)?;
    t.unperturb()?;
    let status = match ph {
        Phase::Optimal => LpStatus::Optimal,
        Phase::Unbounded => LpStatus::Unbounded,
        Phase::IterationLimit => LpStatus::IterationLimit,
    };
    Ok(finish(lp, &sf, &t, status))
}

fn trivial_solution(lp: &LinearProgram, sf: &StdForm) -> LpSolution {
    // no rows and no finite upper bounds: each shifted/flipped variable sits
    // at its finite bound unless its cost makes the problem unbounded
    let mut s = vec![0.0; sf.n];
    let mut unbounded = false;
    for (j, &c) in sf.cost.iter().enumerate() {
        if c < 0.0 {
            unbounded = true;
            s[j] = 0.0;
        }
    }
    let x = sf.recover(&s, lp.num_vars());
    let status = if unbounded { LpStatus::Unbounded } else { LpStatus::Optimal };
    let objective = if unbounded { f64::NEG_INFINITY } else { lp.objective(&x) };
    LpSolution {
        status,
        x,
        objective,
        duals: vec![],
        dual_objective: objective,
        primal_residual: 0.0,
        dual_residual: 0.0,
        complementarity: 0.0,
        iterations: 0,
    }
}

fn finish(lp: &LinearProgram, sf: &StdForm, t: &Tableau<'_>, status: LpStatus) -> LpSolution {
    let mut s = t.values();
    for v in s.iter_mut() {
        if *v < 0.0 && *v > -1e-9 {
            *v = 0.0;
        }
    }
    let x = sf.recover(&s, lp.num_vars());
    let c2: Vec<f64> = (0..t.n_real + sf.m).map(|j| if j < t.n_real { sf.cost[j] } else { 0.0 }).collect();
    let y_std = t.duals(&c2);
    let duals: Vec<f64> = sf.row_map.iter().map(|&(k, f)| y_std[k] * f).collect();

    let primal_residual = lp.primal_residual(&x);
    let (dual_objective, dual_residual, complementarity) = dual_certificate(lp, &x, &duals);
    let objective = match status {
        LpStatus::Infeasible => f64::INFINITY,
        LpStatus::Unbounded => f64::NEG_INFINITY,
        _ => lp.objective(&x),
    };
    LpSolution {
        status,
        x,
        objective,
        duals,
        dual_objective,
        primal_residual,
        dual_residual,
        complementarity,
        iterations: t.iterations,
    }
}

/// Dual objective, dual infeasibility and complementarity of `duals` at
/// `x`, with reduced costs priced against the column bounds.
pub(super) fn dual_certificate(lp: &LinearProgram, x: &[f64], duals: &[f64]) -> (f64, f64, f64) {
    let mut dual_residual = 0.0f64;
    let mut dual_objective = 0.0;
    let mut complementarity = 0.0;
    for (i, r) in lp.rows.iter().enumerate() {
        let y = duals[i];
        dual_objective += r.rhs * y;
        dual_residual = dual_residual.max(match r.relation {
            Relation::Eq => 0.0,
            Relation::Le => y.max(0.0),
            Relation::Ge => (-y).max(0.0),
        });
        complementarity += (y * (r.rhs - lp.row_activity(i, x))).abs();
    }
    let mut reduced: Vec<f64> = lp.columns.iter().map(|c| c.cost).collect();
    for (i, r) in lp.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            reduced[j] -= a * duals[i];
        }
    }
    for (c, &d) in lp.columns.iter().zip(&reduced) {
        if d > 0.0 {
            if c.lower.is_finite() {
                dual_objective += c.lower * d;
            } else {
                dual_residual = dual_residual.max(d);
            }
        } else if d < 0.0 {
            if c.upper.is_finite() {
                dual_objective += c.upper * d;
            } else {
                dual_residual = dual_residual.max(-d);
            }
        }
    }
    (dual_objective, dual_residual, complementarity)
}

#[cfg(test)]
mod tests {
    use super::super::{LinearProgram, Relation, RowTag};
    use super::*;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn min_x1_on_simplex() {
        let mut lp = LinearProgram::new();
        lp.add_column("x1", 1.0);
        lp.add_column("x2", 0.0);
        lp.add_row(RowTag::Mass, Relation::Eq, vec![(0, 1.0), (1, 1.0)], 1.0);
        let s = solve_simplex(&lp, &opts()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.objective.abs() < 1e-12);
        assert!((s.x[0]).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let mut lp = LinearProgram::new();
        lp.add_column("x1", 1.0);
        lp.add_row(RowTag::Plumbing(0), Relation::Eq, vec![(0, 1.0)], 1.0);
        lp.add_row(RowTag::Plumbing(1), Relation::Eq, vec![(0, 1.0)], 2.0);
        assert_eq!(solve_simplex(&lp, &opts()).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction() {
        let mut lp = LinearProgram::new();
        lp.add_column("x1", -1.0);
        lp.add_column("x2", 0.0);
        lp.add_row(RowTag::Plumbing(0), Relation::Ge, vec![(0, 1.0), (1, -1.0)], 0.0);
        assert_eq!(solve_simplex(&lp, &opts()).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_bounded_variables_with_duals() {
        // min -x - 2y  s.t.  x + y <= 4, x - y >= -2, -1 <= x <= 3, y free
        let mut lp = LinearProgram::new();
        lp.add_bounded_column("x", -1.0, -1.0, 3.0);
        lp.add_bounded_column("y", -2.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(RowTag::Plumbing(0), Relation::Le, vec![(0, 1.0), (1, 1.0)], 4.0);
        lp.add_row(RowTag::Plumbing(1), Relation::Ge, vec![(0, 1.0), (1, -1.0)], -2.0);
        let s = solve_simplex(&lp, &opts()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // optimum at x = 1, y = 3
        assert!((s.x[0] - 1.0).abs() < 1e-9 && (s.x[1] - 3.0).abs() < 1e-9);
        assert!((s.objective + 7.0).abs() < 1e-9);
        assert!((s.dual_objective - s.objective).abs() < 1e-9);
        assert!(s.dual_residual < 1e-9 && s.complementarity < 1e-9);
        assert!(s.duals[0] <= 0.0 && s.duals[1] >= 0.0);
    }

    #[test]
    fn redundant_equalities_keep_zero_artificials() {
        let mut lp = LinearProgram::new();
        lp.add_column("a", 1.0);
        lp.add_column("b", 2.0);
        lp.add_row(RowTag::Plumbing(0), Relation::Eq, vec![(0, 1.0), (1, 1.0)], 1.0);
        lp.add_row(RowTag::Plumbing(1), Relation::Eq, vec![(0, 2.0), (1, 2.0)], 2.0);
        let s = solve_simplex(&lp, &opts()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance for Dantzig's rule
        let mut lp = LinearProgram::new();
        for (k, c) in [-0.75, 150.0, -0.02, 6.0].into_iter().enumerate() {
            lp.add_column(format!("x{k}"), c);
        }
        lp.add_row(RowTag::Plumbing(0), Relation::Le, vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], 0.0);
        lp.add_row(RowTag::Plumbing(1), Relation::Le, vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], 0.0);
        lp.add_row(RowTag::Plumbing(2), Relation::Le, vec![(2, 1.0)], 1.0);
        let s = solve_simplex(&lp, &opts()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-9);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let mut lp = LinearProgram::new();
        for k in 0..5 {
            lp.add_column(format!("x{k}"), -(k as f64) - 1.0);
        }
        lp.add_row(RowTag::Plumbing(0), Relation::Le, (0..5).map(|k| (k, 1.0)).collect(), 1.0);
        lp.add_row(RowTag::Plumbing(1), Relation::Ge, (0..5).map(|k| (k, 1.0)).collect(), 0.5);
        let s = solve_simplex(&lp, &SolveOptions { max_iters: 0, tol: 1e-9 }).unwrap();
        assert_eq!(s.status, LpStatus::IterationLimit);
    }
}
