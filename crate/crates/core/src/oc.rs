//! Optimal-control support: the control-minimized Lagrangian on the atom
//! grid, argmin control selection for a centroid field, and grid probes of
//! the convexity assumptions on the reduced problem.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::Problem;
use crate::expr::{EvalError, Point};
use crate::extraction::CentroidField;
use crate::measure::Discretization;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OcError {
    #[error("problem has no controls")]
    NoControls,
    #[error("no feasible control near the centroid of cell {cell}")]
    NoFeasibleControl { cell: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedEntry {
    /// `min_u L` over feasible control nodes, `+∞` for an empty fiber.
    pub value: f64,
    /// Lowest-index minimizing control node.
    pub argmin: Option<usize>,
}

impl ReducedEntry {
    pub fn is_empty(&self) -> bool {
        self.argmin.is_none()
    }
}

/// `L̄` per `(cell, y node, z node)`, stored cell-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedLagrangianTable {
    pub cells: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub entries: Vec<ReducedEntry>,
}

impl ReducedLagrangianTable {
    pub fn get(&self, cell: usize, y: usize, z: usize) -> &ReducedEntry {
        &self.entries[(cell * self.n_y + y) * self.n_z + z]
    }

    pub fn empty_fibers(&self) -> usize {
        self.entries.iter().filter(|e| e.is_empty()).count()
    }
}

/// Grid minimization of `L` over the control nodes of `d` subject to
/// `|A| ≤ eps_eq` and `B ≤ eps_ineq`.
pub fn reduce_lagrangian(
    p: &Problem,
    d: &Discretization,
    eps_eq: f64,
    eps_ineq: f64,
) -> Result<ReducedLagrangianTable, OcError> {
    if d.d == 0 || d.u_nodes.is_empty() {
        return Err(OcError::NoControls);
    }
    let (n_y, n_z) = (d.y_nodes.len(), d.z_nodes.len());
    let per_cell: Vec<Vec<ReducedEntry>> = d
        .cells
        .par_iter()
        .map(|c| {
            let mut out = Vec::with_capacity(n_y * n_z);
            for y in &d.y_nodes {
                for z in &d.z_nodes {
                    let mut best = ReducedEntry { value: f64::INFINITY, argmin: None };
                    'u: for (ui, u) in d.u_nodes.iter().enumerate() {
                        let pt = Point::new(&c.center, y, z, u);
                        for a in &p.eq {
                            if a.eval(&pt)?.abs() > eps_eq {
                                continue 'u;
                            }
                        }
                        for b in &p.ineq {
                            if b.eval(&pt)? > eps_ineq {
                                continue 'u;
                            }
                        }
                        let v = p.lagrangian.eval(&pt)?;
                        if v < best.value {
                            best = ReducedEntry { value: v, argmin: Some(ui) };
                        }
                    }
                    out.push(best);
                }
            }
            Ok(out)
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(ReducedLagrangianTable { cells: d.cells.len(), n_y, n_z, entries: per_cell.into_iter().flatten().collect() })
}

/// Per cell, the argmin control of the nonempty fiber nearest to the
/// centroid `(y, z)`; ties go to the lexicographically smallest
/// `(y node, z node)`.
pub fn select_controls(
    cf: &CentroidField,
    d: &Discretization,
    table: &ReducedLagrangianTable,
) -> Result<Vec<Vec<f64>>, OcError> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let dy: Vec<Vec<f64>> = (0..cf.y.len()).map(|k| d.y_nodes.iter().map(|y| dist(y, &cf.y[k])).collect()).collect();
    let mut out = Vec::with_capacity(cf.y.len());
    for k in 0..cf.y.len() {
        let mut best: Option<(f64, usize)> = None;
        for yi in 0..table.n_y {
            for (zi, z) in d.z_nodes.iter().enumerate() {
                let e = table.get(k, yi, zi);
                let Some(u) = e.argmin else { continue };
                let r = dy[k][yi] + dist(z, &cf.z[k]);
                if best.is_none_or(|(b, _)| r < b) {
                    best = Some((r, u));
                }
            }
        }
        let (_, u) = best.ok_or(OcError::NoFeasibleControl { cell: k })?;
        out.push(d.u_nodes[u].clone());
    }
    Ok(out)
}

/// `cell,u_1..u_d` per cell.
pub fn controls_csv(controls: &[Vec<f64>]) -> String {
    let dim = controls.first().map_or(0, Vec::len);
    let mut s = String::from("cell");
    for r in 1..=dim {
        let _ = write!(s, ",u_{r}");
    }
    s.push('\n');
    for (k, u) in controls.iter().enumerate() {
        let _ = write!(s, "{k}");
        for v in u {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedShapeReport {
    /// Pairs whose midpoint is a grid fiber.
    pub checked: usize,
    /// Midpoint checks with `L̄(mid) > (L̄(a) + L̄(b))/2 + tol`.
    pub convexity_violations: usize,
    pub worst_excess: f64,
    /// Midpoints of two nonempty fibers that are empty: the projection of
    /// the feasible set is not convex on the grid.
    pub projection_violations: usize,
}

impl ReducedShapeReport {
    pub fn convex_likely(&self) -> bool {
        self.convexity_violations == 0 && self.projection_violations == 0
    }
}

fn key(v: &[f64]) -> Vec<i64> {
    v.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Midpoint probes of the tabulated `L̄` on `pairs` seeded random pairs of
/// nonempty fibers per cell.
pub fn probe_reduced_convexity(
    d: &Discretization,
    table: &ReducedLagrangianTable,
    pairs: usize,
    seed: u64,
    tol: f64,
) -> ReducedShapeReport {
    let y_index: HashMap<Vec<i64>, usize> = d.y_nodes.iter().enumerate().map(|(i, y)| (key(y), i)).collect();
    let z_index: HashMap<Vec<i64>, usize> = d.z_nodes.iter().enumerate().map(|(i, z)| (key(z), i)).collect();
    let mut rep = ReducedShapeReport { checked: 0, convexity_violations: 0, worst_excess: 0.0, projection_violations: 0 };
    let mid = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect() };
    for k in 0..table.cells {
        let live: Vec<(usize, usize)> = (0..table.n_y)
            .flat_map(|y| (0..table.n_z).map(move |z| (y, z)))
            .filter(|&(y, z)| !table.get(k, y, z).is_empty())
            .collect();
        if live.len() < 2 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        for _ in 0..pairs {
            let a = live[rng.gen_range(0..live.len())];
            let b = live[rng.gen_range(0..live.len())];
            let ym = mid(&d.y_nodes[a.0], &d.y_nodes[b.0]);
            let zm = mid(&d.z_nodes[a.1], &d.z_nodes[b.1]);
            let (Some(&yi), Some(&zi)) = (y_index.get(&key(&ym)), z_index.get(&key(&zm))) else { continue };
            rep.checked += 1;
            let em = table.get(k, yi, zi);
            if em.is_empty() {
                rep.projection_violations += 1;
                continue;
            }
            let avg = 0.5 * (table.get(k, a.0, a.1).value + table.get(k, b.0, b.1).value);
            let excess = em.value - avg;
            if excess > tol * (1.0 + avg.abs()) {
                rep.convexity_violations += 1;
                rep.worst_excess = rep.worst_excess.max(excess);
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_problem;
    use crate::measure::{build_discretization, Resolution};

    fn setup(obj: &str, extra: &str, res: Resolution) -> (Problem, Discretization) {
        let text = format!(
            "occurelax-problem v1\n[domain]\nn = 1\nomega = [0, 1]\n[spaces]\nm = 1\ny = [-1, 1]\nz = [-1, 1]\n\
             [objective]\nL = {obj}\n{extra}[control]\nd = 1\nu = [-1, 1]\n"
        );
        let p = parse_problem(&text).unwrap();
        let d = build_discretization(&p, &res).unwrap();
        (p, d)
    }

    #[test]
    fn perfect_tracking() {
        let (p, d) = setup("(u1 - z11)^2", "", Resolution::new(2, 3, 5, 5));
        let t = reduce_lagrangian(&p, &d, 1e-9, 1e-9).unwrap();
        for k in 0..2 {
            for y in 0..3 {
                for (zi, z) in d.z_nodes.iter().enumerate() {
                    let e = t.get(k, y, zi);
                    assert_eq!(e.value, 0.0);
                    assert_eq!(d.u_nodes[e.argmin.unwrap()], *z);
                }
            }
        }
        assert!(probe_reduced_convexity(&d, &t, 50, 1, 1e-9).convex_likely());
    }

    #[test]
    fn dynamics_constraint_reduces_to_sum_of_squares() {
        let (p, d) = setup("y1^2 + u1^2", "[constraints]\nA = z11 - u1\n", Resolution::new(1, 5, 5, 9));
        let t = reduce_lagrangian(&p, &d, 1e-9, 1e-9).unwrap();
        for (yi, y) in d.y_nodes.iter().enumerate() {
            for (zi, z) in d.z_nodes.iter().enumerate() {
                let e = t.get(0, yi, zi);
                assert_eq!(e.value, y[0] * y[0] + z[0] * z[0]);
                // argmin re-evaluates to the stored value
                let u = &d.u_nodes[e.argmin.unwrap()];
                let again = p.lagrangian.eval(&Point::new(&d.cells[0].center, y, z, u)).unwrap();
                assert_eq!(again, e.value);
            }
        }
        let rep = probe_reduced_convexity(&d, &t, 200, 3, 1e-9);
        assert!(rep.checked > 0 && rep.convex_likely());
    }

    #[test]
    fn empty_fibers_and_missing_controls() {
        // u ≥ 0.5 and u = z: only z = 1 survives on a 3-node grid
        let (p, d) = setup("u1^2", "[constraints]\nA = z11 - u1\nB = 0.5 - u1\n", Resolution::new(1, 3, 3, 3));
        let t = reduce_lagrangian(&p, &d, 1e-9, 1e-9).unwrap();
        assert_eq!(t.empty_fibers(), 6);
        let cf = CentroidField {
            n: 1,
            m: 1,
            d: 1,
            weights: vec![vec![]],
            y: vec![vec![0.0]],
            z: vec![vec![-1.0]],
            u: vec![vec![0.0]],
            mass_ratio: vec![1.0],
            flagged: vec![false],
            boundary_weights: vec![],
            boundary_y: vec![],
            boundary_u: vec![],
            boundary_mass_ratio: vec![],
            boundary_flagged: vec![],
        };
        // nearest nonempty fiber is z = 1
        assert_eq!(select_controls(&cf, &d, &t).unwrap(), vec![vec![1.0]]);
        let (p2, d2) = setup("u1^2", "[constraints]\nB = 2 - u1\n", Resolution::new(1, 3, 3, 3));
        let t2 = reduce_lagrangian(&p2, &d2, 1e-9, 1e-9).unwrap();
        assert_eq!(select_controls(&cf, &d2, &t2), Err(OcError::NoFeasibleControl { cell: 0 }));
    }

    #[test]
    fn constant_centroids_give_constant_controls() {
        let (p, d) = setup("(u1 - z11)^2 + y1^2", "", Resolution::new(4, 3, 5, 5));
        let t = reduce_lagrangian(&p, &d, 1e-9, 1e-9).unwrap();
        let cf = CentroidField {
            n: 1,
            m: 1,
            d: 1,
            weights: vec![vec![]; 4],
            y: vec![vec![0.2]; 4],
            z: vec![vec![0.45]; 4],
            u: vec![vec![0.0]; 4],
            mass_ratio: vec![1.0; 4],
            flagged: vec![false; 4],
            boundary_weights: vec![],
            boundary_y: vec![],
            boundary_u: vec![],
            boundary_mass_ratio: vec![],
            boundary_flagged: vec![],
        };
        let u = select_controls(&cf, &d, &t).unwrap();
        assert_eq!(u, vec![vec![0.5]; 4]);
        assert!(controls_csv(&u).starts_with("cell,u_1\n0,0.5\n"));
    }

    #[test]
    fn nonconvex_reduction_is_detected() {
        let (p, d) = setup("(u1^2 - 1)^2 + (z11 - u1)^2", "", Resolution::new(1, 3, 9, 9));
        let t = reduce_lagrangian(&p, &d, 1e-9, 1e-9).unwrap();
        // L̄(z) = (z² − 1)² on the grid, a double well
        let rep = probe_reduced_convexity(&d, &t, 400, 5, 1e-9);
        assert!(rep.convexity_violations > 0);
    }
}
