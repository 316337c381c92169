//! Grid discretization of occupation measures and assembly of the
//! relaxation LPs.
//!
//! A bulk atom is a cell of Ω times one node of each of the `y`, `z` (and
//! `u`) grids; its LP variable is a density per unit volume, spread
//! uniformly over the cell in `x`. A boundary atom is a boundary facet of a
//! cell times a `y` node (and a boundary-control node).

mod assemble;
mod basis;

use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::{BoxDomain, Problem};
use crate::expr::{EvalError, Expr, Point};
use crate::lp::LpError;

pub use assemble::{
    assemble_relaxation, marginal_deviation, solve_relaxation, IntegralSource, MeasureSolution, Relaxation,
    RelaxationOptions,
};
pub use basis::{build_test_basis, build_test_basis_with, monomials, BasisMode, Normalizer, Poly1, TestBasis, TestFunction};

pub const DEFAULT_ATOM_CAP: usize = 5_000_000;
pub const ATOM_CAP_ENV: &str = "OCCURELAX_ATOM_CAP";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("resolution must be at least 1 on every axis")]
    InvalidResolution,
    #[error("{count} atoms exceed the cap of {cap} (set {ATOM_CAP_ENV} to raise it)")]
    ResolutionOverflow { count: usize, cap: usize },
    #[error("cell {cell} lost all its atoms to the support constraints")]
    EmptySupport { cell: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("LP solver failed: {0}")]
    Lp(#[from] LpError),
}

/// Per-axis counts. A single entry is broadcast to every axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AxisRes(pub Vec<usize>);

impl AxisRes {
    pub fn uniform(r: usize) -> Self {
        AxisRes(vec![r])
    }
    pub fn get(&self, axis: usize) -> usize {
        if self.0.len() == 1 {
            self.0[0]
        } else {
            self.0.get(axis).copied().unwrap_or(1)
        }
    }
    fn valid(&self) -> bool {
        !self.0.is_empty() && self.0.iter().all(|&r| r >= 1)
    }
}

/// Cells per axis of Ω and nodes per axis of the `y`, `z`, `u` boxes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub x: AxisRes,
    pub y: AxisRes,
    pub z: AxisRes,
    pub u: AxisRes,
}

impl Resolution {
    pub fn new(x: usize, y: usize, z: usize, u: usize) -> Self {
        Resolution { x: AxisRes::uniform(x), y: AxisRes::uniform(y), z: AxisRes::uniform(z), u: AxisRes::uniform(u) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub volume: f64,
}

/// A boundary facet of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub axis: usize,
    /// `-1.0` on the lower side of the axis, `+1.0` on the upper side.
    pub side: f64,
    pub normal: Vec<f64>,
    pub area: f64,
    pub cell: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BulkAtom {
    pub cell: u32,
    pub y: u32,
    pub z: u32,
    pub u: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoundaryAtom {
    pub face: u32,
    pub y: u32,
    pub u: u32,
}

/// Atoms removed by each support constraint, in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KillReport {
    pub eq: Vec<usize>,
    pub ineq: Vec<usize>,
    pub boundary_eq: Vec<usize>,
    pub boundary_ineq: Vec<usize>,
    pub bulk_before: usize,
    pub bulk_after: usize,
    pub boundary_before: usize,
    pub boundary_after: usize,
    /// Faces without any admissible boundary atom.
    pub empty_faces: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discretization {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub d_boundary: usize,
    pub omega: BoxDomain,
    pub cells_per_axis: Vec<usize>,
    pub cells: Vec<Cell>,
    pub faces: Vec<Face>,
    pub y_nodes: Vec<Vec<f64>>,
    /// Row-major `m × n` per node.
    pub z_nodes: Vec<Vec<f64>>,
    pub u_nodes: Vec<Vec<f64>>,
    pub u_boundary_nodes: Vec<Vec<f64>>,
    pub bulk: Vec<BulkAtom>,
    pub boundary: Vec<BoundaryAtom>,
    pub kills: Option<KillReport>,
}

impl Discretization {
    pub fn omega_volume(&self) -> f64 {
        self.omega.volume()
    }

    pub fn bulk_point(&self, a: &BulkAtom) -> (&[f64], &[f64], &[f64], &[f64]) {
        (
            &self.cells[a.cell as usize].center,
            &self.y_nodes[a.y as usize],
            &self.z_nodes[a.z as usize],
            if self.d > 0 { &self.u_nodes[a.u as usize] } else { &[] },
        )
    }

    pub fn eval_bulk(&self, e: &Expr, a: &BulkAtom) -> Result<f64, EvalError> {
        let (x, y, z, u) = self.bulk_point(a);
        e.eval(&Point::new(x, y, z, u))
    }

    pub fn eval_boundary(&self, e: &Expr, a: &BoundaryAtom) -> Result<f64, EvalError> {
        let x = &self.faces[a.face as usize].center;
        let y = &self.y_nodes[a.y as usize];
        let u: &[f64] = if self.d_boundary > 0 { &self.u_boundary_nodes[a.u as usize] } else { &[] };
        e.eval(&Point::new(x, y, &[], u))
    }

    /// Atoms of each cell, as index ranges into `bulk` (atoms are sorted
    /// by cell).
    pub fn cell_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = vec![0..0; self.cells.len()];
        let mut start = 0;
        while start < self.bulk.len() {
            let c = self.bulk[start].cell as usize;
            let mut end = start;
            while end < self.bulk.len() && self.bulk[end].cell as usize == c {
                end += 1;
            }
            out[c] = start..end;
            start = end;
        }
        out
    }

    /// Boundary atoms of each face, as index ranges into `boundary`.
    pub fn face_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = vec![0..0; self.faces.len()];
        let mut start = 0;
        while start < self.boundary.len() {
            let f = self.boundary[start].face as usize;
            let mut end = start;
            while end < self.boundary.len() && self.boundary[end].face as usize == f {
                end += 1;
            }
            out[f] = start..end;
            start = end;
        }
        out
    }
}

/// Nodes on `[lo, hi]`: endpoints included, the midpoint when `r = 1`, a
/// single node for a degenerate interval.
pub fn axis_nodes(lo: f64, hi: f64, r: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    if r == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..r).map(|k| if k == r - 1 { hi } else { lo + (hi - lo) * k as f64 / (r - 1) as f64 }).collect()
}

fn tensor(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for ax in axes {
        let mut next = Vec::with_capacity(out.len() * ax.len());
        for p in &out {
            for &v in ax {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn box_nodes(b: &BoxDomain, res: &AxisRes) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = b.0.iter().enumerate().map(|(i, &(lo, hi))| axis_nodes(lo, hi, res.get(i))).collect();
    tensor(&axes)
}

fn atom_cap() -> usize {
    std::env::var(ATOM_CAP_ENV).ok().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_ATOM_CAP)
}

/// Uniform cell-centered grid over Ω, boundary facets, and vertex grids on
/// the `y`, `z`, `u` boxes with every atom present.
pub fn build_discretization(p: &Problem, res: &Resolution) -> Result<Discretization, MeasureError> {
    if !(res.x.valid() && res.y.valid() && res.z.valid() && res.u.valid()) {
        return Err(MeasureError::InvalidResolution);
    }
    let n = p.n;
    let counts: Vec<usize> = (0..n).map(|j| res.x.get(j)).collect();
    let h: Vec<f64> = (0..n).map(|j| (p.omega.0[j].1 - p.omega.0[j].0) / counts[j] as f64).collect();
    let edge = |j: usize, k: usize| {
        let (a, b) = p.omega.0[j];
        if k == counts[j] {
            b
        } else {
            a + (b - a) * k as f64 / counts[j] as f64
        }
    };

    let total_cells: usize = counts.iter().product();
    let mut cells = Vec::with_capacity(total_cells);
    let mut idx = vec![0usize; n];
    let linear = |idx: &[usize]| idx.iter().zip(&counts).fold(0, |acc, (&i, &c)| acc * c + i);
    for _ in 0..total_cells {
        let lower: Vec<f64> = (0..n).map(|j| edge(j, idx[j])).collect();
        let upper: Vec<f64> = (0..n).map(|j| edge(j, idx[j] + 1)).collect();
        let center = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
        cells.push(Cell { center, lower, upper, volume: h.iter().product() });
        for j in (0..n).rev() {
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
        }
    }

    let mut faces = Vec::new();
    for axis in 0..n {
        for side in [-1.0, 1.0] {
            let fixed = if side < 0.0 { 0 } else { counts[axis] - 1 };
            let others: Vec<usize> = (0..n).filter(|&j| j != axis).collect();
            let n_other: usize = others.iter().map(|&j| counts[j]).product();
            for t in 0..n_other {
                let mut cidx = vec![0usize; n];
                cidx[axis] = fixed;
                let mut rem = t;
                for &j in others.iter().rev() {
                    cidx[j] = rem % counts[j];
                    rem /= counts[j];
                }
                let cell = linear(&cidx);
                let c = &cells[cell];
                let mut lower = c.lower.clone();
                let mut upper = c.upper.clone();
                let x_fixed = if side < 0.0 { p.omega.0[axis].0 } else { p.omega.0[axis].1 };
                lower[axis] = x_fixed;
                upper[axis] = x_fixed;
                let center = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
                let mut normal = vec![0.0; n];
                normal[axis] = side;
                let area = others.iter().map(|&j| h[j]).product();
                faces.push(Face { center, lower, upper, axis, side, normal, area, cell });
            }
        }
    }

    let y_nodes = match &p.y_circle {
        None => box_nodes(&p.y_box, &res.y),
        Some(c) => {
            let mut axes: Vec<Vec<f64>> = p
                .y_box
                .0
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| axis_nodes(lo, hi, res.y.get(i)))
                .collect();
            axes[c.first] = vec![0.0];
            axes[c.second] = vec![0.0];
            let mut out = Vec::new();
            for base in tensor(&axes) {
                for k in 0..c.count {
                    let th = c.phase + 2.0 * std::f64::consts::PI * k as f64 / c.count as f64;
                    let mut q = base.clone();
                    q[c.first] = c.radius * th.cos();
                    q[c.second] = c.radius * th.sin();
                    out.push(q);
                }
            }
            out
        }
    };
    let z_nodes = box_nodes(&p.z_box, &res.z);
    let u_nodes = match (&p.u_box, p.d) {
        (Some(b), d) if d > 0 => box_nodes(b, &res.u),
        _ => vec![vec![]],
    };
    let u_boundary_nodes = match &p.u_boundary_box {
        Some(b) if b.dim() > 0 => box_nodes(b, &res.u),
        _ => vec![vec![]],
    };

    let count = cells.len() * y_nodes.len() * z_nodes.len() * u_nodes.len()
        + faces.len() * y_nodes.len() * u_boundary_nodes.len();
    let cap = atom_cap();
    if count > cap {
        return Err(MeasureError::ResolutionOverflow { count, cap });
    }
    let mut bulk = Vec::with_capacity(cells.len() * y_nodes.len() * z_nodes.len() * u_nodes.len());
    for c in 0..cells.len() {
        for y in 0..y_nodes.len() {
            for z in 0..z_nodes.len() {
                for u in 0..u_nodes.len() {
                    bulk.push(BulkAtom { cell: c as u32, y: y as u32, z: z as u32, u: u as u32 });
                }
            }
        }
    }
    let mut boundary = Vec::new();
    for f in 0..faces.len() {
        for y in 0..y_nodes.len() {
            for u in 0..u_boundary_nodes.len() {
                boundary.push(BoundaryAtom { face: f as u32, y: y as u32, u: u as u32 });
            }
        }
    }
    Ok(Discretization {
        n,
        m: p.m,
        d: p.d,
        d_boundary: p.d_boundary(),
        omega: p.omega.clone(),
        cells_per_axis: counts,
        cells,
        faces,
        y_nodes,
        z_nodes,
        u_nodes,
        u_boundary_nodes,
        bulk,
        boundary,
        kills: None,
    })
}

/// Removes atoms outside the support constraints. Boundary atoms must
/// satisfy the boundary constraints and the bulk constraints that involve
/// neither `z` nor `u`, which describe the set `Y`.
pub fn select_feasible_atoms(
    p: &Problem,
    d: &Discretization,
    eps_eq: f64,
    eps_ineq: f64,
) -> Result<Discretization, MeasureError> {
    let check = |vals: Result<Vec<f64>, EvalError>, n_eq: usize| -> Result<Vec<bool>, EvalError> {
        let vals = vals?;
        Ok(vals.iter().enumerate().map(|(i, &v)| if i < n_eq { v.abs() > eps_eq } else { v > eps_ineq }).collect())
    };
    let bulk_exprs: Vec<&Expr> = p.eq.iter().chain(&p.ineq).collect();
    let bulk_flags: Vec<Vec<bool>> = d
        .bulk
        .par_iter()
        .map(|a| check(bulk_exprs.iter().map(|e| d.eval_bulk(e, a)).collect(), p.eq.len()))
        .collect::<Result<_, _>>()?;

    let (y_eq, y_ineq) = p.y_set_constraints();
    let bnd_exprs: Vec<&Expr> = p.boundary_eq.iter().chain(y_eq.iter().copied()).collect();
    let bnd_ineq: Vec<&Expr> = p.boundary_ineq.iter().chain(y_ineq.iter().copied()).collect();
    let n_beq = bnd_exprs.len();
    let all_bnd: Vec<&Expr> = bnd_exprs.into_iter().chain(bnd_ineq).collect();
    let bnd_flags: Vec<Vec<bool>> = d
        .boundary
        .par_iter()
        .map(|a| {
            let x = &d.faces[a.face as usize].center;
            let y = &d.y_nodes[a.y as usize];
            let u: &[f64] = if d.d_boundary > 0 { &d.u_boundary_nodes[a.u as usize] } else { &[] };
            let vals = all_bnd.iter().map(|e| e.eval(&Point::new(x, y, &[], u))).collect();
            check(vals, n_beq)
        })
        .collect::<Result<_, _>>()?;

    let mut kills = KillReport {
        eq: vec![0; p.eq.len()],
        ineq: vec![0; p.ineq.len()],
        boundary_eq: vec![0; p.boundary_eq.len()],
        boundary_ineq: vec![0; p.boundary_ineq.len()],
        bulk_before: d.bulk.len(),
        boundary_before: d.boundary.len(),
        ..Default::default()
    };
    let mut bulk = Vec::new();
    for (a, f) in d.bulk.iter().zip(&bulk_flags) {
        for (i, &bad) in f.iter().enumerate() {
            if bad {
                if i < p.eq.len() {
                    kills.eq[i] += 1;
                } else {
                    kills.ineq[i - p.eq.len()] += 1;
                }
            }
        }
        if !f.iter().any(|&b| b) {
            bulk.push(*a);
        }
    }
    let nb_eq = p.boundary_eq.len();
    let n_beq_all = nb_eq + y_eq.len();
    let nb_ineq = p.boundary_ineq.len();
    let mut boundary = Vec::new();
    for (a, f) in d.boundary.iter().zip(&bnd_flags) {
        for (i, &bad) in f.iter().enumerate() {
            if bad {
                if i < nb_eq {
                    kills.boundary_eq[i] += 1;
                } else if i >= n_beq_all && i < n_beq_all + nb_ineq {
                    kills.boundary_ineq[i - n_beq_all] += 1;
                }
            }
        }
        if !f.iter().any(|&b| b) {
            boundary.push(*a);
        }
    }
    kills.bulk_after = bulk.len();
    kills.boundary_after = boundary.len();

    let mut has = vec![false; d.cells.len()];
    for a in &bulk {
        has[a.cell as usize] = true;
    }
    if let Some(cell) = has.iter().position(|&h| !h) {
        return Err(MeasureError::EmptySupport { cell });
    }
    let mut face_has = vec![false; d.faces.len()];
    for a in &boundary {
        face_has[a.face as usize] = true;
    }
    kills.empty_faces = face_has.iter().enumerate().filter(|(_, &h)| !h).map(|(f, _)| f).collect();

    Ok(Discretization { bulk, boundary, kills: Some(kills), ..d.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_problem;

    fn problem(n: usize, extra_spaces: &str, body: &str) -> Problem {
        let omega = vec!["[0, 1]"; n].join(" x ");
        let z = vec!["[-1, 1]"; n].join(" x ");
        let text = format!(
            "occurelax-problem v1\n[domain]\nn = {n}\nomega = {omega}\n[spaces]\nm = 1\ny = [-1, 1]\nz = {z}\n{extra_spaces}[objective]\nL = z11^2\n{body}"
        );
        parse_problem(&text).unwrap()
    }

    #[test]
    fn interval_geometry() {
        let p = problem(1, "", "");
        let d = build_discretization(&p, &Resolution::new(4, 3, 3, 1)).unwrap();
        assert_eq!(d.cells.len(), 4);
        assert!(d.cells.iter().all(|c| c.volume == 0.25));
        assert_eq!(d.faces.len(), 2);
        assert_eq!(d.faces[0].normal, vec![-1.0]);
        assert_eq!(d.faces[1].normal, vec![1.0]);
        assert_eq!(d.faces[0].area, 1.0);
        assert_eq!(d.bulk.len(), 4 * 3 * 3);
    }

    #[test]
    fn unit_square_geometry() {
        let p = problem(2, "", "");
        let d = build_discretization(&p, &Resolution::new(2, 2, 2, 1)).unwrap();
        let total: f64 = d.cells.iter().map(|c| c.volume).sum();
        assert_eq!(total, 1.0);
        assert_eq!(d.faces.len(), 8);
        for f in &d.faces {
            let len: f64 = f.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((len - 1.0).abs() < 1e-12);
            assert_eq!(f.area, 0.5);
            // the face lies on the boundary of its own cell
            let c = &d.cells[f.cell];
            let x = f.center[f.axis];
            assert!(x == c.lower[f.axis] || x == c.upper[f.axis]);
        }
    }

    #[test]
    fn node_grids() {
        assert_eq!(axis_nodes(-1.0, 1.0, 3), vec![-1.0, 0.0, 1.0]);
        assert_eq!(axis_nodes(0.0, 2.0, 1), vec![1.0]);
        assert_eq!(axis_nodes(0.5, 0.5, 7), vec![0.5]);
    }

    #[test]
    fn curved_equality_removes_middle_node() {
        let p = problem(1, "", "[constraints]\nA = y1^2 - 1\n");
        let d = build_discretization(&p, &Resolution::new(2, 3, 3, 1)).unwrap();
        let f = select_feasible_atoms(&p, &d, 1e-9, 1e-9).unwrap();
        assert!(f.bulk.iter().all(|a| f.y_nodes[a.y as usize][0] != 0.0));
        assert_eq!(f.bulk.len(), 2 * 2 * 3);
        let k = f.kills.unwrap();
        assert_eq!(k.eq, vec![2 * 3]);
        // the set Y also restricts the boundary
        assert_eq!(k.boundary_after, 2 * 2);
    }

    #[test]
    fn no_constraints_is_identity() {
        let p = problem(1, "", "");
        let d = build_discretization(&p, &Resolution::new(3, 3, 3, 1)).unwrap();
        let f = select_feasible_atoms(&p, &d, 1e-9, 1e-9).unwrap();
        assert_eq!(f.bulk, d.bulk);
        assert_eq!(f.boundary, d.boundary);
    }

    #[test]
    fn empty_support_is_an_error() {
        let p = problem(1, "", "[constraints]\nB = 2 - y1^2\n");
        let d = build_discretization(&p, &Resolution::new(2, 3, 3, 1)).unwrap();
        assert_eq!(select_feasible_atoms(&p, &d, 1e-9, 1e-9), Err(MeasureError::EmptySupport { cell: 0 }));
    }

    #[test]
    fn atom_cap_is_enforced() {
        let p = problem(2, "", "");
        let r = Resolution::new(400, 101, 101, 1);
        assert!(matches!(build_discretization(&p, &r), Err(MeasureError::ResolutionOverflow { .. })));
    }

    #[test]
    fn circle_placement() {
        let text = "occurelax-problem v1\n[domain]\nn = 1\nomega = [0, 1]\n[spaces]\nm = 2\n\
                    y = [-1, 1] x [-1, 1]\nz = [-1, 1] x [-1, 1]\n\
                    y_circle = 1, 2, 4, 1.4142135623730951, 0.7853981633974483\n[objective]\nL = y1*y2\n";
        let p = parse_problem(text).unwrap();
        let d = build_discretization(&p, &Resolution::new(1, 3, 3, 1)).unwrap();
        assert_eq!(d.y_nodes.len(), 4);
        for s1 in [-1.0, 1.0] {
            for s2 in [-1.0, 1.0] {
                assert!(d.y_nodes.iter().any(|q| (q[0] - s1).abs() < 1e-12 && (q[1] - s2).abs() < 1e-12));
            }
        }
    }
}
