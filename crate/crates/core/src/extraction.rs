//! Candidate functions from optimal measures: per-cell conditional
//! distributions, their centroids, and checks that the centroid field is a
//! feasible function for the original problem.

use std::fmt::Write as _;

use thiserror::Error;

use crate::convexify::{hull_distance, ConvexifyError};
use crate::dsl::{Problem, TestSpace};
use crate::expr::{probe_shape, EvalError, Expr, Point, ShapeBox, ShapeKind};
use crate::lp::LpStatus;
use crate::measure::{Discretization, MeasureSolution, TestBasis};

/// Cells (faces) whose mass ratio is at or below this are flagged.
pub const ZERO_MASS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractionError {
    #[error("solution is not optimal ({0})")]
    NotOptimal(LpStatus),
    #[error("every cell carries zero mass")]
    AllMassDegenerate,
    #[error("solution has {got} entries, discretization has {want} atoms")]
    SizeMismatch { got: usize, want: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Convexify(#[from] ConvexifyError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentroidField {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Per cell: `(bulk atom index, conditional probability)`, sorted by
    /// the atom's node indices.
    pub weights: Vec<Vec<(usize, f64)>>,
    pub y: Vec<Vec<f64>>,
    /// Row-major `m × n` per cell.
    pub z: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// Cell mass divided by cell volume.
    pub mass_ratio: Vec<f64>,
    pub flagged: Vec<bool>,
    /// Per face: conditional probabilities over boundary atoms.
    pub boundary_weights: Vec<Vec<(usize, f64)>>,
    pub boundary_y: Vec<Vec<f64>>,
    pub boundary_u: Vec<Vec<f64>>,
    pub boundary_mass_ratio: Vec<f64>,
    /// Faces without boundary mass take the trace of their cell centroid.
    pub boundary_flagged: Vec<bool>,
}

fn weighted_mean(points: impl Iterator<Item = (f64, Vec<f64>)>, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (w, p) in points {
        for (o, v) in out.iter_mut().zip(p) {
            *o += w * v;
        }
    }
    out
}

/// Disintegrates the optimal measure against the cell partition.
pub fn extract_centroids(sol: &MeasureSolution, d: &Discretization) -> Result<CentroidField, ExtractionError> {
    if sol.status != LpStatus::Optimal {
        return Err(ExtractionError::NotOptimal(sol.status));
    }
    if sol.bulk.len() != d.bulk.len() {
        return Err(ExtractionError::SizeMismatch { got: sol.bulk.len(), want: d.bulk.len() });
    }
    if sol.boundary.len() != d.boundary.len() {
        return Err(ExtractionError::SizeMismatch { got: sol.boundary.len(), want: d.boundary.len() });
    }
    let (n, m) = (d.n, d.m);
    let nk = d.cells.len();
    let mut cf = CentroidField {
        n,
        m,
        d: d.d,
        weights: vec![vec![]; nk],
        y: vec![vec![0.0; m]; nk],
        z: vec![vec![0.0; m * n]; nk],
        u: vec![vec![0.0; d.d]; nk],
        mass_ratio: vec![0.0; nk],
        flagged: vec![true; nk],
        boundary_weights: vec![vec![]; d.faces.len()],
        boundary_y: vec![vec![0.0; m]; d.faces.len()],
        boundary_u: vec![vec![0.0; d.d_boundary]; d.faces.len()],
        boundary_mass_ratio: vec![0.0; d.faces.len()],
        boundary_flagged: vec![true; d.faces.len()],
    };
    for (k, range) in d.cell_ranges().into_iter().enumerate() {
        let mut atoms: Vec<usize> = range.filter(|&a| sol.bulk[a] > 0.0).collect();
        atoms.sort_by_key(|&a| (d.bulk[a].y, d.bulk[a].z, d.bulk[a].u));
        let mass: f64 = atoms.iter().map(|&a| sol.bulk[a]).sum();
        cf.mass_ratio[k] = mass;
        if mass <= ZERO_MASS {
            continue;
        }
        cf.flagged[k] = false;
        cf.weights[k] = atoms.iter().map(|&a| (a, sol.bulk[a] / mass)).collect();
        let w = &cf.weights[k];
        cf.y[k] = weighted_mean(w.iter().map(|&(a, p)| (p, d.y_nodes[d.bulk[a].y as usize].clone())), m);
        cf.z[k] = weighted_mean(w.iter().map(|&(a, p)| (p, d.z_nodes[d.bulk[a].z as usize].clone())), m * n);
        if d.d > 0 {
            cf.u[k] = weighted_mean(w.iter().map(|&(a, p)| (p, d.u_nodes[d.bulk[a].u as usize].clone())), d.d);
        }
    }
    if cf.flagged.iter().all(|&f| f) {
        return Err(ExtractionError::AllMassDegenerate);
    }
    for (f, range) in d.face_ranges().into_iter().enumerate() {
        let mut atoms: Vec<usize> = range.filter(|&a| sol.boundary[a] > 0.0).collect();
        atoms.sort_by_key(|&a| (d.boundary[a].y, d.boundary[a].u));
        let mass: f64 = atoms.iter().map(|&a| sol.boundary[a]).sum();
        cf.boundary_mass_ratio[f] = mass;
        if mass <= ZERO_MASS {
            cf.boundary_y[f] = cf.y[d.faces[f].cell].clone();
            continue;
        }
        cf.boundary_flagged[f] = false;
        cf.boundary_weights[f] = atoms.iter().map(|&a| (a, sol.boundary[a] / mass)).collect();
        let w = &cf.boundary_weights[f];
        cf.boundary_y[f] = weighted_mean(w.iter().map(|&(a, p)| (p, d.y_nodes[d.boundary[a].y as usize].clone())), m);
        if d.d_boundary > 0 {
            cf.boundary_u[f] = weighted_mean(
                w.iter().map(|&(a, p)| (p, d.u_boundary_nodes[d.boundary[a].u as usize].clone())),
                d.d_boundary,
            );
        }
    }
    Ok(cf)
}

impl CentroidField {
    fn point<'a>(&'a self, d: &'a Discretization, k: usize) -> Point<'a> {
        Point::new(&d.cells[k].center, &self.y[k], &self.z[k], &self.u[k])
    }

    fn face_point<'a>(&'a self, d: &'a Discretization, f: usize) -> Point<'a> {
        Point::new(&d.faces[f].center, &self.boundary_y[f], &[], &self.boundary_u[f])
    }

    /// `cell,x_1..,y_1..,z_11..,u_1..,mass_ratio,flagged`.
    pub fn to_csv(&self, d: &Discretization) -> String {
        let mut head = vec!["cell".to_string()];
        head.extend((1..=self.n).map(|j| format!("x_{j}")));
        head.extend((1..=self.m).map(|i| format!("y_{i}")));
        for i in 1..=self.m {
            head.extend((1..=self.n).map(|j| format!("z_{i}{j}")));
        }
        head.extend((1..=self.d).map(|r| format!("u_{r}")));
        head.push("mass_ratio".into());
        head.push("flagged".into());
        let mut s = head.join(",");
        s.push('\n');
        for k in 0..self.y.len() {
            let _ = write!(s, "{k}");
            for v in d.cells[k].center.iter().chain(&self.y[k]).chain(&self.z[k]).chain(&self.u[k]) {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{},{}", self.mass_ratio[k], u8::from(self.flagged[k]));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Violated, but the constraint's shape gives no transfer guarantee.
    JensenInapplicable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintCheck {
    pub kind: &'static str,
    pub index: usize,
    /// `max |A|` for equalities, `max B` or `∫ C` for inequalities.
    pub violation: f64,
    pub shape: ShapeKind,
    pub status: CheckStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    /// Per `(affine basis entry, direction)`: residual of the weak
    /// derivative identity for the centroid field.
    pub weak_derivative: Vec<f64>,
    pub weak_derivative_max: f64,
    /// Per weak-family test row: `|Σ_k |cell| avg ∂_jφ V_j|`.
    pub weak_family_max: f64,
    pub constraints: Vec<ConstraintCheck>,
    pub y_hull_distance: f64,
    pub z_hull_distance: f64,
    pub flagged_cells: usize,
    pub tol: f64,
}

impl FeasibilityReport {
    /// Everything within tolerance except constraints the centroid is not
    /// guaranteed to satisfy.
    pub fn passed(&self) -> bool {
        self.weak_derivative_max <= self.tol
            && self.weak_family_max <= self.tol
            && self.y_hull_distance <= self.tol
            && self.z_hull_distance <= self.tol
            && self.constraints.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.constraints
            .iter()
            .filter(|c| c.status == CheckStatus::JensenInapplicable)
            .map(|c| format!("{} {} violated by {:.3e} at centroids (not {}; no transfer)", c.kind, c.index + 1, c.violation, if c.kind.contains('A') { "affine" } else { "convex" }))
            .collect()
    }

    /// `check,index,value,status` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,index,value,status\n");
        let st = |ok: bool| if ok { "pass" } else { "fail" };
        let _ = writeln!(s, "weak_derivative,0,{},{}", self.weak_derivative_max, st(self.weak_derivative_max <= self.tol));
        let _ = writeln!(s, "weak_family,0,{},{}", self.weak_family_max, st(self.weak_family_max <= self.tol));
        for c in &self.constraints {
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::JensenInapplicable => "warn",
            };
            let _ = writeln!(s, "{},{},{},{status}", c.kind, c.index + 1, c.violation);
        }
        let _ = writeln!(s, "y_hull,0,{},{}", self.y_hull_distance, st(self.y_hull_distance <= self.tol));
        let _ = writeln!(s, "z_hull,0,{},{}", self.z_hull_distance, st(self.z_hull_distance <= self.tol));
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "centroid feasibility (tol {:.1e}): {}", self.tol, if self.passed() { "pass" } else { "FAIL" });
        let _ = writeln!(s, "  weak derivative residual  {:.3e}", self.weak_derivative_max);
        let _ = writeln!(s, "  weak family residual      {:.3e}", self.weak_family_max);
        let _ = writeln!(s, "  hull distance y / z       {:.3e} / {:.3e}", self.y_hull_distance, self.z_hull_distance);
        let _ = writeln!(s, "  flagged cells             {}", self.flagged_cells);
        for c in &self.constraints {
            let _ = writeln!(s, "  {} {:<3} {:.3e} {:?} {:?}", c.kind, c.index + 1, c.violation, c.shape, c.status);
        }
        for w in self.warnings() {
            let _ = writeln!(s, "  warning: {w}");
        }
        s
    }
}

fn shape_over(p: &Problem, e: &Expr, x: &[f64], boundary: bool) -> Result<ShapeKind, EvalError> {
    let bx = ShapeBox {
        x: x.to_vec(),
        y: p.y_box.0.clone(),
        z: if boundary { vec![] } else { p.z_box.0.clone() },
        u: if boundary {
            p.u_boundary_box.as_ref().map_or(vec![], |b| b.0.clone())
        } else {
            p.u_box.as_ref().map_or(vec![], |b| b.0.clone())
        },
    };
    Ok(probe_shape(e, &bx, 64, 7)?.kind)
}

fn status(violation: f64, tol: f64, guaranteed: bool) -> CheckStatus {
    if violation <= tol {
        CheckStatus::Pass
    } else if guaranteed {
        CheckStatus::Fail
    } else {
        CheckStatus::JensenInapplicable
    }
}

/// Checks the centroid field against the weak derivative identity for the
/// `y`-affine entries of `tb`, the problem's weak families, the pointwise
/// and integral constraints, and hull membership.
pub fn check_feasibility(
    p: &Problem,
    d: &Discretization,
    cf: &CentroidField,
    tb: &TestBasis,
    tol: f64,
) -> Result<FeasibilityReport, ExtractionError> {
    let (n, m) = (d.n, d.m);
    let live: Vec<usize> = (0..d.cells.len()).filter(|&k| !cf.flagged[k]).collect();
    let (xn, yn) = (&tb.x_norm, &tb.y_norm);

    let mut weak_derivative = vec![];
    for e in tb.entries.iter().filter(|e| e.y_degree() <= 1) {
        for j in 0..n {
            let mut r = 0.0;
            for &k in &live {
                let c = &d.cells[k];
                let g = e.y_gradient(yn, &cf.y[k]);
                let mut v = e.cell_average(xn, c, Some(j)) * e.y_value(yn, &cf.y[k]);
                let pa = e.cell_average(xn, c, None);
                for i in 0..m {
                    v += pa * g[i] * cf.z[k][i * n + j];
                }
                r += c.volume * v;
            }
            for (f, face) in d.faces.iter().enumerate() {
                if face.axis == j {
                    r -= face.area * face.side * e.face_average(xn, face) * e.y_value(yn, &cf.boundary_y[f]);
                }
            }
            weak_derivative.push(r.abs());
        }
    }

    let mut weak_family_max: f64 = 0.0;
    for w in &p.weak {
        let tests = match w.test_space {
            TestSpace::Compact => &tb.compact_entries,
            TestSpace::Free => &tb.free_entries,
        };
        for t in tests {
            let mut s = 0.0;
            for &k in &live {
                let c = &d.cells[k];
                let pt = cf.point(d, k);
                for (j, v) in w.coefficient.iter().enumerate() {
                    let a = t.cell_average(xn, c, Some(j));
                    if a != 0.0 {
                        s += c.volume * a * v.eval(&pt)?;
                    }
                }
            }
            weak_family_max = weak_family_max.max(s.abs());
        }
    }

    let probe_x = &d.cells[live[0]].center;
    let mut constraints = vec![];
    for (i, a) in p.eq.iter().enumerate() {
        let shape = shape_over(p, a, probe_x, false)?;
        let mut v: f64 = 0.0;
        for &k in &live {
            v = v.max(a.eval(&cf.point(d, k))?.abs());
        }
        constraints.push(ConstraintCheck { kind: "A", index: i, violation: v, shape, status: status(v, tol, shape == ShapeKind::Affine) });
    }
    for (i, b) in p.ineq.iter().enumerate() {
        let shape = shape_over(p, b, probe_x, false)?;
        let mut v = f64::NEG_INFINITY;
        for &k in &live {
            v = v.max(b.eval(&cf.point(d, k))?);
        }
        constraints.push(ConstraintCheck { kind: "B", index: i, violation: v, shape, status: status(v, tol, shape != ShapeKind::Nonconvex) });
    }
    for (i, c) in p.integral.iter().enumerate() {
        let shape = shape_over(p, c, probe_x, false)?;
        let mut v = 0.0;
        for &k in &live {
            v += d.cells[k].volume * c.eval(&cf.point(d, k))?;
        }
        constraints.push(ConstraintCheck { kind: "C", index: i, violation: v, shape, status: status(v, tol, shape != ShapeKind::Nonconvex) });
    }
    if !d.faces.is_empty() {
        let fx = &d.faces[0].center;
        for (i, a) in p.boundary_eq.iter().enumerate() {
            let shape = shape_over(p, a, fx, true)?;
            let mut v: f64 = 0.0;
            for f in 0..d.faces.len() {
                if !cf.boundary_flagged[f] {
                    v = v.max(a.eval(&cf.face_point(d, f))?.abs());
                }
            }
            constraints.push(ConstraintCheck { kind: "A_boundary", index: i, violation: v, shape, status: status(v, tol, shape == ShapeKind::Affine) });
        }
        for (i, b) in p.boundary_ineq.iter().enumerate() {
            let shape = shape_over(p, b, fx, true)?;
            let mut v = f64::NEG_INFINITY;
            for f in 0..d.faces.len() {
                if !cf.boundary_flagged[f] {
                    v = v.max(b.eval(&cf.face_point(d, f))?);
                }
            }
            constraints.push(ConstraintCheck { kind: "B_boundary", index: i, violation: v, shape, status: status(v, tol, shape != ShapeKind::Nonconvex) });
        }
        for (i, c) in p.boundary_integral.iter().enumerate() {
            let shape = shape_over(p, c, fx, true)?;
            let mut v = 0.0;
            for f in 0..d.faces.len() {
                v += d.faces[f].area * c.eval(&cf.face_point(d, f))?;
            }
            constraints.push(ConstraintCheck { kind: "C_boundary", index: i, violation: v, shape, status: status(v, tol, shape != ShapeKind::Nonconvex) });
        }
    }

    let mut used_y = vec![false; d.y_nodes.len()];
    let mut used_z = vec![false; d.z_nodes.len()];
    for a in &d.bulk {
        used_y[a.y as usize] = true;
        used_z[a.z as usize] = true;
    }
    let ys: Vec<Vec<f64>> = d.y_nodes.iter().zip(&used_y).filter(|p| *p.1).map(|p| p.0.clone()).collect();
    let zs: Vec<Vec<f64>> = d.z_nodes.iter().zip(&used_z).filter(|p| *p.1).map(|p| p.0.clone()).collect();
    let mut y_hull: f64 = 0.0;
    let mut z_hull: f64 = 0.0;
    for &k in &live {
        y_hull = y_hull.max(hull_distance(&ys, &cf.y[k])?);
        z_hull = z_hull.max(hull_distance(&zs, &cf.z[k])?);
    }

    let weak_derivative_max = weak_derivative.iter().fold(0.0, |a: f64, &b| a.max(b));
    Ok(FeasibilityReport {
        weak_derivative,
        weak_derivative_max,
        weak_family_max,
        constraints,
        y_hull_distance: y_hull,
        z_hull_distance: z_hull,
        flagged_cells: cf.flagged.iter().filter(|&&f| f).count(),
        tol,
    })
}

/// `∫ L dμ + ∫ L∂ dμ∂` minus the same costs evaluated at the centroids.
/// Nonnegative up to rounding whenever `L` and `L∂` are convex in the
/// averaged variables.
pub fn jensen_gap(p: &Problem, d: &Discretization, sol: &MeasureSolution, cf: &CentroidField) -> Result<f64, ExtractionError> {
    let mut gap = 0.0;
    for (k, c) in d.cells.iter().enumerate() {
        if cf.flagged[k] {
            continue;
        }
        let mut atoms = 0.0;
        for &(a, _) in &cf.weights[k] {
            atoms += sol.bulk[a] * d.eval_bulk(&p.lagrangian, &d.bulk[a])?;
        }
        gap += c.volume * (atoms - cf.mass_ratio[k] * p.lagrangian.eval(&cf.point(d, k))?);
    }
    if !p.boundary_lagrangian.is_zero() {
        for (f, face) in d.faces.iter().enumerate() {
            if cf.boundary_flagged[f] {
                continue;
            }
            let mut atoms = 0.0;
            for &(a, _) in &cf.boundary_weights[f] {
                atoms += sol.boundary[a] * d.eval_boundary(&p.boundary_lagrangian, &d.boundary[a])?;
            }
            let at_centroid = p.boundary_lagrangian.eval(&cf.face_point(d, f))?;
            gap += face.area * (atoms - cf.boundary_mass_ratio[f] * at_centroid);
        }
    }
    Ok(gap)
}
