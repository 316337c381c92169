use rayon::prelude::*;

use super::basis::{BasisMode, TestBasis, TestFunction};
use super::{Discretization, MeasureError};
use crate::dsl::{Problem, TestSpace};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation, RowTag, SolveOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegralSource {
    Bulk(usize),
    Boundary(usize),
}

/// A relaxation LP together with the meaning of its rows and columns.
/// Columns `0..n_bulk` are the bulk atoms of the discretization in order,
/// followed by the `n_boundary` boundary atoms.
#[derive(Clone, Debug)]
pub struct Relaxation {
    pub lp: LinearProgram,
    pub mode: BasisMode,
    pub n_bulk: usize,
    pub n_boundary: usize,
    pub mass_row: usize,
    /// `(row, basis entry, direction)` per Liouville row.
    pub liouville: Vec<(usize, usize, usize)>,
    pub integral: Vec<(usize, IntegralSource)>,
    /// `(row, family, test entry)` per weak-form row.
    pub weak: Vec<(usize, usize, usize)>,
}

/// Builds the LP over the atoms of a support-filtered discretization.
/// Bulk coefficients carry the cell volume and boundary coefficients the
/// facet area, with exact cell and facet averages for the polynomial test
/// functions and the midpoint rule for the problem data.
pub fn assemble_relaxation(p: &Problem, d: &Discretization, tb: &TestBasis) -> Result<Relaxation, MeasureError> {
    if p.n != d.n || p.m != d.m || tb.entries.first().is_some_and(|e| e.x_exp.len() != d.n || e.y_exp.len() != d.m) {
        return Err(MeasureError::DimensionMismatch(format!(
            "problem (n={}, m={}) vs discretization (n={}, m={})",
            p.n, p.m, d.n, d.m
        )));
    }
    let n = d.n;
    let m = d.m;
    let n_bulk = d.bulk.len();
    let n_bnd = d.boundary.len();
    let mut lp = LinearProgram::new();

    let bulk_cost: Vec<f64> = d
        .bulk
        .par_iter()
        .map(|a| Ok(d.cells[a.cell as usize].volume * d.eval_bulk(&p.lagrangian, a)?))
        .collect::<Result<_, MeasureError>>()?;
    let bnd_cost: Vec<f64> = d
        .boundary
        .par_iter()
        .map(|a| Ok(d.faces[a.face as usize].area * d.eval_boundary(&p.boundary_lagrangian, a)?))
        .collect::<Result<_, MeasureError>>()?;
    for (i, c) in bulk_cost.into_iter().enumerate() {
        lp.add_column(format!("MU_{i}"), c);
    }
    for (i, c) in bnd_cost.into_iter().enumerate() {
        lp.add_column(format!("MB_{i}"), c);
    }

    let mass: Vec<(usize, f64)> = d.bulk.iter().enumerate().map(|(i, a)| (i, d.cells[a.cell as usize].volume)).collect();
    let mass_row = lp.add_row(RowTag::Mass, Relation::Eq, mass, d.omega_volume());

    let xn = &tb.x_norm;
    let yn = &tb.y_norm;
    let y_q: Vec<Vec<f64>> = tb.entries.iter().map(|e| d.y_nodes.iter().map(|y| e.y_value(yn, y)).collect()).collect();
    let y_g: Vec<Vec<Vec<f64>>> =
        tb.entries.iter().map(|e| d.y_nodes.iter().map(|y| e.y_gradient(yn, y)).collect()).collect();

    let jobs: Vec<(usize, usize)> = (0..tb.entries.len()).flat_map(|e| (0..n).map(move |j| (e, j))).collect();
    let rows: Vec<Vec<(usize, f64)>> = jobs
        .par_iter()
        .map(|&(e, j)| {
            let f = &tb.entries[e];
            let da: Vec<f64> = d.cells.iter().map(|c| f.cell_average(xn, c, Some(j))).collect();
            let pa: Vec<f64> = d.cells.iter().map(|c| f.cell_average(xn, c, None)).collect();
            let mut coeffs = Vec::with_capacity(n_bulk);
            for (col, a) in d.bulk.iter().enumerate() {
                let k = a.cell as usize;
                let yq = y_q[e][a.y as usize];
                let yg = &y_g[e][a.y as usize];
                let z = &d.z_nodes[a.z as usize];
                let mut v = da[k] * yq;
                if pa[k] != 0.0 {
                    let mut s = 0.0;
                    for i in 0..m {
                        s += yg[i] * z[i * n + j];
                    }
                    v += pa[k] * s;
                }
                coeffs.push((col, d.cells[k].volume * v));
            }
            for (b, a) in d.boundary.iter().enumerate() {
                let face = &d.faces[a.face as usize];
                if face.axis != j {
                    continue;
                }
                let v = f.face_average(xn, face) * y_q[e][a.y as usize];
                coeffs.push((n_bulk + b, -face.area * face.side * v));
            }
            coeffs
        })
        .collect();
    let mut liouville = Vec::with_capacity(jobs.len());
    for (k, ((e, j), coeffs)) in jobs.into_iter().zip(rows).enumerate() {
        let r = lp.add_row(RowTag::Liouville(k), Relation::Eq, coeffs, 0.0);
        liouville.push((r, e, j));
    }

    let mut integral = Vec::new();
    for (i, c) in p.integral.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> = d
            .bulk
            .par_iter()
            .enumerate()
            .map(|(col, a)| Ok((col, d.cells[a.cell as usize].volume * d.eval_bulk(c, a)?)))
            .collect::<Result<_, MeasureError>>()?;
        let k = lp.next_ordinal(RowTag::Integral);
        integral.push((lp.add_row(RowTag::Integral(k), Relation::Le, coeffs, 0.0), IntegralSource::Bulk(i)));
    }
    for (i, c) in p.boundary_integral.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> = d
            .boundary
            .par_iter()
            .enumerate()
            .map(|(b, a)| Ok((n_bulk + b, d.faces[a.face as usize].area * d.eval_boundary(c, a)?)))
            .collect::<Result<_, MeasureError>>()?;
        let k = lp.next_ordinal(RowTag::Integral);
        integral.push((lp.add_row(RowTag::Integral(k), Relation::Le, coeffs, 0.0), IntegralSource::Boundary(i)));
    }

    let mut weak = Vec::new();
    for (fam, w) in p.weak.iter().enumerate() {
        let tests: &[TestFunction] = match w.test_space {
            TestSpace::Compact => &tb.compact_entries,
            TestSpace::Free => &tb.free_entries,
        };
        // V(atom) once per family
        let v: Vec<Vec<f64>> = d
            .bulk
            .par_iter()
            .map(|a| w.coefficient.iter().map(|e| d.eval_bulk(e, a)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()?;
        for (t, f) in tests.iter().enumerate() {
            let grads: Vec<Vec<f64>> =
                d.cells.iter().map(|c| (0..n).map(|j| f.cell_average(xn, c, Some(j))).collect()).collect();
            let coeffs: Vec<(usize, f64)> = d
                .bulk
                .iter()
                .enumerate()
                .map(|(col, a)| {
                    let k = a.cell as usize;
                    let s: f64 = (0..n).map(|j| grads[k][j] * v[col][j]).sum();
                    (col, d.cells[k].volume * s)
                })
                .collect();
            let k = lp.next_ordinal(RowTag::Weak);
            weak.push((lp.add_row(RowTag::Weak(k), Relation::Eq, coeffs, 0.0), fam, t));
        }
    }

    Ok(Relaxation { lp, mode: tb.mode, n_bulk, n_boundary: n_bnd, mass_row, liouville, integral, weak })
}

#[derive(Clone, Copy, Debug)]
pub struct RelaxationOptions {
    pub solve: SolveOptions,
    /// After the optimum is found, pick among (near-)optimal solutions one
    /// whose `x`-marginal is closest to the cell volumes.
    pub center: bool,
    /// Relative slack on the optimal value allowed while centering.
    pub center_slack: f64,
    /// The slack grows by factors of 100 up to this cap while the max
    /// marginal deviation stays above `marginal_target`.
    pub max_center_slack: f64,
    pub marginal_target: f64,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            solve: SolveOptions::default(),
            center: true,
            center_slack: 1e-7,
            max_center_slack: 1e-2,
            marginal_target: 0.02,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeasureSolution {
    pub status: LpStatus,
    /// Optimal LP value.
    pub value: f64,
    /// Density per unit volume of each bulk atom.
    pub bulk: Vec<f64>,
    /// Density per unit area of each boundary atom.
    pub boundary: Vec<f64>,
    /// Dual value per LP row, from the optimal vertex.
    pub duals: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Max relative marginal deviation of the optimal vertex itself.
    pub vertex_marginal_deviation: f64,
    pub centered: bool,
    /// Relative slack on the value used by the accepted centering, 0 when
    /// not centered.
    pub center_slack: f64,
    pub iterations: usize,
}

impl MeasureSolution {
    /// `∫ L dμ + ∫ L∂ dμ∂` re-evaluated at the stored weights.
    pub fn objective(&self, rel: &Relaxation) -> f64 {
        let mut x = self.bulk.clone();
        x.extend_from_slice(&self.boundary);
        rel.lp.objective(&x)
    }
}

/// Per cell, `|μ(cell) − |cell|| / |cell|` for bulk densities `rho`.
pub fn marginal_deviation(d: &Discretization, rho: &[f64]) -> Vec<f64> {
    let mut mass = vec![0.0; d.cells.len()];
    for (a, &r) in d.bulk.iter().zip(rho) {
        mass[a.cell as usize] += r;
    }
    mass.iter().map(|s| (s - 1.0).abs()).collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b))
}

/// The relaxation LP with a column `DEV` bounding every cell's marginal
/// deviation and a row capping the original objective at `cap`. With
/// `dev_cap` the `DEV` column is bounded and the original costs are kept;
/// otherwise `DEV` is the only cost.
fn centering_lp(rel: &Relaxation, d: &Discretization, cap: f64, dev_cap: Option<f64>) -> LinearProgram {
    let mut lp = rel.lp.clone();
    let objective: Vec<(usize, f64)> =
        lp.columns.iter().enumerate().filter(|(_, c)| c.cost != 0.0).map(|(j, c)| (j, c.cost)).collect();
    let t = match dev_cap {
        Some(cap) => lp.add_bounded_column("DEV", 0.0, 0.0, cap),
        None => {
            for c in lp.columns.iter_mut() {
                c.cost = 0.0;
            }
            lp.add_column("DEV", 1.0)
        }
    };
    let mut k = lp.next_ordinal(RowTag::Plumbing);
    lp.add_row(RowTag::Plumbing(k), Relation::Le, objective, cap);
    k += 1;
    for range in d.cell_ranges() {
        let cols: Vec<(usize, f64)> = range.map(|i| (i, 1.0)).collect();
        let mut up = cols.clone();
        up.push((t, -1.0));
        lp.add_row(RowTag::Plumbing(k), Relation::Le, up, 1.0);
        let mut down = cols;
        down.push((t, 1.0));
        lp.add_row(RowTag::Plumbing(k + 1), Relation::Ge, down, 1.0);
        k += 2;
    }
    lp
}

pub fn solve_relaxation(
    rel: &Relaxation,
    d: &Discretization,
    opts: &RelaxationOptions,
) -> Result<MeasureSolution, MeasureError> {
    let sol = solve_lp(&rel.lp, &opts.solve)?;
    let split = |x: &[f64]| (x[..rel.n_bulk].to_vec(), x[rel.n_bulk..rel.n_bulk + rel.n_boundary].to_vec());
    let (mut bulk, mut boundary) = split(&sol.x);
    let vertex_dev = max_of(&marginal_deviation(d, &bulk));
    let (mut centered, mut center_slack) = (false, 0.0);
    let mut iterations = sol.iterations;
    if sol.status == LpStatus::Optimal && opts.center && d.cells.len() > 1 {
        let mut slack = opts.center_slack;
        let mut best: Option<(Vec<f64>, f64, f64)> = None;
        loop {
            let cap = sol.objective + slack * (1.0 + sol.objective.abs());
            let c = solve_lp(&centering_lp(rel, d, cap, None), &opts.solve)?;
            iterations += c.iterations;
            if c.status == LpStatus::Optimal {
                let dev = max_of(&marginal_deviation(d, &c.x[..rel.n_bulk]));
                best = Some((c.x, dev, slack));
                if dev <= opts.marginal_target {
                    break;
                }
            }
            if slack >= opts.max_center_slack {
                break;
            }
            slack = (slack * 100.0).min(opts.max_center_slack);
        }
        if let Some((mut x, dev, slack)) = best {
            if slack > opts.center_slack {
                // the wider slack only bought a flatter marginal, so take
                // back as much of the value as that marginal allows
                let cap = sol.objective + slack * (1.0 + sol.objective.abs());
                let lp = centering_lp(rel, d, cap, Some(dev * (1.0 + 1e-9) + 1e-12));
                let c = solve_lp(&lp, &opts.solve)?;
                iterations += c.iterations;
                if c.status == LpStatus::Optimal {
                    x = c.x;
                }
            }
            (bulk, boundary) = split(&x);
            centered = true;
            center_slack = slack;
        }
    }
    Ok(MeasureSolution {
        status: sol.status,
        value: sol.objective,
        bulk,
        boundary,
        duals: sol.duals,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        vertex_marginal_deviation: vertex_dev,
        centered,
        center_slack,
        iterations,
    })
}
