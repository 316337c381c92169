//! Fiberwise convex envelopes over the feasible samples of each cell, and
//! the convexified problem over nodal functions.
//!
//! The envelope of `f` on a sample set is the lower convex hull of the
//! lifted points `(q, f(q))`. At a query `q` it is the value of the LP
//! `min Σ λ_s f_s` over probability vectors `λ` with barycenter `q`; the LP
//! is infeasible exactly when `q` lies outside the hull of the samples, and
//! its duals are a supporting affine functional.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::Problem;
use crate::expr::{probe_shape, Block, EvalError, Expr, ShapeBox, ShapeKind};
use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus, Relation, RowTag, SolveOptions};
use crate::measure::{build_test_basis, BasisMode, Discretization, MeasureError, TestFunction};
use crate::dsl::TestSpace;
use crate::mesh::VertexMesh;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvexifyError {
    #[error("fiber has no samples")]
    EmptyFiber,
    #[error("samples have inconsistent dimensions")]
    DimensionMismatch,
    #[error("no nodal function satisfies the hull constraints on this mesh")]
    NoFeasiblePoint,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// `q ↦ slope·q + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub slope: Vec<f64>,
    pub offset: f64,
}

impl Affine {
    pub fn eval(&self, q: &[f64]) -> f64 {
        self.offset + self.slope.iter().zip(q).map(|(a, b)| a * b).sum::<f64>()
    }

    fn close_to(&self, o: &Affine) -> bool {
        let near = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        near(self.offset, o.offset) && self.slope.iter().zip(&o.slope).all(|(&a, &b)| near(a, b))
    }
}

#[derive(Clone, Debug)]
pub struct FiberEnvelope {
    pub samples: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Supporting functionals of the lower hull; empty when the table was
    /// built without them.
    pub functionals: Vec<Affine>,
    pub affine_rank: usize,
    /// The samples span a lower-dimensional affine subspace.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnvelopeValue {
    Inside(f64),
    OutsideHull,
}

impl FiberEnvelope {
    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    /// `max_j ℓ_j(q)`, or `-∞` without functionals.
    pub fn max_affine(&self, q: &[f64]) -> f64 {
        self.functionals.iter().map(|l| l.eval(q)).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn hull_lp(samples: &[Vec<f64>], values: &[f64], q: &[f64]) -> LinearProgram {
    let mut lp = LinearProgram::new();
    for (s, &v) in values.iter().enumerate() {
        lp.add_column(format!("L_{s}"), v);
    }
    lp.add_row(RowTag::Mass, Relation::Eq, (0..samples.len()).map(|s| (s, 1.0)).collect(), 1.0);
    for (i, &qi) in q.iter().enumerate() {
        let coeffs = samples.iter().enumerate().map(|(s, p)| (s, p[i])).collect();
        lp.add_row(RowTag::Plumbing(i), Relation::Eq, coeffs, qi);
    }
    lp
}

/// Lower-hull value at `q` with a supporting functional, or `None` outside
/// the hull of the samples.
fn lower_hull_at(samples: &[Vec<f64>], values: &[f64], q: &[f64]) -> Result<Option<(f64, Affine)>, LpError> {
    let lp = hull_lp(samples, values, q);
    let sol = solve_lp(&lp, &SolveOptions::default())?;
    match sol.status {
        LpStatus::Optimal => {
            // rows are added in order, so row 0 is the mass row
            let offset = sol.duals[0];
            let slope = sol.duals[1..].to_vec();
            Ok(Some((sol.objective, Affine { slope, offset })))
        }
        _ => Ok(None),
    }
}

fn affine_rank(samples: &[Vec<f64>]) -> usize {
    let dim = samples[0].len();
    let mut rows: Vec<Vec<f64>> =
        samples[1..].iter().map(|s| s.iter().zip(&samples[0]).map(|(a, b)| a - b).collect()).collect();
    let scale = rows.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let mut rank = 0;
    for col in 0..dim {
        let Some(piv) = (rank..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs())) else {
            break;
        };
        if rows[piv][col].abs() <= 1e-10 * scale {
            continue;
        }
        rows.swap(rank, piv);
        let p = rows[rank].clone();
        for r in rows.iter_mut().skip(rank + 1) {
            let f = r[col] / p[col];
            if f != 0.0 {
                for c in col..dim {
                    r[c] -= f * p[c];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Lower convex hull of `(samples, values)` as a list of supporting affine
/// functionals. Each sample contributes the functional found by the hull
/// LP at that sample; midpoints between each sample and its nearest
/// neighbours are then probed and any functional that lifts the max-affine
/// form there is added, until no probe improves. The form is exact at the
/// samples and probes and never above the envelope; [`envelope_value`] is
/// exact everywhere.
pub fn compute_envelope(samples: Vec<Vec<f64>>, values: Vec<f64>) -> Result<FiberEnvelope, ConvexifyError> {
    if samples.is_empty() || samples.len() != values.len() {
        return Err(ConvexifyError::EmptyFiber);
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(ConvexifyError::DimensionMismatch);
    }
    let rank = affine_rank(&samples);
    let mut fe = FiberEnvelope { samples, values, functionals: vec![], affine_rank: rank, degenerate: rank < dim };
    let found: Vec<Option<(f64, Affine)>> = fe
        .samples
        .par_iter()
        .map(|q| lower_hull_at(&fe.samples, &fe.values, q))
        .collect::<Result<_, _>>()?;
    for (_, l) in found.into_iter().flatten() {
        push_unique(&mut fe.functionals, l);
    }

    let k = (2 * dim).min(fe.samples.len().saturating_sub(1));
    let mut probes: Vec<Vec<f64>> = Vec::new();
    for (a, p) in fe.samples.iter().enumerate() {
        let mut dist: Vec<(f64, usize)> = fe
            .samples
            .iter()
            .enumerate()
            .filter(|&(b, _)| b != a)
            .map(|(b, q)| (p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(), b))
            .collect();
        dist.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for &(_, b) in dist.iter().take(k) {
            if a < b || dist.len() < k {
                probes.push(p.iter().zip(&fe.samples[b]).map(|(x, y)| 0.5 * (x + y)).collect());
            }
        }
    }
    for _round in 0..4 {
        let missing: Vec<Affine> = probes
            .par_iter()
            .map(|q| -> Result<Option<Affine>, LpError> {
                let Some((v, l)) = lower_hull_at(&fe.samples, &fe.values, q)? else {
                    return Ok(None);
                };
                let have = fe.max_affine(q);
                Ok((v > have + 1e-9 * (1.0 + v.abs())).then_some(l))
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        if missing.is_empty() {
            break;
        }
        for l in missing {
            push_unique(&mut fe.functionals, l);
        }
    }
    Ok(fe)
}

fn push_unique(v: &mut Vec<Affine>, l: Affine) {
    if !v.iter().any(|o| o.close_to(&l)) {
        v.push(l);
    }
}

/// Envelope at `q`: the hull LP value, which equals the max over all
/// supporting functionals of the lower hull, or `OutsideHull` when `q` is
/// not a convex combination of the samples.
pub fn envelope_value(fe: &FiberEnvelope, q: &[f64]) -> Result<EnvelopeValue, ConvexifyError> {
    if q.len() != fe.dim() {
        return Err(ConvexifyError::DimensionMismatch);
    }
    Ok(match lower_hull_at(&fe.samples, &fe.values, q)? {
        Some((v, _)) => EnvelopeValue::Inside(v),
        None => EnvelopeValue::OutsideHull,
    })
}

/// Smallest `‖q − Σλ p‖₁` over convex weights `λ`; zero iff `q` lies in
/// the convex hull of `points`.
pub fn hull_distance(points: &[Vec<f64>], q: &[f64]) -> Result<f64, ConvexifyError> {
    if points.is_empty() {
        return Err(ConvexifyError::EmptyFiber);
    }
    let mut lp = LinearProgram::new();
    for s in 0..points.len() {
        lp.add_column(format!("L_{s}"), 0.0);
    }
    let first_slack = points.len();
    for i in 0..q.len() {
        lp.add_column(format!("SP_{i}"), 1.0);
        lp.add_column(format!("SM_{i}"), 1.0);
    }
    lp.add_row(RowTag::Mass, Relation::Eq, (0..points.len()).map(|s| (s, 1.0)).collect(), 1.0);
    for (i, &qi) in q.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = points.iter().enumerate().map(|(s, p)| (s, p[i])).collect();
        coeffs.push((first_slack + 2 * i, 1.0));
        coeffs.push((first_slack + 2 * i + 1, -1.0));
        lp.add_row(RowTag::Plumbing(i), Relation::Eq, coeffs, qi);
    }
    let sol = solve_lp(&lp, &SolveOptions::default())?;
    Ok(sol.objective.max(0.0))
}

/// Envelopes of one function over every cell (or boundary face). Fibers
/// are shared between cells when the function does not depend on `x` and
/// the cells have the same atoms.
#[derive(Clone, Debug)]
pub struct EnvelopeTable {
    pub fibers: Vec<FiberEnvelope>,
    pub cell_fiber: Vec<usize>,
    /// Per cell, the atom behind each sample of its fiber (the minimizing
    /// control when controls are reduced out).
    pub cell_atoms: Vec<Vec<usize>>,
}

impl EnvelopeTable {
    pub fn fiber(&self, cell: usize) -> &FiberEnvelope {
        &self.fibers[self.cell_fiber[cell]]
    }

    /// `fiber,functional,offset,slope_1,...` with one row per functional.
    pub fn functionals_csv(&self) -> String {
        let dim = self.fibers.first().map_or(0, |f| f.dim());
        let mut s = String::from("fiber,functional,offset");
        for i in 1..=dim {
            let _ = write!(s, ",slope_{i}");
        }
        s.push('\n');
        for (fi, f) in self.fibers.iter().enumerate() {
            for (j, l) in f.functionals.iter().enumerate() {
                let _ = write!(s, "{fi},{j},{}", l.offset);
                for a in &l.slope {
                    let _ = write!(s, ",{a}");
                }
                s.push('\n');
            }
        }
        s
    }
}

struct FiberSource {
    key: Vec<(u32, u32, u32)>,
    samples: Vec<Vec<f64>>,
    values: Vec<f64>,
    atoms: Vec<usize>,
}

fn bulk_fiber(d: &Discretization, f: &Expr, range: std::ops::Range<usize>) -> Result<FiberSource, EvalError> {
    let mut index: HashMap<(u32, u32), usize> = HashMap::new();
    let mut src = FiberSource { key: vec![], samples: vec![], values: vec![], atoms: vec![] };
    for i in range {
        let a = &d.bulk[i];
        src.key.push((a.y, a.z, a.u));
        let v = d.eval_bulk(f, a)?;
        match index.get(&(a.y, a.z)) {
            Some(&s) => {
                if v < src.values[s] {
                    src.values[s] = v;
                    src.atoms[s] = i;
                }
            }
            None => {
                index.insert((a.y, a.z), src.samples.len());
                let mut q = d.y_nodes[a.y as usize].clone();
                q.extend_from_slice(&d.z_nodes[a.z as usize]);
                src.samples.push(q);
                src.values.push(v);
                src.atoms.push(i);
            }
        }
    }
    Ok(src)
}

fn boundary_fiber(d: &Discretization, f: &Expr, range: std::ops::Range<usize>) -> Result<FiberSource, EvalError> {
    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut src = FiberSource { key: vec![], samples: vec![], values: vec![], atoms: vec![] };
    for i in range {
        let a = &d.boundary[i];
        src.key.push((a.y, 0, a.u));
        let v = d.eval_boundary(f, a)?;
        match index.get(&a.y) {
            Some(&s) => {
                if v < src.values[s] {
                    src.values[s] = v;
                    src.atoms[s] = i;
                }
            }
            None => {
                index.insert(a.y, src.samples.len());
                src.samples.push(d.y_nodes[a.y as usize].clone());
                src.values.push(v);
                src.atoms.push(i);
            }
        }
    }
    Ok(src)
}

fn assemble_table(
    sources: Vec<FiberSource>,
    shareable: bool,
    functionals: bool,
) -> Result<EnvelopeTable, ConvexifyError> {
    let mut groups: HashMap<Vec<(u32, u32, u32)>, usize> = HashMap::new();
    let mut firsts: Vec<usize> = vec![];
    let mut cell_fiber = Vec::with_capacity(sources.len());
    for (c, s) in sources.iter().enumerate() {
        if s.samples.is_empty() {
            return Err(ConvexifyError::EmptyFiber);
        }
        let next = firsts.len();
        let f = if shareable { *groups.entry(s.key.clone()).or_insert(next) } else { next };
        if f == next {
            firsts.push(c);
        }
        cell_fiber.push(f);
    }
    let fibers: Vec<FiberEnvelope> = firsts
        .iter()
        .map(|&c| {
            let s = &sources[c];
            if functionals {
                compute_envelope(s.samples.clone(), s.values.clone())
            } else {
                let rank = affine_rank(&s.samples);
                let dim = s.samples[0].len();
                Ok(FiberEnvelope {
                    samples: s.samples.clone(),
                    values: s.values.clone(),
                    functionals: vec![],
                    affine_rank: rank,
                    degenerate: rank < dim,
                })
            }
        })
        .collect::<Result<_, _>>()?;
    let cell_atoms = sources.into_iter().map(|s| s.atoms).collect();
    Ok(EnvelopeTable { fibers, cell_fiber, cell_atoms })
}

/// Envelope table of a bulk function over each cell's feasible atoms.
/// Controls, if present, are minimized out first.
pub fn bulk_envelope_table(d: &Discretization, f: &Expr, functionals: bool) -> Result<EnvelopeTable, ConvexifyError> {
    let sources: Vec<FiberSource> =
        d.cell_ranges().into_par_iter().map(|r| bulk_fiber(d, f, r)).collect::<Result<_, _>>()?;
    assemble_table(sources, !f.uses(Block::X), functionals)
}

/// Envelope table of a boundary function over each boundary face's atoms.
pub fn boundary_envelope_table(d: &Discretization, f: &Expr, functionals: bool) -> Result<EnvelopeTable, ConvexifyError> {
    let sources: Vec<FiberSource> =
        d.face_ranges().into_par_iter().map(|r| boundary_fiber(d, f, r)).collect::<Result<_, _>>()?;
    assemble_table(sources, !f.uses(Block::X), functionals)
}

/// Hausdorff distance between the sample sets of adjacent cells whenever
/// it exceeds `tol`, as `(cell, neighbour, distance)`.
pub fn hausdorff_warnings(d: &Discretization, table: &EnvelopeTable, tol: f64) -> Vec<(usize, usize, f64)> {
    let mesh = VertexMesh::new(d);
    let mut out = vec![];
    for k in 0..d.cells.len() {
        let mk = mesh.cell_multi(k);
        for j in 0..d.n {
            if mk[j] + 1 >= d.cells_per_axis[j] {
                continue;
            }
            let stride: usize = d.cells_per_axis[j + 1..].iter().product();
            let nb = k + stride;
            if table.cell_fiber[k] == table.cell_fiber[nb] {
                continue;
            }
            let a = &table.fiber(k).samples;
            let b = &table.fiber(nb).samples;
            let dist = hausdorff(a, b);
            if dist > tol {
                out.push((k, nb, dist));
            }
        }
    }
    out
}

fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let one = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter()
            .map(|p| {
                b.iter()
                    .map(|q| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
            .sqrt()
    };
    one(a, b).max(one(b, a))
}

/// Envelope tables for every function entering the convexified problem.
#[derive(Clone, Debug)]
pub struct ConvexTables {
    pub lagrangian: EnvelopeTable,
    pub integral: Vec<EnvelopeTable>,
    /// Present when the boundary carries a cost, constraints or integrals.
    pub boundary_lagrangian: Option<EnvelopeTable>,
    pub boundary_integral: Vec<EnvelopeTable>,
}

pub fn build_tables(p: &Problem, d: &Discretization, functionals: bool) -> Result<ConvexTables, ConvexifyError> {
    for c in p.integral.iter().chain(&p.boundary_integral) {
        if c.uses(Block::U) {
            return Err(ConvexifyError::Unsupported("integral constraint depending on controls".into()));
        }
    }
    let lagrangian = bulk_envelope_table(d, &p.lagrangian, functionals)?;
    let integral = p.integral.iter().map(|c| bulk_envelope_table(d, c, functionals)).collect::<Result<_, _>>()?;
    let needs_boundary = !p.boundary_lagrangian.is_zero()
        || !p.boundary_eq.is_empty()
        || !p.boundary_ineq.is_empty()
        || !p.boundary_integral.is_empty();
    let boundary_lagrangian = if needs_boundary {
        Some(boundary_envelope_table(d, &p.boundary_lagrangian, functionals)?)
    } else {
        None
    };
    let boundary_integral =
        p.boundary_integral.iter().map(|c| boundary_envelope_table(d, c, functionals)).collect::<Result<_, _>>()?;
    Ok(ConvexTables { lagrangian, integral, boundary_lagrangian, boundary_integral })
}

#[derive(Clone, Copy, Debug)]
pub struct ConvexifyOptions {
    pub solve: SolveOptions,
    /// `x`-degree of the compact test functions for weak families.
    pub weak_degree: u32,
}

impl Default for ConvexifyOptions {
    fn default() -> Self {
        ConvexifyOptions { solve: SolveOptions::default(), weak_degree: 2 }
    }
}

#[derive(Clone, Debug)]
pub struct ConvexifiedSolution {
    pub status: LpStatus,
    /// Discrete `M̂`.
    pub value: f64,
    pub mesh: VertexMesh,
    /// Nodal values, `m` per vertex.
    pub nodes: Vec<f64>,
    /// Per cell `(y, Dy)` of the nodal function.
    pub cell_points: Vec<Vec<f64>>,
    /// Per cell, weights on the Lagrangian fiber samples with barycenter
    /// `cell_points[k]` and mean value `L̂`.
    pub lambdas: Vec<Vec<f64>>,
    /// Per boundary face, weights on the boundary fiber samples.
    pub boundary_lambdas: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// A fiber with the coordinates split off along which its samples are a
/// full product with a grid and its values do not change. On such a
/// coordinate the hull is the product of the reduced hull with an interval.
struct Factored {
    keep: Vec<usize>,
    /// `(coordinate, lo, hi)` per split-off coordinate.
    boxed: Vec<(usize, f64, f64)>,
    samples: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// Per reduced sample, the full sample at each corner of the split-off
    /// box, corner bit `b` selecting `hi` on `boxed[b]`.
    corners: Vec<Vec<usize>>,
}

fn factor_fiber(fiber: &FiberEnvelope) -> Factored {
    let dim = fiber.dim();
    let q = &fiber.samples;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
    let mut keep: Vec<usize> = (0..dim).collect();
    let mut reps: Vec<usize> = (0..q.len()).collect();
    let mut boxed = vec![];
    for k in 0..dim {
        let mut axis: Vec<f64> = reps.iter().map(|&r| q[r][k]).collect();
        axis.sort_by(f64::total_cmp);
        axis.dedup_by(|a, b| a.to_bits() == b.to_bits());
        if axis.len() < 2 {
            continue;
        }
        let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        let mut order = vec![];
        for &r in &reps {
            let key: Vec<u64> = keep.iter().filter(|&&c| c != k).map(|&c| q[r][c].to_bits()).collect();
            let g = groups.entry(key).or_default();
            if g.is_empty() {
                order.push(r);
            }
            g.push(r);
        }
        let product = groups.values().all(|g| {
            let mut vals: Vec<u64> = g.iter().map(|&r| q[r][k].to_bits()).collect();
            vals.sort_unstable();
            vals.dedup();
            vals.len() == axis.len() && g.len() == axis.len() && g.iter().all(|&r| same(fiber.values[r], fiber.values[g[0]]))
        });
        if product {
            reps = order;
            keep.retain(|&c| c != k);
            boxed.push((k, axis[0], axis[axis.len() - 1]));
        }
    }
    let index: HashMap<Vec<u64>, usize> =
        q.iter().enumerate().map(|(i, s)| (s.iter().map(|v| v.to_bits()).collect(), i)).collect();
    let corners = reps
        .iter()
        .map(|&r| {
            (0..1usize << boxed.len())
                .map(|mask| {
                    let mut c = q[r].clone();
                    for (b, &(k, lo, hi)) in boxed.iter().enumerate() {
                        c[k] = if mask >> b & 1 == 1 { hi } else { lo };
                    }
                    index[&c.iter().map(|v| v.to_bits()).collect::<Vec<_>>()]
                })
                .collect()
        })
        .collect();
    Factored {
        samples: reps.iter().map(|&r| keep.iter().map(|&c| q[r][c]).collect()).collect(),
        values: reps.iter().map(|&r| fiber.values[r]).collect(),
        keep,
        boxed,
        corners,
    }
}

struct Layout {
    lambda: Vec<usize>,
    fac: Factored,
    full_len: usize,
}

impl Layout {
    /// Weights on the full fiber samples with barycenter `target`, spreading
    /// each reduced weight over the corners of the split-off box.
    fn full_weights(&self, x: &[f64], target: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_len];
        let theta: Vec<f64> = self
            .fac
            .boxed
            .iter()
            .map(|&(k, lo, hi)| ((target[k] - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect();
        for (r, &c) in self.lambda.iter().enumerate() {
            let l = x[c];
            if l == 0.0 {
                continue;
            }
            for (mask, &full) in self.fac.corners[r].iter().enumerate() {
                let w = theta.iter().enumerate().fold(l, |w, (b, &t)| w * if mask >> b & 1 == 1 { t } else { 1.0 - t });
                out[full] += w;
            }
        }
        out
    }
}

fn add_fiber_block(
    lp: &mut LinearProgram,
    fiber: &FiberEnvelope,
    target: &[Vec<(usize, f64)>],
    cost_scale: f64,
    prefix: &str,
) -> Layout {
    let fac = factor_fiber(fiber);
    let start = lp.num_vars();
    for (s, &v) in fac.values.iter().enumerate() {
        lp.add_column(format!("{prefix}_{s}"), cost_scale * v);
    }
    let k = lp.next_ordinal(RowTag::Plumbing);
    lp.add_row(RowTag::Plumbing(k), Relation::Eq, (0..fac.samples.len()).map(|s| (start + s, 1.0)).collect(), 1.0);
    for (pos, &i) in fac.keep.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = fac.samples.iter().enumerate().map(|(s, q)| (start + s, q[pos])).collect();
        coeffs.extend(target[i].iter().map(|&(c, w)| (c, -w)));
        let k = lp.next_ordinal(RowTag::Plumbing);
        lp.add_row(RowTag::Plumbing(k), Relation::Eq, coeffs, 0.0);
    }
    for &(i, lo, hi) in &fac.boxed {
        let k = lp.next_ordinal(RowTag::Plumbing);
        lp.add_row(RowTag::Plumbing(k), Relation::Ge, target[i].clone(), lo);
        lp.add_row(RowTag::Plumbing(k + 1), Relation::Le, target[i].clone(), hi);
    }
    Layout { lambda: (start..start + fac.samples.len()).collect(), fac, full_len: fiber.samples.len() }
}

fn weak_rows(
    p: &Problem,
    d: &Discretization,
    mesh: &VertexMesh,
    degree: u32,
    lp: &mut LinearProgram,
) -> Result<(), ConvexifyError> {
    if p.weak.is_empty() {
        return Ok(());
    }
    let (n, m) = (d.n, d.m);
    let tb = build_test_basis(d, BasisMode::Affine, degree + 1, 1);
    let ybox: Vec<(f64, f64)> = p.y_box.0.clone();
    let zbox: Vec<(f64, f64)> = p.z_box.0.clone();
    for w in &p.weak {
        for (j, v) in w.coefficient.iter().enumerate() {
            if v.uses(Block::U) {
                return Err(ConvexifyError::Unsupported("weak coefficient depending on controls".into()));
            }
            let bx = ShapeBox { x: d.cells[0].center.clone(), y: ybox.clone(), z: zbox.clone(), u: vec![] };
            if probe_shape(v, &bx, 64, 0x5eed + j as u64)?.kind != ShapeKind::Affine {
                return Err(ConvexifyError::Unsupported("weak coefficient not affine in (y, Dy)".into()));
            }
        }
        // per cell and component: V_j(x_k, q) = v0 + Σ g_r q_r
        let base_y: Vec<f64> = ybox.iter().map(|b| 0.5 * (b.0 + b.1)).collect();
        let base_z: Vec<f64> = zbox.iter().map(|b| 0.5 * (b.0 + b.1)).collect();
        let lin: Vec<Vec<(f64, Vec<f64>)>> = d
            .cells
            .iter()
            .map(|c| {
                w.coefficient
                    .iter()
                    .map(|v| -> Result<(f64, Vec<f64>), EvalError> {
                        let at = |y: &[f64], z: &[f64]| v.eval(&crate::expr::Point::new(&c.center, y, z, &[]));
                        let f0 = at(&base_y, &base_z)?;
                        let mut g = vec![];
                        for r in 0..m + m * n {
                            let (mut y, mut z) = (base_y.clone(), base_z.clone());
                            if r < m {
                                y[r] += 1.0;
                            } else {
                                z[r - m] += 1.0;
                            }
                            g.push(at(&y, &z)? - f0);
                        }
                        let mut offset = f0;
                        for r in 0..m {
                            offset -= g[r] * base_y[r];
                        }
                        for r in 0..m * n {
                            offset -= g[m + r] * base_z[r];
                        }
                        Ok((offset, g))
                    })
                    .collect::<Result<_, _>>()
            })
            .collect::<Result<_, _>>()?;
        let tests: &[TestFunction] = match w.test_space {
            TestSpace::Compact => &tb.compact_entries,
            TestSpace::Free => &tb.free_entries,
        };
        for f in tests {
            let mut coeffs: Vec<(usize, f64)> = vec![];
            let mut rhs = 0.0;
            for (k, c) in d.cells.iter().enumerate() {
                for (j, (offset, g)) in lin[k].iter().enumerate() {
                    let dphi = c.volume * f.cell_average(&tb.x_norm, c, Some(j));
                    if dphi == 0.0 {
                        continue;
                    }
                    rhs -= dphi * offset;
                    for i in 0..m {
                        for &(v, wt) in &mesh.cell_value_weights(k) {
                            coeffs.push((v * m + i, dphi * g[i] * wt));
                        }
                        for jj in 0..n {
                            for &(v, wt) in &mesh.cell_gradient_weights(k, jj) {
                                coeffs.push((v * m + i, dphi * g[m + i * n + jj] * wt));
                            }
                        }
                    }
                }
            }
            let k = lp.next_ordinal(RowTag::Weak);
            lp.add_row(RowTag::Weak(k), Relation::Eq, coeffs, rhs);
        }
    }
    Ok(())
}

/// Minimizes `Σ_k |cell_k| L̂(x_k, y_k, Dy_k) + Σ_f |f| L̂∂(x_f, y_f)` over
/// nodal functions with `(y_k, Dy_k)` in the hull of each cell's feasible
/// samples and `Σ |cell_k| Ĉ ≤ 0`. Each envelope is represented by its own
/// convex-combination weights, which makes the problem an exact LP.
pub fn solve_convexified(
    p: &Problem,
    d: &Discretization,
    tables: &ConvexTables,
    opts: &ConvexifyOptions,
) -> Result<ConvexifiedSolution, ConvexifyError> {
    let mesh = VertexMesh::new(d);
    let (n, m) = (d.n, d.m);
    let nv = mesh.num_vertices();
    let mut lp = LinearProgram::new();
    for v in 0..nv {
        for i in 0..m {
            let (lo, hi) = p.y_box.0[i];
            lp.add_bounded_column(format!("Y_{v}_{i}"), 0.0, lo, hi);
        }
    }
    let bulk_target = |k: usize| -> Vec<Vec<(usize, f64)>> {
        let val = mesh.cell_value_weights(k);
        let mut t: Vec<Vec<(usize, f64)>> =
            (0..m).map(|i| val.iter().map(|&(v, w)| (v * m + i, w)).collect()).collect();
        for i in 0..m {
            for j in 0..n {
                t.push(mesh.cell_gradient_weights(k, j).iter().map(|&(v, w)| (v * m + i, w)).collect());
            }
        }
        t
    };
    let face_target = |f: usize| -> Vec<Vec<(usize, f64)>> {
        let val = mesh.face_value_weights(&d.faces[f]);
        (0..m).map(|i| val.iter().map(|&(v, w)| (v * m + i, w)).collect()).collect()
    };

    let mut l_layout = vec![];
    for k in 0..d.cells.len() {
        let t = bulk_target(k);
        l_layout.push(add_fiber_block(&mut lp, tables.lagrangian.fiber(k), &t, d.cells[k].volume, &format!("LL_{k}")));
    }
    for (i, tab) in tables.integral.iter().enumerate() {
        let mut row = vec![];
        for k in 0..d.cells.len() {
            let t = bulk_target(k);
            let fiber = tab.fiber(k);
            let lay = add_fiber_block(&mut lp, fiber, &t, 0.0, &format!("LC{i}_{k}"));
            row.extend(lay.lambda.iter().zip(&lay.fac.values).map(|(&c, &v)| (c, d.cells[k].volume * v)));
        }
        let k = lp.next_ordinal(RowTag::Integral);
        lp.add_row(RowTag::Integral(k), Relation::Le, row, 0.0);
    }
    let mut b_layout = vec![];
    if let Some(tab) = &tables.boundary_lagrangian {
        for f in 0..d.faces.len() {
            let t = face_target(f);
            b_layout.push(add_fiber_block(&mut lp, tab.fiber(f), &t, d.faces[f].area, &format!("LB_{f}")));
        }
    }
    for (i, tab) in tables.boundary_integral.iter().enumerate() {
        let mut row = vec![];
        for f in 0..d.faces.len() {
            let t = face_target(f);
            let fiber = tab.fiber(f);
            let lay = add_fiber_block(&mut lp, fiber, &t, 0.0, &format!("LBC{i}_{f}"));
            row.extend(lay.lambda.iter().zip(&lay.fac.values).map(|(&c, &v)| (c, d.faces[f].area * v)));
        }
        let k = lp.next_ordinal(RowTag::Integral);
        lp.add_row(RowTag::Integral(k), Relation::Le, row, 0.0);
    }
    weak_rows(p, d, &mesh, opts.weak_degree, &mut lp)?;

    let sol = solve_lp(&lp, &opts.solve)?;
    if sol.status == LpStatus::Infeasible {
        return Err(ConvexifyError::NoFeasiblePoint);
    }
    let nodes = sol.x[..nv * m].to_vec();
    let eval = |t: Vec<Vec<(usize, f64)>>| -> Vec<f64> { t.iter().map(|t| t.iter().map(|&(c, w)| w * sol.x[c]).sum()).collect() };
    let cell_points: Vec<Vec<f64>> = (0..d.cells.len()).map(|k| eval(bulk_target(k))).collect();
    let lambdas = l_layout.iter().zip(&cell_points).map(|(l, q)| l.full_weights(&sol.x, q)).collect();
    let boundary_lambdas =
        b_layout.iter().enumerate().map(|(f, l)| l.full_weights(&sol.x, &eval(face_target(f)))).collect();
    Ok(ConvexifiedSolution {
        status: sol.status,
        value: sol.objective,
        mesh,
        nodes,
        cell_points,
        lambdas,
        boundary_lambdas,
        iterations: sol.iterations,
    })
}

/// Measure recovered from a convexified solution: each cell carries the
/// Lagrangian weights on its atoms (barycenter `(y_k, Dy_k)`, mean `L̂`), and
/// each boundary face a probability vector on its atoms with barycenter
/// equal to the face value. Returned as bulk and boundary densities on the
/// atoms of `d`, ready to evaluate against a relaxation LP.
pub fn choquet_measure(
    d: &Discretization,
    tables: &ConvexTables,
    sol: &ConvexifiedSolution,
) -> Result<(Vec<f64>, Vec<f64>), ConvexifyError> {
    let mut bulk = vec![0.0; d.bulk.len()];
    for (k, lam) in sol.lambdas.iter().enumerate() {
        for (s, &l) in lam.iter().enumerate() {
            bulk[tables.lagrangian.cell_atoms[k][s]] += l;
        }
    }
    let mut boundary = vec![0.0; d.boundary.len()];
    if let Some(tab) = &tables.boundary_lagrangian {
        for (f, lam) in sol.boundary_lambdas.iter().enumerate() {
            for (s, &l) in lam.iter().enumerate() {
                boundary[tab.cell_atoms[f][s]] += l;
            }
        }
    } else {
        let ranges = d.face_ranges();
        for (f, face) in d.faces.iter().enumerate() {
            let w = sol.mesh.face_value_weights(face);
            let target: Vec<f64> = (0..d.m).map(|i| crate::mesh::apply(&w, &sol.nodes, d.m, i)).collect();
            let atoms: Vec<usize> = ranges[f].clone().collect();
            let samples: Vec<Vec<f64>> = atoms.iter().map(|&a| d.y_nodes[d.boundary[a].y as usize].clone()).collect();
            if samples.is_empty() {
                return Err(ConvexifyError::EmptyFiber);
            }
            let lp = hull_lp(&samples, &vec![0.0; samples.len()], &target);
            let s = solve_lp(&lp, &SolveOptions::default())?;
            if s.status != LpStatus::Optimal {
                return Err(ConvexifyError::NoFeasiblePoint);
            }
            for (a, &l) in atoms.iter().zip(&s.x) {
                boundary[*a] = l;
            }
        }
    }
    Ok((bulk, boundary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_problem;
    use crate::measure::{build_discretization, select_feasible_atoms, Resolution};

    fn grid2(lo: f64, hi: f64, r: usize) -> Vec<Vec<f64>> {
        let ax = crate::measure::axis_nodes(lo, hi, r);
        ax.iter().flat_map(|&a| ax.iter().map(move |&b| vec![a, b])).collect()
    }

    #[test]
    fn convex_function_is_its_own_envelope() {
        let samples = grid2(-1.0, 1.0, 7);
        let values: Vec<f64> = samples.iter().map(|q| q[0] * q[0] + q[1] * q[1]).collect();
        let fe = compute_envelope(samples.clone(), values.clone()).unwrap();
        for (q, &v) in samples.iter().zip(&values) {
            assert!((fe.max_affine(q) - v).abs() < 1e-8);
            match envelope_value(&fe, q).unwrap() {
                EnvelopeValue::Inside(e) => assert!((e - v).abs() < 1e-8),
                EnvelopeValue::OutsideHull => panic!("sample outside hull"),
            }
        }
        assert!(!fe.degenerate);
    }

    #[test]
    fn factoring_splits_off_free_coordinates_and_restores_weights() {
        let mut samples = vec![];
        for a in [0.0, 0.5, 1.0] {
            for b in [-1.0, 0.0, 1.0, 2.0] {
                samples.push(vec![a, b]);
            }
        }
        let values: Vec<f64> = samples.iter().map(|q| q[0] * q[0]).collect();
        let fe = FiberEnvelope { samples, values, functionals: vec![], affine_rank: 2, degenerate: false };
        let fac = factor_fiber(&fe);
        assert_eq!(fac.keep, vec![0]);
        assert_eq!(fac.boxed, vec![(1, -1.0, 2.0)]);
        assert_eq!(fac.samples, vec![vec![0.0], vec![0.5], vec![1.0]]);
        let lay = Layout { lambda: vec![0, 1, 2], fac, full_len: fe.samples.len() };
        let target = [0.25, 0.5];
        let w = lay.full_weights(&[0.5, 0.5, 0.0], &target);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..2 {
            let bary: f64 = w.iter().zip(&fe.samples).map(|(w, q)| w * q[i]).sum();
            assert!((bary - target[i]).abs() < 1e-12);
        }
        let v: f64 = w.iter().zip(&fe.values).map(|(w, v)| w * v).sum();
        assert!((v - 0.125).abs() < 1e-12);
    }

    #[test]
    fn factoring_keeps_coordinates_that_change_the_values() {
        let samples = grid2(-1.0, 1.0, 3);
        let values: Vec<f64> = samples.iter().map(|q| q[0] + q[1] * q[1]).collect();
        let fe = FiberEnvelope { samples, values, functionals: vec![], affine_rank: 2, degenerate: false };
        let fac = factor_fiber(&fe);
        assert_eq!(fac.keep, vec![0, 1]);
        assert!(fac.boxed.is_empty());
        assert_eq!(fac.corners.len(), 9);
    }

    #[test]
    fn double_well_envelope_is_flat_between_wells() {
        let samples: Vec<Vec<f64>> = crate::measure::axis_nodes(-2.0, 2.0, 41).into_iter().map(|t| vec![t]).collect();
        let values: Vec<f64> = samples.iter().map(|q| (q[0] * q[0] - 1.0).powi(2)).collect();
        let fe = compute_envelope(samples.clone(), values.clone()).unwrap();
        let EnvelopeValue::Inside(e0) = envelope_value(&fe, &[0.0]).unwrap() else { panic!() };
        assert!(e0.abs() < 2e-3);
        // brute-force lower hull over all sample pairs
        let brute = |t: f64| {
            let mut best = f64::INFINITY;
            for (a, &fa) in samples.iter().zip(&values) {
                for (b, &fb) in samples.iter().zip(&values) {
                    if a[0] <= t && t <= b[0] {
                        let v = if b[0] > a[0] { fa + (fb - fa) * (t - a[0]) / (b[0] - a[0]) } else { fa };
                        best = best.min(v);
                    }
                }
            }
            best
        };
        for t in [-1.93, -1.2, -0.4, 0.0, 0.77, 1.5] {
            let EnvelopeValue::Inside(e) = envelope_value(&fe, &[t]).unwrap() else { panic!() };
            assert!((e - brute(t)).abs() < 1e-9, "{t}: {e} vs {}", brute(t));
            assert!((fe.max_affine(&[t]) - e).abs() < 1e-9);
        }
    }

    #[test]
    fn four_point_fiber_envelope_at_origin() {
        let ys = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let mut samples = vec![];
        for y in ys {
            for z in grid2(-1.0, 1.0, 9) {
                if z[0] * z[0] + z[1] * z[1] <= 1.0 + 1e-12 {
                    samples.push(vec![y[0], y[1], z[0], z[1]]);
                }
            }
        }
        let values: Vec<f64> = samples.iter().map(|q| q[0] * q[1] + q[2] * q[2] + q[3] * q[3]).collect();
        let fe = compute_envelope(samples, values).unwrap();
        let EnvelopeValue::Inside(e) = envelope_value(&fe, &[0.0, 0.0, 0.0, 0.0]).unwrap() else { panic!() };
        assert!((e + 1.0).abs() < 1e-9);
        let EnvelopeValue::Inside(e) = envelope_value(&fe, &[0.5, 0.5, 0.0, 0.0]).unwrap() else { panic!() };
        assert!((e - 0.0).abs() < 1e-9, "{e}");
        assert_eq!(envelope_value(&fe, &[1.5, 0.0, 0.0, 0.0]).unwrap(), EnvelopeValue::OutsideHull);
    }

    #[test]
    fn four_velocity_fiber_envelope_at_origin() {
        let mut samples = vec![];
        for y in grid2(-1.0, 1.0, 5) {
            if y[0] * y[0] + y[1] * y[1] <= 1.0 {
                for z in grid2(-1.0, 1.0, 2) {
                    samples.push(vec![y[0], y[1], z[0], z[1]]);
                }
            }
        }
        let values: Vec<f64> = samples.iter().map(|q| q[2] * q[3]).collect();
        let fe = compute_envelope(samples, values).unwrap();
        let EnvelopeValue::Inside(e) = envelope_value(&fe, &[0.0, 0.0, 0.0, 0.0]).unwrap() else { panic!() };
        assert!((e + 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_fiber_is_flagged() {
        let samples = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        let fe = compute_envelope(samples, vec![1.0, 0.0, 1.0]).unwrap();
        assert!(fe.degenerate);
        assert_eq!(fe.affine_rank, 1);
        assert_eq!(envelope_value(&fe, &[1.0, 0.0]).unwrap(), EnvelopeValue::OutsideHull);
        let EnvelopeValue::Inside(e) = envelope_value(&fe, &[0.5, 0.5]).unwrap() else { panic!() };
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn envelope_is_idempotent() {
        let samples = grid2(-1.0, 1.0, 6);
        let values: Vec<f64> = samples.iter().map(|q| (q[0] * q[1]).sin() + (q[0] * q[0] - 0.5).abs()).collect();
        let fe = compute_envelope(samples.clone(), values).unwrap();
        let env: Vec<f64> = samples.iter().map(|q| fe.max_affine(q)).collect();
        let again = compute_envelope(samples.clone(), env).unwrap();
        for q in &samples {
            assert!((again.max_affine(q) - fe.max_affine(q)).abs() < 1e-9);
        }
    }

    fn ex42() -> Problem {
        parse_problem(
            "occurelax-problem v1\n[domain]\nn = 1\nomega = [0, 1]\n[spaces]\nm = 2\ny = [-1, 1] x [-1, 1]\n\
             z = [-1, 1] x [-1, 1]\ny_circle = 1, 2, 4, 1.4142135623730951, 0.7853981633974483\n\
             [objective]\nL = y1*y2 + z11^2 + z21^2\n[constraints]\nB = z11^2 + z21^2 - 1\nC = -y1*y2\n",
        )
        .unwrap()
    }

    #[test]
    fn four_point_problem_convexified_value() {
        let p = ex42();
        let d = build_discretization(&p, &Resolution::new(8, 4, 9, 1)).unwrap();
        let d = select_feasible_atoms(&p, &d, 1e-9, 1e-9).unwrap();
        let t = build_tables(&p, &d, false).unwrap();
        assert_eq!(t.lagrangian.fibers.len(), 1);
        let s = solve_convexified(&p, &d, &t, &ConvexifyOptions::default()).unwrap();
        assert!((s.value + 1.0).abs() < 1e-6, "{}", s.value);
    }

    #[test]
    fn dirichlet_convexified_value_and_choquet_measure() {
        let p = parse_problem(
            "occurelax-problem v1\n[domain]\nn = 1\nomega = [0, 1]\n[spaces]\nm = 1\ny = [0, 1]\nz = [-1, 3]\n\
             [objective]\nL = z11^2\n[boundary]\nA = y1 - x1\n",
        )
        .unwrap();
        let d = build_discretization(&p, &Resolution::new(8, 9, 9, 1)).unwrap();
        let d = select_feasible_atoms(&p, &d, 1e-9, 1e-9).unwrap();
        let t = build_tables(&p, &d, false).unwrap();
        let s = solve_convexified(&p, &d, &t, &ConvexifyOptions::default()).unwrap();
        assert!((s.value - 1.0).abs() < 1e-8);
        for (v, y) in s.nodes.iter().enumerate() {
            assert!((y - v as f64 / 8.0).abs() < 1e-8);
        }
        let (bulk, boundary) = choquet_measure(&d, &t, &s).unwrap();
        let tb = crate::measure::build_test_basis(&d, BasisMode::Affine, 1, 1);
        let rel = crate::measure::assemble_relaxation(&p, &d, &tb).unwrap();
        let mut x = bulk;
        x.extend(boundary);
        assert!(rel.lp.primal_residual(&x) < 1e-9);
        assert!((rel.lp.objective(&x) - s.value).abs() < 1e-9);
    }

    #[test]
    fn tables_share_x_independent_fibers_and_export_csv() {
        let p = ex42();
        let d = build_discretization(&p, &Resolution::new(3, 4, 3, 1)).unwrap();
        let d = select_feasible_atoms(&p, &d, 1e-9, 1e-9).unwrap();
        let t = bulk_envelope_table(&d, &p.lagrangian, true).unwrap();
        assert_eq!(t.fibers.len(), 1);
        assert_eq!(t.cell_fiber, vec![0, 0, 0]);
        let csv = t.functionals_csv();
        assert!(csv.starts_with("fiber,functional,offset,slope_1,slope_2,slope_3,slope_4\n"));
        assert_eq!(csv.lines().count(), 1 + t.fibers[0].functionals.len());
        assert!(hausdorff_warnings(&d, &t, 1e-9).is_empty());
    }
}
