//! End-to-end pipelines over problem files: relaxation LPs, the
//! convexified problem, the direct solver, and the comparison and
//! reproduction tables built from them.

pub mod micromagnetics;

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::convexify::{build_tables, solve_convexified, ConvexifiedSolution, ConvexifyError, ConvexifyOptions};
use crate::direct::{solve_direct, DirectError, DirectOptions, DirectSolution};
use crate::dsl::{parse_problem, Diagnostic, Problem};
use crate::extraction::{check_feasibility, extract_centroids, jensen_gap, ExtractionError, FeasibilityReport};
use crate::lp::LpStatus;
use crate::measure::{
    assemble_relaxation, build_discretization, build_test_basis, select_feasible_atoms, solve_relaxation, AxisRes,
    BasisMode, Discretization, MeasureError, MeasureSolution, Relaxation, RelaxationOptions, Resolution, TestBasis,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("problem file: {0}")]
    Parse(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Convexify(#[from] ConvexifyError),
    #[error(transparent)]
    Direct(#[from] DirectError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Eval(#[from] crate::expr::EvalError),
    #[error("unknown bundled problem `{0}`")]
    UnknownProblem(String),
}

pub fn parse_or_error(text: &str) -> Result<Problem, PipelineError> {
    parse_problem(text).map_err(|diags: Vec<Diagnostic>| {
        PipelineError::Parse(diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))
    })
}

/// Knobs shared by every stage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub res_x: Vec<usize>,
    pub res_y: Vec<usize>,
    pub res_z: Vec<usize>,
    pub res_u: Vec<usize>,
    pub d_x: u32,
    pub d_y: u32,
    pub eps_eq: f64,
    pub eps_ineq: f64,
    pub seed: u64,
    pub center: bool,
    /// Cells per axis for the direct solver.
    pub direct_cells: usize,
    pub direct_restarts: usize,
    pub direct_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            res_x: vec![16],
            res_y: vec![9],
            res_z: vec![9],
            res_u: vec![9],
            d_x: 3,
            d_y: 2,
            eps_eq: 1e-9,
            eps_ineq: 1e-9,
            seed: 0,
            center: true,
            direct_cells: 16,
            direct_restarts: 8,
            direct_iters: 3000,
        }
    }
}

impl PipelineConfig {
    pub fn resolution(&self) -> Resolution {
        Resolution {
            x: AxisRes(self.res_x.clone()),
            y: AxisRes(self.res_y.clone()),
            z: AxisRes(self.res_z.clone()),
            u: AxisRes(self.res_u.clone()),
        }
    }

    pub fn direct_options(&self) -> DirectOptions {
        DirectOptions {
            restarts: self.direct_restarts,
            iters: self.direct_iters,
            seed: self.seed,
            weak_degree: self.d_x.saturating_sub(1),
            ..Default::default()
        }
    }
}

/// Wall-clock seconds per named phase.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings(pub Vec<(String, f64)>);

impl Timings {
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.push((name.to_string(), t.elapsed().as_secs_f64()));
        out
    }
}

pub fn discretize(p: &Problem, cfg: &PipelineConfig) -> Result<Discretization, PipelineError> {
    let d = build_discretization(p, &cfg.resolution())?;
    Ok(select_feasible_atoms(p, &d, cfg.eps_eq, cfg.eps_ineq)?)
}

pub struct RelaxationRun {
    pub basis: TestBasis,
    pub relaxation: Relaxation,
    pub solution: MeasureSolution,
}

pub fn assemble(p: &Problem, d: &Discretization, cfg: &PipelineConfig, mode: BasisMode) -> Result<(TestBasis, Relaxation), PipelineError> {
    let tb = build_test_basis(d, mode, cfg.d_x, cfg.d_y);
    let rel = assemble_relaxation(p, d, &tb)?;
    Ok((tb, rel))
}

pub fn relax(p: &Problem, d: &Discretization, cfg: &PipelineConfig, mode: BasisMode) -> Result<RelaxationRun, PipelineError> {
    let (basis, relaxation) = assemble(p, d, cfg, mode)?;
    let opts = RelaxationOptions { center: cfg.center, ..Default::default() };
    let solution = solve_relaxation(&relaxation, d, &opts)?;
    Ok(RelaxationRun { basis, relaxation, solution })
}

pub fn convexified(p: &Problem, d: &Discretization, cfg: &PipelineConfig) -> Result<ConvexifiedSolution, PipelineError> {
    let tables = build_tables(p, d, false)?;
    let opts = ConvexifyOptions { weak_degree: cfg.d_x.saturating_sub(1), ..Default::default() };
    Ok(solve_convexified(p, d, &tables, &opts)?)
}

/// The direct solver on a mesh of `cfg.direct_cells` cells per axis.
pub fn direct(p: &Problem, cfg: &PipelineConfig) -> Result<(Discretization, DirectSolution), PipelineError> {
    let mut res = cfg.resolution();
    res.x = AxisRes::uniform(cfg.direct_cells);
    // only the cell geometry is used, so keep the atom grids minimal
    res.y = AxisRes::uniform(1);
    res.z = AxisRes::uniform(1);
    res.u = AxisRes::uniform(1);
    let d = build_discretization(p, &res)?;
    let s = solve_direct(p, &d, &cfg.direct_options())?;
    Ok((d, s))
}

/// One value of the comparison, or why it is missing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Outcome {
    Value(f64),
    Status(String),
}

impl Outcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            Outcome::Value(v) => Some(*v),
            Outcome::Status(_) => None,
        }
    }

    fn from_lp(status: LpStatus, value: f64) -> Self {
        if status == LpStatus::Optimal {
            Outcome::Value(value)
        } else {
            Outcome::Status(status.to_string())
        }
    }

    fn csv(&self) -> String {
        match self {
            Outcome::Value(v) => format!("{v}"),
            Outcome::Status(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Sandwich {
    pub envelope: Outcome,
    pub affine: Outcome,
    pub nonlinear: Outcome,
    pub direct: Outcome,
    pub tol: f64,
    /// Affine-LP Jensen gap of the centroid field.
    pub jensen_gap: Option<f64>,
    pub timings: Timings,
}

impl Sandwich {
    /// `(label, holds)` for the three inequalities; a missing value on
    /// either side fails the inequality.
    pub fn checks(&self) -> Vec<(&'static str, bool)> {
        let le = |a: &Outcome, b: &Outcome| match (a.value(), b.value()) {
            (Some(x), Some(y)) => x <= y + self.tol,
            _ => false,
        };
        vec![
            ("envelope <= affine", le(&self.envelope, &self.affine)),
            ("affine <= nonlinear", le(&self.affine, &self.nonlinear)),
            ("nonlinear <= direct", le(&self.nonlinear, &self.direct)),
        ]
    }

    pub fn holds(&self) -> bool {
        self.checks().iter().all(|c| c.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,value\n");
        for (k, v) in [
            ("envelope", &self.envelope),
            ("affine", &self.affine),
            ("nonlinear", &self.nonlinear),
            ("direct", &self.direct),
        ] {
            let _ = writeln!(s, "{k},{}", v.csv());
        }
        for (k, ok) in self.checks() {
            let _ = writeln!(s, "{k},{}", if ok { "pass" } else { "fail" });
        }
        s
    }
}

fn outcome<T>(r: Result<T, PipelineError>, f: impl FnOnce(T) -> Outcome) -> Outcome {
    match r {
        Ok(v) => f(v),
        Err(e) => Outcome::Status(e.to_string()),
    }
}

/// All four values of the sandwich `M̂ ≤ affine ≤ nonlinear ≤ direct`.
pub fn compare(p: &Problem, cfg: &PipelineConfig, tol: f64) -> Result<Sandwich, PipelineError> {
    let mut t = Timings::default();
    let d = t.time("discretize", || discretize(p, cfg))?;
    let aff = t.time("affine", || relax(p, &d, cfg, BasisMode::Affine));
    let jensen = match &aff {
        Ok(run) if run.solution.status == LpStatus::Optimal => {
            let cf = extract_centroids(&run.solution, &d)?;
            Some(jensen_gap(p, &d, &run.solution, &cf)?)
        }
        _ => None,
    };
    let affine = outcome(aff, |r| Outcome::from_lp(r.solution.status, r.solution.value));
    let nonlinear = outcome(t.time("nonlinear", || relax(p, &d, cfg, BasisMode::Nonlinear)), |r| {
        Outcome::from_lp(r.solution.status, r.solution.value)
    });
    let envelope = outcome(t.time("envelope", || convexified(p, &d, cfg)), |s| Outcome::from_lp(s.status, s.value));
    let direct = outcome(t.time("direct", || direct(p, cfg)), |(_, s)| Outcome::Value(s.value));
    Ok(Sandwich { envelope, affine, nonlinear, direct, tol, jensen_gap: jensen, timings: t })
}

/// Output of [`solve_pipeline`].
pub struct SolveRun {
    pub discretization: Discretization,
    pub runs: Vec<(BasisMode, RelaxationRun)>,
    pub centroids: Option<crate::extraction::CentroidField>,
    pub feasibility: Option<FeasibilityReport>,
    pub jensen_gap: Option<f64>,
    pub timings: Timings,
}

/// Parse-free pipeline: discretize, assemble and solve in each mode, then
/// extract and check centroids of the first mode's solution.
pub fn solve_pipeline(p: &Problem, cfg: &PipelineConfig, modes: &[BasisMode]) -> Result<SolveRun, PipelineError> {
    let mut t = Timings::default();
    let d = t.time("discretize", || discretize(p, cfg))?;
    let mut runs = vec![];
    for &mode in modes {
        let name = if mode == BasisMode::Affine { "affine" } else { "nonlinear" };
        runs.push((mode, t.time(name, || relax(p, &d, cfg, mode))?));
    }
    let (mut centroids, mut feasibility, mut gap) = (None, None, None);
    if let Some((_, run)) = runs.first() {
        if run.solution.status == LpStatus::Optimal {
            let cf = t.time("extract", || extract_centroids(&run.solution, &d))?;
            feasibility = Some(check_feasibility(p, &d, &cf, &run.basis, 1e-6)?);
            gap = Some(jensen_gap(p, &d, &run.solution, &cf)?);
            centroids = Some(cf);
        }
    }
    Ok(SolveRun { discretization: d, runs, centroids, feasibility, jensen_gap: gap, timings: t })
}

/// `mode,status,value,primal_residual,marginal_deviation` per mode.
pub fn values_csv(runs: &[(BasisMode, RelaxationRun)]) -> String {
    let mut s = String::from("mode,status,value,primal_residual,marginal_deviation\n");
    for (mode, r) in runs {
        let m = if *mode == BasisMode::Affine { "affine" } else { "nonlinear" };
        let sol = &r.solution;
        let _ = writeln!(s, "{m},{},{},{},{}", sol.status, sol.value, sol.primal_residual, sol.vertex_marginal_deviation);
    }
    s
}

/// A problem file shipped with the crate and its pinned settings.
#[derive(Clone, Debug)]
pub struct Bundled {
    pub id: &'static str,
    pub text: &'static str,
    pub config: PipelineConfig,
    /// Expected values for reproduction, `(quantity, low, high)`.
    pub expected: Vec<(&'static str, f64, f64)>,
    /// Convex in `(y, z)` with convex constraints: the no-gap setting.
    pub convex: bool,
}

impl Bundled {
    pub fn problem(&self) -> Problem {
        parse_problem(self.text).expect("bundled problem parses")
    }
}

fn cfg(res_x: usize, res_y: Vec<usize>, res_z: Vec<usize>, d_x: u32, direct_cells: usize) -> PipelineConfig {
    PipelineConfig { res_x: vec![res_x], res_y, res_z, d_x, direct_cells, ..Default::default() }
}

fn around(v: f64, tol: f64) -> (f64, f64) {
    (v - tol, v + tol)
}

/// Every bundled problem, in a fixed order.
pub fn bundled() -> Vec<Bundled> {
    let all4 = |v: f64| {
        let (lo, hi) = around(v, 0.05);
        vec![("envelope", lo, hi), ("affine", lo, hi), ("nonlinear", lo, hi), ("direct", lo, hi)]
    };
    vec![
        Bundled {
            id: "ex-4.2",
            text: include_str!("../../problems/ex-4.2.occ"),
            config: cfg(16, vec![4], vec![9], 3, 8),
            expected: vec![("affine", -0.05, 0.05), ("envelope", -1.05, -0.95)],
            convex: false,
        },
        Bundled {
            id: "ex-4.3",
            text: include_str!("../../problems/ex-4.3.occ"),
            config: cfg(16, vec![9], vec![2], 3, 8),
            expected: vec![("affine", -0.05, 0.05), ("envelope", -1.05, -0.95)],
            convex: false,
        },
        Bundled {
            id: "dirichlet-1d",
            text: include_str!("../../problems/dirichlet-1d.occ"),
            config: PipelineConfig { res_x: vec![32], res_y: vec![9], res_z: vec![9], d_x: 4, d_y: 2, direct_cells: 32, ..Default::default() },
            expected: all4(1.0),
            convex: true,
        },
        Bundled {
            id: "geodesic",
            text: include_str!("../../problems/geodesic.occ"),
            config: PipelineConfig { res_x: vec![32], res_y: vec![4, 3], res_z: vec![7], d_x: 4, d_y: 2, direct_cells: 32, ..Default::default() },
            expected: all4(1.0),
            convex: true,
        },
        Bundled {
            id: "laplace-weak",
            text: include_str!("../../problems/laplace-weak.occ"),
            config: cfg(4, vec![9], vec![5], 3, 8),
            expected: all4(2.0 / 3.0),
            convex: true,
        },
        Bundled {
            id: "oc-tracking",
            text: include_str!("../../problems/oc-tracking.occ"),
            config: PipelineConfig { res_x: vec![32], res_y: vec![9], res_z: vec![17], res_u: vec![33], d_x: 4, d_y: 2, direct_cells: 32, ..Default::default() },
            expected: vec![("affine", 1f64.tanh() * 0.95, 1f64.tanh() * 1.05), ("direct", 1f64.tanh() * 0.95, 1f64.tanh() * 1.05)],
            convex: true,
        },
        Bundled {
            id: "micromagnetics-2d",
            text: include_str!("../../problems/micromagnetics-2d.occ"),
            config: PipelineConfig {
                res_x: vec![6],
                res_y: vec![1, 1, 3],
                res_z: vec![2, 2, 2, 2, 3, 3],
                d_x: 3,
                d_y: 1,
                direct_cells: 6,
                ..Default::default()
            },
            expected: vec![],
            convex: false,
        },
        Bundled {
            id: "double-well",
            text: include_str!("../../problems/double-well.occ"),
            config: cfg(16, vec![9], vec![7], 3, 16),
            expected: vec![],
            convex: false,
        },
        Bundled {
            id: "obstacle",
            text: include_str!("../../problems/obstacle.occ"),
            config: cfg(32, vec![21], vec![11], 4, 32),
            expected: vec![],
            convex: true,
        },
        Bundled {
            id: "dirichlet-2d",
            text: include_str!("../../problems/dirichlet-2d.occ"),
            config: cfg(4, vec![17], vec![5], 3, 8),
            expected: all4(0.5),
            convex: true,
        },
        Bundled {
            id: "zero-lagrangian",
            text: include_str!("../../problems/zero-lagrangian.occ"),
            config: cfg(8, vec![5], vec![5], 2, 8),
            expected: all4(0.0),
            convex: true,
        },
        Bundled {
            id: "convex-integral",
            text: include_str!("../../problems/convex-integral.occ"),
            config: cfg(16, vec![9], vec![9], 3, 16),
            expected: all4(0.5625),
            convex: true,
        },
    ]
}

pub fn bundled_problem(id: &str) -> Result<Bundled, PipelineError> {
    bundled().into_iter().find(|b| b.id == id).ok_or_else(|| PipelineError::UnknownProblem(id.to_string()))
}

/// Ids accepted by the reproduction command.
pub const REPRODUCIBLE: [&str; 7] =
    ["ex-4.2", "ex-4.3", "dirichlet-1d", "geodesic", "laplace-weak", "oc-tracking", "micromagnetics-2d"];

#[derive(Clone, Debug, Serialize)]
pub struct ReproRow {
    pub quantity: String,
    pub value: Option<f64>,
    pub low: f64,
    pub high: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Reproduction {
    pub id: String,
    pub rows: Vec<ReproRow>,
    pub notes: Vec<String>,
}

impl Reproduction {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,value,low,high,pass\n");
        for r in &self.rows {
            let v = r.value.map_or("none".to_string(), |v| v.to_string());
            let _ = writeln!(s, "{},{v},{},{},{}", r.quantity, r.low, r.high, r.pass);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.id);
        for r in &self.rows {
            let v = r.value.map_or("    none".to_string(), |v| format!("{v:>12.6}"));
            let _ = writeln!(s, "  {:<28} {v}  [{:.4}, {:.4}]  {}", r.quantity, r.low, r.high, if r.pass { "ok" } else { "FAIL" });
        }
        for n in &self.notes {
            let _ = writeln!(s, "  note: {n}");
        }
        s
    }
}

fn row(quantity: &str, value: Option<f64>, low: f64, high: f64) -> ReproRow {
    ReproRow { quantity: quantity.into(), value, low, high, pass: value.is_some_and(|v| v >= low && v <= high) }
}

/// Runs a bundled example at its pinned settings and compares against the
/// expected values.
pub fn reproduce(id: &str) -> Result<Reproduction, PipelineError> {
    let b = bundled_problem(id)?;
    let p = b.problem();
    if id == "micromagnetics-2d" {
        return micromagnetics::reproduce(&p, &b.config);
    }
    let sw = compare(&p, &b.config, 0.05)?;
    let mut rows = vec![];
    let mut notes = vec![];
    for &(q, lo, hi) in &b.expected {
        let v = match q {
            "envelope" => &sw.envelope,
            "affine" => &sw.affine,
            "nonlinear" => &sw.nonlinear,
            _ => &sw.direct,
        };
        if let Outcome::Status(s) = v {
            notes.push(format!("{q}: {s}"));
        }
        rows.push(row(q, v.value(), lo, hi));
    }
    let pairs = [(&sw.envelope, &sw.affine), (&sw.affine, &sw.nonlinear), (&sw.nonlinear, &sw.direct)];
    for ((label, _), (a, b)) in sw.checks().into_iter().zip(pairs) {
        let excess = a.value().zip(b.value()).map(|(a, b)| a - b);
        rows.push(row(label, excess, f64::NEG_INFINITY, sw.tol));
    }
    if id == "laplace-weak" {
        rows.extend(laplace_rows(&p, &b.config)?);
    }
    Ok(Reproduction { id: id.into(), rows, notes })
}

/// Weak-Laplace rows of the affine LP and distance of its centroid field
/// from the five-point harmonic solution.
fn laplace_rows(p: &Problem, cfg: &PipelineConfig) -> Result<Vec<ReproRow>, PipelineError> {
    let d = discretize(p, cfg)?;
    let run = relax(p, &d, cfg, BasisMode::Affine)?;
    let weak_res = run
        .relaxation
        .weak
        .iter()
        .map(|&(r, _, _)| (run.relaxation.lp.row_activity(r, &lp_x(&run)) - run.relaxation.lp.rows[r].rhs).abs())
        .fold(0.0, f64::max);
    let cf = extract_centroids(&run.solution, &d)?;
    let h = harmonic_five_point(cfg.res_x[0], |x1, x2| x1 * x2);
    let nx = cfg.res_x[0];
    let mut dev: f64 = 0.0;
    for (k, c) in d.cells.iter().enumerate() {
        // cell average of the bilinear interpolant of the nodal solution
        let (i, j) = ((c.center[0] * nx as f64) as usize, (c.center[1] * nx as f64) as usize);
        let avg = 0.25 * (h[i][j] + h[i + 1][j] + h[i][j + 1] + h[i + 1][j + 1]);
        dev = dev.max((cf.y[k][0] - avg).abs());
    }
    let hh = 1.0 / nx as f64;
    Ok(vec![row("weak row residual", Some(weak_res), 0.0, 1e-7), row("centroid vs harmonic", Some(dev), 0.0, hh * hh)])
}

fn lp_x(run: &RelaxationRun) -> Vec<f64> {
    let mut x = run.solution.bulk.clone();
    x.extend_from_slice(&run.solution.boundary);
    x.resize(run.relaxation.lp.num_vars(), 0.0);
    x
}

/// Five-point discrete harmonic function on the `(n+1)²` vertices of the
/// unit square with boundary values `g`, by Gauss-Seidel.
pub fn harmonic_five_point(n: usize, g: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
    let h = 1.0 / n as f64;
    let mut u = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=n {
            if i == 0 || j == 0 || i == n || j == n {
                u[i][j] = g(i as f64 * h, j as f64 * h);
            }
        }
    }
    for _ in 0..20_000 {
        let mut change: f64 = 0.0;
        for i in 1..n {
            for j in 1..n {
                let v = 0.25 * (u[i - 1][j] + u[i + 1][j] + u[i][j - 1] + u[i][j + 1]);
                change = change.max((v - u[i][j]).abs());
                u[i][j] = v;
            }
        }
        if change < 1e-15 {
            break;
        }
    }
    u
}

/// Provenance of a run: enough to reproduce it bit for bit.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub problem_sha256: String,
    pub config: PipelineConfig,
    pub lp_options: LpOptionsRecord,
    pub timings: Timings,
}

#[derive(Clone, Debug, Serialize)]
pub struct LpOptionsRecord {
    pub max_iters: usize,
    pub tol: f64,
    pub center_slack: f64,
    pub max_center_slack: f64,
    pub marginal_target: f64,
}

impl RunManifest {
    pub fn new(command: &str, problem_text: &str, config: &PipelineConfig, timings: Timings) -> Self {
        let opts = RelaxationOptions::default();
        RunManifest {
            version: format!("occurelax-{}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            problem_sha256: hex::encode(Sha256::digest(problem_text.as_bytes())),
            config: config.clone(),
            lp_options: LpOptionsRecord {
                max_iters: opts.solve.max_iters,
                tol: opts.solve.tol,
                center_slack: opts.center_slack,
                max_center_slack: opts.max_center_slack,
                marginal_target: opts.marginal_target,
            },
            timings,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_problems_parse_and_are_unique() {
        let all = bundled();
        assert!(all.len() >= 10);
        for b in &all {
            b.problem();
        }
        let mut ids: Vec<&str> = all.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), all.len());
        for id in REPRODUCIBLE {
            assert!(bundled_problem(id).is_ok());
        }
    }

    #[test]
    fn five_point_solver_reproduces_bilinear_data() {
        let u = harmonic_five_point(8, |a, b| a * b);
        for (i, r) in u.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                assert!((v - i as f64 * j as f64 / 64.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn manifest_hash_and_json() {
        let m = RunManifest::new("solve", "abc", &PipelineConfig::default(), Timings::default());
        assert_eq!(m.problem_sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let j = m.to_json();
        assert!(j.contains("\"res_x\": [\n      16\n    ]"));
    }

    #[test]
    fn zero_lagrangian_sandwich() {
        let b = bundled_problem("zero-lagrangian").unwrap();
        let sw = compare(&b.problem(), &b.config, 0.05).unwrap();
        for v in [&sw.envelope, &sw.affine, &sw.nonlinear, &sw.direct] {
            assert_eq!(v.value(), Some(0.0), "{sw:?}");
        }
        assert!(sw.holds());
        assert!(sw.to_csv().starts_with("quantity,value\nenvelope,0\n"));
    }
}
