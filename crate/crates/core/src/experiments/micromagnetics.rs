//! Checks for the bundled micromagnetics instance: the affine relaxation
//! and the envelope formulation against each other and against the energy
//! of explicit magnetization fields.
//!
//! A candidate field `m` is evaluated by solving the weak potential
//! equation `∫ ∇φ·(m − ∇u) = 0`, `u = 0` on the boundary, with linear
//! finite elements on a fine triangulation, then integrating the problem's
//! Lagrangian at `(x, (m, u), (0, 0, ∇u))` over the triangles.

use std::f64::consts::FRAC_PI_4;

use super::{convexified, discretize, relax, row, PipelineConfig, PipelineError, ReproRow, Reproduction};
use crate::dsl::Problem;
use crate::expr::{EvalError, Point};
use crate::lp::LpStatus;
use crate::measure::BasisMode;

/// A named magnetization field on the unit square.
pub struct Candidate {
    pub name: &'static str,
    pub field: Box<dyn Fn(f64, f64) -> [f64; 2] + Sync>,
}

fn dir(k: i32) -> [f64; 2] {
    let t = f64::from(k) * FRAC_PI_4;
    [t.cos(), t.sin()]
}

/// Fields taking values in the eight magnetization directions of the
/// problem's circle grid, plus a vortex.
pub fn candidates(p: &Problem) -> Vec<Candidate> {
    let lag = p.lagrangian.clone();
    let pointwise = move |x1: f64, x2: f64| -> [f64; 2] {
        let mut best = (f64::INFINITY, dir(0));
        for k in 0..8 {
            let m = dir(k);
            let v = lag.eval(&Point::new(&[x1, x2], &[m[0], m[1], 0.0], &[0.0; 6], &[])).unwrap_or(f64::INFINITY);
            if v < best.0 {
                best = (v, m);
            }
        }
        best.1
    };
    vec![
        Candidate { name: "uniform +x1", field: Box::new(|_, _| dir(0)) },
        Candidate { name: "uniform -x1", field: Box::new(|_, _| dir(4)) },
        Candidate { name: "uniform +x2", field: Box::new(|_, _| dir(2)) },
        Candidate { name: "uniform diagonal", field: Box::new(|_, _| dir(1)) },
        Candidate { name: "pointwise minimizer", field: Box::new(pointwise) },
        Candidate {
            name: "stripes x2",
            field: Box::new(|x1, _| if ((x1 * 6.0).floor() as i64) % 2 == 0 { dir(2) } else { dir(6) }),
        },
        Candidate {
            name: "vortex",
            field: Box::new(|x1, x2| {
                let (a, b) = (x1 - 0.5, x2 - 0.5);
                let r = (a * a + b * b).sqrt();
                if r < 1e-12 {
                    dir(0)
                } else {
                    [-b / r, a / r]
                }
            }),
        },
    ]
}

struct Mesh {
    n: usize,
    /// Triangles as vertex triples, counter-clockwise.
    tris: Vec<[usize; 3]>,
}

impl Mesh {
    fn new(n: usize) -> Self {
        let v = |i: usize, j: usize| i * (n + 1) + j;
        let mut tris = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                tris.push([v(i, j), v(i + 1, j), v(i + 1, j + 1)]);
                tris.push([v(i, j), v(i + 1, j + 1), v(i, j + 1)]);
            }
        }
        Mesh { n, tris }
    }

    fn coords(&self, v: usize) -> [f64; 2] {
        let h = 1.0 / self.n as f64;
        [(v / (self.n + 1)) as f64 * h, (v % (self.n + 1)) as f64 * h]
    }

    fn boundary(&self, v: usize) -> bool {
        let (i, j) = (v / (self.n + 1), v % (self.n + 1));
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Area, centroid and basis gradients of a triangle.
    fn geometry(&self, t: &[usize; 3]) -> (f64, [f64; 2], [[f64; 2]; 3]) {
        let p: Vec<[f64; 2]> = t.iter().map(|&v| self.coords(v)).collect();
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut g = [[0.0; 2]; 3];
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            g[a] = [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det];
        }
        let centroid = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        (0.5 * det.abs(), centroid, g)
    }
}

fn apply_stiffness(mesh: &Mesh, geo: &[(f64, [f64; 2], [[f64; 2]; 3])], u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (t, (area, _, g)) in mesh.tris.iter().zip(geo) {
        let grad = [0, 1].map(|c| (0..3).map(|a| u[t[a]] * g[a][c]).sum::<f64>());
        for a in 0..3 {
            out[t[a]] += area * (grad[0] * g[a][0] + grad[1] * g[a][1]);
        }
    }
    for (v, o) in out.iter_mut().enumerate() {
        if mesh.boundary(v) {
            *o = u[v];
        }
    }
}

/// Energy of a field on an `n × n` square grid split into triangles.
pub fn candidate_energy(p: &Problem, field: &(dyn Fn(f64, f64) -> [f64; 2] + Sync), n: usize) -> Result<f64, EvalError> {
    let mesh = Mesh::new(n);
    let nv = (n + 1) * (n + 1);
    let geo: Vec<_> = mesh.tris.iter().map(|t| mesh.geometry(t)).collect();
    let ms: Vec<[f64; 2]> = geo.iter().map(|(_, c, _)| field(c[0], c[1])).collect();
    let mut b = vec![0.0; nv];
    for ((t, (area, _, g)), m) in mesh.tris.iter().zip(&geo).zip(&ms) {
        for a in 0..3 {
            b[t[a]] += area * (m[0] * g[a][0] + m[1] * g[a][1]);
        }
    }
    for (v, bv) in b.iter_mut().enumerate() {
        if mesh.boundary(v) {
            *bv = 0.0;
        }
    }
    // conjugate gradients; the boundary rows are identity rows
    let mut u = vec![0.0; nv];
    let mut r = b.clone();
    let mut d = r.clone();
    let mut ad = vec![0.0; nv];
    let mut rr: f64 = r.iter().map(|x| x * x).sum();
    let stop = 1e-26 * (1.0 + rr);
    for _ in 0..10 * nv {
        if rr <= stop {
            break;
        }
        apply_stiffness(&mesh, &geo, &d, &mut ad);
        let alpha = rr / d.iter().zip(&ad).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..nv {
            u[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        let rr_new: f64 = r.iter().map(|x| x * x).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..nv {
            d[i] = r[i] + beta * d[i];
        }
    }
    let mut e = 0.0;
    for ((t, (area, c, g)), m) in mesh.tris.iter().zip(&geo).zip(&ms) {
        let grad = [0, 1].map(|k| (0..3).map(|a| u[t[a]] * g[a][k]).sum::<f64>());
        let uc = (u[t[0]] + u[t[1]] + u[t[2]]) / 3.0;
        let z = [0.0, 0.0, 0.0, 0.0, grad[0], grad[1]];
        e += area * p.lagrangian.eval(&Point::new(c, &[m[0], m[1], uc], &z, &[]))?;
    }
    Ok(e)
}

/// Fine grid used for candidate energies.
pub const CANDIDATE_GRID: usize = 48;

pub fn reproduce(p: &Problem, cfg: &PipelineConfig) -> Result<Reproduction, PipelineError> {
    let d = discretize(p, cfg)?;
    let aff = relax(p, &d, cfg, BasisMode::Affine)?;
    let env = convexified(p, &d, cfg)?;
    let a = (aff.solution.status == LpStatus::Optimal).then_some(aff.solution.value);
    let e = (env.status == LpStatus::Optimal).then_some(env.value);
    let mut rows: Vec<ReproRow> = vec![];
    let mut notes = vec![];
    rows.push(row("affine", a, f64::NEG_INFINITY, f64::INFINITY));
    rows.push(row("envelope", e, f64::NEG_INFINITY, f64::INFINITY));
    let rel = match (a, e) {
        (Some(a), Some(e)) => Some((a - e).abs() / a.abs().max(e.abs()).max(1e-12)),
        _ => None,
    };
    rows.push(row("relative gap", rel, 0.0, 0.10));
    // the uniform field attains the bound exactly, so allow LP rounding
    let upper = a.unwrap_or(f64::NAN).max(e.unwrap_or(f64::NAN));
    let upper = upper - 1e-9 * (1.0 + upper.abs());
    for c in candidates(p) {
        let energy = candidate_energy(p, c.field.as_ref(), CANDIDATE_GRID)?;
        notes.push(format!("candidate {}: energy {energy:.6}", c.name));
        rows.push(row(&format!("candidate {}", c.name), Some(energy), upper, f64::INFINITY));
    }
    Ok(Reproduction { id: "micromagnetics-2d".into(), rows, notes })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dsl::parse_problem;

    fn problem(l: &str) -> Problem {
        parse_problem(&format!(
            "occurelax-problem v1\n[domain]\nn = 2\nomega = [0, 1] x [0, 1]\n[spaces]\nm = 3\n\
             y = [-1, 1] x [-1, 1] x [-1, 1]\nz = [-1, 1] x [-1, 1] x [-1, 1] x [-1, 1] x [-1, 1] x [-1, 1]\n\
             [objective]\nL = {l}\n"
        ))
        .unwrap()
    }

    #[test]
    fn uniform_field_has_no_stray_energy() {
        let p = problem("0.5*(z31^2 + z32^2)");
        let e = candidate_energy(&p, &|_, _| [0.6, 0.8], 16).unwrap();
        assert!(e.abs() < 1e-20, "{e}");
    }

    #[test]
    fn stray_energy_matches_the_sine_mode() {
        // ½∫|∇u|² equals ½∫∇u·m for the Dirichlet potential
        let p = problem("0.5*(z31^2 + z32^2)");
        let q = problem("0.5*(z31*y1 + z32*y2)");
        let f = |x1: f64, x2: f64| [(PI * x1).sin() * (PI * x2).cos(), 0.0];
        let a = candidate_energy(&p, &f, 64).unwrap();
        let b = candidate_energy(&q, &f, 64).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-3 * a, "{a} vs {b}");
    }

    #[test]
    fn zeeman_term_integrates_exactly() {
        let p = problem("-(0.4 + 0.2*x2)*y1");
        let e = candidate_energy(&p, &|_, _| [1.0, 0.0], 8).unwrap();
        assert!((e + 0.5).abs() < 1e-12);
    }
}
