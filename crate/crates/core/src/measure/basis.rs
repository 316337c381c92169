//! Polynomial test functions in normalized coordinates.
//!
//! Every test function is `P(t) · Q(s)` (optionally times the bump
//! `Π (1 - t_j²)`) with `t` the image of `x` in `[-1, 1]ⁿ` and `s` the
//! image of `y` in `[-1, 1]ᵐ`. The `x` part is separable, so its exact
//! averages over cells and facets are products of one-dimensional
//! integrals.

use super::{Cell, Discretization, Face};

/// Dense univariate polynomial, `coeffs[k]` multiplies `t^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly1(pub Vec<f64>);

impl Poly1 {
    pub fn monomial(k: u32) -> Self {
        let mut c = vec![0.0; k as usize + 1];
        c[k as usize] = 1.0;
        Poly1(c)
    }

    pub fn mul(&self, o: &Poly1) -> Poly1 {
        let mut c = vec![0.0; self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly1(c)
    }

    pub fn derivative(&self) -> Poly1 {
        if self.0.len() <= 1 {
            return Poly1(vec![0.0]);
        }
        Poly1(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    fn antiderivative_at(&self, t: f64) -> f64 {
        self.0.iter().enumerate().rev().fold(0.0, |acc, (k, c)| acc * t + c / (k + 1) as f64) * t
    }

    /// Mean value over `[a, b]`; the point value when the interval is empty.
    pub fn average(&self, a: f64, b: f64) -> f64 {
        if b - a <= 0.0 {
            return self.eval(a);
        }
        (self.antiderivative_at(b) - self.antiderivative_at(a)) / (b - a)
    }
}

/// Affine map of a box onto `[-1, 1]` per axis. Degenerate axes are only
/// shifted.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Normalizer {
    pub fn new(bounds: &[(f64, f64)]) -> Self {
        Normalizer { lo: bounds.iter().map(|b| b.0).collect(), hi: bounds.iter().map(|b| b.1).collect() }
    }

    pub fn of_points(pts: &[Vec<f64>], dim: usize) -> Self {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in pts {
            for i in 0..dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Normalizer { lo, hi }
    }

    pub fn t(&self, i: usize, v: f64) -> f64 {
        if self.hi[i] > self.lo[i] {
            (2.0 * v - self.lo[i] - self.hi[i]) / (self.hi[i] - self.lo[i])
        } else {
            v - self.lo[i]
        }
    }

    /// `dt/dv` on axis `i`.
    pub fn scale(&self, i: usize) -> f64 {
        if self.hi[i] > self.lo[i] {
            2.0 / (self.hi[i] - self.lo[i])
        } else {
            1.0
        }
    }
}

/// All exponent vectors in `nvars` variables with total degree in
/// `min_deg..=max_deg`, ordered by degree then lexicographically.
pub fn monomials(nvars: usize, min_deg: u32, max_deg: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for deg in min_deg..=max_deg {
        let mut cur = vec![0u32; nvars];
        fill(&mut out, &mut cur, 0, deg);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos == cur.len() {
        if left == 0 {
            out.push(cur.clone());
        }
        return;
    }
    if pos == cur.len() - 1 {
        cur[pos] = left;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        fill(out, cur, pos + 1, left - k);
    }
    cur[pos] = 0;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestFunction {
    pub x_exp: Vec<u32>,
    pub y_exp: Vec<u32>,
    pub bump: bool,
}

impl TestFunction {
    pub fn y_degree(&self) -> u32 {
        self.y_exp.iter().sum()
    }

    fn x_factor(&self, j: usize) -> Poly1 {
        let p = Poly1::monomial(self.x_exp[j]);
        if self.bump {
            p.mul(&Poly1(vec![1.0, 0.0, -1.0]))
        } else {
            p
        }
    }

    /// Exact mean of the `x` part (or of its derivative along `deriv`)
    /// over the box `[lower, upper]`.
    pub fn x_average(&self, xn: &Normalizer, lower: &[f64], upper: &[f64], deriv: Option<usize>) -> f64 {
        let mut v = 1.0;
        for j in 0..self.x_exp.len() {
            let mut f = self.x_factor(j);
            if deriv == Some(j) {
                f = f.derivative();
            }
            v *= f.average(xn.t(j, lower[j]), xn.t(j, upper[j]));
            if deriv == Some(j) {
                v *= xn.scale(j);
            }
            if v == 0.0 {
                break;
            }
        }
        v
    }

    pub fn cell_average(&self, xn: &Normalizer, c: &Cell, deriv: Option<usize>) -> f64 {
        self.x_average(xn, &c.lower, &c.upper, deriv)
    }

    pub fn face_average(&self, xn: &Normalizer, f: &Face) -> f64 {
        self.x_average(xn, &f.lower, &f.upper, None)
    }

    pub fn x_value(&self, xn: &Normalizer, x: &[f64], deriv: Option<usize>) -> f64 {
        self.x_average(xn, x, x, deriv)
    }

    pub fn y_value(&self, yn: &Normalizer, y: &[f64]) -> f64 {
        self.y_exp.iter().enumerate().map(|(i, &k)| yn.t(i, y[i]).powi(k as i32)).product()
    }

    /// `∂Q/∂y_i` for every `i`.
    pub fn y_gradient(&self, yn: &Normalizer, y: &[f64]) -> Vec<f64> {
        let s: Vec<f64> = (0..self.y_exp.len()).map(|i| yn.t(i, y[i])).collect();
        (0..self.y_exp.len())
            .map(|i| {
                let k = self.y_exp[i];
                if k == 0 {
                    return 0.0;
                }
                let mut g = k as f64 * s[i].powi(k as i32 - 1) * yn.scale(i);
                for (l, &e) in self.y_exp.iter().enumerate() {
                    if l != i {
                        g *= s[l].powi(e as i32);
                    }
                }
                g
            })
            .collect()
    }

    /// Point value `φ(x, y)`.
    pub fn eval(&self, xn: &Normalizer, yn: &Normalizer, x: &[f64], y: &[f64]) -> f64 {
        self.x_value(xn, x, None) * self.y_value(yn, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisMode {
    Affine,
    Nonlinear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestBasis {
    pub mode: BasisMode,
    pub d_x: u32,
    pub d_y: u32,
    /// Affine entries first (`y`-degree 0, then each `y_i`), then the
    /// nonlinear entries of `y`-degree `2..=d_y`.
    pub entries: Vec<TestFunction>,
    /// `y`-free functions vanishing on ∂Ω.
    pub compact_entries: Vec<TestFunction>,
    /// `y`-free functions with nonzero gradient and no boundary condition.
    pub free_entries: Vec<TestFunction>,
    pub x_norm: Normalizer,
    pub y_norm: Normalizer,
}

impl TestBasis {
    pub fn num_affine(&self) -> usize {
        self.entries.iter().filter(|e| e.y_degree() <= 1).count()
    }
}

pub fn build_test_basis(d: &Discretization, mode: BasisMode, d_x: u32, d_y: u32) -> TestBasis {
    build_test_basis_with(d, mode, d_x, d_y, d_x.saturating_sub(1))
}

/// Like [`build_test_basis`] with an explicit degree for the polynomial
/// factor of the compact entries.
pub fn build_test_basis_with(d: &Discretization, mode: BasisMode, d_x: u32, d_y: u32, compact_degree: u32) -> TestBasis {
    let n = d.n;
    let m = d.m;
    let xs = monomials(n, 0, d_x);
    let mut entries = Vec::new();
    for a in &xs {
        entries.push(TestFunction { x_exp: a.clone(), y_exp: vec![0; m], bump: false });
    }
    for i in 0..m {
        let mut e = vec![0; m];
        e[i] = 1;
        for a in &xs {
            entries.push(TestFunction { x_exp: a.clone(), y_exp: e.clone(), bump: false });
        }
    }
    if mode == BasisMode::Nonlinear && d_y >= 2 {
        for b in monomials(m, 2, d_y) {
            for a in &xs {
                entries.push(TestFunction { x_exp: a.clone(), y_exp: b.clone(), bump: false });
            }
        }
    }
    let compact_entries = monomials(n, 0, compact_degree)
        .into_iter()
        .map(|a| TestFunction { x_exp: a, y_exp: vec![0; m], bump: true })
        .collect();
    let free_entries = monomials(n, 1, d_x.max(1))
        .into_iter()
        .map(|a| TestFunction { x_exp: a, y_exp: vec![0; m], bump: false })
        .collect();
    TestBasis {
        mode,
        d_x,
        d_y,
        entries,
        compact_entries,
        free_entries,
        x_norm: Normalizer::new(&d.omega.0),
        y_norm: Normalizer::of_points(&d.y_nodes, m),
    }
}
