//! Scalar expressions over the variable blocks `x ∈ ℝⁿ`, `y ∈ ℝᵐ`,
//! `z ∈ ℝ^{m×n}` and `u ∈ ℝᵈ`.
//!
//! Expressions are immutable trees. Evaluation is exact floating-point
//! arithmetic over the tree; division, square roots and fractional powers
//! carry domain guards that turn into [`EvalError::DomainGuard`] instead of
//! silently producing NaN.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Block {
    X,
    Y,
    Z,
    U,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Block::X => "x",
            Block::Y => "y",
            Block::Z => "z",
            Block::U => "u",
        };
        f.write_str(s)
    }
}

/// A reference to one scalar component of a block. Indices are zero-based;
/// `Z(i, j)` is the derivative of `y_i` along `x_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(usize),
    Y(usize),
    Z(usize, usize),
    U(usize),
}

impl Var {
    pub fn block(&self) -> Block {
        match self {
            Var::X(_) => Block::X,
            Var::Y(_) => Block::Y,
            Var::Z(..) => Block::Z,
            Var::U(_) => Block::U,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::Z(i, j) => write!(f, "z{}{}", i + 1, j + 1),
            Var::U(i) => write!(f, "u{}", i + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Sqrt(Box<Expr>),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
    /// Euclidean norm of the argument list.
    Norm(Vec<Expr>),
    Dot(Vec<Expr>, Vec<Expr>),
    /// 1 inside the closed axis-aligned box over `block`, 0 outside.
    Indicator { block: Block, bounds: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("expression references block `{0}` which was not supplied")]
    MissingBlock(Block),
    #[error("variable `{0}` is outside the supplied block dimensions")]
    OutOfRange(Var),
    #[error("domain guard violated: {0}")]
    DomainGuard(String),
}

/// Block values at which an expression is evaluated. An empty slice means
/// the block is absent. `z` is stored row-major with `n` columns.
#[derive(Clone, Copy, Debug, Default)]
pub struct Point<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub z: &'a [f64],
    pub u: &'a [f64],
    pub n: usize,
}

impl<'a> Point<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64], z: &'a [f64], u: &'a [f64]) -> Self {
        Point { x, y, z, u, n: x.len() }
    }

    fn block(&self, b: Block) -> &'a [f64] {
        match b {
            Block::X => self.x,
            Block::Y => self.y,
            Block::Z => self.z,
            Block::U => self.u,
        }
    }

    fn get(&self, v: Var) -> Result<f64, EvalError> {
        let slice = self.block(v.block());
        if slice.is_empty() {
            return Err(EvalError::MissingBlock(v.block()));
        }
        let idx = match v {
            Var::X(i) | Var::Y(i) | Var::U(i) => i,
            Var::Z(i, j) => {
                if j >= self.n {
                    return Err(EvalError::OutOfRange(v));
                }
                i * self.n + j
            }
        };
        slice.get(idx).copied().ok_or(EvalError::OutOfRange(v))
    }
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }
    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }
    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }
    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }
    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }
    pub fn pow(a: Expr, b: Expr) -> Expr {
        Expr::Pow(Box::new(a), Box::new(b))
    }
    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }
    pub fn abs(a: Expr) -> Expr {
        Expr::Abs(Box::new(a))
    }
    pub fn sqrt(a: Expr) -> Expr {
        Expr::Sqrt(Box::new(a))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn eval(&self, p: &Point<'_>) -> Result<f64, EvalError> {
        use Expr::*;
        Ok(match self {
            Const(c) => *c,
            Var(v) => p.get(*v)?,
            Neg(a) => -a.eval(p)?,
            Add(a, b) => a.eval(p)? + b.eval(p)?,
            Sub(a, b) => a.eval(p)? - b.eval(p)?,
            Mul(a, b) => a.eval(p)? * b.eval(p)?,
            Div(a, b) => {
                let num = a.eval(p)?;
                let den = b.eval(p)?;
                if den == 0.0 {
                    return Err(EvalError::DomainGuard(format!("division by zero in `{self}`")));
                }
                num / den
            }
            Pow(a, b) => {
                let base = a.eval(p)?;
                let ex = b.eval(p)?;
                if ex.fract() == 0.0 && ex.abs() <= i32::MAX as f64 {
                    if base == 0.0 && ex < 0.0 {
                        return Err(EvalError::DomainGuard(format!(
                            "zero raised to a negative power in `{self}`"
                        )));
                    }
                    base.powi(ex as i32)
                } else {
                    if base < 0.0 {
                        return Err(EvalError::DomainGuard(format!(
                            "negative base with fractional exponent in `{self}`"
                        )));
                    }
                    if base == 0.0 && ex < 0.0 {
                        return Err(EvalError::DomainGuard(format!(
                            "zero raised to a negative power in `{self}`"
                        )));
                    }
                    base.powf(ex)
                }
            }
            Abs(a) => a.eval(p)?.abs(),
            Sqrt(a) => {
                let v = a.eval(p)?;
                if v < 0.0 {
                    return Err(EvalError::DomainGuard(format!("sqrt of negative value in `{self}`")));
                }
                v.sqrt()
            }
            Min(args) => {
                let mut acc = f64::INFINITY;
                for a in args {
                    acc = acc.min(a.eval(p)?);
                }
                acc
            }
            Max(args) => {
                let mut acc = f64::NEG_INFINITY;
                for a in args {
                    acc = acc.max(a.eval(p)?);
                }
                acc
            }
            Norm(args) => {
                let mut acc = 0.0;
                for a in args {
                    let v = a.eval(p)?;
                    acc += v * v;
                }
                acc.sqrt()
            }
            Dot(a, b) => {
                let mut acc = 0.0;
                for (l, r) in a.iter().zip(b) {
                    acc += l.eval(p)? * r.eval(p)?;
                }
                acc
            }
            Indicator { block, bounds } => {
                let vals = p.block(*block);
                if vals.is_empty() {
                    return Err(EvalError::MissingBlock(*block));
                }
                if vals.len() < bounds.len() {
                    return Err(EvalError::MissingBlock(*block));
                }
                let inside = bounds
                    .iter()
                    .zip(vals)
                    .all(|(&(lo, hi), &v)| v >= lo && v <= hi);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// Visits every variable reference.
    pub fn for_each_var(&self, f: &mut impl FnMut(Var)) {
        use Expr::*;
        match self {
            Const(_) => {}
            Var(v) => f(*v),
            Neg(a) | Abs(a) | Sqrt(a) => a.for_each_var(f),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Min(args) | Max(args) | Norm(args) => args.iter().for_each(|a| a.for_each_var(f)),
            Dot(a, b) => a.iter().chain(b).for_each(|e| e.for_each_var(f)),
            Indicator { .. } => {}
        }
    }

    /// Blocks referenced anywhere in the tree, indicator nodes included.
    pub fn blocks(&self) -> BTreeSet<Block> {
        let mut out = BTreeSet::new();
        self.for_each_var(&mut |v| {
            out.insert(v.block());
        });
        self.for_each_indicator(&mut |b| {
            out.insert(b);
        });
        out
    }

    fn for_each_indicator(&self, f: &mut impl FnMut(Block)) {
        use Expr::*;
        match self {
            Const(_) | Var(_) => {}
            Neg(a) | Abs(a) | Sqrt(a) => a.for_each_indicator(f),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.for_each_indicator(f);
                b.for_each_indicator(f);
            }
            Min(args) | Max(args) | Norm(args) => args.iter().for_each(|a| a.for_each_indicator(f)),
            Dot(a, b) => a.iter().chain(b).for_each(|e| e.for_each_indicator(f)),
            Indicator { block, .. } => f(*block),
        }
    }

    pub fn uses(&self, b: Block) -> bool {
        self.blocks().contains(&b)
    }

    /// Indicator nodes in the tree as `(block, dimension)` pairs.
    pub fn indicators(&self) -> Vec<(Block, usize)> {
        let mut out = Vec::new();
        self.collect_indicators(&mut out);
        out
    }

    fn collect_indicators(&self, out: &mut Vec<(Block, usize)>) {
        use Expr::*;
        match self {
            Const(_) | Var(_) => {}
            Neg(a) | Abs(a) | Sqrt(a) => a.collect_indicators(out),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.collect_indicators(out);
                b.collect_indicators(out);
            }
            Min(args) | Max(args) | Norm(args) => args.iter().for_each(|a| a.collect_indicators(out)),
            Dot(a, b) => a.iter().chain(b).for_each(|e| e.collect_indicators(out)),
            Indicator { block, bounds } => out.push((*block, bounds.len())),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 || c.is_sign_negative() => 3,
            _ => 5,
        }
    }
}

fn fmt_number(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c.is_infinite() {
        if c > 0.0 {
            f.write_str("inf")
        } else {
            f.write_str("(-inf)")
        }
    } else if c.is_sign_negative() {
        write!(f, "(-{})", -c)
    } else {
        write!(f, "{c}")
    }
}

fn fmt_list(f: &mut fmt::Formatter<'_>, args: &[Expr]) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

/// Prints `e`, parenthesized when its precedence is below `min_prec`.
fn fmt_sub(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Const(c) => fmt_number(f, *c),
            Var(v) => write!(f, "{v}"),
            Neg(a) => {
                f.write_str("-")?;
                fmt_sub(f, a, 3)
            }
            Add(a, b) => {
                fmt_sub(f, a, 1)?;
                f.write_str(" + ")?;
                fmt_sub(f, b, 2)
            }
            Sub(a, b) => {
                fmt_sub(f, a, 1)?;
                f.write_str(" - ")?;
                fmt_sub(f, b, 2)
            }
            Mul(a, b) => {
                fmt_sub(f, a, 2)?;
                f.write_str("*")?;
                fmt_sub(f, b, 3)
            }
            Div(a, b) => {
                fmt_sub(f, a, 2)?;
                f.write_str("/")?;
                fmt_sub(f, b, 3)
            }
            Pow(a, b) => {
                // right-associative; the base must bind tighter than `^`
                fmt_sub(f, a, 5)?;
                f.write_str("^")?;
                fmt_sub(f, b, 3)
            }
            Abs(a) => write!(f, "abs({a})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
            Min(args) => {
                f.write_str("min(")?;
                fmt_list(f, args)?;
                f.write_str(")")
            }
            Max(args) => {
                f.write_str("max(")?;
                fmt_list(f, args)?;
                f.write_str(")")
            }
            Norm(args) => {
                f.write_str("norm(")?;
                fmt_list(f, args)?;
                f.write_str(")")
            }
            Dot(a, b) => {
                f.write_str("dot([")?;
                fmt_list(f, a)?;
                f.write_str("], [")?;
                fmt_list(f, b)?;
                f.write_str("])")
            }
            Indicator { block, bounds } => {
                write!(f, "chi({block}, ")?;
                for (i, (lo, hi)) in bounds.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" x ")?;
                    }
                    write!(f, "[{lo}, {hi}]")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Central finite-difference gradient of `e` with respect to every
/// component of `block`, evaluated at `point`.
pub fn grad_fd(e: &Expr, point: &Point<'_>, block: Block, h: f64) -> Result<Vec<f64>, EvalError> {
    let base = point.block(block);
    if base.is_empty() {
        return Err(EvalError::MissingBlock(block));
    }
    let mut work = base.to_vec();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let orig = work[i];
        work[i] = orig + h;
        let plus = eval_with_block(e, point, block, &work)?;
        work[i] = orig - h;
        let minus = eval_with_block(e, point, block, &work)?;
        work[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

fn eval_with_block(e: &Expr, point: &Point<'_>, block: Block, vals: &[f64]) -> Result<f64, EvalError> {
    let mut p = *point;
    match block {
        Block::X => p.x = vals,
        Block::Y => p.y = vals,
        Block::Z => p.z = vals,
        Block::U => p.u = vals,
    }
    e.eval(&p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Affine,
    ConvexLikely,
    Nonconvex,
}

/// Three points `(p, q, (p+q)/2)` in the flattened `(y, z, u)` coordinates
/// of a [`ShapeBox`], with the values found there.
#[derive(Clone, Debug, PartialEq)]
pub struct MidpointWitness {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub mid: Vec<f64>,
    pub f_p: f64,
    pub f_q: f64,
    pub f_mid: f64,
}

impl MidpointWitness {
    /// Amount by which the midpoint value exceeds the chord average.
    pub fn excess(&self) -> f64 {
        self.f_mid - 0.5 * (self.f_p + self.f_q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeVerdict {
    pub kind: ShapeKind,
    pub witness: Option<MidpointWitness>,
}

/// Axis-aligned box over the `(y, z, u)` blocks at a fixed `x`.
#[derive(Clone, Debug)]
pub struct ShapeBox {
    pub x: Vec<f64>,
    pub y: Vec<(f64, f64)>,
    pub z: Vec<(f64, f64)>,
    pub u: Vec<(f64, f64)>,
}

impl ShapeBox {
    pub fn dim(&self) -> usize {
        self.y.len() + self.z.len() + self.u.len()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.y.iter().chain(&self.z).chain(&self.u).copied().collect()
    }

    fn eval(&self, e: &Expr, flat: &[f64]) -> Result<f64, EvalError> {
        let (y, rest) = flat.split_at(self.y.len());
        let (z, u) = rest.split_at(self.z.len());
        let p = Point { x: &self.x, y, z, u, n: self.x.len() };
        e.eval(&p)
    }
}

/// Relative tolerance used by the midpoint tests.
pub const SHAPE_TOL: f64 = 1e-9;

/// Numerically probes convexity and affinity of `e` over `bx` using
/// `samples` random pairs drawn with the given seed.
pub fn probe_shape(e: &Expr, bx: &ShapeBox, samples: usize, seed: u64) -> Result<ShapeVerdict, EvalError> {
    probe_shape_fn(|v| bx.eval(e, v), &bx.bounds(), samples, seed)
}

/// Same as [`probe_shape`] for an arbitrary function of the flattened
/// coordinates.
pub fn probe_shape_fn<F>(f: F, bounds: &[(f64, f64)], samples: usize, seed: u64) -> Result<ShapeVerdict, EvalError>
where
    F: Fn(&[f64]) -> Result<f64, EvalError>,
{
    let samples = samples.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = bounds.len();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        bounds
            .iter()
            .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
            .collect()
    };
    let mut affine = true;
    let mut worst: Option<MidpointWitness> = None;
    for _ in 0..samples {
        let p = draw(&mut rng);
        let q = draw(&mut rng);
        let mid: Vec<f64> = (0..dim).map(|i| 0.5 * (p[i] + q[i])).collect();
        let f_p = f(&p)?;
        let f_q = f(&q)?;
        let f_mid = f(&mid)?;
        let scale = 1.0 + f_p.abs().max(f_q.abs()).max(f_mid.abs());
        let excess = f_mid - 0.5 * (f_p + f_q);
        if excess.abs() > SHAPE_TOL * scale {
            affine = false;
        }
        if excess > SHAPE_TOL * scale {
            let better = worst.as_ref().map_or(true, |w| excess > w.excess());
            if better {
                worst = Some(MidpointWitness { p, q, mid, f_p, f_q, f_mid });
            }
        }
    }
    if let Some(w) = worst {
        return Ok(ShapeVerdict { kind: ShapeKind::Nonconvex, witness: Some(w) });
    }
    if affine {
        // second differences along random directions
        for _ in 0..samples.min(64) {
            let c = draw(&mut rng);
            let dir: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| 0.25 * (hi - lo) * rng.gen_range(-1.0..=1.0))
                .collect();
            let plus: Vec<f64> = (0..dim).map(|i| clamp(c[i] + dir[i], bounds[i])).collect();
            let minus: Vec<f64> = (0..dim).map(|i| 2.0 * c[i] - plus[i]).collect();
            if minus.iter().zip(bounds).any(|(&v, &(lo, hi))| v < lo || v > hi) {
                continue;
            }
            let fc = f(&c)?;
            let fp = f(&plus)?;
            let fm = f(&minus)?;
            let scale = 1.0 + fc.abs().max(fp.abs()).max(fm.abs());
            if (fp - 2.0 * fc + fm).abs() > 2.0 * SHAPE_TOL * scale {
                affine = false;
                break;
            }
        }
    }
    Ok(ShapeVerdict {
        kind: if affine { ShapeKind::Affine } else { ShapeKind::ConvexLikely },
        witness: None,
    })
}

fn clamp(v: f64, (lo, hi): (f64, f64)) -> f64 {
    v.max(lo).min(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y(i: usize) -> Expr {
        Expr::var(Var::Y(i))
    }
    fn z(i: usize, j: usize) -> Expr {
        Expr::var(Var::Z(i, j))
    }
    fn sq(e: Expr) -> Expr {
        Expr::pow(e, Expr::constant(2.0))
    }

    #[test]
    fn eval_example_lagrangian() {
        // y1*y2 + |z|^2 at y = (1,1), z = 0
        let l = Expr::add(Expr::mul(y(0), y(1)), Expr::add(sq(z(0, 0)), sq(z(1, 0))));
        let p = Point::new(&[0.5], &[1.0, 1.0], &[0.0, 0.0], &[]);
        assert_eq!(l.eval(&p).unwrap(), 1.0);
        assert_eq!(Expr::zero().eval(&p).unwrap(), 0.0);
    }

    #[test]
    fn eval_envelope_formula() {
        // |z1 + z2| - 1 at z = (1, -1)
        let e = Expr::sub(Expr::abs(Expr::add(z(0, 0), z(1, 0))), Expr::constant(1.0));
        let p = Point::new(&[0.5], &[0.0, 0.0], &[1.0, -1.0], &[]);
        assert_eq!(e.eval(&p).unwrap(), -1.0);
    }

    #[test]
    fn guards_and_missing_blocks() {
        let p = Point::new(&[0.0], &[0.0], &[], &[]);
        let e = Expr::div(Expr::constant(1.0), y(0));
        assert!(matches!(e.eval(&p), Err(EvalError::DomainGuard(_))));
        let e = Expr::sqrt(Expr::sub(y(0), Expr::constant(1.0)));
        assert!(matches!(e.eval(&p), Err(EvalError::DomainGuard(_))));
        assert_eq!(z(0, 0).eval(&p), Err(EvalError::MissingBlock(Block::Z)));
        assert_eq!(y(3).eval(&p), Err(EvalError::OutOfRange(Var::Y(3))));
        let e = Expr::pow(Expr::constant(-2.0), Expr::constant(0.5));
        assert!(matches!(e.eval(&p), Err(EvalError::DomainGuard(_))));
    }

    #[test]
    fn indicator_counts_boundary_inside() {
        let e = Expr::Indicator { block: Block::X, bounds: vec![(0.0, 1.0)] };
        for (x, want) in [(0.0, 1.0), (1.0, 1.0), (0.5, 1.0), (1.5, 0.0)] {
            let xs = [x];
            let p = Point::new(&xs, &[], &[], &[]);
            assert_eq!(e.eval(&p).unwrap(), want);
        }
    }

    #[test]
    fn grad_of_square_and_product() {
        let e = sq(y(0));
        let p = Point::new(&[0.0], &[3.0], &[], &[]);
        let g = grad_fd(&e, &p, Block::Y, DEFAULT_FD_STEP).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);

        let e = Expr::mul(y(0), y(1));
        let p = Point::new(&[0.0], &[2.0, 5.0], &[], &[]);
        let g = grad_fd(&e, &p, Block::Y, DEFAULT_FD_STEP).unwrap();
        // analytic gradient (y2, y1)
        assert!((g[0] - 5.0).abs() < 1e-6 && (g[1] - 2.0).abs() < 1e-6);

        let g = grad_fd(&Expr::constant(4.0), &p, Block::Y, DEFAULT_FD_STEP).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    fn unit_box(ny: usize, nz: usize) -> ShapeBox {
        ShapeBox { x: vec![0.5], y: vec![(-1.0, 1.0); ny], z: vec![(-1.0, 1.0); nz], u: vec![] }
    }

    #[test]
    fn probe_quadratic_is_convex() {
        let e = Expr::add(sq(z(0, 0)), sq(z(1, 0)));
        let v = probe_shape(&e, &unit_box(2, 2), 200, 7).unwrap();
        assert_eq!(v.kind, ShapeKind::ConvexLikely);
    }

    #[test]
    fn probe_affine() {
        let e = Expr::sub(Expr::add(y(0), Expr::mul(Expr::constant(2.0), y(1))), Expr::constant(1.0));
        let v = probe_shape(&e, &unit_box(2, 0), 200, 7).unwrap();
        assert_eq!(v.kind, ShapeKind::Affine);
    }

    #[test]
    fn probe_bilinear_is_nonconvex_with_sound_witness() {
        let e = Expr::mul(y(0), y(1));
        let bx = unit_box(2, 0);
        let v = probe_shape(&e, &bx, 200, 7).unwrap();
        assert_eq!(v.kind, ShapeKind::Nonconvex);
        let w = v.witness.unwrap();
        let f = |pt: &[f64]| bx.eval(&e, pt).unwrap();
        let excess = f(&w.mid) - 0.5 * (f(&w.p) + f(&w.q));
        assert!(excess > SHAPE_TOL * (1.0 + w.f_mid.abs()));
    }

    #[test]
    fn printing_respects_precedence() {
        let e = Expr::mul(Expr::add(y(0), y(1)), Expr::neg(z(0, 0)));
        assert_eq!(e.to_string(), "(y1 + y2)*-z11");
        let e = Expr::sub(y(0), Expr::sub(y(1), y(2)));
        assert_eq!(e.to_string(), "y1 - (y2 - y3)");
        let e = Expr::pow(Expr::neg(y(0)), Expr::constant(2.0));
        assert_eq!(e.to_string(), "(-y1)^2");
    }
}
