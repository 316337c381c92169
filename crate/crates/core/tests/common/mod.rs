#![allow(dead_code)]

use occurelax::lp::{LinearProgram, Relation, RowTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random dense LP with up to `max_vars` columns and `max_rows` rows. Mixes
/// relations, signs of right-hand sides and occasional bounded or free
/// columns so every status shows up across seeds.
pub fn random_lp(seed: u64, max_vars: usize, max_rows: usize) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(1..=max_rows);
    let mut lp = LinearProgram::new();
    for j in 0..n {
        let cost = (rng.gen_range(-5i32..=5) as f64) * 0.5;
        let kind = rng.gen_range(0..10);
        match kind {
            0 => lp.add_bounded_column(format!("x{j}"), cost, f64::NEG_INFINITY, f64::INFINITY),
            1 => lp.add_bounded_column(format!("x{j}"), cost, -1.0, 2.0),
            _ => lp.add_column(format!("x{j}"), cost),
        };
    }
    for i in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.8) {
                coeffs.push((j, (rng.gen_range(-4i32..=4) as f64) * 0.25 + rng.gen_range(-0.1..0.1)));
            }
        }
        let rel = match rng.gen_range(0..3) {
            0 => Relation::Eq,
            1 => Relation::Le,
            _ => Relation::Ge,
        };
        let rhs = rng.gen_range(-2.0..3.0);
        lp.add_row(RowTag::Plumbing(i), rel, coeffs, rhs);
    }
    if rng.gen_bool(0.5) {
        let all = (0..n).map(|j| (j, 1.0)).collect();
        lp.add_row(RowTag::Plumbing(m), Relation::Le, all, 10.0);
    }
    lp
}
