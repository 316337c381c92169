use occurelax::convexify::{compute_envelope, envelope_value, hull_distance, EnvelopeValue};
use occurelax::dsl::parse_problem;
use occurelax::experiments::{bundled, discretize, relax, PipelineConfig};
use occurelax::lp::LpStatus;
use occurelax::measure::{build_discretization, BasisMode, Resolution};
use proptest::prelude::*;

fn fiber(dim: usize, values: &[f64]) -> Vec<Vec<f64>> {
    let n = if dim == 1 { values.len() } else { (values.len() as f64).sqrt() as usize };
    let axis: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    if dim == 1 {
        axis.iter().map(|&a| vec![a]).collect()
    } else {
        axis.iter().flat_map(|&a| axis.iter().map(move |&b| vec![a, b])).collect()
    }
}

fn problem_text(lo: f64, hi: f64, c: f64) -> String {
    format!(
        "occurelax-problem v1\n[domain]\nn = 1\nomega = [{lo}, {hi}]\n[spaces]\nm = 1\ny = [0, 1]\nz = [-1, 1]\n\
         [objective]\nL = {c} + 0*z11\n"
    )
}

#[test]
fn bundled_problems_survive_printing() {
    for b in bundled() {
        let p = b.problem();
        let again = parse_problem(&p.to_text()).unwrap();
        assert_eq!(again, p, "{}", b.id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_lies_below_and_is_convex(
        dim in 1usize..=2,
        raw in prop::collection::vec(-2.0f64..2.0, 25),
        probes in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 10),
    ) {
        let values = if dim == 1 { raw[..9].to_vec() } else { raw.clone() };
        let samples = fiber(dim, &values);
        let fe = compute_envelope(samples.clone(), values.clone()).unwrap();
        for (q, &v) in samples.iter().zip(&values) {
            let g = fe.max_affine(q);
            prop_assert!(g <= v + 1e-9);
            match envelope_value(&fe, q).unwrap() {
                EnvelopeValue::Inside(e) => prop_assert!((g - e).abs() <= 1e-8 * (1.0 + e.abs()), "{g} vs {e}"),
                EnvelopeValue::OutsideHull => prop_assert!(false, "sample outside its own hull"),
            }
        }
        for &(a0, a1, b0, b1) in &probes {
            let (a, b) = (vec![a0, a1][..dim].to_vec(), vec![b0, b1][..dim].to_vec());
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let (ga, gb, gm) = (fe.max_affine(&a), fe.max_affine(&b), fe.max_affine(&m));
            prop_assert!(gm <= 0.5 * (ga + gb) + 1e-12 * (1.0 + ga.abs() + gb.abs()));
            match envelope_value(&fe, &m).unwrap() {
                EnvelopeValue::Inside(e) => prop_assert!(gm <= e + 1e-9 * (1.0 + e.abs()), "{gm} above {e}"),
                EnvelopeValue::OutsideHull => prop_assert!(false, "grid hull contains the unit box"),
            }
        }
    }

    #[test]
    fn convex_combinations_lie_in_the_hull(
        pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3..8),
        w in prop::collection::vec(0.01f64..1.0, 8),
    ) {
        let points: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
        let total: f64 = w[..points.len()].iter().sum();
        let mut q = vec![0.0; 2];
        for (p, &wi) in points.iter().zip(&w) {
            for i in 0..2 {
                q[i] += wi / total * p[i];
            }
        }
        prop_assert!(hull_distance(&points, &q).unwrap() <= 1e-8);
        let far = vec![10.0, 10.0];
        prop_assert!(hull_distance(&points, &far).unwrap() > 1.0);
    }

    #[test]
    fn cell_volumes_sum_to_the_domain(lo in -2.0f64..0.0, len in 0.1f64..3.0, cells in 1usize..40, ry in 1usize..6, rz in 1usize..6) {
        let p = parse_problem(&problem_text(lo, lo + len, 1.0)).unwrap();
        let d = build_discretization(&p, &Resolution::new(cells, ry, rz, 1)).unwrap();
        let total: f64 = d.cells.iter().map(|c| c.volume).sum();
        prop_assert!((total - len).abs() <= 1e-12 * (1.0 + len));
        prop_assert_eq!(d.bulk.len(), cells * ry * rz);
    }

    #[test]
    fn constant_lagrangian_costs_its_value_times_the_volume(c in -3.0f64..3.0, len in 0.5f64..2.0, cells in 2usize..10) {
        let p = parse_problem(&problem_text(0.0, len, c)).unwrap();
        let cfg = PipelineConfig { res_x: vec![cells], res_y: vec![3], res_z: vec![3], d_x: 2, d_y: 1, ..Default::default() };
        let d = discretize(&p, &cfg).unwrap();
        let run = relax(&p, &d, &cfg, BasisMode::Affine).unwrap();
        prop_assert_eq!(run.solution.status, LpStatus::Optimal);
        prop_assert!((run.solution.value - c * len).abs() <= 1e-8 * (1.0 + c.abs()));
    }
}
