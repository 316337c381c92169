mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use occurelax::convexify::compute_envelope;
use occurelax::experiments::{
    bundled, bundled_problem, compare, convexified, discretize, direct, relax, reproduce, Bundled, Outcome, PipelineConfig,
};
use occurelax::expr::{probe_shape_fn, EvalError, ShapeKind};
use occurelax::extraction::extract_centroids;
use occurelax::lp::{enumerate_vertices_oracle, solve_lp, LpStatus, OracleVerdict, SolveOptions};
use occurelax::measure::{marginal_deviation, BasisMode};
use occurelax::oc::{reduce_lagrangian, select_controls};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn value(o: &Outcome, what: &str) -> Result<f64, String> {
    o.value().ok_or_else(|| format!("{what}: {o:?}"))
}

fn within(v: f64, lo: f64, hi: f64, what: &str) -> Result<(), String> {
    ensure(v >= lo && v <= hi, || format!("{what} = {v} outside [{lo}, {hi}]"))
}

fn problem(id: &str) -> Bundled {
    bundled_problem(id).unwrap()
}

/// Affine LP value and envelope value of a four-point example.
fn four_point(id: &str) -> Check {
    let t = Instant::now();
    let b = problem(id);
    let p = b.problem();
    let d = discretize(&p, &b.config).map_err(|e| e.to_string())?;
    let aff = relax(&p, &d, &b.config, BasisMode::Affine).map_err(|e| e.to_string())?;
    ensure(aff.solution.status == LpStatus::Optimal, || format!("affine LP {}", aff.solution.status))?;
    let env = convexified(&p, &d, &b.config).map_err(|e| e.to_string())?;
    ensure(env.status == LpStatus::Optimal, || format!("envelope LP {}", env.status))?;
    within(aff.solution.value, -0.05, 0.05, "affine")?;
    within(env.value, -1.05, -0.95, "envelope")?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("runtime {secs:.1}s"))?;
    Ok(format!("affine {:.4}, envelope {:.4}, {secs:.1}s", aff.solution.value, env.value))
}

fn criterion_1() -> Check {
    let b = problem("ex-4.2");
    ensure(b.config.res_x == [16] && b.config.res_z == [9] && b.config.d_x == 3, || "pinned settings changed".into())?;
    four_point("ex-4.2")
}

fn criterion_2() -> Check {
    four_point("ex-4.3")
}

fn criterion_3() -> Check {
    let t = Instant::now();
    let mut out = vec![];
    for id in ["dirichlet-1d", "geodesic"] {
        let b = problem(id);
        let c = &b.config;
        ensure(c.res_x == [32] && c.d_x == 4 && c.d_y == 2, || format!("{id}: pinned settings changed"))?;
        let sw = compare(&b.problem(), c, 0.05).map_err(|e| e.to_string())?;
        let dir = value(&sw.direct, "direct")?;
        within((dir - 1.0).abs(), 0.0, 0.05, &format!("{id} |direct - 1|"))?;
        for (name, o) in [("envelope", &sw.envelope), ("affine", &sw.affine), ("nonlinear", &sw.nonlinear)] {
            let v = value(o, name)?;
            within((v - dir).abs(), 0.0, 0.05, &format!("{id} |{name} - direct|"))?;
        }
        out.push(format!("{id} direct {dir:.4}"));
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("runtime {secs:.1}s"))?;
    Ok(format!("{}, {secs:.1}s", out.join(", ")))
}

fn sandwich_problems() -> Vec<Bundled> {
    bundled().into_iter().filter(|b| b.id != "micromagnetics-2d").collect()
}

fn criterion_4() -> Check {
    let probs = sandwich_problems();
    ensure(probs.len() >= 10, || format!("only {} problems", probs.len()))?;
    let mut convex = 0;
    for b in &probs {
        let sw = compare(&b.problem(), &b.config, 0.05).map_err(|e| e.to_string())?;
        for (label, ok) in sw.checks() {
            ensure(ok, || format!("{}: {label} fails ({:?})", b.id, sw))?;
        }
        convex += usize::from(b.convex);
    }
    ensure(convex > 0 && convex < probs.len(), || "suite must mix convex and nonconvex problems".into())?;
    Ok(format!("{} problems ({convex} convex)", probs.len()))
}

fn criterion_5() -> Check {
    let b = problem("dirichlet-1d");
    let p = b.problem();
    let mut devs = vec![];
    for d_x in 1..=5 {
        let cfg = PipelineConfig { d_x, ..b.config.clone() };
        let d = discretize(&p, &cfg).map_err(|e| e.to_string())?;
        let run = relax(&p, &d, &cfg, BasisMode::Affine).map_err(|e| e.to_string())?;
        ensure(run.solution.status == LpStatus::Optimal, || format!("d_x {d_x}: {}", run.solution.status))?;
        devs.push(marginal_deviation(&d, &run.solution.bulk).into_iter().fold(0.0, f64::max));
    }
    for w in devs.windows(2) {
        ensure(w[1] <= w[0] + 1e-9, || format!("deviation increases with degree: {devs:?}"))?;
    }
    ensure(devs[4] <= 0.02, || format!("deviation {} at d_x 5", devs[4]))?;
    let shown: Vec<String> = devs.iter().map(|v| format!("{v:.1e}")).collect();
    Ok(format!("max deviation by d_x = 1..5: {}", shown.join(", ")))
}

fn criterion_6() -> Check {
    let t = Instant::now();
    for seed in 0..50 {
        let lp = common::random_lp(seed, 8, 6);
        let s = solve_lp(&lp, &SolveOptions::default()).map_err(|e| format!("seed {seed}: {e}"))?;
        let o = enumerate_vertices_oracle(&lp).map_err(|e| format!("seed {seed}: {e}"))?;
        match o {
            OracleVerdict::Optimal(v) => {
                ensure(s.status == LpStatus::Optimal, || format!("seed {seed}: {} vs optimal", s.status))?;
                ensure((s.objective - v).abs() <= 1e-8, || format!("seed {seed}: {} vs {v}", s.objective))?;
            }
            OracleVerdict::Infeasible => ensure(s.status == LpStatus::Infeasible, || format!("seed {seed}: {}", s.status))?,
            OracleVerdict::Unbounded => ensure(s.status == LpStatus::Unbounded, || format!("seed {seed}: {}", s.status))?,
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("runtime {secs:.1}s"))?;
    Ok(format!("50 seeds, {secs:.2}s"))
}

/// Random piecewise polynomial on a grid over `[-1, 1]^dim`: the minimum
/// of two random quadratics for odd seeds, their maximum for even ones.
fn random_fiber(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, impl Fn(&[f64]) -> f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(1..=2);
    let mut quad = || {
        let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..2.0)).collect();
        let s = rng.gen_range(-0.5..0.5);
        move |q: &[f64]| s + q.iter().zip(&c).zip(&a).map(|((x, c), a)| a * (x - c) * (x - c)).sum::<f64>()
    };
    let (f, g) = (quad(), quad());
    let convex = seed % 2 == 0;
    let h = move |q: &[f64]| if convex { f(q).max(g(q)) } else { f(q).min(g(q)) };
    let n = if dim == 1 { 17 } else { 9 };
    let axis: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let samples: Vec<Vec<f64>> =
        if dim == 1 { axis.iter().map(|&a| vec![a]).collect() } else { axis.iter().flat_map(|&a| axis.iter().map(move |&b| vec![a, b])).collect() };
    let values = samples.iter().map(|q| h(q)).collect();
    (samples, values, h)
}

fn criterion_7() -> Check {
    let mut convex_seen = 0;
    for seed in 0..25 {
        let (samples, values, f) = random_fiber(seed);
        let dim = samples[0].len();
        let fe = compute_envelope(samples.clone(), values.clone()).map_err(|e| format!("seed {seed}: {e}"))?;
        for (q, &v) in samples.iter().zip(&values) {
            let g = fe.max_affine(q);
            ensure(g <= v + 1e-9, || format!("seed {seed}: envelope {g} above f {v} at {q:?}"))?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for _ in 0..200 {
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let (ga, gb, gm) = (fe.max_affine(&a), fe.max_affine(&b), fe.max_affine(&m));
            ensure(gm <= 0.5 * (ga + gb) + 1e-12 * (1.0 + ga.abs() + gb.abs()), || {
                format!("seed {seed}: midpoint {gm} above chord {}", 0.5 * (ga + gb))
            })?;
        }
        let verdict = probe_shape_fn(|q| Ok::<f64, EvalError>(f(q)), &vec![(-1.0, 1.0); dim], 400, seed).map_err(|e| e.to_string())?;
        if verdict.kind != ShapeKind::Nonconvex {
            convex_seen += 1;
            for (q, &v) in samples.iter().zip(&values) {
                let g = fe.max_affine(q);
                ensure((g - v).abs() <= 1e-8, || format!("seed {seed}: convex f {v} but envelope {g} at {q:?}"))?;
            }
        }
    }
    ensure(convex_seen > 0, || "no fiber probed convex".into())?;
    Ok(format!("25 fibers, {convex_seen} probed convex"))
}

/// Cost `∫ y² + u²` of the state driven by piecewise-constant `controls`
/// from `y(0) = 1` under `Dy = u`, integrated exactly per cell.
fn tracking_cost(controls: &[f64]) -> f64 {
    let h = 1.0 / controls.len() as f64;
    let mut y = 1.0;
    let mut cost = 0.0;
    for &u in controls {
        cost += h * (y * y + y * u * h + u * u * h * h / 3.0) + h * u * u;
        y += u * h;
    }
    cost
}

fn criterion_8() -> Check {
    let b = problem("oc-tracking");
    let p = b.problem();
    ensure(b.config.res_x == [32] && b.config.res_u == [33], || "pinned settings changed".into())?;
    let d = discretize(&p, &b.config).map_err(|e| e.to_string())?;
    let run = relax(&p, &d, &b.config, BasisMode::Affine).map_err(|e| e.to_string())?;
    ensure(run.solution.status == LpStatus::Optimal, || format!("OC LP {}", run.solution.status))?;
    let lp = run.solution.value;
    let (_, ds) = direct(&p, &b.config).map_err(|e| e.to_string())?;
    let dir = ds.value;
    ensure((lp - dir).abs() <= 0.05 * dir.abs(), || format!("LP {lp} vs direct {dir}"))?;
    let cf = extract_centroids(&run.solution, &d).map_err(|e| e.to_string())?;
    let table = reduce_lagrangian(&p, &d, b.config.eps_eq, b.config.eps_ineq).map_err(|e| e.to_string())?;
    let controls = select_controls(&cf, &d, &table).map_err(|e| e.to_string())?;
    let resim = tracking_cost(&controls.iter().map(|u| u[0]).collect::<Vec<_>>());
    ensure((resim - lp).abs() <= 0.05 * lp.abs(), || format!("re-simulated cost {resim} vs LP {lp}"))?;
    Ok(format!("LP {lp:.4}, direct {dir:.4}, re-simulated controls {resim:.4}, tanh(1) {:.4}", 1f64.tanh()))
}

fn criterion_9() -> Check {
    let t = Instant::now();
    let rep = reproduce("micromagnetics-2d").map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<String> =
        rep.rows.iter().filter(|r| !r.pass).map(|r| format!("{} = {:?}", r.quantity, r.value)).collect();
    ensure(failed.is_empty(), || failed.join(", "))?;
    ensure(secs < 300.0, || format!("runtime {secs:.1}s"))?;
    let get = |q: &str| rep.rows.iter().find(|r| r.quantity == q).and_then(|r| r.value).unwrap_or(f64::NAN);
    let candidates = rep.rows.iter().filter(|r| r.quantity.starts_with("candidate")).count();
    ensure(candidates > 0, || "no candidates".into())?;
    Ok(format!(
        "affine {:.4}, envelope {:.4}, relative gap {:.2e}, {candidates} candidates, {secs:.1}s",
        get("affine"),
        get("envelope"),
        get("relative gap")
    ))
}

fn criterion_10() -> Check {
    let mut out = vec![];
    for b in bundled().into_iter().filter(|b| b.convex) {
        let sw = compare(&b.problem(), &b.config, 0.05).map_err(|e| e.to_string())?;
        let g = sw.jensen_gap.ok_or_else(|| format!("{}: no Jensen gap", b.id))?;
        ensure(g >= -1e-6, || format!("{}: Jensen gap {g}", b.id))?;
        out.push(format!("{} {g:.1e}", b.id));
    }
    Ok(out.join(", "))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("four-point example with integral constraint", criterion_1),
        ("four-point example with nonconvex velocities", criterion_2),
        ("no gap on convex data", criterion_3),
        ("sandwich ordering", criterion_4),
        ("x-marginal deviation", criterion_5),
        ("LP solver vs vertex oracle", criterion_6),
        ("envelope properties", criterion_7),
        ("optimal control", criterion_8),
        ("micromagnetics", criterion_9),
        ("Jensen gap sign", criterion_10),
    ];
    let mut failed = vec![];
    for (i, (name, f)) in criteria.iter().enumerate() {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match r {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
