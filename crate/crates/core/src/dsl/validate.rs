use super::{Diagnostic, Exponent, Problem, Span};
use crate::expr::{probe_shape, Expr, ShapeBox, ShapeKind};

const PROBE_SAMPLES: usize = 400;
const PROBE_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Want {
    Convex,
    Affine,
}

/// Checks the structural hypotheses under which the relaxation is tight
/// and returns one warning per violation. Probing is numerical: a warning
/// carries a concrete midpoint witness, its absence proves nothing.
pub fn validate_problem(p: &Problem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let x = p.omega.center();
    let u = p.u_box.as_ref().map(|b| b.0.clone()).unwrap_or_default();
    let ub = p.u_boundary_box.as_ref().map(|b| b.0.clone()).unwrap_or_default();
    let bulk = ShapeBox { x: x.clone(), y: p.y_box.0.clone(), z: p.z_box.0.clone(), u };
    let bnd = ShapeBox { x, y: p.y_box.0.clone(), z: vec![], u: ub };

    let mut check = |e: &Expr, span: Span, bx: &ShapeBox, want: Want, what: &str| {
        match probe_shape(e, bx, PROBE_SAMPLES, PROBE_SEED) {
            Ok(v) => {
                let bad = match want {
                    Want::Convex => v.kind == ShapeKind::Nonconvex,
                    Want::Affine => v.kind != ShapeKind::Affine,
                };
                if bad {
                    let detail = v
                        .witness
                        .map(|w| format!(" (midpoint excess {:.3e} at {:?})", w.excess(), w.mid))
                        .unwrap_or_default();
                    let adj = if want == Want::Convex { "convex" } else { "affine" };
                    out.push(Diagnostic::warning(span, format!("{what} `{e}` is not {adj}{detail}")));
                }
            }
            Err(err) => {
                out.push(Diagnostic::warning(span, format!("could not probe {what} `{e}`: {err}")));
            }
        }
    };

    check(&p.lagrangian, p.source.lagrangian, &bulk, Want::Convex, "Lagrangian");
    for (e, s) in p.ineq.iter().zip(spans(&p.source.ineq, p.ineq.len())) {
        check(e, s, &bulk, Want::Convex, "inequality constraint");
    }
    for (e, s) in p.eq.iter().zip(spans(&p.source.eq, p.eq.len())) {
        check(e, s, &bulk, Want::Affine, "equality constraint");
    }
    for (e, s) in p.integral.iter().zip(spans(&p.source.integral, p.integral.len())) {
        check(e, s, &bulk, Want::Convex, "integral constraint");
    }
    for (e, s) in p.boundary_eq.iter().zip(spans(&p.source.boundary_eq, p.boundary_eq.len())) {
        check(e, s, &bnd, Want::Affine, "boundary equality");
    }
    for (e, s) in p.boundary_ineq.iter().zip(spans(&p.source.boundary_ineq, p.boundary_ineq.len())) {
        check(e, s, &bnd, Want::Convex, "boundary inequality");
    }
    if let Exponent::Finite(k) = p.p {
        out.push(Diagnostic::warning(
            p.source.spaces,
            format!("p = {k} < ∞: the y/z boxes act as a truncation of the admissible class"),
        ));
    }
    out
}

fn spans(s: &[Span], n: usize) -> Vec<Span> {
    let mut v = s.to_vec();
    v.resize(n, Span::default());
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_problem;

    fn problem(l: &str, extra: &str) -> Problem {
        let text = format!(
            "occurelax-problem v1\n[domain]\nn = 1\nomega = [0, 1]\n[spaces]\nm = 2\n\
             y = [-1, 1] x [-1, 1]\nz = [-1, 1] x [-1, 1]\n[objective]\nL = {l}\n{extra}"
        );
        parse_problem(&text).unwrap()
    }

    #[test]
    fn convex_problem_has_no_warnings() {
        let p = problem("z11^2 + z21^2", "[constraints]\nA = y1 + y2\nB = y1^2 - 1\n");
        assert!(validate_problem(&p).is_empty());
    }

    #[test]
    fn nonconvex_lagrangian_and_curved_equality() {
        let p = problem("y1*y2 + z11^2 + z21^2", "[constraints]\nA = y1^2 - 1\n");
        let w = validate_problem(&p);
        assert_eq!(w.len(), 2);
        assert!(w[0].message.contains("Lagrangian"));
        assert_eq!(w[0].span.line, 10);
        assert!(w[1].message.contains("not affine"));
    }
}
