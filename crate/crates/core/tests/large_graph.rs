//! The iterative solver paths: graphs above the dense-factorization limit
//! go through conjugate gradients (Poisson, screened) and MINRES (the
//! Newton phase of the variational solver).

use std::f64::consts::PI;

use graph_mfe::linsolve::DENSE_LIMIT;
use graph_mfe::torus::{build_torus_graph, TorusSpec};
use graph_mfe::vortex::{VortexOptions, VortexProblem};
use graph_mfe::{solve_screened, DiracOptions, DiracProblem, SolveMethod};

fn big_torus() -> graph_mfe::TorusGraph {
    // 48² = 2304 vertices, just above the dense cut
    let tg = build_torus_graph(&TorusSpec::tau_half_plus_i(48).unwrap()).unwrap();
    assert!(tg.graph().vertex_count() > DENSE_LIMIT);
    tg
}

#[test]
fn screened_solve_uses_cg_and_meets_the_contract() {
    let tg = big_torus();
    let g = tg.graph();
    let f = g
        .field_from_fn(|x| ((x % 23) as f64 * 0.37).sin())
        .unwrap();
    let (v, report) = solve_screened(g, 3.0, &f).unwrap();
    assert_eq!(report.method, SolveMethod::Iterative);
    assert!(report.residual_sup <= 1e-9 * f.sup_norm().max(1.0));
    assert!(report.iterations > 0);
    // spot check against the defining equation at one vertex
    let lap = g.laplacian(&v).unwrap();
    let x = 1234;
    assert!((lap.values()[x] - 3.0 * v.values()[x] - f.values()[x]).abs() <= 1e-9);
}

#[test]
fn vortex_monotone_iteration_on_the_cg_path() {
    let tg = big_torus();
    let g = tg.graph();
    let bound = 16.0 * PI / g.volume();
    let p = VortexProblem::new(g, 4.0 * bound, &[g.vertex_id(0)]).unwrap();
    let (u, trace, report) = p.solve(&VortexOptions::default()).unwrap();
    assert!(report.status.is_converged(), "status {:?}", report.status);
    assert!(report.residual_sup <= 1e-8 + 1e-9);
    let u = u.unwrap();
    assert!(u.max() < 0.0);
    assert!(report.mass_defect <= 1e-8);
    for (idx, step) in trace.steps.iter().enumerate() {
        assert!(
            step.monotone_defect <= 1e-10,
            "step {idx}: monotone defect {} on the CG path",
            step.monotone_defect
        );
    }
}

#[test]
fn dirac_newton_tail_uses_minres_above_the_dense_limit() {
    let tg = big_torus();
    let g = tg.graph();
    let p = DiracProblem::new(g, 10.0, g.vertex_id(777)).unwrap();
    let (u, report) = p.solve(&DiracOptions::default()).unwrap();
    assert!(report.residual_sup <= 1e-8, "residual {}", report.residual_sup);
    assert!(report.constraint_defect <= 1e-10 * 10.0);
    assert!((report.lambda_lagrange - 1.0).abs() <= 1e-6);
    assert!(p.residual(&u).unwrap().sup_norm() <= 1e-8);
}
