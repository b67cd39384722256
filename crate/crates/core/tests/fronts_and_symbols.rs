use std::sync::Arc;

use contactmech::contact::{linspace, FiberGroup};
use contactmech::expr::Expr;
use contactmech::manifold::{Chart, ScalarField};
use contactmech::symbol::{
    equivariant_reduce, phase_expansion, principal_surface, principal_symbol, schrodinger_operator,
    symbol_scaling_check, ExprPhase, LinearDiffOperator, OperatorTerm, Phase, SampledPhase,
};
use contactmech::wavefront::{
    front_action_function, legendre_defect, legendre_lift, propagate_front, InitialFront, LiftBranch, ParamAxis,
    ParamGrid,
};
use contactmech::{scenarios, Error, IntegratorConfig};

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn field(axes: &[&str], src: &str) -> ScalarField {
    ScalarField::from_expr(Expr::parse(src, &names(axes), &Default::default()).unwrap(), axes.len()).unwrap()
}

fn tight() -> IntegratorConfig {
    IntegratorConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        ..Default::default()
    }
}

#[test]
fn oscillator_front_carries_the_tangent_action() {
    // S(t, x) = −(x²/2) tan t solves S_t + S_x²/2 + x²/2 = 0 with S(0, x) = 0
    let e = scenarios::oscillator(1.0, 1.0);
    let sigma = InitialFront::new(ParamGrid::new(vec![ParamAxis::open(-1.0, 1.0, 21)]).unwrap(), |u| {
        (vec![0.0, u[0]], 0.0)
    });
    let lift = legendre_lift(&e, &sigma, LiftBranch::new(1, 0)).unwrap();
    let h = propagate_front(&e, &lift, &linspace(0.0, 1.2, 25), &tight()).unwrap();
    assert!(h.failures.is_empty());
    assert!(h.caustics.is_empty());
    for slice in front_action_function(&h) {
        for s in slice.samples {
            let want = -0.5 * s.x[1] * s.x[1] * s.x[0].tan();
            assert!((s.s - want).abs() <= 1e-5, "t = {}: {} vs {want}", s.x[0], s.s);
        }
    }
    assert!(legendre_defect(&h) < 1e-6);
}

#[test]
fn parabolic_front_focuses_where_the_rays_cross() {
    // S_0 = −x²/2 at t = 0 sends every ray through x = 0 at t = 1
    let e = scenarios::free_particle(1.0);
    let sigma = InitialFront::new(ParamGrid::new(vec![ParamAxis::open(-1.0, 1.0, 21)]).unwrap(), |u| {
        (vec![0.0, u[0]], -0.5 * u[0] * u[0])
    });
    let lift = legendre_lift(&e, &sigma, LiftBranch::new(1, 0)).unwrap();
    let h = propagate_front(&e, &lift, &linspace(0.0, 2.0, 41), &tight()).unwrap();
    assert!(!h.caustics.is_empty());
    for c in &h.caustics {
        assert!((c.tau - 1.0).abs() <= 0.05 + 1e-12);
    }
}

#[test]
fn sampled_action_of_a_free_front_passes_the_eikonal_check() {
    let e = scenarios::free_particle(1.0);
    let sigma = InitialFront::new(ParamGrid::new(vec![ParamAxis::open(-1.0, 1.0, 81)]).unwrap(), |u| {
        (vec![1.0, u[0]], 0.5 * u[0] * u[0])
    });
    let lift = legendre_lift(&e, &sigma, LiftBranch::new(1, 0)).unwrap();
    let h = propagate_front(&e, &lift, &linspace(0.0, 1.0, 81), &tight()).unwrap();
    let (mut pts, mut vals) = (Vec::new(), Vec::new());
    for slice in front_action_function(&h) {
        for s in slice.samples {
            assert!((s.s - s.x[1] * s.x[1] / (2.0 * s.x[0])).abs() < 1e-9);
            pts.push(s.x);
            vals.push(s.s);
        }
    }
    let g = SampledPhase::new(pts, vals, 1.0, 4, 1e-5).unwrap();
    let y = [1.5, 0.2, 0.0];
    let gx = g.derivative(&y, &[0, 1, 0]).unwrap();
    assert!((gx - 0.2 / 1.5).abs() < 1e-5, "{gx}");
    assert_eq!(g.derivative(&y, &[0, 0, 1]).unwrap(), 1.0);
}

#[test]
fn sampled_phase_refuses_too_few_points() {
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
    assert!(matches!(
        SampledPhase::new(pts, vec![0.0; 3], 1.0, 2, 1e-6),
        Err(Error::DataQuality(_))
    ));
}

#[test]
fn reduced_schrodinger_flow_obeys_newton() {
    // V = x²/2, w = 1: ẍ = −x in t = τ
    let d = schrodinger_operator(2, 1.0, field(&["t", "x"], "x^2/2")).unwrap();
    let h = equivariant_reduce(Arc::new(principal_symbol(&d)), 1.0);
    let (x0, v0) = (0.5, 0.3);
    let xi0 = [-(v0 * v0 + x0 * x0) / 2.0, v0];
    let run = h.flow(&[0.0, x0], &xi0, &linspace(0.0, 6.0, 61), &tight()).unwrap();
    for s in &run {
        let t = s.tau;
        assert!((s.x[0] - t).abs() < 1e-10);
        assert!((s.x[1] - (x0 * t.cos() + v0 * t.sin())).abs() < 1e-8);
        assert!((s.xi[1] - (v0 * t.cos() - x0 * t.sin())).abs() < 1e-8);
        assert!(h.value(&s.x, &s.xi).abs() < 1e-8);
    }
}

#[test]
fn schrodinger_surface_has_the_oscillator_characteristics() {
    let d = schrodinger_operator(2, 1.0, field(&["t", "x"], "x^2/2")).unwrap();
    let chart = Chart::symmetric(&["t", "x"], 1e3);
    let e = principal_surface(&d, chart.clone(), FiberGroup::Line).unwrap();
    let osc = scenarios::oscillator_on(chart, 1.0, 1.0);
    for (x, p, ps) in [([0.1, 0.4], [0.2, -1.0], 1.0), ([2.0, -0.3], [0.7, 0.5], -0.6)] {
        assert!((e.value(&x, &p, ps) - osc.value(&x, &p, ps)).abs() < 1e-14);
    }
}

#[test]
fn expansion_of_a_third_order_operator() {
    // D = ∂_x³ on (x, s): D e^{iλx²} e^{−iλx²} = (2iλx)³ + 3(2iλx)(2iλ)
    let d = LinearDiffOperator::new(
        1,
        vec![OperatorTerm {
            alpha: vec![3, 0],
            coeff: ScalarField::constant(1, 1.0),
        }],
    )
    .unwrap();
    let g = ExprPhase::parse(&names(&["x", "s"]), "x^2").unwrap();
    let x = 0.7;
    let c = phase_expansion(&d, &g, &[x, 0.0]).unwrap();
    assert!(c[0].abs() < 1e-14);
    assert!(c[1].abs() < 1e-14);
    assert!((c[2] - 12.0 * x).abs() < 1e-12);
    assert!((c[3] - 8.0 * x * x * x).abs() < 1e-12);
    let r = symbol_scaling_check(&d, &g, &[x, 0.0], &[1e1, 1e2, 1e3]).unwrap();
    assert!((r.fitted_power.unwrap() - 2.0).abs() < 1e-6);
    assert!(r.leading_rel_error < 1e-9);
}

#[test]
fn narrow_lambda_span_is_a_fit_error() {
    let d = schrodinger_operator(2, 1.0, ScalarField::constant(2, 0.0)).unwrap();
    let g = ExprPhase::parse(&names(&["t", "x", "s"]), "x^2").unwrap();
    assert!(matches!(
        symbol_scaling_check(&d, &g, &[0.1, 0.2, 0.0], &[1.0, 2.0, 5.0]),
        Err(Error::FitQuality(_))
    ));
    assert!(matches!(
        symbol_scaling_check(&d, &g, &[0.1, 0.2, 0.0], &[1.0, 1000.0]),
        Err(Error::FitQuality(_))
    ));
}
