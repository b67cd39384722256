use contactmech::contact::{linspace, propagate, propagate_span, CharacteristicState};
use contactmech::numeric::hausdorff;
use contactmech::{action_increment, batch_propagate, characteristic_field, scenarios, IntegratorConfig};
use proptest::prelude::*;

fn oscillator_state(x: f64, px: f64) -> CharacteristicState {
    CharacteristicState::new(vec![0.0, x], 0.0, vec![-(px * px + x * x) / 2.0, px], 1.0)
}

#[test]
fn free_particle_moves_on_a_straight_line() {
    let m = 2.0;
    let e = scenarios::free_particle(m);
    let st = CharacteristicState::new(vec![0.0, 1.0], 0.0, vec![-1.5 * 1.5 / (2.0 * m), 1.5], 1.0);
    let strip = propagate_span(&e, &st, 4.0, 9, &Default::default()).unwrap();
    for s in &strip.states {
        assert!((s.x[0] - s.tau).abs() < 1e-12);
        assert!((s.x[1] - (1.0 + 0.75 * s.tau)).abs() < 1e-12);
        assert!((s.s - 1.5 * 1.5 / (2.0 * m) * s.tau).abs() < 1e-12);
    }
}

#[test]
fn oscillator_follows_closed_form() {
    let e = scenarios::oscillator(1.0, 1.0);
    let st = oscillator_state(0.4, 0.3);
    let strip = propagate(&e, &st, &linspace(0.0, 10.0, 101), &Default::default()).unwrap();
    for s in &strip.states {
        let t = s.tau;
        assert!((s.x[1] - (0.4 * t.cos() + 0.3 * t.sin())).abs() < 1e-8);
        assert!((s.p[1] - (0.3 * t.cos() - 0.4 * t.sin())).abs() < 1e-8);
    }
    // ∫ L dt for x = a cos t + b sin t
    let (a, b, t) = (0.4f64, 0.3f64, 10.0f64);
    let lag = ((b * b - a * a) * (2.0 * t).sin() / 2.0 + a * b * ((2.0 * t).cos() - 1.0)) / 2.0;
    assert!((action_increment(&strip) - lag).abs() < 1e-8, "{} vs {lag}", action_increment(&strip));
}

#[test]
fn backward_run_retraces_forward_run() {
    let e = scenarios::oscillator(1.0, 1.0);
    let st = oscillator_state(0.2, -0.7);
    let fwd = propagate(&e, &st, &[0.0, 3.0], &Default::default()).unwrap();
    let mut end = fwd.last().clone();
    end.tau = 3.0;
    let back = propagate(&e, &end, &[3.0, 0.0], &Default::default()).unwrap();
    let home = back.last();
    assert!((home.x[1] - 0.2).abs() < 1e-9 && (home.p[1] + 0.7).abs() < 1e-9 && home.s.abs() < 1e-9);
}

#[test]
fn rescaled_covector_traces_the_same_extremal() {
    let e = scenarios::oscillator(1.0, 1.0);
    let st = oscillator_state(0.5, 0.1);
    let k = 3.0;
    let a = propagate(&e, &st, &linspace(0.0, 6.0, 601), &Default::default()).unwrap();
    // degree 2: speed scales by k, so the rescaled strip covers the curve in τ/k
    let b = propagate(&e, &st.rescaled(k), &linspace(0.0, 6.0 / k, 601), &Default::default()).unwrap();
    let pa: Vec<Vec<f64>> = a.states.iter().map(|s| s.x.clone()).collect();
    let pb: Vec<Vec<f64>> = b.states.iter().map(|s| s.x.clone()).collect();
    assert!(hausdorff(&pa, &pb) <= 1e-6);
}

#[test]
fn batch_matches_sequential_bit_for_bit() {
    let e = scenarios::oscillator(1.0, 1.0);
    let inits: Vec<CharacteristicState> = (0..16).map(|i| oscillator_state(0.1 * i as f64, 0.3)).collect();
    let taus = linspace(0.0, 5.0, 11);
    let cfg = IntegratorConfig::fixed(0.01);
    let batch = batch_propagate(&e, &inits, &taus, &cfg);
    for (init, got) in inits.iter().zip(batch) {
        assert_eq!(got.unwrap(), propagate(&e, init, &taus, &cfg).unwrap());
    }
}

#[test]
fn off_shell_start_is_refused() {
    let e = scenarios::free_particle(1.0);
    let st = CharacteristicState::new(vec![0.0, 0.0], 0.0, vec![0.0, 1.0], 1.0);
    assert!(characteristic_field(&e, &st).is_err());
    assert!(propagate(&e, &st, &[0.0, 1.0], &Default::default()).is_err());
}

#[test]
fn leaving_the_chart_ends_the_strip() {
    let chart = contactmech::manifold::Chart::symmetric(&["t", "x"], 1.0);
    let e = scenarios::free_particle_on(chart, 1.0);
    let st = CharacteristicState::new(vec![0.0, 0.0], 0.0, vec![-0.5, 1.0], 1.0);
    let strip = propagate(&e, &st, &linspace(0.0, 5.0, 51), &Default::default()).unwrap();
    assert!(strip.exit.is_some());
    assert!(strip.states.len() < 51);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_is_tangent_to_the_surface(x in -2.0f64..2.0, px in -2.0f64..2.0) {
        let e = scenarios::oscillator(1.0, 1.0);
        let st = oscillator_state(x, px);
        let v = characteristic_field(&e, &st).unwrap();
        let g = e.gradient(&st.x, &st.p, st.p_s);
        prop_assert!(v.pairing_with(&g).abs() <= 1e-12 * (1.0 + v.norm() * v.norm()));
    }

    #[test]
    fn strips_stay_on_shell(x in -1.5f64..1.5, px in -1.5f64..1.5, k in 0.2f64..4.0) {
        let e = scenarios::oscillator(1.0, 1.0);
        let st = oscillator_state(x, px).rescaled(k);
        let strip = propagate(&e, &st, &linspace(0.0, 2.0, 21), &Default::default()).unwrap();
        prop_assert!(strip.max_residual(&e) <= 1e-8 * k * k);
        prop_assert_eq!(strip.max_fiber_momentum_drift(), 0.0);
    }
}
