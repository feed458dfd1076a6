use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use predictor_feedback::delay_system::{plant_rhs, InputHistory, Vector};
use predictor_feedback::feedback::{certificate, CertificateInputs};
use predictor_feedback::linear_ref::linear_predict;
use predictor_feedback::predictor::{predict_with, Integrator};
use predictor_feedback::sampling::smooth_history;
use predictor_feedback::scenarios;
use predictor_feedback::simulator::{control_step, decay_check, simulate, Certification, FeedbackLaw, RecordFlags};

fn history(values: &[f64], step: f64, m: usize) -> InputHistory {
    let samples: Vec<Vector> = values.chunks(m).map(Vector::from_column_slice).collect();
    InputHistory::from_samples(step, &samples).unwrap()
}

fn combine(a: &InputHistory, b: &InputHistory, alpha: f64, beta: f64) -> InputHistory {
    let mixed: Vec<f64> = a.to_contiguous().iter().zip(b.to_contiguous()).map(|(p, q)| alpha * p + beta * q).collect();
    history(&mixed, a.step(), a.input_dim())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn push_updates_the_norm_exactly(
        values in prop::collection::vec(-5.0f64..5.0, 8..40),
        pushes in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30),
    ) {
        let m = 2;
        let cells = values.len() / m;
        let step = 1.0 / cells as f64;
        let mut phi = history(&values[..cells * m], step, m);
        for (a, b) in pushes {
            let v = Vector::from_vec(vec![a, b]);
            let oldest: f64 = phi.oldest().iter().map(|s| s * s).sum();
            let expected = phi.l2_norm_squared() - oldest * step + v.norm_squared() * step;
            phi.push(&v).unwrap();
            prop_assert!((phi.l2_norm_squared() - expected).abs() <= 1e-12 * (1.0 + expected));
            prop_assert_eq!(phi.newest(), v.as_slice());
        }
    }

    #[test]
    fn plant_rhs_is_affine_in_the_input(
        name in prop::sample::select(vec!["pendulum", "cascade", "scalar", "linear"]),
        seed in any::<u64>(),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        u1 in -3.0f64..3.0,
        u2 in -3.0f64..3.0,
    ) {
        let sc = scenarios::load(name).unwrap();
        let sys = &sc.system;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let step = sys.delay() / 20.0;
        let phi1 = smooth_history(&mut rng, sys.delay(), step, 1, 1.0).unwrap();
        let phi2 = smooth_history(&mut rng, sys.delay(), step, 1, 1.0).unwrap();
        let x = predictor_feedback::sampling::point_in_ball(&mut rng, sys.state_dim(), 0.8);
        let (u1, u2) = (Vector::from_element(1, u1), Vector::from_element(1, u2));

        let lhs = plant_rhs(sys, &x, &combine(&phi1, &phi2, alpha, beta), &(&u1 * alpha + &u2 * beta)).unwrap();
        let rhs = plant_rhs(sys, &x, &phi1, &u1).unwrap() * alpha + plant_rhs(sys, &x, &phi2, &u2).unwrap() * beta
            - sys.model().drift(&x) * (alpha + beta - 1.0);
        prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + lhs.norm()), "{lhs} vs {rhs}");
    }

    #[test]
    fn certificate_algebra(
        lower_v0 in 0.01f64..10.0,
        spread in 1.0f64..10.0,
        lower_w0 in 0.01f64..10.0,
        kappa_bound in 0.01f64..10.0,
        rho_excess in 0.0f64..10.0,
        delay in 0.01f64..3.0,
        radius in 0.1f64..100.0,
    ) {
        let upper_v0 = lower_v0 * spread;
        let rho = std::f64::consts::SQRT_2 + rho_excess;
        let c = certificate(&CertificateInputs { lower_v0, upper_v0, lower_w0, kappa_bound, rho, delay, radius }).unwrap();

        // same algebra, grouped differently: m_v = ½ min{m_v0/ρ², γe^{−σh}/ρ², γe^{−σh}}
        let gamma = 0.5 * lower_w0 / kappa_bound.powi(2);
        let sigma = 0.5 * lower_w0 / upper_v0;
        let decayed = gamma / (sigma * delay).exp();
        let candidates = [lower_v0 / (rho * rho), decayed / (rho * rho), decayed];
        let m_v = 0.5 * candidates.iter().copied().fold(f64::INFINITY, f64::min);
        let upper = rho.powi(2) * upper_v0 + gamma;

        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-300);
        prop_assert!(close(c.gamma, gamma) && close(c.sigma, sigma));
        prop_assert!(close(c.lower, m_v) && close(c.upper, upper));
        prop_assert!(close(c.attraction_radius, radius / rho * (m_v / upper).sqrt()));
        prop_assert!(c.gamma > 0.0 && c.sigma > 0.0 && 0.0 < c.lower && c.lower <= c.upper);
    }

    #[test]
    fn linear_control_uses_the_exact_prediction(
        seed in any::<u64>(),
        x1 in -2.0f64..2.0,
        x2 in -2.0f64..2.0,
    ) {
        let sc = scenarios::load("linear").unwrap();
        let lin = sc.linear.as_ref().unwrap();
        let FeedbackLaw::LinearGain(k) = &sc.law else { panic!("linear scenario uses a static gain") };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = smooth_history(&mut rng, lin.delay, 0.01, 1, 1.0).unwrap();
        let x = Vector::from_vec(vec![x1, x2]);
        let u = control_step(&sc.system, &sc.law, &x, &phi, Integrator::Rk4, false).unwrap().u;
        let exact = k * linear_predict(lin, &x, &phi).unwrap();
        prop_assert!((&u - &exact).norm() <= 1e-6, "{u} vs {exact}");
    }
}

#[test]
fn euler_prediction_converges_at_first_order() {
    let sc = scenarios::load("pendulum").unwrap();
    let sys = &sc.system;
    let h = sys.delay();
    let x = Vector::from_vec(vec![0.4, -0.3]);
    let signal = |t: f64| Vector::from_element(1, (3.0 * t).sin() + 0.5);
    let y = |cells: usize| {
        let phi = InputHistory::from_fn(h, h / cells as f64, 1, signal).unwrap();
        predict_with(sys, &x, &phi, Integrator::Euler).unwrap().y
    };
    let (coarse, mid, fine) = (y(40), y(80), y(160));
    let ratio = (&coarse - &mid).norm() / (&mid - &fine).norm();
    assert!((ratio - 2.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn longer_runs_extend_shorter_ones() {
    // the control at t_k only sees the past, so a shorter horizon is an exact prefix
    let sc = scenarios::load("cascade").unwrap();
    let mut cfg = sc.sim_config();
    cfg.duration = 2.0;
    let short = simulate(&sc.system, &sc.law, &cfg, None).unwrap();
    cfg.duration = 4.0;
    let long = simulate(&sc.system, &sc.law, &cfg, None).unwrap();
    assert_eq!(short.records.len(), 201);
    for (a, b) in short.records.iter().zip(&long.records) {
        assert_eq!((a.t, &a.x, &a.u), (b.t, &b.x, &b.u));
    }
}

#[test]
fn decay_check_flags_a_destabilising_gain() {
    let sc = scenarios::load("linear").unwrap();
    let spec = sc.lyapunov.as_ref().unwrap();
    let cert = sc.lk_certificate().unwrap();
    let mut cfg = sc.sim_config();
    cfg.record = RecordFlags { v: true, envelope: true, ..RecordFlags::default() };

    let good = simulate(&sc.system, &sc.law, &cfg, Some(Certification { spec, cert })).unwrap();
    assert!(decay_check(&good, cert).passed);

    let FeedbackLaw::LinearGain(k) = &sc.law else { unreachable!() };
    let flipped = FeedbackLaw::LinearGain(-k.clone());
    let bad = simulate(&sc.system, &flipped, &cfg, Some(Certification { spec, cert })).unwrap();
    let report = decay_check(&bad, cert);
    assert!(!report.passed && report.violations > 0, "{report:?}");
}

#[test]
fn trajectories_started_in_the_certified_ball_stay_bounded() {
    let sc = scenarios::load("scalar").unwrap();
    let cert = *sc.lk_certificate().unwrap();
    let spec = sc.lyapunov.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = cert.attraction_radius.min(5.0);
    for _ in 0..8 {
        let mut cfg = sc.sim_config();
        cfg.x0 = predictor_feedback::sampling::point_in_ball(&mut rng, 1, 0.7 * r);
        cfg.u0 = predictor_feedback::simulator::InitialHistory::Constant(Vector::zeros(1));
        cfg.duration = 10.0;
        let trace = simulate(&sc.system, &sc.law, &cfg, spec.map(|spec| Certification { spec, cert: &cert })).unwrap();
        let start = trace.records[0].phase_norm_sq();
        for rec in &trace.records {
            let bound = cert.upper / cert.lower * start * (-cert.sigma * rec.t).exp();
            assert!(rec.phase_norm_sq() <= bound * (1.0 + 1e-6), "t = {}", rec.t);
        }
    }
}
