use nalgebra::DMatrix;
use predictor_feedback::delay_system::{InputHistory, Vector};
use predictor_feedback::linear_ref::{
    linear_predict, linear_q, linear_transformed_input, matrix_exponential, LinearDelaySystem, LinearKernel, LinearPredictor,
};
use predictor_feedback::predictor::{predict_with, Integrator};
use predictor_feedback::reduction::compute_b;
use predictor_feedback::sampling::smooth_history;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

#[test]
fn taylor_exponential_agrees_with_pade() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(1..=5);
        let a = random_matrix(&mut rng, n, n, 3.0);
        let t = rng.random_range(0.0..2.0);
        let ours = matrix_exponential(&a, t);
        let reference = (&a * t).exp();
        assert!((&ours - &reference).norm() <= 1e-10 * reference.norm());
    }
}

#[test]
fn nonlinear_machinery_reproduces_linear_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..6 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let sys = LinearDelaySystem::new(
            random_matrix(&mut rng, n, n, 1.0),
            random_matrix(&mut rng, n, m, 1.0),
            random_matrix(&mut rng, n, m, 1.0),
            LinearKernel::Constant(random_matrix(&mut rng, n, m, 1.0)),
            1.0,
        )
        .unwrap();
        let general = sys.to_delay_system();
        let x = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let phi = smooth_history(&mut rng, 1.0, 1e-3, m, 1.0).unwrap();
        let pred = predict_with(&general, &x, &phi, Integrator::Rk4).unwrap();
        let oracle = linear_predict(&sys, &x, &phi).unwrap();
        let err = (&pred.y - &oracle).norm();
        assert!(err < 1e-6, "case {case}: predictor error {err:e}");
        let b = compute_b(&general, &pred).unwrap().b;
        let b_ref = linear_transformed_input(&sys);
        let err_b = (&b - &b_ref).norm();
        assert!(err_b < 1e-6, "case {case}: input matrix error {err_b:e}");
    }
}

#[test]
fn theta_dependent_kernel_agrees_at_second_order() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.2]);
    let sys = LinearDelaySystem::new(
        a,
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_column_slice(2, 1, &[0.5, 0.0]),
        LinearKernel::Function(Arc::new(|t: f64| DMatrix::from_column_slice(2, 1, &[1.0 + t, (3.0 * t).cos()]))),
        1.0,
    )
    .unwrap();
    let general = sys.to_delay_system();
    let x = Vector::from_vec(vec![0.4, -0.2]);
    let mut errs = vec![];
    for step in [0.02, 0.01] {
        let phi = InputHistory::from_fn(1.0, step, 1, |t| Vector::from_element(1, (2.0 * t).sin() + 0.5)).unwrap();
        let pred = predict_with(&general, &x, &phi, Integrator::Rk4).unwrap();
        errs.push((pred.y - linear_predict(&sys, &x, &phi).unwrap()).norm());
    }
    assert!(errs[1] < 1e-3 && errs[1] < errs[0], "{errs:?}");
}

#[test]
fn kernel_endpoint_and_single_delay_specialisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_matrix(&mut rng, 3, 3, 1.0);
    let b1 = random_matrix(&mut rng, 3, 2, 1.0);
    let sys = LinearDelaySystem::new(a.clone(), DMatrix::zeros(3, 2), b1.clone(), LinearKernel::Constant(random_matrix(&mut rng, 3, 2, 1.0)), 0.8).unwrap();
    let q = linear_q(&sys, -0.8).unwrap();
    assert!((q - matrix_exponential(&a, 0.8) * &b1).norm() < 1e-14);

    // B0 = 0, Bint = 0: left-endpoint sum Σ e^{−Aθ_k} B1 φ_k Δ is a first-order rule for the same integral
    let single = LinearDelaySystem::new(a.clone(), DMatrix::zeros(3, 2), b1.clone(), LinearKernel::Zero, 0.8).unwrap();
    let x = Vector::from_vec(vec![0.1, 0.2, -0.3]);
    let mut errs = vec![];
    for step in [0.01, 0.005] {
        let phi = smooth_history(&mut ChaCha8Rng::seed_from_u64(9), 0.8, step, 2, 1.0).unwrap();
        let exact = LinearPredictor::new(&single, step).unwrap().predict(&x, &phi).unwrap();
        let mut left = matrix_exponential(&a, 0.8) * &x;
        for (k, s) in phi.iter().enumerate() {
            let theta = -0.8 + k as f64 * step;
            left += matrix_exponential(&a, -theta) * &b1 * Vector::from_column_slice(s) * step;
        }
        errs.push((exact - left).norm());
    }
    let ratio = errs[0] / errs[1];
    assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
}
