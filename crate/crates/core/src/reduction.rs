//! Input matrix of the predictor-transformed system.
//!
//! Along the prediction trajectory `ξ`, the matrix ODE
//!
//! ```text
//! β'(s) = Ã(s, ξ(s), φ) β(s) + Bint(−s, ξ(s)),   β(0) = B0(ξ(0))
//! ```
//!
//! gives `B(y, φ) = B1(ξ(h)) + β(h)`, and `y = Y(x, u_t)` obeys
//! `y' = f(y) + B(y, u_t) u(t)`.

use crate::delay_system::{expect_dim, DelaySystem, HistoryWindow, InputHistory, KernelKind, Matrix, Vector};
use crate::error::{Error, Result};
use crate::predictor::{predict_with, Integrator, PredictorResult};

#[derive(Debug, Clone)]
pub struct ReductionResult {
    /// `β(s_k)`, `k = 0..=N`.
    pub beta: Vec<Matrix>,
    /// `B(y, φ)`
    pub b: Matrix,
}

/// `Ã` with the point-delay factor read from cell `cell` and the distributed
/// factor taken on the window at shift `s`.
fn tilde_a_windowed(sys: &DelaySystem, s: f64, cell: usize, xi: &Vector, window: &HistoryWindow) -> Matrix {
    let model = sys.model();
    let m = sys.input_dim();
    let mut out = model.drift_jacobian(xi);
    let delayed = window.cell(cell);
    for (i, &phi_i) in delayed.iter().enumerate().take(m) {
        if phi_i != 0.0 {
            out += model.b1_jacobian(i, xi) * phi_i;
        }
    }
    match model.kernel() {
        KernelKind::Absent => {}
        KernelKind::ThetaInvariant => {
            let integral = window.integral(s, None);
            for i in 0..m {
                if integral[i] != 0.0 {
                    out += model.bint_jacobian(i, -sys.delay(), xi) * integral[i];
                }
            }
        }
        KernelKind::General => {
            window.for_each_segment(s, None, |theta, len, value| {
                for (i, &v) in value.iter().enumerate() {
                    if v != 0.0 {
                        out += model.bint_jacobian(i, theta, xi) * (v * len);
                    }
                }
            });
        }
    }
    out
}

/// `Ã(s, ξ, φ) = A(ξ) + Σᵢ 𝓑₁ⁱ(ξ) φᵢ(s − h) + Σᵢ ∫_{-h}^{-s} 𝓑_intⁱ(θ, ξ) φᵢ(s + θ) dθ`
pub fn tilde_a(sys: &DelaySystem, s: f64, xi: &Vector, phi: &InputHistory) -> Result<Matrix> {
    sys.check_state(xi)?;
    sys.check_history(phi)?;
    let h = sys.delay();
    if !(0.0..=h).contains(&s) {
        return Err(Error::OutOfRange {
            what: "prediction offset",
            value: s,
            lo: 0.0,
            hi: h,
        });
    }
    let window = HistoryWindow::new(phi);
    // φ(s − h) is read left-continuously at s = h
    let cell = ((s / phi.step()).floor() as usize).min(phi.len() - 1);
    Ok(tilde_a_windowed(sys, s, cell, xi, &window))
}

/// Integrates the `β` ODE along `pred.xi` with the predictor's scheme and step.
///
/// RK4 stages read `ξ` at the predictor's interpolated cell midpoints.
pub fn compute_b(sys: &DelaySystem, pred: &PredictorResult) -> Result<ReductionResult> {
    let n_steps = pred.phi.len();
    expect_dim("prediction trajectory", n_steps + 1, pred.xi.len())?;
    if pred.integrator == Integrator::Rk4 {
        expect_dim("prediction midpoints", n_steps, pred.xi_mid.len())?;
    }
    sys.check_history(&pred.phi)?;
    let window = HistoryWindow::new(&pred.phi);
    let step = window.step();
    let model = sys.model();
    let kernel = model.kernel();

    let forcing = |s: f64, xi: &Vector| -> Option<Matrix> {
        (kernel != KernelKind::Absent).then(|| model.bint(-s, xi))
    };
    let deriv = |s: f64, cell: usize, xi: &Vector, beta: &Matrix| -> Matrix {
        let mut d = tilde_a_windowed(sys, s, cell, xi, &window) * beta;
        if let Some(f) = forcing(s, xi) {
            d += f;
        }
        d
    };

    let mut beta = Vec::with_capacity(n_steps + 1);
    beta.push(model.b0(&pred.xi[0]));
    for k in 0..n_steps {
        let s = k as f64 * step;
        let xi = &pred.xi[k];
        let cur = &beta[k];
        let next = match pred.integrator {
            Integrator::Euler => cur + deriv(s, k, xi, cur) * step,
            Integrator::Rk4 => {
                let half = 0.5 * step;
                let k1 = deriv(s, k, xi, cur);
                let mid = &pred.xi_mid[k];
                let k2 = deriv(s + half, k, mid, &(cur + &k1 * half));
                let k3 = deriv(s + half, k, mid, &(cur + &k2 * half));
                let k4 = deriv(s + step, k, &pred.xi[k + 1], &(cur + &k3 * step));
                cur + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0)
            }
        };
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("reduction trajectory"));
        }
        beta.push(next);
    }
    let b = model.b1(&pred.y) + &beta[n_steps];
    Ok(ReductionResult { beta, b })
}

/// Predictor and reduction in one call.
pub fn reduce(sys: &DelaySystem, x: &Vector, phi: &InputHistory, integrator: Integrator) -> Result<(PredictorResult, ReductionResult)> {
    let pred = predict_with(sys, x, phi, integrator)?;
    let red = compute_b(sys, &pred)?;
    Ok((pred, red))
}

/// `f(y) + B u`
pub fn transformed_rhs_with(sys: &DelaySystem, y: &Vector, b: &Matrix, u_now: &Vector) -> Result<Vector> {
    sys.check_state(y)?;
    expect_dim("current input", sys.input_dim(), u_now.len())?;
    let mut d = sys.model().drift(y);
    d.gemv(1.0, b, u_now, 1.0);
    Ok(d)
}

/// Right-hand side of the transformed system at the prediction `pred`.
pub fn transformed_rhs(sys: &DelaySystem, pred: &PredictorResult, u_now: &Vector) -> Result<Vector> {
    let red = compute_b(sys, pred)?;
    transformed_rhs_with(sys, &pred.y, &red.b, u_now)
}
