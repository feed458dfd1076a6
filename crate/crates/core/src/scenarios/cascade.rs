//! `x1' = x2² + u(t − h)`, `x2' = x2 + u(t)`, whose predictor is available in closed form.

use std::sync::Arc;

use crate::delay_system::{DelaySystem, InputHistory, Matrix, PlantModel, Vector};
use crate::error::Result;
use crate::feedback::{LyapunovSpec, Provenance};
use crate::simulator::FeedbackLaw;

pub const DELAY: f64 = 1.0;
/// Radius of the ball on which `‖f(x)‖ ≤ M_f‖x‖` is claimed.
pub const RADIUS: f64 = 1.0;
/// `‖(x2², x2)‖ = |x2|·√(1 + x2²) ≤ √2‖x‖` on the unit ball.
pub const GROWTH: f64 = std::f64::consts::SQRT_2;
/// Gain of the gradient controller pulled back from `z`-coordinates.
pub const GRADIENT_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct Cascade;

impl PlantModel for Cascade {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[1] * x[1], x[1]])
    }
    fn drift_jacobian(&self, x: &Vector) -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0, 2.0 * x[1], 0.0, 1.0])
    }
    fn b0(&self, _x: &Vector) -> Matrix {
        Matrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
    fn b1(&self, _x: &Vector) -> Matrix {
        Matrix::from_column_slice(2, 1, &[1.0, 0.0])
    }
}

pub fn system(delay: f64) -> Result<DelaySystem> {
    Ok(DelaySystem::new(Arc::new(Cascade), delay, RADIUS, GROWTH)?.with_input_bounds(1.0, 0.0))
}

/// `Σ φ1(θ_k) Δ`
fn history_integral(phi: &InputHistory) -> f64 {
    phi.iter().map(|s| s[0]).sum::<f64>() * phi.step()
}

/// `y = (x1 + ((e^{2h} − 1)/2) x2² + Σφ1Δ, e^h x2)`
pub fn ex2_explicit_predictor(x: &Vector, phi: &InputHistory, h: f64) -> Vector {
    Vector::from_vec(vec![
        x[0] + 0.5 * ((2.0 * h).exp() - 1.0) * x[1] * x[1] + history_integral(phi),
        h.exp() * x[1],
    ])
}

/// `z = (y1 − e^{−h}y2 + ((e^{−2h} − 1)/2)y2², e^{−h}y2)`
pub fn ex2_y_to_z(y: &Vector, h: f64) -> Vector {
    let e = (-h).exp();
    Vector::from_vec(vec![y[0] - e * y[1] + 0.5 * (e * e - 1.0) * y[1] * y[1], e * y[1]])
}

/// `z = (x1 − x2 + Σφ1Δ, x2)`
pub fn ex2_z_transform(x: &Vector, phi: &InputHistory) -> Vector {
    Vector::from_vec(vec![x[0] - x[1] + history_integral(phi), x[1]])
}

/// `V(z) = (z1 + ½z2(z2 − 2))² + z2²`
pub fn ex2_v(z: &Vector) -> f64 {
    let w = z[0] + 0.5 * z[1] * (z[1] - 2.0);
    w * w + z[1] * z[1]
}

/// `(∂V/∂z1, ∂V/∂z2)`
pub fn ex2_v_gradient(z: &Vector) -> Vector {
    let w = z[0] + 0.5 * z[1] * (z[1] - 2.0);
    Vector::from_vec(vec![2.0 * w, 2.0 * w * (z[1] - 1.0) + 2.0 * z[1]])
}

/// `u = −2z2 − ∂V/∂z2`
pub fn ex2_feedback(z: &Vector) -> f64 {
    -2.0 * z[1] - ex2_v_gradient(z)[1]
}

/// Right-hand side of the `z`-cascade `z1' = z2² − z2`, `z2' = −z2 + ũ`.
pub fn ex2_cascade_rhs(z: &Vector, u_tilde: f64) -> Vector {
    Vector::from_vec(vec![z[1] * z[1] - z[1], -z[1] + u_tilde])
}

/// The cascade controller as a map of the raw phase point `(x, u_t)`.
pub fn cascade_law() -> FeedbackLaw {
    FeedbackLaw::StateHistory(Arc::new(|x, phi| Ok(Vector::from_element(1, ex2_feedback(&ex2_z_transform(x, phi))))))
}

/// `v0(y) = V(z(y))` for the gradient controller `u = −k Bᵀ∇v0(y)`.
///
/// The quadratic bounds are those of the linearisation at the origin. No
/// dissipation bound is established (`lower_w0 = 0`), so no certificate is issued.
pub fn cascade_gradient_spec(h: f64) -> LyapunovSpec {
    let e = (-h).exp();
    let z_of = move |y: &Vector| ex2_y_to_z(y, h);
    let grad = move |y: &Vector| {
        let gz = ex2_v_gradient(&z_of(y));
        // Jacobian of y ↦ z, transposed
        Vector::from_vec(vec![gz[0], gz[0] * (-e + (e * e - 1.0) * y[1]) + gz[1] * e])
    };
    // V ≈ (z1 − z2)² + z2² near 0, and z ≈ Ty with T = [[1, −e], [0, e]]
    let t = Matrix::from_row_slice(2, 2, &[1.0, -e, 0.0, e]);
    let q = Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 2.0]);
    let p = t.transpose() * q * &t;
    let eig = p.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    LyapunovSpec {
        v0: Arc::new(move |y| ex2_v(&z_of(y))),
        grad_v0: Arc::new(grad),
        w0: Arc::new(|_| 0.0),
        lower_v0: lo,
        upper_v0: hi,
        lower_w0: 0.0,
        grad_bound: 2.0 * hi,
        gain: GRADIENT_GAIN,
        lower_w0_source: Provenance::Sampled,
    }
}

pub fn cascade_gradient_law(h: f64) -> FeedbackLaw {
    FeedbackLaw::Gradient(cascade_gradient_spec(h))
}
