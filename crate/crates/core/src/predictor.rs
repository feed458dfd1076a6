//! The zero-future-input predictor `Y(x, φ)`.
//!
//! `Y(x, φ) = ξ(h)` where
//!
//! ```text
//! ξ'(s) = f(ξ) + B1(ξ) φ(s − h) + ∫_{-h}^{-s} Bint(θ, ξ) φ(s + θ) dθ,   ξ(0) = x
//! ```
//!
//! is integrated on the history grid `s_k = kΔ`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::delay_system::{spectral_norm, windowed_kernel_term, DelaySystem, HistoryWindow, InputHistory, KernelKind, Vector};
use crate::error::{Error, Result};
use crate::sampling;

/// Fixed-step scheme used for the prediction, reduction and plant ODEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        })
    }
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            other => Err(Error::InvalidParameter(format!("unknown integrator `{other}` (expected euler|rk4)"))),
        }
    }
}

/// Prediction trajectory `ξ(s_k)`, `k = 0..=N`.
#[derive(Debug, Clone)]
pub struct PredictorResult {
    pub xi: Vec<Vector>,
    /// `ξ` at cell midpoints from cubic Hermite interpolation; filled by RK4 only.
    pub xi_mid: Vec<Vector>,
    pub y: Vector,
    pub phi: InputHistory,
    pub integrator: Integrator,
    /// Set when the validity radius is finite and some `ξ(s_k)` left the ball.
    pub left_ball: bool,
}

impl PredictorResult {
    pub fn step(&self) -> f64 {
        self.phi.step()
    }

    /// `‖ξ(s_k)‖` for every grid point.
    pub fn norm_profile(&self) -> Vec<(f64, f64)> {
        let step = self.step();
        self.xi.iter().enumerate().map(|(k, v)| (k as f64 * step, v.norm())).collect()
    }
}

/// Euler prediction, the default scheme.
pub fn predict(sys: &DelaySystem, x: &Vector, phi: &InputHistory) -> Result<PredictorResult> {
    predict_with(sys, x, phi, Integrator::Euler)
}

pub fn predict_with(sys: &DelaySystem, x: &Vector, phi: &InputHistory, integrator: Integrator) -> Result<PredictorResult> {
    sys.check_state(x)?;
    sys.check_history(phi)?;
    if !x.iter().all(|v| v.is_finite()) || !phi.is_finite() {
        return Err(Error::NonFinite("predictor input"));
    }
    let window = HistoryWindow::new(phi);
    let step = window.step();
    let model = sys.model();

    let rhs = |k: usize, tau: f64, xi: &Vector| -> Vector {
        let delayed = Vector::from_column_slice(window.cell(k));
        let mut d = model.drift(xi);
        d.gemv(1.0, &model.b1(xi), &delayed, 1.0);
        if model.kernel() != KernelKind::Absent {
            d += windowed_kernel_term(sys, xi, &window, k as f64 * step + tau, None);
        }
        d
    };

    let n = window.len();
    let mut xi = Vec::with_capacity(n + 1);
    let mut xi_mid = Vec::new();
    xi.push(x.clone());
    let mut left_ball = !sys.in_ball(x);
    for k in 0..n {
        let cur = &xi[k];
        let next = match integrator {
            Integrator::Euler => cur + rhs(k, 0.0, cur) * step,
            Integrator::Rk4 => {
                let half = 0.5 * step;
                let k1 = rhs(k, 0.0, cur);
                let k2 = rhs(k, half, &(cur + &k1 * half));
                let k3 = rhs(k, half, &(cur + &k2 * half));
                let k4 = rhs(k, step, &(cur + &k3 * step));
                let next = cur + (&k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
                let end_slope = rhs(k, step, &next);
                xi_mid.push((cur + &next) * 0.5 + (k1 - end_slope) * (step / 8.0));
                next
            }
        };
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("prediction trajectory"));
        }
        left_ball |= !sys.in_ball(&next);
        xi.push(next);
    }
    let y = xi[n].clone();
    Ok(PredictorResult {
        xi,
        xi_mid,
        y,
        phi: phi.clone(),
        integrator,
        left_ball,
    })
}

/// Where the suprema of `‖B1‖` and `‖Bint‖` behind `ρ` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSource {
    Supplied,
    /// Estimated by sampling; not a certificate.
    SampledEstimate,
}

impl fmt::Display for BoundSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundSource::Supplied => "certified",
            BoundSource::SampledEstimate => "sampled estimate",
        })
    }
}

/// Norm-equivalence constant of the predictor map and the radius of the ball it certifies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorCertificate {
    pub rho: f64,
    /// `R / ρ`; infinite for global systems.
    pub valid_radius: f64,
    pub source: BoundSource,
}

/// `ρ = √2 · e^{M_f h} · max{1, h·sup‖Bint‖ + sup‖B1‖}`
pub fn rho_from_bounds(growth: f64, delay: f64, b1_sup: f64, bint_sup: f64) -> f64 {
    std::f64::consts::SQRT_2 * (growth * delay).exp() * (delay * bint_sup + b1_sup).max(1.0)
}

/// Radius of the ball sampled when the validity radius is infinite.
const SAMPLING_RADIUS: f64 = 10.0;
const SAMPLING_POINTS: usize = 2000;
const SAMPLING_SEED: u64 = 0x5eed_0001;

/// Sampled estimate of `(sup‖B1‖, sup‖Bint‖)` over the validity ball.
pub fn estimate_input_bounds(sys: &DelaySystem) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLING_SEED);
    let radius = sys.radius().min(SAMPLING_RADIUS);
    let model = sys.model();
    let h = sys.delay();
    let mut b1_sup = 0.0f64;
    let mut bint_sup = 0.0f64;
    let thetas = 16;
    for i in 0..SAMPLING_POINTS {
        // include the origin; suprema of smooth maps are often attained there
        let x = if i == 0 { Vector::zeros(sys.state_dim()) } else { sampling::point_in_ball(&mut rng, sys.state_dim(), radius) };
        b1_sup = b1_sup.max(spectral_norm(&model.b1(&x)));
        match model.kernel() {
            KernelKind::Absent => {}
            KernelKind::ThetaInvariant => bint_sup = bint_sup.max(spectral_norm(&model.bint(-h, &x))),
            KernelKind::General => {
                for j in 0..=thetas {
                    let theta = -h + h * j as f64 / thetas as f64;
                    bint_sup = bint_sup.max(spectral_norm(&model.bint(theta, &x)));
                }
            }
        }
    }
    (b1_sup, bint_sup)
}

/// The predictor constant `ρ` for `sys`.
pub fn rho(sys: &DelaySystem) -> PredictorCertificate {
    let ((b1_sup, bint_sup), source) = match sys.input_bounds() {
        Some(bounds) => (bounds, BoundSource::Supplied),
        None => (estimate_input_bounds(sys), BoundSource::SampledEstimate),
    };
    let rho = rho_from_bounds(sys.growth(), sys.delay(), b1_sup, bint_sup);
    PredictorCertificate {
        rho,
        valid_radius: sys.radius() / rho,
        source,
    }
}

/// Both norm-equivalence inequalities between `(x, φ)` and `(Y, φ)`:
/// `‖x‖² ≤ ρ²(‖Y‖² + ‖φ‖²)` and `‖Y‖² ≤ ρ²(‖x‖² + ‖φ‖²)`.
pub fn check_bounds(x: &Vector, phi: &InputHistory, result: &PredictorResult, rho: f64) -> bool {
    let x2 = x.norm_squared();
    let y2 = result.y.norm_squared();
    let p2 = phi.l2_norm_squared();
    let r2 = rho * rho;
    x2 <= r2 * (y2 + p2) && y2 <= r2 * (x2 + p2)
}
