//! Stabilizing feedback for the transformed system and the Lyapunov–Krasovskii
//! certificate it induces for the delayed closed loop.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::delay_system::{spectral_norm, DelaySystem, InputHistory, Matrix, Vector};
use crate::error::{Error, Result};
use crate::predictor::{Integrator, PredictorCertificate, PredictorResult};
use crate::reduction::reduce;
use crate::sampling;

pub type ScalarMap = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type VectorMap = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Whether a constant was derived analytically or estimated from samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Sampled,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Analytic => "certified",
            Provenance::Sampled => "sampled",
        })
    }
}

/// Control-Lyapunov data for the transformed system: `v0`, its gradient, the
/// dissipation rate `w0`, their quadratic bounds, and the gradient-feedback gain `k`.
#[derive(Clone)]
pub struct LyapunovSpec {
    pub v0: ScalarMap,
    pub grad_v0: VectorMap,
    pub w0: ScalarMap,
    /// `m_{v0}` in `m_{v0}‖y‖² ≤ v0(y)`
    pub lower_v0: f64,
    /// `M_{v0}` in `v0(y) ≤ M_{v0}‖y‖²`
    pub upper_v0: f64,
    /// `m_{w0}` in `w0(y) ≥ m_{w0}‖y‖²`
    pub lower_w0: f64,
    /// `M_{∇v0}` in `‖∇v0(y)‖ ≤ M_{∇v0}‖y‖`
    pub grad_bound: f64,
    pub gain: f64,
    pub lower_w0_source: Provenance,
}

impl fmt::Debug for LyapunovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovSpec")
            .field("lower_v0", &self.lower_v0)
            .field("upper_v0", &self.upper_v0)
            .field("lower_w0", &self.lower_w0)
            .field("grad_bound", &self.grad_bound)
            .field("gain", &self.gain)
            .field("lower_w0_source", &self.lower_w0_source)
            .finish_non_exhaustive()
    }
}

impl LyapunovSpec {
    /// `v0(y) = yᵀVy` for symmetric positive definite `V`, with `w0(y) = m_{w0}‖y‖²`.
    pub fn quadratic(v: Matrix, gain: f64, lower_w0: f64, lower_w0_source: Provenance) -> Result<Self> {
        if v.nrows() != v.ncols() {
            return Err(Error::InvalidParameter("V must be square".into()));
        }
        let eig = v.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if lo <= 0.0 {
            return Err(Error::NonPositive("smallest eigenvalue of V"));
        }
        let vv = v.clone();
        let vg = v;
        Ok(Self {
            v0: Arc::new(move |y| (y.transpose() * &vv * y)[(0, 0)]),
            grad_v0: Arc::new(move |y| &vg * y * 2.0),
            w0: Arc::new(move |y| lower_w0 * y.norm_squared()),
            lower_v0: lo,
            upper_v0: hi,
            lower_w0,
            grad_bound: 2.0 * hi,
            gain,
            lower_w0_source,
        })
    }
}

/// `κ(y, φ) = −k Bᵀ ∇v0(y)`
pub fn kappa_gradient(spec: &LyapunovSpec, b: &Matrix, y: &Vector) -> Vector {
    b.transpose() * (spec.grad_v0)(y) * (-spec.gain)
}

/// `M_κ = |k| · sup‖B‖ · M_{∇v0}`
pub fn m_kappa_bound(spec: &LyapunovSpec, sup_b: f64) -> f64 {
    spec.gain.abs() * sup_b * spec.grad_bound
}

/// Smallest `|B|` accepted by [`kappa_scalar`].
pub const SCALAR_GAIN_FLOOR: f64 = 1e-12;

/// `κ = (−f(y) − y) / B`, which makes the scalar transformed loop `y' = −y`.
pub fn kappa_scalar(f_val: f64, y: f64, b_val: f64) -> Result<f64> {
    if !(b_val.abs() >= SCALAR_GAIN_FLOOR) {
        return Err(Error::DivisionByZero(b_val));
    }
    Ok((-f_val - y) / b_val)
}

/// `(f(y) + Bκ)ᵀ ∇v0(y)`, the rate of change of `v0` along the transformed loop.
pub fn dissipation(spec: &LyapunovSpec, f_y: &Vector, b: &Matrix, kappa: &Vector, y: &Vector) -> f64 {
    let mut flow = f_y.clone();
    flow.gemv(1.0, b, kappa, 1.0);
    flow.dot(&(spec.grad_v0)(y))
}

/// Constants that enter the closed-loop certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateInputs {
    pub lower_v0: f64,
    pub upper_v0: f64,
    pub lower_w0: f64,
    pub kappa_bound: f64,
    pub rho: f64,
    pub delay: f64,
    /// Validity radius `R`; may be infinite.
    pub radius: f64,
}

/// Lyapunov–Krasovskii certificate of exponential stability for the delayed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LKCertificate {
    pub gamma: f64,
    pub sigma: f64,
    /// `m_v`
    pub lower: f64,
    /// `M_v`
    pub upper: f64,
    pub rho: f64,
    pub kappa_bound: f64,
    pub delay: f64,
    /// `√(m_v / M_v) · R / ρ`
    pub attraction_radius: f64,
}

impl LKCertificate {
    /// `(M_v / m_v) e^{−σt}`, the decay envelope relative to the initial squared norm.
    pub fn envelope_factor(&self, t: f64) -> f64 {
        self.upper / self.lower * (-self.sigma * t).exp()
    }
}

/// Assembles `γ = m_{w0}/(2M_κ²)`, `σ = m_{w0}/(2M_{v0})`,
/// `m_v = min{m_{v0}, γe^{−σh}, ρ²γe^{−σh}}/(2ρ²)`, `M_v = γ + ρ²M_{v0}`.
pub fn certificate(inputs: &CertificateInputs) -> Result<LKCertificate> {
    let CertificateInputs {
        lower_v0,
        upper_v0,
        lower_w0,
        kappa_bound,
        rho,
        delay,
        radius,
    } = *inputs;
    if !(lower_w0 > 0.0) {
        return Err(Error::NonPositive("m_w0"));
    }
    if !(kappa_bound > 0.0) {
        return Err(Error::NonPositive("M_kappa"));
    }
    if !(lower_v0 > 0.0) {
        return Err(Error::NonPositive("m_v0"));
    }
    if !(upper_v0 > 0.0) {
        return Err(Error::NonPositive("M_v0"));
    }
    if !(rho > 0.0) {
        return Err(Error::NonPositive("rho"));
    }
    let gamma = lower_w0 / (2.0 * kappa_bound * kappa_bound);
    let sigma = lower_w0 / (2.0 * upper_v0);
    let r2 = rho * rho;
    let damped = gamma * (-sigma * delay).exp();
    let lower = lower_v0.min(damped).min(r2 * damped) / (2.0 * r2);
    let upper = gamma + r2 * upper_v0;
    let attraction_radius = if radius.is_infinite() { f64::INFINITY } else { (lower / upper).sqrt() * radius / rho };
    Ok(LKCertificate {
        gamma,
        sigma,
        lower,
        upper,
        rho,
        kappa_bound,
        delay,
        attraction_radius,
    })
}

/// Certificate for a Lyapunov spec, predictor constant and feedback bound.
pub fn certificate_for(spec: &LyapunovSpec, pred: &PredictorCertificate, kappa_bound: f64, delay: f64) -> Result<LKCertificate> {
    certificate(&CertificateInputs {
        lower_v0: spec.lower_v0,
        upper_v0: spec.upper_v0,
        lower_w0: spec.lower_w0,
        kappa_bound,
        rho: pred.rho,
        delay,
        radius: pred.valid_radius * pred.rho,
    })
}

/// `v(x, φ) = v0(Y(x, φ)) + γ Σ_k e^{σθ_k}‖φ_k‖²Δ`
pub fn lk_functional(spec: &LyapunovSpec, cert: &LKCertificate, pred: &PredictorResult, phi: &InputHistory) -> f64 {
    (spec.v0)(&pred.y) + cert.gamma * phi.weighted_energy(cert.sigma)
}

/// A bounded estimate of the set of transformed input matrices `B(y, φ)`.
#[derive(Debug, Clone)]
pub struct InputMatrixSet {
    /// Sampled `(y, B(y, φ))` pairs.
    pub samples: Vec<(Vector, Matrix)>,
    /// Bound on `‖B‖` over the set.
    pub sup_norm: f64,
    pub provenance: Provenance,
}

/// Samples `B(y, φ)` from random `(x, φ)` with `‖x‖² + ‖φ‖² ≤ radius²`.
pub fn sample_input_matrix_set(sys: &DelaySystem, radius: f64, count: usize, step: f64, seed: u64) -> Result<InputMatrixSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    let mut sup = 0.0f64;
    for _ in 0..count {
        let (x, phi) = sampling::pair_in_ball(&mut rng, sys.state_dim(), sys.input_dim(), sys.delay(), step, radius)?;
        let (pred, red) = reduce(sys, &x, &phi, Integrator::Euler)?;
        sup = sup.max(spectral_norm(&red.b));
        samples.push((pred.y, red.b));
    }
    Ok(InputMatrixSet {
        samples,
        sup_norm: sup,
        provenance: Provenance::Sampled,
    })
}

/// Sampled lower bound `min w0(y)/‖y‖²` where `w0(y) = −(f(y) + Bκ)ᵀ∇v0(y)` under gradient feedback,
/// evaluated on each sampled `(y, B)` pair.
pub fn sampled_lower_w0(sys: &DelaySystem, spec: &LyapunovSpec, set: &InputMatrixSet) -> f64 {
    set.samples
        .iter()
        .filter(|(y, _)| y.norm_squared() > 1e-12)
        .map(|(y, b)| {
            let kappa = kappa_gradient(spec, b, y);
            let w0 = -dissipation(spec, &sys.model().drift(y), b, &kappa, y);
            w0 / y.norm_squared()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_spec(gain: f64, grad_bound: f64) -> LyapunovSpec {
        let mut spec = LyapunovSpec::quadratic(Matrix::identity(2, 2), gain, 1.0, Provenance::Analytic).unwrap();
        spec.grad_bound = grad_bound;
        spec
    }

    #[test]
    fn gradient_feedback_examples() {
        let spec = identity_spec(0.5, 2.0);
        let b = Matrix::from_column_slice(2, 1, &[0.8687, 2.3246]);
        assert_eq!(kappa_gradient(&spec, &b, &Vector::zeros(2)), Vector::zeros(1));
        let u = kappa_gradient(&spec, &b, &Vector::from_vec(vec![1.0, 0.0]));
        assert!((u[0] + 0.8687).abs() < 1e-12);
        let off = identity_spec(0.0, 2.0);
        assert_eq!(kappa_gradient(&off, &b, &Vector::from_vec(vec![3.0, -1.0]))[0], 0.0);
    }

    #[test]
    fn kappa_bound_examples() {
        assert_eq!(m_kappa_bound(&identity_spec(1.0, 2.0), 1.0), 2.0);
        let h = std::f64::consts::FRAC_PI_4;
        let pendulum = m_kappa_bound(&identity_spec(1.0, 1.0), h.exp() + 1.0);
        assert!((pendulum - 3.193).abs() < 1e-3);
        assert_eq!(m_kappa_bound(&identity_spec(-2.0, 1.5), 0.7), m_kappa_bound(&identity_spec(2.0, 1.5), 0.7));
    }

    fn inputs(lower_w0: f64, kappa_bound: f64, upper_v0: f64) -> CertificateInputs {
        CertificateInputs {
            lower_v0: 1.0,
            upper_v0,
            lower_w0,
            kappa_bound,
            rho: 2f64.sqrt(),
            delay: 0.0,
            radius: f64::INFINITY,
        }
    }

    #[test]
    fn certificate_examples() {
        let c = certificate(&inputs(2.0, 1.0, 1.0)).unwrap();
        assert_eq!((c.gamma, c.sigma), (1.0, 1.0));
        assert!((c.lower - 0.25).abs() < 1e-15);
        assert!((c.upper - 3.0).abs() < 1e-15);
        assert!(c.attraction_radius.is_infinite());

        let finite = certificate(&CertificateInputs { radius: 2.0, ..inputs(2.0, 1.0, 1.0) }).unwrap();
        assert!((finite.attraction_radius - (0.25f64 / 3.0).sqrt() * 2.0 / 2f64.sqrt()).abs() < 1e-15);

        assert!(matches!(certificate(&inputs(0.0, 1.0, 1.0)), Err(Error::NonPositive("m_w0"))));
        assert!(matches!(certificate(&inputs(1.0, 0.0, 1.0)), Err(Error::NonPositive("M_kappa"))));
    }

    #[test]
    fn scalar_feedback_examples() {
        assert_eq!(kappa_scalar(0.0, 1.0, 2.0).unwrap(), -0.5);
        assert_eq!(kappa_scalar(0.0, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(kappa_scalar(1.0, 1.0, 1.0).unwrap(), -2.0);
        assert!(matches!(kappa_scalar(1.0, 1.0, 1e-13), Err(Error::DivisionByZero(_))));
        assert!(kappa_scalar(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn quadratic_spec_bounds() {
        let v = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let spec = LyapunovSpec::quadratic(v, 1.0, 0.3, Provenance::Sampled).unwrap();
        let y = Vector::from_vec(vec![0.3, -0.7]);
        let v0 = (spec.v0)(&y);
        assert!(spec.lower_v0 * y.norm_squared() <= v0 && v0 <= spec.upper_v0 * y.norm_squared());
        assert!((spec.grad_v0)(&y).norm() <= spec.grad_bound * y.norm());
        assert!(LyapunovSpec::quadratic(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), 1.0, 1.0, Provenance::Analytic).is_err());
    }

    #[test]
    fn functional_of_zero_history() {
        let spec = identity_spec(1.0, 2.0);
        let cert = certificate(&inputs(2.0, 1.0, 1.0)).unwrap();
        let phi = InputHistory::zeros(1.0, 0.1, 1).unwrap();
        let pred = PredictorResult {
            xi: vec![Vector::zeros(2); 11],
            xi_mid: Vec::new(),
            y: Vector::zeros(2),
            phi: phi.clone(),
            integrator: Integrator::Euler,
            left_ball: false,
        };
        assert_eq!(lk_functional(&spec, &cert, &pred, &phi), 0.0);
        let ones = InputHistory::constant(1.0, 0.1, &Vector::from_element(1, 1.0)).unwrap();
        let flat = LKCertificate { sigma: 0.0, gamma: 1.0, ..cert };
        assert!((lk_functional(&spec, &flat, &pred, &ones) - 1.0).abs() < 1e-14);
    }
}
