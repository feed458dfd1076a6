//! Registered example plants with their controllers and certificates.

pub mod cascade;
pub mod linear;
pub mod pendulum;
pub mod scalar;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::LinearConfig;
use crate::delay_system::{b1_jacobian_defect, bint_jacobian_defect, drift_jacobian_defect, spectral_norm, DelaySystem, Matrix, Vector};
use crate::error::{Error, Result};
use crate::feedback::{certificate_for, m_kappa_bound, LKCertificate, LyapunovSpec, Provenance};
use crate::linear_ref::{linear_transformed_input, LinearDelaySystem};
use crate::predictor::{rho, Integrator, PredictorCertificate};
use crate::sampling::point_in_ball;
use crate::simulator::{FeedbackLaw, InitialHistory, RecordFlags, SimConfig};

pub use cascade::{ex2_explicit_predictor, ex2_feedback, ex2_v, ex2_z_transform};
pub use pendulum::{pendulum_alpha, pendulum_negativity, pendulum_sector};

/// Registered scenario names, sorted.
pub const NAMES: [&str; 4] = ["cascade", "linear", "pendulum", "scalar"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    Gradient,
    Scalar,
    ExplicitCascade,
    LinearGain,
}

impl fmt::Display for FeedbackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackKind::Gradient => "gradient",
            FeedbackKind::Scalar => "scalar",
            FeedbackKind::ExplicitCascade => "explicit-cascade",
            FeedbackKind::LinearGain => "linear-gain",
        })
    }
}

/// Default run parameters of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Defaults {
    pub step: f64,
    pub duration: f64,
    pub x0: Vector,
    pub u0: Vector,
    pub integrator: Integrator,
}

/// Closed-loop certificate data together with where each constant came from.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub predictor: PredictorCertificate,
    /// `(sup‖B‖, provenance)` over the set of transformed input matrices.
    pub input_matrix_bound: Option<(f64, Provenance)>,
    pub kappa_bound: Option<f64>,
    pub lower_w0_source: Option<Provenance>,
    pub lk: Option<LKCertificate>,
    pub note: Option<&'static str>,
}

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub summary: &'static str,
    pub system: DelaySystem,
    pub kind: FeedbackKind,
    pub law: FeedbackLaw,
    pub lyapunov: Option<LyapunovSpec>,
    pub certificate: CertificateReport,
    pub defaults: Defaults,
    /// Set for the linear scenario; enables the closed-form oracles.
    pub linear: Option<LinearDelaySystem>,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("certificate", &self.certificate)
            .field("defaults", &self.defaults)
            .finish_non_exhaustive()
    }
}

impl Scenario {
    /// A simulation configuration populated from the scenario defaults.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            scenario: self.name.clone(),
            step: self.defaults.step,
            duration: self.defaults.duration,
            x0: self.defaults.x0.clone(),
            u0: InitialHistory::Constant(self.defaults.u0.clone()),
            integrator: self.defaults.integrator,
            record: RecordFlags::default(),
        }
    }

    pub fn lk_certificate(&self) -> Option<&LKCertificate> {
        self.certificate.lk.as_ref()
    }
}

/// Looks up a registered scenario.
pub fn load(name: &str) -> Result<Scenario> {
    let scenario = match name {
        "pendulum" => pendulum_scenario(pendulum::DELAY)?,
        "cascade" => cascade_scenario()?,
        "scalar" => scalar_scenario(scalar::ScalarPlant::default())?,
        "linear" => linear_scenario("linear", linear::default_system(), None)?,
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    validate_jacobians(&scenario.system)?;
    Ok(scenario)
}

/// The linear scenario built from a configuration file's contents.
pub fn from_linear_config(cfg: &LinearConfig) -> Result<Scenario> {
    let scenario = linear_scenario("linear", cfg.system()?, cfg.gain()?)?;
    validate_jacobians(&scenario.system)?;
    Ok(scenario)
}

const JACOBIAN_TOLERANCE: f64 = 1e-4;

/// Compares every supplied Jacobian with a forward difference at a few points.
pub fn validate_jacobians(sys: &DelaySystem) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e57);
    let n = sys.state_dim();
    let h = sys.delay();
    let radius = sys.radius().min(2.0);
    for _ in 0..8 {
        let x = point_in_ball(&mut rng, n, radius);
        let d = point_in_ball(&mut rng, n, 1.0);
        let eps = 1e-6;
        let worst = drift_jacobian_defect(sys, &x, &d, eps)
            .max(b1_jacobian_defect(sys, &x, &d, eps))
            .max(bint_jacobian_defect(sys, -0.5 * h, &x, &d, eps));
        if !(worst <= JACOBIAN_TOLERANCE) {
            return Err(Error::InvalidParameter(format!("supplied Jacobian disagrees with finite differences (defect {worst:e})")));
        }
    }
    Ok(())
}

fn pendulum_scenario(h: f64) -> Result<Scenario> {
    let system = pendulum::system(h)?;
    let predictor = rho(&system);
    // κ = −Bᵀy is the gradient law for v0 = |y|² with k = 1/2
    let gain = 0.5;
    let negativity = pendulum::pendulum_negativity_default(&Matrix::identity(2, 2), gain, h)?;
    let spec = LyapunovSpec::quadratic(Matrix::identity(2, 2), gain, -negativity.worst_eigenvalue, Provenance::Sampled)?;
    // β(h) has norm at most e^h and B1 = (0, 1)
    let sup_b = 1.0 + h.exp();
    let kappa_bound = m_kappa_bound(&spec, sup_b);
    let lk = certificate_for(&spec, &predictor, kappa_bound, h).ok();
    Ok(Scenario {
        name: "pendulum".into(),
        summary: "inverted pendulum, point delay pi/4, feedback u = -B^T y",
        system,
        kind: FeedbackKind::Gradient,
        law: FeedbackLaw::Gradient(spec.clone()),
        lyapunov: Some(spec),
        certificate: CertificateReport {
            predictor,
            input_matrix_bound: Some((sup_b, Provenance::Analytic)),
            kappa_bound: Some(kappa_bound),
            lower_w0_source: Some(Provenance::Sampled),
            lk,
            note: (!negativity.negative).then_some("negativity check failed; no certificate"),
        },
        defaults: Defaults {
            step: 0.01,
            duration: 20.0,
            x0: Vector::from_vec(vec![std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2]),
            u0: Vector::from_element(1, 1.0),
            integrator: Integrator::Euler,
        },
        linear: None,
    })
}

fn cascade_scenario() -> Result<Scenario> {
    let system = cascade::system(cascade::DELAY)?;
    let predictor = rho(&system);
    Ok(Scenario {
        name: "cascade".into(),
        summary: "x1' = x2^2 + u(t-1), x2' = x2 + u; explicit predictor and cascade controller",
        system,
        kind: FeedbackKind::ExplicitCascade,
        law: cascade::cascade_law(),
        lyapunov: None,
        certificate: CertificateReport {
            predictor,
            input_matrix_bound: None,
            kappa_bound: None,
            lower_w0_source: None,
            lk: None,
            note: Some("growth bounds hold only locally; convergence is shown through V(z) instead"),
        },
        defaults: Defaults {
            step: 0.01,
            duration: 10.0,
            x0: Vector::from_vec(vec![0.5, 0.5]),
            u0: Vector::zeros(1),
            integrator: Integrator::Euler,
        },
        linear: None,
    })
}

fn scalar_scenario(plant: scalar::ScalarPlant) -> Result<Scenario> {
    let h = scalar::DELAY;
    let system = scalar::system(plant, h)?;
    let predictor = rho(&system);
    // v0 = y², and the closed transformed loop y' = −y gives w0 = 2y²
    let spec = LyapunovSpec::quadratic(Matrix::identity(1, 1), 1.0, 2.0, Provenance::Analytic)?;
    let kappa_bound = scalar::kappa_bound(&plant, h);
    let lk = certificate_for(&spec, &predictor, kappa_bound, h).ok();
    Ok(Scenario {
        name: "scalar".into(),
        summary: "x' = sin x + u + 0.5 u(t-1) + 0.5 int u, feedback (-f(y) - y) / B",
        system,
        kind: FeedbackKind::Scalar,
        law: FeedbackLaw::Scalar,
        lyapunov: Some(spec),
        certificate: CertificateReport {
            predictor,
            input_matrix_bound: Some((plant.input_bounds(h).1, Provenance::Analytic)),
            kappa_bound: Some(kappa_bound),
            lower_w0_source: Some(Provenance::Analytic),
            lk,
            note: None,
        },
        defaults: Defaults {
            step: 0.01,
            duration: 10.0,
            x0: Vector::from_element(1, 1.0),
            u0: Vector::zeros(1),
            integrator: Integrator::Euler,
        },
        linear: None,
    })
}

fn linear_scenario(name: &str, lin: LinearDelaySystem, gain: Option<Matrix>) -> Result<Scenario> {
    let k = linear::resolve_gain(&lin, gain)?;
    let b = linear_transformed_input(&lin);
    let closed = &lin.a + &b * &k;
    let system = lin.to_delay_system();
    let predictor = rho(&system);
    // v0 = yᵀPy with (A + BK)ᵀP + P(A + BK) = −I, so w0 = |y|²
    let (spec, lk) = match linear::lyapunov_solve(&closed, &Matrix::identity(lin.state_dim(), lin.state_dim())) {
        Ok(p) if p.clone().symmetric_eigen().eigenvalues.min() > 0.0 => {
            let spec = LyapunovSpec::quadratic(p, 0.0, 1.0, Provenance::Analytic)?;
            let lk = certificate_for(&spec, &predictor, spectral_norm(&k), lin.delay).ok();
            (Some(spec), lk)
        }
        _ => (None, None),
    };
    let n = lin.state_dim();
    let mut x0 = Vector::zeros(n);
    x0[0] = 1.0;
    Ok(Scenario {
        name: name.into(),
        summary: "linear plant with constant kernel, u = K y",
        kind: FeedbackKind::LinearGain,
        law: FeedbackLaw::LinearGain(k.clone()),
        certificate: CertificateReport {
            predictor,
            input_matrix_bound: Some((spectral_norm(&b), Provenance::Analytic)),
            kappa_bound: Some(spectral_norm(&k)),
            lower_w0_source: spec.as_ref().map(|_| Provenance::Analytic),
            note: lk.is_none().then_some("A + BK is not Hurwitz; no certificate"),
            lk,
        },
        lyapunov: spec,
        defaults: Defaults {
            step: 0.01,
            duration: 10.0,
            x0,
            u0: Vector::zeros(lin.input_dim()),
            integrator: Integrator::Euler,
        },
        system,
        linear: Some(lin),
    })
}
