//! Closed-form predictor theory for linear plants
//!
//! ```text
//! x' = A x + B0 u(t) + B1 u(t − h) + ∫_{-h}^{0} Bint(θ) u(t + θ) dθ
//! ```
//!
//! used as an independent reference for the nonlinear machinery.
//! `Y(x, φ) = e^{Ah} x + ∫ Q(θ) φ(θ) dθ` with
//! `Q(θ) = e^{−Aθ} B1 + ∫_{-h}^{θ} e^{A(h−θ+τ)} Bint(τ) dτ`.

use std::fmt;
use std::sync::Arc;

use crate::delay_system::{expect_dim, spectral_norm, DelaySystem, InputHistory, KernelKind, Matrix, PlantModel, Vector};
use crate::error::{Error, Result};

/// Distributed kernel of a linear plant.
#[derive(Clone)]
pub enum LinearKernel {
    Zero,
    Constant(Matrix),
    /// `θ ↦ Bint(θ)`, piecewise continuous with jumps on the history grid only.
    Function(Arc<dyn Fn(f64) -> Matrix + Send + Sync>),
}

impl fmt::Debug for LinearKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearKernel::Zero => f.write_str("Zero"),
            LinearKernel::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            LinearKernel::Function(_) => f.write_str("Function(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearDelaySystem {
    pub a: Matrix,
    pub b0: Matrix,
    pub b1: Matrix,
    pub bint: LinearKernel,
    pub delay: f64,
}

impl LinearDelaySystem {
    pub fn new(a: Matrix, b0: Matrix, b1: Matrix, bint: LinearKernel, delay: f64) -> Result<Self> {
        let n = a.nrows();
        expect_dim("A columns", n, a.ncols())?;
        expect_dim("B0 rows", n, b0.nrows())?;
        expect_dim("B1 rows", n, b1.nrows())?;
        expect_dim("B1 columns", b0.ncols(), b1.ncols())?;
        if let LinearKernel::Constant(c) = &bint {
            expect_dim("Bint rows", n, c.nrows())?;
            expect_dim("Bint columns", b0.ncols(), c.ncols())?;
        }
        if !(delay.is_finite() && delay > 0.0) {
            return Err(Error::NonPositive("delay"));
        }
        Ok(Self { a, b0, b1, bint, delay })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b0.ncols()
    }

    pub fn bint_at(&self, theta: f64) -> Matrix {
        match &self.bint {
            LinearKernel::Zero => Matrix::zeros(self.state_dim(), self.input_dim()),
            LinearKernel::Constant(c) => c.clone(),
            LinearKernel::Function(f) => f(theta),
        }
    }

    /// The same plant as a general [`DelaySystem`] with `R = ∞`, `M_f = ‖A‖`,
    /// and supplied input bounds (sampled on a fine θ-grid for function kernels).
    pub fn to_delay_system(&self) -> DelaySystem {
        let bint_sup = match &self.bint {
            LinearKernel::Zero => 0.0,
            LinearKernel::Constant(c) => spectral_norm(c),
            LinearKernel::Function(f) => (0..=1000)
                .map(|j| spectral_norm(&f(-self.delay + self.delay * j as f64 / 1000.0)))
                .fold(0.0, f64::max),
        };
        let b1_sup = spectral_norm(&self.b1);
        DelaySystem::new(Arc::new(LinearPlant(self.clone())), self.delay, f64::INFINITY, spectral_norm(&self.a))
            .expect("validated on construction")
            .with_input_bounds(b1_sup, bint_sup)
    }
}

/// [`PlantModel`] adapter: `A(x) = A`, vanishing input Jacobians.
#[derive(Debug, Clone)]
pub struct LinearPlant(pub LinearDelaySystem);

impl PlantModel for LinearPlant {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }
    fn drift(&self, x: &Vector) -> Vector {
        &self.0.a * x
    }
    fn drift_jacobian(&self, _x: &Vector) -> Matrix {
        self.0.a.clone()
    }
    fn b0(&self, _x: &Vector) -> Matrix {
        self.0.b0.clone()
    }
    fn b1(&self, _x: &Vector) -> Matrix {
        self.0.b1.clone()
    }
    fn bint(&self, theta: f64, _x: &Vector) -> Matrix {
        self.0.bint_at(theta)
    }
    fn kernel(&self) -> KernelKind {
        match self.0.bint {
            LinearKernel::Zero => KernelKind::Absent,
            LinearKernel::Constant(_) => KernelKind::ThetaInvariant,
            LinearKernel::Function(_) => KernelKind::General,
        }
    }
}

const TAYLOR_TERMS: usize = 20;

/// `e^{Mt}` by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled to norm ≤ 1/2, where 20 terms leave a truncation
/// error below machine precision.
pub fn matrix_exponential(m: &Matrix, t: f64) -> Matrix {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix exponential needs a square matrix");
    let scaled = m * t;
    let norm = scaled.lp_norm(1).max(scaled.transpose().lp_norm(1));
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let x = scaled / 2f64.powi(squarings as i32);

    let mut result = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=TAYLOR_TERMS {
        term = &term * &x / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `∫_0^L e^{Ar} dr`, read off the exponential of the augmented matrix `[[A, I], [0, 0]]`.
pub fn exponential_integral(a: &Matrix, length: f64) -> Matrix {
    let n = a.nrows();
    let mut aug = Matrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    matrix_exponential(&aug, length).view((0, n), (n, n)).into_owned()
}

/// 5-point Gauss–Legendre nodes and weights on `[-1, 1]`.
const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

fn gauss(lo: f64, hi: f64, mut f: impl FnMut(f64) -> Matrix) -> Option<Matrix> {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc: Option<Matrix> = None;
    for (node, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
        let v = f(mid + half * node) * (w * half);
        acc = Some(match acc {
            Some(a) => a + v,
            None => v,
        });
    }
    acc
}

/// Resolution of the inner quadrature for function kernels.
const KERNEL_RESOLUTION: f64 = 1e-3;

/// `J(θ) = ∫_{-h}^{θ} e^{A(h+τ)} Bint(τ) dτ`, so that `Q(θ) = e^{−Aθ}(B1 + J(θ))`.
fn kernel_accumulation(sys: &LinearDelaySystem, theta: f64) -> Matrix {
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let h = sys.delay;
    match &sys.bint {
        LinearKernel::Zero => Matrix::zeros(n, m),
        LinearKernel::Constant(c) => exponential_integral(&sys.a, theta + h) * c,
        LinearKernel::Function(f) => {
            let span = theta + h;
            if span <= 0.0 {
                return Matrix::zeros(n, m);
            }
            let pieces = (span / KERNEL_RESOLUTION).ceil().max(1.0) as usize;
            let width = span / pieces as f64;
            let mut acc = Matrix::zeros(n, m);
            for p in 0..pieces {
                let lo = -h + p as f64 * width;
                if let Some(v) = gauss(lo, lo + width, |tau| matrix_exponential(&sys.a, h + tau) * f(tau)) {
                    acc += v;
                }
            }
            acc
        }
    }
}

/// `Q(θ)` for `θ ∈ [-h, 0]`.
pub fn linear_q(sys: &LinearDelaySystem, theta: f64) -> Result<Matrix> {
    let h = sys.delay;
    if !(-h..=0.0).contains(&theta) {
        return Err(Error::OutOfRange {
            what: "kernel offset",
            value: theta,
            lo: -h,
            hi: 0.0,
        });
    }
    Ok(matrix_exponential(&sys.a, -theta) * (&sys.b1 + kernel_accumulation(sys, theta)))
}

/// `e^{Ah}B0 + Q(0)`, the input matrix of the transformed linear system.
pub fn linear_transformed_input(sys: &LinearDelaySystem) -> Matrix {
    matrix_exponential(&sys.a, sys.delay) * &sys.b0 + linear_q(sys, 0.0).expect("0 lies in [-h, 0]")
}

/// `e^{Ah}` and the per-cell weights `∫_cell Q(θ) dθ` for one history grid.
///
/// The weights integrate `Q` exactly (to quadrature precision) over each cell,
/// so the prediction is exact for the piecewise-constant history.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    flow: Matrix,
    step: f64,
    weights: Vec<Matrix>,
}

impl LinearPredictor {
    pub fn new(sys: &LinearDelaySystem, step: f64) -> Result<Self> {
        let len = crate::delay_system::sample_count(sys.delay, step)?;
        let h = sys.delay;
        let mut weights = Vec::with_capacity(len);
        let mut accumulated = kernel_accumulation(sys, -h);
        for k in 0..len {
            let lo = -h + k as f64 * step;
            let hi = lo + step;
            let inner = |theta: f64| -> Matrix {
                let j = match &sys.bint {
                    LinearKernel::Function(f) => {
                        // J(θ) = J(lo) + ∫_lo^θ e^{A(h+τ)} Bint(τ) dτ
                        let tail = gauss(lo, theta, |tau| matrix_exponential(&sys.a, h + tau) * f(tau))
                            .unwrap_or_else(|| Matrix::zeros(sys.state_dim(), sys.input_dim()));
                        &accumulated + tail
                    }
                    _ => kernel_accumulation(sys, theta),
                };
                matrix_exponential(&sys.a, -theta) * (&sys.b1 + j)
            };
            weights.push(gauss(lo, hi, inner).expect("non-empty rule"));
            if let LinearKernel::Function(f) = &sys.bint {
                if let Some(cell) = gauss(lo, hi, |tau| matrix_exponential(&sys.a, h + tau) * f(tau)) {
                    accumulated += cell;
                }
            }
        }
        Ok(Self {
            flow: matrix_exponential(&sys.a, h),
            step,
            weights,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn cell_weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn predict(&self, x: &Vector, phi: &InputHistory) -> Result<Vector> {
        expect_dim("state", self.flow.nrows(), x.len())?;
        expect_dim("history samples", self.weights.len(), phi.len())?;
        let mut y = &self.flow * x;
        for (w, sample) in self.weights.iter().zip(phi.iter()) {
            y.gemv(1.0, w, &Vector::from_column_slice(sample), 1.0);
        }
        Ok(y)
    }
}

/// `Y(x, φ)` for a linear plant.
pub fn linear_predict(sys: &LinearDelaySystem, x: &Vector, phi: &InputHistory) -> Result<Vector> {
    expect_dim("history input", sys.input_dim(), phi.input_dim())?;
    LinearPredictor::new(sys, phi.step())?.predict(x, phi)
}

/// `Yᵀ V Y + Σ_k e^{σθ_k} ‖φ_k‖² Δ`
pub fn linear_lk_functional(v: &Matrix, sigma: f64, sys: &LinearDelaySystem, x: &Vector, phi: &InputHistory) -> Result<f64> {
    let y = linear_predict(sys, x, phi)?;
    Ok((y.transpose() * v * &y)[(0, 0)] + phi.weighted_energy(sigma))
}
