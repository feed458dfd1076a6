//! Plant description and sampled input history.
//!
//! The plant is
//!
//! ```text
//! x'(t) = f(x) + B0(x) u(t) + B1(x) u(t - h) + ∫_{-h}^{0} Bint(θ, x) u(t + θ) dθ
//! ```
//!
//! and the input segment `u_t` on `[t - h, t)` is stored as a piecewise-constant
//! signal on a uniform grid (left-endpoint samples) in a ring buffer.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative slack used when deciding whether a step divides the delay.
const GRID_TOLERANCE: f64 = 1e-9;

/// Induced 2-norm.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.ncols() == 1 || m.nrows() == 1 {
        return m.norm();
    }
    m.clone().svd(false, false).singular_values.max()
}

/// How the distributed kernel `Bint(θ, x)` depends on `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `Bint ≡ 0`; the distributed term is skipped entirely.
    Absent,
    /// `Bint(θ, x)` does not depend on `θ`; quadrature collapses to a prefix sum.
    ThetaInvariant,
    /// Arbitrary piecewise-continuous dependence on `θ`.
    General,
}

/// The maps that make up a control-affine plant with distributed input delay.
///
/// `b1_jacobian(i, x)` is the Jacobian of the `i`-th column of `b1` and
/// `bint_jacobian(i, θ, x)` the Jacobian of the `i`-th column of `bint(θ, ·)`.
/// Implementors that override `bint` must also override `kernel`.
pub trait PlantModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn drift(&self, x: &Vector) -> Vector;
    fn drift_jacobian(&self, x: &Vector) -> Matrix;

    fn b0(&self, x: &Vector) -> Matrix;
    fn b1(&self, x: &Vector) -> Matrix;

    fn b1_jacobian(&self, _column: usize, _x: &Vector) -> Matrix {
        Matrix::zeros(self.state_dim(), self.state_dim())
    }

    fn bint(&self, _theta: f64, _x: &Vector) -> Matrix {
        Matrix::zeros(self.state_dim(), self.input_dim())
    }

    fn bint_jacobian(&self, _column: usize, _theta: f64, _x: &Vector) -> Matrix {
        Matrix::zeros(self.state_dim(), self.state_dim())
    }

    fn kernel(&self) -> KernelKind {
        KernelKind::Absent
    }
}

/// A plant together with its delay, validity radius and growth constant.
#[derive(Clone)]
pub struct DelaySystem {
    model: Arc<dyn PlantModel>,
    delay: f64,
    radius: f64,
    growth: f64,
    b1_sup: Option<f64>,
    bint_sup: Option<f64>,
}

impl fmt::Debug for DelaySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelaySystem")
            .field("n", &self.state_dim())
            .field("m", &self.input_dim())
            .field("delay", &self.delay)
            .field("radius", &self.radius)
            .field("growth", &self.growth)
            .field("b1_sup", &self.b1_sup)
            .field("bint_sup", &self.bint_sup)
            .finish()
    }
}

impl DelaySystem {
    /// `radius` may be `f64::INFINITY`.
    pub fn new(model: Arc<dyn PlantModel>, delay: f64, radius: f64, growth: f64) -> Result<Self> {
        if !(delay.is_finite() && delay > 0.0) {
            return Err(Error::NonPositive("delay"));
        }
        if radius.is_nan() || radius <= 0.0 {
            return Err(Error::NonPositive("validity radius"));
        }
        if !(growth.is_finite() && growth >= 0.0) {
            return Err(Error::InvalidParameter(format!("growth constant {growth} must be finite and non-negative")));
        }
        Ok(Self {
            model,
            delay,
            radius,
            growth,
            b1_sup: None,
            bint_sup: None,
        })
    }

    /// Known suprema of `‖B1‖` and `‖Bint‖` over the validity ball.
    pub fn with_input_bounds(mut self, b1_sup: f64, bint_sup: f64) -> Self {
        self.b1_sup = Some(b1_sup);
        self.bint_sup = Some(bint_sup);
        self
    }

    pub fn model(&self) -> &dyn PlantModel {
        self.model.as_ref()
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn input_bounds(&self) -> Option<(f64, f64)> {
        self.b1_sup.zip(self.bint_sup)
    }

    /// `‖x‖ ≤ R`; vacuous when `R = ∞`.
    pub fn in_ball(&self, x: &Vector) -> bool {
        self.radius.is_infinite() || x.norm() <= self.radius
    }

    pub(crate) fn check_state(&self, x: &Vector) -> Result<()> {
        expect_dim("state", self.state_dim(), x.len())
    }

    pub(crate) fn check_history(&self, phi: &InputHistory) -> Result<()> {
        expect_dim("history input", self.input_dim(), phi.input_dim())?;
        if (phi.delay() - self.delay).abs() > GRID_TOLERANCE * self.delay.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "history covers {} but the delay is {}",
                phi.delay(),
                self.delay
            )));
        }
        Ok(())
    }
}

pub(crate) fn expect_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

/// Number of samples `N` with `N·step = delay`, or an error if `step` does not divide `delay`.
pub fn sample_count(delay: f64, step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::NonPositive("step"));
    }
    let ratio = delay / step;
    let n = ratio.round();
    if n < 1.0 || (n - ratio).abs() > GRID_TOLERANCE * ratio.max(1.0) {
        return Err(Error::StepNotDivisor { step, delay });
    }
    Ok(n as usize)
}

/// The largest step `≤`-closest to `requested` that divides `delay`: `delay / round(delay / requested)`.
pub fn snap_step(delay: f64, requested: f64) -> Result<(usize, f64)> {
    if !(requested.is_finite() && requested > 0.0) {
        return Err(Error::NonPositive("step"));
    }
    let n = (delay / requested).round().max(1.0) as usize;
    Ok((n, delay / n as f64))
}

/// Piecewise-constant input segment on `[t - h, t)`, oldest sample first.
///
/// Sample `k` holds the value on `[-h + kΔ, -h + (k+1)Δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputHistory {
    step: f64,
    input_dim: usize,
    len: usize,
    head: usize,
    data: Vec<f64>,
}

impl InputHistory {
    pub fn zeros(delay: f64, step: f64, input_dim: usize) -> Result<Self> {
        let len = sample_count(delay, step)?;
        if input_dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be positive".into()));
        }
        Ok(Self {
            step,
            input_dim,
            len,
            head: 0,
            data: vec![0.0; len * input_dim],
        })
    }

    pub fn constant(delay: f64, step: f64, value: &Vector) -> Result<Self> {
        let mut h = Self::zeros(delay, step, value.len())?;
        for chunk in h.data.chunks_mut(value.len()) {
            chunk.copy_from_slice(value.as_slice());
        }
        Ok(h)
    }

    /// Samples `f` at the left endpoints `θ_k = -h + kΔ`.
    pub fn from_fn(delay: f64, step: f64, input_dim: usize, f: impl Fn(f64) -> Vector) -> Result<Self> {
        let mut h = Self::zeros(delay, step, input_dim)?;
        for k in 0..h.len {
            let theta = -delay + k as f64 * step;
            let v = f(theta);
            expect_dim("history sample", input_dim, v.len())?;
            h.data[k * input_dim..(k + 1) * input_dim].copy_from_slice(v.as_slice());
        }
        Ok(h)
    }

    pub fn from_samples(step: f64, samples: &[Vector]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidParameter("history needs at least one sample".into()))?;
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::NonPositive("step"));
        }
        let m = first.len();
        let mut data = Vec::with_capacity(samples.len() * m);
        for s in samples {
            expect_dim("history sample", m, s.len())?;
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            step,
            input_dim: m,
            len: samples.len(),
            head: 0,
            data,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Covered length `N·Δ`.
    pub fn delay(&self) -> f64 {
        self.len as f64 * self.step
    }

    /// Sample `k`, counted from the oldest.
    pub fn sample(&self, k: usize) -> &[f64] {
        assert!(k < self.len, "sample index {k} out of range for history of length {}", self.len);
        let slot = (self.head + k) % self.len;
        &self.data[slot * self.input_dim..(slot + 1) * self.input_dim]
    }

    pub fn sample_vector(&self, k: usize) -> Vector {
        Vector::from_column_slice(self.sample(k))
    }

    /// Value at offset `θ ∈ [-h, 0)`.
    pub fn at(&self, theta: f64) -> Result<&[f64]> {
        let h = self.delay();
        if !(theta >= -h && theta < 0.0) {
            return Err(Error::OutOfRange {
                what: "history offset",
                value: theta,
                lo: -h,
                hi: 0.0,
            });
        }
        let k = (((theta + h) / self.step).floor() as usize).min(self.len - 1);
        Ok(self.sample(k))
    }

    pub fn oldest(&self) -> &[f64] {
        self.sample(0)
    }

    pub fn newest(&self) -> &[f64] {
        self.sample(self.len - 1)
    }

    /// Appends `value` as the newest sample and drops the oldest.
    pub fn push(&mut self, value: &Vector) -> Result<()> {
        expect_dim("pushed input", self.input_dim, value.len())?;
        let slot = self.head;
        self.data[slot * self.input_dim..(slot + 1) * self.input_dim].copy_from_slice(value.as_slice());
        self.head = (self.head + 1) % self.len;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len).map(move |k| self.sample(k))
    }

    /// Samples as a contiguous buffer, oldest first.
    pub fn to_contiguous(&self) -> Vec<f64> {
        let split = self.head * self.input_dim;
        let mut out = Vec::with_capacity(self.data.len());
        out.extend_from_slice(&self.data[split..]);
        out.extend_from_slice(&self.data[..split]);
        out
    }

    pub fn l2_norm_squared(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() * self.step
    }

    /// Exact L² norm of the piecewise-constant signal.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_squared().sqrt()
    }

    /// `Σ_k e^{σθ_k} ‖φ_k‖² Δ` with `θ_k` the left cell endpoints.
    pub fn weighted_energy(&self, sigma: f64) -> f64 {
        let h = self.delay();
        self.iter()
            .enumerate()
            .map(|(k, s)| {
                let theta = -h + k as f64 * self.step;
                (sigma * theta).exp() * s.iter().map(|v| v * v).sum::<f64>() * self.step
            })
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }
}

/// Exact L² norm of a history.
pub fn l2_norm(phi: &InputHistory) -> f64 {
    phi.l2_norm()
}

/// A state paired with its input history; the phase point of the delay system.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistoryPair {
    pub x: Vector,
    pub phi: InputHistory,
}

impl StateHistoryPair {
    pub fn new(x: Vector, phi: InputHistory) -> Self {
        Self { x, phi }
    }

    /// `‖x‖² + ‖φ‖²`
    pub fn norm_squared(&self) -> f64 {
        self.x.norm_squared() + self.phi.l2_norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn in_ball(&self, radius: f64) -> bool {
        radius.is_infinite() || self.norm_squared() <= radius * radius
    }
}

/// Linearised view of a history with prefix sums, built once per predictor call.
///
/// Windows are indexed by a shift `s ≥ 0`: the window at shift `s` is the
/// history as seen at time `s` after its reference instant, so the integrand
/// at offset `θ` reads the sample covering `s + θ`. Positions `s + θ ≥ 0`
/// carry the optional `future` value (zero when absent).
#[derive(Debug, Clone)]
pub(crate) struct HistoryWindow {
    step: f64,
    delay: f64,
    len: usize,
    m: usize,
    cells: Vec<f64>,
    prefix: Vec<f64>,
}

impl HistoryWindow {
    pub(crate) fn new(phi: &InputHistory) -> Self {
        let m = phi.input_dim();
        let len = phi.len();
        let cells = phi.to_contiguous();
        let mut prefix = vec![0.0; (len + 1) * m];
        for k in 0..len {
            for i in 0..m {
                prefix[(k + 1) * m + i] = prefix[k * m + i] + cells[k * m + i];
            }
        }
        Self {
            step: phi.step(),
            delay: phi.delay(),
            len,
            m,
            cells,
            prefix,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn step(&self) -> f64 {
        self.step
    }

    pub(crate) fn cell(&self, k: usize) -> &[f64] {
        &self.cells[k * self.m..(k + 1) * self.m]
    }

    /// Splits `s` into a whole number of cells and a remainder in `[0, Δ)`.
    fn locate(&self, s: f64) -> (usize, f64) {
        let ratio = s / self.step;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= GRID_TOLERANCE * ratio.max(1.0) {
            return (nearest.max(0.0) as usize, 0.0);
        }
        let k = ratio.floor().max(0.0);
        (k as usize, (s - k * self.step).max(0.0))
    }

    /// Calls `visit(θ_start, length, value)` for each θ-segment of `[-h, 0]` on
    /// which the shifted signal is constant. `θ_start` is the segment's left end.
    pub(crate) fn for_each_segment(&self, s: f64, future: Option<&[f64]>, mut visit: impl FnMut(f64, f64, &[f64])) {
        let (k, tau) = self.locate(s);
        let h = self.delay;
        let mut j = 0usize;
        while k + j < self.len {
            let start = if j == 0 { -h } else { -h + j as f64 * self.step - tau };
            let end = -h + (j + 1) as f64 * self.step - tau;
            if end > start {
                visit(start, end - start, self.cell(k + j));
            }
            j += 1;
        }
        if let Some(u) = future {
            let covered = s.min(h);
            if covered > 0.0 {
                visit(-covered, covered, u);
            }
        }
    }

    /// `∫_{-h}^{0} w(s + θ) dθ` for the shifted signal `w`.
    pub(crate) fn integral(&self, s: f64, future: Option<&[f64]>) -> Vector {
        let (k, tau) = self.locate(s);
        let mut out = Vector::zeros(self.m);
        if k < self.len {
            let first = self.cell(k);
            for i in 0..self.m {
                let tail = self.prefix[self.len * self.m + i] - self.prefix[(k + 1) * self.m + i];
                out[i] = first[i] * (self.step - tau) + tail * self.step;
            }
        }
        if let Some(u) = future {
            let covered = s.min(self.delay);
            for i in 0..self.m {
                out[i] += u[i] * covered;
            }
        }
        out
    }
}

/// `∫_{-h}^{0} Bint(θ, x) w(s + θ) dθ` on the window at shift `s`.
pub(crate) fn windowed_kernel_term(
    sys: &DelaySystem,
    x: &Vector,
    window: &HistoryWindow,
    s: f64,
    future: Option<&[f64]>,
) -> Vector {
    let model = sys.model();
    match model.kernel() {
        KernelKind::Absent => Vector::zeros(sys.state_dim()),
        KernelKind::ThetaInvariant => model.bint(-sys.delay(), x) * window.integral(s, future),
        KernelKind::General => {
            let mut acc = Vector::zeros(sys.state_dim());
            window.for_each_segment(s, future, |theta, len, value| {
                let v = Vector::from_column_slice(value);
                acc.gemv(len, &model.bint(theta, x), &v, 1.0);
            });
            acc
        }
    }
}

/// `∫_{-h}^{upper} Bint(θ, x) φ(θ - upper) dθ`, i.e. the distributed term of the
/// prediction ODE at `s = -upper`. Zero when `upper = -h`.
pub fn distributed_term(sys: &DelaySystem, x: &Vector, phi: &InputHistory, upper: f64) -> Result<Vector> {
    sys.check_state(x)?;
    sys.check_history(phi)?;
    let h = sys.delay();
    if !(upper >= -h - GRID_TOLERANCE * h && upper <= 0.0) {
        return Err(Error::OutOfRange {
            what: "upper limit",
            value: upper,
            lo: -h,
            hi: 0.0,
        });
    }
    let window = HistoryWindow::new(phi);
    Ok(windowed_kernel_term(sys, x, &window, (-upper).min(h), None))
}

/// Right-hand side of the plant with current input `u_now` and history `phi`.
pub fn plant_rhs(sys: &DelaySystem, x: &Vector, phi: &InputHistory, u_now: &Vector) -> Result<Vector> {
    sys.check_state(x)?;
    sys.check_history(phi)?;
    expect_dim("current input", sys.input_dim(), u_now.len())?;
    let window = HistoryWindow::new(phi);
    Ok(plant_rhs_windowed(sys, x, &window, 0, 0.0, u_now))
}

/// Plant right-hand side at `τ` into a zero-order-hold step: the point delay
/// reads cell `cell`, the distributed term sees the window at shift `cell·Δ + τ`
/// with the held input `u_now` filling the newest `τ`.
pub(crate) fn plant_rhs_windowed(
    sys: &DelaySystem,
    x: &Vector,
    window: &HistoryWindow,
    cell: usize,
    tau: f64,
    u_now: &Vector,
) -> Vector {
    let model = sys.model();
    let delayed = Vector::from_column_slice(window.cell(cell));
    let s = cell as f64 * window.step() + tau;
    let mut dx = model.drift(x);
    dx.gemv(1.0, &model.b0(x), u_now, 1.0);
    dx.gemv(1.0, &model.b1(x), &delayed, 1.0);
    dx += windowed_kernel_term(sys, x, window, s, Some(u_now.as_slice()));
    dx
}

/// `‖f(x + εd) − f(x) − ε A(x) d‖ / ε`.
pub fn drift_jacobian_defect(sys: &DelaySystem, x: &Vector, d: &Vector, eps: f64) -> f64 {
    let m = sys.model();
    let lhs = m.drift(&(x + d * eps)) - m.drift(x) - m.drift_jacobian(x) * d * eps;
    lhs.norm() / eps
}

/// Largest first-order defect over the columns of `B1`.
pub fn b1_jacobian_defect(sys: &DelaySystem, x: &Vector, d: &Vector, eps: f64) -> f64 {
    let m = sys.model();
    let shifted = m.b1(&(x + d * eps));
    let base = m.b1(x);
    (0..sys.input_dim())
        .map(|i| {
            let diff = shifted.column(i) - base.column(i) - m.b1_jacobian(i, x) * d * eps;
            diff.norm() / eps
        })
        .fold(0.0, f64::max)
}

/// Largest first-order defect over the columns of `Bint(θ, ·)`.
pub fn bint_jacobian_defect(sys: &DelaySystem, theta: f64, x: &Vector, d: &Vector, eps: f64) -> f64 {
    let m = sys.model();
    let shifted = m.bint(theta, &(x + d * eps));
    let base = m.bint(theta, x);
    (0..sys.input_dim())
        .map(|i| {
            let diff = shifted.column(i) - base.column(i) - m.bint_jacobian(i, theta, x) * d * eps;
            diff.norm() / eps
        })
        .fold(0.0, f64::max)
}
