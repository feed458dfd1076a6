//! Fixed-step closed- and open-loop simulation with a zero-order-hold input
//! ring buffer.
//!
//! Each step computes `u_k` from `(x_k, u_{t_k})` first, advances the plant
//! with `u_k` held over `[t_k, t_k + Δ)`, then pushes `u_k` into the history.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use crate::delay_system::{expect_dim, plant_rhs_windowed, snap_step, DelaySystem, HistoryWindow, InputHistory, Matrix, Vector};
use crate::error::{Error, Result};
use crate::feedback::{kappa_gradient, kappa_scalar, lk_functional, LKCertificate, LyapunovSpec};
use crate::predictor::{predict_with, Integrator, PredictorResult};
use crate::reduction::compute_b;

pub type HistoryFeedback = Arc<dyn Fn(&Vector, &InputHistory) -> Result<Vector> + Send + Sync>;

/// How `u(t)` is computed from the prediction.
#[derive(Clone)]
pub enum FeedbackLaw {
    /// `u = −k Bᵀ(y, φ) ∇v0(y)`
    Gradient(LyapunovSpec),
    /// `u = (−f(y) − y) / B(y, φ)` for scalar plants.
    Scalar,
    /// `u = K y`
    LinearGain(Matrix),
    /// A map of the raw phase point `(x, u_t)`, for designs with an explicit transformation.
    StateHistory(HistoryFeedback),
}

impl fmt::Debug for FeedbackLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackLaw::Gradient(spec) => f.debug_tuple("Gradient").field(spec).finish(),
            FeedbackLaw::Scalar => f.write_str("Scalar"),
            FeedbackLaw::LinearGain(k) => f.debug_tuple("LinearGain").field(k).finish(),
            FeedbackLaw::StateHistory(_) => f.write_str("StateHistory(..)"),
        }
    }
}

impl FeedbackLaw {
    fn needs_input_matrix(&self) -> bool {
        matches!(self, FeedbackLaw::Gradient(_) | FeedbackLaw::Scalar)
    }
}

/// Everything computed in one pass of the control algorithm.
#[derive(Debug, Clone)]
pub struct ControlOutput {
    pub u: Vector,
    pub prediction: PredictorResult,
    pub b: Option<Matrix>,
}

/// One pass of the control algorithm: predict `ξ`, set `y = ξ(h)`, integrate `β`,
/// set `B = B1(y) + β(h)`, evaluate the feedback.
pub fn control_step(
    sys: &DelaySystem,
    law: &FeedbackLaw,
    x: &Vector,
    phi: &InputHistory,
    integrator: Integrator,
    want_b: bool,
) -> Result<ControlOutput> {
    let prediction = predict_with(sys, x, phi, integrator)?;
    let b = if want_b || law.needs_input_matrix() {
        Some(compute_b(sys, &prediction)?.b)
    } else {
        None
    };
    let y = &prediction.y;
    let u = match law {
        FeedbackLaw::Gradient(spec) => kappa_gradient(spec, b.as_ref().expect("computed above"), y),
        FeedbackLaw::Scalar => {
            if sys.state_dim() != 1 || sys.input_dim() != 1 {
                return Err(Error::InvalidParameter("scalar feedback needs a scalar plant".into()));
            }
            let f = sys.model().drift(y)[0];
            let gain = b.as_ref().expect("computed above")[(0, 0)];
            Vector::from_element(1, kappa_scalar(f, y[0], gain)?)
        }
        FeedbackLaw::LinearGain(k) => {
            expect_dim("gain columns", sys.state_dim(), k.ncols())?;
            expect_dim("gain rows", sys.input_dim(), k.nrows())?;
            k * y
        }
        FeedbackLaw::StateHistory(map) => map(x, phi)?,
    };
    expect_dim("feedback output", sys.input_dim(), u.len())?;
    if !u.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("control"));
    }
    Ok(ControlOutput { u, prediction, b })
}

/// Initial input segment `u_0` on `[-h, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialHistory {
    Constant(Vector),
    /// Explicit samples, oldest first; their count must match the resolved grid.
    Samples(Vec<Vector>),
}

/// Which optional columns to record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecordFlags {
    pub y: bool,
    pub b: bool,
    pub v: bool,
    pub envelope: bool,
    pub flags: bool,
}

impl RecordFlags {
    pub fn all() -> Self {
        Self {
            y: true,
            b: true,
            v: true,
            envelope: true,
            flags: true,
        }
    }

    /// Parses a comma-separated list of `y`, `b`, `v`, `envelope`, `flags`, `all`, `none`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut out = Self::default();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "y" => out.y = true,
                "b" | "B" => out.b = true,
                "v" => out.v = true,
                "envelope" => out.envelope = true,
                "flags" => out.flags = true,
                "all" => out = Self::all(),
                "none" => out = Self::default(),
                other => return Err(Error::InvalidParameter(format!("unknown record field `{other}`"))),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: String,
    /// Requested step; snapped to `h / round(h / step)`.
    pub step: f64,
    pub duration: f64,
    pub x0: Vector,
    pub u0: InitialHistory,
    pub integrator: Integrator,
    pub record: RecordFlags,
}

/// Step, history length and step count after snapping to the delay grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedGrid {
    pub step: f64,
    pub cells: usize,
    pub steps: usize,
}

impl SimConfig {
    pub fn resolve(&self, delay: f64) -> Result<ResolvedGrid> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::NonPositive("duration"));
        }
        let (cells, step) = snap_step(delay, self.step)?;
        let steps = (self.duration / step).round().max(1.0) as usize;
        Ok(ResolvedGrid { step, cells, steps })
    }

    pub fn initial_history(&self, sys: &DelaySystem, grid: &ResolvedGrid) -> Result<InputHistory> {
        match &self.u0 {
            InitialHistory::Constant(v) => {
                expect_dim("initial input", sys.input_dim(), v.len())?;
                InputHistory::constant(sys.delay(), grid.step, v)
            }
            InitialHistory::Samples(samples) => {
                expect_dim("initial history samples", grid.cells, samples.len())?;
                let phi = InputHistory::from_samples(grid.step, samples)?;
                expect_dim("initial input", sys.input_dim(), phi.input_dim())?;
                Ok(phi)
            }
        }
    }
}

/// Per-step diagnostics.
pub const FLAG_STATE_LEFT_BALL: u8 = 1;
pub const FLAG_PREDICTION_LEFT_BALL: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub t: f64,
    pub x: Vector,
    pub u: Vector,
    /// `‖u_t‖²` of the history the control was computed from.
    pub history_norm_sq: f64,
    pub y: Option<Vector>,
    pub b: Option<Matrix>,
    pub v: Option<f64>,
    pub envelope: Option<f64>,
    pub flags: u8,
}

impl SimRecord {
    /// `‖x(t)‖² + ‖u_t‖²`
    pub fn phase_norm_sq(&self) -> f64 {
        self.x.norm_squared() + self.history_norm_sq
    }
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub step: f64,
    pub state_dim: usize,
    pub input_dim: usize,
    pub record: RecordFlags,
    pub records: Vec<SimRecord>,
    /// Set when the run stopped early; `records` then holds the partial trace.
    pub aborted: Option<Error>,
}

impl SimTrace {
    pub fn final_record(&self) -> Option<&SimRecord> {
        self.records.last()
    }

    pub fn final_norm(&self) -> f64 {
        self.final_record().map_or(f64::NAN, |r| r.x.norm())
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        cols.extend((1..=self.input_dim).map(|i| format!("u{i}")));
        if self.record.y {
            cols.extend((1..=self.state_dim).map(|i| format!("y{i}")));
        }
        if self.record.v {
            cols.push("v".into());
        }
        if self.record.envelope {
            cols.push("envelope".into());
        }
        if self.record.flags {
            cols.push("flags".into());
        }
        cols.join(",")
    }

    /// Header plus one row per record; floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        let mut row = String::new();
        for r in &self.records {
            row.clear();
            push_num(&mut row, r.t);
            r.x.iter().chain(r.u.iter()).for_each(|v| push_num(&mut row, *v));
            if self.record.y {
                match &r.y {
                    Some(y) => y.iter().for_each(|v| push_num(&mut row, *v)),
                    None => (0..self.state_dim).for_each(|_| push_num(&mut row, f64::NAN)),
                }
            }
            if self.record.v {
                push_num(&mut row, r.v.unwrap_or(f64::NAN));
            }
            if self.record.envelope {
                push_num(&mut row, r.envelope.unwrap_or(f64::NAN));
            }
            if self.record.flags {
                if !row.is_empty() {
                    row.push(',');
                }
                row.push_str(&r.flags.to_string());
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

fn push_num(row: &mut String, v: f64) {
    if !row.is_empty() {
        row.push(',');
    }
    row.push_str(&format!("{v:?}"));
}

/// Advances `x` by one zero-order-hold step of length `window.step()`.
fn advance(sys: &DelaySystem, x: &Vector, window: &HistoryWindow, u: &Vector, integrator: Integrator) -> Vector {
    let step = window.step();
    let rhs = |tau: f64, x: &Vector| plant_rhs_windowed(sys, x, window, 0, tau, u);
    match integrator {
        Integrator::Euler => x + rhs(0.0, x) * step,
        Integrator::Rk4 => {
            let half = 0.5 * step;
            let k1 = rhs(0.0, x);
            let k2 = rhs(half, &(x + &k1 * half));
            let k3 = rhs(half, &(x + &k2 * half));
            let k4 = rhs(step, &(x + &k3 * step));
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0)
        }
    }
}

/// One plant step from `(x, φ)` under held input `u`; returns the new state and history.
pub fn step_plant(sys: &DelaySystem, x: &Vector, phi: &InputHistory, u: &Vector, integrator: Integrator) -> Result<(Vector, InputHistory)> {
    sys.check_state(x)?;
    sys.check_history(phi)?;
    expect_dim("held input", sys.input_dim(), u.len())?;
    let window = HistoryWindow::new(phi);
    let next = advance(sys, x, &window, u, integrator);
    let mut phi = phi.clone();
    phi.push(u)?;
    Ok((next, phi))
}

/// Open-loop run from `(x0, φ0)` applying `inputs[k]` on step `k`; returns `x(t_0..=t_K)`.
pub fn open_loop(sys: &DelaySystem, x0: &Vector, phi0: &InputHistory, inputs: &[Vector], integrator: Integrator) -> Result<Vec<Vector>> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    let mut phi = phi0.clone();
    let mut x = x0.clone();
    for u in inputs {
        let (next, shifted) = step_plant(sys, &x, &phi, u, integrator)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("open-loop state"));
        }
        x = next;
        phi = shifted;
        states.push(x.clone());
    }
    Ok(states)
}

/// Lyapunov data needed to record `v(t)` and the decay envelope.
#[derive(Debug, Clone, Copy)]
pub struct Certification<'a> {
    pub spec: &'a LyapunovSpec,
    pub cert: &'a LKCertificate,
}

/// Closed-loop run. Numerical failures stop the run and are reported in
/// [`SimTrace::aborted`] alongside the records produced so far.
pub fn simulate(sys: &DelaySystem, law: &FeedbackLaw, cfg: &SimConfig, lk: Option<Certification<'_>>) -> Result<SimTrace> {
    let grid = cfg.resolve(sys.delay())?;
    sys.check_state(&cfg.x0)?;
    let mut phi = cfg.initial_history(sys, &grid)?;
    let mut x = cfg.x0.clone();
    let initial_norm_sq = x.norm_squared() + phi.l2_norm_squared();
    let mut trace = SimTrace {
        step: grid.step,
        state_dim: sys.state_dim(),
        input_dim: sys.input_dim(),
        record: cfg.record,
        records: Vec::with_capacity(grid.steps + 1),
        aborted: None,
    };

    for k in 0..=grid.steps {
        let t = k as f64 * grid.step;
        let ctrl = match control_step(sys, law, &x, &phi, cfg.integrator, cfg.record.b) {
            Ok(c) => c,
            Err(e) => {
                trace.aborted = Some(e);
                break;
            }
        };
        let mut flags = 0;
        if !sys.in_ball(&x) {
            flags |= FLAG_STATE_LEFT_BALL;
        }
        if ctrl.prediction.left_ball {
            flags |= FLAG_PREDICTION_LEFT_BALL;
        }
        let v = match (cfg.record.v, lk) {
            (true, Some(c)) => Some(lk_functional(c.spec, c.cert, &ctrl.prediction, &phi)),
            _ => None,
        };
        let envelope = match (cfg.record.envelope, lk) {
            (true, Some(c)) => Some(c.cert.envelope_factor(t) * initial_norm_sq),
            _ => None,
        };
        trace.records.push(SimRecord {
            t,
            x: x.clone(),
            u: ctrl.u.clone(),
            history_norm_sq: phi.l2_norm_squared(),
            y: cfg.record.y.then(|| ctrl.prediction.y.clone()),
            b: if cfg.record.b { ctrl.b.clone() } else { None },
            v,
            envelope,
            flags,
        });
        if k == grid.steps {
            break;
        }
        let window = HistoryWindow::new(&phi);
        let next = advance(sys, &x, &window, &ctrl.u, cfg.integrator);
        if !next.iter().all(|v| v.is_finite()) {
            trace.aborted = Some(Error::NonFinite("closed-loop state"));
            break;
        }
        x = next;
        phi.push(&ctrl.u)?;
    }
    Ok(trace)
}

/// Independent runs in parallel, one thread per configuration.
pub fn simulate_many(sys: &DelaySystem, law: &FeedbackLaw, cfgs: &[SimConfig], lk: Option<Certification<'_>>) -> Vec<Result<SimTrace>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs.iter().map(|cfg| scope.spawn(move || simulate(sys, law, cfg, lk))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    })
}

/// Outcome of checking `‖x(t)‖² + ‖u_t‖² ≤ (M_v/m_v) e^{−σt} (‖x(0)‖² + ‖u_0‖²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayReport {
    pub passed: bool,
    pub violations: usize,
    /// Largest `lhs − rhs` over the trace (negative when every step has slack).
    pub worst_excess: f64,
    /// Time at which `worst_excess` occurs.
    pub worst_time: f64,
}

/// Relative slack for [`decay_check`].
pub const DECAY_TOLERANCE: f64 = 1e-6;

pub fn decay_check(trace: &SimTrace, cert: &LKCertificate) -> DecayReport {
    let Some(first) = trace.records.first() else {
        return DecayReport {
            passed: true,
            violations: 0,
            worst_excess: 0.0,
            worst_time: 0.0,
        };
    };
    let initial = first.phase_norm_sq();
    let tol = DECAY_TOLERANCE * initial.max(f64::MIN_POSITIVE);
    let mut violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_time = 0.0;
    for r in &trace.records {
        let excess = r.phase_norm_sq() - cert.envelope_factor(r.t) * initial;
        if excess > tol {
            violations += 1;
        }
        if excess > worst_excess {
            worst_excess = excess;
            worst_time = r.t;
        }
    }
    DecayReport {
        passed: violations == 0 && trace.aborted.is_none(),
        violations,
        worst_excess,
        worst_time,
    }
}
