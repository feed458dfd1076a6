//! C interface to the predictor feedback library.
//!
//! Every function returns a [`PfStatus`]. On failure the message is available from
//! [`pf_last_error_message`] on the same thread. Handles are opaque and must be
//! released with the matching `_free` function. Histories are passed oldest sample
//! first, `cells × m` values, sample-major. Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use predictor_feedback::config::LinearConfig;
use predictor_feedback::delay_system::{snap_step, InputHistory, Vector};
use predictor_feedback::predictor::{predict_with, Integrator};
use predictor_feedback::reduction::compute_b;
use predictor_feedback::scenarios::{self, Scenario};
use predictor_feedback::simulator::{control_step, simulate, Certification, InitialHistory, RecordFlags, SimConfig, SimTrace};
use predictor_feedback::Error;

pub const PF_INTEGRATOR_EULER: c_int = 0;
pub const PF_INTEGRATOR_RK4: c_int = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    UnknownScenario = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

/// A loaded scenario: plant, feedback law and certificate.
pub struct PfSystem {
    scenario: Scenario,
}

/// The output of [`pf_simulate`].
pub struct PfTrace {
    trace: SimTrace,
}

/// Certificate constants. The closed-loop fields are NaN when `has_lk` is 0.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PfCertificate {
    pub rho: f64,
    pub valid_radius: f64,
    pub kappa_bound: f64,
    pub has_lk: c_int,
    pub gamma: f64,
    pub sigma: f64,
    pub m_v: f64,
    pub upper_m_v: f64,
    pub attraction_radius: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(PfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::DimensionMismatch { .. } => PfStatus::DimensionMismatch,
            Error::NonFinite(_) | Error::DivisionByZero(_) => PfStatus::NonFinite,
            Error::UnknownScenario(_) => PfStatus::UnknownScenario,
            Error::Config(_) => PfStatus::Config,
            _ => PfStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: PfStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PfStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(PfStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p).to_str().map_err(|_| fail(PfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn system<'a>(p: *const PfSystem) -> Result<&'a Scenario, Failure> {
    non_null(p, "system")?;
    Ok(&(*p).scenario)
}

unsafe fn trace_ref<'a>(p: *const PfTrace) -> Result<&'a SimTrace, Failure> {
    non_null(p, "trace")?;
    Ok(&(*p).trace)
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(p: *mut f64, values: impl IntoIterator<Item = f64>, what: &str) -> Result<(), Failure> {
    non_null(p, what)?;
    for (i, v) in values.into_iter().enumerate() {
        *p.add(i) = v;
    }
    Ok(())
}

fn integrator(code: c_int) -> Result<Integrator, Failure> {
    match code {
        PF_INTEGRATOR_EULER => Ok(Integrator::Euler),
        PF_INTEGRATOR_RK4 => Ok(Integrator::Rk4),
        other => Err(fail(PfStatus::InvalidArgument, format!("unknown integrator {other}"))),
    }
}

/// The phase point `(x, φ)` from raw buffers; `cells` must equal `h / step`.
unsafe fn phase_point(sc: &Scenario, x: *const f64, phi: *const f64, cells: usize, step: f64) -> Result<(Vector, InputHistory), Failure> {
    let sys = &sc.system;
    let n = sys.state_dim();
    let m = sys.input_dim();
    let x = Vector::from_column_slice(slice(x, n, "x")?);
    let flat = slice(phi, cells * m, "phi")?;
    let samples: Vec<Vector> = flat.chunks(m).map(Vector::from_column_slice).collect();
    let phi = InputHistory::from_samples(step, &samples)?;
    if (phi.delay() - sys.delay()).abs() > 1e-9 * sys.delay().max(1.0) {
        return Err(fail(
            PfStatus::DimensionMismatch,
            format!("history spans {} but the delay is {}", phi.delay(), sys.delay()),
        ));
    }
    Ok((x, phi))
}

unsafe fn publish<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Loads a built-in scenario by name (`pendulum`, `cascade`, `scalar`, `linear`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_scenario_new(name: *const c_char, out: *mut *mut PfSystem) -> PfStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let scenario = scenarios::load(c_str(name, "name")?)?;
        publish(out, PfSystem { scenario });
        Ok(())
    })
}

/// Builds a linear scenario from TOML text in the configuration format.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_system_from_config(toml: *const c_char, out: *mut *mut PfSystem) -> PfStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let cfg = LinearConfig::parse(c_str(toml, "toml")?)?;
        let scenario = scenarios::from_linear_config(&cfg)?;
        publish(out, PfSystem { scenario });
        Ok(())
    })
}

/// # Safety
/// `sys` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pf_system_free(sys: *mut PfSystem) {
    if !sys.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(sys))));
    }
}

/// State dimension `n`, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_system_state_dim(sys: *const PfSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.scenario.system.state_dim())
}

/// Input dimension `m`, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_system_input_dim(sys: *const PfSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.scenario.system.input_dim())
}

/// Delay `h`, or NaN for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_system_delay(sys: *const PfSystem) -> f64 {
    sys.as_ref().map_or(f64::NAN, |s| s.scenario.system.delay())
}

/// Snaps a requested step to the delay grid; writes the history length and the step used.
///
/// # Safety
/// `sys` must be a live handle; `cells_out` and `step_out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pf_history_grid(sys: *const PfSystem, step: f64, cells_out: *mut usize, step_out: *mut f64) -> PfStatus {
    guard(|| {
        let sc = system(sys)?;
        non_null(cells_out, "cells_out")?;
        non_null(step_out, "step_out")?;
        let (cells, snapped) = snap_step(sc.system.delay(), step)?;
        *cells_out = cells;
        *step_out = snapped;
        Ok(())
    })
}

/// Writes the prediction `y = ξ(h)` (n values).
///
/// # Safety
/// `x` holds n values, `phi` holds `cells × m`, `y_out` has room for n.
#[no_mangle]
pub unsafe extern "C" fn pf_predict(
    sys: *const PfSystem,
    x: *const f64,
    phi: *const f64,
    cells: usize,
    step: f64,
    integrator_code: c_int,
    y_out: *mut f64,
) -> PfStatus {
    guard(|| {
        let sc = system(sys)?;
        let (x, phi) = phase_point(sc, x, phi, cells, step)?;
        let pred = predict_with(&sc.system, &x, &phi, integrator(integrator_code)?)?;
        write_out(y_out, pred.y.iter().copied(), "y_out")
    })
}

/// Writes the transformed input matrix `B(y, φ)` (n × m, row-major).
///
/// # Safety
/// As for [`pf_predict`]; `b_out` has room for `n × m` values.
#[no_mangle]
pub unsafe extern "C" fn pf_input_matrix(
    sys: *const PfSystem,
    x: *const f64,
    phi: *const f64,
    cells: usize,
    step: f64,
    integrator_code: c_int,
    b_out: *mut f64,
) -> PfStatus {
    guard(|| {
        let sc = system(sys)?;
        let (x, phi) = phase_point(sc, x, phi, cells, step)?;
        let pred = predict_with(&sc.system, &x, &phi, integrator(integrator_code)?)?;
        let b = compute_b(&sc.system, &pred)?.b;
        write_out(b_out, b.transpose().iter().copied(), "b_out")
    })
}

/// Writes the control `u(t)` (m values) of the scenario's feedback law.
///
/// # Safety
/// As for [`pf_predict`]; `u_out` has room for m values.
#[no_mangle]
pub unsafe extern "C" fn pf_control(
    sys: *const PfSystem,
    x: *const f64,
    phi: *const f64,
    cells: usize,
    step: f64,
    integrator_code: c_int,
    u_out: *mut f64,
) -> PfStatus {
    guard(|| {
        let sc = system(sys)?;
        let (x, phi) = phase_point(sc, x, phi, cells, step)?;
        let out = control_step(&sc.system, &sc.law, &x, &phi, integrator(integrator_code)?, false)?;
        write_out(u_out, out.u.iter().copied(), "u_out")
    })
}

/// Runs the closed loop from `x0` with constant initial input `u0`.
///
/// `record` is a comma list of `y,b,v,envelope,flags`, or null for none. When the run
/// overflows, the partial trace is still written to `out` and the status is `NonFinite`.
///
/// # Safety
/// `x0` holds n values, `u0` holds m, `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_simulate(
    sys: *const PfSystem,
    x0: *const f64,
    u0: *const f64,
    step: f64,
    duration: f64,
    integrator_code: c_int,
    record: *const c_char,
    out: *mut *mut PfTrace,
) -> PfStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let sc = system(sys)?;
        let record = if record.is_null() { RecordFlags::default() } else { RecordFlags::parse(c_str(record, "record")?)? };
        let cfg = SimConfig {
            scenario: sc.name.clone(),
            step,
            duration,
            x0: Vector::from_column_slice(slice(x0, sc.system.state_dim(), "x0")?),
            u0: InitialHistory::Constant(Vector::from_column_slice(slice(u0, sc.system.input_dim(), "u0")?)),
            integrator: integrator(integrator_code)?,
            record,
        };
        let lk = match (&sc.lyapunov, sc.lk_certificate()) {
            (Some(spec), Some(cert)) => Some(Certification { spec, cert }),
            _ => None,
        };
        let trace = simulate(&sc.system, &sc.law, &cfg, lk)?;
        let aborted = trace.aborted.clone();
        publish(out, PfTrace { trace });
        match aborted {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    })
}

/// # Safety
/// `trace` must come from [`pf_simulate`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pf_trace_free(trace: *mut PfTrace) {
    if !trace.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(trace))));
    }
}

/// Number of recorded rows, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_trace_len(trace: *const PfTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.records.len())
}

/// The step actually used, or NaN for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_trace_step(trace: *const PfTrace) -> f64 {
    trace.as_ref().map_or(f64::NAN, |t| t.trace.step)
}

/// Reads row `index`: time, state (n values) and input (m values). Null outputs are skipped.
///
/// # Safety
/// `trace` must be a live handle; non-null outputs must have room for their values.
#[no_mangle]
pub unsafe extern "C" fn pf_trace_row(trace: *const PfTrace, index: usize, t_out: *mut f64, x_out: *mut f64, u_out: *mut f64) -> PfStatus {
    guard(|| {
        let tr = trace_ref(trace)?;
        let row = tr
            .records
            .get(index)
            .ok_or_else(|| fail(PfStatus::InvalidArgument, format!("row {index} out of range ({} rows)", tr.records.len())))?;
        if !t_out.is_null() {
            *t_out = row.t;
        }
        if !x_out.is_null() {
            write_out(x_out, row.x.iter().copied(), "x_out")?;
        }
        if !u_out.is_null() {
            write_out(u_out, row.u.iter().copied(), "u_out")?;
        }
        Ok(())
    })
}

/// Writes the trace as CSV to `path`.
///
/// # Safety
/// `trace` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pf_trace_write_csv(trace: *const PfTrace, path: *const c_char) -> PfStatus {
    guard(|| {
        let tr = trace_ref(trace)?;
        let path = c_str(path, "path")?;
        let io = |e: std::io::Error| fail(PfStatus::Io, format!("{path}: {e}"));
        let file = File::create(path).map_err(io)?;
        tr.write_csv(BufWriter::new(file)).map_err(io)
    })
}

/// Fills `out` with the scenario's certificate constants.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_certify(sys: *const PfSystem, out: *mut PfCertificate) -> PfStatus {
    guard(|| {
        let sc = system(sys)?;
        non_null(out, "out")?;
        let report = &sc.certificate;
        let lk = report.lk.as_ref();
        let nan = f64::NAN;
        *out = PfCertificate {
            rho: report.predictor.rho,
            valid_radius: report.predictor.valid_radius,
            kappa_bound: report.kappa_bound.unwrap_or(nan),
            has_lk: lk.is_some() as c_int,
            gamma: lk.map_or(nan, |c| c.gamma),
            sigma: lk.map_or(nan, |c| c.sigma),
            m_v: lk.map_or(nan, |c| c.lower),
            upper_m_v: lk.map_or(nan, |c| c.upper),
            attraction_radius: lk.map_or(nan, |c| c.attraction_radius),
        };
        Ok(())
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn pf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}
