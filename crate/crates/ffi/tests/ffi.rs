use std::ffi::{CStr, CString};
use std::ptr;

use predictor_feedback_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(pf_last_error_message()) }.to_string_lossy().into_owned()
}

fn load(name: &str) -> *mut PfSystem {
    let name = CString::new(name).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { pf_scenario_new(name.as_ptr(), &mut sys) }, PfStatus::Ok, "{}", last_error());
    assert!(!sys.is_null());
    sys
}

fn grid(sys: *const PfSystem, step: f64) -> (usize, f64) {
    let (mut cells, mut snapped) = (0usize, 0.0);
    assert_eq!(unsafe { pf_history_grid(sys, step, &mut cells, &mut snapped) }, PfStatus::Ok);
    (cells, snapped)
}

#[test]
fn dimensions_and_delay() {
    let sys = load("pendulum");
    unsafe {
        assert_eq!(pf_system_state_dim(sys), 2);
        assert_eq!(pf_system_input_dim(sys), 1);
        assert!((pf_system_delay(sys) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(pf_system_state_dim(ptr::null()), 0);
        assert!(pf_system_delay(ptr::null()).is_nan());
        pf_system_free(sys);
        pf_system_free(ptr::null_mut());
    }
    let (cells, step) = grid(load("cascade"), 0.01);
    assert_eq!(cells, 100);
    assert!((step - 0.01).abs() < 1e-15);
}

#[test]
fn cascade_prediction_matches_closed_form() {
    // with zero input history: ξ2 = x2 e^θ, ξ1 = x1 + x2²(e^{2θ} − 1)/2
    let sys = load("cascade");
    let (cells, step) = grid(sys, 1e-3);
    let phi = vec![0.0; cells];
    let x = [0.4, -0.3];
    let mut y = [0.0; 2];
    let status = unsafe { pf_predict(sys, x.as_ptr(), phi.as_ptr(), cells, step, PF_INTEGRATOR_RK4, y.as_mut_ptr()) };
    assert_eq!(status, PfStatus::Ok);
    let e = std::f64::consts::E;
    assert!((y[0] - (0.4 + 0.09 * (e * e - 1.0) / 2.0)).abs() < 1e-10, "{y:?}");
    assert!((y[1] + 0.3 * e).abs() < 1e-10, "{y:?}");
    unsafe { pf_system_free(sys) };
}

#[test]
fn pendulum_input_matrix_at_origin() {
    // ξ ≡ 0 so B = B1 + (sinh h, cosh h)
    let sys = load("pendulum");
    let (cells, step) = grid(sys, 1e-3);
    let phi = vec![0.0; cells];
    let x = [0.0, 0.0];
    let mut b = [0.0; 2];
    let status = unsafe { pf_input_matrix(sys, x.as_ptr(), phi.as_ptr(), cells, step, PF_INTEGRATOR_RK4, b.as_mut_ptr()) };
    assert_eq!(status, PfStatus::Ok);
    let h = std::f64::consts::FRAC_PI_4;
    assert!((b[0] - h.sinh()).abs() < 1e-9 && (b[1] - (1.0 + h.cosh())).abs() < 1e-9, "{b:?}");

    // the gradient law is −Bᵀy, and y = 0 here
    let mut u = [f64::NAN];
    assert_eq!(unsafe { pf_control(sys, x.as_ptr(), phi.as_ptr(), cells, step, PF_INTEGRATOR_EULER, u.as_mut_ptr()) }, PfStatus::Ok);
    assert_eq!(u[0], 0.0);
    unsafe { pf_system_free(sys) };
}

#[test]
fn simulate_and_read_back() {
    let sys = load("pendulum");
    let x0 = [std::f64::consts::FRAC_PI_2; 2];
    let u0 = [1.0];
    let record = CString::new("v,envelope").unwrap();
    let mut tr = ptr::null_mut();
    let status = unsafe { pf_simulate(sys, x0.as_ptr(), u0.as_ptr(), 0.01, 20.0, PF_INTEGRATOR_EULER, record.as_ptr(), &mut tr) };
    assert_eq!(status, PfStatus::Ok, "{}", last_error());
    let (_, step) = grid(sys, 0.01);
    unsafe {
        assert_eq!(pf_trace_len(tr), (20.0 / step).round() as usize + 1);
        assert_eq!(pf_trace_step(tr), step);
        let (mut t, mut x, mut u) = (0.0, [0.0; 2], [0.0]);
        assert_eq!(pf_trace_row(tr, 0, &mut t, x.as_mut_ptr(), u.as_mut_ptr()), PfStatus::Ok);
        assert_eq!((t, x), (0.0, x0));
        let last = pf_trace_len(tr) - 1;
        assert_eq!(pf_trace_row(tr, last, &mut t, x.as_mut_ptr(), ptr::null_mut()), PfStatus::Ok);
        assert!(x[0].hypot(x[1]) < 0.05);
        assert_eq!(pf_trace_row(tr, last + 1, &mut t, ptr::null_mut(), ptr::null_mut()), PfStatus::InvalidArgument);

        let path = std::env::temp_dir().join(format!("pf-ffi-{}.csv", std::process::id()));
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(pf_trace_write_csv(tr, cpath.as_ptr()), PfStatus::Ok);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some("t,x1,x2,u1,v,envelope"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), pf_trace_len(tr) + 1);
        std::fs::remove_file(path).ok();
        pf_trace_free(tr);
        pf_system_free(sys);
    }
}

#[test]
fn certificate_constants() {
    let sys = load("pendulum");
    let mut cert = std::mem::MaybeUninit::<PfCertificate>::uninit();
    assert_eq!(unsafe { pf_certify(sys, cert.as_mut_ptr()) }, PfStatus::Ok);
    let cert = unsafe { cert.assume_init() };
    let h = std::f64::consts::FRAC_PI_4;
    assert!((cert.rho - std::f64::consts::SQRT_2 * h.exp()).abs() < 1e-12);
    assert_eq!(cert.has_lk, 1);
    // σ = m_w0 / (2 M_v0) with M_v0 = 1, γ = m_w0 / (2 M_κ²)
    let m_w0 = 2.0 * cert.sigma;
    assert!((cert.gamma - m_w0 / (2.0 * cert.kappa_bound.powi(2))).abs() < 1e-15);
    assert!((cert.upper_m_v - (cert.gamma + cert.rho * cert.rho)).abs() < 1e-12);
    unsafe { pf_system_free(sys) };

    let sys = load("cascade");
    let mut cert = std::mem::MaybeUninit::<PfCertificate>::uninit();
    assert_eq!(unsafe { pf_certify(sys, cert.as_mut_ptr()) }, PfStatus::Ok);
    let cert = unsafe { cert.assume_init() };
    assert_eq!(cert.has_lk, 0);
    assert!(cert.sigma.is_nan() && cert.rho.is_finite());
    unsafe { pf_system_free(sys) };
}

#[test]
fn config_systems_and_errors() {
    let toml = CString::new("n = 1\nm = 1\nh = 0.5\nA = [1.0]\nB0 = [1.0]\nB1 = [0.0]\nK = [-3.0]\n").unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { pf_system_from_config(toml.as_ptr(), &mut sys) }, PfStatus::Ok, "{}", last_error());
    let (cells, step) = grid(sys, 0.005);
    let phi = vec![0.0; cells];
    let mut u = [0.0];
    assert_eq!(unsafe { pf_control(sys, [2.0].as_ptr(), phi.as_ptr(), cells, step, PF_INTEGRATOR_RK4, u.as_mut_ptr()) }, PfStatus::Ok);
    // y = e^{h}·2 with zero history; u = −3y
    assert!((u[0] + 6.0 * 0.5f64.exp()).abs() < 1e-9, "{u:?}");

    // history of the wrong length
    let status = unsafe { pf_control(sys, [2.0].as_ptr(), phi.as_ptr(), cells - 1, step, PF_INTEGRATOR_RK4, u.as_mut_ptr()) };
    assert_ne!(status, PfStatus::Ok);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { pf_control(sys, [2.0].as_ptr(), phi.as_ptr(), cells, step, 7, u.as_mut_ptr()) }, PfStatus::InvalidArgument);
    assert!(last_error().contains("integrator"));
    unsafe { pf_system_free(sys) };

    let bad = CString::new("n = 1\nm = 1\nh = 0.5\nA = [1.0, 2.0]\nB0 = [1.0]\nB1 = [0.0]\n").unwrap();
    let mut sys = ptr::null_mut();
    assert_ne!(unsafe { pf_system_from_config(bad.as_ptr(), &mut sys) }, PfStatus::Ok);
    assert!(sys.is_null());

    let name = CString::new("nowhere").unwrap();
    assert_eq!(unsafe { pf_scenario_new(name.as_ptr(), &mut sys) }, PfStatus::UnknownScenario);
    assert!(last_error().contains("nowhere"));
    assert_eq!(unsafe { pf_scenario_new(ptr::null(), &mut sys) }, PfStatus::NullPointer);
    assert_eq!(unsafe { pf_certify(ptr::null(), ptr::null_mut()) }, PfStatus::NullPointer);
}

#[test]
fn divergent_run_returns_partial_trace() {
    let toml = CString::new("n = 1\nm = 1\nh = 0.5\nA = [1.0]\nB0 = [1.0]\nB1 = [0.0]\nK = [1e150]\n").unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { pf_system_from_config(toml.as_ptr(), &mut sys) }, PfStatus::Ok);
    let mut tr = ptr::null_mut();
    let status = unsafe { pf_simulate(sys, [1.0].as_ptr(), [0.0].as_ptr(), 0.05, 5.0, PF_INTEGRATOR_EULER, ptr::null(), &mut tr) };
    assert_eq!(status, PfStatus::NonFinite);
    assert!(!tr.is_null());
    unsafe {
        assert!(pf_trace_len(tr) >= 1 && pf_trace_len(tr) < 101);
        pf_trace_free(tr);
        pf_system_free(sys);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/predictor_feedback.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["pf_scenario_new", "pf_simulate", "pf_certify", "pf_last_error_message", "PF_STATUS_NON_FINITE"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let src = std::env::temp_dir().join(format!("pf-header-{}.c", std::process::id()));
    std::fs::write(&src, format!("#include \"{header}\"\nint main(void) {{ PfSystem *s = 0; return (int)pf_scenario_new(\"pendulum\", &s); }}\n")).unwrap();
    let out = std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).output().expect("a C compiler");
    std::fs::remove_file(&src).ok();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
