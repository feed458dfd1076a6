//! `predfb` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::config::LinearConfig;
use crate::delay_system::{snap_step, InputHistory, Vector};
use crate::error::Error;
use crate::linear_ref::{linear_predict, linear_transformed_input};
use crate::predictor::{predict_with, Integrator};
use crate::reduction::reduce;
use crate::scenarios::{self, cascade, Scenario};
use crate::simulator::{decay_check, simulate_many, Certification, InitialHistory, RecordFlags, SimConfig, SimTrace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "predfb", version, about = "Predictor feedback for systems with distributed input delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the closed loop and write a CSV trace per initial state.
    Simulate(SimArgs),
    /// Print the prediction y = Y(x, u0).
    Predict(PointArgs),
    /// Print the prediction and the transformed input matrix B(y, u0).
    Reduce(PointArgs),
    /// Print the certificate constants of a scenario.
    Certify(ScenarioArgs),
    /// List the registered scenarios.
    ListScenarios,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Registered scenario name [default: pendulum].
    #[arg(long)]
    scenario: Option<String>,
    /// TOML file describing a linear plant; implies the `linear` scenario.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PointArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Time step; snapped so that it divides the delay.
    #[arg(long)]
    step: Option<f64>,
    /// Initial state, comma separated; `simulate` takes several separated by `;`.
    #[arg(long)]
    x0: Option<String>,
    /// Constant initial input history, comma separated per channel.
    #[arg(long)]
    u0: Option<String>,
    /// `euler` or `rk4`.
    #[arg(long)]
    integrator: Option<Integrator>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    point: PointArgs,
    /// Horizon T.
    #[arg(long)]
    duration: Option<f64>,
    /// Output CSV path; with several initial states `_1`, `_2`, ... is appended to the stem.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Optional columns: any of y, b, v, envelope, flags, all, none.
    #[arg(long, default_value = "none")]
    record: String,
}

/// Parses `"a,b,c"` into a vector of length `dim`.
fn parse_vector(text: &str, dim: usize, what: &str) -> anyhow::Result<Vector> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("{what}: `{s}` is not a number")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if values.len() != dim {
        bail!("{what}: expected {dim} values, got {}", values.len());
    }
    if !values.iter().all(|v| v.is_finite()) {
        bail!("{what}: values must be finite");
    }
    Ok(Vector::from_vec(values))
}

fn load_scenario(args: &ScenarioArgs) -> anyhow::Result<Scenario> {
    match (&args.config, args.scenario.as_deref()) {
        (Some(path), None | Some("linear")) => Ok(scenarios::from_linear_config(&LinearConfig::load(path)?)?),
        (Some(_), Some(other)) => bail!("--config describes a linear plant; it cannot be combined with --scenario {other}"),
        (None, name) => Ok(scenarios::load(name.unwrap_or("pendulum"))?),
    }
}

struct Point {
    x: Vector,
    phi: InputHistory,
    integrator: Integrator,
}

fn resolve_point(s: &Scenario, args: &PointArgs) -> anyhow::Result<Point> {
    let sys = &s.system;
    let x = match &args.x0 {
        Some(text) => parse_vector(text, sys.state_dim(), "--x0")?,
        None => s.defaults.x0.clone(),
    };
    let u0 = match &args.u0 {
        Some(text) => parse_vector(text, sys.input_dim(), "--u0")?,
        None => s.defaults.u0.clone(),
    };
    let (_, step) = snap_step(sys.delay(), args.step.unwrap_or(s.defaults.step))?;
    Ok(Point {
        x,
        phi: InputHistory::constant(sys.delay(), step, &u0)?,
        integrator: args.integrator.unwrap_or(s.defaults.integrator),
    })
}

fn fmt_vec(v: &Vector) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

fn cmd_list(out: &mut dyn Write) -> anyhow::Result<()> {
    for name in scenarios::NAMES {
        let s = scenarios::load(name)?;
        writeln!(out, "{name}\t{}\t{}", s.kind, s.summary)?;
    }
    Ok(())
}

fn cmd_predict(args: &PointArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let s = load_scenario(&args.scenario)?;
    let p = resolve_point(&s, args)?;
    let pred = predict_with(&s.system, &p.x, &p.phi, p.integrator)?;
    writeln!(out, "step = {:?}", p.phi.step())?;
    writeln!(out, "y = {}", fmt_vec(&pred.y))?;
    if pred.left_ball {
        writeln!(out, "warning: prediction left the validity ball")?;
    }
    if s.name == "cascade" {
        let exact = cascade::ex2_explicit_predictor(&p.x, &p.phi, s.system.delay());
        writeln!(out, "explicit = {}", fmt_vec(&exact))?;
        writeln!(out, "difference = {:e}", (&pred.y - exact).norm())?;
    }
    if let Some(lin) = &s.linear {
        let exact = linear_predict(lin, &p.x, &p.phi)?;
        writeln!(out, "linear = {}", fmt_vec(&exact))?;
        writeln!(out, "difference = {:e}", (&pred.y - exact).norm())?;
    }
    Ok(())
}

fn cmd_reduce(args: &PointArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let s = load_scenario(&args.scenario)?;
    let p = resolve_point(&s, args)?;
    let (pred, red) = reduce(&s.system, &p.x, &p.phi, p.integrator)?;
    writeln!(out, "step = {:?}", p.phi.step())?;
    writeln!(out, "y = {}", fmt_vec(&pred.y))?;
    for (i, row) in red.b.row_iter().enumerate() {
        let items: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "B[{i}] = [{}]", items.join(", "))?;
    }
    if let Some(lin) = &s.linear {
        writeln!(out, "difference to e^(Ah)B0 + Q(0) = {:e}", (&red.b - linear_transformed_input(lin)).norm())?;
    }
    Ok(())
}

fn certificate_text(s: &Scenario) -> String {
    let c = &s.certificate;
    let mut t = String::new();
    let _ = writeln!(t, "scenario = {}", s.name);
    let _ = writeln!(t, "delay = {:?}", s.system.delay());
    let _ = writeln!(t, "rho = {:?} ({})", c.predictor.rho, c.predictor.source);
    let _ = writeln!(t, "valid_radius = {:?}", c.predictor.valid_radius);
    if let Some((b, source)) = c.input_matrix_bound {
        let _ = writeln!(t, "sup_B = {b:?} ({source})");
    }
    if let Some(k) = c.kappa_bound {
        let _ = writeln!(t, "M_kappa = {k:?}");
    }
    if let (Some(spec), Some(source)) = (&s.lyapunov, c.lower_w0_source) {
        let _ = writeln!(t, "m_v0 = {:?}", spec.lower_v0);
        let _ = writeln!(t, "M_v0 = {:?}", spec.upper_v0);
        let _ = writeln!(t, "m_w0 = {:?} ({source})", spec.lower_w0);
    }
    if let Some(lk) = &c.lk {
        let _ = writeln!(t, "gamma = {:?}", lk.gamma);
        let _ = writeln!(t, "sigma = {:?}", lk.sigma);
        let _ = writeln!(t, "m_v = {:?}", lk.lower);
        let _ = writeln!(t, "M_v = {:?}", lk.upper);
        let _ = writeln!(t, "attraction_radius = {:?}", lk.attraction_radius);
    }
    if let Some(note) = c.note {
        let _ = writeln!(t, "note: {note}");
    }
    t
}

fn cmd_certify(args: &ScenarioArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let s = load_scenario(args)?;
    out.write_all(certificate_text(&s).as_bytes())?;
    Ok(())
}

/// `out.csv` → `out_2.csv` for run 2 of several.
fn numbered_path(base: &Path, index: usize, total: usize) -> PathBuf {
    if total == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}_{}.{}", index + 1, ext.to_string_lossy()),
        None => format!("{stem}_{}", index + 1),
    };
    base.with_file_name(name)
}

fn summary_line(s: &Scenario, trace: &SimTrace) -> String {
    let verdict = match s.lk_certificate() {
        Some(cert) => {
            if decay_check(trace, cert).passed {
                "PASS"
            } else {
                "FAIL"
            }
        }
        None => "n/a",
    };
    let mut line = format!(
        "# summary: scenario={} step={:?} rows={} final_norm={:?} decay={verdict}",
        s.name,
        trace.step,
        trace.records.len(),
        trace.final_norm()
    );
    if let Some(cert) = s.lk_certificate() {
        let _ = write!(line, " sigma={:?} m_v={:?} M_v={:?}", cert.sigma, cert.lower, cert.upper);
    }
    let _ = write!(
        line,
        " aborted={}",
        trace.aborted.as_ref().map_or("none".to_string(), |e| e.to_string().replace(' ', "_"))
    );
    line
}

/// Returns whether any run aborted numerically.
fn cmd_simulate(args: &SimArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let s = load_scenario(&args.point.scenario)?;
    let sys = &s.system;
    let record = RecordFlags::parse(&args.record)?;
    let base = s.sim_config();
    let u0 = match &args.point.u0 {
        Some(text) => parse_vector(text, sys.input_dim(), "--u0")?,
        None => s.defaults.u0.clone(),
    };
    let starts: Vec<Vector> = match &args.point.x0 {
        Some(text) => text.split(';').map(|part| parse_vector(part, sys.state_dim(), "--x0")).collect::<anyhow::Result<_>>()?,
        None => vec![s.defaults.x0.clone()],
    };
    let cfgs: Vec<SimConfig> = starts
        .into_iter()
        .map(|x0| SimConfig {
            step: args.point.step.unwrap_or(base.step),
            duration: args.duration.unwrap_or(base.duration),
            integrator: args.point.integrator.unwrap_or(base.integrator),
            x0,
            u0: InitialHistory::Constant(u0.clone()),
            record,
            ..base.clone()
        })
        .collect();
    for cfg in &cfgs {
        cfg.resolve(sys.delay())?;
    }
    if cfgs.len() > 1 && args.output.is_none() {
        bail!("several initial states need --output");
    }
    let lk = match (&s.lyapunov, s.lk_certificate()) {
        (Some(spec), Some(cert)) => Some(Certification { spec, cert }),
        _ => None,
    };
    let traces = simulate_many(sys, &s.law, &cfgs, lk);
    let mut aborted = false;
    for (i, trace) in traces.into_iter().enumerate() {
        let trace = trace?;
        let summary = summary_line(&s, &trace);
        aborted |= trace.aborted.is_some();
        match &args.output {
            Some(base) => {
                let path = numbered_path(base, i, cfgs.len());
                let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
                let mut w = BufWriter::new(file);
                trace.write_csv(&mut w)?;
                writeln!(w, "{summary}")?;
                w.flush()?;
                writeln!(out, "{}: {}", path.display(), summary.trim_start_matches("# summary: "))?;
            }
            None => {
                trace.write_csv(&mut *out)?;
                writeln!(out, "{summary}")?;
            }
        }
    }
    if args.output.is_some() {
        if let Some(cert) = s.lk_certificate() {
            writeln!(out, "certificate: gamma={:?} sigma={:?} m_v={:?} M_v={:?}", cert.gamma, cert.sigma, cert.lower, cert.upper)?;
        }
    }
    Ok(aborted)
}

fn is_numerical(err: &anyhow::Error) -> bool {
    matches!(err.downcast_ref::<Error>(), Some(Error::NonFinite(_) | Error::DivisionByZero(_)))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out).map(|aborted| if aborted { EXIT_NUMERICAL } else { EXIT_OK }),
        Command::Predict(a) => cmd_predict(a, out).map(|_| EXIT_OK),
        Command::Reduce(a) => cmd_reduce(a, out).map(|_| EXIT_OK),
        Command::Certify(a) => cmd_certify(a, out).map(|_| EXIT_OK),
        Command::ListScenarios => cmd_list(out).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            if is_numerical(&e) {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}
