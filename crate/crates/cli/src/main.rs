//! `oscdamp` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 numeric failure (including a
//! failed `check`), 3 invalid configuration.

mod output;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use oscdamp::check::run_checks;
use oscdamp::config::RunConfig;
use oscdamp::dynamics::{compare_optimal, converge_in_n, lipschitz_probe, write_csv};
use oscdamp::report::{Report, Status};
use oscdamp::{
    control_exact, AmplitudeVector, Backend, Error, GaugeSolver, PhaseState, Quadrature,
    Simulator,
};

const AFTER_HELP: &str = "\
Defaults (overridable by --config and then by flags):
  frequencies [1.0]; smoothing n = 1000, delta = 0.01; dt_base = 1e-3
  (step min(dt_base, 0.1/n)), horizon = 10; solver tol = 1e-8,
  max_iter = 500, multistart = 8; quadrature torus-grid for N <= 3 with
  4096/512/128 points per axis, qmc above; seed 20240601.

Exit codes: 0 ok, 1 usage error, 2 numeric failure or failed check,
3 invalid configuration.";

#[derive(Parser, Debug)]
#[command(name = "oscdamp", version, about = "Dry-friction damping of N linear oscillators", after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config file; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Oscillator frequencies, comma separated [default: 1].
    #[arg(long, alias = "frequencies", global = true, value_delimiter = ',', allow_negative_numbers = true)]
    omega: Option<Vec<f64>>,
    /// Smoothing scale n of s_n(h) = h / sqrt(h^2 + 1/n^2) [default: 1000].
    #[arg(long, global = true, allow_negative_numbers = true)]
    n: Option<f64>,
    /// Radius of the frozen zone {rho <= delta} [default: 0.01].
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Base time step [default: 0.001].
    #[arg(long, global = true, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Simulation horizon [default: 10].
    #[arg(long, global = true, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Quadrature backend: torus-grid, qmc or bessel.
    #[arg(long, global = true)]
    backend: Option<Backend>,
    /// Torus-grid points per axis.
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Random seed [default: 20240601].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (written atomically); stdout when absent.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Add wall-clock timings to JSON reports (makes them non-reproducible).
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the torus support function h(z), its gradient and an error estimate.
    Support {
        /// Amplitudes z, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        z: Vec<f64>,
    },
    /// Gauge rho(x), normal p = grad rho and the exact control at x.
    Gauge {
        /// Phase state x_1,y_1,...,x_N,y_N.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
    },
    /// Closed-loop trajectory as CSV.
    Simulate {
        /// Initial state x_1,y_1,...,x_N,y_N (or `initial_state` in the config).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
    },
    /// Convergence as n grows and a Lipschitz probe per n, as a JSON report.
    Converge {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
        /// Ladder of smoothing scales [default: 125,250,500,1000].
        #[arg(long, value_delimiter = ',')]
        n_values: Option<Vec<f64>>,
    },
    /// Time-optimal baseline against the dry-friction time, as a JSON report.
    CompareOptimal {
        /// Initial states as `x:y` pairs, comma separated [default: 0:10,0:100].
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        states: Option<Vec<String>>,
    },
    /// Run the invariant suite; nonzero exit on any violation.
    Check,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numeric() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn invalid(message: String) -> Failure {
    Failure { code: 3, message }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("writing output: {e}"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| invalid(format!("reading {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(w) = &common.omega {
        cfg.frequencies = w.clone();
    }
    if let Some(n) = common.n {
        cfg.smoothing.n = n;
    }
    if let Some(d) = common.delta {
        cfg.smoothing.delta = d;
    }
    if let Some(dt) = common.dt {
        cfg.sim.dt_base = dt;
    }
    if let Some(h) = common.horizon {
        cfg.sim.horizon = h;
    }
    if let Some(b) = common.backend {
        cfg.quadrature.backend = Some(b);
    }
    if let Some(m) = common.points {
        cfg.quadrature.points_per_dim = Some(m);
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output = Some(o.display().to_string());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Support { z } => {
            // The amplitude count, not the configured system, fixes N here.
            cfg.frequencies = (1..=z.len()).map(|i| i as f64).collect();
        }
        Command::Simulate { x0: Some(x0) } | Command::Converge { x0: Some(x0), .. } => {
            cfg.initial_state = Some(x0.clone());
        }
        _ => {}
    }
    if let Command::Converge {
        n_values: Some(v), ..
    } = &cli.command
    {
        cfg.converge.n_values = v.clone();
    }
    if let Command::CompareOptimal { states: Some(s) } = &cli.command {
        cfg.compare.initial_states = s.iter().map(|p| parse_pair(p)).collect::<Result<_, _>>()?;
    }
    let resolved = cfg.resolved()?;
    let out = resolved.output.as_ref().map(PathBuf::from);
    let timings = cli.common.timings;
    match cli.command {
        Command::Support { z } => cmd_support(&resolved, z),
        Command::Gauge { x } => cmd_gauge(&resolved, x),
        Command::Simulate { .. } => cmd_simulate(&resolved, out),
        Command::Converge { .. } => cmd_converge(&resolved, out, timings),
        Command::CompareOptimal { .. } => cmd_compare(&resolved, out, timings),
        Command::Check => cmd_check(&cfg, &resolved, out, timings),
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], Failure> {
    let bad = || invalid(format!("initial state {s:?} is not of the form x:y"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok([
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ])
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_support(cfg: &RunConfig, z: Vec<f64>) -> Result<(), Failure> {
    let mut text = String::new();
    let z = AmplitudeVector::new(z)?;
    let quad = Quadrature::new(&cfg.quadrature, z.len())?;
    let est = quad.estimate(&z, !z.is_zero())?;
    writeln!(text, "value: {:.16e}", est.value).unwrap();
    match &est.gradient {
        Some(g) => writeln!(text, "gradient: {}", fmt_vec(g)),
        None => writeln!(text, "gradient: undefined at z = 0"),
    }
    .unwrap();
    writeln!(text, "backend: {}", est.backend.name()).unwrap();
    writeln!(text, "nodes: {}", est.nodes).unwrap();
    writeln!(text, "error_estimate: {:.3e}", est.error_estimate).unwrap();
    output::emit(None, text.as_bytes()).map_err(io_failure)
}

fn cmd_gauge(cfg: &RunConfig, x: Vec<f64>) -> Result<(), Failure> {
    let mut text = String::new();
    let sys = cfg.system()?;
    let x = PhaseState::new(x)?;
    sys_len_check(&sys, x.as_slice())?;
    let quad = Quadrature::new(&cfg.quadrature, sys.len())?;
    let solver = GaugeSolver::new(&sys, &quad, cfg.solver.clone());
    let sol = solver.solve(&x)?;
    let control = control_exact(&solver, &x)?;
    writeln!(text, "rho: {:.16e}", sol.rho).unwrap();
    writeln!(text, "p: {}", fmt_vec(sol.p.as_slice())).unwrap();
    writeln!(text, "h: {:.16e}", control.h).unwrap();
    if control.multivalued {
        let (lo, hi) = control.interval();
        writeln!(text, "u: [{lo}, {hi}] (switching surface)").unwrap();
    } else {
        writeln!(text, "u: {}", control.u).unwrap();
    }
    writeln!(text, "residual: {:.3e}", sol.residual).unwrap();
    writeln!(text, "iterations: {}", sol.iterations).unwrap();
    output::emit(None, text.as_bytes()).map_err(io_failure)
}

fn sys_len_check(sys: &oscdamp::OscillatorSystem, x: &[f64]) -> Result<(), Failure> {
    if x.len() != sys.phase_dim() {
        return Err(invalid(format!(
            "state has {} entries but {} oscillator(s) need {}",
            x.len(),
            sys.len(),
            sys.phase_dim()
        )));
    }
    Ok(())
}

fn initial_state(cfg: &RunConfig) -> Result<PhaseState, Failure> {
    let x0 = cfg
        .initial_state
        .clone()
        .ok_or_else(|| invalid("no initial state: pass --x0 or set initial_state".into()))?;
    Ok(PhaseState::new(x0)?)
}

fn config_json(cfg: &RunConfig) -> String {
    serde_json::to_string(&cfg.to_json_value()).expect("config serializes")
}

fn cmd_simulate(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), Failure> {
    let sys = cfg.system()?;
    let x0 = initial_state(cfg)?;
    let sim = Simulator::new(&sys, &cfg.sim_config())?;
    let (traj, failure) = match sim.run(&x0) {
        Ok(t) => (t, None),
        Err(Error::Simulation {
            time,
            reason,
            partial,
        }) => {
            let marker = json!({"status": "failed", "time": time, "reason": reason});
            (*partial, Some((marker, format!("simulation failed at t = {time}: {reason}"))))
        }
        Err(e) => return Err(e.into()),
    };
    let mut buf = Vec::new();
    write_csv(&traj, sys.len(), &config_json(cfg), &mut buf).map_err(io_failure)?;
    if let Some((marker, _)) = &failure {
        // Trailing marker: the rows above are a partial trajectory.
        use std::io::Write;
        writeln!(buf, "# status: {marker}").map_err(io_failure)?;
    }
    output::emit(out.as_deref(), &buf).map_err(io_failure)?;
    if out.is_some() {
        eprintln!(
            "{} rows, t_end = {}, rho {:.6} -> {:.6}{}",
            traj.len(),
            traj.end_time(),
            traj.rho_values.first().copied().unwrap_or(f64::NAN),
            traj.rho_values.last().copied().unwrap_or(f64::NAN),
            if traj.frozen_from.is_some() { ", frozen" } else { "" }
        );
    }
    match failure {
        Some((_, message)) => Err(Failure { code: 2, message }),
        None => Ok(()),
    }
}

/// Writes `report`, then maps its status to the command result.
fn finish_report(
    report: Report,
    out: Option<PathBuf>,
    started: Instant,
    timings: bool,
    error: Option<Failure>,
) -> Result<(), Failure> {
    let mut report = report;
    if timings {
        report.timings = Some([("total_s".to_string(), started.elapsed().as_secs_f64())].into());
    }
    output::emit(out.as_deref(), report.to_json().as_bytes()).map_err(io_failure)?;
    error.map_or(Ok(()), Err)
}

fn failed_report(cfg: &RunConfig, e: Error) -> (Report, Failure) {
    let report = Report::new(
        cfg.to_json_value(),
        json!({"error": e.to_string()}),
        Status::Failed,
    );
    (report, e.into())
}

fn cmd_converge(cfg: &RunConfig, out: Option<PathBuf>, timings: bool) -> Result<(), Failure> {
    let started = Instant::now();
    let sys = cfg.system()?;
    let x0 = initial_state(cfg)?;
    let sim = cfg.sim_config();
    let result = (|| -> Result<Report, Error> {
        let conv = converge_in_n(&sys, &x0, &sim, &cfg.converge.n_values)?;
        let mut lips = Vec::new();
        for &n in &cfg.converge.n_values {
            lips.push(lipschitz_probe(&sys, &x0, cfg.converge.perturbation, &sim.with_n(n))?);
        }
        let lo = lips.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = lips.iter().cloned().fold(0.0, f64::max);
        eprintln!("distances: {}", fmt_vec(&conv.distances));
        eprintln!("lipschitz: {}", fmt_vec(&lips));
        Ok(Report::new(
            cfg.to_json_value(),
            json!({"convergence": conv, "lipschitz": lips}),
            Status::Ok,
        )
        .metric("strictly_decreasing", f64::from(u8::from(conv.strictly_decreasing())))
        .metric("lipschitz_spread", hi / lo))
    })();
    match result {
        Ok(r) => finish_report(r, out, started, timings, None),
        Err(e) => {
            let (r, f) = failed_report(cfg, e);
            finish_report(r, out, started, timings, Some(f))
        }
    }
}

fn cmd_compare(cfg: &RunConfig, out: Option<PathBuf>, timings: bool) -> Result<(), Failure> {
    let started = Instant::now();
    match compare_optimal(&cfg.compare, &cfg.sim_config()) {
        Ok(report) => {
            for c in &report.cases {
                eprintln!(
                    "x0 = ({}, {}): T* = {:.6}, {} arc(s), T_dry = {}, ratio = {}",
                    c.x0[0],
                    c.x0[1],
                    c.t_star,
                    c.arcs,
                    c.t_dry.map_or("none".into(), |t| format!("{t:.4}")),
                    c.ratio.map_or("none".into(), |r| format!("{r:.4}"))
                );
            }
            let all_reached = report.cases.iter().all(|c| c.t_dry.is_some());
            let worst = report
                .cases
                .iter()
                .map(|c| c.terminal_error.max(c.replay_error))
                .fold(0.0, f64::max);
            let r = Report::new(
                cfg.to_json_value(),
                serde_json::to_value(&report).expect("report serializes"),
                if all_reached { Status::Ok } else { Status::Failed },
            )
            .metric("max_terminal_error", worst);
            let err = (!all_reached).then(|| Failure {
                code: 2,
                message: "dry-friction run did not reach stop_rho within max_time".into(),
            });
            finish_report(r, out, started, timings, err)
        }
        Err(e) => {
            let (r, f) = failed_report(cfg, e);
            finish_report(r, out, started, timings, Some(f))
        }
    }
}

fn cmd_check(
    raw: &RunConfig,
    resolved: &RunConfig,
    out: Option<PathBuf>,
    timings: bool,
) -> Result<(), Failure> {
    let started = Instant::now();
    match run_checks(raw) {
        Ok(report) => {
            output::emit(None, report.table().as_bytes()).map_err(io_failure)?;
            let passed = report.all_passed();
            let failed = report.entries.iter().filter(|e| !e.passed).count();
            let r = Report::new(
                resolved.to_json_value(),
                serde_json::to_value(&report).expect("report serializes"),
                if passed { Status::Ok } else { Status::Failed },
            )
            .metric("checks", report.entries.len() as f64)
            .metric("failed", failed as f64);
            let err = (!passed).then(|| Failure {
                code: 2,
                message: format!("{failed} invariant(s) violated"),
            });
            // Without --out the table is the stdout output.
            match out {
                Some(p) => finish_report(r, Some(p), started, timings, err),
                None => err.map_or(Ok(()), Err),
            }
        }
        Err(e) => {
            let (r, f) = failed_report(resolved, e);
            match out {
                Some(p) => finish_report(r, Some(p), started, timings, Some(f)),
                None => Err(f),
            }
        }
    }
}
