//! Command-line runner for path-dependent control problems.

mod config;
mod expr;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use pathhjb::bench::{criterion_name, run_criterion, CRITERIA};
use pathhjb::bsde::{solve_bsde, BsdeConfig};
use pathhjb::calculus::{FDConfig, FunctionalHandle};
use pathhjb::control::{dpp_residual, value_regression, value_tree, RegressionConfig, SolverConfig};
use pathhjb::problems::{make_problem, ProblemId};
use pathhjb::regression::RegressionBasis;
use pathhjb::sde::{simulate, ControlProcess, SimConfig, TrajectoryBatch};
use pathhjb::viscosity::{mu_limit_sweep, quadratic_penalty, sample_interior_anchor, Side, ViscosityConfig};
use pathhjb::{DiscretePath, HolderBallSpec};

use config::{LoadedProblem, ProblemSource, RunConfig};
use output::{csv_text, emit, fmt_f64, json_document};

#[derive(Parser)]
#[command(name = "pathhjb", version, about = "Path-dependent stochastic control: values, BSDEs and HJB checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward trajectories as CSV (or JSON lines with --format jsonl)
    Simulate(Opts),
    /// Y(0) of the problem's BSDE under a constant control
    Bsde(Opts),
    /// The value functional by the exact tree or regression Monte Carlo
    Value(Opts),
    /// Dynamic programming residual over a window of length --delta
    DppCheck(Opts),
    /// Hölder-ball viscosity sub- and supersolution tests of the closed form
    ViscCheck(Opts),
    /// Dupire derivatives of the value (or terminal) functional at --path
    Deriv(Opts),
    /// The acceptance suite, or benchmark rows for --problem, as CSV
    Bench(Opts),
    /// A builtin problem in the inline JSON form accepted by --problem
    Export(Opts),
}

#[derive(Args, Debug, Clone, Default)]
struct Opts {
    /// JSON run configuration; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin problem id (P1..P4 or full name) or inline problem JSON
    #[arg(long)]
    problem: Option<String>,
    /// tree or regression
    #[arg(long)]
    solver: Option<String>,
    /// Grid steps over [0, T]
    #[arg(long)]
    steps: Option<usize>,
    /// Monte Carlo trajectories
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, env = "PATHHJB_SEED")]
    seed: Option<u64>,
    /// Window length for dpp-check (a multiple of the grid step)
    #[arg(long)]
    delta: Option<f64>,
    /// Increasing list of Hölder-ball radii
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    m0: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    /// sub, super or both
    #[arg(long)]
    side: Option<String>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Ball samples per viscosity test
    #[arg(long)]
    samples: Option<usize>,
    /// Initial path node values, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    path: Option<Vec<f64>>,
    /// Constant control index for simulate and bsde
    #[arg(long)]
    control: Option<usize>,
    /// Constant added to the candidate in visc-check
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<f64>,
    /// Acceptance criteria to run in bench, comma separated
    #[arg(long, value_delimiter = ',')]
    criteria: Option<Vec<usize>>,
    /// csv or jsonl (simulate only)
    #[arg(long)]
    format: Option<String>,
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    workers: Option<usize>,
}

/// Flags merged over the config file.
struct Settings {
    opts: Opts,
    cfg: RunConfig,
}

impl Settings {
    fn new(opts: Opts) -> Result<Self> {
        let cfg = match &opts.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(Settings { opts, cfg })
    }

    fn problem(&self) -> Result<LoadedProblem> {
        let src = match (&self.opts.problem, &self.cfg.problem) {
            (Some(s), _) => ProblemSource::parse(s).context("--problem")?,
            (None, Some(v)) => ProblemSource::from_json(v)?,
            (None, None) => bail!("no problem given: pass --problem or set `problem` in the config"),
        };
        LoadedProblem::load(&src)
    }

    fn solver(&self) -> Result<String> {
        let s = self.opts.solver.clone().or(self.cfg.solver.clone()).unwrap_or_else(|| "tree".into());
        match s.as_str() {
            "tree" | "regression" => Ok(s),
            _ => bail!("solver must be `tree` or `regression`, got `{s}`"),
        }
    }

    fn steps(&self, default: usize) -> usize {
        self.opts.steps.or(self.cfg.steps).unwrap_or(default)
    }

    fn paths(&self, default: usize) -> usize {
        self.opts.paths.or(self.cfg.paths).unwrap_or(default)
    }

    fn seed(&self) -> u64 {
        self.opts.seed.or(self.cfg.seed).unwrap_or(0)
    }

    fn basis(&self) -> RegressionBasis {
        self.cfg.basis.clone().unwrap_or_default()
    }

    fn f64_or(&self, flag: Option<f64>, cfg: Option<f64>, default: f64) -> f64 {
        flag.or(cfg).unwrap_or(default)
    }

    fn path_values(&self) -> Option<Vec<f64>> {
        self.opts.path.clone().or(self.cfg.path.clone())
    }

    fn out(&self) -> Option<PathBuf> {
        self.opts.out.clone().or(self.cfg.out.clone())
    }

    fn workers(&self) -> Option<usize> {
        self.opts.workers.or(self.cfg.workers)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Ok(true) on success, Ok(false) when a check fails.
fn run(command: Command) -> Result<bool> {
    let (name, opts) = match command {
        Command::Simulate(o) => ("simulate", o),
        Command::Bsde(o) => ("bsde", o),
        Command::Value(o) => ("value", o),
        Command::DppCheck(o) => ("dpp-check", o),
        Command::ViscCheck(o) => ("visc-check", o),
        Command::Deriv(o) => ("deriv", o),
        Command::Bench(o) => ("bench", o),
        Command::Export(o) => ("export", o),
    };
    let s = Settings::new(opts)?;
    let pool = match s.workers() {
        Some(0) => bail!("--workers must be positive"),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?,
        None => rayon::ThreadPoolBuilder::new().build()?,
    };
    let (text, ok) = pool.install(|| dispatch(name, &s))?;
    emit(&text, s.out().as_deref())?;
    Ok(ok)
}

fn dispatch(name: &str, s: &Settings) -> Result<Output> {
    match name {
        "simulate" => cmd_simulate(s),
        "bsde" => cmd_bsde(s),
        "value" => cmd_value(s),
        "dpp-check" => cmd_dpp(s),
        "visc-check" => cmd_visc(s),
        "deriv" => cmd_deriv(s),
        "export" => cmd_export(s),
        _ => cmd_bench(s),
    }
}

type Output = (String, bool);

fn simulate_batch(s: &Settings, p: &LoadedProblem, default_paths: usize) -> Result<TrajectoryBatch> {
    let steps = s.steps(32);
    let initial = p.initial_path(steps, s.path_values().as_deref())?;
    let control = s.opts.control.or(s.cfg.control).unwrap_or(0);
    if control >= p.controls.len() {
        bail!("--control {control} is outside a set of {} controls", p.controls.len());
    }
    let sim = SimConfig::new(s.paths(default_paths), s.seed());
    Ok(simulate(&p.coeffs, &initial, &p.controls, &ControlProcess::Constant(control), &sim)?)
}

fn cmd_simulate(s: &Settings) -> Result<Output> {
    let p = s.problem()?;
    let batch = simulate_batch(s, &p, 100)?;
    let format = s.opts.format.clone().unwrap_or_else(|| "csv".into());
    let text = match format.as_str() {
        "jsonl" => {
            let mut buf = Vec::new();
            batch.write_jsonl(&mut buf)?;
            String::from_utf8(buf)?
        }
        "csv" => {
            let mut header: Vec<String> = vec!["path".into(), "step".into(), "time".into()];
            header.extend((0..batch.dim).map(|i| format!("x{i}")));
            header.extend((0..batch.noise_dim).map(|i| format!("dw{i}")));
            header.push("control".into());
            let mut rows = Vec::new();
            for (i, path) in batch.paths.iter().enumerate() {
                for k in batch.start_node..=batch.end_node() {
                    let mut row = vec![i.to_string(), k.to_string(), fmt_f64(path.time_of(k))];
                    row.extend(path.node(k).iter().map(|v| fmt_f64(*v)));
                    if k < batch.end_node() {
                        row.extend(batch.increment(i, k).iter().map(|v| fmt_f64(*v)));
                        row.push(batch.control(i, k).to_string());
                    } else {
                        row.extend((0..=batch.noise_dim).map(|_| String::new()));
                    }
                    rows.push(row);
                }
            }
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            csv_text(&header, &rows)?
        }
        other => bail!("--format must be `csv` or `jsonl`, got `{other}`"),
    };
    Ok((text, true))
}

fn cmd_bsde(s: &Settings) -> Result<Output> {
    let p = s.problem()?;
    let batch = simulate_batch(s, &p, 10_000)?;
    let cfg = BsdeConfig::new(s.basis());
    let sol = solve_bsde(&batch, &p.controls, &p.coeffs.driver_fn(), &p.coeffs.terminal_fn(), &cfg)?;
    let body = json!({
        "problem": p.name,
        "seed": s.seed(),
        "summary": sol.summary(),
        "y0": sol.y0,
        "std_error": sol.std_error,
        "max_condition": sol.max_condition,
    });
    Ok((json_document("bsde", &body)?, true))
}

#[derive(Serialize)]
struct ValueBody {
    problem: String,
    solver: String,
    steps: usize,
    value: f64,
    std_error: f64,
    n_paths: usize,
    seed: Option<u64>,
    analytic: Option<f64>,
    abs_error: Option<f64>,
}

fn compute_value(s: &Settings, p: &LoadedProblem, solver: &str, steps: usize) -> Result<ValueBody> {
    let initial = p.initial_path(steps, s.path_values().as_deref())?;
    let est = if solver == "tree" {
        value_tree(&p.coeffs, &initial, &p.controls, steps - initial.steps())?
    } else {
        let cfg = RegressionConfig { paths: s.paths(10_000), seed: s.seed(), basis: s.basis() };
        value_regression(&p.coeffs, &initial, &p.controls, &cfg)?
    };
    let analytic = match &p.analytic {
        Some(v) => Some(v.try_eval(&initial)?),
        None => None,
    };
    Ok(ValueBody {
        problem: p.name.clone(),
        solver: solver.into(),
        steps,
        value: est.value,
        std_error: est.std_error,
        n_paths: est.n_paths,
        seed: est.seed,
        analytic,
        abs_error: analytic.map(|a| (est.value - a).abs()),
    })
}

fn cmd_value(s: &Settings) -> Result<Output> {
    let p = s.problem()?;
    let solver = s.solver()?;
    let steps = s.steps(if solver == "tree" { 8 } else { 32 });
    let body = compute_value(s, &p, &solver, steps)?;
    Ok((json_document("value", &body)?, true))
}

fn cmd_dpp(s: &Settings) -> Result<Output> {
    let p = s.problem()?;
    let solver_name = s.solver()?;
    let steps = s.steps(if solver_name == "tree" { 8 } else { 32 });
    let delta = s.opts.delta.or(s.cfg.delta).context("dpp-check needs --delta")?;
    let initial = p.initial_path(steps, s.path_values().as_deref())?;
    let (solver, default_tol) = if solver_name == "tree" {
        (SolverConfig::Tree, 1e-12)
    } else {
        (SolverConfig::Regression(RegressionConfig { paths: s.paths(20_000), seed: s.seed(), basis: s.basis() }), 0.04)
    };
    let tol = s.f64_or(s.opts.tolerance, s.cfg.tolerance, default_tol);
    let report = dpp_residual(&p.coeffs, &initial, &p.controls, delta, &solver, tol)?;
    let body = json!({
        "problem": p.name,
        "solver": solver_name,
        "steps": steps,
        "delta": delta,
        "seed": s.seed(),
        "report": report,
        "pass": report.pass,
    });
    Ok((json_document("dpp-check", &body)?, report.pass))
}

fn cmd_visc(s: &Settings) -> Result<Output> {
    let p = s.problem()?;
    let v = p.analytic.clone().with_context(|| format!("{} has no closed-form value to test", p.name))?;
    if p.coeffs.dim_state() != 1 {
        bail!("visc-check supports scalar problems only");
    }
    let steps = s.steps(32);
    let step = p.horizon() / steps as f64;
    let mus = s.opts.mu.clone().or(s.cfg.mu.clone()).unwrap_or_else(|| vec![2.0, 4.0, 8.0]);
    if mus.is_empty() {
        bail!("--mu needs at least one radius");
    }
    let ball = HolderBallSpec::new(
        s.f64_or(s.opts.alpha, s.cfg.alpha, HolderBallSpec::DEFAULT_ALPHA),
        mus[0],
        s.f64_or(s.opts.m0, s.cfg.m0, 2.0),
        s.f64_or(s.opts.t0, s.cfg.t0, 0.0),
    )?;
    let side = s.opts.side.clone().or(s.cfg.side.clone()).unwrap_or_else(|| "both".into());
    let sides = if side == "both" { vec![Side::Sub, Side::Super] } else { vec![side.parse::<Side>()?] };
    let shift = s.opts.shift.or(s.cfg.shift).unwrap_or(0.0);
    let candidate = v.shifted(shift);
    let anchor = sample_interior_anchor(&ball, 1, step, p.horizon(), s.seed())?;
    let mut cfg = ViscosityConfig::new(s.opts.samples.or(s.cfg.samples).unwrap_or(500), s.seed(), step).with_hint(anchor.clone());
    cfg.tol = s.f64_or(s.opts.tolerance, s.cfg.tolerance, cfg.tol);
    let mut reports = Vec::new();
    let mut sweeps = Vec::new();
    for side in sides {
        let phi = match side {
            Side::Sub => candidate.plus(&quadratic_penalty(anchor.clone())),
            Side::Super => candidate.scaled(-1.0).plus(&quadratic_penalty(anchor.clone())),
        };
        let sweep = mu_limit_sweep(&candidate, &phi, side, &ball, &p.coeffs, &p.controls, &cfg, &mus)?;
        sweeps.push(json!({"side": side, "running": sweep.running, "spread": sweep.spread}));
        reports.extend(sweep.reports);
    }
    let pass = reports.iter().all(|r| r.passed());
    let body = json!({
        "problem": p.name,
        "shift": shift,
        "seed": s.seed(),
        "steps": steps,
        "reports": reports,
        "sweeps": sweeps,
        "pass": pass,
    });
    Ok((json_document("visc-check", &body)?, pass))
}

fn cmd_export(s: &Settings) -> Result<Output> {
    let id = match (&s.opts.problem, &s.cfg.problem) {
        (Some(p), _) => p.parse::<ProblemId>().context("--problem")?,
        (None, Some(serde_json::Value::String(p))) => p.parse::<ProblemId>().context("config field `problem`")?,
        _ => bail!("export needs a builtin --problem"),
    };
    let body = json!({ "problem": make_problem(id).schema() });
    Ok((json_document("export", &body)?, true))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn derivative_block(f: &FunctionalHandle, p: &DiscretePath, cfg: &FDConfig) -> Result<serde_json::Value> {
    Ok(json!({
        "value": f.try_eval(p)?,
        "dt": f.time_derivative(p, cfg)?,
        "dx": f.space_gradient(p, cfg)?,
        "dxx": matrix_rows(&f.space_hessian(p, cfg)?),
    }))
}

fn cmd_deriv(s: &Settings) -> Result<Output> {
    let p = s.problem()?;
    let steps = s.steps(1024);
    let path = p.initial_path(steps, s.path_values().as_deref())?;
    let cfg = FDConfig::default().with_horizon(p.horizon());
    let (functional, target) = match &p.analytic {
        Some(v) => (v.clone(), "value"),
        None => (FunctionalHandle::from_fn(p.coeffs.terminal_fn()), "terminal"),
    };
    let fd = derivative_block(&FunctionalHandle::from_fn(functional.eval_fn()), &path, &cfg)?;
    let analytic = match &p.analytic {
        Some(v) => Some(derivative_block(v, &path, &cfg)?),
        None => None,
    };
    let body = json!({
        "problem": p.name,
        "functional": target,
        "time": path.final_time(),
        "steps": steps,
        "finite_difference": fd,
        "analytic": analytic,
    });
    Ok((json_document("deriv", &body)?, true))
}

/// Criterion number of the determinism check, run in-process by `bench`.
const DETERMINISM: usize = CRITERIA + 1;

fn determinism_check(seed: u64) -> Result<(usize, Vec<String>)> {
    let base = Opts { problem: Some("P2".into()), seed: Some(seed), ..Opts::default() };
    let runs: Vec<(&str, Opts)> = vec![
        ("value", Opts { solver: Some("regression".into()), paths: Some(2000), steps: Some(16), ..base.clone() }),
        ("dpp-check", Opts { solver: Some("regression".into()), paths: Some(2000), steps: Some(8), delta: Some(0.25), ..base.clone() }),
        ("visc-check", Opts { samples: Some(100), ..base.clone() }),
        ("bsde", Opts { paths: Some(2000), steps: Some(16), control: Some(2), ..base.clone() }),
        ("simulate", Opts { paths: Some(20), steps: Some(8), ..base.clone() }),
    ];
    let mut failing = Vec::new();
    for (name, opts) in &runs {
        let s = Settings::new(opts.clone())?;
        let mut outputs = Vec::new();
        for workers in [1, 4, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
            outputs.push(pool.install(|| dispatch(name, &s))?);
        }
        if outputs.iter().any(|o| o != &outputs[0]) {
            failing.push(name.to_string());
        }
    }
    Ok((runs.len(), failing))
}

fn cmd_bench(s: &Settings) -> Result<Output> {
    if s.opts.problem.is_some() || s.cfg.problem.is_some() {
        return bench_problem(s);
    }
    let ids = s.opts.criteria.clone().or(s.cfg.criteria.clone()).unwrap_or_else(|| (1..=DETERMINISM).collect());
    let mut rows = Vec::new();
    let mut all = true;
    for id in ids {
        let (name, pass, checks, detail) = if id == DETERMINISM {
            let (checks, failing) = determinism_check(s.seed())?;
            ("CLI determinism", failing.is_empty(), checks, failing.join("; "))
        } else if (1..=CRITERIA).contains(&id) {
            let r = run_criterion(id, s.seed());
            let failing: Vec<String> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
            let detail = match r.error {
                Some(e) => format!("error: {e}"),
                None => failing.join("; "),
            };
            (criterion_name(id), r.pass, r.checks.len(), detail)
        } else {
            bail!("--criteria: no acceptance criterion {id} (valid: 1..={DETERMINISM})");
        };
        all &= pass;
        rows.push(vec![
            id.to_string(),
            name.into(),
            if pass { "pass" } else { "fail" }.into(),
            checks.to_string(),
            detail,
        ]);
    }
    Ok((csv_text(&["criterion", "name", "result", "checks", "failing"], &rows)?, all))
}

fn bench_problem(s: &Settings) -> Result<Output> {
    let p = s.problem()?;
    let solvers = match s.opts.solver.clone().or(s.cfg.solver.clone()) {
        Some(_) => vec![s.solver()?],
        None => vec!["tree".to_string(), "regression".to_string()],
    };
    let mut rows = Vec::new();
    for solver in solvers {
        let steps = s.steps(8);
        let b = compute_value(s, &p, &solver, steps)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        rows.push(vec![
            b.problem,
            b.solver,
            b.steps.to_string(),
            b.n_paths.to_string(),
            b.seed.map(|v| v.to_string()).unwrap_or_default(),
            fmt_f64(b.value),
            fmt_f64(b.std_error),
            opt(b.analytic),
            opt(b.abs_error),
        ]);
    }
    let header = ["problem", "solver", "steps", "paths", "seed", "value", "std_error", "analytic", "error"];
    Ok((csv_text(&header, &rows)?, true))
}
