//! `cdde-bound check|bound|simulate|verify <file> [flags]`
//!
//! Exit status: 0 when everything passes, 1 when a hypothesis or the
//! verification fails, 2 on input errors.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cdde_bound::certificate::{compute_certificate_with, BoundCertificate, CertificateOptions};
use cdde_bound::linalg::DenseVector;
use cdde_bound::model::{validate_structure, Finding};
use cdde_bound::problem::ProblemFile;
use cdde_bound::simulator::{
    format_sig9, simulate, verify_domination, write_staircase_csv, write_trajectory_csv,
    DominationReport, SimulationError, SimulationScenario,
};
use cdde_bound::stability::check_joint_condition_with;

const THREADS_VAR: &str = "CDDE_BOUND_THREADS";
const PRESET_A: [f64; 3] = [0.0, 0.5, 1.0];
const PRESET_B: [f64; 2] = [0.0, 1.0];

#[derive(Parser)]
#[command(
    name = "cdde-bound",
    version,
    about = "Componentwise state bounds for positive coupled differential-difference equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural and stability hypotheses.
    Check { file: PathBuf },
    /// Compute the bound certificate and its staircase table.
    Bound {
        file: PathBuf,
        #[command(flatten)]
        bound: BoundArgs,
        /// Certificate JSON path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Staircase CSV path; defaults to the `--out` path with a `.csv`
        /// extension.
        #[arg(long)]
        staircase: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Simulate one scenario and write its trajectory.
    Simulate {
        file: PathBuf,
        #[command(flatten)]
        preset: PresetArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Trajectory CSV path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify, simulate, and check that the bound dominates the trajectories.
    Verify {
        file: PathBuf,
        #[command(flatten)]
        bound: BoundArgs,
        #[command(flatten)]
        preset: PresetArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Compute the certificate from this problem file's system instead.
        #[arg(long, value_name = "FILE")]
        certify_with: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BoundArgs {
    /// Decay-rate grid spacing.
    #[arg(long)]
    alpha_step: Option<f64>,
    /// Right-hand side of the block witness solve, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    xi: Option<Vec<f64>>,
}

#[derive(Args)]
struct PresetArgs {
    /// Disturbance level for `omega` in the preset scenario.
    #[arg(long)]
    a: Option<f64>,
    /// Disturbance level for `d` in the preset scenario.
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args)]
struct GridArgs {
    /// Sampling step.
    #[arg(long)]
    step: Option<f64>,
    /// Final time.
    #[arg(long)]
    t_end: Option<f64>,
}

/// Errors that mean the input itself is unusable (exit status 2).
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { file } => cmd_check(&file),
        Command::Bound {
            file,
            bound,
            out,
            staircase,
            grid,
        } => cmd_bound(&file, &bound, out.as_deref(), staircase.as_deref(), &grid),
        Command::Simulate {
            file,
            preset,
            grid,
            out,
        } => cmd_simulate(&file, &preset, &grid, out.as_deref()),
        Command::Verify {
            file,
            bound,
            preset,
            grid,
            certify_with,
        } => cmd_verify(&file, &bound, &preset, &grid, certify_with.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<InputError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// A parsed problem together with its violated sign hypotheses.
struct Loaded {
    problem: ProblemFile,
    sign_findings: Vec<Finding>,
}

fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))?;
    let mut problem: ProblemFile = serde_json::from_str(&text)
        .map_err(|e| input_error(format!("malformed problem file {}: {e}", path.display())))?;
    problem.system.clamp_roundoff();
    let (shape, sign): (Vec<_>, Vec<_>) = validate_structure(&problem.system)
        .findings
        .into_iter()
        .partition(Finding::is_shape);
    if !shape.is_empty() {
        let lines: Vec<String> = shape.iter().map(ToString::to_string).collect();
        return Err(input_error(format!(
            "invalid system in {}:\n{}",
            path.display(),
            lines.join("\n")
        )));
    }
    Ok(Loaded {
        problem,
        sign_findings: sign,
    })
}

/// Loads a problem whose sign hypotheses must hold; `None` after reporting
/// the violations.
fn load_valid(path: &Path) -> Result<Option<ProblemFile>> {
    let loaded = load(path)?;
    if loaded.sign_findings.is_empty() {
        return Ok(Some(loaded.problem));
    }
    for finding in &loaded.sign_findings {
        eprintln!("hypothesis fails: {finding}");
    }
    Ok(None)
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| format_sig9(x)).collect();
    format!("[{}]", items.join(", "))
}

fn cmd_check(path: &Path) -> Result<bool> {
    let Loaded {
        problem,
        sign_findings,
    } = load(path)?;
    let spec = &problem.system;
    let xi = resolve_xi(&problem, None)?;
    let report = check_joint_condition_with(spec, &xi);
    let nonneg_vectors = !sign_findings.iter().any(|f| {
        matches!(
            f,
            Finding::VectorNotNonnegative { .. }
                | Finding::NegativeDelayBound
                | Finding::NonFiniteDelayBound
        )
    });

    let mut out = io::stdout().lock();
    writeln!(out, "A Metzler: {}", pass_fail(report.a_is_metzler))?;
    writeln!(
        out,
        "B, C, D nonnegative: {}",
        pass_fail(report.bcd_nonnegative)
    )?;
    writeln!(out, "bounds nonnegative: {}", pass_fail(nonneg_vectors))?;
    writeln!(out, "D Schur: {}", pass_fail(report.d_is_schur))?;
    writeln!(
        out,
        "joint condition s(A + B(I-D)^-1 C) < 0: {}",
        pass_fail(report.joint_condition_holds)
    )?;
    if let (Some(p), Some(q)) = (&report.witness_p, &report.witness_q) {
        writeln!(out, "witness p = {}", fmt_vec(p.as_slice()))?;
        writeln!(out, "witness q = {}", fmt_vec(q.as_slice()))?;
    }
    for finding in &sign_findings {
        writeln!(out, "  {finding}")?;
    }
    for line in &report.diagnostics {
        writeln!(out, "  {line}")?;
    }
    Ok(report.all_pass() && nonneg_vectors)
}

fn resolve_xi(problem: &ProblemFile, flag: Option<&[f64]>) -> Result<DenseVector> {
    let dim = problem.system.n() + problem.system.m();
    let xi = match flag {
        Some(values) => DenseVector::new(values.to_vec())
            .map_err(|e| input_error(format!("invalid --xi: {e}")))?,
        None => problem
            .options
            .xi
            .clone()
            .unwrap_or_else(|| DenseVector::filled(dim, 1.0)),
    };
    if xi.dim() != dim || xi.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(input_error(format!(
            "xi must have {dim} strictly positive entries, got {}",
            fmt_vec(xi.as_slice())
        )));
    }
    Ok(xi)
}

fn resolve_alpha_step(problem: &ProblemFile, flag: Option<f64>) -> Result<f64> {
    let step = flag.unwrap_or_else(|| problem.options.alpha_step());
    if !(step > 0.0 && step.is_finite()) {
        return Err(input_error(format!(
            "alpha step must be positive, got {step}"
        )));
    }
    Ok(step)
}

fn resolve_grid(problem: &ProblemFile, grid: &GridArgs) -> Result<(f64, f64)> {
    let step = grid.step.unwrap_or_else(|| problem.options.sim_step());
    let t_end = grid.t_end.unwrap_or_else(|| problem.options.t_end());
    if !(step > 0.0 && step.is_finite()) {
        return Err(input_error(format!("step must be positive, got {step}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(input_error(format!(
            "t_end must be nonnegative, got {t_end}"
        )));
    }
    Ok((step, t_end))
}

/// `None` after reporting a failed certificate pipeline.
fn certify(problem: &ProblemFile, args: &BoundArgs) -> Result<Option<BoundCertificate>> {
    let options = CertificateOptions {
        alpha_step: resolve_alpha_step(problem, args.alpha_step)?,
        xi: Some(resolve_xi(problem, args.xi.as_deref())?),
    };
    match compute_certificate_with(&problem.system, &options) {
        Ok(cert) => Ok(Some(cert)),
        Err(err) => {
            eprintln!("certificate fails: {err}");
            Ok(None)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn cmd_bound(
    path: &Path,
    args: &BoundArgs,
    out: Option<&Path>,
    staircase: Option<&Path>,
    grid: &GridArgs,
) -> Result<bool> {
    let Some(problem) = load_valid(path)? else {
        return Ok(false);
    };
    let (step, t_end) = resolve_grid(&problem, grid)?;
    let Some(cert) = certify(&problem, args)? else {
        return Ok(false);
    };
    let json = serde_json::to_string_pretty(&cert.to_record())? + "\n";
    match out {
        Some(out) => {
            let mut w = create(out)?;
            w.write_all(json.as_bytes())?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(json.as_bytes())?,
    }
    let csv_path = staircase
        .map(Path::to_path_buf)
        .or_else(|| out.map(|p| p.with_extension("csv")));
    if let Some(csv_path) = csv_path {
        let mut w = create(&csv_path)?;
        write_staircase_csv(&mut w, &cert, step, t_end)?;
        w.flush()?;
    }
    if out.is_some() {
        println!(
            "mu = {}, T = {}, T* = {}, constant_bound = {}",
            format_sig9(cert.mu),
            format_sig9(cert.convergence.t),
            format_sig9(cert.t_star),
            cert.constant_bound
        );
    }
    Ok(true)
}

/// The scenario named by `--a`/`--b`, else the file's, else the `a = b = 1`
/// preset.
fn resolve_scenario(
    problem: &ProblemFile,
    preset: &PresetArgs,
    step: f64,
    t_end: f64,
) -> SimulationScenario {
    if preset.a.is_none() && preset.b.is_none() {
        if let Some(sc) = problem.scenario(step, t_end) {
            return sc;
        }
    }
    SimulationScenario::preset(
        &problem.system,
        preset.a.unwrap_or(1.0),
        preset.b.unwrap_or(1.0),
        step,
        t_end,
    )
}

/// Simulation errors caused by the scenario are input errors; the rest
/// (blow-up, unstable D) are hypothesis failures.
fn run(scenario: &SimulationScenario) -> Result<cdde_bound::Trajectory> {
    simulate(scenario).map_err(|e| match e {
        SimulationError::InvalidScenario(_) if !scenario_is_unstable(&e) => {
            input_error(e.to_string())
        }
        other => other.into(),
    })
}

fn scenario_is_unstable(e: &SimulationError) -> bool {
    matches!(e, SimulationError::InvalidScenario(msg) if msg == "D is not Schur")
}

fn cmd_simulate(
    path: &Path,
    preset: &PresetArgs,
    grid: &GridArgs,
    out: Option<&Path>,
) -> Result<bool> {
    let Some(problem) = load_valid(path)? else {
        return Ok(false);
    };
    let (step, t_end) = resolve_grid(&problem, grid)?;
    let scenario = resolve_scenario(&problem, preset, step, t_end);
    let traj = run(&scenario)?;
    match out {
        Some(out) => {
            let mut w = create(out)?;
            write_trajectory_csv(&mut w, &traj, None)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_trajectory_csv(&mut w, &traj, None)?;
            w.flush()?;
        }
    }
    Ok(true)
}

fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => bail!(input_error(format!(
                "{THREADS_VAR} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, usize::from)),
    }
}

/// Runs `scenarios` on at most `threads` workers; results keep input order.
fn run_all(
    scenarios: &[SimulationScenario],
    cert: &BoundCertificate,
    threads: usize,
) -> Vec<Result<DominationReport>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<DominationReport>>>> =
        scenarios.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.min(scenarios.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(scenario) = scenarios.get(i) else {
                    break;
                };
                let result = run(scenario).map(|traj| verify_domination(&traj, cert));
                *slots[i].lock().expect("worker panicked") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("worker panicked")
                .expect("every scenario is claimed")
        })
        .collect()
}

fn cmd_verify(
    path: &Path,
    args: &BoundArgs,
    preset: &PresetArgs,
    grid: &GridArgs,
    certify_with: Option<&Path>,
) -> Result<bool> {
    let threads = thread_cap()?;
    let Some(problem) = load_valid(path)? else {
        return Ok(false);
    };
    let (step, t_end) = resolve_grid(&problem, grid)?;
    let cert_problem = match certify_with {
        Some(other) => match load_valid(other)? {
            Some(p) => p,
            None => return Ok(false),
        },
        None => problem.clone(),
    };
    if cert_problem.system.n() != problem.system.n()
        || cert_problem.system.m() != problem.system.m()
    {
        return Err(input_error("certificate system has different dimensions"));
    }
    let Some(cert) = certify(&cert_problem, args)? else {
        return Ok(false);
    };

    let mut labelled: Vec<(String, SimulationScenario)> = Vec::new();
    if preset.a.is_some() || preset.b.is_some() {
        let (a, b) = (preset.a.unwrap_or(1.0), preset.b.unwrap_or(1.0));
        labelled.push((
            format!("preset a={} b={}", format_sig9(a), format_sig9(b)),
            SimulationScenario::preset(&problem.system, a, b, step, t_end),
        ));
    } else {
        if let Some(sc) = problem.scenario(step, t_end) {
            labelled.push(("file scenario".to_string(), sc));
        }
        for a in PRESET_A {
            for b in PRESET_B {
                labelled.push((
                    format!("preset a={} b={}", format_sig9(a), format_sig9(b)),
                    SimulationScenario::preset(&problem.system, a, b, step, t_end),
                ));
            }
        }
    }

    let scenarios: Vec<SimulationScenario> = labelled.iter().map(|(_, s)| s.clone()).collect();
    let results = run_all(&scenarios, &cert, threads);

    let mut out = io::stdout().lock();
    writeln!(
        out,
        "certificate: mu = {}, T* = {}, constant_bound = {}",
        format_sig9(cert.mu),
        format_sig9(cert.t_star),
        cert.constant_bound
    )?;
    let mut failed = 0;
    for ((label, _), result) in labelled.iter().zip(results) {
        let report = result.with_context(|| label.clone())?;
        writeln!(out, "{label}: {}", pass_fail(report.passes()))?;
        writeln!(out, "  max margin x = {}", fmt_vec(&report.x_margin))?;
        writeln!(out, "  max margin y = {}", fmt_vec(&report.y_margin))?;
        if let Some(v) = report.first_violation {
            failed += 1;
            writeln!(
                out,
                "  first violation at t = {}: {} exceeds its bound by {}",
                format_sig9(v.time),
                v.component,
                format_sig9(v.excess)
            )?;
        }
    }
    writeln!(
        out,
        "verify: {} passed, {failed} failed",
        labelled.len() - failed
    )?;
    Ok(failed == 0)
}
