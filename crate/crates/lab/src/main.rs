use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use l2flow_core::functionals::{grad_f_analytic, grad_f_discrete, relative_l2_difference};
use l2flow_lab::runner::{report_dir, run_scenario, verify_dir, RunOutput};
use l2flow_lab::suite::CheckId;
use l2flow_lab::{LabError, Result, Scenario, THREADS_ENV};

/// Experiments and verification for the L² curvature flow on T⁴.
#[derive(Parser)]
#[command(name = "l2flow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow for a scenario file and verify the trace.
    Run {
        scenario: PathBuf,
        /// Output directory (overrides L2FLOW_OUTPUT_DIR and the scenario).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Re-run the checks on a stored trace directory.
    Verify { trace_dir: PathBuf },
    /// Print the stored report of a trace directory.
    Report { trace_dir: PathBuf },
    /// Independent oracles.
    #[command(subcommand)]
    Oracle(Oracle),
}

#[derive(Subcommand)]
enum Oracle {
    /// Compare the closed-form gradient with the finite-difference one.
    Gradcheck { scenario: PathBuf },
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .map_err(|_| LabError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A second initialisation only fails when a pool already exists.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn finish(out: RunOutput) -> i32 {
    print!("{}", out.report.summary());
    println!("artifacts in {}", out.dir.display());
    out.exit_code()
}

fn gradcheck(path: &Path) -> Result<i32> {
    let scenario = Scenario::load(path)?;
    scenario.validate()?;
    let metric = scenario.initial_metric()?;
    let a = grad_f_analytic(&metric).map_err(|e| LabError::numerical("analytic gradient", e))?;
    let d = grad_f_discrete(&metric).map_err(|e| LabError::numerical("discrete gradient", e))?;
    let err = relative_l2_difference(&metric, &a, &d);
    let tol = scenario.tolerance(CheckId::GradientCrosscheck);
    let pass = err <= tol;
    println!(
        "gradcheck {}: relative L2 difference {err:.3e}, tolerance {tol:.3e}: {}",
        scenario.name,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { 0 } else { 1 })
}

fn dispatch(cli: Cli) -> Result<i32> {
    configure_threads()?;
    match cli.command {
        Command::Run { scenario, output } => {
            let s = Scenario::load(&scenario)?;
            run_scenario(&s, output.as_deref()).map(finish)
        }
        Command::Verify { trace_dir } => verify_dir(&trace_dir).map(finish),
        Command::Report { trace_dir } => report_dir(&trace_dir).map(finish),
        Command::Oracle(Oracle::Gradcheck { scenario }) => gradcheck(&scenario),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
