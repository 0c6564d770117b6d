//! Orchestration behind the `run`, `verify` and `report` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use l2flow_core::flow::{run, FlowTrace};

use crate::error::{LabError, Result};
use crate::io::{load_trace, save_trace, write_json};
use crate::report::VerificationReport;
use crate::scenario::Scenario;
use crate::suite::Suite;

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";

/// What a finished run or verification produced.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub report: VerificationReport,
}

impl RunOutput {
    /// 0 when no asserted check failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.passed() {
            0
        } else {
            1
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(format!("creating {}", dir.display()), e))
}

/// Builds the initial metric, runs the flow, stores the trace and runs the
/// enabled checks. A flow abort keeps the partial trace on disk.
pub fn run_scenario(scenario: &Scenario, output: Option<&Path>) -> Result<RunOutput> {
    scenario.validate()?;
    let dir = scenario.resolve_output_dir(output);
    create_dir(&dir)?;
    let scenario_path = dir.join(SCENARIO_FILE);
    fs::write(&scenario_path, scenario.to_toml())
        .map_err(|e| LabError::io(format!("writing {}", scenario_path.display()), e))?;

    let initial = scenario.initial_metric()?;
    let t_final = scenario.resolve_t_final(&initial)?;
    let schedule = scenario.schedule()?;
    let trace = match run(initial, t_final, &schedule, &scenario.flow_config()) {
        Ok(trace) => trace,
        Err(abort) => {
            if !abort.trace.states.is_empty() {
                save_trace(&dir, &abort.trace)?;
            }
            return Err(LabError::numerical(
                format!("flow (last stable t = {:e})", abort.last_stable.t),
                abort.error,
            ));
        }
    };
    save_trace(&dir, &trace)?;
    verify_trace(scenario, &trace, &dir)
}

/// Runs the checks on a stored trace with the scenario saved next to it.
pub fn verify_dir(dir: &Path) -> Result<RunOutput> {
    let scenario = Scenario::load(&dir.join(SCENARIO_FILE))?;
    let trace = load_trace(dir)?;
    verify_trace(&scenario, &trace, dir)
}

fn verify_trace(scenario: &Scenario, trace: &FlowTrace, dir: &Path) -> Result<RunOutput> {
    let ids = scenario.enabled_checks()?;
    let suite = Suite::new(scenario, trace, Some(dir.to_path_buf()));
    let (report, err) = match suite.run(&ids) {
        Ok(r) => (r, None),
        Err((r, e)) => (r, Some(e)),
    };
    write_report(dir, &report)?;
    match err {
        Some(e) => Err(e),
        None => Ok(RunOutput {
            dir: dir.to_path_buf(),
            report,
        }),
    }
}

fn write_report(dir: &Path, report: &VerificationReport) -> Result<()> {
    write_json(&dir.join(REPORT_FILE), report)?;
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, report.summary()).map_err(|e| LabError::io(format!("writing {}", path.display()), e))
}

/// Reads back `report.json` without recomputing anything.
pub fn report_dir(dir: &Path) -> Result<RunOutput> {
    let report: VerificationReport = crate::io::read_json(&dir.join(REPORT_FILE))?;
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        report,
    })
}
