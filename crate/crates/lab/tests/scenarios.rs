//! Bundled scenarios through the library entry point.

use std::path::Path;

use l2flow_lab::report::Status;
use l2flow_lab::runner::run_scenario;
use l2flow_lab::{LabError, Scenario};

fn bundled(name: &str) -> Scenario {
    Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)).unwrap()
}

#[test]
fn flat_smoke_passes_every_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_scenario(&bundled("flat-smoke.toml"), Some(tmp.path())).unwrap();
    let report = &out.report;
    assert!(report.passed(), "{}", report.summary());
    let names: Vec<_> = report.checks.iter().map(|c| c.name.as_str()).collect();
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), names.len(), "a check ran twice");
    for c in &report.checks {
        assert!(!c.anchor.is_empty());
        let near_zero = ["riemann_symmetry", "flat_fixed_point", "energy_identity", "volume_invariance", "gh_trend"];
        if near_zero.contains(&c.name.as_str()) {
            assert_eq!(c.status, Status::Pass);
            assert!(c.value.unwrap() <= 1e-12, "{} = {:?}", c.name, c.value);
        }
    }
}

#[test]
fn beyond_stable_amplitude_reports_the_point() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run_scenario(&bundled("unstable.toml"), Some(tmp.path())).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(matches!(err, LabError::Numerical { .. }));
    assert!(err.to_string().contains("grid point"), "{err}");
    // the partial trace stays on disk
    assert!(tmp.path().join("history.csv").is_file());
}
