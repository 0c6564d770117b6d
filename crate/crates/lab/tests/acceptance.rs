//! Desk-scale acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the process fails when a criterion fails that is not listed in
//! `DOCUMENTED_DEVIATIONS`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use l2flow_core::curvature::fk_scaling_check;
use l2flow_core::flow::{energy_identity_residual, max_metric_change, run, FlowConfig, FlowTrace, SampleSchedule};
use l2flow_core::functionals::{energy, grad_f_analytic, grad_f_discrete, grad_g_discrete, relative_l2_difference};
use l2flow_core::geometry::{build_tube, Curve, DistanceConfig, MetricSampler, TubeConfig};
use l2flow_core::{MetricField, TorusGrid};
use l2flow_lab::checks::{
    distance_holder_check, gh_upper_bound_metrics, riemann_symmetry_violation, sample_points, DistanceHistory,
    HolderFit,
};
use l2flow_lab::report::{CheckRecord, Status, VerificationReport};
use l2flow_lab::runner::run_scenario;
use l2flow_lab::Scenario;

/// Sub-criteria that cannot hold as written; see the README.
const DOCUMENTED_DEVIATIONS: &[&str] = &["2b"];

struct Outcome {
    id: &'static str,
    pass: bool,
    text: String,
}

#[derive(Default)]
struct Board(Vec<Outcome>);

impl Board {
    fn record(&mut self, id: &'static str, pass: bool, text: String) {
        let tag = match (pass, DOCUMENTED_DEVIATIONS.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (documented deviation)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>3}: {tag}: {text}");
        self.0.push(Outcome { id, pass, text });
    }

    fn unexpected(&self) -> Vec<&Outcome> {
        self.0
            .iter()
            .filter(|o| !o.pass && !DOCUMENTED_DEVIATIONS.contains(&o.id))
            .collect()
    }
}

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    Scenario::load(&path).expect("bundled scenario")
}

fn record<'a>(report: &'a VerificationReport, name: &str) -> &'a CheckRecord {
    report.checks.iter().find(|c| c.name == name).expect("check enabled")
}

fn value(r: &CheckRecord) -> f64 {
    r.value.unwrap_or(f64::NAN)
}

fn band_limited(n: usize, seed: u64) -> MetricField {
    MetricField::band_limited(&TorusGrid::unit(n).unwrap(), 0.05, 1, seed).unwrap()
}

/// `|x − y| ≤ tol · max(|x|, |y|)`, true when both vanish.
fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * x.abs().max(y.abs())
}

fn holder_stable(f: Option<&HolderFit>, g: &HolderFit) -> bool {
    f.is_some_and(|f| f.is_finite() && g.is_finite() && close(f.a, g.a, 0.3) && close(f.b, g.b, 0.3))
}

fn flat_fixed_point(board: &mut Board) -> FlowTrace {
    let start = Instant::now();
    let metric = MetricField::flat(&TorusGrid::unit(8).unwrap());
    let cfg = FlowConfig {
        derivative_monitors: false,
        ..FlowConfig::default()
    };
    let dt = l2flow_core::flow::dt_stable(&metric, 0.0, &cfg);
    let trace = run(metric, 100.0 * dt, &SampleSchedule::Uniform(10), &cfg).expect("flat flow");
    let s0 = &trace.states[0];
    let steps = trace.history.len() - 1;
    let change = max_metric_change(&trace);
    let secs = start.elapsed().as_secs_f64();
    board.record(
        "1",
        s0.sup_rm == 0.0 && s0.grad_l2_sq == 0.0 && steps == 100 && change <= 1e-10 && secs < 10.0,
        format!(
            "flat N=8: sup|Rm| = {:e}, |grad F|² = {:e}, {steps} steps change g by {change:e} (≤ 1e-10) in {secs:.1} s (< 10 s)",
            s0.sup_rm, s0.grad_l2_sq
        ),
    );
    trace
}

fn gradient_checks(board: &mut Board) {
    let tol = |n: usize| 5.0 / (n * n) as f64;
    let mut worst_cross: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    let mut ratios = Vec::new();
    for seed in 1..=5 {
        let m = band_limited(12, seed);
        let f = grad_f_discrete(&m).unwrap();
        let e12 = relative_l2_difference(&m, &grad_f_analytic(&m).unwrap(), &f);
        worst_cross = worst_cross.max(e12);
        let g = grad_g_discrete(&m).unwrap();
        worst_identity = worst_identity.max(f.sub_scaled(4.0, &g).l2_norm(&m) / f.l2_norm(&m));
        let fine = band_limited(24, seed);
        let e24 = relative_l2_difference(
            &fine,
            &grad_f_analytic(&fine).unwrap(),
            &grad_f_discrete(&fine).unwrap(),
        );
        ratios.push(e12 / e24);
    }
    board.record(
        "2a",
        worst_cross <= tol(12),
        format!("5 metrics N=12: max relative L² error {worst_cross:.3e} ≤ 5h² = {:.3e}", tol(12)),
    );
    let in_band = ratios.iter().all(|r| (3.0..=5.0).contains(r));
    board.record(
        "2b",
        in_band,
        format!(
            "error ratio N=12 → N=24: {} (required in [3, 5]; fourth-order stencils give ≈ 16)",
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", ")
        ),
    );
    board.record(
        "3",
        worst_identity <= tol(12),
        format!("max |grad F − 4 grad G| / |grad F| = {worst_identity:.3e} ≤ {:.3e}", tol(12)),
    );
}

fn gauss_bonnet(board: &mut Board) {
    let rel = |n| {
        let e = energy(&band_limited(n, 42)).unwrap();
        (e.f - 4.0 * e.g).abs() / e.f
    };
    let (r16, r32) = (rel(16), rel(32));
    board.record(
        "6",
        r16 <= 0.02 && r16 / r32 >= 8.0,
        format!(
            "|F − 4G|/F = {r16:.3e} at N=16 (≤ 0.02), {r32:.3e} at N=32, decrease ×{:.1} (≥ 8)",
            r16 / r32
        ),
    );
}

fn scaling_and_symmetry(board: &mut Board) {
    let m = band_limited(12, 7);
    let mut worst: f64 = 0.0;
    for k in 0..=3 {
        for c in [0.5, 3.7] {
            worst = worst.max(fk_scaling_check(&m, k, c).unwrap());
        }
    }
    board.record(
        "7",
        worst <= 1e-10,
        format!("max pointwise f_k deviation over k ≤ 3, c ∈ {{0.5, 3.7}}: {worst:.3e} (≤ 1e-10)"),
    );

    let grid = TorusGrid::unit(12).unwrap();
    let aniso = TorusGrid::new(12, [1.0, 1.3, 0.8, 1.1]).unwrap();
    let metrics = [
        ("flat", MetricField::flat(&grid)),
        ("conformal", MetricField::conformal_mode(&grid, 0.05, 0, 1).unwrap()),
        ("band-limited", band_limited(12, 42)),
        ("band-limited k≤2", MetricField::band_limited(&grid, 0.05, 2, 9).unwrap()),
        ("anisotropic", MetricField::flat(&aniso)),
    ];
    let mut worst: f64 = 0.0;
    for (_, m) in &metrics {
        worst = worst.max(riemann_symmetry_violation(m).unwrap());
    }
    board.record(
        "8",
        worst <= 1e-9,
        format!("relative symmetry and Bianchi violation over {} generated metrics: {worst:.3e} (≤ 1e-9)", metrics.len()),
    );
}

fn flat_tube() -> (bool, String) {
    let metric = MetricField::flat(&TorusGrid::unit(12).unwrap());
    let pts: Vec<_> = (0..=20).map(|i| [0.3 + 0.02 * i as f64, 0.4, 0.5, 0.6]).collect();
    let curve = Curve::uniform(pts)
        .unwrap()
        .arclength_parametrized(&MetricSampler::new(&metric))
        .unwrap();
    let tube = build_tube(&metric, &curve, 0.15, &TubeConfig::default()).expect("flat tube");
    let d = &tube.diagnostics;
    let ok = d.foliated && d.min_dpi >= 0.95 && d.sup_dpi <= 1.05;
    let text = format!(
        "flat straight tube |dπ| ∈ [{:.6}, {:.6}] (within [0.95, 1.05]), foliated: {}",
        d.min_dpi, d.sup_dpi, d.foliated
    );
    (ok, text)
}

fn gh_oracle() -> (bool, String) {
    let grid = TorusGrid::unit(12).unwrap();
    let flat = MetricField::flat(&grid);
    let scaled = flat.scaled(1.1 * 1.1).unwrap();
    let points = sample_points(&grid, 42);
    let bound = gh_upper_bound_metrics(&flat, &scaled, &points, &DistanceConfig::default());
    let ok = (bound - 0.05).abs() <= 0.01 * 0.05;
    (ok, format!("flat c=1.1 bound {bound:.6} (0.05 ± 1%)"))
}

fn main() {
    let total = Instant::now();
    let mut board = Board::default();
    let out = tempfile::tempdir().expect("temporary directory");

    let flat_trace = flat_fixed_point(&mut board);
    gradient_checks(&mut board);

    // The reference run, its repetition and its dt-halved twin.
    let reference = scenario("reference.toml");
    let dir_a: PathBuf = out.path().join("a");
    let dir_b: PathBuf = out.path().join("b");
    let run_a = run_scenario(&reference, Some(&dir_a)).expect("reference run");
    let report = &run_a.report;
    let halved = {
        let s = Scenario {
            safety: 0.5 * reference.safety,
            ..reference.clone()
        };
        let m = s.initial_metric().unwrap();
        let t_final = reference.resolve_t_final(&m).unwrap();
        run(m, t_final, &s.schedule().unwrap(), &s.flow_config()).expect("halved run")
    };
    let resid = value(record(report, "energy_identity"));
    let resid_half = energy_identity_residual(&halved).unwrap();
    board.record(
        "4",
        resid <= 0.02 && resid / resid_half >= 2.0,
        format!(
            "energy identity residual {resid:.3e} (≤ 0.02), {resid_half:.3e} with dt halved, ratio {:.2} (≥ 2)",
            resid / resid_half
        ),
    );
    let drift = value(record(report, "volume_invariance"));
    board.record("5", drift <= 1e-3, format!("relative volume drift {drift:.3e} (≤ 1e-3)"));

    gauss_bonnet(&mut board);
    scaling_and_symmetry(&mut board);

    let quasi_times = |name: &str| -> usize {
        let v: serde_json::Value = l2flow_lab::io::read_json(&dir_a.join(format!("{name}.json"))).unwrap();
        v["checks"].as_array().map_or(0, |a| a.len())
    };
    let (qf, qb) = (record(report, "quasi_forward"), record(report, "quasi_backward"));
    let (nf, nb) = (quasi_times("quasi_forward"), quasi_times("quasi_backward"));
    board.record(
        "9",
        qf.status == Status::Pass && qb.status == Status::Pass && nf >= 20 && nb >= 20,
        format!(
            "β = 0.05: forward min margin {:.3e} at {nf} times, backward {:.3e} at {nb} times (≥ 0 at ≥ 20)",
            value(qf),
            value(qb)
        ),
    );

    let (flat_ok, flat_text) = flat_tube();
    let (tube, area) = (record(report, "tube"), record(report, "tube_area"));
    let c_emp = area.detail["c_emp"].as_f64().unwrap_or(f64::NAN);
    board.record(
        "10",
        flat_ok && tube.status == Status::Pass && area.status == Status::Pass && c_emp > 0.0,
        format!(
            "{}; perturbed r = 0.5 inj: sup|dπ| = {:.4} (≤ 2.1), c_emp = {c_emp:.4} changes {:.2e} under refinement (≤ 0.2)",
            flat_text,
            value(tube),
            value(area)
        ),
    );

    let (oracle_ok, oracle_text) = gh_oracle();
    let trend = record(report, "gh_trend");
    board.record(
        "11",
        oracle_ok && trend.status == Status::Pass,
        format!("{oracle_text}; reference trend largest smoothed decrease {:.2e} of the bound scale", value(trend)),
    );

    let points = sample_points(&reference.grid(), reference.seed);
    // Non-finite coefficients are stored as null and fail to parse.
    let fit_a: Option<HolderFit> = serde_json::from_value(record(report, "distance_holder").detail.clone()).ok();
    let fit_half = distance_holder_check(&DistanceHistory::compute(&halved, &points, &DistanceConfig::default())).unwrap();
    let flat_points = sample_points(flat_trace.grid(), 0);
    let fit_flat =
        distance_holder_check(&DistanceHistory::compute(&flat_trace, &flat_points, &DistanceConfig::default())).unwrap();
    board.record(
        "12",
        holder_stable(fit_a.as_ref(), &fit_half) && fit_flat.a == 0.0 && fit_flat.b == 0.0,
        format!(
            "(a, b) = ({:.4e}, {:.4e}), dt halved ({:.4e}, {:.4e}) (within 30%); flat ({}, {})",
            fit_a.as_ref().map_or(f64::NAN, |f| f.a),
            fit_a.as_ref().map_or(f64::NAN, |f| f.b),
            fit_half.a, fit_half.b, fit_flat.a, fit_flat.b
        ),
    );

    let (ap1, ap1a) = (record(report, "appendix_ap1"), record(report, "appendix_ap1a"));
    let (ap2, vol) = (record(report, "appendix_ap2"), record(report, "volopenset"));
    board.record(
        "13",
        ap1.status == Status::Pass
            && ap1a.status == Status::Pass
            && ap2.status == Status::ReportOnly
            && vol.status == Status::ReportOnly,
        format!(
            "worst lhs/rhs ap1 {:.3}, ap1a {:.3} (≤ 1.05); fitted ap2 C = {:.3e}, volume bound C = {:.3e} (report only)",
            value(ap1),
            value(ap1a),
            value(ap2),
            value(vol)
        ),
    );

    run_scenario(&reference, Some(&dir_b)).expect("repeated reference run");
    let read = |d: &Path| std::fs::read(d.join(l2flow_lab::io::HISTORY_FILE)).unwrap();
    let same = read(&dir_a) == read(&dir_b);
    board.record("14", same, format!("two reference runs give byte-identical history.csv: {same}"));

    let failed: Vec<String> = board.0.iter().filter(|o| !o.pass).map(|o| o.id.to_string()).collect();
    println!(
        "acceptance: {} of {} criteria lines pass{} ({:.0} s)",
        board.0.len() - failed.len(),
        board.0.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) },
        total.elapsed().as_secs_f64()
    );
    let unexpected = board.unexpected();
    if !unexpected.is_empty() {
        for o in unexpected {
            eprintln!("unexpected failure of criterion {}: {}", o.id, o.text);
        }
        std::process::exit(1);
    }
}
