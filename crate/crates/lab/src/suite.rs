//! The check registry and its evaluation on a flow trace.

use std::cell::OnceCell;
use std::path::PathBuf;
use std::time::Instant;

use l2flow_core::flow::{
    decay_monitors, energy_identity_residual, half_slab, max_metric_change, volopenset_check, FlowTrace,
};
use l2flow_core::functionals::{grad_f_analytic, grad_f_discrete, grad_g_discrete, relative_l2_difference};
use l2flow_core::geometry::{
    build_tube, coarea_residual, gamma_norm, geodesic, inj_estimate, noncollapsing_check, quasi_geodesic,
    Direction, Geodesic, InjEstimate, MetricSampler, Point, QuasiGeodesicConfig, QuasiGeodesicFamily, Tube, TubeConfig,
};
use l2flow_core::{CurvatureBundle, MetricField};
use serde::Serialize;
use serde_json::{json, Value};

use crate::checks::{
    appendix_estimate_checks, distance_holder_check, gh_trend, riemann_symmetry_violation, sample_points, AppendixReport, DistanceHistory,
};
use crate::error::{LabError, Result};
use crate::report::{CheckRecord, Status, VerificationReport};
use crate::scenario::{Generator, Scenario};

macro_rules! registry {
    ($($id:ident => $name:literal, $anchor:literal, $report_only:literal;)*) => {
        /// Every check the suite knows, in execution order.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum CheckId { $($id),* }

        impl CheckId {
            pub const ALL: &'static [CheckId] = &[$(CheckId::$id),*];

            pub fn name(self) -> &'static str {
                match self { $(CheckId::$id => $name),* }
            }

            /// The statement the check verifies.
            pub fn anchor(self) -> &'static str {
                match self { $(CheckId::$id => $anchor),* }
            }

            /// Fitted constants that the theory does not make explicit.
            pub fn report_only(self) -> bool {
                match self { $(CheckId::$id => $report_only),* }
            }
        }
    };
}

registry! {
    RiemannSymmetry => "riemann_symmetry", "R_ijkl = −R_jikl = −R_ijlk = R_klij and R_ijkl + R_jkil + R_kijl = 0", false;
    FkScaling => "fk_scaling", "f_k(x, cg) = c⁻¹ f_k(x, g)", false;
    GradientCrosscheck => "gradient_crosscheck", "grad F = 2δdRc − 2Ř + ½|Rm|²g", false;
    GradientIdentity => "gradient_identity", "grad F ≡ 4 grad G", false;
    GaussBonnet => "gauss_bonnet", "∫|Rm|² − 4∫|R̊c|² = c₀π²χ(M) = 0 on T⁴", false;
    FlatFixedPoint => "flat_fixed_point", "the flat metric is a stationary point of ∂g/∂t = −grad F", false;
    EnergyMonotone => "energy_monotone", "F(g(t)) is monotone decreasing", false;
    EnergyIdentity => "energy_identity", "∫₀ᵗ∫|grad F|² dV ds = F(g(0)) − F(g(t))", false;
    VolumeInvariance => "volume_invariance", "Vol_{g(t)}(M) = Vol_{g(0)}(M)", false;
    DecayMonitors => "decay_monitors", "‖Rm‖ ≤ K t^{−1/2} and |∇^m Rm| ≤ C t^{−(2+m)/4}", true;
    Volopenset => "volopenset", "Vol_{g(t)}(U)^{1/2} ≥ Vol_{g(0)}(U)^{1/2} − C t^{1/2} (∫∫_U |grad F|²)^{1/2}", true;
    DistanceMetric => "distance_metric", "d_{g(t)} is a metric: symmetric, triangle inequality", false;
    GhTrend => "gh_trend", "d_GH((M, d_g), (M, d_{g(t)})) < 1/k for small t", false;
    DistanceHolder => "distance_holder", "|d(x,y,t₂) − d(x,y,t₁)| ≤ a (t₂^{1/8} − t₁^{1/8})^{1/2} + b (t₂^{1/24} − t₁^{1/24})", false;
    QuasiForward => "quasi_forward", "β-quasi-forward geodesic: L ≤ d + β, |∇_γ̇ γ̇| ≤ β d_j², speed in [d_j/(1+β), (1+β) d_j]", false;
    QuasiBackward => "quasi_backward", "β-quasi-backward geodesic on the time-reversed flow", false;
    Tube => "tube", "D(γ, r) is foliated by normal discs and |dπ| ≤ 2", false;
    TubeArea => "tube_area", "disc areas ≥ c r³ with c > 0", false;
    Coarea => "coarea", "∫_D φ dV = ∫∫_{π⁻¹(s)} φ / |dπ| dA ds", true;
    GammaNorm => "gamma_norm", "|Γ| of normal coordinates", true;
    Injectivity => "injectivity", "inj_{g(t)}(M) ≥ ι t^{1/4}", true;
    Noncollapsing => "noncollapsing", "Vol B(x, r) ≥ δ ω₄ r⁴", true;
    AppendixAp1 => "appendix_ap1", "|d/dt L(γ, t)| ≤ ∫_γ |g'(t)| dσ", false;
    AppendixAp1a => "appendix_ap1a", "|log(|v|²_{g(t₂)} / |v|²_{g(t₁)})| ≤ ∫ ‖g'(t)‖_∞ dt", false;
    AppendixAp2 => "appendix_ap2", "|∂_t |∇_γ̇ γ̇|²| ≤ |g'| |∇_γ̇ γ̇|² + C(n) |γ̇|² |∇_γ̇ γ̇| |∇g'|", true;
}

impl CheckId {
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }

    /// Whether `all` in a scenario enables this check.
    pub fn in_all(self, scenario: &Scenario) -> bool {
        match self {
            CheckId::FlatFixedPoint => matches!(scenario.generator, Generator::Flat | Generator::Anisotropic),
            _ => true,
        }
    }

    /// Tolerance used when the scenario gives none; `NaN` for report-only
    /// checks and checks with a structural pass condition.
    pub fn default_tolerance(self, scenario: &Scenario) -> f64 {
        let h = scenario.periods.iter().cloned().fold(f64::INFINITY, f64::min) / scenario.n as f64;
        match self {
            CheckId::RiemannSymmetry => 1e-9,
            CheckId::FkScaling => 1e-10,
            CheckId::GradientCrosscheck | CheckId::GradientIdentity => 5.0 * h * h,
            CheckId::GaussBonnet | CheckId::EnergyIdentity => 0.02,
            CheckId::FlatFixedPoint => 1e-10,
            CheckId::EnergyMonotone => scenario.flow_config().energy_tolerance,
            CheckId::VolumeInvariance => 1e-3,
            CheckId::DistanceMetric | CheckId::GhTrend => 1e-12,
            CheckId::QuasiForward | CheckId::QuasiBackward => 0.05,
            CheckId::Tube => 2.1,
            CheckId::TubeArea => 0.2,
            CheckId::AppendixAp1 | CheckId::AppendixAp1a => 0.05,
            _ => f64::NAN,
        }
    }
}

/// Result of one check before it is stamped with name and runtime.
struct Outcome {
    value: f64,
    pass: bool,
    detail: Value,
}

impl Outcome {
    fn new(value: f64, pass: bool, detail: Value) -> Self {
        Self { value, pass, detail }
    }

    fn report(value: f64, detail: Value) -> Self {
        Self::new(value, true, detail)
    }
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Lazily shared inputs of the checks on one trace.
pub struct Suite<'a> {
    scenario: &'a Scenario,
    trace: &'a FlowTrace,
    points: Vec<Point>,
    ends: (Point, Point),
    artifacts: Option<PathBuf>,
    distances: OnceCell<DistanceHistory>,
    frozen: OnceCell<Geodesic>,
    inj: OnceCell<std::result::Result<InjEstimate, l2flow_core::Error>>,
    tube: OnceCell<std::result::Result<Tube, l2flow_core::Error>>,
    appendix: OnceCell<AppendixReport>,
}

/// Offset, in periods, from the first sample point to the second end of the
/// curve used by the quasi-geodesic, tube and appendix checks. The sample
/// points themselves are half a period apart, where geodesics stop being
/// unique.
const CURVE_OFFSET: [f64; 4] = [0.3, 0.2, 0.1, 0.0];

impl<'a> Suite<'a> {
    pub fn new(scenario: &'a Scenario, trace: &'a FlowTrace, artifacts: Option<PathBuf>) -> Self {
        let points = sample_points(trace.grid(), scenario.seed);
        let l = trace.grid().periods();
        let ends = (points[0], core::array::from_fn(|a| points[0][a] + CURVE_OFFSET[a] * l[a]));
        Self {
            scenario,
            trace,
            points,
            ends,
            artifacts,
            distances: OnceCell::new(),
            frozen: OnceCell::new(),
            inj: OnceCell::new(),
            tube: OnceCell::new(),
            appendix: OnceCell::new(),
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn initial(&self) -> &MetricField {
        &self.trace.states[0].metric
    }

    fn distances(&self) -> &DistanceHistory {
        self.distances
            .get_or_init(|| DistanceHistory::compute(self.trace, &self.points, &Default::default()))
    }

    fn frozen(&self) -> &Geodesic {
        self.frozen
            .get_or_init(|| geodesic(self.initial(), &self.ends.0, &self.ends.1))
    }

    fn inj(&self) -> std::result::Result<InjEstimate, l2flow_core::Error> {
        self.inj.get_or_init(|| inj_estimate(self.initial())).clone()
    }

    fn tube(&self) -> std::result::Result<&Tube, l2flow_core::Error> {
        self.tube
            .get_or_init(|| {
                let r = 0.5 * self.inj()?.value;
                let curve = self.frozen().curve.arclength_parametrized(&MetricSampler::new(self.initial()))?;
                build_tube(self.initial(), &curve, r, &TubeConfig::default())
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn appendix(&self) -> &AppendixReport {
        self.appendix
            .get_or_init(|| appendix_estimate_checks(self.trace, &self.frozen().curve))
    }

    fn artifact<T: Serialize>(&self, file: &str, value: &T) -> Result<()> {
        match &self.artifacts {
            Some(dir) => crate::io::write_json(&dir.join(file), value),
            None => Ok(()),
        }
    }

    /// Runs `ids` in order. A numerical error stops the suite; the records
    /// collected so far are returned with it.
    pub fn run(&self, ids: &[CheckId]) -> std::result::Result<VerificationReport, (VerificationReport, LabError)> {
        let mut report = VerificationReport {
            scenario: self.scenario.name.clone(),
            checks: Vec::with_capacity(ids.len()),
        };
        for &id in ids {
            let start = Instant::now();
            match self.evaluate(id) {
                Ok(o) => {
                    let tol = self.scenario.tolerance(id);
                    report.checks.push(CheckRecord {
                        name: id.name().into(),
                        anchor: id.anchor().into(),
                        status: if id.report_only() {
                            Status::ReportOnly
                        } else if o.pass {
                            Status::Pass
                        } else {
                            Status::Fail
                        },
                        value: o.value.is_finite().then_some(o.value),
                        tolerance: tol.is_finite().then_some(tol),
                        runtime_s: start.elapsed().as_secs_f64(),
                        detail: o.detail,
                    });
                }
                Err(e) => return Err((report, e)),
            }
        }
        Ok(report)
    }

    fn evaluate(&self, id: CheckId) -> Result<Outcome> {
        let tol = self.scenario.tolerance(id);
        let trace = self.trace;
        let num_err = |stage: &str| {
            let stage = format!("{} ({stage})", id.name());
            move |e| LabError::numerical(stage, e)
        };
        Ok(match id {
            CheckId::RiemannSymmetry => {
                let mut worst: f64 = 0.0;
                for st in [&trace.states[0], &trace.states[trace.states.len() - 1]] {
                    worst = worst.max(riemann_symmetry_violation(&st.metric).map_err(num_err("curvature"))?);
                }
                Outcome::new(worst, worst <= tol, Value::Null)
            }
            CheckId::FkScaling => {
                let m = self.initial();
                let base = CurvatureBundle::build(m, 3).map_err(num_err("curvature"))?;
                let mut worst: f64 = 0.0;
                let mut rows = Vec::new();
                for c in [0.5, 3.7] {
                    let scaled = m.scaled(c).map_err(num_err("scaling"))?;
                    let bc = CurvatureBundle::build(&scaled, 3).map_err(num_err("curvature"))?;
                    for k in 0..=3 {
                        let f = base.fk(k).map_err(num_err("f_k"))?;
                        let fc = bc.fk(k).map_err(num_err("f_k"))?;
                        let dev = f
                            .iter()
                            .zip(&fc)
                            .map(|(b, s)| (s - b / c).abs() / (b + 1e-12))
                            .fold(0.0, f64::max);
                        rows.push(json!({"c": c, "k": k, "deviation": num(dev)}));
                        worst = worst.max(dev);
                    }
                }
                Outcome::new(worst, worst <= tol, json!(rows))
            }
            CheckId::GradientCrosscheck => {
                let m = self.initial();
                let a = grad_f_analytic(m).map_err(num_err("analytic gradient"))?;
                let d = grad_f_discrete(m).map_err(num_err("discrete gradient"))?;
                let v = relative_l2_difference(m, &a, &d);
                Outcome::new(v, v <= tol, json!({"grad_norm": num(d.l2_norm(m))}))
            }
            CheckId::GradientIdentity => {
                let m = self.initial();
                let f = grad_f_discrete(m).map_err(num_err("grad F"))?;
                let g = grad_g_discrete(m).map_err(num_err("grad G"))?;
                let nf = f.l2_norm(m);
                let diff = f.sub_scaled(4.0, &g).l2_norm(m);
                let v = if nf > 0.0 { diff / nf } else { diff };
                Outcome::new(v, v <= tol, json!({"grad_norm": num(nf)}))
            }
            CheckId::GaussBonnet => {
                let e = trace.states[0].energy;
                let v = if e.f > 0.0 { (e.f - 4.0 * e.g).abs() / e.f } else { (e.f - 4.0 * e.g).abs() };
                Outcome::new(v, v <= tol, json!({"F": num(e.f), "G": num(e.g)}))
            }
            CheckId::FlatFixedPoint => {
                let s0 = &trace.states[0];
                let change = max_metric_change(trace);
                let v = change.max(s0.sup_rm).max(s0.grad_l2_sq.sqrt());
                Outcome::new(
                    v,
                    v <= tol,
                    json!({"metric_change": num(change), "sup_rm": num(s0.sup_rm), "grad_l2": num(s0.grad_l2_sq.sqrt())}),
                )
            }
            CheckId::EnergyMonotone => {
                let h = &trace.history;
                let f0 = h[0].f.abs().max(f64::MIN_POSITIVE);
                let v = h.windows(2).map(|w| (w[1].f - w[0].f) / f0).fold(0.0, f64::max);
                let drop = (h[0].f - h[h.len() - 1].f) / f0;
                Outcome::new(v, v <= tol, json!({"relative_drop": num(drop), "records": h.len()}))
            }
            CheckId::EnergyIdentity => {
                let v = energy_identity_residual(trace).map_err(num_err("residual"))?;
                Outcome::new(v, v <= tol, Value::Null)
            }
            CheckId::VolumeInvariance => {
                let h = &trace.history;
                let v = h.iter().map(|r| (r.volume / h[0].volume - 1.0).abs()).fold(0.0, f64::max);
                Outcome::new(v, v <= tol, Value::Null)
            }
            CheckId::DecayMonitors => {
                let d = decay_monitors(trace);
                Outcome::report(
                    d.k_fit,
                    json!({"k_fit": num(d.k_fit), "c_fit": d.c_fit.iter().map(|c| c.map_or(Value::Null, num)).collect::<Vec<_>>()}),
                )
            }
            CheckId::Volopenset => {
                let slab = volopenset_check(trace, &half_slab(trace.grid(), 0)).map_err(num_err("slab"))?;
                let all: Vec<usize> = (0..trace.grid().len()).collect();
                let full = volopenset_check(trace, &all).map_err(num_err("full"))?;
                Outcome::report(slab, json!({"half_slab": num(slab), "full_torus": num(full)}))
            }
            CheckId::DistanceMetric => {
                let h = self.distances();
                let mut worst: f64 = 0.0;
                let mut symmetric = true;
                for d in &h.d {
                    let n = d.len();
                    let scale = d.iter().flatten().fold(0.0, |m: f64, v| m.max(*v)).max(f64::MIN_POSITIVE);
                    for i in 0..n {
                        symmetric &= d[i][i] == 0.0;
                        for j in 0..n {
                            symmetric &= d[i][j] == d[j][i];
                            for k in 0..n {
                                worst = worst.max((d[i][j] - d[i][k] - d[k][j]) / scale);
                            }
                        }
                    }
                }
                self.write_distances(h)?;
                Outcome::new(worst, symmetric && worst <= tol, json!({"symmetric": symmetric}))
            }
            CheckId::GhTrend => {
                let g = gh_trend(self.distances());
                let scale = g.bound.iter().fold(0.0, |m: f64, v| m.max(*v));
                let v = if scale > 0.0 { g.max_decrease.max(0.0) / scale } else { 0.0 };
                Outcome::new(v, v <= tol, serde_json::to_value(&g).unwrap_or(Value::Null))
            }
            CheckId::DistanceHolder => match distance_holder_check(self.distances()) {
                Ok(fit) => Outcome::new(fit.a + fit.b, fit.is_finite(), serde_json::to_value(&fit).unwrap_or(Value::Null)),
                Err(e) => Outcome::new(f64::NAN, false, json!({"error": e.to_string()})),
            },
            CheckId::QuasiForward | CheckId::QuasiBackward => {
                let dir = if id == CheckId::QuasiForward { Direction::Forward } else { Direction::Backward };
                let cfg = QuasiGeodesicConfig {
                    beta: tol,
                    ..QuasiGeodesicConfig::default()
                };
                match quasi_geodesic(trace, &self.ends.0, &self.ends.1, dir, &cfg) {
                    Ok(f) => {
                        let detail = family_json(&f);
                        self.artifact(&format!("{}.json", id.name()), &detail)?;
                        let m = f.min_margin();
                        Outcome::new(m, m >= 0.0, json!({"s": num(f.s), "a": num(f.a), "intervals": f.interval_count}))
                    }
                    Err(e) => Outcome::new(f64::NAN, false, json!({"error": e.to_string()})),
                }
            }
            CheckId::Tube => match self.tube() {
                Ok(t) => {
                    let d = &t.diagnostics;
                    self.artifact("tube.json", &tube_json(t))?;
                    Outcome::new(
                        d.sup_dpi,
                        d.foliated && d.sup_dpi <= tol,
                        json!({"radius": num(t.radius), "foliated": d.foliated, "crossings": d.crossings, "min_dpi": num(d.min_dpi)}),
                    )
                }
                Err(e) => Outcome::new(f64::NAN, false, json!({"error": e.to_string()})),
            },
            CheckId::TubeArea => match self.tube() {
                Ok(t) => {
                    let r3 = t.radius.powi(3);
                    let c = t.diagnostics.c_emp;
                    let fine = t.disc_areas(5, 5).iter().cloned().fold(f64::INFINITY, f64::min) / r3;
                    let v = (fine / c - 1.0).abs();
                    Outcome::new(v, c > 0.0 && v <= tol, json!({"c_emp": num(c), "c_emp_refined": num(fine)}))
                }
                Err(e) => Outcome::new(f64::NAN, false, json!({"error": e.to_string()})),
            },
            CheckId::Coarea => match self.tube() {
                Ok(t) => {
                    let v = coarea_residual(t, |_| 1.0, 3, 2, 2).map_err(num_err("quadrature"))?;
                    Outcome::report(v, Value::Null)
                }
                Err(e) => Outcome::report(f64::NAN, json!({"error": e.to_string()})),
            },
            CheckId::GammaNorm => {
                let inj = self.inj().map_err(num_err("injectivity radius"))?;
                let r = 0.25 * inj.value;
                let v = gamma_norm(self.initial(), &self.ends.0, r).map_err(num_err("normal chart"))?;
                Outcome::report(v, json!({"probe_radius": num(r)}))
            }
            CheckId::Injectivity => {
                let first = self.inj().map_err(num_err("initial"))?;
                let last_state = &trace.states[trace.states.len() - 1];
                let last = inj_estimate(&last_state.metric).map_err(num_err("final"))?;
                let iota = if last_state.t > 0.0 { last.value * last_state.t.powf(-0.25) } else { f64::NAN };
                Outcome::report(
                    first.value,
                    json!({"initial": num(first.value), "final": num(last.value), "iota_fit": num(iota),
                           "confident": first.confident && last.confident}),
                )
            }
            CheckId::Noncollapsing => {
                let last = &trace.states[trace.states.len() - 1].metric;
                let v = noncollapsing_check(last, 1.0, &self.points[..4], &[0.1, 0.2]).map_err(num_err("ball volume"))?;
                Outcome::report(v + 1.0, json!({"min_ratio": num(v + 1.0)}))
            }
            CheckId::AppendixAp1 | CheckId::AppendixAp1a => {
                let a = self.appendix();
                let rows = if id == CheckId::AppendixAp1 { &a.ap1 } else { &a.ap1a };
                let v = AppendixReport::worst_ratio(rows);
                Outcome::new(v, v <= 1.0 + tol, json!({"rows": rows.len()}))
            }
            CheckId::AppendixAp2 => {
                let c = self.appendix().ap2_c_fit;
                Outcome::report(c, Value::Null)
            }
        })
    }

    fn write_distances(&self, h: &DistanceHistory) -> Result<()> {
        let Some(dir) = &self.artifacts else { return Ok(()) };
        let path = dir.join("distances.csv");
        let mut rows = String::from("t,i,j,d\n");
        for (t, d) in h.times.iter().zip(&h.d) {
            for (i, j) in h.pairs() {
                rows.push_str(&format!("{},{i},{j},{}\n", crate::io::fmt(*t), crate::io::fmt(d[i][j])));
            }
        }
        std::fs::write(&path, rows).map_err(|e| LabError::io(format!("writing {}", path.display()), e))
    }
}

fn family_json(f: &QuasiGeodesicFamily) -> Value {
    json!({
        "x": f.x, "y": f.y, "beta": f.beta, "t1": f.t1, "t2": f.t2, "s": num(f.s), "a": num(f.a),
        "d_bar": num(f.d_bar), "intervals": f.interval_count, "degenerate": f.degenerate,
        "segments": f.segments.iter().map(|s| json!({
            "j": s.j, "t": s.t, "d": num(s.d), "certified": s.certified, "points": s.curve.points(),
        })).collect::<Vec<_>>(),
        "checks": f.checks.iter().map(|c| json!({
            "t": c.t, "segment": c.segment, "distance": num(c.distance), "length": num(c.length),
            "min_speed": num(c.min_speed), "max_speed": num(c.max_speed), "max_accel": num(c.max_accel),
            "margin_length": num(c.margin_length), "margin_speed": num(c.margin_speed),
            "margin_accel": num(c.margin_accel),
        })).collect::<Vec<_>>(),
    })
}

fn tube_json(t: &Tube) -> Value {
    let d = &t.diagnostics;
    json!({
        "radius": t.radius,
        "curve": t.curve.points(),
        "discs": t.discs.iter().map(|c| json!({"s": c.s, "center": c.center, "area": num(c.area)})).collect::<Vec<_>>(),
        "foliated": d.foliated, "crossings": d.crossings, "min_separation": num(d.min_separation),
        "sup_dpi": num(d.sup_dpi), "min_dpi": num(d.min_dpi), "c_emp": num(d.c_emp),
        "max_leaf_error": num(d.max_leaf_error),
    })
}
