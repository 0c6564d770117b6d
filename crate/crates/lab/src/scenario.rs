//! Scenario files: TOML key-value text whose keys are the field names of
//! [`Scenario`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use l2flow_core::flow::{dt_stable, FlowConfig, FlowState, Integrator, SampleSchedule};
use l2flow_core::{MetricField, TorusGrid};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::suite::CheckId;

/// Largest perturbation amplitude the documented tolerances are tuned for.
pub const STABLE_EPS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Flat,
    /// `exp(2ε sin(2πk x^axis / L)) δ`.
    Conformal,
    /// `δ + ε h` with a seeded trigonometric `h`.
    BandLimited,
    /// The flat metric of a torus with unequal periods.
    Anisotropic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    Euler,
    Midpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    #[serde(default = "unit_periods")]
    pub periods: [f64; 4],
    pub generator: Generator,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub axis: usize,
    #[serde(default = "one")]
    pub wavenumber: u32,
    #[serde(default = "one")]
    pub max_wavenumber: u32,
    #[serde(default)]
    pub seed: u64,
    /// Final flow time. Exactly one of `t_final` and `t_final_steps` is set.
    #[serde(default)]
    pub t_final: Option<f64>,
    /// Final time as a multiple of the initial stable step.
    #[serde(default)]
    pub t_final_steps: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub curvature_scale: f64,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorName,
    /// `uniform:<count>`, `geometric:<count>:<first>` or `times:<t1>,<t2>,...`.
    #[serde(default = "default_sampler")]
    pub sampler: String,
    /// Check names, or `all`.
    #[serde(default = "default_checks")]
    pub checks: Vec<String>,
    /// Per-check tolerance overrides.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn unit_periods() -> [f64; 4] {
    [1.0; 4]
}

fn one() -> u32 {
    1
}

fn default_safety() -> f64 {
    FlowConfig::default().safety
}

fn default_integrator() -> IntegratorName {
    IntegratorName::Euler
}

fn default_sampler() -> String {
    "uniform:10".into()
}

fn default_checks() -> Vec<String> {
    vec!["all".into()]
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::io(format!("reading scenario {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("scenario name {:?} must be a plain file name", self.name));
        }
        TorusGrid::new(self.n, self.periods).map_err(|e| LabError::Config(e.to_string()))?;
        if !self.eps.is_finite() || self.eps < 0.0 {
            return bad(format!("eps must be finite and nonnegative, got {}", self.eps));
        }
        if self.axis >= 4 {
            return bad(format!("axis must be in 0..4, got {}", self.axis));
        }
        match (self.t_final, self.t_final_steps) {
            (Some(t), None) if t > 0.0 && t.is_finite() => {}
            (None, Some(s)) if s > 0.0 && s.is_finite() => {}
            _ => return bad("set exactly one positive value of t_final and t_final_steps".into()),
        }
        if !(self.safety > 0.0 && self.safety.is_finite()) {
            return bad(format!("safety must be positive, got {}", self.safety));
        }
        if !(self.curvature_scale >= 0.0 && self.curvature_scale.is_finite()) {
            return bad(format!("curvature_scale must be nonnegative, got {}", self.curvature_scale));
        }
        self.schedule()?;
        self.enabled_checks()?;
        for (name, tol) in &self.tolerances {
            if CheckId::from_name(name).is_none() {
                return bad(format!("tolerance given for unknown check {name:?}"));
            }
            if !tol.is_finite() {
                return bad(format!("tolerance of {name} is not finite"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> TorusGrid {
        TorusGrid::new(self.n, self.periods).expect("validated")
    }

    /// The initial metric; a non-positive-definite result is a numerical
    /// abort carrying the offending point.
    pub fn initial_metric(&self) -> Result<MetricField> {
        let grid = self.grid();
        let m = match self.generator {
            Generator::Flat | Generator::Anisotropic => Ok(MetricField::flat(&grid)),
            Generator::Conformal => MetricField::conformal_mode(&grid, self.eps, self.axis, self.wavenumber),
            Generator::BandLimited => MetricField::band_limited(&grid, self.eps, self.max_wavenumber, self.seed),
        };
        m.map_err(|e| LabError::numerical("initial metric", e))
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            safety: self.safety,
            curvature_scale: self.curvature_scale,
            integrator: match self.integrator {
                IntegratorName::Euler => Integrator::Euler,
                IntegratorName::Midpoint => Integrator::Midpoint,
            },
            ..FlowConfig::default()
        }
    }

    pub fn schedule(&self) -> Result<SampleSchedule> {
        let bad = || LabError::Config(format!("cannot parse sampler {:?}", self.sampler));
        let mut parts = self.sampler.splitn(2, ':');
        let kind = parts.next().unwrap_or("");
        let rest = parts.next().ok_or_else(bad)?;
        match kind {
            "uniform" => Ok(SampleSchedule::Uniform(rest.trim().parse().map_err(|_| bad())?)),
            "geometric" => {
                let (c, f) = rest.split_once(':').ok_or_else(bad)?;
                Ok(SampleSchedule::Geometric {
                    count: c.trim().parse().map_err(|_| bad())?,
                    first: f.trim().parse().map_err(|_| bad())?,
                })
            }
            "times" => rest
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()
                .map(SampleSchedule::Times),
            _ => Err(bad()),
        }
    }

    /// `t_final`, resolving `t_final_steps` against the initial stable step.
    pub fn resolve_t_final(&self, initial: &MetricField) -> Result<f64> {
        match (self.t_final, self.t_final_steps) {
            (Some(t), _) => Ok(t),
            (None, Some(steps)) => {
                let s = FlowState::new(initial.clone(), 0.0)
                    .map_err(|e| LabError::numerical("initial state", e))?;
                Ok(steps * dt_stable(initial, s.sup_rm, &self.flow_config()))
            }
            (None, None) => Err(LabError::Config("no final time".into())),
        }
    }

    /// Enabled checks in registry order, each once.
    pub fn enabled_checks(&self) -> Result<Vec<CheckId>> {
        let mut out = Vec::new();
        for name in &self.checks {
            if name == "all" {
                out.extend(CheckId::ALL.iter().copied().filter(|c| c.in_all(self)));
            } else {
                out.push(
                    CheckId::from_name(name)
                        .ok_or_else(|| LabError::Config(format!("unknown check {name:?}")))?,
                );
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    pub fn tolerance(&self, id: CheckId) -> f64 {
        self.tolerances.get(id.name()).copied().unwrap_or_else(|| id.default_tolerance(self))
    }

    /// Output directory: `L2FLOW_OUTPUT_DIR` wins over the scenario's own.
    pub fn resolve_output_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(crate::OUTPUT_DIR_ENV) {
            return PathBuf::from(p);
        }
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
name = "demo"
n = 8
generator = "band_limited"
eps = 0.05
seed = 7
t_final_steps = 3
sampler = "geometric:4:1e-9"
checks = ["energy_monotone", "volume_invariance", "energy_monotone"]
[tolerances]
volume_invariance = 1e-4
"#;

    #[test]
    fn parses_and_round_trips() {
        let s = Scenario::from_toml(TEXT).unwrap();
        assert_eq!(s.generator, Generator::BandLimited);
        assert_eq!(s.periods, [1.0; 4]);
        assert_eq!(
            s.enabled_checks().unwrap(),
            vec![CheckId::EnergyMonotone, CheckId::VolumeInvariance]
        );
        assert_eq!(s.tolerance(CheckId::VolumeInvariance), 1e-4);
        assert_eq!(
            s.schedule().unwrap(),
            SampleSchedule::Geometric { count: 4, first: 1e-9 }
        );
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_input() {
        for (from, to) in [
            ("n = 8", "n = 4"),
            ("eps = 0.05", "eps = -1.0"),
            ("t_final_steps = 3", "t_final = 0.0"),
            ("t_final_steps = 3", "t_final_steps = 3\nt_final = 1.0"),
            ("geometric:4:1e-9", "spiral:4"),
            ("\"volume_invariance\",", "\"no_such_check\","),
            ("seed = 7", "seed = 7\nunknown_key = 1"),
        ] {
            let text = TEXT.replace(from, to);
            assert!(matches!(Scenario::from_toml(&text), Err(LabError::Config(_))), "{to}");
        }
    }

    #[test]
    fn same_seed_same_metric() {
        let s = Scenario::from_toml(TEXT).unwrap();
        let a = s.initial_metric().unwrap();
        let b = s.initial_metric().unwrap();
        assert_eq!(a.field().data(), b.field().data());
    }
}
