//! File formats: binary field snapshots, CSV tables and the on-disk trace.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use l2flow_core::flow::{FlowConfig, FlowState, FlowTrace, HistoryRecord, Integrator};
use l2flow_core::functionals::EnergyReport;
use l2flow_core::{Field, MetricField, TorusGrid};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(format!("creating {}", dir.display()), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LabError::io(format!("creating {}", path.display()), e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| LabError::io(format!("opening {}", path.display()), e))
}

fn malformed(path: &Path, message: impl Into<String>) -> LabError {
    LabError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes a field as `N: u64`, `L: [f64; 4]`, name (`u32` byte length and
/// UTF-8), `comps: u64`, then every point's components, all little-endian.
pub fn write_snapshot(path: &Path, name: &str, field: &Field) -> Result<()> {
    let ctx = |e| LabError::io(format!("writing {}", path.display()), e);
    let mut w = create(path)?;
    let grid = field.grid();
    w.write_u64::<LittleEndian>(grid.n() as u64).map_err(ctx)?;
    for l in grid.periods() {
        w.write_f64::<LittleEndian>(l).map_err(ctx)?;
    }
    w.write_u32::<LittleEndian>(name.len() as u32).map_err(ctx)?;
    w.write_all(name.as_bytes()).map_err(ctx)?;
    w.write_u64::<LittleEndian>(field.comps() as u64).map_err(ctx)?;
    for &v in field.data() {
        w.write_f64::<LittleEndian>(v).map_err(ctx)?;
    }
    w.flush().map_err(ctx)
}

pub fn read_snapshot(path: &Path) -> Result<(String, Field)> {
    let mut r = open(path)?;
    let bad = |m: &str| malformed(path, m);
    let n = r.read_u64::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
    let mut periods = [0.0; 4];
    for p in periods.iter_mut() {
        *p = r.read_f64::<LittleEndian>().map_err(|_| bad("truncated header"))?;
    }
    let len = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
    if len > 4096 {
        return Err(bad("field name too long"));
    }
    let mut name = vec![0; len];
    r.read_exact(&mut name).map_err(|_| bad("truncated header"))?;
    let name = String::from_utf8(name).map_err(|_| bad("field name is not UTF-8"))?;
    let comps = r.read_u64::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
    let grid = TorusGrid::new(n, periods).map_err(|e| malformed(path, e.to_string()))?;
    if comps == 0 || comps > 1024 {
        return Err(bad("implausible component count"));
    }
    let mut data = vec![0.0; grid.len() * comps];
    r.read_f64_into::<LittleEndian>(&mut data).map_err(|_| bad("truncated body"))?;
    if r.read_u8().is_ok() {
        return Err(bad("trailing bytes"));
    }
    let field = Field::from_data(&grid, comps, data).map_err(|e| malformed(path, e.to_string()))?;
    Ok((name, field))
}

/// One row per grid point: the four indices, then the components.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| malformed(path, e.to_string());
    let mut header: Vec<String> = ["i0", "i1", "i2", "i3"].iter().map(|s| s.to_string()).collect();
    header.extend((0..field.comps()).map(|c| format!("c{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for idx in 0..field.grid().len() {
        let mut row: Vec<String> = field.grid().coords(idx).iter().map(|c| c.to_string()).collect();
        row.extend(field.at(idx).iter().map(|v| fmt(*v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| LabError::io(format!("writing {}", path.display()), e))
}

/// Shortest round-trip representation, so equal runs give equal bytes.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn parse(path: &Path, s: &str) -> Result<f64> {
    s.parse().map_err(|_| malformed(path, format!("not a number: {s:?}")))
}

pub fn write_history_csv(path: &Path, history: &[HistoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| malformed(path, e.to_string());
    w.write_record(HistoryRecord::CSV_HEADER).map_err(csv_err)?;
    for r in history {
        let d = |m: usize| r.sup_derivatives.map(|d| fmt(d[m])).unwrap_or_default();
        w.write_record([
            r.step.to_string(),
            fmt(r.t),
            fmt(r.dt),
            fmt(r.f),
            fmt(r.g),
            fmt(r.volume),
            fmt(r.sup_rm),
            d(0),
            d(1),
            d(2),
            fmt(r.grad_l2_sq),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| LabError::io(format!("writing {}", path.display()), e))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRecord>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header = r.headers().map_err(|e| malformed(path, e.to_string()))?.clone();
    if header.iter().ne(HistoryRecord::CSV_HEADER.iter().copied()) {
        return Err(malformed(path, "unexpected history header"));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| malformed(path, e.to_string()))?;
        let f = |i: usize| parse(path, &row[i]);
        let sup_derivatives = if row[7].is_empty() {
            None
        } else {
            Some([f(7)?, f(8)?, f(9)?])
        };
        out.push(HistoryRecord {
            step: row[0].parse().map_err(|_| malformed(path, "bad step"))?,
            t: f(1)?,
            dt: f(2)?,
            f: f(3)?,
            g: f(4)?,
            volume: f(5)?,
            sup_rm: f(6)?,
            sup_derivatives,
            grad_l2_sq: f(10)?,
        });
    }
    Ok(out)
}

/// `t, F, G, residual, volume` for every history record.
pub fn write_energy_csv(path: &Path, history: &[HistoryRecord]) -> Result<()> {
    let mut w = create(path)?;
    let ctx = |e| LabError::io(format!("writing {}", path.display()), e);
    writeln!(w, "{}", EnergyReport::CSV_HEADER).map_err(ctx)?;
    for r in history {
        let e = EnergyReport {
            f: r.f,
            g: r.g,
            gauss_bonnet_residual: r.f - 4.0 * r.g,
            volume: r.volume,
        };
        writeln!(w, "{}", e.csv_row(r.t)).map_err(ctx)?;
    }
    w.flush().map_err(ctx)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| malformed(path, e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| LabError::io(format!("writing {}", path.display()), e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| malformed(path, e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StoredConfig {
    safety: f64,
    curvature_scale: f64,
    midpoint: bool,
    max_retries: usize,
    energy_tolerance: f64,
    derivative_monitors: bool,
}

impl From<&FlowConfig> for StoredConfig {
    fn from(c: &FlowConfig) -> Self {
        Self {
            safety: c.safety,
            curvature_scale: c.curvature_scale,
            midpoint: c.integrator == Integrator::Midpoint,
            max_retries: c.max_retries,
            energy_tolerance: c.energy_tolerance,
            derivative_monitors: c.derivative_monitors,
        }
    }
}

impl From<&StoredConfig> for FlowConfig {
    fn from(c: &StoredConfig) -> Self {
        Self {
            safety: c.safety,
            curvature_scale: c.curvature_scale,
            integrator: if c.midpoint { Integrator::Midpoint } else { Integrator::Euler },
            max_retries: c.max_retries,
            energy_tolerance: c.energy_tolerance,
            derivative_monitors: c.derivative_monitors,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct StoredState {
    t: f64,
    f: f64,
    g: f64,
    volume: f64,
    sup_rm: f64,
    grad_l2_sq: f64,
    sup_derivatives: Option<[f64; 3]>,
    metric: String,
    velocity: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct StoredTrace {
    config: StoredConfig,
    states: Vec<StoredState>,
}

pub const TRACE_FILE: &str = "trace.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const ENERGY_FILE: &str = "energy.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Writes `history.csv`, `energy.csv`, `trace.json` and one metric and one
/// velocity snapshot per sampled state.
pub fn save_trace(dir: &Path, trace: &FlowTrace) -> Result<()> {
    write_history_csv(&dir.join(HISTORY_FILE), &trace.history)?;
    write_energy_csv(&dir.join(ENERGY_FILE), &trace.history)?;
    let mut states = Vec::with_capacity(trace.states.len());
    for (k, s) in trace.states.iter().enumerate() {
        let metric = format!("{SNAPSHOT_DIR}/state_{k:03}.metric.bin");
        let velocity = format!("{SNAPSHOT_DIR}/state_{k:03}.velocity.bin");
        write_snapshot(&dir.join(&metric), "metric", s.metric.field())?;
        write_snapshot(&dir.join(&velocity), "velocity", &s.velocity)?;
        states.push(StoredState {
            t: s.t,
            f: s.energy.f,
            g: s.energy.g,
            volume: s.energy.volume,
            sup_rm: s.sup_rm,
            grad_l2_sq: s.grad_l2_sq,
            sup_derivatives: s.sup_derivatives,
            metric,
            velocity,
        });
    }
    write_json(
        &dir.join(TRACE_FILE),
        &StoredTrace {
            config: (&trace.config).into(),
            states,
        },
    )
}

pub fn load_trace(dir: &Path) -> Result<FlowTrace> {
    let stored: StoredTrace = read_json(&dir.join(TRACE_FILE))?;
    let history = read_history_csv(&dir.join(HISTORY_FILE))?;
    let mut states = Vec::with_capacity(stored.states.len());
    for s in &stored.states {
        let load = |rel: &str, comps: usize| -> Result<Field> {
            let path: PathBuf = dir.join(rel);
            let (_, f) = read_snapshot(&path)?;
            if f.comps() != comps {
                return Err(malformed(&path, format!("expected {comps} components")));
            }
            Ok(f)
        };
        let metric = MetricField::new(load(&s.metric, 10)?)
            .map_err(|e| malformed(&dir.join(&s.metric), e.to_string()))?;
        let velocity = load(&s.velocity, 10)?;
        if velocity.grid() != metric.grid() {
            return Err(malformed(&dir.join(&s.velocity), "grid differs from the metric's"));
        }
        states.push(FlowState {
            t: s.t,
            metric,
            energy: EnergyReport {
                f: s.f,
                g: s.g,
                gauss_bonnet_residual: s.f - 4.0 * s.g,
                volume: s.volume,
            },
            sup_rm: s.sup_rm,
            grad_l2_sq: s.grad_l2_sq,
            velocity,
            sup_derivatives: s.sup_derivatives,
        });
    }
    FlowTrace::from_parts(states, history, (&stored.config).into())
        .map_err(|e| malformed(&dir.join(TRACE_FILE), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use l2flow_core::flow::{run, SampleSchedule};

    #[test]
    fn snapshot_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TorusGrid::new(8, [1.0, 2.0, 1.5, 1.0]).unwrap();
        let f = Field::from_fn(&grid, 3, |i, out| {
            for (c, o) in out.iter_mut().enumerate() {
                *o = i as f64 + 0.25 * c as f64;
            }
        });
        let p = dir.path().join("f.bin");
        write_snapshot(&p, "demo", &f).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 8 + 32 + 4 + 4 + 8 + 8 * 3 * grid.len());
        assert_eq!(&bytes[0..8], &8u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &2.0f64.to_le_bytes());
        assert_eq!(&bytes[44..48], b"demo");
        let (name, g) = read_snapshot(&p).unwrap();
        assert_eq!(name, "demo");
        assert_eq!(g.data(), f.data());
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_snapshot(&p), Err(LabError::Format { .. })));
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TorusGrid::unit(8).unwrap();
        let m = MetricField::band_limited(&grid, 0.02, 1, 3).unwrap();
        let cfg = FlowConfig {
            derivative_monitors: false,
            ..FlowConfig::default()
        };
        let trace = run(m, 2e-7, &SampleSchedule::Uniform(2), &cfg).unwrap();
        save_trace(dir.path(), &trace).unwrap();
        let back = load_trace(dir.path()).unwrap();
        assert_eq!(back.history, trace.history);
        assert_eq!(back.config, trace.config);
        assert_eq!(back.states.len(), trace.states.len());
        for (a, b) in back.states.iter().zip(&trace.states) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.metric.field().data(), b.metric.field().data());
            assert_eq!(a.velocity.data(), b.velocity.data());
        }
        let csv = fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
        assert!(csv.starts_with("step,t,dt,F,G,vol"));
        let small = dir.path().join("metric.csv");
        write_field_csv(&small, trace.states[0].metric.field()).unwrap();
        let text = fs::read_to_string(small).unwrap();
        assert_eq!(text.lines().count(), 1 + grid.len());
    }
}
