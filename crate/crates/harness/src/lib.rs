//! Experiment files and the table builders behind the `scc` CLI.
//!
//! An experiment file is JSON. It is either a bare network config, or an
//! object holding one `config` (or several labelled `curves`), an optional
//! memory `grid`, a `seed`, an `allocation_study` template and `simulate`
//! defaults. The presets under `presets/` regenerate the published figure data.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use scc_core::{
    run_trials, stw_curve, tradeoff_curve, ChannelError, ConfigError, ConfigFile, DemandPolicy,
    RateError, SchemeIndex, SimulationReport, SystemConfig, UpperBound,
};

/// Points used when no grid is given.
pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed experiment file: {0}")]
    Parse(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("grid {0:?} is not start:stop:count with 0 <= start <= stop")]
    Grid(String),
    #[error("experiment defines no network config")]
    MissingConfig,
    #[error("experiment has no allocation_study section")]
    MissingStudy,
    #[error("allocation study: {0}")]
    Study(String),
    #[error("simulate needs a scheme index (--idx p,q or simulate.idx)")]
    MissingIndex,
    #[error("scheme index {0:?} is not p,q")]
    Index(String),
    #[error("rate fraction {0} must be finite and non-negative")]
    RateFraction(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `count` evenly spaced points from `start` to `stop`, both included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn new(start: f64, stop: f64, count: usize) -> Result<Self, HarnessError> {
        let ok = start.is_finite() && stop.is_finite() && start >= 0.0 && stop >= start;
        if !ok {
            return Err(HarnessError::Grid(format!("{start}:{stop}:{count}")));
        }
        Ok(Self { start, stop, count })
    }

    pub fn points(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            c => {
                let step = (self.stop - self.start) / (c - 1) as f64;
                (0..c)
                    .map(|k| if k == c - 1 { self.stop } else { self.start + step * k as f64 })
                    .collect()
            }
        }
    }
}

impl FromStr for Grid {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Grid(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(bad());
        };
        let start = a.trim().parse().map_err(|_| bad())?;
        let stop = b.trim().parse().map_err(|_| bad())?;
        let count = c.trim().parse().map_err(|_| bad())?;
        Grid::new(start, stop, count).map_err(|_| bad())
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses `"p,q"`; the bounds are checked against a config later.
pub fn parse_index(s: &str) -> Result<(usize, usize), HarnessError> {
    let bad = || HarnessError::Index(s.to_string());
    let (p, q) = s.split_once(',').ok_or_else(bad)?;
    Ok((p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveFile {
    label: String,
    config: ConfigFile,
}

/// Heterogeneous network whose weak/strong split is varied.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationStudy {
    pub num_files: usize,
    pub packet_bits: u32,
    /// All `K` erasure probabilities, worst first.
    pub erasures: Vec<f64>,
    /// `K_w` choices; receivers `1..=K_w` get caches.
    pub weak_counts: Vec<usize>,
}

impl AllocationStudy {
    pub fn config_for(&self, num_weak: usize) -> Result<SystemConfig, HarnessError> {
        let k = self.erasures.len();
        if num_weak > k {
            return Err(HarnessError::Study(format!("K_w = {num_weak} exceeds K = {k}")));
        }
        Ok(SystemConfig::new(
            num_weak,
            k - num_weak,
            self.num_files,
            self.packet_bits,
            self.erasures.clone(),
        )?)
    }
}

/// Simulation parameters; any of them can be overridden on the command line.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub idx: Option<(usize, usize)>,
    #[serde(default = "default_fraction")]
    pub rate_fraction: f64,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_policy")]
    pub demand_policy: DemandPolicy,
}

fn default_fraction() -> f64 {
    0.9
}
fn default_n() -> u64 {
    200_000
}
fn default_trials() -> u64 {
    200
}
fn default_policy() -> DemandPolicy {
    DemandPolicy::WorstCaseScan
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            idx: None,
            rate_fraction: default_fraction(),
            n: default_n(),
            trials: default_trials(),
            demand_policy: default_policy(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    name: Option<String>,
    config: Option<ConfigFile>,
    #[serde(default)]
    curves: Vec<CurveFile>,
    grid: Option<Grid>,
    seed: Option<u64>,
    allocation_study: Option<AllocationStudy>,
    simulate: Option<SimulateSpec>,
}

/// A network, optionally labelled when an experiment holds several.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: Option<String>,
    pub config: SystemConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: Option<String>,
    pub curves: Vec<Curve>,
    pub grid: Option<Grid>,
    pub seed: u64,
    pub allocation_study: Option<AllocationStudy>,
    pub simulate: SimulateSpec,
}

impl Experiment {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        let is_bare = value.get("num_weak").is_some();
        if is_bare {
            let config: ConfigFile =
                serde_json::from_value(value).map_err(|e| HarnessError::Parse(e.to_string()))?;
            return Ok(Self {
                name: None,
                curves: vec![Curve {
                    label: None,
                    config: config.validate()?,
                }],
                grid: None,
                seed: 0,
                allocation_study: None,
                simulate: SimulateSpec::default(),
            });
        }
        let file: ExperimentFile =
            serde_json::from_value(value).map_err(|e| HarnessError::Parse(e.to_string()))?;
        let mut curves = Vec::new();
        if let Some(c) = file.config {
            curves.push(Curve {
                label: None,
                config: c.validate()?,
            });
        }
        for c in file.curves {
            curves.push(Curve {
                label: Some(c.label),
                config: c.config.validate()?,
            });
        }
        Ok(Self {
            name: file.name,
            curves,
            grid: file.grid,
            seed: file.seed.unwrap_or(0),
            allocation_study: file.allocation_study,
            simulate: file.simulate.unwrap_or_default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The single network of the experiment, or the first curve's.
    pub fn primary_config(&self) -> Result<&SystemConfig, HarnessError> {
        self.curves
            .first()
            .map(|c| &c.config)
            .ok_or(HarnessError::MissingConfig)
    }
}

/// One line of the tradeoff table.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub memory: f64,
    pub scc: f64,
    /// Absent for heterogeneous networks.
    pub stw: Option<f64>,
    /// Absent when the exhaustive bound is too large to evaluate.
    pub upper_bound: Option<f64>,
    pub best: SchemeIndex,
}

fn default_grid(max_memory: f64) -> Grid {
    Grid {
        start: 0.0,
        stop: max_memory,
        count: DEFAULT_GRID_POINTS,
    }
}

fn optional_bound(cfg: &SystemConfig) -> Result<Option<UpperBound>, HarnessError> {
    match UpperBound::new(cfg) {
        Ok(ub) => Ok(Some(ub)),
        Err(RateError::IntractableSize { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn tradeoff_rows(cfg: &SystemConfig, grid: Option<&Grid>) -> Result<Vec<TradeoffRow>, HarnessError> {
    let scc = tradeoff_curve(cfg);
    let stw = match stw_curve(cfg) {
        Ok(c) => Some(c),
        Err(RateError::StwUndefined) => None,
        Err(e) => return Err(e.into()),
    };
    let ub = optional_bound(cfg)?;
    let grid = grid.copied().unwrap_or_else(|| default_grid(scc.max_memory()));
    grid.points()
        .into_iter()
        .map(|m| {
            Ok(TradeoffRow {
                memory: m,
                scc: scc.envelope.rate_at(m),
                stw: stw.as_ref().map(|c| c.envelope.rate_at(m)),
                upper_bound: ub.as_ref().map(|u| u.at(m)).transpose()?,
                best: scc.envelope.best_at(m).expect("at least the (0,0) pair"),
            })
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_tradeoff_csv(rows: &[TradeoffRow], out: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["M", "R_scc_envelope", "R_stw_envelope", "R_upper_bound", "best_p", "best_q"])?;
    for r in rows {
        w.write_record([
            r.memory.to_string(),
            r.scc.to_string(),
            opt(r.stw),
            opt(r.upper_bound),
            r.best.p().to_string(),
            r.best.q().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(M, bound)` over the grid; the default grid matches the tradeoff table.
pub fn bound_rows(cfg: &SystemConfig, grid: Option<&Grid>) -> Result<Vec<(f64, f64)>, HarnessError> {
    let ub = UpperBound::new(cfg)?;
    let grid = grid
        .copied()
        .unwrap_or_else(|| default_grid(tradeoff_curve(cfg).max_memory()));
    grid.points()
        .into_iter()
        .map(|m| Ok((m, ub.at(m)?)))
        .collect()
}

pub fn write_bound_csv(rows: &[(f64, f64)], out: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["M", "R_upper_bound"])?;
    for (m, r) in rows {
        w.write_record([m.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Rate reachable with a total cache budget `K_w * M` for one weak count.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRow {
    pub num_weak: usize,
    pub total_cache: f64,
    pub rate: f64,
    pub upper_bound: Option<f64>,
    pub best: SchemeIndex,
}

pub fn allocation_rows(study: &AllocationStudy, grid: Option<&Grid>) -> Result<Vec<AllocationRow>, HarnessError> {
    if study.weak_counts.is_empty() {
        return Err(HarnessError::Study("weak_counts is empty".into()));
    }
    let mut prepared = Vec::with_capacity(study.weak_counts.len());
    for &kw in &study.weak_counts {
        let cfg = study.config_for(kw)?;
        let curve = tradeoff_curve(&cfg);
        let ub = optional_bound(&cfg)?;
        prepared.push((kw, curve, ub));
    }
    let grid = grid.copied().unwrap_or_else(|| {
        let top = prepared
            .iter()
            .map(|(kw, c, _)| *kw as f64 * c.max_memory())
            .fold(0.0, f64::max);
        default_grid(top)
    });
    let mut rows = Vec::new();
    for (kw, curve, ub) in &prepared {
        for t in grid.points() {
            let m = t / *kw as f64;
            rows.push(AllocationRow {
                num_weak: *kw,
                total_cache: t,
                rate: curve.envelope.rate_at(m),
                upper_bound: ub.as_ref().map(|u| u.at(m)).transpose()?,
                best: curve.envelope.best_at(m).expect("at least one pair"),
            });
        }
    }
    Ok(rows)
}

pub fn write_allocation_csv(rows: &[AllocationRow], out: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["num_weak", "total_cache", "rate", "upper_bound", "best_p", "best_q"])?;
    for r in rows {
        w.write_record([
            r.num_weak.to_string(),
            r.total_cache.to_string(),
            r.rate.to_string(),
            opt(r.upper_bound),
            r.best.p().to_string(),
            r.best.q().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs trials at `rate_fraction * R_(p,q)`.
pub fn simulate(cfg: &SystemConfig, spec: &SimulateSpec, seed: u64) -> Result<SimulationReport, HarnessError> {
    if !spec.rate_fraction.is_finite() || spec.rate_fraction < 0.0 {
        return Err(HarnessError::RateFraction(spec.rate_fraction));
    }
    let (p, q) = spec.idx.ok_or(HarnessError::MissingIndex)?;
    let idx = SchemeIndex::new(p, q, cfg.num_weak())?;
    let full = scc_core::achievable_pair(cfg, idx)?.rate;
    let report = run_trials(
        cfg,
        idx,
        spec.rate_fraction * full,
        spec.n,
        spec.trials,
        spec.demand_policy,
        seed,
    )?;
    Ok(report)
}

/// Output path for curve `label` of a multi-curve experiment:
/// `dir/stem_label.ext`.
pub fn labelled_path(out: &Path, label: &str) -> std::path::PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{label}.{ext}"),
        None => format!("{stem}_{label}"),
    };
    out.with_file_name(name)
}
