//! Monte-Carlo experiment harness: configuration, paired-seed trials, sweeps,
//! aggregation and CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::build_dictionary;
use crate::error::{Error, Result};
use crate::estimators::{error_metric, format_error_db, music_estimate, run_sblmc, EstimateResult, Hyper, Mode};
use crate::scene::{simulate, SceneConfig, Snapshots};

/// Error assigned to exact recoveries when aggregating.
pub const EXACT_FLOOR_DB: f64 = -120.0;

pub const REPORTS_HEADER: &str = "method,sweep_value,seed,error_db,converged,iters,runtime_s";
pub const SUMMARY_HEADER: &str = "method,sweep_value,trials,median_db,mean_db,p10_db,p90_db,converged_frac";
pub const WINRATES_HEADER: &str = "sweep_value,method,opponent,win_rate";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sblmc,
    Ogsbi,
    Bcs,
    Music,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sblmc => "sblmc",
            Method::Ogsbi => "ogsbi",
            Method::Bcs => "bcs",
            Method::Music => "music",
        }
    }

    pub fn sbl_mode(self) -> Option<Mode> {
        match self {
            Method::Sblmc => Some(Mode::Full),
            Method::Ogsbi => Some(Mode::NoCoupling),
            Method::Bcs => Some(Mode::OnGrid),
            Method::Music => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sblmc" => Ok(Method::Sblmc),
            "ogsbi" => Ok(Method::Ogsbi),
            "bcs" => Ok(Method::Bcs),
            "music" => Ok(Method::Music),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    CouplingDb,
    GridStepDeg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_fine_step")]
    pub music_fine_step_deg: f64,
    #[serde(default)]
    pub output_path: Option<String>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Sblmc, Method::Ogsbi, Method::Bcs, Method::Music]
}

fn default_trials() -> usize {
    1
}

fn default_fine_step() -> f64 {
    0.01
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            hyper: Hyper::default(),
            methods: default_methods(),
            trials: default_trials(),
            sweep: None,
            music_fine_step_deg: default_fine_step(),
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.hyper.validate()?;
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must not be empty".into()));
        }
        if !(self.music_fine_step_deg > 0.0) {
            return Err(Error::InvalidConfig("music_fine_step_deg must be positive".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::InvalidConfig("sweep values must not be empty".into()));
            }
            let increasing = sweep.values.windows(2).all(|w| w[1] > w[0]);
            let decreasing = sweep.values.windows(2).all(|w| w[1] < w[0]);
            if !(increasing || decreasing) {
                return Err(Error::InvalidConfig("sweep values must be strictly monotone".into()));
            }
            for &v in &sweep.values {
                self.scene_for(Some(v)).validate()?;
            }
        }
        Ok(())
    }

    /// Scene configuration with the sweep axis set to `sweep_value`.
    pub fn scene_for(&self, sweep_value: Option<f64>) -> SceneConfig {
        let mut scene = self.scene.clone();
        if let (Some(sweep), Some(v)) = (&self.sweep, sweep_value) {
            match sweep.axis {
                SweepAxis::SnrDb => scene.snr_db = v,
                SweepAxis::CouplingDb => scene.coupling_db = v,
                SweepAxis::GridStepDeg => scene.grid.step_deg = v,
            }
        }
        scene
    }

    /// `scene.seed + i` for trial `i`; identical across methods so comparisons are paired.
    pub fn trial_seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|i| self.scene.seed.wrapping_add(i)).collect()
    }

    fn sweep_values(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(sweep) => sweep.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub method: Method,
    pub sweep_value: Option<f64>,
    pub seed: u64,
    /// `-inf` for exact recovery, `+inf` when the estimator failed.
    pub error_db: f64,
    pub doas_deg: Vec<f64>,
    pub runtime_s: f64,
    pub converged: bool,
    pub iters: usize,
}

/// Dispatch `method` on `snaps` with the config's hyperparameters; `k` defaults to the scene's target count.
pub fn estimate_snapshots(
    cfg: &ExperimentConfig,
    method: Method,
    snaps: &Snapshots,
    k: Option<usize>,
) -> Result<EstimateResult> {
    let scene = &snaps.config;
    let k = k.unwrap_or(scene.k_targets);
    let grid = scene.grid.build()?;
    match method.sbl_mode() {
        Some(mode) => {
            let dict = build_dictionary(&grid, &scene.array)?;
            run_sblmc(&snaps.r, &dict, &cfg.hyper, k, mode)
        }
        None => {
            let range = (grid.min_deg(), grid.max_deg());
            let m = music_estimate(&snaps.r, &scene.array, k, cfg.music_fine_step_deg, range)?;
            Ok(EstimateResult {
                method: method.name().to_string(),
                spectrum: m.pseudospectrum,
                angles_deg: m.angles_deg,
                doas_deg: m.doas_deg,
                state: None,
                trace: Vec::new(),
                converged: true,
                iters: 0,
                warnings: Vec::new(),
            })
        }
    }
}

/// Run one estimator on already generated snapshots and score it.
pub fn run_method(cfg: &ExperimentConfig, method: Method, snaps: &Snapshots, sweep_value: Option<f64>) -> TrialReport {
    let start = Instant::now();
    let outcome = estimate_snapshots(cfg, method, snaps, None);
    let runtime_s = start.elapsed().as_secs_f64();
    let seed = snaps.config.seed;
    let (doas_deg, error_db, converged, iters) = match outcome {
        Ok(res) => {
            let err = error_metric(&res.doas_deg, &snaps.scene.thetas_deg).unwrap_or(f64::INFINITY);
            (res.doas_deg, err, res.converged, res.iters)
        }
        Err(e) => {
            log::warn!("{} failed on seed {seed}: {e}", method.name());
            (Vec::new(), f64::INFINITY, false, 0)
        }
    };
    TrialReport { method, sweep_value, seed, error_db, doas_deg, runtime_s, converged, iters }
}

/// Generate the scene for `seed` and run `method` on it.
pub fn run_trial(cfg: &ExperimentConfig, method: Method, seed: u64, sweep_value: Option<f64>) -> Result<TrialReport> {
    let snaps = simulate(&cfg.scene_for(sweep_value), seed)?;
    Ok(run_method(cfg, method, &snaps, sweep_value))
}

/// Worker count from `COUPLED_DOA_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("COUPLED_DOA_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Every (sweep value, method, seed) combination, ordered by method, sweep value, seed.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<TrialReport>> {
    cfg.validate()?;
    let sweep_values = cfg.sweep_values();
    let seeds = cfg.trial_seeds();
    let jobs: Vec<(usize, Option<f64>, u64)> = sweep_values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| seeds.iter().map(move |&s| (i, v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let per_scene: Vec<Result<Vec<TrialReport>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(_, value, seed)| {
                let snaps = simulate(&cfg.scene_for(value), seed)?;
                Ok(cfg.methods.iter().map(|&m| run_method(cfg, m, &snaps, value)).collect())
            })
            .collect()
    });
    let mut keyed = Vec::with_capacity(jobs.len() * cfg.methods.len());
    for (&(value_idx, _, _), reports) in jobs.iter().zip(per_scene) {
        for (method_idx, report) in reports?.into_iter().enumerate() {
            keyed.push(((method_idx, value_idx, report.seed), report));
        }
    }
    keyed.sort_by_key(|(key, _)| *key);
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub sweep_value: Option<f64>,
    pub trials: usize,
    pub median_db: f64,
    pub mean_db: f64,
    pub p10_db: f64,
    pub p90_db: f64,
    pub converged_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub sweep_value: Option<f64>,
    pub method: Method,
    pub opponent: Method,
    /// Fraction of paired seeds where `method` has the lower error; ties count half.
    pub win_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub summaries: Vec<Summary>,
    pub win_rates: Vec<WinRate>,
}

impl Aggregate {
    pub fn summary(&self, method: Method, sweep_value: Option<f64>) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.method == method && s.sweep_value == sweep_value)
    }

    pub fn win_rate(&self, method: Method, opponent: Method, sweep_value: Option<f64>) -> Option<f64> {
        self.win_rates
            .iter()
            .find(|w| w.method == method && w.opponent == opponent && w.sweep_value == sweep_value)
            .map(|w| w.win_rate)
    }
}

fn floored(v: f64) -> f64 {
    if v == f64::NEG_INFINITY {
        EXACT_FLOOR_DB
    } else {
        v
    }
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bit pattern key so sweep values can index ordered maps.
fn value_key(v: Option<f64>) -> Option<u64> {
    v.map(f64::to_bits)
}

/// Per-(method, sweep value) statistics and paired win rates; independent of report order.
pub fn aggregate(reports: &[TrialReport]) -> Aggregate {
    let mut groups: BTreeMap<(Method, Option<u64>), Vec<&TrialReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.method, value_key(r.sweep_value))).or_default().push(r);
    }
    let mut summaries: Vec<Summary> = groups
        .iter()
        .map(|(&(method, _), rs)| {
            let mut errs: Vec<f64> = rs.iter().map(|r| floored(r.error_db)).collect();
            errs.sort_by(f64::total_cmp);
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            Summary {
                method,
                sweep_value: rs[0].sweep_value,
                trials: rs.len(),
                median_db: percentile(&errs, 0.5),
                mean_db: mean,
                p10_db: percentile(&errs, 0.1),
                p90_db: percentile(&errs, 0.9),
                converged_frac: rs.iter().filter(|r| r.converged).count() as f64 / rs.len() as f64,
            }
        })
        .collect();
    summaries.sort_by(|a, b| {
        a.method.cmp(&b.method).then(a.sweep_value.unwrap_or(0.0).total_cmp(&b.sweep_value.unwrap_or(0.0)))
    });

    let mut by_value: BTreeMap<Option<u64>, BTreeMap<Method, BTreeMap<u64, f64>>> = BTreeMap::new();
    for r in reports {
        by_value
            .entry(value_key(r.sweep_value))
            .or_default()
            .entry(r.method)
            .or_default()
            .insert(r.seed, floored(r.error_db));
    }
    let mut win_rates = Vec::new();
    for (&key, methods) in &by_value {
        let sweep_value = key.map(f64::from_bits);
        for (&method, mine) in methods {
            for (&opponent, theirs) in methods {
                let mut score = 0.0;
                let mut count = 0usize;
                for (seed, &a) in mine {
                    if let Some(&b) = theirs.get(seed) {
                        count += 1;
                        score += if a < b {
                            1.0
                        } else if a == b {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
                if count > 0 {
                    win_rates.push(WinRate { sweep_value, method, opponent, win_rate: score / count as f64 });
                }
            }
        }
    }
    Aggregate { summaries, win_rates }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

pub fn reports_csv(reports: &[TrialReport]) -> String {
    let mut out = format!("{REPORTS_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method.name(),
            fmt_value(r.sweep_value),
            r.seed,
            format_error_db(r.error_db),
            r.converged,
            r.iters,
            r.runtime_s
        );
    }
    out
}

pub fn summary_csv(agg: &Aggregate) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in &agg.summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.method.name(),
            fmt_value(s.sweep_value),
            s.trials,
            s.median_db,
            s.mean_db,
            s.p10_db,
            s.p90_db,
            s.converged_frac
        );
    }
    out
}

pub fn winrates_csv(agg: &Aggregate) -> String {
    let mut out = format!("{WINRATES_HEADER}\n");
    for w in &agg.win_rates {
        let _ = writeln!(out, "{},{},{},{}", fmt_value(w.sweep_value), w.method.name(), w.opponent.name(), w.win_rate);
    }
    out
}

/// Parse a `reports.csv` body back into reports (DOAs are not stored in the CSV).
pub fn parse_reports_csv(text: &str) -> Result<Vec<TrialReport>> {
    let bad = |line: usize, what: &str| Error::InvalidConfig(format!("reports.csv line {line}: {what}"));
    let mut lines = text.lines();
    if lines.next() != Some(REPORTS_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(i + 2, "expected 7 fields"));
            }
            Ok(TrialReport {
                method: f[0].parse()?,
                sweep_value: if f[1].is_empty() {
                    None
                } else {
                    Some(f[1].parse().map_err(|_| bad(i + 2, "sweep_value"))?)
                },
                seed: f[2].parse().map_err(|_| bad(i + 2, "seed"))?,
                error_db: crate::estimators::parse_error_db(f[3]).ok_or_else(|| bad(i + 2, "error_db"))?,
                doas_deg: Vec::new(),
                converged: f[4].parse().map_err(|_| bad(i + 2, "converged"))?,
                iters: f[5].parse().map_err(|_| bad(i + 2, "iters"))?,
                runtime_s: f[6].parse().map_err(|_| bad(i + 2, "runtime_s"))?,
            })
        })
        .collect()
}

/// Write `reports.csv`, `summary.csv` and `winrates.csv` into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, reports: &[TrialReport]) -> Result<Aggregate> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let agg = aggregate(reports);
    for (name, body) in [
        ("reports.csv", reports_csv(reports)),
        ("summary.csv", summary_csv(&agg)),
        ("winrates.csv", winrates_csv(&agg)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(agg)
}
