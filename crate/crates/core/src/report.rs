//! Experiment configuration, provenance records, output files and the
//! plain-text results table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::market_data::YearMonth;
use crate::simulation::{Histogram, OutcomeStats, PathDiagnostics, Replay, DEFAULT_THRESHOLDS};
use crate::strategy::{Scenario, StrategySpec};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

/// Where an output came from: the command, a hash of its effective
/// configuration and hashes of every input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Self {
        let canonical = serde_json::to_vec(config).expect("config serializes");
        Self {
            tool: format!("glidepath {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config_hash: sha256_hex(&canonical),
            inputs: BTreeMap::new(),
        }
    }

    /// Record an input file by the name it was given under.
    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn add_hash(&mut self, name: &str, hash: String) {
        self.inputs.insert(name.to_string(), hash);
    }

    /// `# key: value` lines for CSV headers.
    pub fn csv_comment(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# tool: {}", self.tool);
        let _ = writeln!(s, "# command: {}", self.command);
        let _ = writeln!(s, "# config_hash: {}", self.config_hash);
        for (name, hash) in &self.inputs {
            let _ = writeln!(s, "# input {name}: {hash}");
        }
        s
    }
}

/// Evaluation modes of a report run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Synthetic,
    Bootstrap,
    Replay,
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Synthetic]
}

fn default_seed() -> u64 {
    42
}

fn default_paths() -> usize {
    100_000
}

fn default_resamples() -> usize {
    10_000
}

fn default_block() -> f64 {
    2.0
}

fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}

fn default_replay_start() -> YearMonth {
    YearMonth { year: 1985, month: 1 }
}

/// One reproducible experiment. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub params: Option<PathBuf>,
    pub scenario: Scenario,
    pub strategies: Vec<StrategySpec>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_resamples")]
    pub n_resamples: usize,
    #[serde(default = "default_block")]
    pub block_years: f64,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_replay_start")]
    pub replay_start: YearMonth,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let mut cfg: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.as_mut() {
            fix(p);
        }
        if let Some(p) = self.params.as_mut() {
            fix(p);
        }
        for s in &mut self.strategies {
            if let StrategySpec::Adaptive(p) = s {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.strategies.is_empty() {
            return bad("no strategies listed".into());
        }
        if self.n_paths == 0 || self.n_resamples == 0 {
            return bad("n_paths and n_resamples must be positive".into());
        }
        if !(self.block_years > 0.0) {
            return bad(format!("block_years = {} must be > 0", self.block_years));
        }
        if self.modes.contains(&Mode::Synthetic) && self.params.is_none() && self.data.is_none() {
            return bad("synthetic mode needs params or data".into());
        }
        let needs_data = self.modes.iter().any(|m| matches!(m, Mode::Bootstrap | Mode::Replay));
        if needs_data && self.data.is_none() {
            return bad("bootstrap and replay modes need a data file".into());
        }
        let mut files: Vec<&PathBuf> = self.data.iter().chain(self.params.iter()).collect();
        files.extend(self.strategies.iter().filter_map(|s| match s {
            StrategySpec::Adaptive(p) => Some(p),
            _ => None,
        }));
        for f in files {
            if !f.is_file() {
                return bad(format!("referenced file {} does not exist", f.display()));
            }
        }
        Ok(())
    }
}

/// Human-readable name of a strategy row.
pub fn strategy_name(spec: &StrategySpec) -> String {
    match spec {
        StrategySpec::Constant(p) => format!("Constant proportion (p={p})"),
        StrategySpec::Glide(_) => "Deterministic glide path".to_string(),
        StrategySpec::Adaptive(_) => "Optimal adaptive".to_string(),
    }
}

fn thousands(x: f64) -> String {
    let rounded = (x / 1000.0).round() as i64 * 1000;
    let digits = rounded.unsigned_abs().to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if rounded < 0 {
        format!("-${out}")
    } else {
        format!("${out}")
    }
}

/// Results table: dollars to the nearest 1,000, probabilities to 2 decimals.
pub fn render_table(rows: &[(String, OutcomeStats)]) -> String {
    let thresholds: Vec<f64> = rows
        .first()
        .map(|(_, s)| s.shortfall_probs.iter().map(|p| p.threshold).collect())
        .unwrap_or_default();
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(8).max(8);
    let mut header = format!("{:<name_w$}  {:>12}  {:>12}", "Strategy", "E[W_T]", "std[W_T]");
    for t in &thresholds {
        let _ = write!(header, "  {:>14}", format!("W_T < {}", thousands(*t)));
    }
    let mut out = String::new();
    out.push_str(&header);
    out.push('\n');
    out.push_str(&"-".repeat(header.len()));
    out.push('\n');
    for (name, s) in rows {
        let _ = write!(out, "{:<name_w$}  {:>12}  {:>12}", name, thousands(s.mean), thousands(s.std));
        for p in &s.shortfall_probs {
            let _ = write!(out, "  {:>14.2}", p.probability);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub strategy: String,
    pub mode: Mode,
    pub stats: OutcomeStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub provenance: Provenance,
    pub results: Vec<StatsRow>,
}

pub fn diagnostics_csv(provenance: &Provenance, diagnostics: &PathDiagnostics, dt: f64) -> String {
    let mut s = provenance.csv_comment();
    s.push_str("date,mean_p,std_p\n");
    for (t, (m, sd)) in diagnostics.mean_p.iter().zip(&diagnostics.std_p).enumerate() {
        let _ = writeln!(s, "{},{m},{sd}", t as f64 * dt);
    }
    s
}

pub fn replay_csv(provenance: &Provenance, replay: &Replay) -> String {
    let mut s = provenance.csv_comment();
    s.push_str("year");
    for t in &replay.trajectories {
        let _ = write!(s, ",{}", t.label.replace(',', ";"));
    }
    s.push('\n');
    for (k, end) in replay.period_ends.iter().enumerate() {
        let _ = write!(s, "{}", end.year);
        for t in &replay.trajectories {
            let _ = write!(s, ",{}", t.wealth[k]);
        }
        s.push('\n');
    }
    s
}

/// One histogram section; `fitted` and `normal` give model densities at the
/// bin centers when available.
pub struct HistogramSection<'a> {
    pub series: String,
    pub histogram: &'a Histogram,
    pub fitted: Option<Vec<f64>>,
    pub normal: Option<Vec<f64>>,
}

pub fn histogram_csv(provenance: &Provenance, sections: &[HistogramSection<'_>]) -> String {
    let mut s = provenance.csv_comment();
    s.push_str("series,bin_left,bin_right,density,fitted_density,normal_density\n");
    for sec in sections {
        let h = sec.histogram;
        for (k, d) in h.densities.iter().enumerate() {
            let opt = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v[k].to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{d},{},{}",
                sec.series,
                h.edges[k],
                h.edges[k + 1],
                opt(&sec.fitted),
                opt(&sec.normal)
            );
        }
    }
    s
}
