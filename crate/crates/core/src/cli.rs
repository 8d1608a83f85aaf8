//! Command-line front end: `ingest`, `fit`, `solve`, `simulate`,
//! `bootstrap`, `replay` and `report`.

use std::fmt::Write as _;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::adaptive::{calibrate_target, solve_policy, GridConfig, McConfig, PolicyGrid};
use crate::error::{Error, SimulationError};
use crate::glide::{optimize_glide, wealth_moments, PeriodMoments};
use crate::jump_model::{fit_mle, DensityGrid, FitOptions, KouParams};
use crate::market_data::{load_monthly_series, standardize_returns, RealMarket, YearMonth};
use crate::report::{
    diagnostics_csv, histogram_csv, read_file, read_json, render_table, replay_csv, strategy_name,
    to_json_pretty, write_file, ExperimentConfig, HistogramSection, Mode, Provenance, StatsFile,
    StatsRow,
};
use crate::simulation::{
    histogram, replay_historical, run_bootstrap, run_monte_carlo, Histogram, PairedReturns,
    SimulationRun,
};
use crate::strategy::{Scenario, Strategy, StrategySpec};

#[derive(Debug, Parser)]
#[command(name = "glidepath", version, about = "Adaptive and deterministic glide paths for DC savings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deflate a market file and write monthly real log returns.
    Ingest(IngestArgs),
    /// Fit the jump diffusion and the real bond drift.
    Fit(FitArgs),
    /// Solve the adaptive policy and the matched optimal glide path.
    Solve(SolveArgs),
    /// Synthetic-market Monte Carlo.
    Simulate(SimulateArgs),
    /// Block-bootstrap evaluation on historical returns.
    Bootstrap(BootstrapArgs),
    /// Single historical path.
    Replay(ReplayArgs),
    /// Run an experiment config and print the results table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output parameter file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6000)]
    pub max_evals_per_start: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 512)]
    pub nodes: usize,
    #[arg(long, default_value_t = 201)]
    pub controls: usize,
    #[arg(long, default_value_t = 512)]
    pub quadrature_nodes: usize,
}

impl GridArgs {
    fn config(&self) -> GridConfig {
        GridConfig {
            n_nodes: self.nodes,
            n_controls: self.controls,
            quadrature_nodes: self.quadrature_nodes,
            ..GridConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(required = true, multiple = false, id = "aim")]
pub struct Aim {
    /// Calibrate W* so that the adaptive mean equals this goal.
    #[arg(long)]
    pub goal_mean: Option<f64>,
    /// Goal equal to the mean of a constant-proportion strategy.
    #[arg(long)]
    pub match_constant: Option<f64>,
    /// Fixed target W*, no calibration.
    #[arg(long)]
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub aim: Aim,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Monte Carlo paths per calibration step.
    #[arg(long, default_value_t = 200_000)]
    pub n_paths: usize,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StrategyArgs {
    /// Constant equity fraction (repeatable).
    #[arg(long)]
    pub constant: Vec<f64>,
    /// Glide path file `{"glide": [...]}` (repeatable).
    #[arg(long)]
    pub glide: Vec<PathBuf>,
    /// Adaptive policy file written by `solve` (repeatable).
    #[arg(long)]
    pub policy: Vec<PathBuf>,
}

impl StrategyArgs {
    fn specs(&self) -> Result<Vec<StrategySpec>, Error> {
        let mut out: Vec<StrategySpec> = self.constant.iter().map(|p| StrategySpec::Constant(*p)).collect();
        for g in &self.glide {
            out.push(StrategySpec::Glide(load_glide(g)?));
        }
        out.extend(self.policy.iter().cloned().map(StrategySpec::Adaptive));
        if out.is_empty() {
            return Err(Error::Config("give at least one of --constant, --glide, --policy".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub strategies: StrategyArgs,
    #[arg(long, default_value_t = 100_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [500_000.0, 650_000.0, 800_000.0])]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub strategies: StrategyArgs,
    #[arg(long, default_value_t = 2.0)]
    pub block_years: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n_resamples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [500_000.0, 650_000.0, 800_000.0])]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub strategies: StrategyArgs,
    /// First month of the replay window.
    #[arg(long, default_value = "1985-01")]
    pub start: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Glide path file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlideFile {
    pub glide: Vec<f64>,
}

fn load_glide(path: &Path) -> Result<Vec<f64>, Error> {
    Ok(read_json::<GlideFile>(path)?.glide)
}

/// Loaded inputs with their provenance hashes.
struct Inputs {
    provenance: Provenance,
}

impl Inputs {
    fn new<C: Serialize>(command: &str, config: &C) -> Self {
        Self {
            provenance: Provenance::new(command, config),
        }
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>, Error> {
        let bytes = read_file(path)?;
        self.provenance.add_input(path, &bytes);
        Ok(bytes)
    }

    fn json<T: for<'de> Deserialize<'de>>(&mut self, path: &Path) -> Result<T, Error> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    fn market(&mut self, path: &Path) -> Result<RealMarket, Error> {
        let bytes = self.read(path)?;
        Ok(RealMarket::from_series(&load_monthly_series(Cursor::new(bytes))?)?)
    }

    fn params(&mut self, path: &Path) -> Result<KouParams, Error> {
        let p: KouParams = self.json(path)?;
        p.validate()?;
        Ok(p)
    }

    fn scenario(&mut self, path: &Path) -> Result<Scenario, Error> {
        let s: Scenario = self.json(path)?;
        s.validate()?;
        Ok(s)
    }

    fn strategy(&mut self, spec: &StrategySpec, scenario: &Scenario) -> Result<Strategy, Error> {
        let s = match spec {
            StrategySpec::Constant(p) => Strategy::Constant(*p),
            StrategySpec::Glide(g) => Strategy::Glide(g.clone()),
            StrategySpec::Adaptive(path) => {
                let grid: PolicyGrid = self.json(path)?;
                if grid.scenario != *scenario {
                    warn!("policy {} was solved for a different scenario", path.display());
                }
                Strategy::Adaptive(Arc::new(grid))
            }
        };
        s.validate(scenario)?;
        Ok(s)
    }
}

/// JSON object with a `provenance` key added.
fn with_provenance<T: Serialize>(value: &T, provenance: &Provenance) -> String {
    let mut v = serde_json::to_value(value).expect("value serializes");
    if let serde_json::Value::Object(map) = &mut v {
        map.insert(
            "provenance".into(),
            serde_json::to_value(provenance).expect("provenance serializes"),
        );
    }
    to_json_pretty(&v)
}

pub fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Bootstrap(a) => cmd_bootstrap(&a),
        Command::Replay(a) => cmd_replay(&a),
        Command::Report(a) => cmd_report(&a).map(|table| print!("{table}")),
    }
}

#[derive(Serialize)]
struct MarketSummary {
    first_return_month: YearMonth,
    months: usize,
    bond_drift: f64,
    equity_mean: f64,
    equity_std: f64,
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<(), Error> {
    let mut inputs = Inputs::new("ingest", a);
    let market = inputs.market(&a.data)?;
    let prov = inputs.provenance;
    let mut csv = prov.csv_comment();
    csv.push_str("month,equity_real_log_return,bond_real_log_return\n");
    for (k, (e, b)) in market.equity.log_returns.iter().zip(&market.bond.log_returns).enumerate() {
        let _ = writeln!(csv, "{},{e},{b}", market.equity.start_month.plus_months(k as i64));
    }
    write_file(&a.out_dir.join("returns.csv"), csv.as_bytes())?;
    let xs = &market.equity.log_returns;
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let summary = MarketSummary {
        first_return_month: market.equity.start_month,
        months: market.n_months(),
        bond_drift: market.bond_drift(),
        equity_mean: mean,
        equity_std: std,
    };
    write_file(&a.out_dir.join("market.json"), with_provenance(&summary, &prov).as_bytes())
}

pub fn cmd_fit(a: &FitArgs) -> Result<(), Error> {
    let mut inputs = Inputs::new("fit", a);
    let market = inputs.market(&a.data)?;
    let options = FitOptions {
        max_evals_per_start: a.max_evals_per_start,
        ..FitOptions::default()
    };
    let report = fit_mle(&market.equity, 1.0 / 12.0, &options)?;
    let mut params = report.params.clone();
    params.r = market.bond_drift();
    params.validate()?;
    info!("fitted {params:?}, log-likelihood {}", report.log_likelihood);
    write_file(&a.out, with_provenance(&params, &inputs.provenance).as_bytes())?;
    let report_path = a.out.with_extension("fit.json");
    write_file(&report_path, with_provenance(&report, &inputs.provenance).as_bytes())
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    w_star: f64,
    goal_mean: Option<f64>,
    adaptive_mc_mean: f64,
    adaptive_mc_standard_error: f64,
    calibration_solves: usize,
    initial_value: f64,
    glide_mean: f64,
    glide_std: f64,
    params_hash: String,
}

pub fn cmd_solve(a: &SolveArgs) -> Result<(), Error> {
    let mut inputs = Inputs::new("solve", a);
    let params = inputs.params(&a.params)?;
    let scenario = inputs.scenario(&a.scenario)?;
    let grid_cfg = a.grid.config();
    let mc = McConfig {
        n_paths: a.n_paths,
        seed: a.seed,
    };
    let pm = PeriodMoments::from_params(&params, scenario.dt())?;
    let goal = match (a.aim.goal_mean, a.aim.match_constant) {
        (Some(g), _) => Some(g),
        (None, Some(p)) => Some(wealth_moments(&vec![p; scenario.n_periods()], &scenario, &pm)?.mean),
        _ => None,
    };
    let (grid, mean, se, solves) = match (goal, a.aim.target) {
        (Some(g), _) => {
            let cal = calibrate_target(&params, &scenario, g, &grid_cfg, &mc)?;
            (cal.grid, cal.mean, cal.standard_error, cal.iterations)
        }
        (None, Some(w_star)) => {
            let grid = solve_policy(&params, &scenario, w_star, &grid_cfg)?;
            let strategy = Strategy::Adaptive(Arc::new(grid.clone()));
            let st = run_monte_carlo(&strategy, &scenario, &params, mc.n_paths, mc.seed)?.stats(&[])?;
            (grid, st.mean, st.mc_standard_error_mean, 1)
        }
        _ => return Err(Error::Config("one of --goal-mean, --match-constant, --target".into())),
    };
    let glide_target = goal.unwrap_or(mean);
    let glide = optimize_glide(&scenario, &pm, glide_target)?;
    let prov = &inputs.provenance;
    write_file(&a.out_dir.join("policy.json"), with_provenance(&grid, prov).as_bytes())?;
    write_file(
        &a.out_dir.join("glide.json"),
        with_provenance(&GlideFile { glide: glide.glide.clone() }, prov).as_bytes(),
    )?;
    let summary = SolveSummary {
        w_star: grid.w_star,
        goal_mean: goal,
        adaptive_mc_mean: mean,
        adaptive_mc_standard_error: se,
        calibration_solves: solves,
        initial_value: grid.initial_value(),
        glide_mean: glide.moments.mean,
        glide_std: glide.moments.std(),
        params_hash: params.hash_hex(),
    };
    write_file(&a.out_dir.join("solve.json"), with_provenance(&summary, prov).as_bytes())
}

fn build_strategies(
    inputs: &mut Inputs,
    specs: &[StrategySpec],
    scenario: &Scenario,
) -> Result<Vec<(String, Strategy)>, Error> {
    specs
        .iter()
        .map(|spec| Ok((strategy_name(spec), inputs.strategy(spec, scenario)?)))
        .collect()
}

/// Diagnostics from the adaptive run when present, else the last run.
fn pick_diagnostics<'a>(runs: &'a [(String, Strategy, SimulationRun)]) -> Option<&'a SimulationRun> {
    runs.iter()
        .find(|(_, s, _)| !s.is_deterministic())
        .or(runs.last())
        .map(|(_, _, r)| r)
}

fn wealth_histograms(runs: &[(String, Strategy, SimulationRun)]) -> Result<Vec<(String, Histogram)>, Error> {
    let mut upper: f64 = 0.0;
    for (_, _, r) in runs {
        let mut sorted = r.terminal_wealth.clone();
        sorted.sort_by(f64::total_cmp);
        let k = ((sorted.len() as f64 * 0.99) as usize).min(sorted.len() - 1);
        upper = upper.max(sorted[k]);
    }
    if !(upper > 0.0) {
        upper = 1.0;
    }
    runs.iter()
        .map(|(name, _, r)| {
            let h = histogram(&r.terminal_wealth, 60, Some((0.0, upper)))?;
            Ok((format!("terminal_wealth:{name}"), h))
        })
        .collect()
}

fn write_runs(
    out_dir: &Path,
    prov: &Provenance,
    mode: Mode,
    runs: &[(String, Strategy, SimulationRun)],
    thresholds: &[f64],
    dt: f64,
) -> Result<Vec<StatsRow>, Error> {
    let rows = runs
        .iter()
        .map(|(name, _, r)| {
            Ok(StatsRow {
                strategy: name.clone(),
                mode,
                stats: r.stats(thresholds)?,
            })
        })
        .collect::<Result<Vec<_>, SimulationError>>()?;
    let file = StatsFile {
        provenance: prov.clone(),
        results: rows.clone(),
    };
    write_file(&out_dir.join("stats.json"), to_json_pretty(&file).as_bytes())?;
    if let Some(run) = pick_diagnostics(runs) {
        write_file(
            &out_dir.join("diagnostics.csv"),
            diagnostics_csv(prov, &run.diagnostics, dt).as_bytes(),
        )?;
    }
    Ok(rows)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), Error> {
    let mut inputs = Inputs::new("simulate", a);
    let params = inputs.params(&a.params)?;
    let scenario = inputs.scenario(&a.scenario)?;
    let specs = a.strategies.specs()?;
    let strategies = build_strategies(&mut inputs, &specs, &scenario)?;
    let runs = strategies
        .into_iter()
        .map(|(name, s)| {
            let r = run_monte_carlo(&s, &scenario, &params, a.n_paths, a.seed)?;
            Ok((name, s, r))
        })
        .collect::<Result<Vec<_>, SimulationError>>()?;
    let prov = inputs.provenance;
    let rows = write_runs(&a.out_dir, &prov, Mode::Synthetic, &runs, &a.thresholds, scenario.dt())?;
    let hists = wealth_histograms(&runs)?;
    let sections: Vec<HistogramSection> = hists
        .iter()
        .map(|(series, h)| HistogramSection {
            series: series.clone(),
            histogram: h,
            fitted: None,
            normal: None,
        })
        .collect();
    write_file(&a.out_dir.join("histogram.csv"), histogram_csv(&prov, &sections).as_bytes())?;
    print!("{}", render_table(&table_rows(&rows)));
    Ok(())
}

fn table_rows(rows: &[StatsRow]) -> Vec<(String, crate::simulation::OutcomeStats)> {
    rows.iter().map(|r| (r.strategy.clone(), r.stats.clone())).collect()
}

pub fn cmd_bootstrap(a: &BootstrapArgs) -> Result<(), Error> {
    let mut inputs = Inputs::new("bootstrap", a);
    let market = inputs.market(&a.data)?;
    let scenario = inputs.scenario(&a.scenario)?;
    let specs = a.strategies.specs()?;
    let strategies = build_strategies(&mut inputs, &specs, &scenario)?;
    let paired = PairedReturns::new(&market.equity, &market.bond)?;
    let runs = strategies
        .into_iter()
        .map(|(name, s)| {
            let r = run_bootstrap(&s, &scenario, &paired, a.block_years, a.n_resamples, a.seed)?;
            Ok((name, s, r))
        })
        .collect::<Result<Vec<_>, SimulationError>>()?;
    let rows = write_runs(&a.out_dir, &inputs.provenance, Mode::Bootstrap, &runs, &a.thresholds, scenario.dt())?;
    print!("{}", render_table(&table_rows(&rows)));
    Ok(())
}

pub fn cmd_replay(a: &ReplayArgs) -> Result<(), Error> {
    let mut inputs = Inputs::new("replay", a);
    let market = inputs.market(&a.data)?;
    let scenario = inputs.scenario(&a.scenario)?;
    let start: YearMonth = a
        .start
        .parse()
        .map_err(|e| Error::Config(format!("--start: {e}")))?;
    let specs = a.strategies.specs()?;
    let strategies = build_strategies(&mut inputs, &specs, &scenario)?;
    let paired = PairedReturns::new(&market.equity, &market.bond)?;
    let replay = replay_historical(&strategies, &scenario, &paired, start)?;
    write_file(&a.out_dir.join("replay.csv"), replay_csv(&inputs.provenance, &replay).as_bytes())
}

/// Standardized monthly returns against the fitted and normal densities.
fn return_histogram(market: &RealMarket, params: &KouParams) -> Result<(Histogram, Vec<f64>, Vec<f64>), Error> {
    let xs = &market.equity.log_returns;
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let z = standardize_returns(&market.equity)?;
    let h = histogram(&z.log_returns, 80, Some((-8.0, 8.0)))?;
    let grid = DensityGrid::new(params, 1.0 / 12.0, None)?;
    let centers: Vec<f64> = h.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let fitted = centers.iter().map(|c| sd * grid.pdf(mean + sd * c)).collect();
    let normal = centers
        .iter()
        .map(|c| (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt())
        .collect();
    Ok((h, fitted, normal))
}

/// Run every mode of an experiment; returns the rendered table.
pub fn cmd_report(a: &ReportArgs) -> Result<String, Error> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let mut inputs = Inputs::new("report", &cfg);
    inputs.read(&a.config)?;
    let scenario = cfg.scenario.clone();
    let market = match &cfg.data {
        Some(p) => Some(inputs.market(p)?),
        None => None,
    };
    let params = match (&cfg.params, &market) {
        (Some(p), _) => Some(inputs.params(p)?),
        (None, Some(m)) if cfg.modes.contains(&Mode::Synthetic) => {
            let report = fit_mle(&m.equity, 1.0 / 12.0, &FitOptions::default())?;
            let mut p = report.params;
            p.r = m.bond_drift();
            write_file(&a.out_dir.join("params.json"), with_provenance(&p, &inputs.provenance).as_bytes())?;
            Some(p)
        }
        _ => None,
    };
    let strategies = build_strategies(&mut inputs, &cfg.strategies, &scenario)?;
    let prov = inputs.provenance.clone();
    let mut all_rows = Vec::new();
    let mut table = String::new();
    let mut sections_owned: Vec<(String, Histogram, Option<Vec<f64>>, Option<Vec<f64>>)> = Vec::new();

    for mode in &cfg.modes {
        match mode {
            Mode::Synthetic => {
                let params = params.as_ref().expect("validated: params or data");
                let runs = strategies
                    .iter()
                    .map(|(name, s)| {
                        let r = run_monte_carlo(s, &scenario, params, cfg.n_paths, cfg.seed)?;
                        Ok((name.clone(), s.clone(), r))
                    })
                    .collect::<Result<Vec<_>, SimulationError>>()?;
                if let Some(run) = pick_diagnostics(&runs) {
                    write_file(
                        &a.out_dir.join("diagnostics.csv"),
                        diagnostics_csv(&prov, &run.diagnostics, scenario.dt()).as_bytes(),
                    )?;
                }
                for (series, h) in wealth_histograms(&runs)? {
                    sections_owned.push((series, h, None, None));
                }
                let rows = runs
                    .iter()
                    .map(|(name, _, r)| {
                        Ok(StatsRow {
                            strategy: name.clone(),
                            mode: Mode::Synthetic,
                            stats: r.stats(&cfg.thresholds)?,
                        })
                    })
                    .collect::<Result<Vec<_>, SimulationError>>()?;
                let _ = writeln!(table, "Synthetic market ({} paths, seed {})", cfg.n_paths, cfg.seed);
                table.push_str(&render_table(&table_rows(&rows)));
                table.push('\n');
                all_rows.extend(rows);
            }
            Mode::Bootstrap => {
                let m = market.as_ref().expect("validated: data present");
                let paired = PairedReturns::new(&m.equity, &m.bond)?;
                let rows = strategies
                    .iter()
                    .map(|(name, s)| {
                        let r = run_bootstrap(s, &scenario, &paired, cfg.block_years, cfg.n_resamples, cfg.seed)?;
                        Ok(StatsRow {
                            strategy: name.clone(),
                            mode: Mode::Bootstrap,
                            stats: r.stats(&cfg.thresholds)?,
                        })
                    })
                    .collect::<Result<Vec<_>, SimulationError>>()?;
                let _ = writeln!(
                    table,
                    "Bootstrap ({} resamples, {}-year blocks, seed {})",
                    cfg.n_resamples, cfg.block_years, cfg.seed
                );
                table.push_str(&render_table(&table_rows(&rows)));
                table.push('\n');
                all_rows.extend(rows);
            }
            Mode::Replay => {
                let m = market.as_ref().expect("validated: data present");
                let paired = PairedReturns::new(&m.equity, &m.bond)?;
                let replay = replay_historical(&strategies, &scenario, &paired, cfg.replay_start)?;
                write_file(&a.out_dir.join("replay.csv"), replay_csv(&prov, &replay).as_bytes())?;
                let _ = writeln!(table, "Historical replay from {}", cfg.replay_start);
                for t in &replay.trajectories {
                    let last = t.wealth.last().copied().unwrap_or(0.0);
                    let _ = writeln!(table, "  {:<40} terminal wealth {:>14.0}", t.label, last);
                }
                table.push('\n');
            }
        }
    }
    if let (Some(m), Some(p)) = (&market, &params) {
        let (h, fitted, normal) = return_histogram(m, p)?;
        sections_owned.push(("standardized_monthly_return".into(), h, Some(fitted), Some(normal)));
    }
    if !sections_owned.is_empty() {
        let sections: Vec<HistogramSection> = sections_owned
            .iter()
            .map(|(s, h, f, n)| HistogramSection {
                series: s.clone(),
                histogram: h,
                fitted: f.clone(),
                normal: n.clone(),
            })
            .collect();
        write_file(&a.out_dir.join("histogram.csv"), histogram_csv(&prov, &sections).as_bytes())?;
    }
    let stats = StatsFile {
        provenance: prov,
        results: all_rows,
    };
    write_file(&a.out_dir.join("stats.json"), to_json_pretty(&stats).as_bytes())?;
    write_file(&a.out_dir.join("table.txt"), table.as_bytes())?;
    Ok(table)
}
