//! Strategy evaluation: synthetic-market Monte Carlo, paired block bootstrap
//! of historical returns, and single-path historical replay.
//!
//! Every path draws from its own ChaCha stream `(seed, path)`. Paths are
//! processed in fixed chunks whose partial results are combined in chunk
//! order, so outputs do not depend on the number of threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SimulationError;
use crate::jump_model::{KouParams, PeriodSampler};
use crate::market_data::{ReturnSeries, YearMonth};
use crate::rng::stream_rng;
use crate::strategy::{step_wealth, Scenario, Strategy};

const CHUNK: usize = 2048;

/// Default shortfall thresholds in real dollars.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [500_000.0, 650_000.0, 800_000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub threshold: f64,
    pub probability: f64,
}

/// Terminal-wealth sample summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub mean: f64,
    pub std: f64,
    pub shortfall_probs: Vec<Shortfall>,
    pub n_paths: usize,
    pub mc_standard_error_mean: f64,
    /// Single-element sample; `std` is 0 by convention.
    pub degenerate: bool,
}

impl OutcomeStats {
    pub fn shortfall(&self, threshold: f64) -> Option<f64> {
        self.shortfall_probs
            .iter()
            .find(|s| s.threshold == threshold)
            .map(|s| s.probability)
    }
}

/// Mean, sample standard deviation and `P[W_T < threshold]` per threshold.
pub fn summary_stats(sample: &[f64], thresholds: &[f64]) -> Result<OutcomeStats, SimulationError> {
    if sample.is_empty() {
        return Err(SimulationError::EmptySample);
    }
    let n = sample.len();
    let mean = sample.iter().sum::<f64>() / n as f64;
    let all_equal = sample.iter().all(|x| *x == sample[0]);
    let (mean, std) = if all_equal {
        (sample[0], 0.0)
    } else if n == 1 {
        (mean, 0.0)
    } else {
        let ss: f64 = sample.iter().map(|x| (x - mean).powi(2)).sum();
        (mean, (ss / (n - 1) as f64).sqrt())
    };
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let shortfall_probs = sorted
        .into_iter()
        .map(|threshold| Shortfall {
            threshold,
            probability: sample.iter().filter(|x| **x < threshold).count() as f64 / n as f64,
        })
        .collect();
    Ok(OutcomeStats {
        mean,
        std,
        shortfall_probs,
        n_paths: n,
        mc_standard_error_mean: std / (n as f64).sqrt(),
        degenerate: n == 1,
    })
}

/// Per-date mean and standard deviation of the equity fraction across paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDiagnostics {
    pub mean_p: Vec<f64>,
    pub std_p: Vec<f64>,
}

/// Terminal wealth of every path plus allocation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub terminal_wealth: Vec<f64>,
    pub diagnostics: PathDiagnostics,
}

impl SimulationRun {
    pub fn stats(&self, thresholds: &[f64]) -> Result<OutcomeStats, SimulationError> {
        summary_stats(&self.terminal_wealth, thresholds)
    }
}

struct ChunkResult {
    terminal: Vec<f64>,
    sum_p: Vec<f64>,
    sum_p2: Vec<f64>,
}

/// Run `n_paths` paths; `path_returns` fills the per-date (equity, bond)
/// gross returns of one path.
fn run_paths<F>(strategy: &Strategy, scenario: &Scenario, n_paths: usize, path_returns: F) -> Result<SimulationRun, SimulationError>
where
    F: Fn(usize, &mut Vec<(f64, f64)>) -> Result<(), SimulationError> + Sync,
{
    if n_paths == 0 {
        return Err(SimulationError::NoPaths);
    }
    scenario.validate()?;
    strategy.validate(scenario)?;
    let n = scenario.n_periods();
    let contribs = scenario.contributions();
    let n_chunks = n_paths.div_ceil(CHUNK);
    let chunks: Vec<ChunkResult> = (0..n_chunks)
        .into_par_iter()
        .map(|k| -> Result<ChunkResult, SimulationError> {
            let lo = k * CHUNK;
            let hi = (lo + CHUNK).min(n_paths);
            let mut out = ChunkResult {
                terminal: Vec::with_capacity(hi - lo),
                sum_p: vec![0.0; n],
                sum_p2: vec![0.0; n],
            };
            let mut returns = Vec::with_capacity(n);
            for path in lo..hi {
                returns.clear();
                path_returns(path, &mut returns)?;
                let mut w = scenario.initial_wealth;
                for (t, &(re, rb)) in returns.iter().enumerate() {
                    let p = strategy.fraction(t, w)?;
                    out.sum_p[t] += p;
                    out.sum_p2[t] += p * p;
                    w = step_wealth(w, contribs[t], p, re, rb);
                }
                out.terminal.push(w);
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let mut terminal = Vec::with_capacity(n_paths);
    let mut sum_p = vec![0.0; n];
    let mut sum_p2 = vec![0.0; n];
    for c in chunks {
        terminal.extend(c.terminal);
        for t in 0..n {
            sum_p[t] += c.sum_p[t];
            sum_p2[t] += c.sum_p2[t];
        }
    }
    let m = n_paths as f64;
    let mean_p: Vec<f64> = sum_p.iter().map(|s| s / m).collect();
    let std_p = sum_p2
        .iter()
        .zip(&mean_p)
        .map(|(s2, mp)| {
            if n_paths < 2 {
                0.0
            } else {
                ((s2 - m * mp * mp) / (m - 1.0)).max(0.0).sqrt()
            }
        })
        .collect();
    Ok(SimulationRun {
        terminal_wealth: terminal,
        diagnostics: PathDiagnostics { mean_p, std_p },
    })
}

/// Synthetic-market Monte Carlo with one equity draw per rebalance period and
/// the deterministic bond `e^{r dt}`.
pub fn run_monte_carlo(
    strategy: &Strategy,
    scenario: &Scenario,
    params: &KouParams,
    n_paths: usize,
    seed: u64,
) -> Result<SimulationRun, SimulationError> {
    let dt = scenario.dt();
    let sampler = PeriodSampler::new(params, dt).map_err(crate::error::SolverError::from)?;
    let b = params.bond_gross(dt);
    let n = scenario.n_periods();
    run_paths(strategy, scenario, n_paths, |path, out| {
        let mut rng = stream_rng(seed, path as u64);
        out.extend((0..n).map(|_| (sampler.log_return(&mut rng).exp(), b)));
        Ok(())
    })
}

/// Paired equity and bond monthly log returns on a common calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedReturns {
    pub start_month: YearMonth,
    pub equity: Vec<f64>,
    pub bond: Vec<f64>,
}

impl PairedReturns {
    pub fn new(equity: &ReturnSeries, bond: &ReturnSeries) -> Result<Self, SimulationError> {
        if equity.start_month != bond.start_month || equity.len() != bond.len() {
            return Err(crate::error::DataError::LengthMismatch(format!(
                "equity {} months from {}, bond {} months from {}",
                equity.len(),
                equity.start_month,
                bond.len(),
                bond.start_month
            ))
            .into());
        }
        Ok(Self {
            start_month: equity.start_month,
            equity: equity.log_returns.clone(),
            bond: bond.log_returns.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.equity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equity.is_empty()
    }
}

/// One resampled path: the historical month index used for each month.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledPath {
    pub indices: Vec<usize>,
    pub equity: Vec<f64>,
    pub bond: Vec<f64>,
    pub block_months: usize,
}

fn block_months(block_years: f64) -> Result<usize, SimulationError> {
    let months = 12.0 * block_years;
    if !(months >= 1.0) || (months - months.round()).abs() > 1e-9 {
        return Err(SimulationError::InvalidBlock(format!(
            "block of {block_years} years is not a positive whole number of months"
        )));
    }
    Ok(months.round() as usize)
}

fn horizon_months(horizon_years: f64) -> Result<usize, SimulationError> {
    let months = 12.0 * horizon_years;
    if !(months >= 1.0) || (months - months.round()).abs() > 1e-9 {
        return Err(SimulationError::InvalidBlock(format!(
            "horizon of {horizon_years} years is not a whole number of months"
        )));
    }
    Ok(months.round() as usize)
}

fn resample_indices<R: Rng + ?Sized>(n: usize, block: usize, horizon: usize, rng: &mut R) -> Vec<usize> {
    let mut indices = Vec::with_capacity(horizon);
    while indices.len() < horizon {
        let start = rng.random_range(0..n);
        let take = block.min(horizon - indices.len());
        indices.extend((0..take).map(|i| (start + i) % n));
    }
    indices
}

/// Circular block bootstrap of a paired monthly path of `horizon_years`.
pub fn block_resample(
    series: &PairedReturns,
    block_years: f64,
    horizon_years: f64,
    seed: u64,
) -> Result<ResampledPath, SimulationError> {
    let block = block_months(block_years)?;
    let horizon = horizon_months(horizon_years)?;
    if block > series.len() {
        return Err(SimulationError::BlockTooLong {
            block_months: block,
            series_months: series.len(),
        });
    }
    let mut rng = stream_rng(seed, 0);
    let indices = resample_indices(series.len(), block, horizon, &mut rng);
    Ok(ResampledPath {
        equity: indices.iter().map(|&i| series.equity[i]).collect(),
        bond: indices.iter().map(|&i| series.bond[i]).collect(),
        indices,
        block_months: block,
    })
}

/// Evaluate a frozen strategy on `n_resamples` block-bootstrap paths.
///
/// Monthly returns compound within each rebalance period; contributions and
/// rebalancing happen at the scenario's rebalance dates.
pub fn run_bootstrap(
    strategy: &Strategy,
    scenario: &Scenario,
    series: &PairedReturns,
    block_years: f64,
    n_resamples: usize,
    seed: u64,
) -> Result<SimulationRun, SimulationError> {
    scenario.validate()?;
    let block = block_months(block_years)?;
    let horizon = horizon_months(scenario.horizon_years)?;
    let per_period = horizon_months(scenario.dt())?;
    if block > series.len() {
        return Err(SimulationError::BlockTooLong {
            block_months: block,
            series_months: series.len(),
        });
    }
    run_paths(strategy, scenario, n_resamples, |path, out| {
        let mut rng = stream_rng(seed, path as u64);
        let idx = resample_indices(series.len(), block, horizon, &mut rng);
        out.extend(idx.chunks(per_period).map(|c| {
            let e: f64 = c.iter().map(|&i| series.equity[i]).sum();
            let b: f64 = c.iter().map(|&i| series.bond[i]).sum();
            (e.exp(), b.exp())
        }));
        Ok(())
    })
}

/// Wealth at the end of each rebalance period along the historical path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayTrajectory {
    pub label: String,
    pub wealth: Vec<f64>,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub start_month: YearMonth,
    /// Calendar month closing each period.
    pub period_ends: Vec<YearMonth>,
    pub trajectories: Vec<ReplayTrajectory>,
}

/// Run each strategy once along the historical returns starting at `start`.
pub fn replay_historical(
    strategies: &[(String, Strategy)],
    scenario: &Scenario,
    series: &PairedReturns,
    start: YearMonth,
) -> Result<Replay, SimulationError> {
    scenario.validate()?;
    let months = horizon_months(scenario.horizon_years)?;
    let per_period = horizon_months(scenario.dt())?;
    let offset = series.start_month.months_until(start);
    let last = series.start_month.plus_months(series.len() as i64 - 1);
    if offset < 0 || offset as usize + months > series.len() {
        return Err(SimulationError::WindowOutOfRange {
            start,
            months,
            first: series.start_month,
            last,
        });
    }
    let offset = offset as usize;
    let gross: Vec<(f64, f64)> = (0..scenario.n_periods())
        .map(|t| {
            let range = offset + t * per_period..offset + (t + 1) * per_period;
            let e: f64 = series.equity[range.clone()].iter().sum();
            let b: f64 = series.bond[range].iter().sum();
            (e.exp(), b.exp())
        })
        .collect();
    let contribs = scenario.contributions();
    let trajectories = strategies
        .iter()
        .map(|(label, strategy)| -> Result<ReplayTrajectory, SimulationError> {
            strategy.validate(scenario)?;
            let mut w = scenario.initial_wealth;
            let mut wealth = Vec::with_capacity(gross.len());
            let mut fractions = Vec::with_capacity(gross.len());
            for (t, &(re, rb)) in gross.iter().enumerate() {
                let p = strategy.fraction(t, w)?;
                w = step_wealth(w, contribs[t], p, re, rb);
                wealth.push(w);
                fractions.push(p);
            }
            Ok(ReplayTrajectory {
                label: label.clone(),
                wealth,
                fractions,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Replay {
        start_month: start,
        period_ends: (1..=scenario.n_periods())
            .map(|t| start.plus_months((t * per_period) as i64 - 1))
            .collect(),
        trajectories,
    })
}

/// Equal-width histogram normalized to a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
}

pub fn histogram(sample: &[f64], n_bins: usize, range: Option<(f64, f64)>) -> Result<Histogram, SimulationError> {
    if sample.is_empty() {
        return Err(SimulationError::EmptySample);
    }
    let n_bins = n_bins.max(1);
    let (lo, hi) = range.unwrap_or_else(|| {
        let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    });
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &x in sample {
        if x < lo || x > hi {
            continue;
        }
        let k = (((x - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let total = sample.len() as f64;
    Ok(Histogram {
        edges: (0..=n_bins).map(|k| lo + k as f64 * width).collect(),
        densities: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
    })
}
