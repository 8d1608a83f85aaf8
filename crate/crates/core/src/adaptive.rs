//! Adaptive policy `p(W, t)` minimizing `E[(W_T - W*)^2]` by backward
//! dynamic programming on a wealth grid, and calibration of `W*` so that the
//! policy hits a prescribed mean terminal wealth.
//!
//! The state at rebalance date `t` is wealth just before that date's
//! contribution. One-period expectations use the discrete gross-return
//! quadrature. Continuation values are interpolated by linear interpolation
//! of `sqrt(value)` in wealth, squared back. The value is a squared shortfall,
//! so its root is close to piecewise linear and the interpolant never leaves
//! the range of the bracketing nodal values.
//! Above the grid, where the bond-only continuation already exceeds the
//! target, the exact value `(F_t(w) - W*)^2` of the all-bond policy is used.

use std::fs;
use std::path::Path;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, SimulationError, SolverError};
use crate::jump_model::{period_return_quadrature, KouParams};
use crate::simulation::run_monte_carlo;
use crate::strategy::{Scenario, Strategy};

/// Relative slack when deciding that the bond-only continuation reaches `W*`.
const REACH_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Total wealth nodes including the node at zero.
    pub n_nodes: usize,
    /// Upper end of the grid as a multiple of `W*` (at least 8).
    pub w_max_multiple: f64,
    /// Lowest positive node as a fraction of `W0`.
    pub w_min_fraction: f64,
    /// Equally spaced controls on `[0, 1]`.
    pub n_controls: usize,
    /// Golden-section refinement around the best control.
    pub refine: bool,
    pub quadrature_nodes: usize,
    pub max_lost_mass: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_nodes: 512,
            w_max_multiple: 10.0,
            w_min_fraction: 0.01,
            n_controls: 201,
            refine: true,
            quadrature_nodes: 512,
            max_lost_mass: 1e-5,
        }
    }
}

impl GridConfig {
    fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidGrid(m.to_string()));
        if self.n_nodes < 8 {
            return bad("need at least 8 wealth nodes");
        }
        if !(self.w_max_multiple >= 8.0) {
            return bad("w_max must be at least 8 W*");
        }
        if !(self.w_min_fraction > 0.0 && self.w_min_fraction < 1.0) {
            return bad("w_min_fraction must be in (0, 1)");
        }
        if self.n_controls < 2 {
            return bad("need at least 2 controls");
        }
        if !(self.max_lost_mass >= 0.0) {
            return bad("max_lost_mass must be >= 0");
        }
        Ok(())
    }
}

/// Optimal equity fractions and values on a (time, wealth) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGrid {
    /// Rebalance date indices `0..n`; date `t` is at `t * dt` years.
    pub times: Vec<usize>,
    pub wealth_nodes: Vec<f64>,
    /// `policy[t][i]` at wealth node `i` before the date-`t` contribution.
    pub policy: Vec<Vec<f64>>,
    pub value: Vec<Vec<f64>>,
    pub w_star: f64,
    pub scenario: Scenario,
    pub params: KouParams,
    pub params_hash: String,
    pub config: GridConfig,
    /// Largest per-date probability of leaving the grid from a node whose
    /// bond-only continuation stays below `W*`.
    pub lost_mass: f64,
}

impl PolicyGrid {
    /// Equity fraction at date `t` for wealth `w` held before that date's
    /// contribution.
    pub fn lookup(&self, w: f64, t: usize) -> Result<f64, SolverError> {
        let row = self.policy.get(t).ok_or(SolverError::UnknownTime(t))?;
        let b = self.params.bond_gross(self.scenario.dt());
        if self.scenario.bond_only_terminal(w, t, b) >= self.w_star * (1.0 - REACH_SLACK) {
            return Ok(0.0);
        }
        Ok(interpolate(&self.wealth_nodes, row, w).clamp(0.0, 1.0))
    }

    /// Value function at date `t` interpolated at `w`.
    pub fn value_at(&self, w: f64, t: usize) -> Result<f64, SolverError> {
        let row = self.value.get(t).ok_or(SolverError::UnknownTime(t))?;
        let b = self.params.bond_gross(self.scenario.dt());
        let f = self.scenario.bond_only_terminal(w, t, b);
        if f >= self.w_star {
            return Ok((f - self.w_star).powi(2));
        }
        let k = self.scenario.bond_only_terminal(0.0, t, b);
        let boundary = (self.w_star - k) / (self.scenario.bond_only_terminal(1.0, t, b) - k);
        let nodes = &self.wealth_nodes;
        let below = nodes.partition_point(|&x| x < boundary);
        let j = nodes.partition_point(|&x| x <= w).saturating_sub(1);
        let root = if below > 0 && j + 1 >= below {
            let j = below - 1;
            row[j].sqrt() * (1.0 - (w - nodes[j]) / (boundary - nodes[j]))
        } else {
            let roots: Vec<f64> = row.iter().map(|v| v.sqrt()).collect();
            interpolate(nodes, &roots, w)
        };
        Ok(root * root)
    }

    /// `value_0(W0)`.
    pub fn initial_value(&self) -> f64 {
        self.value_at(self.scenario.initial_wealth, 0)
            .expect("grid has a first date")
    }

    pub fn w_max(&self) -> f64 {
        *self.wealth_nodes.last().expect("grid is non-empty")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy grid serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        crate::report::write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Piecewise-linear interpolation, clamped to the end values.
pub fn policy_lookup(grid: &PolicyGrid, w: f64, t: usize) -> Result<f64, SolverError> {
    grid.lookup(w, t)
}

fn interpolate(nodes: &[f64], values: &[f64], w: f64) -> f64 {
    let n = nodes.len();
    if !(w > nodes[0]) {
        return values[0];
    }
    if w >= nodes[n - 1] {
        return values[n - 1];
    }
    let j = nodes.partition_point(|&x| x <= w) - 1;
    let s = (w - nodes[j]) / (nodes[j + 1] - nodes[j]);
    values[j] + s * (values[j + 1] - values[j])
}

/// Node 0 at zero, then log-spaced nodes with `W0` exactly on a node.
pub fn wealth_grid(scenario: &Scenario, w_star: f64, config: &GridConfig) -> Vec<f64> {
    let w0 = scenario.initial_wealth;
    let w_max = config.w_max_multiple * w_star;
    let w_min = if w0 > 0.0 {
        w0 * config.w_min_fraction
    } else {
        w_star * 1e-5
    };
    let steps = (config.n_nodes - 2) as f64;
    let mut h = (w_max / w_min).ln() / steps;
    if w0 > 0.0 {
        let i0 = ((w0 / w_min).ln() / h).floor().max(1.0);
        h = (w0 / w_min).ln() / i0;
    }
    let mut nodes = Vec::with_capacity(config.n_nodes);
    nodes.push(0.0);
    for i in 0..config.n_nodes - 1 {
        nodes.push(w_min * (h * i as f64).exp());
    }
    if w0 > 0.0 {
        let i0 = ((w0 / w_min).ln() / h).round() as usize;
        nodes[i0 + 1] = w0;
    }
    nodes
}

/// One date of the backward recursion.
struct Step<'a> {
    nodes: &'a [f64],
    /// `sqrt` of the value at `t + 1`.
    next: &'a [f64],
    gross: &'a [f64],
    weights: &'a [f64],
    b: f64,
    c: f64,
    w_star: f64,
    /// Bond-only terminal wealth is `a * w + k` for wealth `w` at `t + 1`.
    next_a: f64,
    next_k: f64,
    /// Wealth at `t + 1` from which bonds alone reach `W*`, and the number
    /// of nodes strictly below it.
    boundary: f64,
    below: usize,
}

impl Step<'_> {
    fn continuation(&self, w: f64) -> f64 {
        let f = self.next_a * w + self.next_k - self.w_star;
        f * f
    }

    /// Expected continuation value and probability mass beyond the grid
    /// where the exact continuation does not apply.
    fn expect(&self, w: f64, p: f64) -> (f64, f64) {
        let g = w + self.c;
        let base = g * (1.0 - p) * self.b;
        let scale = g * p;
        let nodes = self.nodes;
        let n = nodes.len();
        let w_max = nodes[n - 1];
        let first = base + scale * self.gross[0];
        let mut j = nodes.partition_point(|&x| x <= first).saturating_sub(1).min(n - 2);
        let mut acc = 0.0;
        let mut lost = 0.0;
        for (r, wt) in self.gross.iter().zip(self.weights) {
            let x = base + scale * r;
            if x >= self.boundary {
                acc += wt * self.continuation(x);
                continue;
            }
            if x >= w_max {
                acc += wt * self.next[n - 1] * self.next[n - 1];
                lost += wt;
                continue;
            }
            while nodes[j + 1] <= x {
                j += 1;
            }
            let root = if j + 1 < self.below {
                let s = (x - nodes[j]) / (nodes[j + 1] - nodes[j]);
                self.next[j] + s * (self.next[j + 1] - self.next[j])
            } else {
                // last cell below the boundary closes at the exact zero
                let s = (x - nodes[j]) / (self.boundary - nodes[j]);
                self.next[j] * (1.0 - s)
            };
            acc += wt * root * root;
        }
        (acc, lost)
    }

    /// Best control at wealth `w`; ties go to the smallest fraction.
    fn optimize(&self, w: f64, n_controls: usize, refine: bool) -> (f64, f64, f64) {
        let mut best = {
            let (v, lost) = self.expect(w, 0.0);
            (0.0, v, lost)
        };
        let mut best_i = 0;
        let step = 1.0 / (n_controls - 1) as f64;
        for i in 1..n_controls {
            let p = i as f64 * step;
            let (v, lost) = self.expect(w, p);
            if v < best.1 - 1e-12 * best.1.abs() {
                best = (p, v, lost);
                best_i = i;
            }
        }
        if refine && self.c + w > 0.0 {
            let lo = best_i.saturating_sub(1) as f64 * step;
            let hi = ((best_i + 1).min(n_controls - 1)) as f64 * step;
            let (p, v, lost) = self.golden(w, lo, hi);
            if v < best.1 - 1e-12 * best.1.abs() {
                best = (p, v, lost);
            }
        }
        best
    }

    fn golden(&self, w: f64, mut a: f64, mut b: f64) -> (f64, f64, f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = self.expect(w, x1).0;
        let mut f2 = self.expect(w, x2).0;
        while b - a > 1e-7 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = self.expect(w, x1).0;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = self.expect(w, x2).0;
            }
        }
        let p = 0.5 * (a + b);
        let (v, lost) = self.expect(w, p);
        (p, v, lost)
    }
}

/// Solve the backward recursion for target `w_star`.
pub fn solve_policy(
    params: &KouParams,
    scenario: &Scenario,
    w_star: f64,
    config: &GridConfig,
) -> Result<PolicyGrid, SolverError> {
    params.validate()?;
    scenario.validate()?;
    config.validate()?;
    if !(w_star > 0.0) || !w_star.is_finite() {
        return Err(SolverError::InvalidGrid(format!("W* = {w_star} must be > 0")));
    }
    let dt = scenario.dt();
    let n = scenario.n_periods();
    let b = params.bond_gross(dt);
    let quad = period_return_quadrature(params, dt, config.quadrature_nodes)?;
    let nodes = wealth_grid(scenario, w_star, config);

    // bond-only terminal wealth from date t is a_t * w + k_t
    let mut a = vec![1.0; n + 1];
    let mut k = vec![0.0; n + 1];
    for t in (0..n).rev() {
        a[t] = a[t + 1] * b;
        k[t] = scenario.bond_only_terminal(0.0, t, b);
    }

    let mut value = vec![Vec::new(); n + 1];
    let mut policy = vec![Vec::new(); n];
    value[n] = nodes.iter().map(|w| (w - w_star).powi(2)).collect();
    let mut worst_lost: f64 = 0.0;
    for t in (0..n).rev() {
        let roots: Vec<f64> = value[t + 1].iter().map(|v| v.sqrt()).collect();
        let boundary = (w_star - k[t + 1]) / a[t + 1];
        let step = Step {
            nodes: &nodes,
            next: &roots,
            gross: &quad.gross_returns,
            weights: &quad.weights,
            b,
            c: scenario.contribution_at(t),
            w_star,
            next_a: a[t + 1],
            next_k: k[t + 1],
            boundary,
            below: nodes.partition_point(|&x| x < boundary),
        };
        // once bonds alone reach the target, any equity adds variance and
        // overshoot, so p = 0 and the value is known in closed form
        let solved: Vec<(f64, f64, f64)> = nodes
            .par_iter()
            .map(|&w| {
                let f = a[t] * w + k[t];
                if f >= w_star {
                    (0.0, (f - w_star).powi(2), 0.0)
                } else {
                    step.optimize(w, config.n_controls, config.refine)
                }
            })
            .collect();
        let lost = solved
            .iter()
            .zip(&nodes)
            .filter(|(_, &w)| a[t] * w + k[t] < w_star)
            .map(|(s, _)| s.2)
            .fold(0.0, f64::max);
        if lost > config.max_lost_mass {
            return Err(SolverError::GridTooSmall { time: t, lost_mass: lost });
        }
        worst_lost = worst_lost.max(lost);
        policy[t] = solved.iter().map(|s| s.0).collect();
        value[t] = solved.iter().map(|s| s.1.max(0.0)).collect();
        debug!("t = {t}: value at node 1 {:.6e}", value[t][1]);
    }
    value.truncate(n);
    Ok(PolicyGrid {
        times: (0..n).collect(),
        wealth_nodes: nodes,
        policy,
        value,
        w_star,
        scenario: scenario.clone(),
        params: params.clone(),
        params_hash: params.hash_hex(),
        config: config.clone(),
        lost_mass: worst_lost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 200_000,
            seed: 20_160_301,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub w_star: f64,
    pub grid: PolicyGrid,
    /// Monte Carlo mean terminal wealth at the returned target.
    pub mean: f64,
    pub standard_error: f64,
    pub iterations: usize,
}

/// Find `W*` such that the optimal policy's mean terminal wealth is `goal_mean`.
///
/// The map `W* -> E[W_T]` is evaluated by Monte Carlo with a fixed seed, so
/// it is a deterministic, monotone function of `W*`. A bracket is grown
/// geometrically above the goal and then shrunk by Illinois-modified
/// regula falsi.
pub fn calibrate_target(
    params: &KouParams,
    scenario: &Scenario,
    goal_mean: f64,
    grid_config: &GridConfig,
    mc: &McConfig,
) -> Result<Calibration, SimulationError> {
    params.validate().map_err(SolverError::from)?;
    scenario.validate()?;
    let floor = scenario.all_bond_terminal(params.bond_gross(scenario.dt()));
    if goal_mean < floor * (1.0 - 1e-9) {
        return Err(SolverError::InfeasibleGoal { goal: goal_mean, floor }.into());
    }
    let evaluate = |w_star: f64| -> Result<(PolicyGrid, f64, f64), SimulationError> {
        let grid = solve_policy(params, scenario, w_star, grid_config)?;
        let strategy = Strategy::Adaptive(grid.clone().into());
        let run = run_monte_carlo(&strategy, scenario, params, mc.n_paths, mc.seed)?;
        let stats = run.stats(&[])?;
        debug!("W* = {w_star:.2}: mean {:.2} (se {:.2})", stats.mean, stats.mc_standard_error_mean);
        Ok((grid, stats.mean, stats.mc_standard_error_mean))
    };
    if goal_mean <= floor * (1.0 + 1e-9) {
        let (grid, mean, se) = evaluate(floor)?;
        return Ok(Calibration {
            w_star: floor,
            grid,
            mean,
            standard_error: se,
            iterations: 1,
        });
    }

    const MAX_ITERATIONS: usize = 50;
    let mut iterations = 0;
    let tolerance = |se: f64| (0.0025 * goal_mean).max(2.0 * se);

    // lower end: aiming at the goal itself undershoots it
    let (mut lo, mut f_lo) = (goal_mean, {
        iterations += 1;
        evaluate(goal_mean)?.1 - goal_mean
    });
    let mut hi = goal_mean;
    let mut f_hi = f_lo;
    let mut last = None;
    while f_hi < 0.0 {
        if iterations >= MAX_ITERATIONS {
            return Err(SolverError::NoConvergence {
                iterations,
                last_mean: f_hi + goal_mean,
                goal: goal_mean,
            }
            .into());
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 1.25;
        iterations += 1;
        let (grid, mean, se) = evaluate(hi)?;
        f_hi = mean - goal_mean;
        if f_hi.abs() <= tolerance(se) {
            info!("calibrated W* = {hi:.2} after {iterations} solves");
            return Ok(Calibration {
                w_star: hi,
                grid,
                mean,
                standard_error: se,
                iterations,
            });
        }
        last = Some((grid, mean, se));
    }
    let mut side = 0i8;
    loop {
        if iterations >= MAX_ITERATIONS {
            let last_mean = last.as_ref().map_or(f64::NAN, |l: &(PolicyGrid, f64, f64)| l.1);
            return Err(SolverError::NoConvergence {
                iterations,
                last_mean,
                goal: goal_mean,
            }
            .into());
        }
        let mut x = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        iterations += 1;
        let (grid, mean, se) = evaluate(x)?;
        let fx = mean - goal_mean;
        if fx.abs() <= tolerance(se) {
            info!("calibrated W* = {x:.2} after {iterations} solves");
            return Ok(Calibration {
                w_star: x,
                grid,
                mean,
                standard_error: se,
                iterations,
            });
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        last = Some((grid, mean, se));
    }
}
