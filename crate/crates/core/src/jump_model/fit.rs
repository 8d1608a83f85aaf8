//! Maximum-likelihood calibration of [`KouParams`] to log returns.
//!
//! Each likelihood evaluation inverts the characteristic function once on a
//! grid covering every observation and interpolates. The search runs
//! Nelder-Mead in a bounded reparameterisation from each entry of
//! [`FIT_STARTS`] and keeps the best (earliest on ties).

use log::{debug, warn};
use serde::Serialize;

use super::{DensityGrid, KouParams};
use crate::error::ModelError;
use crate::market_data::ReturnSeries;

pub const MIN_OBSERVATIONS: usize = 120;

/// Deterministic starting points `(lambda, p_up, eta1, eta2)`. `mu` and
/// `sigma` are set from the sample so the start matches its mean and
/// variance.
pub const FIT_STARTS: [(f64, f64, f64, f64); 8] = [
    (0.05, 0.5, 50.0, 50.0),
    (0.2, 0.3, 5.0, 5.0),
    (0.5, 0.2, 4.0, 6.0),
    (1.0, 0.5, 10.0, 10.0),
    (2.0, 0.4, 15.0, 8.0),
    (0.1, 0.2, 20.0, 3.0),
    (0.3, 0.7, 6.0, 12.0),
    (5.0, 0.5, 25.0, 20.0),
];

/// Likelihood-ratio cutoff for keeping jumps: 99% quantile of chi-square
/// with 4 degrees of freedom (lambda, p_up, eta1, eta2).
pub const JUMP_LR_CRITICAL: f64 = 13.277;

// (lo, hi) box of the search; scale parameters are searched in log space.
const SIGMA_BOUNDS: (f64, f64) = (1e-3, 3.0);
const LAMBDA_BOUNDS: (f64, f64) = (1e-4, 25.0);
const P_UP_BOUNDS: (f64, f64) = (1e-3, 1.0 - 1e-3);
const ETA1_EXCESS_BOUNDS: (f64, f64) = (1e-2, 1000.0);
const ETA2_BOUNDS: (f64, f64) = (0.2, 1000.0);

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_evals_per_start: usize,
    /// Relative spread of simplex values at convergence.
    pub ftol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_evals_per_start: 6000,
            ftol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    /// Fitted parameters; `r` is left at 0 for the caller to fill in.
    pub params: KouParams,
    pub log_likelihood: f64,
    /// Log-likelihood reached from each start, in [`FIT_STARTS`] order.
    pub start_log_likelihoods: Vec<f64>,
    pub best_start: usize,
    pub converged_starts: usize,
    pub evaluations: usize,
    /// Names of parameters that ended on a search bound.
    pub at_bounds: Vec<&'static str>,
    pub gaussian_log_likelihood: f64,
    /// False when the jump fit does not beat the Gaussian fit significantly;
    /// `params` is then the Gaussian fit with `lambda = 0`.
    pub jumps_selected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma: f64,
    pub log_likelihood: f64,
}

/// Closed-form Gaussian (lambda = 0) MLE on the same data.
pub fn gaussian_mle(returns: &ReturnSeries, dt: f64) -> GaussianFit {
    let xs = &returns.log_returns;
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sigma2 = var / dt;
    let log_likelihood = -0.5 * n * ((2.0 * std::f64::consts::PI * var).ln() + 1.0);
    GaussianFit {
        mu: mean / dt + 0.5 * sigma2,
        sigma: sigma2.sqrt(),
        log_likelihood,
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn logit(s: f64) -> f64 {
    (s / (1.0 - s)).ln()
}

fn to_bounded_log(t: f64, (lo, hi): (f64, f64)) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * sigmoid(t)).exp()
}

fn from_bounded_log(x: f64, (lo, hi): (f64, f64)) -> f64 {
    let s = ((x.clamp(lo, hi).ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(1e-9, 1.0 - 1e-9);
    logit(s)
}

fn to_bounded(t: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * sigmoid(t)
}

fn from_bounded(x: f64, (lo, hi): (f64, f64)) -> f64 {
    logit(((x.clamp(lo, hi) - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9))
}

fn decode(theta: &[f64], dt: f64) -> KouParams {
    KouParams {
        mu: theta[0],
        sigma: to_bounded_log(theta[1], SIGMA_BOUNDS),
        lambda: to_bounded_log(theta[2], LAMBDA_BOUNDS),
        p_up: to_bounded(theta[3], P_UP_BOUNDS),
        eta1: 2.0 + to_bounded_log(theta[4], ETA1_EXCESS_BOUNDS),
        eta2: to_bounded_log(theta[5], ETA2_BOUNDS),
        r: 0.0,
        dt_months: dt * 12.0,
    }
}

fn encode(p: &KouParams) -> [f64; 6] {
    [
        p.mu,
        from_bounded_log(p.sigma, SIGMA_BOUNDS),
        from_bounded_log(p.lambda, LAMBDA_BOUNDS),
        from_bounded(p.p_up, P_UP_BOUNDS),
        from_bounded_log(p.eta1 - 2.0, ETA1_EXCESS_BOUNDS),
        from_bounded_log(p.eta2, ETA2_BOUNDS),
    ]
}

fn bound_hits(p: &KouParams) -> Vec<&'static str> {
    let near_log = |x: f64, (lo, hi): (f64, f64)| {
        let tol = 1e-3 * (hi.ln() - lo.ln());
        (x.ln() - lo.ln()) < tol || (hi.ln() - x.ln()) < tol
    };
    let mut hits = Vec::new();
    if near_log(p.sigma, SIGMA_BOUNDS) {
        hits.push("sigma");
    }
    if near_log(p.lambda, LAMBDA_BOUNDS) {
        hits.push("lambda");
    }
    let (lo, hi) = P_UP_BOUNDS;
    if p.p_up - lo < 1e-3 * (hi - lo) || hi - p.p_up < 1e-3 * (hi - lo) {
        hits.push("p_up");
    }
    if near_log(p.eta1 - 2.0, ETA1_EXCESS_BOUNDS) {
        hits.push("eta1");
    }
    if near_log(p.eta2, ETA2_BOUNDS) {
        hits.push("eta2");
    }
    hits
}

struct Likelihood<'a> {
    xs: &'a [f64],
    dt: f64,
    cover: (f64, f64),
}

impl Likelihood<'_> {
    fn log_likelihood(&self, p: &KouParams) -> f64 {
        let Ok(grid) = DensityGrid::new(p, self.dt, Some(self.cover)) else {
            return f64::NEG_INFINITY;
        };
        self.xs.iter().map(|&x| grid.pdf(x).max(1e-300).ln()).sum()
    }
}

struct NelderMeadResult {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    converged: bool,
}

/// Minimise `f` from `x0` with initial simplex offsets `steps`.
fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    max_evals: usize,
    ftol: f64,
) -> NelderMeadResult {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let sanitize = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let mut values: Vec<f64> = simplex.iter().map(|v| sanitize(f(v))).collect();
    let mut evals = n + 1;
    let mut converged = false;

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let (best, worst) = (values[0], values[n]);
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= ftol * (1.0 + best.abs()) && diameter < 1e-6 {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-1.0);
        let fr = sanitize(f(&xr));
        evals += 1;
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = sanitize(f(&xe));
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(-0.5);
                let fc = sanitize(f(&xc));
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = sanitize(f(&xc));
                (xc, fc)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(v, b)| b + 0.5 * (v - b))
                        .collect();
                    values[i] = sanitize(f(&shrunk));
                    simplex[i] = shrunk;
                }
                evals += n;
            }
        }
    }
    let (i, &fbest) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty simplex");
    NelderMeadResult {
        x: simplex[i].clone(),
        f: fbest,
        evals,
        converged,
    }
}

fn start_params(start: (f64, f64, f64, f64), mean: f64, var: f64, dt: f64) -> KouParams {
    let (lambda, p_up, eta1, eta2) = start;
    let q = 1.0 - p_up;
    let jump_var = lambda * (2.0 * p_up / (eta1 * eta1) + 2.0 * q / (eta2 * eta2));
    let total = var / dt;
    let sigma2 = (total - jump_var).max(0.2 * total);
    let kappa = p_up * eta1 / (eta1 - 1.0) + q * eta2 / (eta2 + 1.0) - 1.0;
    let jump_mean = lambda * (p_up / eta1 - q / eta2);
    KouParams {
        mu: mean / dt + 0.5 * sigma2 + lambda * kappa - jump_mean,
        sigma: sigma2.sqrt(),
        lambda,
        p_up,
        eta1,
        eta2,
        r: 0.0,
        dt_months: dt * 12.0,
    }
}

/// Fit jump-diffusion parameters to log returns sampled every `dt` years.
pub fn fit_mle(returns: &ReturnSeries, dt: f64, options: &FitOptions) -> Result<FitReport, ModelError> {
    let xs = &returns.log_returns;
    if xs.len() < MIN_OBSERVATIONS {
        return Err(ModelError::InsufficientData {
            needed: MIN_OBSERVATIONS,
            found: xs.len(),
        });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::OptimizationFailed("non-finite observation".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lik = Likelihood {
        xs,
        dt,
        cover: (lo, hi),
    };
    let mu_step = 0.25 * (var / dt).sqrt();
    let steps = [mu_step, 0.5, 0.5, 0.5, 0.5, 0.5];

    let mut best: Option<(usize, KouParams, f64)> = None;
    let mut start_lls = Vec::with_capacity(FIT_STARTS.len());
    let mut converged_starts = 0;
    let mut evaluations = 0;
    for (k, &start) in FIT_STARTS.iter().enumerate() {
        let p0 = start_params(start, mean, var, dt);
        let mut objective = |theta: &[f64]| -lik.log_likelihood(&decode(theta, dt));
        let mut res = nelder_mead(&mut objective, &encode(&p0), &steps, options.max_evals_per_start, options.ftol);
        evaluations += res.evals;
        // one restart from the result guards against a collapsed simplex
        if res.f.is_finite() {
            let again = nelder_mead(
                &mut objective,
                &res.x,
                &steps.map(|s| 0.1 * s),
                options.max_evals_per_start / 2,
                options.ftol,
            );
            evaluations += again.evals;
            if again.f <= res.f {
                res = NelderMeadResult {
                    converged: again.converged,
                    ..again
                };
            }
        }
        let ll = -res.f;
        start_lls.push(ll);
        debug!("fit start {k}: loglik {ll:.6}, converged {}", res.converged);
        if !res.converged || !ll.is_finite() {
            continue;
        }
        converged_starts += 1;
        let p = decode(&res.x, dt);
        let better = match &best {
            None => true,
            Some((_, _, b)) => ll > *b + 1e-9 * b.abs().max(1.0),
        };
        if better {
            best = Some((k, p, ll));
        }
    }
    let (best_start, params, log_likelihood) = best.ok_or_else(|| {
        ModelError::OptimizationFailed(format!(
            "none of {} starts converged (log-likelihoods {start_lls:?})",
            FIT_STARTS.len()
        ))
    })?;
    let gaussian = gaussian_mle(returns, dt);
    let jumps_selected = 2.0 * (log_likelihood - gaussian.log_likelihood) >= JUMP_LR_CRITICAL;
    let (params, log_likelihood) = if jumps_selected {
        (params, log_likelihood)
    } else {
        debug!(
            "jump fit gains {:.3} log-likelihood over Gaussian; keeping Gaussian",
            log_likelihood - gaussian.log_likelihood
        );
        let p = KouParams {
            mu: gaussian.mu,
            sigma: gaussian.sigma,
            lambda: 0.0,
            ..params
        };
        (p, gaussian.log_likelihood)
    };
    let at_bounds = if jumps_selected { bound_hits(&params) } else { Vec::new() };
    for name in &at_bounds {
        warn!("fitted `{name}` sits on its search bound: {params:?}");
    }
    Ok(FitReport {
        params,
        log_likelihood,
        gaussian_log_likelihood: gaussian.log_likelihood,
        jumps_selected,
        start_log_likelihoods: start_lls,
        best_start,
        converged_starts,
        evaluations,
        at_bounds,
    })
}
