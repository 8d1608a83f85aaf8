//! Deterministic glide paths: exact terminal-wealth moments and the
//! minimum-variance glide path for a required mean.
//!
//! With independent period returns and a deterministic bond, the first two
//! moments of terminal wealth follow a two-state forward recursion. Its
//! adjoint gives exact gradients, which drive an augmented-Lagrangian solver
//! (mean constraint) around a spectral projected-gradient inner loop (box
//! `[0, 1]^n`).

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, StrategyError};
use crate::jump_model::KouParams;
use crate::strategy::Scenario;

/// First two moments of the one-period equity gross return and the bond gross.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodMoments {
    pub e_mu: f64,
    pub e_m2: f64,
    pub b: f64,
}

impl PeriodMoments {
    pub fn from_params(params: &KouParams, dt: f64) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(Self {
            e_mu: params.gross_mean(dt),
            e_m2: params.gross_second_moment(dt)?,
            b: params.bond_gross(dt),
        })
    }

    fn check(&self) -> Result<(), StrategyError> {
        if !(self.e_mu > 0.0 && self.b > 0.0 && self.e_m2 >= self.e_mu * self.e_mu * (1.0 - 1e-12)) {
            return Err(StrategyError::InvalidStrategy(format!(
                "inconsistent period moments {self:?}"
            )));
        }
        Ok(())
    }

    #[inline]
    fn growth(&self, p: f64) -> (f64, f64) {
        let q = 1.0 - p;
        let g1 = p * self.e_mu + q * self.b;
        let g2 = p * p * self.e_m2 + 2.0 * p * q * self.e_mu * self.b + q * q * self.b * self.b;
        (g1, g2)
    }

    #[inline]
    fn growth_derivative(&self, p: f64) -> (f64, f64) {
        let d1 = self.e_mu - self.b;
        let d2 = 2.0 * p * self.e_m2 + 2.0 * (1.0 - 2.0 * p) * self.e_mu * self.b
            - 2.0 * (1.0 - p) * self.b * self.b;
        (d1, d2)
    }
}

/// `E[W_T]` and `E[W_T^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthMoments {
    pub mean: f64,
    pub second: f64,
}

impl WealthMoments {
    pub fn variance(&self) -> f64 {
        (self.second - self.mean * self.mean).max(0.0)
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

fn check_glide(glide: &[f64], scenario: &Scenario) -> Result<(), StrategyError> {
    scenario.validate()?;
    if glide.len() != scenario.n_periods() {
        return Err(StrategyError::InvalidStrategy(format!(
            "glide length {} != {} rebalance dates",
            glide.len(),
            scenario.n_periods()
        )));
    }
    if let Some(p) = glide.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StrategyError::InvalidStrategy(format!(
            "glide fraction {p} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Terminal wealth moments of a deterministic glide path.
pub fn wealth_moments(glide: &[f64], scenario: &Scenario, pm: &PeriodMoments) -> Result<WealthMoments, StrategyError> {
    check_glide(glide, scenario)?;
    pm.check()?;
    let contribs = scenario.contributions();
    let (mean, second) = forward(glide, &contribs, scenario.initial_wealth, pm, None);
    Ok(WealthMoments { mean, second })
}

/// Forward recursion; fills `trace` with the post-injection moments when given.
fn forward(
    glide: &[f64],
    contribs: &[f64],
    w0: f64,
    pm: &PeriodMoments,
    mut trace: Option<&mut Vec<(f64, f64)>>,
) -> (f64, f64) {
    let (mut m1, mut m2) = (w0, w0 * w0);
    for (&p, &c) in glide.iter().zip(contribs) {
        let h1 = m1 + c;
        let h2 = m2 + 2.0 * c * m1 + c * c;
        if let Some(t) = trace.as_deref_mut() {
            t.push((h1, h2));
        }
        let (g1, g2) = pm.growth(p);
        m1 = h1 * g1;
        m2 = h2 * g2;
    }
    (m1, m2)
}

/// Moments plus their gradients with respect to every glide entry.
fn moments_with_gradient(
    glide: &[f64],
    contribs: &[f64],
    w0: f64,
    pm: &PeriodMoments,
) -> ((f64, f64), Vec<f64>, Vec<f64>) {
    let n = glide.len();
    let mut trace = Vec::with_capacity(n);
    let (m1, m2) = forward(glide, contribs, w0, pm, Some(&mut trace));
    let mut d_mean = vec![0.0; n];
    let mut d_second = vec![0.0; n];
    // adjoints of (m1_{t+1}, m2_{t+1}) for each output
    let mut a_mean = (1.0, 0.0);
    let mut a_second = (0.0, 1.0);
    for t in (0..n).rev() {
        let p = glide[t];
        let (h1, h2) = trace[t];
        let (g1, g2) = pm.growth(p);
        let (dg1, dg2) = pm.growth_derivative(p);
        d_mean[t] = a_mean.0 * h1 * dg1 + a_mean.1 * h2 * dg2;
        d_second[t] = a_second.0 * h1 * dg1 + a_second.1 * h2 * dg2;
        let c = contribs[t];
        let back = |(l1, l2): (f64, f64)| (l1 * g1 + l2 * g2 * 2.0 * c, l2 * g2);
        a_mean = back(a_mean);
        a_second = back(a_second);
    }
    ((m1, m2), d_mean, d_second)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlideSolution {
    pub glide: Vec<f64>,
    pub moments: WealthMoments,
    /// Index into the start list (0 constant, 1 equity-to-bond ramp,
    /// 2 bond-to-equity ramp, 3 the constant glide itself).
    pub start: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct GlideOptions {
    pub projected_gradient_tol: f64,
    pub constraint_tol: f64,
    pub max_inner_iterations: usize,
    pub max_outer_iterations: usize,
}

impl Default for GlideOptions {
    fn default() -> Self {
        Self {
            projected_gradient_tol: 1e-8,
            constraint_tol: 1e-6,
            max_inner_iterations: 10_000,
            max_outer_iterations: 60,
        }
    }
}

/// Constant fraction whose terminal mean equals `target_mean`.
pub fn constant_fraction_for_mean(scenario: &Scenario, pm: &PeriodMoments, target_mean: f64) -> Result<f64, StrategyError> {
    let n = scenario.n_periods();
    let mean_at = |p: f64| wealth_moments(&vec![p; n], scenario, pm).map(|m| m.mean);
    let (lo, hi) = (mean_at(0.0)?, mean_at(1.0)?);
    let (min, max) = (lo.min(hi), lo.max(hi));
    if !(target_mean >= min * (1.0 - 1e-12) && target_mean <= max * (1.0 + 1e-12)) {
        return Err(StrategyError::InfeasibleTarget {
            target: target_mean,
            lo: min,
            hi: max,
        });
    }
    let increasing = hi >= lo;
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (mean_at(mid)? < target_mean) == increasing {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

struct Problem<'a> {
    contribs: &'a [f64],
    w0: f64,
    pm: &'a PeriodMoments,
    target: f64,
}

impl Problem<'_> {
    /// Scaled variance, scaled constraint residual and their gradients.
    fn eval(&self, p: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let ((m1, m2), dm1, dm2) = moments_with_gradient(p, self.contribs, self.w0, self.pm);
        let s = self.target;
        let f = (m2 - m1 * m1) / (s * s);
        let h = m1 / s - 1.0;
        let df = dm2
            .iter()
            .zip(&dm1)
            .map(|(a, b)| (a - 2.0 * m1 * b) / (s * s))
            .collect();
        let dh = dm1.iter().map(|d| d / s).collect();
        (f, h, df, dh)
    }

    fn lagrangian(&self, p: &[f64], mult: f64, rho: f64) -> (f64, Vec<f64>) {
        let (f, h, df, dh) = self.eval(p);
        let val = f + mult * h + 0.5 * rho * h * h;
        let grad = df
            .iter()
            .zip(&dh)
            .map(|(a, b)| a + (mult + rho * h) * b)
            .collect();
        (val, grad)
    }
}

fn project(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(xi, gi)| ((xi - gi).clamp(0.0, 1.0) - xi).abs())
        .fold(0.0, f64::max)
}

/// Spectral projected gradient with a non-monotone Armijo search.
fn spg(
    x: &mut Vec<f64>,
    eval: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    tol: f64,
    max_iter: usize,
) -> usize {
    const MEMORY: usize = 10;
    project(x);
    let (mut fx, mut g) = eval(x);
    let mut history = vec![fx];
    let pg0 = projected_gradient_norm(x, &g);
    let mut alpha = if pg0 > 0.0 { (1.0 / pg0).clamp(1e-10, 1e10) } else { 1.0 };
    for k in 0..max_iter {
        if projected_gradient_norm(x, &g) <= tol {
            return k;
        }
        let mut d: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect();
        project(&mut d);
        for (di, xi) in d.iter_mut().zip(x.iter()) {
            *di -= xi;
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let fmax = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let (mut x_new, mut f_new, mut g_new);
        loop {
            x_new = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect::<Vec<_>>();
            let r = eval(&x_new);
            f_new = r.0;
            g_new = r.1;
            if f_new <= fmax + 1e-4 * t * slope || t < 1e-20 {
                break;
            }
            t *= 0.5;
        }
        let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 1e10 };
        if ss == 0.0 {
            *x = x_new;
            return k + 1;
        }
        *x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        if history.len() > MEMORY {
            history.remove(0);
        }
    }
    max_iter
}

/// Push `p` onto the mean constraint along the projected mean gradient.
fn restore_feasibility(p: &mut Vec<f64>, problem: &Problem<'_>) {
    for _ in 0..60 {
        let (_, h, _, dh) = problem.eval(p);
        if h.abs() <= 1e-13 {
            return;
        }
        // only coordinates free to move in the needed direction
        let dir: Vec<f64> = p
            .iter()
            .zip(&dh)
            .map(|(&pi, &gi)| {
                let step = -h.signum() * gi;
                if (step > 0.0 && pi >= 1.0) || (step < 0.0 && pi <= 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect();
        let dd: f64 = dir.iter().zip(&dh).map(|(a, b)| a * b).sum();
        if dd <= 0.0 {
            return;
        }
        let t = -h / dd;
        for (pi, di) in p.iter_mut().zip(&dir) {
            *pi = (*pi + t * di).clamp(0.0, 1.0);
        }
    }
}

fn solve_from(start: Vec<f64>, problem: &Problem<'_>, opts: &GlideOptions) -> (Vec<f64>, usize, usize) {
    let mut p = start;
    let mut mult = 0.0;
    let mut rho = 10.0;
    let mut last_h = f64::INFINITY;
    let mut inner_total = 0;
    let mut outer = 0;
    while outer < opts.max_outer_iterations {
        outer += 1;
        let eval = |x: &[f64]| problem.lagrangian(x, mult, rho);
        inner_total += spg(&mut p, &eval, opts.projected_gradient_tol, opts.max_inner_iterations);
        let (_, h, _, _) = problem.eval(&p);
        let (_, grad) = problem.lagrangian(&p, mult, rho);
        if h.abs() <= 0.1 * opts.constraint_tol
            && projected_gradient_norm(&p, &grad) <= opts.projected_gradient_tol
        {
            break;
        }
        mult += rho * h;
        if h.abs() > 0.25 * last_h {
            rho = (rho * 10.0).min(1e12);
        }
        last_h = h.abs();
    }
    restore_feasibility(&mut p, problem);
    (p, outer, inner_total)
}

/// Minimum-variance glide path with `E[W_T] = target_mean`.
pub fn optimize_glide(scenario: &Scenario, pm: &PeriodMoments, target_mean: f64) -> Result<GlideSolution, StrategyError> {
    optimize_glide_with(scenario, pm, target_mean, &GlideOptions::default())
}

pub fn optimize_glide_with(
    scenario: &Scenario,
    pm: &PeriodMoments,
    target_mean: f64,
    opts: &GlideOptions,
) -> Result<GlideSolution, StrategyError> {
    scenario.validate()?;
    pm.check()?;
    let n = scenario.n_periods();
    let p_const = constant_fraction_for_mean(scenario, pm, target_mean)?;
    let contribs = scenario.contributions();
    let problem = Problem {
        contribs: &contribs,
        w0: scenario.initial_wealth,
        pm,
        target: target_mean,
    };
    let ramp = |from: f64, to: f64| -> Vec<f64> {
        (0..n)
            .map(|t| {
                if n == 1 {
                    0.5 * (from + to)
                } else {
                    from + (to - from) * t as f64 / (n - 1) as f64
                }
            })
            .collect()
    };
    let starts = [vec![p_const; n], ramp(1.0, 0.0), ramp(0.0, 1.0)];

    let mut candidates: Vec<(usize, Vec<f64>, usize, usize)> = starts
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            let (p, outer, inner) = solve_from(s, &problem, opts);
            (k, p, outer, inner)
        })
        .collect();
    candidates.push((3, vec![p_const; n], 0, 0));

    let mut best: Option<(GlideSolution, f64)> = None;
    for (k, glide, outer, inner) in candidates {
        let m = wealth_moments(&glide, scenario, pm)?;
        let residual = ((m.mean - target_mean) / target_mean).abs();
        debug!("glide start {k}: var {:.6e}, residual {residual:.2e}", m.variance());
        if residual > opts.constraint_tol {
            continue;
        }
        let var = m.variance();
        let better = match &best {
            None => true,
            Some((_, v)) => var < v - 1e-10 * v.abs(),
        };
        if better {
            best = Some((
                GlideSolution {
                    glide,
                    moments: m,
                    start: k,
                    outer_iterations: outer,
                    inner_iterations: inner,
                },
                var,
            ));
        }
    }
    Ok(best.expect("the constant glide is always feasible").0)
}
