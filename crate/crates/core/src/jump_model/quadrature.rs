//! Discrete approximation of the one-period equity gross return.
//!
//! The inverted density is truncated at the 1e-7 / 1 - 1e-7 quantiles and
//! the remaining interval is split into cells that are equally spaced in the
//! blended coordinate `(F(x) + (x - lo) / (hi - lo)) / 2`, so the body gets
//! equal-probability cells while tail cells stay bounded in width. Each cell
//! becomes one node at the conditional mean of `e^X` over the cell, weighted
//! by the cell probability. Cell boundaries for `n` nodes are a subset of the
//! boundaries for `k * n` nodes, so refinement is nested.
//!
//! Conditional-mean nodes reproduce the mean exactly but lose the within-cell
//! variance, and truncation drops a little of both moments.
//! [`period_return_quadrature`] corrects both with an affine map of the nodes
//! onto the closed-form mean and variance; [`cell_quadrature`] returns the
//! raw cells.

use super::{DensityGrid, KouParams};
use crate::error::ModelError;

const TAIL_QUANTILE: f64 = 1e-7;
const MIN_NODES: usize = 16;

/// Gross-return nodes and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteReturnDistribution {
    pub gross_returns: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteReturnDistribution {
    pub fn len(&self) -> usize {
        self.gross_returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gross_returns.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.gross_returns
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| g * w)
            .sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.gross_returns
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| g * g * w)
            .sum()
    }
}

/// `(int f, int e^x f, int e^{2x} f)` over `[s, t]` for `f` linear,
/// `f(m) = fm` at the midpoint with slope `beta`.
fn linear_piece_moments(s: f64, t: f64, fm: f64, beta: f64) -> [f64; 3] {
    let m = 0.5 * (s + t);
    let d = 0.5 * (t - s);
    let mut out = [2.0 * d * fm, 0.0, 0.0];
    for (k, slot) in [(1.0f64, 1usize), (2.0, 2)] {
        let z = k * d;
        let (sv, tv) = if z.abs() < 1e-3 {
            let z2 = z * z;
            (
                2.0 * d * (1.0 + z2 / 6.0 + z2 * z2 / 120.0),
                2.0 * k * d * d * d / 3.0 * (1.0 + z2 / 10.0 + z2 * z2 / 280.0),
            )
        } else {
            let (sh, ch) = (z.sinh(), z.cosh());
            (2.0 * sh / k, 2.0 * (d * ch - sh / k) / k)
        };
        out[slot] = (k * m).exp() * (fm * sv + beta * tv);
    }
    out
}

struct PiecewiseLinear<'a> {
    grid: &'a DensityGrid,
    /// cumulative trapezoid mass at each grid point
    cdf: Vec<f64>,
}

impl<'a> PiecewiseLinear<'a> {
    fn new(grid: &'a DensityGrid) -> Self {
        let v = &grid.values;
        let mut cdf = Vec::with_capacity(v.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in v.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * grid.dx;
            cdf.push(acc);
        }
        Self { grid, cdf }
    }

    fn segment(&self, x: f64) -> usize {
        let s = ((x - self.grid.x0) / self.grid.dx).floor();
        (s.max(0.0) as usize).min(self.grid.len() - 2)
    }

    fn density(&self, x: f64) -> f64 {
        let j = self.segment(x);
        let t = (x - self.grid.x(j)) / self.grid.dx;
        let v = &self.grid.values;
        v[j] + t * (v[j + 1] - v[j])
    }

    /// Exact CDF of the piecewise-linear density.
    fn cdf_at(&self, x: f64) -> f64 {
        let j = self.segment(x);
        let x0 = self.grid.x(j);
        let f0 = self.grid.values[j];
        let fx = self.density(x);
        self.cdf[j] + 0.5 * (f0 + fx) * (x - x0)
    }

    /// Solve `cdf_at(x) = target` by bisection on the bracketing segment.
    fn quantile(&self, target: f64) -> f64 {
        let j = match self.cdf.binary_search_by(|c| c.partial_cmp(&target).unwrap()) {
            Ok(j) => return self.grid.x(j),
            Err(j) => j.clamp(1, self.cdf.len() - 1) - 1,
        };
        let (mut a, mut b) = (self.grid.x(j), self.grid.x(j + 1));
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if self.cdf_at(mid) < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    fn moments(&self, s: f64, t: f64) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut j = self.segment(s);
        let mut lo = s;
        while lo < t {
            let seg_end = self.grid.x(j + 1);
            let hi = if j + 2 >= self.grid.len() { t } else { seg_end.min(t) };
            let v = &self.grid.values;
            let beta = (v[j + 1] - v[j]) / self.grid.dx;
            let mid = 0.5 * (lo + hi);
            let fm = v[j] + beta * (mid - self.grid.x(j));
            let piece = linear_piece_moments(lo, hi, fm, beta);
            for (a, p) in acc.iter_mut().zip(piece) {
                *a += p;
            }
            lo = hi;
            j += 1;
        }
        acc
    }
}

/// One-period gross-return distribution with `n_nodes` nodes, affinely
/// adjusted to reproduce the closed-form mean and second moment.
pub fn period_return_quadrature(
    params: &KouParams,
    dt: f64,
    n_nodes: usize,
) -> Result<DiscreteReturnDistribution, ModelError> {
    let mut q = build_cells(params, dt, n_nodes)?;
    let raw_mean = q.mean();
    let raw_var = q.second_moment() - raw_mean * raw_mean;
    let mean = params.gross_mean(dt);
    let target_var = params.gross_second_moment(dt)? - mean * mean;
    let mut stretch = if raw_var > 0.0 && target_var > 0.0 {
        (target_var / raw_var).sqrt()
    } else {
        1.0
    };
    // keep the lowest node positive
    let lowest = q.gross_returns[0];
    if lowest < raw_mean && stretch > 1.0 {
        stretch = stretch.min(1.0 + 0.9 * lowest / (raw_mean - lowest));
    }
    for g in &mut q.gross_returns {
        *g = mean + stretch * (*g - raw_mean);
    }
    Ok(q)
}

/// Raw conditional-mean cells without the variance correction.
pub fn cell_quadrature(
    params: &KouParams,
    dt: f64,
    n_nodes: usize,
) -> Result<DiscreteReturnDistribution, ModelError> {
    build_cells(params, dt, n_nodes)
}

fn build_cells(
    params: &KouParams,
    dt: f64,
    n_nodes: usize,
) -> Result<DiscreteReturnDistribution, ModelError> {
    if n_nodes < MIN_NODES {
        return Err(ModelError::ParameterOutOfDomain(format!(
            "n_nodes = {n_nodes} must be >= {MIN_NODES}"
        )));
    }
    let grid = DensityGrid::new(params, dt, None)?;
    let pl = PiecewiseLinear::new(&grid);
    let total = *pl.cdf.last().expect("non-empty grid");
    let lo = pl.quantile(TAIL_QUANTILE * total);
    let hi = pl.quantile((1.0 - TAIL_QUANTILE) * total);
    let (c_lo, c_hi) = (pl.cdf_at(lo), pl.cdf_at(hi));
    let blended = |x: f64| 0.5 * (pl.cdf_at(x) - c_lo) / (c_hi - c_lo) + 0.5 * (x - lo) / (hi - lo);

    let mut bounds = Vec::with_capacity(n_nodes + 1);
    bounds.push(lo);
    for k in 1..n_nodes {
        let target = k as f64 / n_nodes as f64;
        let (mut a, mut b) = (*bounds.last().unwrap(), hi);
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if blended(mid) < target {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= 1e-15 * (1.0 + mid.abs()) {
                break;
            }
        }
        bounds.push(0.5 * (a + b));
    }
    bounds.push(hi);

    let mut gross_returns = Vec::with_capacity(n_nodes);
    let mut masses = Vec::with_capacity(n_nodes);
    for w in bounds.windows(2) {
        let [mass, e1, _] = pl.moments(w[0], w[1]);
        if mass > 0.0 {
            let node = e1 / mass;
            if gross_returns.last().is_some_and(|&prev| node <= prev) {
                continue;
            }
            gross_returns.push(node);
            masses.push(mass);
        }
    }
    let sum: f64 = masses.iter().sum();
    let weights = masses.iter().map(|m| m / sum).collect();
    Ok(DiscreteReturnDistribution {
        gross_returns,
        weights,
    })
}
