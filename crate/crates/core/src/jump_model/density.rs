//! Log-return density by Fourier inversion of the characteristic function.
//!
//! The density is recovered on a uniform grid with a single FFT (trapezoidal
//! rule for the inversion integral), negative ringing is clamped to zero and
//! off-grid points use 4-point Lagrange interpolation.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::KouParams;
use crate::error::ModelError;

const MIN_POINTS: usize = 1 << 14;
const MAX_POINTS: usize = 1 << 21;
/// Body half-width in standard deviations of the log return.
const BODY_SDS: f64 = 12.0;
/// Exponential-tail allowance, in units of 1/eta (e^-36 ~ 2e-16).
const TAIL_DECAYS: f64 = 36.0;
/// Grid points per diffusive standard deviation.
const POINTS_PER_SD: f64 = 40.0;

/// Density of the log return on a uniform grid `x0 + j * dx`.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl DensityGrid {
    /// Invert the characteristic function of `params` over horizon `dt`.
    ///
    /// `cover`, when given, widens the grid so that the whole interval lies
    /// inside it (used to make every observation evaluable during fitting).
    pub fn new(params: &KouParams, dt: f64, cover: Option<(f64, f64)>) -> Result<Self, ModelError> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(ModelError::ParameterOutOfDomain(format!("dt = {dt} must be > 0")));
        }
        let log_drift = params.log_drift()?;
        let (mean, var) = params.log_return_mean_var(dt)?;
        let sd = var.sqrt();
        let has_jumps = params.lambda > 0.0;
        let left_tail = if has_jumps && params.p_up < 1.0 {
            TAIL_DECAYS / params.eta2
        } else {
            0.0
        };
        let right_tail = if has_jumps && params.p_up > 0.0 {
            TAIL_DECAYS / params.eta1
        } else {
            0.0
        };
        let mut lo = mean - BODY_SDS * sd - left_tail;
        let mut hi = mean + BODY_SDS * sd + right_tail;
        if let Some((a, b)) = cover {
            let margin = 4.0 * sd;
            lo = lo.min(a - margin);
            hi = hi.max(b + margin);
        }
        let width = hi - lo;
        let diff_sd = params.sigma * dt.sqrt();
        let wanted = (POINTS_PER_SD * width / diff_sd).ceil() as usize;
        let n = wanted.clamp(MIN_POINTS, MAX_POINTS).next_power_of_two();

        let dx = width / n as f64;
        let du = 2.0 * std::f64::consts::PI / width;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|m| {
                let k = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                let u = k * du;
                let phi = params.char_fn_with_drift(log_drift, dt, u);
                // shift so that index j corresponds to x = lo + j dx
                phi * Complex64::from_polar(1.0, -u * lo)
            })
            .collect();
        // The Nyquist term is shared by +-N/2; keep its real half only.
        buf[n / 2] = Complex64::new(buf[n / 2].re, 0.0);
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let values = buf.iter().map(|c| (c.re / width).max(0.0)).collect();
        Ok(Self { x0: lo, dx, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.values.len() - 1)
    }

    /// Trapezoid integral of the grid values.
    pub fn integral(&self) -> f64 {
        let v = &self.values;
        let inner: f64 = v.iter().sum();
        (inner - 0.5 * (v[0] + v[v.len() - 1])) * self.dx
    }

    /// Density at `x` (zero outside the grid).
    pub fn pdf(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = (x - self.x0) / self.dx;
        if !(s >= 0.0) || s > (n - 1) as f64 {
            return 0.0;
        }
        let j = (s.floor() as usize).clamp(1, n - 3);
        let t = s - j as f64;
        let v = &self.values;
        let (f0, f1, f2, f3) = (v[j - 1], v[j], v[j + 1], v[j + 2]);
        // Lagrange weights on nodes -1, 0, 1, 2
        let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        (w0 * f0 + w1 * f1 + w2 * f2 + w3 * f3).max(0.0)
    }
}

/// Density of the log return over `dt` at `x`.
///
/// Builds a fresh inversion grid on every call; use [`DensityGrid`] directly
/// when evaluating many points.
pub fn log_return_density(params: &KouParams, dt: f64, x: f64) -> Result<f64, ModelError> {
    Ok(DensityGrid::new(params, dt, None)?.pdf(x))
}
