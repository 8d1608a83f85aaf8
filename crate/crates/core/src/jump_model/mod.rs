//! Kou double-exponential jump diffusion for real equity log returns.
//!
//! Over a period of length `dt` (years) the log return is
//!
//! ```text
//! X = (mu - sigma^2/2 - lambda*kappa) dt + sigma sqrt(dt) Z + sum_{i<=N} Y_i
//! ```
//!
//! with `N ~ Poisson(lambda dt)` and `Y` double exponential: upward with
//! probability `p_up` and rate `eta1`, downward with rate `eta2`. The
//! compensator `kappa = E[e^Y] - 1` makes `E[e^X] = e^{mu dt}`, so `mu` is the
//! arithmetic growth rate of the index.

mod density;
mod fit;
mod quadrature;
mod simulate;

pub use density::{log_return_density, DensityGrid};
pub use fit::{fit_mle, gaussian_mle, FitOptions, FitReport, GaussianFit, FIT_STARTS};
pub use quadrature::{cell_quadrature, period_return_quadrature, DiscreteReturnDistribution};
pub(crate) use simulate::PeriodSampler;
pub use simulate::{sample_log_return, simulate_gross_returns, simulate_log_returns};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ModelError;

/// Smallest admissible upward decay rate; `E[e^{2Y}]` diverges at 2.
pub const ETA1_MIN: f64 = 2.0;

/// Synthetic-market parameters. Serialized as a flat JSON object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KouParams {
    /// Arithmetic drift of the equity index, per year.
    pub mu: f64,
    /// Diffusive volatility, per sqrt(year).
    pub sigma: f64,
    /// Jump intensity, per year.
    pub lambda: f64,
    pub p_up: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Real bond log drift, per year.
    pub r: f64,
    /// Sampling interval of the data the parameters were fitted on, in months.
    #[serde(default = "default_dt_months")]
    pub dt_months: f64,
}

fn default_dt_months() -> f64 {
    1.0
}

/// `(E[e^Y], E[e^{2Y}], E[e^Y] - 1)` for the jump-size law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpMoments {
    pub m1: f64,
    pub m2: f64,
    pub kappa: f64,
}

impl KouParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::ParameterOutOfDomain(m));
        let all = [
            self.mu,
            self.sigma,
            self.lambda,
            self.p_up,
            self.eta1,
            self.eta2,
            self.r,
            self.dt_months,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad(format!("non-finite parameter in {self:?}"));
        }
        if self.sigma <= 0.0 {
            return bad(format!("sigma = {} must be > 0", self.sigma));
        }
        if self.lambda < 0.0 {
            return bad(format!("lambda = {} must be >= 0", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.p_up) {
            return bad(format!("p_up = {} must lie in [0, 1]", self.p_up));
        }
        if self.eta1 <= ETA1_MIN {
            return bad(format!("eta1 = {} must be > 2", self.eta1));
        }
        if self.eta2 <= 0.0 {
            return bad(format!("eta2 = {} must be > 0", self.eta2));
        }
        if self.dt_months <= 0.0 {
            return bad(format!("dt_months = {} must be > 0", self.dt_months));
        }
        Ok(())
    }

    /// Drift of the log return per year, after the Ito and jump compensators.
    pub fn log_drift(&self) -> Result<f64, ModelError> {
        let jm = jump_exp_moments(self)?;
        Ok(self.mu - 0.5 * self.sigma * self.sigma - self.lambda * jm.kappa)
    }

    /// Characteristic function of the log return over `dt`.
    pub fn characteristic_fn(&self, dt: f64, u: f64) -> Complex64 {
        let jm = jump_exp_moments(self).expect("validated parameters");
        let a = self.mu - 0.5 * self.sigma * self.sigma - self.lambda * jm.kappa;
        self.char_fn_with_drift(a, dt, u)
    }

    pub(crate) fn char_fn_with_drift(&self, log_drift: f64, dt: f64, u: f64) -> Complex64 {
        let i = Complex64::i();
        let q = 1.0 - self.p_up;
        let phi_y = self.p_up * self.eta1 / Complex64::new(self.eta1, -u)
            + q * self.eta2 / Complex64::new(self.eta2, u);
        let psi = i * u * log_drift - 0.5 * self.sigma * self.sigma * u * u
            + self.lambda * (phi_y - 1.0);
        (dt * psi).exp()
    }

    /// Mean and variance of the log return over `dt`.
    pub fn log_return_mean_var(&self, dt: f64) -> Result<(f64, f64), ModelError> {
        let a = self.log_drift()?;
        let q = 1.0 - self.p_up;
        let mean = (a + self.lambda * (self.p_up / self.eta1 - q / self.eta2)) * dt;
        let var = (self.sigma * self.sigma
            + self.lambda * (2.0 * self.p_up / self.eta1.powi(2) + 2.0 * q / self.eta2.powi(2)))
            * dt;
        Ok((mean, var))
    }

    /// Fourth cumulant of the log return over `dt`.
    pub fn log_return_fourth_cumulant(&self, dt: f64) -> f64 {
        let q = 1.0 - self.p_up;
        self.lambda * 24.0 * (self.p_up / self.eta1.powi(4) + q / self.eta2.powi(4)) * dt
    }

    /// `E[e^X]` over `dt`, i.e. the expected equity gross return.
    pub fn gross_mean(&self, dt: f64) -> f64 {
        (self.mu * dt).exp()
    }

    /// `E[e^{2X}]` over `dt`.
    pub fn gross_second_moment(&self, dt: f64) -> Result<f64, ModelError> {
        let jm = jump_exp_moments(self)?;
        Ok(((2.0 * self.mu
            + self.sigma * self.sigma
            + self.lambda * (jm.m2 - 2.0 * jm.m1 + 1.0))
            * dt)
            .exp())
    }

    /// Deterministic bond gross return over `dt`.
    pub fn bond_gross(&self, dt: f64) -> f64 {
        (self.r * dt).exp()
    }

    /// SHA-256 of the canonical JSON form, for provenance records.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain struct serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Exponential moments of a single jump.
pub fn jump_exp_moments(params: &KouParams) -> Result<JumpMoments, ModelError> {
    if !(params.eta1 > ETA1_MIN) {
        return Err(ModelError::ParameterOutOfDomain(format!(
            "eta1 = {} must be > 2",
            params.eta1
        )));
    }
    if !(params.eta2 > 0.0) {
        return Err(ModelError::ParameterOutOfDomain(format!(
            "eta2 = {} must be > 0",
            params.eta2
        )));
    }
    let p = params.p_up;
    let q = 1.0 - p;
    let (e1, e2) = (params.eta1, params.eta2);
    let m1 = p * e1 / (e1 - 1.0) + q * e2 / (e2 + 1.0);
    let m2 = p * e1 / (e1 - 2.0) + q * e2 / (e2 + 2.0);
    Ok(JumpMoments {
        m1,
        m2,
        kappa: m1 - 1.0,
    })
}
