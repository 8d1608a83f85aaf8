use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use super::KouParams;
use crate::error::ModelError;
use crate::rng::{stream_rng, StreamRng};

/// Precomputed per-period sampling constants.
#[derive(Debug, Clone)]
pub(crate) struct PeriodSampler {
    drift: f64,
    vol: f64,
    jumps: Option<Poisson<f64>>,
    p_up: f64,
    inv_eta1: f64,
    inv_eta2: f64,
}

impl PeriodSampler {
    pub(crate) fn new(params: &KouParams, dt: f64) -> Result<Self, ModelError> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(ModelError::ParameterOutOfDomain(format!("dt = {dt} must be > 0")));
        }
        let jumps = if params.lambda > 0.0 {
            Some(Poisson::new(params.lambda * dt).map_err(|e| {
                ModelError::ParameterOutOfDomain(format!("jump intensity: {e}"))
            })?)
        } else {
            None
        };
        Ok(Self {
            drift: params.log_drift()? * dt,
            vol: params.sigma * dt.sqrt(),
            jumps,
            p_up: params.p_up,
            inv_eta1: 1.0 / params.eta1,
            inv_eta2: 1.0 / params.eta2,
        })
    }

    pub(crate) fn log_return<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let mut x = self.drift + self.vol * z;
        if let Some(pois) = &self.jumps {
            let n = pois.sample(rng) as u64;
            for _ in 0..n {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<f64>() < self.p_up {
                    x += e * self.inv_eta1;
                } else {
                    x -= e * self.inv_eta2;
                }
            }
        }
        x
    }
}

/// One log return over `dt` drawn from `rng`.
pub fn sample_log_return<R: Rng + ?Sized>(
    params: &KouParams,
    dt: f64,
    rng: &mut R,
) -> Result<f64, ModelError> {
    Ok(PeriodSampler::new(params, dt)?.log_return(rng))
}

/// `n_periods` consecutive log returns from a single seeded stream.
pub fn simulate_log_returns(
    params: &KouParams,
    dt: f64,
    n_periods: usize,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    let sampler = PeriodSampler::new(params, dt)?;
    let mut rng: StreamRng = stream_rng(seed, 0);
    Ok((0..n_periods).map(|_| sampler.log_return(&mut rng)).collect())
}

/// `n_periods` equity gross returns `exp(X)`.
pub fn simulate_gross_returns(
    params: &KouParams,
    dt: f64,
    n_periods: usize,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    Ok(simulate_log_returns(params, dt, n_periods, seed)?
        .into_iter()
        .map(f64::exp)
        .collect())
}
