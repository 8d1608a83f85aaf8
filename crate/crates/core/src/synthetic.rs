//! Generator for the bundled synthetic market file.
//!
//! Real equity log returns are drawn monthly from a jump diffusion. Monthly
//! inflation and the real bill return are Gaussian AR(1) processes. Nominal
//! series are the real ones reinflated by the CPI, so deflating the file
//! recovers the real paths.

use rand_distr::{Distribution, StandardNormal};

use crate::error::ModelError;
use crate::jump_model::{KouParams, PeriodSampler};
use crate::market_data::{YearMonth, CSV_HEADER};
use crate::rng::stream_rng;

/// Seed of the bundled `fixtures/synthetic_market.csv`.
pub const FIXTURE_SEED: u64 = 19_260_101;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub equity: KouParams,
    pub inflation_mean: f64,
    pub inflation_ar: f64,
    pub inflation_sd: f64,
    /// Real bill monthly log return mean is `equity.r / 12`.
    pub bill_ar: f64,
    pub bill_sd: f64,
    pub start: YearMonth,
    /// Number of monthly rows, including the base month.
    pub rows: usize,
}

impl SyntheticMarket {
    /// Parameters of the bundled fixture: 1926-01 to 2015-12.
    pub fn fixture() -> Self {
        Self {
            equity: KouParams {
                mu: 0.0874,
                sigma: 0.1453,
                lambda: 0.3483,
                p_up: 0.2273,
                eta1: 4.3578,
                eta2: 5.5079,
                r: 0.00623,
                dt_months: 1.0,
            },
            inflation_mean: 0.0025,
            inflation_ar: 0.5,
            inflation_sd: 0.003,
            bill_ar: 0.8,
            bill_sd: 0.0015,
            start: YearMonth { year: 1926, month: 1 },
            rows: 1080,
        }
    }

    /// The market file as CSV text.
    pub fn generate_csv(&self, seed: u64) -> Result<String, ModelError> {
        let sampler = PeriodSampler::new(&self.equity, 1.0 / 12.0)?;
        let mut rng = stream_rng(seed, 0);
        let bill_mean = self.equity.r / 12.0;
        let (mut equity, mut bill, mut cpi) = (100.0f64, 100.0f64, 17.7f64);
        let mut infl = self.inflation_mean;
        let mut real_bill = bill_mean;
        let mut out = String::with_capacity(self.rows * 64);
        out.push_str(&CSV_HEADER.join(","));
        out.push('\n');
        for m in 0..self.rows {
            if m > 0 {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                infl = self.inflation_mean
                    + self.inflation_ar * (infl - self.inflation_mean)
                    + self.inflation_sd * z1;
                real_bill = bill_mean + self.bill_ar * (real_bill - bill_mean) + self.bill_sd * z2;
                let real_equity = sampler.log_return(&mut rng);
                cpi *= infl.exp();
                equity *= (real_equity + infl).exp();
                bill *= (real_bill + infl).exp();
            }
            let month = self.start.plus_months(m as i64);
            out.push_str(&format!("{month},{equity:.6},{bill:.6},{cpi:.6}\n"));
        }
        Ok(out)
    }
}
