//! Accumulation scenario, allocation strategies and the shared wealth step.
//!
//! At each rebalance date `t = 0, 1, ..., n - 1` the contribution for that date
//! is injected, the portfolio is rebalanced to equity fraction `p`, and one
//! period of returns accrues. Terminal wealth is read at `t = n` with no
//! further injection.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adaptive::PolicyGrid;
use crate::error::{SolverError, StrategyError};

/// Horizon, cash flows and rebalancing frequency, in real dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(rename = "T")]
    pub horizon_years: f64,
    #[serde(rename = "W0")]
    pub initial_wealth: f64,
    /// Real dollars injected at each contribution date.
    #[serde(rename = "c")]
    pub contribution: f64,
    #[serde(default = "one_year")]
    pub rebalance_interval: f64,
    /// Rebalance-date indices receiving `c`. Defaults to `1..n`: the initial
    /// wealth is the time-zero investment and contributions follow at every
    /// later rebalance date.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution_times: Option<Vec<usize>>,
}

fn one_year() -> f64 {
    1.0
}

impl Scenario {
    /// 30 years, $10,000 up front, $10,000 real at years 1..=29, annual rebalancing.
    pub fn long_term() -> Self {
        Self {
            horizon_years: 30.0,
            initial_wealth: 10_000.0,
            contribution: 10_000.0,
            rebalance_interval: 1.0,
            contribution_times: None,
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        let bad = |m: String| Err(StrategyError::InvalidScenario(m));
        if !(self.horizon_years > 0.0) {
            return bad(format!("T = {} must be > 0", self.horizon_years));
        }
        if !(self.initial_wealth >= 0.0) || !self.initial_wealth.is_finite() {
            return bad(format!("W0 = {} must be >= 0", self.initial_wealth));
        }
        if !(self.contribution >= 0.0) || !self.contribution.is_finite() {
            return bad(format!("c = {} must be >= 0", self.contribution));
        }
        if !(self.rebalance_interval > 0.0) {
            return bad(format!("rebalance interval {} must be > 0", self.rebalance_interval));
        }
        let periods = self.horizon_years / self.rebalance_interval;
        if (periods - periods.round()).abs() > 1e-9 || periods.round() < 1.0 {
            return bad(format!(
                "T = {} is not a whole number of {}-year periods",
                self.horizon_years, self.rebalance_interval
            ));
        }
        let n = periods.round() as usize;
        if let Some(times) = &self.contribution_times {
            if let Some(t) = times.iter().find(|&&t| t >= n) {
                return bad(format!("contribution time {t} outside [0, {n})"));
            }
        }
        Ok(())
    }

    /// Number of rebalance dates (= number of return periods).
    pub fn n_periods(&self) -> usize {
        (self.horizon_years / self.rebalance_interval).round() as usize
    }

    /// Period length in years.
    pub fn dt(&self) -> f64 {
        self.rebalance_interval
    }

    /// Cash injected at rebalance date `t`.
    pub fn contribution_at(&self, t: usize) -> f64 {
        let injected = match &self.contribution_times {
            Some(times) => times.contains(&t),
            None => t >= 1 && t < self.n_periods(),
        };
        if injected {
            self.contribution
        } else {
            0.0
        }
    }

    pub fn contributions(&self) -> Vec<f64> {
        (0..self.n_periods()).map(|t| self.contribution_at(t)).collect()
    }

    /// Terminal wealth when wealth `w` held just before date `t` and every
    /// later contribution all grow at the bond gross return `bond_gross`.
    pub fn bond_only_terminal(&self, w: f64, t: usize, bond_gross: f64) -> f64 {
        let n = self.n_periods();
        (t..n).fold(w, |acc, s| (acc + self.contribution_at(s)) * bond_gross)
    }

    /// Terminal wealth of the all-bond strategy from `W0`.
    pub fn all_bond_terminal(&self, bond_gross: f64) -> f64 {
        self.bond_only_terminal(self.initial_wealth, 0, bond_gross)
    }

    /// Sum of all injections including `W0`.
    pub fn total_invested(&self) -> f64 {
        self.initial_wealth + self.contributions().iter().sum::<f64>()
    }
}

/// Fraction of wealth in equities at one rebalance date.
#[derive(Debug, Clone)]
pub enum Strategy {
    Constant(f64),
    /// One fraction per rebalance date, piecewise constant in between.
    Glide(Vec<f64>),
    Adaptive(Arc<PolicyGrid>),
}

fn check_fraction(p: f64) -> Result<(), StrategyError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(StrategyError::InvalidStrategy(format!(
            "equity fraction {p} outside [0, 1]"
        )))
    }
}

impl Strategy {
    pub fn validate(&self, scenario: &Scenario) -> Result<(), StrategyError> {
        match self {
            Strategy::Constant(p) => check_fraction(*p),
            Strategy::Glide(g) => {
                if g.len() != scenario.n_periods() {
                    return Err(StrategyError::InvalidStrategy(format!(
                        "glide has {} entries, scenario has {} rebalance dates",
                        g.len(),
                        scenario.n_periods()
                    )));
                }
                g.iter().try_for_each(|p| check_fraction(*p))
            }
            Strategy::Adaptive(grid) => {
                if grid.times.len() != scenario.n_periods() {
                    return Err(StrategyError::InvalidStrategy(format!(
                        "policy covers {} dates, scenario has {}",
                        grid.times.len(),
                        scenario.n_periods()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Equity fraction at date `t` given wealth `w` held before that date's contribution.
    #[inline]
    pub fn fraction(&self, t: usize, w: f64) -> Result<f64, SolverError> {
        match self {
            Strategy::Constant(p) => Ok(*p),
            Strategy::Glide(g) => g.get(t).copied().ok_or(SolverError::UnknownTime(t)),
            Strategy::Adaptive(grid) => grid.lookup(w, t),
        }
    }

    /// Short label for tables and file headers.
    pub fn label(&self) -> String {
        match self {
            Strategy::Constant(p) => format!("constant p={p}"),
            Strategy::Glide(_) => "glide".to_string(),
            Strategy::Adaptive(_) => "adaptive".to_string(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Strategy::Adaptive(_))
    }
}

/// On-disk form of a strategy: `{"constant": p}`, `{"glide": [...]}` or
/// `{"adaptive": "<policy file>"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategySpec {
    Constant(f64),
    Glide(Vec<f64>),
    Adaptive(PathBuf),
}

/// Age-based rule of thumb: `(110 - age) / 100`, clamped to `[0, 1]`.
pub fn age_based_fraction(age: f64) -> f64 {
    ((110.0 - age) / 100.0).clamp(0.0, 1.0)
}

/// Inject, rebalance to `p`, accrue one period.
#[inline]
pub fn step_wealth(w: f64, contribution: f64, p: f64, equity_gross: f64, bond_gross: f64) -> f64 {
    (w + contribution) * (p * equity_gross + (1.0 - p) * bond_gross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::strategy::Strategy;

    #[test]
    fn age_rule() {
        assert!((age_based_fraction(30.0) - 0.80).abs() < 1e-15);
        assert_eq!(age_based_fraction(110.0), 0.0);
        assert_eq!(age_based_fraction(5.0), 1.0);
        assert_eq!(age_based_fraction(120.0), 0.0);
    }

    #[test]
    fn wealth_step_examples() {
        assert!((step_wealth(0.0, 10_000.0, 0.0, 1.5, 1.02) - 10_200.0).abs() < 1e-9);
        assert!((step_wealth(10_000.0, 10_000.0, 1.0, 1.10, 1.0) - 22_000.0).abs() < 1e-9);
        assert!((step_wealth(10_000.0, 10_000.0, 0.6, 1.10, 1.00) - 21_200.0).abs() < 1e-9);
    }

    #[test]
    fn default_schedule_injects_at_one_through_twenty_nine() {
        let s = Scenario::long_term();
        s.validate().unwrap();
        assert_eq!(s.n_periods(), 30);
        assert_eq!(s.contribution_at(0), 0.0);
        assert_eq!(s.contribution_at(1), 10_000.0);
        assert_eq!(s.contribution_at(29), 10_000.0);
        assert_eq!(s.contribution_at(30), 0.0);
        assert_eq!(s.total_invested(), 300_000.0);
        // flat bond: all-bond wealth is the sum of injections
        assert!((s.all_bond_terminal(1.0) - 300_000.0).abs() < 1e-9);
    }

    #[test]
    fn scenario_json_shape() {
        let s: Scenario = serde_json::from_str(r#"{"T": 30, "W0": 10000, "c": 10000}"#).unwrap();
        assert_eq!(s, Scenario::long_term());
        let explicit: Scenario =
            serde_json::from_str(r#"{"T": 1, "W0": 10000, "c": 10000, "contribution_times": [0]}"#).unwrap();
        assert_eq!(explicit.contribution_at(0), 10_000.0);
        let bad: Scenario = serde_json::from_str(r#"{"T": 2.5, "W0": 1, "c": 1}"#).unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn strategy_json_shape() {
        let c: StrategySpec = serde_json::from_str(r#"{"constant": 0.6}"#).unwrap();
        assert_eq!(c, StrategySpec::Constant(0.6));
        let g: StrategySpec = serde_json::from_str(r#"{"glide": [0.8, 0.2]}"#).unwrap();
        assert_eq!(g, StrategySpec::Glide(vec![0.8, 0.2]));
        let a: StrategySpec = serde_json::from_str(r#"{"adaptive": "policy.json"}"#).unwrap();
        assert_eq!(a, StrategySpec::Adaptive("policy.json".into()));
    }

    #[test]
    fn strategy_validation() {
        let s = Scenario::long_term();
        assert!(Strategy::Constant(1.2).validate(&s).is_err());
        assert!(Strategy::Glide(vec![0.5; 29]).validate(&s).is_err());
        assert!(Strategy::Glide(vec![0.5; 30]).validate(&s).is_ok());
    }

    proptest! {
        #[test]
        fn step_is_linear_in_p(
            w in 0.0f64..1e7, c in 0.0f64..1e5, p in 0.0f64..=1.0,
            re in 0.01f64..5.0, rb in 0.5f64..1.5,
        ) {
            let at = step_wealth(w, c, p, re, rb);
            let mix = p * step_wealth(w, c, 1.0, re, rb) + (1.0 - p) * step_wealth(w, c, 0.0, re, rb);
            prop_assert!((at - mix).abs() <= 1e-12 * at.abs().max(1.0));
            prop_assert!(at >= 0.0);
        }
    }
}
