//! Monthly index ingestion, inflation adjustment and return series.
//!
//! Input is a CSV with the exact header `date,equity_nominal,bill_nominal,cpi`,
//! one row per calendar month in ascending order. Everything downstream works
//! on real (CPI-deflated) monthly log returns.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

pub const CSV_HEADER: [&str; 4] = ["date", "equity_nominal", "bill_nominal", "cpi"];
pub const EQUITY_NOMINAL: &str = "equity_nominal";
pub const BILL_NOMINAL: &str = "bill_nominal";
pub const CPI: &str = "cpi";

/// Calendar month, serialized as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    /// Months since year 0, January.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn plus_months(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    pub fn months_until(self, later: YearMonth) -> i64 {
        later.ordinal() - self.ordinal()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("`{s}` is not YYYY-MM"))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(format!("`{s}` is not YYYY-MM"));
        }
        let year: i32 = y.parse().map_err(|_| format!("bad year in `{s}`"))?;
        let month: u8 = m.parse().map_err(|_| format!("bad month in `{s}`"))?;
        YearMonth::new(year, month).ok_or_else(|| format!("month out of range in `{s}`"))
    }
}

impl TryFrom<String> for YearMonth {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> String {
        m.to_string()
    }
}

/// Contiguous monthly index levels.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlySeries {
    start_month: YearMonth,
    values: Vec<f64>,
}

impl MonthlySeries {
    pub fn new(start_month: YearMonth, values: Vec<f64>) -> Result<Self, DataError> {
        if values.is_empty() {
            return Err(DataError::TooShort {
                needed: 1,
                found: 0,
            });
        }
        if let Some((i, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(DataError::NonPositiveLevel {
                column: String::from("<series>"),
                month: start_month.plus_months(i as i64),
                value: v,
            });
        }
        Ok(Self {
            start_month,
            values,
        })
    }

    pub fn start_month(&self) -> YearMonth {
        self.start_month
    }

    pub fn end_month(&self) -> YearMonth {
        self.start_month.plus_months(self.values.len() as i64 - 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Monthly log changes; the first return is dated at the month it ends in.
    pub fn log_returns(&self) -> Result<ReturnSeries, DataError> {
        if self.values.len() < 2 {
            return Err(DataError::TooShort {
                needed: 2,
                found: self.values.len(),
            });
        }
        let log_returns = self
            .values
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .collect();
        Ok(ReturnSeries {
            start_month: self.start_month.plus_months(1),
            log_returns,
        })
    }
}

/// Monthly log returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub start_month: YearMonth,
    pub log_returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(start_month: YearMonth, log_returns: Vec<f64>) -> Self {
        Self {
            start_month,
            log_returns,
        }
    }

    pub fn len(&self) -> usize {
        self.log_returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_returns.is_empty()
    }
}

/// The series read from one input file, keyed by column name.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSet {
    pub columns: BTreeMap<String, MonthlySeries>,
}

impl SeriesSet {
    pub fn get(&self, column: &str) -> Result<&MonthlySeries, DataError> {
        self.columns
            .get(column)
            .ok_or_else(|| DataError::UnknownColumn(column.to_string()))
    }
}

/// Parse the monthly CSV format.
pub fn load_monthly_series<R: Read>(source: R) -> Result<SeriesSet, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();

    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(DataError::MalformedRow {
                line: 1,
                reason: e.to_string(),
            })
        }
        None => {
            return Err(DataError::BadHeader {
                expected: CSV_HEADER.join(","),
                found: String::new(),
            })
        }
    };
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(DataError::BadHeader {
            expected: CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut start: Option<YearMonth> = None;
    let mut prev: Option<YearMonth> = None;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); CSV_HEADER.len() - 1];
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DataError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != CSV_HEADER.len() {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()),
            });
        }
        let month: YearMonth = rec[0]
            .parse()
            .map_err(|reason| DataError::MalformedRow { line, reason })?;
        if let Some(p) = prev {
            let expected = p.plus_months(1);
            if month != expected {
                return Err(DataError::GapInDates {
                    line,
                    expected,
                    found: month,
                });
            }
        } else {
            start = Some(month);
        }
        prev = Some(month);
        for (c, col) in cols.iter_mut().enumerate() {
            let cell = &rec[c + 1];
            let v: f64 = cell.parse().map_err(|_| DataError::MalformedRow {
                line,
                reason: format!("cannot parse `{cell}` in column `{}`", CSV_HEADER[c + 1]),
            })?;
            if !v.is_finite() {
                return Err(DataError::MalformedRow {
                    line,
                    reason: format!("non-finite value in column `{}`", CSV_HEADER[c + 1]),
                });
            }
            if v <= 0.0 {
                return Err(DataError::NonPositiveLevel {
                    column: CSV_HEADER[c + 1].to_string(),
                    month,
                    value: v,
                });
            }
            col.push(v);
        }
    }

    let n = cols[0].len();
    if n < 2 {
        return Err(DataError::TooFewRows {
            needed: 2,
            found: n,
        });
    }
    let start = start.expect("at least two rows were read");
    let columns = CSV_HEADER[1..]
        .iter()
        .zip(cols)
        .map(|(name, values)| {
            (
                name.to_string(),
                MonthlySeries {
                    start_month: start,
                    values,
                },
            )
        })
        .collect();
    Ok(SeriesSet { columns })
}

/// Deflate a nominal index by CPI, rebased so the first month is unchanged.
pub fn to_real_index(nominal: &MonthlySeries, cpi: &MonthlySeries) -> Result<MonthlySeries, DataError> {
    if nominal.start_month != cpi.start_month || nominal.len() != cpi.len() {
        return Err(DataError::LengthMismatch(format!(
            "nominal {}+{} vs cpi {}+{}",
            nominal.start_month,
            nominal.len(),
            cpi.start_month,
            cpi.len()
        )));
    }
    let base = cpi.values[0];
    let values = nominal
        .values
        .iter()
        .zip(&cpi.values)
        .map(|(n, c)| n * (base / c))
        .collect();
    Ok(MonthlySeries {
        start_month: nominal.start_month,
        values,
    })
}

fn mean_and_sample_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Affine rescaling to zero sample mean and unit sample standard deviation.
pub fn standardize_returns(series: &ReturnSeries) -> Result<ReturnSeries, DataError> {
    let xs = &series.log_returns;
    if xs.len() < 2 {
        return Err(DataError::TooShort {
            needed: 2,
            found: xs.len(),
        });
    }
    let (mean, sd) = mean_and_sample_std(xs);
    if !(sd > 0.0) || sd <= 1e-15 * mean.abs() {
        return Err(DataError::DegenerateSeries);
    }
    Ok(ReturnSeries {
        start_month: series.start_month,
        log_returns: xs.iter().map(|x| (x - mean) / sd).collect(),
    })
}

/// Annualised real log drift: 12 × mean monthly log change.
pub fn estimate_bond_drift(real_bond_index: &MonthlySeries) -> Result<f64, DataError> {
    let r = real_bond_index.log_returns()?;
    Ok(12.0 * r.log_returns.iter().sum::<f64>() / r.len() as f64)
}

/// Real equity and bond monthly log returns over the same months.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMarket {
    pub equity: ReturnSeries,
    pub bond: ReturnSeries,
    pub real_equity_index: MonthlySeries,
    pub real_bond_index: MonthlySeries,
}

impl RealMarket {
    pub fn from_series(set: &SeriesSet) -> Result<Self, DataError> {
        let cpi = set.get(CPI)?;
        let real_equity_index = to_real_index(set.get(EQUITY_NOMINAL)?, cpi)?;
        let real_bond_index = to_real_index(set.get(BILL_NOMINAL)?, cpi)?;
        Ok(Self {
            equity: real_equity_index.log_returns()?,
            bond: real_bond_index.log_returns()?,
            real_equity_index,
            real_bond_index,
        })
    }

    pub fn n_months(&self) -> usize {
        self.equity.len()
    }

    pub fn bond_drift(&self) -> f64 {
        estimate_bond_drift(&self.real_bond_index).expect("at least two levels")
    }

    /// Restrict to returns dated in `[first, last]`.
    pub fn window(&self, first: YearMonth, last: YearMonth) -> Option<RealMarket> {
        let i0 = self.equity.start_month.months_until(first);
        let i1 = self.equity.start_month.months_until(last);
        if i0 < 0 || i1 < i0 || i1 as usize >= self.n_months() {
            return None;
        }
        let (i0, i1) = (i0 as usize, i1 as usize);
        let slice = |s: &ReturnSeries| ReturnSeries::new(first, s.log_returns[i0..=i1].to_vec());
        let idx = |s: &MonthlySeries| {
            MonthlySeries::new(
                first.plus_months(-1),
                s.values[i0..=i1 + 1].to_vec(),
            )
            .expect("sub-slice of a valid series")
        };
        Some(RealMarket {
            equity: slice(&self.equity),
            bond: slice(&self.bond),
            real_equity_index: idx(&self.real_equity_index),
            real_bond_index: idx(&self.real_bond_index),
        })
    }
}
