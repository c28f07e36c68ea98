use crate::error::{Error, Result};
use crate::funding_calib::FundingSeries;

pub const SECS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelOptions {
    /// Largest tolerated spacing between consecutive minutes, seconds.
    pub max_gap_secs: i64,
    /// Accept larger gaps instead of rejecting the panel.
    pub allow_gaps: bool,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self { max_gap_secs: 600, allow_gaps: false }
    }
}

/// Minute mids plus hourly fractional funding observations. Timestamps are
/// Unix seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPanel {
    minute_ts: Vec<i64>,
    mid: Vec<f64>,
    funding_ts: Vec<i64>,
    funding: Vec<f64>,
    /// Funding reading in force at the first minute, before any observation
    /// inside the panel. Read by policies; never charged.
    initial_funding: f64,
}

impl MarketPanel {
    pub fn new(minute_ts: Vec<i64>, mid: Vec<f64>, funding_ts: Vec<i64>, funding: Vec<f64>, opts: PanelOptions) -> Result<Self> {
        if minute_ts.is_empty() {
            return Err(Error::invalid("panel has no minutes"));
        }
        if minute_ts.len() != mid.len() {
            return Err(Error::invalid("minute timestamps and mids differ in length"));
        }
        if funding_ts.len() != funding.len() {
            return Err(Error::invalid("funding timestamps and rates differ in length"));
        }
        if let Some(i) = mid.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::invalid(format!("mid at minute {i} must be positive and finite")));
        }
        if let Some(i) = funding.iter().position(|f| !f.is_finite()) {
            return Err(Error::invalid(format!("funding observation {i} is not finite")));
        }
        for (i, w) in minute_ts.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if gap <= 0 {
                return Err(Error::invalid(format!("minute timestamps not increasing at index {}", i + 1)));
            }
            if gap > opts.max_gap_secs && !opts.allow_gaps {
                return Err(Error::invalid(format!(
                    "gap of {gap} s before minute index {} exceeds the {} s maximum",
                    i + 1,
                    opts.max_gap_secs
                )));
            }
        }
        if let Some(i) = funding_ts.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("funding timestamps not increasing at index {}", i + 1)));
        }
        let (first, last) = (minute_ts[0], *minute_ts.last().unwrap());
        if let Some(ts) = funding_ts.iter().find(|&&ts| ts < first || ts > last) {
            return Err(Error::invalid(format!("funding observation at {ts} is not bracketed by the minute panel [{first}, {last}]")));
        }
        Ok(Self { minute_ts, mid, funding_ts, funding, initial_funding: 0.0 })
    }

    pub fn with_initial_funding(mut self, rate: f64) -> Self {
        self.initial_funding = rate;
        self
    }

    pub fn len(&self) -> usize {
        self.minute_ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minute_ts.is_empty()
    }

    pub fn minute_ts(&self) -> &[i64] {
        &self.minute_ts
    }

    pub fn mid(&self) -> &[f64] {
        &self.mid
    }

    pub fn funding_ts(&self) -> &[i64] {
        &self.funding_ts
    }

    pub fn funding(&self) -> &[f64] {
        &self.funding
    }

    pub fn initial_funding(&self) -> f64 {
        self.initial_funding
    }

    pub fn start(&self) -> i64 {
        self.minute_ts[0]
    }

    pub fn end(&self) -> i64 {
        *self.minute_ts.last().unwrap()
    }

    /// Elapsed hours from the first to the last minute.
    pub fn duration_hours(&self) -> f64 {
        (self.end() - self.start()) as f64 / SECS_PER_HOUR
    }

    pub fn mean_mid(&self) -> f64 {
        self.mid.iter().sum::<f64>() / self.mid.len() as f64
    }

    /// Latest funding reading at or before `ts`.
    pub fn funding_at(&self, ts: i64) -> f64 {
        let n = self.funding_ts.partition_point(|&f| f <= ts);
        if n == 0 {
            self.initial_funding
        } else {
            self.funding[n - 1]
        }
    }

    /// Sub-panel of minutes in `[start, end)`. The funding reading in force at
    /// the new first minute carries over as its initial funding.
    pub fn slice(&self, start: i64, end: i64) -> Result<Self> {
        let a = self.minute_ts.partition_point(|&t| t < start);
        let b = self.minute_ts.partition_point(|&t| t < end);
        if a >= b {
            return Err(Error::invalid(format!("no minutes in [{start}, {end})")));
        }
        let (first, last) = (self.minute_ts[a], self.minute_ts[b - 1]);
        let fa = self.funding_ts.partition_point(|&t| t < first);
        let fb = self.funding_ts.partition_point(|&t| t <= last);
        let initial = if fa == 0 { self.initial_funding } else { self.funding[fa - 1] };
        Ok(Self {
            minute_ts: self.minute_ts[a..b].to_vec(),
            mid: self.mid[a..b].to_vec(),
            funding_ts: self.funding_ts[fa..fb].to_vec(),
            funding: self.funding[fa..fb].to_vec(),
            initial_funding: initial,
        })
    }

    /// Funding observations as a series in hours since the Unix epoch.
    pub fn funding_series(&self) -> Result<FundingSeries> {
        FundingSeries::new(self.funding_ts.iter().map(|&t| t as f64 / SECS_PER_HOUR).collect(), self.funding.clone())
    }

    /// Mid price at (or just before) each funding timestamp.
    pub fn mid_at_funding(&self) -> Vec<f64> {
        self.funding_ts
            .iter()
            .map(|&ts| {
                let n = self.minute_ts.partition_point(|&t| t <= ts);
                self.mid[n.saturating_sub(1)]
            })
            .collect()
    }
}
