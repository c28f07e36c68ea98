use std::fmt;

use serde::{Deserialize, Serialize};

use super::MarketPanel;
use crate::error::{Error, Result};
use crate::stats::sample_sd;

const STRIDE_SECS: i64 = 3600;
/// Each minute stamp covers the minute that follows it.
const BAR_SECS: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowLabel {
    HighFunding,
    LowFunding,
    HighVolatility,
    Calm,
}

impl fmt::Display for WindowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowLabel::HighFunding => "high_funding",
            WindowLabel::LowFunding => "low_funding",
            WindowLabel::HighVolatility => "high_volatility",
            WindowLabel::Calm => "calm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressWindow {
    pub label: WindowLabel,
    /// Window covers `[start_ts, end_ts)`, Unix seconds.
    pub start_ts: i64,
    pub end_ts: i64,
    pub mean_funding: f64,
    pub volatility: f64,
    pub calm_score: f64,
}

struct Candidate {
    start: i64,
    mean_funding: f64,
    volatility: f64,
}

fn min_max_normalise(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Index of the best value under `better`; the earliest wins ties.
fn pick(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

/// Slide a `window_days` window at one-hour stride and return the highest
/// and lowest mean-funding windows, the highest realised-volatility window
/// and the calmest window (smallest sum of min-max normalised |mean funding|
/// and volatility), in that order.
pub fn select_stress_windows(panel: &MarketPanel, window_days: f64) -> Result<Vec<StressWindow>> {
    if !(window_days > 0.0) {
        return Err(Error::invalid("window length must be positive"));
    }
    let width = (window_days * 86_400.0).round() as i64;
    let ts = panel.minute_ts();
    let mid = panel.mid();
    let f_ts = panel.funding_ts();
    let f_val = panel.funding();
    let coverage_end = panel.end() + BAR_SECS;
    if panel.start() + width > coverage_end {
        return Err(Error::invalid(format!("panel spans {} s, shorter than the {width} s window", coverage_end - panel.start())));
    }

    let mut candidates = Vec::new();
    let mut start = panel.start();
    while start + width <= coverage_end {
        let end = start + width;
        let a = ts.partition_point(|&t| t < start);
        let b = ts.partition_point(|&t| t < end);
        let returns: Vec<f64> = (a + 1..b).map(|i| (mid[i] / mid[i - 1]).ln()).collect();
        let fa = f_ts.partition_point(|&t| t < start);
        let fb = f_ts.partition_point(|&t| t < end);
        let mean_funding = if fb > fa { f_val[fa..fb].iter().sum::<f64>() / (fb - fa) as f64 } else { panel.funding_at(start) };
        candidates.push(Candidate { start, mean_funding, volatility: sample_sd(&returns) });
        start += STRIDE_SECS;
    }

    let funding: Vec<f64> = candidates.iter().map(|c| c.mean_funding).collect();
    let vol: Vec<f64> = candidates.iter().map(|c| c.volatility).collect();
    let abs_funding: Vec<f64> = funding.iter().map(|f| f.abs()).collect();
    let calm: Vec<f64> = min_max_normalise(&abs_funding).iter().zip(min_max_normalise(&vol)).map(|(a, b)| a + b).collect();

    let picks = [
        (WindowLabel::HighFunding, pick(&funding, |a, b| a > b)),
        (WindowLabel::LowFunding, pick(&funding, |a, b| a < b)),
        (WindowLabel::HighVolatility, pick(&vol, |a, b| a > b)),
        (WindowLabel::Calm, pick(&calm, |a, b| a < b)),
    ];
    Ok(picks
        .iter()
        .map(|&(label, i)| StressWindow {
            label,
            start_ts: candidates[i].start,
            end_ts: candidates[i].start + width,
            mean_funding: funding[i],
            volatility: vol[i],
            calm_score: calm[i],
        })
        .collect())
}
