//! Quoting policies compared in the backtest.
//!
//! * `pure_as`: funding-unaware quotes from an HJB table solved with the
//!   funding axis collapsed to zero (the classical inventory-skew limit of
//!   the same objective).
//! * `pure_as_scaled`: `pure_as` with quote size and inventory limits scaled.
//! * `hjb_fd`: funding-aware quotes from the full table at `f = S * F`.
//! * `risk_calibrated`: a linear skew around `1/k` in inventory and cash
//!   funding. This rule is a reconstruction of an undisclosed practical
//!   benchmark, not a derived optimum.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fill_calib::FillCurve;
use crate::hjb_solver::HJBTable;
use crate::simulator::{run_seeds, MarketPanel, PathResult, SimConfig};
use crate::stats::mean;

/// Tolerance used when comparing inventory against its limits.
const LIMIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    PureAs,
    PureAsScaled,
    HjbFd,
    RiskCalibrated,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::PureAs => "pure_as",
            PolicyKind::PureAsScaled => "pure_as_scaled",
            PolicyKind::HjbFd => "hjb_fd",
            PolicyKind::RiskCalibrated => "risk_calibrated",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure_as" => Ok(PolicyKind::PureAs),
            "pure_as_scaled" => Ok(PolicyKind::PureAsScaled),
            "hjb_fd" => Ok(PolicyKind::HjbFd),
            "risk_calibrated" => Ok(PolicyKind::RiskCalibrated),
            other => Err(Error::Config(format!("unknown policy kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InventoryLimits {
    pub q_min: f64,
    pub q_max: f64,
}

impl InventoryLimits {
    pub fn contains(&self, q: f64) -> bool {
        q >= self.q_min - LIMIT_EPS && q <= self.q_max + LIMIT_EPS
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteDecision {
    pub bid_offset: f64,
    pub ask_offset: f64,
    pub bid_active: bool,
    pub ask_active: bool,
    pub quote_size: f64,
}

impl QuoteDecision {
    pub fn active_sides(&self) -> u64 {
        self.bid_active as u64 + self.ask_active as u64
    }

    /// Deactivate any side whose fill would leave `limits` from inventory `q`.
    pub fn block_at_limits(&mut self, q: f64, limits: &InventoryLimits) {
        if q + self.quote_size > limits.q_max + LIMIT_EPS {
            self.bid_active = false;
            self.bid_offset = f64::INFINITY;
        }
        if q - self.quote_size < limits.q_min - LIMIT_EPS {
            self.ask_active = false;
            self.ask_offset = f64::INFINITY;
        }
    }
}

/// One configured policy. Table-based kinds hold a shared solved table.
#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub label: String,
    pub kind: PolicyKind,
    pub hjb_table: Option<Arc<HJBTable>>,
    /// Quote-size and inventory-limit multiplier (`pure_as_scaled`).
    pub scale: f64,
    /// Inventory skew loading, quote currency per contract (`risk_calibrated`).
    pub beta_q: f64,
    /// Cash-funding skew loading, hours (`risk_calibrated`).
    pub beta_f: f64,
    /// Quote size and limits for `risk_calibrated`; table kinds read them off the grid.
    pub quote_size: f64,
    pub limits: Option<InventoryLimits>,
    /// Fill curve used by `risk_calibrated` for `1/k` and the quote floor.
    pub fill: Option<FillCurve>,
}

impl PolicyConfig {
    fn base(kind: PolicyKind) -> Self {
        Self {
            label: kind.to_string(),
            kind,
            hjb_table: None,
            scale: 1.0,
            beta_q: 0.0,
            beta_f: 0.0,
            quote_size: 1.0,
            limits: None,
            fill: None,
        }
    }

    pub fn pure_as(table: Arc<HJBTable>) -> Self {
        Self { hjb_table: Some(table), ..Self::base(PolicyKind::PureAs) }
    }

    pub fn pure_as_scaled(table: Arc<HJBTable>, scale: f64) -> Self {
        Self { hjb_table: Some(table), scale, ..Self::base(PolicyKind::PureAsScaled) }
    }

    pub fn hjb_fd(table: Arc<HJBTable>) -> Self {
        Self { hjb_table: Some(table), ..Self::base(PolicyKind::HjbFd) }
    }

    pub fn risk_calibrated(fill: FillCurve, beta_q: f64, beta_f: f64, quote_size: f64, limits: InventoryLimits) -> Self {
        Self { beta_q, beta_f, quote_size, limits: Some(limits), fill: Some(fill), ..Self::base(PolicyKind::RiskCalibrated) }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn table(&self) -> Result<&HJBTable> {
        self.hjb_table.as_deref().ok_or_else(|| Error::Config(format!("policy '{}' ({}) needs a solved HJB table", self.label, self.kind)))
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PolicyKind::PureAs | PolicyKind::PureAsScaled => {
                let t = self.table()?;
                if t.grid().n_f != 1 {
                    return Err(Error::Config(format!("policy '{}' needs a funding-collapsed table (one funding node)", self.label)));
                }
            }
            PolicyKind::HjbFd => {
                self.table()?;
            }
            PolicyKind::RiskCalibrated => {
                let fill = self.fill.ok_or_else(|| Error::Config("risk_calibrated needs a fill curve".into()))?;
                if !(fill.k > 0.0) {
                    return Err(Error::Config("risk_calibrated needs k > 0".into()));
                }
                let lim = self.limits.ok_or_else(|| Error::Config("risk_calibrated needs inventory limits".into()))?;
                if !(lim.q_min <= 0.0 && lim.q_max >= 0.0) {
                    return Err(Error::Config("inventory limits must bracket 0".into()));
                }
                if !(self.quote_size > 0.0) {
                    return Err(Error::Config("quote size must be positive".into()));
                }
                if !self.beta_q.is_finite() || !self.beta_f.is_finite() {
                    return Err(Error::Config("skew loadings must be finite".into()));
                }
            }
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config("scale must be positive".into()));
        }
        Ok(())
    }

    fn effective_scale(&self) -> f64 {
        if self.kind == PolicyKind::PureAsScaled {
            self.scale
        } else {
            1.0
        }
    }

    pub fn quote_size(&self) -> Result<f64> {
        match self.kind {
            PolicyKind::RiskCalibrated => Ok(self.quote_size),
            _ => Ok(self.table()?.grid().dq * self.effective_scale()),
        }
    }

    pub fn limits(&self) -> Result<InventoryLimits> {
        match self.kind {
            PolicyKind::RiskCalibrated => self.limits.ok_or_else(|| Error::Config("risk_calibrated needs inventory limits".into())),
            _ => {
                let g = self.table()?.grid();
                let s = self.effective_scale();
                Ok(InventoryLimits { q_min: g.q_min * s, q_max: g.q_max * s })
            }
        }
    }

    pub fn delta_min(&self) -> Result<f64> {
        match self.kind {
            PolicyKind::RiskCalibrated => Ok(self.fill.map(|f| f.delta_min).unwrap_or(0.0)),
            _ => Ok(self.table()?.params().fill.delta_min),
        }
    }

    /// Quotes at elapsed time `t` (hours), inventory `q`, mid `price` and the
    /// latest fractional funding rate.
    pub fn quote(&self, t: f64, q: f64, price: f64, funding_rate: f64) -> Result<QuoteDecision> {
        let size = self.quote_size()?;
        let mut decision = match self.kind {
            PolicyKind::PureAs | PolicyKind::PureAsScaled | PolicyKind::HjbFd => {
                let table = self.table()?;
                let f_cash = if self.kind == PolicyKind::HjbFd { price * funding_rate } else { 0.0 };
                let q_table = q / self.effective_scale();
                let look = table.quote_lookup(table_time(t, table.grid().horizon_t), q_table, f_cash)?;
                QuoteDecision {
                    bid_offset: look.bid_offset,
                    ask_offset: look.ask_offset,
                    bid_active: !look.bid_blocked,
                    ask_active: !look.ask_blocked,
                    quote_size: size,
                }
            }
            PolicyKind::RiskCalibrated => {
                let fill = self.fill.ok_or_else(|| Error::Config("risk_calibrated needs a fill curve".into()))?;
                let skew = self.beta_q * q + self.beta_f * price * funding_rate;
                let base = 1.0 / fill.k;
                QuoteDecision {
                    bid_offset: (base + skew).max(fill.delta_min),
                    ask_offset: (base - skew).max(fill.delta_min),
                    bid_active: true,
                    ask_active: true,
                    quote_size: size,
                }
            }
        };
        decision.block_at_limits(q, &self.limits()?);
        Ok(decision)
    }
}

/// Map elapsed time onto a table of horizon `horizon`: identity within the
/// horizon, restarting the horizon (rolling) beyond it.
pub fn table_time(t: f64, horizon: f64) -> f64 {
    if t <= horizon {
        t.max(0.0)
    } else {
        t % horizon
    }
}

/// Outcome of the scaled-AS grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleCalibration {
    pub scale: f64,
    pub achieved_rms: f64,
    /// `(scale, mean inventory RMS)` for every grid point.
    pub response: Vec<(f64, f64)>,
    pub warning: Option<String>,
}

/// Scales searched by [`calibrate_scaled_as`]: 0.10, 0.15, ..., 2.00.
pub fn scale_grid() -> Vec<f64> {
    (2..=40).map(|i| i as f64 * 0.05).collect()
}

fn mean_rms(results: &[PathResult]) -> f64 {
    mean(&results.iter().map(PathResult::inventory_rms).collect::<Vec<_>>())
}

fn mean_final_equity(results: &[PathResult]) -> f64 {
    mean(&results.iter().map(PathResult::final_equity).collect::<Vec<_>>())
}

/// Pick the `pure_as_scaled` multiplier whose mean inventory RMS on the
/// calibration seeds is closest to `target_rms`; ties go to the smaller scale.
pub fn calibrate_scaled_as(
    panel: &MarketPanel,
    as_table: Arc<HJBTable>,
    fill: &FillCurve,
    cfg: &SimConfig,
    target_rms: f64,
    seeds: &[u64],
) -> Result<ScaleCalibration> {
    if seeds.is_empty() {
        return Err(Error::invalid("calibration seed set is empty"));
    }
    if !(target_rms > 0.0 && target_rms.is_finite()) {
        return Err(Error::invalid("target inventory RMS must be positive"));
    }
    let mut response = Vec::new();
    for scale in scale_grid() {
        let policy = PolicyConfig::pure_as_scaled(as_table.clone(), scale);
        let results = run_seeds(panel, &policy, fill, cfg, seeds)?;
        response.push((scale, mean_rms(&results)));
    }
    let mut best = 0;
    for (i, &(_, rms)) in response.iter().enumerate() {
        if (rms - target_rms).abs() < (response[best].1 - target_rms).abs() {
            best = i;
        }
    }
    let rms_values: Vec<f64> = response.iter().map(|r| r.1).collect();
    let lo = rms_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rms_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let warning = if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        Some("inventory RMS does not respond to the scale".to_string())
    } else if rms_values.windows(2).any(|w| w[1] < w[0]) {
        Some("inventory RMS is not monotone in the scale".to_string())
    } else {
        None
    };
    Ok(ScaleCalibration { scale: response[best].0, achieved_rms: response[best].1, response, warning })
}

/// Search space of the risk-rule calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskGrid {
    pub beta_q: Vec<f64>,
    pub beta_f: Vec<f64>,
    /// A point is admissible when its mean inventory RMS is at most
    /// `target * (1 + rms_tolerance)`. The all-zero point always is.
    pub rms_tolerance: f64,
}

impl RiskGrid {
    /// Loadings in units of the symmetric half-spread `1/k`: `beta_q` per
    /// quote size and `beta_f` per hour of funding carry.
    pub fn default_for(fill: &FillCurve, quote_size: f64) -> Self {
        let half = 1.0 / fill.k;
        Self {
            beta_q: [0.0, 0.05, 0.1, 0.2, 0.4].iter().map(|m| m * half / quote_size).collect(),
            beta_f: vec![0.0, 1.0, 2.0, 4.0, 8.0],
            rms_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCalibration {
    pub beta_q: f64,
    pub beta_f: f64,
    pub mean_final_equity: f64,
    pub mean_inventory_rms: f64,
}

/// Grid search for `(beta_q, beta_f)`: among admissible points, maximise mean
/// final equity; ties go to the smaller `beta_f`, then the smaller `beta_q`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_risk_rule(
    panel: &MarketPanel,
    fill: &FillCurve,
    quote_size: f64,
    limits: InventoryLimits,
    cfg: &SimConfig,
    target_rms: f64,
    seeds: &[u64],
    grid: &RiskGrid,
) -> Result<RiskCalibration> {
    if seeds.is_empty() {
        return Err(Error::invalid("calibration seed set is empty"));
    }
    if !(target_rms > 0.0) {
        return Err(Error::invalid("target inventory RMS must be positive"));
    }
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        if !v.contains(&0.0) {
            v.push(0.0);
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (bq, bf) = (sorted(&grid.beta_q), sorted(&grid.beta_f));
    let budget = target_rms * (1.0 + grid.rms_tolerance);
    let mut best: Option<RiskCalibration> = None;
    for &beta_f in &bf {
        for &beta_q in &bq {
            let policy = PolicyConfig::risk_calibrated(*fill, beta_q, beta_f, quote_size, limits);
            let results = run_seeds(panel, &policy, fill, cfg, seeds)?;
            let point =
                RiskCalibration { beta_q, beta_f, mean_final_equity: mean_final_equity(&results), mean_inventory_rms: mean_rms(&results) };
            let admissible = point.mean_inventory_rms <= budget || (beta_q == 0.0 && beta_f == 0.0);
            if admissible && best.as_ref().is_none_or(|b| point.mean_final_equity > b.mean_final_equity) {
                best = Some(point);
            }
        }
    }
    Ok(best.expect("the all-zero point is always admissible"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fill_calib::FillCurve;
    use crate::funding_calib::OUParams;
    use crate::hjb_solver::{solve, GridSpec, HJBParams};

    fn collapsed_table(alpha: f64, phi: f64) -> Arc<HJBTable> {
        let grid = GridSpec { horizon_t: 1.0, n_time: 50, q_min: -3.0, q_max: 3.0, dq: 1.0, f_min: 0.0, f_max: 0.0, n_f: 1 };
        let params = HJBParams {
            ou_cash: OUParams { kappa: 0.0, theta: 0.0, sigma: 0.0 },
            fill: FillCurve::new(10.0, 4.0, 0.01).unwrap(),
            alpha,
            phi,
        };
        Arc::new(solve(&grid, &params).unwrap())
    }

    #[test]
    fn pure_as_symmetric_at_zero() {
        let p = PolicyConfig::pure_as(collapsed_table(0.0, 0.0));
        let end = p.quote(1.0, 0.0, 100.0, 0.001).unwrap();
        assert!((end.bid_offset - 0.25).abs() < 1e-12);
        assert!((end.ask_offset - 0.25).abs() < 1e-12);
        // limits make the flat book worth more than one step away, so quotes widen
        let d = p.quote(0.5, 0.0, 100.0, 0.001).unwrap();
        assert!((d.bid_offset - d.ask_offset).abs() < 1e-12);
        assert!(d.bid_offset >= 0.25);
        assert!(d.bid_active && d.ask_active);
    }

    #[test]
    fn pure_as_ignores_funding() {
        let p = PolicyConfig::pure_as(collapsed_table(0.1, 0.05));
        for q in [-2.0, 0.0, 1.0] {
            let a = p.quote(0.3, q, 100.0, 0.01).unwrap();
            let b = p.quote(0.3, q, 100.0, -0.01).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn risk_rule_zero_loadings_is_symmetric() {
        let fill = FillCurve::new(10.0, 4.0, 0.01).unwrap();
        let lim = InventoryLimits { q_min: -3.0, q_max: 3.0 };
        let p = PolicyConfig::risk_calibrated(fill, 0.0, 0.0, 1.0, lim);
        let d = p.quote(0.0, 2.0, 100.0, 0.003).unwrap();
        assert_eq!(d.bid_offset, 0.25);
        assert_eq!(d.ask_offset, 0.25);
    }

    #[test]
    fn risk_rule_skews_and_floors() {
        let fill = FillCurve::new(10.0, 4.0, 0.05).unwrap();
        let lim = InventoryLimits { q_min: -3.0, q_max: 3.0 };
        let p = PolicyConfig::risk_calibrated(fill, 0.1, 0.0, 1.0, lim);
        let d = p.quote(0.0, 2.0, 100.0, 0.0).unwrap();
        assert!((d.bid_offset - 0.45).abs() < 1e-12);
        assert!((d.ask_offset - 0.05).abs() < 1e-12);
        let top = p.quote(0.0, 3.0, 100.0, 0.0).unwrap();
        assert!(!top.bid_active && top.ask_active);
    }

    #[test]
    fn missing_table_is_config_error() {
        let mut p = PolicyConfig::base(PolicyKind::HjbFd);
        p.label = "hjb".into();
        assert!(matches!(p.quote(0.0, 0.0, 1.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn scaled_policy_scales_size_and_limits() {
        let t = collapsed_table(0.1, 0.01);
        let p = PolicyConfig::pure_as_scaled(t.clone(), 0.5);
        assert_eq!(p.quote_size().unwrap(), 0.5);
        assert_eq!(p.limits().unwrap(), InventoryLimits { q_min: -1.5, q_max: 1.5 });
        let base = PolicyConfig::pure_as(t);
        let a = p.quote(0.2, 1.0, 100.0, 0.0).unwrap();
        let b = base.quote(0.2, 2.0, 100.0, 0.0).unwrap();
        assert_eq!((a.bid_offset, a.ask_offset), (b.bid_offset, b.ask_offset));
        assert!(p.quote(0.2, 1.5, 100.0, 0.0).map(|d| !d.bid_active).unwrap());
    }

    #[test]
    fn table_time_rolls_over() {
        assert_eq!(table_time(0.5, 24.0), 0.5);
        assert_eq!(table_time(24.0, 24.0), 24.0);
        assert!((table_time(25.5, 24.0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn scale_grid_contains_one() {
        let g = scale_grid();
        assert_eq!(g.len(), 39);
        assert!(g.contains(&1.0));
        assert!((g[0] - 0.1).abs() < 1e-12 && (g[38] - 2.0).abs() < 1e-12);
    }
}
