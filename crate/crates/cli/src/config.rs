use std::path::{Path, PathBuf};

use perpmm::fill_calib::HitMode;
use perpmm::hjb_solver::{GridSpec, HJBParams};
use perpmm::io::parse_timestamp;
use perpmm::policies::{InventoryLimits, PolicyKind};
use serde::Deserialize;

use crate::CliError;

/// One experiment for one asset. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub asset: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    pub hjb: HjbConfig,
    #[serde(default)]
    pub backtest: BacktestConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub mid: PathBuf,
    pub funding: PathBuf,
    /// Crossing tape; required only by `calibrate`.
    #[serde(default)]
    pub tape: Option<PathBuf>,
    #[serde(default = "default_max_gap")]
    pub max_gap_minutes: i64,
    #[serde(default)]
    pub allow_gaps: bool,
}

fn default_max_gap() -> i64 {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Chronological share of the funding series used for fitting.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_mode")]
    pub mode: HitMode,
    /// Quote distances (quote currency); defaults to log-spaced 0.5 to 50 bp of the mean mid.
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default = "default_n_thresholds")]
    pub n_thresholds: usize,
    /// Quote floor in quote currency.
    #[serde(default)]
    pub delta_min: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            train_fraction: default_train_fraction(),
            mode: default_mode(),
            thresholds: None,
            n_thresholds: default_n_thresholds(),
            delta_min: 0.0,
        }
    }
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_mode() -> HitMode {
    HitMode::MinuteHit
}

fn default_n_thresholds() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbConfig {
    #[serde(default = "default_horizon")]
    pub horizon_hours: f64,
    #[serde(default = "default_n_time")]
    pub n_time: usize,
    pub q_max: f64,
    /// Defaults to `-q_max`.
    #[serde(default)]
    pub q_min: Option<f64>,
    /// Inventory step, which is also the quote size.
    #[serde(default = "default_dq")]
    pub dq: f64,
    #[serde(default = "default_n_f")]
    pub n_f: usize,
    /// Funding grid half-width in stationary standard deviations.
    #[serde(default = "default_n_sd")]
    pub n_sd: f64,
    pub alpha: f64,
    pub phi: f64,
}

fn default_horizon() -> f64 {
    24.0
}

fn default_n_time() -> usize {
    2048
}

fn default_dq() -> f64 {
    1.0
}

fn default_n_f() -> usize {
    61
}

fn default_n_sd() -> f64 {
    5.0
}

impl HjbConfig {
    pub fn limits(&self) -> InventoryLimits {
        InventoryLimits { q_min: self.q_min.unwrap_or(-self.q_max), q_max: self.q_max }
    }

    pub fn grid(&self, f_min: f64, f_max: f64, n_f: usize) -> GridSpec {
        let lim = self.limits();
        GridSpec { horizon_t: self.horizon_hours, n_time: self.n_time, q_min: lim.q_min, q_max: lim.q_max, dq: self.dq, f_min, f_max, n_f }
    }
}

/// Inclusive seed range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> Vec<u64> {
        (self.start..=self.end).collect()
    }

    fn overlaps(&self, other: &SeedRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_seeds")]
    pub seeds: SeedRange,
    /// Seeds used to fit `pure_as_scaled` and `risk_calibrated`; disjoint from `seeds`.
    #[serde(default = "default_calibration_seeds")]
    pub calibration_seeds: SeedRange,
    /// Holdout window `[start, end)`; defaults to the panel tail after the training split.
    #[serde(default)]
    pub holdout_start: Option<String>,
    #[serde(default)]
    pub holdout_end: Option<String>,
    #[serde(default)]
    pub initial_cash: f64,
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default)]
    pub settle_at_next_mid: bool,
    #[serde(default = "default_window_days")]
    pub stress_window_days: f64,
    /// Inventory-RMS target for the scaled and risk benchmarks; defaults to the
    /// `hjb_fd` RMS on the calibration seeds.
    #[serde(default)]
    pub target_rms: Option<f64>,
    /// Fixed `pure_as_scaled` multiplier, skipping its calibration.
    #[serde(default)]
    pub scale: Option<f64>,
    /// Fixed risk-rule loadings, skipping its calibration.
    #[serde(default)]
    pub beta_q: Option<f64>,
    #[serde(default)]
    pub beta_f: Option<f64>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            policies: default_policies(),
            seeds: default_seeds(),
            calibration_seeds: default_calibration_seeds(),
            holdout_start: None,
            holdout_end: None,
            initial_cash: 0.0,
            global_seed: 0,
            settle_at_next_mid: false,
            stress_window_days: default_window_days(),
            target_rms: None,
            scale: None,
            beta_q: None,
            beta_f: None,
        }
    }
}

fn default_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::PureAs, PolicyKind::PureAsScaled, PolicyKind::HjbFd, PolicyKind::RiskCalibrated]
}

fn default_seeds() -> SeedRange {
    SeedRange { start: 1, end: 100 }
}

fn default_calibration_seeds() -> SeedRange {
    SeedRange { start: 101, end: 120 }
}

fn default_window_days() -> f64 {
    3.0
}

impl BacktestConfig {
    pub fn holdout(&self) -> Result<(Option<i64>, Option<i64>), CliError> {
        let parse = |raw: &Option<String>, name: &str| -> Result<Option<i64>, CliError> {
            raw.as_deref()
                .map(|s| parse_timestamp(s).ok_or_else(|| CliError::input(format!("backtest.{name}: cannot parse timestamp '{s}'"))))
                .transpose()
        };
        Ok((parse(&self.holdout_start, "holdout_start")?, parse(&self.holdout_end, "holdout_end")?))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        cfg.resolve(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        join(&mut self.data.mid);
        join(&mut self.data.funding);
        if let Some(t) = self.data.tape.as_mut() {
            join(t);
        }
    }

    /// Schema checks that need no data; run before any compute.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::input(m));
        if self.asset.trim().is_empty() {
            return bad("asset must not be empty".into());
        }
        for (name, p) in [("data.mid", &self.data.mid), ("data.funding", &self.data.funding)] {
            if !p.is_file() {
                return bad(format!("{name}: file {} does not exist", p.display()));
            }
        }
        if let Some(t) = &self.data.tape {
            if !t.is_file() {
                return bad(format!("data.tape: file {} does not exist", t.display()));
            }
        }
        if self.data.max_gap_minutes < 1 {
            return bad("data.max_gap_minutes must be at least 1".into());
        }
        let c = &self.calibration;
        if !(c.train_fraction > 0.0 && c.train_fraction <= 1.0) {
            return bad("calibration.train_fraction must lie in (0, 1]".into());
        }
        if !(c.delta_min >= 0.0 && c.delta_min.is_finite()) {
            return bad("calibration.delta_min must be non-negative".into());
        }
        if c.thresholds.is_none() && c.n_thresholds < 2 {
            return bad("calibration.n_thresholds must be at least 2".into());
        }
        let h = &self.hjb;
        let lim = h.limits();
        if !(h.horizon_hours > 0.0) || h.n_time == 0 {
            return bad("hjb.horizon_hours and hjb.n_time must be positive".into());
        }
        if !(h.dq > 0.0) || !(lim.q_min <= 0.0 && lim.q_max >= 0.0 && lim.q_max > lim.q_min) {
            return bad("hjb inventory grid must have dq > 0 and q_min <= 0 <= q_max".into());
        }
        if h.n_f < 3 {
            return bad("hjb.n_f must be at least 3".into());
        }
        if !(h.n_sd > 0.0) || !(h.alpha >= 0.0) || !(h.phi >= 0.0) {
            return bad("hjb.n_sd must be positive and hjb.alpha, hjb.phi non-negative".into());
        }
        let b = &self.backtest;
        if b.policies.is_empty() {
            return bad("backtest.policies must not be empty".into());
        }
        for (name, r) in [("seeds", b.seeds), ("calibration_seeds", b.calibration_seeds)] {
            if r.start < 1 || r.end < r.start {
                return bad(format!("backtest.{name} must be a non-empty range starting at 1 or later"));
            }
        }
        if b.seeds.overlaps(&b.calibration_seeds) {
            return bad("backtest.calibration_seeds must be disjoint from backtest.seeds".into());
        }
        if !(b.stress_window_days > 0.0) {
            return bad("backtest.stress_window_days must be positive".into());
        }
        if let Some(s) = b.scale {
            if !(s > 0.0) {
                return bad("backtest.scale must be positive".into());
            }
        }
        if let Some(t) = b.target_rms {
            if !(t > 0.0) {
                return bad("backtest.target_rms must be positive".into());
            }
        }
        if b.beta_q.is_some() != b.beta_f.is_some() {
            return bad("backtest.beta_q and backtest.beta_f must be given together".into());
        }
        let (start, end) = b.holdout()?;
        if let (Some(s), Some(e)) = (start, end) {
            if e <= s {
                return bad("backtest.holdout_end must be after holdout_start".into());
            }
        }
        Ok(())
    }

    pub fn hjb_params(&self, ou_cash: perpmm::funding_calib::OUParams, fill: perpmm::fill_calib::FillCurve) -> HJBParams {
        HJBParams { ou_cash, fill, alpha: self.hjb.alpha, phi: self.hjb.phi }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
