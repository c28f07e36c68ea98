//! Exponential fill-intensity curves `lambda(delta) = Lambda * exp(-k delta)`
//! calibrated from minute-level crossing data.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rule deciding whether a minute counts as a fill at a given distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitMode {
    /// Cumulative crossed volume at or beyond the threshold must reach the quote size.
    VolumeMinute,
    /// Any crossing at or beyond the threshold counts.
    MinuteHit,
}

impl fmt::Display for HitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HitMode::VolumeMinute => "volume_minute",
            HitMode::MinuteHit => "minute_hit",
        })
    }
}

impl FromStr for HitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volume_minute" => Ok(HitMode::VolumeMinute),
            "minute_hit" => Ok(HitMode::MinuteHit),
            other => Err(Error::invalid(format!("unknown hit mode '{other}' (expected volume_minute or minute_hit)"))),
        }
    }
}

/// One crossing observed inside a minute: how far from the mid it reached
/// and how much volume traded there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub distance: f64,
    pub volume: f64,
}

/// All crossings recorded in one observed minute. A minute with no
/// crossings is still an observation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MinuteRecord {
    pub minute: i64,
    pub crossings: Vec<Crossing>,
}

/// Group long-format `(minute, distance, volume)` rows into minute records,
/// ordered by minute. Rows with zero volume only mark the minute as observed.
pub fn group_minutes(rows: impl IntoIterator<Item = (i64, f64, f64)>) -> Vec<MinuteRecord> {
    let mut by_minute: BTreeMap<i64, Vec<Crossing>> = BTreeMap::new();
    for (minute, distance, volume) in rows {
        let entry = by_minute.entry(minute).or_default();
        if volume > 0.0 {
            entry.push(Crossing { distance, volume });
        }
    }
    by_minute.into_iter().map(|(minute, crossings)| MinuteRecord { minute, crossings }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitPanel {
    pub minutes: u64,
    pub thresholds: Vec<f64>,
    pub hits: Vec<u64>,
    pub mode: HitMode,
    pub quote_size: f64,
}

impl HitPanel {
    pub fn validate(&self) -> Result<()> {
        check_thresholds(&self.thresholds)?;
        if self.hits.len() != self.thresholds.len() {
            return Err(Error::invalid("one hit count per threshold required"));
        }
        if self.hits.iter().any(|&h| h > self.minutes) {
            return Err(Error::invalid("hit count exceeds observed minutes"));
        }
        if self.hits.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("hit counts must be non-increasing in distance"));
        }
        Ok(())
    }

    pub fn hit_rates(&self) -> Vec<f64> {
        self.hits.iter().map(|&h| h as f64 / self.minutes.max(1) as f64).collect()
    }

    /// Empirical intensity per hour at each threshold, `-60 ln(1 - p)`.
    /// Saturated thresholds (every minute a hit) map to infinity.
    pub fn empirical_intensity(&self) -> Vec<f64> {
        self.hit_rates().into_iter().map(|p| -MINUTES_PER_HOUR * (-p).ln_1p()).collect()
    }
}

const MINUTES_PER_HOUR: f64 = 60.0;

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::invalid("at least one threshold required"));
    }
    if thresholds.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::invalid("thresholds must be finite and non-negative"));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("thresholds must be strictly ascending"));
    }
    Ok(())
}

/// Count qualifying minutes at every threshold.
pub fn bucket_hits(minutes: &[MinuteRecord], thresholds: &[f64], mode: HitMode, quote_size: f64) -> Result<HitPanel> {
    check_thresholds(thresholds)?;
    if mode == HitMode::VolumeMinute && !(quote_size > 0.0) {
        return Err(Error::invalid("volume_minute needs a positive quote size"));
    }
    let mut hits = vec![0u64; thresholds.len()];
    for rec in minutes {
        for (h, &delta) in hits.iter_mut().zip(thresholds) {
            let hit = match mode {
                HitMode::MinuteHit => rec.crossings.iter().any(|c| c.volume > 0.0 && c.distance >= delta),
                HitMode::VolumeMinute => {
                    let vol: f64 = rec.crossings.iter().filter(|c| c.distance >= delta).map(|c| c.volume).sum();
                    vol >= quote_size
                }
            };
            if hit {
                *h += 1;
            }
        }
    }
    Ok(HitPanel { minutes: minutes.len() as u64, thresholds: thresholds.to_vec(), hits, mode, quote_size })
}

/// Fill intensity curve plus the quote floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillCurve {
    /// At-touch intensity, fills per hour.
    pub lambda0: f64,
    /// Decay per unit of quote distance.
    pub k: f64,
    /// Minimum quote offset.
    pub delta_min: f64,
}

impl FillCurve {
    /// Zero intensity and zero decay are accepted here (they are useful
    /// limiting cases); the solver separately requires `k > 0`.
    pub fn new(lambda0: f64, k: f64, delta_min: f64) -> Result<Self> {
        let c = Self { lambda0, k, delta_min };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(Error::invalid(format!("lambda0 must be >= 0, got {}", self.lambda0)));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::invalid(format!("k must be >= 0, got {}", self.k)));
        }
        if !(self.delta_min >= 0.0 && self.delta_min.is_finite()) {
            return Err(Error::invalid(format!("delta_min must be >= 0, got {}", self.delta_min)));
        }
        Ok(())
    }

    /// Fills per hour at quote distance `delta`.
    #[inline]
    pub fn intensity(&self, delta: f64) -> f64 {
        if delta.is_infinite() {
            return 0.0;
        }
        self.lambda0 * (-self.k * delta).exp()
    }

    /// Highest intensity reachable at the quote floor.
    pub fn max_intensity(&self) -> f64 {
        self.intensity(self.delta_min)
    }

    /// Probability of at least one fill over `dt` hours.
    #[inline]
    pub fn fill_probability(&self, delta: f64, dt: f64) -> f64 {
        -(-self.intensity(delta) * dt).exp_m1()
    }
}

/// Weighted least squares of `ln lambda_hat` on distance, using the
/// informative thresholds (`0 < hits < minutes`) with weights
/// `hits * (1 - hits/minutes)`.
pub fn fit_fill_curve(panel: &HitPanel, delta_min: f64) -> Result<FillCurve> {
    panel.validate()?;
    if !(delta_min >= 0.0 && delta_min.is_finite()) {
        return Err(Error::invalid("delta_min must be >= 0"));
    }
    let m = panel.minutes as f64;
    let mut pts = Vec::new();
    for (&delta, &h) in panel.thresholds.iter().zip(&panel.hits) {
        if h == 0 || h >= panel.minutes {
            continue;
        }
        let hf = h as f64;
        let p = hf / m;
        let intensity = -MINUTES_PER_HOUR * (-p).ln_1p();
        pts.push((delta, intensity.ln(), hf * (1.0 - p)));
    }
    if pts.len() < 2 {
        return Err(Error::UninformativePanel(format!("{} informative thresholds (need at least 2 with 0 < hits < minutes)", pts.len())));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::UninformativePanel("thresholds carry no spread".into()));
    }
    let slope = sxy / sxx;
    let k = -slope;
    // decay over one threshold spread must exceed rounding noise
    if !(k * (sxx / sw).sqrt() > 1e-9) {
        return Err(Error::NonDecayingFills { k });
    }
    let lambda0 = (my - slope * mx).exp();
    FillCurve::new(lambda0, k, delta_min)
}

/// `n` log-spaced distances from 0.5 to 50 basis points of `mid`.
pub fn default_thresholds(mid: f64, n: usize) -> Result<Vec<f64>> {
    if !(mid > 0.0 && mid.is_finite()) {
        return Err(Error::invalid("reference mid must be positive"));
    }
    if n < 2 {
        return Err(Error::invalid("need at least two thresholds"));
    }
    let (lo, hi) = (0.5e-4 * mid, 50e-4 * mid);
    let ratio = (hi / lo).ln();
    Ok((0..n).map(|i| lo * (ratio * i as f64 / (n - 1) as f64).exp()).collect())
}

/// Fill-curve report written by the calibration command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillCurveReport {
    pub asset: String,
    pub mode: HitMode,
    pub lambda0_per_hour: f64,
    pub k_per_quote_unit: f64,
    pub delta_min: f64,
    pub thresholds: Vec<f64>,
    pub hit_rates: Vec<f64>,
}

impl FillCurveReport {
    pub fn new(asset: &str, panel: &HitPanel, curve: &FillCurve) -> Self {
        Self {
            asset: asset.to_string(),
            mode: panel.mode,
            lambda0_per_hour: curve.lambda0,
            k_per_quote_unit: curve.k,
            delta_min: curve.delta_min,
            thresholds: panel.thresholds.clone(),
            hit_rates: panel.hit_rates(),
        }
    }

    pub fn curve(&self) -> Result<FillCurve> {
        FillCurve::new(self.lambda0_per_hour, self.k_per_quote_unit, self.delta_min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minute(crossings: &[(f64, f64)]) -> MinuteRecord {
        MinuteRecord { minute: 0, crossings: crossings.iter().map(|&(distance, volume)| Crossing { distance, volume }).collect() }
    }

    #[test]
    fn full_size_crossing_hits_both_thresholds() {
        let d1 = 1.5;
        let recs = vec![minute(&[(2.0 * d1, 3.0)])];
        let p = bucket_hits(&recs, &[d1, 2.0 * d1], HitMode::VolumeMinute, 3.0).unwrap();
        assert_eq!(p.hits, vec![1, 1]);
    }

    #[test]
    fn modes_diverge_on_small_volume() {
        let d1 = 1.5;
        let recs = vec![minute(&[(2.0 * d1, 1.5)])];
        let vm = bucket_hits(&recs, &[d1, 2.0 * d1], HitMode::VolumeMinute, 3.0).unwrap();
        let mh = bucket_hits(&recs, &[d1, 2.0 * d1], HitMode::MinuteHit, 3.0).unwrap();
        assert_eq!(vm.hits, vec![0, 0]);
        assert_eq!(mh.hits, vec![1, 1]);
    }

    #[test]
    fn volume_accumulates_across_crossings() {
        let recs = vec![minute(&[(1.0, 0.6), (2.0, 0.6), (0.2, 5.0)])];
        let p = bucket_hits(&recs, &[0.5, 1.0, 1.5], HitMode::VolumeMinute, 1.0).unwrap();
        assert_eq!(p.hits, vec![1, 1, 0]);
    }

    #[test]
    fn unsorted_thresholds_rejected() {
        let recs = vec![minute(&[(1.0, 1.0)])];
        assert!(matches!(bucket_hits(&recs, &[2.0, 1.0], HitMode::MinuteHit, 1.0), Err(Error::InvalidArgument(_))));
        assert!(bucket_hits(&recs, &[1.0, 1.0], HitMode::MinuteHit, 1.0).is_err());
    }

    #[test]
    fn uninformative_panels() {
        let mk =
            |hits: Vec<u64>| HitPanel { minutes: 100, thresholds: vec![1.0, 2.0, 3.0], hits, mode: HitMode::MinuteHit, quote_size: 1.0 };
        assert!(matches!(fit_fill_curve(&mk(vec![0, 0, 0]), 0.0), Err(Error::UninformativePanel(_))));
        assert!(matches!(fit_fill_curve(&mk(vec![100, 100, 100]), 0.0), Err(Error::UninformativePanel(_))));
        assert!(matches!(fit_fill_curve(&mk(vec![100, 40, 0]), 0.0), Err(Error::UninformativePanel(_))));
    }

    #[test]
    fn flat_hits_are_non_decaying() {
        let panel =
            HitPanel { minutes: 100, thresholds: vec![1.0, 2.0, 3.0], hits: vec![40, 40, 40], mode: HitMode::MinuteHit, quote_size: 1.0 };
        assert!(matches!(fit_fill_curve(&panel, 0.0), Err(Error::NonDecayingFills { .. })));
    }

    #[test]
    fn hit_mode_round_trips_through_strings() {
        for m in [HitMode::VolumeMinute, HitMode::MinuteHit] {
            assert_eq!(m.to_string().parse::<HitMode>().unwrap(), m);
        }
        assert!("touch".parse::<HitMode>().is_err());
    }

    #[test]
    fn default_threshold_grid() {
        let t = default_thresholds(3000.0, 8).unwrap();
        assert_eq!(t.len(), 8);
        assert!((t[0] - 0.15).abs() < 1e-12);
        assert!((t[7] - 15.0).abs() < 1e-9);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn group_minutes_keeps_empty_minutes() {
        let recs = group_minutes(vec![(2, 0.0, 0.0), (1, 0.5, 2.0), (1, 0.7, 1.0)]);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].minute, 1);
        assert_eq!(recs[0].crossings.len(), 2);
        assert!(recs[1].crossings.is_empty());
    }
}
