//! Synthetic data factory: OU (optionally jump) funding, a log random walk
//! mid and a crossing tape with a known fill curve.
//!
//! Each ingredient draws from its own generator stream, so switching jumps
//! on or changing the tape leaves the price path untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funding_calib::{ou_moments, JumpParams, OUParams};
use crate::simulator::{MarketPanel, PanelOptions};

const STREAM_PRICE: u64 = 1;
const STREAM_FUNDING: u64 = 2;
const STREAM_TAPE: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Exact OU path sampled every `dt` hours, starting at `f0` (not included).
pub fn simulate_ou<R: Rng + ?Sized>(params: &OUParams, f0: f64, n: usize, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    simulate_ou_jump(params, None, f0, n, dt, rng)
}

/// OU path with at most one normal jump per step, arriving with probability
/// `1 - exp(-lambda_j dt)`. Every step consumes one normal for the
/// diffusion; the jump draws happen only when `jump` is set.
pub fn simulate_ou_jump<R: Rng + ?Sized>(
    params: &OUParams,
    jump: Option<&JumpParams>,
    f0: f64,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    params.validate()?;
    if let Some(j) = jump {
        j.validate()?;
    }
    let mut out = Vec::with_capacity(n);
    let mut f = f0;
    for _ in 0..n {
        let (m, v) = ou_moments(f, dt, params)?;
        let z: f64 = StandardNormal.sample(rng);
        f = m + v.sqrt() * z;
        if let Some(j) = jump {
            let u: f64 = rng.random();
            let zj: f64 = StandardNormal.sample(rng);
            if u < j.jump_probability(dt) {
                f += j.mu_j + j.sigma_j * zj;
            }
        }
        out.push(f);
    }
    Ok(out)
}

/// Ground truth for a synthetic market. Serialised next to the generated
/// files so recovery tests know what to expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub asset: String,
    pub seed: u64,
    /// Unix seconds of the first minute; rounded down to a whole hour.
    #[serde(default)]
    pub start_ts: i64,
    pub days: f64,
    pub mid0: f64,
    /// Log-price volatility per square-root hour.
    pub price_vol: f64,
    /// Fractional funding dynamics per hour.
    pub funding: OUParams,
    #[serde(default)]
    pub funding_jump: Option<JumpParams>,
    /// Initial funding; defaults to the long-run level.
    #[serde(default)]
    pub funding_start: Option<f64>,
    /// True fill curve: at-touch intensity per hour and decay per quote unit.
    pub fill_lambda0: f64,
    pub fill_k: f64,
    /// Crossing volume range as multiples of `quote_size`, uniform.
    #[serde(default = "default_volume_range")]
    pub volume_range: (f64, f64),
    #[serde(default = "default_quote_size")]
    pub quote_size: f64,
}

fn default_volume_range() -> (f64, f64) {
    (0.2, 5.0)
}

fn default_quote_size() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.days > 0.0) || !(self.mid0 > 0.0) || !(self.price_vol >= 0.0) {
            return Err(Error::Config("days and mid0 must be positive, price_vol non-negative".into()));
        }
        self.funding.validate()?;
        if let Some(j) = &self.funding_jump {
            j.validate()?;
        }
        if !(self.fill_lambda0 >= 0.0) || !(self.fill_k > 0.0) {
            return Err(Error::Config("fill_lambda0 must be non-negative and fill_k positive".into()));
        }
        let (lo, hi) = self.volume_range;
        if !(lo > 0.0 && hi >= lo) || !(self.quote_size > 0.0) {
            return Err(Error::Config("volume_range must satisfy 0 < lo <= hi and quote_size > 0".into()));
        }
        Ok(())
    }

    pub fn minutes(&self) -> usize {
        (self.days * 1440.0).round() as usize
    }

    fn start(&self) -> i64 {
        self.start_ts.div_euclid(3600) * 3600
    }
}

/// Minute timestamps and mids.
pub fn generate_mids(spec: &SyntheticSpec) -> Result<(Vec<i64>, Vec<f64>)> {
    spec.validate()?;
    let n = spec.minutes();
    let mut rng = stream(spec.seed, STREAM_PRICE);
    let sd = spec.price_vol / 60f64.sqrt();
    let start = spec.start();
    let mut ts = Vec::with_capacity(n);
    let mut mid = Vec::with_capacity(n);
    let mut log_ret = 0.0f64;
    for i in 0..n {
        if i > 0 && sd > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            log_ret += sd * z;
        }
        ts.push(start + 60 * i as i64);
        mid.push(spec.mid0 * log_ret.exp());
    }
    Ok((ts, mid))
}

/// Hourly funding observations on whole hours inside the minute panel.
pub fn generate_funding(spec: &SyntheticSpec) -> Result<(Vec<i64>, Vec<f64>)> {
    spec.validate()?;
    let hours = (spec.minutes().saturating_sub(1)) / 60 + 1;
    let mut rng = stream(spec.seed, STREAM_FUNDING);
    let f0 = spec.funding_start.unwrap_or(spec.funding.theta);
    let mut values = vec![f0];
    if hours > 1 {
        values.extend(simulate_ou_jump(&spec.funding, spec.funding_jump.as_ref(), f0, hours - 1, 1.0, &mut rng)?);
    }
    let start = spec.start();
    let ts = (0..hours).map(|h| start + 3600 * h as i64).collect();
    Ok((ts, values))
}

pub fn generate_panel(spec: &SyntheticSpec) -> Result<MarketPanel> {
    let (ts, mid) = generate_mids(spec)?;
    let (fts, fv) = generate_funding(spec)?;
    MarketPanel::new(ts, mid, fts, fv, PanelOptions::default())
}

/// Long-format crossing tape `(minute_ts, distance, volume)`.
///
/// Crossings per minute are Poisson with mean `lambda0 / 60` and depths are
/// exponential with rate `k`, so crossings beyond `delta` are Poisson with
/// mean `lambda(delta) / 60` and the minute-hit probability is exactly
/// `1 - exp(-lambda(delta) / 60)`. Minutes without crossings get one
/// zero-volume marker row so they still count as observed.
pub fn generate_tape(spec: &SyntheticSpec) -> Result<Vec<(i64, f64, f64)>> {
    spec.validate()?;
    let n = spec.minutes();
    let mut rng = stream(spec.seed, STREAM_TAPE);
    let start = spec.start();
    let depth = Exp::new(spec.fill_k).map_err(|e| Error::Config(e.to_string()))?;
    let rate = spec.fill_lambda0 / 60.0;
    let count = if rate > 0.0 { Some(Poisson::new(rate).map_err(|e| Error::Config(e.to_string()))?) } else { None };
    let (lo, hi) = spec.volume_range;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let ts = start + 60 * i as i64;
        let c = count.as_ref().map_or(0, |p| p.sample(&mut rng) as u64);
        if c == 0 {
            rows.push((ts, 0.0, 0.0));
        }
        for _ in 0..c {
            let d = depth.sample(&mut rng);
            let v = spec.quote_size * (lo + (hi - lo) * rng.random::<f64>());
            rows.push((ts, d, v));
        }
    }
    Ok(rows)
}
