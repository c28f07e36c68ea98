//! Gaussian OU and OU-plus-jump calibration of hourly funding-rate series.
//!
//! All likelihoods are computed on the exchange-reported fractional rate
//! `F_t`. The exact OU transition handles irregular gaps, so missing hours
//! are tolerated rather than imputed. Cash scaling (`f = S * F`) only happens
//! when the solver or the simulator consume the fitted parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, Minimum, NelderMeadOptions};
use crate::stats::{central_moments, correlation, log_add_exp, normal_log_pdf};

/// Floor applied to transition variances before taking logs.
pub const VARIANCE_FLOOR: f64 = 1e-18;

/// Minimum number of observations accepted by [`fit_ou`].
pub const MIN_FIT_OBSERVATIONS: usize = 10;

/// Timestamped funding observations. Timestamps are in hours (fractional
/// hours allowed) and strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FundingSeries {
    timestamps: Vec<f64>,
    values: Vec<f64>,
}

impl FundingSeries {
    pub fn new(timestamps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::invalid(format!("timestamps ({}) and values ({}) differ in length", timestamps.len(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite funding value at index {i}")));
        }
        if let Some(i) = timestamps.iter().position(|t| !t.is_finite()) {
            return Err(Error::invalid(format!("non-finite timestamp at index {i}")));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("timestamps must be strictly increasing (index {})", i + 1)));
        }
        Ok(Self { timestamps, values })
    }

    /// Regular series sampled every `step_hours` starting at `start`.
    pub fn regular(start: f64, step_hours: f64, values: Vec<f64>) -> Result<Self> {
        if !(step_hours > 0.0) {
            return Err(Error::invalid("step must be positive"));
        }
        let ts = (0..values.len()).map(|i| start + i as f64 * step_hours).collect();
        Self::new(ts, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same timestamps, values mapped through `f`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.timestamps.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Chronological split: the first `round(n * train_fraction)` points train.
    pub fn split(&self, train_fraction: f64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return Err(Error::invalid("train fraction must lie in (0, 1]"));
        }
        let n_train = ((self.len() as f64) * train_fraction).round() as usize;
        let n_train = n_train.clamp(1, self.len());
        let train = Self { timestamps: self.timestamps[..n_train].to_vec(), values: self.values[..n_train].to_vec() };
        let test = Self { timestamps: self.timestamps[n_train..].to_vec(), values: self.values[n_train..].to_vec() };
        Ok((train, test))
    }

    /// Consecutive `(previous value, gap, next value)` triples.
    fn transitions(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (1..self.len()).map(move |i| (self.values[i - 1], self.timestamps[i] - self.timestamps[i - 1], self.values[i]))
    }

    fn median_gap(&self) -> f64 {
        let mut gaps: Vec<f64> = self.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        if gaps.is_empty() {
            return 1.0;
        }
        gaps.sort_by(f64::total_cmp);
        gaps[gaps.len() / 2]
    }
}

/// Ornstein–Uhlenbeck parameters `dF = kappa (theta - F) dt + sigma dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    /// Mean-reversion speed, 1/hour.
    pub kappa: f64,
    /// Long-run level.
    pub theta: f64,
    /// Diffusion volatility per sqrt(hour).
    pub sigma: f64,
}

impl OUParams {
    pub fn new(kappa: f64, theta: f64, sigma: f64) -> Result<Self> {
        let p = Self { kappa, theta, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !self.theta.is_finite() {
            return Err(Error::invalid("theta must be finite"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn half_life(&self) -> Result<f64> {
        half_life(self.kappa)
    }

    /// Standard deviation of the stationary distribution, `sigma / sqrt(2 kappa)`.
    pub fn stationary_sd(&self) -> f64 {
        self.sigma / (2.0 * self.kappa).sqrt()
    }

    /// The same process expressed in cash units (`f = S * F`) at a fixed price.
    pub fn cash_scaled(&self, price: f64) -> Result<Self> {
        Ok(Self { kappa: self.kappa, theta: cash_scale(self.theta, price)?, sigma: cash_scale(self.sigma, price)? })
    }
}

/// Bernoulli-normal jump component of the one-jump transition mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpParams {
    /// Jump arrival intensity, 1/hour.
    pub lambda_j: f64,
    pub mu_j: f64,
    pub sigma_j: f64,
}

impl JumpParams {
    pub fn new(lambda_j: f64, mu_j: f64, sigma_j: f64) -> Result<Self> {
        let p = Self { lambda_j, mu_j, sigma_j };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_j >= 0.0 && self.lambda_j.is_finite()) {
            return Err(Error::invalid(format!("jump intensity must be >= 0, got {}", self.lambda_j)));
        }
        if !self.mu_j.is_finite() {
            return Err(Error::invalid("jump mean must be finite"));
        }
        if !(self.sigma_j > 0.0 && self.sigma_j.is_finite()) {
            return Err(Error::invalid(format!("jump sd must be positive, got {}", self.sigma_j)));
        }
        Ok(())
    }

    /// Probability of at least one jump over a gap of `dt` hours.
    pub fn jump_probability(&self, dt: f64) -> f64 {
        -(-self.lambda_j * dt).exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualDiagnostics {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub n: usize,
}

#[inline]
fn transition(f_prev: f64, dt: f64, p: &OUParams) -> (f64, f64) {
    let decay = (-p.kappa * dt).exp();
    let mean = p.theta + (f_prev - p.theta) * decay;
    // -expm1 keeps precision for small kappa * dt
    let var = p.sigma * p.sigma * (-(-2.0 * p.kappa * dt).exp_m1()) / (2.0 * p.kappa);
    (mean, var)
}

/// Exact Gaussian transition mean and variance over a gap of `dt` hours.
pub fn ou_moments(f_prev: f64, dt: f64, params: &OUParams) -> Result<(f64, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !f_prev.is_finite() {
        return Err(Error::invalid("previous value must be finite"));
    }
    params.validate()?;
    Ok(transition(f_prev, dt, params))
}

/// Log-likelihood together with the number of transitions whose variance was
/// raised to [`VARIANCE_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub variance_clamps: usize,
}

fn check_series(series: &FundingSeries, min: usize) -> Result<()> {
    if series.len() < min {
        return Err(Error::invalid(format!("need at least {min} observations, got {}", series.len())));
    }
    Ok(())
}

/// Sum of exact OU transition log densities.
///
/// With `sigma == 0` and any transition off its conditional mean the
/// likelihood is degenerate; that is reported as `f64::NEG_INFINITY`.
pub fn ou_loglik(series: &FundingSeries, params: &OUParams) -> Result<f64> {
    Ok(ou_loglik_detailed(series, params)?.value)
}

pub fn ou_loglik_detailed(series: &FundingSeries, params: &OUParams) -> Result<LogLikelihood> {
    check_series(series, 2)?;
    params.validate()?;
    if params.sigma == 0.0 {
        let off_mean = series.transitions().any(|(prev, dt, next)| next != transition(prev, dt, params).0);
        if off_mean {
            return Ok(LogLikelihood { value: f64::NEG_INFINITY, variance_clamps: 0 });
        }
    }
    Ok(ou_loglik_unchecked(series, params))
}

fn ou_loglik_unchecked(series: &FundingSeries, params: &OUParams) -> LogLikelihood {
    let mut value = 0.0;
    let mut variance_clamps = 0;
    for (prev, dt, next) in series.transitions() {
        let (m, v) = transition(prev, dt, params);
        let v = if v < VARIANCE_FLOOR {
            variance_clamps += 1;
            VARIANCE_FLOOR
        } else {
            v
        };
        value += normal_log_pdf(next, m, v);
    }
    LogLikelihood { value, variance_clamps }
}

/// Log-likelihood of the Bernoulli-normal one-jump transition mixture:
/// `(1 - p) N(m, v) + p N(m + mu_j, v + sigma_j^2)` with `p = 1 - exp(-lambda_j dt)`.
pub fn jump_mixture_loglik(series: &FundingSeries, ou: &OUParams, jp: &JumpParams) -> Result<f64> {
    check_series(series, 2)?;
    ou.validate()?;
    jp.validate()?;
    Ok(jump_loglik_unchecked(series, ou, jp))
}

fn jump_loglik_unchecked(series: &FundingSeries, ou: &OUParams, jp: &JumpParams) -> f64 {
    let jump_var = jp.sigma_j * jp.sigma_j;
    let mut total = 0.0;
    for (prev, dt, next) in series.transitions() {
        let (m, v) = transition(prev, dt, ou);
        let v = v.max(VARIANCE_FLOOR);
        // ln(1 - p) = -lambda dt exactly; ln p via expm1 for small rates
        let ln_stay = -jp.lambda_j * dt;
        let ln_jump = (-(-jp.lambda_j * dt).exp_m1()).ln();
        let no_jump = ln_stay + normal_log_pdf(next, m, v);
        let jump = if ln_jump == f64::NEG_INFINITY { f64::NEG_INFINITY } else { ln_jump + normal_log_pdf(next, m + jp.mu_j, v + jump_var) };
        total += log_add_exp(no_jump, jump);
    }
    total
}

pub fn half_life(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    Ok(std::f64::consts::LN_2 / kappa)
}

/// Cash-scaled funding `f = S * F` (quote currency per contract per hour).
pub fn cash_scale(rate: f64, price: f64) -> Result<f64> {
    if !(price > 0.0 && price.is_finite()) {
        return Err(Error::invalid(format!("price must be positive, got {price}")));
    }
    Ok(price * rate)
}

/// Optimiser coordinates are scale-free: `(ln kappa*gap, (theta - centre)/level,
/// ln(sigma/incr))`. Shifting the data moves `centre` and nothing else, which
/// makes the fit shift-equivariant.
#[derive(Debug, Clone, Copy)]
struct Scaling {
    centre: f64,
    level: f64,
    incr: f64,
    gap: f64,
}

impl Scaling {
    fn of(series: &FundingSeries) -> Self {
        let vals = series.values();
        let n = vals.len() as f64;
        let centre = vals.iter().sum::<f64>() / n;
        let level = (vals.iter().map(|v| (v - centre).powi(2)).sum::<f64>() / n).sqrt();
        let diffs: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
        let incr = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len().max(1) as f64).sqrt();
        let level = if level > 0.0 { level } else { incr.max(f64::MIN_POSITIVE) };
        let incr = if incr > 0.0 { incr } else { level };
        Self { centre, level, incr, gap: series.median_gap() }
    }

    fn encode(&self, p: &OUParams) -> [f64; 3] {
        [(p.kappa * self.gap).ln(), (p.theta - self.centre) / self.level, (p.sigma / self.incr).ln()]
    }

    fn decode(&self, x: &[f64]) -> Option<OUParams> {
        // box constraints: the likelihood is flat in kappa beyond ~1e3 per gap
        let in_box = (-14.0..=7.0).contains(&x[0]) && (-1e3..=1e3).contains(&x[1]) && (-14.0..=14.0).contains(&x[2]);
        if !in_box {
            return None;
        }
        Some(OUParams { kappa: x[0].exp() / self.gap, theta: self.centre + self.level * x[1], sigma: self.incr * x[2].exp() })
    }
}

/// Result of a Gaussian OU maximum-likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuFit {
    pub params: OUParams,
    pub loglik: f64,
    pub half_life_hours: f64,
    pub iterations: usize,
    pub variance_clamps: usize,
}

/// Regular-grid AR(1) least squares mapped to OU parameters; used only to
/// seed the likelihood search.
fn ar1_start(series: &FundingSeries, sc: &Scaling) -> OUParams {
    let v = series.values();
    let (xs, ys) = (&v[..v.len() - 1], &v[1..]);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.5 };
    let b = b.clamp(1e-4, 1.0 - 1e-4);
    let a = my - b * mx;
    let kappa = -b.ln() / sc.gap;
    let theta = if (1.0 - b) > 1e-3 { a / (1.0 - b) } else { sc.centre };
    let theta = theta.clamp(sc.centre - 50.0 * sc.level, sc.centre + 50.0 * sc.level);
    let resid_var = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum::<f64>() / n;
    let resid_var = if resid_var > 0.0 { resid_var } else { sc.incr * sc.incr };
    let sigma = (resid_var * 2.0 * kappa / (-(-2.0 * kappa * sc.gap).exp_m1())).sqrt();
    OUParams { kappa, theta, sigma }
}

/// Maximum-likelihood fit of the Gaussian OU transition.
///
/// Nelder–Mead over scale-free coordinates, restarted from three
/// deterministic starting points and polished from the best one.
pub fn fit_ou(series: &FundingSeries) -> Result<OuFit> {
    check_series(series, MIN_FIT_OBSERVATIONS)?;
    let first = series.values()[0];
    if series.values().iter().all(|&v| v == first) {
        return Err(Error::DegenerateSeries("funding series is constant".into()));
    }
    let sc = Scaling::of(series);
    let objective = |x: &[f64]| match sc.decode(x) {
        Some(p) => -ou_loglik_unchecked(series, &p).value,
        None => f64::INFINITY,
    };

    let start = ar1_start(series, &sc);
    let x0 = sc.encode(&start);
    let opts = NelderMeadOptions::default();
    let mut best: Option<Minimum> = None;
    let mut iterations = 0;
    for shift in [0.0, -4f64.ln(), 4f64.ln()] {
        let mut x = x0;
        x[0] = (x[0] + shift).clamp(-13.5, 6.5);
        let m = nelder_mead(objective, &x, &[0.5, 0.5, 0.3], opts);
        iterations += m.iterations;
        if best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let best = best.expect("three restarts ran");
    let polished = nelder_mead(objective, &best.x, &[0.05, 0.05, 0.05], opts);
    iterations += polished.iterations;
    let chosen = if polished.f <= best.f { &polished } else { &best };
    let params = sc.decode(&chosen.x).ok_or_else(|| Error::DegenerateSeries("likelihood search left the feasible box".into()))?;
    let ll = ou_loglik_unchecked(series, &params);
    if !polished.converged {
        return Err(Error::NonConvergence { ou: params, jump: None, loglik: ll.value, iterations });
    }
    Ok(OuFit { params, loglik: ll.value, half_life_hours: half_life(params.kappa)?, iterations, variance_clamps: ll.variance_clamps })
}

/// Knobs for [`fit_ou_jump_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct JumpFitOptions {
    /// Hold the jump-size standard deviation fixed instead of fitting it.
    pub fixed_sigma_j: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpFit {
    pub ou: OUParams,
    pub jump: JumpParams,
    pub loglik_jump: f64,
    pub loglik_ou: f64,
    /// `loglik_jump - loglik_ou`; never negative because the `lambda_j = 0`
    /// boundary is part of the search.
    pub ll_gain: f64,
    pub iterations: usize,
}

pub fn fit_ou_jump(series: &FundingSeries, init: &OUParams) -> Result<JumpFit> {
    fit_ou_jump_with(series, init, JumpFitOptions::default())
}

/// Joint refinement of OU and jump parameters, started from a Gaussian OU fit.
///
/// `init` should be the [`fit_ou`] optimum on the same series: its likelihood
/// is the reference for `ll_gain`.
pub fn fit_ou_jump_with(series: &FundingSeries, init: &OUParams, opts: JumpFitOptions) -> Result<JumpFit> {
    check_series(series, MIN_FIT_OBSERVATIONS)?;
    init.validate()?;
    if let Some(s) = opts.fixed_sigma_j {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid("fixed jump sd must be positive"));
        }
    }
    let sc = Scaling::of(series);
    let loglik_ou = ou_loglik_unchecked(series, init).value;
    let free_sigma_j = opts.fixed_sigma_j.is_none();

    let decode = |x: &[f64]| -> Option<(OUParams, JumpParams)> {
        let ou = sc.decode(&x[..3])?;
        let ln_rate = x[3];
        if !(-16.0..=1.0).contains(&ln_rate) || !(-1e3..=1e3).contains(&x[4]) {
            return None;
        }
        let sigma_j = match opts.fixed_sigma_j {
            Some(s) => s,
            None => {
                if !(-7.0..=10.0).contains(&x[5]) {
                    return None;
                }
                sc.incr * x[5].exp()
            }
        };
        let jump = JumpParams { lambda_j: ln_rate.exp() / sc.gap, mu_j: sc.incr * x[4], sigma_j };
        Some((ou, jump))
    };
    let objective = |x: &[f64]| match decode(x) {
        Some((ou, jp)) => -jump_loglik_unchecked(series, &ou, &jp),
        None => f64::INFINITY,
    };

    let ou_x = sc.encode(init);
    let nm = NelderMeadOptions::default();
    let mut best: Option<Minimum> = None;
    let mut iterations = 0;
    for (rate, size) in [(0.01f64, 5.0f64), (0.05, 3.0), (0.002, 10.0)] {
        let mut x = vec![ou_x[0], ou_x[1], ou_x[2], (rate * sc.gap).ln(), 0.0];
        let mut steps = vec![0.3, 0.3, 0.3, 1.0, 0.5];
        if free_sigma_j {
            x.push(size.ln());
            steps.push(0.5);
        }
        let m = nelder_mead(objective, &x, &steps, nm);
        iterations += m.iterations;
        if best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let best = best.expect("three restarts ran");
    let polish_steps = vec![0.05; best.x.len()];
    let polished = nelder_mead(objective, &best.x, &polish_steps, nm);
    iterations += polished.iterations;
    let chosen = if polished.f <= best.f { &polished } else { &best };

    // lambda_j = 0 boundary: the mixture collapses to the Gaussian OU optimum
    let boundary = JumpFit {
        ou: *init,
        jump: JumpParams { lambda_j: 0.0, mu_j: 0.0, sigma_j: opts.fixed_sigma_j.unwrap_or(sc.incr) },
        loglik_jump: loglik_ou,
        loglik_ou,
        ll_gain: 0.0,
        iterations,
    };
    let interior = decode(&chosen.x).map(|(ou, jump)| {
        let ll = jump_loglik_unchecked(series, &ou, &jump);
        JumpFit { ou, jump, loglik_jump: ll, loglik_ou, ll_gain: ll - loglik_ou, iterations }
    });
    let fit = match interior {
        Some(f) if f.loglik_jump > loglik_ou => f,
        _ => boundary,
    };
    if !polished.converged && fit.ll_gain > 0.0 {
        return Err(Error::NonConvergence { ou: fit.ou, jump: Some(fit.jump), loglik: fit.loglik_jump, iterations });
    }
    Ok(fit)
}

/// Standardised residuals `(F_{i+1} - m_i) / sqrt(v_i)`.
pub fn standardized_residuals(series: &FundingSeries, params: &OUParams) -> Result<Vec<f64>> {
    check_series(series, 2)?;
    params.validate()?;
    if params.sigma <= 0.0 {
        return Err(Error::invalid("residuals need sigma > 0"));
    }
    Ok(series
        .transitions()
        .map(|(prev, dt, next)| {
            let (m, v) = transition(prev, dt, params);
            (next - m) / v.max(VARIANCE_FLOOR).sqrt()
        })
        .collect())
}

/// Skewness and excess kurtosis of the standardised residuals.
pub fn residual_diagnostics(series: &FundingSeries, params: &OUParams) -> Result<ResidualDiagnostics> {
    check_series(series, 4)?;
    let z = standardized_residuals(series, params)?;
    let (m2, m3, m4) = central_moments(&z);
    if !(m2 > 0.0) || !m2.is_finite() {
        return Err(Error::DegenerateSeries("standardized residuals have zero variance".into()));
    }
    Ok(ResidualDiagnostics { skewness: m3 / m2.powf(1.5), excess_kurtosis: m4 / (m2 * m2) - 3.0, n: z.len() })
}

/// Sample correlation between funding innovations `F_{i+1} - m_i` and log
/// price returns over the same intervals. `prices` are sampled at the series
/// timestamps. Diagnostic only.
pub fn funding_price_correlation(series: &FundingSeries, params: &OUParams, prices: &[f64]) -> Result<Option<f64>> {
    check_series(series, 3)?;
    params.validate()?;
    if prices.len() != series.len() {
        return Err(Error::invalid("prices must align with the funding series"));
    }
    if prices.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::invalid("prices must be positive"));
    }
    let innovations: Vec<f64> = series.transitions().map(|(prev, dt, next)| next - transition(prev, dt, params).0).collect();
    let returns: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    Ok(correlation(&innovations, &returns))
}

/// JSON calibration report for one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub asset: String,
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub half_life_hours: f64,
    pub jump_lambda: f64,
    pub jump_mu: f64,
    pub jump_sigma: f64,
    pub ll_ou: f64,
    pub ll_jump: f64,
    pub ll_gain: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Out-of-sample OU log-likelihood (absent when the test split is too short).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ll_ou_test: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ll_jump_test: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub funding_price_rho: Option<f64>,
    #[serde(default)]
    pub variance_clamps: usize,
}

impl CalibrationReport {
    pub fn ou_params(&self) -> OUParams {
        OUParams { kappa: self.kappa, theta: self.theta, sigma: self.sigma }
    }

    pub fn jump_params(&self) -> JumpParams {
        JumpParams { lambda_j: self.jump_lambda, mu_j: self.jump_mu, sigma_j: self.jump_sigma }
    }
}

/// Full funding pipeline: chronological split, OU fit, jump fit, residual
/// diagnostics and (optionally) the funding-price innovation correlation.
pub fn calibrate_funding(asset: &str, series: &FundingSeries, train_fraction: f64, prices: Option<&[f64]>) -> Result<CalibrationReport> {
    let (train, test) = series.split(train_fraction)?;
    let ou = fit_ou(&train)?;
    let jf = fit_ou_jump(&train, &ou.params)?;
    let diag = residual_diagnostics(&train, &ou.params)?;
    let (ll_ou_test, ll_jump_test) = if test.len() >= 2 {
        (Some(ou_loglik_unchecked(&test, &ou.params).value), Some(jump_loglik_unchecked(&test, &jf.ou, &jf.jump)))
    } else {
        (None, None)
    };
    let funding_price_rho = match prices {
        Some(p) => funding_price_correlation(series, &ou.params, p)?,
        None => None,
    };
    Ok(CalibrationReport {
        asset: asset.to_string(),
        kappa: ou.params.kappa,
        theta: ou.params.theta,
        sigma: ou.params.sigma,
        half_life_hours: ou.half_life_hours,
        jump_lambda: jf.jump.lambda_j,
        jump_mu: jf.jump.mu_j,
        jump_sigma: jf.jump.sigma_j,
        ll_ou: jf.loglik_ou,
        ll_jump: jf.loglik_jump,
        ll_gain: jf.ll_gain,
        skewness: diag.skewness,
        excess_kurtosis: diag.excess_kurtosis,
        n_train: train.len(),
        n_test: test.len(),
        ll_ou_test,
        ll_jump_test,
        funding_price_rho,
        variance_clamps: ou.variance_clamps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(k: f64, t: f64, s: f64) -> OUParams {
        OUParams::new(k, t, s).unwrap()
    }

    #[test]
    fn moments_start_at_level() {
        let params = p(0.3, 0.0002, 0.001);
        let (m, v) = ou_moments(0.0002, 3.7, &params).unwrap();
        assert_eq!(m, 0.0002);
        assert!(v > 0.0);
    }

    #[test]
    fn moments_small_dt_limit() {
        let params = p(0.1247, 0.0, 0.002);
        let (m, v) = ou_moments(0.01, 1e-9, &params).unwrap();
        assert!(((m - 0.01) / 0.01).abs() < 1e-8);
        // v ~ sigma^2 dt
        assert!(v < 1e-8 * 0.002 * 0.002 * 10.0);
        let expected = 0.002f64.powi(2) * 1e-9;
        assert!(((v - expected) / expected).abs() < 1e-8);
    }

    #[test]
    fn moments_reject_bad_dt() {
        let params = p(0.3, 0.0, 0.001);
        assert!(matches!(ou_moments(0.0, 0.0, &params), Err(Error::InvalidArgument(_))));
        assert!(ou_moments(0.0, -1.0, &params).is_err());
    }

    #[test]
    fn mean_is_convex_combination() {
        let params = p(0.7, -0.001, 0.0005);
        for &(f, dt) in &[(0.01, 0.5), (-0.02, 3.0), (0.0, 10.0)] {
            let (m, _) = ou_moments(f, dt, &params).unwrap();
            let w = (-params.kappa * dt).exp();
            assert!(w > 0.0 && w < 1.0);
            assert!((m - (w * f + (1.0 - w) * params.theta)).abs() < 1e-15);
        }
    }

    #[test]
    fn two_point_loglik_at_mean() {
        let params = p(0.4, 0.0001, 0.0007);
        let (m, v) = transition(0.0005, 1.0, &params);
        let s = FundingSeries::new(vec![0.0, 1.0], vec![0.0005, m]).unwrap();
        let ll = ou_loglik(&s, &params).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI * v).ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sigma_sentinel() {
        let params = OUParams { kappa: 0.5, theta: 0.0, sigma: 0.0 };
        let s = FundingSeries::regular(0.0, 1.0, vec![0.001, 0.0004, 0.0009]).unwrap();
        assert_eq!(ou_loglik(&s, &params).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn half_life_values() {
        assert!((half_life(std::f64::consts::LN_2).unwrap() - 1.0).abs() < 1e-15);
        assert!((half_life(0.1247).unwrap() - 5.560).abs() < 0.005);
        assert!((half_life(0.3001).unwrap() - 2.310).abs() < 0.005);
        assert!(half_life(0.0).is_err());
        assert!(half_life(-1.0).is_err());
    }

    #[test]
    fn cash_scale_basic() {
        assert_eq!(cash_scale(0.0, 3000.0).unwrap(), 0.0);
        assert!((cash_scale(0.0001, 3000.0).unwrap() - 0.30).abs() < 1e-12);
        assert!(cash_scale(-0.0001, 3000.0).unwrap() < 0.0);
        assert!(cash_scale(0.0001, 0.0).is_err());
        assert!(cash_scale(0.0001, -5.0).is_err());
    }

    #[test]
    fn series_validation() {
        assert!(FundingSeries::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(FundingSeries::new(vec![1.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(FundingSeries::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(FundingSeries::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn fit_rejects_constant_and_short() {
        let s = FundingSeries::regular(0.0, 1.0, vec![0.0001; 20]).unwrap();
        assert!(matches!(fit_ou(&s), Err(Error::DegenerateSeries(_))));
        let s = FundingSeries::regular(0.0, 1.0, vec![0.0001, 0.0002, 0.0]).unwrap();
        assert!(matches!(fit_ou(&s), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn residuals_all_equal_is_an_error() {
        let s = FundingSeries::regular(0.0, 1.0, vec![0.0003; 8]).unwrap();
        let params = p(0.5, 0.0003, 0.0001);
        assert!(matches!(residual_diagnostics(&s, &params), Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn jump_probability_range() {
        let j = JumpParams::new(0.02, 0.0, 1.0).unwrap();
        let pr = j.jump_probability(1.0);
        assert!(pr > 0.0 && pr < 1.0);
        assert!((pr - (1.0 - (-0.02f64).exp())).abs() < 1e-16);
        assert!(JumpParams::new(-0.1, 0.0, 1.0).is_err());
        assert!(JumpParams::new(0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn split_is_chronological() {
        let s = FundingSeries::regular(0.0, 1.0, (0..10).map(|i| i as f64).collect()).unwrap();
        let (a, b) = s.split(0.8).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(b.len(), 2);
        assert_eq!(b.values()[0], 8.0);
    }
}
