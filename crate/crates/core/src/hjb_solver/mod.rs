//! Reduced inventory–funding HJB on a `(time, inventory, funding)` tensor grid.
//!
//! The reduced value `theta(t, q, f)` satisfies
//!
//! ```text
//! 0 = d_t theta + kappa (fbar - f) d_f theta + sigma_f^2/2 d_ff theta - q f - phi q^2
//!     + 1{q > q_min} H(A) + 1{q < q_max} H(B),      theta(T, q, f) = -alpha q^2
//! ```
//!
//! with `A = theta(q - dq) - theta(q)`, `B = theta(q + dq) - theta(q)` and
//! `H(x) = sup_{delta >= delta_min} Lambda e^{-k delta} (delta + x)`.
//! The funding generator is an upwind birth–death chain, and the explicit
//! backward sweep is monotone under the CFL bound from [`cfl_max_dt`].

mod table;

pub use table::{HJBTable, QuoteLookup};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fill_calib::FillCurve;
use crate::funding_calib::OUParams;

/// Relative slack on the CFL comparison, so a step exactly at the bound is
/// not rejected because of rounding.
const CFL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Horizon in hours.
    pub horizon_t: f64,
    pub n_time: usize,
    pub q_min: f64,
    pub q_max: f64,
    /// Inventory step (one fill).
    pub dq: f64,
    /// Funding bounds in cash units (quote currency per contract per hour).
    pub f_min: f64,
    pub f_max: f64,
    /// Funding nodes. One node means a collapsed funding axis at `f_min == f_max`.
    pub n_f: usize,
}

fn near_integer(x: f64) -> Option<i64> {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if self.n_time < 1 {
            return Err(Error::invalid("need at least one time step"));
        }
        if !(self.dq > 0.0 && self.dq.is_finite()) {
            return Err(Error::invalid("inventory step must be positive"));
        }
        if !(self.q_min <= 0.0 && self.q_max >= 0.0) {
            return Err(Error::invalid("inventory grid must contain 0"));
        }
        let span =
            near_integer((self.q_max - self.q_min) / self.dq).ok_or_else(|| Error::invalid("(q_max - q_min) / dq must be an integer"))?;
        if span < 2 {
            return Err(Error::invalid("inventory grid needs at least three nodes"));
        }
        near_integer(-self.q_min / self.dq).ok_or_else(|| Error::invalid("q = 0 must be a grid node"))?;
        if !self.f_min.is_finite() || !self.f_max.is_finite() {
            return Err(Error::invalid("funding bounds must be finite"));
        }
        if self.n_f == 1 {
            if self.f_min != self.f_max {
                return Err(Error::invalid("a single funding node requires f_min == f_max"));
            }
        } else {
            if self.n_f < 3 {
                return Err(Error::invalid("funding grid needs at least three nodes"));
            }
            if !(self.f_min < self.f_max) {
                return Err(Error::invalid("f_min must be below f_max"));
            }
        }
        Ok(())
    }

    pub fn n_q(&self) -> usize {
        ((self.q_max - self.q_min) / self.dq).round() as usize + 1
    }

    fn zero_index(&self) -> i64 {
        (-self.q_min / self.dq).round() as i64
    }

    /// Inventory at node `j`; symmetric grids give exactly mirrored values.
    pub fn q(&self, j: usize) -> f64 {
        (j as i64 - self.zero_index()) as f64 * self.dq
    }

    pub fn df(&self) -> f64 {
        if self.n_f == 1 {
            0.0
        } else {
            (self.f_max - self.f_min) / (self.n_f - 1) as f64
        }
    }

    /// Funding at node `l`, laid out symmetrically about the grid centre.
    pub fn f(&self, l: usize) -> f64 {
        if self.n_f == 1 {
            return self.f_min;
        }
        let centre = 0.5 * (self.f_min + self.f_max);
        let mid = 0.5 * (self.n_f - 1) as f64;
        centre + (l as f64 - mid) * self.df()
    }

    pub fn dt(&self) -> f64 {
        self.horizon_t / self.n_time as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    /// Inventory node for `q`, if `q` lies on the grid.
    pub fn q_index(&self, q: f64) -> Result<usize> {
        let j = near_integer((q - self.q_min) / self.dq)
            .filter(|&j| j >= 0 && (j as usize) < self.n_q())
            .ok_or_else(|| Error::invalid(format!("inventory {q} is not on the grid")))?;
        Ok(j as usize)
    }

    /// `fbar +/- n_sd` stationary standard deviations of the OU law.
    pub fn funding_bounds(ou_cash: &OUParams, n_sd: f64) -> (f64, f64) {
        let sd = if ou_cash.kappa > 0.0 { ou_cash.sigma / (2.0 * ou_cash.kappa).sqrt() } else { 0.0 };
        (ou_cash.theta - n_sd * sd, ou_cash.theta + n_sd * sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HJBParams {
    /// OU law of the cash-scaled funding state. `kappa = 0` is allowed here.
    pub ou_cash: OUParams,
    pub fill: FillCurve,
    /// Terminal inventory penalty.
    pub alpha: f64,
    /// Running inventory penalty per hour.
    pub phi: f64,
}

impl HJBParams {
    pub fn validate(&self) -> Result<()> {
        let ou = &self.ou_cash;
        if !(ou.kappa >= 0.0 && ou.kappa.is_finite()) || !ou.theta.is_finite() {
            return Err(Error::invalid("funding drift parameters must be finite with kappa >= 0"));
        }
        if !(ou.sigma >= 0.0 && ou.sigma.is_finite()) {
            return Err(Error::invalid("funding volatility must be >= 0"));
        }
        self.fill.validate()?;
        if !(self.fill.k > 0.0) {
            return Err(Error::invalid("fill decay k must be positive for quote recovery"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("terminal penalty alpha must be >= 0"));
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return Err(Error::invalid("running penalty phi must be >= 0"));
        }
        Ok(())
    }
}

/// Birth–death transition rates of the discretised funding generator.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathRates {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl BirthDeathRates {
    pub fn max_total(&self) -> f64 {
        self.up.iter().zip(&self.down).map(|(u, d)| u + d).fold(0.0, f64::max)
    }
}

/// Upwind rates `sigma^2/(2 df^2) + b^{+/-}/df`, with `b(f) = kappa (fbar - f)`.
/// Transitions leaving `[f_min, f_max]` are suppressed.
pub fn build_rates(grid: &GridSpec, ou_cash: &OUParams) -> BirthDeathRates {
    let n = grid.n_f;
    if n == 1 {
        return BirthDeathRates { up: vec![0.0], down: vec![0.0] };
    }
    let df = grid.df();
    let diffusion = ou_cash.sigma * ou_cash.sigma / (2.0 * df * df);
    let mut up = Vec::with_capacity(n);
    let mut down = Vec::with_capacity(n);
    for l in 0..n {
        let drift = ou_cash.kappa * (ou_cash.theta - grid.f(l));
        up.push(diffusion + drift.max(0.0) / df);
        down.push(diffusion + (-drift).max(0.0) / df);
    }
    up[n - 1] = 0.0;
    down[0] = 0.0;
    BirthDeathRates { up, down }
}

/// Largest monotone time step, `1 / (max(r_up + r_down) + 2 Lambda e^{-k delta_min})`.
pub fn cfl_max_dt(rates: &BirthDeathRates, fill: &FillCurve) -> f64 {
    let denom = rates.max_total() + 2.0 * fill.max_intensity();
    if denom > 0.0 {
        1.0 / denom
    } else {
        f64::INFINITY
    }
}

/// Optimal quote distance for a per-unit continuation gain `value_diff`:
/// `max(delta_min, 1/k - value_diff)`.
#[inline]
pub fn optimal_offset(value_diff: f64, fill: &FillCurve) -> f64 {
    (1.0 / fill.k - value_diff).max(fill.delta_min)
}

/// `sup_{delta >= delta_min} Lambda e^{-k delta} (delta + value_diff)`.
#[inline]
pub fn hamiltonian(value_diff: f64, fill: &FillCurve) -> f64 {
    let delta = optimal_offset(value_diff, fill);
    fill.intensity(delta) * (delta + value_diff)
}

/// One explicit backward step from `next` (slice `i + 1`) into `out` (slice `i`).
///
/// Slices are laid out inventory-major: index `j * n_f + l`.
pub fn backward_step(grid: &GridSpec, params: &HJBParams, rates: &BirthDeathRates, dt: f64, next: &[f64], out: &mut [f64]) {
    let n_q = grid.n_q();
    let n_f = grid.n_f;
    debug_assert_eq!(next.len(), n_q * n_f);
    debug_assert_eq!(out.len(), n_q * n_f);
    let dq = grid.dq;
    let fill = &params.fill;
    for j in 0..n_q {
        let q = grid.q(j);
        let row = j * n_f;
        for l in 0..n_f {
            let theta = next[row + l];
            let mut generator = 0.0;
            if l + 1 < n_f {
                generator += rates.up[l] * (next[row + l + 1] - theta);
            }
            if l > 0 {
                generator += rates.down[l] * (next[row + l - 1] - theta);
            }
            let source = -q * grid.f(l) - params.phi * q * q;
            let ask = if j > 0 { dq * hamiltonian((next[row - n_f + l] - theta) / dq, fill) } else { 0.0 };
            let bid = if j + 1 < n_q { dq * hamiltonian((next[row + n_f + l] - theta) / dq, fill) } else { 0.0 };
            out[row + l] = theta + dt * (generator + source + ask + bid);
        }
    }
}

/// Terminal slice `-alpha q^2`.
pub fn terminal_slice(grid: &GridSpec, alpha: f64) -> Vec<f64> {
    let n_f = grid.n_f;
    (0..grid.n_q())
        .flat_map(|j| {
            let q = grid.q(j);
            std::iter::repeat_n(-alpha * q * q, n_f)
        })
        .collect()
}

/// Check the grid's time step against the CFL bound.
pub fn check_cfl(grid: &GridSpec, params: &HJBParams) -> Result<f64> {
    let rates = build_rates(grid, &params.ou_cash);
    let max_dt = cfl_max_dt(&rates, &params.fill);
    let dt = grid.dt();
    if dt > max_dt * (1.0 + CFL_SLACK) {
        return Err(Error::CflViolation { dt, max_dt });
    }
    Ok(max_dt)
}

/// Solve the reduced HJB backward from the terminal condition.
pub fn solve(grid: &GridSpec, params: &HJBParams) -> Result<HJBTable> {
    grid.validate()?;
    params.validate()?;
    check_cfl(grid, params)?;
    let rates = build_rates(grid, &params.ou_cash);
    let dt = grid.dt();
    let slice_len = grid.n_q() * grid.n_f;
    let n_slices = grid.n_time + 1;
    let mut values = vec![0.0; slice_len * n_slices];
    values[grid.n_time * slice_len..].copy_from_slice(&terminal_slice(grid, params.alpha));
    for i in (0..grid.n_time).rev() {
        let (head, tail) = values.split_at_mut((i + 1) * slice_len);
        let next = &tail[..slice_len];
        let out = &mut head[i * slice_len..];
        backward_step(grid, params, &rates, dt, next, out);
        if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { i, j: pos / grid.n_f, l: pos % grid.n_f });
        }
    }
    Ok(HJBTable::from_parts(*grid, *params, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill(lambda0: f64, k: f64, delta_min: f64) -> FillCurve {
        FillCurve::new(lambda0, k, delta_min).unwrap()
    }

    fn ou(kappa: f64, theta: f64, sigma: f64) -> OUParams {
        OUParams { kappa, theta, sigma }
    }

    fn grid(n_time: usize, q: f64, f: f64, n_f: usize) -> GridSpec {
        GridSpec { horizon_t: 1.0, n_time, q_min: -q, q_max: q, dq: 1.0, f_min: -f, f_max: f, n_f }
    }

    #[test]
    fn grid_validation() {
        assert!(grid(4, 2.0, 1.0, 5).validate().is_ok());
        let mut g = grid(4, 2.0, 1.0, 5);
        g.q_min = 0.5;
        assert!(g.validate().is_err());
        let mut g = grid(4, 2.0, 1.0, 5);
        g.dq = 0.75;
        assert!(g.validate().is_err());
        let mut g = grid(4, 2.0, 1.0, 2);
        assert!(g.validate().is_err());
        g.n_f = 1;
        assert!(g.validate().is_err(), "collapsed grid needs f_min == f_max");
        g.f_min = 0.0;
        g.f_max = 0.0;
        assert!(g.validate().is_ok());
        let mut g = grid(0, 2.0, 1.0, 5);
        assert!(g.validate().is_err());
        g.n_time = 1;
        g.q_min = 0.0;
        g.q_max = 1.0;
        assert!(g.validate().is_err(), "two inventory nodes is too few");
    }

    #[test]
    fn symmetric_grid_nodes_mirror_exactly() {
        let g = GridSpec { horizon_t: 1.0, n_time: 1, q_min: -0.5, q_max: 0.5, dq: 0.1, f_min: -0.3, f_max: 0.3, n_f: 7 };
        let nq = g.n_q();
        for j in 0..nq {
            assert_eq!(g.q(j), -g.q(nq - 1 - j));
        }
        for l in 0..g.n_f {
            assert_eq!(g.f(l), -g.f(g.n_f - 1 - l));
        }
        assert_eq!(g.q_index(0.0).unwrap(), 5);
        assert!(g.q_index(0.05).is_err());
        assert!(g.q_index(0.6).is_err());
    }

    #[test]
    fn rates_at_long_run_level_are_symmetric() {
        let g = grid(1, 2.0, 1.0, 5);
        let r = build_rates(&g, &ou(0.7, 0.0, 0.4));
        let d = 0.4 * 0.4 / (2.0 * 0.5 * 0.5);
        assert_eq!(r.up[2], d);
        assert_eq!(r.down[2], d);
    }

    #[test]
    fn pure_drift_rates() {
        let g = grid(1, 2.0, 1.0, 5);
        let o = ou(0.7, 0.2, 0.0);
        let r = build_rates(&g, &o);
        // f_1 = -0.5 < fbar
        assert_eq!(r.down[1], 0.0);
        assert!((r.up[1] - 0.7 * (0.2 + 0.5) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn boundary_suppression() {
        let g = grid(1, 2.0, 1.0, 5);
        let r = build_rates(&g, &ou(0.7, 0.0, 0.4));
        assert_eq!(r.up[4], 0.0);
        assert_eq!(r.down[0], 0.0);
        assert!(r.up.iter().chain(&r.down).all(|&x| x >= 0.0));
    }

    #[test]
    fn generator_reproduces_drift_on_linear_functions() {
        let g = grid(1, 2.0, 0.8, 9);
        let o = ou(1.3, 0.1, 0.25);
        let r = build_rates(&g, &o);
        let df = g.df();
        for l in 1..g.n_f - 1 {
            let applied = r.up[l] * df - r.down[l] * df;
            let drift = o.kappa * (o.theta - g.f(l));
            assert!((applied - drift).abs() < 1e-12, "node {l}: {applied} vs {drift}");
        }
    }

    #[test]
    fn cfl_examples() {
        let r = BirthDeathRates { up: vec![0.0, 3.0, 3.0], down: vec![3.0, 3.0, 0.0] };
        assert!((cfl_max_dt(&r, &fill(0.0, 1.0, 0.0)) - 1.0 / 6.0).abs() < 1e-15);
        let g = grid(1, 2.0, 1.0, 5);
        let r = build_rates(&g, &ou(0.0, 0.0, 0.0));
        assert!((cfl_max_dt(&r, &fill(3600.0, 1.0, 0.0)) - 1.0 / 7200.0).abs() < 1e-18);
    }

    #[test]
    fn offset_examples() {
        let c = fill(100.0, 2.0, 0.05);
        assert_eq!(optimal_offset(0.0, &c), 0.5);
        assert_eq!(optimal_offset(0.5 - 0.05, &c), 0.05);
        assert_eq!(optimal_offset(10.0, &c), 0.05);
        assert_eq!(optimal_offset(-1.0, &c), 1.5);
    }

    #[test]
    fn hamiltonian_at_zero_gain() {
        let c = fill(100.0, 2.0, 0.0);
        let expected = 100.0 * (-1.0f64).exp() / 2.0;
        assert!((hamiltonian(0.0, &c) - expected).abs() < 1e-12);
    }

    #[test]
    fn solve_refuses_cfl_violation() {
        let g = grid(1, 2.0, 0.0, 1);
        let g = GridSpec { f_min: 0.0, f_max: 0.0, ..g };
        let p = HJBParams { ou_cash: ou(0.0, 0.0, 0.0), fill: fill(100.0, 1.0, 0.0), alpha: 0.0, phi: 0.0 };
        match solve(&g, &p) {
            Err(Error::CflViolation { dt, max_dt }) => {
                assert_eq!(dt, 1.0);
                assert!((max_dt - 1.0 / 200.0).abs() < 1e-15);
            }
            other => panic!("expected CFL refusal, got {other:?}"),
        }
    }

    #[test]
    fn terminal_slice_exact() {
        let g = grid(4, 3.0, 1.0, 3);
        let p = HJBParams { ou_cash: ou(0.5, 0.0, 0.2), fill: fill(1.0, 1.0, 0.0), alpha: 0.37, phi: 0.01 };
        let t = solve(&g, &p).unwrap();
        for j in 0..g.n_q() {
            for l in 0..g.n_f {
                let q = g.q(j);
                assert_eq!(t.theta(g.n_time, j, l), -0.37 * q * q);
            }
        }
    }
}
