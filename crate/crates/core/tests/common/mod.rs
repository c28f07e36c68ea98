#![allow(dead_code)]

use perpmm::fill_calib::FillCurve;
use perpmm::funding_calib::OUParams;
use perpmm::hjb_solver::{GridSpec, HJBParams, HJBTable};
use perpmm::simulator::{MarketPanel, PanelOptions};

pub fn ou(kappa: f64, theta: f64, sigma: f64) -> OUParams {
    OUParams { kappa, theta, sigma }
}

pub fn fill(lambda0: f64, k: f64, delta_min: f64) -> FillCurve {
    FillCurve { lambda0, k, delta_min }
}

/// 8 steps x 5 inventory nodes x 3 funding nodes, CFL-admissible for [`small_params`].
pub fn small_grid() -> GridSpec {
    GridSpec { horizon_t: 1.0, n_time: 8, q_min: -2.0, q_max: 2.0, dq: 1.0, f_min: -1.0, f_max: 1.0, n_f: 3 }
}

pub fn small_params() -> HJBParams {
    HJBParams { ou_cash: ou(0.5, 0.1, 0.3), fill: fill(2.0, 1.5, 0.05), alpha: 0.05, phi: 0.02 }
}

/// Symmetric grid around zero funding for reflection and skew checks.
pub fn symmetric_setup() -> (GridSpec, HJBParams) {
    let grid = GridSpec { horizon_t: 2.0, n_time: 200, q_min: -3.0, q_max: 3.0, dq: 1.0, f_min: -0.6, f_max: 0.6, n_f: 13 };
    let params = HJBParams { ou_cash: ou(0.4, 0.0, 0.2), fill: fill(3.0, 2.0, 0.02), alpha: 0.1, phi: 0.05 };
    (grid, params)
}

/// Naive backward recursion written directly from the scheme's definition,
/// sharing no code with the solver. Values indexed `[i][j][l]`.
pub fn dp_oracle(g: &GridSpec, p: &HJBParams) -> Vec<Vec<Vec<f64>>> {
    let nq = ((g.q_max - g.q_min) / g.dq).round() as usize + 1;
    let nf = g.n_f;
    let qs: Vec<f64> = (0..nq).map(|j| g.q_min + j as f64 * g.dq).collect();
    let df = if nf > 1 { (g.f_max - g.f_min) / (nf - 1) as f64 } else { 0.0 };
    let fs: Vec<f64> = (0..nf).map(|l| g.f_min + l as f64 * df).collect();
    let dt = g.horizon_t / g.n_time as f64;
    let (lam, k, dmin) = (p.fill.lambda0, p.fill.k, p.fill.delta_min);
    let h = |a: f64| {
        let mut d = 1.0 / k - a;
        if d < dmin {
            d = dmin;
        }
        lam * (-k * d).exp() * (d + a)
    };
    let mut theta = vec![vec![vec![0.0; nf]; nq]; g.n_time + 1];
    for (row, q) in theta[g.n_time].iter_mut().zip(&qs) {
        row.fill(-p.alpha * q * q);
    }
    for i in (0..g.n_time).rev() {
        for j in 0..nq {
            for l in 0..nf {
                let v = theta[i + 1][j][l];
                let mut rhs = -qs[j] * fs[l] - p.phi * qs[j] * qs[j];
                if nf > 1 {
                    let b = p.ou_cash.kappa * (p.ou_cash.theta - fs[l]);
                    let diff = p.ou_cash.sigma.powi(2) / (2.0 * df * df);
                    if l + 1 < nf {
                        let up = diff + if b > 0.0 { b / df } else { 0.0 };
                        rhs += up * (theta[i + 1][j][l + 1] - v);
                    }
                    if l > 0 {
                        let down = diff + if b < 0.0 { -b / df } else { 0.0 };
                        rhs += down * (theta[i + 1][j][l - 1] - v);
                    }
                }
                if j > 0 {
                    rhs += g.dq * h((theta[i + 1][j - 1][l] - v) / g.dq);
                }
                if j + 1 < nq {
                    rhs += g.dq * h((theta[i + 1][j + 1][l] - v) / g.dq);
                }
                theta[i][j][l] = v + dt * rhs;
            }
        }
    }
    theta
}

/// Funding-collapsed table for `pure_as` on a symmetric inventory grid.
pub fn collapsed_table(fill: FillCurve, alpha: f64, phi: f64, q_lim: f64, horizon_t: f64, n_time: usize) -> HJBTable {
    let grid = GridSpec { horizon_t, n_time, q_min: -q_lim, q_max: q_lim, dq: 1.0, f_min: 0.0, f_max: 0.0, n_f: 1 };
    let params = HJBParams { ou_cash: ou(0.0, 0.0, 0.0), fill, alpha, phi };
    perpmm::hjb_solver::solve(&grid, &params).unwrap()
}

/// Minute panel with constant mid and constant hourly funding.
pub fn flat_panel(hours: usize, mid: f64, rate: f64) -> MarketPanel {
    let n = hours * 60;
    let ts: Vec<i64> = (0..n as i64).map(|i| i * 60).collect();
    let fts: Vec<i64> = (0..hours as i64).map(|h| h * 3600).collect();
    MarketPanel::new(ts, vec![mid; n], fts, vec![rate; hours], PanelOptions::default()).unwrap()
}
