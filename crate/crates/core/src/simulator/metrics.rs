use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PathResult;
use crate::error::{Error, Result};
use crate::stats::{mean, sample_sd};

/// Seed-paired summary of one policy against the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub n_seeds: usize,
    pub mean_final_equity: f64,
    /// 1.96 standard errors of the mean final equity.
    pub ci95: f64,
    /// Mean of per-seed `final - baseline_final`.
    pub delta_vs_baseline: f64,
    /// Fraction of seeds where the final equity strictly beats the baseline.
    pub win_rate: f64,
    /// Mean over seeds of the per-path inventory RMS.
    pub inventory_rms: f64,
    /// Mean over seeds of the per-path maximum drawdown.
    pub max_drawdown: f64,
    /// Total fills over total active quoted sides.
    pub fill_rate: f64,
    pub mean_inventory: f64,
    pub mean_funding_paid: f64,
}

pub fn compute_metrics(results: &[PathResult], baseline: &[PathResult]) -> Result<MetricsRow> {
    if results.is_empty() {
        return Err(Error::SeedMismatch("no results".into()));
    }
    let mut base: BTreeMap<u64, f64> = BTreeMap::new();
    for b in baseline {
        if base.insert(b.seed, b.final_equity()).is_some() {
            return Err(Error::SeedMismatch(format!("baseline seed {} repeated", b.seed)));
        }
    }
    if base.len() != results.len() {
        return Err(Error::SeedMismatch(format!("{} results vs {} baseline seeds", results.len(), base.len())));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut deltas = Vec::with_capacity(results.len());
    for r in results {
        if !seen.insert(r.seed) {
            return Err(Error::SeedMismatch(format!("result seed {} repeated", r.seed)));
        }
        let b = base.get(&r.seed).ok_or_else(|| Error::SeedMismatch(format!("seed {} has no baseline", r.seed)))?;
        deltas.push(r.final_equity() - b);
    }

    let n = results.len();
    let finals: Vec<f64> = results.iter().map(PathResult::final_equity).collect();
    let wins = deltas.iter().filter(|&&d| d > 0.0).count();
    let fills: u64 = results.iter().map(PathResult::n_fills).sum();
    let quotes: u64 = results.iter().map(|r| r.n_quotes).sum();
    let per = |f: fn(&PathResult) -> f64| mean(&results.iter().map(f).collect::<Vec<_>>());
    Ok(MetricsRow {
        n_seeds: n,
        mean_final_equity: mean(&finals),
        ci95: 1.96 * sample_sd(&finals) / (n as f64).sqrt(),
        delta_vs_baseline: mean(&deltas),
        win_rate: wins as f64 / n as f64,
        inventory_rms: per(PathResult::inventory_rms),
        max_drawdown: per(PathResult::max_drawdown),
        fill_rate: if quotes > 0 { fills as f64 / quotes as f64 } else { 0.0 },
        mean_inventory: per(PathResult::mean_inventory),
        mean_funding_paid: per(|r| r.funding_paid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(seed: u64, final_equity: f64) -> PathResult {
        PathResult {
            seed,
            equity_path: vec![0.0, final_equity],
            inventory_path: vec![0.0, 0.0],
            n_bid_fills: 0,
            n_ask_fills: 0,
            n_quotes: 0,
            funding_paid: 0.0,
            ask_proceeds: 0.0,
            bid_payments: 0.0,
            initial_cash: 0.0,
            final_cash: final_equity,
        }
    }

    #[test]
    fn identical_results_have_no_wins() {
        let a = vec![path(1, 3.0), path(2, -1.0)];
        let m = compute_metrics(&a, &a).unwrap();
        assert_eq!(m.delta_vs_baseline, 0.0);
        assert_eq!(m.win_rate, 0.0);
    }

    #[test]
    fn split_outcomes() {
        let r = vec![path(1, 1.0), path(2, -1.0)];
        let b = vec![path(2, 0.0), path(1, 0.0)];
        let m = compute_metrics(&r, &b).unwrap();
        assert_eq!(m.win_rate, 0.5);
        assert_eq!(m.delta_vs_baseline, 0.0);
        assert!((m.ci95 - 1.96 * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_seeds_rejected() {
        let r = vec![path(1, 1.0), path(2, -1.0)];
        let b = vec![path(1, 0.0), path(3, 0.0)];
        assert!(matches!(compute_metrics(&r, &b), Err(Error::SeedMismatch(_))));
        assert!(compute_metrics(&r, &r[..1]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
    }
}
