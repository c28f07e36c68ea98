use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use perpmm::fill_calib::{bucket_hits, default_thresholds, fit_fill_curve, group_minutes, FillCurve, FillCurveReport, HitMode};
use perpmm::funding_calib::{calibrate_funding, CalibrationReport, OUParams};
use perpmm::hjb_solver::{build_rates, cfl_max_dt, solve, GridSpec, HJBParams, HJBTable};
use perpmm::io;
use perpmm::policies::{calibrate_risk_rule, calibrate_scaled_as, PolicyConfig, PolicyKind, RiskCalibration, RiskGrid, ScaleCalibration};
use perpmm::simulator::{
    compute_metrics, run_seeds, select_stress_windows, MarketPanel, MetricsRow, PanelOptions, PathResult, SimConfig, StressWindow,
    WindowLabel,
};
use perpmm::synth::{generate_funding, generate_mids, generate_tape, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

const FUNDING_REPORT: &str = "funding.json";
const FILL_REPORT: &str = "fill.json";
const HJB_TABLE: &str = "hjb_fd.table";
const AS_TABLE: &str = "pure_as.table";
const SOLVE_REPORT: &str = "solve.json";
const SOLVE_LOG: &str = "solve.log";
const RESULTS_CSV: &str = "results.csv";
const SUMMARY: &str = "summary.json";
const STRESS_REPORT: &str = "stress.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(perpmm::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, hint: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e} ({hint})", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn ensure_output_dir(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::runtime(format!("{}: {e}", cfg.output_dir.display())))
}

fn load_panel(cfg: &RunConfig) -> Result<MarketPanel, CliError> {
    let opts = PanelOptions { max_gap_secs: cfg.data.max_gap_minutes * 60, allow_gaps: cfg.data.allow_gaps };
    Ok(io::load_panel(&cfg.data.mid, &cfg.data.funding, opts)?)
}

/// Holdout window `[start, end)`: configured bounds, else the panel tail after
/// the training fraction.
fn holdout_window(cfg: &RunConfig, panel: &MarketPanel) -> Result<(i64, i64), CliError> {
    let (start, end) = cfg.backtest.holdout()?;
    let ts = panel.minute_ts();
    let start = match start {
        Some(s) => s,
        None => {
            let k = ((ts.len() as f64) * cfg.calibration.train_fraction).floor() as usize;
            if k >= ts.len() {
                return Err(CliError::input("no holdout: set backtest.holdout_start or use calibration.train_fraction < 1"));
            }
            ts[k]
        }
    };
    let end = end.unwrap_or(panel.end() + 60);
    if start < panel.start() || end > panel.end() + 60 || start >= end {
        return Err(CliError::input(format!(
            "holdout window [{}, {}) is not inside the panel coverage [{}, {}]",
            io::format_timestamp(start),
            io::format_timestamp(end),
            io::format_timestamp(panel.start()),
            io::format_timestamp(panel.end())
        )));
    }
    Ok((start, end))
}

/// Mean mid before the holdout: the price used to cash-scale funding.
fn training_mid(panel: &MarketPanel, holdout_start: i64) -> f64 {
    let n = panel.minute_ts().partition_point(|&t| t < holdout_start);
    let mids = if n == 0 { panel.mid() } else { &panel.mid()[..n] };
    mids.iter().sum::<f64>() / mids.len() as f64
}

pub fn calibrate(cfg: &RunConfig, mode: Option<HitMode>) -> Result<(), CliError> {
    let tape_path = cfg.data.tape.as_ref().ok_or_else(|| CliError::input("calibrate needs data.tape for the fill curve"))?;
    let panel = load_panel(cfg)?;
    let tape = io::read_tape_csv(tape_path)?;
    ensure_output_dir(cfg)?;
    let train_end = if cfg.calibration.train_fraction < 1.0 { holdout_window(cfg, &panel)?.0 } else { panel.end() + 60 };

    let series = panel.funding_series()?;
    let prices = panel.mid_at_funding();
    let funding = calibrate_funding(&cfg.asset, &series, cfg.calibration.train_fraction, Some(&prices))?;
    write_json(&cfg.out(FUNDING_REPORT), &funding)?;
    println!(
        "funding: kappa {:.6} /h, theta {:.4e}, sigma {:.4e}, half-life {:.3} h, jump lambda {:.4} /h, ll_gain {:.2} nats",
        funding.kappa, funding.theta, funding.sigma, funding.half_life_hours, funding.jump_lambda, funding.ll_gain
    );

    let mode = mode.unwrap_or(cfg.calibration.mode);
    let minutes = group_minutes(tape.into_iter().filter(|r| r.0 < train_end));
    let thresholds = match &cfg.calibration.thresholds {
        Some(t) => t.clone(),
        None => default_thresholds(training_mid(&panel, train_end), cfg.calibration.n_thresholds)?,
    };
    let hits = bucket_hits(&minutes, &thresholds, mode, cfg.hjb.dq)?;
    let curve = fit_fill_curve(&hits, cfg.calibration.delta_min)?;
    write_json(&cfg.out(FILL_REPORT), &FillCurveReport::new(&cfg.asset, &hits, &curve))?;
    println!(
        "fill ({mode}): Lambda {:.4} /h, k {:.6} per quote unit, 1/k {:.6}, {} minutes",
        curve.lambda0,
        curve.k,
        1.0 / curve.k,
        hits.minutes
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SolveReport {
    asset: String,
    reference_mid: f64,
    hjb_fd: TableSummary,
    pure_as: TableSummary,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableSummary {
    grid: GridSpec,
    params: HJBParams,
    dt: f64,
    cfl_max_dt: f64,
    checksum: String,
}

fn summarize(table: &HJBTable) -> Result<TableSummary, CliError> {
    let g = *table.grid();
    let p = *table.params();
    Ok(TableSummary {
        grid: g,
        params: p,
        dt: g.dt(),
        cfl_max_dt: cfl_max_dt(&build_rates(&g, &p.ou_cash), &p.fill),
        checksum: table.checksum()?,
    })
}

fn collapsed_grid(cfg: &RunConfig) -> GridSpec {
    cfg.hjb.grid(0.0, 0.0, 1)
}

fn no_funding() -> OUParams {
    OUParams { kappa: 0.0, theta: 0.0, sigma: 0.0 }
}

fn solve_or_explain(grid: &GridSpec, params: &HJBParams, what: &str) -> Result<HJBTable, CliError> {
    solve(grid, params).map_err(|e| match e {
        perpmm::Error::CflViolation { dt, max_dt } => CliError::input(format!(
            "{what}: CFL violation, dt {dt} h exceeds the monotone bound {max_dt} h; \
             raise hjb.n_time to at least {}",
            (grid.horizon_t / max_dt).ceil() as usize
        )),
        other => other.into(),
    })
}

pub fn solve_tables(cfg: &RunConfig, verify_as_limit: bool) -> Result<(), CliError> {
    let funding: CalibrationReport = read_json(&cfg.out(FUNDING_REPORT), "run `calibrate` first")?;
    let fill = read_json::<FillCurveReport>(&cfg.out(FILL_REPORT), "run `calibrate` first")?.curve()?;
    let panel = load_panel(cfg)?;
    let holdout_start = if cfg.calibration.train_fraction < 1.0 || cfg.backtest.holdout_start.is_some() {
        holdout_window(cfg, &panel)?.0
    } else {
        panel.end() + 60
    };
    let reference_mid = training_mid(&panel, holdout_start);
    let ou_cash = funding.ou_params().cash_scaled(reference_mid)?;
    let (f_min, f_max) = GridSpec::funding_bounds(&ou_cash, cfg.hjb.n_sd);
    let grid = cfg.hjb.grid(f_min, f_max, cfg.hjb.n_f);
    let params = cfg.hjb_params(ou_cash, fill);
    let as_grid = collapsed_grid(cfg);
    let as_params = cfg.hjb_params(no_funding(), fill);

    let clock = Instant::now();
    let hjb = solve_or_explain(&grid, &params, "hjb_fd")?;
    let hjb_secs = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let pure = solve_or_explain(&as_grid, &as_params, "pure_as")?;
    let as_secs = clock.elapsed().as_secs_f64();

    if verify_as_limit {
        verify_as_limit_on(cfg, &fill)?;
    }

    ensure_output_dir(cfg)?;
    hjb.write_to(&cfg.out(HJB_TABLE))?;
    pure.write_to(&cfg.out(AS_TABLE))?;
    let report = SolveReport { asset: cfg.asset.clone(), reference_mid, hjb_fd: summarize(&hjb)?, pure_as: summarize(&pure)? };
    write_json(&cfg.out(SOLVE_REPORT), &report)?;
    let log = format!(
        "asset {}\nhjb_fd grid {} x {} x {}, dt {:.6e} h, CFL bound {:.6e} h, wall {:.3} s\n\
         pure_as grid {} x {} x 1, dt {:.6e} h, CFL bound {:.6e} h, wall {:.3} s\n",
        cfg.asset,
        grid.n_time + 1,
        grid.n_q(),
        grid.n_f,
        report.hjb_fd.dt,
        report.hjb_fd.cfl_max_dt,
        hjb_secs,
        as_grid.n_time + 1,
        as_grid.n_q(),
        report.pure_as.dt,
        report.pure_as.cfl_max_dt,
        as_secs
    );
    fs::write(cfg.out(SOLVE_LOG), &log).map_err(|e| CliError::runtime(e.to_string()))?;
    print!("{log}");
    println!("tables: {} {}", cfg.out(HJB_TABLE).display(), cfg.out(AS_TABLE).display());
    Ok(())
}

/// Solve the zero-funding, zero-penalty companion of the configured grid and
/// check that every offset on the configured inventory range is `1/k`.
///
/// The companion's inventory range is widened by `n_time + 1` steps per side:
/// the blocked-side boundary moves inward one node per explicit step, so the
/// configured range then behaves as if inventory were unconstrained.
fn verify_as_limit_on(cfg: &RunConfig, fill: &FillCurve) -> Result<(), CliError> {
    let lim = cfg.hjb.limits();
    let pad = (cfg.hjb.n_time + 1) as f64 * cfg.hjb.dq;
    let mut grid = collapsed_grid(cfg);
    grid.q_min = lim.q_min - pad;
    grid.q_max = lim.q_max + pad;
    let params = HJBParams { ou_cash: no_funding(), fill: *fill, alpha: 0.0, phi: 0.0 };
    let table = solve_or_explain(&grid, &params, "AS-limit check")?;
    let target = 1.0 / fill.k;
    let n_q = ((lim.q_max - lim.q_min) / cfg.hjb.dq).round() as usize + 1;
    let mut worst: f64 = 0.0;
    for i in 0..=grid.n_time {
        for j in 0..n_q {
            let q = lim.q_min + j as f64 * cfg.hjb.dq;
            let look = table.quote_lookup(grid.t(i), q, 0.0)?;
            for off in [look.bid_offset, look.ask_offset] {
                worst = worst.max(((off - target) / target).abs());
            }
        }
    }
    if worst > 1e-10 {
        return Err(CliError::runtime(format!("AS-limit check failed: max relative offset error {worst:.3e} against 1/k = {target}")));
    }
    println!("AS-limit check passed: every offset equals 1/k = {target} within {worst:.1e}");
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyRow {
    policy: PolicyKind,
    #[serde(flatten)]
    metrics: MetricsRow,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    asset: String,
    holdout_start: String,
    holdout_end: String,
    seeds: (u64, u64),
    calibration_seeds: (u64, u64),
    target_rms: f64,
    scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale_calibration: Option<ScaleCalibration>,
    beta_q: f64,
    beta_f: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    risk_calibration: Option<RiskCalibration>,
    rows: Vec<PolicyRow>,
}

/// Everything a backtest needs, loaded and checked up front.
struct Bench {
    panel: MarketPanel,
    fill: FillCurve,
    hjb: Arc<HJBTable>,
    pure: Arc<HJBTable>,
    sim: SimConfig,
}

impl Bench {
    fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let b = &cfg.backtest;
        if !b.policies.contains(&PolicyKind::PureAs) {
            return Err(CliError::input("backtest.policies must include pure_as: results are paired against it"));
        }
        let fill = read_json::<FillCurveReport>(&cfg.out(FILL_REPORT), "run `calibrate` first")?.curve()?;
        let hjb = Arc::new(HJBTable::read_from(&cfg.out(HJB_TABLE)).map_err(|e| missing_table(e, HJB_TABLE))?);
        let pure = Arc::new(HJBTable::read_from(&cfg.out(AS_TABLE)).map_err(|e| missing_table(e, AS_TABLE))?);
        for t in [&hjb, &pure] {
            if t.params().fill != fill {
                return Err(CliError::input("solved tables use a different fill curve than fill.json; rerun `solve`"));
            }
        }
        let panel = load_panel(cfg)?;
        let sim = SimConfig {
            initial_cash: b.initial_cash,
            settle_at_next_mid: b.settle_at_next_mid,
            global_seed: b.global_seed,
            ..SimConfig::default()
        };
        Ok(Self { panel, fill, hjb, pure, sim })
    }

    fn policy(&self, cfg: &RunConfig, kind: PolicyKind, scale: f64, beta: (f64, f64)) -> PolicyConfig {
        match kind {
            PolicyKind::PureAs => PolicyConfig::pure_as(self.pure.clone()),
            PolicyKind::PureAsScaled => PolicyConfig::pure_as_scaled(self.pure.clone(), scale),
            PolicyKind::HjbFd => PolicyConfig::hjb_fd(self.hjb.clone()),
            PolicyKind::RiskCalibrated => PolicyConfig::risk_calibrated(self.fill, beta.0, beta.1, cfg.hjb.dq, cfg.hjb.limits()),
        }
    }
}

fn missing_table(e: perpmm::Error, name: &str) -> CliError {
    match e {
        perpmm::Error::Io(io) => CliError::input(format!("{name}: {io} (run `solve` first)")),
        other => other.into(),
    }
}

fn mean_rms(results: &[PathResult]) -> f64 {
    results.iter().map(PathResult::inventory_rms).sum::<f64>() / results.len() as f64
}

/// Run every configured policy on `seeds` and pair each against `pure_as`.
fn run_policies(
    cfg: &RunConfig,
    bench: &Bench,
    panel: &MarketPanel,
    scale: f64,
    beta: (f64, f64),
    seeds: &[u64],
) -> Result<Vec<(PolicyKind, Vec<PathResult>, MetricsRow)>, CliError> {
    let mut runs = Vec::new();
    for &kind in &cfg.backtest.policies {
        let policy = bench.policy(cfg, kind, scale, beta);
        runs.push((kind, run_seeds(panel, &policy, &bench.fill, &bench.sim, seeds)?));
    }
    let baseline = runs.iter().find(|r| r.0 == PolicyKind::PureAs).map(|r| r.1.clone()).expect("pure_as is required");
    runs.into_iter()
        .map(|(kind, res)| {
            let m = compute_metrics(&res, &baseline)?;
            Ok((kind, res, m))
        })
        .collect()
}

fn summary_path_params(cfg: &RunConfig) -> Result<(f64, (f64, f64)), CliError> {
    let s: Summary = read_json(&cfg.out(SUMMARY), "run `backtest` first to freeze the benchmark parameters")?;
    Ok((s.scale, (s.beta_q, s.beta_f)))
}

pub fn backtest(cfg: &RunConfig, stress: bool) -> Result<(), CliError> {
    let bench = Bench::load(cfg)?;
    let (start, end) = holdout_window(cfg, &bench.panel)?;
    let holdout = bench.panel.slice(start, end)?;
    let b = &cfg.backtest;
    let cal_seeds = b.calibration_seeds.seeds();
    let needs_scale = b.policies.contains(&PolicyKind::PureAsScaled) && b.scale.is_none();
    let needs_risk = b.policies.contains(&PolicyKind::RiskCalibrated) && b.beta_q.is_none();

    let target_rms = match b.target_rms {
        Some(t) => t,
        None if needs_scale || needs_risk => {
            let r = run_seeds(&holdout, &PolicyConfig::hjb_fd(bench.hjb.clone()), &bench.fill, &bench.sim, &cal_seeds)?;
            mean_rms(&r)
        }
        None => f64::NAN,
    };
    if (needs_scale || needs_risk) && !(target_rms > 0.0) {
        return Err(CliError::runtime("hjb_fd never moved inventory on the calibration seeds; set backtest.target_rms"));
    }
    let scale_calibration = if needs_scale {
        Some(calibrate_scaled_as(&holdout, bench.pure.clone(), &bench.fill, &bench.sim, target_rms, &cal_seeds)?)
    } else {
        None
    };
    let scale = b.scale.or(scale_calibration.as_ref().map(|c| c.scale)).unwrap_or(1.0);
    if let Some(w) = scale_calibration.as_ref().and_then(|c| c.warning.as_ref()) {
        eprintln!("warning: pure_as_scaled calibration: {w}");
    }
    let risk_calibration = if needs_risk {
        let grid = RiskGrid::default_for(&bench.fill, cfg.hjb.dq);
        Some(calibrate_risk_rule(&holdout, &bench.fill, cfg.hjb.dq, cfg.hjb.limits(), &bench.sim, target_rms, &cal_seeds, &grid)?)
    } else {
        None
    };
    let beta = match (&risk_calibration, b.beta_q, b.beta_f) {
        (_, Some(q), Some(f)) => (q, f),
        (Some(r), _, _) => (r.beta_q, r.beta_f),
        _ => (0.0, 0.0),
    };

    let runs = run_policies(cfg, &bench, &holdout, scale, beta, &b.seeds.seeds())?;
    ensure_output_dir(cfg)?;
    io::write_results_csv(
        &cfg.out(RESULTS_CSV),
        runs.iter().flat_map(|(kind, res, _)| {
            let label = policy_label(*kind);
            res.iter().map(move |r| (label, r))
        }),
    )?;
    let summary = Summary {
        asset: cfg.asset.clone(),
        holdout_start: io::format_timestamp(start),
        holdout_end: io::format_timestamp(end),
        seeds: (b.seeds.start, b.seeds.end),
        calibration_seeds: (b.calibration_seeds.start, b.calibration_seeds.end),
        target_rms,
        scale,
        scale_calibration,
        beta_q: beta.0,
        beta_f: beta.1,
        risk_calibration,
        rows: runs.iter().map(|(kind, _, m)| PolicyRow { policy: *kind, metrics: *m }).collect(),
    };
    write_json(&cfg.out(SUMMARY), &summary)?;
    print_table(&format!("{} holdout {} .. {}", cfg.asset, summary.holdout_start, summary.holdout_end), &summary.rows);
    if stress {
        stress_windows(cfg, &bench, scale, beta)?;
    }
    Ok(())
}

fn policy_label(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::PureAs => "pure_as",
        PolicyKind::PureAsScaled => "pure_as_scaled",
        PolicyKind::HjbFd => "hjb_fd",
        PolicyKind::RiskCalibrated => "risk_calibrated",
    }
}

fn print_table(title: &str, rows: &[PolicyRow]) {
    println!("{title}");
    println!(
        "{:<16} {:>14} {:>10} {:>12} {:>8} {:>10} {:>10}",
        "policy", "final_equity", "ci95", "delta_vs_as", "win", "inv_rms", "max_dd"
    );
    for r in rows {
        let m = &r.metrics;
        println!(
            "{:<16} {:>14.4} {:>10.4} {:>12.4} {:>8.2} {:>10.4} {:>10.4}",
            policy_label(r.policy),
            m.mean_final_equity,
            m.ci95,
            m.delta_vs_baseline,
            m.win_rate,
            m.inventory_rms,
            m.max_drawdown
        );
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StressRow {
    policy: PolicyKind,
    mean_final_equity: f64,
    delta_vs_pure_as: f64,
    win_rate: f64,
    inventory_rms: f64,
    /// Policy inventory RMS over the `pure_as` inventory RMS.
    inventory_rms_ratio: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StressReport {
    label: WindowLabel,
    start: String,
    end: String,
    mean_funding: f64,
    volatility: f64,
    rows: Vec<StressRow>,
}

fn stress_windows(cfg: &RunConfig, bench: &Bench, scale: f64, beta: (f64, f64)) -> Result<(), CliError> {
    let windows: Vec<StressWindow> = select_stress_windows(&bench.panel, cfg.backtest.stress_window_days)?;
    let seeds = cfg.backtest.seeds.seeds();
    let mut reports = Vec::new();
    for w in &windows {
        let panel = bench.panel.slice(w.start_ts, w.end_ts)?;
        let runs = run_policies(cfg, bench, &panel, scale, beta, &seeds)?;
        let base_rms = runs.iter().find(|r| r.0 == PolicyKind::PureAs).map(|r| r.2.inventory_rms).expect("pure_as is required");
        let rows = runs
            .iter()
            .map(|(kind, _, m)| StressRow {
                policy: *kind,
                mean_final_equity: m.mean_final_equity,
                delta_vs_pure_as: m.delta_vs_baseline,
                win_rate: m.win_rate,
                inventory_rms: m.inventory_rms,
                inventory_rms_ratio: if base_rms > 0.0 { m.inventory_rms / base_rms } else { f64::NAN },
            })
            .collect();
        reports.push(StressReport {
            label: w.label,
            start: io::format_timestamp(w.start_ts),
            end: io::format_timestamp(w.end_ts),
            mean_funding: w.mean_funding,
            volatility: w.volatility,
            rows,
        });
    }
    ensure_output_dir(cfg)?;
    write_json(&cfg.out(STRESS_REPORT), &reports)?;
    for r in &reports {
        println!("stress {} {} .. {} (mean funding {:.3e}, vol {:.3e})", r.label, r.start, r.end, r.mean_funding, r.volatility);
        for row in &r.rows {
            println!(
                "  {:<16} delta {:>10.4}  win {:>5.2}  inv_rms_ratio {:>6.3}",
                policy_label(row.policy),
                row.delta_vs_pure_as,
                row.win_rate,
                row.inventory_rms_ratio
            );
        }
    }
    Ok(())
}

pub fn stress(cfg: &RunConfig) -> Result<(), CliError> {
    let bench = Bench::load(cfg)?;
    let (scale, beta) = summary_path_params(cfg)?;
    stress_windows(cfg, &bench, scale, beta)
}

pub fn synth(spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::input(format!("{}: {e}", spec_path.display())))?;
    let spec: SyntheticSpec = toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", spec_path.display())))?;
    spec.validate()?;
    fs::create_dir_all(out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    let (ts, mid) = generate_mids(&spec)?;
    let (fts, fv) = generate_funding(&spec)?;
    let tape = generate_tape(&spec)?;
    io::write_mid_csv(&out.join("mid.csv"), &ts, &mid)?;
    io::write_funding_csv(&out.join("funding.csv"), &fts, &fv)?;
    io::write_tape_csv(&out.join("tape.csv"), &tape)?;
    write_json(&out.join("truth.json"), &spec)?;
    println!("synth {}: {} minutes, {} funding hours, {} tape rows -> {}", spec.asset, ts.len(), fts.len(), tape.len(), out.display());
    Ok(())
}

/// Validate the config and every input it names without running anything heavy.
pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let panel = load_panel(cfg)?;
    println!(
        "panel: {} minutes {} .. {}, {} funding observations",
        panel.len(),
        io::format_timestamp(panel.start()),
        io::format_timestamp(panel.end()),
        panel.funding().len()
    );
    if let Some(tape) = &cfg.data.tape {
        let rows = io::read_tape_csv(tape)?;
        println!("tape: {} rows", rows.len());
    }
    if cfg.calibration.train_fraction < 1.0 || cfg.backtest.holdout_start.is_some() {
        let (s, e) = holdout_window(cfg, &panel)?;
        println!("holdout: {} .. {}", io::format_timestamp(s), io::format_timestamp(e));
    }
    let (funding, fill) = (cfg.out(FUNDING_REPORT), cfg.out(FILL_REPORT));
    if funding.is_file() && fill.is_file() {
        let report: CalibrationReport = read_json(&funding, "")?;
        let curve = read_json::<FillCurveReport>(&fill, "")?.curve()?;
        let ou_cash = report.ou_params().cash_scaled(panel.mean_mid())?;
        let (f_min, f_max) = GridSpec::funding_bounds(&ou_cash, cfg.hjb.n_sd);
        let grid = cfg.hjb.grid(f_min, f_max, cfg.hjb.n_f);
        grid.validate()?;
        let max_dt = cfl_max_dt(&build_rates(&grid, &ou_cash), &curve);
        let ok = grid.dt() <= max_dt;
        println!("CFL: dt {:.6e} h vs bound {:.6e} h ({})", grid.dt(), max_dt, if ok { "ok" } else { "violated" });
        if !ok {
            return Err(CliError::input(format!(
                "CFL violation: raise hjb.n_time to at least {}",
                (grid.horizon_t / max_dt).ceil() as usize
            )));
        }
    }
    println!("config ok");
    Ok(())
}
