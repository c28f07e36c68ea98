//! CSV ingestion and emission. Readers locate columns by header name and
//! report failures with the file name and 1-based line number.
//!
//! Timestamps are accepted as RFC 3339 / ISO-8601 UTC strings or as integer
//! Unix seconds, and are always written as RFC 3339.

use std::fs::File;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use csv::StringRecord;

use crate::error::{Error, Result};
use crate::simulator::{MarketPanel, PanelOptions, PathResult};

struct Table {
    name: String,
    headers: StringRecord,
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let file = File::open(path)?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = rdr.headers()?.clone();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::Schema { source_name: name.clone(), line, message: e.to_string() }
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self { name, headers, rows })
    }

    fn column(&self, col: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == col).ok_or_else(|| Error::Schema {
            source_name: self.name.clone(),
            line: 1,
            message: format!("missing column `{col}` (found: {})", self.headers.iter().collect::<Vec<_>>().join(",")),
        })
    }

    fn err(&self, line: u64, message: String) -> Error {
        Error::Schema { source_name: self.name.clone(), line, message }
    }

    fn f64_at(&self, line: u64, rec: &StringRecord, idx: usize, col: &str) -> Result<f64> {
        let raw = rec.get(idx).unwrap_or("");
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(line, format!("column `{col}`: `{raw}` is not a finite number"))),
        }
    }

    fn ts_at(&self, line: u64, rec: &StringRecord, idx: usize, col: &str) -> Result<i64> {
        let raw = rec.get(idx).unwrap_or("");
        parse_timestamp(raw).ok_or_else(|| self.err(line, format!("column `{col}`: `{raw}` is not a timestamp")))
    }

    fn check_increasing(&self, ts: &[i64]) -> Result<()> {
        if let Some(i) = ts.windows(2).position(|w| w[1] <= w[0]) {
            return Err(self.err(self.rows[i + 1].0, "timestamps must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Unix seconds from an RFC 3339 string or a plain integer.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    // ISO-8601 without an offset is read as UTC
    chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .map(|n| n.and_utc().timestamp())
}

pub fn format_timestamp(secs: i64) -> String {
    DateTime::<Utc>::from_timestamp(secs, 0).map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true)).unwrap_or_else(|| secs.to_string())
}

fn read_series(path: &Path, ts_col: &str, val_col: &str) -> Result<(Vec<i64>, Vec<f64>)> {
    let t = Table::read(path)?;
    let (ti, vi) = (t.column(ts_col)?, t.column(val_col)?);
    let mut ts = Vec::with_capacity(t.rows.len());
    let mut vals = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        ts.push(t.ts_at(*line, rec, ti, ts_col)?);
        vals.push(t.f64_at(*line, rec, vi, val_col)?);
    }
    t.check_increasing(&ts)?;
    Ok((ts, vals))
}

/// `timestamp,funding_rate`: fractional funding per hour.
pub fn read_funding_csv(path: &Path) -> Result<(Vec<i64>, Vec<f64>)> {
    read_series(path, "timestamp", "funding_rate")
}

/// `timestamp,mid`: one row per minute, positive mids.
pub fn read_mid_csv(path: &Path) -> Result<(Vec<i64>, Vec<f64>)> {
    let (ts, mid) = read_series(path, "timestamp", "mid")?;
    if let Some(i) = mid.iter().position(|m| *m <= 0.0) {
        return Err(Error::Schema { source_name: path.display().to_string(), line: i as u64 + 2, message: "mid must be positive".into() });
    }
    Ok((ts, mid))
}

/// `minute_ts,distance,crossed_volume`, long format. Rows need not be sorted.
pub fn read_tape_csv(path: &Path) -> Result<Vec<(i64, f64, f64)>> {
    let t = Table::read(path)?;
    let cols = ["minute_ts", "distance", "crossed_volume"];
    let (mi, di, vi) = (t.column(cols[0])?, t.column(cols[1])?, t.column(cols[2])?);
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let m = t.ts_at(*line, rec, mi, cols[0])?;
        let d = t.f64_at(*line, rec, di, cols[1])?;
        let v = t.f64_at(*line, rec, vi, cols[2])?;
        if d < 0.0 || v < 0.0 {
            return Err(t.err(*line, "distance and crossed_volume must be non-negative".into()));
        }
        out.push((m, d, v));
    }
    Ok(out)
}

/// Minute panel from a mid file and a funding file. Funding observations
/// outside the minute coverage are dropped; the last one before the first
/// minute becomes the panel's initial funding.
pub fn load_panel(mid_path: &Path, funding_path: &Path, opts: PanelOptions) -> Result<MarketPanel> {
    let (ts, mid) = read_mid_csv(mid_path)?;
    let (fts, fv) = read_funding_csv(funding_path)?;
    if ts.is_empty() {
        return Err(Error::Schema { source_name: mid_path.display().to_string(), line: 1, message: "no rows".into() });
    }
    let (first, last) = (ts[0], *ts.last().unwrap());
    let a = fts.partition_point(|&t| t < first);
    let b = fts.partition_point(|&t| t <= last);
    let initial = if a > 0 { fv[a - 1] } else { 0.0 };
    Ok(MarketPanel::new(ts, mid, fts[a..b].to_vec(), fv[a..b].to_vec(), opts)?.with_initial_funding(initial))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

pub fn write_funding_csv(path: &Path, ts: &[i64], rates: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["timestamp", "funding_rate"])?;
    for (t, f) in ts.iter().zip(rates) {
        w.write_record([format_timestamp(*t), format!("{f:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mid_csv(path: &Path, ts: &[i64], mid: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["timestamp", "mid"])?;
    for (t, m) in ts.iter().zip(mid) {
        w.write_record([format_timestamp(*t), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tape_csv(path: &Path, rows: &[(i64, f64, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["minute_ts", "distance", "crossed_volume"])?;
    for (m, d, v) in rows {
        w.write_record([format_timestamp(*m), d.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-seed results, one row per (policy, seed).
pub fn write_results_csv<'a>(path: &Path, rows: impl IntoIterator<Item = (&'a str, &'a PathResult)>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["seed", "policy", "final_equity", "inventory_rms", "max_drawdown", "n_fills", "funding_paid"])?;
    for (policy, r) in rows {
        w.write_record([
            r.seed.to_string(),
            policy.to_string(),
            r.final_equity().to_string(),
            r.inventory_rms().to_string(),
            r.max_drawdown().to_string(),
            r.n_fills().to_string(),
            r.funding_paid.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
