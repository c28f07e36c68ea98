use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{optimal_offset, GridSpec, HJBParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PMMHJB01";
const CHECKSUM_LEN: usize = 32;

/// Solved continuation values `theta[t_i][q_j][f_l]`.
///
/// Immutable once built; safe to share across backtest workers.
#[derive(Debug, Clone, PartialEq)]
pub struct HJBTable {
    grid: GridSpec,
    params: HJBParams,
    values: Vec<f64>,
}

/// Recovered quotes at one state. Blocked sides carry an infinite offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteLookup {
    pub bid_offset: f64,
    pub ask_offset: f64,
    pub bid_blocked: bool,
    pub ask_blocked: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    grid: GridSpec,
    params: HJBParams,
    n_values: usize,
}

/// Interpolation coordinate: base node and weight of the next node.
fn locate(x: f64, step: f64, n_nodes: usize) -> (usize, f64) {
    if n_nodes < 2 || step <= 0.0 {
        return (0, 0.0);
    }
    let max = (n_nodes - 1) as f64;
    let mut s = (x / step).clamp(0.0, max);
    let r = s.round();
    if (s - r).abs() < 1e-9 {
        s = r;
    }
    let base = (s.floor() as usize).min(n_nodes - 2);
    (base, s - base as f64)
}

impl HJBTable {
    pub(super) fn from_parts(grid: GridSpec, params: HJBParams, values: Vec<f64>) -> Self {
        Self { grid, params, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &HJBParams {
        &self.params
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn theta(&self, i: usize, j: usize, l: usize) -> f64 {
        let g = &self.grid;
        self.values[(i * g.n_q() + j) * g.n_f + l]
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let len = self.grid.n_q() * self.grid.n_f;
        &self.values[i * len..(i + 1) * len]
    }

    /// `theta` at inventory node `j`, bilinear in `(t, f)`; `t` and `f` are
    /// clamped to the grid.
    pub fn interpolate(&self, t: f64, j: usize, f: f64) -> f64 {
        let g = &self.grid;
        let (i0, wt) = locate(t, g.dt(), g.n_time + 1);
        let (l0, wf) = locate(f - g.f_min, g.df(), g.n_f);
        let at = |i: usize| {
            let a = self.theta(i, j, l0);
            if wf == 0.0 {
                a
            } else {
                (1.0 - wf) * a + wf * self.theta(i, j, l0 + 1)
            }
        };
        let lo = at(i0);
        if wt == 0.0 {
            lo
        } else {
            (1.0 - wt) * lo + wt * at(i0 + 1)
        }
    }

    /// Bid and ask offsets at `(t, q, f_cash)` from neighbouring inventory values.
    pub fn quote_lookup(&self, t: f64, q: f64, f_cash: f64) -> Result<QuoteLookup> {
        if !t.is_finite() || !f_cash.is_finite() {
            return Err(Error::invalid("time and funding must be finite"));
        }
        let g = &self.grid;
        let j = g.q_index(q)?;
        let fill = &self.params.fill;
        let centre = self.interpolate(t, j, f_cash);
        let ask_blocked = j == 0;
        let bid_blocked = j + 1 == g.n_q();
        let ask_offset =
            if ask_blocked { f64::INFINITY } else { optimal_offset((self.interpolate(t, j - 1, f_cash) - centre) / g.dq, fill) };
        let bid_offset =
            if bid_blocked { f64::INFINITY } else { optimal_offset((self.interpolate(t, j + 1, f_cash) - centre) / g.dq, fill) };
        Ok(QuoteLookup { bid_offset, ask_offset, bid_blocked, ask_blocked })
    }

    /// Largest relative gap between any unblocked recovered offset at a grid
    /// node and `target`.
    pub fn max_offset_deviation(&self, target: f64) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for i in 0..=g.n_time {
            for j in 0..g.n_q() {
                for l in 0..g.n_f {
                    let look = self.quote_lookup(g.t(i), g.q(j), g.f(l)).expect("grid nodes are on the grid");
                    for (blocked, off) in [(look.bid_blocked, look.bid_offset), (look.ask_blocked, look.ask_offset)] {
                        if !blocked {
                            worst = worst.max(((off - target) / target).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header { grid: self.grid, params: self.params, n_values: self.values.len() })?;
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + 8 * self.values.len() + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptTable(m.to_string());
        if bytes.len() < MAGIC.len() + 8 + CHECKSUM_LEN || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("missing table header"));
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(corrupt("checksum mismatch"));
        }
        let mut len_bytes = [0u8; 8];
        len_bytes.copy_from_slice(&body[MAGIC.len()..MAGIC.len() + 8]);
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let header_start = MAGIC.len() + 8;
        let header_end =
            header_start.checked_add(header_len).filter(|&e| e <= body.len()).ok_or_else(|| corrupt("header length out of range"))?;
        let header: Header = serde_json::from_slice(&body[header_start..header_end])?;
        header.grid.validate()?;
        let payload = &body[header_end..];
        let expected = (header.grid.n_time + 1) * header.grid.n_q() * header.grid.n_f;
        if header.n_values != expected || payload.len() != 8 * expected {
            return Err(corrupt("value count does not match the grid"));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| {
                let mut b = [0u8; 8];
                b.copy_from_slice(c);
                f64::from_le_bytes(b)
            })
            .collect();
        Ok(Self { grid: header.grid, params: header.params, values })
    }

    /// Hex SHA-256 of the serialised table body.
    pub fn checksum(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        Ok(bytes[bytes.len() - CHECKSUM_LEN..].iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::super::solve;
    use super::*;
    use crate::fill_calib::FillCurve;
    use crate::funding_calib::OUParams;

    fn small() -> HJBTable {
        let grid = GridSpec { horizon_t: 2.0, n_time: 40, q_min: -3.0, q_max: 3.0, dq: 1.0, f_min: -0.2, f_max: 0.2, n_f: 5 };
        let params = HJBParams {
            ou_cash: OUParams { kappa: 0.5, theta: 0.0, sigma: 0.1 },
            fill: FillCurve::new(5.0, 2.0, 0.01).unwrap(),
            alpha: 0.05,
            phi: 0.01,
        };
        solve(&grid, &params).unwrap()
    }

    #[test]
    fn lookup_at_nodes_is_exact() {
        let t = small();
        let g = *t.grid();
        for &i in &[0, 7, 40] {
            for &l in &[0, 2, 4] {
                for j in 0..g.n_q() {
                    assert_eq!(t.interpolate(g.t(i), j, g.f(l)), t.theta(i, j, l));
                }
            }
        }
    }

    #[test]
    fn blocked_sides_at_limits() {
        let t = small();
        let top = t.quote_lookup(0.3, 3.0, 0.0).unwrap();
        assert!(top.bid_blocked && !top.ask_blocked);
        assert!(top.bid_offset.is_infinite());
        let bottom = t.quote_lookup(0.3, -3.0, 0.0).unwrap();
        assert!(bottom.ask_blocked && !bottom.bid_blocked);
        assert!(t.quote_lookup(0.3, 0.5, 0.0).is_err());
    }

    #[test]
    fn funding_is_clamped() {
        let t = small();
        let a = t.quote_lookup(1.0, 1.0, 5.0).unwrap();
        let b = t.quote_lookup(1.0, 1.0, 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bytes_round_trip_and_checksum() {
        let t = small();
        let bytes = t.to_bytes().unwrap();
        let back = HJBTable::from_bytes(&bytes).unwrap();
        assert_eq!(back, t);
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x01;
        assert!(matches!(HJBTable::from_bytes(&bad), Err(Error::CorruptTable(_))));
        assert!(HJBTable::from_bytes(b"nope").is_err());
    }
}
