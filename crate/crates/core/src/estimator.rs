//! Auxiliary-operator counts and memory of a hierarchical-equations-of-motion run.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Sites, Lorentzians per site, hierarchy depth and operator size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeomCostQuery {
    pub n_sites: u64,
    pub n_lorentzians: u64,
    pub depth: u64,
    /// Complex entries per auxiliary operator.
    pub block_entries: u64,
    pub bytes_per_entry: u64,
}

impl HeomCostQuery {
    /// Absorption convention: one ground-state column, N entries per operator.
    pub fn absorption(n_sites: u64, n_lorentzians: u64, depth: u64) -> Self {
        HeomCostQuery { n_sites, n_lorentzians, depth, block_entries: n_sites, bytes_per_entry: 16 }
    }

    /// Exponential modes, 2NM.
    pub fn modes(&self) -> u64 {
        2 * self.n_sites * self.n_lorentzians
    }
}

/// C(n, k) exactly.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // stays integral: acc = C(n, i) · (n − i) / (i + 1)
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// (2NM + L)! / ((2NM)! L!).
pub fn heom_count(q: &HeomCostQuery) -> BigUint {
    binomial(q.modes() + q.depth, q.depth)
}

/// count × block entries × bytes per entry.
pub fn heom_memory(q: &HeomCostQuery) -> BigUint {
    heom_count(q) * BigUint::from(q.block_entries) * BigUint::from(q.bytes_per_entry)
}

/// Decimal size with SI prefixes, e.g. "3.8 MB", "0.27 TB".
pub fn human_bytes(bytes: &BigUint) -> String {
    let b = bytes.to_f64().unwrap_or(f64::INFINITY);
    let units = ["B", "kB", "MB", "GB", "TB", "PB", "EB"];
    let mut k = 0;
    let mut v = b;
    while v >= 1000.0 && k + 1 < units.len() {
        v /= 1000.0;
        k += 1;
    }
    // large sizes stay in TB, so 2.7e11 B reads 0.27 TB
    if (1e10..1e15).contains(&b) {
        return format!("{} TB", sig2(b / 1e12));
    }
    format!("{} {}", sig2(v), units[k])
}

fn sig2(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let digits = (1 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.digits$}")
}

/// Comma-grouped integer.
pub fn grouped(n: &BigUint) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Parse a "lo..hi" or comma list of integers.
pub fn parse_range(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad integer list {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}
