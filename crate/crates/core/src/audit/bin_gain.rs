//! Within-MOS-bin spread of per-edge Q_total.
//!
//! Edges with (nearly) the same MOS can satisfy very different contracts; the
//! range of Q_total inside each MOS bin measures what scalar MOS hides.

use serde::{Deserialize, Serialize};

use super::IndicatorTable;
use crate::contract::ContractSet;
use crate::error::{Error, Result};
use crate::ratings::{EdgeSet, MAX_RATING, MIN_RATING};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub q_total_min: Option<f64>,
    pub q_total_max: Option<f64>,
}

impl BinRow {
    /// `None` for empty bins.
    pub fn range(&self) -> Option<f64> {
        Some(self.q_total_max? - self.q_total_min?)
    }
}

/// Bins `[1, 5]` into left-closed intervals of width `step` starting at 1
/// (the last bin is closed and may be narrower) and reports the per-edge
/// Q_total extremes in each.
pub fn bin_gain(edges: &EdgeSet, contracts: &ContractSet, step: f64) -> Result<Vec<BinRow>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!(
            "bin step must be positive, got {step}"
        )));
    }
    let (lo, hi) = (MIN_RATING as f64, MAX_RATING as f64);
    let n_bins = (((hi - lo) / step) - 1e-9).ceil().max(1.0) as usize;
    let lower = |b: usize| lo + b as f64 * step;
    let mut rows: Vec<BinRow> = (0..n_bins)
        .map(|b| {
            let upper = if b + 1 == n_bins { hi } else { lower(b + 1) };
            BinRow {
                center: (lower(b) + upper) / 2.0,
                lower: lower(b),
                upper,
                n: 0,
                q_total_min: None,
                q_total_max: None,
            }
        })
        .collect();

    let table = IndicatorTable::new(edges, contracts);
    for (m, &q) in table.mos().iter().zip(table.edge_q_total()) {
        let mut b = (((m - lo) / step).floor().max(0.0) as usize).min(n_bins - 1);
        while b + 1 < n_bins && *m >= lower(b + 1) {
            b += 1;
        }
        while b > 0 && *m < lower(b) {
            b -= 1;
        }
        let row = &mut rows[b];
        row.n += 1;
        row.q_total_min = Some(row.q_total_min.map_or(q, |v| v.min(q)));
        row.q_total_max = Some(row.q_total_max.map_or(q, |v| v.max(q)));
    }
    Ok(rows)
}
