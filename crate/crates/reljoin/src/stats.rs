//! Dataset statistics and their static propagation through plan operators.
//!
//! A statistic is the pair (size in bytes, row cardinality). Sizes drive the
//! cost formulas; cardinalities drive the sort and nested-loop terms. The
//! optimizer trusts a statistic only when its size sits at or below a
//! watermark — absurdly large estimates are treated as absent so selection
//! can fall back to a safe method instead of planning around garbage.
//!
//! Propagation rules between exchange points:
//!
//! * `filter(s)`   → cardinality ⌈s·rows⌉, size ⌈s·bytes⌉
//! * `project(f)`  → cardinality unchanged, size ⌈f·bytes⌉
//! * `join`        → cardinality a·l_fan where the fanout l_fan defaults to
//!   b/a (so the estimate is exactly b rows); output row width is the sum of
//!   the input row widths. A per-join fanout override supports worst/best
//!   case studies.
//!
//! Fractional rows and bytes round up so a nonzero input never propagates to
//! a zero estimate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{LogicalNode, LogicalOp};

/// Size and cardinality of a dataset. Invariant: `size_bytes == 0` exactly
/// when `cardinality == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawStats")]
pub struct DatasetStats {
    size_bytes: u64,
    cardinality: u64,
}

#[derive(Deserialize)]
struct RawStats {
    size_bytes: u64,
    cardinality: u64,
}

impl TryFrom<RawStats> for DatasetStats {
    type Error = Error;
    fn try_from(raw: RawStats) -> Result<Self> {
        DatasetStats::new(raw.size_bytes, raw.cardinality)
    }
}

impl DatasetStats {
    pub fn new(size_bytes: u64, cardinality: u64) -> Result<Self> {
        if (size_bytes == 0) != (cardinality == 0) {
            return Err(Error::Invariant(format!(
                "size_bytes ({size_bytes}) and cardinality ({cardinality}) must be zero together"
            )));
        }
        Ok(DatasetStats { size_bytes, cardinality })
    }

    /// Bypasses the zero-consistency check. Used only to exercise the
    /// defensive error paths that guard against corrupted statistics.
    #[cfg(test)]
    pub(crate) fn new_unchecked(size_bytes: u64, cardinality: u64) -> Self {
        DatasetStats { size_bytes, cardinality }
    }

    pub fn empty() -> Self {
        DatasetStats { size_bytes: 0, cardinality: 0 }
    }

    pub fn size_bytes(&self) -> u64 {
        self.size_bytes
    }

    pub fn cardinality(&self) -> u64 {
        self.cardinality
    }

    /// Average row width in bytes; defined only for non-empty datasets.
    pub fn row_size(&self) -> Option<f64> {
        if self.cardinality == 0 {
            None
        } else {
            Some(self.size_bytes as f64 / self.cardinality as f64)
        }
    }
}

/// Default watermark: 1 GB, scaled for desk-size synthetic runs.
pub const DEFAULT_WATERMARK_BYTES: u64 = 1_000_000_000;

/// The watermark used by the reference cluster configuration (100 GB).
pub const REFERENCE_WATERMARK_BYTES: u64 = 100_000_000_000;

/// Validity gate for statistics: only sizes at or below the watermark are
/// trusted. The comparison is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsValidity {
    watermark_bytes: u64,
}

impl StatsValidity {
    pub fn new(watermark_bytes: u64) -> Result<Self> {
        if watermark_bytes == 0 {
            return Err(Error::Invariant("watermark_bytes must be positive".into()));
        }
        Ok(StatsValidity { watermark_bytes })
    }

    pub fn watermark_bytes(&self) -> u64 {
        self.watermark_bytes
    }

    pub fn is_valid(&self, stats: &DatasetStats) -> bool {
        stats.size_bytes <= self.watermark_bytes
    }
}

impl Default for StatsValidity {
    fn default() -> Self {
        StatsValidity { watermark_bytes: DEFAULT_WATERMARK_BYTES }
    }
}

fn ceil_scale(value: u64, factor: f64) -> u64 {
    (value as f64 * factor).ceil() as u64
}

/// Apply one operator's estimation rule. `inputs` must match the operator's
/// arity (0 for scans, 1 for filter/project, 2 for joins); a `None` input
/// propagates as [`Error::MissingStats`] so callers can mark everything
/// downstream invalid.
pub fn propagate(op: &LogicalOp, inputs: &[Option<DatasetStats>]) -> Result<DatasetStats> {
    let arity = op.arity();
    if inputs.len() != arity {
        return Err(Error::Invariant(format!(
            "operator {} expects {} input(s), got {}",
            op.label(),
            arity,
            inputs.len()
        )));
    }
    let resolved: Vec<DatasetStats> = inputs
        .iter()
        .map(|s| s.ok_or_else(|| Error::MissingStats(op.label().to_string())))
        .collect::<Result<_>>()?;

    match op {
        LogicalOp::Scan { name, stats, .. } => {
            stats.ok_or_else(|| Error::MissingStats(name.clone()))
        }
        LogicalOp::Filter { selectivity, .. } => {
            let input = resolved[0];
            DatasetStats::new(
                ceil_scale(input.size_bytes(), *selectivity),
                ceil_scale(input.cardinality(), *selectivity),
            )
        }
        LogicalOp::Project { width_fraction, .. } => {
            let input = resolved[0];
            DatasetStats::new(ceil_scale(input.size_bytes(), *width_fraction), input.cardinality())
        }
        LogicalOp::Join { spec, .. } => {
            let (left, right) = (resolved[0], resolved[1]);
            join_estimate(&left, &right, spec.fanout)
        }
    }
}

/// Join output estimate under the fanout model. With the default fanout
/// b/a the output cardinality is exactly the right side's cardinality, so
/// that case avoids the float round trip entirely.
fn join_estimate(
    left: &DatasetStats,
    right: &DatasetStats,
    fanout: Option<f64>,
) -> Result<DatasetStats> {
    let (a, b) = (left.cardinality(), right.cardinality());
    if a == 0 || b == 0 {
        return Ok(DatasetStats::empty());
    }
    let cardinality = match fanout {
        None => b,
        Some(f) => (a as f64 * f).ceil() as u64,
    };
    if cardinality == 0 {
        return Ok(DatasetStats::empty());
    }
    let row = left.row_size().unwrap_or(0.0) + right.row_size().unwrap_or(0.0);
    DatasetStats::new((cardinality as f64 * row).ceil() as u64, cardinality)
}

/// Estimate the output statistics of `node`, substituting runtime-measured
/// values wherever `measured` has an entry for a node id. Used both for
/// purely static planning (empty map) and for adaptive re-selection, where
/// executed joins and exchanges contribute exact figures and everything in
/// between is propagated.
pub fn estimate(
    node: &LogicalNode,
    measured: &BTreeMap<u32, DatasetStats>,
) -> Result<DatasetStats> {
    if let Some(stats) = measured.get(&node.id) {
        return Ok(*stats);
    }
    let inputs: Vec<Option<DatasetStats>> = node
        .children()
        .iter()
        .map(|child| estimate(child, measured).map(Some))
        .collect::<Result<_>>()?;
    propagate(&node.op, &inputs)
}
