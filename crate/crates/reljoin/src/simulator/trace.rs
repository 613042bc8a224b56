//! Workload traces.
//!
//! Execution charges bytes-moved and bytes-touched into per-task counters;
//! a trace is the full record of one run: every exchange, every join stage,
//! and the shape of the final output. Totals aggregate the same quantities
//! the cost model estimates, so measured and predicted workloads compare
//! directly.

use serde::Serialize;

use crate::cost::JoinMethod;
use crate::stats::DatasetStats;

/// Workload counters for one task (one partition's worth of work).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TaskCounters {
    /// Bytes this task received over the network.
    pub network_bytes_in: u64,
    /// Bytes inserted into hash tables.
    pub build_units: u64,
    /// Bytes touched while probing: probe rows plus matched build rows.
    pub probe_units: u64,
    /// Comparison-weighted bytes spent sorting, `size * log2(rows)` shaped.
    pub sort_units: f64,
    /// Bytes streamed through merges.
    pub merge_units: u64,
    /// Bytes touched by nested-loop scans.
    pub nl_units: f64,
}

impl TaskCounters {
    /// Total compute charged to this task, in byte-units.
    pub fn compute_units(&self) -> f64 {
        self.build_units as f64
            + self.probe_units as f64
            + self.sort_units
            + self.merge_units as f64
            + self.nl_units
    }
}

/// Which logical input of a join an exchange fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// One data movement: a broadcast or shuffle feeding one side of a join.
#[derive(Debug, Clone, Serialize)]
pub struct ExchangeTrace {
    pub join_id: u32,
    pub side: Side,
    /// `"broadcast"` or `"shuffle"`.
    pub kind: &'static str,
    /// Shape of the data after movement.
    pub output: DatasetStats,
    /// Bytes that crossed the network for this movement.
    pub network_bytes: u64,
}

/// One executed join stage with its per-task counters.
#[derive(Debug, Clone, Serialize)]
pub struct StageTrace {
    pub join_id: u32,
    pub method: JoinMethod,
    /// True when the physical build side is the logical left input.
    pub flipped: bool,
    /// Logical left input shape (before any flip).
    pub left_input: DatasetStats,
    /// Logical right input shape.
    pub right_input: DatasetStats,
    pub output: DatasetStats,
    pub tasks: Vec<TaskCounters>,
}

impl StageTrace {
    pub fn network_bytes(&self) -> u64 {
        self.tasks.iter().map(|t| t.network_bytes_in).sum()
    }

    pub fn compute_units(&self) -> f64 {
        self.tasks.iter().map(|t| t.compute_units()).sum()
    }

    pub fn sort_units(&self) -> f64 {
        self.tasks.iter().map(|t| t.sort_units).sum()
    }
}

/// Complete record of one workload run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct WorkloadTrace {
    pub exchanges: Vec<ExchangeTrace>,
    pub stages: Vec<StageTrace>,
    /// Shape of the final output, once execution finishes.
    pub output: Option<DatasetStats>,
}

impl WorkloadTrace {
    /// Total bytes moved over the network, summed from per-task stage
    /// counters. Exchange records carry the same bytes split by movement;
    /// the two views always agree.
    pub fn network_bytes(&self) -> u64 {
        self.stages.iter().map(|s| s.network_bytes()).sum()
    }

    pub fn compute_units(&self) -> f64 {
        self.stages.iter().map(|s| s.compute_units()).sum()
    }

    /// Network-weighted workload: `w * network + compute`.
    pub fn weighted_total(&self, network_weight: f64) -> f64 {
        network_weight * self.network_bytes() as f64 + self.compute_units()
    }

    /// Bytes moved according to the exchange records; equals
    /// [`network_bytes`](Self::network_bytes) by construction.
    pub fn exchange_network_bytes(&self) -> u64 {
        self.exchanges.iter().map(|e| e.network_bytes).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_aggregate_task_counters() {
        let task = |net, build, probe| TaskCounters {
            network_bytes_in: net,
            build_units: build,
            probe_units: probe,
            sort_units: 1.5,
            merge_units: 2,
            nl_units: 0.0,
        };
        let stage = StageTrace {
            join_id: 0,
            method: JoinMethod::BroadcastHash,
            flipped: false,
            left_input: DatasetStats::new(1_000, 10).unwrap(),
            right_input: DatasetStats::new(100, 1).unwrap(),
            output: DatasetStats::empty(),
            tasks: vec![task(10, 100, 40), task(20, 100, 60)],
        };
        let trace = WorkloadTrace {
            exchanges: vec![ExchangeTrace {
                join_id: 0,
                side: Side::Right,
                kind: "broadcast",
                output: DatasetStats::new(200, 2).unwrap(),
                network_bytes: 30,
            }],
            stages: vec![stage],
            output: None,
        };
        assert_eq!(trace.network_bytes(), 30);
        assert_eq!(trace.exchange_network_bytes(), trace.network_bytes());
        let compute = 100.0 + 40.0 + 1.5 + 2.0 + 100.0 + 60.0 + 1.5 + 2.0;
        assert!((trace.compute_units() - compute).abs() < 1e-12);
        assert!((trace.weighted_total(2.0) - (60.0 + compute)).abs() < 1e-12);
    }
}
