//! Cluster workload model for distributed join methods.
//!
//! Workload is measured in byte-equivalent units: every phase of a join is
//! charged by the bytes it ships over the network or touches locally, summed
//! across all tasks in the cluster. With `|A|`, `|B|` the input sizes (left
//! is the larger side by convention — callers normalize), `a`, `b` the
//! cardinalities and `p` the parallelism:
//!
//! * broadcast exchange: `(p-1)·|B|`     (network)
//! * shuffle exchange:   `((p-1)/p)·(|A|+|B|)` (network)
//! * replicated hash build: `p·|B|`; partitioned hash build: `|B|`
//! * probe: `|A| + (a·l_fan/b)·|B|`, which is `|A| + |B|` at the average
//!   fanout `l_fan = b/a`
//! * sort: `|A|·log2(a/p) + |B|·log2(b/p)` (each task sorts its partition)
//! * merge: `|A| + |B|`
//! * nested loop: `|A| + a·|B|` replicated, `|A| + (a/p)·|B|` partitioned
//!
//! A method's total is `w·network + compute`, where the network weight `w`
//! expresses how expensive shipping a byte is relative to touching it
//! locally. Comparing the broadcast-hash and shuffle-hash totals yields the
//! relative-size threshold
//!
//! ```text
//! k0 = (p·w + p - w) / w
//! ```
//!
//! broadcast hashing wins exactly when `|A|/|B| > k0` (for p >= 2).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::DatasetStats;

/// Cluster shape and tuning knobs. `nodes` is carried for reporting; the
/// workload formulas depend only on task parallelism and the network weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Number of parallel tasks per stage (p).
    pub parallelism: u32,
    /// Number of worker nodes (informational).
    pub nodes: u32,
    /// Relative cost of moving one byte over the network (w).
    pub network_weight: f64,
    /// Per-task memory available for hash builds.
    pub memory_budget_bytes: u64,
}

pub const DEFAULT_PARALLELISM: u32 = 20;
pub const DEFAULT_NODES: u32 = 5;
pub const DEFAULT_NETWORK_WEIGHT: f64 = 1.0;
pub const DEFAULT_MEMORY_BUDGET_BYTES: u64 = 1_000_000_000;

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            parallelism: DEFAULT_PARALLELISM,
            nodes: DEFAULT_NODES,
            network_weight: DEFAULT_NETWORK_WEIGHT,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET_BYTES,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Invariant("parallelism must be at least 1".into()));
        }
        if self.nodes == 0 {
            return Err(Error::Invariant("nodes must be at least 1".into()));
        }
        if !(self.network_weight.is_finite() && self.network_weight > 0.0) {
            return Err(Error::Invariant("network_weight must be positive and finite".into()));
        }
        if self.memory_budget_bytes == 0 {
            return Err(Error::Invariant("memory_budget_bytes must be positive".into()));
        }
        Ok(())
    }

    fn p(&self) -> f64 {
        self.parallelism as f64
    }
}

/// The five physical join methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinMethod {
    BroadcastHash,
    ShuffleHash,
    ShuffleSort,
    BroadcastNestedLoop,
    CartesianProduct,
}

pub const ALL_METHODS: [JoinMethod; 5] = [
    JoinMethod::BroadcastHash,
    JoinMethod::ShuffleHash,
    JoinMethod::ShuffleSort,
    JoinMethod::BroadcastNestedLoop,
    JoinMethod::CartesianProduct,
];

impl JoinMethod {
    /// Preference rank: higher ranks are chosen when feasible. Hash methods
    /// outrank sort-merge, which outranks the nested-loop family.
    pub fn rank(&self) -> u8 {
        match self {
            JoinMethod::BroadcastHash | JoinMethod::ShuffleHash => 3,
            JoinMethod::ShuffleSort => 2,
            JoinMethod::BroadcastNestedLoop | JoinMethod::CartesianProduct => 1,
        }
    }

    /// Whether the exchange phase replicates the build side (broadcast) as
    /// opposed to repartitioning both sides.
    pub fn broadcasts_build_side(&self) -> bool {
        matches!(self, JoinMethod::BroadcastHash | JoinMethod::BroadcastNestedLoop)
    }

    pub fn name(&self) -> &'static str {
        match self {
            JoinMethod::BroadcastHash => "broadcast_hash",
            JoinMethod::ShuffleHash => "shuffle_hash",
            JoinMethod::ShuffleSort => "shuffle_sort",
            JoinMethod::BroadcastNestedLoop => "broadcast_nested_loop",
            JoinMethod::CartesianProduct => "cartesian_product",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        ALL_METHODS
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Schema(format!("unknown join method: {name}")))
    }
}

impl fmt::Display for JoinMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One method's workload, split by phase kind. `weighted_total` is always
/// `network_weight * network_workload + compute_workload`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub network_workload: f64,
    pub compute_workload: f64,
    pub weighted_total: f64,
}

impl CostBreakdown {
    fn new(network: f64, compute: f64, params: &ClusterParams) -> Self {
        CostBreakdown {
            network_workload: network,
            compute_workload: compute,
            weighted_total: params.network_weight * network + compute,
        }
    }
}

/// Network bytes to replicate the build side to every other task.
pub fn broadcast_cost(build: &DatasetStats, params: &ClusterParams) -> f64 {
    (params.p() - 1.0) * build.size_bytes() as f64
}

/// Compute units for every task to hash a full replica of the build side.
pub fn build_cost(build: &DatasetStats, params: &ClusterParams) -> f64 {
    params.p() * build.size_bytes() as f64
}

/// Compute units for one task to hash its partition of the build side
/// (summed over tasks this is just the build side's size).
pub fn partition_build_cost(build: &DatasetStats) -> f64 {
    build.size_bytes() as f64
}

/// Probe-phase compute at the average fanout l_fan = b/a: each probe row is
/// touched once and each build row is visited once across all matches.
pub fn probe_cost(probe: &DatasetStats, build: &DatasetStats) -> f64 {
    probe.size_bytes() as f64 + build.size_bytes() as f64
}

/// Network bytes to hash-repartition both sides: under key-independent
/// placement a (p-1)/p fraction of every row moves.
pub fn shuffle_cost(left: &DatasetStats, right: &DatasetStats, params: &ClusterParams) -> f64 {
    let p = params.p();
    (p - 1.0) / p * (left.size_bytes() + right.size_bytes()) as f64
}

fn sort_side(stats: &DatasetStats, params: &ClusterParams) -> Result<f64> {
    if stats.size_bytes() == 0 {
        return Ok(0.0);
    }
    if stats.cardinality() == 0 {
        return Err(Error::ZeroCardinality { size_bytes: stats.size_bytes() });
    }
    let per_partition = stats.cardinality() as f64 / params.p();
    Ok(stats.size_bytes() as f64 * per_partition.log2().max(0.0))
}

/// Compute units for each task to sort its partitions of both sides. The
/// log2 factor clamps at zero once partitions shrink to a single row.
pub fn sort_cost(left: &DatasetStats, right: &DatasetStats, params: &ClusterParams) -> Result<f64> {
    Ok(sort_side(left, params)? + sort_side(right, params)?)
}

/// Compute units to merge two sorted partitions: every byte is read once.
pub fn merge_cost(left: &DatasetStats, right: &DatasetStats) -> f64 {
    left.size_bytes() as f64 + right.size_bytes() as f64
}

/// Nested-loop compute with the inner side fully replicated: the outer loop
/// reads the probe side once, the inner loop reads the whole build side for
/// each of the `a` probe rows.
pub fn nested_loop_cost(probe: &DatasetStats, build: &DatasetStats) -> f64 {
    probe.size_bytes() as f64 + probe.cardinality() as f64 * build.size_bytes() as f64
}

/// Nested-loop compute with both sides partitioned: each task's inner loop
/// only covers its own slice of the build side.
pub fn partitioned_nested_loop_cost(
    probe: &DatasetStats,
    build: &DatasetStats,
    params: &ClusterParams,
) -> f64 {
    probe.size_bytes() as f64
        + probe.cardinality() as f64 / params.p() * build.size_bytes() as f64
}

/// Full workload breakdown for a method over normalized inputs (`left` is
/// the probe/larger side, `right` the build/smaller side).
pub fn total_cost(
    method: JoinMethod,
    left: &DatasetStats,
    right: &DatasetStats,
    params: &ClusterParams,
) -> Result<CostBreakdown> {
    let breakdown = match method {
        JoinMethod::BroadcastHash => CostBreakdown::new(
            broadcast_cost(right, params),
            build_cost(right, params) + probe_cost(left, right),
            params,
        ),
        JoinMethod::ShuffleHash => CostBreakdown::new(
            shuffle_cost(left, right, params),
            partition_build_cost(right) + probe_cost(left, right),
            params,
        ),
        JoinMethod::ShuffleSort => CostBreakdown::new(
            shuffle_cost(left, right, params),
            sort_cost(left, right, params)? + merge_cost(left, right),
            params,
        ),
        JoinMethod::BroadcastNestedLoop => CostBreakdown::new(
            broadcast_cost(right, params),
            nested_loop_cost(left, right),
            params,
        ),
        JoinMethod::CartesianProduct => CostBreakdown::new(
            shuffle_cost(left, right, params),
            partitioned_nested_loop_cost(left, right, params),
            params,
        ),
    };
    Ok(breakdown)
}

/// The relative-size threshold k0 = (p·w + p - w) / w. For p >= 2 the
/// broadcast-hash total is strictly below the shuffle-hash total exactly
/// when |A|/|B| > k0; at p = 1 the two methods cost the same for every k.
pub fn k0_threshold(params: &ClusterParams) -> f64 {
    let (p, w) = (params.p(), params.network_weight);
    (p * w + p - w) / w
}

/// k = |A| / |B| over normalized sides; undefined when the build side is
/// empty.
pub fn relative_size(left: &DatasetStats, right: &DatasetStats) -> Option<f64> {
    if right.size_bytes() == 0 {
        None
    } else {
        Some(left.size_bytes() as f64 / right.size_bytes() as f64)
    }
}
