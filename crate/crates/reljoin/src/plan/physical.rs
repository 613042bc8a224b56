//! Physical plans: the logical tree with exchange operators inserted and
//! each join bound to a concrete method.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cost::{CostBreakdown, JoinMethod};

use super::logical::JoinSpec;

/// How an exchange moves rows between the producer and consumer stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeKind {
    /// Replicate the full input to every task.
    Broadcast,
    /// Hash-repartition by join key into `partitions` buckets.
    Shuffle { partitions: u32 },
}

/// What is known about how a dataset's rows are placed across tasks.
/// Tracked identically by the planner (to elide redundant shuffles) and by
/// the engine (to validate co-location requirements), so the two can never
/// disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataPartitioning {
    /// No placement guarantee (scans, broadcast-family join outputs).
    Arbitrary,
    /// Rows are placed by the key's hash into exactly `partitions` buckets.
    HashKey { partitions: u32 },
}

/// Placement guarantee of a join's output. Shuffle-family equality joins
/// emit rows co-located by the join key (every output row carries a key
/// that hashed to its partition); broadcast-family and non-equality joins
/// guarantee nothing, conservatively.
pub fn join_output_partitioning(
    method: JoinMethod,
    equi: bool,
    partitions: u32,
) -> DataPartitioning {
    match method {
        JoinMethod::ShuffleHash | JoinMethod::ShuffleSort => {
            DataPartitioning::HashKey { partitions }
        }
        JoinMethod::CartesianProduct if equi => DataPartitioning::HashKey { partitions },
        _ => DataPartitioning::Arbitrary,
    }
}

/// Why the optimizer picked this join method, kept on the plan for
/// `explain` output and the decision log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinAnnotation {
    /// Relative size |A|/|B| over normalized sides; absent when the build
    /// side was estimated empty or stats were unusable.
    pub k: Option<f64>,
    /// Threshold k0 = (p·w + p - w) / w at the parameters in effect.
    pub k0: f64,
    /// Model cost of the chosen method, when stats allowed evaluating it.
    pub cost: Option<CostBreakdown>,
    /// Weighted totals of every candidate that was feasible at selection
    /// time, keyed by method name.
    pub candidate_costs: BTreeMap<String, f64>,
}

/// A physical plan node. `logical_id` points back at the logical node this
/// operator implements; exchanges reuse their child's logical id.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNode {
    pub id: u32,
    pub logical_id: u32,
    pub op: PhysicalOp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhysicalOp {
    Scan {
        name: String,
    },
    Filter {
        selectivity: f64,
        input: Box<PhysicalNode>,
    },
    Project {
        width_fraction: f64,
        input: Box<PhysicalNode>,
    },
    Exchange {
        kind: ExchangeKind,
        input: Box<PhysicalNode>,
    },
    /// Per-task join of two co-located inputs. `flipped` records that the
    /// physical build side is the logical left input (sides were swapped to
    /// keep the smaller side on the build).
    LocalJoin {
        spec: JoinSpec,
        method: JoinMethod,
        flipped: bool,
        annotation: JoinAnnotation,
        left: Box<PhysicalNode>,
        right: Box<PhysicalNode>,
    },
}

impl PhysicalNode {
    pub fn children(&self) -> Vec<&PhysicalNode> {
        match &self.op {
            PhysicalOp::Scan { .. } => vec![],
            PhysicalOp::Filter { input, .. }
            | PhysicalOp::Project { input, .. }
            | PhysicalOp::Exchange { input, .. } => vec![input],
            PhysicalOp::LocalJoin { left, right, .. } => vec![left, right],
        }
    }
}

/// A complete physical plan plus summary counters.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalPlan {
    pub root: PhysicalNode,
}

impl PhysicalPlan {
    /// All exchange nodes in pre-order.
    pub fn exchanges(&self) -> Vec<&PhysicalNode> {
        let mut out = Vec::new();
        fn walk<'p>(node: &'p PhysicalNode, out: &mut Vec<&'p PhysicalNode>) {
            if matches!(node.op, PhysicalOp::Exchange { .. }) {
                out.push(node);
            }
            for child in node.children() {
                walk(child, out);
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// All join nodes in pre-order (join_id order).
    pub fn joins(&self) -> Vec<&PhysicalNode> {
        let mut out = Vec::new();
        fn walk<'p>(node: &'p PhysicalNode, out: &mut Vec<&'p PhysicalNode>) {
            if matches!(node.op, PhysicalOp::LocalJoin { .. }) {
                out.push(node);
            }
            for child in node.children() {
                walk(child, out);
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// Method chosen for each join, keyed by join_id.
    pub fn methods(&self) -> BTreeMap<u32, JoinMethod> {
        self.joins()
            .into_iter()
            .filter_map(|n| match &n.op {
                PhysicalOp::LocalJoin { spec, method, .. } => Some((spec.join_id, *method)),
                _ => None,
            })
            .collect()
    }
}
