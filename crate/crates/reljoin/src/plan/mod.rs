//! Plan trees and their JSON wire format.
//!
//! Logical plans are the optimizer's input: scans with declared statistics,
//! selectivity-annotated filters, width-annotated projects, and joins that
//! carry a type, a key condition, sortability, and an optional method hint.
//! Physical plans add exchange operators (the stage boundaries) and local
//! join operators annotated with the selected method and its costs.
//!
//! Serialization is canonical (sorted keys, stable floats) so plan and trace
//! files are byte-stable across runs.

mod json;
mod logical;
mod physical;
mod stage;

pub use json::{parse_plan, serialize_physical_plan, serialize_plan};
pub use logical::{
    JoinCondition, JoinSpec, JoinType, LogicalNode, LogicalOp, LogicalPlan, PlanBuilder,
};
pub use physical::{
    join_output_partitioning, DataPartitioning, ExchangeKind, JoinAnnotation, PhysicalNode,
    PhysicalOp, PhysicalPlan,
};
pub use stage::{segment_stages, Stage, StageGraph};
