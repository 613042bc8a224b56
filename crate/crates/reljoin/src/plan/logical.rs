use serde::{Deserialize, Serialize};

use crate::cost::JoinMethod;
use crate::error::{Error, Result};
use crate::stats::DatasetStats;

/// Relational join semantics supported by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinType {
    Inner,
    LeftOuter,
    RightOuter,
    FullOuter,
    LeftSemi,
    LeftAnti,
}

impl JoinType {
    /// Unmatched rows of the (logical) left side appear in the output.
    pub fn preserves_left(&self) -> bool {
        matches!(self, JoinType::LeftOuter | JoinType::FullOuter)
    }

    /// Unmatched rows of the (logical) right side appear in the output.
    pub fn preserves_right(&self) -> bool {
        matches!(self, JoinType::RightOuter | JoinType::FullOuter)
    }

    /// Semi/anti joins emit left rows only, never combined rows.
    pub fn emits_left_only(&self) -> bool {
        matches!(self, JoinType::LeftSemi | JoinType::LeftAnti)
    }

    pub fn name(&self) -> &'static str {
        match self {
            JoinType::Inner => "inner",
            JoinType::LeftOuter => "left_outer",
            JoinType::RightOuter => "right_outer",
            JoinType::FullOuter => "full_outer",
            JoinType::LeftSemi => "left_semi",
            JoinType::LeftAnti => "left_anti",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        ALL_JOIN_TYPES
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::Schema(format!("unknown join type: {name}")))
    }
}

pub const ALL_JOIN_TYPES: [JoinType; 6] = [
    JoinType::Inner,
    JoinType::LeftOuter,
    JoinType::RightOuter,
    JoinType::FullOuter,
    JoinType::LeftSemi,
    JoinType::LeftAnti,
];

/// Join key predicate. Equality is the hash/sort-friendly case; the
/// inequality predicates (evaluated in logical left-vs-right orientation)
/// force nested-loop execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JoinCondition {
    #[serde(rename = "equi")]
    Equi,
    #[serde(rename = "lt")]
    LessThan,
    #[serde(rename = "le")]
    LessOrEqual,
    #[serde(rename = "ne")]
    NotEqual,
}

impl JoinCondition {
    pub fn is_equi(&self) -> bool {
        matches!(self, JoinCondition::Equi)
    }

    /// Evaluate the predicate on a logical (left, right) key pair.
    pub fn matches(&self, left: i64, right: i64) -> bool {
        match self {
            JoinCondition::Equi => left == right,
            JoinCondition::LessThan => left < right,
            JoinCondition::LessOrEqual => left <= right,
            JoinCondition::NotEqual => left != right,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            JoinCondition::Equi => "equi",
            JoinCondition::LessThan => "lt",
            JoinCondition::LessOrEqual => "le",
            JoinCondition::NotEqual => "ne",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "equi" => Ok(JoinCondition::Equi),
            "lt" => Ok(JoinCondition::LessThan),
            "le" => Ok(JoinCondition::LessOrEqual),
            "ne" => Ok(JoinCondition::NotEqual),
            other => Err(Error::Schema(format!("unknown join condition: {other}"))),
        }
    }
}

/// Everything the selector needs to know about one logical join.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinSpec {
    pub join_type: JoinType,
    pub condition: JoinCondition,
    pub key_sortable: bool,
    pub hint: Option<JoinMethod>,
    /// Optional fanout override for the output-cardinality estimate
    /// (defaults to b/a, i.e. an estimate of exactly b rows).
    pub fanout: Option<f64>,
    /// Stable join identifier: pre-order position among the plan's joins.
    pub join_id: u32,
}

/// A logical plan node. `id` is the node's pre-order position in the tree
/// and doubles as the deterministic salt for filter execution.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalNode {
    pub id: u32,
    pub op: LogicalOp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogicalOp {
    Scan { name: String, stats: Option<DatasetStats> },
    Filter { selectivity: f64, input: Box<LogicalNode> },
    Project { width_fraction: f64, input: Box<LogicalNode> },
    Join { spec: JoinSpec, left: Box<LogicalNode>, right: Box<LogicalNode> },
}

impl LogicalOp {
    pub fn arity(&self) -> usize {
        match self {
            LogicalOp::Scan { .. } => 0,
            LogicalOp::Filter { .. } | LogicalOp::Project { .. } => 1,
            LogicalOp::Join { .. } => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LogicalOp::Scan { .. } => "scan",
            LogicalOp::Filter { .. } => "filter",
            LogicalOp::Project { .. } => "project",
            LogicalOp::Join { .. } => "join",
        }
    }
}

impl LogicalNode {
    pub fn children(&self) -> Vec<&LogicalNode> {
        match &self.op {
            LogicalOp::Scan { .. } => vec![],
            LogicalOp::Filter { input, .. } | LogicalOp::Project { input, .. } => vec![input],
            LogicalOp::Join { left, right, .. } => vec![left, right],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut LogicalNode> {
        match &mut self.op {
            LogicalOp::Scan { .. } => vec![],
            LogicalOp::Filter { input, .. } | LogicalOp::Project { input, .. } => vec![input],
            LogicalOp::Join { left, right, .. } => vec![left, right],
        }
    }

    #[cfg(test)]
    pub(crate) fn scan_for_tests(name: &str, stats: Option<DatasetStats>) -> LogicalNode {
        LogicalNode { id: 0, op: LogicalOp::Scan { name: name.to_string(), stats } }
    }
}

/// A validated logical plan with stable node and join numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalPlan {
    pub root: LogicalNode,
    join_count: u32,
}

impl LogicalPlan {
    /// Validate ranges and assign pre-order node ids and join ids.
    pub fn new(mut root: LogicalNode) -> Result<LogicalPlan> {
        validate_node(&root)?;
        let mut next_id = 0u32;
        let mut next_join = 0u32;
        number(&mut root, &mut next_id, &mut next_join);
        Ok(LogicalPlan { root, join_count: next_join })
    }

    pub fn join_count(&self) -> u32 {
        self.join_count
    }

    /// All join specs in pre-order (join_id order).
    pub fn joins(&self) -> Vec<&JoinSpec> {
        fn collect<'p>(node: &'p LogicalNode, out: &mut Vec<&'p JoinSpec>) {
            if let LogicalOp::Join { spec, .. } = &node.op {
                out.push(spec);
            }
            for child in node.children() {
                collect(child, out);
            }
        }
        let mut out = Vec::new();
        collect(&self.root, &mut out);
        out
    }

    /// Names of all scanned sources, deduplicated and sorted.
    pub fn source_names(&self) -> Vec<String> {
        fn collect(node: &LogicalNode, out: &mut Vec<String>) {
            if let LogicalOp::Scan { name, .. } = &node.op {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
            for child in node.children() {
                collect(child, out);
            }
        }
        let mut out = Vec::new();
        collect(&self.root, &mut out);
        out.sort();
        out
    }
}

fn in_unit_interval(value: f64) -> bool {
    value.is_finite() && value > 0.0 && value <= 1.0
}

fn validate_node(node: &LogicalNode) -> Result<()> {
    match &node.op {
        LogicalOp::Scan { name, .. } => {
            if name.is_empty() {
                return Err(Error::Invariant("scan requires a non-empty source name".into()));
            }
        }
        LogicalOp::Filter { selectivity, .. } => {
            if !in_unit_interval(*selectivity) {
                return Err(Error::Invariant(format!(
                    "filter selectivity must be in (0, 1], got {selectivity}"
                )));
            }
        }
        LogicalOp::Project { width_fraction, .. } => {
            if !in_unit_interval(*width_fraction) {
                return Err(Error::Invariant(format!(
                    "project width_fraction must be in (0, 1], got {width_fraction}"
                )));
            }
        }
        LogicalOp::Join { spec, .. } => {
            if let Some(f) = spec.fanout {
                if !(f.is_finite() && f > 0.0) {
                    return Err(Error::Invariant(format!(
                        "join fanout must be positive and finite, got {f}"
                    )));
                }
            }
        }
    }
    for child in node.children() {
        validate_node(child)?;
    }
    Ok(())
}

fn number(node: &mut LogicalNode, next_id: &mut u32, next_join: &mut u32) {
    node.id = *next_id;
    *next_id += 1;
    if let LogicalOp::Join { spec, .. } = &mut node.op {
        spec.join_id = *next_join;
        *next_join += 1;
    }
    for child in node.children_mut() {
        number(child, next_id, next_join);
    }
}

/// Convenience constructors for building plans in code (tests, suite
/// generation). Ids are assigned by `LogicalPlan::new`.
pub struct PlanBuilder;

impl PlanBuilder {
    pub fn scan(name: &str, stats: Option<DatasetStats>) -> LogicalNode {
        LogicalNode { id: 0, op: LogicalOp::Scan { name: name.to_string(), stats } }
    }

    pub fn filter(selectivity: f64, input: LogicalNode) -> LogicalNode {
        LogicalNode { id: 0, op: LogicalOp::Filter { selectivity, input: Box::new(input) } }
    }

    pub fn project(width_fraction: f64, input: LogicalNode) -> LogicalNode {
        LogicalNode { id: 0, op: LogicalOp::Project { width_fraction, input: Box::new(input) } }
    }

    pub fn join(spec: JoinSpec, left: LogicalNode, right: LogicalNode) -> LogicalNode {
        LogicalNode {
            id: 0,
            op: LogicalOp::Join { spec, left: Box::new(left), right: Box::new(right) },
        }
    }

    pub fn spec(join_type: JoinType, condition: JoinCondition) -> JoinSpec {
        JoinSpec {
            join_type,
            condition,
            key_sortable: condition.is_equi(),
            hint: None,
            fanout: None,
            join_id: 0,
        }
    }

    pub fn join_two_scans(
        left_name: &str,
        left_stats: Option<DatasetStats>,
        right_name: &str,
        right_stats: Option<DatasetStats>,
        join_type: JoinType,
        condition: JoinCondition,
    ) -> LogicalPlan {
        let node = Self::join(
            Self::spec(join_type, condition),
            Self::scan(left_name, left_stats),
            Self::scan(right_name, right_stats),
        );
        LogicalPlan::new(node).expect("two-scan join plan is always valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_preorder() {
        let plan = PlanBuilder::join_two_scans(
            "A",
            None,
            "B",
            None,
            JoinType::Inner,
            JoinCondition::Equi,
        );
        assert_eq!(plan.root.id, 0);
        let children = plan.root.children();
        assert_eq!(children[0].id, 1);
        assert_eq!(children[1].id, 2);
        assert_eq!(plan.join_count(), 1);
    }

    #[test]
    fn join_ids_follow_preorder_among_joins() {
        let inner = PlanBuilder::join(
            PlanBuilder::spec(JoinType::Inner, JoinCondition::Equi),
            PlanBuilder::scan("A", None),
            PlanBuilder::scan("B", None),
        );
        let outer = PlanBuilder::join(
            PlanBuilder::spec(JoinType::Inner, JoinCondition::Equi),
            inner,
            PlanBuilder::scan("C", None),
        );
        let plan = LogicalPlan::new(outer).unwrap();
        let joins = plan.joins();
        assert_eq!(joins.len(), 2);
        assert_eq!(joins[0].join_id, 0);
        assert_eq!(joins[1].join_id, 1);
    }

    #[test]
    fn selectivity_out_of_range_is_rejected() {
        let node = PlanBuilder::filter(0.0, PlanBuilder::scan("A", None));
        assert!(matches!(LogicalPlan::new(node), Err(Error::Invariant(_))));
        let node = PlanBuilder::filter(1.5, PlanBuilder::scan("A", None));
        assert!(matches!(LogicalPlan::new(node), Err(Error::Invariant(_))));
    }

    #[test]
    fn condition_predicates() {
        assert!(JoinCondition::Equi.matches(3, 3));
        assert!(!JoinCondition::Equi.matches(3, 4));
        assert!(JoinCondition::LessThan.matches(3, 4));
        assert!(!JoinCondition::LessThan.matches(4, 4));
        assert!(JoinCondition::LessOrEqual.matches(4, 4));
        assert!(JoinCondition::NotEqual.matches(3, 4));
        assert!(!JoinCondition::NotEqual.matches(4, 4));
    }

    #[test]
    fn source_names_are_sorted_and_unique() {
        let inner = PlanBuilder::join(
            PlanBuilder::spec(JoinType::Inner, JoinCondition::Equi),
            PlanBuilder::scan("B", None),
            PlanBuilder::scan("A", None),
        );
        let outer = PlanBuilder::join(
            PlanBuilder::spec(JoinType::Inner, JoinCondition::Equi),
            inner,
            PlanBuilder::scan("A", None),
        );
        let plan = LogicalPlan::new(outer).unwrap();
        assert_eq!(plan.source_names(), vec!["A".to_string(), "B".to_string()]);
    }
}
