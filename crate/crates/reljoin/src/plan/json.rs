//! JSON wire format for logical plans (round-trip) and physical plans
//! (serialize-only, for `explain` output).

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cost::JoinMethod;
use crate::error::{Error, Result};
use crate::json::to_canonical_string;
use crate::stats::DatasetStats;

use super::logical::{
    JoinCondition, JoinSpec, JoinType, LogicalNode, LogicalOp, LogicalPlan,
};
use super::physical::{ExchangeKind, PhysicalNode, PhysicalOp, PhysicalPlan};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStats {
    size_bytes: u64,
    cardinality: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    op: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    stats: Option<RawStats>,
    #[serde(default)]
    selectivity: Option<f64>,
    #[serde(default)]
    width_fraction: Option<f64>,
    #[serde(default)]
    join_type: Option<String>,
    #[serde(default)]
    condition: Option<String>,
    #[serde(default)]
    sortable: Option<bool>,
    #[serde(default)]
    hint: Option<String>,
    #[serde(default)]
    fanout: Option<f64>,
    #[serde(default)]
    children: Vec<RawNode>,
}

fn expect_children(raw: &RawNode, n: usize) -> Result<()> {
    if raw.children.len() != n {
        return Err(Error::Invariant(format!(
            "{} expects {} child node(s), got {}",
            raw.op,
            n,
            raw.children.len()
        )));
    }
    Ok(())
}

fn require<T>(field: Option<T>, op: &str, name: &str) -> Result<T> {
    field.ok_or_else(|| Error::Schema(format!("{op} requires field `{name}`")))
}

fn lower(raw: RawNode) -> Result<LogicalNode> {
    let op = match raw.op.as_str() {
        "scan" => {
            expect_children(&raw, 0)?;
            let name = require(raw.name, "scan", "name")?;
            let stats = match raw.stats {
                Some(s) => Some(DatasetStats::new(s.size_bytes, s.cardinality)?),
                None => None,
            };
            LogicalOp::Scan { name, stats }
        }
        "filter" => {
            expect_children(&raw, 1)?;
            let selectivity = require(raw.selectivity, "filter", "selectivity")?;
            let input = lower(raw.children.into_iter().next().unwrap())?;
            LogicalOp::Filter { selectivity, input: Box::new(input) }
        }
        "project" => {
            expect_children(&raw, 1)?;
            let width_fraction = require(raw.width_fraction, "project", "width_fraction")?;
            let input = lower(raw.children.into_iter().next().unwrap())?;
            LogicalOp::Project { width_fraction, input: Box::new(input) }
        }
        "join" => {
            expect_children(&raw, 2)?;
            let join_type = JoinType::parse(&require(raw.join_type, "join", "join_type")?)?;
            let condition = JoinCondition::parse(&require(raw.condition, "join", "condition")?)?;
            let key_sortable = raw.sortable.unwrap_or_else(|| condition.is_equi());
            let hint = match raw.hint {
                Some(h) => Some(JoinMethod::parse(&h)?),
                None => None,
            };
            let spec = JoinSpec {
                join_type,
                condition,
                key_sortable,
                hint,
                fanout: raw.fanout,
                join_id: 0,
            };
            let mut children = raw.children.into_iter();
            let left = lower(children.next().unwrap())?;
            let right = lower(children.next().unwrap())?;
            LogicalOp::Join { spec, left: Box::new(left), right: Box::new(right) }
        }
        other => return Err(Error::Schema(format!("unknown plan op: {other}"))),
    };
    Ok(LogicalNode { id: 0, op })
}

/// Parse a logical plan from its JSON text form.
pub fn parse_plan(text: &str) -> Result<LogicalPlan> {
    let raw: RawNode = serde_json::from_str(text)?;
    LogicalPlan::new(lower(raw)?)
}

#[derive(Serialize)]
struct OutStats {
    size_bytes: u64,
    cardinality: u64,
}

#[derive(Serialize)]
struct OutNode {
    op: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<OutStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selectivity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    width_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    join_type: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sortable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hint: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fanout: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    children: Vec<OutNode>,
}

fn raise(node: &LogicalNode) -> OutNode {
    let mut out = OutNode {
        op: node.op.label(),
        name: None,
        stats: None,
        selectivity: None,
        width_fraction: None,
        join_type: None,
        condition: None,
        sortable: None,
        hint: None,
        fanout: None,
        children: node.children().into_iter().map(raise).collect(),
    };
    match &node.op {
        LogicalOp::Scan { name, stats } => {
            out.name = Some(name.clone());
            out.stats = stats.map(|s| OutStats {
                size_bytes: s.size_bytes(),
                cardinality: s.cardinality(),
            });
        }
        LogicalOp::Filter { selectivity, .. } => out.selectivity = Some(*selectivity),
        LogicalOp::Project { width_fraction, .. } => out.width_fraction = Some(*width_fraction),
        LogicalOp::Join { spec, .. } => {
            out.join_type = Some(spec.join_type.name());
            out.condition = Some(spec.condition.name());
            out.sortable = Some(spec.key_sortable);
            out.hint = spec.hint.map(|h| h.name());
            out.fanout = spec.fanout;
        }
    }
    out
}

/// Serialize a logical plan back to canonical JSON text.
pub fn serialize_plan(plan: &LogicalPlan) -> Result<String> {
    to_canonical_string(&raise(&plan.root))
}

fn physical_value(node: &PhysicalNode) -> Result<Value> {
    let mut map = serde_json::Map::new();
    map.insert("id".into(), node.id.into());
    map.insert("logical_id".into(), node.logical_id.into());
    match &node.op {
        PhysicalOp::Scan { name } => {
            map.insert("op".into(), "scan".into());
            map.insert("name".into(), name.clone().into());
        }
        PhysicalOp::Filter { selectivity, input } => {
            map.insert("op".into(), "filter".into());
            map.insert("selectivity".into(), serde_json::json!(selectivity));
            map.insert("children".into(), Value::Array(vec![physical_value(input)?]));
        }
        PhysicalOp::Project { width_fraction, input } => {
            map.insert("op".into(), "project".into());
            map.insert("width_fraction".into(), serde_json::json!(width_fraction));
            map.insert("children".into(), Value::Array(vec![physical_value(input)?]));
        }
        PhysicalOp::Exchange { kind, input } => {
            map.insert("op".into(), "exchange".into());
            match kind {
                ExchangeKind::Broadcast => {
                    map.insert("exchange".into(), "broadcast".into());
                }
                ExchangeKind::Shuffle { partitions } => {
                    map.insert("exchange".into(), "shuffle".into());
                    map.insert("partitions".into(), (*partitions).into());
                }
            }
            map.insert("children".into(), Value::Array(vec![physical_value(input)?]));
        }
        PhysicalOp::LocalJoin { spec, method, flipped, annotation, left, right } => {
            map.insert("op".into(), "local_join".into());
            map.insert("join_id".into(), spec.join_id.into());
            map.insert("join_type".into(), spec.join_type.name().into());
            map.insert("condition".into(), spec.condition.name().into());
            map.insert("method".into(), method.name().into());
            map.insert("flipped".into(), (*flipped).into());
            map.insert("annotation".into(), serde_json::to_value(annotation)?);
            map.insert(
                "children".into(),
                Value::Array(vec![physical_value(left)?, physical_value(right)?]),
            );
        }
    }
    Ok(Value::Object(map))
}

/// Serialize a physical plan to canonical JSON text (one-way; physical
/// plans are produced by the optimizer, never parsed back).
pub fn serialize_physical_plan(plan: &PhysicalPlan) -> Result<String> {
    to_canonical_string(&physical_value(&plan.root)?)
}
