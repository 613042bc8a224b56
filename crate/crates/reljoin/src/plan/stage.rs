//! Stage segmentation: split a physical plan at exchange boundaries.
//!
//! A stage is a maximal exchange-free region of the plan that one wave of
//! tasks can run as a pipeline. An exchange node sits in the *consumer*
//! stage (the consumer decides how rows reach it); the exchange's input
//! subtree forms a producer stage that must finish first.

use std::collections::BTreeMap;

use super::physical::{PhysicalNode, PhysicalOp, PhysicalPlan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub id: u32,
    /// Physical node ids that run inside this stage, in pre-order.
    pub node_ids: Vec<u32>,
    /// Producer stages feeding this stage's exchanges.
    pub dependencies: Vec<u32>,
}

/// Stages numbered in a valid execution order: every stage's dependencies
/// have smaller ids, so running `stages` front to back is a topological
/// schedule. The last stage produces the query result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageGraph {
    pub stages: Vec<Stage>,
    /// Physical node id -> stage id.
    pub stage_of: BTreeMap<u32, u32>,
}

impl StageGraph {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

pub fn segment_stages(plan: &PhysicalPlan) -> StageGraph {
    let mut stages = Vec::new();
    build_stage(&plan.root, &mut stages);
    let mut stage_of = BTreeMap::new();
    for stage in &stages {
        for node_id in &stage.node_ids {
            stage_of.insert(*node_id, stage.id);
        }
    }
    StageGraph { stages, stage_of }
}

fn build_stage(region_root: &PhysicalNode, stages: &mut Vec<Stage>) -> u32 {
    let mut node_ids = Vec::new();
    let mut dependencies = Vec::new();
    collect(region_root, &mut node_ids, &mut dependencies, stages);
    let id = stages.len() as u32;
    stages.push(Stage { id, node_ids, dependencies });
    id
}

fn collect(
    node: &PhysicalNode,
    node_ids: &mut Vec<u32>,
    dependencies: &mut Vec<u32>,
    stages: &mut Vec<Stage>,
) {
    node_ids.push(node.id);
    if let PhysicalOp::Exchange { input, .. } = &node.op {
        // Producer stages are numbered before their consumer, which keeps
        // stage ids in topological order.
        dependencies.push(build_stage(input, stages));
    } else {
        for child in node.children() {
            collect(child, node_ids, dependencies, stages);
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::cost::JoinMethod;
    use crate::plan::logical::{JoinCondition, JoinType, PlanBuilder};
    use crate::plan::physical::{ExchangeKind, JoinAnnotation, PhysicalPlan};

    fn scan(id: u32, name: &str) -> PhysicalNode {
        PhysicalNode { id, logical_id: id, op: PhysicalOp::Scan { name: name.to_string() } }
    }

    fn exchange(id: u32, kind: ExchangeKind, input: PhysicalNode) -> PhysicalNode {
        PhysicalNode {
            id,
            logical_id: input.logical_id,
            op: PhysicalOp::Exchange { kind, input: Box::new(input) },
        }
    }

    fn join(id: u32, method: JoinMethod, left: PhysicalNode, right: PhysicalNode) -> PhysicalNode {
        PhysicalNode {
            id,
            logical_id: id,
            op: PhysicalOp::LocalJoin {
                spec: PlanBuilder::spec(JoinType::Inner, JoinCondition::Equi),
                method,
                flipped: false,
                annotation: JoinAnnotation {
                    k: None,
                    k0: 39.0,
                    cost: None,
                    candidate_costs: BTreeMap::new(),
                },
                left: Box::new(left),
                right: Box::new(right),
            },
        }
    }

    #[test]
    fn single_stage_without_exchanges() {
        let plan = PhysicalPlan { root: scan(0, "A") };
        let graph = segment_stages(&plan);
        assert_eq!(graph.len(), 1);
        assert_eq!(graph.stages[0].node_ids, vec![0]);
        assert!(graph.stages[0].dependencies.is_empty());
    }

    #[test]
    fn broadcast_join_of_scans_has_two_stages() {
        let root = join(
            0,
            JoinMethod::BroadcastHash,
            scan(1, "A"),
            exchange(2, ExchangeKind::Broadcast, scan(3, "B")),
        );
        let graph = segment_stages(&PhysicalPlan { root });
        assert_eq!(graph.len(), 2);
        // The exchange node (id 2) lives in the consumer (final) stage.
        assert_eq!(graph.stage_of[&2], 1);
        assert_eq!(graph.stage_of[&3], 0);
        assert_eq!(graph.stages[1].dependencies, vec![0]);
    }

    #[test]
    fn shuffle_join_of_scans_has_three_stages() {
        let root = join(
            0,
            JoinMethod::ShuffleSort,
            exchange(1, ExchangeKind::Shuffle { partitions: 4 }, scan(2, "A")),
            exchange(3, ExchangeKind::Shuffle { partitions: 4 }, scan(4, "B")),
        );
        let graph = segment_stages(&PhysicalPlan { root });
        assert_eq!(graph.len(), 3);
        let last = graph.stages.last().unwrap();
        assert_eq!(last.dependencies, vec![0, 1]);
        // Dependencies always precede their consumer.
        for stage in &graph.stages {
            for dep in &stage.dependencies {
                assert!(*dep < stage.id);
            }
        }
    }
}
