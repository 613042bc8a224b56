//! Static physical planning and adaptive execution.
//!
//! The static planner estimates sizes from declared statistics, picks a
//! method per join under the active strategy, and inserts the exchanges
//! that method needs. The adaptive executor drives the engine over the
//! logical plan instead: producers materialize in place, the sizes sitting
//! at planned exchange boundaries are measured, each join is re-selected
//! once with those measurements, and data then moves per the final method.
//! Both paths share one decision routine, so a static run and the static
//! phase of an adaptive run can never disagree.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::cost::{k0_threshold, relative_size, total_cost, ClusterParams, JoinMethod};
use crate::error::{Error, Result};
use crate::plan::{
    join_output_partitioning, DataPartitioning, ExchangeKind, JoinAnnotation, JoinSpec,
    LogicalNode, LogicalOp, LogicalPlan, PhysicalNode, PhysicalOp, PhysicalPlan,
};
use crate::selector::candidate_costs;
use crate::simulator::{Dataset, Engine, Movement, PartitionedData, WorkloadTrace};
use crate::stats::{estimate, DatasetStats, StatsValidity};
use crate::strategies::{decide, Strategy};

/// Planner knobs shared by static planning and adaptive execution.
#[derive(Debug, Clone)]
pub struct PlannerOptions {
    /// Read an input in place when it is already hash-partitioned by key
    /// for this cluster, instead of shuffling it again.
    pub exchange_reuse: bool,
    /// Statistics above this watermark are not trusted for selection.
    pub validity: StatsValidity,
}

impl Default for PlannerOptions {
    fn default() -> PlannerOptions {
        PlannerOptions { exchange_reuse: true, validity: StatsValidity::default() }
    }
}

/// Whether execution may revise the static decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    /// Run the static decisions as planned.
    Static,
    /// Re-select each join once, at its exchange boundary, from measured
    /// sizes.
    Adaptive,
}

/// One selector invocation: which join, during which phase, what it chose,
/// and what it saw.
#[derive(Debug, Clone, Serialize)]
pub struct DecisionRecord {
    pub join_id: u32,
    /// `"static"` (from declared statistics) or `"adaptive"` (from runtime
    /// measurements).
    pub phase: &'static str,
    pub method: JoinMethod,
    /// Trusted statistics of the logical left input, if any.
    pub left: Option<DatasetStats>,
    /// Trusted statistics of the logical right input, if any.
    pub right: Option<DatasetStats>,
    /// Weighted totals of the feasible candidates, keyed by method name.
    pub costs: BTreeMap<String, f64>,
    /// Relative size |A|/|B| over normalized sides, when defined.
    pub k: Option<f64>,
    /// Broadcast/shuffle threshold at the parameters in effect.
    pub k0: f64,
}

/// Every selector invocation of one run, in the order they happened:
/// all static decisions first (join order), then one adaptive revision per
/// join as execution reaches it.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DecisionLog {
    pub records: Vec<DecisionRecord>,
}

impl DecisionLog {
    pub fn selector_invocations(&self) -> usize {
        self.records.len()
    }

    pub fn static_records(&self) -> Vec<&DecisionRecord> {
        self.records.iter().filter(|r| r.phase == "static").collect()
    }

    pub fn adaptive_records(&self) -> Vec<&DecisionRecord> {
        self.records.iter().filter(|r| r.phase == "adaptive").collect()
    }

    /// Joins whose adaptive revision picked a different method, as
    /// `(join_id, static_method, adaptive_method)`.
    pub fn changed_decisions(&self) -> Vec<(u32, JoinMethod, JoinMethod)> {
        let mut statics: BTreeMap<u32, JoinMethod> = BTreeMap::new();
        for record in &self.records {
            if record.phase == "static" {
                statics.insert(record.join_id, record.method);
            }
        }
        let mut out = Vec::new();
        for record in &self.records {
            if record.phase == "adaptive" {
                if let Some(was) = statics.get(&record.join_id) {
                    if *was != record.method {
                        out.push((record.join_id, *was, record.method));
                    }
                }
            }
        }
        out
    }
}

/// Estimate a subtree's statistics, treating "no statistics anywhere
/// beneath" as unknown rather than an error.
fn try_estimate(
    node: &LogicalNode,
    measured: &BTreeMap<u32, DatasetStats>,
) -> Result<Option<DatasetStats>> {
    match estimate(node, measured) {
        Ok(stats) => Ok(Some(stats)),
        Err(Error::MissingStats(_)) => Ok(None),
        Err(err) => Err(err),
    }
}

/// Outcome of one selector invocation.
#[derive(Debug, Clone)]
struct Decision {
    method: JoinMethod,
    /// Physical build side is the logical left input.
    flipped: bool,
    annotation: JoinAnnotation,
    left: Option<DatasetStats>,
    right: Option<DatasetStats>,
}

impl Decision {
    fn record(&self, join_id: u32, phase: &'static str) -> DecisionRecord {
        DecisionRecord {
            join_id,
            phase,
            method: self.method,
            left: self.left,
            right: self.right,
            costs: self.annotation.candidate_costs.clone(),
            k: self.annotation.k,
            k0: self.annotation.k0,
        }
    }
}

/// Gate untrusted statistics, normalize sides, and invoke the strategy.
fn decide_join(
    spec: &JoinSpec,
    left: Option<DatasetStats>,
    right: Option<DatasetStats>,
    params: &ClusterParams,
    strategy: Strategy,
    options: &PlannerOptions,
) -> Result<Decision> {
    let effective = strategy.effective_params(params);
    let left = left.filter(|s| options.validity.is_valid(s));
    let right = right.filter(|s| options.validity.is_valid(s));
    if let (Some(l), Some(r)) = (left, right) {
        let sides = crate::selector::normalize(l, r);
        let method = decide(strategy, spec, Some(&sides.probe), Some(&sides.build), params)?;
        let annotation = JoinAnnotation {
            k: relative_size(&sides.probe, &sides.build),
            k0: k0_threshold(&effective),
            cost: Some(total_cost(method, &sides.probe, &sides.build, &effective)?),
            candidate_costs: candidate_costs(spec, &sides.probe, &sides.build, &effective)?,
        };
        Ok(Decision { method, flipped: sides.flipped, annotation, left: Some(l), right: Some(r) })
    } else {
        // Without both sides' trusted sizes there is nothing to normalize
        // or cost; the strategy falls back structurally.
        let method = decide(strategy, spec, left.as_ref(), right.as_ref(), params)?;
        let annotation = JoinAnnotation {
            k: None,
            k0: k0_threshold(&effective),
            cost: None,
            candidate_costs: BTreeMap::new(),
        };
        Ok(Decision { method, flipped: false, annotation, left, right })
    }
}

/// Exchanges a method needs on the (logical left, logical right) inputs.
/// Broadcast methods replicate the build side and read the probe side in
/// place; shuffle methods co-partition both sides; a non-equality
/// cartesian product spreads the probe side and replicates the build side.
fn required_exchanges(
    method: JoinMethod,
    flipped: bool,
    equi: bool,
    partitions: u32,
) -> (Option<ExchangeKind>, Option<ExchangeKind>) {
    let shuffle = Some(ExchangeKind::Shuffle { partitions });
    let (probe_ex, build_ex) = match method {
        JoinMethod::BroadcastHash | JoinMethod::BroadcastNestedLoop => {
            (None, Some(ExchangeKind::Broadcast))
        }
        JoinMethod::ShuffleHash | JoinMethod::ShuffleSort => (shuffle, shuffle),
        JoinMethod::CartesianProduct if equi => (shuffle, shuffle),
        JoinMethod::CartesianProduct => (shuffle, Some(ExchangeKind::Broadcast)),
    };
    if flipped {
        (build_ex, probe_ex)
    } else {
        (probe_ex, build_ex)
    }
}

/// A shuffle is redundant when its input is already hash-partitioned by
/// key for this cluster; broadcasts are never redundant.
fn shuffle_is_redundant(
    kind: ExchangeKind,
    partitioning: DataPartitioning,
    options: &PlannerOptions,
    partitions: u32,
) -> bool {
    matches!(kind, ExchangeKind::Shuffle { .. })
        && options.exchange_reuse
        && partitioning == DataPartitioning::HashKey { partitions }
}

/// Plan a logical tree into a physical plan using declared statistics
/// only: pick a method per join, insert the exchanges it needs, and elide
/// shuffles whose input is already co-partitioned.
pub fn optimize_static(
    plan: &LogicalPlan,
    params: &ClusterParams,
    strategy: Strategy,
    options: &PlannerOptions,
) -> Result<PhysicalPlan> {
    params.validate()?;
    let measured = BTreeMap::new();
    let mut next_id = 0u32;
    let (root, _) =
        build_physical(&plan.root, params, strategy, options, &measured, &mut next_id)?;
    Ok(PhysicalPlan { root })
}

fn alloc(next_id: &mut u32) -> u32 {
    let id = *next_id;
    *next_id += 1;
    id
}

fn build_physical(
    node: &LogicalNode,
    params: &ClusterParams,
    strategy: Strategy,
    options: &PlannerOptions,
    measured: &BTreeMap<u32, DatasetStats>,
    next_id: &mut u32,
) -> Result<(PhysicalNode, DataPartitioning)> {
    match &node.op {
        LogicalOp::Scan { name, .. } => Ok((
            PhysicalNode {
                id: alloc(next_id),
                logical_id: node.id,
                op: PhysicalOp::Scan { name: name.clone() },
            },
            DataPartitioning::Arbitrary,
        )),
        LogicalOp::Filter { selectivity, input } => {
            let id = alloc(next_id);
            let (child, partitioning) =
                build_physical(input, params, strategy, options, measured, next_id)?;
            Ok((
                PhysicalNode {
                    id,
                    logical_id: node.id,
                    op: PhysicalOp::Filter {
                        selectivity: *selectivity,
                        input: Box::new(child),
                    },
                },
                partitioning,
            ))
        }
        LogicalOp::Project { width_fraction, input } => {
            let id = alloc(next_id);
            let (child, partitioning) =
                build_physical(input, params, strategy, options, measured, next_id)?;
            Ok((
                PhysicalNode {
                    id,
                    logical_id: node.id,
                    op: PhysicalOp::Project {
                        width_fraction: *width_fraction,
                        input: Box::new(child),
                    },
                },
                partitioning,
            ))
        }
        LogicalOp::Join { spec, left, right } => {
            let id = alloc(next_id);
            let decision = decide_join(
                spec,
                try_estimate(left, measured)?,
                try_estimate(right, measured)?,
                params,
                strategy,
                options,
            )?;
            let (left_ex, right_ex) = required_exchanges(
                decision.method,
                decision.flipped,
                spec.condition.is_equi(),
                params.parallelism,
            );
            let attach = |child: &LogicalNode,
                              exchange: Option<ExchangeKind>,
                              next_id: &mut u32|
             -> Result<PhysicalNode> {
                let (built, partitioning) =
                    build_physical(child, params, strategy, options, measured, next_id)?;
                match exchange {
                    Some(kind)
                        if !shuffle_is_redundant(
                            kind,
                            partitioning,
                            options,
                            params.parallelism,
                        ) =>
                    {
                        Ok(PhysicalNode {
                            id: alloc(next_id),
                            logical_id: built.logical_id,
                            op: PhysicalOp::Exchange { kind, input: Box::new(built) },
                        })
                    }
                    _ => Ok(built),
                }
            };
            let left_child = attach(left, left_ex, next_id)?;
            let right_child = attach(right, right_ex, next_id)?;
            let partitioning = join_output_partitioning(
                decision.method,
                spec.condition.is_equi(),
                params.parallelism,
            );
            Ok((
                PhysicalNode {
                    id,
                    logical_id: node.id,
                    op: PhysicalOp::LocalJoin {
                        spec: spec.clone(),
                        method: decision.method,
                        flipped: decision.flipped,
                        annotation: decision.annotation,
                        left: Box::new(left_child),
                        right: Box::new(right_child),
                    },
                },
                partitioning,
            ))
        }
    }
}

/// Execute a logical plan against bound sources. In `Static` mode the
/// pre-planned decisions run unchanged; in `Adaptive` mode every join is
/// re-selected once from the sizes measured at its exchange boundaries
/// before any data moves. Returns the output, the workload trace, and the
/// full decision log.
pub fn execute_adaptive(
    plan: &LogicalPlan,
    sources: &[Dataset],
    params: &ClusterParams,
    strategy: Strategy,
    mode: ExecutionMode,
    options: &PlannerOptions,
) -> Result<(Dataset, WorkloadTrace, DecisionLog)> {
    let mut engine = Engine::new(*params)?;
    for dataset in sources {
        engine.bind(dataset.clone())?;
    }

    // Phase one: the static decision for every join, from declared
    // statistics alone. These are exactly the methods `optimize_static`
    // would pick.
    let mut run = AdaptiveRun {
        engine,
        params,
        strategy,
        options,
        mode,
        statics: BTreeMap::new(),
        measured: BTreeMap::new(),
        completed: BTreeSet::new(),
        log: DecisionLog::default(),
    };
    run.collect_static(&plan.root)?;

    let output = run.eval(&plan.root)?;
    let dataset = Dataset::from_partitions("output", output.partitions);
    let trace = run.engine.finish(Some(dataset.stats()));
    Ok((dataset, trace, run.log))
}

struct AdaptiveRun<'a> {
    engine: Engine,
    params: &'a ClusterParams,
    strategy: Strategy,
    options: &'a PlannerOptions,
    mode: ExecutionMode,
    statics: BTreeMap<u32, Decision>,
    /// Runtime statistics keyed by logical node id: inputs measured at
    /// exchange boundaries and every executed join's output.
    measured: BTreeMap<u32, DatasetStats>,
    completed: BTreeSet<u32>,
    log: DecisionLog,
}

impl AdaptiveRun<'_> {
    fn collect_static(&mut self, node: &LogicalNode) -> Result<()> {
        if let LogicalOp::Join { spec, left, right } = &node.op {
            let empty = BTreeMap::new();
            let decision = decide_join(
                spec,
                try_estimate(left, &empty)?,
                try_estimate(right, &empty)?,
                self.params,
                self.strategy,
                self.options,
            )?;
            self.log.records.push(decision.record(spec.join_id, "static"));
            self.statics.insert(spec.join_id, decision);
        }
        for child in node.children() {
            self.collect_static(child)?;
        }
        Ok(())
    }

    fn eval(&mut self, node: &LogicalNode) -> Result<PartitionedData> {
        match &node.op {
            LogicalOp::Scan { name, .. } => self.engine.scan(name),
            LogicalOp::Filter { selectivity, input } => {
                let data = self.eval(input)?;
                Ok(self.engine.filter(data, *selectivity, u64::from(node.id)))
            }
            LogicalOp::Project { width_fraction, input } => {
                let data = self.eval(input)?;
                Ok(self.engine.project(data, *width_fraction))
            }
            LogicalOp::Join { spec, left, right } => {
                let left_data = self.eval(left)?;
                let right_data = self.eval(right)?;
                self.run_join(node, spec, left, right, left_data, right_data)
            }
        }
    }

    fn run_join(
        &mut self,
        node: &LogicalNode,
        spec: &JoinSpec,
        left: &LogicalNode,
        right: &LogicalNode,
        left_data: PartitionedData,
        right_data: PartitionedData,
    ) -> Result<PartitionedData> {
        if !self.completed.insert(spec.join_id) {
            return Err(Error::ReoptimizationConflict(format!(
                "join {} reached twice during one run",
                spec.join_id
            )));
        }
        let static_decision = self
            .statics
            .get(&spec.join_id)
            .ok_or_else(|| {
                Error::Invariant(format!("join {} has no static decision", spec.join_id))
            })?
            .clone();
        let (planned_left, planned_right) = required_exchanges(
            static_decision.method,
            static_decision.flipped,
            spec.condition.is_equi(),
            self.params.parallelism,
        );

        let decision = if self.mode == ExecutionMode::Adaptive
            && (planned_left.is_some() || planned_right.is_some())
        {
            // Producers feeding a planned exchange are materialized, so
            // their sizes are known before anything moves; measure them and
            // re-select once.
            if planned_left.is_some() {
                self.measured.insert(left.id, left_data.stats());
            }
            if planned_right.is_some() {
                self.measured.insert(right.id, right_data.stats());
            }
            let revised = decide_join(
                spec,
                try_estimate(left, &self.measured)?,
                try_estimate(right, &self.measured)?,
                self.params,
                self.strategy,
                self.options,
            )?;
            self.log.records.push(revised.record(spec.join_id, "adaptive"));
            revised
        } else {
            static_decision
        };

        let (left_ex, right_ex) = required_exchanges(
            decision.method,
            decision.flipped,
            spec.condition.is_equi(),
            self.params.parallelism,
        );
        let movement = |exchange: Option<ExchangeKind>, data: &PartitionedData| match exchange {
            None => Movement::InPlace,
            Some(ExchangeKind::Broadcast) => Movement::Broadcast,
            Some(kind) => {
                if shuffle_is_redundant(
                    kind,
                    data.partitioning,
                    self.options,
                    self.params.parallelism,
                ) {
                    Movement::InPlace
                } else {
                    Movement::Shuffle
                }
            }
        };
        let left_move = movement(left_ex, &left_data);
        let right_move = movement(right_ex, &right_data);
        let output = self.engine.run_join(
            spec,
            decision.method,
            decision.flipped,
            left_data,
            left_move,
            right_data,
            right_move,
        )?;
        self.measured.insert(node.id, output.stats());
        Ok(output)
    }
}
