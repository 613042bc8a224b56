//! Deterministic distributed-join simulator.
//!
//! The engine runs physical plans over synthetic datasets spread across `p`
//! task partitions and meters exactly what the cost model estimates: bytes
//! crossing the network at exchanges, and byte-units of hash build/probe,
//! sort, merge, and nested-loop work inside join stages. Scans, filters,
//! and projections run in place and charge nothing; only data movement and
//! joins are metered.
//!
//! Producers materialize where they are; movement is charged when a join
//! fetches its inputs, per the method actually chosen for that join. A
//! broadcast charges each task the bytes it did not already hold, a shuffle
//! charges each row to its destination task when that differs from its
//! source, and in-place reads are free. Everything is deterministic: row
//! generation is seeded, hash structures are only ever probed (never
//! iterated), and per-partition row order is fixed.

mod dataset;
mod local;
mod trace;

use std::collections::BTreeMap;

pub use dataset::{
    generate, source_tag, Dataset, GeneratorSpec, KeyDistribution, PartitionSkew, DEFAULT_SEED,
    KEY_BYTES,
};
pub use trace::{ExchangeTrace, Side, StageTrace, TaskCounters, WorkloadTrace};

use crate::cost::{ClusterParams, JoinMethod};
use crate::error::{Error, Result};
use crate::plan::{
    join_output_partitioning, DataPartitioning, ExchangeKind, JoinSpec, PhysicalNode,
    PhysicalOp, PhysicalPlan,
};
use crate::stats::DatasetStats;

use local::JoinContext;

/// Provenance of one row. Source rows carry the tag of their source and an
/// ordinal; combined rows record both parents, with `None` marking the
/// null-extended side of an outer join survivor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowId {
    Source { source: u16, ordinal: u32 },
    Pair { left: Option<Box<RowId>>, right: Option<Box<RowId>> },
}

/// One simulated row: a join key, a byte footprint, and an identity.
/// Payloads are never materialized; sizes are all the accounting needs and
/// identities are all that correctness checks need.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Row {
    pub key: i64,
    pub bytes: u64,
    pub id: RowId,
}

/// Destination task for a key under hash partitioning. The multiplier is
/// the 64-bit golden-ratio constant (2^64 / phi), a full-period multiplier
/// that spreads consecutive keys well.
pub fn hash_partition(key: i64, partitions: u32) -> u32 {
    ((key as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) % u64::from(partitions)) as u32
}

/// Deterministic filter coin: keeps a row iff a hash of `(key, salt)` maps
/// below `selectivity`. All rows sharing a key flip the same coin, so a
/// filter behaves like a key-range predicate; the salt (the filter's plan
/// node id) decorrelates stacked filters.
pub fn filter_keeps(key: i64, salt: u64, selectivity: f64) -> bool {
    let mut x = (key as u64) ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    ((x >> 11) as f64) / ((1u64 << 53) as f64) < selectivity
}

/// Rows spread over the cluster's task partitions, with the partitioning
/// property movement decisions depend on.
#[derive(Debug, Clone)]
pub struct PartitionedData {
    pub partitions: Vec<Vec<Row>>,
    pub partitioning: DataPartitioning,
}

impl PartitionedData {
    pub fn total_rows(&self) -> u64 {
        self.partitions.iter().map(|p| p.len() as u64).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.partitions.iter().flatten().map(|r| r.bytes).sum()
    }

    /// Exact statistics of the rows currently held.
    pub fn stats(&self) -> DatasetStats {
        DatasetStats::new(self.total_bytes(), self.total_rows())
            .expect("rows always occupy at least the key bytes")
    }
}

/// How a join fetches one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Movement {
    /// Read where it sits; free.
    InPlace,
    /// Re-partition by key hash; rows changing tasks are charged to their
    /// destination.
    Shuffle,
    /// Replicate to every task; each task is charged the bytes it lacked.
    Broadcast,
}

/// Fetched join input: still partitioned, or replicated on every task.
enum Fetched {
    Partitioned(Vec<Vec<Row>>),
    Replicated(Vec<Row>),
}

fn rows_bytes(rows: &[Row]) -> u64 {
    rows.iter().map(|r| r.bytes).sum()
}

/// Execution engine bound to one set of cluster parameters and sources.
pub struct Engine {
    params: ClusterParams,
    sources: BTreeMap<String, Dataset>,
    trace: WorkloadTrace,
}

impl Engine {
    pub fn new(params: ClusterParams) -> Result<Engine> {
        params.validate()?;
        Ok(Engine { params, sources: BTreeMap::new(), trace: WorkloadTrace::default() })
    }

    pub fn params(&self) -> &ClusterParams {
        &self.params
    }

    pub fn trace(&self) -> &WorkloadTrace {
        &self.trace
    }

    /// Register a dataset as a scannable source. The dataset must be
    /// partitioned for this cluster, carry a fresh name, and not collide
    /// with an existing source's identity tag.
    pub fn bind(&mut self, dataset: Dataset) -> Result<()> {
        if dataset.partitions.len() != self.params.parallelism as usize {
            return Err(Error::Invariant(format!(
                "dataset {} has {} partition(s), cluster runs {} task(s)",
                dataset.name,
                dataset.partitions.len(),
                self.params.parallelism
            )));
        }
        if self.sources.contains_key(&dataset.name) {
            return Err(Error::Invariant(format!("source {} already bound", dataset.name)));
        }
        let tag = source_tag(&dataset.name);
        if let Some(other) = self.sources.keys().find(|n| source_tag(n) == tag) {
            return Err(Error::Invariant(format!(
                "sources {other} and {} collide on identity tag {tag}; rename one",
                dataset.name
            )));
        }
        self.sources.insert(dataset.name.clone(), dataset);
        Ok(())
    }

    /// Read a bound source. Free: rows are consumed where they sit.
    pub fn scan(&self, name: &str) -> Result<PartitionedData> {
        let dataset = self
            .sources
            .get(name)
            .ok_or_else(|| Error::UnboundSource(name.to_string()))?;
        Ok(PartitionedData {
            partitions: dataset.partitions.clone(),
            partitioning: DataPartitioning::Arbitrary,
        })
    }

    /// Apply a deterministic filter in place. The salt is the filter's
    /// plan node id, so repeated runs agree and stacked filters compose.
    pub fn filter(&self, mut data: PartitionedData, selectivity: f64, salt: u64) -> PartitionedData {
        debug_assert!(selectivity > 0.0 && selectivity <= 1.0);
        for partition in &mut data.partitions {
            partition.retain(|row| filter_keeps(row.key, salt, selectivity));
        }
        data
    }

    /// Narrow rows to a fraction of their width, in place. Keys always
    /// survive, so a row never shrinks below its key bytes.
    pub fn project(&self, mut data: PartitionedData, width_fraction: f64) -> PartitionedData {
        debug_assert!(width_fraction > 0.0 && width_fraction <= 1.0);
        for row in data.partitions.iter_mut().flatten() {
            row.bytes = (((row.bytes as f64) * width_fraction).ceil() as u64).max(KEY_BYTES);
        }
        data
    }

    /// Fetch both inputs per their movements (charging network), run the
    /// join method on every task, and record the stage. Inputs arrive in
    /// logical orientation; `flipped` says the physical build side is the
    /// logical left input.
    #[allow(clippy::too_many_arguments)]
    pub fn run_join(
        &mut self,
        spec: &JoinSpec,
        method: JoinMethod,
        flipped: bool,
        left: PartitionedData,
        left_move: Movement,
        right: PartitionedData,
        right_move: Movement,
    ) -> Result<PartitionedData> {
        let p = self.params.parallelism as usize;
        for side in [&left, &right] {
            if side.partitions.len() != p {
                return Err(Error::Invariant(format!(
                    "join {} input has {} partition(s), cluster runs {p} task(s)",
                    spec.join_id,
                    side.partitions.len()
                )));
            }
        }
        let left_stats = left.stats();
        let right_stats = right.stats();
        let (probe, probe_move, probe_side, build, build_move, build_side) = if flipped {
            (right, right_move, Side::Right, left, left_move, Side::Left)
        } else {
            (left, left_move, Side::Left, right, right_move, Side::Right)
        };
        validate_movement(method, spec, &probe, probe_move, &build, build_move, self.params.parallelism)?;

        let mut counters = vec![TaskCounters::default(); p];
        let probe_parts = match self.fetch(spec.join_id, probe_side, probe, probe_move, &mut counters) {
            Fetched::Partitioned(parts) => parts,
            Fetched::Replicated(_) => unreachable!("probe side is never broadcast"),
        };
        let build_input = self.fetch(spec.join_id, build_side, build, build_move, &mut counters);
        self.enforce_budget(method, &build_input)?;

        let ctx = JoinContext { spec, flipped };
        let mut outputs: Vec<Vec<Row>> = vec![Vec::new(); p];
        match &build_input {
            Fetched::Replicated(build_rows) => {
                let total = rows_bytes(build_rows);
                let mut matched = vec![false; build_rows.len()];
                let index = (method == JoinMethod::BroadcastHash)
                    .then(|| local::build_hash_index(build_rows));
                for task in 0..p {
                    match &index {
                        Some(index) => {
                            // Every task builds its own copy of the table.
                            counters[task].build_units += total;
                            local::hash_task(
                                &ctx,
                                &probe_parts[task],
                                build_rows,
                                index,
                                &mut matched,
                                &mut counters[task],
                                &mut outputs[task],
                            );
                        }
                        None => local::nested_loop_task(
                            &ctx,
                            &probe_parts[task],
                            build_rows,
                            &mut matched,
                            &mut counters[task],
                            &mut outputs[task],
                        ),
                    }
                }
                // Build-side survivors exist once, not per replica; spread
                // them round-robin so no task becomes a hotspot.
                for (i, row) in
                    local::build_leftovers(&ctx, build_rows, &matched).into_iter().enumerate()
                {
                    outputs[i % p].push(row);
                }
            }
            Fetched::Partitioned(build_parts) => {
                for task in 0..p {
                    let build_rows = &build_parts[task];
                    match method {
                        JoinMethod::ShuffleHash => {
                            counters[task].build_units += rows_bytes(build_rows);
                            let index = local::build_hash_index(build_rows);
                            let mut matched = vec![false; build_rows.len()];
                            local::hash_task(
                                &ctx,
                                &probe_parts[task],
                                build_rows,
                                &index,
                                &mut matched,
                                &mut counters[task],
                                &mut outputs[task],
                            );
                            outputs[task]
                                .extend(local::build_leftovers(&ctx, build_rows, &matched));
                        }
                        JoinMethod::ShuffleSort => local::sort_merge_task(
                            &ctx,
                            &probe_parts[task],
                            build_rows,
                            &mut counters[task],
                            &mut outputs[task],
                        ),
                        JoinMethod::CartesianProduct => {
                            let mut matched = vec![false; build_rows.len()];
                            local::nested_loop_task(
                                &ctx,
                                &probe_parts[task],
                                build_rows,
                                &mut matched,
                                &mut counters[task],
                                &mut outputs[task],
                            );
                            outputs[task]
                                .extend(local::build_leftovers(&ctx, build_rows, &matched));
                        }
                        other => {
                            return Err(Error::Invariant(format!(
                                "method {other} cannot run on partitioned build input"
                            )));
                        }
                    }
                }
            }
        }

        let result = PartitionedData {
            partitions: outputs,
            partitioning: join_output_partitioning(
                method,
                spec.condition.is_equi(),
                self.params.parallelism,
            ),
        };
        self.trace.stages.push(StageTrace {
            join_id: spec.join_id,
            method,
            flipped,
            left_input: left_stats,
            right_input: right_stats,
            output: result.stats(),
            tasks: counters,
        });
        Ok(result)
    }

    fn fetch(
        &mut self,
        join_id: u32,
        side: Side,
        data: PartitionedData,
        movement: Movement,
        counters: &mut [TaskCounters],
    ) -> Fetched {
        let stats = data.stats();
        match movement {
            Movement::InPlace => Fetched::Partitioned(data.partitions),
            Movement::Shuffle => {
                let p = counters.len();
                let mut parts: Vec<Vec<Row>> = vec![Vec::new(); p];
                let mut moved = 0u64;
                for (src, rows) in data.partitions.into_iter().enumerate() {
                    for row in rows {
                        let dest = hash_partition(row.key, p as u32) as usize;
                        if dest != src {
                            counters[dest].network_bytes_in += row.bytes;
                            moved += row.bytes;
                        }
                        parts[dest].push(row);
                    }
                }
                self.trace.exchanges.push(ExchangeTrace {
                    join_id,
                    side,
                    kind: "shuffle",
                    output: stats,
                    network_bytes: moved,
                });
                Fetched::Partitioned(parts)
            }
            Movement::Broadcast => {
                let total = data.total_bytes();
                let mut moved = 0u64;
                for (task, counter) in counters.iter_mut().enumerate() {
                    let local = rows_bytes(&data.partitions[task]);
                    counter.network_bytes_in += total - local;
                    moved += total - local;
                }
                let rows: Vec<Row> = data.partitions.into_iter().flatten().collect();
                self.trace.exchanges.push(ExchangeTrace {
                    join_id,
                    side,
                    kind: "broadcast",
                    output: stats,
                    network_bytes: moved,
                });
                Fetched::Replicated(rows)
            }
        }
    }

    /// Hash tables must fit the per-task memory budget: the whole build
    /// side for a broadcast build, each task's partition for a shuffled
    /// build. Sort and nested-loop methods stream and never fail here.
    fn enforce_budget(&self, method: JoinMethod, build: &Fetched) -> Result<()> {
        let budget = self.params.memory_budget_bytes;
        match (method, build) {
            (JoinMethod::BroadcastHash, Fetched::Replicated(rows)) => {
                let actual = rows_bytes(rows);
                if actual > budget {
                    return Err(Error::OutOfBudget { actual, budget, task: 0 });
                }
            }
            (JoinMethod::ShuffleHash, Fetched::Partitioned(parts)) => {
                for (task, part) in parts.iter().enumerate() {
                    let actual = rows_bytes(part);
                    if actual > budget {
                        return Err(Error::OutOfBudget { actual, budget, task });
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Close the run: record the final output shape and hand back the trace.
    pub fn finish(mut self, output: Option<DatasetStats>) -> WorkloadTrace {
        self.trace.output = output;
        self.trace
    }
}

fn validate_movement(
    method: JoinMethod,
    spec: &JoinSpec,
    probe: &PartitionedData,
    probe_move: Movement,
    build: &PartitionedData,
    build_move: Movement,
    partitions: u32,
) -> Result<()> {
    // A side is co-partitioned by key if it is shuffled now or already
    // hash-partitioned for this cluster (exchange reuse).
    let co_partitioned = |data: &PartitionedData, movement: Movement| match movement {
        Movement::Shuffle => true,
        Movement::InPlace => data.partitioning == DataPartitioning::HashKey { partitions },
        Movement::Broadcast => false,
    };
    let ok = match method {
        JoinMethod::BroadcastHash | JoinMethod::BroadcastNestedLoop => {
            probe_move == Movement::InPlace && build_move == Movement::Broadcast
        }
        JoinMethod::ShuffleHash | JoinMethod::ShuffleSort => {
            co_partitioned(probe, probe_move) && co_partitioned(build, build_move)
        }
        JoinMethod::CartesianProduct => {
            if spec.condition.is_equi() {
                co_partitioned(probe, probe_move) && co_partitioned(build, build_move)
            } else {
                matches!(probe_move, Movement::Shuffle | Movement::InPlace)
                    && build_move == Movement::Broadcast
            }
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Invariant(format!(
            "join {}: method {method} cannot consume inputs moved as ({probe_move:?}, {build_move:?})",
            spec.join_id
        )))
    }
}

/// Run a physical plan over the given sources and return the output
/// dataset plus the workload trace. Exchange nodes become the movements of
/// the join that consumes them; a bare join input is read in place.
pub fn execute(
    plan: &PhysicalPlan,
    sources: &[Dataset],
    params: &ClusterParams,
) -> Result<(Dataset, WorkloadTrace)> {
    let mut engine = Engine::new(params.clone())?;
    for dataset in sources {
        engine.bind(dataset.clone())?;
    }
    let result = eval(&mut engine, &plan.root)?;
    let output = Dataset::from_partitions("output", result.partitions);
    let trace = engine.finish(Some(output.stats()));
    Ok((output, trace))
}

fn eval(engine: &mut Engine, node: &PhysicalNode) -> Result<PartitionedData> {
    match &node.op {
        PhysicalOp::Scan { name } => engine.scan(name),
        PhysicalOp::Filter { selectivity, input } => {
            let data = eval(engine, input)?;
            Ok(engine.filter(data, *selectivity, u64::from(node.logical_id)))
        }
        PhysicalOp::Project { width_fraction, input } => {
            let data = eval(engine, input)?;
            Ok(engine.project(data, *width_fraction))
        }
        PhysicalOp::Exchange { .. } => Err(Error::Invariant(
            "exchange nodes only make sense as join inputs".into(),
        )),
        PhysicalOp::LocalJoin { spec, method, flipped, left, right, .. } => {
            let (left_child, left_move) = split_exchange(left);
            let (right_child, right_move) = split_exchange(right);
            let left_data = eval(engine, left_child)?;
            let right_data = eval(engine, right_child)?;
            engine.run_join(spec, *method, *flipped, left_data, left_move, right_data, right_move)
        }
    }
}

fn split_exchange(node: &PhysicalNode) -> (&PhysicalNode, Movement) {
    match &node.op {
        PhysicalOp::Exchange { kind, input } => {
            let movement = match kind {
                ExchangeKind::Broadcast => Movement::Broadcast,
                ExchangeKind::Shuffle { .. } => Movement::Shuffle,
            };
            (input, movement)
        }
        _ => (node, Movement::InPlace),
    }
}
