//! Multi-strategy benchmark suites.
//!
//! A suite is a set of queries plus the generator specs for their sources.
//! The runner executes every (query, strategy) pair adaptively, records the
//! workload each run generated, and compares every strategy against a
//! baseline: how many join decisions differ (collapsing the two shuffle
//! methods into one family) and how much cheaper or dearer the measured
//! workload came out. All costs are simulated workload units — network
//! bytes and compute byte-units — never wall-clock time; every report says
//! so in its header.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::{ClusterParams, JoinMethod};
use crate::error::{Error, Result};
use crate::optimizer::{
    execute_adaptive, DecisionLog, ExecutionMode, PlannerOptions,
};
use crate::plan::{parse_plan, serialize_plan, JoinCondition, JoinType, LogicalPlan, PlanBuilder};
use crate::simulator::{generate, Dataset, GeneratorSpec, KeyDistribution, PartitionSkew};
use crate::stats::DatasetStats;
use crate::strategies::Strategy;

/// Statement printed and embedded in every report.
pub const COST_NOTE: &str = "costs are simulated workload units (network bytes and compute \
     byte-units), not wall-clock time";

/// One named query.
#[derive(Debug, Clone)]
pub struct SuiteQuery {
    pub name: String,
    pub plan: LogicalPlan,
}

/// A fully loaded suite, ready to run.
#[derive(Debug, Clone)]
pub struct Suite {
    pub queries: Vec<SuiteQuery>,
    pub generators: Vec<GeneratorSpec>,
    pub strategies: Vec<Strategy>,
    pub baseline: Strategy,
}

/// On-disk form of a suite: a manifest JSON with plan file references
/// (relative to the manifest), inline generator specs, and strategy names.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteManifest {
    queries: Vec<QueryRef>,
    generators: Vec<GeneratorSpec>,
    strategies: Vec<String>,
    #[serde(default)]
    baseline: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRef {
    name: String,
    plan: String,
}

/// Load a suite manifest and the plan files it references.
pub fn load_manifest(path: &Path) -> Result<Suite> {
    let text = fs::read_to_string(path)?;
    let manifest: SuiteManifest = serde_json::from_str(&text)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut queries = Vec::new();
    for query in &manifest.queries {
        let plan_text = fs::read_to_string(dir.join(&query.plan))?;
        queries.push(SuiteQuery { name: query.name.clone(), plan: parse_plan(&plan_text)? });
    }
    let strategies = manifest
        .strategies
        .iter()
        .map(|s| Strategy::parse(s))
        .collect::<Result<Vec<_>>>()?;
    let baseline = match &manifest.baseline {
        Some(name) => Strategy::parse(name)?,
        None => Strategy::parse("absolute_size")?,
    };
    Ok(Suite { queries, generators: manifest.generators, strategies, baseline })
}

/// One successful (query, strategy) run.
#[derive(Debug, Clone, Serialize)]
pub struct QueryRun {
    pub query: String,
    pub total_network_bytes: u64,
    pub total_compute_units: f64,
    pub weighted_total: f64,
    /// Final method of every join, in join order.
    pub decision_vector: Vec<JoinMethod>,
    /// Joins whose adaptive revision differed from the static decision.
    pub changed_decisions: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryFailure {
    pub query: String,
    pub error: String,
}

/// Suite-level distribution of the weighted totals.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregates {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

impl Aggregates {
    fn over(values: &[f64]) -> Option<Aggregates> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            min = min.min(*v);
            max = max.max(*v);
        }
        Some(Aggregates { mean, min, max, stddev: variance.sqrt() })
    }
}

/// How one strategy's decisions and costs relate to the baseline's, over
/// the queries both completed.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub baseline: String,
    /// Joins decided differently, after collapsing the two shuffle methods
    /// into one family.
    pub join_diff_count: u64,
    pub total_joins: u64,
    /// `100 * join_diff_count / total_joins`.
    pub pct_join_diff: f64,
    /// Percent workload saved against the baseline:
    /// `100 * (baseline_total - strategy_total) / baseline_total`.
    pub pct_cost_diff: f64,
    /// Percent cost difference per percent of joins decided differently;
    /// absent when no decisions differ.
    pub psts: Option<f64>,
}

impl Comparison {
    pub fn new(
        baseline: &str,
        join_diff_count: u64,
        total_joins: u64,
        pct_cost_diff: f64,
    ) -> Comparison {
        let pct_join_diff = if total_joins == 0 {
            0.0
        } else {
            100.0 * join_diff_count as f64 / total_joins as f64
        };
        let psts = (pct_join_diff != 0.0).then(|| pct_cost_diff / pct_join_diff);
        Comparison {
            baseline: baseline.to_string(),
            join_diff_count,
            total_joins,
            pct_join_diff,
            pct_cost_diff,
            psts,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub runs: Vec<QueryRun>,
    pub failures: Vec<QueryFailure>,
    pub aggregates: Option<Aggregates>,
    pub comparison: Option<Comparison>,
}

/// Full suite result.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    /// Cost semantics reminder; see [`COST_NOTE`].
    pub note: &'static str,
    pub parallelism: u32,
    pub network_weight: f64,
    pub baseline: String,
    pub strategies: Vec<StrategyReport>,
}

/// Do two decisions differ, treating shuffle hash and shuffle sort as one
/// family? Both co-partition the inputs; the distinction is local and does
/// not reshape the plan.
pub fn methods_differ(a: JoinMethod, b: JoinMethod) -> bool {
    fn family(method: JoinMethod) -> u8 {
        match method {
            JoinMethod::BroadcastHash => 0,
            JoinMethod::ShuffleHash | JoinMethod::ShuffleSort => 1,
            JoinMethod::BroadcastNestedLoop => 2,
            JoinMethod::CartesianProduct => 3,
        }
    }
    family(a) != family(b)
}

/// Final method of every join in a run, in join order: the adaptive
/// revision where one happened, the static decision otherwise.
fn final_methods(log: &DecisionLog) -> Vec<JoinMethod> {
    let mut methods: BTreeMap<u32, JoinMethod> = BTreeMap::new();
    for record in &log.records {
        methods.insert(record.join_id, record.method);
    }
    methods.into_values().collect()
}

/// Execute every (query, strategy) pair adaptively and assemble the
/// report. The baseline runs too if it is not already among the
/// strategies. A query that fails under a strategy is recorded and the
/// query is excluded from that strategy's aggregates and from every
/// pairwise comparison involving it, keeping comparisons symmetric.
pub fn run_suite(
    suite: &Suite,
    params: &ClusterParams,
    options: &PlannerOptions,
) -> Result<SuiteReport> {
    params.validate()?;
    let mut datasets: BTreeMap<String, Dataset> = BTreeMap::new();
    for spec in &suite.generators {
        let dataset = generate(spec, params.parallelism)?;
        if datasets.insert(spec.name.clone(), dataset).is_some() {
            return Err(Error::Schema(format!("duplicate generator for source {}", spec.name)));
        }
    }

    let mut strategies = suite.strategies.clone();
    if !strategies.iter().any(|s| s.spec_string() == suite.baseline.spec_string()) {
        strategies.push(suite.baseline);
    }

    let mut reports: Vec<StrategyReport> = Vec::new();
    for strategy in &strategies {
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for query in &suite.queries {
            match run_query(query, &datasets, *strategy, params, options) {
                Ok(run) => runs.push(run),
                Err(err) => failures
                    .push(QueryFailure { query: query.name.clone(), error: err.to_string() }),
            }
        }
        let totals: Vec<f64> = runs.iter().map(|r| r.weighted_total).collect();
        reports.push(StrategyReport {
            strategy: strategy.spec_string(),
            runs,
            failures,
            aggregates: Aggregates::over(&totals),
            comparison: None,
        });
    }

    let baseline_name = suite.baseline.spec_string();
    let baseline_runs: BTreeMap<String, QueryRun> = reports
        .iter()
        .find(|r| r.strategy == baseline_name)
        .expect("baseline always runs")
        .runs
        .iter()
        .map(|r| (r.query.clone(), r.clone()))
        .collect();
    for report in &mut reports {
        let mut join_diff = 0u64;
        let mut total_joins = 0u64;
        let mut base_total = 0.0f64;
        let mut this_total = 0.0f64;
        for run in &report.runs {
            let Some(base) = baseline_runs.get(&run.query) else { continue };
            total_joins += base.decision_vector.len() as u64;
            join_diff += run
                .decision_vector
                .iter()
                .zip(&base.decision_vector)
                .filter(|(a, b)| methods_differ(**a, **b))
                .count() as u64;
            base_total += base.weighted_total;
            this_total += run.weighted_total;
        }
        let pct_cost_diff = if base_total == 0.0 {
            0.0
        } else {
            100.0 * (base_total - this_total) / base_total
        };
        report.comparison =
            Some(Comparison::new(&baseline_name, join_diff, total_joins, pct_cost_diff));
    }

    Ok(SuiteReport {
        note: COST_NOTE,
        parallelism: params.parallelism,
        network_weight: params.network_weight,
        baseline: baseline_name,
        strategies: reports,
    })
}

fn run_query(
    query: &SuiteQuery,
    datasets: &BTreeMap<String, Dataset>,
    strategy: Strategy,
    params: &ClusterParams,
    options: &PlannerOptions,
) -> Result<QueryRun> {
    let sources: Vec<Dataset> = query
        .plan
        .source_names()
        .iter()
        .filter_map(|name| datasets.get(name).cloned())
        .collect();
    let (_, trace, log) = execute_adaptive(
        &query.plan,
        &sources,
        params,
        strategy,
        ExecutionMode::Adaptive,
        options,
    )?;
    Ok(QueryRun {
        query: query.name.clone(),
        total_network_bytes: trace.network_bytes(),
        total_compute_units: trace.compute_units(),
        weighted_total: trace.weighted_total(params.network_weight),
        decision_vector: final_methods(&log),
        changed_decisions: log.changed_decisions().len(),
    })
}

/// Human-readable rendering of a suite report.
pub fn render_text(report: &SuiteReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "suite report (p={}, w={}, baseline={})\n",
        report.parallelism, report.network_weight, report.baseline
    ));
    out.push_str(&format!("note: {}\n\n", report.note));
    for strategy in &report.strategies {
        out.push_str(&format!(
            "{}: {} ok, {} failed\n",
            strategy.strategy,
            strategy.runs.len(),
            strategy.failures.len()
        ));
        if let Some(agg) = &strategy.aggregates {
            out.push_str(&format!(
                "  weighted totals: mean {:.3e}, min {:.3e}, max {:.3e}, stddev {:.3e}\n",
                agg.mean, agg.min, agg.max, agg.stddev
            ));
        }
        if let Some(cmp) = &strategy.comparison {
            out.push_str(&format!(
                "  vs {}: joins differing {}/{} ({:.1}%), cost diff {:+.1}%",
                cmp.baseline,
                cmp.join_diff_count,
                cmp.total_joins,
                cmp.pct_join_diff,
                cmp.pct_cost_diff
            ));
            match cmp.psts {
                Some(p) => out.push_str(&format!(", psts {p:.2}\n")),
                None => out.push('\n'),
            }
        }
        for failure in &strategy.failures {
            out.push_str(&format!("  failed {}: {}\n", failure.query, failure.error));
        }
        out.push('\n');
    }
    out
}

/// Bytes per row in the synthetic suite (8 key bytes + payload).
const SUITE_ROW_BYTES: u64 = 1_000;

/// `(relative size k, build side bytes)` per synthetic query. The k values
/// spread log-like over [2, 400] around the default threshold k0 = 39; the
/// build sizes span the 10 MB absolute-size threshold in both directions,
/// so the absolute-size rule and the relative-size rule disagree on a
/// known subset (small-k/small-build and large-k/large-build queries).
const SUITE_SHAPES: [(u64, u64); 20] = [
    (2, 500_000),
    (3, 1_000_000),
    (5, 2_000_000),
    (8, 800_000),
    (10, 3_000_000),
    (15, 1_500_000),
    (20, 5_000_000),
    (25, 2_500_000),
    (30, 8_000_000),
    (35, 4_000_000),
    (45, 500_000),
    (60, 1_200_000),
    (80, 900_000),
    (120, 600_000),
    (200, 400_000),
    (400, 250_000),
    (3, 12_000_000),
    (6, 15_000_000),
    (45, 11_000_000),
    (60, 12_000_000),
];

/// The built-in 20-query suite: single equality inner joins of two scans
/// with exact declared statistics (the generators produce precisely the
/// declared sizes), sized so every method is feasible everywhere.
pub fn synthetic_suite() -> Suite {
    let mut queries = Vec::new();
    let mut generators = Vec::new();
    for (i, (k, build_bytes)) in SUITE_SHAPES.iter().enumerate() {
        let build_rows = build_bytes / SUITE_ROW_BYTES;
        let probe_rows = k * build_rows;
        let probe_name = format!("A{:02}", i + 1);
        let build_name = format!("B{:02}", i + 1);
        let plan = PlanBuilder::join_two_scans(
            &probe_name,
            Some(DatasetStats::new(probe_rows * SUITE_ROW_BYTES, probe_rows).unwrap()),
            &build_name,
            Some(DatasetStats::new(build_rows * SUITE_ROW_BYTES, build_rows).unwrap()),
            JoinType::Inner,
            JoinCondition::Equi,
        );
        queries.push(SuiteQuery { name: format!("q{:02}", i + 1), plan });
        for (name, rows, seed) in
            [(probe_name, probe_rows, 1_000 + i as u64), (build_name, build_rows, 2_000 + i as u64)]
        {
            generators.push(GeneratorSpec {
                name,
                cardinality: rows,
                row_payload_bytes: SUITE_ROW_BYTES - crate::simulator::KEY_BYTES,
                key_distribution: KeyDistribution::Uniform { domain: build_rows },
                initial_partition_skew: PartitionSkew::Uniform,
                seed,
            });
        }
    }
    Suite {
        queries,
        generators,
        strategies: vec![
            Strategy::reljoin(),
            Strategy::parse("absolute_size").expect("known strategy"),
            Strategy::parse("shuffle_hash").expect("known strategy"),
            Strategy::parse("shuffle_sort").expect("known strategy"),
        ],
        baseline: Strategy::parse("absolute_size").expect("known strategy"),
    }
}

/// Write the synthetic suite to `dir` as a manifest plus plan files, the
/// same layout [`load_manifest`] reads.
pub fn write_suite(suite: &Suite, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("plans"))?;
    let mut refs = Vec::new();
    for query in &suite.queries {
        let rel = format!("plans/{}.json", query.name);
        fs::write(dir.join(&rel), serialize_plan(&query.plan)?)?;
        refs.push(QueryRef { name: query.name.clone(), plan: rel });
    }
    #[derive(Serialize)]
    struct ManifestOut<'a> {
        queries: &'a [QueryRef],
        generators: &'a [GeneratorSpec],
        strategies: Vec<String>,
        baseline: String,
    }
    let manifest = ManifestOut {
        queries: &refs,
        generators: &suite.generators,
        strategies: suite.strategies.iter().map(|s| s.spec_string()).collect(),
        baseline: suite.baseline.spec_string(),
    };
    fs::write(dir.join("suite.json"), crate::json::to_canonical_string(&manifest)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psts_relates_cost_savings_to_decision_changes() {
        let cmp = Comparison::new("absolute_size", 66, 629, 20.8);
        assert!((cmp.pct_join_diff - 10.4928).abs() < 1e-3);
        let psts = cmp.psts.unwrap();
        assert!((psts - 1.98).abs() < 0.01, "psts {psts}");
    }

    #[test]
    fn psts_is_absent_when_no_decisions_differ() {
        let cmp = Comparison::new("absolute_size", 0, 100, 5.0);
        assert_eq!(cmp.pct_join_diff, 0.0);
        assert!(cmp.psts.is_none());
        let empty = Comparison::new("absolute_size", 0, 0, 0.0);
        assert!(empty.psts.is_none());
    }

    #[test]
    fn shuffle_methods_count_as_one_family() {
        assert!(!methods_differ(JoinMethod::ShuffleHash, JoinMethod::ShuffleSort));
        assert!(!methods_differ(JoinMethod::ShuffleHash, JoinMethod::ShuffleHash));
        assert!(methods_differ(JoinMethod::BroadcastHash, JoinMethod::ShuffleHash));
        assert!(methods_differ(JoinMethod::BroadcastNestedLoop, JoinMethod::CartesianProduct));
    }

    #[test]
    fn synthetic_suite_declares_exactly_what_it_generates() {
        let suite = synthetic_suite();
        assert_eq!(suite.queries.len(), 20);
        assert_eq!(suite.generators.len(), 40);
        let by_name: BTreeMap<&str, &GeneratorSpec> =
            suite.generators.iter().map(|g| (g.name.as_str(), g)).collect();
        for query in &suite.queries {
            assert_eq!(query.plan.join_count(), 1);
            for name in query.plan.source_names() {
                let spec = by_name[name.as_str()];
                let row_bytes = crate::simulator::KEY_BYTES + spec.row_payload_bytes;
                assert_eq!(row_bytes, SUITE_ROW_BYTES);
                // Declared scan statistics match the generator output.
                let crate::plan::LogicalOp::Join { left, right, .. } = &query.plan.root.op
                else {
                    panic!("suite queries are single joins");
                };
                for side in [left, right] {
                    if let crate::plan::LogicalOp::Scan { name: n, stats } = &side.op {
                        if *n == name {
                            let stats = stats.expect("suite scans declare stats");
                            assert_eq!(stats.cardinality(), spec.cardinality);
                            assert_eq!(stats.size_bytes(), spec.cardinality * row_bytes);
                        }
                    }
                }
            }
        }
        // Build sides span the absolute-size threshold in both directions.
        assert!(SUITE_SHAPES.iter().any(|(_, b)| *b > 10_000_000));
        assert!(SUITE_SHAPES.iter().any(|(_, b)| *b <= 10_000_000));
    }

    #[test]
    fn tiny_suite_runs_end_to_end_and_compares_against_the_baseline() {
        let mut queries = Vec::new();
        let mut generators = Vec::new();
        for (i, (k, build_rows)) in [(30u64, 20u64), (2, 50)].into_iter().enumerate() {
            let probe = format!("P{i}");
            let build = format!("Q{i}");
            let probe_rows = k * build_rows;
            queries.push(SuiteQuery {
                name: format!("t{i}"),
                plan: PlanBuilder::join_two_scans(
                    &probe,
                    Some(DatasetStats::new(probe_rows * 100, probe_rows).unwrap()),
                    &build,
                    Some(DatasetStats::new(build_rows * 100, build_rows).unwrap()),
                    JoinType::Inner,
                    JoinCondition::Equi,
                ),
            });
            for (name, rows, seed) in [(probe, probe_rows, 10 + i as u64), (build, build_rows, 20 + i as u64)] {
                generators.push(GeneratorSpec {
                    name,
                    cardinality: rows,
                    row_payload_bytes: 92,
                    key_distribution: KeyDistribution::Uniform { domain: build_rows },
                    initial_partition_skew: PartitionSkew::Uniform,
                    seed,
                });
            }
        }
        let suite = Suite {
            queries,
            generators,
            strategies: vec![Strategy::reljoin(), Strategy::parse("shuffle_sort").unwrap()],
            baseline: Strategy::parse("absolute_size").unwrap(),
        };
        let params = ClusterParams { parallelism: 4, ..ClusterParams::default() };
        let report = run_suite(&suite, &params, &PlannerOptions::default()).unwrap();

        // The baseline was appended automatically.
        assert_eq!(report.strategies.len(), 3);
        assert_eq!(report.baseline, "absolute_size");
        for strategy in &report.strategies {
            assert_eq!(strategy.runs.len(), 2);
            assert!(strategy.failures.is_empty());
            assert!(strategy.aggregates.is_some());
            let cmp = strategy.comparison.as_ref().unwrap();
            assert_eq!(cmp.total_joins, 2);
            if strategy.strategy == "absolute_size" {
                assert_eq!(cmp.join_diff_count, 0);
                assert!(cmp.psts.is_none());
            }
        }
        // Both query sizes are far below the absolute threshold, so the
        // baseline broadcasts both; the forced shuffle sort differs twice.
        let sorted = report
            .strategies
            .iter()
            .find(|s| s.strategy == "shuffle_sort")
            .unwrap();
        assert_eq!(sorted.comparison.as_ref().unwrap().join_diff_count, 2);

        let text = render_text(&report);
        assert!(text.contains("not wall-clock time"));
        assert!(text.contains("vs absolute_size"));
    }

    #[test]
    fn failing_queries_are_recorded_and_excluded_from_comparisons() {
        let good_plan = PlanBuilder::join_two_scans(
            "S",
            Some(DatasetStats::new(10_000, 100).unwrap()),
            "T",
            Some(DatasetStats::new(2_000, 20).unwrap()),
            JoinType::Inner,
            JoinCondition::Equi,
        );
        let bad_plan = PlanBuilder::join_two_scans(
            "S",
            Some(DatasetStats::new(10_000, 100).unwrap()),
            "missing",
            Some(DatasetStats::new(2_000, 20).unwrap()),
            JoinType::Inner,
            JoinCondition::Equi,
        );
        let mut generators = Vec::new();
        for (name, rows, seed) in [("S", 100u64, 1u64), ("T", 20, 2)] {
            generators.push(GeneratorSpec {
                name: name.into(),
                cardinality: rows,
                row_payload_bytes: 92,
                key_distribution: KeyDistribution::Uniform { domain: 20 },
                initial_partition_skew: PartitionSkew::Uniform,
                seed,
            });
        }
        let suite = Suite {
            queries: vec![
                SuiteQuery { name: "good".into(), plan: good_plan },
                SuiteQuery { name: "bad".into(), plan: bad_plan },
            ],
            generators,
            strategies: vec![Strategy::reljoin()],
            baseline: Strategy::parse("absolute_size").unwrap(),
        };
        let params = ClusterParams { parallelism: 4, ..ClusterParams::default() };
        let report = run_suite(&suite, &params, &PlannerOptions::default()).unwrap();
        for strategy in &report.strategies {
            assert_eq!(strategy.runs.len(), 1);
            assert_eq!(strategy.failures.len(), 1);
            assert_eq!(strategy.failures[0].query, "bad");
            // Only the surviving query enters the comparison.
            assert_eq!(strategy.comparison.as_ref().unwrap().total_joins, 1);
        }
        let text = render_text(&report);
        assert!(text.contains("failed bad"));
    }

    #[test]
    fn suite_round_trips_through_the_manifest_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut suite = synthetic_suite();
        // Keep the round-trip test light: two queries are enough to prove
        // the layout.
        suite.queries.truncate(2);
        suite.generators.truncate(4);
        write_suite(&suite, dir.path()).unwrap();
        let loaded = load_manifest(&dir.path().join("suite.json")).unwrap();
        assert_eq!(loaded.queries.len(), 2);
        assert_eq!(loaded.generators.len(), 4);
        assert_eq!(loaded.queries[0].name, suite.queries[0].name);
        assert_eq!(loaded.queries[0].plan, suite.queries[0].plan);
        assert_eq!(loaded.generators, suite.generators);
        assert_eq!(loaded.baseline.spec_string(), "absolute_size");
        assert_eq!(loaded.strategies.len(), 4);
    }
}
