//! Command-line front end.
//!
//! One binary, five subcommands: `explain` prints the per-method cost table
//! for a single join, `optimize` plans a query statically and emits the
//! physical plan JSON, `run` executes a plan against generated datasets
//! (adaptively unless `--static`), `gen` writes the built-in benchmark
//! suite to disk, and `bench` runs a suite manifest and prints the strategy
//! comparison.
//!
//! Settings resolve in precedence order: command-line flags beat the
//! optional JSON config file named by the `RELJOIN_CONFIG` environment
//! variable, which beats built-in defaults. Data goes to standard output
//! (or `--out FILE`), diagnostics to standard error. `--json` switches
//! every command to canonical JSON: sorted keys, fixed layout,
//! byte-identical across runs with identical inputs and seeds.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input (schema,
//! statistics, infeasible hint), 3 execution failure (budget, unbound
//! source, conflicting re-optimization).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::bench;
use crate::cost::{
    k0_threshold, relative_size, total_cost, ClusterParams, ALL_METHODS,
    DEFAULT_MEMORY_BUDGET_BYTES, DEFAULT_NETWORK_WEIGHT, DEFAULT_NODES, DEFAULT_PARALLELISM,
};
use crate::error::Result;
use crate::json::to_canonical_string;
use crate::optimizer::{
    execute_adaptive, optimize_static, ExecutionMode, PlannerOptions,
};
use crate::plan::{
    parse_plan, segment_stages, serialize_physical_plan, JoinCondition, JoinType, PhysicalOp,
    PlanBuilder,
};
use crate::selector::{is_feasible, normalize};
use crate::simulator::{generate, Dataset, GeneratorSpec};
use crate::stats::{DatasetStats, StatsValidity, DEFAULT_WATERMARK_BYTES};
use crate::strategies::{parse_size, Strategy};

/// Environment variable naming an optional JSON config file.
pub const CONFIG_ENV_VAR: &str = "RELJOIN_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "reljoin",
    version,
    about = "Cost-based distributed join selection with a deterministic workload simulator"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Selection strategy: reljoin[:W], absolute-size[:SIZE], shuffle-hash,
    /// shuffle-sort.
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Number of parallel tasks per stage (p).
    #[arg(long, global = true)]
    parallelism: Option<u32>,
    /// Number of worker nodes (informational).
    #[arg(long, global = true)]
    nodes: Option<u32>,
    /// Relative cost of moving one byte over the network.
    #[arg(long = "w", global = true)]
    network_weight: Option<f64>,
    /// Per-task memory available for hash builds (human units: 512MB, 1GB).
    #[arg(long, global = true)]
    memory_budget: Option<String>,
    /// Largest declared size still trusted for planning (human units).
    #[arg(long, global = true)]
    watermark: Option<String>,
    /// Override generator seeds; the i-th generator runs with seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Emit canonical JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Write output to a file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Always shuffle, even into an exchange whose input is already
    /// partitioned the right way.
    #[arg(long, global = true)]
    no_exchange_reuse: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the built-in benchmark suite (manifest, plans, generators) to
    /// a directory.
    Gen {
        /// Target directory for suite.json and plans/.
        #[arg(long, default_value = "suite")]
        dir: PathBuf,
    },
    /// Plan a query statically and emit the physical plan as canonical
    /// JSON.
    Optimize {
        /// Logical plan JSON file.
        plan: PathBuf,
    },
    /// Show the per-method cost table for one join.
    #[command(group = ArgGroup::new("input").required(true).args(["plan", "left_size"]))]
    Explain {
        /// Logical plan JSON file; explains every join in the plan.
        #[arg(long, conflicts_with_all = ["left_size", "right_size"])]
        plan: Option<PathBuf>,
        /// Left input size for an ad-hoc equi inner join (human units).
        #[arg(long, requires = "right_size")]
        left_size: Option<String>,
        /// Right input size for an ad-hoc equi inner join (human units).
        #[arg(long, requires = "left_size")]
        right_size: Option<String>,
        /// Left row count (default: size / 100).
        #[arg(long, requires = "left_size")]
        left_rows: Option<u64>,
        /// Right row count (default: size / 100).
        #[arg(long, requires = "right_size")]
        right_rows: Option<u64>,
    },
    /// Execute a plan against generated datasets and report the workload.
    Run {
        /// Logical plan JSON file.
        plan: PathBuf,
        /// Generator spec JSON file; repeat once per source.
        #[arg(long = "source")]
        sources: Vec<PathBuf>,
        /// Execute the static plan verbatim, without adaptive
        /// re-selection.
        #[arg(long = "static")]
        static_mode: bool,
        /// Include the full per-task trace in JSON output.
        #[arg(long)]
        full_trace: bool,
    },
    /// Run a benchmark suite manifest and compare strategies.
    Bench {
        /// Suite manifest JSON file.
        suite: PathBuf,
    },
}

/// Optional JSON config file named by [`CONFIG_ENV_VAR`]. All fields are
/// optional; sizes use the same human units as the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    strategy: Option<String>,
    parallelism: Option<u32>,
    nodes: Option<u32>,
    network_weight: Option<f64>,
    memory_budget: Option<String>,
    watermark: Option<String>,
    exchange_reuse: Option<bool>,
}

fn load_config() -> Result<ConfigFile> {
    match std::env::var_os(CONFIG_ENV_VAR) {
        Some(path) => Ok(serde_json::from_str(&fs::read_to_string(path)?)?),
        None => Ok(ConfigFile::default()),
    }
}

/// Fully resolved settings: flags over config file over defaults.
#[derive(Debug)]
struct Settings {
    params: ClusterParams,
    strategy: Strategy,
    options: PlannerOptions,
    seed: Option<u64>,
    json: bool,
    out: Option<PathBuf>,
}

impl Settings {
    fn resolve(args: &CommonArgs) -> Result<Settings> {
        Settings::resolve_with(args, load_config()?)
    }

    fn resolve_with(args: &CommonArgs, config: ConfigFile) -> Result<Settings> {
        let pick_size = |flag: &Option<String>, file: &Option<String>, default: u64| {
            match flag.as_deref().or(file.as_deref()) {
                Some(text) => parse_size(text),
                None => Ok(default),
            }
        };
        let params = ClusterParams {
            parallelism: args
                .parallelism
                .or(config.parallelism)
                .unwrap_or(DEFAULT_PARALLELISM),
            nodes: args.nodes.or(config.nodes).unwrap_or(DEFAULT_NODES),
            network_weight: args
                .network_weight
                .or(config.network_weight)
                .unwrap_or(DEFAULT_NETWORK_WEIGHT),
            memory_budget_bytes: pick_size(
                &args.memory_budget,
                &config.memory_budget,
                DEFAULT_MEMORY_BUDGET_BYTES,
            )?,
        };
        params.validate()?;
        let strategy = match args.strategy.as_deref().or(config.strategy.as_deref()) {
            Some(text) => Strategy::parse(text)?,
            None => Strategy::reljoin(),
        };
        let options = PlannerOptions {
            exchange_reuse: if args.no_exchange_reuse {
                false
            } else {
                config.exchange_reuse.unwrap_or(true)
            },
            validity: StatsValidity::new(pick_size(
                &args.watermark,
                &config.watermark,
                DEFAULT_WATERMARK_BYTES,
            )?)?,
        };
        Ok(Settings {
            params,
            strategy,
            options,
            seed: args.seed,
            json: args.json,
            out: args.out.clone(),
        })
    }
}

/// One command's output in both renderings.
struct Document {
    json: Value,
    text: String,
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version arrive as errors but are not failures.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match try_main(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn try_main(cli: Cli) -> Result<()> {
    let settings = Settings::resolve(&cli.common)?;
    let document = match &cli.command {
        Command::Gen { dir } => cmd_gen(dir)?,
        Command::Optimize { plan } => cmd_optimize(plan, &settings)?,
        Command::Explain { plan: Some(path), .. } => cmd_explain_plan(path, &settings)?,
        Command::Explain { left_size, right_size, left_rows, right_rows, .. } => cmd_explain_sizes(
            left_size.as_deref().unwrap_or_default(),
            right_size.as_deref().unwrap_or_default(),
            *left_rows,
            *right_rows,
            &settings,
        )?,
        Command::Run { plan, sources, static_mode, full_trace } => {
            cmd_run(plan, sources, *static_mode, *full_trace, &settings)?
        }
        Command::Bench { suite } => cmd_bench(suite, &settings)?,
    };
    let rendered = if settings.json {
        to_canonical_string(&document.json)?
    } else {
        document.text
    };
    match &settings.out {
        Some(path) => fs::write(path, rendered.as_bytes())?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_gen(dir: &Path) -> Result<Document> {
    let suite = bench::synthetic_suite();
    bench::write_suite(&suite, dir)?;
    let strategies: Vec<String> = suite.strategies.iter().map(Strategy::spec_string).collect();
    Ok(Document {
        json: json!({
            "dir": dir.display().to_string(),
            "queries": suite.queries.len(),
            "generators": suite.generators.len(),
            "strategies": strategies,
            "baseline": suite.baseline.spec_string(),
        }),
        text: format!(
            "wrote {} queries, {} generators to {}\n",
            suite.queries.len(),
            suite.generators.len(),
            dir.join("suite.json").display()
        ),
    })
}

fn cmd_optimize(path: &Path, settings: &Settings) -> Result<Document> {
    let plan = parse_plan(&fs::read_to_string(path)?)?;
    let physical = optimize_static(&plan, &settings.params, settings.strategy, &settings.options)?;
    // The physical plan is the data product in either mode.
    let text = serialize_physical_plan(&physical)?;
    let json: Value = serde_json::from_str(&text)?;
    Ok(Document { json, text })
}

/// Default row count for ad-hoc explain inputs: 100-byte rows.
fn default_rows(size_bytes: u64) -> u64 {
    if size_bytes == 0 {
        0
    } else {
        (size_bytes / 100).max(1)
    }
}

fn cmd_explain_sizes(
    left_size: &str,
    right_size: &str,
    left_rows: Option<u64>,
    right_rows: Option<u64>,
    settings: &Settings,
) -> Result<Document> {
    let left_bytes = parse_size(left_size)?;
    let right_bytes = parse_size(right_size)?;
    let left = DatasetStats::new(left_bytes, left_rows.unwrap_or_else(|| default_rows(left_bytes)))?;
    let right =
        DatasetStats::new(right_bytes, right_rows.unwrap_or_else(|| default_rows(right_bytes)))?;
    let spec = PlanBuilder::spec(JoinType::Inner, JoinCondition::Equi);
    let effective = settings.strategy.effective_params(&settings.params);
    let sides = normalize(left, right);
    let chosen = crate::strategies::decide(
        settings.strategy,
        &spec,
        Some(&sides.probe),
        Some(&sides.build),
        &settings.params,
    )?;
    let k = relative_size(&sides.probe, &sides.build);
    let k0 = k0_threshold(&effective);

    let mut methods = Vec::new();
    let mut lines = String::new();
    lines += &format!("strategy: {}\n", settings.strategy.spec_string());
    lines += &format!("left:  {} bytes, {} rows\n", left.size_bytes(), left.cardinality());
    lines += &format!("right: {} bytes, {} rows\n", right.size_bytes(), right.cardinality());
    lines += &format!(
        "build side: {}, k = {}, k0 = {:.2} (p={}, w={})\n",
        if sides.flipped { "left" } else { "right" },
        k.map_or("?".to_string(), |k| format!("{k:.2}")),
        k0,
        effective.parallelism,
        effective.network_weight,
    );
    lines += &format!(
        "{:<22} {:>18} {:>18} {:>18}\n",
        "method", "network_workload", "compute_workload", "weighted_total"
    );
    for method in ALL_METHODS {
        if is_feasible(method, &spec, Some(&sides.build), &effective) {
            let cost = total_cost(method, &sides.probe, &sides.build, &effective)?;
            let marker = if method == chosen { "  * chosen" } else { "" };
            lines += &format!(
                "{:<22} {:>18.1} {:>18.1} {:>18.1}{}\n",
                method.name(),
                cost.network_workload,
                cost.compute_workload,
                cost.weighted_total,
                marker
            );
            methods.push(json!({
                "method": method.name(),
                "feasible": true,
                "network_workload": cost.network_workload,
                "compute_workload": cost.compute_workload,
                "weighted_total": cost.weighted_total,
                "chosen": method == chosen,
            }));
        } else {
            lines += &format!("{:<22} {:>18}\n", method.name(), "infeasible");
            methods.push(json!({
                "method": method.name(),
                "feasible": false,
                "chosen": false,
            }));
        }
    }
    Ok(Document {
        json: json!({
            "strategy": settings.strategy.spec_string(),
            "left": left,
            "right": right,
            "build_side": if sides.flipped { "left" } else { "right" },
            "k": k,
            "k0": k0,
            "parallelism": effective.parallelism,
            "network_weight": effective.network_weight,
            "chosen": chosen.name(),
            "methods": methods,
        }),
        text: lines,
    })
}

fn cmd_explain_plan(path: &Path, settings: &Settings) -> Result<Document> {
    let plan = parse_plan(&fs::read_to_string(path)?)?;
    let physical = optimize_static(&plan, &settings.params, settings.strategy, &settings.options)?;
    let stages = segment_stages(&physical);
    let mut joins = Vec::new();
    let mut lines = format!("strategy: {}\n", settings.strategy.spec_string());
    for node in physical.joins() {
        if let PhysicalOp::LocalJoin { spec, method, flipped, annotation, .. } = &node.op {
            lines += &format!(
                "join {}: {}{}, k = {}, k0 = {:.2}\n",
                spec.join_id,
                method.name(),
                if *flipped { " (sides swapped)" } else { "" },
                annotation.k.map_or("?".to_string(), |k| format!("{k:.2}")),
                annotation.k0,
            );
            for (name, weighted) in &annotation.candidate_costs {
                lines += &format!("  {:<22} {:>18.1}\n", name, weighted);
            }
            joins.push(json!({
                "join_id": spec.join_id,
                "method": method.name(),
                "flipped": flipped,
                "k": annotation.k,
                "k0": annotation.k0,
                "cost": annotation.cost,
                "candidates": annotation.candidate_costs,
            }));
        }
    }
    lines += &format!(
        "stages: {}, exchanges: {}\n",
        stages.len(),
        physical.exchanges().len()
    );
    Ok(Document {
        json: json!({
            "strategy": settings.strategy.spec_string(),
            "joins": joins,
            "stages": stages.len(),
            "exchanges": physical.exchanges().len(),
        }),
        text: lines,
    })
}

fn cmd_run(
    path: &Path,
    source_paths: &[PathBuf],
    static_mode: bool,
    full_trace: bool,
    settings: &Settings,
) -> Result<Document> {
    let plan = parse_plan(&fs::read_to_string(path)?)?;
    let mut specs = Vec::new();
    for source in source_paths {
        let spec: GeneratorSpec = serde_json::from_str(&fs::read_to_string(source)?)?;
        specs.push(spec);
    }
    if let Some(seed) = settings.seed {
        for (index, spec) in specs.iter_mut().enumerate() {
            spec.seed = seed + index as u64;
        }
    }
    let sources: Vec<Dataset> = specs
        .iter()
        .map(|spec| generate(spec, settings.params.parallelism))
        .collect::<Result<_>>()?;
    let mode = if static_mode { ExecutionMode::Static } else { ExecutionMode::Adaptive };
    let (output, trace, log) = execute_adaptive(
        &plan,
        &sources,
        &settings.params,
        settings.strategy,
        mode,
        &settings.options,
    )?;

    let mode_name = if static_mode { "static" } else { "adaptive" };
    let changed: Vec<Value> = log
        .changed_decisions()
        .iter()
        .map(|(join_id, from, to)| {
            json!({ "join_id": join_id, "from": from.name(), "to": to.name() })
        })
        .collect();
    let mut doc = json!({
        "mode": mode_name,
        "strategy": settings.strategy.spec_string(),
        "network_bytes": trace.network_bytes(),
        "compute_units": trace.compute_units(),
        "weighted_total": trace.weighted_total(settings.params.network_weight),
        "output": output.stats(),
        "decisions": log,
        "changed_decisions": changed,
    });
    if full_trace {
        doc["trace"] = serde_json::to_value(&trace)?;
    }

    let mut lines = String::new();
    lines += &format!("mode: {mode_name}\n");
    lines += &format!("strategy: {}\n", settings.strategy.spec_string());
    let mut statics = std::collections::BTreeMap::new();
    let mut finals = std::collections::BTreeMap::new();
    for record in &log.records {
        if record.phase == "static" {
            statics.insert(record.join_id, record.method);
        }
        finals.insert(record.join_id, record.method);
    }
    for (join_id, final_method) in &finals {
        let static_method = statics.get(join_id).copied().unwrap_or(*final_method);
        let note = if static_method == *final_method { "" } else { " (changed)" };
        lines += &format!(
            "join {}: static={} final={}{}\n",
            join_id,
            static_method.name(),
            final_method.name(),
            note
        );
    }
    lines += &format!("network bytes: {}\n", trace.network_bytes());
    lines += &format!("compute units: {:.1}\n", trace.compute_units());
    lines += &format!(
        "weighted total: {:.1}\n",
        trace.weighted_total(settings.params.network_weight)
    );
    lines += &format!(
        "output: {} rows, {} bytes\n",
        output.stats().cardinality(),
        output.stats().size_bytes()
    );
    Ok(Document { json: doc, text: lines })
}

fn cmd_bench(path: &Path, settings: &Settings) -> Result<Document> {
    let mut suite = bench::load_manifest(path)?;
    if let Some(seed) = settings.seed {
        for (index, generator) in suite.generators.iter_mut().enumerate() {
            generator.seed = seed + index as u64;
        }
    }
    let report = bench::run_suite(&suite, &settings.params, &settings.options)?;
    Ok(Document {
        json: serde_json::to_value(&report)?,
        text: bench::render_text(&report),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn common(argv: &[&str]) -> CommonArgs {
        Cli::try_parse_from(argv).expect("argv parses").common
    }

    #[test]
    fn flags_override_config_file_which_overrides_defaults() {
        let args = common(&["reljoin", "--parallelism", "8", "--w", "2.5", "gen"]);
        let config = ConfigFile {
            parallelism: Some(4),
            network_weight: Some(0.5),
            memory_budget: Some("2GB".to_string()),
            exchange_reuse: Some(false),
            ..ConfigFile::default()
        };
        let settings = Settings::resolve_with(&args, config).unwrap();
        assert_eq!(settings.params.parallelism, 8);
        assert_eq!(settings.params.network_weight, 2.5);
        assert_eq!(settings.params.memory_budget_bytes, 2_000_000_000);
        assert_eq!(settings.params.nodes, DEFAULT_NODES);
        assert!(!settings.options.exchange_reuse);
    }

    #[test]
    fn defaults_match_the_documented_cluster() {
        let settings = Settings::resolve_with(&common(&["reljoin", "gen"]), ConfigFile::default())
            .unwrap();
        assert_eq!(settings.params.parallelism, 20);
        assert_eq!(settings.params.nodes, 5);
        assert_eq!(settings.params.network_weight, 1.0);
        assert_eq!(settings.params.memory_budget_bytes, 1_000_000_000);
        assert_eq!(settings.strategy, Strategy::reljoin());
        assert!(settings.options.exchange_reuse);
        assert!(!settings.json);
    }

    #[test]
    fn no_exchange_reuse_flag_beats_config_file() {
        let args = common(&["reljoin", "--no-exchange-reuse", "gen"]);
        let config = ConfigFile { exchange_reuse: Some(true), ..ConfigFile::default() };
        let settings = Settings::resolve_with(&args, config).unwrap();
        assert!(!settings.options.exchange_reuse);
    }

    #[test]
    fn strategy_resolution_prefers_the_flag() {
        let config = ConfigFile {
            strategy: Some("absolute-size:64MB".to_string()),
            ..ConfigFile::default()
        };
        let from_file =
            Settings::resolve_with(&common(&["reljoin", "gen"]), config).unwrap();
        assert_eq!(
            from_file.strategy,
            Strategy::AbsoluteSize { threshold_bytes: 64_000_000 }
        );

        let config = ConfigFile {
            strategy: Some("absolute-size:64MB".to_string()),
            ..ConfigFile::default()
        };
        let from_flag = Settings::resolve_with(
            &common(&["reljoin", "--strategy", "shuffle-sort", "gen"]),
            config,
        )
        .unwrap();
        assert_eq!(from_flag.strategy, Strategy::ShuffleSortForced);

        let bad = ConfigFile { strategy: Some("quantum".to_string()), ..ConfigFile::default() };
        assert!(Settings::resolve_with(&common(&["reljoin", "gen"]), bad).is_err());
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let err = serde_json::from_str::<ConfigFile>("{\"paralellism\": 4}");
        assert!(err.is_err());
    }

    #[test]
    fn ad_hoc_rows_default_to_hundred_byte_rows() {
        assert_eq!(default_rows(130_000), 1_300);
        assert_eq!(default_rows(50), 1);
        assert_eq!(default_rows(0), 0);
    }

    #[test]
    fn reference_explain_marks_broadcast_hash_at_45_2_mb() {
        let settings = Settings::resolve_with(&common(&["reljoin", "gen"]), ConfigFile::default())
            .unwrap();
        let doc = cmd_explain_sizes("40MB", "0.13MB", None, None, &settings).unwrap();
        let chosen_line = doc
            .text
            .lines()
            .find(|line| line.contains("* chosen"))
            .expect("one chosen line");
        assert!(chosen_line.starts_with("broadcast_hash"), "line: {chosen_line}");
        assert!(chosen_line.contains("45200000.0"), "line: {chosen_line}");
        let shuffle_line = doc
            .text
            .lines()
            .find(|line| line.starts_with("shuffle_hash"))
            .expect("shuffle hash line");
        assert!(shuffle_line.contains("78383500.0"), "line: {shuffle_line}");
        assert!(doc.text.contains("k0 = 39.00"));
        assert_eq!(doc.json["chosen"], "broadcast_hash");
    }

    #[test]
    fn explain_reports_infeasible_methods() {
        let args = common(&["reljoin", "--memory-budget", "1KB", "gen"]);
        let settings = Settings::resolve_with(&args, ConfigFile::default()).unwrap();
        let doc = cmd_explain_sizes("40MB", "0.13MB", None, None, &settings).unwrap();
        assert!(doc.text.contains("infeasible"));
        let methods = doc.json["methods"].as_array().unwrap();
        let bh = methods.iter().find(|m| m["method"] == "broadcast_hash").unwrap();
        assert_eq!(bh["feasible"], false);
    }
}
