//! Feasibility gates and the method-selection rules.
//!
//! Selection always runs over *normalized* sides: the probe side is the
//! larger input by size, the build side the smaller, with `flipped`
//! recording whether that swapped the logical orientation. The rules:
//!
//! * equi joins: broadcast hash when it is strictly cheaper than shuffle
//!   hash (equivalently `k = |A|/|B| > k0`) and the build side fits the
//!   per-task memory budget; otherwise shuffle hash when a partition of the
//!   build side fits; otherwise shuffle sort when the key is sortable;
//!   otherwise the nested-loop family.
//! * non-equi joins: inner joins pick the cheaper of the partitioned
//!   cartesian product and the broadcast nested loop (ties go to the
//!   partitioned plan); every other join type must broadcast and keep the
//!   preserved side intact, so it runs as a broadcast nested loop.
//!
//! When statistics are missing or untrusted, the size gates fail closed and
//! selection falls back to the safest shuffle-based method available.

use std::collections::BTreeMap;

use crate::cost::{total_cost, ClusterParams, JoinMethod, ALL_METHODS};
use crate::error::{Error, Result};
use crate::plan::{JoinSpec, JoinType};
use crate::stats::DatasetStats;

/// Sides of one join ordered for costing: `probe` is the larger input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedSides {
    pub probe: DatasetStats,
    pub build: DatasetStats,
    /// True when `probe` is the logical *right* input.
    pub flipped: bool,
}

/// Order two sides by size, larger first. Ties keep the logical
/// orientation so normalization is deterministic.
pub fn normalize(left: DatasetStats, right: DatasetStats) -> NormalizedSides {
    if right.size_bytes() > left.size_bytes() {
        NormalizedSides { probe: right, build: left, flipped: true }
    } else {
        NormalizedSides { probe: left, build: right, flipped: false }
    }
}

/// Structural gate: can this method express the join's condition and type
/// at all? Independent of statistics.
///
/// * hash and sort methods require an equality condition;
/// * broadcast hash additionally rejects full outer joins (a replicated
///   build side cannot preserve both inputs);
/// * shuffle sort requires a sortable key;
/// * the cartesian product supports inner-like joins only (inner, left
///   semi, left anti on equality; plain inner otherwise);
/// * the broadcast nested loop supports everything and is the universal
///   fallback.
pub fn supports_join(method: JoinMethod, spec: &JoinSpec) -> bool {
    match method {
        JoinMethod::BroadcastHash => {
            spec.condition.is_equi() && spec.join_type != JoinType::FullOuter
        }
        JoinMethod::ShuffleHash => spec.condition.is_equi(),
        JoinMethod::ShuffleSort => spec.condition.is_equi() && spec.key_sortable,
        JoinMethod::CartesianProduct => {
            if spec.condition.is_equi() {
                matches!(
                    spec.join_type,
                    JoinType::Inner | JoinType::LeftSemi | JoinType::LeftAnti
                )
            } else {
                spec.join_type == JoinType::Inner
            }
        }
        JoinMethod::BroadcastNestedLoop => true,
    }
}

/// Size gate: hash builds must fit the per-task memory budget. A broadcast
/// build is held in full by every task; a shuffled build is split `p` ways.
/// Unknown statistics fail closed.
pub fn fits_budget(
    method: JoinMethod,
    build: Option<&DatasetStats>,
    params: &ClusterParams,
) -> bool {
    match method {
        JoinMethod::BroadcastHash => {
            build.is_some_and(|b| b.size_bytes() <= params.memory_budget_bytes)
        }
        JoinMethod::ShuffleHash => build.is_some_and(|b| {
            b.size_bytes().div_ceil(params.parallelism as u64) <= params.memory_budget_bytes
        }),
        _ => true,
    }
}

/// Both gates at once.
pub fn is_feasible(
    method: JoinMethod,
    spec: &JoinSpec,
    build: Option<&DatasetStats>,
    params: &ClusterParams,
) -> bool {
    supports_join(method, spec) && fits_budget(method, build, params)
}

/// Check an explicit method hint. Structural violations always fail; the
/// memory gate is only enforced when the build side's size is known, since
/// a hint is a deliberate override and unknown statistics should not veto
/// it.
pub fn validate_hint(
    hint: JoinMethod,
    spec: &JoinSpec,
    build: Option<&DatasetStats>,
    params: &ClusterParams,
) -> Result<()> {
    if !supports_join(hint, spec) {
        return Err(Error::InfeasibleHint {
            hint,
            reason: format!(
                "{} does not support a {} join on a {} condition{}",
                hint.name(),
                spec.join_type.name(),
                spec.condition.name(),
                if spec.key_sortable { "" } else { " with unsortable keys" }
            ),
        });
    }
    if build.is_some() && !fits_budget(hint, build, params) {
        return Err(Error::InfeasibleHint {
            hint,
            reason: "build side exceeds the per-task memory budget".into(),
        });
    }
    Ok(())
}

/// Selection rule for equality joins with trusted statistics on both
/// normalized sides.
pub fn select_equi(
    spec: &JoinSpec,
    probe: &DatasetStats,
    build: &DatasetStats,
    params: &ClusterParams,
) -> Result<JoinMethod> {
    debug_assert!(spec.condition.is_equi());
    let broadcast = total_cost(JoinMethod::BroadcastHash, probe, build, params)?.weighted_total;
    let shuffle = total_cost(JoinMethod::ShuffleHash, probe, build, params)?.weighted_total;

    if broadcast < shuffle && is_feasible(JoinMethod::BroadcastHash, spec, Some(build), params) {
        return Ok(JoinMethod::BroadcastHash);
    }
    if is_feasible(JoinMethod::ShuffleHash, spec, Some(build), params) {
        return Ok(JoinMethod::ShuffleHash);
    }
    if is_feasible(JoinMethod::ShuffleSort, spec, Some(build), params) {
        return Ok(JoinMethod::ShuffleSort);
    }
    select_nested_loop_family(spec, probe, build, params)
}

/// Selection rule for non-equality joins with trusted statistics.
pub fn select_non_equi(
    spec: &JoinSpec,
    probe: &DatasetStats,
    build: &DatasetStats,
    params: &ClusterParams,
) -> Result<JoinMethod> {
    debug_assert!(!spec.condition.is_equi());
    select_nested_loop_family(spec, probe, build, params)
}

/// Choose within the nested-loop family: the partitioned cartesian product
/// when it is admissible and no more expensive, the broadcast nested loop
/// otherwise.
fn select_nested_loop_family(
    spec: &JoinSpec,
    probe: &DatasetStats,
    build: &DatasetStats,
    params: &ClusterParams,
) -> Result<JoinMethod> {
    if is_feasible(JoinMethod::CartesianProduct, spec, Some(build), params) {
        let cart = total_cost(JoinMethod::CartesianProduct, probe, build, params)?.weighted_total;
        let bnl =
            total_cost(JoinMethod::BroadcastNestedLoop, probe, build, params)?.weighted_total;
        if cart <= bnl {
            return Ok(JoinMethod::CartesianProduct);
        }
    }
    Ok(JoinMethod::BroadcastNestedLoop)
}

/// Method used when statistics are missing or untrusted: the size gates
/// fail closed, leaving shuffle sort for sortable equality keys and the
/// broadcast nested loop for everything else.
pub fn fallback_method(spec: &JoinSpec) -> JoinMethod {
    if spec.condition.is_equi() && spec.key_sortable {
        JoinMethod::ShuffleSort
    } else {
        JoinMethod::BroadcastNestedLoop
    }
}

/// Weighted totals of every feasible candidate, keyed by method name. Used
/// to annotate plans and decision logs.
pub fn candidate_costs(
    spec: &JoinSpec,
    probe: &DatasetStats,
    build: &DatasetStats,
    params: &ClusterParams,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for method in ALL_METHODS {
        if is_feasible(method, spec, Some(build), params) {
            let cost = total_cost(method, probe, build, params)?;
            out.insert(method.name().to_string(), cost.weighted_total);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::k0_threshold;
    use crate::plan::{JoinCondition, PlanBuilder};

    fn stats(size: u64, card: u64) -> DatasetStats {
        DatasetStats::new(size, card).unwrap()
    }

    fn params(p: u32, w: f64, budget: u64) -> ClusterParams {
        ClusterParams {
            parallelism: p,
            network_weight: w,
            memory_budget_bytes: budget,
            ..ClusterParams::default()
        }
    }

    fn spec(join_type: JoinType, condition: JoinCondition) -> JoinSpec {
        PlanBuilder::spec(join_type, condition)
    }

    #[test]
    fn normalize_puts_larger_side_first() {
        let n = normalize(stats(10, 1), stats(100, 1));
        assert!(n.flipped);
        assert_eq!(n.probe.size_bytes(), 100);
        // Ties keep the logical orientation.
        let n = normalize(stats(10, 1), stats(10, 2));
        assert!(!n.flipped);
    }

    #[test]
    fn equi_selection_tracks_k0() {
        let pr = params(20, 1.0, u64::MAX);
        let sp = spec(JoinType::Inner, JoinCondition::Equi);
        let k0 = k0_threshold(&pr); // 39
        let build = stats(1_000_000, 1_000);
        let above = stats((k0 as u64 + 1) * 1_000_000, 40_000);
        let below = stats((k0 as u64 - 1) * 1_000_000, 38_000);
        assert_eq!(
            select_equi(&sp, &above, &build, &pr).unwrap(),
            JoinMethod::BroadcastHash
        );
        assert_eq!(
            select_equi(&sp, &below, &build, &pr).unwrap(),
            JoinMethod::ShuffleHash
        );
        // Exactly at the threshold the totals tie and broadcast is not
        // strictly cheaper.
        let at = stats(k0 as u64 * 1_000_000, 39_000);
        assert_eq!(select_equi(&sp, &at, &build, &pr).unwrap(), JoinMethod::ShuffleHash);
    }

    #[test]
    fn full_outer_never_broadcasts() {
        let pr = params(20, 1.0, u64::MAX);
        let sp = spec(JoinType::FullOuter, JoinCondition::Equi);
        let m = select_equi(&sp, &stats(100_000_000, 10_000), &stats(10, 1), &pr).unwrap();
        assert_eq!(m, JoinMethod::ShuffleHash);
    }

    #[test]
    fn memory_budget_gates_hash_methods() {
        let sp = spec(JoinType::Inner, JoinCondition::Equi);
        // Build of 1000 bytes, p = 10: broadcast needs 1000 per task,
        // shuffle needs 100 per task.
        let probe = stats(100_000, 1_000);
        let build = stats(1_000, 100);
        let tight = params(10, 1.0, 500);
        assert!(!fits_budget(JoinMethod::BroadcastHash, Some(&build), &tight));
        assert!(fits_budget(JoinMethod::ShuffleHash, Some(&build), &tight));
        assert_eq!(
            select_equi(&sp, &probe, &build, &tight).unwrap(),
            JoinMethod::ShuffleHash
        );
        // Budget below even a shuffle partition pushes selection to sort.
        let tighter = params(10, 1.0, 50);
        assert_eq!(
            select_equi(&sp, &probe, &build, &tighter).unwrap(),
            JoinMethod::ShuffleSort
        );
    }

    #[test]
    fn unsortable_keys_without_memory_fall_to_nested_loops() {
        let mut sp = spec(JoinType::Inner, JoinCondition::Equi);
        sp.key_sortable = false;
        let tight = params(10, 1.0, 50);
        // |A| <= (p-1)|B| keeps the partitioned plan no more expensive.
        let m = select_equi(&sp, &stats(5_000, 50), &stats(1_000, 100), &tight).unwrap();
        assert_eq!(m, JoinMethod::CartesianProduct);
        // A huge probe side makes shuffling it worse than broadcasting the
        // small build side.
        let m = select_equi(&sp, &stats(1_000_000, 10), &stats(1_000, 100), &tight).unwrap();
        assert_eq!(m, JoinMethod::BroadcastNestedLoop);
    }

    #[test]
    fn outer_joins_never_run_as_cartesian() {
        let mut sp = spec(JoinType::LeftOuter, JoinCondition::Equi);
        sp.key_sortable = false;
        let tight = params(10, 1.0, 50);
        let m = select_equi(&sp, &stats(5_000, 50), &stats(1_000, 100), &tight).unwrap();
        assert_eq!(m, JoinMethod::BroadcastNestedLoop);
    }

    #[test]
    fn non_equi_inner_takes_cost_argmin_with_ties_to_partitioned() {
        let pr = params(10, 1.0, u64::MAX);
        let sp = spec(JoinType::Inner, JoinCondition::LessThan);
        // Small probe relative to build count: partitioned wins.
        let m = select_non_equi(&sp, &stats(5_000, 50), &stats(1_000, 100), &pr).unwrap();
        assert_eq!(m, JoinMethod::CartesianProduct);
        // Huge probe: broadcasting the build side wins.
        let m = select_non_equi(&sp, &stats(10_000_000, 10), &stats(1_000, 100), &pr).unwrap();
        assert_eq!(m, JoinMethod::BroadcastNestedLoop);
        // Exact tie goes to the partitioned plan: |A| = (p-1)|B| balances
        // the network terms and a = p balances the compute terms.
        let m = select_non_equi(&sp, &stats(9_000, 10), &stats(1_000, 100), &pr).unwrap();
        assert_eq!(m, JoinMethod::CartesianProduct);
    }

    #[test]
    fn non_equi_outer_requires_broadcast_nested_loop() {
        let pr = params(10, 1.0, u64::MAX);
        for jt in [JoinType::LeftOuter, JoinType::FullOuter, JoinType::LeftSemi, JoinType::LeftAnti]
        {
            let sp = spec(jt, JoinCondition::NotEqual);
            let m = select_non_equi(&sp, &stats(5_000, 50), &stats(1_000, 100), &pr).unwrap();
            assert_eq!(m, JoinMethod::BroadcastNestedLoop, "join type {jt:?}");
        }
    }

    #[test]
    fn fallback_prefers_shuffle_sort() {
        assert_eq!(
            fallback_method(&spec(JoinType::Inner, JoinCondition::Equi)),
            JoinMethod::ShuffleSort
        );
        let mut unsortable = spec(JoinType::Inner, JoinCondition::Equi);
        unsortable.key_sortable = false;
        assert_eq!(fallback_method(&unsortable), JoinMethod::BroadcastNestedLoop);
        assert_eq!(
            fallback_method(&spec(JoinType::Inner, JoinCondition::LessThan)),
            JoinMethod::BroadcastNestedLoop
        );
    }

    #[test]
    fn hint_validation() {
        let pr = params(10, 1.0, 500);
        let sp = spec(JoinType::Inner, JoinCondition::LessThan);
        match validate_hint(JoinMethod::ShuffleHash, &sp, None, &pr) {
            Err(Error::InfeasibleHint { hint, .. }) => assert_eq!(hint, JoinMethod::ShuffleHash),
            other => panic!("expected InfeasibleHint, got {other:?}"),
        }
        // Budget violations fail only when the build size is known.
        let sp = spec(JoinType::Inner, JoinCondition::Equi);
        let build = stats(1_000, 100);
        assert!(validate_hint(JoinMethod::BroadcastHash, &sp, Some(&build), &pr).is_err());
        assert!(validate_hint(JoinMethod::BroadcastHash, &sp, None, &pr).is_ok());
        assert!(validate_hint(JoinMethod::ShuffleHash, &sp, Some(&build), &pr).is_ok());
    }

    #[test]
    fn candidate_costs_lists_feasible_methods_only() {
        let pr = params(10, 1.0, 500);
        let sp = spec(JoinType::Inner, JoinCondition::Equi);
        let costs =
            candidate_costs(&sp, &stats(100_000, 1_000), &stats(1_000, 100), &pr).unwrap();
        assert!(!costs.contains_key("broadcast_hash"), "budget excludes broadcast");
        for name in ["shuffle_hash", "shuffle_sort", "broadcast_nested_loop", "cartesian_product"]
        {
            assert!(costs.contains_key(name), "missing {name}");
        }
    }
}
