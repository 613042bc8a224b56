//! Pluggable join-selection strategies.
//!
//! A strategy decides one join at a time, given the join spec and the
//! trusted (watermark-checked) statistics of the normalized sides. All
//! strategies share two rules: an explicit per-join hint wins outright
//! (after feasibility validation), and non-equality joins are handled by
//! the nested-loop rule regardless of strategy, because no strategy can
//! hash or sort an inequality.
//!
//! For equality joins the strategies differ:
//!
//! * `ShuffleSortForced` — shuffle sort when keys are sortable, otherwise
//!   the nested-loop fallback.
//! * `ShuffleHashForced` — shuffle hash when the build partition fits the
//!   memory budget, otherwise shuffle sort, then nested loops.
//! * `AbsoluteSize` — broadcast hash whenever the build side's *absolute*
//!   size sits at or below a fixed threshold, otherwise shuffle hash if it
//!   fits, then shuffle sort. This is the rule most engines ship.
//! * `RelJoin` — the relative-size rule: broadcast hash exactly when it is
//!   strictly cheaper than shuffle hash under the workload model, i.e.
//!   when `|A|/|B| > k0`. An optional per-strategy network weight lets the
//!   rule be evaluated under a different `w` than the cluster's (and
//!   therefore a different `k0`) without changing workload accounting.
//!
//! Size gates fail closed: when statistics are missing or untrusted, the
//! forced and absolute-size strategies land on shuffle sort (the safe
//! shuffle-based plan) and `RelJoin` uses the same fallback.

use crate::cost::{ClusterParams, JoinMethod};
use crate::error::{Error, Result};
use crate::plan::JoinSpec;
use crate::selector::{
    fallback_method, fits_budget, is_feasible, select_equi, select_non_equi, validate_hint,
};
use crate::stats::DatasetStats;

/// Build sides at or below 10 MB broadcast under the default
/// absolute-size rule.
pub const DEFAULT_BROADCAST_THRESHOLD_BYTES: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    ShuffleSortForced,
    ShuffleHashForced,
    AbsoluteSize { threshold_bytes: u64 },
    RelJoin {
        /// Network weight used when *evaluating the selection rule*; `None`
        /// inherits the cluster's weight. Workload accounting always uses
        /// the cluster's weight.
        network_weight: Option<f64>,
    },
}

impl Strategy {
    /// The relative-size strategy at the cluster's network weight.
    pub fn reljoin() -> Strategy {
        Strategy::RelJoin { network_weight: None }
    }

    /// Stable key used in reports and manifests.
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::ShuffleSortForced => "shuffle_sort",
            Strategy::ShuffleHashForced => "shuffle_hash",
            Strategy::AbsoluteSize { .. } => "absolute_size",
            Strategy::RelJoin { .. } => "reljoin",
        }
    }

    /// Parameters this strategy evaluates costs under: the relative-size
    /// strategy may pin the network weight, every other knob is the
    /// cluster's. Workload accounting is unaffected.
    pub fn effective_params(&self, params: &ClusterParams) -> ClusterParams {
        match self {
            Strategy::RelJoin { network_weight: Some(w) } => {
                ClusterParams { network_weight: *w, ..*params }
            }
            _ => *params,
        }
    }

    /// Canonical spelling including non-default parameters, parseable by
    /// [`Strategy::parse`].
    pub fn spec_string(&self) -> String {
        match self {
            Strategy::AbsoluteSize { threshold_bytes }
                if *threshold_bytes != DEFAULT_BROADCAST_THRESHOLD_BYTES =>
            {
                format!("absolute_size:{threshold_bytes}")
            }
            Strategy::RelJoin { network_weight: Some(w) } => format!("reljoin:{w}"),
            other => other.name().to_string(),
        }
    }

    /// Parse a strategy spelling. Dashes and underscores are
    /// interchangeable. `absolute-size` accepts an optional `:SIZE` suffix
    /// (e.g. `absolute-size:64MB`) and defaults to
    /// [`DEFAULT_BROADCAST_THRESHOLD_BYTES`]; `reljoin` accepts an optional
    /// `:W` network-weight suffix and defaults to the cluster's weight.
    pub fn parse(text: &str) -> Result<Strategy> {
        let normalized = text.trim().replace('-', "_");
        let (head, arg) = match normalized.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (normalized.as_str(), None),
        };
        let reject_arg = |strategy: Strategy| match arg {
            Some(_) => Err(Error::Schema(format!(
                "strategy {} takes no parameter",
                strategy.name()
            ))),
            None => Ok(strategy),
        };
        match head {
            "shuffle_sort" => reject_arg(Strategy::ShuffleSortForced),
            "shuffle_hash" => reject_arg(Strategy::ShuffleHashForced),
            "reljoin" => {
                let network_weight = match arg {
                    Some(a) => {
                        let w: f64 = a.trim().parse().map_err(|_| {
                            Error::Schema(format!("invalid network weight: {a}"))
                        })?;
                        if !(w.is_finite() && w > 0.0) {
                            return Err(Error::Schema(format!(
                                "network weight must be positive and finite, got {a}"
                            )));
                        }
                        Some(w)
                    }
                    None => None,
                };
                Ok(Strategy::RelJoin { network_weight })
            }
            "absolute_size" => {
                let threshold_bytes = match arg {
                    Some(a) => parse_size(a)?,
                    None => DEFAULT_BROADCAST_THRESHOLD_BYTES,
                };
                Ok(Strategy::AbsoluteSize { threshold_bytes })
            }
            other => Err(Error::Schema(format!("unknown strategy: {other}"))),
        }
    }
}

/// Parse a byte size: a plain integer, or a number with a B/KB/MB/GB/TB
/// suffix using decimal (powers of 1000) units. Case-insensitive.
pub fn parse_size(text: &str) -> Result<u64> {
    let t = text.trim();
    if t.is_empty() {
        return Err(Error::Schema("empty size".into()));
    }
    let upper = t.to_ascii_uppercase();
    let (digits, multiplier) = if let Some(rest) = upper.strip_suffix("KB") {
        (rest, 1_000.0)
    } else if let Some(rest) = upper.strip_suffix("MB") {
        (rest, 1_000_000.0)
    } else if let Some(rest) = upper.strip_suffix("GB") {
        (rest, 1_000_000_000.0)
    } else if let Some(rest) = upper.strip_suffix("TB") {
        (rest, 1_000_000_000_000.0)
    } else if let Some(rest) = upper.strip_suffix('B') {
        (rest, 1.0)
    } else {
        (upper.as_str(), 1.0)
    };
    let value: f64 = digits
        .trim()
        .parse()
        .map_err(|_| Error::Schema(format!("invalid size: {text}")))?;
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::Schema(format!("invalid size: {text}")));
    }
    let bytes = value * multiplier;
    if bytes > u64::MAX as f64 {
        return Err(Error::Schema(format!("size out of range: {text}")));
    }
    Ok(bytes.round() as u64)
}

/// Decide the method for one join. `probe`/`build` are the normalized
/// sides' trusted statistics (`None` when unknown or above the validity
/// watermark).
pub fn decide(
    strategy: Strategy,
    spec: &JoinSpec,
    probe: Option<&DatasetStats>,
    build: Option<&DatasetStats>,
    params: &ClusterParams,
) -> Result<JoinMethod> {
    if let Some(hint) = spec.hint {
        validate_hint(hint, spec, build, params)?;
        return Ok(hint);
    }
    if !spec.condition.is_equi() {
        return match (probe, build) {
            (Some(p), Some(b)) => select_non_equi(spec, p, b, params),
            _ => Ok(fallback_method(spec)),
        };
    }
    match strategy {
        Strategy::RelJoin { .. } => {
            let effective = strategy.effective_params(params);
            match (probe, build) {
                (Some(p), Some(b)) => select_equi(spec, p, b, &effective),
                _ => Ok(fallback_method(spec)),
            }
        }
        Strategy::ShuffleSortForced => {
            if is_feasible(JoinMethod::ShuffleSort, spec, build, params) {
                Ok(JoinMethod::ShuffleSort)
            } else {
                Ok(JoinMethod::BroadcastNestedLoop)
            }
        }
        Strategy::ShuffleHashForced => {
            if fits_budget(JoinMethod::ShuffleHash, build, params) {
                Ok(JoinMethod::ShuffleHash)
            } else if is_feasible(JoinMethod::ShuffleSort, spec, build, params) {
                Ok(JoinMethod::ShuffleSort)
            } else {
                Ok(JoinMethod::BroadcastNestedLoop)
            }
        }
        Strategy::AbsoluteSize { threshold_bytes } => {
            let small_enough = build.is_some_and(|b| b.size_bytes() <= threshold_bytes);
            if small_enough && is_feasible(JoinMethod::BroadcastHash, spec, build, params) {
                Ok(JoinMethod::BroadcastHash)
            } else if fits_budget(JoinMethod::ShuffleHash, build, params) {
                Ok(JoinMethod::ShuffleHash)
            } else if is_feasible(JoinMethod::ShuffleSort, spec, build, params) {
                Ok(JoinMethod::ShuffleSort)
            } else {
                Ok(JoinMethod::BroadcastNestedLoop)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{JoinCondition, JoinType, PlanBuilder};

    fn stats(size: u64, card: u64) -> DatasetStats {
        DatasetStats::new(size, card).unwrap()
    }

    fn default_params() -> ClusterParams {
        ClusterParams::default()
    }

    fn spec() -> JoinSpec {
        PlanBuilder::spec(JoinType::Inner, JoinCondition::Equi)
    }

    #[test]
    fn parse_size_units() {
        assert_eq!(parse_size("0").unwrap(), 0);
        assert_eq!(parse_size("123").unwrap(), 123);
        assert_eq!(parse_size("10MB").unwrap(), 10_000_000);
        assert_eq!(parse_size("1.5GB").unwrap(), 1_500_000_000);
        assert_eq!(parse_size("2kb").unwrap(), 2_000);
        assert_eq!(parse_size("7 B").unwrap(), 7);
        assert_eq!(parse_size("1TB").unwrap(), 1_000_000_000_000);
        assert!(parse_size("ten").is_err());
        assert!(parse_size("-5").is_err());
        assert!(parse_size("").is_err());
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(Strategy::parse("reljoin").unwrap(), Strategy::reljoin());
        assert_eq!(
            Strategy::parse("reljoin:2.5").unwrap(),
            Strategy::RelJoin { network_weight: Some(2.5) }
        );
        assert_eq!(Strategy::parse("shuffle-sort").unwrap(), Strategy::ShuffleSortForced);
        assert_eq!(Strategy::parse("shuffle_hash").unwrap(), Strategy::ShuffleHashForced);
        assert_eq!(
            Strategy::parse("absolute-size").unwrap(),
            Strategy::AbsoluteSize { threshold_bytes: DEFAULT_BROADCAST_THRESHOLD_BYTES }
        );
        assert_eq!(
            Strategy::parse("absolute-size:64MB").unwrap(),
            Strategy::AbsoluteSize { threshold_bytes: 64_000_000 }
        );
        assert!(Strategy::parse("reljoin:-3").is_err());
        assert!(Strategy::parse("shuffle-sort:1").is_err());
        assert!(Strategy::parse("optimal").is_err());
    }

    #[test]
    fn strategy_spec_string_round_trips() {
        for s in [
            Strategy::ShuffleSortForced,
            Strategy::ShuffleHashForced,
            Strategy::AbsoluteSize { threshold_bytes: 42_000 },
            Strategy::reljoin(),
            Strategy::RelJoin { network_weight: Some(0.25) },
        ] {
            assert_eq!(Strategy::parse(&s.spec_string()).unwrap(), s);
        }
    }

    #[test]
    fn hint_wins_under_every_strategy() {
        let mut sp = spec();
        sp.hint = Some(JoinMethod::BroadcastNestedLoop);
        let probe = stats(1_000_000, 1_000);
        let build = stats(1_000, 10);
        for strategy in [
            Strategy::ShuffleSortForced,
            Strategy::ShuffleHashForced,
            Strategy::AbsoluteSize { threshold_bytes: DEFAULT_BROADCAST_THRESHOLD_BYTES },
            Strategy::reljoin(),
        ] {
            let m = decide(strategy, &sp, Some(&probe), Some(&build), &default_params()).unwrap();
            assert_eq!(m, JoinMethod::BroadcastNestedLoop);
        }
    }

    #[test]
    fn infeasible_hint_is_an_error() {
        let mut sp = spec();
        sp.hint = Some(JoinMethod::ShuffleSort);
        sp.key_sortable = false;
        let err = decide(Strategy::reljoin(), &sp, None, None, &default_params());
        assert!(matches!(err, Err(Error::InfeasibleHint { .. })));
    }

    #[test]
    fn absolute_size_threshold_is_inclusive() {
        let pr = default_params();
        let strategy = Strategy::AbsoluteSize { threshold_bytes: 1_000 };
        let probe = stats(100_000, 1_000);
        let at = stats(1_000, 10);
        let above = stats(1_001, 10);
        assert_eq!(
            decide(strategy, &spec(), Some(&probe), Some(&at), &pr).unwrap(),
            JoinMethod::BroadcastHash
        );
        assert_eq!(
            decide(strategy, &spec(), Some(&probe), Some(&above), &pr).unwrap(),
            JoinMethod::ShuffleHash
        );
    }

    #[test]
    fn reference_examples_at_default_parameters() {
        // Build side 1.10 MB with k = 5: under the 10 MB absolute rule the
        // build broadcasts, while the relative rule sees k < k0 = 39 and
        // shuffles.
        let pr = default_params();
        let build = stats(1_100_000, 11_000);
        let probe = stats(5_500_000, 55_000);
        assert_eq!(
            decide(
                Strategy::AbsoluteSize { threshold_bytes: DEFAULT_BROADCAST_THRESHOLD_BYTES },
                &spec(),
                Some(&probe),
                Some(&build),
                &pr
            )
            .unwrap(),
            JoinMethod::BroadcastHash
        );
        assert_eq!(
            decide(Strategy::reljoin(), &spec(), Some(&probe), Some(&build), &pr).unwrap(),
            JoinMethod::ShuffleHash
        );
        // Build side 50 MB with k = 100: the absolute rule refuses to
        // broadcast, the relative rule sees k > k0 and broadcasts.
        let build = stats(50_000_000, 500_000);
        let probe = stats(5_000_000_000, 50_000_000);
        assert_eq!(
            decide(
                Strategy::AbsoluteSize { threshold_bytes: DEFAULT_BROADCAST_THRESHOLD_BYTES },
                &spec(),
                Some(&probe),
                Some(&build),
                &pr
            )
            .unwrap(),
            JoinMethod::ShuffleHash
        );
        assert_eq!(
            decide(Strategy::reljoin(), &spec(), Some(&probe), Some(&build), &pr).unwrap(),
            JoinMethod::BroadcastHash
        );
    }

    #[test]
    fn missing_stats_fail_closed_to_shuffle_sort() {
        let pr = default_params();
        for strategy in [
            Strategy::ShuffleHashForced,
            Strategy::AbsoluteSize { threshold_bytes: DEFAULT_BROADCAST_THRESHOLD_BYTES },
            Strategy::reljoin(),
        ] {
            let m = decide(strategy, &spec(), None, None, &pr).unwrap();
            assert_eq!(m, JoinMethod::ShuffleSort, "strategy {strategy:?}");
        }
    }

    #[test]
    fn forced_strategies_ignore_relative_size() {
        let pr = default_params();
        // k = 1000, far above k0 = 39: RelJoin broadcasts, forced ones don't.
        let probe = stats(10_000_000, 100_000);
        let build = stats(10_000, 100);
        assert_eq!(
            decide(Strategy::reljoin(), &spec(), Some(&probe), Some(&build), &pr).unwrap(),
            JoinMethod::BroadcastHash
        );
        assert_eq!(
            decide(Strategy::ShuffleSortForced, &spec(), Some(&probe), Some(&build), &pr)
                .unwrap(),
            JoinMethod::ShuffleSort
        );
        assert_eq!(
            decide(Strategy::ShuffleHashForced, &spec(), Some(&probe), Some(&build), &pr)
                .unwrap(),
            JoinMethod::ShuffleHash
        );
    }

    #[test]
    fn forced_sort_with_unsortable_keys_uses_nested_loop_fallback() {
        let pr = default_params();
        let mut sp = spec();
        sp.key_sortable = false;
        let m = decide(
            Strategy::ShuffleSortForced,
            &sp,
            Some(&stats(10_000, 100)),
            Some(&stats(1_000, 10)),
            &pr,
        )
        .unwrap();
        assert_eq!(m, JoinMethod::BroadcastNestedLoop);
    }

    #[test]
    fn reljoin_weight_override_changes_the_threshold() {
        let pr = default_params(); // p = 20, cluster w = 1, k0 = 39
        // k = 100 broadcasts at w = 1 but not at w = 0.1 (k0 = 219).
        let probe = stats(100_000_000, 1_000_000);
        let build = stats(1_000_000, 10_000);
        assert_eq!(
            decide(Strategy::reljoin(), &spec(), Some(&probe), Some(&build), &pr).unwrap(),
            JoinMethod::BroadcastHash
        );
        assert_eq!(
            decide(
                Strategy::RelJoin { network_weight: Some(0.1) },
                &spec(),
                Some(&probe),
                Some(&build),
                &pr
            )
            .unwrap(),
            JoinMethod::ShuffleHash
        );
    }

    #[test]
    fn non_equi_is_strategy_independent() {
        let pr = default_params();
        let sp = PlanBuilder::spec(JoinType::Inner, JoinCondition::LessThan);
        let probe = stats(5_000, 50);
        let build = stats(1_000, 100);
        for strategy in [
            Strategy::ShuffleSortForced,
            Strategy::ShuffleHashForced,
            Strategy::AbsoluteSize { threshold_bytes: DEFAULT_BROADCAST_THRESHOLD_BYTES },
            Strategy::reljoin(),
        ] {
            let m = decide(strategy, &sp, Some(&probe), Some(&build), &pr).unwrap();
            assert_eq!(m, JoinMethod::CartesianProduct, "strategy {strategy:?}");
        }
    }
}
