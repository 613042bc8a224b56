//! Per-task join kernels.
//!
//! Each kernel consumes a probe slice and a build slice for one task,
//! appends output rows, and charges workload counters. Physical probe/build
//! orientation is mapped back to logical left/right by [`JoinContext`], so
//! every kernel supports flipped inputs and all join types it can be asked
//! to run. Kernels are deterministic: outputs follow probe order, then
//! build-side leftovers in build order.

use std::collections::HashMap;

use crate::plan::{JoinSpec, JoinType};

use super::trace::TaskCounters;
use super::{Row, RowId};

/// Orientation-aware view of one join: which physical side is the logical
/// left, and what the join type requires of matched and unmatched rows.
#[derive(Debug, Clone, Copy)]
pub(super) struct JoinContext<'a> {
    pub spec: &'a JoinSpec,
    /// True when the physical build side is the logical left input.
    pub flipped: bool,
}

impl JoinContext<'_> {
    fn semi(&self) -> bool {
        self.spec.join_type == JoinType::LeftSemi
    }

    fn anti(&self) -> bool {
        self.spec.join_type == JoinType::LeftAnti
    }

    /// Probe rows pass through on their first match.
    pub fn semi_on_probe(&self) -> bool {
        self.semi() && !self.flipped
    }

    /// Probe rows pass through when nothing matches them.
    pub fn anti_on_probe(&self) -> bool {
        self.anti() && !self.flipped
    }

    /// Matched build rows pass through (emitted after the probe pass).
    pub fn semi_on_build(&self) -> bool {
        self.semi() && self.flipped
    }

    /// Unmatched build rows pass through.
    pub fn anti_on_build(&self) -> bool {
        self.anti() && self.flipped
    }

    /// Unmatched probe rows survive, null-extended.
    pub fn preserve_probe(&self) -> bool {
        if self.flipped {
            self.spec.join_type.preserves_right()
        } else {
            self.spec.join_type.preserves_left()
        }
    }

    /// Unmatched build rows survive, null-extended.
    pub fn preserve_build(&self) -> bool {
        if self.flipped {
            self.spec.join_type.preserves_left()
        } else {
            self.spec.join_type.preserves_right()
        }
    }

    /// Evaluate the join predicate in logical orientation.
    pub fn matches(&self, probe_key: i64, build_key: i64) -> bool {
        if self.flipped {
            self.spec.condition.matches(build_key, probe_key)
        } else {
            self.spec.condition.matches(probe_key, build_key)
        }
    }

    /// Combined output row for a matched pair. The key is the logical left
    /// key; bytes add up; the identity records both parents.
    pub fn combine(&self, probe: &Row, build: &Row) -> Row {
        let (left, right) = if self.flipped { (build, probe) } else { (probe, build) };
        Row {
            key: left.key,
            bytes: left.bytes + right.bytes,
            id: RowId::Pair {
                left: Some(Box::new(left.id.clone())),
                right: Some(Box::new(right.id.clone())),
            },
        }
    }

    /// Null-extended survivor of an unmatched probe row.
    pub fn null_extend_probe(&self, probe: &Row) -> Row {
        self.null_extend(probe, self.flipped)
    }

    /// Null-extended survivor of an unmatched build row.
    pub fn null_extend_build(&self, build: &Row) -> Row {
        self.null_extend(build, !self.flipped)
    }

    fn null_extend(&self, row: &Row, on_right: bool) -> Row {
        let id = Some(Box::new(row.id.clone()));
        let (left, right) = if on_right { (None, id) } else { (id, None) };
        Row { key: row.key, bytes: row.bytes, id: RowId::Pair { left, right } }
    }
}

/// Key index over build rows; hit lists keep insertion order so probes emit
/// matches deterministically.
pub(super) fn build_hash_index(rows: &[Row]) -> HashMap<i64, Vec<usize>> {
    let mut index: HashMap<i64, Vec<usize>> = HashMap::new();
    for (pos, row) in rows.iter().enumerate() {
        index.entry(row.key).or_default().push(pos);
    }
    index
}

/// Probe pass of a hash join (equi only). Marks matched build rows in
/// `matched`; callers emit build-side leftovers afterwards.
pub(super) fn hash_task(
    ctx: &JoinContext,
    probe_rows: &[Row],
    build_rows: &[Row],
    index: &HashMap<i64, Vec<usize>>,
    matched: &mut [bool],
    counters: &mut TaskCounters,
    out: &mut Vec<Row>,
) {
    debug_assert!(ctx.spec.condition.is_equi());
    for probe in probe_rows {
        counters.probe_units += probe.bytes;
        let hits = index.get(&probe.key).map(Vec::as_slice).unwrap_or(&[]);
        if ctx.semi_on_probe() || ctx.anti_on_probe() {
            // Pass-through semantics: only the first hit is touched.
            if let Some(first) = hits.first() {
                counters.probe_units += build_rows[*first].bytes;
                if ctx.semi_on_probe() {
                    out.push(probe.clone());
                }
            } else if ctx.anti_on_probe() {
                out.push(probe.clone());
            }
            continue;
        }
        for &pos in hits {
            counters.probe_units += build_rows[pos].bytes;
            matched[pos] = true;
            if !ctx.semi_on_build() && !ctx.anti_on_build() {
                out.push(ctx.combine(probe, &build_rows[pos]));
            }
        }
        if hits.is_empty() && ctx.preserve_probe() {
            out.push(ctx.null_extend_probe(probe));
        }
    }
}

/// Build-side survivors once every probe task has run: null-extended
/// unmatched rows for outer joins, pass-through rows for semi/anti joins
/// whose logical left sits on the build side. Emission follows build order.
pub(super) fn build_leftovers(
    ctx: &JoinContext,
    build_rows: &[Row],
    matched: &[bool],
) -> Vec<Row> {
    debug_assert_eq!(build_rows.len(), matched.len());
    let mut out = Vec::new();
    for (row, hit) in build_rows.iter().zip(matched) {
        if ctx.semi_on_build() && *hit {
            out.push(row.clone());
        } else if ctx.anti_on_build() && !hit {
            out.push(row.clone());
        } else if ctx.preserve_build() && !hit {
            out.push(ctx.null_extend_build(row));
        }
    }
    out
}

/// Sort both sides of one partition and merge key groups (equi only).
/// Handles every join type locally because co-partitioning puts all rows of
/// a key in the same task.
pub(super) fn sort_merge_task(
    ctx: &JoinContext,
    probe_rows: &[Row],
    build_rows: &[Row],
    counters: &mut TaskCounters,
    out: &mut Vec<Row>,
) {
    debug_assert!(ctx.spec.condition.is_equi());
    let mut probe = probe_rows.to_vec();
    let mut build = build_rows.to_vec();
    probe.sort_by_key(|r| r.key);
    build.sort_by_key(|r| r.key);
    for side in [&probe, &build] {
        let bytes: u64 = side.iter().map(|r| r.bytes).sum();
        counters.sort_units += bytes as f64 * (side.len() as f64).log2().max(0.0);
        counters.merge_units += bytes;
    }

    let (mut i, mut j) = (0, 0);
    while i < probe.len() && j < build.len() {
        let (pk, bk) = (probe[i].key, build[j].key);
        if pk < bk {
            emit_unmatched_probe(ctx, &probe[i], out);
            i += 1;
        } else if bk < pk {
            emit_unmatched_build(ctx, &build[j], out);
            j += 1;
        } else {
            let gi = probe[i..].iter().take_while(|r| r.key == pk).count() + i;
            let gj = build[j..].iter().take_while(|r| r.key == bk).count() + j;
            for p in &probe[i..gi] {
                if ctx.semi_on_probe() {
                    out.push(p.clone());
                } else if !ctx.anti_on_probe()
                    && !ctx.semi_on_build()
                    && !ctx.anti_on_build()
                {
                    for b in &build[j..gj] {
                        out.push(ctx.combine(p, b));
                    }
                }
            }
            if ctx.semi_on_build() {
                out.extend(build[j..gj].iter().cloned());
            }
            i = gi;
            j = gj;
        }
    }
    for p in &probe[i..] {
        emit_unmatched_probe(ctx, p, out);
    }
    for b in &build[j..] {
        emit_unmatched_build(ctx, b, out);
    }
}

fn emit_unmatched_probe(ctx: &JoinContext, row: &Row, out: &mut Vec<Row>) {
    if ctx.anti_on_probe() {
        out.push(row.clone());
    } else if ctx.preserve_probe() {
        out.push(ctx.null_extend_probe(row));
    }
}

fn emit_unmatched_build(ctx: &JoinContext, row: &Row, out: &mut Vec<Row>) {
    if ctx.anti_on_build() {
        out.push(row.clone());
    } else if ctx.preserve_build() {
        out.push(ctx.null_extend_build(row));
    }
}

/// Nested-loop probe pass over one task's rows; the only kernel that
/// evaluates arbitrary predicates. Marks matched build rows for the
/// leftover pass; semi/anti probes short-circuit at the first match.
pub(super) fn nested_loop_task(
    ctx: &JoinContext,
    probe_rows: &[Row],
    build_rows: &[Row],
    matched: &mut [bool],
    counters: &mut TaskCounters,
    out: &mut Vec<Row>,
) {
    for probe in probe_rows {
        counters.nl_units += probe.bytes as f64;
        let mut any = false;
        for (pos, build) in build_rows.iter().enumerate() {
            counters.nl_units += build.bytes as f64;
            if !ctx.matches(probe.key, build.key) {
                continue;
            }
            any = true;
            if ctx.semi_on_probe() || ctx.anti_on_probe() {
                break;
            }
            matched[pos] = true;
            if !ctx.semi_on_build() && !ctx.anti_on_build() {
                out.push(ctx.combine(probe, build));
            }
        }
        if ctx.semi_on_probe() && any {
            out.push(probe.clone());
        } else if ctx.anti_on_probe() && !any {
            out.push(probe.clone());
        } else if ctx.preserve_probe() && !any {
            out.push(ctx.null_extend_probe(probe));
        }
    }
}
