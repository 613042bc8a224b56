//! Brute-force oracle and helpers shared by the integration tests.
//!
//! The oracle is a plain double loop in logical orientation and knows
//! nothing about partitioning, flipping, or exchange placement. Any
//! agreement with the engine is therefore evidence about the engine, not
//! shared code.

// Each test target compiles its own copy, so helpers unused by one target
// are still load-bearing in another.
#![allow(dead_code)]

use reljoin::plan::{JoinSpec, JoinType};
use reljoin::simulator::{Dataset, Row, RowId};

/// Owned copy of every row of a dataset, in partition order.
pub fn rows(dataset: &Dataset) -> Vec<Row> {
    dataset.all_rows().cloned().collect()
}

fn pair(left: &Row, right: &Row) -> Row {
    Row {
        key: left.key,
        bytes: left.bytes + right.bytes,
        id: RowId::Pair {
            left: Some(Box::new(left.id.clone())),
            right: Some(Box::new(right.id.clone())),
        },
    }
}

fn extend_left(left: &Row) -> Row {
    Row {
        key: left.key,
        bytes: left.bytes,
        id: RowId::Pair { left: Some(Box::new(left.id.clone())), right: None },
    }
}

fn extend_right(right: &Row) -> Row {
    Row {
        key: right.key,
        bytes: right.bytes,
        id: RowId::Pair { left: None, right: Some(Box::new(right.id.clone())) },
    }
}

/// Reference join: double loop over both inputs in logical orientation.
pub fn oracle_join(left: &[Row], right: &[Row], spec: &JoinSpec) -> Vec<Row> {
    let mut out = Vec::new();
    let mut right_matched = vec![false; right.len()];
    for l in left {
        let mut hit = false;
        for (j, r) in right.iter().enumerate() {
            if spec.condition.matches(l.key, r.key) {
                hit = true;
                right_matched[j] = true;
                match spec.join_type {
                    JoinType::LeftSemi | JoinType::LeftAnti => break,
                    _ => out.push(pair(l, r)),
                }
            }
        }
        match spec.join_type {
            JoinType::LeftSemi if hit => out.push(l.clone()),
            JoinType::LeftAnti if !hit => out.push(l.clone()),
            JoinType::LeftOuter | JoinType::FullOuter if !hit => out.push(extend_left(l)),
            _ => {}
        }
    }
    if spec.join_type.preserves_right() {
        for (j, r) in right.iter().enumerate() {
            if !right_matched[j] {
                out.push(extend_right(r));
            }
        }
    }
    out
}

/// Multiset view of a row collection: sorted copy.
pub fn sorted(mut rows: Vec<Row>) -> Vec<Row> {
    rows.sort();
    rows
}

/// Multiset equality with a digestible failure message.
pub fn assert_same_multiset(context: &str, actual: Vec<Row>, expected: Vec<Row>) {
    let actual = sorted(actual);
    let expected = sorted(expected);
    if actual != expected {
        let first_diff = actual
            .iter()
            .zip(expected.iter())
            .position(|(a, b)| a != b)
            .unwrap_or(actual.len().min(expected.len()));
        panic!(
            "{context}: multisets differ: {} vs {} rows, first difference at index {first_diff}",
            actual.len(),
            expected.len()
        );
    }
}
