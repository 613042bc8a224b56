//! Canonical JSON encoding used for every file and stdout artifact: object
//! keys sorted, two-space indentation, shortest round-trip float formatting.
//! Routing values through `serde_json::Value` gives sorted keys because the
//! default (non-`preserve_order`) map is a `BTreeMap`; byte-stable output is
//! what makes golden files and repeated-run comparisons meaningful.

use crate::Result;
use serde::Serialize;

/// Serialize any value to its canonical pretty-printed JSON string,
/// terminated by a newline.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value)?;
    let mut out = serde_json::to_string_pretty(&tree)?;
    out.push('\n');
    Ok(out)
}
