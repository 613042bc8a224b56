//! Synthetic keyed datasets.
//!
//! A dataset is a multiset of rows spread over `p` initial partitions. Rows
//! carry a 64-bit key, a byte size, and a provenance identity; payload
//! content is never materialized because workload accounting only needs
//! sizes and join correctness only needs keys plus identities.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::DatasetStats;

use super::{Row, RowId};

/// Bytes of the key column carried by every row.
pub const KEY_BYTES: u64 = 8;

/// Key distribution over the integer domain `1..=domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KeyDistribution {
    Uniform { domain: u64 },
    Zipf { domain: u64, exponent: f64 },
}

/// How rows are spread over the initial partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSkew {
    /// Each row lands in a uniformly random partition.
    Uniform,
    /// Row placement follows the given per-partition weights (must sum
    /// to 1).
    Skewed { weights: Vec<f64> },
}

/// Recipe for one synthetic dataset. Generation is deterministic in the
/// seed: identical specs produce identical datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Source name scans bind to.
    pub name: String,
    /// Number of rows.
    pub cardinality: u64,
    /// Payload bytes per row; every row occupies `KEY_BYTES + payload`.
    pub row_payload_bytes: u64,
    pub key_distribution: KeyDistribution,
    pub initial_partition_skew: PartitionSkew,
    /// Omitted in JSON it defaults to [`DEFAULT_SEED`]; wall-clock entropy
    /// is never used.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Seed used when a generator spec does not pick one.
pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// A generated or hand-built dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// One bucket per task.
    pub partitions: Vec<Vec<Row>>,
    /// Recipe the dataset came from, when generated.
    pub provenance: Option<GeneratorSpec>,
}

impl Dataset {
    pub fn from_partitions(name: &str, partitions: Vec<Vec<Row>>) -> Dataset {
        Dataset { name: name.to_string(), partitions, provenance: None }
    }

    pub fn total_rows(&self) -> u64 {
        self.partitions.iter().map(|p| p.len() as u64).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.partitions.iter().flatten().map(|r| r.bytes).sum()
    }

    /// Exact statistics of the materialized rows.
    pub fn stats(&self) -> DatasetStats {
        DatasetStats::new(self.total_bytes(), self.total_rows())
            .expect("rows always occupy at least the key bytes")
    }

    pub fn all_rows(&self) -> impl Iterator<Item = &Row> + '_ {
        self.partitions.iter().flatten()
    }
}

/// Identity tag for rows of a named source: a 16-bit fold of the FNV-1a
/// hash of the name. Stable across runs and platforms; the engine rejects
/// bindings whose names collide.
pub fn source_tag(name: &str) -> u16 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h ^ (h >> 16) ^ (h >> 32) ^ (h >> 48)) as u16
}

fn validate(spec: &GeneratorSpec, partitions: u32) -> Result<()> {
    if spec.name.is_empty() {
        return Err(Error::Schema("generator spec requires a non-empty name".into()));
    }
    if partitions == 0 {
        return Err(Error::Invariant("partition count must be at least 1".into()));
    }
    if spec.cardinality > u64::from(u32::MAX) {
        return Err(Error::Schema(format!(
            "cardinality {} exceeds the {} row identity limit",
            spec.cardinality,
            u32::MAX
        )));
    }
    match &spec.key_distribution {
        KeyDistribution::Uniform { domain } | KeyDistribution::Zipf { domain, .. }
            if *domain == 0 =>
        {
            return Err(Error::Schema("key domain must be at least 1".into()));
        }
        KeyDistribution::Zipf { exponent, .. }
            if !(exponent.is_finite() && *exponent > 0.0) =>
        {
            return Err(Error::Schema(format!(
                "zipf exponent must be positive and finite, got {exponent}"
            )));
        }
        _ => {}
    }
    if let PartitionSkew::Skewed { weights } = &spec.initial_partition_skew {
        if weights.len() != partitions as usize {
            return Err(Error::Schema(format!(
                "skew weights cover {} partition(s), expected {partitions}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Schema("skew weights must be non-negative and finite".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Schema(format!("skew weights must sum to 1, got {sum}")));
        }
    }
    Ok(())
}

/// Generate the dataset described by `spec`, spread over `partitions`
/// initial partitions (the caller passes the cluster parallelism).
pub fn generate(spec: &GeneratorSpec, partitions: u32) -> Result<Dataset> {
    validate(spec, partitions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tag = source_tag(&spec.name);
    let row_bytes = KEY_BYTES + spec.row_payload_bytes;

    let zipf = match &spec.key_distribution {
        KeyDistribution::Zipf { domain, exponent } => Some(
            Zipf::new(*domain, *exponent)
                .map_err(|e| Error::Schema(format!("invalid zipf parameters: {e}")))?,
        ),
        KeyDistribution::Uniform { .. } => None,
    };
    let weighted = match &spec.initial_partition_skew {
        PartitionSkew::Skewed { weights } => Some(
            WeightedIndex::new(weights)
                .map_err(|e| Error::Schema(format!("invalid skew weights: {e}")))?,
        ),
        PartitionSkew::Uniform => None,
    };

    let mut buckets: Vec<Vec<Row>> = vec![Vec::new(); partitions as usize];
    for ordinal in 0..spec.cardinality {
        let key: i64 = match &spec.key_distribution {
            KeyDistribution::Uniform { domain } => rng.gen_range(1..=*domain) as i64,
            KeyDistribution::Zipf { .. } => {
                zipf.as_ref().expect("zipf sampler exists").sample(&mut rng) as i64
            }
        };
        let partition = match &weighted {
            Some(w) => w.sample(&mut rng),
            None => rng.gen_range(0..partitions) as usize,
        };
        buckets[partition].push(Row {
            key,
            bytes: row_bytes,
            id: RowId::Source { source: tag, ordinal: ordinal as u32 },
        });
    }
    Ok(Dataset {
        name: spec.name.clone(),
        partitions: buckets,
        provenance: Some(spec.clone()),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn uniform_spec(rows: u64, domain: u64, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            name: "t".into(),
            cardinality: rows,
            row_payload_bytes: 92,
            key_distribution: KeyDistribution::Uniform { domain },
            initial_partition_skew: PartitionSkew::Uniform,
            seed,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = uniform_spec(5_000, 100, 7);
        let a = generate(&spec, 8).unwrap();
        let b = generate(&spec, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_cardinality_gives_empty_dataset() {
        let d = generate(&uniform_spec(0, 10, 1), 4).unwrap();
        assert_eq!(d.total_rows(), 0);
        assert_eq!(d.stats(), DatasetStats::empty());
        assert_eq!(d.partitions.len(), 4);
    }

    #[test]
    fn sizes_and_counts_match_the_spec_exactly() {
        let d = generate(&uniform_spec(1_234, 50, 3), 10).unwrap();
        assert_eq!(d.total_rows(), 1_234);
        assert_eq!(d.total_bytes(), 1_234 * 100);
        for row in d.all_rows() {
            assert!(row.key >= 1 && row.key <= 50);
            assert_eq!(row.bytes, 100);
        }
    }

    #[test]
    fn row_identities_are_unique_ordinals() {
        let d = generate(&uniform_spec(500, 10, 11), 4).unwrap();
        let mut seen = vec![false; 500];
        for row in d.all_rows() {
            match row.id {
                RowId::Source { ordinal, .. } => {
                    assert!(!seen[ordinal as usize]);
                    seen[ordinal as usize] = true;
                }
                ref other => panic!("unexpected id {other:?}"),
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn zipf_concentrates_mass_on_the_top_key() {
        let spec = GeneratorSpec {
            name: "z".into(),
            cardinality: 100_000,
            row_payload_bytes: 0,
            key_distribution: KeyDistribution::Zipf { domain: 1_000, exponent: 1.2 },
            initial_partition_skew: PartitionSkew::Uniform,
            seed: 5,
        };
        let d = generate(&spec, 4).unwrap();
        let mut counts: HashMap<i64, u64> = HashMap::new();
        for row in d.all_rows() {
            *counts.entry(row.key).or_default() += 1;
        }
        let top = counts.values().copied().max().unwrap() as f64 / 100_000.0;
        // Uniform share would be 1/1000; the top zipf key carries far more.
        assert!(top > 0.05, "top key share {top}");
    }

    #[test]
    fn uniform_keys_pass_a_chi_square_check() {
        let spec = uniform_spec(100_000, 10, 13);
        let d = generate(&spec, 4).unwrap();
        let mut counts = [0u64; 10];
        for row in d.all_rows() {
            counts[(row.key - 1) as usize] += 1;
        }
        let expected = 100_000.0 / 10.0;
        let chi2: f64 =
            counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-square with 9 degrees of freedom.
        assert!(chi2 < 27.88, "chi-square statistic {chi2}");
    }

    #[test]
    fn degenerate_skew_places_every_row_in_one_partition() {
        let spec = GeneratorSpec {
            initial_partition_skew: PartitionSkew::Skewed {
                weights: vec![0.0, 1.0, 0.0, 0.0],
            },
            ..uniform_spec(1_000, 10, 9)
        };
        let d = generate(&spec, 4).unwrap();
        assert_eq!(d.partitions[1].len(), 1_000);
        assert_eq!(d.total_rows(), 1_000);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&uniform_spec(10, 0, 1), 4).is_err());
        let bad_exponent = GeneratorSpec {
            key_distribution: KeyDistribution::Zipf { domain: 10, exponent: 0.0 },
            ..uniform_spec(10, 10, 1)
        };
        assert!(generate(&bad_exponent, 4).is_err());
        let short_weights = GeneratorSpec {
            initial_partition_skew: PartitionSkew::Skewed { weights: vec![0.5, 0.5] },
            ..uniform_spec(10, 10, 1)
        };
        assert!(generate(&short_weights, 4).is_err());
        let bad_sum = GeneratorSpec {
            initial_partition_skew: PartitionSkew::Skewed { weights: vec![0.5; 4] },
            ..uniform_spec(10, 10, 1)
        };
        assert!(generate(&bad_sum, 4).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = GeneratorSpec {
            initial_partition_skew: PartitionSkew::Skewed {
                weights: vec![0.7, 0.1, 0.1, 0.1],
            },
            ..uniform_spec(10, 10, 1)
        };
        let text = crate::json::to_canonical_string(&spec).unwrap();
        let back: GeneratorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn source_tags_are_stable_and_name_sensitive() {
        assert_eq!(source_tag("A"), source_tag("A"));
        assert_ne!(source_tag("A"), source_tag("B"));
    }
}
