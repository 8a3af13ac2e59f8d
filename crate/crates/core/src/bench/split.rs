use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BenchError, BenchRecord, Result};

/// Identity used to keep all examples of one clip on the same side of a
/// pinned split.
pub trait SplitKey {
    fn split_key(&self) -> &str;
}

impl SplitKey for BenchRecord {
    fn split_key(&self) -> &str {
        &self.local_audio_path
    }
}

impl SplitKey for String {
    fn split_key(&self) -> &str {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Record-level shuffle; `round(train_fraction * N)` records go to train.
    Ratio { train_fraction: f64, seed: u64 },
    /// Test set = pinned ids plus seeded random ids until `target_test_size`
    /// distinct ids are reached; everything else is train.
    SeededTopup {
        pinned_ids: Vec<String>,
        target_test_size: usize,
        seed: u64,
    },
}

/// Splits into `(train, test)`, each keeping the input order.
pub fn split_dataset<T: Clone + SplitKey>(records: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    if records.is_empty() {
        return Err(BenchError::Split("no records to split".into()));
    }
    let in_test: Vec<bool> = match spec {
        SplitSpec::Ratio { train_fraction, seed } => {
            if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                return Err(BenchError::Split(format!("train fraction {train_fraction} not in (0, 1)")));
            }
            let n = records.len();
            let n_train = (train_fraction * n as f64).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let mut flags = vec![true; n];
            for &i in &order[..n_train] {
                flags[i] = false;
            }
            flags
        }
        SplitSpec::SeededTopup {
            pinned_ids,
            target_test_size,
            seed,
        } => {
            let mut ids: Vec<&str> = Vec::new();
            let mut seen: HashSet<&str> = HashSet::new();
            for r in records {
                if seen.insert(r.split_key()) {
                    ids.push(r.split_key());
                }
            }
            if *target_test_size > ids.len() {
                return Err(BenchError::Split(format!(
                    "target test size {target_test_size} exceeds {} available ids",
                    ids.len()
                )));
            }
            let pinned: BTreeSet<&str> = pinned_ids.iter().map(String::as_str).collect();
            if let Some(missing) = pinned.iter().find(|p| !seen.contains(*p)) {
                return Err(BenchError::Split(format!("pinned id `{missing}` is not among the records")));
            }
            if *target_test_size < pinned.len() {
                return Err(BenchError::Split(format!(
                    "target test size {target_test_size} is smaller than {} pinned ids",
                    pinned.len()
                )));
            }
            let mut pool: Vec<&str> = ids.iter().copied().filter(|i| !pinned.contains(i)).collect();
            pool.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let test_ids: BTreeSet<&str> = pinned
                .iter()
                .copied()
                .chain(pool.into_iter().take(target_test_size - pinned.len()))
                .collect();
            records.iter().map(|r| test_ids.contains(r.split_key())).collect()
        }
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, t) in records.iter().zip(in_test) {
        if t {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((train, test))
}
