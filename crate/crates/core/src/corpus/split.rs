use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )))
        }
    }
}

/// Seeded per-bug split. Ids are sorted before shuffling so the result does
/// not depend on input order; both sides are returned sorted.
pub fn split(bug_ids: &[String], spec: &SplitSpec) -> Result<(Vec<String>, Vec<String>)> {
    spec.validate()?;
    if bug_ids.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 bugs to split, got {}",
            bug_ids.len()
        )));
    }
    let mut ids = bug_ids.to_vec();
    ids.sort();
    ids.dedup();
    let n = ids.len();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let cut = ((spec.train_fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let mut validation = ids.split_off(cut);
    ids.sort();
    validation.sort();
    Ok((ids, validation))
}

/// Seeded subset of `fraction` of the ids (at least one), sorted.
pub fn subsample(ids: &[String], fraction: f64, seed: u64) -> Vec<String> {
    let mut ids = ids.to_vec();
    ids.sort();
    let keep = ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len().max(1));
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids.truncate(keep);
    ids.sort();
    ids
}
