//! Five-fold train/validation/test planning (70/10/20 per fold).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_FOLDS: usize = 5;
pub const MIN_ITEMS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub fold: usize,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Validation size within one item of 10% such that the train share also stays within one
/// item of 70%.
fn validation_size(n: usize, test: usize) -> usize {
    let rest = n - test;
    let (val_target, train_target) = (0.1 * n as f64, 0.7 * n as f64);
    (0..=rest)
        .filter(|&v| {
            (v as f64 - val_target).abs() <= 1.0 && ((rest - v) as f64 - train_target).abs() <= 1.0
        })
        .min_by(|&a, &b| {
            let ka = ((a as f64 - val_target).abs(), ((rest - a) as f64 - train_target).abs());
            let kb = ((b as f64 - val_target).abs(), ((rest - b) as f64 - train_target).abs());
            ka.partial_cmp(&kb).expect("finite")
        })
        .expect("a feasible validation size exists when test is within one item of 20%")
}

/// Shuffles `ids` with `seed`, cuts five disjoint test shards, and draws each fold's
/// validation items from the front of the remaining (shuffled) order.
pub fn make_fold_plan(ids: &[String], seed: u64) -> Result<FoldPlan> {
    let n = ids.len();
    if n < MIN_ITEMS {
        return Err(Error::Config(format!(
            "fold planning needs at least {MIN_ITEMS} items, got {n}"
        )));
    }
    let mut unique = ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != n {
        return Err(Error::Config("item ids must be unique".into()));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = n / NUM_FOLDS;
    let extra = n % NUM_FOLDS;
    let mut bounds = Vec::with_capacity(NUM_FOLDS + 1);
    bounds.push(0);
    for k in 0..NUM_FOLDS {
        bounds.push(bounds[k] + base + usize::from(k < extra));
    }
    let folds = (0..NUM_FOLDS)
        .map(|k| {
            let test: Vec<String> = order[bounds[k]..bounds[k + 1]].to_vec();
            let rest: Vec<String> = order[..bounds[k]]
                .iter()
                .chain(&order[bounds[k + 1]..])
                .cloned()
                .collect();
            let v = validation_size(n, test.len());
            Fold {
                fold: k,
                validation: rest[..v].to_vec(),
                train: rest[v..].to_vec(),
                test,
            }
        })
        .collect();
    Ok(FoldPlan { seed, folds })
}

impl FoldPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn fold(&self, k: usize) -> Result<&Fold> {
        self.folds
            .get(k)
            .ok_or_else(|| Error::Config(format!("fold {k} not in plan of {}", self.folds.len())))
    }
}
