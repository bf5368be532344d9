use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DealerError, Result};
use crate::training::{accuracy, train_erm, LossSpec, Sample};

/// Maps a coalition of owner ids to a model utility in [0, 1]. Must be
/// deterministic given the subset, and safe for concurrent read-only use.
pub trait UtilityOracle: Sync {
    /// `subset` is sorted ascending and duplicate-free.
    fn utility(&self, subset: &[u32]) -> f64;
}

impl<F: Fn(&[u32]) -> f64 + Sync> UtilityOracle for F {
    fn utility(&self, subset: &[u32]) -> f64 {
        self(subset)
    }
}

/// Per-owner valuations for one tier, with estimation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub owner_ids: Vec<u32>,
    /// Aligned with `owner_ids`.
    pub values: Vec<f64>,
    /// 0 for the exact computation.
    pub permutations_used: u32,
    /// Running mean vectors recorded at checkpoints (Monte Carlo only).
    pub running_mean_history: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl ShapleyReport {
    pub fn value_of(&self, owner: u32) -> Option<f64> {
        self.owner_ids
            .iter()
            .position(|&id| id == owner)
            .map(|i| self.values[i])
    }
}

const EXACT_OWNER_LIMIT: usize = 20;

fn sorted_ids(owners: &[u32]) -> Vec<u32> {
    let mut ids = owners.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Shapley values by full subset enumeration: SV_i is the average over
/// coalition sizes of the mean marginal contribution of owner i.
pub fn exact_shapley(owners: &[u32], oracle: &dyn UtilityOracle) -> Result<ShapleyReport> {
    let ids = sorted_ids(owners);
    let n = ids.len();
    if n > EXACT_OWNER_LIMIT {
        return Err(DealerError::TooManyOwners(n, EXACT_OWNER_LIMIT));
    }

    // Utility of every subset, indexed by bitmask over `ids`.
    let mut utilities = vec![0.0; 1 << n];
    let mut members = Vec::with_capacity(n);
    for mask in 0..(1u32 << n) {
        members.clear();
        for (bit, &id) in ids.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                members.push(id);
            }
        }
        utilities[mask as usize] = oracle.utility(&members);
    }

    // Binomial coefficients C(n-1, k).
    let mut binom = vec![1.0f64; n.max(1)];
    for k in 1..n {
        binom[k] = binom[k - 1] * (n - k) as f64 / k as f64;
    }

    let mut values = vec![0.0; n];
    for i in 0..n {
        let bit = 1u32 << i;
        let mut total = 0.0;
        for mask in 0..(1u32 << n) {
            if mask & bit != 0 {
                continue;
            }
            let size = mask.count_ones() as usize;
            total += (utilities[(mask | bit) as usize] - utilities[mask as usize]) / binom[size];
        }
        values[i] = total / n as f64;
    }

    Ok(ShapleyReport {
        owner_ids: ids,
        values,
        permutations_used: 0,
        running_mean_history: None,
        seed: 0,
    })
}

/// Permutation-sampling estimator: scan each sampled permutation front to
/// back, accumulate the marginal utility of every prefix extension, and
/// report the mean over permutations.
pub fn monte_carlo_shapley(
    owners: &[u32],
    oracle: &dyn UtilityOracle,
    permutations: u32,
    seed: u64,
) -> Result<ShapleyReport> {
    assert!(permutations >= 1, "need at least one permutation");
    let ids = sorted_ids(owners);
    let n = ids.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Prefixes repeat heavily across permutations; memoize by subset.
    let mut cache: HashMap<Vec<u32>, f64> = HashMap::new();
    let empty_utility = *cache
        .entry(Vec::new())
        .or_insert_with(|| oracle.utility(&[]));

    let mut sums = vec![0.0; n];
    let checkpoint_every = (permutations / 100).max(1);
    let mut history = Vec::new();

    let mut order: Vec<usize> = (0..n).collect();
    for k in 1..=permutations {
        order.shuffle(&mut rng);
        let mut prefix: Vec<u32> = Vec::with_capacity(n);
        let mut prev = empty_utility;
        for &idx in &order {
            let pos = prefix.partition_point(|&id| id < ids[idx]);
            prefix.insert(pos, ids[idx]);
            let cur = *cache
                .entry(prefix.clone())
                .or_insert_with(|| oracle.utility(&prefix));
            sums[idx] += cur - prev;
            prev = cur;
        }
        if k % checkpoint_every == 0 || k == permutations {
            history.push(sums.iter().map(|s| s / k as f64).collect());
        }
    }

    let values = sums.iter().map(|s| s / permutations as f64).collect();
    Ok(ShapleyReport {
        owner_ids: ids,
        values,
        permutations_used: permutations,
        running_mean_history: Some(history),
        seed,
    })
}

/// Realizes the utility function as classification accuracy of the
/// configured (non-private) ERM model on a held-out evaluation set.
/// The empty coalition scores the majority-class baseline.
pub struct AccuracyOracle {
    samples: BTreeMap<u32, Sample>,
    eval_set: Vec<Sample>,
    spec: LossSpec,
    tolerance: f64,
    seed: u64,
    cache: Mutex<HashMap<Vec<u32>, f64>>,
}

impl AccuracyOracle {
    pub fn new(
        samples: BTreeMap<u32, Sample>,
        eval_set: Vec<Sample>,
        spec: LossSpec,
        tolerance: f64,
        seed: u64,
    ) -> Result<Self> {
        if eval_set.is_empty() {
            return Err(DealerError::EmptyEvalSet);
        }
        Ok(AccuracyOracle {
            samples,
            eval_set,
            spec,
            tolerance,
            seed,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn majority_baseline(&self) -> f64 {
        let positive = self
            .eval_set
            .iter()
            .filter(|(_, y)| *y > 0.0)
            .count();
        let negative = self.eval_set.len() - positive;
        positive.max(negative) as f64 / self.eval_set.len() as f64
    }

    fn train_and_score(&self, subset: &[u32]) -> f64 {
        if subset.is_empty() {
            return self.majority_baseline();
        }
        let data: Vec<Sample> = subset
            .iter()
            .filter_map(|id| self.samples.get(id).cloned())
            .collect();
        if data.is_empty() {
            return self.majority_baseline();
        }
        match train_erm(&data, &self.spec, self.tolerance, self.seed) {
            Ok(w) => accuracy(&w, &self.eval_set),
            Err(_) => 0.0,
        }
    }
}

impl UtilityOracle for AccuracyOracle {
    fn utility(&self, subset: &[u32]) -> f64 {
        if let Some(v) = self.cache.lock().unwrap().get(subset) {
            return *v;
        }
        let v = self.train_and_score(subset);
        self.cache.lock().unwrap().insert(subset.to_vec(), v);
        v
    }
}

/// Trains on the selected owners and returns held-out accuracy; a one-shot
/// convenience wrapper around `AccuracyOracle`.
pub fn utility_accuracy(
    train_ids: &[u32],
    samples: &BTreeMap<u32, Sample>,
    eval_set: &[Sample],
    spec: &LossSpec,
    tolerance: f64,
    seed: u64,
) -> Result<f64> {
    let oracle = AccuracyOracle::new(samples.clone(), eval_set.to_vec(), *spec, tolerance, seed)?;
    Ok(oracle.utility(&sorted_ids(train_ids)))
}
