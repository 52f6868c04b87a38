//! Similarity levels, counted intent distributions and trigger-filtered
//! subsequences.

mod labels;

pub use labels::{label_dataset, read_labels, write_labels, IntentLabels, LABELS_FILE};

use crate::error::{Error, Result};
use crate::synth::{Behavior, ItemCatalog};

/// Level of a similarity under equal-width binning of [-1, 1] into `n` bins:
/// `min(floor((s + 1) / 2 · n), n − 1)` after clamping `s`.
pub fn bin_similarity(sim: f64, n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 similarity levels, got {n}")));
    }
    if sim.is_nan() {
        return Err(Error::NumericInput("bin_similarity"));
    }
    let s = sim.clamp(-1.0, 1.0);
    let idx = ((s + 1.0) / 2.0 * n as f64).floor() as usize;
    Ok(idx.min(n - 1))
}

/// Lower edge of each level, plus the final upper edge 1.
pub fn level_edges(n: usize) -> Vec<f64> {
    (0..=n).map(|j| -1.0 + 2.0 * j as f64 / n as f64).collect()
}

/// Probability vector over similarity levels.
#[derive(Clone, Debug, PartialEq)]
pub struct IntentDistribution {
    pub probs: Vec<f64>,
}

impl IntentDistribution {
    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn uniform(n: usize) -> Self {
        IntentDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Normalized histogram of level indices; `None` when there are none.
    pub fn from_levels(levels: &[usize], n: usize) -> Result<Option<Self>> {
        if levels.is_empty() {
            return Ok(None);
        }
        let mut counts = vec![0usize; n];
        for &l in levels {
            if l >= n {
                return Err(Error::Domain(format!("level {l} outside 0..{n}")));
            }
            counts[l] += 1;
        }
        let total = levels.len() as f64;
        Ok(Some(IntentDistribution {
            probs: counts.into_iter().map(|c| c as f64 / total).collect(),
        }))
    }
}

/// Ground-truth intent of one request: share of clicks per similarity level
/// of (trigger, clicked target). `None` marks a request without clicks.
pub fn label_request(
    clicked: &[usize],
    trigger: usize,
    catalog: &ItemCatalog,
    n: usize,
) -> Result<Option<IntentDistribution>> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 similarity levels, got {n}")));
    }
    let levels = clicked
        .iter()
        .map(|&t| bin_similarity(catalog.similarity(trigger, t)?, n))
        .collect::<Result<Vec<_>>>()?;
    IntentDistribution::from_levels(&levels, n)
}

/// Behaviors whose similarity to the trigger is at least `tau`, in order.
pub fn select_subsequence(
    seq: &[Behavior],
    trigger: usize,
    catalog: &ItemCatalog,
    tau: f64,
) -> Result<Vec<Behavior>> {
    let tau = tau.clamp(-1.0, 1.0);
    let mut out = Vec::new();
    for b in seq {
        if catalog.similarity(b.item_id, trigger)? >= tau {
            out.push(*b);
        }
    }
    Ok(out)
}

/// Dense item-by-item similarity matrix.
#[derive(Clone, Debug)]
pub struct SimilarityTable {
    n_items: usize,
    sims: Vec<f64>,
}

impl SimilarityTable {
    pub fn new(catalog: &ItemCatalog) -> Result<Self> {
        let n_items = catalog.len();
        let mut sims = vec![0.0; n_items * n_items];
        for a in 0..n_items {
            for b in a..n_items {
                let s = catalog.similarity(a, b)?;
                sims[a * n_items + b] = s;
                sims[b * n_items + a] = s;
            }
        }
        Ok(SimilarityTable { n_items, sims })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.sims[a * self.n_items + b]
    }

    pub fn level(&self, a: usize, b: usize, n: usize) -> Result<usize> {
        bin_similarity(self.get(a, b), n)
    }

    /// Items grouped by their level relative to `anchor`.
    pub fn buckets(&self, anchor: usize, n: usize, exclude: Option<usize>) -> Result<Vec<Vec<usize>>> {
        let mut out = vec![Vec::new(); n];
        for item in 0..self.n_items {
            if Some(item) == exclude {
                continue;
            }
            out[self.level(anchor, item, n)?].push(item);
        }
        Ok(out)
    }

    /// Positions of `seq` with similarity to `trigger` at least `tau`.
    pub fn subsequence_positions(&self, seq: &[Behavior], trigger: usize, tau: f64) -> Vec<usize> {
        let tau = tau.clamp(-1.0, 1.0);
        seq.iter()
            .enumerate()
            .filter(|(_, b)| self.get(b.item_id, trigger) >= tau)
            .map(|(i, _)| i)
            .collect()
    }
}
