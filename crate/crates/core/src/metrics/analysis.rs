use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{gauc, js_divergence, ScoredImpression};
use crate::error::{Error, Result};
use crate::synth::{Archetype, Dataset};

/// Lower edges of the diversity buckets: 0, 1–2, 3–4, 5–6, 7+.
pub const DEFAULT_BUCKET_EDGES: [usize; 5] = [0, 1, 3, 5, 7];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeFit {
    pub archetype: Archetype,
    pub requests: usize,
    /// JS between the mean ground-truth and mean predicted distributions.
    pub js: f64,
    /// Same, with a uniform prediction in place of the model.
    pub js_uniform: f64,
    /// Mean over requests of the per-request JS.
    pub js_per_request: f64,
    pub predicted_curve: Vec<f64>,
    pub truth_curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentFitReport {
    pub n: usize,
    pub archetypes: Vec<ArchetypeFit>,
}

impl IntentFitReport {
    pub fn get(&self, a: Archetype) -> Option<&ArchetypeFit> {
        self.archetypes.iter().find(|f| f.archetype == a)
    }

    /// Tab-separated plot data per archetype: `archetype level predicted truth`.
    pub fn plot_rows(&self, a: Archetype) -> Vec<String> {
        self.get(a)
            .map(|f| {
                f.predicted_curve
                    .iter()
                    .zip(&f.truth_curve)
                    .enumerate()
                    .map(|(j, (p, t))| format!("{}\t{j}\t{p:.6}\t{t:.6}", a.as_str()))
                    .collect()
            })
            .unwrap_or_default()
    }
}

fn mean_curve(rows: &[&[f64]], n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    for r in rows {
        acc.iter_mut().zip(r.iter()).for_each(|(a, x)| *a += x);
    }
    acc.iter_mut().for_each(|a| *a /= rows.len() as f64);
    acc
}

/// Intent fit per archetype. `rows` holds `(archetype, y_int, E_int)` for
/// each labeled held-out request.
pub fn intent_fit_report(rows: &[(Archetype, &[f64], &[f64])], archetypes: &[Archetype]) -> Result<IntentFitReport> {
    let n = rows
        .first()
        .map(|r| r.1.len())
        .ok_or_else(|| Error::UndefinedMetric("intent fit over no requests".into()))?;
    let uniform = vec![1.0 / n as f64; n];
    let mut out = Vec::new();
    for &a in archetypes {
        let mine: Vec<_> = rows.iter().filter(|r| r.0 == a).collect();
        if mine.is_empty() {
            return Err(Error::UndefinedMetric(format!("no labeled requests for archetype {}", a.as_str())));
        }
        let truths: Vec<&[f64]> = mine.iter().map(|r| r.1).collect();
        let preds: Vec<&[f64]> = mine.iter().map(|r| r.2).collect();
        let truth_curve = mean_curve(&truths, n);
        let predicted_curve = mean_curve(&preds, n);
        let mut per_request = 0.0;
        for r in &mine {
            per_request += js_divergence(r.1, r.2)?;
        }
        out.push(ArchetypeFit {
            archetype: a,
            requests: mine.len(),
            js: js_divergence(&truth_curve, &predicted_curve)?,
            js_uniform: js_divergence(&truth_curve, &uniform)?,
            js_per_request: per_request / mine.len() as f64,
            predicted_curve,
            truth_curve,
        });
    }
    Ok(IntentFitReport { n, archetypes: out })
}

/// Per user: number of distinct categories among clicked targets whose
/// category differs from the trigger's, over the given requests.
pub fn user_diversity(ds: &Dataset, requests: &[usize]) -> Result<Vec<usize>> {
    let mut cats: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ds.users.len()];
    for &ri in requests {
        let r = &ds.requests[ri];
        let trig_cat = ds.catalog.item(r.trigger_item_id)?.category_id;
        for t in r.clicked() {
            let c = ds.catalog.item(t)?.category_id;
            if c != trig_cat {
                cats[r.user_id].insert(c);
            }
        }
    }
    Ok(cats.into_iter().map(|s| s.len()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityBucket {
    pub label: String,
    pub users: usize,
    pub impressions: usize,
    pub model_gauc: Option<f64>,
    pub base_gauc: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub buckets: Vec<DiversityBucket>,
}

impl DiversityReport {
    /// Lowest and highest buckets that have a defined delta.
    pub fn extremes(&self) -> Option<(&DiversityBucket, &DiversityBucket)> {
        let defined: Vec<&DiversityBucket> = self.buckets.iter().filter(|b| b.delta.is_some()).collect();
        Some((*defined.first()?, *defined.last()?))
    }
}

fn bucket_label(edges: &[usize], k: usize) -> String {
    match (edges[k], edges.get(k + 1)) {
        (lo, None) => format!("{lo}+"),
        (lo, Some(&hi)) if hi == lo + 1 => format!("{lo}"),
        (lo, Some(&hi)) => format!("{lo}-{}", hi - 1),
    }
}

fn gauc_or_none(imps: &[ScoredImpression]) -> Result<Option<f64>> {
    match gauc(imps) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// GAUC of `model` minus GAUC of `base` within each diversity bucket. Both
/// runs must score the same impressions in the same order.
pub fn diversity_group_gauc(model: &[ScoredImpression], base: &[ScoredImpression], edges: &[usize]) -> Result<DiversityReport> {
    if model.len() != base.len() {
        return Err(Error::Shape {
            op: "diversity_group_gauc",
            left: vec![model.len()],
            right: vec![base.len()],
        });
    }
    if edges.is_empty() || edges[0] != 0 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("bucket edges must start at 0 and increase: {edges:?}")));
    }
    for (m, b) in model.iter().zip(base) {
        if m.request_id != b.request_id || m.user_id != b.user_id || m.label != b.label {
            return Err(Error::Data("score files do not cover the same impressions".into()));
        }
    }
    let bucket_of = |d: usize| edges.iter().rposition(|&e| d >= e).expect("edges start at 0");
    let mut per: BTreeMap<usize, (Vec<ScoredImpression>, Vec<ScoredImpression>, BTreeSet<usize>)> = BTreeMap::new();
    for (m, b) in model.iter().zip(base) {
        let e = per.entry(bucket_of(m.intent_diversity)).or_default();
        e.0.push(m.clone());
        e.1.push(b.clone());
        e.2.insert(m.user_id);
    }
    let mut buckets = Vec::with_capacity(edges.len());
    for k in 0..edges.len() {
        let label = bucket_label(edges, k);
        match per.get(&k) {
            None => buckets.push(DiversityBucket {
                label,
                users: 0,
                impressions: 0,
                model_gauc: None,
                base_gauc: None,
                delta: None,
            }),
            Some((m, b, users)) => {
                let mg = gauc_or_none(m)?;
                let bg = gauc_or_none(b)?;
                buckets.push(DiversityBucket {
                    label,
                    users: users.len(),
                    impressions: m.len(),
                    model_gauc: mg,
                    base_gauc: bg,
                    delta: mg.zip(bg).map(|(x, y)| x - y),
                });
            }
        }
    }
    Ok(DiversityReport { buckets })
}
