//! Ranking and distribution-fit metrics, each paired with a brute-force
//! oracle used by the test suites.

mod analysis;
mod scores;

pub use analysis::{
    diversity_group_gauc, intent_fit_report, user_diversity, ArchetypeFit, DiversityBucket, DiversityReport,
    IntentFitReport, DEFAULT_BUCKET_EDGES,
};

pub use scores::{read_scores, write_scores, SCORES_FILE};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredImpression {
    pub request_id: usize,
    pub user_id: usize,
    pub score: f64,
    pub label: u8,
    /// Intent diversity of the impression's user.
    #[serde(default)]
    pub intent_diversity: usize,
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            op: "auc",
            left: vec![scores.len()],
            right: vec![labels.len()],
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NumericInput("auc"));
    }
    let mut pos = 0;
    for &l in labels {
        match l {
            1 => pos += 1,
            0 => {}
            other => return Err(Error::Label(other as f64)),
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auc needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve by rank sum; tied pairs count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based midranks of the positives, doubled to stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        let positives = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += positives * twice_mid;
        i = j + 1;
    }
    let p = pos as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / 2.0 / (pos as f64 * neg as f64))
}

/// O(|P|·|N|) pairwise oracle for [`auc`].
pub fn auc_pairwise(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut twice_wins: u128 = 0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            if si > sj {
                twice_wins += 2;
            } else if si == sj {
                twice_wins += 1;
            }
        }
    }
    Ok(twice_wins as f64 / 2.0 / (pos as f64 * neg as f64))
}

fn group_by<K: Ord + Copy>(imps: &[ScoredImpression], key: impl Fn(&ScoredImpression) -> K) -> BTreeMap<K, (Vec<f64>, Vec<u8>)> {
    let mut groups: BTreeMap<K, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for imp in imps {
        let e = groups.entry(key(imp)).or_default();
        e.0.push(imp.score);
        e.1.push(imp.label);
    }
    groups
}

fn weighted_auc<K>(groups: BTreeMap<K, (Vec<f64>, Vec<u8>)>, f: impl Fn(&[f64], &[u8]) -> Result<f64>) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (scores, labels) in groups.values() {
        match f(scores, labels) {
            Ok(a) => {
                num += scores.len() as f64 * a;
                den += scores.len() as f64;
            }
            Err(Error::UndefinedMetric(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("no group has both classes".into()));
    }
    Ok(num / den)
}

/// Impression-weighted mean of per-user AUC; single-class users are left out.
pub fn gauc(imps: &[ScoredImpression]) -> Result<f64> {
    weighted_auc(group_by(imps, |i| i.user_id), auc)
}

/// [`gauc`] grouped by request instead of user.
pub fn gauc_by_request(imps: &[ScoredImpression]) -> Result<f64> {
    weighted_auc(group_by(imps, |i| i.request_id), auc)
}

/// Brute-force oracle for [`gauc`].
pub fn gauc_pairwise(imps: &[ScoredImpression]) -> Result<f64> {
    weighted_auc(group_by(imps, |i| i.user_id), auc_pairwise)
}

/// Relative improvement over a base model, in percent:
/// `((measured − 0.5) / (base − 0.5) − 1) · 100`.
pub fn rela_impr(measured: f64, base: f64) -> Result<f64> {
    if base == 0.5 {
        return Err(Error::UndefinedMetric("RelaImpr against a random base (0.5)".into()));
    }
    if !measured.is_finite() || !base.is_finite() {
        return Err(Error::NumericInput("rela_impr"));
    }
    Ok(((measured - 0.5) / (base - 0.5) - 1.0) * 100.0)
}

/// Round to two decimals, the reporting precision of RelaImpr.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn kl_terms(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).ln())
        .sum()
}

/// Jensen–Shannon divergence in nats.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            op: "js_divergence",
            left: vec![p.len()],
            right: vec![q.len()],
        });
    }
    if p.iter().chain(q).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Domain("js_divergence needs nonnegative finite entries".into()));
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * kl_terms(p, &m) + 0.5 * kl_terms(q, &m)).max(0.0))
}

pub use crate::numeric::kl_divergence;

/// Summary of one scored run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub gauc: f64,
    pub impressions: usize,
    pub users: usize,
    pub positives: usize,
    pub logloss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rela_impr_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rela_impr_gauc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diversity: Option<DiversityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intent_fit: Option<IntentFitReport>,
}

impl MetricReport {
    pub fn from_scores(imps: &[ScoredImpression]) -> Result<Self> {
        let scores: Vec<f64> = imps.iter().map(|i| i.score).collect();
        let labels: Vec<u8> = imps.iter().map(|i| i.label).collect();
        let mut logloss = 0.0;
        for (&s, &l) in scores.iter().zip(&labels) {
            logloss += crate::numeric::bce_loss(s, l as f64)?;
        }
        let users: std::collections::BTreeSet<usize> = imps.iter().map(|i| i.user_id).collect();
        Ok(MetricReport {
            auc: auc(&scores, &labels)?,
            gauc: gauc(imps)?,
            impressions: imps.len(),
            users: users.len(),
            positives: labels.iter().filter(|&&l| l == 1).count(),
            logloss: logloss / imps.len().max(1) as f64,
            base_name: None,
            rela_impr_auc: None,
            rela_impr_gauc: None,
            diversity: None,
            intent_fit: None,
        })
    }

    pub fn with_base(mut self, name: &str, base: &MetricReport) -> Result<Self> {
        self.base_name = Some(name.to_string());
        self.rela_impr_auc = Some(round2(rela_impr(self.auc, base.auc)?));
        self.rela_impr_gauc = Some(round2(rela_impr(self.gauc, base.gauc)?));
        Ok(self)
    }
}
