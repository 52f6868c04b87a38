use super::TrainData;
use crate::error::Result;
use crate::error::Error;
use crate::metrics::{intent_fit_report, IntentFitReport, MetricReport, ScoredImpression};
use crate::synth::Archetype;
use crate::model::{DaianModel, IntentMode};
use crate::numeric::{Graph, ParamGroup};

/// Requests per forward-only graph when scoring.
pub const SCORE_CHUNK: usize = 32;

fn frozen_graph(model: &DaianModel) -> Graph<'_> {
    let mut g = Graph::with_params(&model.params);
    for grp in ParamGroup::ALL {
        g.freeze(grp);
    }
    g
}

/// Click probabilities for every impression of `reqs`, in order.
/// `diversity` (indexed by user) fills the per-impression diversity field.
pub fn score_requests(
    model: &DaianModel,
    data: &TrainData<'_>,
    reqs: &[usize],
    diversity: Option<&[usize]>,
) -> Result<Vec<ScoredImpression>> {
    let ctx = data.ctx();
    let mut out = Vec::new();
    for chunk in reqs.chunks(SCORE_CHUNK) {
        let mut g = frozen_graph(model);
        let mut nodes = Vec::with_capacity(chunk.len());
        for &r in chunk {
            let req = &data.ds.requests[r];
            let cands: Vec<usize> = (0..req.impressions.len()).collect();
            nodes.push(model.forward_request(&mut g, &ctx, req, &cands, IntentMode::Predicted)?.p_ctr);
        }
        for (&r, p) in chunk.iter().zip(nodes) {
            let req = &data.ds.requests[r];
            for (imp, &s) in req.impressions.iter().zip(g.value(p)) {
                out.push(ScoredImpression {
                    request_id: req.request_id,
                    user_id: req.user_id,
                    score: s,
                    label: imp.label,
                    intent_diversity: diversity.map_or(0, |d| d[req.user_id]),
                });
            }
        }
    }
    Ok(out)
}

/// Predicted intent distribution per request.
pub fn predict_intents(model: &DaianModel, data: &TrainData<'_>, reqs: &[usize]) -> Result<Vec<Vec<f64>>> {
    let ctx = data.ctx();
    let mut out = Vec::with_capacity(reqs.len());
    for chunk in reqs.chunks(SCORE_CHUNK) {
        let mut g = frozen_graph(model);
        let mut nodes = Vec::with_capacity(chunk.len());
        for &r in chunk {
            nodes.push(model.uim_forward(&mut g, &ctx, &data.ds.requests[r])?);
        }
        out.extend(nodes.into_iter().map(|v| g.value(v).to_vec()));
    }
    Ok(out)
}

pub fn evaluate(model: &DaianModel, data: &TrainData<'_>, reqs: &[usize]) -> Result<MetricReport> {
    MetricReport::from_scores(&score_requests(model, data, reqs, None)?)
}

/// Predicted vs counted intent per archetype over the labeled requests of `reqs`.
pub fn intent_fit(model: &DaianModel, data: &TrainData<'_>, reqs: &[usize]) -> Result<IntentFitReport> {
    if model.uim.is_none() {
        return Err(Error::Config("model has no intent estimator".into()));
    }
    let labeled: Vec<usize> = reqs.iter().copied().filter(|&r| data.labels.get(r).is_some()).collect();
    let preds = predict_intents(model, data, &labeled)?;
    let mut rows = Vec::with_capacity(labeled.len());
    for (&r, p) in labeled.iter().zip(&preds) {
        let user = data.ds.user(data.ds.requests[r].user_id)?;
        let y = data.labels.get(r).expect("filtered to labeled requests");
        rows.push((user.archetype, y, p.as_slice()));
    }
    let mut present: Vec<Archetype> = Vec::new();
    for a in [Archetype::Specific, Archetype::Broad] {
        if rows.iter().any(|row| row.0 == a) {
            present.push(a);
        }
    }
    intent_fit_report(&rows, &present)
}
