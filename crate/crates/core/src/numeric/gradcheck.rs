//! Central-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{ParamGroup, ParamKind, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
const DENOM_FLOOR: f64 = 1e-8;

fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn eval_scalar(g: &Graph<'_>, v: Var) -> Result<f64> {
    match g.dims(v) {
        (1, 1) => Ok(g.scalar(v)),
        (r, c) => Err(Error::Shape {
            op: "gradient_check",
            left: vec![r, c],
            right: vec![1, 1],
        }),
    }
}

/// Compare the reverse-mode gradient of `f` at `x` with central differences.
/// Returns the largest relative error over all coordinates.
pub fn gradient_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.input(x, true);
    let out = f(&mut g, xv)?;
    eval_scalar(&g, out)?;
    let analytic = g.backward(out)?.wrt_dense(&g, xv);

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        let mut side = |delta: f64| -> Result<f64> {
            probe.data_mut()[i] = orig + delta;
            let mut g = Graph::new();
            let xv = g.input(&probe, true);
            let out = f(&mut g, xv)?;
            eval_scalar(&g, out)
        };
        let numeric = (side(h)? - side(-h)?) / (2.0 * h);
        probe.data_mut()[i] = orig;
        worst = worst.max(rel_error(analytic[i], numeric, DENOM_FLOOR));
    }
    Ok(worst)
}

/// Per-group outcome of [`check_param_gradients`].
#[derive(Clone, Debug)]
pub struct GroupCheck {
    pub group: ParamGroup,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coordinates: usize,
}

/// Gradient check over parameters in a store.
///
/// `f` rebuilds the loss on a fresh graph. Every `stop_gradient` reached
/// during a perturbed evaluation is replayed with its unperturbed value, so
/// the finite differences measure the same blocked derivative that the
/// backward pass computes. At most `per_param` coordinates are probed per
/// tensor; for tables only rows that received gradient are sampled.
pub fn check_param_gradients<F>(
    store: &ParamStore,
    f: F,
    h: f64,
    per_param: usize,
    floor: f64,
    seed: u64,
) -> Result<Vec<GroupCheck>>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::with_params(store);
    let loss = f(&mut g)?;
    eval_scalar(&g, loss)?;
    let back = g.backward(loss)?;
    let stops = g.stop_values().to_vec();
    let grads = back.into_params();
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = store.clone();
    let mut report: Vec<GroupCheck> = Vec::new();

    for (id, p) in store.iter() {
        let candidates: Vec<usize> = match (p.kind, grads.get(id)) {
            (_, None) => continue,
            (ParamKind::Table, Some(pg)) => pg
                .rows
                .iter()
                .flatten()
                .flat_map(|&r| r * p.cols..(r + 1) * p.cols)
                .collect(),
            (ParamKind::Dense, Some(_)) => (0..p.data.len()).collect(),
        };
        let picked: Vec<usize> = if candidates.len() <= per_param {
            candidates
        } else {
            sample(&mut rng, candidates.len(), per_param)
                .into_iter()
                .map(|i| candidates[i])
                .collect()
        };
        let analytic = &grads.get(id).expect("filtered above").data;
        let entry = match report.iter().position(|r| r.group == p.group) {
            Some(i) => i,
            None => {
                report.push(GroupCheck {
                    group: p.group,
                    max_rel_error: 0.0,
                    max_abs_error: 0.0,
                    coordinates: 0,
                });
                report.len() - 1
            }
        };
        for k in picked {
            let orig = p.data[k];
            let mut side = |delta: f64| -> Result<f64> {
                work.get_mut(id).data[k] = orig + delta;
                let mut g = Graph::with_params(&work);
                g.replay_stops(stops.clone());
                let out = f(&mut g)?;
                eval_scalar(&g, out)
            };
            let numeric = (side(h)? - side(-h)?) / (2.0 * h);
            work.get_mut(id).data[k] = orig;
            let r = &mut report[entry];
            r.max_rel_error = r.max_rel_error.max(rel_error(analytic[k], numeric, floor));
            r.max_abs_error = r.max_abs_error.max((analytic[k] - numeric).abs());
            r.coordinates += 1;
        }
    }
    Ok(report)
}
