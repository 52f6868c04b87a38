//! AdaGrad with sparse row updates for embedding tables.

use super::graph::Gradients;
use super::params::{ParamGroup, ParamStore};
use crate::error::{Error, Result};

pub const ADAGRAD_EPS: f64 = 1e-8;

/// One AdaGrad update on a flat slice.
///
/// `accum += g²; param -= lr · g / (√accum + eps)`.
pub fn adagrad_step(param: &mut [f64], grad: &[f64], accum: &mut [f64], lr: f64, eps: f64) -> Result<()> {
    if param.len() != grad.len() || param.len() != accum.len() {
        return Err(Error::Shape {
            op: "adagrad_step",
            left: vec![param.len()],
            right: vec![grad.len(), accum.len()],
        });
    }
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    for ((p, &g), a) in param.iter_mut().zip(grad).zip(accum.iter_mut()) {
        *a += g * g;
        *p -= lr * g / (a.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer state for a whole [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AdaGrad {
    lr: f64,
    eps: f64,
    accum: Vec<Option<Vec<f64>>>,
}

impl AdaGrad {
    pub fn new(lr: f64) -> Self {
        Self::with_eps(lr, ADAGRAD_EPS)
    }

    pub fn with_eps(lr: f64, eps: f64) -> Self {
        AdaGrad {
            lr,
            eps,
            accum: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Squared-gradient accumulator of a parameter, if it was ever updated.
    pub fn accumulator(&self, index: usize) -> Option<&[f64]> {
        self.accum.get(index).and_then(|a| a.as_deref())
    }

    /// Apply `grads`. Each group's learning rate is `lr · scale(group)`;
    /// groups with scale 0 are left untouched, accumulators included.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &Gradients,
        scale: impl Fn(ParamGroup) -> f64,
    ) -> Result<()> {
        if self.accum.len() < store.len() {
            self.accum.resize(store.len(), None);
        }
        for (id, g) in grads.iter() {
            let p = store.get_mut(id);
            let s = scale(p.group);
            if s == 0.0 {
                continue;
            }
            if g.data.len() != p.data.len() {
                return Err(Error::Shape {
                    op: "adagrad",
                    left: vec![p.rows, p.cols],
                    right: vec![g.data.len()],
                });
            }
            let lr = self.lr * s;
            let acc = self.accum[id.index()].get_or_insert_with(|| vec![0.0; p.data.len()]);
            match &g.rows {
                Some(rows) => {
                    let c = p.cols;
                    for &r in rows {
                        let span = r * c..(r + 1) * c;
                        adagrad_step(&mut p.data[span.clone()], &g.data[span.clone()], &mut acc[span], lr, self.eps)?;
                    }
                }
                None => adagrad_step(&mut p.data, &g.data, acc, lr, self.eps)?,
            }
        }
        Ok(())
    }
}
