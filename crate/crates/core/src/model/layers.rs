//! Reusable blocks: MLPs, the DIN activation unit and multi-head attention.

use rand::Rng;

use crate::error::Result;
use crate::numeric::{Graph, Init, ParamGroup, ParamId, ParamKind, ParamStore, Var};

fn dense(store: &mut ParamStore, name: String, group: ParamGroup, rows: usize, cols: usize, init: Init, rng: &mut impl Rng) -> ParamId {
    store.add(name, group, ParamKind::Dense, rows, cols, init, rng)
}

/// Fully connected stack with ReLU between layers and a linear last layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// `zero_last` starts the output layer at zero weights and bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        group: ParamGroup,
        input: usize,
        hidden: &[usize],
        output: usize,
        zero_last: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let init = if zero_last && i == last { Init::Zeros } else { Init::Xavier };
                let wid = dense(store, format!("{prefix}.{i}.w"), group, w[0], w[1], init, rng);
                let bid = dense(store, format!("{prefix}.{i}.b"), group, 1, w[1], Init::Zeros, rng);
                (wid, bid)
            })
            .collect();
        Mlp { layers }
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Option<Self> {
        let mut layers = Vec::new();
        while let (Some(w), Some(b)) = (
            store.id(&format!("{prefix}.{}.w", layers.len())),
            store.id(&format!("{prefix}.{}.b", layers.len())),
        ) {
            layers.push((w, b));
        }
        (!layers.is_empty()).then_some(Mlp { layers })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = g.param(w)?;
            let bv = g.param(b)?;
            let z = g.matmul(h, wv)?;
            h = g.add_row(z, bv)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

/// DIN activation unit: `score(q, k) = relu(q·Wq + k·Wk + (q⊙k)·Wp + b) · w`,
/// a reparametrization of the MLP over `[q, k, q⊙k]`, followed by a softmax
/// over keys and a weighted sum of the keys.
#[derive(Clone, Debug)]
pub struct AttentionUnit {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wp: ParamId,
    pub b: ParamId,
    pub w_out: ParamId,
}

impl AttentionUnit {
    pub fn new(store: &mut ParamStore, prefix: &str, group: ParamGroup, d: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        AttentionUnit {
            wq: dense(store, format!("{prefix}.wq"), group, d, hidden, Init::Xavier, rng),
            wk: dense(store, format!("{prefix}.wk"), group, d, hidden, Init::Xavier, rng),
            wp: dense(store, format!("{prefix}.wp"), group, d, hidden, Init::Xavier, rng),
            b: dense(store, format!("{prefix}.b"), group, 1, hidden, Init::Zeros, rng),
            w_out: dense(store, format!("{prefix}.w_out"), group, hidden, 1, Init::Xavier, rng),
        }
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Option<Self> {
        let get = |s: &str| store.id(&format!("{prefix}.{s}"));
        Some(AttentionUnit {
            wq: get("wq")?,
            wk: get("wk")?,
            wp: get("wp")?,
            b: get("b")?,
            w_out: get("w_out")?,
        })
    }

    /// Attention weights, one row per query: `q×m`.
    pub fn weights(&self, g: &mut Graph<'_>, queries: Var, keys: Var) -> Result<Var> {
        let (nq, _) = g.dims(queries);
        let (m, _) = g.dims(keys);
        let wq = g.param(self.wq)?;
        let wk = g.param(self.wk)?;
        let wp = g.param(self.wp)?;
        let b = g.param(self.b)?;
        let w_out = g.param(self.w_out)?;
        // All (query, key) pairs at once: row i·m + j pairs query i with key j.
        let q_idx: Vec<usize> = (0..nq).flat_map(|i| std::iter::repeat_n(i, m)).collect();
        let k_idx: Vec<usize> = (0..nq).flat_map(|_| 0..m).collect();
        let qa = g.matmul(queries, wq)?;
        let qa = g.add_row(qa, b)?;
        let kb = g.matmul(keys, wk)?;
        let q_pairs = g.select_rows(queries, &q_idx)?;
        let k_pairs = g.select_rows(keys, &k_idx)?;
        let inter = g.mul(q_pairs, k_pairs)?;
        let h = g.matmul(inter, wp)?;
        let qa_pairs = g.select_rows(qa, &q_idx)?;
        let kb_pairs = g.select_rows(kb, &k_idx)?;
        let h = g.add(h, qa_pairs)?;
        let h = g.add(h, kb_pairs)?;
        let h = g.relu(h);
        let s = g.matmul(h, w_out)?;
        let scores = g.reshape(s, nq, m)?;
        g.softmax(scores, None)
    }

    /// Pooled keys per query: `q×d`.
    pub fn pool(&self, g: &mut Graph<'_>, queries: Var, keys: Var) -> Result<Var> {
        let w = self.weights(g, queries, keys)?;
        g.matmul(w, keys)
    }
}

/// Projection weights of one multi-head attention block. Each of `wq`, `wk`,
/// `wv` is `d×d`; head `i` uses columns `i·d_h .. (i+1)·d_h`.
#[derive(Clone, Debug)]
pub struct MultiHead {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub heads: usize,
}

impl MultiHead {
    pub fn new(store: &mut ParamStore, prefix: &str, group: ParamGroup, d: usize, heads: usize, rng: &mut impl Rng) -> Self {
        MultiHead {
            wq: dense(store, format!("{prefix}.wq"), group, d, d, Init::Xavier, rng),
            wk: dense(store, format!("{prefix}.wk"), group, d, d, Init::Xavier, rng),
            wv: dense(store, format!("{prefix}.wv"), group, d, d, Init::Xavier, rng),
            wo: dense(store, format!("{prefix}.wo"), group, d, d, Init::Xavier, rng),
            heads,
        }
    }

    pub fn from_store(store: &ParamStore, prefix: &str, heads: usize) -> Option<Self> {
        let get = |s: &str| store.id(&format!("{prefix}.{s}"));
        Some(MultiHead {
            wq: get("wq")?,
            wk: get("wk")?,
            wv: get("wv")?,
            wo: get("wo")?,
            heads,
        })
    }
}

/// Intermediate values of one attention call.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    pub output: Var,
    /// Attention weights per head, each `q×m`.
    pub weights: Vec<Var>,
}

/// Multi-head target attention of `queries` (`q×d`) over `seq` (`m×d`).
/// Positions with `mask[j] == false` receive zero weight.
pub fn mhta(g: &mut Graph<'_>, mh: &MultiHead, queries: Var, seq: Var, mask: Option<&[bool]>) -> Result<AttentionTrace> {
    let (_, d) = g.dims(seq);
    let dh = d / mh.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let wq = g.param(mh.wq)?;
    let wk = g.param(mh.wk)?;
    let wv = g.param(mh.wv)?;
    let wo = g.param(mh.wo)?;
    let q = g.matmul(queries, wq)?;
    let k = g.matmul(seq, wk)?;
    let v = g.matmul(seq, wv)?;
    let mut heads = Vec::with_capacity(mh.heads);
    let mut weights = Vec::with_capacity(mh.heads);
    for h in 0..mh.heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let s = g.matmul_bt(qh, kh)?;
        let s = g.scale(s, scale);
        let a = g.softmax(s, mask)?;
        heads.push(g.matmul(a, vh)?);
        weights.push(a);
    }
    let cat = g.concat_cols(&heads)?;
    let output = g.matmul(cat, wo)?;
    Ok(AttentionTrace { output, weights })
}

/// Multi-head self-attention: every position queries the whole sequence.
/// Masked rows come out as zeros.
pub fn mhsa(g: &mut Graph<'_>, mh: &MultiHead, seq: Var, mask: Option<&[bool]>) -> Result<AttentionTrace> {
    let mut trace = mhta(g, mh, seq, seq, mask)?;
    if let Some(m) = mask {
        if m.iter().any(|&x| !x) {
            let keep: Vec<f64> = m.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
            let col = g.constant_matrix(m.len(), 1, keep)?;
            trace.output = g.mul_col(trace.output, col)?;
        }
    }
    Ok(trace)
}
