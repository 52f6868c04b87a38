use super::{DaianModel, Tables};
use crate::error::{Error, Result};
use crate::intent::{bin_similarity, SimilarityTable};
use crate::numeric::{Graph, Var};
use crate::synth::{ItemCatalog, Request, UserProfile};

/// Read-only data a forward pass needs besides the request itself.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    pub catalog: &'a ItemCatalog,
    pub users: &'a [UserProfile],
    pub sims: &'a SimilarityTable,
}

/// Source of the intent distribution fed to the downstream branches.
#[derive(Clone, Copy, Debug)]
pub enum IntentMode<'a> {
    /// The intent estimator's output.
    Predicted,
    /// Counted ground truth; `None` (no clicks) falls back to the detached
    /// prediction.
    GroundTruth(Option<&'a [f64]>),
    /// Every intent-dependent tower input replaced by zeros.
    Zero,
}

/// Graph nodes of one request. Row `i` of per-candidate nodes belongs to the
/// `i`-th requested impression.
#[derive(Clone, Debug)]
pub struct RequestNodes {
    pub p_ctr: Var,
    pub logits: Var,
    pub tower_input: Var,
    pub base_features: Var,
    pub din_weights: Var,
    pub e_int: Option<Var>,
    pub u_int: Option<Var>,
    pub e_imp: Option<Var>,
    pub e_exp: Option<Var>,
    pub u_co: Option<Var>,
    pub u_sim: Option<Var>,
    pub delta: Option<Var>,
    pub u_enh: Option<Var>,
    pub delta_exp: Option<Var>,
    pub delta_imp: Option<Var>,
    pub e_exp_sim: Option<Var>,
    pub e_imp_sim: Option<Var>,
    /// `(blocked input, stop_gradient output)` for every blocking site.
    pub stops: Vec<(Var, Var)>,
}

impl DaianModel {
    /// Item embeddings `[id row ⊕ side row]` for parallel id lists.
    pub fn embed_items(&self, g: &mut Graph<'_>, tables: &Tables, items: &[usize], sides: &[usize]) -> Result<Var> {
        let ids = g.gather(tables.item, items)?;
        let side = g.gather(tables.side, sides)?;
        g.concat_cols(&[ids, side])
    }

    pub fn embed_user(&self, g: &mut Graph<'_>, tables: &Tables, user: &UserProfile) -> Result<Var> {
        if user.profile_feature_ids.len() != tables.profile.len() {
            return Err(Error::Data(format!(
                "user {} has {} profile features, model expects {}",
                user.user_id,
                user.profile_feature_ids.len(),
                tables.profile.len()
            )));
        }
        let mut parts = vec![g.gather(tables.user, &[user.user_id])?];
        for (&t, &f) in tables.profile.iter().zip(&user.profile_feature_ids) {
            parts.push(g.gather(t, &[f])?);
        }
        g.concat_cols(&parts)
    }

    fn embed_seq(&self, g: &mut Graph<'_>, tables: &Tables, req: &Request) -> Result<Var> {
        if req.behavior_seq.is_empty() {
            return Ok(g.zeros(1, self.config.d()));
        }
        let items: Vec<usize> = req.behavior_seq.iter().map(|b| b.item_id).collect();
        let sides: Vec<usize> = req.behavior_seq.iter().map(|b| b.side_info_id).collect();
        self.embed_items(g, tables, &items, &sides)
    }

    fn user_of<'c>(&self, ctx: &Context<'c>, req: &Request) -> Result<&'c UserProfile> {
        ctx.users
            .get(req.user_id)
            .filter(|u| u.user_id == req.user_id)
            .ok_or_else(|| Error::Data(format!("request {} has unknown user {}", req.request_id, req.user_id)))
    }

    fn side_of(&self, ctx: &Context<'_>, item: usize) -> Result<usize> {
        Ok(ctx.catalog.item(item)?.side_info_id)
    }

    /// Predicted intent distribution (`1×n`) from the θ-owned network.
    pub fn uim_forward(&self, g: &mut Graph<'_>, ctx: &Context<'_>, req: &Request) -> Result<Var> {
        let uim = self
            .uim
            .as_ref()
            .ok_or_else(|| Error::Config("model has no intent estimator".into()))?;
        let user = self.user_of(ctx, req)?;
        let seq = self.embed_seq(g, &uim.tables, req)?;
        let trig_side = self.side_of(ctx, req.trigger_item_id)?;
        let trig = self.embed_items(g, &uim.tables, &[req.trigger_item_id], &[trig_side])?;
        let eu = self.embed_user(g, &uim.tables, user)?;
        let pooled = uim.pool.pool(g, trig, seq)?;
        let x = g.concat_cols(&[eu, pooled, trig])?;
        let logits = uim.mlp.forward(g, x)?;
        g.softmax(logits, None)
    }

    /// Full forward pass for the impressions `cands` of `req`.
    pub fn forward_request(
        &self,
        g: &mut Graph<'_>,
        ctx: &Context<'_>,
        req: &Request,
        cands: &[usize],
        mode: IntentMode<'_>,
    ) -> Result<RequestNodes> {
        let cfg = &self.config;
        if cands.is_empty() {
            return Err(Error::Data(format!("request {} scored with no candidates", req.request_id)));
        }
        let c = cands.len();
        let user = self.user_of(ctx, req)?;
        let targets = cands
            .iter()
            .map(|&i| {
                req.impressions
                    .get(i)
                    .map(|imp| imp.target_item_id)
                    .ok_or_else(|| Error::Data(format!("request {} has no impression {i}", req.request_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let target_sides = targets
            .iter()
            .map(|&t| self.side_of(ctx, t))
            .collect::<Result<Vec<_>>>()?;
        let trig_side = self.side_of(ctx, req.trigger_item_id)?;

        let tables = &self.base.tables;
        let seq = self.embed_seq(g, tables, req)?;
        let trig = self.embed_items(g, tables, &[req.trigger_item_id], &[trig_side])?;
        let tgt = self.embed_items(g, tables, &targets, &target_sides)?;
        let eu = self.embed_user(g, tables, user)?;
        let din_weights = self.base.din.weights(g, tgt, seq)?;
        let pooled = g.matmul(din_weights, seq)?;
        let eu_rep = g.repeat_rows(eu, c)?;
        let trig_rep = g.repeat_rows(trig, c)?;
        let base_features = g.concat_cols(&[eu_rep, pooled, tgt, trig_rep])?;

        let mut out = RequestNodes {
            p_ctr: base_features,
            logits: base_features,
            tower_input: base_features,
            base_features,
            din_weights,
            e_int: None,
            u_int: None,
            e_imp: None,
            e_exp: None,
            u_co: None,
            u_sim: None,
            delta: None,
            u_enh: None,
            delta_exp: None,
            delta_imp: None,
            e_exp_sim: None,
            e_imp_sim: None,
            stops: Vec::new(),
        };

        let extra = cfg.tower_input_dim() - cfg.base_dim();
        let tower_input = if matches!(mode, IntentMode::Zero) || extra == 0 {
            if extra == 0 {
                base_features
            } else {
                let z = g.zeros(c, extra);
                g.concat_cols(&[base_features, z])?
            }
        } else {
            self.intent_features(g, ctx, req, &targets, seq, trig, tgt, mode, &mut out)?
        };

        let logits = self.base.tower.forward(g, tower_input)?;
        out.tower_input = tower_input;
        out.logits = logits;
        out.p_ctr = g.sigmoid(logits);
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn intent_features(
        &self,
        g: &mut Graph<'_>,
        ctx: &Context<'_>,
        req: &Request,
        targets: &[usize],
        seq: Var,
        trig: Var,
        tgt: Var,
        mode: IntentMode<'_>,
        out: &mut RequestNodes,
    ) -> Result<Var> {
        let cfg = &self.config;
        let c = targets.len();
        let n = cfg.n_levels;

        let e_int = if cfg.components.uim {
            Some(match mode {
                IntentMode::GroundTruth(Some(y)) => {
                    if y.len() != n {
                        return Err(Error::shape("ground-truth intent", &[n], &[y.len()]));
                    }
                    g.constant_matrix(1, n, y.to_vec())?
                }
                IntentMode::GroundTruth(None) => {
                    let p = self.uim_forward(g, ctx, req)?;
                    let s = g.stop_gradient(p)?;
                    out.stops.push((p, s));
                    s
                }
                _ => self.uim_forward(g, ctx, req)?,
            })
        } else if cfg.components.die {
            Some(g.constant_matrix(1, n, vec![1.0 / n as f64; n])?)
        } else {
            None
        };
        out.e_int = e_int;

        let mut e_imp_rep = None;
        let mut e_exp = None;
        if let Some(die) = &self.die {
            let e_int = e_int.expect("intent is always present with extraction");
            let x = g.concat_cols(&[e_int, trig])?;
            let u_int = die.uint.forward(g, x)?;
            let e_imp = super::layers::mhta(g, &die.i2e, u_int, seq, None)?.output;
            let positions = if req.behavior_seq.is_empty() {
                Vec::new()
            } else {
                ctx.sims
                    .subsequence_positions(&req.behavior_seq, req.trigger_item_id, cfg.tau)
            };
            let sub = if positions.is_empty() {
                g.param(die.placeholder)?
            } else {
                g.select_rows(seq, &positions)?
            };
            let sub = super::layers::mhsa(g, &die.e2e_self, sub, None)?.output;
            let exp = super::layers::mhta(g, &die.e2e_target, tgt, sub, None)?.output;
            out.u_int = Some(u_int);
            out.e_imp = Some(e_imp);
            out.e_exp = Some(exp);
            e_imp_rep = Some(g.repeat_rows(e_imp, c)?);
            e_exp = Some(exp);
        }

        let mut u_enh = None;
        if let Some(sein) = &self.sein {
            let trig_rep = g.repeat_rows(trig, c)?;
            let pair = g.concat_cols(&[tgt, trig_rep])?;
            let u_co = sein.proj.forward(g, pair)?;
            let co_stopped = g.stop_gradient(u_co)?;
            out.stops.push((u_co, co_stopped));
            let bins = targets
                .iter()
                .map(|&t| bin_similarity(ctx.sims.get(t, req.trigger_item_id), cfg.n_sim))
                .collect::<Result<Vec<_>>>()?;
            let u_sim = g.gather(sein.bins, &bins)?;
            let delta = g.norm_ratio(u_sim, co_stopped)?;
            let neg = g.scale(delta, -1.0);
            let rest = g.add_scalar(neg, 1.0);
            let a = g.mul_col(u_sim, delta)?;
            let b = g.mul_col(co_stopped, rest)?;
            let enh = g.add(a, b)?;
            out.u_co = Some(u_co);
            out.u_sim = Some(u_sim);
            out.delta = Some(delta);
            out.u_enh = Some(enh);
            u_enh = Some(enh);

            if let (Some(exp), Some(imp)) = (e_exp, e_imp_rep) {
                let (gate_exp, exp_sim) = shift(g, &sein.su_exp, enh, exp, &mut out.stops)?;
                let (gate_imp, imp_sim) = shift(g, &sein.su_imp, enh, imp, &mut out.stops)?;
                out.delta_exp = Some(gate_exp);
                out.delta_imp = Some(gate_imp);
                out.e_exp_sim = Some(exp_sim);
                out.e_imp_sim = Some(imp_sim);
                e_exp = Some(exp_sim);
                e_imp_rep = Some(imp_sim);
            }
        }

        let mut parts = vec![out.base_features];
        if cfg.uses_e_imp() {
            parts.push(e_imp_rep.expect("extraction enabled"));
        }
        if cfg.uses_e_exp() {
            parts.push(e_exp.expect("extraction enabled"));
        }
        if cfg.uses_u_enh() {
            parts.push(u_enh.expect("enhancer enabled"));
        }
        if cfg.uses_e_int() {
            let e = e_int.expect("estimator enabled");
            parts.push(g.repeat_rows(e, c)?);
        }
        g.concat_cols(&parts)
    }
}

/// Shifting unit: `gate = 2·sigmoid(MLP(u_enh ⊕ sg(e)))`, output `gate ⊙ e`.
fn shift(
    g: &mut Graph<'_>,
    su: &super::layers::Mlp,
    u_enh: Var,
    e: Var,
    stops: &mut Vec<(Var, Var)>,
) -> Result<(Var, Var)> {
    let stopped = g.stop_gradient(e)?;
    stops.push((e, stopped));
    let x = g.concat_cols(&[u_enh, stopped])?;
    let z = su.forward(g, x)?;
    let s = g.sigmoid(z);
    let gate = g.scale(s, 2.0);
    let y = g.mul(gate, e)?;
    Ok((gate, y))
}
