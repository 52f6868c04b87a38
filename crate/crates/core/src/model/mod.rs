//! The intent-aware CTR network.
//!
//! Parameters are partitioned into three owner groups:
//! `Uim` (θ, the intent estimator with its own embedding tables),
//! `Die` (η, intent extraction and the similarity-enhanced gating) and
//! `Base` (φ, the shared CTR embedding tables, DIN pooling and the tower).

mod checkpoint;
mod config;
mod forward;
pub mod layers;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{Components, Fusion, ModelConfig};
pub use forward::{Context, IntentMode, RequestNodes};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numeric::{Init, ParamGroup, ParamId, ParamKind, ParamStore};
use layers::{AttentionUnit, Mlp, MultiHead};

/// Embedding tables of one owner group.
#[derive(Clone, Debug)]
pub struct Tables {
    pub item: ParamId,
    pub side: ParamId,
    pub user: ParamId,
    pub profile: Vec<ParamId>,
}

impl Tables {
    fn new(store: &mut ParamStore, prefix: &str, group: ParamGroup, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut table = |name: String, rows: usize, cols: usize| {
            store.add(name, group, ParamKind::Table, rows, cols, Init::Embedding, rng)
        };
        Tables {
            item: table(format!("{prefix}.item_id"), cfg.n_items, cfg.d_id),
            side: table(format!("{prefix}.side_info"), cfg.n_side_info, cfg.d_side),
            user: table(format!("{prefix}.user_id"), cfg.n_users, cfg.d_user),
            profile: cfg
                .profile_vocabs
                .iter()
                .enumerate()
                .map(|(i, &v)| table(format!("{prefix}.profile{i}"), v, cfg.d_profile))
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaseParams {
    pub tables: Tables,
    pub din: AttentionUnit,
    pub tower: Mlp,
}

#[derive(Clone, Debug)]
pub struct UimParams {
    pub tables: Tables,
    pub pool: AttentionUnit,
    pub mlp: Mlp,
}

#[derive(Clone, Debug)]
pub struct DieParams {
    pub uint: Mlp,
    pub i2e: MultiHead,
    pub e2e_self: MultiHead,
    pub e2e_target: MultiHead,
    /// Stand-in row attended over when the filtered subsequence is empty.
    pub placeholder: ParamId,
}

#[derive(Clone, Debug)]
pub struct SeinParams {
    pub proj: Mlp,
    pub bins: ParamId,
    pub su_exp: Mlp,
    pub su_imp: Mlp,
}

#[derive(Clone, Debug)]
pub struct DaianModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub base: BaseParams,
    pub uim: Option<UimParams>,
    pub die: Option<DieParams>,
    pub sein: Option<SeinParams>,
}

impl DaianModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let cfg = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.d();

        let base_tables = Tables::new(&mut store, "phi", ParamGroup::Base, cfg, &mut rng);
        let din = AttentionUnit::new(&mut store, "phi.din", ParamGroup::Base, d, cfg.att_hidden, &mut rng);
        let tower = Mlp::new(
            &mut store,
            "phi.tower",
            ParamGroup::Base,
            cfg.tower_input_dim(),
            &cfg.tower_hidden,
            1,
            false,
            &mut rng,
        );

        let uim = cfg.components.uim.then(|| {
            let tables = Tables::new(&mut store, "theta", ParamGroup::Uim, cfg, &mut rng);
            let pool = AttentionUnit::new(&mut store, "theta.pool", ParamGroup::Uim, d, cfg.att_hidden, &mut rng);
            let mlp = Mlp::new(
                &mut store,
                "theta.mlp",
                ParamGroup::Uim,
                cfg.user_dim() + 2 * d,
                &cfg.uim_hidden,
                cfg.n_levels,
                false,
                &mut rng,
            );
            UimParams { tables, pool, mlp }
        });

        let die = cfg.components.die.then(|| DieParams {
            uint: Mlp::new(
                &mut store,
                "eta.uint",
                ParamGroup::Die,
                cfg.n_levels + d,
                &cfg.uint_hidden,
                d,
                false,
                &mut rng,
            ),
            i2e: MultiHead::new(&mut store, "eta.i2e", ParamGroup::Die, d, cfg.heads, &mut rng),
            e2e_self: MultiHead::new(&mut store, "eta.e2e_self", ParamGroup::Die, d, cfg.heads, &mut rng),
            e2e_target: MultiHead::new(&mut store, "eta.e2e_target", ParamGroup::Die, d, cfg.heads, &mut rng),
            placeholder: store.add("eta.placeholder", ParamGroup::Die, ParamKind::Dense, 1, d, Init::Zeros, &mut rng),
        });

        let sein = cfg.components.sein.then(|| SeinParams {
            proj: Mlp::new(
                &mut store,
                "eta.proj",
                ParamGroup::Die,
                2 * d,
                &cfg.proj_hidden,
                cfg.d_sim,
                false,
                &mut rng,
            ),
            bins: store.add(
                "eta.sim_bins",
                ParamGroup::Die,
                ParamKind::Table,
                cfg.n_sim,
                cfg.d_sim,
                Init::Embedding,
                &mut rng,
            ),
            su_exp: Mlp::new(
                &mut store,
                "eta.su_exp",
                ParamGroup::Die,
                cfg.d_sim + d,
                &cfg.su_hidden,
                d,
                true,
                &mut rng,
            ),
            su_imp: Mlp::new(
                &mut store,
                "eta.su_imp",
                ParamGroup::Die,
                cfg.d_sim + d,
                &cfg.su_hidden,
                d,
                true,
                &mut rng,
            ),
        });

        Ok(DaianModel {
            config,
            params: store,
            base: BaseParams {
                tables: base_tables,
                din,
                tower,
            },
            uim,
            die,
            sein,
        })
    }

    /// Copy every tensor of `group` from `other`, matching by name.
    pub fn copy_group_from(&mut self, other: &DaianModel, group: ParamGroup) -> Result<()> {
        for (_, p) in other.params.iter().filter(|(_, p)| p.group == group) {
            self.params.assign(&p.name, p.rows, p.cols, p.data.clone())?;
        }
        Ok(())
    }

    /// Re-draw every tensor of `group` from its initializer.
    pub fn reinit_group(&mut self, group: ParamGroup, seed: u64) -> Result<()> {
        let fresh = DaianModel::new(self.config.clone(), seed)?;
        self.copy_group_from(&fresh, group)
    }
}
