use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{Dataset, PROFILE_VOCABS};

/// Which intent modules are present. All off is the plain DIN tower.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub uim: bool,
    pub die: bool,
    pub sein: bool,
}

impl Components {
    pub const FULL: Components = Components {
        uim: true,
        die: true,
        sein: true,
    };
    pub const DIN: Components = Components {
        uim: false,
        die: false,
        sein: false,
    };

    pub fn is_din(self) -> bool {
        !(self.uim || self.die || self.sein)
    }
}

/// Optional blocks appended to the base features at the tower input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fusion {
    pub e_imp: bool,
    pub e_exp: bool,
    pub u_enh: bool,
    pub e_int: bool,
}

impl Default for Fusion {
    fn default() -> Self {
        Fusion {
            e_imp: true,
            e_exp: true,
            u_enh: true,
            e_int: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_items: usize,
    pub n_side_info: usize,
    pub n_users: usize,
    pub profile_vocabs: Vec<usize>,
    pub d_id: usize,
    pub d_side: usize,
    pub d_user: usize,
    pub d_profile: usize,
    pub heads: usize,
    /// Similarity levels of the intent distribution.
    pub n_levels: usize,
    /// Bins of the semantic-similarity embedding.
    pub n_sim: usize,
    pub d_sim: usize,
    pub att_hidden: usize,
    pub uim_hidden: Vec<usize>,
    pub uint_hidden: Vec<usize>,
    pub proj_hidden: Vec<usize>,
    pub su_hidden: Vec<usize>,
    pub tower_hidden: Vec<usize>,
    /// Similarity threshold of the explicit-intent subsequence.
    pub tau: f64,
    pub components: Components,
    pub fusion: Fusion,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_items: 2000,
            n_side_info: 100,
            n_users: 2000,
            profile_vocabs: PROFILE_VOCABS.to_vec(),
            d_id: 16,
            d_side: 8,
            d_user: 16,
            d_profile: 4,
            heads: 4,
            n_levels: 6,
            n_sim: 6,
            d_sim: 16,
            att_hidden: 16,
            uim_hidden: vec![32],
            uint_hidden: vec![32],
            proj_hidden: vec![32],
            su_hidden: vec![32],
            tower_hidden: vec![64, 32, 16],
            tau: 0.5,
            components: Components::FULL,
            fusion: Fusion::default(),
        }
    }
}

impl ModelConfig {
    /// Paper-scale tower widths.
    pub fn paper_scale() -> Self {
        ModelConfig {
            tower_hidden: vec![512, 256, 128],
            ..Self::default()
        }
    }

    /// Size the vocabularies after a dataset.
    pub fn for_dataset(mut self, ds: &Dataset) -> Self {
        self.n_items = ds.catalog.len();
        self.n_side_info = ds.catalog.side_info_vocab();
        self.n_users = ds.users.len();
        self.profile_vocabs = PROFILE_VOCABS.to_vec();
        self
    }

    /// Item embedding width.
    pub fn d(&self) -> usize {
        self.d_id + self.d_side
    }

    pub fn d_head(&self) -> usize {
        self.d() / self.heads
    }

    pub fn user_dim(&self) -> usize {
        self.d_user + self.d_profile * self.profile_vocabs.len()
    }

    pub fn base_dim(&self) -> usize {
        self.user_dim() + 3 * self.d()
    }

    pub fn uses_e_imp(&self) -> bool {
        self.components.die && self.fusion.e_imp
    }

    pub fn uses_e_exp(&self) -> bool {
        self.components.die && self.fusion.e_exp
    }

    pub fn uses_u_enh(&self) -> bool {
        self.components.sein && self.fusion.u_enh
    }

    pub fn uses_e_int(&self) -> bool {
        self.components.uim && self.fusion.e_int
    }

    pub fn tower_input_dim(&self) -> usize {
        let mut dim = self.base_dim();
        if self.uses_e_imp() {
            dim += self.d();
        }
        if self.uses_e_exp() {
            dim += self.d();
        }
        if self.uses_u_enh() {
            dim += self.d_sim;
        }
        if self.uses_e_int() {
            dim += self.n_levels;
        }
        dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_items", self.n_items),
            ("n_side_info", self.n_side_info),
            ("n_users", self.n_users),
            ("d_id", self.d_id),
            ("d_side", self.d_side),
            ("d_user", self.d_user),
            ("d_profile", self.d_profile),
            ("heads", self.heads),
            ("d_sim", self.d_sim),
            ("att_hidden", self.att_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if !self.d().is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "heads ({}) must divide the item embedding width ({})",
                self.heads,
                self.d()
            )));
        }
        if self.n_levels < 2 || self.n_sim < 2 {
            return Err(Error::Config("n_levels and n_sim must be at least 2".into()));
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [-1, 1], got {}", self.tau)));
        }
        let lists = [
            &self.uim_hidden,
            &self.uint_hidden,
            &self.proj_hidden,
            &self.su_hidden,
            &self.tower_hidden,
        ];
        if lists.iter().any(|l| l.contains(&0)) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.profile_vocabs.contains(&0) {
            return Err(Error::Config("profile vocabularies must be nonempty".into()));
        }
        Ok(())
    }
}
