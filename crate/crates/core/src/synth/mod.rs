//! Seeded synthetic trigger-induced recommendation corpus.
//!
//! Items live on unit-norm semantic vectors grouped in clusters; users are
//! either specific-intent (mostly click items very similar to the trigger)
//! or broad-intent (click across the similarity range).

mod catalog;
mod io;
mod requests;
mod users;

use serde::{Deserialize, Serialize};

pub use catalog::{
    generate_catalog, generate_catalog_with_noise, Item, ItemCatalog, DEFAULT_NOISE_SIGMA, SIDE_INFO_PER_CLUSTER,
};
pub use io::{read_dataset, write_dataset, CATALOG_FILE, FORMAT_VERSION, REQUESTS_FILE, USERS_FILE};
pub use requests::{generate_requests, group_records, Behavior, Impression, Request, RequestRecord, RequestSpec};
pub use users::{cluster_affinity, generate_users, Archetype, UserProfile, PROFILE_VOCABS};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_items: usize,
    pub num_clusters: usize,
    pub d_sem: usize,
    pub noise_sigma: f64,
    pub num_users: usize,
    pub specific_fraction: f64,
    pub n_levels: usize,
    pub requests_per_user: usize,
    pub candidates_per_request: usize,
    pub min_seq_len: usize,
    pub max_seq_len: usize,
    pub base_ctr: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let r = RequestSpec::default();
        SynthConfig {
            num_items: 2000,
            num_clusters: 20,
            d_sem: 16,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            num_users: 2000,
            specific_fraction: 0.5,
            n_levels: 6,
            requests_per_user: r.requests_per_user,
            candidates_per_request: r.candidates_per_request,
            min_seq_len: r.min_seq_len,
            max_seq_len: r.max_seq_len,
            base_ctr: r.base_ctr,
        }
    }
}

impl SynthConfig {
    pub fn request_spec(&self) -> RequestSpec {
        RequestSpec {
            requests_per_user: self.requests_per_user,
            candidates_per_request: self.candidates_per_request,
            min_seq_len: self.min_seq_len,
            max_seq_len: self.max_seq_len,
            base_ctr: self.base_ctr,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub config: SynthConfig,
    pub catalog: ItemCatalog,
    pub users: Vec<UserProfile>,
    pub requests: Vec<Request>,
}

/// Request indices of a train/held-out partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn generate(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    let catalog = generate_catalog_with_noise(
        config.num_items,
        config.num_clusters,
        config.d_sem,
        config.noise_sigma,
        derive_seed(seed, 1, 0),
    )?;
    let users = generate_users(
        config.num_users,
        config.specific_fraction,
        config.n_levels,
        derive_seed(seed, 2, 0),
    )?;
    let requests = generate_requests(&catalog, &users, &config.request_spec(), derive_seed(seed, 3, 0))?;
    Ok(Dataset {
        seed,
        config: config.clone(),
        catalog,
        users,
        requests,
    })
}

impl Dataset {
    pub fn num_impressions(&self) -> usize {
        self.requests.iter().map(|r| r.impressions.len()).sum()
    }

    pub fn num_clicks(&self) -> usize {
        self.requests.iter().map(|r| r.clicked().count()).sum()
    }

    pub fn positive_rate(&self) -> f64 {
        let n = self.num_impressions();
        if n == 0 {
            0.0
        } else {
            self.num_clicks() as f64 / n as f64
        }
    }

    pub fn user(&self, user_id: usize) -> Result<&UserProfile> {
        self.users
            .get(user_id)
            .filter(|u| u.user_id == user_id)
            .ok_or_else(|| Error::Data(format!("unknown user {user_id}")))
    }

    /// Hold out the last `fraction` of each user's requests (in stored order).
    pub fn split(&self, fraction: f64) -> Split {
        let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); self.users.len()];
        for (i, r) in self.requests.iter().enumerate() {
            if let Some(v) = per_user.get_mut(r.user_id) {
                v.push(i);
            }
        }
        let mut split = Split {
            train: Vec::new(),
            test: Vec::new(),
        };
        for reqs in per_user {
            let k = (reqs.len() as f64 * fraction).round() as usize;
            let cut = reqs.len() - k.min(reqs.len());
            split.train.extend_from_slice(&reqs[..cut]);
            split.test.extend_from_slice(&reqs[cut..]);
        }
        split.train.sort_unstable();
        split.test.sort_unstable();
        split
    }

    /// Referential integrity of users, items and sequence lengths.
    pub fn validate(&self) -> Result<()> {
        self.catalog.validate()?;
        for (i, u) in self.users.iter().enumerate() {
            if u.user_id != i {
                return Err(Error::Data(format!("user ids are not dense: position {i} holds {}", u.user_id)));
            }
        }
        let n_items = self.catalog.len();
        for r in &self.requests {
            self.user(r.user_id)?;
            if r.behavior_seq.len() > self.config.max_seq_len {
                return Err(Error::Data(format!("request {} sequence exceeds max length", r.request_id)));
            }
            let ids = r
                .behavior_seq
                .iter()
                .map(|b| b.item_id)
                .chain(std::iter::once(r.trigger_item_id))
                .chain(r.impressions.iter().map(|i| i.target_item_id));
            for id in ids {
                if id >= n_items {
                    return Err(Error::Data(format!("request {} references unknown item {id}", r.request_id)));
                }
            }
            if r.impressions.iter().any(|i| i.label > 1) {
                return Err(Error::Data(format!("request {} has a non-binary label", r.request_id)));
            }
        }
        Ok(())
    }
}
