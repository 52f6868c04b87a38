use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Vocabulary sizes of the profile features: gender, age bucket, city.
pub const PROFILE_VOCABS: [usize; 3] = [2, 8, 20];

/// Concentration of the per-user Dirichlet jitter around the archetype mean.
const JITTER_CONCENTRATION: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Specific,
    Broad,
}

impl Archetype {
    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Specific => "specific",
            Archetype::Broad => "broad",
        }
    }

    /// Mean intent profile over `n` similarity levels (level n-1 = most similar).
    pub fn template(self, n: usize) -> Vec<f64> {
        let mut t = vec![0.0; n];
        match self {
            Archetype::Specific => {
                t[n - 1] = 0.88;
                let w: Vec<f64> = (0..n - 1).map(|j| 2f64.powi(j as i32)).collect();
                let total: f64 = w.iter().sum();
                for (j, x) in w.iter().enumerate() {
                    t[j] = 0.12 * x / total;
                }
            }
            Archetype::Broad => {
                t[0] = 0.45;
                t[1] = 0.35;
                let w: Vec<f64> = (2..n).map(|j| 2f64.powi(-(j as i32))).collect();
                let total: f64 = w.iter().sum();
                for (j, x) in w.iter().enumerate() {
                    t[j + 2] = 0.2 * x / total;
                }
            }
        }
        let total: f64 = t.iter().sum();
        t.iter_mut().for_each(|x| *x /= total);
        t
    }

    /// Archetype invariant on an intent profile.
    pub fn admits(self, profile: &[f64]) -> bool {
        let n = profile.len();
        match self {
            Archetype::Specific => profile[n - 1] >= 0.7,
            Archetype::Broad => profile[0] + profile[1] >= 0.5,
        }
    }

    /// Concentration of the user's cluster-affinity Dirichlet.
    fn affinity_alpha(self) -> f64 {
        match self {
            Archetype::Specific => 0.1,
            Archetype::Broad => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: usize,
    pub profile_feature_ids: Vec<usize>,
    pub archetype: Archetype,
    pub intent_profile: Vec<f64>,
}

pub fn generate_users(num_users: usize, specific_fraction: f64, n_levels: usize, seed: u64) -> Result<Vec<UserProfile>> {
    if !(0.0..=1.0).contains(&specific_fraction) {
        return Err(Error::Config(format!("specific_fraction must lie in [0,1], got {specific_fraction}")));
    }
    if n_levels < 2 {
        return Err(Error::Config(format!("n_levels must be at least 2, got {n_levels}")));
    }
    let n_specific = (specific_fraction * num_users as f64).floor() as usize;
    let mut kinds: Vec<Archetype> = (0..num_users)
        .map(|i| if i < n_specific { Archetype::Specific } else { Archetype::Broad })
        .collect();
    kinds.shuffle(&mut rng_for(seed, 0x5553_4552, u64::MAX));

    kinds
        .into_iter()
        .enumerate()
        .map(|(user_id, archetype)| {
            let mut rng = rng_for(seed, 0x5553_4552, user_id as u64);
            let intent_profile = jittered_profile(archetype, n_levels, &mut rng)?;
            let profile_feature_ids = PROFILE_VOCABS.iter().map(|&v| rng.gen_range(0..v)).collect();
            Ok(UserProfile {
                user_id,
                profile_feature_ids,
                archetype,
                intent_profile,
            })
        })
        .collect()
}

fn jittered_profile(archetype: Archetype, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let template = archetype.template(n);
    let alpha: Vec<f64> = template.iter().map(|t| t * JITTER_CONCENTRATION).collect();
    let dir = Dirichlet::new(&alpha).map_err(|e| Error::Config(format!("profile jitter: {e}")))?;
    for _ in 0..1000 {
        let mut p = dir.sample(rng);
        let total: f64 = p.iter().sum();
        if !(total > 0.0) || p.iter().any(|x| !x.is_finite()) {
            continue;
        }
        p.iter_mut().for_each(|x| *x /= total);
        if archetype.admits(&p) {
            return Ok(p);
        }
    }
    Ok(template)
}

/// Per-user distribution over clusters that drives behavior sequences and
/// trigger choice. Derived from `(seed, user_id)` so it needs no storage.
pub fn cluster_affinity(user: &UserProfile, num_clusters: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 0x4146_4649, user.user_id as u64);
    if num_clusters == 1 {
        return vec![1.0];
    }
    let alpha = vec![user.archetype.affinity_alpha(); num_clusters];
    let w = Dirichlet::new(&alpha)
        .map(|d| d.sample(&mut rng))
        .unwrap_or_else(|_| vec![1.0; num_clusters]);
    let total: f64 = w.iter().sum();
    if total > 0.0 && w.iter().all(|x| x.is_finite()) {
        w.into_iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / num_clusters as f64; num_clusters]
    }
}
