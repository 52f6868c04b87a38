use rand::distributions::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::catalog::ItemCatalog;
use super::users::{cluster_affinity, UserProfile};
use crate::error::{Error, Result};
use crate::intent::SimilarityTable;
use crate::seed::rng_for;

/// One historical behavior; serialized as `[item_id, side_info_id, position]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Behavior {
    pub item_id: usize,
    pub side_info_id: usize,
    pub position: usize,
}

impl From<[usize; 3]> for Behavior {
    fn from(v: [usize; 3]) -> Self {
        Behavior {
            item_id: v[0],
            side_info_id: v[1],
            position: v[2],
        }
    }
}

impl From<Behavior> for [usize; 3] {
    fn from(b: Behavior) -> Self {
        [b.item_id, b.side_info_id, b.position]
    }
}

/// One impression as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: usize,
    pub user_id: usize,
    pub behavior_seq: Vec<Behavior>,
    pub trigger_item_id: usize,
    pub target_item_id: usize,
    pub label: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Impression {
    pub target_item_id: usize,
    pub label: u8,
}

/// All impressions of one request; they share user, sequence and trigger.
#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub request_id: usize,
    pub user_id: usize,
    pub behavior_seq: Vec<Behavior>,
    pub trigger_item_id: usize,
    pub impressions: Vec<Impression>,
}

impl Request {
    pub fn records(&self) -> impl Iterator<Item = RequestRecord> + '_ {
        self.impressions.iter().map(move |imp| RequestRecord {
            request_id: self.request_id,
            user_id: self.user_id,
            behavior_seq: self.behavior_seq.clone(),
            trigger_item_id: self.trigger_item_id,
            target_item_id: imp.target_item_id,
            label: imp.label,
        })
    }

    pub fn clicked(&self) -> impl Iterator<Item = usize> + '_ {
        self.impressions
            .iter()
            .filter(|i| i.label == 1)
            .map(|i| i.target_item_id)
    }
}

/// Regroup impression records into requests, preserving first-seen order.
pub fn group_records(records: Vec<RequestRecord>) -> Result<Vec<Request>> {
    let mut out: Vec<Request> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for r in records {
        match index.get(&r.request_id) {
            Some(&k) => {
                let req: &mut Request = &mut out[k];
                if req.user_id != r.user_id
                    || req.trigger_item_id != r.trigger_item_id
                    || req.behavior_seq != r.behavior_seq
                {
                    return Err(Error::Data(format!(
                        "records of request {} disagree on user, sequence or trigger",
                        r.request_id
                    )));
                }
                req.impressions.push(Impression {
                    target_item_id: r.target_item_id,
                    label: r.label,
                });
            }
            None => {
                index.insert(r.request_id, out.len());
                out.push(Request {
                    request_id: r.request_id,
                    user_id: r.user_id,
                    behavior_seq: r.behavior_seq,
                    trigger_item_id: r.trigger_item_id,
                    impressions: vec![Impression {
                        target_item_id: r.target_item_id,
                        label: r.label,
                    }],
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub requests_per_user: usize,
    pub candidates_per_request: usize,
    pub min_seq_len: usize,
    pub max_seq_len: usize,
    pub base_ctr: f64,
}

impl Default for RequestSpec {
    fn default() -> Self {
        RequestSpec {
            requests_per_user: 25,
            candidates_per_request: 10,
            min_seq_len: 10,
            max_seq_len: 50,
            base_ctr: 0.15,
        }
    }
}

/// Click law: a candidate at similarity level `j` is clicked with probability
/// `min(1, base_ctr · n · profile[j])`. Candidates are drawn with a uniform
/// level, so the expected share of clicks per level equals the profile.
pub fn generate_requests(
    catalog: &ItemCatalog,
    users: &[UserProfile],
    spec: &RequestSpec,
    seed: u64,
) -> Result<Vec<Request>> {
    if spec.candidates_per_request < 2 {
        return Err(Error::Config("candidates_per_request must be at least 2".into()));
    }
    if spec.min_seq_len == 0 || spec.min_seq_len > spec.max_seq_len {
        return Err(Error::Config(format!(
            "sequence length range [{}, {}] is invalid",
            spec.min_seq_len, spec.max_seq_len
        )));
    }
    if !(spec.base_ctr > 0.0 && spec.base_ctr <= 1.0) {
        return Err(Error::Config(format!("base_ctr must lie in (0,1], got {}", spec.base_ctr)));
    }
    if catalog.len() < 2 {
        return Err(Error::Data("catalog needs at least two items".into()));
    }
    let n = users.first().map_or(2, |u| u.intent_profile.len());
    if users.iter().any(|u| u.intent_profile.len() != n) {
        return Err(Error::Data("users disagree on the number of intent levels".into()));
    }
    let sims = SimilarityTable::new(catalog)?;
    let members = catalog.members();
    let mut bucket_cache: std::collections::HashMap<usize, Vec<Vec<usize>>> = std::collections::HashMap::new();

    let mut out = Vec::with_capacity(users.len() * spec.requests_per_user);
    for user in users {
        let affinity = cluster_affinity(user, catalog.num_clusters, seed);
        let populated: Vec<f64> = affinity
            .iter()
            .zip(&members)
            .map(|(&w, m)| if m.is_empty() { 0.0 } else { w })
            .collect();
        let clusters = WeightedIndex::new(&populated)
            .map_err(|e| Error::Data(format!("user {} has no usable cluster affinity: {e}", user.user_id)))?;
        let mut rng = rng_for(seed, 0x5245_5155, user.user_id as u64);
        let draw_item = |rng: &mut rand_chacha::ChaCha8Rng| {
            let m = &members[clusters.sample(rng)];
            m[rng.gen_range(0..m.len())]
        };

        for r in 0..spec.requests_per_user {
            let len = rng.gen_range(spec.min_seq_len..=spec.max_seq_len);
            let behavior_seq = (0..len)
                .map(|position| {
                    let item_id = draw_item(&mut rng);
                    Behavior {
                        item_id,
                        side_info_id: catalog.items[item_id].side_info_id,
                        position,
                    }
                })
                .collect();
            let trigger = draw_item(&mut rng);
            if let std::collections::hash_map::Entry::Vacant(e) = bucket_cache.entry(trigger) {
                e.insert(sims.buckets(trigger, n, Some(trigger))?);
            }
            let buckets = &bucket_cache[&trigger];
            let nonempty: Vec<usize> = (0..n).filter(|&j| !buckets[j].is_empty()).collect();
            let impressions = (0..spec.candidates_per_request)
                .map(|_| {
                    let level = nonempty[rng.gen_range(0..nonempty.len())];
                    let bucket = &buckets[level];
                    let target = bucket[rng.gen_range(0..bucket.len())];
                    let p = (spec.base_ctr * n as f64 * user.intent_profile[level]).min(1.0);
                    Impression {
                        target_item_id: target,
                        label: u8::from(rng.gen::<f64>() < p),
                    }
                })
                .collect();
            out.push(Request {
                request_id: user.user_id * spec.requests_per_user + r,
                user_id: user.user_id,
                behavior_seq,
                trigger_item_id: trigger,
                impressions,
            });
        }
    }
    Ok(out)
}
