use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::cosine_similarity;
use crate::seed::rng_for;

/// Brand-like side-information ids per cluster.
pub const SIDE_INFO_PER_CLUSTER: usize = 5;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.15;

/// Squared weight of each center's private direction. Controls how far
/// apart neighbouring clusters sit on the similarity axis.
const PRIVATE_WEIGHT_SQ: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: usize,
    pub category_id: usize,
    pub side_info_id: usize,
    pub semantic_vec: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemCatalog {
    pub items: Vec<Item>,
    pub num_clusters: usize,
}

impl ItemCatalog {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn d_sem(&self) -> usize {
        self.items.first().map_or(0, |i| i.semantic_vec.len())
    }

    pub fn side_info_vocab(&self) -> usize {
        self.items
            .iter()
            .map(|i| i.side_info_id + 1)
            .max()
            .unwrap_or(0)
            .max(self.num_clusters * SIDE_INFO_PER_CLUSTER)
    }

    pub fn item(&self, id: usize) -> Result<&Item> {
        self.items
            .get(id)
            .ok_or_else(|| Error::Data(format!("item {id} not in catalog of {} items", self.items.len())))
    }

    /// Item ids grouped by category.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for it in &self.items {
            out[it.category_id].push(it.item_id);
        }
        out
    }

    /// Cosine similarity of two items' semantic vectors.
    /// An item is exactly similar (1.0) to itself.
    pub fn similarity(&self, a: usize, b: usize) -> Result<f64> {
        if a == b {
            self.item(a)?;
            return Ok(1.0);
        }
        cosine_similarity(&self.item(a)?.semantic_vec, &self.item(b)?.semantic_vec)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, it) in self.items.iter().enumerate() {
            if it.item_id != i {
                return Err(Error::Data(format!("item ids are not dense: position {i} holds {}", it.item_id)));
            }
            if it.category_id >= self.num_clusters {
                return Err(Error::Data(format!("item {i} has category {} >= {}", it.category_id, self.num_clusters)));
            }
            let norm: f64 = it.semantic_vec.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Data(format!("item {i} semantic vector has norm {norm}")));
            }
        }
        Ok(())
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn orthonormal_basis(d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// Unit cluster centers arranged so that every similarity level between
/// -1 and 1 is populated: half the centers lie on a tilted circle and the
/// other half are their antipodes.
fn cluster_centers(k: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let basis = orthonormal_basis(d, rng);
    let half = k.div_ceil(2);
    let gamma = PRIVATE_WEIGHT_SQ.sqrt();
    let base: Vec<Vec<f64>> = (0..half)
        .map(|c| {
            let theta = std::f64::consts::PI * c as f64 / half as f64;
            let mut v: Vec<f64> = (0..d)
                .map(|j| theta.cos() * basis[0][j] + theta.sin() * basis[1][j])
                .collect();
            if d > 2 {
                let e = &basis[2 + c % (d - 2)];
                v.iter_mut().zip(e).for_each(|(x, y)| *x += gamma * y);
            }
            normalize(&mut v);
            v
        })
        .collect();
    (0..k)
        .map(|c| {
            if c < half {
                base[c].clone()
            } else {
                base[c - half].iter().map(|x| -x).collect()
            }
        })
        .collect()
}

pub fn generate_catalog(num_items: usize, num_clusters: usize, d_sem: usize, seed: u64) -> Result<ItemCatalog> {
    generate_catalog_with_noise(num_items, num_clusters, d_sem, DEFAULT_NOISE_SIGMA, seed)
}

/// Items are assigned to clusters round-robin; each semantic vector is its
/// center plus isotropic noise whose expected norm is about `sigma`, then
/// renormalized.
pub fn generate_catalog_with_noise(
    num_items: usize,
    num_clusters: usize,
    d_sem: usize,
    sigma: f64,
    seed: u64,
) -> Result<ItemCatalog> {
    if num_clusters == 0 || num_items < num_clusters {
        return Err(Error::Config(format!(
            "need num_items >= num_clusters >= 1, got {num_items} items and {num_clusters} clusters"
        )));
    }
    if d_sem < 2 {
        return Err(Error::Config(format!("d_sem must be at least 2, got {d_sem}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma must be finite and nonnegative, got {sigma}")));
    }
    let mut rng = rng_for(seed, 0x4341_5441, 0);
    let centers = cluster_centers(num_clusters, d_sem, &mut rng);
    let noise = Normal::new(0.0, sigma / (d_sem as f64).sqrt())
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    let items = (0..num_items)
        .map(|item_id| {
            let c = item_id % num_clusters;
            let mut v: Vec<f64> = centers[c].iter().map(|&x| x + noise.sample(&mut rng)).collect();
            normalize(&mut v);
            Item {
                item_id,
                category_id: c,
                side_info_id: c * SIDE_INFO_PER_CLUSTER + rng.gen_range(0..SIDE_INFO_PER_CLUSTER),
                semantic_vec: v,
            }
        })
        .collect();
    Ok(ItemCatalog { items, num_clusters })
}
