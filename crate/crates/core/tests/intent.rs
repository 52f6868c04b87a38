use daian_core::intent::{
    bin_similarity, label_request, level_edges, read_labels, select_subsequence, write_labels, label_dataset,
    IntentDistribution, SimilarityTable,
};
use daian_core::synth::{generate, Behavior, Item, ItemCatalog, SynthConfig};
use daian_core::Error;
use proptest::prelude::*;

/// Catalog of 2-d unit vectors; item 0 is the trigger direction [1, 0] and
/// item k+1 has cosine `cosines[k]` with it.
fn catalog_with_cosines(cosines: &[f64]) -> ItemCatalog {
    let mut items = vec![Item {
        item_id: 0,
        category_id: 0,
        side_info_id: 0,
        semantic_vec: vec![1.0, 0.0],
    }];
    for (k, &c) in cosines.iter().enumerate() {
        items.push(Item {
            item_id: k + 1,
            category_id: 0,
            side_info_id: 0,
            semantic_vec: vec![c, (1.0 - c * c).max(0.0).sqrt()],
        });
    }
    ItemCatalog { items, num_clusters: 1 }
}

fn seq(ids: &[usize]) -> Vec<Behavior> {
    ids.iter()
        .enumerate()
        .map(|(position, &item_id)| Behavior {
            item_id,
            side_info_id: 0,
            position,
        })
        .collect()
}

#[test]
fn binning_edges() {
    assert_eq!(bin_similarity(1.0, 6).unwrap(), 5);
    assert_eq!(bin_similarity(-1.0, 6).unwrap(), 0);
    assert_eq!(bin_similarity(0.0, 6).unwrap(), 3);
    // clamped excursions
    assert_eq!(bin_similarity(1.0 + 1e-12, 6).unwrap(), 5);
    assert_eq!(bin_similarity(-1.5, 6).unwrap(), 0);
}

#[test]
fn binning_rejects_too_few_levels() {
    assert!(bin_similarity(0.3, 1).is_err());
    assert!(bin_similarity(0.3, 0).is_err());
    assert!(bin_similarity(f64::NAN, 6).is_err());
}

#[test]
fn level_edges_cover_the_range() {
    let e = level_edges(6);
    assert_eq!(e.len(), 7);
    assert_eq!(e[0], -1.0);
    assert_eq!(e[6], 1.0);
    for j in 0..6 {
        assert_eq!(bin_similarity(e[j] + 1e-9, 6).unwrap(), j);
        assert_eq!(bin_similarity(e[j + 1] - 1e-9, 6).unwrap(), j);
    }
}

#[test]
fn label_counts_clicks_per_level() {
    // levels 0, 0, 3, 5 for n = 6
    let cat = catalog_with_cosines(&[-0.9, -0.8, 0.1, 0.9]);
    let d = label_request(&[1, 2, 3, 4], 0, &cat, 6).unwrap().unwrap();
    assert_eq!(d.probs, vec![0.5, 0.0, 0.0, 0.25, 0.0, 0.25]);
}

#[test]
fn single_click_is_an_indicator() {
    let cat = catalog_with_cosines(&[-0.5]);
    // -0.5 → floor(0.25 · 6) = 1
    let d = label_request(&[1], 0, &cat, 6).unwrap().unwrap();
    assert_eq!(d.probs, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);

    let cat = catalog_with_cosines(&[-0.2]);
    let d = label_request(&[1], 0, &cat, 6).unwrap().unwrap();
    assert_eq!(d.probs, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn concentrated_clicks_give_an_indicator() {
    let cat = catalog_with_cosines(&[0.95, 0.9, 0.99]);
    let d = label_request(&[1, 2, 3, 1], 0, &cat, 6).unwrap().unwrap();
    assert_eq!(d.probs, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn no_clicks_means_no_label() {
    let cat = catalog_with_cosines(&[0.5]);
    assert!(label_request(&[], 0, &cat, 6).unwrap().is_none());
    assert!(IntentDistribution::from_levels(&[], 6).unwrap().is_none());
}

#[test]
fn unknown_item_is_an_error() {
    let cat = catalog_with_cosines(&[0.5]);
    assert!(label_request(&[7], 0, &cat, 6).is_err());
}

#[test]
fn subsequence_filters_in_order() {
    let cat = catalog_with_cosines(&[0.9, 0.2, 0.7]);
    let out = select_subsequence(&seq(&[1, 2, 3]), 0, &cat, 0.5).unwrap();
    assert_eq!(out.iter().map(|b| b.item_id).collect::<Vec<_>>(), vec![1, 3]);
    assert_eq!(out.iter().map(|b| b.position).collect::<Vec<_>>(), vec![0, 2]);
}

#[test]
fn subsequence_threshold_extremes() {
    let cat = catalog_with_cosines(&[0.9, -1.0, 0.7, 1.0]);
    let s = seq(&[1, 2, 3, 4, 0]);
    assert_eq!(select_subsequence(&s, 0, &cat, -1.0).unwrap(), s);
    let top = select_subsequence(&s, 0, &cat, 1.0 + 1e-9).unwrap();
    assert_eq!(top.iter().map(|b| b.item_id).collect::<Vec<_>>(), vec![4, 0]);
}

#[test]
fn empty_subsequence_is_allowed() {
    let cat = catalog_with_cosines(&[-0.9, -0.3]);
    assert!(select_subsequence(&seq(&[1, 2]), 0, &cat, 0.5).unwrap().is_empty());
}

#[test]
fn table_positions_agree_with_catalog_filter() {
    let cat = catalog_with_cosines(&[0.9, 0.2, 0.7, -0.4, 0.55]);
    let sims = SimilarityTable::new(&cat).unwrap();
    let s = seq(&[1, 2, 3, 4, 5]);
    let pos = sims.subsequence_positions(&s, 0, 0.5);
    let direct = select_subsequence(&s, 0, &cat, 0.5).unwrap();
    assert_eq!(pos.iter().map(|&p| s[p]).collect::<Vec<_>>(), direct);
}

#[test]
fn labels_file_round_trip() {
    let cfg = SynthConfig {
        num_items: 100,
        num_clusters: 5,
        num_users: 20,
        requests_per_user: 5,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg, 1).unwrap();
    let sims = SimilarityTable::new(&ds.catalog).unwrap();
    let labels = label_dataset(&ds, &sims, 6).unwrap();
    assert!(labels.skipped() > 0 && labels.labeled() > 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.jsonl");
    write_labels(&labels, &ds, &path).unwrap();
    let back = read_labels(&path, &ds).unwrap();
    assert_eq!(labels, back);
    for line in std::fs::read_to_string(&path).unwrap().lines().skip(1) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["intent_label"].as_array().unwrap().len(), 6);
    }
}

#[test]
fn truncated_labels_file_is_a_parse_error() {
    let cfg = SynthConfig {
        num_items: 100,
        num_clusters: 5,
        num_users: 20,
        requests_per_user: 5,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg, 1).unwrap();
    let sims = SimilarityTable::new(&ds.catalog).unwrap();
    let labels = label_dataset(&ds, &sims, 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.jsonl");
    write_labels(&labels, &ds, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() - 40]).unwrap();
    assert!(matches!(read_labels(&path, &ds), Err(Error::Parse { .. })));
}

fn brute_force_label(sims: &[f64], n: usize) -> Option<Vec<f64>> {
    if sims.is_empty() {
        return None;
    }
    let mut hist = vec![0u32; n];
    for &s in sims {
        // walk the edges instead of using the closed form
        let s = s.clamp(-1.0, 1.0);
        let mut level = n - 1;
        for j in 0..n {
            let upper = -1.0 + 2.0 * (j + 1) as f64 / n as f64;
            if s < upper {
                level = j;
                break;
            }
        }
        hist[level] += 1;
    }
    Some(hist.iter().map(|&c| c as f64 / sims.len() as f64).collect())
}

proptest! {
    #[test]
    fn every_similarity_maps_to_one_level(s in -1.0f64..=1.0, n in 2usize..12) {
        let l = bin_similarity(s, n).unwrap();
        prop_assert!(l < n);
        let e = level_edges(n);
        prop_assert!(e[l] <= s + 1e-12);
        prop_assert!(s < e[l + 1] || l == n - 1);
    }

    #[test]
    fn labels_match_a_counting_oracle(
        sims in proptest::collection::vec(-1.0f64..=1.0, 0..12),
        n in 2usize..10,
    ) {
        let cat = catalog_with_cosines(&sims);
        let clicked: Vec<usize> = (1..=sims.len()).collect();
        let got = label_request(&clicked, 0, &cat, n).unwrap().map(|d| d.probs);
        // the oracle bins the similarities the catalog actually reports
        let actual: Vec<f64> = clicked.iter().map(|&t| cat.similarity(0, t).unwrap()).collect();
        let want = brute_force_label(&actual, n);
        prop_assert_eq!(&got, &want);
        if let Some(p) = got {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn subsequence_is_idempotent_and_ordered(
        sims in proptest::collection::vec(-1.0f64..=1.0, 0..15),
        tau in -1.0f64..=1.0,
    ) {
        let cat = catalog_with_cosines(&sims);
        let s = seq(&(1..=sims.len()).collect::<Vec<_>>());
        let once = select_subsequence(&s, 0, &cat, tau).unwrap();
        let twice = select_subsequence(&once, 0, &cat, tau).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.len() <= s.len());
        prop_assert!(once.windows(2).all(|w| w[0].position < w[1].position));
    }
}
