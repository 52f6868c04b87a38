//! Acceptance suite: one PASS/FAIL line per criterion on stderr.
//!
//! Training-based criteria share one set of runs per seed; a full pass takes
//! roughly half an hour on a single core.

// table cells such as 3.14 are data, not constants
#![allow(clippy::approx_constant)]

use std::io::Write;
use std::sync::OnceLock;

use daian_core::intent::{label_dataset, label_request, IntentLabels, SimilarityTable};
use daian_core::metrics::{
    auc, auc_pairwise, diversity_group_gauc, gauc, rela_impr, round2, user_diversity, IntentFitReport,
    MetricReport, ScoredImpression, DEFAULT_BUCKET_EDGES,
};
use daian_core::model::{load_checkpoint, save_checkpoint, DaianModel, IntentMode, ModelConfig};
use daian_core::numeric::{check_param_gradients, Graph, ParamGroup};
use daian_core::synth::{generate, write_dataset, Archetype, Dataset, Item, ItemCatalog, Split, SynthConfig};
use daian_core::train::{intent_fit, run_pipeline, run_pipeline_with, score_requests, TrainConfig, TrainData, TrainMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [7, 8, 9];

fn verdict(id: u32, title: &str, pass: bool, detail: &str) {
    let line = format!(
        "[{}] criterion {id:>2}: {title} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    // written past the test harness capture so passing criteria show too
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(pass, "{line}");
}

// ---- shared training runs -----------------------------------------------------------------

struct Corpus {
    ds: Dataset,
    sims: SimilarityTable,
    labels: IntentLabels,
    split: Split,
}

impl Corpus {
    fn default_for(seed: u64) -> Corpus {
        let ds = generate(&SynthConfig::default(), seed).unwrap();
        let sims = SimilarityTable::new(&ds.catalog).unwrap();
        let labels = label_dataset(&ds, &sims, 6).unwrap();
        let split = ds.split(TrainConfig::default().holdout_fraction);
        Corpus { ds, sims, labels, split }
    }

    fn data(&self) -> TrainData<'_> {
        TrainData {
            ds: &self.ds,
            sims: &self.sims,
            labels: &self.labels,
            split: &self.split,
        }
    }
}

struct Run {
    auc: f64,
    scores: Vec<ScoredImpression>,
    step_losses: Vec<u64>,
    checkpoint: Vec<u8>,
    stage1_fit: Option<IntentFitReport>,
}

#[derive(Default)]
struct SeedRuns {
    corpus: OnceLock<Corpus>,
    din: OnceLock<Run>,
    full: OnceLock<Run>,
    e2e: OnceLock<Run>,
    no_uim: OnceLock<Run>,
    no_die: OnceLock<Run>,
    no_sein: OnceLock<Run>,
}

fn runs(seed: u64) -> &'static SeedRuns {
    static ALL: OnceLock<Vec<SeedRuns>> = OnceLock::new();
    let all = ALL.get_or_init(|| SEEDS.iter().map(|_| SeedRuns::default()).collect());
    &all[SEEDS.iter().position(|&s| s == seed).expect("known seed")]
}

fn corpus(seed: u64) -> &'static Corpus {
    runs(seed).corpus.get_or_init(|| Corpus::default_for(seed))
}

fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..TrainConfig::default()
    }
}

fn train(seed: u64, mode: TrainMode, tweak: impl Fn(&mut ModelConfig)) -> Run {
    let c = corpus(seed);
    let data = c.data();
    let mut cfg = ModelConfig::default().for_dataset(&c.ds);
    tweak(&mut cfg);
    let mut stage1_fit = None;
    let outcome = run_pipeline_with(mode, &cfg, &data, &train_config(seed), |model, report| {
        if report.stage == "uim_pretrain" {
            stage1_fit = Some(intent_fit(model, &data, &c.split.test)?);
        }
        Ok(())
    })
    .unwrap();
    finish(c, &outcome.model, &outcome.reports, stage1_fit)
}

fn finish(
    c: &Corpus,
    model: &DaianModel,
    reports: &[daian_core::train::StageReport],
    stage1_fit: Option<IntentFitReport>,
) -> Run {
    let diversity = user_diversity(&c.ds, &c.split.train).unwrap();
    let scores = score_requests(model, &c.data(), &c.split.test, Some(&diversity)).unwrap();
    let auc = MetricReport::from_scores(&scores).unwrap().auc;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(model, serde_json::Value::Null, &path).unwrap();
    Run {
        auc,
        scores,
        step_losses: reports
            .iter()
            .flat_map(|r| r.step_losses.iter().map(|x| x.to_bits()))
            .collect(),
        checkpoint: std::fs::read(&path).unwrap(),
        stage1_fit,
    }
}

fn din(seed: u64) -> &'static Run {
    runs(seed).din.get_or_init(|| train(seed, TrainMode::DinBaseline, |_| {}))
}

fn full(seed: u64) -> &'static Run {
    runs(seed).full.get_or_init(|| train(seed, TrainMode::ThreeStage, |_| {}))
}

fn e2e(seed: u64) -> &'static Run {
    runs(seed).e2e.get_or_init(|| train(seed, TrainMode::EndToEnd, |_| {}))
}

fn ablation(seed: u64, which: &str) -> &'static Run {
    let r = runs(seed);
    let (cell, f): (&OnceLock<Run>, fn(&mut ModelConfig)) = match which {
        "uim" => (&r.no_uim, |c| c.components.uim = false),
        "die" => (&r.no_die, |c| c.components.die = false),
        "sein" => (&r.no_sein, |c| c.components.sein = false),
        _ => unreachable!(),
    };
    cell.get_or_init(|| train(seed, TrainMode::ThreeStage, f))
}

// ---- 1: RelaImpr reproduction ----------------------------------------------------------------

#[test]
fn criterion_01_rela_impr_reproduction() {
    // (model, AUC, printed AUC RelaImpr, GAUC, printed GAUC RelaImpr); first row is the base
    let xianyu = [
        ("DIN", 0.6914, 0.00, 0.6318, 0.00),
        ("DIEN", 0.6915, 0.05, 0.6321, 0.23),
        ("POSO", 0.6908, -0.31, 0.6315, -0.23),
        ("MWUF", 0.6920, 0.31, 0.6341, 1.75),
        ("DIHN", 0.6947, 1.72, 0.6347, 2.20),
        ("DIAN", 0.6962, 2.51, 0.6362, 3.34),
        ("DEI2N", 0.6986, 3.76, 0.6396, 5.72),
        ("DAIAN", 0.7024, 5.75, 0.6432, 8.65),
    ];
    let alimama = [
        ("DIN", 0.6154, 0.00, 0.5954, 0.00),
        ("DIEN", 0.6155, 0.09, 0.5957, 0.31),
        ("POSO", 0.6159, 0.43, 0.5959, 0.52),
        ("MWUF", 0.6162, 0.69, 0.5963, 0.94),
        ("DIHN", 0.6166, 1.04, 0.5966, 1.26),
        ("DIAN", 0.6176, 1.91, 0.5974, 2.10),
        ("DEI2N", 0.6194, 3.47, 0.5984, 3.14),
        ("DAIAN", 0.6259, 9.10, 0.6062, 11.32),
    ];
    let mut cells = 0;
    let mut bad = Vec::new();
    for (name, table) in [("Xianyu", &xianyu), ("Alimama", &alimama)] {
        let (_, ba, _, bg, _) = table[0];
        for &(model, a, ra, g, rg) in table.iter() {
            for (metric, m, b, printed) in [("AUC", a, ba, ra), ("GAUC", g, bg, rg)] {
                cells += 1;
                let got = round2(rela_impr(m, b).unwrap());
                if (got - printed).abs() > 0.01 + 1e-9 {
                    bad.push(format!("{name} {model} {metric}: {got:.2} vs printed {printed:.2}"));
                }
            }
        }
    }
    let detail = if bad.is_empty() {
        format!("{cells}/{cells} cells within 0.01")
    } else {
        format!("{}/{cells} cells within 0.01; off: {}", cells - bad.len(), bad.join("; "))
    };
    verdict(1, "RelaImpr reproduces the tabled percentages", bad.is_empty(), &detail);
}

// ---- 2: metric oracles -------------------------------------------------------------------------

#[test]
fn criterion_02_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut auc_ok = 0;
    let mut gauc_ok = 0;
    let mut failures = 0;
    for _ in 0..500 {
        let n = rng.gen_range(2..=200);
        let levels = rng.gen_range(2..30);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        match (auc(&scores, &labels), auc_pairwise(&scores, &labels)) {
            (Ok(a), Ok(b)) if a == b => auc_ok += 1,
            (Err(_), Err(_)) => auc_ok += 1,
            _ => failures += 1,
        }
        let users = rng.gen_range(1..8);
        let imps: Vec<ScoredImpression> = (0..n)
            .map(|i| ScoredImpression {
                request_id: i,
                user_id: rng.gen_range(0..users),
                score: scores[i],
                label: labels[i],
                intent_diversity: 0,
            })
            .collect();
        match (gauc(&imps), brute_gauc(&imps)) {
            (Ok(a), Some(b)) if a == b => gauc_ok += 1,
            (Err(_), None) => gauc_ok += 1,
            _ => failures += 1,
        }
    }
    verdict(
        2,
        "rank-sum AUC and GAUC match brute-force oracles",
        failures == 0,
        &format!("AUC {auc_ok}/500, GAUC {gauc_ok}/500 exact"),
    );
}

/// Impression-weighted mean of per-user pairwise AUC, summed in user order.
fn brute_gauc(imps: &[ScoredImpression]) -> Option<f64> {
    let mut users: Vec<usize> = imps.iter().map(|i| i.user_id).collect();
    users.sort_unstable();
    users.dedup();
    let (mut num, mut den) = (0.0, 0.0);
    for u in users {
        let mine: Vec<&ScoredImpression> = imps.iter().filter(|i| i.user_id == u).collect();
        let s: Vec<f64> = mine.iter().map(|i| i.score).collect();
        let l: Vec<u8> = mine.iter().map(|i| i.label).collect();
        if let Ok(a) = auc_pairwise(&s, &l) {
            num += mine.len() as f64 * a;
            den += mine.len() as f64;
        }
    }
    (den > 0.0).then(|| num / den)
}

// ---- 3: gradients --------------------------------------------------------------------------------

fn small_world() -> (Dataset, SimilarityTable) {
    let cfg = SynthConfig {
        num_items: 120,
        num_clusters: 6,
        num_users: 12,
        requests_per_user: 4,
        candidates_per_request: 6,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg, 5).unwrap();
    let sims = SimilarityTable::new(&ds.catalog).unwrap();
    (ds, sims)
}

#[test]
fn criterion_03_gradient_correctness() {
    let (ds, sims) = small_world();
    let ctx = daian_core::model::Context {
        catalog: &ds.catalog,
        users: &ds.users,
        sims: &sims,
    };
    let model = DaianModel::new(ModelConfig::default().for_dataset(&ds), 16).unwrap();
    let req = &ds.requests[0];
    let cands = [0usize, 1, 2, 3];
    let labels: Vec<f64> = cands.iter().map(|&i| f64::from(req.impressions[i].label)).collect();
    let checks = check_param_gradients(
        &model.params,
        |g| {
            let nodes = model.forward_request(g, &ctx, req, &cands, IntentMode::Predicted)?;
            g.bce(nodes.p_ctr, &labels)
        },
        1e-6,
        8,
        1e-5,
        16,
    )
    .unwrap();
    let mut worst = Vec::new();
    let mut grad_ok = true;
    for grp in ParamGroup::ALL {
        let e = checks
            .iter()
            .filter(|c| c.group == grp)
            .map(|c| c.max_rel_error)
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        match e {
            Some(e) => {
                grad_ok &= e < 1e-4;
                worst.push(format!("{} {e:.1e}", grp.symbol()));
            }
            None => {
                grad_ok = false;
                worst.push(format!("{} unreached", grp.symbol()));
            }
        }
    }

    // every stop site, including the detached estimate used for unlabeled
    // requests, passes nothing back to its input
    let mut sites = 0;
    let mut stops_ok = true;
    for mode in [IntentMode::Predicted, IntentMode::GroundTruth(None)] {
        let mut g = Graph::with_params(&model.params);
        let nodes = model.forward_request(&mut g, &ctx, req, &cands, mode).unwrap();
        for &(blocked, stopped) in &nodes.stops {
            sites += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(sites);
            let (r, c) = g.dims(stopped);
            let w = g
                .constant_matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let prod = g.mul(stopped, w).unwrap();
            let through_stop = g.sum(prod);
            let back = g.backward(through_stop).unwrap();
            stops_ok &= back.wrt_dense(&g, blocked).iter().all(|&x| x == 0.0);
            stops_ok &= back.params().iter().next().is_none();
        }
        // the projection is reached only through its stop
        let loss = g.bce(nodes.p_ctr, &labels).unwrap();
        let back = g.backward(loss).unwrap();
        stops_ok &= back.wrt_dense(&g, nodes.u_co.unwrap()).iter().all(|&x| x == 0.0);
    }
    verdict(
        3,
        "full-model gradient check and stop-gradient sites",
        grad_ok && stops_ok && sites == 7,
        &format!("max rel error {}; {sites} stop sites zero: {stops_ok}", worst.join(", ")),
    );
}

// ---- 4: intent labels ------------------------------------------------------------------------------

#[test]
fn criterion_04_intent_label_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dim = 8;
    let items: Vec<Item> = (0..300)
        .map(|i| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            Item {
                item_id: i,
                category_id: 0,
                side_info_id: 0,
                semantic_vec: v.iter().map(|x| x / nv).collect(),
            }
        })
        .collect();
    let catalog = ItemCatalog { items, num_clusters: 1 };
    let mut exact = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=10);
        let trigger = rng.gen_range(0..300);
        let clicked: Vec<usize> = (0..rng.gen_range(1..12)).map(|_| rng.gen_range(0..300)).collect();
        let got = label_request(&clicked, trigger, &catalog, n).unwrap().map(|d| d.probs);
        // independent histogram: own cosine, edge walk, counts / total
        let mut hist = vec![0usize; n];
        for &t in &clicked {
            let (a, b) = (&catalog.items[trigger].semantic_vec, &catalog.items[t].semantic_vec);
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = (dot / (na * nb)).clamp(-1.0, 1.0);
            let level = (0..n)
                .find(|&j| s < -1.0 + 2.0 * (j + 1) as f64 / n as f64)
                .unwrap_or(n - 1);
            hist[level] += 1;
        }
        let want: Vec<f64> = hist.iter().map(|&h| h as f64 / clicked.len() as f64).collect();
        if got == Some(want) {
            exact += 1;
        }
    }
    verdict(
        4,
        "intent labels equal a histogram-count oracle",
        exact == 1000,
        &format!("{exact}/1000 requests exact"),
    );
}

// ---- 5: hybrid enhancer ---------------------------------------------------------------------------

#[test]
fn criterion_05_hybrid_enhancer_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = daian_core::numeric::ParamStore::default();
    let mut in_range = 0;
    for k in 0..10_000 {
        let d = rng.gen_range(1..17);
        let scale = 10f64.powi(rng.gen_range(-4..4));
        let mut draw = |zero: bool| -> Vec<f64> {
            (0..d)
                .map(|_| if zero { 0.0 } else { scale * rng.gen_range(-1.0..1.0) })
                .collect()
        };
        let a = draw(k % 97 == 0);
        let b = draw(k % 89 == 0);
        let mut g = Graph::with_params(&params);
        let av = g.constant_matrix(1, d, a).unwrap();
        let bv = g.constant_matrix(1, d, b).unwrap();
        let delta = g.norm_ratio(av, bv).unwrap();
        if (0.0..=1.0).contains(&g.value(delta)[0]) {
            in_range += 1;
        }
    }

    // through the model: pin U_co by zeroing the projection's output layer
    let (ds, sims) = small_world();
    let ctx = daian_core::model::Context {
        catalog: &ds.catalog,
        users: &ds.users,
        sims: &sims,
    };
    let enhance = |d_sim: usize, u_co: &[f64], bins: Option<&[f64]>| {
        let cfg = ModelConfig {
            d_sim,
            ..ModelConfig::default().for_dataset(&ds)
        };
        let mut model = DaianModel::new(cfg, 6).unwrap();
        let sein = model.sein.clone().unwrap();
        let &(wl, bl) = sein.proj.layers.last().unwrap();
        let (r, c, name) = {
            let p = model.params.get(wl);
            (p.rows, p.cols, p.name.clone())
        };
        model.params.assign(&name, r, c, vec![0.0; r * c]).unwrap();
        let name = model.params.get(bl).name.clone();
        model.params.assign(&name, 1, c, u_co.to_vec()).unwrap();
        if let Some(row) = bins {
            let p = model.params.get(sein.bins);
            let (r, c, name) = (p.rows, p.cols, p.name.clone());
            let data = (0..r).flat_map(|_| row.iter().copied()).collect();
            model.params.assign(&name, r, c, data).unwrap();
        }
        let req = &ds.requests[0];
        let cands: Vec<usize> = (0..req.impressions.len()).collect();
        let mut g = Graph::with_params(&model.params);
        let nodes = model
            .forward_request(&mut g, &ctx, req, &cands, IntentMode::Predicted)
            .unwrap();
        (
            g.value(nodes.delta.unwrap()).to_vec(),
            g.value(nodes.u_enh.unwrap()).to_vec(),
            g.value(nodes.u_sim.unwrap()).to_vec(),
        )
    };
    let (_, enh0, sim0) = enhance(16, &[0.0; 16], None);
    let zero_ok = enh0 == sim0;
    let (delta, enh, _) = enhance(2, &[0.0, 1.0], Some(&[3.0, 0.0]));
    let hand_ok = delta.iter().all(|&d| d == 0.75) && enh.chunks(2).all(|r| r == [2.25, 0.25]);
    verdict(
        5,
        "hybrid similarity enhancer algebra",
        in_range == 10_000 && zero_ok && hand_ok,
        &format!(
            "delta in [0,1] {in_range}/10000; zero U_co keeps U_sim: {zero_ok}; [3,0]/[0,1] -> {:.2}, {:?}: {hand_ok}",
            delta[0],
            &enh[..2]
        ),
    );
}

// ---- 6: planted intent recovery ---------------------------------------------------------------------

#[test]
fn criterion_06_planted_signal_recovery() {
    let fit = full(7).stage1_fit.as_ref().expect("stage 1 ran");
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [Archetype::Specific, Archetype::Broad] {
        let f = fit.get(a).expect("archetype present");
        let ratio = f.js / f.js_uniform;
        ok &= ratio < 0.5;
        parts.push(format!(
            "{a:?} JS {:.4} vs uniform {:.4} (ratio {ratio:.3}; per-request {:.4})",
            f.js, f.js_uniform, f.js_per_request
        ));
    }
    let spec = fit.get(Archetype::Specific).unwrap();
    let top = spec
        .predicted_curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, _)| j)
        .unwrap();
    ok &= top == fit.n - 1;
    parts.push(format!("specific curve peaks at level {top} of {}", fit.n));
    verdict(6, "stage-1 estimator recovers planted intent", ok, &parts.join("; "));
}

// ---- 7: lift over DIN ----------------------------------------------------------------------------

#[test]
fn criterion_07_architecture_lift() {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let (f, d) = (full(seed).auc, din(seed).auc);
        ok &= f - d >= 0.01;
        parts.push(format!("seed {seed}: {f:.4} vs {d:.4} (+{:.4})", f - d));
    }
    verdict(7, "full model beats DIN by >= 0.01 AUC", ok, &parts.join("; "));
}

// ---- 8: staged training and ablations --------------------------------------------------------------

#[test]
fn criterion_08_three_stage_and_ablations() {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let f = full(seed).auc;
        let e = e2e(seed).auc;
        ok &= f >= e - 0.002;
        let mut row = format!("seed {seed}: three-stage {f:.4}, e2e {e:.4}");
        for which in ["uim", "die", "sein"] {
            let a = ablation(seed, which).auc;
            ok &= a <= f + 0.002;
            row += &format!(", no-{which} {a:.4}{}", if a > f + 0.002 { " (beats full)" } else { "" });
        }
        parts.push(row);
    }
    verdict(
        8,
        "three-stage >= end-to-end - 0.002; no ablation beats full + 0.002",
        ok,
        &parts.join("; "),
    );
}

// ---- 9: diversity trend -----------------------------------------------------------------------------

#[test]
fn criterion_09_diversity_group_trend() {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let rep = diversity_group_gauc(&full(seed).scores, &din(seed).scores, &DEFAULT_BUCKET_EDGES).unwrap();
        let (lo, hi) = rep.extremes().expect("populated buckets");
        let (dl, dh) = (lo.delta.unwrap(), hi.delta.unwrap());
        ok &= dh >= dl;
        parts.push(format!(
            "seed {seed}: bucket {} {dh:+.4} vs bucket {} {dl:+.4}",
            hi.label, lo.label
        ));
    }
    verdict(
        9,
        "GAUC gain over DIN grows from zero to highest diversity",
        ok,
        &parts.join("; "),
    );
}

// ---- 10: determinism -----------------------------------------------------------------------------------

#[test]
fn criterion_10_determinism_and_persistence() {
    let c = corpus(7);
    let again = generate(&SynthConfig::default(), 7).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(&c.ds, a.path()).unwrap();
    write_dataset(&again, b.path()).unwrap();
    let mut data_ok = true;
    for f in ["catalog.jsonl", "users.jsonl", "requests.jsonl"] {
        data_ok &= std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap();
    }

    let first = full(7);
    let outcome = run_pipeline(
        TrainMode::ThreeStage,
        &ModelConfig::default().for_dataset(&c.ds),
        &c.data(),
        &train_config(7),
    )
    .unwrap();
    let second = finish(c, &outcome.model, &outcome.reports, None);
    let losses_ok = first.step_losses == second.step_losses;
    let ck_ok = first.checkpoint == second.checkpoint;

    let p1 = a.path().join("model.json");
    std::fs::write(&p1, &first.checkpoint).unwrap();
    let (model, prov) = load_checkpoint(&p1).unwrap();
    let p2 = a.path().join("resaved.json");
    save_checkpoint(&model, prov, &p2).unwrap();
    let resave_ok = std::fs::read(&p2).unwrap() == first.checkpoint;
    let rescored = score_requests(&model, &c.data(), &c.split.test, None).unwrap();
    let scores_ok = rescored.iter().zip(&first.scores).all(|(x, y)| x.score.to_bits() == y.score.to_bits());

    verdict(
        10,
        "fixed config and seed reproduce data, losses and checkpoints",
        data_ok && losses_ok && ck_ok && resave_ok && scores_ok,
        &format!(
            "dataset files {data_ok}; {} step losses {losses_ok}; checkpoint bytes {ck_ok}; save-load-save {resave_ok}; reloaded scores {scores_ok}",
            first.step_losses.len()
        ),
    );
}

// ---- long runs ---------------------------------------------------------------------------------------------

/// Retrain for each level count on the default corpus; reports only.
#[test]
#[ignore = "about 8 minutes; run with --ignored"]
fn sweep_intent_levels() {
    let c = corpus(7);
    for n in [2usize, 4, 6, 8] {
        let labels = label_dataset(&c.ds, &c.sims, n).unwrap();
        let data = TrainData {
            labels: &labels,
            ..c.data()
        };
        let cfg = ModelConfig {
            n_levels: n,
            ..ModelConfig::default().for_dataset(&c.ds)
        };
        let out = run_pipeline(TrainMode::ThreeStage, &cfg, &data, &train_config(7)).unwrap();
        let rep = MetricReport::from_scores(&score_requests(&out.model, &data, &c.split.test, None).unwrap()).unwrap();
        let _ = writeln!(std::io::stderr(), "sweep n={n}: AUC {:.4} GAUC {:.4}", rep.auc, rep.gauc);
        assert!(rep.auc > 0.5);
    }
}
