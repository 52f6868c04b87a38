use std::ffi::{CStr, CString};
use std::ptr;

use daian_core::intent::{label_dataset, SimilarityTable};
use daian_core::model::{save_checkpoint, DaianModel as CoreModel, ModelConfig};
use daian_core::synth::read_dataset;
use daian_core::train::{score_requests, TrainData};
use daian_ffi::*;

const SMALL: &str = "synth.num_items=120\nsynth.num_clusters=6\nsynth.num_users=20\nsynth.requests_per_user=4\n";

fn last_error() -> String {
    let p = daian_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn generate_small(seed: u64) -> *mut DaianCorpus {
    let cfg = cstr(SMALL);
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { daian_corpus_generate(cfg.as_ptr(), seed, &mut c) }, DaianStatus::Ok);
    assert!(!c.is_null());
    c
}

#[test]
fn auc_through_the_c_interface() {
    let mut out = 0.0;
    let s = [0.1, 0.4, 0.35, 0.8];
    let l = [0u8, 0, 1, 1];
    assert_eq!(unsafe { daian_auc(s.as_ptr(), l.as_ptr(), 4, &mut out) }, DaianStatus::Ok);
    assert_eq!(out, 0.75);
    assert!(daian_last_error_message().is_null());

    let one_class = [1u8, 1, 1, 1];
    assert_eq!(
        unsafe { daian_auc(s.as_ptr(), one_class.as_ptr(), 4, &mut out) },
        DaianStatus::Numeric
    );
    assert!(last_error().contains("undefined"), "{}", last_error());
}

#[test]
fn gauc_rela_impr_js_and_binning() {
    let users = [0u64, 0, 0, 0, 1, 1];
    let s = [0.1, 0.4, 0.35, 0.8, 0.2, 0.3];
    let l = [0u8, 0, 1, 1, 1, 1];
    let mut out = 0.0;
    assert_eq!(
        unsafe { daian_gauc(users.as_ptr(), s.as_ptr(), l.as_ptr(), 6, &mut out) },
        DaianStatus::Ok
    );
    assert_eq!(out, 0.75);

    assert_eq!(unsafe { daian_rela_impr(0.7024, 0.6914, &mut out) }, DaianStatus::Ok);
    assert!((out - 5.75).abs() < 0.005);
    assert_eq!(unsafe { daian_rela_impr(0.6, 0.5, &mut out) }, DaianStatus::Numeric);

    let p = [1.0, 0.0];
    let q = [0.0, 1.0];
    assert_eq!(unsafe { daian_js_divergence(p.as_ptr(), q.as_ptr(), 2, &mut out) }, DaianStatus::Ok);
    assert!((out - std::f64::consts::LN_2).abs() < 1e-15);

    let mut level = 0usize;
    assert_eq!(unsafe { daian_bin_similarity(0.0, 6, &mut level) }, DaianStatus::Ok);
    assert_eq!(level, 3);
    assert_ne!(unsafe { daian_bin_similarity(0.0, 1, &mut level) }, DaianStatus::Ok);
}

#[test]
fn null_arguments_are_rejected() {
    let s = [0.1, 0.9];
    let l = [0u8, 1];
    let mut out = 0.0;
    unsafe {
        assert_eq!(daian_auc(ptr::null(), l.as_ptr(), 2, &mut out), DaianStatus::InvalidArgument);
        assert!(last_error().contains("scores"));
        assert_eq!(daian_auc(s.as_ptr(), l.as_ptr(), 2, ptr::null_mut()), DaianStatus::InvalidArgument);
        assert_eq!(daian_rela_impr(0.7, 0.6, ptr::null_mut()), DaianStatus::InvalidArgument);
        let mut n = 0usize;
        assert_eq!(daian_corpus_num_requests(ptr::null(), &mut n), DaianStatus::InvalidArgument);
        let mut c = ptr::null_mut();
        assert_eq!(daian_corpus_load(ptr::null(), &mut c), DaianStatus::InvalidArgument);
        let mut m = ptr::null_mut();
        assert_eq!(daian_model_load(ptr::null(), &mut m), DaianStatus::InvalidArgument);
        // freeing null is a no-op
        daian_corpus_free(ptr::null_mut());
        daian_model_free(ptr::null_mut());
    }
}

#[test]
fn bad_labels_and_config_map_to_status_codes() {
    let s = [0.1, 0.9];
    let l = [0u8, 2];
    let mut out = 0.0;
    assert_eq!(
        unsafe { daian_auc(s.as_ptr(), l.as_ptr(), 2, &mut out) },
        DaianStatus::InvalidArgument
    );
    let cfg = cstr("synth.nope=1\n");
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { daian_corpus_generate(cfg.as_ptr(), 1, &mut c) }, DaianStatus::Config);
    assert!(c.is_null());
    assert!(last_error().contains("synth.nope"));
}

#[test]
fn corpus_generate_save_load() {
    let c = generate_small(5);
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().to_str().unwrap());
    unsafe {
        let (mut req, mut imps) = (0usize, 0usize);
        assert_eq!(daian_corpus_num_requests(c, &mut req), DaianStatus::Ok);
        assert_eq!(daian_corpus_num_impressions(c, &mut imps), DaianStatus::Ok);
        assert_eq!(req, 80);
        assert!(imps >= req);
        assert_eq!(daian_corpus_save(c, path.as_ptr()), DaianStatus::Ok);

        let mut back = ptr::null_mut();
        assert_eq!(daian_corpus_load(path.as_ptr(), &mut back), DaianStatus::Ok);
        let (mut req2, mut imps2) = (0usize, 0usize);
        daian_corpus_num_requests(back, &mut req2);
        daian_corpus_num_impressions(back, &mut imps2);
        assert_eq!((req, imps), (req2, imps2));
        daian_corpus_free(back);

        let missing = cstr(dir.path().join("absent").to_str().unwrap());
        let mut none = ptr::null_mut();
        assert_eq!(daian_corpus_load(missing.as_ptr(), &mut none), DaianStatus::Io);
        daian_corpus_free(c);
    }
}

#[test]
fn model_scores_match_the_library() {
    let c = generate_small(6);
    let dir = tempfile::tempdir().unwrap();
    let cpath = cstr(dir.path().to_str().unwrap());
    assert_eq!(unsafe { daian_corpus_save(c, cpath.as_ptr()) }, DaianStatus::Ok);

    // an untrained checkpoint is enough to compare both paths
    let ds = read_dataset(dir.path()).unwrap();
    let core = CoreModel::new(ModelConfig::default().for_dataset(&ds), 3).unwrap();
    let ck = dir.path().join("model.json");
    save_checkpoint(&core, serde_json::Value::Null, &ck).unwrap();
    let sims = SimilarityTable::new(&ds.catalog).unwrap();
    let labels = label_dataset(&ds, &sims, 6).unwrap();
    let split = ds.split(0.2);
    let data = TrainData {
        ds: &ds,
        sims: &sims,
        labels: &labels,
        split: &split,
    };
    let want = score_requests(&core, &data, &[7], None).unwrap();

    let kpath = cstr(ck.to_str().unwrap());
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(daian_model_load(kpath.as_ptr(), &mut m), DaianStatus::Ok);
        let mut buf = [0.0f64; 64];
        let mut len = 0usize;
        assert_eq!(
            daian_model_score_request(m, c, 7, buf.as_mut_ptr(), buf.len(), &mut len),
            DaianStatus::Ok
        );
        assert_eq!(len, want.len());
        for (a, b) in buf[..len].iter().zip(&want) {
            assert_eq!(a.to_bits(), b.score.to_bits());
        }

        let mut probs = [0.0f64; 6];
        assert_eq!(
            daian_model_predict_intent(m, c, 7, probs.as_mut_ptr(), 6, &mut len),
            DaianStatus::Ok
        );
        assert_eq!(len, 6);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // too small a buffer reports the needed length
        let mut tiny = [0.0f64; 1];
        assert_eq!(
            daian_model_score_request(m, c, 7, tiny.as_mut_ptr(), 1, &mut len),
            DaianStatus::InvalidArgument
        );
        assert_eq!(len, want.len());
        assert_eq!(
            daian_model_score_request(m, c, 10_000, buf.as_mut_ptr(), 64, &mut len),
            DaianStatus::InvalidArgument
        );

        // a corpus of another size does not fit the checkpoint
        let other_cfg = cstr("synth.num_items=150\nsynth.num_clusters=6\nsynth.num_users=20\nsynth.requests_per_user=4\n");
        let mut other = ptr::null_mut();
        assert_eq!(daian_corpus_generate(other_cfg.as_ptr(), 1, &mut other), DaianStatus::Ok);
        assert_eq!(
            daian_model_score_request(m, other, 0, buf.as_mut_ptr(), 64, &mut len),
            DaianStatus::Checkpoint
        );
        daian_corpus_free(other);
        daian_model_free(m);
        daian_corpus_free(c);
    }
}

#[test]
fn corrupt_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("model.json");
    std::fs::write(&ck, "{\"format_version\": 1").unwrap();
    let p = cstr(ck.to_str().unwrap());
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { daian_model_load(p.as_ptr(), &mut m) }, DaianStatus::Checkpoint);
    assert!(m.is_null());
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/daian.h")).unwrap();
    assert!(header.contains("#ifndef DAIAN_H"));
    for name in [
        "typedef struct DaianCorpus DaianCorpus;",
        "typedef struct DaianModel DaianModel;",
        "DAIAN_STATUS_OK = 0",
        "DAIAN_STATUS_PANIC",
        "daian_last_error_message(void)",
        "daian_corpus_generate(",
        "daian_corpus_load(",
        "daian_corpus_save(",
        "daian_corpus_free(",
        "daian_model_load(",
        "daian_model_score_request(",
        "daian_model_predict_intent(",
        "daian_model_free(",
        "daian_auc(",
        "daian_gauc(",
        "daian_rela_impr(",
        "daian_js_divergence(",
        "daian_bin_similarity(",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
