//! C interface to the daian-core library.
//!
//! Every function returns a [`DaianStatus`]; results are written through out
//! pointers. On failure a message is available from
//! [`daian_last_error_message`] on the same thread. Corpora and models are
//! opaque handles released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use daian_core::config::RunConfig;
use daian_core::intent::{bin_similarity, IntentLabels, SimilarityTable};
use daian_core::metrics::{self, ScoredImpression};
use daian_core::model::{load_checkpoint, DaianModel as CoreModel};
use daian_core::synth::{generate, read_dataset, write_dataset, Dataset, Split};
use daian_core::train::{predict_intents, score_requests, TrainData};
use daian_core::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DaianStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, out-of-range index or too small a buffer.
    InvalidArgument = 1,
    Config = 2,
    /// Non-finite input, undefined metric or numeric failure.
    Numeric = 3,
    Io = 4,
    Checkpoint = 5,
    /// Inconsistent or malformed data.
    Data = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> DaianStatus {
    match e {
        Error::Config(_) => DaianStatus::Config,
        Error::NumericInput(_) | Error::UndefinedMetric(_) | Error::NanLoss { .. } | Error::Domain(_) => {
            DaianStatus::Numeric
        }
        Error::Io { .. } => DaianStatus::Io,
        Error::Checkpoint(_) => DaianStatus::Checkpoint,
        Error::Lookup { .. } | Error::Label(_) => DaianStatus::InvalidArgument,
        _ => DaianStatus::Data,
    }
}

struct Failure(DaianStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DaianStatus::InvalidArgument, msg.into())
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DaianStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DaianStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside daian");
            DaianStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn daian_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

// ---- corpus ----------------------------------------------------------------

/// A synthetic corpus with its item similarity table.
pub struct DaianCorpus {
    ds: Dataset,
    sims: SimilarityTable,
    labels: IntentLabels,
    split: Split,
}

impl DaianCorpus {
    fn new(ds: Dataset) -> Result<Self, Failure> {
        let sims = SimilarityTable::new(&ds.catalog)?;
        Ok(DaianCorpus {
            ds,
            sims,
            labels: IntentLabels { n: 0, labels: Vec::new() },
            split: Split {
                train: Vec::new(),
                test: Vec::new(),
            },
        })
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

/// Generate a corpus. `config` is optional `key=value` text (null for the
/// defaults); only its `synth.*` keys matter here.
#[no_mangle]
pub unsafe extern "C" fn daian_corpus_generate(
    config: *const c_char,
    seed: u64,
    out: *mut *mut DaianCorpus,
) -> DaianStatus {
    guard(|| {
        let mut cfg = RunConfig::default();
        if !config.is_null() {
            let text = CStr::from_ptr(config)
                .to_str()
                .map_err(|_| invalid("config is not UTF-8"))?;
            cfg.apply_text(text)?;
        }
        let corpus = DaianCorpus::new(generate(&cfg.synth, seed)?)?;
        write_out(out, Box::into_raw(Box::new(corpus)), "out")
    })
}

/// Read a corpus directory written by `daian generate`.
#[no_mangle]
pub unsafe extern "C" fn daian_corpus_load(dir: *const c_char, out: *mut *mut DaianCorpus) -> DaianStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        let corpus = DaianCorpus::new(read_dataset(&dir)?)?;
        write_out(out, Box::into_raw(Box::new(corpus)), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn daian_corpus_save(corpus: *const DaianCorpus, dir: *const c_char) -> DaianStatus {
    guard(|| {
        let corpus = corpus.as_ref().ok_or_else(|| invalid("corpus is null"))?;
        let dir = path_arg(dir, "dir")?;
        write_dataset(&corpus.ds, &dir)?;
        Ok(())
    })
}

/// Number of requests; impressions are grouped by request.
#[no_mangle]
pub unsafe extern "C" fn daian_corpus_num_requests(corpus: *const DaianCorpus, out: *mut usize) -> DaianStatus {
    guard(|| {
        let corpus = corpus.as_ref().ok_or_else(|| invalid("corpus is null"))?;
        write_out(out, corpus.ds.requests.len(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn daian_corpus_num_impressions(corpus: *const DaianCorpus, out: *mut usize) -> DaianStatus {
    guard(|| {
        let corpus = corpus.as_ref().ok_or_else(|| invalid("corpus is null"))?;
        write_out(out, corpus.ds.num_impressions(), "out")
    })
}

/// Release a corpus. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn daian_corpus_free(corpus: *mut DaianCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

// ---- model -----------------------------------------------------------------

/// A trained model loaded from a checkpoint.
pub struct DaianModel {
    model: CoreModel,
}

#[no_mangle]
pub unsafe extern "C" fn daian_model_load(path: *const c_char, out: *mut *mut DaianModel) -> DaianStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let (model, _) = load_checkpoint(&path)?;
        write_out(out, Box::into_raw(Box::new(DaianModel { model })), "out")
    })
}

/// Release a model. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn daian_model_free(model: *mut DaianModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn pair<'a>(
    model: *const DaianModel,
    corpus: *const DaianCorpus,
    request: usize,
) -> Result<(&'a CoreModel, &'a DaianCorpus), Failure> {
    let model = &model.as_ref().ok_or_else(|| invalid("model is null"))?.model;
    let corpus = corpus.as_ref().ok_or_else(|| invalid("corpus is null"))?;
    let c = &model.config;
    if c.n_items != corpus.ds.catalog.len() || c.n_users != corpus.ds.users.len() {
        return Err(Failure(
            DaianStatus::Checkpoint,
            "model vocabularies do not match the corpus".into(),
        ));
    }
    if request >= corpus.ds.requests.len() {
        return Err(invalid(format!(
            "request index {request} out of range ({} requests)",
            corpus.ds.requests.len()
        )));
    }
    Ok((model, corpus))
}

/// Click probabilities for every impression of request `request`.
/// `*out_len` receives the count; fails if it exceeds `capacity`.
#[no_mangle]
pub unsafe extern "C" fn daian_model_score_request(
    model: *const DaianModel,
    corpus: *const DaianCorpus,
    request: usize,
    out_scores: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> DaianStatus {
    guard(|| {
        let (model, corpus) = pair(model, corpus, request)?;
        let scored = score_requests(model, &corpus.data(), &[request], None)?;
        write_out(out_len, scored.len(), "out_len")?;
        if scored.len() > capacity || out_scores.is_null() {
            return Err(invalid(format!("buffer holds {capacity} scores, need {}", scored.len())));
        }
        for (i, s) in scored.iter().enumerate() {
            out_scores.add(i).write(s.score);
        }
        Ok(())
    })
}

/// Predicted intent distribution of request `request` (n_levels values).
#[no_mangle]
pub unsafe extern "C" fn daian_model_predict_intent(
    model: *const DaianModel,
    corpus: *const DaianCorpus,
    request: usize,
    out_probs: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> DaianStatus {
    guard(|| {
        let (model, corpus) = pair(model, corpus, request)?;
        if model.uim.is_none() {
            return Err(Failure(DaianStatus::Config, "model has no intent estimator".into()));
        }
        let probs = predict_intents(model, &corpus.data(), &[request])?.remove(0);
        write_out(out_len, probs.len(), "out_len")?;
        if probs.len() > capacity || out_probs.is_null() {
            return Err(invalid(format!("buffer holds {capacity} values, need {}", probs.len())));
        }
        ptr::copy_nonoverlapping(probs.as_ptr(), out_probs, probs.len());
        Ok(())
    })
}

// ---- metrics ---------------------------------------------------------------

/// Rank-sum AUC with tie-averaged ranks. Labels are 0 or 1.
#[no_mangle]
pub unsafe extern "C" fn daian_auc(scores: *const f64, labels: *const u8, len: usize, out: *mut f64) -> DaianStatus {
    guard(|| {
        let s = slice_arg(scores, len, "scores")?;
        let l = slice_arg(labels, len, "labels")?;
        write_out(out, metrics::auc(s, l)?, "out")
    })
}

/// Impression-weighted mean of per-user AUC; users with one label class are skipped.
#[no_mangle]
pub unsafe extern "C" fn daian_gauc(
    user_ids: *const u64,
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> DaianStatus {
    guard(|| {
        let u = slice_arg(user_ids, len, "user_ids")?;
        let s = slice_arg(scores, len, "scores")?;
        let l = slice_arg(labels, len, "labels")?;
        let imps: Vec<ScoredImpression> = (0..len)
            .map(|i| ScoredImpression {
                request_id: 0,
                user_id: u[i] as usize,
                score: s[i],
                label: l[i],
                intent_diversity: 0,
            })
            .collect();
        write_out(out, metrics::gauc(&imps)?, "out")
    })
}

/// Relative improvement in percent: (measured − 0.5) / (base − 0.5) − 1, × 100.
#[no_mangle]
pub unsafe extern "C" fn daian_rela_impr(measured: f64, base: f64, out: *mut f64) -> DaianStatus {
    guard(|| write_out(out, metrics::rela_impr(measured, base)?, "out"))
}

/// Jensen–Shannon divergence (natural log) of two distributions of length `n`.
#[no_mangle]
pub unsafe extern "C" fn daian_js_divergence(p: *const f64, q: *const f64, n: usize, out: *mut f64) -> DaianStatus {
    guard(|| {
        let p = slice_arg(p, n, "p")?;
        let q = slice_arg(q, n, "q")?;
        write_out(out, metrics::js_divergence(p, q)?, "out")
    })
}

/// Similarity level in `0..n` of a cosine similarity.
#[no_mangle]
pub unsafe extern "C" fn daian_bin_similarity(sim: f64, n: usize, out: *mut usize) -> DaianStatus {
    guard(|| write_out(out, bin_similarity(sim, n)?, "out"))
}
