//! C interface to the sampler engine.
//!
//! Every object crossing the boundary is an opaque handle owned by this
//! library; callers create them, pass them around, and free them with
//! the matching `*_free`. Functions return a `ParmixStatus`, and on any
//! failure the thread-local message behind [`parmix_last_error`]
//! describes what went wrong. All entry points catch panics.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use parmix::data::{Corpus, PointSet};
use parmix::dpmm::RatioMode;
use parmix::engine::{
    run_dpmm, run_hdp, DpmmRun, HdpRun, InitSpec, ModelKind, SamplerConfig,
};
use parmix::error::Error;
use parmix::eval::f1_score;

/// Result of every call that can fail. Zero is success; anything else
/// is an error with details behind `parmix_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParmixStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Rejected configuration or argument value.
    Config = 2,
    Io = 3,
    Parse = 4,
    /// Input outside the model's domain.
    Domain = 5,
    /// Internal invariant violation; indicates a bug in this library.
    Invariant = 6,
    Checkpoint = 7,
    /// A panic was caught at the boundary.
    Panic = 8,
}

/// Initial clustering family for `parmix_config_set_init`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParmixInit {
    Kmeans = 0,
    Random = 1,
}

/// Acceptance rule for the cross-lane shuffle.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParmixRatioMode {
    /// Metropolis test on the cluster-size histogram ratio.
    Histogram = 0,
    /// Apply every proposed shuffle.
    AlwaysAccept = 1,
}

/// One trace row, flattened to plain fields. Optional quantities that a
/// model does not produce are NaN (floats) or 0 (`t_total`).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ParmixTraceRow {
    pub iter: u64,
    pub elapsed_ms: f64,
    pub local_ms: f64,
    pub global_ms: f64,
    pub num_clusters: u64,
    pub log_joint: f64,
    pub gamma: f64,
    pub t_total: u64,
    pub accepted: bool,
    pub metric: f64,
}

impl Default for ParmixTraceRow {
    fn default() -> Self {
        ParmixTraceRow {
            iter: 0,
            elapsed_ms: 0.0,
            local_ms: 0.0,
            global_ms: 0.0,
            num_clusters: 0,
            log_joint: f64::NAN,
            gamma: f64::NAN,
            t_total: 0,
            accepted: false,
            metric: f64::NAN,
        }
    }
}

pub struct ParmixDataset {
    inner: PointSet,
}

pub struct ParmixCorpus {
    inner: Corpus,
}

pub struct ParmixConfig {
    inner: SamplerConfig,
}

pub struct ParmixDpmmResult {
    labels: Vec<u64>,
    num_clusters: usize,
    trace: Vec<ParmixTraceRow>,
}

pub struct ParmixHdpResult {
    num_dishes: usize,
    gamma: f64,
    topic_words: Vec<Vec<u64>>,
    trace: Vec<ParmixTraceRow>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = owned);
}

fn status_of(err: &Error) -> ParmixStatus {
    match err {
        Error::Domain(_) => ParmixStatus::Domain,
        Error::Invariant(_) => ParmixStatus::Invariant,
        Error::Parse { .. } => ParmixStatus::Parse,
        Error::Io(_) => ParmixStatus::Io,
        Error::Checkpoint(_) => ParmixStatus::Checkpoint,
        Error::Config(_) => ParmixStatus::Config,
    }
}

fn fail(err: Error) -> ParmixStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn null_arg(name: &str) -> ParmixStatus {
    set_error(&format!("argument {name} is null"));
    ParmixStatus::NullArgument
}

/// Run `body` with panics converted to `ParmixStatus::Panic`.
fn guarded(body: impl FnOnce() -> ParmixStatus) -> ParmixStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(&format!("panic: {msg}"));
            ParmixStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread. The pointer is
/// valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn parmix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn parmix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------
// datasets

/// Wrap `len` points of `dims` doubles each (row-major, `len * dims`
/// values). The values are copied.
#[no_mangle]
pub unsafe extern "C" fn parmix_dataset_new(
    values: *const f64,
    len: usize,
    dims: usize,
    out: *mut *mut ParmixDataset,
) -> ParmixStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        if values.is_null() {
            return null_arg("values");
        }
        let flat = slice::from_raw_parts(values, len.saturating_mul(dims)).to_vec();
        match PointSet::new(flat, dims) {
            Ok(ps) => {
                *out = Box::into_raw(Box::new(ParmixDataset { inner: ps }));
                ParmixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn parmix_dataset_len(data: *const ParmixDataset) -> usize {
    if data.is_null() {
        return 0;
    }
    (*data).inner.len()
}

#[no_mangle]
pub unsafe extern "C" fn parmix_dataset_free(data: *mut ParmixDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

// ---------------------------------------------------------------
// corpora

/// Build a bag-of-words corpus. Document `i` owns the entries
/// `offsets[i] .. offsets[i + 1]` of `words`/`counts`, so `offsets`
/// holds `num_docs + 1` values ending at `num_entries`. Word ids must
/// be below `vocab`, counts must be positive.
#[no_mangle]
pub unsafe extern "C" fn parmix_corpus_new(
    offsets: *const usize,
    num_docs: usize,
    words: *const u32,
    counts: *const u32,
    num_entries: usize,
    vocab: usize,
    out: *mut *mut ParmixCorpus,
) -> ParmixStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        if offsets.is_null() {
            return null_arg("offsets");
        }
        if words.is_null() {
            return null_arg("words");
        }
        if counts.is_null() {
            return null_arg("counts");
        }
        let offsets = slice::from_raw_parts(offsets, num_docs + 1);
        let words = slice::from_raw_parts(words, num_entries);
        let counts = slice::from_raw_parts(counts, num_entries);
        let mut docs = Vec::with_capacity(num_docs);
        for m in 0..num_docs {
            let (lo, hi) = (offsets[m], offsets[m + 1]);
            if lo > hi || hi > num_entries {
                set_error(&format!(
                    "document {m} spans {lo}..{hi} outside 0..{num_entries}"
                ));
                return ParmixStatus::Config;
            }
            docs.push(
                words[lo..hi]
                    .iter()
                    .copied()
                    .zip(counts[lo..hi].iter().copied())
                    .collect::<Vec<(u32, u32)>>(),
            );
        }
        match Corpus::new(docs, vocab) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(ParmixCorpus { inner: c }));
                ParmixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn parmix_corpus_num_docs(corpus: *const ParmixCorpus) -> usize {
    if corpus.is_null() {
        return 0;
    }
    (*corpus).inner.num_docs()
}

#[no_mangle]
pub unsafe extern "C" fn parmix_corpus_free(corpus: *mut ParmixCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

// ---------------------------------------------------------------
// configs

/// Mixture-model configuration with a Gaussian likelihood of known
/// variance `sigma2` and a `N(mu0, tau2)` prior on component means.
/// Starts from a single cluster; see the setters for other options.
#[no_mangle]
pub unsafe extern "C" fn parmix_config_dpmm_new(
    alpha: f64,
    procs: usize,
    sweeps: u64,
    seed: u64,
    mu0: f64,
    tau2: f64,
    sigma2: f64,
    out: *mut *mut ParmixConfig,
) -> ParmixStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        let cfg = SamplerConfig {
            kind: ModelKind::Dpmm,
            alpha,
            procs,
            sweeps,
            global_every: 1,
            seed,
            gamma_step: None,
            beta: None,
            mu0: Some(mu0),
            tau2: Some(tau2),
            sigma2: Some(sigma2),
            init: Some(InitSpec::Random(1)),
            ratio_mode: RatioMode::default(),
            trace: None,
            checkpoint: None,
            checkpoint_every: None,
            serial: false,
            max_move_clusters: None,
        };
        match cfg.validate() {
            Ok(()) => {
                *out = Box::into_raw(Box::new(ParmixConfig { inner: cfg }));
                ParmixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Topic-model configuration with symmetric Dirichlet(`beta`) topics.
/// `gamma_step` is the random-walk width of the concentration update.
#[no_mangle]
pub unsafe extern "C" fn parmix_config_hdp_new(
    alpha: f64,
    beta: f64,
    gamma_step: f64,
    procs: usize,
    sweeps: u64,
    seed: u64,
    out: *mut *mut ParmixConfig,
) -> ParmixStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        let cfg = SamplerConfig {
            kind: ModelKind::Hdp,
            alpha,
            procs,
            sweeps,
            global_every: 1,
            seed,
            gamma_step: Some(gamma_step),
            beta: Some(beta),
            mu0: None,
            tau2: None,
            sigma2: None,
            init: None,
            ratio_mode: RatioMode::default(),
            trace: None,
            checkpoint: None,
            checkpoint_every: None,
            serial: false,
            max_move_clusters: None,
        };
        match cfg.validate() {
            Ok(()) => {
                *out = Box::into_raw(Box::new(ParmixConfig { inner: cfg }));
                ParmixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn edit_config(
    cfg: *mut ParmixConfig,
    apply: impl FnOnce(&mut SamplerConfig),
) -> ParmixStatus {
    if cfg.is_null() {
        return null_arg("cfg");
    }
    let mut next = (*cfg).inner.clone();
    apply(&mut next);
    match next.validate() {
        Ok(()) => {
            (*cfg).inner = next;
            ParmixStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Replace the initial clustering (mixture models only).
#[no_mangle]
pub unsafe extern "C" fn parmix_config_set_init(
    cfg: *mut ParmixConfig,
    family: ParmixInit,
    clusters: usize,
) -> ParmixStatus {
    guarded(|| {
        if clusters == 0 {
            set_error("init cluster count must be at least 1");
            return ParmixStatus::Config;
        }
        edit_config(cfg, |c| {
            c.init = Some(match family {
                ParmixInit::Kmeans => InitSpec::Kmeans(clusters),
                ParmixInit::Random => InitSpec::Random(clusters),
            })
        })
    })
}

#[no_mangle]
pub unsafe extern "C" fn parmix_config_set_ratio_mode(
    cfg: *mut ParmixConfig,
    mode: ParmixRatioMode,
) -> ParmixStatus {
    guarded(|| {
        edit_config(cfg, |c| {
            c.ratio_mode = match mode {
                ParmixRatioMode::Histogram => RatioMode::Histogram,
                ParmixRatioMode::AlwaysAccept => RatioMode::AlwaysAccept,
            }
        })
    })
}

/// Run the cross-lane shuffle every `every` sweeps instead of every
/// sweep.
#[no_mangle]
pub unsafe extern "C" fn parmix_config_set_global_every(
    cfg: *mut ParmixConfig,
    every: u64,
) -> ParmixStatus {
    guarded(|| edit_config(cfg, |c| c.global_every = every))
}

/// Cap how many clusters each shuffle proposal relocates. Zero lifts
/// the cap.
#[no_mangle]
pub unsafe extern "C" fn parmix_config_set_max_move_clusters(
    cfg: *mut ParmixConfig,
    cap: usize,
) -> ParmixStatus {
    guarded(|| {
        edit_config(cfg, |c| {
            c.max_move_clusters = if cap == 0 { None } else { Some(cap) }
        })
    })
}

/// Run lanes on the calling thread instead of a thread pool. The
/// sampled chain is identical either way.
#[no_mangle]
pub unsafe extern "C" fn parmix_config_set_serial(
    cfg: *mut ParmixConfig,
    serial: bool,
) -> ParmixStatus {
    guarded(|| edit_config(cfg, |c| c.serial = serial))
}

#[no_mangle]
pub unsafe extern "C" fn parmix_config_free(cfg: *mut ParmixConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---------------------------------------------------------------
// fitting

fn row_of(r: &parmix::engine::TraceRecord) -> ParmixTraceRow {
    ParmixTraceRow {
        iter: r.iter,
        elapsed_ms: r.elapsed_ms,
        local_ms: r.local_ms,
        global_ms: r.global_ms,
        num_clusters: r.k as u64,
        log_joint: r.log_joint.unwrap_or(f64::NAN),
        gamma: r.gamma.unwrap_or(f64::NAN),
        t_total: r.t_total.unwrap_or(0),
        accepted: r.accepted,
        metric: r.metric.unwrap_or(f64::NAN),
    }
}

/// Fit a mixture model. On success `*out` owns the result.
#[no_mangle]
pub unsafe extern "C" fn parmix_dpmm_fit(
    cfg: *const ParmixConfig,
    data: *const ParmixDataset,
    out: *mut *mut ParmixDpmmResult,
) -> ParmixStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        if cfg.is_null() {
            return null_arg("cfg");
        }
        if data.is_null() {
            return null_arg("data");
        }
        match run_dpmm(&(*cfg).inner, &(*data).inner, None) {
            Ok(DpmmRun { state, trace }) => {
                let result = ParmixDpmmResult {
                    labels: state.assignments(),
                    num_clusters: state.num_clusters(),
                    trace: trace.iter().map(row_of).collect(),
                };
                *out = Box::into_raw(Box::new(result));
                ParmixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Fit a topic model. `test` may be null; when given, trace rows carry
/// its per-token perplexity in `metric`.
#[no_mangle]
pub unsafe extern "C" fn parmix_hdp_fit(
    cfg: *const ParmixConfig,
    corpus: *const ParmixCorpus,
    test: *const ParmixCorpus,
    out: *mut *mut ParmixHdpResult,
) -> ParmixStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        if cfg.is_null() {
            return null_arg("cfg");
        }
        if corpus.is_null() {
            return null_arg("corpus");
        }
        let held_out = if test.is_null() {
            None
        } else {
            Some(&(*test).inner)
        };
        match run_hdp(&(*cfg).inner, &(*corpus).inner, held_out) {
            Ok(HdpRun {
                state,
                weights,
                trace,
            }) => {
                let result = ParmixHdpResult {
                    num_dishes: state.num_dishes(),
                    gamma: weights.gamma,
                    topic_words: state
                        .topics()
                        .into_iter()
                        .map(|(_, _, tc)| tc.counts)
                        .collect(),
                    trace: trace.iter().map(row_of).collect(),
                };
                *out = Box::into_raw(Box::new(result));
                ParmixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------
// mixture results

#[no_mangle]
pub unsafe extern "C" fn parmix_dpmm_num_points(run: *const ParmixDpmmResult) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).labels.len()
}

#[no_mangle]
pub unsafe extern "C" fn parmix_dpmm_num_clusters(run: *const ParmixDpmmResult) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).num_clusters
}

/// Copy the final cluster label of every point into `out` (`len` must
/// equal `parmix_dpmm_num_points`). Labels are dense ids from 0.
#[no_mangle]
pub unsafe extern "C" fn parmix_dpmm_labels(
    run: *const ParmixDpmmResult,
    out: *mut u64,
    len: usize,
) -> ParmixStatus {
    guarded(|| {
        if run.is_null() {
            return null_arg("run");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let labels = &(*run).labels;
        if len != labels.len() {
            set_error(&format!(
                "label buffer holds {len} entries, run has {}",
                labels.len()
            ));
            return ParmixStatus::Config;
        }
        slice::from_raw_parts_mut(out, len).copy_from_slice(labels);
        ParmixStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn parmix_dpmm_trace_len(run: *const ParmixDpmmResult) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).trace.len()
}

#[no_mangle]
pub unsafe extern "C" fn parmix_dpmm_trace_row(
    run: *const ParmixDpmmResult,
    index: usize,
    out: *mut ParmixTraceRow,
) -> ParmixStatus {
    guarded(|| {
        if run.is_null() {
            return null_arg("run");
        }
        if out.is_null() {
            return null_arg("out");
        }
        match (&(*run).trace).get(index) {
            Some(row) => {
                *out = *row;
                ParmixStatus::Ok
            }
            None => {
                set_error(&format!(
                    "trace index {index} out of range 0..{}",
                    (*run).trace.len()
                ));
                ParmixStatus::Config
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn parmix_dpmm_free(run: *mut ParmixDpmmResult) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

// ---------------------------------------------------------------
// topic results

#[no_mangle]
pub unsafe extern "C" fn parmix_hdp_num_topics(run: *const ParmixHdpResult) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).num_dishes
}

/// Final concentration of the shared topic distribution.
#[no_mangle]
pub unsafe extern "C" fn parmix_hdp_gamma(run: *const ParmixHdpResult) -> f64 {
    if run.is_null() {
        return f64::NAN;
    }
    (*run).gamma
}

/// Copy topic `topic`'s per-word counts into `out` (`len` must equal
/// the corpus vocabulary size).
#[no_mangle]
pub unsafe extern "C" fn parmix_hdp_topic_counts(
    run: *const ParmixHdpResult,
    topic: usize,
    out: *mut u64,
    len: usize,
) -> ParmixStatus {
    guarded(|| {
        if run.is_null() {
            return null_arg("run");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let topics = &(*run).topic_words;
        match topics.get(topic) {
            Some(counts) if counts.len() == len => {
                slice::from_raw_parts_mut(out, len).copy_from_slice(counts);
                ParmixStatus::Ok
            }
            Some(counts) => {
                set_error(&format!(
                    "count buffer holds {len} entries, vocabulary has {}",
                    counts.len()
                ));
                ParmixStatus::Config
            }
            None => {
                set_error(&format!("topic {topic} out of range 0..{}", topics.len()));
                ParmixStatus::Config
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn parmix_hdp_trace_len(run: *const ParmixHdpResult) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).trace.len()
}

#[no_mangle]
pub unsafe extern "C" fn parmix_hdp_trace_row(
    run: *const ParmixHdpResult,
    index: usize,
    out: *mut ParmixTraceRow,
) -> ParmixStatus {
    guarded(|| {
        if run.is_null() {
            return null_arg("run");
        }
        if out.is_null() {
            return null_arg("out");
        }
        match (&(*run).trace).get(index) {
            Some(row) => {
                *out = *row;
                ParmixStatus::Ok
            }
            None => {
                set_error(&format!(
                    "trace index {index} out of range 0..{}",
                    (*run).trace.len()
                ));
                ParmixStatus::Config
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn parmix_hdp_free(run: *mut ParmixHdpResult) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

// ---------------------------------------------------------------
// scoring

/// Pairwise F1 between two labelings of the same points. Label values
/// are arbitrary; only co-membership matters.
#[no_mangle]
pub unsafe extern "C" fn parmix_f1_score(
    pred: *const i64,
    truth: *const i64,
    len: usize,
    out: *mut f64,
) -> ParmixStatus {
    guarded(|| {
        if pred.is_null() {
            return null_arg("pred");
        }
        if truth.is_null() {
            return null_arg("truth");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let a = slice::from_raw_parts(pred, len);
        let b = slice::from_raw_parts(truth, len);
        match f1_score(a, b) {
            Ok(v) => {
                *out = v;
                ParmixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
