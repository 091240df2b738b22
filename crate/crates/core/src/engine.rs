//! Run orchestration: lane scheduling with a phase barrier between
//! local and global phases, the iteration loop, trace emission, and
//! checkpointing.
//!
//! Each lane owns an independent RNG stream (stream index = lane);
//! the global phase, metric evaluation, and initialization use three
//! further streams. Final states therefore depend only on (seed,
//! config, data), never on thread interleaving.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, PointSet};
use crate::dpmm::{DpSnapshot, DpState, RatioMode};
use crate::error::{Error, Result};
use crate::eval::{f1_score, kmeans, perplexity};
use crate::hdp::{gamma_mh_step, CrfState, GlobalWeights, HdpHyper, HdpSnapshot};
use crate::model::GaussModel;
use crate::partition::Partition;
use crate::rng::{RngStream, StreamState};

pub const CHECKPOINT_VERSION: u32 = 1;
const KMEANS_INIT_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dpmm,
    Hdp,
}

/// Initial clustering: `kmeans:<k>` or `random:<k>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitSpec {
    Kmeans(usize),
    Random(usize),
}

impl std::str::FromStr for InitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::domain(format!(
                "init spec '{s}' must be kmeans:<count> or random:<count>"
            ))
        };
        let (kind, num) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = num.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(Error::domain("init cluster count must be at least 1"));
        }
        match kind {
            "kmeans" => Ok(InitSpec::Kmeans(k)),
            "random" => Ok(InitSpec::Random(k)),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for InitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitSpec::Kmeans(k) => write!(f, "kmeans:{k}"),
            InitSpec::Random(k) => write!(f, "random:{k}"),
        }
    }
}

impl TryFrom<String> for InitSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitSpec> for String {
    fn from(v: InitSpec) -> String {
        v.to_string()
    }
}

/// Everything a run needs besides the data itself. Mirrors the CLI
/// flags; also accepted as JSON via `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: ModelKind,
    pub alpha: f64,
    pub procs: usize,
    pub sweeps: u64,
    pub global_every: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(default)]
    pub ratio_mode: RatioMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
    /// run lanes one after another on the calling thread; statistical
    /// behavior is identical to the threaded schedule
    #[serde(default)]
    pub serial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_move_clusters: Option<usize>,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.procs == 0 {
            return Err(Error::Config("procs must be at least 1".to_string()));
        }
        if self.sweeps == 0 {
            return Err(Error::Config("sweeps must be at least 1".to_string()));
        }
        if self.global_every == 0 {
            return Err(Error::Config("global-every must be at least 1".to_string()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        match self.kind {
            ModelKind::Dpmm => {
                for (name, v) in [("mu0", self.mu0), ("tau2", self.tau2), ("sigma2", self.sigma2)]
                {
                    if v.is_none() {
                        return Err(Error::Config(format!("{name} is required for dpmm")));
                    }
                }
                if self.init.is_none() {
                    return Err(Error::Config("init is required for dpmm".to_string()));
                }
            }
            ModelKind::Hdp => {
                match self.beta {
                    Some(b) if b > 0.0 && b.is_finite() => {}
                    Some(b) => {
                        return Err(Error::Config(format!("beta must be positive, got {b}")))
                    }
                    None => return Err(Error::Config("beta is required for hdp".to_string())),
                }
                match self.gamma_step {
                    Some(s) if s > 0.0 && s.is_finite() => {}
                    Some(s) => {
                        return Err(Error::Config(format!(
                            "gamma-step must be positive, got {s}"
                        )))
                    }
                    None => {
                        return Err(Error::Config("gamma-step is required for hdp".to_string()))
                    }
                }
            }
        }
        match (self.checkpoint.as_ref(), self.checkpoint_every) {
            (None, Some(_)) => Err(Error::Config(
                "checkpoint-every given without a checkpoint path".to_string(),
            )),
            (Some(_), Some(0)) => Err(Error::Config(
                "checkpoint-every must be at least 1".to_string(),
            )),
            _ => Ok(()),
        }
    }
}

/// One line of the run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub elapsed_ms: f64,
    pub local_ms: f64,
    pub global_ms: f64,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_joint: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_total: Option<u64>,
    pub accepted: bool,
    pub n_per_proc: Vec<u64>,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngBlock {
    pub lanes: Vec<StreamState>,
    pub global: StreamState,
    pub eval: StreamState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CheckpointState {
    Dpmm {
        snapshot: DpSnapshot,
        completed: u64,
    },
    Hdp {
        snapshot: HdpSnapshot,
        weights: GlobalWeights,
        completed: u64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: SamplerConfig,
    pub state: CheckpointState,
    pub rng: RngBlock,
}

/// Write atomically: temp file in the same directory, then rename.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let text = serde_json::to_string(ck)
        .map_err(|e| Error::Checkpoint(format!("serialization failed: {e}")))?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("parse failed: {e}")))?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}, this build reads {CHECKPOINT_VERSION}",
            ck.version
        )));
    }
    Ok(ck)
}

/// On resume the saved run's statistical configuration wins; only the
/// continuation target and output paths come from the new invocation.
pub fn merge_resume_config(saved: &SamplerConfig, current: &SamplerConfig) -> SamplerConfig {
    let mut cfg = saved.clone();
    cfg.sweeps = current.sweeps;
    cfg.trace = current.trace.clone();
    cfg.checkpoint = current.checkpoint.clone();
    cfg.checkpoint_every = current.checkpoint_every;
    cfg.serial = current.serial;
    cfg
}

struct Streams {
    lanes: Vec<RngStream>,
    global: RngStream,
    eval: RngStream,
}

impl Streams {
    fn fresh(seed: u64, p: usize) -> Self {
        Streams {
            lanes: (0..p).map(|l| RngStream::new(seed, l as u64)).collect(),
            global: RngStream::new(seed, p as u64),
            eval: RngStream::new(seed, p as u64 + 1),
        }
    }

    fn restore(block: &RngBlock, p: usize) -> Result<Self> {
        if block.lanes.len() != p {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} lane streams, config wants {p}",
                block.lanes.len()
            )));
        }
        Ok(Streams {
            lanes: block.lanes.iter().map(RngStream::restore).collect(),
            global: RngStream::restore(&block.global),
            eval: RngStream::restore(&block.eval),
        })
    }

    fn block(&self) -> RngBlock {
        RngBlock {
            lanes: self.lanes.iter().map(|s| s.state()).collect(),
            global: self.global.state(),
            eval: self.eval.state(),
        }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

struct TraceWriter {
    out: Option<BufWriter<File>>,
}

impl TraceWriter {
    fn open(path: Option<&PathBuf>) -> Result<Self> {
        let out = match path {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        };
        Ok(TraceWriter { out })
    }

    fn write(&mut self, rec: &TraceRecord) -> Result<()> {
        if let Some(w) = self.out.as_mut() {
            let line = serde_json::to_string(rec)
                .map_err(|e| Error::invariant(format!("trace serialization failed: {e}")))?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}

pub struct DpmmRun {
    pub state: DpState,
    pub trace: Vec<TraceRecord>,
}

pub struct HdpRun {
    pub state: CrfState,
    pub weights: GlobalWeights,
    pub trace: Vec<TraceRecord>,
}

fn gauss_model(cfg: &SamplerConfig) -> Result<GaussModel> {
    GaussModel::new(
        cfg.mu0.expect("validated"),
        cfg.tau2.expect("validated"),
        cfg.sigma2.expect("validated"),
    )
}

fn dpmm_initial_partition(
    cfg: &SamplerConfig,
    data: &PointSet,
    init_stream: &mut RngStream,
) -> Result<Partition> {
    match cfg.init.expect("validated") {
        InitSpec::Kmeans(k) => {
            let labels = kmeans(data, k, KMEANS_INIT_ITERS, cfg.seed)?;
            Ok(Partition::from_labels(&labels))
        }
        InitSpec::Random(k) => {
            let labels: Vec<i64> = (0..data.len())
                .map(|_| init_stream.uniform_index(k) as i64)
                .collect();
            Ok(Partition::from_labels(&labels))
        }
    }
}

/// Run a DP mixture fit from scratch.
pub fn run_dpmm(cfg: &SamplerConfig, data: &PointSet, truth: Option<&[i64]>) -> Result<DpmmRun> {
    cfg.validate()?;
    if cfg.kind != ModelKind::Dpmm {
        return Err(Error::Config("config kind is not dpmm".to_string()));
    }
    if let Some(t) = truth {
        if t.len() != data.len() {
            return Err(Error::Config(format!(
                "truth has {} labels for {} points",
                t.len(),
                data.len()
            )));
        }
    }
    let model = gauss_model(cfg)?;
    let mut init_stream = RngStream::new(cfg.seed, cfg.procs as u64 + 2);
    let part = dpmm_initial_partition(cfg, data, &mut init_stream)?;
    let mut state = DpState::new(
        data,
        cfg.alpha,
        model,
        cfg.procs,
        &part,
        cfg.ratio_mode,
        cfg.max_move_clusters,
    )?;
    let mut streams = Streams::fresh(cfg.seed, cfg.procs);
    let trace = drive_dpmm(cfg, data, truth, &mut state, &mut streams, 0)?;
    Ok(DpmmRun { state, trace })
}

/// Continue a DP mixture fit from a checkpoint. The checkpoint's
/// statistical configuration replaces the caller's (see
/// merge_resume_config); sweeps below the completed count are an
/// error.
pub fn resume_dpmm(
    cfg: &SamplerConfig,
    data: &PointSet,
    truth: Option<&[i64]>,
    checkpoint: &Path,
) -> Result<DpmmRun> {
    let ck = load_checkpoint(checkpoint)?;
    let CheckpointState::Dpmm {
        snapshot,
        completed,
    } = &ck.state
    else {
        return Err(Error::Checkpoint(
            "checkpoint holds an hdp state, not dpmm".to_string(),
        ));
    };
    let merged = merge_resume_config(&ck.config, cfg);
    merged.validate()?;
    if merged.sweeps < *completed {
        return Err(Error::Config(format!(
            "checkpoint already covers {completed} sweeps, asked for {}",
            merged.sweeps
        )));
    }
    let mut state = DpState::from_snapshot(data, snapshot)?;
    let mut streams = Streams::restore(&ck.rng, merged.procs)?;
    let trace = drive_dpmm(&merged, data, truth, &mut state, &mut streams, *completed)?;
    Ok(DpmmRun { state, trace })
}

fn drive_dpmm(
    cfg: &SamplerConfig,
    data: &PointSet,
    truth: Option<&[i64]>,
    state: &mut DpState,
    streams: &mut Streams,
    completed: u64,
) -> Result<Vec<TraceRecord>> {
    let result = drive_dpmm_inner(cfg, data, truth, state, streams, completed);
    if result.is_err() {
        if let Some(path) = cfg.checkpoint.as_ref() {
            // flush a checkpoint so the aborted run can be resumed
            state.canonicalize(data);
            let ck = Checkpoint {
                version: CHECKPOINT_VERSION,
                config: cfg.clone(),
                state: CheckpointState::Dpmm {
                    snapshot: state.snapshot(),
                    completed,
                },
                rng: streams.block(),
            };
            let _ = save_checkpoint(&ck, path);
        }
    }
    result
}

fn drive_dpmm_inner(
    cfg: &SamplerConfig,
    data: &PointSet,
    truth: Option<&[i64]>,
    state: &mut DpState,
    streams: &mut Streams,
    completed: u64,
) -> Result<Vec<TraceRecord>> {
    let started = Instant::now();
    let mut writer = TraceWriter::open(cfg.trace.as_ref())?;
    let mut records = Vec::new();
    let model = state.model();
    let aop = state.alpha_over_p();
    let p = cfg.procs;
    let busy: Vec<AtomicBool> = (0..p).map(|_| AtomicBool::new(false)).collect();

    for iter in completed + 1..=cfg.sweeps {
        let t_local = Instant::now();
        if cfg.serial || p == 1 {
            for (lane, stream) in state.lanes_mut().iter_mut().zip(streams.lanes.iter_mut()) {
                lane.sweep(data, &model, aop, stream);
            }
        } else {
            std::thread::scope(|scope| {
                for ((lane, stream), flag) in state
                    .lanes_mut()
                    .iter_mut()
                    .zip(streams.lanes.iter_mut())
                    .zip(&busy)
                {
                    scope.spawn(move || {
                        flag.store(true, Ordering::SeqCst);
                        lane.sweep(data, &model, aop, stream);
                        flag.store(false, Ordering::SeqCst);
                    });
                }
            });
        }
        let local_ms = ms_since(t_local);

        let t_global = Instant::now();
        let mut accepted = false;
        if iter % cfg.global_every == 0 {
            for flag in &busy {
                if flag.load(Ordering::SeqCst) {
                    return Err(Error::invariant(
                        "global step observed a lane still in its local phase",
                    ));
                }
            }
            accepted = state.global_step(&mut streams.global)?;
        }
        let global_ms = ms_since(t_global);

        let metric = match truth {
            Some(t) => {
                let pred: Vec<i64> = state
                    .dense_partition()
                    .assignments()
                    .iter()
                    .map(|&c| c as i64)
                    .collect();
                Some(f1_score(&pred, t)?)
            }
            None => None,
        };
        let rec = TraceRecord {
            iter,
            elapsed_ms: ms_since(started),
            local_ms,
            global_ms,
            k: state.num_clusters(),
            log_joint: Some(state.log_joint(data)?),
            gamma: None,
            t_total: None,
            accepted,
            n_per_proc: state.n_per_proc(),
            metric,
        };
        writer.write(&rec)?;
        records.push(rec);

        if let (Some(path), Some(every)) = (cfg.checkpoint.as_ref(), cfg.checkpoint_every) {
            if iter % every == 0 {
                // canonical sums make the continuation bit-identical
                // whether the process keeps going or reloads
                state.canonicalize(data);
                let ck = Checkpoint {
                    version: CHECKPOINT_VERSION,
                    config: cfg.clone(),
                    state: CheckpointState::Dpmm {
                        snapshot: state.snapshot(),
                        completed: iter,
                    },
                    rng: streams.block(),
                };
                save_checkpoint(&ck, path)?;
            }
        }
    }
    Ok(records)
}

/// Run an HDP topic-model fit from scratch.
pub fn run_hdp(cfg: &SamplerConfig, corpus: &Corpus, test: Option<&Corpus>) -> Result<HdpRun> {
    cfg.validate()?;
    if cfg.kind != ModelKind::Hdp {
        return Err(Error::Config("config kind is not hdp".to_string()));
    }
    let hyper = HdpHyper::new(
        cfg.alpha,
        cfg.beta.expect("validated"),
        cfg.procs,
        corpus.vocab_size(),
    )?;
    let mut init_stream = RngStream::new(cfg.seed, cfg.procs as u64 + 2);
    let mut weights = GlobalWeights::sample_init(&hyper, &mut init_stream)?;
    let mut state = CrfState::init(corpus, &hyper, &weights, &mut init_stream)?;
    let mut streams = Streams::fresh(cfg.seed, cfg.procs);
    let trace = drive_hdp(
        cfg,
        corpus,
        test,
        &hyper,
        &mut state,
        &mut weights,
        &mut streams,
        0,
    )?;
    Ok(HdpRun {
        state,
        weights,
        trace,
    })
}

/// Continue an HDP fit from a checkpoint.
pub fn resume_hdp(
    cfg: &SamplerConfig,
    corpus: &Corpus,
    test: Option<&Corpus>,
    checkpoint: &Path,
) -> Result<HdpRun> {
    let ck = load_checkpoint(checkpoint)?;
    let CheckpointState::Hdp {
        snapshot,
        weights,
        completed,
    } = &ck.state
    else {
        return Err(Error::Checkpoint(
            "checkpoint holds a dpmm state, not hdp".to_string(),
        ));
    };
    let merged = merge_resume_config(&ck.config, cfg);
    merged.validate()?;
    if merged.sweeps < *completed {
        return Err(Error::Config(format!(
            "checkpoint already covers {completed} sweeps, asked for {}",
            merged.sweeps
        )));
    }
    let hyper = HdpHyper::new(
        merged.alpha,
        merged.beta.expect("validated"),
        merged.procs,
        corpus.vocab_size(),
    )?;
    if snapshot.hyper != hyper {
        return Err(Error::Checkpoint(
            "checkpoint hyperparameters disagree with config".to_string(),
        ));
    }
    let mut state = CrfState::from_snapshot(corpus, &hyper, snapshot)?;
    let mut weights = weights.clone();
    let mut streams = Streams::restore(&ck.rng, merged.procs)?;
    let trace = drive_hdp(
        &merged,
        corpus,
        test,
        &hyper,
        &mut state,
        &mut weights,
        &mut streams,
        *completed,
    )?;
    Ok(HdpRun {
        state,
        weights,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn drive_hdp(
    cfg: &SamplerConfig,
    corpus: &Corpus,
    test: Option<&Corpus>,
    hyper: &HdpHyper,
    state: &mut CrfState,
    weights: &mut GlobalWeights,
    streams: &mut Streams,
    completed: u64,
) -> Result<Vec<TraceRecord>> {
    let result = drive_hdp_inner(
        cfg, corpus, test, hyper, state, weights, streams, completed,
    );
    if result.is_err() {
        if let Some(path) = cfg.checkpoint.as_ref() {
            let ck = Checkpoint {
                version: CHECKPOINT_VERSION,
                config: cfg.clone(),
                state: CheckpointState::Hdp {
                    snapshot: state.snapshot(hyper),
                    weights: weights.clone(),
                    completed,
                },
                rng: streams.block(),
            };
            let _ = save_checkpoint(&ck, path);
        }
    }
    result
}

#[allow(clippy::too_many_arguments)]
fn drive_hdp_inner(
    cfg: &SamplerConfig,
    corpus: &Corpus,
    test: Option<&Corpus>,
    hyper: &HdpHyper,
    state: &mut CrfState,
    weights: &mut GlobalWeights,
    streams: &mut Streams,
    completed: u64,
) -> Result<Vec<TraceRecord>> {
    let _ = corpus;
    let started = Instant::now();
    let mut writer = TraceWriter::open(cfg.trace.as_ref())?;
    let mut records = Vec::new();
    let p = cfg.procs;
    let gamma_step = cfg.gamma_step.expect("validated");
    let busy: Vec<AtomicBool> = (0..p).map(|_| AtomicBool::new(false)).collect();

    for iter in completed + 1..=cfg.sweeps {
        let zetas: Vec<f64> = (0..p).map(|l| weights.zeta(l)).collect();
        let t_local = Instant::now();
        if cfg.serial || p == 1 {
            for ((lane, stream), &zeta) in state
                .lanes_mut()
                .iter_mut()
                .zip(streams.lanes.iter_mut())
                .zip(&zetas)
            {
                lane.sweep(zeta, hyper, stream);
            }
        } else {
            std::thread::scope(|scope| {
                for (((lane, stream), &zeta), flag) in state
                    .lanes_mut()
                    .iter_mut()
                    .zip(streams.lanes.iter_mut())
                    .zip(&zetas)
                    .zip(&busy)
                {
                    scope.spawn(move || {
                        flag.store(true, Ordering::SeqCst);
                        lane.sweep(zeta, hyper, stream);
                        flag.store(false, Ordering::SeqCst);
                    });
                }
            });
        }
        let local_ms = ms_since(t_local);

        let t_global = Instant::now();
        let mut accepted = false;
        if iter % cfg.global_every == 0 {
            for flag in &busy {
                if flag.load(Ordering::SeqCst) {
                    return Err(Error::invariant(
                        "global step observed a lane still in its local phase",
                    ));
                }
            }
            accepted = state.global_step(weights, hyper, &mut streams.global)?;
            let stats = state.ratio_stats();
            gamma_mh_step(weights, &stats, gamma_step, &mut streams.global)?;
        }
        let global_ms = ms_since(t_global);

        let metric = match test {
            Some(t) => Some(perplexity(state, weights, hyper, t, &mut streams.eval)?),
            None => None,
        };
        let rec = TraceRecord {
            iter,
            elapsed_ms: ms_since(started),
            local_ms,
            global_ms,
            k: state.num_dishes(),
            log_joint: None,
            gamma: Some(weights.gamma),
            t_total: Some(state.total_tables()),
            accepted,
            n_per_proc: state.tokens_per_proc(),
            metric,
        };
        writer.write(&rec)?;
        records.push(rec);

        if let (Some(path), Some(every)) = (cfg.checkpoint.as_ref(), cfg.checkpoint_every) {
            if iter % every == 0 {
                let ck = Checkpoint {
                    version: CHECKPOINT_VERSION,
                    config: cfg.clone(),
                    state: CheckpointState::Hdp {
                        snapshot: state.snapshot(hyper),
                        weights: weights.clone(),
                        completed: iter,
                    },
                    rng: streams.block(),
                };
                save_checkpoint(&ck, path)?;
            }
        }
    }
    Ok(records)
}
