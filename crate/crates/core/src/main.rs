//! Batch command-line front end.
//!
//! Exit codes: 0 success, 2 argument error, 3 I/O error, 4 numerical
//! or invariant failure. Every error is a single stderr line with an
//! `error:<category>:` prefix.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use parmix::data::{
    gen_synth, read_bow, read_labels, read_points_csv, write_labels, write_points_csv,
};
use parmix::dpmm::RatioMode;
use parmix::engine::{
    resume_dpmm, resume_hdp, run_dpmm, run_hdp, InitSpec, ModelKind, SamplerConfig,
};
use parmix::error::Error;
use parmix::eval::f1_score;

#[derive(Parser)]
#[command(
    name = "parmix",
    version,
    about = "Parallel MCMC for Dirichlet-process mixtures and HDP topic models"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic Gaussian-mixture dataset with true labels
    GenSynth(GenSynthArgs),
    /// Fit a Dirichlet-process mixture to points
    FitDpmm(FitDpmmArgs),
    /// Fit an HDP topic model to a bag-of-words corpus
    FitHdp(FitHdpArgs),
    /// Pairwise F1 between a predicted and a true label file
    EvalF1(EvalF1Args),
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, allow_negative_numbers = true)]
    mean_low: f64,
    #[arg(long, allow_negative_numbers = true)]
    mean_high: f64,
    #[arg(long, allow_negative_numbers = true)]
    var: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels_out: PathBuf,
}

fn parse_ratio_mode(s: &str) -> Result<RatioMode, String> {
    match s {
        "paper" => Ok(RatioMode::Histogram),
        "always-accept" => Ok(RatioMode::AlwaysAccept),
        _ => Err(format!("'{s}' is not one of: paper, always-accept")),
    }
}

fn parse_init(s: &str) -> Result<InitSpec, String> {
    s.parse::<InitSpec>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct FitDpmmArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    procs: Option<usize>,
    #[arg(long)]
    sweeps: Option<u64>,
    #[arg(long)]
    global_every: Option<u64>,
    #[arg(long, value_parser = parse_init)]
    init: Option<InitSpec>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    mu0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long, value_parser = parse_ratio_mode)]
    ratio_mode: Option<RatioMode>,
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FitHdpArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    procs: Option<usize>,
    #[arg(long)]
    sweeps: Option<u64>,
    #[arg(long)]
    global_every: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma_step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalF1Args {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("error:args:{}", one_line(&e.render().to_string()));
                return 2;
            }
            // --help or --version
            print!("{e}");
            return 0;
        }
    };
    let result = match cli.cmd {
        Cmd::GenSynth(a) => cmd_gen_synth(&a),
        Cmd::FitDpmm(a) => cmd_fit_dpmm(&a),
        Cmd::FitHdp(a) => cmd_fit_hdp(&a),
        Cmd::EvalF1(a) => cmd_eval_f1(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let (category, code) = categorize(&e);
            eprintln!("error:{category}:{}", one_line(&e.to_string()));
            code
        }
    }
}

/// Collapse a (possibly multi-line) message to one stderr line.
fn one_line(msg: &str) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for line in msg.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with("Usage:") || t.starts_with("For more information") {
            if t.starts_with("Usage:") {
                break;
            }
            continue;
        }
        parts.push(t);
    }
    parts.join(" ").trim_start_matches("error:").trim().to_string()
}

/// Stamp the offending path onto file errors so the stderr line
/// names the file, not just the OS failure.
fn in_file<T>(path: &std::path::Path, r: Result<T, Error>) -> Result<T, Error> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

fn categorize(e: &Error) -> (&'static str, i32) {
    match e {
        Error::Config(_) => ("args", 2),
        Error::Io(_) | Error::Parse { .. } | Error::Checkpoint(_) => ("io", 3),
        Error::Domain(_) | Error::Invariant(_) => ("numeric", 4),
    }
}

fn cmd_gen_synth(a: &GenSynthArgs) -> Result<(), Error> {
    let (points, labels) = gen_synth(a.n, a.k, a.mean_low, a.mean_high, a.var, a.seed)?;
    in_file(&a.out, write_points_csv(&a.out, &points))?;
    in_file(&a.labels_out, write_labels(&a.labels_out, &labels))?;
    Ok(())
}

fn cmd_eval_f1(a: &EvalF1Args) -> Result<(), Error> {
    let pred = in_file(&a.pred, read_labels(&a.pred))?;
    let truth = in_file(&a.truth, read_labels(&a.truth))?;
    let f1 = f1_score(&pred, &truth)?;
    println!("{f1:.6}");
    Ok(())
}

fn load_config_file(path: Option<&PathBuf>, kind: ModelKind) -> Result<Option<SamplerConfig>, Error> {
    let Some(path) = path else {
        return Ok(None);
    };
    let text = in_file(path, std::fs::read_to_string(path).map_err(Error::from))?;
    let cfg: SamplerConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config file: {e}")))?;
    if cfg.kind != kind {
        return Err(Error::Config(
            "config file kind does not match the subcommand".to_string(),
        ));
    }
    Ok(Some(cfg))
}

/// A flag wins over the config file; with `--resume` only the
/// continuation fields matter, so statistical gaps are tolerated
/// (the checkpoint supplies them).
struct FlagMerge {
    file: Option<SamplerConfig>,
    resuming: bool,
}

impl FlagMerge {
    fn pick<T: Clone>(
        &self,
        flag: &Option<T>,
        from_file: impl Fn(&SamplerConfig) -> Option<T>,
    ) -> Option<T> {
        flag.clone()
            .or_else(|| self.file.as_ref().and_then(from_file))
    }

    fn need<T: Clone>(
        &self,
        name: &str,
        flag: &Option<T>,
        from_file: impl Fn(&SamplerConfig) -> Option<T>,
        placeholder: T,
    ) -> Result<T, Error> {
        match self.pick(flag, from_file) {
            Some(v) => Ok(v),
            None if self.resuming => Ok(placeholder),
            None => Err(Error::Config(format!("missing required flag --{name}"))),
        }
    }
}

fn cmd_fit_dpmm(a: &FitDpmmArgs) -> Result<(), Error> {
    let m = FlagMerge {
        file: load_config_file(a.config.as_ref(), ModelKind::Dpmm)?,
        resuming: a.resume.is_some(),
    };
    let cfg = SamplerConfig {
        kind: ModelKind::Dpmm,
        alpha: m.need("alpha", &a.alpha, |c| Some(c.alpha), 1.0)?,
        procs: m.need("procs", &a.procs, |c| Some(c.procs), 1)?,
        sweeps: m.need("sweeps", &a.sweeps, |c| Some(c.sweeps), 1)?,
        global_every: m.need("global-every", &a.global_every, |c| Some(c.global_every), 1)?,
        seed: m.need("seed", &a.seed, |c| Some(c.seed), 0)?,
        gamma_step: None,
        beta: None,
        mu0: Some(m.need("mu0", &a.mu0, |c| c.mu0, 0.0)?),
        tau2: Some(m.need("tau2", &a.tau2, |c| c.tau2, 1.0)?),
        sigma2: Some(m.need("sigma2", &a.sigma2, |c| c.sigma2, 1.0)?),
        init: Some(m.need("init", &a.init, |c| c.init, InitSpec::Random(1))?),
        ratio_mode: m.pick(&a.ratio_mode, |c| Some(c.ratio_mode)).unwrap_or_default(),
        trace: Some(m.need("trace", &a.trace, |c| c.trace.clone(), PathBuf::new())?),
        checkpoint: m.pick(&a.checkpoint, |c| c.checkpoint.clone()),
        checkpoint_every: m.pick(&a.checkpoint_every, |c| c.checkpoint_every),
        serial: m.file.as_ref().map(|c| c.serial).unwrap_or(false),
        max_move_clusters: m.file.as_ref().and_then(|c| c.max_move_clusters),
    };
    if cfg.trace.as_deref() == Some(std::path::Path::new("")) {
        return Err(Error::Config("missing required flag --trace".to_string()));
    }
    cfg.validate()?;

    let mut data = in_file(&a.data, read_points_csv(&a.data))?;
    let truth = match a.truth.as_ref() {
        Some(p) => {
            let labels = in_file(p, read_labels(p))?;
            data.attach_labels(labels)?;
            data.labels().cloned()
        }
        None => None,
    };
    match a.resume.as_ref() {
        Some(ck) => {
            resume_dpmm(&cfg, &data, truth.as_deref(), ck)?;
        }
        None => {
            run_dpmm(&cfg, &data, truth.as_deref())?;
        }
    }
    Ok(())
}

fn cmd_fit_hdp(a: &FitHdpArgs) -> Result<(), Error> {
    let m = FlagMerge {
        file: load_config_file(a.config.as_ref(), ModelKind::Hdp)?,
        resuming: a.resume.is_some(),
    };
    let cfg = SamplerConfig {
        kind: ModelKind::Hdp,
        alpha: m.need("alpha", &a.alpha, |c| Some(c.alpha), 1.0)?,
        procs: m.need("procs", &a.procs, |c| Some(c.procs), 1)?,
        sweeps: m.need("sweeps", &a.sweeps, |c| Some(c.sweeps), 1)?,
        global_every: m.need("global-every", &a.global_every, |c| Some(c.global_every), 1)?,
        seed: m.need("seed", &a.seed, |c| Some(c.seed), 0)?,
        gamma_step: Some(m.need("gamma-step", &a.gamma_step, |c| c.gamma_step, 0.5)?),
        beta: Some(m.need("beta", &a.beta, |c| c.beta, 0.01)?),
        mu0: None,
        tau2: None,
        sigma2: None,
        init: None,
        ratio_mode: RatioMode::default(),
        trace: Some(m.need("trace", &a.trace, |c| c.trace.clone(), PathBuf::new())?),
        checkpoint: m.pick(&a.checkpoint, |c| c.checkpoint.clone()),
        checkpoint_every: m.pick(&a.checkpoint_every, |c| c.checkpoint_every),
        serial: m.file.as_ref().map(|c| c.serial).unwrap_or(false),
        max_move_clusters: None,
    };
    if cfg.trace.as_deref() == Some(std::path::Path::new("")) {
        return Err(Error::Config("missing required flag --trace".to_string()));
    }
    cfg.validate()?;

    let corpus = in_file(&a.corpus, read_bow(&a.corpus))?;
    let test = match a.test.as_ref() {
        Some(p) => Some(in_file(p, read_bow(p))?),
        None => None,
    };
    match a.resume.as_ref() {
        Some(ck) => {
            resume_hdp(&cfg, &corpus, test.as_ref(), ck)?;
        }
        None => {
            run_hdp(&cfg, &corpus, test.as_ref())?;
        }
    }
    Ok(())
}
