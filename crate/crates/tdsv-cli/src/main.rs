//! `tdsv` — scoring and evaluation pipeline for text-dependent speaker
//! verification.
//!
//! Subcommands: `gen`, `enroll`, `score`, `asnorm`, `gate`, `fuse`, `eval`,
//! `losscheck`. Exit codes: 0 success, 1 usage error, 2 data/format error,
//! 3 numeric/degenerate error. Outputs are written atomically and every
//! run echoes its effective parameters to a `.manifest.tsv` sidecar.

mod config;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{resolve, resolve_opt, FileConfig};
use output::{write_atomic, write_manifest};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use tdsv::backend::{self, AsNormConfig, BackendError};
use tdsv::data::{self, DataError, EmbeddingFormat, EnrollmentPolicy};
use tdsv::gate::{self, GateConfig, GateError};
use tdsv::loss;
use tdsv::metrics::{self, EerMethod, MetricConfig, MetricsError, TrialSubset};
use tdsv::synth::{self, SynthConfig, SynthError, TrialCounts};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(DataError),
    Backend(BackendError),
    Gate(GateError),
    Metrics(MetricsError),
    Synth(SynthError),
    Io(String, std::io::Error),
    Tolerance(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Backend(e) => write!(f, "{e}"),
            CliError::Gate(e) => write!(f, "{e}"),
            CliError::Metrics(e) => write!(f, "{e}"),
            CliError::Synth(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{path}: {e}"),
            CliError::Tolerance(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}
impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        CliError::Backend(e)
    }
}
impl From<GateError> for CliError {
    fn from(e: GateError) -> Self {
        CliError::Gate(e)
    }
}
impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Metrics(e)
    }
}
impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Synth(e)
    }
}

fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Usage(_) => 1,
        CliError::Data(_) | CliError::Io(..) => 2,
        CliError::Backend(e) => match e {
            BackendError::ZeroNorm { .. }
            | BackendError::DegenerateCentroid { .. }
            | BackendError::DegenerateCohort { .. }
            | BackendError::TopNExceedsCohort { .. }
            | BackendError::EmptyCohort => 3,
            _ => 2,
        },
        CliError::Gate(e) => match e {
            GateError::FloorNotBelowScores { .. } => 3,
            _ => 2,
        },
        CliError::Metrics(e) => match e {
            MetricsError::NoTargets | MetricsError::NoNontargets => 3,
            MetricsError::InvalidConfig { .. } => 1,
            _ => 2,
        },
        CliError::Synth(e) => match e {
            SynthError::Infeasible { .. } => 1,
            SynthError::LabelCheck { .. } => 3,
        },
        CliError::Tolerance(_) => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Binary,
    Text,
}

impl FromStr for FormatArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(FormatArg::Binary),
            "text" => Ok(FormatArg::Text),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

impl FormatArg {
    fn as_format(self) -> EmbeddingFormat {
        match self {
            FormatArg::Binary => EmbeddingFormat::Binary,
            FormatArg::Text => EmbeddingFormat::Text,
        }
    }
    fn as_str(self) -> &'static str {
        match self {
            FormatArg::Binary => "binary",
            FormatArg::Text => "text",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SubsetArg {
    All,
    TcVsTw,
}

impl FromStr for SubsetArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(SubsetArg::All),
            "tc-vs-tw" => Ok(SubsetArg::TcVsTw),
            other => Err(format!("unknown subset {other:?}")),
        }
    }
}

impl SubsetArg {
    fn as_subset(self) -> TrialSubset {
        match self {
            SubsetArg::All => TrialSubset::All,
            SubsetArg::TcVsTw => TrialSubset::TcVsTw,
        }
    }
    fn as_str(self) -> &'static str {
        match self {
            SubsetArg::All => "all",
            SubsetArg::TcVsTw => "tc-vs-tw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EerMethodArg {
    Interpolated,
    Discrete,
}

impl FromStr for EerMethodArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interpolated" => Ok(EerMethodArg::Interpolated),
            "discrete" => Ok(EerMethodArg::Discrete),
            other => Err(format!("unknown eer method {other:?}")),
        }
    }
}

impl EerMethodArg {
    fn as_method(self) -> EerMethod {
        match self {
            EerMethodArg::Interpolated => EerMethod::Interpolated,
            EerMethodArg::Discrete => EerMethod::Discrete,
        }
    }
    fn as_str(self) -> &'static str {
        match self {
            EerMethodArg::Interpolated => "interpolated",
            EerMethodArg::Discrete => "discrete",
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tdsv",
    version,
    about = "Scoring and evaluation pipeline for text-dependent speaker verification"
)]
struct Cli {
    /// Configuration file with `key = value` defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for scoring and normalization (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic dataset.
    Gen(GenArgs),
    /// Average enrollment embeddings into model vectors.
    Enroll(EnrollArgs),
    /// Score trials by cosine similarity.
    Score(ScoreArgs),
    /// Adaptive score normalization against a speaker cohort.
    Asnorm(AsnormArgs),
    /// Reject wrong-phrase trials and floor their scores.
    Gate(GateArgs),
    /// Average the scores of aligned systems.
    Fuse(FuseArgs),
    /// Compute EER and MinDCF from labeled trials.
    Eval(EvalArgs),
    /// Audit loss gradients against finite differences.
    Losscheck(LosscheckArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    speakers: Option<usize>,
    #[arg(long)]
    phrases: Option<usize>,
    /// Utterances per (speaker, phrase) pair.
    #[arg(long)]
    utts: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Within-speaker noise sigma (per component, before renormalization).
    #[arg(long)]
    noise: Option<f64>,
    /// Probability of corrupting a posterior to a wrong class.
    #[arg(long)]
    confusion: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exact trial counts; all three or none.
    #[arg(long)]
    trials_tc: Option<usize>,
    #[arg(long)]
    trials_tw: Option<usize>,
    #[arg(long)]
    trials_ic: Option<usize>,
    /// Embedding file format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EnrollArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Accept any non-empty enrollment list instead of exactly three.
    #[arg(long)]
    relaxed: bool,
    #[arg(long, value_enum)]
    out_format: Option<FormatArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    trials: PathBuf,
    /// Model vectors produced by `enroll`.
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AsnormArgs {
    /// Raw score file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    cohort_embeddings: PathBuf,
    #[arg(long)]
    speaker_map: PathBuf,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    epsilon_sigma: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GateArgs {
    #[arg(long)]
    trials: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    posteriors: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Score assigned to rejected trials.
    #[arg(long, allow_hyphen_values = true)]
    floor: Option<f64>,
    /// Also reject when the posterior maximum falls below this.
    #[arg(long)]
    min_confidence: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Decisions audit file.
    #[arg(long)]
    decisions: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    /// Comma-separated score files, all over the identical trial list.
    #[arg(long = "in", value_delimiter = ',', required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    trials: PathBuf,
    #[arg(long, value_enum)]
    subset: Option<SubsetArg>,
    #[arg(long)]
    p_target: Option<f64>,
    #[arg(long)]
    c_miss: Option<f64>,
    #[arg(long)]
    c_fa: Option<f64>,
    #[arg(long, value_enum)]
    eer_method: Option<EerMethodArg>,
    /// Write DET operating points as TSV.
    #[arg(long)]
    det_out: Option<PathBuf>,
}

#[derive(Args)]
struct LosscheckArgs {
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Central difference step.
    #[arg(long)]
    step: Option<f64>,
    /// Maximum acceptable relative gradient error.
    #[arg(long)]
    tolerance: Option<f64>,
}

fn kv(key: &str, value: impl fmt::Display) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn read_embeddings_auto(path: &Path) -> Result<data::EmbeddingStore, CliError> {
    let format = data::detect_embedding_format(path)?;
    Ok(data::read_embeddings(path, format)?)
}

fn write_scores_atomic(path: &Path, records: &[data::ScoreRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    data::write_scores_to(&mut buf, records)
        .map_err(|e| CliError::Io(path.display().to_string(), e))?;
    write_atomic(path, &buf).map_err(|e| CliError::Io(path.display().to_string(), e))
}

fn emit_manifest(out: &Path, entries: &[(String, String)]) -> Result<(), CliError> {
    write_manifest(out, entries).map_err(|e| CliError::Io(out.display().to_string(), e))
}

fn run_gen(args: GenArgs, cfg: &FileConfig, workers: usize) -> Result<(), CliError> {
    let speakers = resolve(args.speakers, cfg, "gen.speakers", 50)?;
    let phrases = resolve(args.phrases, cfg, "gen.phrases", 10)?;
    let utts = resolve(args.utts, cfg, "gen.utts", 5)?;
    let dim = resolve(args.dim, cfg, "gen.dim", 256)?;
    let noise = resolve(args.noise, cfg, "gen.noise", 0.0)?;
    let confusion = resolve(args.confusion, cfg, "gen.confusion", 0.0)?;
    let seed = resolve(args.seed, cfg, "gen.seed", 7)?;
    let format = resolve(args.format, cfg, "gen.format", FormatArg::Binary)?;

    let trial_counts = match (args.trials_tc, args.trials_tw, args.trials_ic) {
        (None, None, None) => None,
        (Some(tc), Some(tw), Some(ic)) => Some(TrialCounts { tc, tw, ic }),
        _ => {
            return Err(CliError::Usage(
                "--trials-tc/--trials-tw/--trials-ic must be given together".into(),
            ))
        }
    };

    let config = SynthConfig {
        n_speakers: speakers,
        n_phrases: phrases,
        utts_per_speaker_phrase: utts,
        dim,
        within_noise: noise,
        posterior_confusion: confusion,
        seed,
        trial_counts,
    };
    let dataset = synth::generate(&config)?;
    synth::verify_labels(&dataset)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(args.out.display().to_string(), e))?;
    let io_err = |p: &Path| {
        let shown = p.display().to_string();
        move |e: std::io::Error| CliError::Io(shown.clone(), e)
    };

    let emb_name = match format {
        FormatArg::Binary => synth::files::EMBEDDINGS_BINARY,
        FormatArg::Text => synth::files::EMBEDDINGS_TEXT,
    };
    let emb_path = args.out.join(emb_name);
    let mut buf = Vec::new();
    data::write_embeddings_to(&mut buf, &dataset.embeddings, format.as_format())
        .map_err(io_err(&emb_path))?;
    write_atomic(&emb_path, &buf).map_err(io_err(&emb_path))?;

    let models_path = args.out.join(synth::files::MODELS);
    buf.clear();
    data::write_models_to(&mut buf, &dataset.models).map_err(io_err(&models_path))?;
    write_atomic(&models_path, &buf).map_err(io_err(&models_path))?;

    let trials_path = args.out.join(synth::files::TRIALS);
    buf.clear();
    data::write_trials_to(&mut buf, &dataset.trials).map_err(io_err(&trials_path))?;
    write_atomic(&trials_path, &buf).map_err(io_err(&trials_path))?;

    let posteriors_path = args.out.join(synth::files::POSTERIORS);
    buf.clear();
    data::write_posteriors_to(&mut buf, &dataset.posteriors).map_err(io_err(&posteriors_path))?;
    write_atomic(&posteriors_path, &buf).map_err(io_err(&posteriors_path))?;

    let map_path = args.out.join(synth::files::SPEAKER_MAP);
    buf.clear();
    data::write_speaker_map_to(&mut buf, &dataset.speaker_map).map_err(io_err(&map_path))?;
    write_atomic(&map_path, &buf).map_err(io_err(&map_path))?;

    let mut entries = vec![
        kv("command", "gen"),
        kv("speakers", speakers),
        kv("phrases", phrases),
        kv("utts", utts),
        kv("dim", dim),
        kv("noise", noise),
        kv("confusion", confusion),
        kv("seed", seed),
        kv("format", format.as_str()),
        kv("out", args.out.display()),
        kv("workers", workers),
    ];
    if let Some(counts) = trial_counts {
        entries.push(kv("trials-tc", counts.tc));
        entries.push(kv("trials-tw", counts.tw));
        entries.push(kv("trials-ic", counts.ic));
    }
    // One manifest for the whole dataset directory.
    emit_manifest(&args.out.join("dataset"), &entries)?;
    println!(
        "generated {} embeddings, {} models, {} trials -> {}",
        dataset.embeddings.len(),
        dataset.models.len(),
        dataset.trials.len(),
        args.out.display()
    );
    Ok(())
}

fn run_enroll(args: EnrollArgs, cfg: &FileConfig, workers: usize) -> Result<(), CliError> {
    let relaxed = args.relaxed || cfg.get::<bool>("enroll.relaxed")?.unwrap_or(false);
    let policy = if relaxed {
        EnrollmentPolicy::Relaxed
    } else {
        EnrollmentPolicy::Strict
    };
    let out_format = resolve(args.out_format, cfg, "enroll.out-format", FormatArg::Binary)?;
    let models = data::read_models(&args.models, policy)?;
    let store = read_embeddings_auto(&args.embeddings)?;
    let model_vecs = backend::enroll(&models, &store, policy)?;
    let mut buf = Vec::new();
    data::write_embeddings_to(&mut buf, &model_vecs, out_format.as_format())
        .map_err(|e| CliError::Io(args.out.display().to_string(), e))?;
    write_atomic(&args.out, &buf).map_err(|e| CliError::Io(args.out.display().to_string(), e))?;
    emit_manifest(
        &args.out,
        &[
            kv("command", "enroll"),
            kv("models", args.models.display()),
            kv("embeddings", args.embeddings.display()),
            kv("policy", if relaxed { "relaxed" } else { "strict" }),
            kv("out-format", out_format.as_str()),
            kv("out", args.out.display()),
            kv("workers", workers),
        ],
    )?;
    println!("enrolled {} models -> {}", model_vecs.len(), args.out.display());
    Ok(())
}

fn run_score(args: ScoreArgs, workers: usize) -> Result<(), CliError> {
    let trials = data::read_trials(&args.trials)?;
    let model_vecs = read_embeddings_auto(&args.models)?;
    let tests = read_embeddings_auto(&args.embeddings)?;
    let records = backend::score_trials(&trials, &model_vecs, &tests)?;
    write_scores_atomic(&args.out, &records)?;
    emit_manifest(
        &args.out,
        &[
            kv("command", "score"),
            kv("trials", args.trials.display()),
            kv("models", args.models.display()),
            kv("embeddings", args.embeddings.display()),
            kv("out", args.out.display()),
            kv("workers", workers),
        ],
    )?;
    println!("scored {} trials -> {}", records.len(), args.out.display());
    Ok(())
}

fn run_asnorm(args: AsnormArgs, cfg: &FileConfig, workers: usize) -> Result<(), CliError> {
    let top_n = resolve(args.top_n, cfg, "asnorm.top-n", 300)?;
    let epsilon_sigma = resolve(args.epsilon_sigma, cfg, "asnorm.epsilon-sigma", 1e-6)?;
    let raw = data::read_scores(&args.input)?;
    let model_vecs = read_embeddings_auto(&args.models)?;
    let tests = read_embeddings_auto(&args.embeddings)?;
    let cohort_store = read_embeddings_auto(&args.cohort_embeddings)?;
    let speaker_map = data::read_speaker_map(&args.speaker_map)?;
    let cohort = backend::build_cohort(&cohort_store, &speaker_map)?;
    let config = AsNormConfig {
        top_n,
        epsilon_sigma,
    };
    let normalized = backend::asnorm(&raw, &model_vecs, &tests, &cohort, &config)?;
    write_scores_atomic(&args.out, &normalized)?;
    emit_manifest(
        &args.out,
        &[
            kv("command", "asnorm"),
            kv("in", args.input.display()),
            kv("models", args.models.display()),
            kv("embeddings", args.embeddings.display()),
            kv("cohort-embeddings", args.cohort_embeddings.display()),
            kv("speaker-map", args.speaker_map.display()),
            kv("top-n", top_n),
            kv("epsilon-sigma", epsilon_sigma),
            kv("cohort-size", cohort.len()),
            kv("out", args.out.display()),
            kv("workers", workers),
        ],
    )?;
    println!(
        "normalized {} scores against {} cohort centroids -> {}",
        normalized.len(),
        cohort.len(),
        args.out.display()
    );
    Ok(())
}

fn run_gate(args: GateArgs, cfg: &FileConfig, workers: usize) -> Result<(), CliError> {
    let floor = resolve(args.floor, cfg, "gate.floor", -1000.0)?;
    let min_confidence = resolve_opt(args.min_confidence, cfg, "gate.min-confidence")?;
    let trials = data::read_trials(&args.trials)?;
    let models = data::read_models(&args.models, EnrollmentPolicy::Relaxed)?;
    let posteriors = data::read_posteriors(&args.posteriors)?;
    let scores = data::read_scores(&args.scores)?;
    let config = GateConfig {
        floor_score: floor,
        min_confidence,
    };
    let (gated, decisions) = gate::gate(&trials, &models, &posteriors, &scores, &config)?;
    write_scores_atomic(&args.out, &gated)?;
    let mut entries = vec![
        kv("command", "gate"),
        kv("trials", args.trials.display()),
        kv("models", args.models.display()),
        kv("posteriors", args.posteriors.display()),
        kv("scores", args.scores.display()),
        kv("floor", floor),
        kv("out", args.out.display()),
        kv("workers", workers),
    ];
    if let Some(c) = min_confidence {
        entries.push(kv("min-confidence", c));
    }
    if let Some(decisions_path) = &args.decisions {
        let mut buf = Vec::new();
        gate::write_decisions_to(&mut buf, &trials, &decisions)
            .map_err(|e| CliError::Io(decisions_path.display().to_string(), e))?;
        write_atomic(decisions_path, &buf)
            .map_err(|e| CliError::Io(decisions_path.display().to_string(), e))?;
        entries.push(kv("decisions", decisions_path.display()));
    }
    emit_manifest(&args.out, &entries)?;
    let rejected = decisions.iter().filter(|d| !d.accept).count();
    println!(
        "gated {} trials ({rejected} rejected) -> {}",
        gated.len(),
        args.out.display()
    );
    Ok(())
}

fn run_fuse(args: FuseArgs, workers: usize) -> Result<(), CliError> {
    let mut sets = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        sets.push(data::read_scores(path)?);
    }
    let fused = backend::fuse(&sets)?;
    write_scores_atomic(&args.out, &fused)?;
    let inputs = args
        .inputs
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",");
    emit_manifest(
        &args.out,
        &[
            kv("command", "fuse"),
            kv("in", inputs),
            kv("systems", args.inputs.len()),
            kv("out", args.out.display()),
            kv("workers", workers),
        ],
    )?;
    println!(
        "fused {} systems over {} trials -> {}",
        args.inputs.len(),
        fused.len(),
        args.out.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs, cfg: &FileConfig, workers: usize) -> Result<(), CliError> {
    let subset = resolve(args.subset, cfg, "eval.subset", SubsetArg::All)?;
    let p_target = resolve(args.p_target, cfg, "eval.p-target", 0.01)?;
    let c_miss = resolve(args.c_miss, cfg, "eval.c-miss", 10.0)?;
    let c_fa = resolve(args.c_fa, cfg, "eval.c-fa", 1.0)?;
    let eer_method = resolve(args.eer_method, cfg, "eval.eer-method", EerMethodArg::Interpolated)?;

    let trials = data::read_trials(&args.trials)?;
    let scores = data::read_scores(&args.scores)?;
    let (targets, nontargets) = metrics::map_labels(&trials, &scores, subset.as_subset())?;
    let config = MetricConfig {
        p_target,
        c_miss,
        c_fa,
    };
    let mut report = metrics::evaluate(&targets, &nontargets, &config)?;
    report.eer = metrics::eer_with_method(&report.det, eer_method.as_method());

    println!("targets: {}", report.n_target);
    println!("nontargets: {}", report.n_nontarget);
    println!("EER(%): {:.4}", report.eer * 100.0);
    println!("MinDCF: {:.4}", report.min_dcf);
    // Table-style summary: MinDCF (4 dp) & EER% (2 dp).
    println!("{:.4} & {:.2}", report.min_dcf, report.eer * 100.0);

    if let Some(det_path) = &args.det_out {
        let mut buf = Vec::new();
        metrics::write_det_to(&mut buf, &report.det)
            .map_err(|e| CliError::Io(det_path.display().to_string(), e))?;
        write_atomic(det_path, &buf)
            .map_err(|e| CliError::Io(det_path.display().to_string(), e))?;
        emit_manifest(
            det_path,
            &[
                kv("command", "eval"),
                kv("scores", args.scores.display()),
                kv("trials", args.trials.display()),
                kv("subset", subset.as_str()),
                kv("p-target", p_target),
                kv("c-miss", c_miss),
                kv("c-fa", c_fa),
                kv("eer-method", eer_method.as_str()),
                kv("det-out", det_path.display()),
                kv("workers", workers),
            ],
        )?;
    }
    Ok(())
}

fn run_losscheck(args: LosscheckArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let instances = resolve(args.instances, cfg, "losscheck.instances", 50)?;
    let seed = resolve(args.seed, cfg, "losscheck.seed", 777)?;
    let step = resolve(args.step, cfg, "losscheck.step", 1e-4)?;
    let tolerance = resolve(args.tolerance, cfg, "losscheck.tolerance", 1e-4)?;
    let report = loss::finite_difference_check(instances, seed, step);
    println!("instances: {}", report.instances);
    println!("max relative error: {:.3e}", report.max_rel_error);
    if report.max_rel_error >= tolerance {
        return Err(CliError::Tolerance(format!(
            "gradient check failed: max relative error {:.3e} >= tolerance {tolerance:e}",
            report.max_rel_error
        )));
    }
    println!("gradient check passed (tolerance {tolerance:e})");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let workers = resolve(cli.workers, &cfg, "workers", 0usize)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build worker pool: {e}")))?;
    let effective_workers = pool.current_num_threads();
    pool.install(|| match cli.command {
        Command::Gen(args) => run_gen(args, &cfg, effective_workers),
        Command::Enroll(args) => run_enroll(args, &cfg, effective_workers),
        Command::Score(args) => run_score(args, effective_workers),
        Command::Asnorm(args) => run_asnorm(args, &cfg, effective_workers),
        Command::Gate(args) => run_gate(args, &cfg, effective_workers),
        Command::Fuse(args) => run_fuse(args, effective_workers),
        Command::Eval(args) => run_eval(args, &cfg, effective_workers),
        Command::Losscheck(args) => run_losscheck(args, &cfg),
    })
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
