//! Command-line interface. Every flag can also be set through an `HCC_`
//! environment variable, e.g. `HCC_ALPHA=0.05`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hcc_core::{
    default_beta, synth_generate, CostParams, CoverFamily, Method, Models, SynthConfig,
};
use serde_json::json;

use crate::error::CliError;
use crate::formats::{load_scores, load_taxonomy, write_scores, ScoreRow};
use crate::model::{load_model, save_model, Model, ModelMetadata};
use crate::output::{
    write_atomic, write_metrics_table, write_predictions, AuditDoc, MetricsDoc, PredictionRecord,
};
use crate::pipeline::{
    build_space, calibrate_parallel, calibrate_risk_control_parallel, check_alpha, default_betas,
    predict_batch, propagate_all, records_from, run_pipeline, run_sweep, with_threads, BetaSpec,
    CoverModeArg, RunConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "hcc",
    version,
    about = "Hierarchical conformal classification over class taxonomies"
)]
pub struct Cli {
    /// Worker threads; defaults to one per core. Output does not depend on it.
    #[arg(long, global = true, env = "HCC_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a taxonomy and, optionally, a score table against it
    Validate(ValidateArgs),
    /// Enumerate the NOL-covers of a taxonomy
    Covers(CoversArgs),
    /// Calibrate every cover on a labelled score table and save the model
    Calibrate(CalibrateArgs),
    /// Predict with a saved model
    Predict(PredictArgs),
    /// Split, calibrate, predict and score in one run
    Evaluate(EvaluateArgs),
    /// Evaluate HCC over a grid of beta values
    SweepBeta(SweepArgs),
    /// Generate a synthetic labelled score table
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TaxonomyArg {
    /// Taxonomy document (JSON with `nodes` and `edges`)
    #[arg(long, env = "HCC_TAXONOMY")]
    pub taxonomy: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpaceArgs {
    /// Enumeration cap before falling back (auto) or failing (exhaustive)
    #[arg(long, env = "HCC_MAX_COVERS")]
    pub max_covers: Option<usize>,

    /// exhaustive, depth-limited or auto
    #[arg(long, env = "HCC_COVER_MODE", default_value = "auto")]
    pub cover_mode: CoverModeArg,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Score table: instance_id, true_leaf, then one column per leaf
    #[arg(long, env = "HCC_SCORES")]
    pub scores: PathBuf,

    /// Divide each score row by its sum instead of rejecting rows that drift
    #[arg(long, env = "HCC_RENORMALIZE")]
    pub renormalize: bool,
}

#[derive(Debug, Args)]
pub struct PredictionArgs {
    /// Target miscoverage level in [0, 1)
    #[arg(long, env = "HCC_ALPHA", default_value_t = 0.1)]
    pub alpha: f64,

    /// Cost trade-off weight, or `auto` for the taxonomy default
    #[arg(long, env = "HCC_BETA", default_value = "auto")]
    pub beta: BetaSpec,

    /// standard, lca, hcc, hcc-no-prune, hcc-no-correction or hcc-crc
    #[arg(long, env = "HCC_METHOD", default_value = "hcc", value_parser = parse_method)]
    pub method: Method,

    /// Replace empty cover-level sets by the cover's best-scoring member
    #[arg(long, env = "HCC_PAD_EMPTY")]
    pub pad_empty: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Fraction of rows used for calibration
    #[arg(long, env = "HCC_SPLIT", default_value_t = 0.8)]
    pub split: f64,

    /// Seed for the calibration/test shuffle
    #[arg(long, env = "HCC_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArg,

    #[arg(long, env = "HCC_SCORES")]
    pub scores: Option<PathBuf>,

    #[arg(long, env = "HCC_RENORMALIZE")]
    pub renormalize: bool,

    #[arg(long, env = "HCC_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoversArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArg,

    #[command(flatten)]
    pub space: SpaceArgs,

    #[arg(long, env = "HCC_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArg,

    #[command(flatten)]
    pub scores: ScoreArgs,

    #[command(flatten)]
    pub space: SpaceArgs,

    /// Also calibrate the risk-control variant (method hcc-crc) at --alpha
    #[arg(long, env = "HCC_METHOD", default_value = "hcc", value_parser = parse_method)]
    pub method: Method,

    #[arg(long, env = "HCC_ALPHA", default_value_t = 0.1)]
    pub alpha: f64,

    /// Model file to write
    #[arg(long, env = "HCC_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArg,

    #[command(flatten)]
    pub scores: ScoreArgs,

    /// Model written by `calibrate` or `evaluate`
    #[arg(long, env = "HCC_MODEL")]
    pub model: PathBuf,

    #[command(flatten)]
    pub prediction: PredictionArgs,

    /// Predictions file to write
    #[arg(long, env = "HCC_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArg,

    #[command(flatten)]
    pub scores: ScoreArgs,

    #[command(flatten)]
    pub space: SpaceArgs,

    #[command(flatten)]
    pub prediction: PredictionArgs,

    #[command(flatten)]
    pub split: SplitArgs,

    /// Directory for model.json, predictions.csv, metrics.json and metrics.csv
    #[arg(long, env = "HCC_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArg,

    #[command(flatten)]
    pub scores: ScoreArgs,

    #[command(flatten)]
    pub space: SpaceArgs,

    #[command(flatten)]
    pub prediction: PredictionArgs,

    #[command(flatten)]
    pub split: SplitArgs,

    /// Comma-separated beta values; defaults to ten points on [0, 1]
    #[arg(long, env = "HCC_BETAS", value_delimiter = ',')]
    pub betas: Vec<f64>,

    /// Metrics table to write; stdout when omitted
    #[arg(long, env = "HCC_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArg,

    /// Number of instances
    #[arg(long, env = "HCC_N", default_value_t = 1000)]
    pub n: usize,

    /// Logit boost on the true leaf
    #[arg(long, env = "HCC_SIGNAL", default_value_t = 2.0)]
    pub signal: f64,

    /// Standard deviation of the logit noise
    #[arg(long, env = "HCC_NOISE", default_value_t = 1.0)]
    pub noise: f64,

    /// Generator seed
    #[arg(long, env = "HCC_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Score table to write; stdout when omitted
    #[arg(long, env = "HCC_OUTPUT")]
    pub output: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

/// Parses arguments, runs the command and returns the process exit code.
/// Errors are reported as one JSON record on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
            }
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_record());
            return err.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        // reader closed stdout early, e.g. `hcc covers ... | head`
        Err(CliError::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(err) => {
            eprintln!("{}", err.to_record());
            err.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads;
    match cli.command {
        Command::Validate(a) => validate(a),
        Command::Covers(a) => covers(a),
        Command::Calibrate(a) => with_threads(threads, || calibrate(a)),
        Command::Predict(a) => with_threads(threads, || predict(a)),
        Command::Evaluate(a) => {
            let cfg = run_config(
                &a.taxonomy,
                &a.scores,
                &a.space,
                &a.prediction,
                &a.split,
                threads,
                a.output,
            );
            let outcome = run_pipeline(&cfg)?;
            emit_json(
                None,
                &serde_json::to_value(&outcome.summary).expect("summary serializes"),
            )
        }
        Command::SweepBeta(a) => {
            let betas = if a.betas.is_empty() {
                default_betas()
            } else {
                a.betas.clone()
            };
            let cfg = run_config(
                &a.taxonomy,
                &a.scores,
                &a.space,
                &a.prediction,
                &a.split,
                threads,
                PathBuf::new(),
            );
            let rows = run_sweep(&cfg, &betas)?;
            match &a.output {
                Some(path) => write_atomic(path, |w| Ok(write_metrics_table(w, &rows)?)),
                None => write_metrics_table(std::io::stdout().lock(), &rows)
                    .map_err(|e| CliError::io(Path::new("<stdout>"), e.into())),
            }
        }
        Command::Synth(a) => synth(a),
    }
}

fn run_config(
    taxonomy: &TaxonomyArg,
    scores: &ScoreArgs,
    space: &SpaceArgs,
    prediction: &PredictionArgs,
    split: &SplitArgs,
    threads: Option<usize>,
    output: PathBuf,
) -> RunConfig {
    RunConfig {
        taxonomy_path: taxonomy.taxonomy.clone(),
        scores_path: scores.scores.clone(),
        alpha: prediction.alpha,
        beta: prediction.beta,
        method: prediction.method,
        split_ratio: split.split,
        seed: split.seed,
        max_covers: space.max_covers,
        cover_mode: space.cover_mode,
        renormalize: scores.renormalize,
        pad_empty: prediction.pad_empty,
        threads,
        output_path: output,
    }
}

fn emit_json(path: Option<&Path>, value: &serde_json::Value) -> Result<(), CliError> {
    match path {
        Some(p) => write_atomic(p, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")
        }),
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)
                .map_err(|e| CliError::io(Path::new("<stdout>"), e.into()))?;
            writeln!(out).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let t = load_taxonomy(&a.taxonomy.taxonomy)?;
    let internal = t.len() - t.num_leaves();
    let mut doc = json!({
        "taxonomy": {
            "nodes": t.len(),
            "leaves": t.num_leaves(),
            "internal": internal,
            "depth": t.depth(),
            "root": t.name(t.root()),
            "hash": t.fingerprint(),
            "default_beta": default_beta(&t).ok(),
        }
    });
    if let Some(path) = &a.scores {
        let table = load_scores(path, &t, a.renormalize)?;
        doc["scores"] = json!({ "rows": table.len(), "has_truth": table.has_truth });
    }
    emit_json(a.output.as_deref(), &doc)
}

fn covers(a: CoversArgs) -> Result<(), CliError> {
    let t = load_taxonomy(&a.taxonomy.taxonomy)?;
    let space = build_space(&t, a.space.cover_mode, a.space.max_covers)?;
    let histogram: Vec<serde_json::Value> = space
        .size_histogram()
        .into_iter()
        .map(|(size, count)| json!({ "size": size, "count": count }))
        .collect();
    let covers: Vec<serde_json::Value> = space
        .covers()
        .iter()
        .map(|c| {
            json!({
                "id": c.id(),
                "members": c.members().iter().map(|&v| t.name(v)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let doc = json!({
        "taxonomy_hash": t.fingerprint(),
        "mode": space.mode().as_str(),
        "n_covers": space.len(),
        "leaf_cover_id": space.leaf_cover_id(),
        "skipped_levels": space.skipped_levels(),
        "histogram": histogram,
        "covers": covers,
    });
    emit_json(a.output.as_deref(), &doc)
}

fn calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    check_alpha(a.alpha)?;
    let t = load_taxonomy(&a.taxonomy.taxonomy)?;
    let table = load_scores(&a.scores.scores, &t, a.scores.renormalize)?;
    let space = build_space(&t, a.space.cover_mode, a.space.max_covers)?;
    let records = records_from(&t, &table, &a.scores.scores)?;
    let family = calibrate_parallel(&t, &space, &records)?;
    let risk_control = if a.method.needs_risk_control() {
        Some(calibrate_risk_control_parallel(
            &t, &space, &records, a.alpha,
        )?)
    } else {
        None
    };
    let model = Model {
        family,
        risk_control,
        metadata: ModelMetadata::new(
            a.scores
                .scores
                .file_name()
                .map(|s| s.to_string_lossy().into_owned()),
            None,
            None,
        ),
    };
    save_model(&model, &t, &a.output)?;
    emit_json(
        None,
        &json!({
            "model": a.output.display().to_string(),
            "n_calibration": records.len(),
            "n_covers": space.len(),
            "cover_mode": space.mode().as_str(),
        }),
    )
}

fn predict(a: PredictArgs) -> Result<(), CliError> {
    check_alpha(a.prediction.alpha)?;
    let t = load_taxonomy(&a.taxonomy.taxonomy)?;
    let model = load_model(&a.model, &t)?;
    let table = load_scores(&a.scores.scores, &t, a.scores.renormalize)?;
    let beta = a.prediction.beta.resolve(&t)?;
    let cp = CostParams::new(beta)?;
    if a.prediction.method.needs_risk_control() && model.risk_control.is_none() {
        return Err(CliError::model(
            &a.model,
            "model has no risk-control calibration; recalibrate with --method hcc-crc",
        ));
    }
    let models = Models {
        conformal: &model.family,
        risk_control: model.risk_control.as_ref(),
    };
    let scores = propagate_all(&t, &table)?;
    let preds = predict_batch(
        a.prediction.method,
        models,
        &t,
        &scores,
        a.prediction.alpha,
        cp,
        a.prediction.pad_empty,
    )?;
    let records: Vec<PredictionRecord<'_>> = table
        .rows
        .iter()
        .zip(&preds)
        .map(|(r, p)| PredictionRecord {
            instance_id: r.instance_id(),
            method: a.prediction.method,
            prediction: p,
        })
        .collect();
    let mut summary = json!({
        "method": a.prediction.method.as_str(),
        "alpha": a.prediction.alpha,
        "beta": beta,
        "n": preds.len(),
        "n_covers": model.family.space().len(),
        "audit": AuditDoc::from_predictions(&preds),
    });
    if table.has_truth {
        let truths = table.truths(&a.scores.scores)?;
        let sets: Vec<_> = preds.iter().map(|p| p.selected.clone()).collect();
        let metrics = hcc_core::evaluate_run(&t, &sets, &truths, beta)?;
        summary["metrics"] =
            serde_json::to_value(MetricsDoc::from(metrics)).expect("metrics serialize");
    }
    write_atomic(&a.output, |w| Ok(write_predictions(w, &t, &records)?))?;
    emit_json(None, &summary)
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let t = load_taxonomy(&a.taxonomy.taxonomy)?;
    let cfg = SynthConfig {
        n: a.n,
        signal: a.signal,
        noise: a.noise,
        seed: a.seed,
    };
    let rows: Vec<ScoreRow> = synth_generate(&t, &cfg)?
        .into_iter()
        .map(|inst| ScoreRow {
            scores: inst.scores,
            true_leaf: Some(inst.true_leaf),
        })
        .collect();
    match &a.output {
        Some(path) => write_atomic(path, |w| Ok(write_scores(w, &t, &rows)?)),
        None => write_scores(std::io::stdout().lock(), &t, &rows)
            .map_err(|e| CliError::io(Path::new("<stdout>"), e.into())),
    }
}
