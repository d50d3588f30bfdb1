//! Batch orchestration: cover spaces, parallel calibration and prediction,
//! and the end-to-end evaluation run.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hcc_core::baselines::crc_recall_calibrate;
use hcc_core::evaluation::split_indices;
use hcc_core::inference::hcc_candidates;
use hcc_core::{
    calibrate_cover, default_beta, depth_limited_covers, enumerate_nol_covers, evaluate_run,
    predict_with, CalibrationRecord, CostParams, CoverFamily, CoverSpace, EnumerationOptions,
    HccPrediction, Method, Metrics, Models, NodeId, NodeSet, PipelineOptions, PredictorFamily,
    PropagatedScores, RiskControlFamily, Taxonomy,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::formats::{load_scores, load_taxonomy, ScoreTable};
use crate::model::{save_model, Model, ModelMetadata};
use crate::output::{
    write_atomic, write_metrics_table, write_predictions, AuditDoc, MetricsDoc, MetricsRow,
    PredictionRecord,
};

/// `β` as configured: a number or derived from the taxonomy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSpec {
    Auto,
    Value(f64),
}

impl BetaSpec {
    pub fn resolve(self, t: &Taxonomy) -> Result<f64, CliError> {
        match self {
            BetaSpec::Value(b) => Ok(b),
            BetaSpec::Auto => Ok(default_beta(t)?),
        }
    }
}

impl FromStr for BetaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(BetaSpec::Auto);
        }
        match s.parse::<f64>() {
            Ok(b) if b.is_finite() && b >= 0.0 => Ok(BetaSpec::Value(b)),
            _ => Err(format!(
                "expected a nonnegative number or `auto`, got `{s}`"
            )),
        }
    }
}

impl fmt::Display for BetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSpec::Auto => f.write_str("auto"),
            BetaSpec::Value(b) => write!(f, "{b}"),
        }
    }
}

/// How the cover space is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoverModeArg {
    Exhaustive,
    DepthLimited,
    /// Exhaustive, switching to depth-limited when the cap is exceeded.
    #[default]
    Auto,
}

impl FromStr for CoverModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhaustive" => Ok(CoverModeArg::Exhaustive),
            "depth-limited" => Ok(CoverModeArg::DepthLimited),
            "auto" => Ok(CoverModeArg::Auto),
            _ => Err(format!(
                "expected exhaustive, depth-limited or auto, got `{s}`"
            )),
        }
    }
}

pub fn build_space(
    t: &Taxonomy,
    mode: CoverModeArg,
    max_covers: Option<usize>,
) -> Result<CoverSpace, CliError> {
    let limit = max_covers.or(EnumerationOptions::default().max_covers);
    Ok(match mode {
        CoverModeArg::DepthLimited => depth_limited_covers(t),
        CoverModeArg::Exhaustive => enumerate_nol_covers(
            t,
            EnumerationOptions {
                max_covers: limit,
                fallback: false,
            },
        )?,
        CoverModeArg::Auto => enumerate_nol_covers(
            t,
            EnumerationOptions {
                max_covers: limit,
                fallback: true,
            },
        )?,
    })
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::ThreadPool(e.to_string()))?
            .install(f),
    }
}

pub fn records_from(
    t: &Taxonomy,
    table: &ScoreTable,
    path: &Path,
) -> Result<Vec<CalibrationRecord>, CliError> {
    let truths = table.truths(path)?;
    table
        .rows
        .par_iter()
        .zip(truths.par_iter())
        .map(|(row, &y)| Ok(CalibrationRecord::new(t, &row.scores, y)?))
        .collect()
}

pub fn propagate_all(t: &Taxonomy, table: &ScoreTable) -> Result<Vec<PropagatedScores>, CliError> {
    table
        .rows
        .par_iter()
        .map(|row| Ok(hcc_core::propagate_scores(t, &row.scores)?))
        .collect()
}

/// Calibrates every cover in parallel; predictors come back in cover order.
pub fn calibrate_parallel(
    t: &Taxonomy,
    space: &CoverSpace,
    records: &[CalibrationRecord],
) -> Result<PredictorFamily, CliError> {
    space.check_taxonomy(t)?;
    let predictors = space
        .covers()
        .par_iter()
        .map(|c| calibrate_cover(t, c, records))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PredictorFamily::new(space.clone(), predictors)?)
}

pub fn calibrate_risk_control_parallel(
    t: &Taxonomy,
    space: &CoverSpace,
    records: &[CalibrationRecord],
    alpha: f64,
) -> Result<RiskControlFamily, CliError> {
    space.check_taxonomy(t)?;
    let predictors = space
        .covers()
        .par_iter()
        .map(|c| crc_recall_calibrate(t, c, records, alpha))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RiskControlFamily::new(space.clone(), predictors)?)
}

pub fn predict_batch(
    method: Method,
    models: Models<'_>,
    t: &Taxonomy,
    scores: &[PropagatedScores],
    alpha: f64,
    cp: CostParams,
    pad_empty: bool,
) -> Result<Vec<HccPrediction>, CliError> {
    scores
        .par_iter()
        .map(|ps| Ok(predict_with(method, models, t, ps, alpha, cp, pad_empty)?))
        .collect()
}

/// Pipeline switches for the HCC variants; `None` for the baselines.
pub fn pipeline_options(method: Method, pad_empty: bool) -> Option<PipelineOptions> {
    let base = PipelineOptions {
        pad_empty,
        ..PipelineOptions::default()
    };
    match method {
        Method::Standard | Method::Lca => None,
        Method::Hcc | Method::HccCrc => Some(base),
        Method::HccNoPrune => Some(PipelineOptions {
            prune: false,
            ..base
        }),
        Method::HccNoCorrection => Some(PipelineOptions {
            correct: false,
            ..base
        }),
    }
}

/// Everything needed for an evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub taxonomy_path: PathBuf,
    pub scores_path: PathBuf,
    pub alpha: f64,
    pub beta: BetaSpec,
    pub method: Method,
    pub split_ratio: f64,
    pub seed: u64,
    pub max_covers: Option<usize>,
    pub cover_mode: CoverModeArg,
    pub renormalize: bool,
    pub pad_empty: bool,
    pub threads: Option<usize>,
    /// Directory receiving the model, predictions and metrics.
    pub output_path: PathBuf,
}

impl RunConfig {
    pub fn new(
        taxonomy_path: impl Into<PathBuf>,
        scores_path: impl Into<PathBuf>,
        output_path: impl Into<PathBuf>,
    ) -> Self {
        Self {
            taxonomy_path: taxonomy_path.into(),
            scores_path: scores_path.into(),
            alpha: 0.1,
            beta: BetaSpec::Auto,
            method: Method::Hcc,
            split_ratio: 0.8,
            seed: 0,
            max_covers: None,
            cover_mode: CoverModeArg::Auto,
            renormalize: false,
            pad_empty: false,
            threads: None,
            output_path: output_path.into(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check_alpha(self.alpha)?;
        if let BetaSpec::Value(b) = self.beta {
            if !(b.is_finite() && b >= 0.0) {
                return Err(CliError::Config(format!(
                    "beta must be nonnegative, got {b}"
                )));
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(CliError::Config(format!(
                "split ratio must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        if self.max_covers == Some(0) {
            return Err(CliError::Config("max covers must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )))
    }
}

/// Summary document written as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub method: String,
    pub alpha: f64,
    pub beta: f64,
    pub beta_source: String,
    pub taxonomy_hash: String,
    pub cover_mode: String,
    pub n_covers: usize,
    pub skipped_levels: Vec<usize>,
    pub n_calibration: usize,
    pub n_test: usize,
    pub split: f64,
    pub seed: u64,
    pub metrics: MetricsDoc,
    pub audit: AuditDoc,
    /// Covers whose risk-control calibration found no feasible threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasible_risk_control: Option<usize>,
}

/// In-memory result of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub taxonomy: Taxonomy,
    pub summary: RunSummary,
    pub model: Model,
    pub metrics: Metrics,
    pub instance_ids: Vec<String>,
    pub predictions: Vec<HccPrediction>,
}

pub const MODEL_FILE: &str = "model.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const SUMMARY_FILE: &str = "metrics.json";
pub const TABLE_FILE: &str = "metrics.csv";

struct Prepared {
    t: Taxonomy,
    table: ScoreTable,
    space: CoverSpace,
    records: Vec<CalibrationRecord>,
    cal: Vec<usize>,
    test: Vec<usize>,
    model: Model,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    cfg.validate()?;
    let t = load_taxonomy(&cfg.taxonomy_path)?;
    let table = load_scores(&cfg.scores_path, &t, cfg.renormalize)?;
    let space = build_space(&t, cfg.cover_mode, cfg.max_covers)?;
    let records = records_from(&t, &table, &cfg.scores_path)?;
    let (cal, test) = split_indices(records.len(), cfg.split_ratio, cfg.seed)?;
    let cal_records: Vec<CalibrationRecord> = cal.iter().map(|&i| records[i].clone()).collect();
    let family = calibrate_parallel(&t, &space, &cal_records)?;
    let risk_control = if cfg.method.needs_risk_control() {
        Some(calibrate_risk_control_parallel(
            &t,
            &space,
            &cal_records,
            cfg.alpha,
        )?)
    } else {
        None
    };
    let model = Model {
        family,
        risk_control,
        metadata: ModelMetadata::new(
            cfg.scores_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned()),
            Some(cfg.seed),
            Some(cfg.split_ratio),
        ),
    };
    Ok(Prepared {
        t,
        table,
        space,
        records,
        cal,
        test,
        model,
    })
}

/// Calibrates, predicts and evaluates without touching the filesystem
/// beyond reading inputs.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    with_threads(cfg.threads, || {
        let p = prepare(cfg)?;
        let t = &p.t;
        let beta = cfg.beta.resolve(t)?;
        let cp = CostParams::new(beta)?;
        let scores: Vec<PropagatedScores> = p
            .test
            .iter()
            .map(|&i| p.records[i].scores.clone())
            .collect();
        let truths: Vec<NodeId> = p
            .test
            .iter()
            .map(|&i| p.records[i].truth.true_leaf())
            .collect();
        let models = Models {
            conformal: &p.model.family,
            risk_control: p.model.risk_control.as_ref(),
        };
        let predictions =
            predict_batch(cfg.method, models, t, &scores, cfg.alpha, cp, cfg.pad_empty)?;
        let sets: Vec<NodeSet> = predictions.iter().map(|p| p.selected.clone()).collect();
        let metrics = evaluate_run(t, &sets, &truths, beta)?;
        let summary = RunSummary {
            format_version: 1,
            method: cfg.method.as_str().to_string(),
            alpha: cfg.alpha,
            beta,
            beta_source: match cfg.beta {
                BetaSpec::Auto => "auto".to_string(),
                BetaSpec::Value(_) => "configured".to_string(),
            },
            taxonomy_hash: t.fingerprint().to_string(),
            cover_mode: p.space.mode().as_str().to_string(),
            n_covers: p.space.len(),
            skipped_levels: p.space.skipped_levels().to_vec(),
            n_calibration: p.cal.len(),
            n_test: p.test.len(),
            split: cfg.split_ratio,
            seed: cfg.seed,
            metrics: metrics.into(),
            audit: AuditDoc::from_predictions(&predictions),
            infeasible_risk_control: p
                .model
                .risk_control
                .as_ref()
                .map(|rc| rc.predictors().iter().filter(|q| !q.feasible()).count()),
        };
        let instance_ids = p
            .test
            .iter()
            .map(|&i| p.table.rows[i].instance_id().to_string())
            .collect();
        Ok(RunOutcome {
            taxonomy: p.t,
            summary,
            model: p.model,
            metrics,
            instance_ids,
            predictions,
        })
    })
}

/// Full evaluation run: writes `model.json`, `predictions.csv`,
/// `metrics.json` and `metrics.csv` into the output directory, only after
/// every computation has succeeded.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let outcome = execute(cfg)?;
    let t = &outcome.taxonomy;
    let dir = &cfg.output_path;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    save_model(&outcome.model, t, &dir.join(MODEL_FILE))?;
    let records: Vec<PredictionRecord<'_>> = outcome
        .instance_ids
        .iter()
        .zip(&outcome.predictions)
        .map(|(id, p)| PredictionRecord {
            instance_id: id,
            method: cfg.method,
            prediction: p,
        })
        .collect();
    write_atomic(&dir.join(PREDICTIONS_FILE), |w| {
        Ok(write_predictions(w, t, &records)?)
    })?;
    write_atomic(&dir.join(SUMMARY_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &outcome.summary)?;
        w.write_all(b"\n")
    })?;
    let row = MetricsRow {
        method: cfg.method,
        alpha: cfg.alpha,
        beta: outcome.summary.beta,
        metrics: outcome.metrics,
    };
    write_atomic(&dir.join(TABLE_FILE), |w| {
        Ok(write_metrics_table(w, &[row])?)
    })?;
    Ok(outcome)
}

/// Default sweep grid: ten evenly spaced values on `[0, 1]`.
pub fn default_betas() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 9.0).collect()
}

/// Calibrates once, then evaluates every `β` on the test split. HCC
/// candidates are computed once per instance.
pub fn run_sweep(cfg: &RunConfig, betas: &[f64]) -> Result<Vec<MetricsRow>, CliError> {
    if betas.is_empty() {
        return Err(CliError::Config(
            "beta sweep needs at least one value".into(),
        ));
    }
    let costs = betas
        .iter()
        .map(|&b| CostParams::new(b))
        .collect::<Result<Vec<_>, _>>()?;
    with_threads(cfg.threads, || {
        let p = prepare(cfg)?;
        let t = &p.t;
        let scores: Vec<&PropagatedScores> = p.test.iter().map(|&i| &p.records[i].scores).collect();
        let truths: Vec<NodeId> = p
            .test
            .iter()
            .map(|&i| p.records[i].truth.true_leaf())
            .collect();
        let per_beta: Vec<Vec<NodeSet>> = match pipeline_options(cfg.method, cfg.pad_empty) {
            Some(opts) => {
                let candidates = scores
                    .par_iter()
                    .map(|ps| match &p.model.risk_control {
                        Some(rc) if cfg.method.needs_risk_control() => {
                            hcc_candidates(rc, t, ps, cfg.alpha, opts)
                        }
                        _ => hcc_candidates(&p.model.family, t, ps, cfg.alpha, opts),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                costs
                    .iter()
                    .map(|&cp| candidates.iter().map(|c| c.select(cp).selected).collect())
                    .collect()
            }
            None => {
                let models = Models {
                    conformal: &p.model.family,
                    risk_control: None,
                };
                let owned: Vec<PropagatedScores> = scores.iter().map(|&s| s.clone()).collect();
                let preds = predict_batch(
                    cfg.method,
                    models,
                    t,
                    &owned,
                    cfg.alpha,
                    costs[0],
                    cfg.pad_empty,
                )?;
                let sets: Vec<NodeSet> = preds.into_iter().map(|p| p.selected).collect();
                vec![sets; costs.len()]
            }
        };
        costs
            .iter()
            .zip(per_beta)
            .map(|(cp, sets)| {
                Ok(MetricsRow {
                    method: cfg.method,
                    alpha: cfg.alpha,
                    beta: cp.beta(),
                    metrics: evaluate_run(t, &sets, &truths, cp.beta())?,
                })
            })
            .collect()
    })
}
