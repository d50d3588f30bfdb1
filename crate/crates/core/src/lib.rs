//! Hierarchical conformal classification.
//!
//! Turns flat classifier scores over the leaves of a class taxonomy into
//! prediction sets made of nodes at any level of the hierarchy, with a
//! split-conformal guarantee that the true leaf lies below the returned set.
//!
//! The crate is `no_std` and only needs an allocator. File formats, batch
//! parallelism and the command-line tool live in the companion `hcc` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod baselines;
pub mod conformal;
pub mod covers;
pub mod evaluation;
pub mod fixtures;
pub mod inference;
pub mod nodeset;
pub mod propagation;
pub mod taxonomy;

pub use baselines::{
    crc_calibrate_family, crc_recall_calibrate, crc_recall_predict, hcc_no_correction_predict,
    hcc_no_pruning_predict, lca_baseline_predict, predict_with, standard_cp_predict, Method,
    Models, RiskControlFamily, RiskControlPredictor,
};
pub use conformal::{
    calibrate_cover, calibrate_family, conformity_score, predict_cover, predict_cover_padded,
    threshold_at, CalibrationRecord, ConformalError, CoverFamily, CoverPredictor,
    CoverSetPredictor, PredictorFamily,
};
pub use covers::{
    brute_force_nol_covers, depth_limited_covers, enumerate_nol_covers, is_nol_cover, CoverError,
    CoverMode, CoverSpace, EnumerationOptions, NolCover,
};
pub use evaluation::{
    coverage_indicator, default_beta, evaluate_run, split_data, sweep_beta, synth_generate,
    EvalError, MeanSd, Metrics, SweepRow, SynthConfig, SynthInstance,
};
pub use inference::{
    bonferroni, dynamic_prune, hcc_pipeline, hcc_predict, set_cost, CostParams, HccPrediction,
    InferenceError, PipelineOptions,
};
pub use nodeset::NodeSet;
pub use propagation::{
    label_indicator, propagate_scores, propagated_label_set, GroundTruth, LeafScores,
    PropagatedScores, ScoreError, SimplexPolicy,
};
pub use taxonomy::{NodeId, Taxonomy, TaxonomyError};

/// Any error raised by this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
