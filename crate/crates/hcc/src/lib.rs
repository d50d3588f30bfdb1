//! File formats, batch execution and the `hcc` command-line tool built on
//! [`hcc_core`].

pub mod cli;
pub mod error;
pub mod formats;
pub mod model;
pub mod output;
pub mod pipeline;

pub use error::CliError;
pub use formats::{load_scores, load_taxonomy, parse_scores, ScoreRow, ScoreTable, TaxonomyDoc};
pub use model::{load_model, save_model, Model};
pub use pipeline::{run_pipeline, run_sweep, BetaSpec, CoverModeArg, RunConfig, RunOutcome};
