//! Persisted calibrated families.

use std::fs;
use std::path::Path;

use hcc_core::{
    CoverFamily, CoverMode, CoverPredictor, CoverSpace, PredictorFamily, RiskControlFamily,
    RiskControlPredictor, Taxonomy,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::write_atomic;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverRecord {
    pub id: usize,
    pub members: Vec<String>,
    pub conformity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskControlRecord {
    pub alpha: f64,
    /// Summed `1 − recall` loss per cover on the 1001-point grid.
    pub loss_sums: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub tool: String,
    pub version: String,
    pub source: Option<String>,
    pub seed: Option<u64>,
    pub split: Option<f64>,
}

impl ModelMetadata {
    pub fn new(source: Option<String>, seed: Option<u64>, split: Option<f64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            source,
            seed,
            split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub format_version: u32,
    pub taxonomy_hash: String,
    pub n_calibration: usize,
    pub cover_mode: String,
    pub metadata: ModelMetadata,
    pub covers: Vec<CoverRecord>,
    pub risk_control: Option<RiskControlRecord>,
}

/// Calibrated state as loaded from or saved to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub family: PredictorFamily,
    pub risk_control: Option<RiskControlFamily>,
    pub metadata: ModelMetadata,
}

impl Model {
    pub fn to_doc(&self, t: &Taxonomy) -> ModelDoc {
        let family = &self.family;
        ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            taxonomy_hash: family.taxonomy_hash().to_string(),
            n_calibration: family.n_calibration(),
            cover_mode: family.space().mode().as_str().to_string(),
            metadata: self.metadata.clone(),
            covers: family
                .predictors()
                .iter()
                .map(|p| CoverRecord {
                    id: p.cover().id(),
                    members: p
                        .cover()
                        .members()
                        .iter()
                        .map(|&v| t.name(v).to_string())
                        .collect(),
                    conformity: p.sorted_conformity().to_vec(),
                })
                .collect(),
            risk_control: self.risk_control.as_ref().map(|rc| RiskControlRecord {
                alpha: rc.predictors()[0].alpha(),
                loss_sums: rc
                    .predictors()
                    .iter()
                    .map(|p| p.loss_sums().to_vec())
                    .collect(),
            }),
        }
    }

    pub fn from_doc(doc: ModelDoc, t: &Taxonomy, path: &Path) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::model(path, msg);
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(bad(format!(
                "format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.taxonomy_hash != t.fingerprint() {
            return Err(bad(format!(
                "model was calibrated for taxonomy {}, not {}",
                doc.taxonomy_hash,
                t.fingerprint()
            )));
        }
        let mode = match doc.cover_mode.as_str() {
            "exhaustive" => CoverMode::Exhaustive,
            "depth-limited" => CoverMode::DepthLimited,
            "custom" => CoverMode::Custom,
            other => return Err(bad(format!("unknown cover mode `{other}`"))),
        };
        let mut sets = Vec::with_capacity(doc.covers.len());
        for c in &doc.covers {
            let names = c.members.iter().map(String::as_str);
            let set = t
                .node_set_by_name(names)
                .ok_or_else(|| bad(format!("cover {} names an unknown node", c.id)))?;
            sets.push(set);
        }
        let space = CoverSpace::from_sets(t, sets, mode).map_err(|e| bad(e.to_string()))?;
        if space.len() != doc.covers.len() {
            return Err(bad("duplicate covers".to_string()));
        }
        let mut predictors = Vec::with_capacity(space.len());
        for (cover, rec) in space.covers().iter().zip(&doc.covers) {
            if rec.id != cover.id() {
                return Err(bad(format!(
                    "cover ids are not in canonical order at {}",
                    rec.id
                )));
            }
            if rec.conformity.len() != doc.n_calibration {
                return Err(bad(format!(
                    "cover {} has the wrong calibration size",
                    rec.id
                )));
            }
            predictors.push(
                CoverPredictor::from_sorted(cover.clone(), rec.conformity.clone())
                    .map_err(|e| bad(e.to_string()))?,
            );
        }
        let risk_control = match doc.risk_control {
            None => None,
            Some(rc) => {
                if rc.loss_sums.len() != space.len() {
                    return Err(bad(
                        "risk-control curves do not match the covers".to_string()
                    ));
                }
                let preds = space
                    .covers()
                    .iter()
                    .zip(rc.loss_sums)
                    .map(|(c, curve)| {
                        RiskControlPredictor::from_curve(
                            c.clone(),
                            curve,
                            doc.n_calibration,
                            rc.alpha,
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| bad(e.to_string()))?;
                Some(RiskControlFamily::new(space.clone(), preds).map_err(|e| bad(e.to_string()))?)
            }
        };
        let family = PredictorFamily::new(space, predictors).map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            family,
            risk_control,
            metadata: doc.metadata,
        })
    }
}

pub fn save_model(model: &Model, t: &Taxonomy, path: &Path) -> Result<(), CliError> {
    let doc = model.to_doc(t);
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn parse_model(text: &str, t: &Taxonomy, path: &Path) -> Result<Model, CliError> {
    let doc: ModelDoc = serde_json::from_str(text)
        .map_err(|e| CliError::model(path, format!("cannot parse model: {e}")))?;
    Model::from_doc(doc, t, path)
}

pub fn load_model(path: &Path, t: &Taxonomy) -> Result<Model, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_model(&text, t, path)
}
