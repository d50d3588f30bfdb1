//! End-to-end HCC inference: prune the cover space per instance, correct the
//! error level, query every surviving predictor and keep the cheapest set.

use alloc::vec::Vec;

use thiserror::Error;

use crate::conformal::{
    check_alpha, pad_if_empty, ConformalError, CoverFamily, CoverSetPredictor, PredictorFamily,
};
use crate::nodeset::NodeSet;
use crate::propagation::{propagate_scores, LeafScores, PropagatedScores, ScoreError};
use crate::taxonomy::{Taxonomy, TaxonomyError};

/// Costs closer than this are treated as equal during selection.
pub const COST_TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("beta must be a finite nonnegative number, got {beta}")]
    InvalidBeta { beta: f64 },
    #[error("Bonferroni correction needs at least one hypothesis")]
    NoHypotheses,
    #[error("prediction set is empty")]
    EmptySet,
    #[error("method hcc-crc needs a risk-control calibration")]
    MissingRiskControl,
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// Trade-off weight of the cost `|N| + β·|leaf cover of N|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    beta: f64,
}

impl CostParams {
    pub fn new(beta: f64) -> Result<Self, InferenceError> {
        if beta.is_finite() && beta >= 0.0 {
            Ok(Self { beta })
        } else {
            Err(InferenceError::InvalidBeta { beta })
        }
    }

    pub fn beta(self) -> f64 {
        self.beta
    }
}

/// `|s| + β·|leaf_cover(s)|`. Panics if `s` does not belong to `t`.
pub fn set_cost(t: &Taxonomy, s: &NodeSet, cp: CostParams) -> f64 {
    let leaves = t.leaf_cover(s).expect("set belongs to the taxonomy").len();
    cost_of(s.len(), leaves, cp)
}

fn cost_of(nodes: usize, leaves: usize, cp: CostParams) -> f64 {
    nodes as f64 + cp.beta * leaves as f64
}

pub fn bonferroni(alpha: f64, m: usize) -> Result<f64, InferenceError> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(InferenceError::NoHypotheses);
    }
    Ok(alpha / m as f64)
}

/// Cover ids that survive instance-level pruning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneOutcome {
    /// Surviving cover ids, ascending.
    pub survivors: Vec<usize>,
    /// Survivor count before covers sharing the LCA set were merged.
    pub m_before_collapse: usize,
    /// LCA set of the probe, `None` when the probe was empty and nothing was pruned.
    pub lca: Option<NodeSet>,
}

impl PruneOutcome {
    pub fn m_effective(&self) -> usize {
        self.survivors.len()
    }

    fn unpruned(n: usize) -> Self {
        Self {
            survivors: (0..n).collect(),
            m_before_collapse: n,
            lca: None,
        }
    }
}

/// Drops every cover holding a strict ancestor of the probe's LCA set, then
/// keeps only the lowest-id cover among those containing the whole LCA set.
/// The all-leaves cover always survives. An empty probe prunes nothing.
pub fn dynamic_prune<F: CoverFamily>(
    fam: &F,
    t: &Taxonomy,
    leaf_set: &NodeSet,
) -> Result<PruneOutcome, InferenceError> {
    fam.check_taxonomy(t)?;
    let space = fam.space();
    if leaf_set.is_empty() {
        return Ok(PruneOutcome::unpruned(space.len()));
    }
    let lca = t.lca_set(leaf_set)?;
    let mut above = t.empty_set();
    for v in lca.iter() {
        above.union_with(t.ancestors(v));
    }
    let leaf_id = space.leaf_cover_id();
    let kept: Vec<usize> = space
        .covers()
        .iter()
        .filter(|c| c.id() == leaf_id || c.member_set().is_disjoint(&above))
        .map(|c| c.id())
        .collect();
    let m_before_collapse = kept.len();
    let mut representative_seen = false;
    let survivors = kept
        .into_iter()
        .filter(|&id| {
            let holds_lca = lca.is_subset(space.covers()[id].member_set());
            if !holds_lca || id == leaf_id {
                return true;
            }
            !core::mem::replace(&mut representative_seen, true)
        })
        .collect();
    Ok(PruneOutcome {
        survivors,
        m_before_collapse,
        lca: Some(lca),
    })
}

/// Switches for the ablations of the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    pub prune: bool,
    pub correct: bool,
    pub pad_empty: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            prune: true,
            correct: true,
            pad_empty: false,
        }
    }
}

/// Selected set plus the audit trail of how it was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct HccPrediction {
    pub selected: NodeSet,
    pub cost: f64,
    pub covered_leaves: NodeSet,
    /// Number of predictors queried, which is also the Bonferroni divisor.
    pub m_effective: usize,
    pub m_before_collapse: usize,
    pub alpha_corrected: f64,
    /// Candidates whose prediction set was nonempty.
    pub candidates_evaluated: usize,
    /// Covers removed or merged away by pruning.
    pub pruned: usize,
    pub selected_cover_id: usize,
    /// Every candidate was empty and the leaf-level set was returned.
    pub fallback: bool,
    /// Leaf-level set at the uncorrected level, used to drive pruning.
    pub leaf_set: NodeSet,
}

/// One nonempty candidate set produced by a surviving predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub cover_id: usize,
    pub set: NodeSet,
    pub covered_leaves: NodeSet,
}

/// Everything HCC computes before the cost is applied. Selection can be
/// repeated for any number of `β` values without re-querying predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub candidates: Vec<Candidate>,
    pub leaf_set: NodeSet,
    leaf_covered: NodeSet,
    leaf_cover_id: usize,
    pub m_effective: usize,
    pub m_before_collapse: usize,
    pub alpha_corrected: f64,
    pub pruned: usize,
}

impl Candidates {
    /// Cheapest candidate. Costs within [`COST_TIE_EPSILON`] tie and are
    /// broken by fewer covered leaves, then fewer nodes, then lower cover id.
    /// Falls back to the leaf-level set when no candidate is nonempty.
    pub fn select(&self, cp: CostParams) -> HccPrediction {
        let key = |c: &Candidate| {
            let leaves = c.covered_leaves.len();
            (
                cost_of(c.set.len(), leaves, cp),
                leaves,
                c.set.len(),
                c.cover_id,
            )
        };
        type Key = (f64, usize, usize, usize);
        let mut best: Option<(&Candidate, Key)> = None;
        for c in &self.candidates {
            let k = key(c);
            let better = match &best {
                None => true,
                Some((_, b)) => {
                    if (k.0 - b.0).abs() > COST_TIE_EPSILON {
                        k.0 < b.0
                    } else {
                        (k.1, k.2, k.3) < (b.1, b.2, b.3)
                    }
                }
            };
            if better {
                best = Some((c, k));
            }
        }
        let (selected, covered_leaves, cost, selected_cover_id, fallback) = match best {
            Some((c, k)) => (
                c.set.clone(),
                c.covered_leaves.clone(),
                k.0,
                c.cover_id,
                false,
            ),
            None => (
                self.leaf_set.clone(),
                self.leaf_covered.clone(),
                cost_of(self.leaf_set.len(), self.leaf_covered.len(), cp),
                self.leaf_cover_id,
                true,
            ),
        };
        HccPrediction {
            selected,
            cost,
            covered_leaves,
            m_effective: self.m_effective,
            m_before_collapse: self.m_before_collapse,
            alpha_corrected: self.alpha_corrected,
            candidates_evaluated: self.candidates.len(),
            pruned: self.pruned,
            selected_cover_id,
            fallback,
            leaf_set: self.leaf_set.clone(),
        }
    }
}

/// Steps (a) to (e) of HCC: probe at `alpha`, prune, correct, and collect
/// the nonempty prediction set of every survivor.
pub fn hcc_candidates<F: CoverFamily>(
    fam: &F,
    t: &Taxonomy,
    ps: &PropagatedScores,
    alpha: f64,
    opts: PipelineOptions,
) -> Result<Candidates, InferenceError> {
    fam.check_taxonomy(t)?;
    check_alpha(alpha)?;
    let predictors = fam.predictors();
    let space = fam.space();
    let leaf_set = fam.leaf_predictor().predict_set(ps, alpha)?;

    let outcome = if opts.prune {
        dynamic_prune(fam, t, &leaf_set)?
    } else {
        PruneOutcome::unpruned(space.len())
    };
    let m = outcome.m_effective();
    let alpha_corrected = if opts.correct {
        bonferroni(alpha, m)?
    } else {
        alpha
    };

    let mut candidates = Vec::new();
    for &id in &outcome.survivors {
        let p = &predictors[id];
        let mut set = p.predict_set(ps, alpha_corrected)?;
        if opts.pad_empty {
            pad_if_empty(&mut set, p.cover(), ps);
        }
        if !set.is_empty() {
            let covered_leaves = t.leaf_cover(&set)?;
            candidates.push(Candidate {
                cover_id: id,
                set,
                covered_leaves,
            });
        }
    }
    Ok(Candidates {
        candidates,
        leaf_covered: t.leaf_cover(&leaf_set)?,
        leaf_set,
        leaf_cover_id: space.leaf_cover_id(),
        m_effective: m,
        m_before_collapse: outcome.m_before_collapse,
        alpha_corrected,
        pruned: space.len() - m,
    })
}

/// The HCC pipeline over any calibrated family, starting from propagated
/// scores.
pub fn hcc_pipeline<F: CoverFamily>(
    fam: &F,
    t: &Taxonomy,
    ps: &PropagatedScores,
    alpha: f64,
    cp: CostParams,
    opts: PipelineOptions,
) -> Result<HccPrediction, InferenceError> {
    Ok(hcc_candidates(fam, t, ps, alpha, opts)?.select(cp))
}

pub fn hcc_predict(
    fam: &PredictorFamily,
    t: &Taxonomy,
    ls: &LeafScores,
    alpha: f64,
    cp: CostParams,
) -> Result<HccPrediction, InferenceError> {
    let ps = propagate_scores(t, ls)?;
    hcc_pipeline(fam, t, &ps, alpha, cp, PipelineOptions::default())
}
