//! Lifting leaf scores and leaf labels to every node of the hierarchy.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::covers::NolCover;
use crate::nodeset::NodeSet;
use crate::taxonomy::{NodeId, Taxonomy};

/// Allowed deviation of a score vector's sum from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("expected {expected} leaf scores, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("score {value} in leaf column {column} is outside [0, 1]")]
    OutOfRange { column: usize, value: f64 },
    #[error("leaf scores sum to {sum}, not 1 (tolerance {SIMPLEX_TOLERANCE})")]
    NotSimplex { sum: f64 },
    #[error("leaf scores sum to zero and cannot be renormalized")]
    ZeroMass,
    #[error("node `{name}` is not a leaf")]
    NotALeaf { name: String },
}

/// What to do with a score vector whose sum drifts from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimplexPolicy {
    #[default]
    Reject,
    /// Divide by the sum (scores must still be finite and nonnegative).
    Renormalize,
}

/// Base-classifier output for one instance, aligned to the taxonomy's leaf order.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafScores {
    values: Vec<f64>,
    instance_id: String,
}

impl LeafScores {
    pub fn new(
        t: &Taxonomy,
        values: Vec<f64>,
        instance_id: impl Into<String>,
        policy: SimplexPolicy,
    ) -> Result<Self, ScoreError> {
        if values.len() != t.num_leaves() {
            return Err(ScoreError::LengthMismatch {
                expected: t.num_leaves(),
                found: values.len(),
            });
        }
        let mut values = values;
        let upper = match policy {
            SimplexPolicy::Reject => 1.0,
            SimplexPolicy::Renormalize => f64::INFINITY,
        };
        for (column, &value) in values.iter().enumerate() {
            if !(0.0..=upper).contains(&value) {
                return Err(ScoreError::OutOfRange { column, value });
            }
        }
        let sum: f64 = values.iter().sum();
        match policy {
            SimplexPolicy::Reject => {
                if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                    return Err(ScoreError::NotSimplex { sum });
                }
            }
            SimplexPolicy::Renormalize => {
                if sum <= 0.0 {
                    return Err(ScoreError::ZeroMass);
                }
                for v in &mut values {
                    *v /= sum;
                }
            }
        }
        Ok(Self {
            values,
            instance_id: instance_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }

    /// Highest-scoring leaf; ties go to the earliest leaf column.
    pub fn top_leaf(&self, t: &Taxonomy) -> NodeId {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        t.leaves()[best]
    }
}

/// Per-node scores: each node carries the summed score of its leaf cover.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedScores {
    values: Vec<f64>,
}

impl PropagatedScores {
    pub fn get(&self, node: NodeId) -> f64 {
        self.values[node.index()]
    }

    /// Node-aligned values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn propagate_scores(t: &Taxonomy, scores: &LeafScores) -> Result<PropagatedScores, ScoreError> {
    if scores.values.len() != t.num_leaves() {
        return Err(ScoreError::LengthMismatch {
            expected: t.num_leaves(),
            found: scores.values.len(),
        });
    }
    let values = t
        .nodes()
        .map(|v| {
            t.leaf_cover_of(v)
                .iter()
                .map(|leaf| scores.values[t.leaf_column(leaf).expect("leaf has a column")])
                .sum()
        })
        .collect();
    Ok(PropagatedScores { values })
}

/// Hierarchical ground truth: the true leaf and every node whose leaf cover
/// contains it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    true_leaf: NodeId,
    ancestor_set: NodeSet,
}

impl GroundTruth {
    pub fn true_leaf(&self) -> NodeId {
        self.true_leaf
    }

    pub fn ancestor_set(&self) -> &NodeSet {
        &self.ancestor_set
    }

    pub fn is_true(&self, node: NodeId) -> bool {
        self.ancestor_set.contains(node)
    }
}

pub fn propagated_label_set(t: &Taxonomy, true_leaf: NodeId) -> Result<GroundTruth, ScoreError> {
    if t.check_node(true_leaf).is_err() || !t.is_leaf(true_leaf) {
        let name = if t.check_node(true_leaf).is_ok() {
            String::from(t.name(true_leaf))
        } else {
            alloc::format!("{true_leaf:?}")
        };
        return Err(ScoreError::NotALeaf { name });
    }
    let mut ancestor_set = t.ancestors(true_leaf).clone();
    ancestor_set.insert(true_leaf);
    Ok(GroundTruth {
        true_leaf,
        ancestor_set,
    })
}

/// Bit `j` is set iff the `j`-th cover member is a true node.
pub fn label_indicator(cover: &NolCover, truth: &GroundTruth) -> Vec<bool> {
    let bits: Vec<bool> = cover.members().iter().map(|&v| truth.is_true(v)).collect();
    assert!(
        bits.iter().any(|&b| b),
        "a NOL-cover always contains an ancestor of the true leaf"
    );
    bits
}
