//! Metrics, default trade-off weight, data splits, β sweeps and a synthetic
//! benchmark generator.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::conformal::{CalibrationRecord, CoverFamily};
use crate::inference::{hcc_candidates, CostParams, InferenceError, PipelineOptions};
use crate::nodeset::NodeSet;
use crate::propagation::{LeafScores, SimplexPolicy};
use crate::taxonomy::{NodeId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{predictions} predictions but {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("nothing to evaluate")]
    EmptyRun,
    #[error("taxonomy has no internal node")]
    NoInternalNode,
    #[error("split ratio {ratio} is outside (0, 1)")]
    InvalidRatio { ratio: f64 },
    #[error("{n} records cannot fill both sides of a {ratio} split")]
    TooFewRecords { n: usize, ratio: f64 },
    #[error("beta sweep needs at least one value")]
    EmptySweep,
    #[error("node {node:?} is not a leaf")]
    NotALeaf { node: NodeId },
    #[error("synthetic config: {0}")]
    InvalidSynth(&'static str),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Panics on an empty slice.
    pub fn of(xs: &[f64]) -> Self {
        assert!(!xs.is_empty());
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            mean,
            sd: libm::sqrt(var),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub coverage: MeanSd,
    pub cost: MeanSd,
    pub ps_size: MeanSd,
    pub covered_leaves: MeanSd,
    pub n_test: usize,
}

/// Inverse median number of covered leaves over internal nodes, root
/// included. An even count uses the mean of the two central values.
pub fn default_beta(t: &Taxonomy) -> Result<f64, EvalError> {
    let mut sizes: Vec<usize> = t
        .nodes()
        .filter(|&v| !t.is_leaf(v))
        .map(|v| t.leaf_cover_of(v).len())
        .collect();
    if sizes.is_empty() {
        return Err(EvalError::NoInternalNode);
    }
    sizes.sort_unstable();
    let mid = sizes.len() / 2;
    let median = if sizes.len() % 2 == 1 {
        sizes[mid] as f64
    } else {
        (sizes[mid - 1] + sizes[mid]) as f64 / 2.0
    };
    Ok(1.0 / median)
}

/// Whether the true leaf lies below the prediction.
pub fn coverage_indicator(
    t: &Taxonomy,
    prediction: &NodeSet,
    truth_leaf: NodeId,
) -> Result<bool, EvalError> {
    if t.check_node(truth_leaf).is_err() || !t.is_leaf(truth_leaf) {
        return Err(EvalError::NotALeaf { node: truth_leaf });
    }
    Ok(prediction
        .iter()
        .any(|v| t.leaf_cover_of(v).contains(truth_leaf)))
}

pub fn evaluate_run(
    t: &Taxonomy,
    predictions: &[NodeSet],
    truths: &[NodeId],
    beta: f64,
) -> Result<Metrics, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let cp = CostParams::new(beta)?;
    let n = predictions.len();
    let mut coverage = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);
    let mut size = Vec::with_capacity(n);
    let mut leaves = Vec::with_capacity(n);
    for (p, &y) in predictions.iter().zip(truths) {
        t.check_set(p).map_err(InferenceError::from)?;
        let covered = t.leaf_cover(p).map_err(InferenceError::from)?.len();
        coverage.push(if coverage_indicator(t, p, y)? {
            1.0
        } else {
            0.0
        });
        cost.push(p.len() as f64 + cp.beta() * covered as f64);
        size.push(p.len() as f64);
        leaves.push(covered as f64);
    }
    Ok(Metrics {
        coverage: MeanSd::of(&coverage),
        cost: MeanSd::of(&cost),
        ps_size: MeanSd::of(&size),
        covered_leaves: MeanSd::of(&leaves),
        n_test: n,
    })
}

/// Seeded shuffle of `0..n`, split into `floor(n·ratio)` calibration indices
/// and the rest. Each side is returned in ascending order.
pub fn split_indices(
    n: usize,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EvalError::InvalidRatio { ratio });
    }
    let x = n as f64 * ratio;
    let n_cal = libm::floor(x + 1e-9 * x.max(1.0)) as usize;
    if n_cal == 0 || n_cal >= n {
        return Err(EvalError::TooFewRecords { n, ratio });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx.split_off(n_cal);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((idx, test))
}

pub fn split_data<T: Clone>(
    records: &[T],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), EvalError> {
    let (cal, test) = split_indices(records.len(), ratio, seed)?;
    Ok((
        cal.into_iter().map(|i| records[i].clone()).collect(),
        test.into_iter().map(|i| records[i].clone()).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    pub metrics: Metrics,
}

/// Re-selects HCC predictions for each `β`. Candidates are computed once per
/// test instance since only the cost depends on `β`.
pub fn sweep_beta<F: CoverFamily>(
    fam: &F,
    t: &Taxonomy,
    test: &[CalibrationRecord],
    alpha: f64,
    betas: &[f64],
    opts: PipelineOptions,
) -> Result<Vec<SweepRow>, EvalError> {
    if betas.is_empty() {
        return Err(EvalError::EmptySweep);
    }
    let costs = betas
        .iter()
        .map(|&b| CostParams::new(b))
        .collect::<Result<Vec<_>, _>>()?;
    let candidates = test
        .iter()
        .map(|r| hcc_candidates(fam, t, &r.scores, alpha, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let truths: Vec<NodeId> = test.iter().map(|r| r.truth.true_leaf()).collect();
    costs
        .iter()
        .map(|&cp| {
            let preds: Vec<NodeSet> = candidates.iter().map(|c| c.select(cp).selected).collect();
            Ok(SweepRow {
                beta: cp.beta(),
                metrics: evaluate_run(t, &preds, &truths, cp.beta())?,
            })
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties. A constant series
/// has no rank variation and yields 0.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let mx = MeanSd::of(&rx);
    let my = MeanSd::of(&ry);
    if mx.sd == 0.0 || my.sd == 0.0 {
        return 0.0;
    }
    let cov = rx
        .iter()
        .zip(&ry)
        .map(|(a, b)| (a - mx.mean) * (b - my.mean))
        .sum::<f64>()
        / rx.len() as f64;
    cov / (mx.sd * my.sd)
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Settings for [`synth_generate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    /// Logit boost on the true leaf.
    pub signal: f64,
    /// Scale of the Gaussian logit noise.
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub scores: LeafScores,
    pub true_leaf: NodeId,
}

/// Exchangeable instances: a uniform true leaf and softmax scores of
/// `signal·onehot(truth) + noise·N(0, I)`.
pub fn synth_generate(t: &Taxonomy, cfg: &SynthConfig) -> Result<Vec<SynthInstance>, EvalError> {
    if cfg.n == 0 {
        return Err(EvalError::InvalidSynth("n must be at least 1"));
    }
    if !(cfg.signal >= 0.0 && cfg.signal.is_finite()) {
        return Err(EvalError::InvalidSynth(
            "signal must be finite and nonnegative",
        ));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(EvalError::InvalidSynth(
            "noise must be finite and nonnegative",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = t.num_leaves();
    let mut logits = alloc::vec![0.0; k];
    let mut out = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let truth = rng.random_range(0..k);
        for (j, l) in logits.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *l = cfg.noise * z + if j == truth { cfg.signal } else { 0.0 };
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
        let sum: f64 = exps.iter().sum();
        let values = exps.into_iter().map(|e| e / sum).collect();
        let scores = LeafScores::new(t, values, format!("s{i}"), SimplexPolicy::Reject)
            .expect("softmax output is a probability vector");
        out.push(SynthInstance {
            scores,
            true_leaf: t.leaves()[truth],
        });
    }
    Ok(out)
}
