//! Reference predictors, pipeline ablations and the risk-control variant.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::conformal::{
    check_alpha, pad_if_empty, CalibrationRecord, ConformalError, CoverFamily, CoverSetPredictor,
    PredictorFamily,
};
use crate::covers::{CoverError, CoverSpace, NolCover};
use crate::inference::{hcc_pipeline, CostParams, HccPrediction, InferenceError, PipelineOptions};
use crate::nodeset::NodeSet;
use crate::propagation::{label_indicator, propagate_scores, LeafScores, PropagatedScores};
use crate::taxonomy::{NodeId, Taxonomy};

/// Leaf-level split-conformal set at `alpha`.
pub fn standard_cp_predict<F: CoverFamily>(
    fam: &F,
    ps: &PropagatedScores,
    alpha: f64,
) -> Result<NodeSet, ConformalError> {
    fam.leaf_predictor().predict_set(ps, alpha)
}

/// LCA set of a nonempty leaf set.
pub fn lca_baseline_predict(t: &Taxonomy, leaf_set: &NodeSet) -> Result<NodeSet, InferenceError> {
    if leaf_set.is_empty() {
        return Err(InferenceError::EmptySet);
    }
    Ok(t.lca_set(leaf_set)?)
}

/// Highest propagated score among the leaves; ties go to the first leaf column.
pub fn top_leaf(t: &Taxonomy, ps: &PropagatedScores) -> NodeId {
    let mut best = t.leaves()[0];
    for &leaf in &t.leaves()[1..] {
        if ps.get(leaf) > ps.get(best) {
            best = leaf;
        }
    }
    best
}

/// HCC with one Bonferroni correction over the whole space for every instance.
pub fn hcc_no_pruning_predict(
    fam: &PredictorFamily,
    t: &Taxonomy,
    ls: &LeafScores,
    alpha: f64,
    cp: CostParams,
) -> Result<HccPrediction, InferenceError> {
    let ps = propagate_scores(t, ls)?;
    let opts = PipelineOptions {
        prune: false,
        ..PipelineOptions::default()
    };
    hcc_pipeline(fam, t, &ps, alpha, cp, opts)
}

/// HCC querying every surviving predictor at the uncorrected level.
pub fn hcc_no_correction_predict(
    fam: &PredictorFamily,
    t: &Taxonomy,
    ls: &LeafScores,
    alpha: f64,
    cp: CostParams,
) -> Result<HccPrediction, InferenceError> {
    let ps = propagate_scores(t, ls)?;
    let opts = PipelineOptions {
        correct: false,
        ..PipelineOptions::default()
    };
    hcc_pipeline(fam, t, &ps, alpha, cp, opts)
}

/// Number of grid steps on `[0, 1]` for the risk-control threshold.
pub const LAMBDA_STEPS: usize = 1000;

/// Inclusion threshold `1 − λ_j` for grid index `j`.
pub fn lambda_threshold(j: usize) -> f64 {
    1.0 - lambda_value(j)
}

pub fn lambda_value(j: usize) -> f64 {
    j as f64 / LAMBDA_STEPS as f64
}

/// Risk-control predictor for one cover under the `1 − recall` loss.
///
/// Keeps the summed calibration loss at every grid point so a threshold can
/// be chosen for any requested level.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskControlPredictor {
    cover: NolCover,
    loss_sums: Vec<f64>,
    n_calibration: usize,
    alpha: f64,
    lambda_index: usize,
    feasible: bool,
}

impl RiskControlPredictor {
    /// Rebuilds a predictor from a stored loss curve.
    pub fn from_curve(
        cover: NolCover,
        loss_sums: Vec<f64>,
        n_calibration: usize,
        alpha: f64,
    ) -> Result<Self, ConformalError> {
        check_alpha(alpha)?;
        let malformed = |reason| ConformalError::MalformedCalibration {
            cover: cover.id(),
            reason,
        };
        if n_calibration == 0 {
            return Err(ConformalError::EmptyCalibration);
        }
        if loss_sums.len() != LAMBDA_STEPS + 1 {
            return Err(malformed("loss curve has the wrong length"));
        }
        if loss_sums
            .iter()
            .any(|l| !l.is_finite() || *l < 0.0 || *l > n_calibration as f64)
        {
            return Err(malformed("loss outside [0, n]"));
        }
        if loss_sums.windows(2).any(|w| w[1] > w[0]) {
            return Err(malformed("loss curve is not non-increasing"));
        }
        let mut p = Self {
            cover,
            loss_sums,
            n_calibration,
            alpha,
            lambda_index: LAMBDA_STEPS,
            feasible: false,
        };
        (p.lambda_index, p.feasible) = p.lambda_index_at(alpha);
        Ok(p)
    }

    pub fn cover(&self) -> &NolCover {
        &self.cover
    }

    pub fn loss_sums(&self) -> &[f64] {
        &self.loss_sums
    }

    pub fn n_calibration(&self) -> usize {
        self.n_calibration
    }

    /// Level the predictor was calibrated at.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda_hat(&self) -> f64 {
        lambda_value(self.lambda_index)
    }

    /// False when no grid point met the bound and `λ = 1` was used.
    pub fn feasible(&self) -> bool {
        self.feasible
    }

    /// Mean calibration loss at grid index `j`.
    pub fn mean_loss(&self, j: usize) -> f64 {
        self.loss_sums[j] / self.n_calibration as f64
    }

    /// Smallest grid index whose bound `(n·mean + 1)/(n + 1)` is at most
    /// `alpha`, with a feasibility flag.
    pub fn lambda_index_at(&self, alpha: f64) -> (usize, bool) {
        let n = self.n_calibration as f64;
        let bound = |j: usize| (n / (n + 1.0)) * self.mean_loss(j) + 1.0 / (n + 1.0);
        let first = first_grid_index(|j| bound(j) <= alpha);
        if first > LAMBDA_STEPS {
            (LAMBDA_STEPS, false)
        } else {
            (first, true)
        }
    }
}

/// Smallest grid index satisfying a predicate that is monotone in the index,
/// or `LAMBDA_STEPS + 1` when none does.
fn first_grid_index(mut ok: impl FnMut(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, LAMBDA_STEPS + 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

fn recall_loss_curve(cover: &NolCover, records: &[CalibrationRecord]) -> Vec<f64> {
    // recall gained at each grid index, summed over records
    let mut gain = vec![0.0; LAMBDA_STEPS + 2];
    for r in records {
        let ind = label_indicator(cover, &r.truth);
        let total = ind.iter().filter(|&&b| b).count() as f64;
        for (&v, &is_true) in cover.members().iter().zip(&ind) {
            if is_true {
                let g = r.scores.get(v);
                gain[first_grid_index(|j| lambda_threshold(j) <= g)] += 1.0 / total;
            }
        }
    }
    let n = records.len() as f64;
    let mut recalled = 0.0;
    gain[..=LAMBDA_STEPS]
        .iter()
        .map(|g| {
            recalled += g;
            (n - recalled).max(0.0)
        })
        .collect()
}

pub fn crc_recall_calibrate(
    t: &Taxonomy,
    cover: &NolCover,
    records: &[CalibrationRecord],
    alpha: f64,
) -> Result<RiskControlPredictor, ConformalError> {
    if cover.member_set().capacity() != t.len() {
        return Err(ConformalError::MalformedCalibration {
            cover: cover.id(),
            reason: "cover does not belong to this taxonomy",
        });
    }
    if records.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    RiskControlPredictor::from_curve(
        cover.clone(),
        recall_loss_curve(cover, records),
        records.len(),
        alpha,
    )
}

/// Members with `ĝ ≥ 1 − λ̂` at the calibrated level.
pub fn crc_recall_predict(p: &RiskControlPredictor, ps: &PropagatedScores) -> NodeSet {
    select_at_index(&p.cover, ps, p.lambda_index)
}

fn select_at_index(cover: &NolCover, ps: &PropagatedScores, j: usize) -> NodeSet {
    let tau = lambda_threshold(j);
    let mut set = NodeSet::empty(cover.member_set().capacity());
    for &v in cover.members() {
        if ps.get(v) >= tau {
            set.insert(v);
        }
    }
    set
}

impl CoverSetPredictor for RiskControlPredictor {
    fn cover(&self) -> &NolCover {
        &self.cover
    }

    fn predict_set(&self, ps: &PropagatedScores, alpha: f64) -> Result<NodeSet, ConformalError> {
        check_alpha(alpha)?;
        let (j, _) = self.lambda_index_at(alpha);
        Ok(select_at_index(&self.cover, ps, j))
    }
}

/// Risk-control predictors for every cover of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskControlFamily {
    space: CoverSpace,
    predictors: Vec<RiskControlPredictor>,
}

impl RiskControlFamily {
    pub fn new(
        space: CoverSpace,
        predictors: Vec<RiskControlPredictor>,
    ) -> Result<Self, ConformalError> {
        if space.is_empty() {
            return Err(CoverError::EmptySpace.into());
        }
        if predictors.len() != space.len() {
            return Err(ConformalError::PredictorCount {
                expected: space.len(),
                found: predictors.len(),
            });
        }
        for (cover, p) in space.covers().iter().zip(&predictors) {
            if p.cover != *cover {
                return Err(ConformalError::MalformedCalibration {
                    cover: cover.id(),
                    reason: "predictor cover differs from the space",
                });
            }
        }
        Ok(Self { space, predictors })
    }
}

impl CoverFamily for RiskControlFamily {
    type Predictor = RiskControlPredictor;

    fn space(&self) -> &CoverSpace {
        &self.space
    }

    fn predictors(&self) -> &[RiskControlPredictor] {
        &self.predictors
    }
}

pub fn crc_calibrate_family(
    t: &Taxonomy,
    space: &CoverSpace,
    records: &[CalibrationRecord],
    alpha: f64,
) -> Result<RiskControlFamily, ConformalError> {
    space.check_taxonomy(t)?;
    let predictors = space
        .covers()
        .iter()
        .map(|c| crc_recall_calibrate(t, c, records, alpha))
        .collect::<Result<Vec<_>, _>>()?;
    RiskControlFamily::new(space.clone(), predictors)
}

/// Prediction method exposed to users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Standard,
    Lca,
    Hcc,
    HccNoPrune,
    HccNoCorrection,
    HccCrc,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Standard,
        Method::Lca,
        Method::Hcc,
        Method::HccNoPrune,
        Method::HccNoCorrection,
        Method::HccCrc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::Lca => "lca",
            Method::Hcc => "hcc",
            Method::HccNoPrune => "hcc-no-prune",
            Method::HccNoCorrection => "hcc-no-correction",
            Method::HccCrc => "hcc-crc",
        }
    }

    pub fn needs_risk_control(self) -> bool {
        self == Method::HccCrc
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownMethod;

impl fmt::Display for UnknownMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected one of standard, lca, hcc, hcc-no-prune, hcc-no-correction, hcc-crc")
    }
}

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or(UnknownMethod)
    }
}

/// Calibrated state needed to run any [`Method`].
#[derive(Debug, Clone, Copy)]
pub struct Models<'a> {
    pub conformal: &'a PredictorFamily,
    /// Required only by [`Method::HccCrc`].
    pub risk_control: Option<&'a RiskControlFamily>,
}

/// Runs one method on one instance. Baselines report `m_effective = 1` and
/// the uncorrected level; the LCA baseline flags `fallback` when the leaf set
/// was empty and the top-scoring leaf was used instead.
pub fn predict_with(
    method: Method,
    models: Models<'_>,
    t: &Taxonomy,
    ps: &PropagatedScores,
    alpha: f64,
    cp: CostParams,
    pad_empty: bool,
) -> Result<HccPrediction, InferenceError> {
    let base = PipelineOptions {
        pad_empty,
        ..PipelineOptions::default()
    };
    match method {
        Method::Standard | Method::Lca => {
            let fam = models.conformal;
            fam.check_taxonomy(t)?;
            let leaf_set = standard_cp_predict(fam, ps, alpha)?;
            let mut selected = leaf_set.clone();
            if pad_empty {
                pad_if_empty(&mut selected, fam.leaf_predictor().cover(), ps);
            }
            let mut fallback = false;
            if method == Method::Lca {
                selected = if selected.is_empty() {
                    fallback = true;
                    t.node_set([top_leaf(t, ps)])
                } else {
                    lca_baseline_predict(t, &selected)?
                };
            }
            let covered_leaves = t.leaf_cover(&selected)?;
            Ok(HccPrediction {
                cost: selected.len() as f64 + cp.beta() * covered_leaves.len() as f64,
                selected,
                covered_leaves,
                m_effective: 1,
                m_before_collapse: 1,
                alpha_corrected: alpha,
                candidates_evaluated: 1,
                pruned: 0,
                selected_cover_id: fam.leaf_predictor_id(),
                fallback,
                leaf_set,
            })
        }
        Method::Hcc => hcc_pipeline(models.conformal, t, ps, alpha, cp, base),
        Method::HccNoPrune => hcc_pipeline(
            models.conformal,
            t,
            ps,
            alpha,
            cp,
            PipelineOptions {
                prune: false,
                ..base
            },
        ),
        Method::HccNoCorrection => hcc_pipeline(
            models.conformal,
            t,
            ps,
            alpha,
            cp,
            PipelineOptions {
                correct: false,
                ..base
            },
        ),
        Method::HccCrc => {
            let fam = models
                .risk_control
                .ok_or(InferenceError::MissingRiskControl)?;
            hcc_pipeline(fam, t, ps, alpha, cp, base)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{calibrate_family, predict_cover, threshold_at, CoverPredictor};
    use crate::covers::{enumerate_nol_covers, EnumerationOptions};
    use crate::fixtures;
    use crate::propagation::SimplexPolicy;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DISH_SCORES: [f64; 7] = [0.05, 0.05, 0.10, 0.40, 0.25, 0.10, 0.05];

    fn names(t: &Taxonomy, ns: &[&str]) -> NodeSet {
        t.node_set_by_name(ns.iter().copied()).unwrap()
    }

    fn scores(t: &Taxonomy, v: Vec<f64>) -> PropagatedScores {
        propagate_scores(
            t,
            &LeafScores::new(t, v, "x", SimplexPolicy::Renormalize).unwrap(),
        )
        .unwrap()
    }

    fn random_scores(t: &Taxonomy, rng: &mut ChaCha8Rng) -> LeafScores {
        let raw: Vec<f64> = (0..t.num_leaves())
            .map(|_| rng.random::<f64>().powi(3) + 1e-3)
            .collect();
        LeafScores::new(t, raw, "r", SimplexPolicy::Renormalize).unwrap()
    }

    fn records(t: &Taxonomy, rng: &mut ChaCha8Rng, n: usize) -> Vec<CalibrationRecord> {
        (0..n)
            .map(|_| {
                let ls = random_scores(t, rng);
                let leaf = t.leaves()[rng.random_range(0..t.num_leaves())];
                CalibrationRecord::new(t, &ls, leaf).unwrap()
            })
            .collect()
    }

    /// A leaf-only family whose threshold at alpha = 0.5 is `tau`.
    fn leaf_family(t: &Taxonomy, tau: f64) -> PredictorFamily {
        let space = CoverSpace::from_sets(
            t,
            vec![t.leaf_set().clone()],
            crate::covers::CoverMode::Custom,
        )
        .unwrap();
        let p = CoverPredictor::from_sorted(space.covers()[0].clone(), vec![tau]).unwrap();
        PredictorFamily::new(space, vec![p]).unwrap()
    }

    #[test]
    fn standard_cp_examples() {
        let t = fixtures::dish();
        let fam = leaf_family(&t, 0.2);
        assert_eq!(threshold_at(&fam.predictors()[0], 0.5).unwrap(), 0.2);
        let ps = scores(&t, DISH_SCORES.to_vec());
        assert_eq!(
            standard_cp_predict(&fam, &ps, 0.5).unwrap(),
            names(&t, &["Caesar salad", "cheese sandwich"])
        );
        assert_eq!(standard_cp_predict(&fam, &ps, 0.0).unwrap(), *t.leaf_set());
        let mut onehot = vec![0.0; 7];
        onehot[3] = 1.0;
        let ps = scores(&t, onehot);
        for tau in [0.01, 0.5, 1.0] {
            let fam = leaf_family(&t, tau);
            assert_eq!(
                standard_cp_predict(&fam, &ps, 0.5).unwrap(),
                names(&t, &["Caesar salad"])
            );
        }
    }

    #[test]
    fn lca_examples() {
        let t = fixtures::dish();
        assert_eq!(
            lca_baseline_predict(&t, &names(&t, &["Caesar salad", "cheese sandwich"])).unwrap(),
            names(&t, &["lunch"])
        );
        assert_eq!(
            lca_baseline_predict(&t, &names(&t, &["Caesar salad"])).unwrap(),
            names(&t, &["Caesar salad"])
        );
        assert_eq!(
            lca_baseline_predict(&t, t.leaf_set()).unwrap(),
            names(&t, &["dish"])
        );
        assert_eq!(
            lca_baseline_predict(&t, &t.empty_set()).unwrap_err(),
            InferenceError::EmptySet
        );

        // empty standard set falls back to the top leaf
        let fam = leaf_family(&t, 0.9);
        let ps = scores(&t, DISH_SCORES.to_vec());
        let models = Models {
            conformal: &fam,
            risk_control: None,
        };
        let cp = CostParams::new(1.0).unwrap();
        let pred = predict_with(Method::Lca, models, &t, &ps, 0.5, cp, false).unwrap();
        assert!(pred.fallback);
        assert_eq!(pred.selected, names(&t, &["Caesar salad"]));
        let std = predict_with(Method::Standard, models, &t, &ps, 0.5, cp, false).unwrap();
        assert!(std.selected.is_empty());
        assert_eq!(std.cost, 0.0);
        let padded = predict_with(Method::Standard, models, &t, &ps, 0.5, cp, true).unwrap();
        assert_eq!(padded.selected, names(&t, &["Caesar salad"]));
        assert_eq!(
            predict_with(Method::HccCrc, models, &t, &ps, 0.5, cp, false).unwrap_err(),
            InferenceError::MissingRiskControl
        );
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("soup".parse::<Method>().is_err());
    }

    #[test]
    fn ablation_alpha() {
        let t = fixtures::dish();
        let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fam = calibrate_family(&t, &space, &records(&t, &mut rng, 60)).unwrap();
        let cp = CostParams::new(1.0 / 3.0).unwrap();
        for _ in 0..50 {
            let ls = random_scores(&t, &mut rng);
            let a = hcc_no_correction_predict(&fam, &t, &ls, 0.1, cp).unwrap();
            assert_eq!(a.alpha_corrected, 0.1);
            let b = hcc_no_pruning_predict(&fam, &t, &ls, 0.1, cp).unwrap();
            assert_eq!(b.m_effective, 11);
            assert!((b.alpha_corrected - 0.1 / 11.0).abs() < 1e-18);
        }
    }

    #[test]
    fn crc_loss_bounds() {
        let t = fixtures::dish();
        let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let recs = records(&t, &mut rng, 30);
        for c in space.covers() {
            let p = crc_recall_calibrate(&t, c, &recs, 0.1).unwrap();
            assert_eq!(p.mean_loss(LAMBDA_STEPS), 0.0);
            // the root scores 1, every other node scores below 1
            if c.members().len() > 1 {
                assert_eq!(p.mean_loss(0), 1.0);
            }
            assert!(p.loss_sums().windows(2).all(|w| w[1] <= w[0]));
            assert!(p.feasible());
            let ps = &recs[0].scores;
            assert_eq!(crc_recall_predict(&p, ps), p.predict_set(ps, 0.1).unwrap());
            assert_eq!(select_at_index(c, ps, LAMBDA_STEPS), *c.member_set());
        }
        let leaves = &space.covers()[space.leaf_cover_id()];
        let p = crc_recall_calibrate(&t, leaves, &recs, 0.01).unwrap();
        assert!(!p.feasible());
        assert_eq!(p.lambda_hat(), 1.0);
        assert!(crc_recall_calibrate(&t, leaves, &[], 0.1).is_err());
    }

    #[test]
    fn crc_multi_truth_loss() {
        let d = fixtures::diamond();
        let space = enumerate_nol_covers(&d, EnumerationOptions::default()).unwrap();
        let ab = space
            .covers()
            .iter()
            .find(|c| *c.member_set() == names(&d, &["A", "B"]))
            .unwrap();
        let ls = LeafScores::new(&d, vec![0.2, 0.5, 0.3], "x", SimplexPolicy::Reject).unwrap();
        let rec = CalibrationRecord::new(&d, &ls, d.id("y").unwrap()).unwrap();
        let p = crc_recall_calibrate(&d, ab, &[rec], 0.9).unwrap();
        // A = .7 enters at threshold .7 (j = 300), B = .8 at j = 200
        assert_eq!(p.loss_sums()[199], 1.0);
        assert_eq!(p.loss_sums()[200], 0.5);
        assert_eq!(p.loss_sums()[299], 0.5);
        assert_eq!(p.loss_sums()[300], 0.0);
    }

    proptest! {
        #[test]
        fn crc_tracks_split_cp_on_trees(seed in any::<u64>(), n in 2usize..=10, alpha in 0.05f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = fixtures::random_dag(&mut rng, n, 1);
            let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
            let recs = records(&t, &mut rng, 40);
            for c in space.covers() {
                let cp = crate::conformal::calibrate_cover(&t, c, &recs).unwrap();
                let tau = threshold_at(&cp, alpha).unwrap();
                let crc = crc_recall_calibrate(&t, c, &recs, alpha).unwrap();
                let crc_tau = lambda_threshold((crc.lambda_hat() * LAMBDA_STEPS as f64).round() as usize);
                prop_assert!(crc_tau <= tau + 1e-12);
                prop_assert!(crc_tau >= tau - 1e-3 - 1e-12);
            }
        }

        #[test]
        fn lca_on_trees(seed in any::<u64>(), n in 2usize..=12, alpha in 0.02f64..0.6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = fixtures::random_dag(&mut rng, n, 1);
            let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
            let fam = calibrate_family(&t, &space, &records(&t, &mut rng, 20)).unwrap();
            let models = Models { conformal: &fam, risk_control: None };
            let cp = CostParams::new(0.5).unwrap();
            for _ in 0..10 {
                let ps = propagate_scores(&t, &random_scores(&t, &mut rng)).unwrap();
                let std = predict_with(Method::Standard, models, &t, &ps, alpha, cp, false).unwrap();
                let lca = predict_with(Method::Lca, models, &t, &ps, alpha, cp, false).unwrap();
                prop_assert_eq!(lca.selected.len(), 1);
                prop_assert!(std.selected.is_subset(&lca.covered_leaves));
                prop_assert_eq!(std.selected.len(), std.covered_leaves.len());
            }
        }

        #[test]
        fn no_correction_sets_nest(seed in any::<u64>(), n in 2usize..=10, k in 1usize..=2, alpha in 0.02f64..0.6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = fixtures::random_dag(&mut rng, n, k);
            let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
            let fam = calibrate_family(&t, &space, &records(&t, &mut rng, 20)).unwrap();
            let ps = propagate_scores(&t, &random_scores(&t, &mut rng)).unwrap();
            let corrected = crate::inference::bonferroni(alpha, space.len()).unwrap();
            for p in fam.predictors() {
                let loose = predict_cover(p, &ps, alpha).unwrap();
                let strict = predict_cover(p, &ps, corrected).unwrap();
                prop_assert!(loose.is_subset(&strict));
            }
        }
    }
}
