//! Split-conformal calibration of one predictor per NOL-cover.

use alloc::vec::Vec;

use thiserror::Error;

use crate::covers::{CoverError, CoverSpace, NolCover};
use crate::nodeset::NodeSet;
use crate::propagation::{
    label_indicator, propagate_scores, propagated_label_set, GroundTruth, LeafScores,
    PropagatedScores, ScoreError,
};
use crate::taxonomy::{NodeId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConformalError {
    #[error("label indicator has no true member")]
    NoTrueMember,
    #[error("label indicator has {found} bits for a cover of {expected} members")]
    IndicatorLength { expected: usize, found: usize },
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("alpha {alpha} is outside [0, 1)")]
    AlphaOutOfRange { alpha: f64 },
    #[error("calibrated vector for cover {cover} is malformed: {reason}")]
    MalformedCalibration { cover: usize, reason: &'static str },
    #[error("family has {found} predictors for a space of {expected} covers")]
    PredictorCount { expected: usize, found: usize },
    #[error(transparent)]
    Cover(#[from] CoverError),
}

pub fn check_alpha(alpha: f64) -> Result<(), ConformalError> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(ConformalError::AlphaOutOfRange { alpha })
    }
}

/// Propagated scores and hierarchical truth of one calibration instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub scores: PropagatedScores,
    pub truth: GroundTruth,
}

impl CalibrationRecord {
    pub fn new(t: &Taxonomy, scores: &LeafScores, true_leaf: NodeId) -> Result<Self, ScoreError> {
        Ok(Self {
            scores: propagate_scores(t, scores)?,
            truth: propagated_label_set(t, true_leaf)?,
        })
    }
}

/// Propagated score of the best-scoring true cover member. Ties go to the
/// lowest node index (cover members are stored in index order).
pub fn conformity_score(
    ps: &PropagatedScores,
    ind: &[bool],
    cover: &NolCover,
) -> Result<f64, ConformalError> {
    if ind.len() != cover.len() {
        return Err(ConformalError::IndicatorLength {
            expected: cover.len(),
            found: ind.len(),
        });
    }
    let mut best: Option<f64> = None;
    for (&v, &is_true) in cover.members().iter().zip(ind) {
        if is_true {
            let g = ps.get(v);
            if best.is_none_or(|b| g > b) {
                best = Some(g);
            }
        }
    }
    best.ok_or(ConformalError::NoTrueMember)
}

/// `⌈(n+1)(1−α)⌉`, the order statistic a split-conformal threshold uses.
///
/// The product is nudged down by a relative `1e-9` before rounding up so that
/// exact integers such as `10 · 0.9` are not pushed to the next rank by
/// representation error.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    let k = libm::ceil(x - 1e-9 * x.max(1.0));
    if k < 0.0 {
        0
    } else {
        k as usize
    }
}

/// Sorted calibration conformity scores for one cover.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverPredictor {
    cover: NolCover,
    sorted_conformity: Vec<f64>,
}

impl CoverPredictor {
    /// Rebuilds a predictor from stored scores, checking they are finite and
    /// ascending.
    pub fn from_sorted(
        cover: NolCover,
        sorted_conformity: Vec<f64>,
    ) -> Result<Self, ConformalError> {
        let malformed = |reason| ConformalError::MalformedCalibration {
            cover: cover.id(),
            reason,
        };
        if sorted_conformity.is_empty() {
            return Err(ConformalError::EmptyCalibration);
        }
        if sorted_conformity.iter().any(|s| !s.is_finite()) {
            return Err(malformed("non-finite score"));
        }
        if sorted_conformity.windows(2).any(|w| w[0] > w[1]) {
            return Err(malformed("scores are not sorted"));
        }
        Ok(Self {
            cover,
            sorted_conformity,
        })
    }

    pub fn cover(&self) -> &NolCover {
        &self.cover
    }

    pub fn sorted_conformity(&self) -> &[f64] {
        &self.sorted_conformity
    }

    pub fn n_calibration(&self) -> usize {
        self.sorted_conformity.len()
    }

    /// Nonconformity quantile `q̂`, reported as `1 − τ`.
    pub fn quantile(&self, alpha: f64) -> Result<f64, ConformalError> {
        Ok(1.0 - threshold_at(self, alpha)?)
    }
}

pub fn calibrate_cover(
    t: &Taxonomy,
    cover: &NolCover,
    records: &[CalibrationRecord],
) -> Result<CoverPredictor, ConformalError> {
    if cover.member_set().capacity() != t.len() {
        return Err(ConformalError::MalformedCalibration {
            cover: cover.id(),
            reason: "cover does not belong to this taxonomy",
        });
    }
    if records.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    let mut scores = records
        .iter()
        .map(|r| conformity_score(&r.scores, &label_indicator(cover, &r.truth), cover))
        .collect::<Result<Vec<_>, _>>()?;
    scores.sort_by(f64::total_cmp);
    Ok(CoverPredictor {
        cover: cover.clone(),
        sorted_conformity: scores,
    })
}

/// Conformity threshold `τ`: a cover member is predicted iff `ĝ ≥ τ`.
///
/// `τ` is the `k`-th largest calibration conformity with
/// `k = ⌈(n+1)(1−α)⌉`, i.e. one minus the `k`-th smallest nonconformity. When
/// `k > n` the threshold is vacuous and every member is predicted.
pub fn threshold_at(p: &CoverPredictor, alpha: f64) -> Result<f64, ConformalError> {
    check_alpha(alpha)?;
    let n = p.sorted_conformity.len();
    let k = conformal_rank(n, alpha);
    if k > n {
        Ok(0.0)
    } else {
        Ok(p.sorted_conformity[n - k.max(1)])
    }
}

pub fn predict_cover(
    p: &CoverPredictor,
    ps: &PropagatedScores,
    alpha: f64,
) -> Result<NodeSet, ConformalError> {
    let tau = threshold_at(p, alpha)?;
    Ok(select_at_threshold(&p.cover, ps, tau))
}

/// Like [`predict_cover`], but an empty set is replaced by the member with
/// the highest propagated score.
pub fn predict_cover_padded(
    p: &CoverPredictor,
    ps: &PropagatedScores,
    alpha: f64,
) -> Result<NodeSet, ConformalError> {
    let mut set = predict_cover(p, ps, alpha)?;
    pad_if_empty(&mut set, &p.cover, ps);
    Ok(set)
}

pub(crate) fn select_at_threshold(cover: &NolCover, ps: &PropagatedScores, tau: f64) -> NodeSet {
    let mut set = NodeSet::empty(cover.member_set().capacity());
    for &v in cover.members() {
        if ps.get(v) >= tau {
            set.insert(v);
        }
    }
    set
}

pub(crate) fn pad_if_empty(set: &mut NodeSet, cover: &NolCover, ps: &PropagatedScores) {
    if set.is_empty() {
        let mut best = cover.members()[0];
        for &v in &cover.members()[1..] {
            if ps.get(v) > ps.get(best) {
                best = v;
            }
        }
        set.insert(best);
    }
}

/// Something that turns propagated scores into a subset of one cover at a
/// requested error level.
pub trait CoverSetPredictor {
    fn cover(&self) -> &NolCover;
    fn predict_set(&self, ps: &PropagatedScores, alpha: f64) -> Result<NodeSet, ConformalError>;
}

impl CoverSetPredictor for CoverPredictor {
    fn cover(&self) -> &NolCover {
        &self.cover
    }

    fn predict_set(&self, ps: &PropagatedScores, alpha: f64) -> Result<NodeSet, ConformalError> {
        predict_cover(self, ps, alpha)
    }
}

/// A calibrated predictor for every cover of a space, indexed by cover id.
pub trait CoverFamily {
    type Predictor: CoverSetPredictor;
    fn space(&self) -> &CoverSpace;
    fn predictors(&self) -> &[Self::Predictor];

    fn leaf_predictor(&self) -> &Self::Predictor {
        &self.predictors()[self.space().leaf_cover_id()]
    }

    fn check_taxonomy(&self, t: &Taxonomy) -> Result<(), ConformalError> {
        Ok(self.space().check_taxonomy(t)?)
    }
}

/// The conformal model family: one [`CoverPredictor`] per cover, all
/// calibrated on the same records.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorFamily {
    space: CoverSpace,
    predictors: Vec<CoverPredictor>,
}

impl PredictorFamily {
    /// Assembles a family from per-cover predictors given in cover id order.
    pub fn new(space: CoverSpace, predictors: Vec<CoverPredictor>) -> Result<Self, ConformalError> {
        if space.is_empty() {
            return Err(CoverError::EmptySpace.into());
        }
        if predictors.len() != space.len() {
            return Err(ConformalError::PredictorCount {
                expected: space.len(),
                found: predictors.len(),
            });
        }
        let n_c = predictors[0].n_calibration();
        for (cover, p) in space.covers().iter().zip(&predictors) {
            if p.cover != *cover {
                return Err(ConformalError::MalformedCalibration {
                    cover: cover.id(),
                    reason: "predictor cover differs from the space",
                });
            }
            if p.n_calibration() != n_c {
                return Err(ConformalError::MalformedCalibration {
                    cover: cover.id(),
                    reason: "calibration sizes differ across covers",
                });
            }
        }
        Ok(Self { space, predictors })
    }

    pub fn n_calibration(&self) -> usize {
        self.predictors[0].n_calibration()
    }

    pub fn leaf_predictor_id(&self) -> usize {
        self.space.leaf_cover_id()
    }

    pub fn taxonomy_hash(&self) -> &str {
        self.space.taxonomy_hash()
    }

    pub fn get(&self, cover_id: usize) -> Option<&CoverPredictor> {
        self.predictors.get(cover_id)
    }

    pub fn len(&self) -> usize {
        self.predictors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictors.is_empty()
    }

    pub fn into_space(self) -> CoverSpace {
        self.space
    }
}

impl CoverFamily for PredictorFamily {
    type Predictor = CoverPredictor;

    fn space(&self) -> &CoverSpace {
        &self.space
    }

    fn predictors(&self) -> &[CoverPredictor] {
        &self.predictors
    }
}

pub fn calibrate_family(
    t: &Taxonomy,
    space: &CoverSpace,
    records: &[CalibrationRecord],
) -> Result<PredictorFamily, ConformalError> {
    space.check_taxonomy(t)?;
    let predictors = space
        .covers()
        .iter()
        .map(|c| calibrate_cover(t, c, records))
        .collect::<Result<Vec<_>, _>>()?;
    PredictorFamily::new(space.clone(), predictors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covers::{enumerate_nol_covers, CoverMode, EnumerationOptions};
    use crate::fixtures;
    use crate::propagation::SimplexPolicy;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DISH_SCORES: [f64; 7] = [0.05, 0.05, 0.10, 0.40, 0.25, 0.10, 0.05];

    fn dish_ps(t: &Taxonomy) -> PropagatedScores {
        let ls = LeafScores::new(t, DISH_SCORES.to_vec(), "x", SimplexPolicy::Reject).unwrap();
        propagate_scores(t, &ls).unwrap()
    }

    fn cover_with(space: &CoverSpace, t: &Taxonomy, names: &[&str]) -> NolCover {
        let target = t.node_set_by_name(names.iter().copied()).unwrap();
        space
            .covers()
            .iter()
            .find(|c| *c.member_set() == target)
            .unwrap()
            .clone()
    }

    fn predictor(cover: &NolCover, scores: &[f64]) -> CoverPredictor {
        let mut s = scores.to_vec();
        s.sort_by(f64::total_cmp);
        CoverPredictor::from_sorted(cover.clone(), s).unwrap()
    }

    #[test]
    fn conformity_examples() {
        let t = fixtures::dish();
        let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
        let ps = dish_ps(&t);
        let truth = propagated_label_set(&t, t.id("Caesar salad").unwrap()).unwrap();
        let c = cover_with(&space, &t, &["breakfast", "salad", "sandwich"]);
        let s = conformity_score(&ps, &label_indicator(&c, &truth), &c).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
        let leaves = &space.covers()[space.leaf_cover_id()];
        let s = conformity_score(&ps, &label_indicator(leaves, &truth), leaves).unwrap();
        assert_eq!(s, 0.40);
        assert_eq!(
            conformity_score(&ps, &[false, false, false], &c).unwrap_err(),
            ConformalError::NoTrueMember
        );
        assert!(matches!(
            conformity_score(&ps, &[true], &c),
            Err(ConformalError::IndicatorLength { .. })
        ));

        let d = fixtures::diamond();
        let dspace = enumerate_nol_covers(&d, EnumerationOptions::default()).unwrap();
        let ls = LeafScores::new(&d, vec![0.2, 0.5, 0.3], "x", SimplexPolicy::Reject).unwrap();
        let dps = propagate_scores(&d, &ls).unwrap();
        let ab = cover_with(&dspace, &d, &["A", "B"]);
        let truth = propagated_label_set(&d, d.id("y").unwrap()).unwrap();
        let s = conformity_score(&dps, &label_indicator(&ab, &truth), &ab).unwrap();
        assert!((s - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rank_computation() {
        assert_eq!(conformal_rank(5, 0.4), 4);
        assert_eq!(conformal_rank(9, 0.1), 9);
        assert_eq!(conformal_rank(1, 0.5), 1);
        assert_eq!(conformal_rank(5, 0.0), 6);
        assert_eq!(conformal_rank(2000, 0.05), 1901);
        for n in 1..300usize {
            for j in 0..100usize {
                let exact = ((n + 1) * (100 - j)).div_ceil(100);
                assert_eq!(conformal_rank(n, j as f64 / 100.0), exact, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn threshold_examples() {
        let t = fixtures::dish();
        let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
        let c = cover_with(&space, &t, &["breakfast", "salad", "sandwich"]);
        let p = predictor(&c, &[0.9, 0.5, 0.8, 0.6, 0.7]);
        assert_eq!(p.sorted_conformity(), &[0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(threshold_at(&p, 0.4).unwrap(), 0.6);
        assert!((p.quantile(0.4).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(threshold_at(&p, 0.0).unwrap(), 0.0);
        assert_eq!(threshold_at(&p, 0.01).unwrap(), 0.0);
        assert!(threshold_at(&p, 1.0).is_err());
        assert!(threshold_at(&p, -0.1).is_err());
        assert!(threshold_at(&p, f64::NAN).is_err());

        let one = predictor(&c, &[0.3]);
        assert_eq!(threshold_at(&one, 0.5).unwrap(), 0.3);
        assert!((one.quantile(0.5).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn prediction_examples() {
        let t = fixtures::dish();
        let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
        let ps = dish_ps(&t);
        let c = cover_with(&space, &t, &["breakfast", "salad", "sandwich"]);
        let at = |tau: f64| select_at_threshold(&c, &ps, tau);
        assert!(at(0.6).is_empty());
        assert_eq!(at(0.45), t.node_set_by_name(["salad"]).unwrap());
        assert_eq!(at(0.35), t.node_set_by_name(["salad", "sandwich"]).unwrap());
        assert_eq!(at(0.0), *c.member_set());

        let p = predictor(&c, &[0.6; 5]);
        assert!(predict_cover(&p, &ps, 0.4).unwrap().is_empty());
        assert_eq!(
            predict_cover_padded(&p, &ps, 0.4).unwrap(),
            t.node_set_by_name(["salad"]).unwrap()
        );

        let mut onehot = vec![0.0; 7];
        onehot[3] = 1.0;
        let ls = LeafScores::new(&t, onehot, "x", SimplexPolicy::Reject).unwrap();
        let ops = propagate_scores(&t, &ls).unwrap();
        let truth = propagated_label_set(&t, t.id("Caesar salad").unwrap()).unwrap();
        for cover in space.covers() {
            let p = predictor(cover, &[1.0, 0.9, 0.2]);
            for alpha in [0.0, 0.3, 0.6, 0.9] {
                let set = predict_cover(&p, &ops, alpha).unwrap();
                let mut expected = cover.member_set().clone();
                expected.intersect_with(truth.ancestor_set());
                if threshold_at(&p, alpha).unwrap() == 0.0 {
                    assert_eq!(set, *cover.member_set());
                } else {
                    assert_eq!(set, expected);
                }
            }
        }
    }

    fn records_from(t: &Taxonomy, rng: &mut ChaCha8Rng, n: usize) -> Vec<CalibrationRecord> {
        (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..t.num_leaves())
                    .map(|_| rng.random::<f64>() + 1e-3)
                    .collect();
                let s: f64 = raw.iter().sum();
                let ls = LeafScores::new(
                    t,
                    raw.iter().map(|x| x / s).collect(),
                    "r",
                    SimplexPolicy::Renormalize,
                )
                .unwrap();
                let leaf = t.leaves()[rng.random_range(0..t.num_leaves())];
                CalibrationRecord::new(t, &ls, leaf).unwrap()
            })
            .collect()
    }

    #[test]
    fn family_calibration() {
        let t = fixtures::dish();
        let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let records = records_from(&t, &mut rng, 40);
        let fam = calibrate_family(&t, &space, &records).unwrap();
        assert_eq!(fam.len(), 11);
        assert_eq!(fam.n_calibration(), 40);
        assert_eq!(fam.leaf_predictor().cover().id(), space.leaf_cover_id());
        assert_eq!(
            calibrate_family(&t, &space, &[]).unwrap_err(),
            ConformalError::EmptyCalibration
        );
        let mut reversed = records.clone();
        reversed.reverse();
        assert_eq!(calibrate_family(&t, &space, &reversed).unwrap(), fam);

        // the all-leaves conformity is the base score of the true leaf
        let leaves = &space.covers()[space.leaf_cover_id()];
        let mut base: Vec<f64> = records
            .iter()
            .map(|r| r.scores.get(r.truth.true_leaf()))
            .collect();
        base.sort_by(f64::total_cmp);
        assert_eq!(
            calibrate_cover(&t, leaves, &records)
                .unwrap()
                .sorted_conformity(),
            &base[..]
        );

        let other = fixtures::diamond();
        assert!(matches!(
            calibrate_family(&other, &space, &records),
            Err(ConformalError::Cover(CoverError::TaxonomyMismatch { .. }))
        ));

        let only_leaves =
            CoverSpace::from_sets(&t, vec![t.leaf_set().clone()], CoverMode::Custom).unwrap();
        let fam1 = calibrate_family(&t, &only_leaves, &records).unwrap();
        assert_eq!(fam1.len(), 1);
        assert_eq!(fam1.predictors()[0].sorted_conformity(), &base[..]);
    }

    #[test]
    fn from_sorted_validation() {
        let t = fixtures::dish();
        let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
        let c = space.covers()[0].clone();
        assert!(CoverPredictor::from_sorted(c.clone(), vec![]).is_err());
        assert!(CoverPredictor::from_sorted(c.clone(), vec![0.5, 0.2]).is_err());
        assert!(CoverPredictor::from_sorted(c.clone(), vec![f64::NAN]).is_err());
        let p = CoverPredictor::from_sorted(c, vec![0.1, 0.2]).unwrap();
        assert!(matches!(
            PredictorFamily::new(space.clone(), vec![p]),
            Err(ConformalError::PredictorCount { .. })
        ));
    }

    proptest! {
        #[test]
        fn rank_oracle(
            cal in proptest::collection::vec(0u32..=1000, 1..30),
            test in 0u32..=1000,
            j in 0u32..100,
        ) {
            let t = fixtures::dish();
            let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
            let scores: Vec<f64> = cal.iter().map(|&c| c as f64 / 1000.0).collect();
            let p = predictor(&space.covers()[0], &scores);
            let alpha = j as f64 / 100.0;
            let s_t = test as f64 / 1000.0;
            let n = cal.len();
            let k = ((n + 1) * (100 - j as usize)).div_ceil(100);
            let rank = 1 + cal.iter().filter(|&&c| c > test).count();
            let included = s_t >= threshold_at(&p, alpha).unwrap();
            prop_assert_eq!(included, rank <= k);
        }

        #[test]
        fn smaller_alpha_gives_superset(seed in any::<u64>(), a in 0.0f64..0.99, b in 0.0f64..0.99) {
            let t = fixtures::dish();
            let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let records = records_from(&t, &mut rng, 25);
            let test = records_from(&t, &mut rng, 1).pop().unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for c in space.covers() {
                let p = calibrate_cover(&t, c, &records).unwrap();
                let wide = predict_cover(&p, &test.scores, lo).unwrap();
                let narrow = predict_cover(&p, &test.scores, hi).unwrap();
                prop_assert!(narrow.is_subset(&wide));
            }
        }

        #[test]
        fn calibration_ignores_record_order(seed in any::<u64>(), perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = fixtures::random_dag(&mut rng, 9, 2);
            let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
            let records = records_from(&t, &mut rng, 15);
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            prop_assert_eq!(
                calibrate_family(&t, &space, &records).unwrap(),
                calibrate_family(&t, &space, &shuffled).unwrap()
            );
        }

        #[test]
        fn tree_leaf_cover_reduces_to_base_score(seed in any::<u64>(), n in 2usize..=12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = fixtures::random_dag(&mut rng, n, 1);
            let space = enumerate_nol_covers(&t, EnumerationOptions::default()).unwrap();
            let leaves = &space.covers()[space.leaf_cover_id()];
            for r in records_from(&t, &mut rng, 5) {
                let s = conformity_score(&r.scores, &label_indicator(leaves, &r.truth), leaves).unwrap();
                prop_assert_eq!(s, r.scores.get(r.truth.true_leaf()));
            }
        }
    }
}
