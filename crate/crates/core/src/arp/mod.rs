//! Adaptive region partitioning.
//!
//! All observations are labeled good or bad by exact 1-D 2-means on their
//! objective values, an RBF SVM is trained on the full history, and the
//! resulting boundary is used to keep trust-region candidates on the side of
//! the incumbent and to draw restart samples from the good side.

pub mod kmeans;
pub mod svm;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Point, SearchSpace, WarpedVector};
pub use kmeans::{label_observations, optimal_split};
pub use svm::{fit_classifier, median_gamma, RegionClassifier};

/// Rejection-sampling attempts per requested restart sample.
pub const RESTART_DRAWS_PER_SAMPLE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GammaRule {
    #[default]
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArpConfig {
    /// Observations required before partitioning starts. Defaults to
    /// `max(16, 2 * D)`.
    pub activation_threshold: Option<usize>,
    /// Maximum SMO passes over the training set.
    pub svm_budget: usize,
    pub gamma_rule: GammaRule,
    pub fallback_fraction: f64,
}

impl Default for ArpConfig {
    fn default() -> Self {
        Self { activation_threshold: None, svm_budget: 200, gamma_rule: GammaRule::Median, fallback_fraction: 0.2 }
    }
}

impl ArpConfig {
    pub fn check(&self) -> Result<()> {
        if self.activation_threshold.is_some_and(|t| t < 4) {
            return Err(Error::Config("arp.activation_threshold must be at least 4".into()));
        }
        if !(self.fallback_fraction > 0.0 && self.fallback_fraction <= 1.0) {
            return Err(Error::Config("arp.fallback_fraction must lie in (0, 1]".into()));
        }
        if self.svm_budget == 0 {
            return Err(Error::Config("arp.svm_budget must be positive".into()));
        }
        Ok(())
    }

    pub fn activation_threshold(&self, dim: usize) -> usize {
        self.activation_threshold.unwrap_or_else(|| 16.max(2 * dim))
    }
}

/// Labels and trains on the whole history in one step.
pub fn partition(points: &[WarpedVector], values: &[f64], config: &ArpConfig) -> Result<RegionClassifier> {
    let labels = label_observations(values)?;
    let xs: Vec<Vec<f64>> = points.iter().map(|p| p.0.clone()).collect();
    fit_classifier(&xs, &labels, config.svm_budget)
}

/// Indices of the candidates on the same side of the boundary as
/// `best_point` (a decision value of exactly 0 counts as the good side).
/// When fewer than `fallback_fraction * |candidates|` qualify, the top
/// `ceil(fallback_fraction * |candidates|)` by decision value toward that
/// side are returned instead.
pub fn filter_candidates(
    classifier: &RegionClassifier,
    candidates: &[WarpedVector],
    best_point: &WarpedVector,
    fallback_fraction: f64,
) -> Vec<usize> {
    if candidates.is_empty() {
        return vec![];
    }
    let positive = classifier.is_good(&best_point.0);
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| {
            let d = classifier.decision(&c.0);
            if positive {
                d
            } else {
                -d
            }
        })
        .collect();
    let kept: Vec<usize> = (0..candidates.len())
        .filter(|&i| if positive { scores[i] >= 0.0 } else { scores[i] > 0.0 })
        .collect();
    let floor = ((fallback_fraction * candidates.len() as f64).ceil() as usize).clamp(1, candidates.len());
    if kept.len() >= floor {
        return kept;
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(floor);
    order
}

/// Restart samples drawn by rejection from the good side of the boundary.
#[derive(Debug, Clone)]
pub struct RestartSamples {
    pub points: Vec<Point>,
    /// How many of `points` (a prefix) were accepted by the classifier; the
    /// rest are unconditioned uniform fill.
    pub accepted: usize,
}

pub fn restart_samples<R: Rng + ?Sized>(
    classifier: &RegionClassifier,
    space: &SearchSpace,
    rng: &mut R,
    count: usize,
) -> RestartSamples {
    let mut points = Vec::with_capacity(count);
    let mut draws = 0;
    while points.len() < count && draws < RESTART_DRAWS_PER_SAMPLE * count {
        draws += 1;
        let p = space.random_point(rng);
        let w = space.warp(&p).expect("random points are valid");
        if classifier.is_good(&w.0) {
            points.push(p);
        }
    }
    let accepted = points.len();
    while points.len() < count {
        points.push(space.random_point(rng));
    }
    RestartSamples { points, accepted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParamSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Fixed linear boundary x0 = 0.5, positive on the left.
    fn left_half() -> RegionClassifier {
        RegionClassifier {
            support_vectors: vec![vec![0.0, 0.5], vec![1.0, 0.5]],
            dual_coefs: vec![1.0, -1.0],
            bias: 0.0,
            kernel_gamma: 1.0,
            trained_on: 2,
            training_accuracy: 1.0,
            iterations: 0,
        }
    }

    fn constant(bias: f64) -> RegionClassifier {
        RegionClassifier {
            support_vectors: vec![],
            dual_coefs: vec![],
            bias,
            kernel_gamma: 1.0,
            trained_on: 0,
            training_accuracy: 1.0,
            iterations: 0,
        }
    }

    fn grid_candidates() -> Vec<WarpedVector> {
        (0..100).map(|i| WarpedVector(vec![(i as f64 + 0.5) / 100.0, 0.3])).collect()
    }

    #[test]
    fn keeps_side_of_best_point() {
        let clf = left_half();
        let cands = grid_candidates();
        let kept = filter_candidates(&clf, &cands, &WarpedVector(vec![0.1, 0.5]), 0.2);
        assert_eq!(kept, (0..50).collect::<Vec<_>>());
        let kept = filter_candidates(&clf, &cands, &WarpedVector(vec![0.9, 0.5]), 0.2);
        assert_eq!(kept, (50..100).collect::<Vec<_>>());
    }

    #[test]
    fn fallback_takes_top_fraction() {
        // best point on the positive side, every candidate strictly negative
        let clf = left_half();
        let best = WarpedVector(vec![0.0, 0.5]);
        let cands: Vec<WarpedVector> = (0..100).map(|i| WarpedVector(vec![0.6 + 0.004 * i as f64, 0.5])).collect();
        let kept = filter_candidates(&clf, &cands, &best, 0.2);
        assert_eq!(kept.len(), 20);
        // the 20 closest to the boundary are the first 20
        let mut sorted = kept.clone();
        sorted.sort();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn zero_decision_counts_as_good() {
        let clf = constant(0.0);
        let cands = grid_candidates();
        let kept = filter_candidates(&clf, &cands, &WarpedVector(vec![0.5, 0.5]), 0.2);
        assert_eq!(kept.len(), 100);
    }

    #[test]
    fn restart_samples_accept_good_side() {
        let space = SearchSpace::new(vec![ParamSpec::real("a", 0.0, 1.0), ParamSpec::real("b", 0.0, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clf = left_half();
        let rs = restart_samples(&clf, &space, &mut rng, 10);
        assert_eq!(rs.points.len(), 10);
        assert_eq!(rs.accepted, 10);
        for p in &rs.points {
            assert!(clf.decision(&space.warp(p).unwrap().0) >= 0.0);
        }

        let rs = restart_samples(&constant(-1.0), &space, &mut rng, 10);
        assert_eq!(rs.points.len(), 10);
        assert_eq!(rs.accepted, 0);
    }

    #[test]
    fn config_defaults_and_checks() {
        let c = ArpConfig::default();
        assert_eq!(c.activation_threshold(3), 16);
        assert_eq!(c.activation_threshold(20), 40);
        assert!(c.check().is_ok());
        assert!(ArpConfig { activation_threshold: Some(3), ..c.clone() }.check().is_err());
        assert!(ArpConfig { fallback_fraction: 0.0, ..c }.check().is_err());
    }
}
