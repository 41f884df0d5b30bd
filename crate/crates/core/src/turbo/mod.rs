//! Single trust-region state machine.
//!
//! The region is a box around the incumbent whose base side length doubles
//! after `success_tolerance` consecutive improving batches and halves after
//! `failure_tolerance` consecutive non-improving ones. Once the length falls
//! below `length_min` the region must be restarted.

pub mod sobol;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::WarpedVector;
pub use sobol::{sobol_points, Sobol};

/// Relative margin a batch must beat the incumbent by to count as a success.
pub const IMPROVEMENT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub length_init: f64,
    pub length_max: f64,
    pub length_min: f64,
    pub success_tolerance: usize,
    /// Defaults to `max(4, ceil(D / batch_size))`.
    pub failure_tolerance: Option<usize>,
    /// Defaults to `min(100 * D, 5000)`.
    pub n_candidates: Option<usize>,
    /// Defaults to `min(1, 20 / D)`.
    pub perturbation_prob: Option<f64>,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            length_init: 0.8,
            length_max: 1.6,
            length_min: 0.125,
            success_tolerance: 3,
            failure_tolerance: None,
            n_candidates: None,
            perturbation_prob: None,
        }
    }
}

impl TrustRegionConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0 < self.length_min && self.length_min < self.length_init && self.length_init <= self.length_max) {
            return Err(Error::Config("trust region needs 0 < length_min < length_init <= length_max".into()));
        }
        if self.success_tolerance == 0 || self.failure_tolerance == Some(0) {
            return Err(Error::Config("trust region tolerances must be at least 1".into()));
        }
        if self.n_candidates == Some(0) {
            return Err(Error::Config("n_candidates must be positive".into()));
        }
        if let Some(p) = self.perturbation_prob {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config("perturbation_prob must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn failure_tolerance(&self, dim: usize, batch_size: usize) -> usize {
        self.failure_tolerance.unwrap_or_else(|| 4.max(dim.div_ceil(batch_size.max(1))))
    }

    pub fn n_candidates(&self, dim: usize) -> usize {
        self.n_candidates.unwrap_or_else(|| (100 * dim).min(5000))
    }

    pub fn perturbation_prob(&self, dim: usize) -> f64 {
        self.perturbation_prob.unwrap_or_else(|| (20.0 / dim as f64).min(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionState {
    pub center: WarpedVector,
    pub length: f64,
    pub success_count: usize,
    pub failure_count: usize,
    pub best_value: f64,
    pub restarts: usize,
}

impl TrustRegionState {
    pub fn new(center: WarpedVector, best_value: f64, config: &TrustRegionConfig) -> Self {
        Self { center, length: config.length_init, success_count: 0, failure_count: 0, best_value, restarts: 0 }
    }

    /// Resets length and counters around a new center, counting the restart.
    pub fn restart(&mut self, center: WarpedVector, best_value: f64, config: &TrustRegionConfig) {
        self.center = center;
        self.best_value = best_value;
        self.length = config.length_init;
        self.success_count = 0;
        self.failure_count = 0;
        self.restarts += 1;
    }
}

/// Box around the center with sides `length * ls_i / geomean(ls)`, clipped
/// to the unit cube. Without lengthscales all sides equal `length`.
pub fn region_bounds(state: &TrustRegionState, lengthscales: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let d = state.center.len();
    let weights: Vec<f64> = match lengthscales {
        Some(ls) if ls.len() == d && d > 0 => {
            let log_mean = ls.iter().map(|l| l.ln()).sum::<f64>() / d as f64;
            let g = log_mean.exp();
            ls.iter().map(|l| l / g).collect()
        }
        _ => vec![1.0; d],
    };
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for (c, w) in state.center.0.iter().zip(&weights) {
        let half = 0.5 * state.length * w;
        lo.push((c - half).clamp(0.0, 1.0));
        hi.push((c + half).clamp(0.0, 1.0));
    }
    (lo, hi)
}

/// Sobol candidates inside the trust region. Each candidate replaces a random
/// subset of the center's coordinates (each kept with `perturbation_prob`,
/// at least one) with scaled Sobol values.
pub fn generate_candidates<R: Rng + ?Sized>(
    state: &TrustRegionState,
    lengthscales: Option<&[f64]>,
    config: &TrustRegionConfig,
    rng: &mut R,
) -> Result<Vec<WarpedVector>> {
    let d = state.center.len();
    let n = config.n_candidates(d);
    let prob = config.perturbation_prob(d);
    let (lo, hi) = region_bounds(state, lengthscales);
    let mut gen = Sobol::scrambled(d, rng.random())?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let s = gen.next_point();
        let mut mask: Vec<bool> = (0..d).map(|_| prob >= 1.0 || rng.random::<f64>() < prob).collect();
        if !mask.iter().any(|&m| m) {
            mask[rng.random_range(0..d)] = true;
        }
        let coords = (0..d)
            .map(|j| if mask[j] { lo[j] + (hi[j] - lo[j]) * s[j] } else { state.center.0[j] })
            .collect();
        out.push(WarpedVector(coords));
    }
    Ok(out)
}

/// Outcome of one region update, for tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionEvent {
    Success,
    Failure,
    Expanded,
    Shrunk,
}

/// Applies one observed batch to the region. `batch_best` is the best value
/// in the batch and its warped location.
pub fn update_region(
    state: &mut TrustRegionState,
    batch_best: f64,
    batch_best_point: &WarpedVector,
    config: &TrustRegionConfig,
    failure_tolerance: usize,
) -> RegionEvent {
    let improved = batch_best < state.best_value - IMPROVEMENT_MARGIN * state.best_value.abs();
    if batch_best < state.best_value {
        state.best_value = batch_best;
        state.center = batch_best_point.clone();
    }
    if improved {
        state.success_count += 1;
        state.failure_count = 0;
        if state.success_count >= config.success_tolerance {
            state.length = (2.0 * state.length).min(config.length_max);
            state.success_count = 0;
            return RegionEvent::Expanded;
        }
        RegionEvent::Success
    } else {
        state.failure_count += 1;
        state.success_count = 0;
        if state.failure_count >= failure_tolerance {
            state.length /= 2.0;
            state.failure_count = 0;
            return RegionEvent::Shrunk;
        }
        RegionEvent::Failure
    }
}

pub fn needs_restart(state: &TrustRegionState, config: &TrustRegionConfig) -> bool {
    state.length < config.length_min
}
