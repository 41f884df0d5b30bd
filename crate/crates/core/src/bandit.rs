//! Beta-Bernoulli Thompson sampling over the arms of each qualitative
//! parameter.
//!
//! Every qualitative parameter owns an independent bandit with one arm per
//! category. Suggested points have their qualitative coordinates overwritten
//! with sampled arms, and observed points reward the arms they carried.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{SearchSpace, WarpedVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    /// Increment beta on the chosen arms of points that are not a new best.
    pub beta_update: bool,
    pub prior_alpha: f64,
    pub prior_beta: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self { beta_update: true, prior_alpha: 1.0, prior_beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    /// One arm set per qualitative parameter, in z-block order.
    pub variables: Vec<ArmSet>,
}

impl BanditState {
    pub fn new(arm_counts: &[usize], config: &BanditConfig) -> Self {
        Self {
            variables: arm_counts
                .iter()
                .map(|&k| ArmSet { alpha: vec![config.prior_alpha; k], beta: vec![config.prior_beta; k] })
                .collect(),
        }
    }

    pub fn for_space(space: &SearchSpace, config: &BanditConfig) -> Self {
        Self::new(&space.arm_counts(), config)
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Draws one arm per variable: the argmax of independent Beta samples,
    /// ties going to the lowest index.
    pub fn ts_select<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.variables
            .iter()
            .map(|arms| {
                let mut best = 0;
                let mut best_theta = f64::NEG_INFINITY;
                for (k, (&a, &b)) in arms.alpha.iter().zip(&arms.beta).enumerate() {
                    let theta = Beta::new(a, b).expect("alpha, beta >= 1").sample(rng);
                    if theta > best_theta {
                        best_theta = theta;
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Rewards the arms recorded for each observed point: alpha on a new
    /// global best, beta otherwise (when `beta_update` is on).
    pub fn update_rewards(&mut self, chosen: &[Vec<usize>], new_best: &[bool], config: &BanditConfig) -> Result<()> {
        if chosen.len() != new_best.len() {
            return Err(Error::Contract(format!("{} arm records for {} flags", chosen.len(), new_best.len())));
        }
        for arms in chosen {
            if arms.len() != self.variables.len() {
                return Err(Error::Contract(format!(
                    "arm record covers {} variables, expected {}",
                    arms.len(),
                    self.variables.len()
                )));
            }
            for (arm, set) in arms.iter().zip(&self.variables) {
                if *arm >= set.alpha.len() {
                    return Err(Error::Contract(format!("arm index {arm} out of range for {} arms", set.alpha.len())));
                }
            }
        }
        for (arms, &best) in chosen.iter().zip(new_best) {
            for (&arm, set) in arms.iter().zip(&mut self.variables) {
                if best {
                    set.alpha[arm] += 1.0;
                } else if config.beta_update {
                    set.beta[arm] += 1.0;
                }
            }
        }
        Ok(())
    }
}

/// Writes the selected arms into the qualitative coordinates of `candidate`;
/// real and integer coordinates are untouched.
pub fn overwrite_qualitative(candidate: &mut WarpedVector, selection: &[usize], space: &SearchSpace) -> Result<()> {
    let z = space.qualitative_indices();
    if selection.len() != z.len() {
        return Err(Error::Contract(format!("selection covers {} variables, space has {}", selection.len(), z.len())));
    }
    let counts = space.arm_counts();
    for (j, (&dim, &arm)) in z.iter().zip(selection).enumerate() {
        if arm >= counts[j] {
            return Err(Error::Contract(format!("arm index {arm} out of range for {} arms", counts[j])));
        }
        candidate.0[dim] = space.arm_coordinate(j, arm);
    }
    Ok(())
}
