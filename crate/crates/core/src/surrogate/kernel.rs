//! Covariance functions over split (x, y, z) inputs.
//!
//! The mixture kernel combines a Matérn 5/2 kernel on real coordinates, a
//! linear kernel on integer coordinates and an indicator kernel on
//! qualitative arm indices:
//!
//! ```text
//! k(h, h') = (1 - λ)(k_M + k_L + k_I) + λ k_M k_L k_I
//! ```
//!
//! A block with no dimensions contributes 0 to the sum term and 1 to the
//! product term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::BlockInput;

/// Matérn smoothness. Only the 5/2 closed form is implemented.
pub const MATERN_NU: f64 = 2.5;
/// Linear-kernel signal variance.
pub const LINEAR_VARIANCE: f64 = 1.0;

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorMode {
    /// Mean of per-dimension Kronecker deltas.
    #[default]
    Mean,
    /// 1 only when the whole qualitative vector matches.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    /// ARD lengthscales over the real block.
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub nu: f64,
    pub v: f64,
    pub lambda: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, lambda: f64, noise_variance: f64) -> Self {
        Self { lengthscales, signal_variance, nu: MATERN_NU, v: LINEAR_VARIANCE, lambda, noise_variance }
    }

    pub fn check(&self) -> Result<()> {
        if self.lengthscales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Input("lengthscales must be positive".into()));
        }
        if !(self.signal_variance > 0.0) {
            return Err(Error::Input("signal variance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Input(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.noise_variance >= 1e-8) {
            return Err(Error::Input("noise variance must be at least 1e-8".into()));
        }
        Ok(())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { expected, got });
    }
    Ok(())
}

/// Matérn 5/2 with ARD lengthscales as a function of the scaled distance.
#[inline]
pub(crate) fn matern52_from_distance(d: f64, signal_variance: f64) -> f64 {
    let r = SQRT5 * d;
    signal_variance * (1.0 + r + r * r / 3.0) * (-r).exp()
}

#[inline]
pub(crate) fn scaled_sq_distance(x: &[f64], x2: &[f64], lengthscales: &[f64]) -> f64 {
    x.iter().zip(x2).zip(lengthscales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum()
}

pub fn matern52(x: &[f64], x2: &[f64], lengthscales: &[f64], signal_variance: f64) -> Result<f64> {
    check_len(lengthscales.len(), x.len())?;
    check_len(lengthscales.len(), x2.len())?;
    Ok(matern52_from_distance(scaled_sq_distance(x, x2, lengthscales).sqrt(), signal_variance))
}

pub fn linear_kernel(y: &[f64], y2: &[f64], v: f64) -> Result<f64> {
    check_len(y.len(), y2.len())?;
    Ok(v * dot(y, y2))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

pub fn indicator_kernel(z: &[usize], z2: &[usize], mode: IndicatorMode) -> Result<f64> {
    check_len(z.len(), z2.len())?;
    Ok(indicator_unchecked(z, z2, mode))
}

#[inline]
pub(crate) fn indicator_unchecked(z: &[usize], z2: &[usize], mode: IndicatorMode) -> f64 {
    if z.is_empty() {
        return 1.0;
    }
    match mode {
        IndicatorMode::Mean => z.iter().zip(z2).filter(|(a, b)| a == b).count() as f64 / z.len() as f64,
        IndicatorMode::Strict => {
            if z == z2 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Combines sub-kernel values; `None` marks an absent block.
#[inline]
pub fn combine(km: Option<f64>, kl: Option<f64>, ki: Option<f64>, lambda: f64) -> f64 {
    let sum = km.unwrap_or(0.0) + kl.unwrap_or(0.0) + ki.unwrap_or(0.0);
    let prod = km.unwrap_or(1.0) * kl.unwrap_or(1.0) * ki.unwrap_or(1.0);
    (1.0 - lambda) * sum + lambda * prod
}

/// Which blocks carry at least one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl BlockLayout {
    pub fn of(h: &BlockInput) -> Self {
        Self { x: h.x.len(), y: h.y.len(), z: h.z.len() }
    }

    /// Number of non-empty blocks. λ only matters when this is at least 2.
    pub fn present(&self) -> usize {
        (self.x > 0) as usize + (self.y > 0) as usize + (self.z > 0) as usize
    }
}

pub fn mixture_kernel(h: &BlockInput, h2: &BlockInput, params: &KernelParams, mode: IndicatorMode) -> Result<f64> {
    let layout = BlockLayout::of(h);
    if layout != BlockLayout::of(h2) {
        return Err(Error::Input("kernel inputs have different block layouts".into()));
    }
    check_len(params.lengthscales.len(), layout.x)?;
    Ok(mixture_unchecked(h, h2, params, mode))
}

#[inline]
pub(crate) fn mixture_unchecked(h: &BlockInput, h2: &BlockInput, params: &KernelParams, mode: IndicatorMode) -> f64 {
    let km = (!h.x.is_empty()).then(|| {
        matern52_from_distance(scaled_sq_distance(&h.x, &h2.x, &params.lengthscales).sqrt(), params.signal_variance)
    });
    let kl = (!h.y.is_empty()).then(|| params.v * dot(&h.y, &h2.y));
    let ki = (!h.z.is_empty()).then(|| indicator_unchecked(&h.z, &h2.z, mode));
    combine(km, kl, ki, params.lambda)
}
