//! Gaussian-process surrogate with a mixture kernel for real, integer and
//! qualitative inputs.

pub mod gp;
pub mod kernel;

pub use gp::{gram_matrix, GpModel, SurrogateConfig};
pub use kernel::{
    indicator_kernel, linear_kernel, matern52, mixture_kernel, IndicatorMode, KernelParams, LINEAR_VARIANCE, MATERN_NU,
};
