//! Latent-image step: given the corrected HR observation, the estimate of
//! the latent image at the LR epoch solves a quadratic problem whose normal
//! equations have Sylvester form.

mod interp;
mod pixel_op;
mod solve;
mod system;

pub use interp::{interpolate_coarse, Interpolation};
pub use solve::{solve_fusion, solve_fusion_detailed, FusionOutcome, DENSE_FALLBACK_LIMIT};
pub use system::{build_normal_system, FusionSettings, SylvesterSystem};

pub(crate) use system::{check_sensors, spatial_part, spectral_matrix, weighted_sq};
