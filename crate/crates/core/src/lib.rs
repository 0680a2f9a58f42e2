//! Change detection between two co-registered multi-band optical images of
//! different spatial and spectral resolutions, posed as a robust fusion
//! inverse problem.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correction;
pub mod degradation;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod image;
pub mod robust;
pub mod sim;

pub use error::{Error, Result};
pub use image::{ChangeImage, GridShape, MultiBandImage};
