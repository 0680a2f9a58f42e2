//! Generic linear forward model `Y = L·X·B·S + N`.
//!
//! `L` acts on the spectral (row) side of the image matrix, `B·S` on the
//! pixel (column) side. Blur is cyclic and per band; decimation keeps one
//! sample per block so that `Sᵀ·S = I`.

mod blur;
pub(crate) mod fft2;
mod noise;
mod sampling;
mod sensor;
mod spectral;

pub use blur::{cyclic_blur, BlurKernel, CyclicConvolution};
pub use noise::{sample_noise, BandNoise};
pub use sampling::{decimate, upsample_zero, DecimationGrid};
pub use sensor::{apply_forward, SensorModel, SpatialDegradation};
pub use spectral::{spectral_degrade, SpectralResponse};
