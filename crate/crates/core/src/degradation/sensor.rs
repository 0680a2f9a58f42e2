use super::blur::{cyclic_blur, BlurKernel};
use super::noise::{sample_noise, BandNoise};
use super::sampling::{decimate, DecimationGrid};
use super::spectral::{spectral_degrade, SpectralResponse};
use crate::error::{Error, Result};
use crate::image::{GridShape, MultiBandImage};

/// Blur followed by decimation, `R = B·S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDegradation {
    pub kernel: BlurKernel,
    pub grid: DecimationGrid,
}

impl SpatialDegradation {
    pub fn new(kernel: BlurKernel, grid: DecimationGrid) -> Self {
        Self { kernel, grid }
    }

    /// `decimate(blur(x))`.
    pub fn apply(&self, x: &MultiBandImage) -> Result<MultiBandImage> {
        decimate(&cyclic_blur(x, &self.kernel)?, &self.grid)
    }
}

/// Full description of one instrument: `Y = L·X·B·S + N`.
///
/// A missing spectral response means the identity; a missing spatial part
/// means no blur and no decimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub spectral: Option<SpectralResponse>,
    pub spatial: Option<SpatialDegradation>,
    pub noise: BandNoise,
}

impl SensorModel {
    /// Spectral-only (HR) sensor.
    pub fn spectral(response: SpectralResponse, noise: BandNoise) -> Result<Self> {
        let s = Self {
            spectral: Some(response),
            spatial: None,
            noise,
        };
        s.check_noise_bands(s.spectral.as_ref().map(|l| l.output_bands()))?;
        Ok(s)
    }

    /// Spatial-only (LR) sensor.
    pub fn spatial(kernel: BlurKernel, grid: DecimationGrid, noise: BandNoise) -> Self {
        Self {
            spectral: None,
            spatial: Some(SpatialDegradation::new(kernel, grid)),
            noise,
        }
    }

    pub fn identity(noise: BandNoise) -> Self {
        Self {
            spectral: None,
            spatial: None,
            noise,
        }
    }

    fn check_noise_bands(&self, out_bands: Option<usize>) -> Result<()> {
        match out_bands {
            Some(b) if b != self.noise.bands() => {
                Err(Error::dims("sensor noise bands", b, self.noise.bands()))
            }
            _ => Ok(()),
        }
    }

    /// True when the sensor actually degrades its input.
    pub fn is_degrading(&self) -> bool {
        self.spectral.is_some() || self.spatial.is_some()
    }

    /// Number of observed bands for a latent image with `latent_bands`.
    pub fn output_bands(&self, latent_bands: usize) -> usize {
        self.spectral
            .as_ref()
            .map_or(latent_bands, |l| l.output_bands())
    }

    /// Observed grid for a latent grid.
    pub fn output_shape(&self, latent: GridShape) -> Result<GridShape> {
        match &self.spatial {
            Some(s) => s.grid.lr_shape(latent),
            None => Ok(latent),
        }
    }
}

/// `Y = L X B S (+ N)`; noise is added only when a seed is given.
pub fn apply_forward(
    x: &MultiBandImage,
    sensor: &SensorModel,
    seed: Option<u64>,
) -> Result<MultiBandImage> {
    let mut y = match &sensor.spectral {
        Some(l) => spectral_degrade(x, l)?,
        None => x.clone(),
    };
    if let Some(spatial) = &sensor.spatial {
        y = spatial.apply(&y)?;
    }
    if let Some(seed) = seed {
        if sensor.noise.bands() != y.bands() {
            return Err(Error::dims(
                "sensor noise bands",
                y.bands(),
                sensor.noise.bands(),
            ));
        }
        y = y.add(&sample_noise(&sensor.noise, y.shape(), seed))?;
    }
    Ok(y)
}
