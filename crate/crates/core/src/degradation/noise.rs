//! Band-wise Gaussian noise with diagonal band covariance and white pixels.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{GridShape, MultiBandImage};

/// Diagonal band covariance `Λ` (one variance per band).
#[derive(Debug, Clone, PartialEq)]
pub struct BandNoise {
    variances: Vec<f64>,
}

impl BandNoise {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::invalid("band noise needs at least one variance"));
        }
        if let Some(b) = variances.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "band {b} variance must be positive and finite, got {}",
                variances[b]
            )));
        }
        Ok(Self { variances })
    }

    pub fn uniform(bands: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; bands])
    }

    /// Per-band variances giving the requested SNR (dB) against the mean
    /// signal power of each band of `signal`.
    pub fn from_snr(signal: &MultiBandImage, snr_db: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::invalid("SNR must be finite to define a noise level"));
        }
        let ratio = 10f64.powf(snr_db / 10.0);
        let n = signal.pixel_count() as f64;
        let variances = signal
            .matrix()
            .rows()
            .into_iter()
            .map(|band| {
                let power = band.iter().map(|v| v * v).sum::<f64>() / n;
                // an all-zero band still needs a positive variance
                (power / ratio).max(f64::MIN_POSITIVE)
            })
            .collect();
        Self::new(variances)
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn bands(&self) -> usize {
        self.variances.len()
    }

    pub fn inverse_variances(&self) -> Vec<f64> {
        self.variances.iter().map(|v| 1.0 / v).collect()
    }
}

/// Draws `N ~ MN(0, Λ, I)` on `shape`; deterministic for a fixed seed.
pub fn sample_noise(noise: &BandNoise, shape: GridShape, seed: u64) -> MultiBandImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.pixel_count();
    let mut out = Array2::zeros((noise.bands(), n));
    for (b, mut band) in out.rows_mut().into_iter().enumerate() {
        let sigma = noise.variances[b].sqrt();
        for v in band.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = sigma * z;
        }
    }
    MultiBandImage::from_parts(shape, out)
}
