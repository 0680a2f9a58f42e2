//! Spectral response `L`: each output band is a nonnegative combination of
//! latent bands.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::MultiBandImage;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResponse {
    matrix: Array2<f64>,
}

impl SpectralResponse {
    /// Validates an `n_λ × m_λ` response matrix.
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        let (out_bands, in_bands) = matrix.dim();
        if out_bands == 0 || in_bands == 0 {
            return Err(Error::invalid("spectral response must be non-empty"));
        }
        if out_bands > in_bands {
            return Err(Error::invalid(format!(
                "spectral response has more output bands ({out_bands}) than input bands ({in_bands})"
            )));
        }
        for (index, v) in matrix.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index, value: *v });
            }
            if *v < 0.0 {
                return Err(Error::invalid(format!(
                    "spectral response entries must be nonnegative (entry {index} is {v})"
                )));
            }
        }
        if let Some(r) = matrix
            .rows()
            .into_iter()
            .position(|row| row.iter().all(|&v| v == 0.0))
        {
            return Err(Error::invalid(format!(
                "spectral response row {r} is all zero"
            )));
        }
        Ok(Self {
            matrix: matrix.as_standard_layout().into_owned(),
        })
    }

    pub fn identity(bands: usize) -> Result<Self> {
        Self::new(Array2::eye(bands))
    }

    /// One output band per `[start, end)` window, each the mean of its bands.
    pub fn band_average(in_bands: usize, windows: &[(usize, usize)]) -> Result<Self> {
        let mut m = Array2::zeros((windows.len(), in_bands));
        for (r, &(start, end)) in windows.iter().enumerate() {
            if start >= end || end > in_bands {
                return Err(Error::invalid(format!(
                    "band window [{start}, {end}) invalid for {in_bands} bands"
                )));
            }
            let w = 1.0 / (end - start) as f64;
            for c in start..end {
                m[[r, c]] = w;
            }
        }
        Self::new(m)
    }

    /// Single band equal to the mean of the first `k` bands.
    pub fn average_first(in_bands: usize, k: usize) -> Result<Self> {
        Self::band_average(in_bands, &[(0, k)])
    }

    /// Four contiguous, non-overlapping averaging windows spanning all bands.
    pub fn landsat_like(in_bands: usize) -> Result<Self> {
        if in_bands < 4 {
            return Err(Error::invalid(
                "a 4-band response needs at least 4 input bands",
            ));
        }
        let windows: Vec<(usize, usize)> = (0..4)
            .map(|i| (i * in_bands / 4, (i + 1) * in_bands / 4))
            .collect();
        Self::band_average(in_bands, &windows)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn output_bands(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_bands(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.matrix * factor)
    }
}

/// Applies `L` to every pixel spectrum.
pub fn spectral_degrade(x: &MultiBandImage, response: &SpectralResponse) -> Result<MultiBandImage> {
    if x.bands() != response.input_bands() {
        return Err(Error::dims(
            "spectral_degrade input bands",
            response.input_bands(),
            x.bands(),
        ));
    }
    Ok(MultiBandImage::from_parts(
        x.shape(),
        response.matrix().dot(&x.matrix()),
    ))
}
