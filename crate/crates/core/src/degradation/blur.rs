//! Space-invariant blur applied as a cyclic convolution on each band.

use rustfft::num_complex::Complex64;

use super::fft2::Fft2;
use crate::error::{Error, Result};
use crate::image::{GridShape, MultiBandImage};

const SUM_TOLERANCE: f64 = 1e-12;
const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Kernels up to this side length are applied with the direct loop.
const DIRECT_MAX_SIZE: usize = 7;

/// Odd, square, unit-sum kernel symmetric under 180° rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    size: usize,
    taps: Vec<f64>,
}

impl BlurKernel {
    /// Validates a `size × size` row-major tap array.
    pub fn new(size: usize, taps: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "blur kernel size must be odd, got {size}"
            )));
        }
        if taps.len() != size * size {
            return Err(Error::dims("blur kernel taps", size * size, taps.len()));
        }
        if let Some(index) = taps.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                index,
                value: taps[index],
            });
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "blur kernel taps must sum to 1, got {sum}"
            )));
        }
        let n = taps.len();
        for (i, t) in taps.iter().enumerate() {
            if (t - taps[n - 1 - i]).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::invalid(
                    "blur kernel must be symmetric under 180-degree rotation",
                ));
            }
        }
        Ok(Self { size, taps })
    }

    /// Rescales the taps to unit sum before validating.
    pub fn normalized(size: usize, taps: Vec<f64>) -> Result<Self> {
        let sum: f64 = taps.iter().sum();
        if sum == 0.0 || !sum.is_finite() {
            return Err(Error::invalid(
                "blur kernel taps must have a finite nonzero sum",
            ));
        }
        Self::new(size, taps.into_iter().map(|t| t / sum).collect())
    }

    /// Sampled isotropic Gaussian, normalized to unit sum.
    pub fn gaussian(size: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        if size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "blur kernel size must be odd, got {size}"
            )));
        }
        let c = (size / 2) as f64;
        let mut taps = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                let (di, dj) = (i as f64 - c, j as f64 - c);
                taps.push((-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp());
            }
        }
        // exact mirror symmetry survives the normalization division
        Self::normalized(size, taps)
    }

    /// The 1×1 identity kernel.
    pub fn delta() -> Self {
        Self {
            size: 1,
            taps: vec![1.0],
        }
    }

    /// Uniform `size × size` averaging kernel.
    pub fn uniform(size: usize) -> Result<Self> {
        Self::normalized(size, vec![1.0; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, i: usize, j: usize) -> f64 {
        self.taps[i * self.size + j]
    }

    fn check_fits(&self, shape: GridShape) -> Result<()> {
        if self.size > shape.rows() || self.size > shape.cols() {
            return Err(Error::invalid(format!(
                "blur kernel {}x{} larger than image {shape}",
                self.size, self.size
            )));
        }
        Ok(())
    }

    /// Kernel embedded on a grid with its center at the origin (cyclic).
    fn embed(&self, shape: GridShape) -> Vec<f64> {
        let (rows, cols) = (shape.rows(), shape.cols());
        let r = self.radius() as isize;
        let mut grid = vec![0.0; shape.pixel_count()];
        for a in 0..self.size {
            for b in 0..self.size {
                let i = (a as isize - r).rem_euclid(rows as isize) as usize;
                let j = (b as isize - r).rem_euclid(cols as isize) as usize;
                grid[i * cols + j] += self.tap(a, b);
            }
        }
        grid
    }
}

/// Circular convolution of every band with `kernel`.
pub fn cyclic_blur(x: &MultiBandImage, kernel: &BlurKernel) -> Result<MultiBandImage> {
    let shape = x.shape();
    kernel.check_fits(shape)?;
    let mut out = x.matrix().to_owned();
    if kernel.size() <= DIRECT_MAX_SIZE {
        let mut scratch = vec![0.0; shape.pixel_count()];
        for mut band in out.rows_mut() {
            let src = band.as_slice_mut().expect("standard layout");
            blur_direct(src, shape, kernel, &mut scratch);
            src.copy_from_slice(&scratch);
        }
    } else {
        let conv = CyclicConvolution::new(kernel, shape)?;
        let mut scratch = Vec::new();
        for mut band in out.rows_mut() {
            conv.apply_in_place(band.as_slice_mut().expect("standard layout"), &mut scratch);
        }
    }
    Ok(MultiBandImage::from_parts(shape, out))
}

/// Spatial-domain circular convolution of one raster.
pub(crate) fn blur_direct(src: &[f64], shape: GridShape, kernel: &BlurKernel, out: &mut [f64]) {
    let (rows, cols) = (shape.rows() as isize, shape.cols() as isize);
    let r = kernel.radius() as isize;
    let k = kernel.size();
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for a in 0..k {
                let si = (i - (a as isize - r)).rem_euclid(rows) as usize;
                let row = &src[si * cols as usize..(si + 1) * cols as usize];
                for b in 0..k {
                    let sj = (j - (b as isize - r)).rem_euclid(cols) as usize;
                    acc += kernel.taps[a * k + b] * row[sj];
                }
            }
            out[(i * cols + j) as usize] = acc;
        }
    }
}

/// Cached frequency response of a kernel on a fixed grid.
///
/// Symmetric kernels have a real transfer function, which lets products of
/// blur operators be formed pointwise in the frequency domain.
#[derive(Clone)]
pub struct CyclicConvolution {
    shape: GridShape,
    fft: Fft2,
    transfer: Vec<f64>,
}

impl CyclicConvolution {
    pub fn new(kernel: &BlurKernel, shape: GridShape) -> Result<Self> {
        kernel.check_fits(shape)?;
        let fft = Fft2::new(shape);
        let transfer = fft
            .forward_real(&kernel.embed(shape))
            .into_iter()
            .map(|z| z.re)
            .collect();
        Ok(Self {
            shape,
            fft,
            transfer,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Real eigenvalues of the circulant blur operator.
    pub fn transfer(&self) -> &[f64] {
        &self.transfer
    }

    pub(crate) fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub(crate) fn apply_in_place(&self, band: &mut [f64], scratch: &mut Vec<Complex64>) {
        self.fft.filter_real(band, &self.transfer, scratch);
    }
}
