//! Pixel-side operators of the fusion problem acting on single-band rasters
//! (row vectors of the image matrix): `x ↦ x·R`, `v ↦ v·Rᵀ`, and the
//! shifted inverse `r ↦ r·(s·I + R·Rᵀ)⁻¹`.

use rustfft::num_complex::Complex64;

use crate::degradation::fft2::Fft2;
use crate::degradation::{CyclicConvolution, DecimationGrid, SpatialDegradation};
use crate::error::Result;
use crate::image::GridShape;

#[derive(Clone)]
pub(crate) struct PixelOperator {
    hr: GridShape,
    lr: GridShape,
    grid: DecimationGrid,
    blur: CyclicConvolution,
    lr_fft: Fft2,
    /// Eigenvalues of the LR-circulant matrix `Rᵀ·R = Sᵀ·B²·S`.
    gram_lr: Vec<f64>,
}

/// Reusable buffers for one thread.
#[derive(Default)]
pub(crate) struct Scratch {
    complex: Vec<Complex64>,
    hr: Vec<f64>,
    lr: Vec<f64>,
}

impl PixelOperator {
    pub(crate) fn new(spatial: &SpatialDegradation, hr: GridShape) -> Result<Self> {
        let grid = spatial.grid;
        let lr = grid.lr_shape(hr)?;
        let blur = CyclicConvolution::new(&spatial.kernel, hr)?;

        // kernel of B² on the HR grid
        let hr_fft = blur.fft();
        let mut sq: Vec<Complex64> = blur
            .transfer()
            .iter()
            .map(|h| Complex64::new(h * h, 0.0))
            .collect();
        hr_fft.inverse(&mut sq);

        // SᵀB²S is circulant on the LR grid with the B² kernel sampled at
        // multiples of the decimation factors (independent of the phase)
        let mut lr_kernel = vec![0.0; lr.pixel_count()];
        for u in 0..lr.rows() {
            for v in 0..lr.cols() {
                lr_kernel[lr.index(u, v)] =
                    sq[hr.index(u * grid.row_factor(), v * grid.col_factor())].re;
            }
        }
        let lr_fft = Fft2::new(lr);
        let gram_lr = lr_fft
            .forward_real(&lr_kernel)
            .into_iter()
            .map(|z| z.re.max(0.0))
            .collect();
        Ok(Self {
            hr,
            lr,
            grid,
            blur,
            lr_fft,
            gram_lr,
        })
    }

    pub(crate) fn lr(&self) -> GridShape {
        self.lr
    }

    /// `x·R` = decimate(blur(x)).
    pub(crate) fn forward(&self, x: &[f64], out: &mut [f64], s: &mut Scratch) {
        s.hr.clear();
        s.hr.extend_from_slice(x);
        self.blur.apply_in_place(&mut s.hr, &mut s.complex);
        self.grid.decimate_band(self.hr, self.lr, &s.hr, out);
    }

    /// `v·Rᵀ` = blur(upsample_zero(v)).
    pub(crate) fn adjoint(&self, v: &[f64], out: &mut [f64], s: &mut Scratch) {
        self.grid.upsample_band(self.hr, self.lr, v, out);
        self.blur.apply_in_place(out, &mut s.complex);
    }

    /// `x·R·Rᵀ`.
    pub(crate) fn gram(&self, x: &[f64], out: &mut [f64], s: &mut Scratch) {
        let mut lr = std::mem::take(&mut s.lr);
        lr.resize(self.lr.pixel_count(), 0.0);
        self.forward(x, &mut lr, s);
        self.adjoint(&lr, out, s);
        s.lr = lr;
    }

    /// Solves `w·(shift·I + R·Rᵀ) = rhs` exactly through the Woodbury
    /// identity, the inner `m × m` system being diagonal in the LR Fourier
    /// basis.
    pub(crate) fn solve_shifted(&self, rhs: &[f64], shift: f64, out: &mut [f64], s: &mut Scratch) {
        debug_assert!(shift > 0.0);
        let mut lr = std::mem::take(&mut s.lr);
        lr.resize(self.lr.pixel_count(), 0.0);
        self.forward(rhs, &mut lr, s);
        let transfer: Vec<f64> = self.gram_lr.iter().map(|g| 1.0 / (shift + g)).collect();
        self.lr_fft.filter_real(&mut lr, &transfer, &mut s.complex);
        self.adjoint(&lr, out, s);
        for (o, r) in out.iter_mut().zip(rhs) {
            *o = (r - *o) / shift;
        }
        s.lr = lr;
    }
}
