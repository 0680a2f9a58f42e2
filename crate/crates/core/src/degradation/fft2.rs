//! Separable 2-D FFT over a raster stored in row-major order.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::image::GridShape;

#[derive(Clone)]
pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(shape: GridShape) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows: shape.rows(),
            cols: shape.cols(),
            row_fwd: planner.plan_fft_forward(shape.cols()),
            row_inv: planner.plan_fft_inverse(shape.cols()),
            col_fwd: planner.plan_fft_forward(shape.rows()),
            col_inv: planner.plan_fft_inverse(shape.rows()),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.rows * self.cols
    }

    fn run(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.len());
        row.process(data);
        if self.rows > 1 {
            let mut column = vec![Complex64::default(); self.rows];
            for c in 0..self.cols {
                for r in 0..self.rows {
                    column[r] = data[r * self.cols + c];
                }
                col.process(&mut column);
                for r in 0..self.rows {
                    data[r * self.cols + c] = column[r];
                }
            }
        }
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform, normalized so that `inverse(forward(x)) = x`.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Forward transform of a real raster.
    pub(crate) fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Multiplies the spectrum of `data` by a real transfer function in place.
    pub(crate) fn filter_real(
        &self,
        data: &mut [f64],
        transfer: &[f64],
        scratch: &mut Vec<Complex64>,
    ) {
        scratch.clear();
        scratch.extend(data.iter().map(|&v| Complex64::new(v, 0.0)));
        self.forward(scratch);
        for (z, h) in scratch.iter_mut().zip(transfer) {
            *z *= *h;
        }
        self.inverse(scratch);
        for (d, z) in data.iter_mut().zip(scratch.iter()) {
            *d = z.re;
        }
    }
}
