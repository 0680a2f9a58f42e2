//! Uniform decimation `S` and its adjoint, zero-interpolation `Sᵀ`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{GridShape, MultiBandImage};

/// Keeps one pixel per `row_factor × col_factor` block, at offset `phase`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecimationGrid {
    row_factor: usize,
    col_factor: usize,
    phase: (usize, usize),
}

impl DecimationGrid {
    pub fn new(row_factor: usize, col_factor: usize) -> Result<Self> {
        Self::with_phase(row_factor, col_factor, (0, 0))
    }

    /// Square factor `d` in both directions.
    pub fn square(d: usize) -> Result<Self> {
        Self::new(d, d)
    }

    pub fn with_phase(row_factor: usize, col_factor: usize, phase: (usize, usize)) -> Result<Self> {
        if row_factor == 0 || col_factor == 0 {
            return Err(Error::invalid("decimation factors must be positive"));
        }
        if phase.0 >= row_factor || phase.1 >= col_factor {
            return Err(Error::invalid(format!(
                "decimation phase {phase:?} outside the {row_factor}x{col_factor} block"
            )));
        }
        Ok(Self {
            row_factor,
            col_factor,
            phase,
        })
    }

    pub fn row_factor(&self) -> usize {
        self.row_factor
    }

    pub fn col_factor(&self) -> usize {
        self.col_factor
    }

    pub fn phase(&self) -> (usize, usize) {
        self.phase
    }

    /// Composite factor `d = d_r · d_c`.
    pub fn factor(&self) -> usize {
        self.row_factor * self.col_factor
    }

    pub fn is_identity(&self) -> bool {
        self.row_factor == 1 && self.col_factor == 1
    }

    /// LR grid obtained from an HR grid.
    pub fn lr_shape(&self, hr: GridShape) -> Result<GridShape> {
        if !hr.rows().is_multiple_of(self.row_factor) || !hr.cols().is_multiple_of(self.col_factor) {
            return Err(Error::invalid(format!(
                "grid {hr} not divisible by decimation factors {}x{}",
                self.row_factor, self.col_factor
            )));
        }
        GridShape::new(hr.rows() / self.row_factor, hr.cols() / self.col_factor)
    }

    /// HR raster index of LR pixel `(i, j)`.
    #[inline]
    pub fn hr_index(&self, hr: GridShape, i: usize, j: usize) -> usize {
        hr.index(
            i * self.row_factor + self.phase.0,
            j * self.col_factor + self.phase.1,
        )
    }

    pub(crate) fn decimate_band(&self, hr: GridShape, lr: GridShape, src: &[f64], out: &mut [f64]) {
        for i in 0..lr.rows() {
            for j in 0..lr.cols() {
                out[lr.index(i, j)] = src[self.hr_index(hr, i, j)];
            }
        }
    }

    pub(crate) fn upsample_band(&self, hr: GridShape, lr: GridShape, src: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..lr.rows() {
            for j in 0..lr.cols() {
                out[self.hr_index(hr, i, j)] = src[lr.index(i, j)];
            }
        }
    }
}

/// Uniform subsampling of every band.
pub fn decimate(x: &MultiBandImage, grid: &DecimationGrid) -> Result<MultiBandImage> {
    let hr = x.shape();
    let lr = grid.lr_shape(hr)?;
    let mut out = Array2::zeros((x.bands(), lr.pixel_count()));
    for (b, mut row) in out.rows_mut().into_iter().enumerate() {
        let src = x.band(b);
        grid.decimate_band(
            hr,
            lr,
            src.as_slice().expect("standard layout"),
            row.as_slice_mut().expect("standard layout"),
        );
    }
    Ok(MultiBandImage::from_parts(lr, out))
}

/// Zero-interpolation onto the HR grid (adjoint of [`decimate`]).
pub fn upsample_zero(
    y: &MultiBandImage,
    grid: &DecimationGrid,
    hr_shape: GridShape,
) -> Result<MultiBandImage> {
    let lr = grid.lr_shape(hr_shape)?;
    if lr != y.shape() {
        return Err(Error::dims("upsample_zero LR grid", lr, y.shape()));
    }
    let mut out = Array2::zeros((y.bands(), hr_shape.pixel_count()));
    for (b, mut row) in out.rows_mut().into_iter().enumerate() {
        grid.upsample_band(
            hr_shape,
            lr,
            y.band(b).as_slice().expect("standard layout"),
            row.as_slice_mut().expect("standard layout"),
        );
    }
    Ok(MultiBandImage::from_parts(hr_shape, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(r: usize, c: usize) -> GridShape {
        GridShape::new(r, c).unwrap()
    }

    #[test]
    fn unit_factor_is_identity() {
        let x = MultiBandImage::new(1, shape(2, 3), (0..6).map(f64::from).collect()).unwrap();
        let g = DecimationGrid::new(1, 1).unwrap();
        assert_eq!(decimate(&x, &g).unwrap(), x);
        assert_eq!(upsample_zero(&x, &g, x.shape()).unwrap(), x);
    }

    #[test]
    fn decimate_four_by_four() {
        let x = MultiBandImage::new(1, shape(4, 4), (0..16).map(f64::from).collect()).unwrap();
        let y = decimate(&x, &DecimationGrid::square(2).unwrap()).unwrap();
        assert_eq!(y.shape(), shape(2, 2));
        assert_eq!(y.as_slice(), &[0.0, 2.0, 8.0, 10.0]);
        let y = decimate(&x, &DecimationGrid::with_phase(2, 2, (1, 0)).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[4.0, 6.0, 12.0, 14.0]);
    }

    #[test]
    fn upsample_places_samples_on_phase_grid() {
        let y = MultiBandImage::new(1, shape(1, 1), vec![7.0]).unwrap();
        let g = DecimationGrid::square(2).unwrap();
        let x = upsample_zero(&y, &g, shape(2, 2)).unwrap();
        assert_eq!(x.as_slice(), &[7.0, 0.0, 0.0, 0.0]);
        let zero = MultiBandImage::zeros(3, shape(2, 3));
        let up = upsample_zero(&zero, &g, shape(4, 6)).unwrap();
        assert_eq!(up.frobenius_norm(), 0.0);
    }

    #[test]
    fn decimate_after_upsample_is_identity_and_sum_preserved() {
        let y = MultiBandImage::new(
            2,
            shape(3, 2),
            (0..12).map(|v| v as f64 * 1.5 - 4.0).collect(),
        )
        .unwrap();
        for phase in [(0, 0), (1, 2), (2, 1)] {
            let g = DecimationGrid::with_phase(3, 3, phase).unwrap();
            let up = upsample_zero(&y, &g, shape(9, 6)).unwrap();
            let sum_y: f64 = y.as_slice().iter().sum();
            let sum_up: f64 = up.as_slice().iter().sum();
            assert_eq!(sum_y, sum_up);
            assert_eq!(decimate(&up, &g).unwrap(), y);
        }
    }

    #[test]
    fn indivisible_and_inconsistent_shapes() {
        let x = MultiBandImage::zeros(1, shape(5, 4));
        assert!(decimate(&x, &DecimationGrid::square(2).unwrap()).is_err());
        let y = MultiBandImage::zeros(1, shape(2, 2));
        assert!(upsample_zero(&y, &DecimationGrid::square(2).unwrap(), shape(6, 4)).is_err());
        assert!(DecimationGrid::with_phase(2, 2, (2, 0)).is_err());
        assert!(DecimationGrid::new(0, 1).is_err());
    }
}
