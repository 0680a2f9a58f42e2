use ndarray::Array2;

use crate::degradation::DecimationGrid;
use crate::error::{Error, Result};
use crate::image::{GridShape, MultiBandImage};

/// Spatial interpolation used for the coarse latent estimate `X̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Each HR pixel copies the LR sample of its block.
    Nearest,
    /// Separable linear interpolation between sample sites, clamped at the
    /// borders.
    #[default]
    Bilinear,
}

/// Per-axis interpolation weights: HR index → (lo, hi, weight of hi).
fn axis_weights(
    hr_len: usize,
    lr_len: usize,
    factor: usize,
    phase: usize,
    mode: Interpolation,
) -> Vec<(usize, usize, f64)> {
    (0..hr_len)
        .map(|i| match mode {
            Interpolation::Nearest => {
                let k = (i / factor).min(lr_len - 1);
                (k, k, 0.0)
            }
            Interpolation::Bilinear => {
                let t = (i as f64 - phase as f64) / factor as f64;
                if t <= 0.0 {
                    (0, 0, 0.0)
                } else if t >= (lr_len - 1) as f64 {
                    (lr_len - 1, lr_len - 1, 0.0)
                } else {
                    let lo = t.floor() as usize;
                    (lo, lo + 1, t - lo as f64)
                }
            }
        })
        .collect()
}

/// Naive upsampling of an LR image to the HR grid.
pub fn interpolate_coarse(
    y_lr: &MultiBandImage,
    grid: &DecimationGrid,
    hr_shape: GridShape,
    mode: Interpolation,
) -> Result<MultiBandImage> {
    let lr = grid.lr_shape(hr_shape)?;
    if lr != y_lr.shape() {
        return Err(Error::dims("interpolate_coarse LR grid", lr, y_lr.shape()));
    }
    let (phase_r, phase_c) = grid.phase();
    let rw = axis_weights(hr_shape.rows(), lr.rows(), grid.row_factor(), phase_r, mode);
    let cw = axis_weights(hr_shape.cols(), lr.cols(), grid.col_factor(), phase_c, mode);
    let mut out = Array2::zeros((y_lr.bands(), hr_shape.pixel_count()));
    let mut tmp = vec![0.0; hr_shape.rows() * lr.cols()];
    for (b, mut dst) in out.rows_mut().into_iter().enumerate() {
        let src = y_lr.band(b);
        let src = src.as_slice().expect("standard layout");
        // rows first: (hr rows) x (lr cols)
        for (i, &(lo, hi, w)) in rw.iter().enumerate() {
            for j in 0..lr.cols() {
                tmp[i * lr.cols() + j] =
                    (1.0 - w) * src[lo * lr.cols() + j] + w * src[hi * lr.cols() + j];
            }
        }
        let dst = dst.as_slice_mut().expect("standard layout");
        for i in 0..hr_shape.rows() {
            let row = &tmp[i * lr.cols()..(i + 1) * lr.cols()];
            for (j, &(lo, hi, w)) in cw.iter().enumerate() {
                dst[hr_shape.index(i, j)] = (1.0 - w) * row[lo] + w * row[hi];
            }
        }
    }
    Ok(MultiBandImage::from_parts(hr_shape, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::decimate;

    fn shape(r: usize, c: usize) -> GridShape {
        GridShape::new(r, c).unwrap()
    }

    #[test]
    fn constants_are_preserved() {
        let y = MultiBandImage::filled(3, shape(3, 2), 4.25);
        let g = DecimationGrid::with_phase(3, 2, (1, 1)).unwrap();
        for mode in [Interpolation::Nearest, Interpolation::Bilinear] {
            let x = interpolate_coarse(&y, &g, shape(9, 4), mode).unwrap();
            assert!(x.as_slice().iter().all(|&v| (v - 4.25).abs() < 1e-15));
        }
    }

    #[test]
    fn unit_factor_returns_input() {
        let y = MultiBandImage::new(1, shape(2, 3), (0..6).map(f64::from).collect()).unwrap();
        let g = DecimationGrid::square(1).unwrap();
        for mode in [Interpolation::Nearest, Interpolation::Bilinear] {
            assert_eq!(interpolate_coarse(&y, &g, y.shape(), mode).unwrap(), y);
        }
    }

    #[test]
    fn sample_sites_reproduce_input() {
        let y = MultiBandImage::new(2, shape(3, 4), (0..24).map(|v| (v as f64).sqrt()).collect())
            .unwrap();
        for phase in [(0, 0), (1, 1)] {
            let g = DecimationGrid::with_phase(2, 2, phase).unwrap();
            for mode in [Interpolation::Nearest, Interpolation::Bilinear] {
                let x = interpolate_coarse(&y, &g, shape(6, 8), mode).unwrap();
                let back = decimate(&x, &g).unwrap();
                assert!(back.subtract(&y).unwrap().frobenius_norm() < 1e-14);
            }
        }
    }

    /// Two-pass 1-D linear interpolation written independently.
    fn interp_1d(samples: &[f64], positions: &[f64], query: f64) -> f64 {
        if query <= positions[0] {
            return samples[0];
        }
        let last = positions.len() - 1;
        if query >= positions[last] {
            return samples[last];
        }
        let k = positions.iter().rposition(|&p| p <= query).unwrap();
        let t = (query - positions[k]) / (positions[k + 1] - positions[k]);
        samples[k] + t * (samples[k + 1] - samples[k])
    }

    #[test]
    fn bilinear_matches_separable_oracle() {
        let lr = shape(4, 4);
        let vals: Vec<f64> = (0..16).map(|v| ((v * 7) % 11) as f64 - 3.0).collect();
        let y = MultiBandImage::new(1, lr, vals.clone()).unwrap();
        let g = DecimationGrid::square(2).unwrap();
        let x = interpolate_coarse(&y, &g, shape(8, 8), Interpolation::Bilinear).unwrap();
        let pos: Vec<f64> = (0..4).map(|k| (2 * k) as f64).collect();
        // pass 1 along rows of the LR grid for every HR column position
        for i in 0..8 {
            let column_interp: Vec<f64> = (0..4)
                .map(|c| {
                    let col: Vec<f64> = (0..4).map(|r| vals[r * 4 + c]).collect();
                    interp_1d(&col, &pos, i as f64)
                })
                .collect();
            for j in 0..8 {
                let expected = interp_1d(&column_interp, &pos, j as f64);
                assert!((x.get(0, i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let y = MultiBandImage::zeros(1, shape(3, 3));
        assert!(interpolate_coarse(
            &y,
            &DecimationGrid::square(2).unwrap(),
            shape(8, 8),
            Interpolation::Bilinear
        )
        .is_err());
    }
}
