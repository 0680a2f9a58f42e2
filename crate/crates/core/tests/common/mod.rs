//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfcd::degradation::{BandNoise, BlurKernel, DecimationGrid, SensorModel, SpectralResponse};
use rfcd::fusion::{build_normal_system, solve_fusion, FusionSettings};
use rfcd::{GridShape, MultiBandImage};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_image(
    bands: usize,
    shape: GridShape,
    lo: f64,
    hi: f64,
    rng: &mut ChaCha8Rng,
) -> MultiBandImage {
    let values = (0..bands * shape.pixel_count())
        .map(|_| rng.random_range(lo..hi))
        .collect();
    MultiBandImage::new(bands, shape, values).unwrap()
}

/// `B` with `(x·B)_p = Σ_q x_q B[q, p]`, built tap by tap with wraparound.
pub fn blur_matrix(kernel: &BlurKernel, shape: GridShape) -> DMatrix<f64> {
    let (rows, cols) = (shape.rows() as isize, shape.cols() as isize);
    let n = shape.pixel_count();
    let r = kernel.radius() as isize;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..rows {
        for j in 0..cols {
            for a in 0..kernel.size() {
                for c in 0..kernel.size() {
                    let si = (i - (a as isize - r)).rem_euclid(rows);
                    let sj = (j - (c as isize - r)).rem_euclid(cols);
                    b[((si * cols + sj) as usize, (i * cols + j) as usize)] += kernel.tap(a, c);
                }
            }
        }
    }
    b
}

/// `S` (n × m) with a single one per column at the sampled HR pixel.
pub fn selection_matrix(grid: &DecimationGrid, hr: GridShape) -> DMatrix<f64> {
    let lr = grid.lr_shape(hr).unwrap();
    let (pr, pc) = grid.phase();
    let mut s = DMatrix::zeros(hr.pixel_count(), lr.pixel_count());
    for i in 0..lr.rows() {
        for j in 0..lr.cols() {
            let hr_row = i * grid.row_factor() + pr;
            let hr_col = j * grid.col_factor() + pc;
            s[(hr_row * hr.cols() + hr_col, i * lr.cols() + j)] = 1.0;
        }
    }
    s
}

pub fn to_dense(x: &MultiBandImage) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.bands(), x.pixel_count(), x.as_slice())
}

/// Inputs of a dense fusion solve.
pub struct DenseFusion<'a> {
    pub l: &'a DMatrix<f64>,
    pub hr_var: &'a [f64],
    pub lr_var: &'a [f64],
    pub kernel: &'a BlurKernel,
    pub grid: &'a DecimationGrid,
    pub lambda: f64,
}

/// Minimizes the fusion objective through the vectorized normal equations
/// `(Mᵀ W M + λ I) x = Mᵀ W y + λ x̄` with explicit Kronecker operators.
pub fn dense_fusion(
    p: &DenseFusion,
    y_chr: &MultiBandImage,
    y_lr: &MultiBandImage,
    xbar: &MultiBandImage,
) -> DMatrix<f64> {
    let hr = y_chr.shape();
    let m = p.l.ncols();
    let n = hr.pixel_count();
    let r = blur_matrix(p.kernel, hr) * selection_matrix(p.grid, hr);
    let lr_n = r.ncols();
    let eye_n = DMatrix::<f64>::identity(n, n);
    let eye_m = DMatrix::<f64>::identity(m, m);
    // row-major vectorization: vec(A X) = (A ⊗ I) vec X, vec(X R) = (I ⊗ Rᵀ) vec X
    let m_hr = p.l.kronecker(&eye_n);
    let m_lr = eye_m.kronecker(&r.transpose());
    let w_hr = DMatrix::from_diagonal(&DVector::from_iterator(
        p.l.nrows() * n,
        (0..p.l.nrows()).flat_map(|b| std::iter::repeat_n(1.0 / p.hr_var[b], n)),
    ));
    let w_lr = DMatrix::from_diagonal(&DVector::from_iterator(
        m * lr_n,
        (0..m).flat_map(|b| std::iter::repeat_n(1.0 / p.lr_var[b], lr_n)),
    ));
    let y_h = DVector::from_column_slice(y_chr.as_slice());
    let y_l = DVector::from_column_slice(y_lr.as_slice());
    let xb = DVector::from_column_slice(xbar.as_slice());
    let a = m_hr.transpose() * &w_hr * &m_hr
        + m_lr.transpose() * &w_lr * &m_lr
        + DMatrix::<f64>::identity(m * n, m * n) * p.lambda;
    let rhs = m_hr.transpose() * &w_hr * y_h + m_lr.transpose() * &w_lr * y_l + xb * p.lambda;
    let x = a.lu().solve(&rhs).expect("nonsingular");
    DMatrix::from_row_slice(m, n, x.as_slice())
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Random fusion problem small enough for [`dense_fusion`].
pub struct FusionInstance {
    pub y_chr: MultiBandImage,
    pub y_lr: MultiBandImage,
    pub xbar: MultiBandImage,
    pub l: SpectralResponse,
    pub hr_var: Vec<f64>,
    pub lr_var: Vec<f64>,
    pub kernel: BlurKernel,
    pub grid: DecimationGrid,
}

impl FusionInstance {
    pub fn random(
        bands: usize,
        hr_bands: usize,
        hr: GridShape,
        d: usize,
        ksize: usize,
        seed: u64,
    ) -> Self {
        let mut r = rng(seed);
        let grid =
            DecimationGrid::with_phase(d, d, (r.random_range(0..d), r.random_range(0..d))).unwrap();
        let lr_shape = grid.lr_shape(hr).unwrap();
        let l_values: Vec<f64> = (0..hr_bands * bands)
            .map(|_| r.random_range(0.05..1.0))
            .collect();
        let l = SpectralResponse::new(
            ndarray::Array2::from_shape_vec((hr_bands, bands), l_values).unwrap(),
        )
        .unwrap();
        let sigma = r.random_range(0.6..1.5);
        Self {
            y_chr: uniform_image(hr_bands, hr, -1.0, 1.0, &mut r),
            y_lr: uniform_image(bands, lr_shape, -1.0, 1.0, &mut r),
            xbar: uniform_image(bands, hr, -1.0, 1.0, &mut r),
            l,
            hr_var: (0..hr_bands).map(|_| r.random_range(0.1..2.0)).collect(),
            lr_var: (0..bands).map(|_| r.random_range(0.1..2.0)).collect(),
            kernel: BlurKernel::gaussian(ksize, sigma).unwrap(),
            grid,
        }
    }

    pub fn sensors(&self) -> (SensorModel, SensorModel) {
        (
            SensorModel::spectral(self.l.clone(), BandNoise::new(self.hr_var.clone()).unwrap())
                .unwrap(),
            SensorModel::spatial(
                self.kernel.clone(),
                self.grid,
                BandNoise::new(self.lr_var.clone()).unwrap(),
            ),
        )
    }

    pub fn dense(&self, lambda: f64) -> DMatrix<f64> {
        let l = DMatrix::from_row_slice(
            self.l.output_bands(),
            self.l.input_bands(),
            self.l.matrix().as_slice().unwrap(),
        );
        dense_fusion(
            &DenseFusion {
                l: &l,
                hr_var: &self.hr_var,
                lr_var: &self.lr_var,
                kernel: &self.kernel,
                grid: &self.grid,
                lambda,
            },
            &self.y_chr,
            &self.y_lr,
            &self.xbar,
        )
    }

    pub fn solve(&self, lambda: f64) -> MultiBandImage {
        let (hr, lr) = self.sensors();
        let sys = build_normal_system(
            &self.y_lr,
            &self.y_chr,
            &hr,
            &lr,
            &FusionSettings {
                lambda_reg: lambda,
                ..FusionSettings::default()
            },
            &self.xbar,
        )
        .unwrap();
        solve_fusion(&sys).unwrap()
    }
}
