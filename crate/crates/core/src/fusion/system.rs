use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;

use super::pixel_op::{PixelOperator, Scratch};
use crate::degradation::{BandNoise, BlurKernel, DecimationGrid, SensorModel, SpatialDegradation};
use crate::error::{Error, Result};
use crate::image::{GridShape, MultiBandImage};

/// Parameters of the latent-image (fusion) step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionSettings {
    /// Absolute weight of `‖X − X̄‖_F²`.
    pub lambda_reg: f64,
    /// Target relative stationarity residual.
    pub solver_tol: f64,
    /// Refinement iterations allowed when the direct solve misses the target.
    pub max_iters: usize,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            lambda_reg: 1e-2,
            solver_tol: 1e-10,
            max_iters: 200,
        }
    }
}

impl FusionSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_reg > 0.0) || !self.lambda_reg.is_finite() {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {}",
                self.lambda_reg
            )));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return Err(Error::invalid(format!(
                "fusion tolerance must lie in (0, 1), got {}",
                self.solver_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("fusion max_iters must be at least 1"));
        }
        Ok(())
    }

    /// Converts a dimensionless weight into an absolute `λ` by dividing by
    /// the mean squared LR observation `‖Y_LR‖_F² / (bands·pixels)`.
    pub fn relative_lambda(relative: f64, y_lr: &MultiBandImage) -> f64 {
        let entries = (y_lr.bands() * y_lr.pixel_count()) as f64;
        let ms = y_lr.frobenius_norm().powi(2) / entries;
        if ms > 0.0 {
            relative / ms
        } else {
            relative
        }
    }
}

/// Normal equations `C1·X + Λ_LR⁻¹·X·R·Rᵀ = C3` of the fusion step, with
/// `R = B·S`.
#[derive(Clone)]
pub struct SylvesterSystem {
    pub(crate) c1: Array2<f64>,
    pub(crate) c3: Array2<f64>,
    pub(crate) lambda_reg: f64,
    pub(crate) xbar: MultiBandImage,
    pub(crate) lr_inv_var: Vec<f64>,
    pub(crate) spatial: SpatialDegradation,
    pub(crate) pixel: PixelOperator,
    pub(crate) settings: FusionSettings,
    // kept to evaluate the fusion objective
    pub(crate) spectral: Array2<f64>,
    pub(crate) hr_inv_var: Vec<f64>,
    pub(crate) y_chr: MultiBandImage,
    pub(crate) y_lr: MultiBandImage,
}

impl std::fmt::Debug for SylvesterSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SylvesterSystem")
            .field("bands", &self.c1.nrows())
            .field("shape", &self.xbar.shape())
            .field("lambda_reg", &self.lambda_reg)
            .finish_non_exhaustive()
    }
}

/// Spectral matrix of the HR sensor, identity when absent.
pub(crate) fn spectral_matrix(sensor: &SensorModel, latent_bands: usize) -> Array2<f64> {
    match &sensor.spectral {
        Some(l) => l.matrix().to_owned(),
        None => Array2::eye(latent_bands),
    }
}

/// Spatial part of the LR sensor, no-op when absent.
pub(crate) fn spatial_part(sensor: &SensorModel) -> SpatialDegradation {
    match &sensor.spatial {
        Some(s) => s.clone(),
        None => SpatialDegradation::new(
            BlurKernel::delta(),
            DecimationGrid::square(1).expect("unit factor"),
        ),
    }
}

/// Checks the sensor pair against a robust-fusion layout and returns the
/// latent bands and HR grid.
pub(crate) fn check_sensors(
    y_hr: &MultiBandImage,
    y_lr: &MultiBandImage,
    hr_sensor: &SensorModel,
    lr_sensor: &SensorModel,
) -> Result<(usize, GridShape)> {
    if hr_sensor.spatial.is_some() {
        return Err(Error::invalid("the HR sensor must not blur or decimate"));
    }
    if lr_sensor.spectral.is_some() {
        return Err(Error::invalid("the LR sensor must not degrade spectrally"));
    }
    let bands = y_lr.bands();
    let hr_shape = y_hr.shape();
    if let Some(l) = &hr_sensor.spectral {
        if l.input_bands() != bands {
            return Err(Error::dims(
                "spectral response input bands",
                bands,
                l.input_bands(),
            ));
        }
    }
    let hr_bands = hr_sensor.output_bands(bands);
    if y_hr.bands() != hr_bands {
        return Err(Error::dims("HR observation bands", hr_bands, y_hr.bands()));
    }
    let lr_shape = lr_sensor.output_shape(hr_shape)?;
    if y_lr.shape() != lr_shape {
        return Err(Error::dims("LR observation grid", lr_shape, y_lr.shape()));
    }
    check_noise(&hr_sensor.noise, hr_bands, "HR noise bands")?;
    check_noise(&lr_sensor.noise, bands, "LR noise bands")?;
    Ok((bands, hr_shape))
}

fn check_noise(noise: &BandNoise, bands: usize, context: &'static str) -> Result<()> {
    if noise.bands() != bands {
        return Err(Error::dims(context, bands, noise.bands()));
    }
    Ok(())
}

/// Applies `f(band, src_row, out_row, scratch)` to every row in parallel.
pub(crate) fn per_band<F>(src: &Array2<f64>, out_len: usize, f: F) -> Array2<f64>
where
    F: Fn(usize, &[f64], &mut [f64], &mut Scratch) + Sync,
{
    let bands = src.nrows();
    let n = src.ncols();
    let src = src.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let mut out = vec![0.0; bands * out_len];
    out.par_chunks_mut(out_len)
        .zip(src.par_chunks(n))
        .enumerate()
        .for_each_init(Scratch::default, |s, (b, (o, i))| f(b, i, o, s));
    Array2::from_shape_vec((bands, out_len), out).expect("band-major buffer")
}

/// Assembles the fusion normal equations for the current corrected HR image.
pub fn build_normal_system(
    y_lr: &MultiBandImage,
    y_chr: &MultiBandImage,
    hr_sensor: &SensorModel,
    lr_sensor: &SensorModel,
    settings: &FusionSettings,
    xbar: &MultiBandImage,
) -> Result<SylvesterSystem> {
    settings.validate()?;
    let (bands, hr_shape) = check_sensors(y_chr, y_lr, hr_sensor, lr_sensor)?;
    if xbar.bands() != bands || xbar.shape() != hr_shape {
        return Err(Error::dims(
            "coarse estimate layout",
            format!("{bands} bands on {hr_shape}"),
            format!("{} bands on {}", xbar.bands(), xbar.shape()),
        ));
    }
    let l = spectral_matrix(hr_sensor, bands);
    let hr_inv_var = hr_sensor.noise.inverse_variances();
    let lr_inv_var = lr_sensor.noise.inverse_variances();
    let spatial = spatial_part(lr_sensor);
    let pixel = PixelOperator::new(&spatial, hr_shape)?;

    // Lᵀ Λ_HR⁻¹
    let mut lt_w = l.t().to_owned();
    for (mut col, w) in lt_w.columns_mut().into_iter().zip(&hr_inv_var) {
        col *= *w;
    }
    let mut c1 = lt_w.dot(&l);
    for i in 0..bands {
        c1[(i, i)] += settings.lambda_reg;
    }
    // symmetrize against round-off
    let c1 = (&c1 + &c1.t()) * 0.5;

    let n = hr_shape.pixel_count();
    let mut c3 = lt_w.dot(&y_chr.matrix());
    let back = per_band(&y_lr.matrix().to_owned(), n, |_, v, o, s| {
        pixel.adjoint(v, o, s)
    });
    for (b, mut row) in c3.rows_mut().into_iter().enumerate() {
        row.scaled_add(lr_inv_var[b], &back.row(b));
        row.scaled_add(settings.lambda_reg, &xbar.band(b));
    }

    Ok(SylvesterSystem {
        c1,
        c3,
        lambda_reg: settings.lambda_reg,
        xbar: xbar.clone(),
        lr_inv_var,
        spatial,
        pixel,
        settings: *settings,
        spectral: l,
        hr_inv_var,
        y_chr: y_chr.clone(),
        y_lr: y_lr.clone(),
    })
}

impl SylvesterSystem {
    pub fn c1(&self) -> &Array2<f64> {
        &self.c1
    }

    pub fn c3(&self) -> &Array2<f64> {
        &self.c3
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn xbar(&self) -> &MultiBandImage {
        &self.xbar
    }

    pub fn settings(&self) -> &FusionSettings {
        &self.settings
    }

    pub fn spatial(&self) -> &SpatialDegradation {
        &self.spatial
    }

    pub fn lr_inverse_variances(&self) -> &[f64] {
        &self.lr_inv_var
    }

    pub fn bands(&self) -> usize {
        self.c1.nrows()
    }

    pub fn shape(&self) -> GridShape {
        self.xbar.shape()
    }

    /// Left-hand side `C1·X + Λ_LR⁻¹·X·R·Rᵀ`.
    pub(crate) fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let n = self.shape().pixel_count();
        let mut out = per_band(x, n, |_, v, o, s| self.pixel.gram(v, o, s));
        for (mut row, w) in out.rows_mut().into_iter().zip(&self.lr_inv_var) {
            row *= *w;
        }
        out += &self.c1.dot(x);
        out
    }

    /// `‖C3 − A(X)‖_F / (1 + ‖C3‖_F)`, i.e. the relative size of half the
    /// fusion-objective gradient.
    pub fn residual(&self, x: &MultiBandImage) -> Result<f64> {
        self.check_latent(x)?;
        Ok(self.residual_of(&x.matrix().to_owned()))
    }

    pub(crate) fn residual_of(&self, x: &Array2<f64>) -> f64 {
        let r = &self.c3 - &self.apply(x);
        frobenius(&r) / (1.0 + frobenius(&self.c3))
    }

    /// Fusion objective
    /// `‖Λ_HR^{-½}(Y_cHR − L·X)‖² + ‖Λ_LR^{-½}(Y_LR − X·R)‖² + λ‖X − X̄‖²`.
    pub fn objective(&self, x: &MultiBandImage) -> Result<f64> {
        self.check_latent(x)?;
        let hr = weighted_sq(
            &(&self.y_chr.matrix() - &self.spectral.dot(&x.matrix())),
            &self.hr_inv_var,
        );
        let lr_pred = per_band(
            &x.matrix().to_owned(),
            self.pixel.lr().pixel_count(),
            |_, v, o, s| self.pixel.forward(v, o, s),
        );
        let lr = weighted_sq(&(&self.y_lr.matrix() - &lr_pred), &self.lr_inv_var);
        let reg = x.subtract(&self.xbar)?.frobenius_norm().powi(2);
        Ok(hr + lr + self.lambda_reg * reg)
    }

    fn check_latent(&self, x: &MultiBandImage) -> Result<()> {
        if x.bands() != self.bands() || x.shape() != self.shape() {
            return Err(Error::dims(
                "latent image layout",
                format!("{} bands on {}", self.bands(), self.shape()),
                format!("{} bands on {}", x.bands(), x.shape()),
            ));
        }
        Ok(())
    }

    /// `Λ_LR^{½}·C1·Λ_LR^{½}` as a dense nalgebra matrix.
    pub(crate) fn whitened_c1(&self) -> DMatrix<f64> {
        let m = self.bands();
        DMatrix::from_fn(m, m, |i, j| {
            self.c1[(i, j)] / (self.lr_inv_var[i] * self.lr_inv_var[j]).sqrt()
        })
    }
}

pub(crate) fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `Σ_b w_b ‖row_b‖²`.
pub(crate) fn weighted_sq(a: &Array2<f64>, weights: &[f64]) -> f64 {
    a.rows()
        .into_iter()
        .zip(weights)
        .map(|(row, w)| w * row.iter().map(|v| v * v).sum::<f64>())
        .sum()
}
