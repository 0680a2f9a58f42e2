//! Block coordinate descent over the latent image and the change image,
//! plus the conversion of the estimated change into change maps.

mod scores;

pub use scores::{
    box_smooth, energy_image, otsu_threshold, scva, threshold_map, ChangeMask, ChangeScores,
};

use ndarray::Array2;

use crate::correction::{solve_correction_traced, CorrectionSettings, WhitenedSpectralOp};
use crate::degradation::{SensorModel, SpectralResponse};
use crate::error::{Error, Result};
use crate::fusion::{
    build_normal_system, check_sensors, interpolate_coarse, solve_fusion, spatial_part,
    spectral_matrix, weighted_sq, FusionSettings, Interpolation,
};
use crate::image::{ChangeImage, MultiBandImage};

/// Inputs of the robust fusion: the HR observation at one epoch, the LR
/// observation at the other, and both sensor models.
#[derive(Debug, Clone)]
pub struct RobustFusionProblem {
    pub y_hr: MultiBandImage,
    pub y_lr: MultiBandImage,
    pub hr_sensor: SensorModel,
    pub lr_sensor: SensorModel,
    pub fusion: FusionSettings,
    pub correction: CorrectionSettings,
    /// Maximum number of outer iterations `K`.
    pub outer_iters: usize,
    /// Stop when the relative objective decrease of one outer iteration
    /// falls below this value.
    pub outer_tol: f64,
    pub interpolation: Interpolation,
}

/// Dimensionless regularization weights.
///
/// `lambda` is taken relative to the mean squared LR observation and
/// `gamma` relative to `2‖Λ_HR^{-½}L‖_F`, the root-mean-square norm of the
/// data gradient at zero change under pure noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeWeights {
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for RelativeWeights {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA_REL,
            gamma: DEFAULT_GAMMA_REL,
        }
    }
}

pub const DEFAULT_LAMBDA_REL: f64 = 3.0;
pub const DEFAULT_GAMMA_REL: f64 = 0.5;
pub const DEFAULT_OUTER_ITERS: usize = 10;
pub const DEFAULT_OUTER_TOL: f64 = 1e-5;
/// Box-smoothing radius (HR pixels) of the spatially regularized CVA.
pub const DEFAULT_SCVA_RADIUS: usize = 2;

impl RobustFusionProblem {
    /// Problem with default settings and relative weights resolved against
    /// the data.
    pub fn new(
        y_hr: MultiBandImage,
        y_lr: MultiBandImage,
        hr_sensor: SensorModel,
        lr_sensor: SensorModel,
        weights: RelativeWeights,
    ) -> Result<Self> {
        check_sensors(&y_hr, &y_lr, &hr_sensor, &lr_sensor)?;
        let w = WhitenedSpectralOp::from_sensor(&hr_sensor, y_lr.bands())?;
        let fusion = FusionSettings {
            lambda_reg: FusionSettings::relative_lambda(weights.lambda, &y_lr),
            ..FusionSettings::default()
        };
        let correction = CorrectionSettings {
            gamma: absolute_gamma(weights.gamma, &w),
            ..CorrectionSettings::default()
        };
        let p = Self {
            y_hr,
            y_lr,
            hr_sensor,
            lr_sensor,
            fusion,
            correction,
            outer_iters: DEFAULT_OUTER_ITERS,
            outer_tol: DEFAULT_OUTER_TOL,
            interpolation: Interpolation::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_sensors(&self.y_hr, &self.y_lr, &self.hr_sensor, &self.lr_sensor)?;
        self.fusion.validate()?;
        self.correction.validate()?;
        if self.outer_iters == 0 {
            return Err(Error::invalid("at least one outer iteration is required"));
        }
        if !(self.outer_tol >= 0.0) {
            return Err(Error::invalid(format!(
                "outer tolerance must be nonnegative, got {}",
                self.outer_tol
            )));
        }
        Ok(())
    }

    pub fn latent_bands(&self) -> usize {
        self.y_lr.bands()
    }

    /// Interpolated LR observation on the HR grid, `X̄`.
    pub fn coarse_estimate(&self) -> Result<MultiBandImage> {
        let grid = spatial_part(&self.lr_sensor).grid;
        interpolate_coarse(&self.y_lr, &grid, self.y_hr.shape(), self.interpolation)
    }

    fn spectral(&self) -> Array2<f64> {
        spectral_matrix(&self.hr_sensor, self.latent_bands())
    }
}

/// `γ = relative · 2‖Λ_HR^{-½}L‖_F`.
pub fn absolute_gamma(relative: f64, w: &WhitenedSpectralOp) -> f64 {
    let fro = w.op().iter().map(|v| v * v).sum::<f64>().sqrt();
    relative * 2.0 * fro
}

/// Individual terms of the global objective
/// `J = ‖Λ_HR^{-½}(Y_HR − L(X + ΔX))‖² + ‖Λ_LR^{-½}(Y_LR − X·B·S)‖²
///      + λ‖X − X̄‖² + γ‖ΔX‖_{2,1}`.
///
/// The fusion step minimizes `J` over `X` and the correction step over `ΔX`
/// exactly as stated; `J/2` is the same objective written with halved data
/// terms and weights `λ/2`, `γ/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    pub data_hr: f64,
    pub data_lr: f64,
    pub reg_latent: f64,
    pub reg_change: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.data_hr + self.data_lr + self.reg_latent + self.reg_change
    }
}

pub fn objective_terms(
    x: &MultiBandImage,
    dx: &ChangeImage,
    prob: &RobustFusionProblem,
    xbar: &MultiBandImage,
) -> Result<ObjectiveTerms> {
    let bands = prob.latent_bands();
    let hr_shape = prob.y_hr.shape();
    for (img, what) in [
        (x, "latent image"),
        (dx.image(), "change image"),
        (xbar, "coarse estimate"),
    ] {
        if img.bands() != bands || img.shape() != hr_shape {
            return Err(Error::dims(
                what,
                format!("{bands} bands on {hr_shape}"),
                format!("{} bands on {}", img.bands(), img.shape()),
            ));
        }
    }
    let l = prob.spectral();
    let total = x.add(dx)?;
    let hr_res = &prob.y_hr.matrix() - &l.dot(&total.matrix());
    let data_hr = weighted_sq(&hr_res, &prob.hr_sensor.noise.inverse_variances());

    let spatial = spatial_part(&prob.lr_sensor);
    let lr_pred = spatial.apply(x)?;
    let lr_res = &prob.y_lr.matrix() - &lr_pred.matrix();
    let data_lr = weighted_sq(&lr_res, &prob.lr_sensor.noise.inverse_variances());

    let reg_latent = prob.fusion.lambda_reg * x.subtract(xbar)?.frobenius_norm().powi(2);
    let reg_change = prob.correction.gamma * dx.l21_norm();
    Ok(ObjectiveTerms {
        data_hr,
        data_lr,
        reg_latent,
        reg_change,
    })
}

pub fn objective(
    x: &MultiBandImage,
    dx: &ChangeImage,
    prob: &RobustFusionProblem,
    xbar: &MultiBandImage,
) -> Result<f64> {
    objective_terms(x, dx, prob, xbar).map(|t| t.total())
}

/// `Y_cHR = Y_HR − L·ΔX`.
pub fn corrected_hr(
    y_hr: &MultiBandImage,
    l: &SpectralResponse,
    dx: &ChangeImage,
) -> Result<MultiBandImage> {
    corrected_with(y_hr, &l.matrix().view(), dx)
}

fn corrected_with(
    y_hr: &MultiBandImage,
    l: &ndarray::ArrayView2<f64>,
    dx: &ChangeImage,
) -> Result<MultiBandImage> {
    if l.ncols() != dx.bands() || l.nrows() != y_hr.bands() {
        return Err(Error::dims(
            "corrected HR bands",
            format!("{}x{}", y_hr.bands(), dx.bands()),
            format!("{}x{}", l.nrows(), l.ncols()),
        ));
    }
    if y_hr.shape() != dx.shape() {
        return Err(Error::dims("corrected HR grid", y_hr.shape(), dx.shape()));
    }
    let out = &y_hr.matrix() - &l.dot(&dx.matrix());
    MultiBandImage::from_array(y_hr.shape(), out)
}

/// Which block was just updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Initial,
    Fusion,
    Correction,
}

/// Objective after one half-step of the descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfStep {
    pub iter: usize,
    pub stage: Stage,
    pub terms: ObjectiveTerms,
}

#[derive(Debug, Clone)]
pub struct RobustFusionResult {
    pub latent: MultiBandImage,
    pub change: ChangeImage,
    /// `(k, J)` at the start (`k = 0`) and after every outer iteration.
    pub objective_trace: Vec<(usize, f64)>,
    /// Objective terms after every fusion and correction half-step.
    pub half_steps: Vec<HalfStep>,
    pub converged: bool,
    pub xbar: MultiBandImage,
}

/// Solver failure during the descent, with everything computed so far.
#[derive(Debug)]
pub struct RobustFusionFailure {
    pub error: Error,
    pub partial: Option<RobustFusionResult>,
}

impl std::fmt::Display for RobustFusionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let iters = self
            .partial
            .as_ref()
            .map_or(0, |p| p.objective_trace.len().saturating_sub(1));
        write!(
            f,
            "robust fusion stopped after {iters} outer iterations: {}",
            self.error
        )
    }
}

impl std::error::Error for RobustFusionFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<RobustFusionFailure> for Error {
    fn from(f: RobustFusionFailure) -> Self {
        f.error
    }
}

/// Alternates the fusion step (on the HR observation corrected by the
/// current change) and the correction step (on the residual of the
/// current latent image), starting from `ΔX = 0`.
#[allow(clippy::result_large_err)]
pub fn robust_fusion(
    prob: &RobustFusionProblem,
) -> std::result::Result<RobustFusionResult, RobustFusionFailure> {
    let fail = |error: Error| RobustFusionFailure {
        error,
        partial: None,
    };
    prob.validate().map_err(fail)?;
    let xbar = prob.coarse_estimate().map_err(fail)?;
    let bands = prob.latent_bands();
    let shape = prob.y_hr.shape();
    let l = prob.spectral();
    let w = WhitenedSpectralOp::from_sensor(&prob.hr_sensor, bands).map_err(fail)?;

    let mut state = RobustFusionResult {
        latent: xbar.clone(),
        change: ChangeImage::zeros(bands, shape),
        objective_trace: Vec::new(),
        half_steps: Vec::new(),
        converged: false,
        xbar: xbar.clone(),
    };
    let initial = objective_terms(&xbar, &state.change, prob, &xbar).map_err(fail)?;
    state.objective_trace.push((0, initial.total()));
    state.half_steps.push(HalfStep {
        iter: 0,
        stage: Stage::Initial,
        terms: initial,
    });

    let mut previous = initial.total();
    for k in 1..=prob.outer_iters {
        let step = (|| -> Result<(ObjectiveTerms, ObjectiveTerms)> {
            let y_chr = corrected_with(&prob.y_hr, &l.view(), &state.change)?;
            let system = build_normal_system(
                &prob.y_lr,
                &y_chr,
                &prob.hr_sensor,
                &prob.lr_sensor,
                &prob.fusion,
                &xbar,
            )?;
            state.latent = solve_fusion(&system)?;
            let after_fusion = objective_terms(&state.latent, &state.change, prob, &xbar)?;

            let predicted = MultiBandImage::from_array(shape, l.dot(&state.latent.matrix()))?;
            let dy = prob.y_hr.subtract(&predicted)?;
            let outcome = solve_correction_traced(&state.change, &dy, &w, &prob.correction)?;
            state.change = outcome.change;
            let after_correction = objective_terms(&state.latent, &state.change, prob, &xbar)?;
            Ok((after_fusion, after_correction))
        })();
        let (after_fusion, after_correction) = match step {
            Ok(v) => v,
            Err(error) => {
                return Err(RobustFusionFailure {
                    error,
                    partial: Some(state),
                })
            }
        };
        state.half_steps.push(HalfStep {
            iter: k,
            stage: Stage::Fusion,
            terms: after_fusion,
        });
        state.half_steps.push(HalfStep {
            iter: k,
            stage: Stage::Correction,
            terms: after_correction,
        });
        let current = after_correction.total();
        state.objective_trace.push((k, current));
        let decrease = (previous - current) / previous.abs().max(f64::MIN_POSITIVE);
        previous = current;
        if decrease < prob.outer_tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
