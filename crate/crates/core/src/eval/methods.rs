use std::time::Instant;

use super::roc::{auc, diag_distance, roc, roc_from_slices, RocCurve};
use crate::correction::{CorrectionSettings, StepPolicy};
use crate::degradation::{spectral_degrade, SensorModel, SpectralResponse};
use crate::error::{Error, Result};
use crate::fusion::{
    build_normal_system, interpolate_coarse, solve_fusion, spatial_part, FusionSettings,
    Interpolation,
};
use crate::image::{ChangeImage, MultiBandImage};
use crate::robust::{
    box_smooth, energy_image, robust_fusion, ChangeMask, ChangeScores, RelativeWeights,
    RobustFusionProblem, RobustFusionResult,
};
use crate::sim::{decimate_mask, SimulatedPair};

/// Change detectors compared on a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Robust fusion.
    Rf,
    /// Fusion without change correction, then prediction of the HR image.
    F,
    /// Worst case: both observations degraded to the common LR-MS level.
    Wc,
    /// Spatial upsampling of the LR image, then spectral degradation.
    Sd,
    /// Spectral degradation of the LR image, then spatial upsampling.
    Ds,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Rf, Method::F, Method::Wc, Method::Sd, Method::Ds];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Rf => "RF",
            Method::F => "F",
            Method::Wc => "WC",
            Method::Sd => "SD",
            Method::Ds => "DS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Observation pair with its sensor models.
#[derive(Debug, Clone, Copy)]
pub struct Observations<'a> {
    pub y_hr: &'a MultiBandImage,
    pub y_lr: &'a MultiBandImage,
    pub hr_sensor: &'a SensorModel,
    pub lr_sensor: &'a SensorModel,
}

impl SimulatedPair {
    pub fn observations(&self) -> Observations<'_> {
        Observations {
            y_hr: &self.y_hr,
            y_lr: &self.y_lr,
            hr_sensor: &self.hr_sensor,
            lr_sensor: &self.lr_sensor,
        }
    }
}

/// Solver controls other than the regularization weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub fusion_tol: f64,
    pub fusion_max_iters: usize,
    pub correction_steps: usize,
    pub correction_tol: f64,
    pub step_policy: StepPolicy,
    pub outer_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let (f, c) = (FusionSettings::default(), CorrectionSettings::default());
        Self {
            fusion_tol: f.solver_tol,
            fusion_max_iters: f.max_iters,
            correction_steps: c.steps,
            correction_tol: c.tol,
            step_policy: c.step_policy,
            outer_tol: crate::robust::DEFAULT_OUTER_TOL,
        }
    }
}

/// Settings shared by the methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSettings {
    pub weights: RelativeWeights,
    pub outer_iters: usize,
    pub solver: SolverSettings,
    /// Box-smoothing radius in HR pixels applied to every method's
    /// energies before the ROC; 0 keeps raw energies. On the LR grid the
    /// radius is divided by the decimation factor.
    pub smoothing_radius: usize,
    pub interpolation: Interpolation,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            weights: RelativeWeights::default(),
            outer_iters: crate::robust::DEFAULT_OUTER_ITERS,
            solver: SolverSettings::default(),
            smoothing_radius: crate::robust::DEFAULT_SCVA_RADIUS,
            interpolation: Interpolation::Bilinear,
        }
    }
}

fn hr_response(obs: &Observations<'_>) -> Result<SpectralResponse> {
    match &obs.hr_sensor.spectral {
        Some(l) => Ok(l.clone()),
        None => SpectralResponse::identity(obs.y_lr.bands()),
    }
}

fn cva(a: &MultiBandImage, b: &MultiBandImage) -> Result<ChangeScores> {
    Ok(energy_image(&ChangeImage::between(a, b)?))
}

/// Robust fusion problem for a pair with the given settings.
pub fn robust_problem(
    obs: &Observations<'_>,
    settings: &MethodSettings,
) -> Result<RobustFusionProblem> {
    let mut p = RobustFusionProblem::new(
        obs.y_hr.clone(),
        obs.y_lr.clone(),
        obs.hr_sensor.clone(),
        obs.lr_sensor.clone(),
        settings.weights,
    )?;
    let s = &settings.solver;
    p.outer_iters = settings.outer_iters;
    p.outer_tol = s.outer_tol;
    p.interpolation = settings.interpolation;
    p.fusion.solver_tol = s.fusion_tol;
    p.fusion.max_iters = s.fusion_max_iters;
    p.correction.steps = s.correction_steps;
    p.correction.tol = s.correction_tol;
    p.correction.step_policy = s.step_policy;
    p.validate()?;
    Ok(p)
}

/// Energy of the estimated change image, on the HR grid.
pub fn method_robust(
    obs: &Observations<'_>,
    settings: &MethodSettings,
) -> Result<(ChangeScores, RobustFusionResult)> {
    let p = robust_problem(obs, settings)?;
    let r = robust_fusion(&p).map_err(Error::from)?;
    Ok((energy_image(&r.change), r))
}

/// Worst case: the HR image is blurred and decimated, the LR image is
/// spectrally degraded, and CVA runs on the LR grid.
pub fn method_wc(obs: &Observations<'_>) -> Result<ChangeScores> {
    let spatial = spatial_part(obs.lr_sensor);
    let hr_low = spatial.apply(obs.y_hr)?;
    let lr_low = spectral_degrade(obs.y_lr, &hr_response(obs)?)?;
    cva(&hr_low, &lr_low)
}

/// Interpolation baselines on the HR grid. The spectral response and the
/// band-wise interpolation are both linear and act on different axes, so
/// the two orders agree up to round-off.
pub fn method_interp(
    obs: &Observations<'_>,
    order: Method,
    mode: Interpolation,
) -> Result<ChangeScores> {
    let grid = spatial_part(obs.lr_sensor).grid;
    let l = hr_response(obs)?;
    let shape = obs.y_hr.shape();
    let predicted = match order {
        Method::Sd => spectral_degrade(&interpolate_coarse(obs.y_lr, &grid, shape, mode)?, &l)?,
        Method::Ds => interpolate_coarse(&spectral_degrade(obs.y_lr, &l)?, &grid, shape, mode)?,
        other => {
            return Err(Error::invalid(format!(
                "{other} is not an interpolation baseline"
            )))
        }
    };
    cva(obs.y_hr, &predicted)
}

/// Three-step baseline: fuse the raw pair assuming no change, predict the
/// HR observation, and run CVA against it.
pub fn method_fusion3step(
    obs: &Observations<'_>,
    settings: &MethodSettings,
) -> Result<ChangeScores> {
    let grid = spatial_part(obs.lr_sensor).grid;
    let xbar = interpolate_coarse(obs.y_lr, &grid, obs.y_hr.shape(), settings.interpolation)?;
    let fusion = FusionSettings {
        lambda_reg: FusionSettings::relative_lambda(settings.weights.lambda, obs.y_lr),
        solver_tol: settings.solver.fusion_tol,
        max_iters: settings.solver.fusion_max_iters,
    };
    let system = build_normal_system(
        obs.y_lr,
        obs.y_hr,
        obs.hr_sensor,
        obs.lr_sensor,
        &fusion,
        &xbar,
    )?;
    let latent = solve_fusion(&system)?;
    let predicted = spectral_degrade(&latent, &hr_response(obs)?)?;
    cva(obs.y_hr, &predicted)
}

/// Change scores of one method; the grid is LR for [`Method::Wc`] and HR
/// otherwise.
pub fn method_scores(
    method: Method,
    obs: &Observations<'_>,
    settings: &MethodSettings,
) -> Result<ChangeScores> {
    let radius = settings.smoothing_radius;
    Ok(match method {
        Method::Rf => box_smooth(&method_robust(obs, settings)?.0, radius),
        Method::F => box_smooth(&method_fusion3step(obs, settings)?, radius),
        Method::Wc => {
            let d = spatial_part(obs.lr_sensor).grid.row_factor();
            box_smooth(&method_wc(obs)?, (radius + d / 2) / d)
        }
        Method::Sd | Method::Ds => {
            box_smooth(&method_interp(obs, method, settings.interpolation)?, radius)
        }
    })
}

/// Detection quality of one method on one pair.
#[derive(Debug, Clone)]
pub struct MethodReport {
    pub method: Method,
    pub auc: f64,
    pub dist: f64,
    pub runtime_s: f64,
    pub curve: RocCurve,
    pub scores: ChangeScores,
    /// Truth on the grid of `scores`.
    pub truth: ChangeMask,
}

/// Scores `method` against an HR truth mask; the truth is reduced to the
/// LR grid for methods scoring there.
pub fn evaluate_method(
    method: Method,
    obs: &Observations<'_>,
    truth_hr: &ChangeMask,
    settings: &MethodSettings,
) -> Result<MethodReport> {
    let start = Instant::now();
    let scores = method_scores(method, obs, settings)?;
    let runtime_s = start.elapsed().as_secs_f64();
    let truth = if scores.shape() == truth_hr.shape() {
        truth_hr.clone()
    } else {
        decimate_mask(truth_hr, &spatial_part(obs.lr_sensor).grid)?
    };
    let curve = roc(&scores, &truth)?;
    Ok(MethodReport {
        method,
        auc: auc(&curve),
        dist: diag_distance(&curve),
        runtime_s,
        curve,
        scores,
        truth,
    })
}

/// Outcome of one method on one pair; a failure does not stop the others.
#[derive(Debug)]
pub struct MethodOutcome {
    pub method: Method,
    pub report: Result<MethodReport>,
}

/// Runs every method of `methods` on a simulated pair.
pub fn compare(
    pair: &SimulatedPair,
    methods: &[Method],
    settings: &MethodSettings,
) -> Vec<MethodOutcome> {
    let obs = pair.observations();
    methods
        .iter()
        .map(|&method| MethodOutcome {
            method,
            report: evaluate_method(method, &obs, &pair.truth_mask, settings),
        })
        .collect()
}

/// Per-method aggregate over a suite: mean of per-pair metrics and the
/// metrics of the ROC of all pixels pooled together.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub pairs: usize,
    pub failures: usize,
    pub mean_auc: f64,
    pub mean_dist: f64,
    pub pooled_auc: f64,
    pub pooled_dist: f64,
    pub mean_runtime_s: f64,
}

pub fn summarize(outcomes: &[Vec<MethodOutcome>]) -> Result<Vec<MethodSummary>> {
    let mut methods: Vec<Method> = outcomes.iter().flatten().map(|o| o.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| {
            let all: Vec<&MethodOutcome> = outcomes
                .iter()
                .flatten()
                .filter(|o| o.method == method)
                .collect();
            let ok: Vec<&MethodReport> =
                all.iter().filter_map(|o| o.report.as_ref().ok()).collect();
            let n = ok.len() as f64;
            let mean = |f: fn(&MethodReport) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / n
                }
            };
            let (pooled_auc, pooled_dist) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let scores: Vec<f64> = ok
                    .iter()
                    .flat_map(|r| r.scores.energy().iter().copied())
                    .collect();
                let truth: Vec<bool> = ok
                    .iter()
                    .flat_map(|r| r.truth.as_slice().iter().copied())
                    .collect();
                let c = roc_from_slices(&scores, &truth)?;
                (auc(&c), diag_distance(&c))
            };
            Ok(MethodSummary {
                method,
                pairs: ok.len(),
                failures: all.len() - ok.len(),
                mean_auc: mean(|r| r.auc),
                mean_dist: mean(|r| r.dist),
                pooled_auc,
                pooled_dist,
                mean_runtime_s: mean(|r| r.runtime_s),
            })
        })
        .collect()
}
