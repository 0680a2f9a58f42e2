//! Observed pairs with known change: unmix a reference once, edit the
//! abundances of one epoch under a mask, remix and degrade each epoch with
//! its own sensor.

use rayon::prelude::*;

use super::rules::{apply_change_rule, rasterize_mask, ChangeRule, MaskSpec, Region};
use super::unmix::{mix, unmix, EndmemberModel};
use crate::degradation::{
    apply_forward, BandNoise, BlurKernel, DecimationGrid, SensorModel, SpectralResponse,
};
use crate::error::{Error, Result};
use crate::image::{GridShape, MultiBandImage};
use crate::robust::ChangeMask;

/// Spectral content of the HR observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Single panchromatic band averaging the leading part of the spectrum.
    Pan,
    /// Four contiguous band-average windows.
    Ms,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Pan => "pan",
            Scenario::Ms => "ms",
        }
    }

    /// HR spectral response for a latent image with `bands` bands.
    pub fn response(&self, bands: usize) -> Result<SpectralResponse> {
        match self {
            Scenario::Pan => SpectralResponse::average_first(bands, pan_band_count(bands)),
            Scenario::Ms => SpectralResponse::landsat_like(bands),
        }
    }
}

/// Leading bands averaged into the PAN band: 43 of 93 at full scale.
pub fn pan_band_count(bands: usize) -> usize {
    ((bands * 43) as f64 / 93.0).round().max(1.0) as usize
}

/// Epoch that carries the injected change; the other one is unedited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChangeEpoch {
    /// The HR acquisition.
    Ti,
    /// The LR acquisition.
    Tj,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSettings {
    /// Decimation factor of the LR sensor.
    pub ratio: usize,
    pub kernel_size: usize,
    pub kernel_sigma: f64,
    /// Per-band SNR of both observations; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    /// Nominal SNR used for the sensors' noise model when `snr_db` is
    /// infinite, so the weights of the data terms stay defined.
    pub nominal_snr_db: f64,
    pub endmembers: usize,
    pub unmix_iters: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            ratio: 5,
            kernel_size: 5,
            kernel_sigma: 1.0,
            snr_db: 30.0,
            nominal_snr_db: 30.0,
            endmembers: 5,
            unmix_iters: 50,
        }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        if self.ratio == 0 {
            return Err(Error::invalid("decimation ratio must be positive"));
        }
        if self.kernel_size.is_multiple_of(2) || !(self.kernel_sigma > 0.0) {
            return Err(Error::invalid(
                "blur kernel needs an odd size and positive sigma",
            ));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!(
                "SNR must be a number or +inf, got {}",
                self.snr_db
            )));
        }
        if !self.nominal_snr_db.is_finite() {
            return Err(Error::invalid("nominal SNR must be finite"));
        }
        if self.unmix_iters == 0 {
            return Err(Error::invalid("unmixing needs at least one iteration"));
        }
        Ok(())
    }

    pub fn noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }
}

/// One simulated observation pair and its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedPair {
    pub y_hr: MultiBandImage,
    pub y_lr: MultiBandImage,
    /// HR pixels whose abundances were edited.
    pub truth_mask: ChangeMask,
    pub latent_ti: MultiBandImage,
    pub latent_tj: MultiBandImage,
    pub scenario: Scenario,
    pub rule: ChangeRule,
    pub epoch: ChangeEpoch,
    pub hr_sensor: SensorModel,
    pub lr_sensor: SensorModel,
}

/// Everything needed to regenerate one pair of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPlan {
    pub mask: MaskSpec,
    pub rule: ChangeRule,
    pub epoch: ChangeEpoch,
    pub scenario: Scenario,
    pub seed: u64,
}

/// Reference scene unmixed once and reused for every pair.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: EndmemberModel,
    unmix_error: f64,
    settings: SimulationSettings,
}

impl Simulator {
    pub fn new(x_ref: &MultiBandImage, settings: SimulationSettings, seed: u64) -> Result<Self> {
        settings.validate()?;
        settings.lr_grid()?.lr_shape(x_ref.shape())?;
        let u = unmix(x_ref, settings.endmembers, settings.unmix_iters, seed)?;
        Ok(Self {
            model: u.model,
            unmix_error: u.relative_error,
            settings,
        })
    }

    /// Skips unmixing when the mixture is already known.
    pub fn from_model(model: EndmemberModel, settings: SimulationSettings) -> Result<Self> {
        settings.validate()?;
        settings.lr_grid()?.lr_shape(model.shape())?;
        Ok(Self {
            model,
            unmix_error: 0.0,
            settings,
        })
    }

    pub fn model(&self) -> &EndmemberModel {
        &self.model
    }

    /// Relative reconstruction error of the unmixing.
    pub fn unmix_error(&self) -> f64 {
        self.unmix_error
    }

    pub fn settings(&self) -> &SimulationSettings {
        &self.settings
    }

    pub fn simulate(&self, plan: &PairPlan) -> Result<SimulatedPair> {
        let s = &self.settings;
        let mask = rasterize_mask(&plan.mask)?;
        if mask.shape() != self.model.shape() {
            return Err(Error::dims("mask grid", self.model.shape(), mask.shape()));
        }
        let edited = apply_change_rule(&self.model, &mask, plan.rule)?;
        let before = self.model.abundances();
        let after = edited.abundances();
        let truth = ChangeMask::from_fn(mask.shape(), |r, c| {
            let p = mask.shape().index(r, c);
            before.column(p) != after.column(p)
        });
        let (latent_ti, latent_tj) = match plan.epoch {
            ChangeEpoch::Ti => (mix(&edited), mix(&self.model)),
            ChangeEpoch::Tj => (mix(&self.model), mix(&edited)),
        };

        let bands = self.model.bands();
        let response = plan.scenario.response(bands)?;
        let kernel = BlurKernel::gaussian(s.kernel_size, s.kernel_sigma)?;
        let grid = s.lr_grid()?;
        let hr_clean = apply_forward(
            &latent_ti,
            &SensorModel::spectral(response.clone(), placeholder(response.output_bands())?)?,
            None,
        )?;
        let lr_clean = apply_forward(
            &latent_tj,
            &SensorModel::spatial(kernel.clone(), grid, placeholder(bands)?),
            None,
        )?;
        let snr = if s.noiseless() {
            s.nominal_snr_db
        } else {
            s.snr_db
        };
        let hr_sensor = SensorModel::spectral(response, BandNoise::from_snr(&hr_clean, snr)?)?;
        let lr_sensor = SensorModel::spatial(kernel, grid, BandNoise::from_snr(&lr_clean, snr)?);
        let noise_seed = |k: u64| {
            (!s.noiseless()).then(|| {
                plan.seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(k)
            })
        };
        let y_hr = apply_forward(&latent_ti, &hr_sensor, noise_seed(1))?;
        let y_lr = apply_forward(&latent_tj, &lr_sensor, noise_seed(2))?;
        Ok(SimulatedPair {
            y_hr,
            y_lr,
            truth_mask: truth,
            latent_ti,
            latent_tj,
            scenario: plan.scenario,
            rule: plan.rule,
            epoch: plan.epoch,
            hr_sensor,
            lr_sensor,
        })
    }

    /// Deterministic list of `2 · n_masks` pairs: each mask is simulated
    /// under both scenarios; mask shapes and rule kinds cycle, and the
    /// changed epoch alternates from one mask to the next.
    pub fn suite_plan(&self, n_masks: usize, seed: u64) -> Result<Vec<PairPlan>> {
        if n_masks == 0 {
            return Err(Error::invalid("a suite needs at least one mask"));
        }
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let shape = self.model.shape();
        let limit = (shape.rows().min(shape.cols()) / 4).max(1);
        let mut plans = Vec::with_capacity(2 * n_masks);
        for k in 0..n_masks {
            let size = rng.random_range(limit.div_ceil(3).max(1)..=limit);
            let row = rng.random_range(0..=shape.rows() - size);
            let col = rng.random_range(0..=shape.cols() - size);
            let region = match k % 3 {
                0 => Region::square(row, col, size),
                1 => Region::Rect {
                    row,
                    col,
                    height: size,
                    width: (size / 2).max(1),
                },
                _ => Region::Triangle { row, col, size },
            };
            let mask = MaskSpec {
                shape,
                regions: vec![region],
            };
            let rule = self.rule_for(&rasterize_mask(&mask)?, k);
            let epoch = if k % 2 == 0 {
                ChangeEpoch::Ti
            } else {
                ChangeEpoch::Tj
            };
            for (offset, scenario) in [Scenario::Pan, Scenario::Ms].into_iter().enumerate() {
                plans.push(PairPlan {
                    mask: mask.clone(),
                    rule,
                    epoch,
                    scenario,
                    seed: seed ^ ((2 * k + offset) as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03),
                });
            }
        }
        Ok(plans)
    }

    /// Rule `k mod 3` of swap, replace, rescale, between the endmember that
    /// dominates the masked area and the one least present there.
    pub fn rule_for(&self, mask: &ChangeMask, k: usize) -> ChangeRule {
        let a = self.model.abundances();
        let totals: Vec<f64> = (0..a.nrows())
            .map(|e| {
                mask.as_slice()
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| **m)
                    .map(|(p, _)| a[(e, p)])
                    .sum()
            })
            .collect();
        let by = |better: fn(f64, f64) -> bool| {
            (0..totals.len()).fold(0, |best, e| {
                if better(totals[e], totals[best]) {
                    e
                } else {
                    best
                }
            })
        };
        let i = by(|x, y| x > y);
        let j = by(|x, y| x < y);
        match k % 3 {
            0 => ChangeRule::Swap { i, j },
            1 => ChangeRule::Replace { i, j },
            _ => ChangeRule::Rescale { i, factor: 0.2 },
        }
    }

    pub fn benchmark_suite(&self, n_masks: usize, seed: u64) -> Result<Vec<SimulatedPair>> {
        self.suite_plan(n_masks, seed)?
            .par_iter()
            .map(|p| self.simulate(p))
            .collect()
    }
}

impl SimulationSettings {
    fn lr_grid(&self) -> Result<DecimationGrid> {
        DecimationGrid::square(self.ratio)
    }
}

fn placeholder(bands: usize) -> Result<BandNoise> {
    BandNoise::uniform(bands, 1.0)
}

/// One-shot pair generation: unmixes `x_ref` and simulates a single pair.
#[allow(clippy::too_many_arguments)]
pub fn simulate_pair(
    x_ref: &MultiBandImage,
    spec: &MaskSpec,
    rule: ChangeRule,
    epoch: ChangeEpoch,
    scenario: Scenario,
    snr_db: f64,
    settings: SimulationSettings,
    seed: u64,
) -> Result<SimulatedPair> {
    let settings = SimulationSettings { snr_db, ..settings };
    Simulator::new(x_ref, settings, seed)?.simulate(&PairPlan {
        mask: spec.clone(),
        rule,
        epoch,
        scenario,
        seed,
    })
}

/// Suite over `x_ref` with default settings; see [`Simulator::suite_plan`].
pub fn benchmark_suite(
    x_ref: &MultiBandImage,
    n_masks: usize,
    seed: u64,
) -> Result<Vec<SimulatedPair>> {
    Simulator::new(x_ref, SimulationSettings::default(), seed)?.benchmark_suite(n_masks, seed)
}

/// LR truth: an LR pixel is changed when any HR pixel of its block is.
pub fn decimate_mask(mask: &ChangeMask, grid: &DecimationGrid) -> Result<ChangeMask> {
    let hr = mask.shape();
    let lr: GridShape = grid.lr_shape(hr)?;
    let (dr, dc) = (grid.row_factor(), grid.col_factor());
    Ok(ChangeMask::from_fn(lr, |i, j| {
        (0..dr).any(|a| (0..dc).any(|b| mask.get(i * dr + a, j * dc + b)))
    }))
}
