//! JSON description of a sensor model.
//!
//! ```json
//! {
//!   "response": "average:first_6" | "landsat4" | [[...], ...] | null,
//!   "blur": { "size": 5, "taps": [...] } | null,
//!   "grid": { "row_factor": 4, "col_factor": 4, "phase": [0, 0] } | null,
//!   "noise": [variance per observed band]
//! }
//! ```
//!
//! A missing response is the identity; blur and grid come together.

use ndarray::Array2;
use rfcd::degradation::{
    BandNoise, BlurKernel, DecimationGrid, SensorModel, SpatialDegradation, SpectralResponse,
};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    #[serde(default)]
    pub response: Option<ResponseSpec>,
    #[serde(default)]
    pub blur: Option<BlurSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseSpec {
    Preset(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurSpec {
    pub size: usize,
    pub taps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub row_factor: usize,
    pub col_factor: usize,
    #[serde(default)]
    pub phase: (usize, usize),
}

/// HR and LR sensors of an observation pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorPair {
    pub hr: SensorSpec,
    pub lr: SensorSpec,
}

impl ResponseSpec {
    /// Resolves presets against the number of latent bands.
    pub fn build(&self, latent_bands: usize) -> CliResult<SpectralResponse> {
        let bad = |msg: String| CliError::Data(format!("sensor response: {msg}"));
        match self {
            ResponseSpec::Preset(name) if name == "landsat4" => {
                Ok(SpectralResponse::landsat_like(latent_bands)?)
            }
            ResponseSpec::Preset(name) => {
                let k = name
                    .strip_prefix("average:first_")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| bad(format!("unknown preset {name:?}")))?;
                Ok(SpectralResponse::average_first(latent_bands, k)?)
            }
            ResponseSpec::Matrix(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != cols) {
                    return Err(bad("rows of unequal length".into()));
                }
                if cols != latent_bands {
                    return Err(bad(format!(
                        "{cols} columns for {latent_bands} latent bands"
                    )));
                }
                let m = Array2::from_shape_vec((rows.len(), cols), rows.concat())
                    .map_err(|e| bad(e.to_string()))?;
                Ok(SpectralResponse::new(m)?)
            }
        }
    }

    /// Preset name when `l` equals one, the inline matrix otherwise.
    pub fn describe(l: &SpectralResponse) -> Self {
        let m = l.input_bands();
        if SpectralResponse::landsat_like(m).is_ok_and(|p| &p == l) {
            return ResponseSpec::Preset("landsat4".into());
        }
        if l.output_bands() == 1 {
            let k = l.matrix().row(0).iter().filter(|v| **v != 0.0).count();
            if SpectralResponse::average_first(m, k).is_ok_and(|p| &p == l) {
                return ResponseSpec::Preset(format!("average:first_{k}"));
            }
        }
        ResponseSpec::Matrix(l.matrix().rows().into_iter().map(|r| r.to_vec()).collect())
    }
}

impl SensorSpec {
    pub fn describe(sensor: &SensorModel) -> Self {
        let spatial = sensor.spatial.as_ref();
        Self {
            response: sensor.spectral.as_ref().map(ResponseSpec::describe),
            blur: spatial.map(|s| BlurSpec {
                size: s.kernel.size(),
                taps: s.kernel.taps().to_vec(),
            }),
            grid: spatial.map(|s| GridSpec {
                row_factor: s.grid.row_factor(),
                col_factor: s.grid.col_factor(),
                phase: s.grid.phase(),
            }),
            noise: sensor.noise.variances().to_vec(),
        }
    }

    pub fn build(&self, latent_bands: usize) -> CliResult<SensorModel> {
        let spectral = self
            .response
            .as_ref()
            .map(|r| r.build(latent_bands))
            .transpose()?;
        let spatial = match (&self.blur, self.grid) {
            (Some(b), Some(g)) => Some(SpatialDegradation::new(
                BlurKernel::new(b.size, b.taps.clone())?,
                DecimationGrid::with_phase(g.row_factor, g.col_factor, g.phase)?,
            )),
            (None, None) => None,
            _ => {
                return Err(CliError::Data(
                    "sensor blur and grid must be given together".into(),
                ))
            }
        };
        let noise = BandNoise::new(self.noise.clone())?;
        let out_bands = spectral
            .as_ref()
            .map_or(latent_bands, SpectralResponse::output_bands);
        if noise.bands() != out_bands {
            return Err(CliError::Data(format!(
                "sensor noise has {} variances for {out_bands} observed bands",
                noise.bands()
            )));
        }
        Ok(SensorModel {
            spectral,
            spatial,
            noise,
        })
    }
}

impl SensorPair {
    pub fn describe(hr: &SensorModel, lr: &SensorModel) -> Self {
        Self {
            hr: SensorSpec::describe(hr),
            lr: SensorSpec::describe(lr),
        }
    }

    /// Builds both sensors; the LR sensor observes every latent band.
    pub fn build(&self, latent_bands: usize) -> CliResult<(SensorModel, SensorModel)> {
        Ok((self.hr.build(latent_bands)?, self.lr.build(latent_bands)?))
    }
}
