//! JSON run configuration. Every section and key is optional; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use rfcd::correction::StepPolicy;
use rfcd::eval::{Method, MethodSettings, SolverSettings};
use rfcd::fusion::Interpolation;
use rfcd::robust::RelativeWeights;
use rfcd::sim::{
    ChangeEpoch, ChangeRule, MaskSpec, Region, Scenario, SceneSettings, SimulationSettings,
};
use rfcd::GridShape;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub sensors: SensorsConfig,
    pub fusion: FusionConfig,
    pub correction: CorrectionConfig,
    pub outer: OuterConfig,
    pub cva: CvaConfig,
    pub simulation: SimulationConfig,
    pub evaluation: EvaluationConfig,
    pub benchmark: BenchmarkConfig,
    pub paths: PathsConfig,
}

/// LR sensor of simulated pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorsConfig {
    pub ratio: usize,
    pub kernel_size: usize,
    pub kernel_sigma: f64,
}

impl Default for SensorsConfig {
    fn default() -> Self {
        let s = SimulationSettings::default();
        Self {
            ratio: s.ratio,
            kernel_size: s.kernel_size,
            kernel_sigma: s.kernel_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Weight of `‖X − X̄‖²` relative to the mean squared LR observation.
    pub lambda: f64,
    pub tol: f64,
    pub iters: usize,
    pub interpolation: InterpolationName,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            lambda: rfcd::robust::DEFAULT_LAMBDA_REL,
            tol: s.fusion_tol,
            iters: s.fusion_max_iters,
            interpolation: InterpolationName::Bilinear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationName {
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionConfig {
    /// Weight of `‖ΔX‖_{2,1}` relative to `2‖Λ_HR^{-½}L‖_F`.
    pub gamma: f64,
    pub steps: usize,
    pub tol: f64,
    pub policy: PolicyName,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            gamma: rfcd::robust::DEFAULT_GAMMA_REL,
            steps: s.correction_steps,
            tol: s.correction_tol,
            policy: PolicyName::Fixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Fixed,
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterConfig {
    pub iters: usize,
    pub tol: f64,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            iters: rfcd::robust::DEFAULT_OUTER_ITERS,
            tol: rfcd::robust::DEFAULT_OUTER_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvaConfig {
    pub radius: usize,
    pub tau: Tau,
}

impl Default for CvaConfig {
    fn default() -> Self {
        Self {
            radius: rfcd::robust::DEFAULT_SCVA_RADIUS,
            tau: Tau::Rule(TauRule::Otsu),
        }
    }
}

/// Decision threshold: a fixed energy, Otsu's threshold, or the
/// ROC-optimal threshold (needs a truth mask).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tau {
    Fixed(f64),
    Rule(TauRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauRule {
    Otsu,
    Roc,
}

/// `"inf"` disables noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Snr {
    Db(f64),
    Infinite(Infinite),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Infinite {
    #[serde(rename = "inf")]
    Inf,
}

impl Snr {
    pub fn db(&self) -> f64 {
        match self {
            Snr::Db(v) => *v,
            Snr::Infinite(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub blobs: usize,
    pub sharpness: f64,
    pub parcel_area: f64,
    pub parcel_weight: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let s = SceneSettings::default();
        Self {
            rows: s.rows,
            cols: s.cols,
            bands: s.bands,
            blobs: s.blobs,
            sharpness: s.sharpness,
            parcel_area: s.parcel_area,
            parcel_weight: s.parcel_weight,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionConfig {
    Pixel {
        row: usize,
        col: usize,
    },
    Rect {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    Square {
        row: usize,
        col: usize,
        size: usize,
    },
    Triangle {
        row: usize,
        col: usize,
        size: usize,
    },
}

impl From<RegionConfig> for Region {
    fn from(r: RegionConfig) -> Self {
        match r {
            RegionConfig::Pixel { row, col } => Region::Pixel { row, col },
            RegionConfig::Rect {
                row,
                col,
                height,
                width,
            } => Region::Rect {
                row,
                col,
                height,
                width,
            },
            RegionConfig::Square { row, col, size } => Region::square(row, col, size),
            RegionConfig::Triangle { row, col, size } => Region::Triangle { row, col, size },
        }
    }
}

/// `auto` picks endmembers from the masked abundances, cycling through
/// swap, replace and rescale with `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RuleConfig {
    Auto {
        #[serde(default)]
        k: usize,
    },
    Identity,
    Swap {
        i: usize,
        j: usize,
    },
    Replace {
        i: usize,
        j: usize,
    },
    Rescale {
        i: usize,
        factor: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Pan,
    Ms,
}

impl From<ScenarioName> for Scenario {
    fn from(s: ScenarioName) -> Self {
        match s {
            ScenarioName::Pan => Scenario::Pan,
            ScenarioName::Ms => Scenario::Ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochName {
    Ti,
    Tj,
}

impl From<EpochName> for ChangeEpoch {
    fn from(e: EpochName) -> Self {
        match e {
            EpochName::Ti => ChangeEpoch::Ti,
            EpochName::Tj => ChangeEpoch::Tj,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub scene: SceneConfig,
    /// MBIF1 reference image used instead of the synthetic scene.
    pub reference: Option<PathBuf>,
    pub endmembers: usize,
    pub unmix_iters: usize,
    pub scenario: ScenarioName,
    pub snr_db: Snr,
    /// Change regions; empty means one square in the upper left third.
    pub masks: Vec<RegionConfig>,
    pub rule: RuleConfig,
    pub epoch: EpochName,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let s = SimulationSettings::default();
        Self {
            scene: SceneConfig::default(),
            reference: None,
            endmembers: s.endmembers,
            unmix_iters: s.unmix_iters,
            scenario: ScenarioName::Pan,
            snr_db: Snr::Db(s.snr_db),
            masks: Vec::new(),
            rule: RuleConfig::Auto { k: 0 },
            epoch: EpochName::Ti,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Method names among RF, F, WC, SD, DS.
    pub methods: Vec<String>,
    /// Extra one-band HR score image evaluated next to the methods.
    pub scores: Option<PathBuf>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            scores: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    /// Masks in the suite; every mask gives one PAN and one MS pair.
    pub n_masks: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { n_masks: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
}

fn config_error(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(if path == "." { "<root>" } else { &path }, e.inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let checks: [(bool, &str, &str); 14] = [
            (
                self.sensors.ratio >= 1,
                "sensors.ratio",
                "must be at least 1",
            ),
            (
                self.sensors.kernel_size % 2 == 1,
                "sensors.kernel_size",
                "must be odd",
            ),
            (
                positive(self.sensors.kernel_sigma),
                "sensors.kernel_sigma",
                "must be positive",
            ),
            (
                positive(self.fusion.lambda),
                "fusion.lambda",
                "must be positive",
            ),
            (
                self.fusion.tol > 0.0 && self.fusion.tol < 1.0,
                "fusion.tol",
                "must lie in (0, 1)",
            ),
            (self.fusion.iters >= 1, "fusion.iters", "must be at least 1"),
            (
                self.correction.gamma >= 0.0 && self.correction.gamma.is_finite(),
                "correction.gamma",
                "must be nonnegative",
            ),
            (
                self.correction.steps >= 1,
                "correction.steps",
                "must be at least 1",
            ),
            (
                self.correction.tol >= 0.0,
                "correction.tol",
                "must be nonnegative",
            ),
            (self.outer.iters >= 1, "outer.iters", "must be at least 1"),
            (self.outer.tol >= 0.0, "outer.tol", "must be nonnegative"),
            (
                self.simulation.endmembers >= 2,
                "simulation.endmembers",
                "must be at least 2",
            ),
            (
                self.simulation.unmix_iters >= 1,
                "simulation.unmix_iters",
                "must be at least 1",
            ),
            (
                self.benchmark.n_masks >= 1,
                "benchmark.n_masks",
                "must be at least 1",
            ),
        ];
        for (ok, path, msg) in checks {
            if !ok {
                return Err(config_error(path, msg));
            }
        }
        if let Tau::Fixed(t) = self.cva.tau {
            if t.is_nan() || t < 0.0 {
                return Err(config_error(
                    "cva.tau",
                    "must be nonnegative, \"otsu\" or \"roc\"",
                ));
            }
        }
        if let Snr::Db(v) = self.simulation.snr_db {
            if !v.is_finite() {
                return Err(config_error(
                    "simulation.snr_db",
                    "must be finite or \"inf\"",
                ));
            }
        }
        if let RuleConfig::Rescale { factor, .. } = self.simulation.rule {
            if !positive(factor) {
                return Err(config_error("simulation.rule.factor", "must be positive"));
            }
        }
        for (k, m) in self.evaluation.methods.iter().enumerate() {
            if Method::parse(m).is_none() {
                return Err(config_error(
                    &format!("evaluation.methods[{k}]"),
                    format!("unknown method {m:?}"),
                ));
            }
        }
        Ok(())
    }

    pub fn scene_settings(&self) -> SceneSettings {
        let s = &self.simulation.scene;
        SceneSettings {
            rows: s.rows,
            cols: s.cols,
            bands: s.bands,
            endmembers: self.simulation.endmembers,
            blobs: s.blobs,
            sharpness: s.sharpness,
            parcel_area: s.parcel_area,
            parcel_weight: s.parcel_weight,
        }
    }

    pub fn simulation_settings(&self) -> SimulationSettings {
        SimulationSettings {
            ratio: self.sensors.ratio,
            kernel_size: self.sensors.kernel_size,
            kernel_sigma: self.sensors.kernel_sigma,
            snr_db: self.simulation.snr_db.db(),
            endmembers: self.simulation.endmembers,
            unmix_iters: self.simulation.unmix_iters,
            ..SimulationSettings::default()
        }
    }

    pub fn mask_spec(&self, shape: GridShape) -> MaskSpec {
        let regions = if self.simulation.masks.is_empty() {
            let size = (shape.rows().min(shape.cols()) / 8).max(1);
            vec![Region::square(shape.rows() / 3, shape.cols() / 3, size)]
        } else {
            self.simulation.masks.iter().map(|&r| r.into()).collect()
        };
        MaskSpec { shape, regions }
    }

    /// Rule of the configured simulation; `auto` needs the simulator.
    pub fn change_rule(
        &self,
        sim: &rfcd::sim::Simulator,
        mask: &rfcd::robust::ChangeMask,
    ) -> ChangeRule {
        match self.simulation.rule {
            RuleConfig::Auto { k } => sim.rule_for(mask, k),
            RuleConfig::Identity => ChangeRule::Identity,
            RuleConfig::Swap { i, j } => ChangeRule::Swap { i, j },
            RuleConfig::Replace { i, j } => ChangeRule::Replace { i, j },
            RuleConfig::Rescale { i, factor } => ChangeRule::Rescale { i, factor },
        }
    }

    pub fn methods(&self) -> Vec<Method> {
        self.evaluation
            .methods
            .iter()
            .filter_map(|m| Method::parse(m))
            .collect()
    }

    pub fn method_settings(&self) -> MethodSettings {
        MethodSettings {
            weights: RelativeWeights {
                lambda: self.fusion.lambda,
                gamma: self.correction.gamma,
            },
            outer_iters: self.outer.iters,
            solver: SolverSettings {
                fusion_tol: self.fusion.tol,
                fusion_max_iters: self.fusion.iters,
                correction_steps: self.correction.steps,
                correction_tol: self.correction.tol,
                step_policy: match self.correction.policy {
                    PolicyName::Fixed => StepPolicy::Fixed,
                    PolicyName::Backtracking => StepPolicy::Backtracking,
                },
                outer_tol: self.outer.tol,
            },
            smoothing_radius: self.cva.radius,
            interpolation: match self.fusion.interpolation {
                InterpolationName::Nearest => Interpolation::Nearest,
                InterpolationName::Bilinear => Interpolation::Bilinear,
            },
        }
    }
}
