//! Simulation of observation pairs with known change from a reference
//! hyperspectral image.

mod protocol;
mod rules;
mod scene;
mod unmix;

pub use protocol::{
    benchmark_suite, decimate_mask, pan_band_count, simulate_pair, ChangeEpoch, PairPlan, Scenario,
    SimulatedPair, SimulationSettings, Simulator,
};
pub use rules::{apply_change_rule, rasterize_mask, ChangeRule, MaskSpec, Region};
pub use scene::{synthetic_reference, ReferenceScene, SceneSettings};
pub use unmix::{mix, project_simplex, unmix, EndmemberModel, Unmixing};
