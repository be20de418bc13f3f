//! Fixtures shared by the benchmarks.

use sideband_core::config::CampaignConfig;
use sideband_core::harness::{preset_config, synthetic_spectrum};
use sideband_core::{SimulationPlan, Spectrum};

pub fn preset(name: &str) -> CampaignConfig {
    preset_config(name).expect("shipped presets parse")
}

/// The millikelvin thermometry plan at 8.5 nW.
pub fn thermometry_plan() -> SimulationPlan {
    preset("fig4a").plan.expect("counting preset")
}

pub fn doublet_spectrum() -> Spectrum {
    synthetic_spectrum(&preset("fig1d")).expect("doublet preset")
}

pub fn mechanical_spectrum() -> Spectrum {
    synthetic_spectrum(&preset("fig1e")).expect("mechanical preset")
}
