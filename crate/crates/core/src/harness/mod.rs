//! Reproducible campaigns: presets, execution and manifests.

mod campaign;
mod presets;

pub use campaign::*;
pub use presets::{list_presets, preset_config, preset_text, Preset, PRESETS};
