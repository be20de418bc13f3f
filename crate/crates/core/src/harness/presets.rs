//! Campaigns shipped with the crate, one per reproduced figure.

use crate::config::{parse_config, CampaignConfig};
use crate::error::{Error, Result};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

macro_rules! preset {
    ($name:literal, $desc:literal) => {
        Preset {
            name: $name,
            description: $desc,
            text: include_str!(concat!("../../presets/", $name, ".toml")),
        }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("fig1d", "Optical doublet spectrum and Lorentzian-doublet fit"),
    preset!("fig1e", "Mechanical spectrum and quality-factor fit"),
    preset!("fig3a", "4 K detuning scan of Stokes and anti-Stokes rates"),
    preset!("fig3b", "4 K power sweep, rate exponent and g0 extraction"),
    preset!("fig4a", "11 mK sideband counts at 8.5 nW and occupancy estimate"),
    preset!("fig4b", "11 mK power sweep and sideband rate power law"),
    preset!("fig4c", "11 mK occupancy versus pulse power"),
    preset!("fig4d", "11 mK occupancy versus duty cycle"),
    preset!("supp-fig7", "11 mK pump-probe delay sweep with a 50 us period"),
    preset!("supp-fig8", "11 mK gap sweep at 340 nW, rates versus average power"),
];

pub fn list_presets() -> &'static [Preset] {
    PRESETS
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|p| p.name == name).map(|p| p.text).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::Validation(format!("unknown preset {name:?} (known: {})", known.join(", ")))
    })
}

pub fn preset_config(name: &str) -> Result<CampaignConfig> {
    parse_config(preset_text(name)?)
}
