//! Digital twin of pulsed Brillouin sideband thermometry on a gigahertz
//! optomechanical disk resonator.
//!
//! The crate simulates filtered single-photon count records from the
//! scattering-rate equations, a Fabry-Perot filter cascade, pulsed drive
//! sequences and a two-channel heating model, and infers phonon occupancy,
//! vacuum coupling and spectral parameters back from such records.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod counting;
pub mod device;
pub mod error;
pub mod filter;
pub mod harness;
pub mod inference;
pub mod numerics;
pub mod rng;
pub mod sequence;
pub mod thermal;
pub mod units;

pub use config::{parse_config, CampaignConfig};
pub use counting::{
    ensemble_counts, expected_epochs, pump_leak_rate, simulate_counts, simulate_counts_stream, CountLabel, CountRecord,
    Epoch, EpochTemplate, SimulationPlan,
};
pub use device::{
    bose_einstein_occupancy, intracavity_photon_number, modal_temperature, occupancy_from_rates, sideband_rates,
    spd_rate, thermal_ground_probability, DetectorModel, DeviceModel, MechanicalMode, OpticalMode,
};
pub use error::{Error, Result};
pub use filter::{chain_transmission, stage_transmission, sweep_response, DriftLaw, FabryPerotStage, FilterChain};
pub use harness::{execute_campaign, list_presets, preset_config, run_campaign, Manifest, RecordFormat};
pub use inference::{
    bootstrap_occupancy, estimate_occupancy, extract_g0, fit_lorentzian_doublet, fit_mechanical_spectrum, CountSample,
    OccupancyEstimate, SpectralFit, Spectrum,
};
pub use rng::StreamRng;
pub use sequence::{average_power, duty_cycle, expand_timeline, Element, Interval, Pulse, PulseLabel, PulseSequence};
pub use thermal::{effective_occupancy, pump_probe_occupancy, CryostatEnvironment, HeatingModel};
