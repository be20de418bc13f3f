//! Estimation and fitting: occupancy intervals, power laws, vacuum coupling
//! and spectral line shapes.

pub mod coupling;
pub mod lm;
pub mod models;
pub mod occupancy;
pub mod regression;
pub mod spectral;

pub use coupling::{extract_g0, CouplingEstimate, SidebandConvention};
pub use lm::{levenberg_marquardt, FitModel, LmConfig, LmOutcome};
pub use models::{
    jacobian_check, DoubletModel, JacobianCheck, LogPowerLawModel, MechanicalLineModel, SingleDipModel,
    JACOBIAN_TOLERANCE,
};
pub use occupancy::{
    bootstrap_occupancy, estimate_occupancy, estimate_occupancy_subtraction, BoundaryFlag, CountSample, EstimateMethod,
    OccupancyEstimate,
};
pub use regression::{fit_line, fit_power_law, fit_proportional, LineFit, PowerLawFit, ProportionalFit};
pub use spectral::{
    fit_lorentzian_doublet, fit_mechanical_spectrum, FitFlag, FitParameter, SpectralFit, SpectralModel, Spectrum,
};
