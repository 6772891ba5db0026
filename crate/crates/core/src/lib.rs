//! Coherent dark-state resonances in multilevel ions: Liouvillian assembly,
//! steady-state solvers, parameter scans and spectrum fitting.

pub mod atom;
mod dense;
pub mod error;
pub mod fit;
pub mod master;
pub mod quantum;
pub mod scans;
pub mod steady;
pub mod units;

pub use atom::{
    EightLevelParams, FourLevelParams, LandeFactors, LaserDrive, LevelScheme, MagneticField,
    Polarization,
};
pub use error::{Error, Result};
pub use master::{JumpOperator, eight_level_liouvillian, four_level_liouvillian};
pub use quantum::{C64, CMatrix, DensityMatrix, Liouvillian};
pub use steady::{SteadyStateResult, pe_analytic, stationary_dimension, steady_state};
pub use scans::{Model, ModelKind, ScanResult, SlopeResult, Solver, detuning_scan, power_scan, threshold_slope};
pub use fit::{
    FitOptions, FitParam, FitResult, FreeMask, SpectrumData, SpectrumModel, SpectrumParams,
    fit_spectrum, model_spectrum, synthesize_spectrum,
};
