use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (max |M_ij - conj(M_ji)| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("density matrix trace is {trace}, expected 1")]
    TraceNotUnit { trace: f64 },

    #[error("density matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("invalid angular momentum: {0}")]
    InvalidAngularMomentum(String),

    #[error("polarization amplitudes have norm {norm}, expected 1")]
    InvalidPolarization { norm: f64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("integration diverged: trace drift {trace_drift:e} exceeds 1e-3")]
    UnstableIntegration { trace_drift: f64 },

    #[error("Liouvillian is identically zero; no steady state can be selected")]
    ZeroGenerator,

    #[error("linear system is singular")]
    SingularSystem,

    #[error("steady-state residual {residual:e} exceeds bound {bound:e}")]
    Residual { residual: f64, bound: f64 },

    #[error("non-physical steady state (min population {min_population:e})")]
    NonPhysical { min_population: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid spectrum data: {0}")]
    InvalidData(String),

    #[error("solver failed at detuning {detuning_mhz} MHz: {source}")]
    PointFailed {
        detuning_mhz: f64,
        #[source]
        source: Box<Error>,
    },
}
