use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("axle {axle} has negative vertical load {force:.3} N; the payload/geometry combination lifts it")]
    AxleLift { axle: usize, force: f64 },

    #[error("mass matrix is singular (smallest singular value {sigma_min:e}); check j1, j2, m1, m2, payload")]
    SingularMassMatrix { sigma_min: f64 },

    #[error("mass matrix condition estimate {cond:e} exceeds 1e12; offending parameters: {params}")]
    IllConditioned { cond: f64, params: String },

    #[error("I - (ts/2)Ac is singular at ts = {ts}; use a smaller sampling period")]
    SingularTustin { ts: f64 },

    #[error("selected row {row} of the payload variation matrix is zero; uncertainty direction undefined")]
    ZeroUncertaintyRow { row: usize },

    #[error("{0} is numerically singular")]
    Singular(&'static str),

    #[error("Γ(λ) is unbounded on the search interval [{lo:e}, {hi:e}]")]
    UnboundedGamma { lo: f64, hi: f64 },

    #[error("robust LQR block system is singular (rank condition on [E_F E_G] holds: {rank_condition})")]
    SingularBlockSystem { rank_condition: bool },

    #[error("{what} diverged at iteration {iteration} (norm {norm:e}); check weights and uncertainty scaling")]
    Divergence {
        what: &'static str,
        iteration: usize,
        norm: f64,
    },

    #[error("{what} did not converge in {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },

    #[error("γ = {gamma} infeasible at step {step}: violating eigenvalue {eigenvalue:e}")]
    GammaInfeasible {
        gamma: f64,
        step: usize,
        eigenvalue: f64,
    },

    #[error("lane-change geometry spans {length:.2} m but the run only covers {available:.2} m")]
    GeometryTooLong { length: f64, available: f64 },

    #[error("closed loop diverged at step {step}")]
    ClosedLoopDiverged { step: usize },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("config field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("states.csv line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn field(field: &str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
