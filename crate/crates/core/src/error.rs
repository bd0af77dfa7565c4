use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// One entry per violated invariant.
    #[error("invalid input: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("E = {0} meV has no propagating lead channel")]
    NoPropagation(f64),

    #[error("transfer matrices evaluated at different energies ({0} vs {1} meV)")]
    EnergyMismatch(f64, f64),

    #[error("E = {0} meV is not inside an allowed band")]
    NotAllowed(f64),

    #[error(
        "derivative stencil around E = {energy} meV (step {step} meV) leaves the allowed band"
    )]
    NearEdge { energy: f64, step: f64 },

    #[error("phase jumps by {jump:.3} rad between {from} and {to} meV; refine the energy grid")]
    PhaseJump { from: f64, to: f64, jump: f64 },

    #[error("adaptive quadrature did not converge on [{0}, {1}] nm")]
    Quadrature(f64, f64),

    #[error("root not bracketed on [{0}, {1}]")]
    NotBracketed(f64, f64),

    #[error("no viable ARC design: best residual {0:.3e}")]
    NoViableDesign(f64),

    #[error("the play model has no spatial potential profile")]
    NoProfile,

    #[error("transmitted fraction {0:.3e} is below the detection threshold")]
    NoTransmission(f64),

    #[error("time stepping unstable at step {step}: norm changed by {change:.3e}")]
    Unstable { step: usize, change: f64 },

    #[error("wave packet reached the domain boundary at t = {0:.3} fs")]
    BoundaryReached(f64),

    #[error("{0}")]
    Numeric(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed stack description: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::Io { .. } | Error::Json(_) | Error::NoProfile
        )
    }
}
