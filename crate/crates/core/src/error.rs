use thiserror::Error;

/// Everything that can go wrong between building a profile and writing a report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("profile: {0}")]
    Profile(String),

    #[error("argument {name} = {value} outside [0, 1]")]
    OutOfDomain { name: &'static str, value: f64 },

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("mesh: triangle {triangle} has non-positive signed area {area:e} (cap too coarse for the profile slope?)")]
    TangledCap { triangle: usize, area: f64 },

    #[error("assembly: {0}")]
    Assembly(String),

    #[error("factorization: zero or tiny pivot at step {step} (|d| = {pivot:e})")]
    ZeroPivot { step: usize, pivot: f64 },

    #[error("factorization: {0}")]
    Factorization(String),

    #[error("solve: {0}")]
    Solve(String),

    #[error("eigensolver did not converge with a Krylov space of {iterations} vectors; best residuals {residuals:?}")]
    NoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("eigensolver: shift {shift} lies above {below} eigenvalue(s) of the pencil")]
    ShiftAboveSpectrum { shift: f64, below: usize },

    #[error("scattering: {0}")]
    Scattering(String),

    #[error("spectra: {0}")]
    Spectra(String),

    #[error("features: {0}")]
    Features(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
