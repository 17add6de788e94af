use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("eigenvalue iteration failed to converge for a {0}x{0} matrix")]
    EigenFailure(usize),

    #[error("singular Lyapunov operator: eigenvalues {0} and {1} sum to (almost) zero; is A Hurwitz?")]
    SingularLyapunov(String, String),

    #[error("spectra not separated: shifted solve with shift {0} is singular")]
    SpectraNotSeparated(String),

    #[error("Sylvester solution has a non-negligible imaginary part (relative {0:.3e})")]
    ImaginaryResidue(f64),

    #[error("singular matrix encountered in {0}")]
    Singular(&'static str),

    #[error("bases not bi-orthogonalizable: W^T V is rank deficient (smallest singular value {0:.3e})")]
    NotBiorthogonal(f64),

    #[error("ambiguous truncation order n={n}: sigma_n={sigma_n:.6e} and sigma_(n+1)={sigma_next:.6e} coincide; try n={} or n={}", n - 1, n + 1)]
    AmbiguousOrder {
        n: usize,
        sigma_n: f64,
        sigma_next: f64,
    },

    #[error("reduction order {n} exceeds the numerical rank {rank} of the Gramian factor product")]
    OrderExceedsRank { n: usize, rank: usize },

    #[error("Assumption 1 violated: reduced matrix is not Hurwitz (max real part {max_real:.3e})")]
    NotHurwitz { max_real: f64 },

    #[error("exact form requires dense Gramian")]
    DenseGramianRequired,

    #[error("reduced model has no left basis W; the estimator needs the map x0 -> W^T x0")]
    MissingLeftBasis,

    #[error("V^T Q V is numerically singular (reciprocal condition {0:.3e})")]
    SingularProjectedGramian(f64),

    #[error("integration failed at t={t:.6e}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("time meshes differ")]
    MeshMismatch,

    #[error("missing data file {path}: {hint}")]
    MissingData { path: String, hint: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed Matrix Market data in {path}: {message}")]
    MatrixMarket { path: String, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),
}

impl Error {
    /// The library area an error originates from.
    pub fn module(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => "core",
            Error::EigenFailure(_) | Error::Singular(_) => "linalg",
            Error::SingularLyapunov(..)
            | Error::SpectraNotSeparated(_)
            | Error::ImaginaryResidue(_)
            | Error::DenseGramianRequired => "solvers",
            Error::NotBiorthogonal(_)
            | Error::AmbiguousOrder { .. }
            | Error::OrderExceedsRank { .. }
            | Error::SingularProjectedGramian(_) => "reduction",
            Error::NotHurwitz { .. } | Error::MissingLeftBasis => "estimator",
            Error::Integration { .. } | Error::MeshMismatch => "simulate",
            Error::MissingData { .. } => "benchmarks",
            Error::Io { .. } | Error::MatrixMarket { .. } | Error::Manifest(_) => "io",
        }
    }

    /// A suggested remedy, when one is known.
    pub fn hint(&self) -> Option<&'static str> {
        Some(match self {
            Error::SingularLyapunov(..) => "check that A is Hurwitz (all eigenvalues in the open left half-plane)",
            Error::EigenFailure(_) => "with OpenBLAS, try OPENBLAS_CORETYPE=Haswell",
            Error::AmbiguousOrder { .. } => "choose an order between well-separated Hankel singular values",
            Error::OrderExceedsRank { .. } => "lower the order or tighten the low-rank Gramian tolerance",
            Error::NotHurwitz { .. } => "try ISRK, which preserves stability, or a different order",
            Error::DenseGramianRequired => "use the dense Gramian solver",
            Error::NotBiorthogonal(_) | Error::SingularProjectedGramian(_) => "try a different order or seed",
            Error::Integration { .. } => "loosen the integrator tolerances or shorten the horizon",
            Error::Manifest(_) => "compare the file with the documented configuration layout",
            _ => return None,
        })
    }

    pub(crate) fn dims(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
