use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// Configuration mistakes (bad matrices, out-of-range sites, unphysical bath
/// parameters) are separated from numerical failures so the command-line
/// driver can map them to different exit codes; see [`Error::is_config`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input matrix is not Hermitian (max |h - h^dagger| = {defect:.3e})")]
    NonHermitianInput { defect: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("bath attached to site {site} but the system only has {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("wide-band spectral functions are not allowed for bosonic baths (J(0) must vanish)")]
    BosonicWideBand,

    #[error("bosonic bath chemical potential {mu} is not below the bottom of its band ({band_bottom})")]
    BosonicMuAboveBand { mu: f64, band_bottom: f64 },

    #[error("Bose occupation diverges at omega = {omega} (mu = {mu})")]
    BosonicDivergence { omega: f64, mu: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("adaptive quadrature did not converge: estimated error {achieved:.3e} > requested {requested:.3e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("{quantity} diverges for this bath configuration ({reason})")]
    Divergent { quantity: &'static str, reason: String },

    #[error("no unique steady state: min Re(lambda) = {min_re:.3e}")]
    NonUniqueNess { min_re: f64 },

    #[error("Lyapunov operator is ill-conditioned (smallest |lambda_a + conj(lambda_b)| = {gap:.3e})")]
    IllConditioned { gap: f64 },

    #[error("drift matrix is close to defective (eigenvector condition estimate {cond:.3e}); {what} needs a diagonalizable drift matrix")]
    NearDefective { cond: f64, what: &'static str },

    #[error("single-particle spectrum is degenerate (gap {gap:.3e}); {what} assumes a non-degenerate spectrum")]
    DegenerateSpectrum { gap: f64, what: &'static str },

    #[error("perturbative regime rejected: margin {margin:.3e} below required {required}")]
    RegimeRejected { margin: f64, required: f64 },

    #[error("mode {mode} is dark (f_EE = {rate:.3e}); perturbative formulas divide by its decay rate")]
    DarkStatePresent { mode: usize, rate: f64 },

    #[error("Hamiltonian has complex entries but the formula needs a real orthogonal eigenbasis")]
    ComplexHamiltonian,

    #[error("Hamiltonian is not tridiagonal (entry ({row}, {col}) is nonzero)")]
    NotTridiagonal { row: usize, col: usize },

    #[error("baths are not all at the same temperature and chemical potential")]
    NotEquilibrium,

    #[error("operation requires a single-site system, got {n_sites} sites")]
    NotSingleSite { n_sites: usize },

    #[error("{what} is not available at this approximation level")]
    UnsupportedLevel { what: &'static str },

    #[error("tau_B scan did not settle below tolerance before the horizon t = {horizon:.3e}")]
    ScanHorizonExceeded { horizon: f64 },

    #[error("requested time {t:.3e} exceeds half the bath recurrence time {t_rec:.3e}")]
    RecurrenceHorizon { t: f64, t_rec: f64 },

    #[error("total single-particle dimension {n_tot} exceeds the limit {limit}")]
    DimensionTooLarge { n_tot: usize, limit: usize },

    #[error("Fock-space oracle supports at most {limit} sites, got {n_sites}")]
    TooManySites { n_sites: usize, limit: usize },

    #[error("Fock-space Redfield oracle is implemented for fermions only")]
    NonFermionic,

    #[error("ODE integrator failed: {0}")]
    Integrator(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by the input description rather than by the
    /// numerics; the CLI maps these to exit status 2.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::NonHermitianInput { .. }
                | Error::NotSquare { .. }
                | Error::SiteOutOfRange { .. }
                | Error::BosonicWideBand
                | Error::BosonicMuAboveBand { .. }
                | Error::InvalidParameter { .. }
                | Error::Config(_)
                | Error::NotTridiagonal { .. }
                | Error::NotSingleSite { .. }
                | Error::NotEquilibrium
                | Error::ComplexHamiltonian
                | Error::UnsupportedLevel { .. }
                | Error::TooManySites { .. }
                | Error::NonFermionic
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
