use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid order {0}: at least 2 intervals are required")]
    InvalidOrder(usize),
    #[error("invalid interval [{a}, {b}]: a must be strictly below b")]
    InvalidInterval { a: f64, b: f64 },
    #[error("unknown density id `{0}`")]
    UnknownDensity(String),
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("spline normal equations are singular (condition estimate {condition:.3e})")]
    IllPosedSpline { condition: f64 },
    #[error("invalid spline configuration: {0}")]
    SplineConfig(String),
    #[error("point ({x}, {y}) lies outside the domain")]
    OutOfDomain { x: f64, y: f64 },
    #[error("integral diverges: truncated radial integral did not settle by radius {radius:.3e}")]
    Divergent { radius: f64 },
    #[error("invalid neighbour count k={k} for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("step size collapsed below {tau:.3e} without decreasing the energy")]
    StepSize { tau: f64 },
    #[error("linear system is singular: {0}")]
    Singular(String),
    #[error("constraint layout is not supported: {0}")]
    UnsupportedLayout(String),
    #[error("quadrature cannot resolve epsilon={eps:.3e} (field resolution {resolution:.3e})")]
    Resolution { eps: f64, resolution: f64 },
    #[error("semi-implicit step failed: {0}")]
    StepFailure(String),
    #[error("algebraic interface residual {residual:.3e} exceeds {limit:.1e}")]
    AlgebraicSolve { residual: f64, limit: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter `{key}`: {message}")]
    Parse { key: String, message: String },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidOrder(_) | Error::InvalidInterval { .. } => "grid",
            Error::UnknownDensity(_)
            | Error::EmptySample
            | Error::InvalidBandwidth(_)
            | Error::IllPosedSpline { .. }
            | Error::SplineConfig(_)
            | Error::Divergent { .. } => "density",
            Error::OutOfDomain { .. } => "domain",
            Error::InvalidK { .. } | Error::StepSize { .. } | Error::Singular(_) => "solver",
            Error::UnsupportedLayout(_)
            | Error::Resolution { .. }
            | Error::StepFailure(_)
            | Error::AlgebraicSolve { .. } => "continuum",
            Error::Shape(_) | Error::InvalidArgument(_) => "argument",
            Error::Parse { .. } => "config",
            Error::Malformed(_) | Error::Io(_) | Error::Csv(_) => "io",
        }
    }

    /// Process exit code associated with [`Error::category`].
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "argument" => 3,
            "io" => 4,
            "grid" | "domain" => 5,
            "density" => 6,
            "solver" => 7,
            "continuum" => 8,
            _ => 1,
        }
    }
}
