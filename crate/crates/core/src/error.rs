use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("channel grid: {0}")]
    Grid(String),

    #[error("invalid nlc plan: {0}")]
    Plan(String),

    #[error("signal has zero power; cannot rescale")]
    ZeroPower,

    #[error("frame synchronisation failed (peak correlation {peak:.3} < {threshold:.3})")]
    Sync { peak: f64, threshold: f64 },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error("point (scheme {scheme}, N={spans}, k={tx_spans}, {power_dbm} dBm): {source}")]
    Point {
        scheme: String,
        spans: usize,
        tx_spans: usize,
        power_dbm: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical/aliasing, 4 sync/calibration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Point { source, .. } => source.exit_code(),
            Error::Config(_) | Error::Parameter(_) | Error::Plan(_) | Error::Grid(_) | Error::Json(_) => 2,
            Error::Sync { .. } | Error::Calibration(_) => 4,
            Error::Aliasing(_) | Error::Numerical(_) | Error::ZeroPower => 3,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
