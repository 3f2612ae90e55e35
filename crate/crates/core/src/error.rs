use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("material '{name}': {field} = {value} is outside the accepted range [1, 3)")]
    IndexOutOfRange {
        name: String,
        field: &'static str,
        value: f64,
    },

    #[error("unknown material '{name}' (line {line})")]
    UnknownMaterial { name: String, line: usize },

    #[error("evanescent wave: direction sine {sine} is not below {limit} in '{material}'")]
    Evanescent {
        material: String,
        sine: f64,
        limit: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("'{substrate}' and '{compensator}' have the same optical sign; no compensation is possible")]
    NoCompensation {
        substrate: String,
        compensator: String,
    },

    #[error("'{0}' is isotropic; there is no birefringent aberration to work with")]
    Isotropic(String),

    #[error("no interior minimum inside [{lower}, {upper}] mm; coarse scan: {profile:?}")]
    NoInteriorMinimum {
        lower: f64,
        upper: f64,
        profile: Vec<(f64, f64)>,
    },

    #[error("uncompensated residual is zero; the residual ratio is undefined")]
    UndefinedRatio,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
