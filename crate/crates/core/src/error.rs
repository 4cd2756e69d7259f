use thiserror::Error;

/// Errors raised by the library. CLI exit codes are derived from the variant.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid material: {0}")]
    Material(String),
    #[error("invalid force data: {0}")]
    Forces(String),
    #[error("expression error at position {pos}: {msg}")]
    Expression { pos: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("nonphysical deformation (det F = {det:e}) at x = ({:e}, {:e}, {:e})", .at[0], .at[1], .at[2])]
    Nonphysical { det: f64, at: [f64; 3] },
    #[error("malformed field file at row {row}: {msg}")]
    FieldFormat { row: usize, msg: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
