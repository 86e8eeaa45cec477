use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("degenerate quadratic differential: max |q| = {0:e} on samples")]
    DegenerateDifferential(f64),
    #[error("t = {t} outside [-{t_max}, {t_max}]")]
    OutOfRange { t: f64, t_max: f64 },
    #[error("mapped point {0} left the unit disk")]
    MapOutOfRange(f64),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("ill-resolved degree: {value} is {distance} from the nearest integer")]
    IllResolvedDegree { value: f64, distance: f64 },
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("energy curve sample at t = {t} failed: {source}")]
    Curve {
        t: f64,
        #[source]
        source: Box<LabError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
