use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown metric family `{0}`")]
    UnknownFamily(String),
    #[error("bad metric parameters: {0}")]
    BadParams(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),
    #[error("point {0:?} lies on or too close to the chart boundary")]
    ChartBoundary(Vec<f64>),
    #[error("transverse edge is not g-orthogonal to the flagpole (|g(V,l)| = {0:.3e})")]
    NotOrthogonal(f64),
    #[error("tensor valence ({0},{1}) is not supported (at most (1,2))")]
    ValenceUnsupported(usize, usize),
    #[error("metric reconstruction left the positive range: {0}")]
    NonPositive(String),
    #[error("time step {dt} violates the stability guard dt <= {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("homothety factor reached zero at t = {t}")]
    Extinction { t: f64 },
    #[error("pole of the comparison ODE reached at t = {0}")]
    PoleReached(f64),
    #[error("check not applicable: {0}")]
    NotApplicable(String),
    #[error("family is not Riemannian: {0}")]
    NotRiemannian(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
