use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown curvature family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("quadrature inconclusive after {windows} doubling windows (partial sums {partial:?})")]
    Inconclusive { windows: usize, partial: Vec<f64> },
    #[error("quadrature did not converge on [{a}, {b}]")]
    QuadratureFailed { a: f64, b: f64 },
    #[error("non-monotone tail: derivative of log K-bar changes sign near rho = {rho}")]
    NonMonotoneTail { rho: f64 },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("non-finite value {what} at ({a}, {b})")]
    NonFinite { what: String, a: f64, b: f64 },
    #[error("lookup out of range: {0}")]
    OutOfRange(String),
    #[error("|x| = {x} is below the chart floor {floor}")]
    BelowFloor { x: f64, floor: f64 },
    #[error("degenerate direction: denominator {denominator}")]
    DegenerateDirection { denominator: f64 },
    #[error("structural: {0}")]
    Structural(String),
    #[error("CFL violation: number {number} exceeds {limit} at step {step}")]
    Cfl { number: f64, limit: f64, step: usize },
    #[error("positivity lost: value {value} at ({a}, {b})")]
    Positivity { value: f64, a: f64, b: f64 },
    #[error("boundary not space-like at rho = {rho} ({side}), margin {margin}")]
    SpaceLike { rho: f64, side: String, margin: f64 },
    #[error("a priori bound breached at rho = {rho}: norm {norm} > ceiling {ceiling}")]
    APriori { rho: f64, norm: f64, ceiling: f64 },
    #[error("non-strict hyperbolicity (v <= 0 or z <= w) at sample {index}")]
    NonStrictHyperbolicity { index: usize },
    #[error("frame drift {drift} at ({x}, {t})")]
    FrameDrift { drift: f64, x: f64, t: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("data underflow: {0}")]
    DataUnderflow(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
