use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point (t = {t}, x = {x:?}) lies in no chart of the atlas")]
    PointOutsideAtlas { t: f64, x: [f64; 3] },
    #[error("spatial metric is not positive definite at t = {t}, x = {x:?}")]
    DegenerateMetric { t: f64, x: [f64; 3] },
    #[error("tensor rank {0} is not supported (maximum 4)")]
    RankUnsupported(usize),
    #[error("direction {0:?} is not a unit vector")]
    InvalidDirection([f64; 3]),
    #[error("null frame degenerates: {0}")]
    FrameDegeneracy(String),
    #[error("geodesic left the atlas at s = {s_exit}")]
    AtlasExit { s_exit: f64 },
    #[error("step size underflow at s = {s}")]
    StepUnderflow { s: f64 },
    #[error("level {level} outside the available range [{lo}, {hi}]")]
    LevelOutOfRange { level: f64, lo: f64, hi: f64 },
    #[error("reconstructed T is not unit timelike: g(T,T) = {0}")]
    NonTimelikeT(f64),
    #[error("delta = {delta} is not below the injectivity estimate {i_star}")]
    DeltaBeyondInjectivity { delta: f64, i_star: f64 },
    #[error("closeness audit failed: measured eps = {measured} exceeds declared {declared}")]
    AssumptionCViolated { measured: f64, declared: f64 },
    #[error("grid too coarse: error bar {error_bar} exceeds event separation {separation}")]
    ResolutionTooCoarse { error_bar: f64, separation: f64 },
    #[error("slice domain is unbounded; declare a cutoff box")]
    UnboundedDomain,
    #[error("ball of radius {radius} leaves the chart")]
    BallExitsChart { radius: f64 },
    #[error("frame orthonormality drifted by {drift} at s = {s}")]
    FrameDrift { s: f64, drift: f64 },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
