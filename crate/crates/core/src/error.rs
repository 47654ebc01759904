use crate::Point3;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("field `{label}` returned non-finite value {value} at ({}, {}, {})", point.x, point.y, point.z)]
    Evaluation { label: String, point: Point3, value: f64 },

    #[error("field `{label}` is declared positive but K({}, {}, {}) = {value}", point.x, point.y, point.z)]
    PositivityViolated { label: String, point: Point3, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot retract to volume {target}: current volume {volume}")]
    Retraction { volume: f64, target: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("degenerate volume constraint: Riesz representative of V' has norm {norm:e}")]
    DegenerateConstraint { norm: f64 },

    #[error("surface maps live on different meshes")]
    MeshMismatch,

    #[error("point location failed for direction ({}, {}, {})", .0.x, .0.y, .0.z)]
    PointLocation(Point3),

    #[error("trajectory too short: {len} rows, need {needed}")]
    ShortTrajectory { len: usize, needed: usize },
}
