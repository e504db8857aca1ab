use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },

    #[error("invalid affine map: {0}")]
    InvalidMap(String),

    #[error("no ground truth boxes")]
    NoGroundTruth,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mixture fit failed: {0}")]
    Mixture(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("region {region_id} of image {image_id:?}: {reason}")]
    RegionGeometry {
        image_id: String,
        region_id: usize,
        reason: String,
    },

    #[error("unknown class id {class_id} in image {image_id:?}")]
    UnknownClass { image_id: String, class_id: u32 },

    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}
