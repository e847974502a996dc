use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "beta = {beta} m^-1 is below the fog bound beta >= 2.996e-3 m^-1 \
         (MOR = 2.996/beta must be under 1 km); pass --allow-haze to permit sub-fog haze"
    )]
    BelowFogBound { beta: f64 },

    #[error("image is empty")]
    EmptyImage,

    #[error("plane fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("every RANSAC sample was collinear after {0} attempts")]
    DegenerateSamples(usize),

    #[error("no superpixel had enough valid depth to fit a plane")]
    NoValidSuperpixel,

    #[error("bilateral grid needs {required} bytes, cap is {cap} bytes")]
    GridMemoryExceeded { required: usize, cap: usize },

    #[error("regression system is rank deficient; use a positive ridge")]
    RankDeficient,

    #[error("invalid density model: {0}")]
    InvalidModel(String),

    #[error("missing label file for image {image}: {path}")]
    MissingLabel { image: String, path: PathBuf },

    #[error("missing {kind} for image {image}: {path}")]
    MissingInput {
        kind: &'static str,
        image: String,
        path: PathBuf,
    },

    #[error("label id {id} out of range in {source_name} (valid: 0..{num_classes} or void {void_id})")]
    LabelOutOfRange {
        source_name: String,
        id: u32,
        num_classes: u32,
        void_id: u32,
    },

    #[error("prediction contains the void label at pixel {0}")]
    VoidInPrediction(usize),

    #[error("confusion matrix is empty")]
    EmptyConfusion,

    #[error("invalid curriculum plan: {0}")]
    InvalidPlan(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("unsupported raster in {path}: {reason}")]
    UnsupportedRaster { path: PathBuf, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage { stage: stage.into(), source: Box::new(self) }
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

pub(crate) fn check_dims(
    what: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { what, expected, found });
    }
    Ok(())
}
