use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("invalid config value for `{key}`: {message}")]
    ConfigValidation { key: String, message: String },

    #[error("invalid range {0}")]
    InvalidRange(String),

    #[error("catalog has {available} templates in split {split}, scene needs {needed}")]
    InsufficientCatalog {
        split: String,
        available: usize,
        needed: usize,
    },

    #[error("unknown instance id {0}")]
    UnknownInstance(u32),

    #[error("mask dimensions differ: {0}x{0} vs {1}x{1}")]
    MaskDimensions(usize, usize),

    #[error("occluded mask of instance {instance} is not contained in its unoccluded mask")]
    MaskSubsetViolation { instance: u32 },

    #[error("empty mask")]
    EmptyMask,

    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },

    #[error("no pairs to score")]
    EmptyInput,

    #[error("no counted instances in scene")]
    NoCountedInstances,

    #[error("prediction file line {line}: {message}")]
    MalformedPrediction { line: usize, message: String },

    #[error("prediction for unknown (image_id {image_id}, class_id {class_id})")]
    UnknownPair { image_id: u64, class_id: u32 },

    #[error("duplicate prediction for (image_id {image_id}, class_id {class_id}) at line {line}")]
    DuplicatePrediction { image_id: u64, class_id: u32, line: usize },

    #[error("scene index {index} out of range (scene_count {count})")]
    IndexOutOfRange { index: u64, count: u64 },

    #[error("manifest not found at {0}")]
    MissingManifest(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::result::Result<T, std::io::Error> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}

impl<T> IoContext<T> for std::result::Result<T, serde_json::Error> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Json {
            path: path.into(),
            source,
        })
    }
}

impl<T> IoContext<T> for std::result::Result<T, image::ImageError> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Image {
            path: path.into(),
            source,
        })
    }
}
