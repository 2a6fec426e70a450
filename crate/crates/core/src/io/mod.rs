//! Persistence and export: tensor containers, run artifacts, CSV and SVG.

mod artifact;
mod csv;
mod svg;
mod tensor;

pub use artifact::{
    ArtifactKind, ConsistencyEntry, DeepSummary, EnvInfo, Manifest, RecoverySummary, RunArtifact, TablePair,
    TensorEntry, VerifyReport, FORMAT_NAME, FORMAT_VERSION, MANIFEST_FILE,
};
pub use csv::{slice_csv, tensor_csv, CSV_HEADER, CSV_THRESHOLD};
pub use svg::{render_heatmap, HeatmapMeta};
pub use tensor::{Tensor, MAGIC, TENSOR_FORMAT_VERSION};
