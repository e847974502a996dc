//! Curriculum model adaptation: synthetic fog sweeps, density ranking of
//! real foggy images, selection of the light real subset, ingestion of its
//! noisy labels, and emission of training manifests. The final manifest
//! mixes dense synthetic and light real images in a `1 : w` stream, which
//! weights the two data sources in the training loss by
//! `lambda = (u / l) * w`.

mod curriculum;
mod dataset;
mod manifest;

pub use curriculum::{build_curriculum, CurriculumOutcome, CurriculumPlan};
pub use dataset::{
    generate_sweep, ingest_noisy_labels, read_exclusion_list, select_by_threshold, select_light_subset, sweep_dir,
    ClearDataset, SimulationSettings,
};
pub use manifest::{
    build_mixed_manifest, metadata_path, DatasetManifest, LabeledImage, ManifestEntry, ManifestMetadata, MixOptions,
    Source,
};
