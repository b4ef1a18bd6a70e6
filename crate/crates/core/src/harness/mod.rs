//! Files, configuration and artifacts around the experiment.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod csv;
pub mod dataset;
pub mod manifest;

pub use artifacts::ArtifactWriter;
pub use dataset::DatasetFile;
pub use manifest::RunManifest;
