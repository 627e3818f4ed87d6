//! Feature-based automated text scoring.
//!
//! Datasets are read into [`Dataset`]s, turned into feature matrices by a
//! [`FeaturePipeline`], and fitted with one of the learners. A trained
//! [`Profiler`] bundles the pipeline, model and label range and can be saved to
//! and loaded from an artifact directory.

pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod interpret;
pub mod learners;
pub mod lingproc;
pub mod metrics;
pub mod profiler;
pub mod rng;
pub mod textmodel;

pub use error::{Error, Result};
pub use features::{FeaturePipeline, FeatureVector, Standardizer};
pub use metrics::MetricReport;
pub use profiler::{Model, Profiler};

pub use textmodel::{
    denormalize_score, label_to_score, normalize_score, score_to_label, Dataset, Instance,
    LabelSpec, Prediction, TaskKind,
};
