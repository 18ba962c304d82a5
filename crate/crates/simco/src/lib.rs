//! Similarity-based multi-class object counting.
//!
//! The pipeline counts repeated objects in an image without class-specific
//! training: detect candidate objects, embed each detection on the 64-d unit
//! hypersphere with a triplet-loss similarity head, group the embeddings
//! with affinity propagation, filter outlier clusters, and report per-cluster
//! counts. A synthetic shape dataset generator provides annotated training
//! and evaluation imagery, and MAE/NMAE metrics score predicted counts
//! against ground truth.
//!
//! Modules follow the stages:
//!
//! - [`shapegen`] — annotated synthetic shape images and dataset manifests;
//! - [`detect`] — ground-truth oracle and color-threshold blob detectors,
//!   plus patch feature extraction;
//! - [`embed`] — the similarity head and its Batch-All triplet training;
//! - [`cluster`] — affinity propagation, preference sweep and seed-driven
//!   preference search;
//! - [`count`] — the composed pipeline and MAE/NMAE evaluation;
//! - [`viz`] — deterministic cluster overlays.
//!
//! Data-parallel stages (generation, evaluation, sweeps) run on rayon when
//! the default `parallel` feature is enabled and fall back to sequential
//! loops without it; results are bit-identical either way.

pub mod cluster;
pub mod count;
pub mod detect;
pub mod embed;
pub mod error;
pub mod geom;
pub mod par;
pub mod raster;
pub mod rng;
pub mod shapegen;
pub mod viz;

pub use error::{Result, SimcoError};
