//! Seeded SGD training over per-image detection features.
//!
//! Batches are formed by sampling a fixed number of images and taking all of
//! their detections, so Batch-All mining compares descriptors within and
//! across the images of a batch. Training is single-threaded and bit-stable
//! for a given seed.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_blobs, detect_oracle, extract_features, BlobParams, FeatureVector};
use crate::error::{Result, SimcoError};
use crate::raster::RasterImage;
use crate::rng::substream;
use crate::shapegen::{DatasetManifest, ImageRecord, ObjectType, Split};

use super::loss::{loss_gradient, Gradients};
use super::EmbeddingNet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Images per batch.
    pub batch_images: usize,
    /// Triplet margin.
    pub margin: f64,
    pub seed: u64,
    pub hidden_dim: usize,
    /// Patch side for feature extraction.
    pub patch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            epochs: 30,
            batch_images: 4,
            margin: 0.2,
            seed: 0,
            hidden_dim: 128,
            patch: 16,
        }
    }
}

/// Detection features of one image with their type labels.
#[derive(Debug, Clone)]
pub struct ImageFeatures {
    pub image_index: usize,
    pub features: Vec<FeatureVector>,
    /// Global type id per detection.
    pub labels: Vec<usize>,
}

/// Labeled features for a set of images. Type ids are global across the set
/// so that equal types repeated across images mine as positives.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub images: Vec<ImageFeatures>,
    pub num_type_ids: usize,
}

/// Assigns global ids to object types in first-seen order.
#[derive(Default)]
struct TypeInterner {
    map: std::collections::HashMap<ObjectType, usize>,
}

impl TypeInterner {
    fn id(&mut self, ty: &ObjectType) -> usize {
        let next = self.map.len();
        *self.map.entry(ty.clone()).or_insert(next)
    }
}

/// Detector choice when building feature sets.
#[derive(Debug, Clone)]
pub enum FeatureDetector {
    Oracle,
    /// Blob detections labeled by IoU >= 0.5 matching against the
    /// annotations; unmatched detections are dropped.
    Blob(BlobParams),
}

/// Build features for in-memory records and rasters (oracle detections).
pub fn feature_set_from_memory(
    items: &[(ImageRecord, RasterImage)],
    patch: usize,
) -> Result<FeatureSet> {
    let mut interner = TypeInterner::default();
    let mut images = Vec::with_capacity(items.len());
    for (idx, (record, raster)) in items.iter().enumerate() {
        images.push(image_features(
            idx,
            record,
            raster,
            patch,
            &FeatureDetector::Oracle,
            &mut interner,
        )?);
    }
    Ok(FeatureSet {
        images,
        num_type_ids: interner.map.len(),
    })
}

/// Build features for one split of an on-disk dataset.
pub fn feature_set_from_dir(
    manifest: &DatasetManifest,
    dir: &Path,
    split: Split,
    patch: usize,
    detector: &FeatureDetector,
) -> Result<FeatureSet> {
    let mut interner = TypeInterner::default();
    let mut images = Vec::new();
    for idx in manifest.split_indices(split) {
        let record = &manifest.images[idx];
        let raster = RasterImage::load_ppm(&dir.join(&record.file))?;
        images.push(image_features(
            idx,
            record,
            &raster,
            patch,
            detector,
            &mut interner,
        )?);
    }
    Ok(FeatureSet {
        images,
        num_type_ids: interner.map.len(),
    })
}

fn image_features(
    image_index: usize,
    record: &ImageRecord,
    raster: &RasterImage,
    patch: usize,
    detector: &FeatureDetector,
    interner: &mut TypeInterner,
) -> Result<ImageFeatures> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    match detector {
        FeatureDetector::Oracle => {
            for (det, inst) in detect_oracle(record).iter().zip(&record.instances) {
                features.push(extract_features(raster, det, patch)?);
                labels.push(interner.id(&record.types[inst.type_index]));
            }
        }
        FeatureDetector::Blob(params) => {
            let detections = detect_blobs(raster, params);
            let matches = crate::count::match_detections_to_instances(&detections, record, 0.5);
            for (d, det) in detections.iter().enumerate() {
                if let Some(inst_idx) = matches[d] {
                    features.push(extract_features(raster, det, patch)?);
                    labels.push(interner.id(&record.types[record.instances[inst_idx].type_index]));
                }
            }
        }
    }
    Ok(ImageFeatures {
        image_index,
        features,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean raw-sum batch loss per epoch.
    pub epoch_mean_loss: Vec<f64>,
}

/// Train with SGD plus momentum.
///
/// The reported loss per batch is the raw triplet sum; the SGD step divides
/// the gradient by the count of active triplets (1 when none) to keep the
/// step scale stable across batch compositions.
pub fn train(
    net: &mut EmbeddingNet,
    data: &FeatureSet,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let usable: Vec<&ImageFeatures> = data
        .images
        .iter()
        .filter(|img| !img.features.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(SimcoError::EmptySplit("train"));
    }
    for img in &usable {
        for f in &img.features {
            if f.values.len() != net.input_dim {
                return Err(SimcoError::DimensionMismatch {
                    expected: net.input_dim,
                    got: f.values.len(),
                });
            }
        }
    }
    let batch_images = config.batch_images.max(1);
    let mut rng = substream(config.seed, 0x7237);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut velocity = Gradients::zeros(net);
    let mut epoch_mean_loss = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        for chunk in order.chunks(batch_images) {
            let mut features: Vec<FeatureVector> = Vec::new();
            let mut labels: Vec<usize> = Vec::new();
            for &img_idx in chunk {
                features.extend(usable[img_idx].features.iter().cloned());
                labels.extend(usable[img_idx].labels.iter().copied());
            }
            let (loss, grads) = loss_gradient(net, &features, &labels, config.margin)?;
            batch_losses.push(loss.value);
            let denom = loss.active_triplets.max(1) as f64;
            step(
                net,
                &mut velocity,
                &grads,
                config.lr,
                config.momentum,
                denom,
            );
        }
        let mean = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        epoch_mean_loss.push(mean);
    }
    Ok(TrainReport { epoch_mean_loss })
}

fn step(
    net: &mut EmbeddingNet,
    velocity: &mut Gradients,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
    denom: f64,
) {
    let update = |param: &mut [f64], vel: &mut [f64], grad: &[f64]| {
        for i in 0..param.len() {
            vel[i] = momentum * vel[i] + grad[i] / denom;
            param[i] -= lr * vel[i];
        }
    };
    update(&mut net.w1, &mut velocity.w1, &grads.w1);
    update(&mut net.b1, &mut velocity.b1, &grads.b1);
    update(&mut net.w2, &mut velocity.w2, &grads.w2);
    update(&mut net.b2, &mut velocity.b2, &grads.b2);
}

/// Write the loss curve as `epoch,mean_loss` CSV.
pub fn write_loss_csv(path: &Path, report: &TrainReport) -> Result<()> {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, loss) in report.epoch_mean_loss.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, loss));
    }
    fs::write(path, out).map_err(|e| SimcoError::io(path, e))
}
