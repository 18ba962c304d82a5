//! End-to-end counting and evaluation: detect, embed, cluster, filter,
//! count, then score per-(image, type) predictions with MAE/NMAE.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{
    affinity_propagation, build_similarity, filter_clusters, median_offdiag_similarity,
    preference_search, APConfig, FilterMode,
};
use crate::detect::{detect_blobs, detect_oracle, extract_features, BlobParams, Detection};
use crate::embed::{Descriptor, EmbeddingNet};
use crate::error::{Result, SimcoError};
use crate::geom::BBox;
use crate::raster::RasterImage;
use crate::rng::fnv1a64;
use crate::shapegen::ImageRecord;

/// Published reference scores of similarity-based counting with a full
/// detection backbone on the external Cells and RepTile benchmarks. Kept for
/// context only; nothing in this crate asserts against them (those datasets
/// and the backbone are out of scope).
pub mod reference {
    pub const CELLS_MAE: f64 = 12.0;
    pub const CELLS_NMAE: f64 = 0.07;
    pub const REPTILE_MAE: f64 = 8.66;
    pub const REPTILE_NMAE: f64 = 0.086;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMode {
    Oracle,
    Blob,
}

/// Clustering mode of the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum ClusterMode {
    /// Search the preference grid until the supplied seeds split into
    /// distinct clusters; count only seeded clusters.
    Seeded,
    /// Cluster at the median off-diagonal similarity and drop clusters
    /// smaller than `min_count`.
    Unsupervised { min_count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorMode,
    pub blob: BlobParams,
    pub ap: APConfig,
    /// Preference-search grid resolution.
    pub grid_steps: usize,
    /// Patch side for feature extraction; must match the trained model.
    pub patch: usize,
    /// Minimum IoU for binding a seed box to a detection.
    pub seed_bind_iou: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detector: DetectorMode::Oracle,
            blob: BlobParams::default(),
            ap: APConfig::default(),
            grid_steps: 64,
            patch: 16,
            seed_bind_iou: 0.3,
        }
    }
}

/// Count of one kept cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCount {
    pub exemplar: usize,
    /// Detection indices belonging to this cluster.
    pub members: Vec<usize>,
    pub count: usize,
}

/// Per-image counting output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub image_id: String,
    pub mode: String,
    pub preference: f64,
    pub total: usize,
    pub clusters: Vec<ClusterCount>,
}

impl CountReport {
    fn empty(image_id: &str, mode: &ClusterMode) -> CountReport {
        CountReport {
            image_id: image_id.to_string(),
            mode: mode_name(mode).to_string(),
            preference: 0.0,
            total: 0,
            clusters: Vec::new(),
        }
    }
}

fn mode_name(mode: &ClusterMode) -> &'static str {
    match mode {
        ClusterMode::Seeded => "seeded",
        ClusterMode::Unsupervised { .. } => "unsupervised",
    }
}

/// Run the detector configured in `config` on one image.
pub fn run_detector(
    record: &ImageRecord,
    raster: &RasterImage,
    config: &PipelineConfig,
) -> Vec<Detection> {
    match config.detector {
        DetectorMode::Oracle => detect_oracle(record),
        DetectorMode::Blob => detect_blobs(raster, &config.blob),
    }
}

/// Embed every detection.
pub fn embed_detections(
    raster: &RasterImage,
    detections: &[Detection],
    net: &EmbeddingNet,
    patch: usize,
) -> Result<Vec<Descriptor>> {
    detections
        .iter()
        .map(|det| {
            let f = extract_features(raster, det, patch)?;
            net.forward(&f.values)
        })
        .collect()
}

/// Bind each seed box to the detection with the highest IoU.
///
/// Errors when a seed's best IoU falls below the binding threshold or when
/// two seeds bind to one detection.
pub fn bind_seeds(
    detections: &[Detection],
    seed_boxes: &[BBox],
    min_iou: f64,
) -> Result<Vec<usize>> {
    let mut bound = Vec::with_capacity(seed_boxes.len());
    for (s, seed) in seed_boxes.iter().enumerate() {
        let mut best = (0usize, -1.0f64);
        for (d, det) in detections.iter().enumerate() {
            let iou = det.bbox.iou(seed);
            if iou > best.1 {
                best = (d, iou);
            }
        }
        if best.1 < min_iou {
            return Err(SimcoError::SeedBinding(format!(
                "seed {s} best IoU {:.3} below {min_iou}",
                best.1.max(0.0)
            )));
        }
        if bound.contains(&best.0) {
            return Err(SimcoError::SeedBinding(format!(
                "seed {s} binds to detection {} already taken",
                best.0
            )));
        }
        bound.push(best.0);
    }
    Ok(bound)
}

/// Full counting pipeline for one image.
///
/// Seeded mode requires `seed_boxes`; unsupervised mode ignores them. An
/// image with no detections yields an empty report; an unseparable seed set
/// propagates [`SimcoError::SeedsNotSeparable`].
pub fn run_pipeline(
    record: &ImageRecord,
    raster: &RasterImage,
    net: &EmbeddingNet,
    config: &PipelineConfig,
    mode: &ClusterMode,
    seed_boxes: Option<&[BBox]>,
) -> Result<CountReport> {
    let detections = run_detector(record, raster, config);
    if detections.is_empty() {
        return Ok(CountReport::empty(&record.id, mode));
    }
    let descriptors = embed_detections(raster, &detections, net, config.patch)?;

    let (result, kept) = match mode {
        ClusterMode::Seeded => {
            let boxes = seed_boxes
                .ok_or_else(|| SimcoError::Config("seeded mode requires seed boxes".into()))?;
            let seeds = bind_seeds(&detections, boxes, config.seed_bind_iou)?;
            let (_, result) =
                preference_search(&descriptors, &seeds, &config.ap, config.grid_steps)?;
            let kept = filter_clusters(&result, &FilterMode::Seeded { seeds });
            (result, kept)
        }
        ClusterMode::Unsupervised { min_count } => {
            let preference = median_offdiag_similarity(&descriptors).unwrap_or(0.0);
            let s = build_similarity(&descriptors, preference)?;
            let result = affinity_propagation(&s, &config.ap)?;
            let kept = filter_clusters(
                &result,
                &FilterMode::Unsupervised {
                    min_count: *min_count,
                },
            );
            (result, kept)
        }
    };

    let clusters: Vec<ClusterCount> = kept
        .iter()
        .map(|&e| {
            let members = result.members(e);
            ClusterCount {
                exemplar: e,
                count: members.len(),
                members,
            }
        })
        .collect();
    Ok(CountReport {
        image_id: record.id.clone(),
        mode: mode_name(mode).to_string(),
        preference: result.preference,
        total: clusters.iter().map(|c| c.count).sum(),
        clusters,
    })
}

/// Mean absolute error over paired counts.
pub fn mae(preds: &[usize], gts: &[usize]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(SimcoError::LengthMismatch {
            left: preds.len(),
            right: gts.len(),
        });
    }
    if preds.is_empty() {
        return Err(SimcoError::Config("mae over empty inputs".into()));
    }
    let total: f64 = preds
        .iter()
        .zip(gts.iter())
        .map(|(&p, &g)| (p as f64 - g as f64).abs())
        .sum();
    Ok(total / preds.len() as f64)
}

/// NMAE normalization variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmaeMode {
    /// `sum(|err|) / sum(gt)`: ground-truth-weighted (default).
    GtWeighted,
    /// Mean of per-unit `|err| / gt` over units with positive ground truth.
    MeanRelative,
}

/// Normalized mean absolute error. Errors when the ground truth sums to
/// zero.
pub fn nmae(preds: &[usize], gts: &[usize]) -> Result<f64> {
    nmae_with_mode(preds, gts, NmaeMode::GtWeighted)
}

pub fn nmae_with_mode(preds: &[usize], gts: &[usize], mode: NmaeMode) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(SimcoError::LengthMismatch {
            left: preds.len(),
            right: gts.len(),
        });
    }
    let gt_sum: usize = gts.iter().sum();
    if gt_sum == 0 {
        return Err(SimcoError::ZeroGroundTruth);
    }
    match mode {
        NmaeMode::GtWeighted => {
            let err: f64 = preds
                .iter()
                .zip(gts.iter())
                .map(|(&p, &g)| (p as f64 - g as f64).abs())
                .sum();
            Ok(err / gt_sum as f64)
        }
        NmaeMode::MeanRelative => {
            let mut total = 0.0;
            let mut n = 0usize;
            for (&p, &g) in preds.iter().zip(gts.iter()) {
                if g > 0 {
                    total += (p as f64 - g as f64).abs() / g as f64;
                    n += 1;
                }
            }
            Ok(total / n as f64)
        }
    }
}

/// Greedy highest-IoU matching of detections to ground-truth instances.
///
/// Pairs are taken in descending IoU order (ties toward lower indices), each
/// detection and each instance used at most once, threshold `min_iou`.
/// Returns the matched instance index per detection.
pub fn match_detections_to_instances(
    detections: &[Detection],
    record: &ImageRecord,
    min_iou: f64,
) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (d, det) in detections.iter().enumerate() {
        for (g, inst) in record.instances.iter().enumerate() {
            let iou = det.bbox.iou(&inst.bbox);
            if iou >= min_iou {
                pairs.push((iou, d, g));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut det_used = vec![false; detections.len()];
    let mut gt_used = vec![false; record.instances.len()];
    let mut matched = vec![None; detections.len()];
    for (_, d, g) in pairs {
        if !det_used[d] && !gt_used[g] {
            det_used[d] = true;
            gt_used[g] = true;
            matched[d] = Some(g);
        }
    }
    matched
}

/// Predicted and ground-truth count for one targeted type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCount {
    pub type_index: usize,
    pub pred: usize,
    pub gt: usize,
}

/// Score a count report against the record annotations.
///
/// Detections are matched to instances by greedy IoU >= 0.5; each kept
/// cluster takes the majority type of its matched members (ties toward the
/// lowest type index) and contributes its full count to that type. The
/// returned units cover exactly `targeted_types`; targeted types claimed by
/// no cluster get a zero prediction.
pub fn match_clusters_to_gt(
    report: &CountReport,
    detections: &[Detection],
    record: &ImageRecord,
    targeted_types: &[usize],
) -> Vec<TypeCount> {
    let matched = match_detections_to_instances(detections, record, 0.5);
    let gt_counts = record.counts_per_type();

    let mut pred: BTreeMap<usize, usize> = BTreeMap::new();
    for cluster in &report.clusters {
        // majority vote over matched members
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for &m in &cluster.members {
            if let Some(g) = matched.get(m).copied().flatten() {
                *votes.entry(record.instances[g].type_index).or_insert(0) += 1;
            }
        }
        // BTreeMap iterates ascending, so the first max is the lowest index
        let winner = votes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&t, _)| t);
        if let Some(t) = winner {
            *pred.entry(t).or_insert(0) += cluster.count;
        }
    }

    targeted_types
        .iter()
        .map(|&t| TypeCount {
            type_index: t,
            pred: pred.get(&t).copied().unwrap_or(0),
            gt: gt_counts.get(t).copied().unwrap_or(0),
        })
        .collect()
}

/// Aggregated evaluation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mae: f64,
    pub nmae: f64,
    pub n_units: usize,
    pub config_hash: String,
}

/// One evaluation unit row: `image_id,type_id,pred,gt,abs_err`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub image_id: String,
    pub type_id: usize,
    pub pred: usize,
    pub gt: usize,
}

/// Outcome of an evaluation run: per-unit rows in image order plus images
/// whose pipeline failed (their targeted types scored as zero predictions).
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub rows: Vec<EvalRow>,
    pub summary: MetricSummary,
    pub failures: Vec<(String, String)>,
}

impl EvalOutcome {
    pub fn csv(&self) -> String {
        let mut out = String::from("image_id,type_id,pred,gt,abs_err\n");
        for r in &self.rows {
            let err = (r.pred as i64 - r.gt as i64).unsigned_abs();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.image_id, r.type_id, r.pred, r.gt, err
            ));
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.summary)?;
        s.push('\n');
        Ok(s)
    }
}

/// Stable fingerprint of an evaluation configuration.
pub fn config_hash(config: &PipelineConfig, mode: &ClusterMode) -> Result<String> {
    let canonical = serde_json::to_string(&(config, mode))?;
    Ok(format!("{:016x}", fnv1a64(canonical.as_bytes())))
}

/// Evaluate the pipeline over a list of annotated images.
///
/// Seeded mode targets every type present in each image and seeds it with
/// the bbox of the type's first instance; unsupervised mode targets all
/// types as well. Pipeline failures (for example unseparable seeds) do not
/// abort the run: the failing image keeps its units with zero predictions
/// and is listed in `failures`. Images are processed independently (in
/// parallel when enabled) and results are aggregated in input order, so the
/// CSV is bit-stable across thread counts.
pub fn eval_images<'a, I>(
    images: I,
    net: &EmbeddingNet,
    config: &PipelineConfig,
    mode: &ClusterMode,
) -> Result<EvalOutcome>
where
    I: IntoIterator<Item = (&'a ImageRecord, &'a RasterImage)>,
{
    let items: Vec<(&ImageRecord, &RasterImage)> = images.into_iter().collect();
    if items.is_empty() {
        return Err(SimcoError::EmptySplit("eval"));
    }
    let per_image = crate::par::par_map_index(items.len(), |i| {
        let (record, raster) = items[i];
        let targeted: Vec<usize> = (0..record.types.len()).collect();
        let seed_boxes: Vec<BBox> = targeted
            .iter()
            .filter_map(|&t| {
                record
                    .instances
                    .iter()
                    .find(|inst| inst.type_index == t)
                    .map(|inst| inst.bbox)
            })
            .collect();
        let detections = run_detector(record, raster, config);
        match run_pipeline(record, raster, net, config, mode, Some(&seed_boxes)) {
            Ok(report) => (
                match_clusters_to_gt(&report, &detections, record, &targeted),
                None,
            ),
            Err(e) => {
                let gt_counts = record.counts_per_type();
                let units = targeted
                    .iter()
                    .map(|&t| TypeCount {
                        type_index: t,
                        pred: 0,
                        gt: gt_counts[t],
                    })
                    .collect();
                (units, Some(e.to_string()))
            }
        }
    });

    let mut rows: Vec<EvalRow> = Vec::new();
    let mut failures = Vec::new();
    for ((record, _), (units, failure)) in items.iter().zip(per_image) {
        if let Some(message) = failure {
            failures.push((record.id.clone(), message));
        }
        for u in units {
            rows.push(EvalRow {
                image_id: record.id.clone(),
                type_id: u.type_index,
                pred: u.pred,
                gt: u.gt,
            });
        }
    }
    let preds: Vec<usize> = rows.iter().map(|r| r.pred).collect();
    let gts: Vec<usize> = rows.iter().map(|r| r.gt).collect();
    let summary = MetricSummary {
        mae: mae(&preds, &gts)?,
        nmae: nmae(&preds, &gts)?,
        n_units: rows.len(),
        config_hash: config_hash(config, mode)?,
    };
    Ok(EvalOutcome {
        rows,
        summary,
        failures,
    })
}
