//! Detection and region features.
//!
//! Two detector modes isolate failure sources: the oracle replays ground-truth
//! annotations and measures embedding/clustering quality alone; the blob
//! detector thresholds color distance from an estimated background and
//! measures full-pipeline robustness. Both feed the same feature extractor:
//! a bilinear-resized RGB patch plus one normalized log-scale entry.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimcoError};
use crate::geom::BBox;
use crate::raster::RasterImage;
use crate::shapegen::ImageRecord;

/// Default patch side for feature extraction.
pub const DEFAULT_PATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorSource {
    Oracle,
    Blob,
}

/// One detected object: an in-bounds box spanning at least 2x2 pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    /// Confidence in `[0, 1]`.
    pub score: f64,
    pub source: DetectorSource,
}

/// Flattened resized patch in `[0, 1]` plus one normalized log box scale;
/// length `P*P*3 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Expected feature length for patch side `patch`.
pub fn feature_len(patch: usize) -> usize {
    patch * patch * 3 + 1
}

/// One detection per annotated instance, score 1.0, in annotation order.
pub fn detect_oracle(record: &ImageRecord) -> Vec<Detection> {
    record
        .instances
        .iter()
        .map(|inst| Detection {
            bbox: inst.bbox,
            score: 1.0,
            source: DetectorSource::Oracle,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobParams {
    /// Quantile of the background-distance distribution used as threshold.
    pub threshold_quantile: f64,
    /// Minimum component area in pixels.
    pub min_area_px: usize,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams {
            threshold_quantile: 0.99,
            min_area_px: 30,
        }
    }
}

/// Threshold floor in color-distance units; keeps flat backgrounds empty.
const BLOB_THRESHOLD_FLOOR: f64 = 6.0;
/// Headroom over the background quantile. Background noise is spatially
/// smooth, so pixels above any sub-maximum quantile cluster into connected
/// blobs; the margin lifts the threshold past the noise ceiling.
const BLOB_THRESHOLD_MARGIN: f64 = 1.5;
const MAX_COLOR_DIST: f64 = 441.672_955_930_063_7; // sqrt(3) * 255

/// Classical blob detection.
///
/// The background color is the per-channel median. Pixels whose color
/// distance from it exceeds a threshold become foreground; 8-connected
/// components of sufficient area become detections scored by their mean
/// normalized color distance. The threshold is the configured quantile of
/// the background-distance sample, taken over pixels within 4x the median
/// distance (the median is background-dominated as long as foreground covers
/// less than half the image).
pub fn detect_blobs(raster: &RasterImage, params: &BlobParams) -> Vec<Detection> {
    let (w, h) = (raster.width() as usize, raster.height() as usize);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let n = w * h;
    let data = raster.data();

    // per-channel median via counting sort
    let mut background = [0u8; 3];
    for c in 0..3 {
        let mut hist = [0usize; 256];
        for i in 0..n {
            hist[data[i * 3 + c] as usize] += 1;
        }
        let mut acc = 0usize;
        for (v, &count) in hist.iter().enumerate() {
            acc += count;
            if acc * 2 >= n {
                background[c] = v as u8;
                break;
            }
        }
    }

    let mut dist = vec![0.0f64; n];
    for i in 0..n {
        let mut s = 0.0;
        for c in 0..3 {
            let d = data[i * 3 + c] as f64 - background[c] as f64;
            s += d * d;
        }
        dist[i] = s.sqrt();
    }

    let mut sorted = dist.clone();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[(n - 1) / 2];
    let cap = 4.0 * median + 1e-9;
    let cut = sorted.partition_point(|&d| d <= cap);
    let bg_sample = &sorted[..cut.max(1)];
    let q_idx = ((bg_sample.len() - 1) as f64 * params.threshold_quantile).round() as usize;
    let threshold = (bg_sample[q_idx] * BLOB_THRESHOLD_MARGIN).max(BLOB_THRESHOLD_FLOOR);

    let fg: Vec<bool> = dist.iter().map(|&d| d > threshold).collect();

    // 8-connected component labeling in scan order
    let mut seen = vec![false; n];
    let mut detections = Vec::new();
    for start in 0..n {
        if !fg[start] || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut area = 0usize;
        let mut dist_sum = 0.0f64;
        let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
        while let Some(i) = stack.pop() {
            area += 1;
            dist_sum += dist[i];
            let x = (i % w) as i32;
            let y = (i / w) as i32;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1..=1i32 {
                for dx in -1..=1i32 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                        continue;
                    }
                    let ni = (ny as usize) * w + nx as usize;
                    if fg[ni] && !seen[ni] {
                        seen[ni] = true;
                        stack.push(ni);
                    }
                }
            }
        }
        let bbox = BBox::new(x0, y0, x1, y1);
        if area >= params.min_area_px && bbox.is_proper() {
            detections.push(Detection {
                bbox,
                score: (dist_sum / area as f64 / MAX_COLOR_DIST).clamp(0.0, 1.0),
                source: DetectorSource::Blob,
            });
        }
    }
    detections
}

/// Crop the detection box, bilinear-resize it to `patch`x`patch`, scale
/// channels to `[0, 1]`, and append the normalized log of the box-to-image
/// area ratio.
pub fn extract_features(
    raster: &RasterImage,
    det: &Detection,
    patch: usize,
) -> Result<FeatureVector> {
    let b = det.bbox;
    if !b.inside(raster.width(), raster.height()) || !b.is_proper() {
        return Err(SimcoError::Malformed {
            what: "detection",
            detail: format!("bbox {b:?} invalid for feature extraction"),
        });
    }
    let src_w = b.width() as f64;
    let src_h = b.height() as f64;
    let mut values = Vec::with_capacity(feature_len(patch));
    for py in 0..patch {
        let sy = ((py as f64 + 0.5) * src_h / patch as f64 - 0.5).clamp(0.0, src_h - 1.0);
        let y_lo = sy.floor() as u32;
        let y_hi = (y_lo + 1).min(b.height() as u32 - 1);
        let fy = sy - y_lo as f64;
        for px in 0..patch {
            let sx = ((px as f64 + 0.5) * src_w / patch as f64 - 0.5).clamp(0.0, src_w - 1.0);
            let x_lo = sx.floor() as u32;
            let x_hi = (x_lo + 1).min(b.width() as u32 - 1);
            let fx = sx - x_lo as f64;
            let at = |x: u32, y: u32| raster.get(b.x0 as u32 + x, b.y0 as u32 + y);
            let p00 = at(x_lo, y_lo);
            let p10 = at(x_hi, y_lo);
            let p01 = at(x_lo, y_hi);
            let p11 = at(x_hi, y_hi);
            for c in 0..3 {
                let top = p00[c] as f64 + (p10[c] as f64 - p00[c] as f64) * fx;
                let bot = p01[c] as f64 + (p11[c] as f64 - p01[c] as f64) * fx;
                values.push((top + (bot - top) * fy) / 255.0);
            }
        }
    }
    // normalized log box scale: area ratio 1e-5 -> 0, ratio 1 -> 1
    let area_ratio = (src_w * src_h) / (raster.width() as f64 * raster.height() as f64);
    let ln_min = 1e-5f64.ln();
    let l = area_ratio.max(1e-12).ln().clamp(ln_min, 0.0);
    values.push(1.0 - l / ln_min);
    Ok(FeatureVector { values })
}

#[derive(Serialize)]
struct DetectionLine<'a> {
    image_id: &'a str,
    bbox: BBox,
    score: f64,
    source: DetectorSource,
}

/// Serialize detections as JSON lines `{image_id, bbox, score, source}`.
pub fn write_detections_jsonl<W: Write>(
    mut w: W,
    image_id: &str,
    detections: &[Detection],
) -> Result<()> {
    for det in detections {
        let line = DetectionLine {
            image_id,
            bbox: det.bbox,
            score: det.score,
            source: det.source,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| SimcoError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapegen::{generate_image, GeneratorConfig};

    fn flat_raster(w: u32, h: u32, color: [u8; 3]) -> RasterImage {
        let mut img = RasterImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, color);
            }
        }
        img
    }

    #[test]
    fn oracle_mirrors_annotations_in_order() {
        let cfg = GeneratorConfig {
            num_images: 1,
            width: 192,
            height: 192,
            types_per_image: (2, 2),
            ..GeneratorConfig::default()
        };
        let (record, _) = generate_image(&cfg, 3, 0).unwrap();
        let dets = detect_oracle(&record);
        assert_eq!(dets.len(), record.instances.len());
        for (det, inst) in dets.iter().zip(&record.instances) {
            assert_eq!(det.bbox, inst.bbox);
            assert_eq!(det.score, 1.0);
            assert_eq!(det.source, DetectorSource::Oracle);
        }
    }

    #[test]
    fn oracle_empty_record_is_empty() {
        let record = ImageRecord {
            id: "e".into(),
            file: "e.ppm".into(),
            width: 64,
            height: 64,
            split: crate::shapegen::Split::Test,
            types: vec![],
            instances: vec![],
            background: Default::default(),
        };
        assert!(detect_oracle(&record).is_empty());
    }

    #[test]
    fn blobs_on_uniform_background_are_empty() {
        let img = flat_raster(64, 64, [90, 90, 90]);
        assert!(detect_blobs(&img, &BlobParams::default()).is_empty());
    }

    #[test]
    fn blobs_find_a_solid_square() {
        let mut img = flat_raster(64, 64, [30, 30, 30]);
        for y in 20..30 {
            for x in 12..22 {
                img.set(x, y, [220, 40, 40]);
            }
        }
        let dets = detect_blobs(&img, &BlobParams::default());
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BBox::new(12, 20, 21, 29));
        assert!(dets[0].score > 0.0 && dets[0].score <= 1.0);
        assert_eq!(dets[0].source, DetectorSource::Blob);
    }

    #[test]
    fn touching_same_color_shapes_merge() {
        // documented limitation: adjacent components of one color merge
        let mut img = flat_raster(64, 64, [30, 30, 30]);
        for y in 10..20 {
            for x in 10..20 {
                img.set(x, y, [200, 200, 40]);
            }
        }
        for y in 20..30 {
            for x in 20..30 {
                img.set(x, y, [200, 200, 40]);
            }
        }
        // corners touch at (19,19)-(20,20): 8-connectivity merges them
        let dets = detect_blobs(&img, &BlobParams::default());
        assert_eq!(dets.len(), 1);
    }

    #[test]
    fn blob_boxes_never_exceed_bounds() {
        let cfg = GeneratorConfig {
            num_images: 1,
            width: 256,
            height: 256,
            ..GeneratorConfig::default()
        };
        for seed in 0..5 {
            let (_, raster) = generate_image(&cfg, seed, 0).unwrap();
            for det in detect_blobs(&raster, &BlobParams::default()) {
                assert!(det.bbox.inside(256, 256));
            }
        }
    }

    #[test]
    fn feature_length_is_pp3_plus_one() {
        let img = flat_raster(64, 64, [10, 10, 10]);
        let det = Detection {
            bbox: BBox::new(4, 4, 35, 35),
            score: 1.0,
            source: DetectorSource::Oracle,
        };
        let f = extract_features(&img, &det, 16).unwrap();
        assert_eq!(f.len(), 769);
    }

    #[test]
    fn constant_crop_gives_constant_patch() {
        let img = flat_raster(64, 64, [102, 51, 255]);
        let det = Detection {
            bbox: BBox::new(10, 10, 30, 30),
            score: 1.0,
            source: DetectorSource::Oracle,
        };
        let f = extract_features(&img, &det, 8).unwrap();
        let expect = [102.0 / 255.0, 51.0 / 255.0, 1.0];
        for (i, v) in f.values[..8 * 8 * 3].iter().enumerate() {
            assert!((v - expect[i % 3]).abs() < 1e-12);
        }
    }

    #[test]
    fn resize_of_exact_patch_is_identity() {
        let mut img = flat_raster(20, 20, [0, 0, 0]);
        for y in 0..8u32 {
            for x in 0..8u32 {
                img.set(x + 5, y + 5, [(x * 30) as u8, (y * 30) as u8, 77]);
            }
        }
        let det = Detection {
            bbox: BBox::new(5, 5, 12, 12),
            score: 1.0,
            source: DetectorSource::Oracle,
        };
        let f = extract_features(&img, &det, 8).unwrap();
        for y in 0..8u32 {
            for x in 0..8u32 {
                let base = ((y * 8 + x) * 3) as usize;
                let src = img.get(x + 5, y + 5);
                for (c, &sc) in src.iter().enumerate() {
                    assert!(
                        (f.values[base + c] - sc as f64 / 255.0).abs() < 1e-12,
                        "pixel ({x},{y}) channel {c}"
                    );
                }
            }
        }
    }

    #[test]
    fn translation_changes_only_scale_entry() {
        let mut img = flat_raster(100, 100, [20, 20, 20]);
        let paint = |img: &mut RasterImage, ox: u32, oy: u32| {
            for y in 0..10u32 {
                for x in 0..10u32 {
                    img.set(ox + x, oy + y, [(x * 20) as u8, (y * 20) as u8, 128]);
                }
            }
        };
        paint(&mut img, 5, 5);
        paint(&mut img, 70, 60);
        let mk = |x0: i32, y0: i32| Detection {
            bbox: BBox::new(x0, y0, x0 + 9, y0 + 9),
            score: 1.0,
            source: DetectorSource::Oracle,
        };
        let fa = extract_features(&img, &mk(5, 5), 16).unwrap();
        let fb = extract_features(&img, &mk(70, 60), 16).unwrap();
        assert_eq!(fa.values, fb.values);
    }

    #[test]
    fn jsonl_lines_parse_back() {
        let dets = vec![Detection {
            bbox: BBox::new(1, 2, 5, 9),
            score: 0.5,
            source: DetectorSource::Blob,
        }];
        let mut buf = Vec::new();
        write_detections_jsonl(&mut buf, "img_00001", &dets).unwrap();
        let line: serde_json::Value =
            serde_json::from_slice(buf.split(|&b| b == b'\n').next().unwrap()).unwrap();
        assert_eq!(line["image_id"], "img_00001");
        assert_eq!(line["bbox"][2], 5);
        assert_eq!(line["source"], "blob");
    }
}
