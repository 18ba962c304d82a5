use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use simco::cluster::{preference_grid, preference_sweep, APConfig};
use simco::count::{run_detector, run_pipeline, ClusterMode, DetectorMode, PipelineConfig};
use simco::detect::write_detections_jsonl;
use simco::embed::{
    feature_set_from_dir, load_model, save_model, train as train_net, write_loss_csv, EmbeddingNet,
    FeatureDetector, TrainConfig,
};
use simco::error::SimcoError;
use simco::geom::BBox;
use simco::raster::RasterImage;
use simco::shapegen::{generate_dataset, DatasetManifest, GeneratorConfig, ImageRecord, Split};
use simco::viz::render_overlay;

#[derive(Debug, Clone, Copy)]
pub enum Detector {
    Oracle,
    Blob,
}

pub fn parse_detector(s: &str) -> Result<Detector, String> {
    match s {
        "oracle" => Ok(Detector::Oracle),
        "blob" => Ok(Detector::Blob),
        other => Err(format!("unknown detector '{other}' (oracle|blob)")),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode {
    Seeded,
    Unsupervised,
}

pub fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "seeded" => Ok(Mode::Seeded),
        "unsupervised" => Ok(Mode::Unsupervised),
        other => Err(format!("unknown mode '{other}' (seeded|unsupervised)")),
    }
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

pub fn generate(config: Option<PathBuf>, seed: u64, out: &Path) -> Result<()> {
    let cfg: GeneratorConfig = read_config(&config)?;
    generate_dataset(&cfg, seed, out)
        .with_context(|| format!("generating dataset into {}", out.display()))?;
    println!(
        "wrote {} images and manifest.json to {}",
        cfg.num_images,
        out.display()
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(&dir.join("manifest.json"))
        .with_context(|| format!("loading dataset manifest from {}", dir.display()))
}

pub fn train(
    dataset: &Path,
    config: Option<PathBuf>,
    out: &Path,
    seed: Option<u64>,
    epochs: Option<usize>,
    detector: Detector,
) -> Result<()> {
    let mut cfg: TrainConfig = read_config(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let manifest = load_dataset(dataset)?;
    let feature_detector = match detector {
        Detector::Oracle => FeatureDetector::Oracle,
        Detector::Blob => FeatureDetector::Blob(Default::default()),
    };
    let data = feature_set_from_dir(
        &manifest,
        dataset,
        Split::Train,
        cfg.patch,
        &feature_detector,
    )?;
    if data.images.is_empty() {
        bail!("dataset {} has an empty train split", dataset.display());
    }
    let input_dim = simco::detect::feature_len(cfg.patch);
    let mut net = EmbeddingNet::init(input_dim, cfg.hidden_dim, cfg.seed);
    let report = train_net(&mut net, &data, &cfg).context("training failed")?;
    save_model(out, &net, &cfg)?;
    let loss_path = loss_csv_path(out);
    write_loss_csv(&loss_path, &report)?;
    println!(
        "trained {} epochs; model at {}, loss curve at {}",
        cfg.epochs,
        out.display(),
        loss_path.display()
    );
    Ok(())
}

fn loss_csv_path(model_path: &Path) -> PathBuf {
    let stem = model_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string());
    model_path.with_file_name(format!("{stem}_loss.csv"))
}

/// One seed annotation: an image id plus a bounding box.
#[derive(Debug, Deserialize)]
struct SeedEntry {
    image_id: String,
    bbox: BBox,
}

fn load_seeds(path: &Path, image_id: &str) -> Result<Vec<BBox>> {
    let bytes = fs::read(path).with_context(|| format!("reading seeds {}", path.display()))?;
    let entries: Vec<SeedEntry> = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing seeds {}", path.display()))?;
    let boxes: Vec<BBox> = entries
        .iter()
        .filter(|e| e.image_id == image_id)
        .map(|e| e.bbox)
        .collect();
    if boxes.is_empty() {
        bail!(
            "seeds file {} has no entries for {image_id}",
            path.display()
        );
    }
    Ok(boxes)
}

/// One seed per annotated type: the bbox of the type's first instance.
fn auto_seeds(record: &ImageRecord) -> Vec<BBox> {
    (0..record.types.len())
        .filter_map(|t| {
            record
                .instances
                .iter()
                .find(|inst| inst.type_index == t)
                .map(|inst| inst.bbox)
        })
        .collect()
}

struct LoadedImage {
    record: ImageRecord,
    raster: RasterImage,
}

fn load_image(dataset: &Path, manifest: &DatasetManifest, image_id: &str) -> Result<LoadedImage> {
    let record = manifest
        .images
        .iter()
        .find(|r| r.id == image_id)
        .cloned()
        .ok_or_else(|| anyhow::anyhow!("image id {image_id} not in manifest"))?;
    let raster = RasterImage::load_ppm(&dataset.join(&record.file))?;
    Ok(LoadedImage { record, raster })
}

fn pipeline_config(detector: Detector, patch: usize) -> PipelineConfig {
    PipelineConfig {
        detector: match detector {
            Detector::Oracle => DetectorMode::Oracle,
            Detector::Blob => DetectorMode::Blob,
        },
        patch,
        ..PipelineConfig::default()
    }
}

pub fn count(
    dataset: &Path,
    image_id: &str,
    model: &Path,
    detector: Detector,
    mode: Mode,
    seeds: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let manifest = load_dataset(dataset)?;
    let image = load_image(dataset, &manifest, image_id)?;
    let (net, meta) = load_model(model)?;
    let config = pipeline_config(detector, meta.train_config.patch);

    let cluster_mode = match mode {
        Mode::Seeded => ClusterMode::Seeded,
        Mode::Unsupervised => ClusterMode::Unsupervised { min_count: 2 },
    };
    let seed_boxes = match (&cluster_mode, &seeds) {
        (ClusterMode::Seeded, Some(path)) => Some(load_seeds(path, image_id)?),
        (ClusterMode::Seeded, None) => {
            let auto = auto_seeds(&image.record);
            if auto.is_empty() {
                None
            } else {
                Some(auto)
            }
        }
        _ => None,
    };

    let detections = run_detector(&image.record, &image.raster, &config);
    let report = run_pipeline(
        &image.record,
        &image.raster,
        &net,
        &config,
        &cluster_mode,
        seed_boxes.as_deref(),
    )?;

    fs::create_dir_all(out).map_err(|e| SimcoError::io(out, e))?;
    let report_path = out.join("report.json");
    let mut report_json = serde_json::to_vec_pretty(&report)?;
    report_json.push(b'\n');
    fs::write(&report_path, report_json).map_err(|e| SimcoError::io(&report_path, e))?;

    let jsonl_path = out.join("detections.jsonl");
    let mut jsonl = Vec::new();
    write_detections_jsonl(&mut jsonl, image_id, &detections)?;
    fs::write(&jsonl_path, jsonl).map_err(|e| SimcoError::io(&jsonl_path, e))?;

    let clusters: Vec<Vec<usize>> = report.clusters.iter().map(|c| c.members.clone()).collect();
    let overlay = render_overlay(&image.raster, &detections, &clusters);
    overlay.save_ppm(&out.join("overlay.ppm"))?;

    println!(
        "{image_id}: total {} across {} clusters (preference {})",
        report.total,
        report.clusters.len(),
        report.preference
    );
    Ok(())
}

pub fn sweep(
    dataset: &Path,
    image_id: &str,
    model: &Path,
    preferences: Option<String>,
    grid: usize,
    detector: Detector,
    out: &Path,
) -> Result<()> {
    let manifest = load_dataset(dataset)?;
    let image = load_image(dataset, &manifest, image_id)?;
    let (net, meta) = load_model(model)?;
    let config = pipeline_config(detector, meta.train_config.patch);

    let detections = run_detector(&image.record, &image.raster, &config);
    if detections.is_empty() {
        bail!("{image_id}: no detections to sweep");
    }
    let descriptors =
        simco::count::embed_detections(&image.raster, &detections, &net, config.patch)?;
    let prefs: Vec<f64> = match preferences {
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| anyhow::anyhow!("bad preference value '{t}'"))
            })
            .collect::<Result<_>>()?,
        None => preference_grid(&descriptors, grid),
    };
    if prefs.is_empty() {
        bail!("empty preference list");
    }
    let results = preference_sweep(&descriptors, &prefs, &APConfig::default())?;

    fs::create_dir_all(out).map_err(|e| SimcoError::io(out, e))?;
    let mut index = Vec::new();
    for (i, result) in results.iter().enumerate() {
        let clusters: Vec<Vec<usize>> = result
            .exemplars
            .iter()
            .map(|&e| result.members(e))
            .collect();
        let overlay = render_overlay(&image.raster, &detections, &clusters);
        let name = format!("sweep_{i:02}.ppm");
        overlay.save_ppm(&out.join(&name))?;
        index.push(serde_json::json!({
            "file": name,
            "preference": result.preference,
            "converged": result.converged,
            "iterations": result.iterations,
            "exemplars": result.exemplars,
            "assignment": result.assignment,
        }));
    }
    let index_path = out.join("sweep.json");
    let mut bytes = serde_json::to_vec_pretty(&index)?;
    bytes.push(b'\n');
    fs::write(&index_path, bytes).map_err(|e| SimcoError::io(&index_path, e))?;
    println!(
        "{image_id}: wrote {} overlays to {}",
        results.len(),
        out.display()
    );
    Ok(())
}

pub fn eval(
    dataset: &Path,
    model: &Path,
    detector: Detector,
    mode: Mode,
    split: &str,
    out: &Path,
) -> Result<()> {
    let manifest = load_dataset(dataset)?;
    let split = match split {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => bail!("unknown split '{other}' (train|val|test)"),
    };
    let indices = manifest.split_indices(split);
    if indices.is_empty() {
        bail!("split has no images");
    }
    let (net, meta) = load_model(model)?;
    let config = pipeline_config(detector, meta.train_config.patch);
    let cluster_mode = match mode {
        Mode::Seeded => ClusterMode::Seeded,
        Mode::Unsupervised => ClusterMode::Unsupervised { min_count: 2 },
    };

    let mut loaded = Vec::with_capacity(indices.len());
    for idx in &indices {
        let record = manifest.images[*idx].clone();
        let raster = RasterImage::load_ppm(&dataset.join(&record.file))?;
        loaded.push((record, raster));
    }
    let outcome = simco::count::eval_images(
        loaded.iter().map(|(r, i)| (r, i)),
        &net,
        &config,
        &cluster_mode,
    )?;

    fs::create_dir_all(out).map_err(|e| SimcoError::io(out, e))?;
    let csv_path = out.join("metrics.csv");
    fs::write(&csv_path, outcome.csv()).map_err(|e| SimcoError::io(&csv_path, e))?;
    let summary_path = out.join("summary.json");
    fs::write(&summary_path, outcome.summary_json()?)
        .map_err(|e| SimcoError::io(&summary_path, e))?;

    for (id, err) in &outcome.failures {
        eprintln!("warning: {id}: {err} (scored as zero predictions)");
    }
    println!(
        "evaluated {} units over {} images: MAE {:.4}, NMAE {:.4}",
        outcome.summary.n_units,
        indices.len(),
        outcome.summary.mae,
        outcome.summary.nmae
    );
    Ok(())
}
