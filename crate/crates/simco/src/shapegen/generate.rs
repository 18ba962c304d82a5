//! Dataset assembly: per-image generation plus the on-disk layout.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Result, SimcoError};
use crate::par::par_map_index;
use crate::raster::RasterImage;
use crate::rng::substream;

use super::manifest::DatasetManifest;
use super::render::rasterize;
use super::{
    layout_with_obstacles, sample_types_avoiding, BackgroundSpec, GeneratorConfig, ImageRecord,
    LayoutSpec, ShapeInstance,
};

const LAYOUT_ATTEMPTS_PER_TYPE: usize = 3;

/// Generate one image as a pure function of `(config, seed, index)`.
///
/// Draws from an RNG substream keyed on the index, so any image can be
/// regenerated alone and matches the same image from a full run.
pub fn generate_image(
    config: &GeneratorConfig,
    seed: u64,
    index: usize,
) -> Result<(ImageRecord, RasterImage)> {
    config.validate()?;
    let mut rng = substream(seed, index as u64);
    let (w, h) = (config.width, config.height);

    let base_color = [
        rng.random_range(config.base_color_min[0]..=config.base_color_max[0]),
        rng.random_range(config.base_color_min[1]..=config.base_color_max[1]),
        rng.random_range(config.base_color_min[2]..=config.base_color_max[2]),
    ];
    let background = BackgroundSpec {
        base_color,
        noise_amplitude: config.noise_amplitude,
        noise_cell_px: config.noise_cell_px,
        noise_seed: rng.random::<u64>(),
    };

    let types = sample_types_avoiding(&mut rng, config, Some(base_color))?;
    let min_dim = w.min(h);
    // true shape diameter (twice the circumradius), so rotated squares and
    // bars cannot touch at the configured separation
    let max_diameter = types
        .iter()
        .map(|t| 2.0 * super::shape_circumradius(t, min_dim))
        .fold(0.0f64, f64::max);
    let separation = config.separation_factor * max_diameter;

    let mut instances: Vec<ShapeInstance> = Vec::new();
    let mut obstacles: Vec<[f64; 2]> = Vec::new();
    let mut kept_types = Vec::new();
    for ty in &types {
        let mut placed_for_type: Option<Vec<ShapeInstance>> = None;
        for _ in 0..LAYOUT_ATTEMPTS_PER_TYPE {
            let layout = sample_layout(&mut rng, config, separation);
            let placed = layout_with_obstacles(
                &mut rng,
                kept_types.len(),
                ty,
                &layout,
                w,
                h,
                &obstacles,
                separation,
            );
            if placed.len() >= 2 {
                placed_for_type = Some(placed);
                break;
            }
        }
        if let Some(placed) = placed_for_type {
            obstacles.extend(placed.iter().map(|p| p.center));
            instances.extend(placed);
            kept_types.push(ty.clone());
        }
    }

    // pathological configs can reject every type; fall back to a 2x2 grid of
    // the first sampled type so the repeated-object premise still holds
    if kept_types.is_empty() && config.types_per_image.0 > 0 {
        let ty = types[0].clone();
        let layout = LayoutSpec::AlignedGrid {
            rows: 2,
            cols: 2,
            jitter: 0.0,
        };
        let placed = layout_with_obstacles(&mut rng, 0, &ty, &layout, w, h, &[], 0.0);
        if placed.len() >= 2 {
            instances = placed;
            kept_types.push(ty);
        } else {
            return Err(SimcoError::Config(format!(
                "canvas {w}x{h} cannot fit two instances at scale {}",
                ty.scale
            )));
        }
    }

    let mut record = ImageRecord {
        id: format!("img_{index:05}"),
        file: format!("images/img_{index:05}.ppm"),
        width: w,
        height: h,
        split: config.split_for_index(index),
        types: kept_types,
        instances,
        background,
    };
    let raster = rasterize(&mut record);
    record.validate()?;
    Ok((record, raster))
}

fn sample_layout<R: Rng>(rng: &mut R, config: &GeneratorConfig, separation: f64) -> LayoutSpec {
    if rng.random_range(0.0..1.0) < config.grid_fraction {
        LayoutSpec::AlignedGrid {
            rows: rng.random_range(config.grid_rows.0..=config.grid_rows.1),
            cols: rng.random_range(config.grid_cols.0..=config.grid_cols.1),
            jitter: config.grid_jitter,
        }
    } else {
        LayoutSpec::PoissonProcess {
            expected_count: rng.random_range(config.poisson_expected.0..=config.poisson_expected.1),
            min_center_separation: separation,
        }
    }
}

/// Generate all records and rasters in memory, in index order.
pub fn generate_all(
    config: &GeneratorConfig,
    seed: u64,
) -> Result<Vec<(ImageRecord, RasterImage)>> {
    config.validate()?;
    par_map_index(config.num_images, |i| generate_image(config, seed, i))
        .into_iter()
        .collect()
}

/// Generate the dataset onto disk: rasters under `out/images/` plus
/// `out/manifest.json`.
pub fn generate_dataset(
    config: &GeneratorConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| SimcoError::io(&images_dir, e))?;

    let results = par_map_index(config.num_images, |i| -> Result<ImageRecord> {
        let (record, raster) = generate_image(config, seed, i)?;
        let path = out_dir.join(&record.file);
        raster.save_ppm(&path)?;
        Ok(record)
    });
    let images = results.into_iter().collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        seed,
        config: config.clone(),
        images,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
