//! Synthetic shape-image generation.
//!
//! Images contain repeated instances of primitive 2D shapes. Each repeated
//! "type" is a shape class together with a quantized color, a quantized
//! scale, and a rotation shared by all of its instances; instances are placed
//! either on a jittered grid or by a Poisson spatial process. Every image is
//! annotated with per-instance bounding boxes and per-type attributes.

mod generate;
mod manifest;
mod render;

pub use generate::{generate_all, generate_dataset, generate_image};
pub use manifest::DatasetManifest;
pub use render::rasterize;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimcoError};
use crate::geom::BBox;

/// Lower bound of the shape scale, as a fraction of `min(width, height)`.
pub const SCALE_MIN: f64 = 0.05;
/// Upper bound of the shape scale.
pub const SCALE_MAX: f64 = 0.20;
/// Number of points on the scale grid.
pub const SCALE_STEPS: usize = 13;
const SCALE_STEP_SIZE: f64 = 0.0125;

/// The `step`-th value of the quantized scale grid `{0.05, 0.0625, .., 0.20}`.
pub fn scale_grid_value(step: usize) -> f64 {
    debug_assert!(step < SCALE_STEPS);
    SCALE_MIN + step as f64 * SCALE_STEP_SIZE
}

/// The seven primitive shape classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Lined,
    Triangle,
    Rectangle,
    Diamond,
    Pentagon,
    Hexagon,
    Ellipse,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 7] = [
        ShapeClass::Lined,
        ShapeClass::Triangle,
        ShapeClass::Rectangle,
        ShapeClass::Diamond,
        ShapeClass::Pentagon,
        ShapeClass::Hexagon,
        ShapeClass::Ellipse,
    ];
}

/// Identity key of a repeated object: shape class plus exact appearance.
///
/// Color is quantized to 8 bits per channel and scale to the fixed grid, so
/// equality is exact field equality and two independently sampled types are
/// distinct with overwhelming probability. All instances of a type share its
/// rotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectType {
    pub shape: ShapeClass,
    pub color: [u8; 3],
    /// Fraction of `min(width, height)`, on the quantized grid.
    pub scale: f64,
    /// Radians in `[0, 2*pi)`.
    pub rotation: f64,
}

impl PartialEq for ObjectType {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.color == other.color
            && self.scale.to_bits() == other.scale.to_bits()
            && self.rotation.to_bits() == other.rotation.to_bits()
    }
}

impl Eq for ObjectType {}

impl std::hash::Hash for ObjectType {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.shape.hash(state);
        self.color.hash(state);
        self.scale.to_bits().hash(state);
        self.rotation.to_bits().hash(state);
    }
}

impl ObjectType {
    /// Nominal shape size in pixels on a canvas whose short side is `min_dim`.
    pub fn diameter_px(&self, min_dim: u32) -> f64 {
        self.scale * min_dim as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(SCALE_MIN..=SCALE_MAX).contains(&self.scale) {
            return Err(SimcoError::Config(format!(
                "scale {} outside [{SCALE_MIN}, {SCALE_MAX}]",
                self.scale
            )));
        }
        if !(0.0..std::f64::consts::TAU).contains(&self.rotation) {
            return Err(SimcoError::Config(format!(
                "rotation {} outside [0, 2pi)",
                self.rotation
            )));
        }
        Ok(())
    }
}

/// One placed shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeInstance {
    /// Index into the owning record's `types`.
    pub type_index: usize,
    /// Center in pixel coordinates.
    pub center: [f64; 2],
    /// Tight inclusive pixel box, finalized by rasterization.
    pub bbox: BBox,
}

/// Spatial arrangement of one type's instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LayoutSpec {
    AlignedGrid {
        rows: u32,
        cols: u32,
        /// Uniform jitter as a fraction of the cell size, in `[0, 0.5)`.
        jitter: f64,
    },
    PoissonProcess {
        expected_count: f64,
        /// Minimum pairwise center distance in pixels.
        min_center_separation: f64,
    },
}

impl LayoutSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayoutSpec::AlignedGrid { rows, cols, jitter } => {
                if rows == 0 || cols == 0 {
                    return Err(SimcoError::Config("grid with zero rows or cols".into()));
                }
                if !(0.0..0.5).contains(&jitter) {
                    return Err(SimcoError::Config(format!(
                        "grid jitter {jitter} outside [0, 0.5)"
                    )));
                }
            }
            LayoutSpec::PoissonProcess {
                expected_count,
                min_center_separation,
            } => {
                if expected_count <= 0.0 {
                    return Err(SimcoError::Config("non-positive expected_count".into()));
                }
                if min_center_separation < 0.0 {
                    return Err(SimcoError::Config("negative min_center_separation".into()));
                }
            }
        }
        Ok(())
    }
}

/// Background fill parameters: base color plus low-amplitude value noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub base_color: [u8; 3],
    /// Per-channel noise amplitude, at most 15.
    pub noise_amplitude: u8,
    /// Noise lattice cell size in pixels.
    pub noise_cell_px: u32,
    pub noise_seed: u64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec {
            base_color: [64, 64, 64],
            noise_amplitude: 12,
            noise_cell_px: 24,
            noise_seed: 0,
        }
    }
}

/// Dataset split membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One annotated image.
///
/// The background is generation state, not part of the on-disk annotation
/// schema; records loaded from a manifest carry a default background and read
/// their raster from `file` instead of re-rendering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub file: String,
    pub width: u32,
    pub height: u32,
    pub split: Split,
    pub types: Vec<ObjectType>,
    pub instances: Vec<ShapeInstance>,
    #[serde(skip, default)]
    pub background: BackgroundSpec,
}

impl ImageRecord {
    /// Check the record invariants: valid type references, at least two
    /// instances per present type, and in-bounds boxes.
    pub fn validate(&self) -> Result<()> {
        let mut counts = vec![0usize; self.types.len()];
        for inst in &self.instances {
            let slot = counts
                .get_mut(inst.type_index)
                .ok_or_else(|| SimcoError::Malformed {
                    what: "image record",
                    detail: format!("instance references type {}", inst.type_index),
                })?;
            *slot += 1;
            if !inst.bbox.inside(self.width, self.height) {
                return Err(SimcoError::Malformed {
                    what: "image record",
                    detail: format!(
                        "bbox {:?} outside {}x{}",
                        inst.bbox, self.width, self.height
                    ),
                });
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            if c < 2 {
                return Err(SimcoError::Malformed {
                    what: "image record",
                    detail: format!("type {k} has {c} instances, need >= 2"),
                });
            }
        }
        for ty in &self.types {
            ty.validate()?;
        }
        Ok(())
    }

    /// Ground-truth count per type index.
    pub fn counts_per_type(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.types.len()];
        for inst in &self.instances {
            counts[inst.type_index] += 1;
        }
        counts
    }
}

/// Dataset generator configuration. Serialized verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub num_images: usize,
    pub width: u32,
    pub height: u32,
    /// Inclusive range of distinct types per image.
    pub types_per_image: (usize, usize),
    /// Train and val fractions; test takes the remainder.
    pub split_fractions: (f64, f64),
    pub noise_amplitude: u8,
    pub noise_cell_px: u32,
    pub base_color_min: [u8; 3],
    pub base_color_max: [u8; 3],
    /// Minimum color distance between any type and the background base.
    pub min_bg_color_dist: f64,
    /// Types in one image must differ clearly in color or in scale.
    pub min_type_color_dist: f64,
    pub min_type_scale_steps: usize,
    /// Center separation as a multiple of the largest shape diameter.
    pub separation_factor: f64,
    /// Probability that a type is laid out on a grid (else Poisson).
    pub grid_fraction: f64,
    pub grid_rows: (u32, u32),
    pub grid_cols: (u32, u32),
    pub grid_jitter: f64,
    pub poisson_expected: (f64, f64),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_images: 2000,
            width: 512,
            height: 512,
            types_per_image: (1, 3),
            split_fractions: (0.8, 0.1),
            noise_amplitude: 12,
            noise_cell_px: 24,
            base_color_min: [20, 20, 20],
            base_color_max: [100, 100, 100],
            min_bg_color_dist: 60.0,
            min_type_color_dist: 50.0,
            min_type_scale_steps: 2,
            separation_factor: 1.2,
            grid_fraction: 0.5,
            grid_rows: (1, 3),
            grid_cols: (2, 4),
            grid_jitter: 0.15,
            poisson_expected: (4.0, 9.0),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(SimcoError::Config(m));
        if self.width < 32 || self.height < 32 {
            return err(format!("canvas {}x{} too small", self.width, self.height));
        }
        if self.types_per_image.0 > self.types_per_image.1 {
            return err("types_per_image range inverted".into());
        }
        let (tr, va) = self.split_fractions;
        if !(0.0..=1.0).contains(&tr) || !(0.0..=1.0).contains(&va) || tr + va > 1.0 {
            return err(format!("bad split fractions ({tr}, {va})"));
        }
        if self.noise_amplitude > 15 {
            return err(format!("noise amplitude {} > 15", self.noise_amplitude));
        }
        if self.noise_cell_px == 0 {
            return err("noise cell size must be positive".into());
        }
        if !(0.0..0.5).contains(&self.grid_jitter) {
            return err(format!("grid jitter {} outside [0, 0.5)", self.grid_jitter));
        }
        if self.grid_rows.0 > self.grid_rows.1 || self.grid_cols.0 > self.grid_cols.1 {
            return err("grid dimension range inverted".into());
        }
        if self.grid_rows.0 == 0 || self.grid_cols.0 == 0 {
            return err("grid dimensions must be positive".into());
        }
        if self.poisson_expected.0 <= 0.0 || self.poisson_expected.0 > self.poisson_expected.1 {
            return err("bad poisson_expected range".into());
        }
        if self.separation_factor < 0.0 {
            return err("negative separation_factor".into());
        }
        Ok(())
    }

    /// Split of image `index` out of `num_images`, assigned contiguously.
    pub fn split_for_index(&self, index: usize) -> Split {
        let n = self.num_images;
        let n_train = (self.split_fractions.0 * n as f64).floor() as usize;
        let n_val = (self.split_fractions.1 * n as f64).floor() as usize;
        if index < n_train {
            Split::Train
        } else if index < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

pub(crate) fn color_dist(a: [u8; 3], b: [u8; 3]) -> f64 {
    let mut s = 0.0;
    for c in 0..3 {
        let d = a[c] as f64 - b[c] as f64;
        s += d * d;
    }
    s.sqrt()
}

const TYPE_SAMPLE_RETRIES: usize = 100;

/// Sample `K` pairwise-distinct object types for one image.
///
/// `K` is drawn from `config.types_per_image`. Colors are quantized 8-bit
/// RGB, scales lie on the fixed grid, and rotation is uniform in `[0, 2*pi)`.
/// Types sharing an image must differ from each other in color or scale and
/// keep a minimum color distance from `avoid_color` (the background base)
/// when given. Fails after 100 rejected candidates, which signals a config
/// whose type space is too small.
pub fn sample_types<R: Rng>(rng: &mut R, config: &GeneratorConfig) -> Result<Vec<ObjectType>> {
    sample_types_avoiding(rng, config, None)
}

pub fn sample_types_avoiding<R: Rng>(
    rng: &mut R,
    config: &GeneratorConfig,
    avoid_color: Option<[u8; 3]>,
) -> Result<Vec<ObjectType>> {
    let (lo, hi) = config.types_per_image;
    let k = if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    };
    let mut types: Vec<ObjectType> = Vec::with_capacity(k);
    let mut retries = 0usize;
    while types.len() < k {
        let candidate = ObjectType {
            shape: ShapeClass::ALL[rng.random_range(0..ShapeClass::ALL.len())],
            color: [rng.random::<u8>(), rng.random::<u8>(), rng.random::<u8>()],
            scale: scale_grid_value(rng.random_range(0..SCALE_STEPS)),
            rotation: rng.random_range(0.0..std::f64::consts::TAU),
        };
        let bg_ok = avoid_color
            .map(|bg| color_dist(candidate.color, bg) >= config.min_bg_color_dist)
            .unwrap_or(true);
        let distinct_ok = types.iter().all(|t| {
            if *t == candidate {
                return false;
            }
            let scale_steps_apart = ((t.scale - candidate.scale).abs() / SCALE_STEP_SIZE).round()
                as usize
                >= config.min_type_scale_steps;
            color_dist(t.color, candidate.color) >= config.min_type_color_dist || scale_steps_apart
        });
        if bg_ok && distinct_ok {
            types.push(candidate);
        } else {
            retries += 1;
            if retries > TYPE_SAMPLE_RETRIES {
                return Err(SimcoError::TypeSpaceExhausted(format!(
                    "{} of {k} types placed after {TYPE_SAMPLE_RETRIES} rejections",
                    types.len()
                )));
            }
        }
    }
    Ok(types)
}

/// Circumradius of the shape template in pixels: every rendered pixel of the
/// shape lies within this distance of the instance center.
pub(crate) fn shape_circumradius(ty: &ObjectType, min_dim: u32) -> f64 {
    let d = ty.diameter_px(min_dim);
    let half = d / 2.0;
    match ty.shape {
        // bar of length d with thickness d/8 (floored at 1.2 px)
        ShapeClass::Lined => {
            let t = (d / 8.0).max(1.2);
            (half * half + (t / 2.0) * (t / 2.0)).sqrt()
        }
        // square of side d
        ShapeClass::Rectangle => half * std::f64::consts::SQRT_2,
        _ => half,
    }
}

const PLACEMENT_ATTEMPTS: usize = 1000;

/// Place instances of one type according to `layout`.
///
/// Grid layouts land on a regular lattice plus uniform jitter, clamped
/// inward; Poisson layouts draw `count ~ Poisson(expected_count)` uniform
/// centers, rejection-sampled against `min_center_separation`. Centers are
/// kept far enough from the canvas edge that the shape (and hence its tight
/// box) fits, so no out-of-bounds instance is ever returned. May return fewer
/// instances than requested once the rejection budget is spent.
pub fn layout_instances<R: Rng>(
    rng: &mut R,
    type_index: usize,
    ty: &ObjectType,
    layout: &LayoutSpec,
    width: u32,
    height: u32,
) -> Vec<ShapeInstance> {
    layout_with_obstacles(rng, type_index, ty, layout, width, height, &[], 0.0)
}

/// Like [`layout_instances`], additionally keeping `obstacle_sep` pixels from
/// every center in `obstacles` (instances of previously placed types).
#[allow(clippy::too_many_arguments)]
pub(crate) fn layout_with_obstacles<R: Rng>(
    rng: &mut R,
    type_index: usize,
    ty: &ObjectType,
    layout: &LayoutSpec,
    width: u32,
    height: u32,
    obstacles: &[[f64; 2]],
    obstacle_sep: f64,
) -> Vec<ShapeInstance> {
    let min_dim = width.min(height);
    let margin = shape_circumradius(ty, min_dim) + 2.0;
    let x_lo = margin;
    let x_hi = width as f64 - 1.0 - margin;
    let y_lo = margin;
    let y_hi = height as f64 - 1.0 - margin;
    if x_lo >= x_hi || y_lo >= y_hi {
        return Vec::new();
    }

    let clear_of_obstacles = |c: [f64; 2]| obstacles.iter().all(|o| dist2d(c, *o) >= obstacle_sep);
    let provisional_bbox = |c: [f64; 2]| {
        let r = margin - 1.0;
        BBox::new(
            (c[0] - r).floor() as i32,
            (c[1] - r).floor() as i32,
            (c[0] + r).ceil() as i32,
            (c[1] + r).ceil() as i32,
        )
    };

    let mut placed: Vec<ShapeInstance> = Vec::new();
    match *layout {
        LayoutSpec::AlignedGrid { rows, cols, jitter } => {
            let cell_w = (x_hi - x_lo) / cols as f64;
            let cell_h = (y_hi - y_lo) / rows as f64;
            for r in 0..rows {
                for c in 0..cols {
                    let base_x = x_lo + (c as f64 + 0.5) * cell_w;
                    let base_y = y_lo + (r as f64 + 0.5) * cell_h;
                    let mut accepted = None;
                    for _ in 0..8 {
                        let jx = if jitter > 0.0 {
                            rng.random_range(-jitter..jitter) * cell_w
                        } else {
                            0.0
                        };
                        let jy = if jitter > 0.0 {
                            rng.random_range(-jitter..jitter) * cell_h
                        } else {
                            0.0
                        };
                        let cand = [
                            (base_x + jx).clamp(x_lo, x_hi),
                            (base_y + jy).clamp(y_lo, y_hi),
                        ];
                        // grid cells also respect separation among each other
                        let sep_ok = placed
                            .iter()
                            .all(|p| dist2d(cand, p.center) >= obstacle_sep);
                        if sep_ok && clear_of_obstacles(cand) {
                            accepted = Some(cand);
                            break;
                        }
                        if jitter == 0.0 {
                            break;
                        }
                    }
                    if let Some(center) = accepted {
                        placed.push(ShapeInstance {
                            type_index,
                            center,
                            bbox: provisional_bbox(center),
                        });
                    }
                }
            }
        }
        LayoutSpec::PoissonProcess {
            expected_count,
            min_center_separation,
        } => {
            let count = sample_poisson(rng, expected_count);
            for _ in 0..count {
                let mut accepted = None;
                for _ in 0..PLACEMENT_ATTEMPTS {
                    let cand = [rng.random_range(x_lo..x_hi), rng.random_range(y_lo..y_hi)];
                    let sep_ok = placed
                        .iter()
                        .all(|p| dist2d(cand, p.center) >= min_center_separation);
                    if sep_ok && clear_of_obstacles(cand) {
                        accepted = Some(cand);
                        break;
                    }
                }
                if let Some(center) = accepted {
                    placed.push(ShapeInstance {
                        type_index,
                        center,
                        bbox: provisional_bbox(center),
                    });
                }
            }
        }
    }
    placed
}

fn dist2d(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn sample_poisson<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    use rand_distr::{Distribution, Poisson};
    match Poisson::new(lambda) {
        Ok(p) => p.sample(rng) as u64,
        Err(_) => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn exactly_seven_shape_classes() {
        assert_eq!(ShapeClass::ALL.len(), 7);
    }

    #[test]
    fn scale_grid_spans_bounds() {
        assert!((scale_grid_value(0) - SCALE_MIN).abs() < 1e-15);
        assert!((scale_grid_value(SCALE_STEPS - 1) - SCALE_MAX).abs() < 1e-12);
    }

    #[test]
    fn sample_types_single() {
        let cfg = GeneratorConfig {
            types_per_image: (1, 1),
            ..GeneratorConfig::default()
        };
        let mut rng = substream(1, 0);
        let types = sample_types(&mut rng, &cfg).unwrap();
        assert_eq!(types.len(), 1);
        assert!(types[0].scale >= SCALE_MIN && types[0].scale <= SCALE_MAX);
    }

    #[test]
    fn sample_types_deterministic() {
        let cfg = GeneratorConfig::default();
        let a = sample_types(&mut substream(9, 4), &cfg).unwrap();
        let b = sample_types(&mut substream(9, 4), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_types_pairwise_distinct_over_many_configs() {
        // equality-predicate check across 1000 sampled draws of K=3
        let cfg = GeneratorConfig {
            types_per_image: (3, 3),
            ..GeneratorConfig::default()
        };
        for trial in 0..1000u64 {
            let types = sample_types(&mut substream(0xD15, trial), &cfg).unwrap();
            assert_eq!(types.len(), 3);
            for i in 0..3 {
                for j in (i + 1)..3 {
                    assert_ne!(types[i], types[j], "trial {trial}");
                }
            }
        }
    }

    #[test]
    fn sample_types_exhaustion_errors() {
        // forbidding nearly every color leaves no room for three types
        let cfg = GeneratorConfig {
            types_per_image: (3, 3),
            min_bg_color_dist: 442.0, // > max possible RGB distance
            ..GeneratorConfig::default()
        };
        let err = sample_types_avoiding(&mut substream(1, 1), &cfg, Some([0, 0, 0]));
        assert!(err.is_err());
    }

    #[test]
    fn grid_layout_zero_jitter_is_exact_lattice() {
        let ty = ObjectType {
            shape: ShapeClass::Rectangle,
            color: [200, 10, 10],
            scale: scale_grid_value(0),
            rotation: 0.0,
        };
        let layout = LayoutSpec::AlignedGrid {
            rows: 2,
            cols: 3,
            jitter: 0.0,
        };
        let mut rng = substream(3, 0);
        let placed = layout_instances(&mut rng, 0, &ty, &layout, 512, 512);
        assert_eq!(placed.len(), 6);
        let margin = shape_circumradius(&ty, 512) + 2.0;
        let cell_w = (512.0 - 1.0 - 2.0 * margin) / 3.0;
        let cell_h = (512.0 - 1.0 - 2.0 * margin) / 2.0;
        for r in 0..2usize {
            for c in 0..3usize {
                let inst = &placed[r * 3 + c];
                let ex = margin + (c as f64 + 0.5) * cell_w;
                let ey = margin + (r as f64 + 0.5) * cell_h;
                assert!((inst.center[0] - ex).abs() < 1e-9);
                assert!((inst.center[1] - ey).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn poisson_layout_mean_count_matches_rate() {
        // Monte-Carlo check: 10^4 draws, sample mean within 3 sigma of 10.
        let ty = ObjectType {
            shape: ShapeClass::Ellipse,
            color: [250, 250, 250],
            scale: scale_grid_value(0),
            rotation: 0.0,
        };
        let layout = LayoutSpec::PoissonProcess {
            expected_count: 10.0,
            min_center_separation: 0.0,
        };
        let n = 10_000u64;
        let mut total = 0usize;
        for i in 0..n {
            let mut rng = substream(0x9015, i);
            total += layout_instances(&mut rng, 0, &ty, &layout, 512, 512).len();
        }
        let mean = total as f64 / n as f64;
        let sigma = (10.0f64 / n as f64).sqrt();
        assert!(
            (mean - 10.0).abs() <= 3.0 * sigma,
            "mean {mean} not within 3 sigma ({sigma}) of 10"
        );
    }

    #[test]
    fn poisson_layout_respects_separation() {
        let ty = ObjectType {
            shape: ShapeClass::Hexagon,
            color: [9, 200, 30],
            scale: scale_grid_value(0),
            rotation: 1.0,
        };
        let layout = LayoutSpec::PoissonProcess {
            expected_count: 12.0,
            min_center_separation: 64.0,
        };
        for seed in 0..20u64 {
            let mut rng = substream(0x5E9, seed);
            let placed = layout_instances(&mut rng, 0, &ty, &layout, 512, 512);
            for i in 0..placed.len() {
                for j in (i + 1)..placed.len() {
                    assert!(dist2d(placed[i].center, placed[j].center) >= 64.0);
                }
            }
        }
    }

    #[test]
    fn layout_never_exits_canvas() {
        let ty = ObjectType {
            shape: ShapeClass::Lined,
            color: [255, 255, 255],
            scale: scale_grid_value(SCALE_STEPS - 1),
            rotation: 0.7,
        };
        for seed in 0..10u64 {
            let layout = LayoutSpec::PoissonProcess {
                expected_count: 20.0,
                min_center_separation: 0.0,
            };
            let mut rng = substream(77, seed);
            for inst in layout_instances(&mut rng, 0, &ty, &layout, 256, 256) {
                assert!(inst.bbox.inside(256, 256), "bbox {:?}", inst.bbox);
            }
        }
    }

    #[test]
    fn split_boundaries_are_exact() {
        let cfg = GeneratorConfig {
            num_images: 2000,
            ..GeneratorConfig::default()
        };
        let mut counts = [0usize; 3];
        for i in 0..2000 {
            match cfg.split_for_index(i) {
                Split::Train => counts[0] += 1,
                Split::Val => counts[1] += 1,
                Split::Test => counts[2] += 1,
            }
        }
        assert_eq!(counts, [1600, 200, 200]);
    }
}
