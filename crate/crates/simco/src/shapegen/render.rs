//! Rasterization: procedural-noise backgrounds plus hard-edged shape fills.
//!
//! A pixel belongs to a shape when its center `(x + 0.5, y + 0.5)` lies
//! inside the rotated template, so rendered masks are binary and the tight
//! bounding boxes written back into the record are exact.

use crate::geom::BBox;
use crate::raster::RasterImage;
use crate::rng::fnv1a64;

use super::{ImageRecord, ObjectType, ShapeClass};

fn hash2(seed: u64, gx: i64, gy: i64) -> u64 {
    let mut z = seed
        ^ (gx as u64).wrapping_mul(0x8864_6080_5F5C_9B1B)
        ^ (gy as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice_value(seed: u64, gx: i64, gy: i64) -> f64 {
    // map to [-1, 1]
    (hash2(seed, gx, gy) >> 11) as f64 / ((1u64 << 53) as f64) * 2.0 - 1.0
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Deterministic 2D value noise in `[-1, 1]`.
pub(crate) fn value_noise(seed: u64, cell_px: u32, x: u32, y: u32) -> f64 {
    let c = cell_px.max(1) as f64;
    let xf = x as f64 / c;
    let yf = y as f64 / c;
    let gx = xf.floor() as i64;
    let gy = yf.floor() as i64;
    let fx = smoothstep(xf - gx as f64);
    let fy = smoothstep(yf - gy as f64);
    let v00 = lattice_value(seed, gx, gy);
    let v10 = lattice_value(seed, gx + 1, gy);
    let v01 = lattice_value(seed, gx, gy + 1);
    let v11 = lattice_value(seed, gx + 1, gy + 1);
    let top = v00 + (v10 - v00) * fx;
    let bot = v01 + (v11 - v01) * fx;
    top + (bot - top) * fy
}

/// Unit-interval value derived from a type's identity, used for per-type
/// render attributes (ellipse axis ratio) that must be identical across all
/// instances of the type and stable across runs.
fn type_unit_hash(ty: &ObjectType) -> f64 {
    let mut bytes = Vec::with_capacity(24);
    bytes.push(ty.shape as u8);
    bytes.extend_from_slice(&ty.color);
    bytes.extend_from_slice(&ty.scale.to_bits().to_le_bytes());
    bytes.extend_from_slice(&ty.rotation.to_bits().to_le_bytes());
    (fnv1a64(&bytes) >> 11) as f64 / ((1u64 << 53) as f64)
}

/// Point-in-shape test data for one type, in shape-local coordinates.
pub(crate) struct ShapeTemplate {
    kind: TemplateKind,
    cos_r: f64,
    sin_r: f64,
}

enum TemplateKind {
    /// Half-extents of an axis-aligned bar or square.
    Box { hx: f64, hy: f64 },
    /// `|x|/a + |y|/b <= 1`.
    Rhombus { a: f64, b: f64 },
    /// Convex polygon given by CCW vertices.
    Polygon { verts: Vec<(f64, f64)> },
    /// `(x/a)^2 + (y/b)^2 <= 1`.
    Ellipse { a: f64, b: f64 },
}

impl ShapeTemplate {
    pub(crate) fn new(ty: &ObjectType, min_dim: u32) -> Self {
        let d = ty.diameter_px(min_dim);
        let half = d / 2.0;
        let kind = match ty.shape {
            ShapeClass::Lined => TemplateKind::Box {
                hx: half,
                hy: (d / 8.0).max(1.2) / 2.0,
            },
            ShapeClass::Rectangle => TemplateKind::Box { hx: half, hy: half },
            ShapeClass::Diamond => TemplateKind::Rhombus {
                a: half,
                b: 0.6 * half,
            },
            ShapeClass::Triangle => TemplateKind::Polygon {
                verts: regular_polygon(3, half, std::f64::consts::FRAC_PI_2),
            },
            ShapeClass::Pentagon => TemplateKind::Polygon {
                verts: regular_polygon(5, half, std::f64::consts::FRAC_PI_2),
            },
            ShapeClass::Hexagon => TemplateKind::Polygon {
                verts: regular_polygon(6, half, 0.0),
            },
            ShapeClass::Ellipse => TemplateKind::Ellipse {
                a: half,
                b: half * (0.6 + 0.4 * type_unit_hash(ty)),
            },
        };
        ShapeTemplate {
            kind,
            cos_r: ty.rotation.cos(),
            sin_r: ty.rotation.sin(),
        }
    }

    /// Test a point given as an offset from the instance center.
    pub(crate) fn contains(&self, dx: f64, dy: f64) -> bool {
        // rotate into the shape frame
        let x = self.cos_r * dx + self.sin_r * dy;
        let y = -self.sin_r * dx + self.cos_r * dy;
        match &self.kind {
            TemplateKind::Box { hx, hy } => x.abs() <= *hx && y.abs() <= *hy,
            TemplateKind::Rhombus { a, b } => x.abs() / a + y.abs() / b <= 1.0,
            TemplateKind::Polygon { verts } => {
                let n = verts.len();
                for i in 0..n {
                    let (x0, y0) = verts[i];
                    let (x1, y1) = verts[(i + 1) % n];
                    if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0.0 {
                        return false;
                    }
                }
                true
            }
            TemplateKind::Ellipse { a, b } => {
                let u = x / a;
                let v = y / b;
                u * u + v * v <= 1.0
            }
        }
    }
}

fn regular_polygon(n: usize, radius: f64, phase: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let ang = phase + k as f64 * std::f64::consts::TAU / n as f64;
            (radius * ang.cos(), radius * ang.sin())
        })
        .collect()
}

/// Render a record to an RGB raster and tighten its instance boxes.
///
/// The background is the base color plus value noise (same offset on all
/// channels); instances are filled back-to-front in record order. Each
/// instance's bbox is rewritten to the tight extents of its own mask.
/// Instances whose mask comes out empty or thinner than two pixels in either
/// direction are removed, and types left with fewer than two instances are
/// dropped (both only possible at degenerate scales).
pub fn rasterize(record: &mut ImageRecord) -> RasterImage {
    loop {
        let raster = rasterize_once(record);
        // drop instances whose rendered mask was degenerate (marked by an
        // inverted bbox), then re-check the two-instances-per-type invariant
        let before = record.instances.len();
        record.instances.retain(|inst| inst.bbox.is_proper());
        let mut counts = vec![0usize; record.types.len()];
        for inst in &record.instances {
            counts[inst.type_index] += 1;
        }
        let weak: Vec<usize> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0 && c < 2)
            .map(|(k, _)| k)
            .collect();
        if !weak.is_empty() {
            record.instances.retain(|i| !weak.contains(&i.type_index));
        }
        let keep: Vec<usize> = counts
            .iter()
            .enumerate()
            .filter(|(k, &c)| c >= 2 && !weak.contains(k))
            .map(|(k, _)| k)
            .collect();
        if keep.len() != record.types.len() {
            let remap: std::collections::HashMap<usize, usize> = keep
                .iter()
                .enumerate()
                .map(|(new, &old)| (old, new))
                .collect();
            record.types = keep.iter().map(|&k| record.types[k].clone()).collect();
            for inst in &mut record.instances {
                inst.type_index = remap[&inst.type_index];
            }
        }
        if record.instances.len() == before && keep.len() == counts.len() {
            return raster;
        }
        // something was dropped: re-render without the removed pixels
        if record.instances.is_empty() {
            return rasterize_once(record);
        }
    }
}

fn rasterize_once(record: &mut ImageRecord) -> RasterImage {
    let (w, h) = (record.width, record.height);
    let mut img = RasterImage::new(w, h);
    let bg = &record.background;
    let amp = bg.noise_amplitude as f64;
    for y in 0..h {
        for x in 0..w {
            let n = value_noise(bg.noise_seed, bg.noise_cell_px, x, y);
            let off = (n * amp).round();
            let px = [
                (bg.base_color[0] as f64 + off).clamp(0.0, 255.0) as u8,
                (bg.base_color[1] as f64 + off).clamp(0.0, 255.0) as u8,
                (bg.base_color[2] as f64 + off).clamp(0.0, 255.0) as u8,
            ];
            img.set(x, y, px);
        }
    }

    let min_dim = w.min(h);
    let templates: Vec<ShapeTemplate> = record
        .types
        .iter()
        .map(|ty| ShapeTemplate::new(ty, min_dim))
        .collect();

    for inst in &mut record.instances {
        let ty = &record.types[inst.type_index];
        let template = &templates[inst.type_index];
        let reach = super::shape_circumradius(ty, min_dim).ceil() as i32 + 1;
        let cx = inst.center[0];
        let cy = inst.center[1];
        let x_start = ((cx as i32) - reach).max(0) as u32;
        let x_end = (((cx as i32) + reach) as u32).min(w - 1);
        let y_start = ((cy as i32) - reach).max(0) as u32;
        let y_end = (((cy as i32) + reach) as u32).min(h - 1);

        let mut tight: Option<BBox> = None;
        for y in y_start..=y_end {
            for x in x_start..=x_end {
                let dx = (x as f64 + 0.5) - cx;
                let dy = (y as f64 + 0.5) - cy;
                if template.contains(dx, dy) {
                    img.set(x, y, ty.color);
                    tight = Some(match tight {
                        None => BBox::new(x as i32, y as i32, x as i32, y as i32),
                        Some(b) => BBox::new(
                            b.x0.min(x as i32),
                            b.y0.min(y as i32),
                            b.x1.max(x as i32),
                            b.y1.max(y as i32),
                        ),
                    });
                }
            }
        }
        // inverted box marks an empty/degenerate mask for the caller
        inst.bbox = tight.unwrap_or(BBox::new(1, 1, 0, 0));
    }
    img
}
