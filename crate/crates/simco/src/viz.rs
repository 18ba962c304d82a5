//! Cluster overlays: detection boxes drawn in a fixed 12-color palette
//! cycling by cluster index, for deterministic visual diffs.

use crate::detect::Detection;
use crate::raster::RasterImage;

/// High-contrast palette; cluster `i` uses `PALETTE[i % 12]`.
pub const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
    [170, 110, 40],
];

const BORDER: i32 = 2;

/// Draw each cluster's member boxes over a copy of the raster.
///
/// `clusters` holds detection-index lists; output dimensions equal the input
/// dimensions.
pub fn render_overlay(
    raster: &RasterImage,
    detections: &[Detection],
    clusters: &[Vec<usize>],
) -> RasterImage {
    let mut out = raster.clone();
    for (ci, members) in clusters.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        for &m in members {
            if let Some(det) = detections.get(m) {
                draw_box(&mut out, det, color);
            }
        }
    }
    out
}

fn draw_box(img: &mut RasterImage, det: &Detection, color: [u8; 3]) {
    let b = det.bbox;
    let (w, h) = (img.width() as i32, img.height() as i32);
    for t in 0..BORDER {
        let (x0, y0, x1, y1) = (b.x0 - t, b.y0 - t, b.x1 + t, b.y1 + t);
        for x in x0.max(0)..=x1.min(w - 1) {
            if (0..h).contains(&y0) {
                img.set(x as u32, y0 as u32, color);
            }
            if (0..h).contains(&y1) {
                img.set(x as u32, y1 as u32, color);
            }
        }
        for y in y0.max(0)..=y1.min(h - 1) {
            if (0..w).contains(&x0) {
                img.set(x0 as u32, y as u32, color);
            }
            if (0..w).contains(&x1) {
                img.set(x1 as u32, y as u32, color);
            }
        }
    }
}
