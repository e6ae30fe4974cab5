//! Debug rendering of annotations and heatmaps on top of an image.

use font8x8::legacy::BASIC_LEGACY;
use image::{Rgb, RgbImage};

use crate::heatmap::Heatmap;
use crate::labeling::{Annotation, BBox, GlassClassSpec, KEYPOINT_CATEGORY_ID, KEYPOINT_CATEGORY_NAME};

/// Strongest heatmap opacity.
const HEATMAP_ALPHA: f64 = 0.6;
const HEATMAP_RGB: [u8; 3] = [255, 40, 0];
const MASK_OUTLINE_RGB: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlayOptions {
    pub labels: bool,
    pub mask_outlines: bool,
}

impl Default for OverlayOptions {
    fn default() -> Self {
        Self {
            labels: true,
            mask_outlines: true,
        }
    }
}

pub fn class_color(class_id: u32) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 8] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
    ];
    PALETTE[class_id as usize % PALETTE.len()]
}

/// Draws the heatmap (alpha proportional to value / max), then mask
/// outlines, boxes and class names. Zero-valued heatmap pixels leave the
/// image untouched.
pub fn render_overlay(
    image: &RgbImage,
    annotations: &[Annotation],
    classes: &[GlassClassSpec],
    heatmap: Option<&Heatmap>,
    opts: &OverlayOptions,
) -> RgbImage {
    let mut out = image.clone();
    if let Some(h) = heatmap {
        blend_heatmap(&mut out, h);
    }
    for ann in annotations {
        let color = class_color(ann.class_id);
        if opts.mask_outlines {
            if let Some(mask) = &ann.mask {
                for (x, y) in mask.pixels() {
                    let edge = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|(dx, dy)| {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        nx < 0
                            || ny < 0
                            || nx >= mask.width as i64
                            || ny >= mask.height as i64
                            || !mask.get(nx as u32, ny as u32)
                    });
                    if edge && x < out.width() && y < out.height() {
                        out.put_pixel(x, y, Rgb(MASK_OUTLINE_RGB));
                    }
                }
            }
        }
        draw_rect(&mut out, &ann.bbox, color);
        if opts.labels {
            let name = if ann.class_id == KEYPOINT_CATEGORY_ID {
                KEYPOINT_CATEGORY_NAME.to_string()
            } else {
                classes
                    .iter()
                    .find(|c| c.id == ann.class_id)
                    .map(|c| c.name.clone())
                    .unwrap_or_else(|| format!("class {}", ann.class_id))
            };
            let y = ann.bbox.y.round() as i64 - 9;
            draw_text(&mut out, ann.bbox.x.round() as i64, y.max(0), &name, color);
        }
    }
    out
}

/// One-pixel outline covering pixel indices `x..x+w` × `y..y+h`.
pub fn draw_rect(img: &mut RgbImage, bbox: &BBox, color: [u8; 3]) {
    let x0 = bbox.x.round() as i64;
    let y0 = bbox.y.round() as i64;
    let x1 = (bbox.x + bbox.w).round() as i64 - 1;
    let y1 = (bbox.y + bbox.h).round() as i64 - 1;
    let mut put = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && x < img.width() as i64 && y < img.height() as i64 {
            img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    };
    for x in x0..=x1 {
        put(x, y0);
        put(x, y1);
    }
    for y in y0..=y1 {
        put(x0, y);
        put(x1, y);
    }
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: [u8; 3]) {
    for (i, ch) in text.chars().enumerate() {
        let Some(glyph) = BASIC_LEGACY.get(ch as usize) else { continue };
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits & (1 << col) == 0 {
                    continue;
                }
                let (px, py) = (x + i as i64 * 8 + col, y + row as i64);
                if px >= 0 && py >= 0 && px < img.width() as i64 && py < img.height() as i64 {
                    img.put_pixel(px as u32, py as u32, Rgb(color));
                }
            }
        }
    }
}

fn blend_heatmap(img: &mut RgbImage, h: &Heatmap) {
    let max = h.max();
    if max <= 0.0 {
        return;
    }
    for y in 0..h.height.min(img.height()) {
        for x in 0..h.width.min(img.width()) {
            let v = h.get(x, y);
            if v <= 0.0 {
                continue;
            }
            let a = HEATMAP_ALPHA * v / max;
            let p = img.get_pixel_mut(x, y);
            for c in 0..3 {
                p[c] = (p[c] as f64 * (1.0 - a) + HEATMAP_RGB[c] as f64 * a).round() as u8;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::{render_heatmap, KeypointProposal};

    fn base() -> RgbImage {
        RgbImage::from_fn(40, 30, |x, y| Rgb([(x * 5) as u8, (y * 7) as u8, 90]))
    }

    #[test]
    fn no_annotations_is_a_copy() {
        let img = base();
        assert_eq!(render_overlay(&img, &[], &[], None, &OverlayOptions::default()), img);
    }

    #[test]
    fn zero_heatmap_leaves_image() {
        let img = base();
        let h = Heatmap::zeros(40, 30);
        assert_eq!(render_overlay(&img, &[], &[], Some(&h), &OverlayOptions::default()), img);
    }

    #[test]
    fn heatmap_tints_its_peak() {
        let img = base();
        let h = render_heatmap(&[KeypointProposal::new(20.0, 15.0, 1.0)], 40, 30, 15, 2.5).unwrap();
        let out = render_overlay(&img, &[], &[], Some(&h), &OverlayOptions::default());
        assert_ne!(out.get_pixel(20, 15), img.get_pixel(20, 15));
        assert_eq!(out.get_pixel(0, 0), img.get_pixel(0, 0));
    }

    #[test]
    fn one_box_is_one_rectangle() {
        let img = base();
        let ann = Annotation::new(4, BBox::new(5.0, 6.0, 10.0, 8.0), "c");
        let opts = OverlayOptions {
            labels: false,
            mask_outlines: false,
        };
        let out = render_overlay(&img, &[ann], &[], None, &opts);
        // reference rasterization: the border of columns 5..=14, rows 6..=13
        let mut expected = img.clone();
        for y in 0..30u32 {
            for x in 0..40u32 {
                let inside = (5..=14).contains(&x) && (6..=13).contains(&y);
                let border = inside && (x == 5 || x == 14 || y == 6 || y == 13);
                if border {
                    expected.put_pixel(x, y, Rgb(class_color(4)));
                }
            }
        }
        assert_eq!(out, expected);
    }

    #[test]
    fn labels_draw_text_pixels() {
        let img = RgbImage::new(80, 40);
        let ann = Annotation::new(4, BBox::new(5.0, 20.0, 10.0, 8.0), "c");
        let classes = crate::labeling::default_classes();
        let with = render_overlay(&img, &[ann.clone()], &classes, None, &OverlayOptions::default());
        let without = render_overlay(&img, &[ann], &classes, None, &OverlayOptions { labels: false, mask_outlines: true });
        assert_ne!(with, without);
    }
}
