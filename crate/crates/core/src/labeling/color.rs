use image::RgbImage;
use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::LabelError;

/// CIE L*a*b* coordinates (D65 white).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

// D65 white as the image of RGB (1, 1, 1), so neutral grays have a* = b* = 0
fn white(row: usize) -> f64 {
    SRGB_TO_XYZ[row].iter().sum()
}

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// 8-bit sRGB → linear RGB → XYZ (D65) → CIELAB.
pub fn srgb_to_cielab(r: u8, g: u8, b: u8) -> Lab {
    let (r, g, b) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    let xyz = |row: usize| {
        let m = SRGB_TO_XYZ[row];
        (m[0] * r + m[1] * g + m[2] * b) / white(row)
    };
    let (fx, fy, fz) = (lab_f(xyz(0)), lab_f(xyz(1)), lab_f(xyz(2)));
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// CIELAB acceptance box for cap pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorGate {
    pub l_range: (f64, f64),
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    /// Fraction of sampled pixels that must fall inside the box (inclusive).
    pub min_fraction: f64,
}

impl Default for ColorGate {
    /// Green cap gate.
    fn default() -> Self {
        Self {
            l_range: (20.0, 95.0),
            a_range: (-128.0, -20.0),
            b_range: (5.0, 128.0),
            min_fraction: 0.6,
        }
    }
}

impl ColorGate {
    pub fn validate(&self) -> Result<(), LabelError> {
        let ok = |(lo, hi): (f64, f64)| lo <= hi;
        if !(ok(self.l_range) && ok(self.a_range) && ok(self.b_range)) {
            return Err(LabelError::InvalidConfig("color gate interval is empty".into()));
        }
        if !(self.min_fraction > 0.0 && self.min_fraction <= 1.0) {
            return Err(LabelError::InvalidConfig("min_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn accepts(&self, lab: &Lab) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(lab.l, self.l_range) && inside(lab.a, self.a_range) && inside(lab.b, self.b_range)
    }
}

/// True when at least `gate.min_fraction` of the footprint pixels fall in the
/// gate. Footprint pixels are rounded to the nearest pixel; ones outside the
/// image count as failures.
pub fn verify_color(image: &RgbImage, footprint: &[Point2<f64>], gate: &ColorGate) -> Result<bool, LabelError> {
    if footprint.is_empty() {
        return Err(LabelError::EmptyFootprint);
    }
    gate.validate()?;
    let passing = footprint
        .iter()
        .filter(|p| {
            let (x, y) = (p.x.round(), p.y.round());
            if x < 0.0 || y < 0.0 || x >= image.width() as f64 || y >= image.height() as f64 {
                return false;
            }
            let px = image.get_pixel(x as u32, y as u32);
            gate.accepts(&srgb_to_cielab(px[0], px[1], px[2]))
        })
        .count();
    // integer comparison keeps the boundary inclusive without rounding slop
    Ok(passing as f64 >= gate.min_fraction * footprint.len() as f64 - 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn gray_is_neutral() {
        let lab = srgb_to_cielab(128, 128, 128);
        assert!(lab.a.abs() < 1e-6 && lab.b.abs() < 1e-6, "{lab:?}");
    }

    #[test]
    fn black_and_white() {
        assert!(srgb_to_cielab(0, 0, 0).l.abs() < 1e-12);
        let w = srgb_to_cielab(255, 255, 255);
        assert!((w.l - 100.0).abs() < 1e-4 && w.a.abs() < 1e-3 && w.b.abs() < 1e-3);
    }

    #[test]
    fn pure_green_reference() {
        let lab = srgb_to_cielab(0, 255, 0);
        assert!((lab.l - 87.73).abs() < 0.01, "{lab:?}");
        assert!((lab.a + 86.18).abs() < 0.01, "{lab:?}");
        assert!((lab.b - 83.18).abs() < 0.01, "{lab:?}");
    }

    fn filled(rgb: [u8; 3]) -> RgbImage {
        RgbImage::from_pixel(8, 8, Rgb(rgb))
    }

    fn footprint() -> Vec<Point2<f64>> {
        (0..8).flat_map(|x| (0..8).map(move |y| Point2::new(x as f64, y as f64))).collect()
    }

    #[test]
    fn green_passes_red_fails() {
        let gate = ColorGate::default();
        assert!(verify_color(&filled([0, 255, 0]), &footprint(), &gate).unwrap());
        assert!(!verify_color(&filled([255, 0, 0]), &footprint(), &gate).unwrap());
    }

    #[test]
    fn exact_min_fraction_passes() {
        let mut img = filled([255, 0, 0]);
        let fp: Vec<Point2<f64>> = (0..10).map(|i| Point2::new(i as f64 % 8.0, (i / 8) as f64)).collect();
        // 6 of 10 sampled pixels green: exactly min_fraction = 0.6
        for p in &fp[..6] {
            img.put_pixel(p.x as u32, p.y as u32, Rgb([0, 255, 0]));
        }
        assert!(verify_color(&img, &fp, &ColorGate::default()).unwrap());
        let gate = ColorGate {
            min_fraction: 0.61,
            ..Default::default()
        };
        assert!(!verify_color(&img, &fp, &gate).unwrap());
    }

    #[test]
    fn empty_footprint_rejected() {
        assert!(matches!(
            verify_color(&filled([0, 255, 0]), &[], &ColorGate::default()),
            Err(LabelError::EmptyFootprint)
        ));
    }
}
