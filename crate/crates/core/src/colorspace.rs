//! Conversions from 8-bit RGB into the six color spaces used for
//! descriptor extraction: RGB, HSV, gray-scale, normalized RGB, log and
//! opponent.
//!
//! All transforms are pixel-local and deterministic. Outputs live in `[0,1]`
//! except the opponent axes, whose documented ranges are
//! `O1 ∈ [-1/√2, 1/√2]`, `O2 ∈ [-2/√6, 2/√6]`, `O3 ∈ [0, √3]`.

use image::RgbImage;

/// Tag identifying which transform produced a [`PlanarImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    Rgb,
    Hsv,
    Gray,
    NormRgb,
    Log,
    Opponent,
}

impl ColorSpace {
    pub const ALL: [ColorSpace; 6] = [
        ColorSpace::Rgb,
        ColorSpace::Hsv,
        ColorSpace::Gray,
        ColorSpace::NormRgb,
        ColorSpace::Log,
        ColorSpace::Opponent,
    ];

    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "rgb",
            ColorSpace::Hsv => "hsv",
            ColorSpace::Gray => "gs",
            ColorSpace::NormRgb => "norm",
            ColorSpace::Log => "log",
            ColorSpace::Opponent => "opp",
        }
    }

    pub fn parse(s: &str) -> Option<ColorSpace> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Some(ColorSpace::Rgb),
            "hsv" => Some(ColorSpace::Hsv),
            "gs" | "gray" | "grayscale" => Some(ColorSpace::Gray),
            "norm" => Some(ColorSpace::NormRgb),
            "log" => Some(ColorSpace::Log),
            "opp" | "opponent" => Some(ColorSpace::Opponent),
            _ => None,
        }
    }
}

/// A float image split into 1–3 planes sharing dimensions.
#[derive(Debug, Clone)]
pub struct PlanarImage {
    planes: Vec<Vec<f32>>,
    width: usize,
    height: usize,
    space: ColorSpace,
}

impl PlanarImage {
    pub fn new(planes: Vec<Vec<f32>>, width: usize, height: usize, space: ColorSpace) -> Self {
        assert!(!planes.is_empty() && planes.len() <= 3);
        for p in &planes {
            assert_eq!(p.len(), width * height, "plane size mismatch");
        }
        PlanarImage {
            planes,
            width,
            height,
            space,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        &self.planes[c]
    }

    #[inline]
    pub fn at(&self, c: usize, x: usize, y: usize) -> f32 {
        self.planes[c][y * self.width + x]
    }

    pub fn is_finite(&self) -> bool {
        self.planes
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}

fn per_pixel_3(rgb: &RgbImage, space: ColorSpace, f: impl Fn(f32, f32, f32) -> [f32; 3]) -> PlanarImage {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut planes = vec![vec![0f32; w * h]; 3];
    for (i, px) in rgb.pixels().enumerate() {
        let [r, g, b] = px.0;
        let out = f(r as f32 / 255.0, g as f32 / 255.0, b as f32 / 255.0);
        planes[0][i] = out[0];
        planes[1][i] = out[1];
        planes[2][i] = out[2];
    }
    PlanarImage::new(planes, w, h, space)
}

/// Identity transform, channels scaled to `[0,1]`.
pub fn to_rgb(rgb: &RgbImage) -> PlanarImage {
    per_pixel_3(rgb, ColorSpace::Rgb, |r, g, b| [r, g, b])
}

/// Rec. 601 luma: `(0.299 R + 0.587 G + 0.114 B) / 255`.
pub fn to_grayscale(rgb: &RgbImage) -> PlanarImage {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut plane = vec![0f32; w * h];
    for (i, px) in rgb.pixels().enumerate() {
        let [r, g, b] = px.0;
        plane[i] = (0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32) / 255.0;
    }
    PlanarImage::new(vec![plane], w, h, ColorSpace::Gray)
}

/// Standard hexcone HSV; hue is scaled to `[0,1]` (degrees / 360).
pub fn to_hsv(rgb: &RgbImage) -> PlanarImage {
    per_pixel_3(rgb, ColorSpace::Hsv, |r, g, b| {
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let delta = max - min;
        let h = if delta == 0.0 {
            0.0
        } else if max == r {
            let mut h = (g - b) / delta % 6.0;
            if h < 0.0 {
                h += 6.0;
            }
            h / 6.0
        } else if max == g {
            ((b - r) / delta + 2.0) / 6.0
        } else {
            ((r - g) / delta + 4.0) / 6.0
        };
        let s = if max == 0.0 { 0.0 } else { delta / max };
        [h, s, max]
    })
}

/// Chromaticity `(r,g,b) = (R,G,B)/(R+G+B)`; black maps to `(1/3,1/3,1/3)`.
pub fn to_normalized_rgb(rgb: &RgbImage) -> PlanarImage {
    per_pixel_3(rgb, ColorSpace::NormRgb, |r, g, b| {
        let sum = r + g + b;
        if sum == 0.0 {
            [1.0 / 3.0; 3]
        } else {
            [r / sum, g / sum, b / sum]
        }
    })
}

/// Per-channel `ln(1 + I) / ln(256)` on the raw 0..255 intensity.
pub fn to_log(rgb: &RgbImage) -> PlanarImage {
    let scale = 1.0 / 256f32.ln();
    per_pixel_3(rgb, ColorSpace::Log, move |r, g, b| {
        [
            (1.0 + 255.0 * r).ln() * scale,
            (1.0 + 255.0 * g).ln() * scale,
            (1.0 + 255.0 * b).ln() * scale,
        ]
    })
}

/// Opponent axes on `[0,1]`-scaled inputs:
/// `O1 = (R-G)/√2`, `O2 = (R+G-2B)/√6`, `O3 = (R+G+B)/√3`.
pub fn to_opponent(rgb: &RgbImage) -> PlanarImage {
    let s2 = std::f32::consts::SQRT_2;
    let s6 = 6f32.sqrt();
    let s3 = 3f32.sqrt();
    per_pixel_3(rgb, ColorSpace::Opponent, move |r, g, b| {
        [(r - g) / s2, (r + g - 2.0 * b) / s6, (r + g + b) / s3]
    })
}

/// Dispatches to the transform for `space`.
pub fn convert(rgb: &RgbImage, space: ColorSpace) -> PlanarImage {
    match space {
        ColorSpace::Rgb => to_rgb(rgb),
        ColorSpace::Hsv => to_hsv(rgb),
        ColorSpace::Gray => to_grayscale(rgb),
        ColorSpace::NormRgb => to_normalized_rgb(rgb),
        ColorSpace::Log => to_log(rgb),
        ColorSpace::Opponent => to_opponent(rgb),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn solid(r: u8, g: u8, b: u8) -> RgbImage {
        RgbImage::from_pixel(4, 4, Rgb([r, g, b]))
    }

    #[test]
    fn grayscale_extremes_and_red() {
        assert_eq!(to_grayscale(&solid(255, 255, 255)).at(0, 0, 0), 1.0);
        assert_eq!(to_grayscale(&solid(0, 0, 0)).at(0, 0, 0), 0.0);
        let red = to_grayscale(&solid(255, 0, 0));
        assert!((red.at(0, 1, 1) - 0.299).abs() < 1e-6);
    }

    #[test]
    fn hsv_pure_red_and_gray() {
        let red = to_hsv(&solid(255, 0, 0));
        assert_eq!(red.at(0, 0, 0), 0.0);
        assert_eq!(red.at(1, 0, 0), 1.0);
        assert_eq!(red.at(2, 0, 0), 1.0);

        let gray = to_hsv(&solid(100, 100, 100));
        assert_eq!(gray.at(1, 0, 0), 0.0);
        assert!((gray.at(2, 0, 0) - 100.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn hsv_hue_matches_hexcone() {
        // (0,128,255): max=b, h = ((r-g)/delta + 4)/6 = ((0-128/255)/1 + 4)/6
        let img = to_hsv(&solid(0, 128, 255));
        let expected = 210.0 / 360.0;
        assert!((img.at(0, 2, 2) - expected).abs() < 1e-3);
    }

    #[test]
    fn normalized_rgb_sums_to_one() {
        let img = to_normalized_rgb(&solid(100, 50, 50));
        assert!((img.at(0, 0, 0) - 0.5).abs() < 1e-6);
        assert!((img.at(1, 0, 0) - 0.25).abs() < 1e-6);
        assert!((img.at(2, 0, 0) - 0.25).abs() < 1e-6);

        let black = to_normalized_rgb(&solid(0, 0, 0));
        for c in 0..3 {
            assert!((black.at(c, 0, 0) - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn log_endpoints_and_midpoint() {
        let img = to_log(&solid(0, 15, 255));
        assert_eq!(img.at(0, 0, 0), 0.0);
        assert!((img.at(1, 0, 0) - 0.5).abs() < 1e-6);
        assert!((img.at(2, 0, 0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn opponent_axes() {
        let gray = to_opponent(&solid(80, 80, 80));
        assert!(gray.at(0, 0, 0).abs() < 1e-6);
        assert!(gray.at(1, 0, 0).abs() < 1e-6);

        let red = to_opponent(&solid(255, 0, 0));
        assert!((red.at(0, 0, 0) - 1.0 / 2f32.sqrt()).abs() < 1e-6);

        let white = to_opponent(&solid(255, 255, 255));
        assert!((white.at(2, 0, 0) - 3f32.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn all_transforms_finite_on_random_input() {
        let mut img = RgbImage::new(8, 8);
        let mut v: u32 = 7;
        for px in img.pixels_mut() {
            v = v.wrapping_mul(1664525).wrapping_add(1013904223);
            px.0 = [(v >> 8) as u8, (v >> 16) as u8, (v >> 24) as u8];
        }
        for space in ColorSpace::ALL {
            assert!(convert(&img, space).is_finite(), "{space:?}");
        }
    }
}
