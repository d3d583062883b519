//! Shared naive reference implementation of the descriptor families,
//! used by both the oracle-equivalence and acceptance test targets.
//!
//! Written from the documented conventions (bit order, bin interpolation,
//! cell locality), independent of the library internals.

#![allow(dead_code)]

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use revisit_core::colorspace::{convert, ColorSpace, PlanarImage};
use revisit_core::descriptors::{extract, DescriptorConfig, DescriptorFamily};

const PI: f64 = std::f64::consts::PI;
const TAU: f64 = std::f64::consts::TAU;

pub fn factorial(n: usize) -> usize {
    (1..=n).product::<usize>().max(1)
}

/// One grayscale level: row-major f32 samples.
#[derive(Clone)]
pub struct Level {
    pub px: Vec<f32>,
    pub w: usize,
    pub h: usize,
}

impl Level {
    fn at(&self, x: usize, y: usize) -> f32 {
        self.px[y * self.w + x]
    }
}

pub fn pyramid(plane: &[f32], w: usize, h: usize, levels: usize) -> Vec<Level> {
    let mut out = vec![Level {
        px: plane.to_vec(),
        w,
        h,
    }];
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let (nw, nh) = (prev.w / 2, prev.h / 2);
        let mut px = vec![0f32; nw * nh];
        for y in 0..nh {
            for x in 0..nw {
                px[y * nw + x] = (prev.at(2 * x, 2 * y)
                    + prev.at(2 * x + 1, 2 * y)
                    + prev.at(2 * x, 2 * y + 1)
                    + prev.at(2 * x + 1, 2 * y + 1))
                    * 0.25;
            }
        }
        out.push(Level { px, w: nw, h: nh });
    }
    out
}

/// (x0, y0, w, h) rectangles: grid cells row-major.
fn grid_rects(w: usize, h: usize, grid: usize) -> Vec<(usize, usize, usize, usize)> {
    let (cw, ch) = (w / grid, h / grid);
    let mut out = Vec::new();
    for gy in 0..grid {
        for gx in 0..grid {
            out.push((gx * cw, gy * ch, cw, ch));
        }
    }
    out
}

/// Sliding windows clamped so the last window ends flush with the border.
fn sliding_rects(
    w: usize,
    h: usize,
    window: usize,
    stride: usize,
) -> Vec<(usize, usize, usize, usize)> {
    let ww = window.min(w);
    let wh = window.min(h);
    let mut out = Vec::new();
    let mut y0 = 0;
    loop {
        let mut x0 = 0;
        loop {
            out.push((x0, y0, ww, wh));
            if x0 + ww >= w {
                break;
            }
            x0 = (x0 + stride).min(w - ww);
        }
        if y0 + wh >= h {
            break;
        }
        y0 = (y0 + stride).min(h - wh);
    }
    out
}

fn l1(hist: &mut [f64]) {
    let s: f64 = hist.iter().sum();
    if s > 0.0 {
        for v in hist {
            *v /= s;
        }
    }
}

fn lbp_rect(level: &Level, rect: (usize, usize, usize, usize)) -> Vec<f64> {
    let (x0, y0, w, h) = rect;
    let mut hist = vec![0f64; 256];
    for y in y0 + 1..y0 + h - 1 {
        for x in x0 + 1..x0 + w - 1 {
            let c = level.at(x, y);
            // clockwise from top-left
            let neighbors = [
                level.at(x - 1, y - 1),
                level.at(x, y - 1),
                level.at(x + 1, y - 1),
                level.at(x + 1, y),
                level.at(x + 1, y + 1),
                level.at(x, y + 1),
                level.at(x - 1, y + 1),
                level.at(x - 1, y),
            ];
            let mut code = 0usize;
            for (i, v) in neighbors.iter().enumerate() {
                if *v >= c {
                    code |= 1 << i;
                }
            }
            hist[code] += 1.0;
        }
    }
    l1(&mut hist);
    hist
}

fn ltp_rect(level: &Level, rect: (usize, usize, usize, usize), t: f32) -> Vec<f64> {
    let (x0, y0, w, h) = rect;
    let mut hist = vec![0f64; 512];
    for y in y0 + 1..y0 + h - 1 {
        for x in x0 + 1..x0 + w - 1 {
            let c = level.at(x, y);
            let neighbors = [
                level.at(x - 1, y - 1),
                level.at(x, y - 1),
                level.at(x + 1, y - 1),
                level.at(x + 1, y),
                level.at(x + 1, y + 1),
                level.at(x, y + 1),
                level.at(x - 1, y + 1),
                level.at(x - 1, y),
            ];
            let mut upper = 0usize;
            let mut lower = 0usize;
            for (i, v) in neighbors.iter().enumerate() {
                if *v >= c + t {
                    upper |= 1 << i;
                }
                if *v <= c - t {
                    lower |= 1 << i;
                }
            }
            hist[upper] += 1.0;
            hist[256 + lower] += 1.0;
        }
    }
    l1(&mut hist[..256]);
    l1(&mut hist[256..]);
    hist
}

/// Central differences clamped at the cell border.
fn grad(level: &Level, rect: (usize, usize, usize, usize), x: usize, y: usize) -> (f32, f32) {
    let (x0, y0, w, h) = rect;
    let xm = if x > x0 { x - 1 } else { x0 };
    let xp = (x + 1).min(x0 + w - 1);
    let ym = if y > y0 { y - 1 } else { y0 };
    let yp = (y + 1).min(y0 + h - 1);
    (level.at(xp, y) - level.at(xm, y), level.at(x, yp) - level.at(x, ym))
}

fn hog_rect(level: &Level, rect: (usize, usize, usize, usize), bins: usize) -> Vec<f64> {
    let (x0, y0, w, h) = rect;
    let mut hist = vec![0f64; bins];
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let (gx, gy) = grad(level, rect, x, y);
            let mag = ((gx * gx + gy * gy).sqrt()) as f64;
            if mag == 0.0 {
                continue;
            }
            let mut theta = (gy as f64).atan2(gx as f64);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            let pos = theta / PI * bins as f64;
            let b0 = (pos.floor() as usize).min(bins - 1);
            let frac = pos - b0 as f64;
            hist[b0] += mag * (1.0 - frac);
            hist[(b0 + 1) % bins] += mag * frac;
        }
    }
    l1(&mut hist);
    hist
}

fn dsift_rect(level: &Level, rect: (usize, usize, usize, usize)) -> Vec<f64> {
    let (x0, y0, w, h) = rect;
    let mut hist = vec![0f64; 128];
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let (gx, gy) = grad(level, rect, x, y);
            let mag = ((gx * gx + gy * gy).sqrt()) as f64;
            if mag == 0.0 {
                continue;
            }
            let mut theta = (gy as f64).atan2(gx as f64);
            if theta < 0.0 {
                theta += TAU;
            }
            let sx = ((x - x0) * 4 / w).min(3);
            let sy = ((y - y0) * 4 / h).min(3);
            let base = (sy * 4 + sx) * 8;
            let pos = theta / TAU * 8.0;
            let b0 = (pos.floor() as usize).min(7);
            let frac = pos - b0 as f64;
            hist[base + b0] += mag * (1.0 - frac);
            hist[base + (b0 + 1) % 8] += mag * frac;
        }
    }
    l1(&mut hist);
    hist
}

fn sample_bilinear(level: &Level, x: f64, y: f64) -> f64 {
    let xf = x.floor();
    let yf = y.floor();
    let (fx, fy) = (x - xf, y - yf);
    let (x0, y0) = (xf as usize, yf as usize);
    let x1 = (x0 + 1).min(level.w - 1);
    let y1 = (y0 + 1).min(level.h - 1);
    level.at(x0, y0) as f64 * (1.0 - fx) * (1.0 - fy)
        + level.at(x1, y0) as f64 * fx * (1.0 - fy)
        + level.at(x0, y1) as f64 * (1.0 - fx) * fy
        + level.at(x1, y1) as f64 * fx * fy
}

fn lehmer(vals: &[f64]) -> usize {
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap().then(a.cmp(&b)));
    let mut idx = 0;
    for i in 0..n {
        let smaller = order[i + 1..].iter().filter(|&&j| j < order[i]).count();
        idx += smaller * factorial(n - 1 - i);
    }
    idx
}

fn liop_rect(level: &Level, rect: (usize, usize, usize, usize), neighbors: usize) -> Vec<f64> {
    let (x0, y0, w, h) = rect;
    let mut hist = vec![0f64; factorial(neighbors)];
    let r = 3usize;
    if w <= 2 * r || h <= 2 * r {
        return hist;
    }
    for y in y0 + r..y0 + h - r {
        for x in x0 + r..x0 + w - r {
            let vals: Vec<f64> = (0..neighbors)
                .map(|i| {
                    let ang = TAU * i as f64 / neighbors as f64;
                    sample_bilinear(level, x as f64 + 3.0 * ang.cos(), y as f64 + 3.0 * ang.sin())
                })
                .collect();
            hist[lehmer(&vals)] += 1.0;
        }
    }
    l1(&mut hist);
    hist
}

/// Full reference extraction: channel-major (channel, level, cell).
pub fn reference(image: &PlanarImage, cfg: &DescriptorConfig) -> Vec<f64> {
    fn simple(image: &PlanarImage, cfg: &DescriptorConfig, family: DescriptorFamily) -> Vec<f64> {
        let mut out = Vec::new();
        for c in 0..image.channels() {
            let levels = pyramid(
                image.plane(c),
                image.width(),
                image.height(),
                cfg.pyramid_levels,
            );
            for level in &levels {
                let rects = if family == DescriptorFamily::SwMlbp {
                    sliding_rects(level.w, level.h, cfg.sw_window, cfg.sw_stride)
                } else {
                    grid_rects(level.w, level.h, cfg.grid)
                };
                for rect in rects {
                    let hist = match family {
                        DescriptorFamily::Mlbp | DescriptorFamily::SwMlbp => lbp_rect(level, rect),
                        DescriptorFamily::Mltp => ltp_rect(level, rect, cfg.ltp_threshold),
                        DescriptorFamily::Mhog => hog_rect(level, rect, cfg.hog_bins),
                        DescriptorFamily::Dsift => dsift_rect(level, rect),
                        DescriptorFamily::Mliop => liop_rect(level, rect, cfg.liop_neighbors),
                        DescriptorFamily::MlbpHog => unreachable!(),
                    };
                    out.extend(hist);
                }
            }
        }
        out
    }
    match cfg.family {
        DescriptorFamily::MlbpHog => {
            let mut out = simple(image, cfg, DescriptorFamily::Mlbp);
            out.extend(simple(image, cfg, DescriptorFamily::Mhog));
            out
        }
        family => simple(image, cfg, family),
    }
}

pub fn random_image(seed: u64, size: u32) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = RgbImage::new(size, size);
    for px in img.pixels_mut() {
        px.0 = [rng.random(), rng.random(), rng.random()];
    }
    img
}

pub fn test_cfg(family: DescriptorFamily, space: ColorSpace) -> DescriptorConfig {
    DescriptorConfig {
        pyramid_levels: 2,
        sw_window: 32,
        sw_stride: 16,
        ..DescriptorConfig::new(family, space)
    }
}

pub fn assert_matches(family: DescriptorFamily, space: ColorSpace, seeds: std::ops::Range<u64>) {
    let cfg = test_cfg(family, space);
    for seed in seeds {
        let img = random_image(seed, 64);
        let planar = convert(&img, space);
        let got = extract(&planar, &cfg).unwrap();
        let want = reference(&planar, &cfg);
        assert_eq!(
            got.len(),
            want.len(),
            "{} {}: length mismatch on seed {seed}",
            family.name(),
            space.name()
        );
        for (i, (g, w)) in got.values.iter().zip(&want).enumerate() {
            assert!(
                (*g as f64 - w).abs() < 1e-6,
                "{} {} seed {seed} index {i}: {g} vs {w}",
                family.name(),
                space.name()
            );
        }
    }
}

