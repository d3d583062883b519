//! Multi-scale texture descriptors: mLBP, mHOG, sliding-window mLBP, mLTP,
//! mLBP+mHOG, dense SIFT and mLIOP.
//!
//! Every family follows the same scheme: a factor-2 box-filter pyramid, a
//! grid of non-overlapping cells per level (a sliding window for sw-mLBP),
//! one histogram per cell, L1-normalized per block, concatenated
//! channel-major (channel, then level, then cell).
//!
//! Histograms are computed strictly inside each cell: neighborhoods and
//! gradients never read pixels from an adjacent cell, so editing one cell
//! perturbs only that cell's blocks.

use crate::colorspace::{ColorSpace, PlanarImage};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("image {w}x{h} too small for {levels} pyramid levels with grid {grid} (cells must be >= 8x8)")]
    ImageTooSmall {
        w: usize,
        h: usize,
        levels: usize,
        grid: usize,
    },
    #[error("image color space {actual:?} does not match config space {expected:?}")]
    SpaceMismatch {
        expected: ColorSpace,
        actual: ColorSpace,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("descriptor length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("config fingerprint mismatch: {0:#x} vs {1:#x}")]
    FingerprintMismatch(u64, u64),
    #[error("cache i/o error: {0}")]
    CacheIo(#[from] std::io::Error),
    #[error("malformed cache file: {0}")]
    MalformedCache(String),
}

/// The seven descriptor families of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DescriptorFamily {
    Mlbp,
    Mhog,
    SwMlbp,
    Mltp,
    MlbpHog,
    Dsift,
    Mliop,
}

impl DescriptorFamily {
    pub const ALL: [DescriptorFamily; 7] = [
        DescriptorFamily::Mlbp,
        DescriptorFamily::Mhog,
        DescriptorFamily::SwMlbp,
        DescriptorFamily::Mltp,
        DescriptorFamily::MlbpHog,
        DescriptorFamily::Dsift,
        DescriptorFamily::Mliop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DescriptorFamily::Mlbp => "mLBP",
            DescriptorFamily::Mhog => "mHOG",
            DescriptorFamily::SwMlbp => "swmLBP",
            DescriptorFamily::Mltp => "mLTP",
            DescriptorFamily::MlbpHog => "mLBPHOG",
            DescriptorFamily::Dsift => "dSIFT",
            DescriptorFamily::Mliop => "mLIOP",
        }
    }

    pub fn parse(s: &str) -> Option<DescriptorFamily> {
        match s.to_ascii_lowercase().as_str() {
            "mlbp" => Some(DescriptorFamily::Mlbp),
            "mhog" => Some(DescriptorFamily::Mhog),
            "swmlbp" | "sw-mlbp" => Some(DescriptorFamily::SwMlbp),
            "mltp" => Some(DescriptorFamily::Mltp),
            "mlbphog" | "mlbp+mhog" => Some(DescriptorFamily::MlbpHog),
            "dsift" => Some(DescriptorFamily::Dsift),
            "mliop" => Some(DescriptorFamily::Mliop),
            _ => None,
        }
    }
}

/// Full parameterization of one descriptor/color-space combination.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorConfig {
    pub family: DescriptorFamily,
    pub space: ColorSpace,
    /// Pyramid depth; level 0 is the input image.
    pub pyramid_levels: usize,
    /// Cells per side per level (non-sliding families).
    pub grid: usize,
    /// Sliding window side in pixels (sw-mLBP only).
    pub sw_window: usize,
    /// Sliding window stride in pixels (sw-mLBP only).
    pub sw_stride: usize,
    /// Ternary dead zone in [0,1] gray units (mLTP only).
    pub ltp_threshold: f32,
    /// Circular samples per pixel (mLIOP only); bins per cell = neighbors!.
    pub liop_neighbors: usize,
    /// Unsigned orientation bins (mHOG only).
    pub hog_bins: usize,
}

impl DescriptorConfig {
    pub fn new(family: DescriptorFamily, space: ColorSpace) -> DescriptorConfig {
        DescriptorConfig {
            family,
            space,
            pyramid_levels: 3,
            grid: 4,
            sw_window: 64,
            sw_stride: 32,
            ltp_threshold: 5.0 / 255.0,
            liop_neighbors: 4,
            hog_bins: 9,
        }
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        if self.pyramid_levels == 0 || self.grid == 0 {
            return Err(DescriptorError::InvalidConfig(
                "pyramid_levels and grid must be >= 1".into(),
            ));
        }
        if self.sw_window == 0 || self.sw_stride == 0 {
            return Err(DescriptorError::InvalidConfig(
                "sw_window and sw_stride must be >= 1".into(),
            ));
        }
        if self.liop_neighbors < 2 || self.liop_neighbors > 6 {
            return Err(DescriptorError::InvalidConfig(
                "liop_neighbors must be in 2..=6".into(),
            ));
        }
        if self.hog_bins == 0 {
            return Err(DescriptorError::InvalidConfig("hog_bins must be >= 1".into()));
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint (FNV-1a over a canonical encoding);
    /// identifies a config across processes and cache files.
    pub fn fingerprint(&self) -> u64 {
        let canon = format!(
            "{}|{}|{}|{}|{}|{}|{}|{}|{}",
            self.family.name(),
            self.space.name(),
            self.pyramid_levels,
            self.grid,
            self.sw_window,
            self.sw_stride,
            self.ltp_threshold,
            self.liop_neighbors,
            self.hog_bins
        );
        let mut h: u64 = 0xcbf29ce484222325;
        for b in canon.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    fn bins_per_cell(&self, family: DescriptorFamily) -> usize {
        match family {
            DescriptorFamily::Mlbp | DescriptorFamily::SwMlbp => 256,
            DescriptorFamily::Mltp => 512,
            DescriptorFamily::Mhog => self.hog_bins,
            DescriptorFamily::Dsift => 128,
            DescriptorFamily::Mliop => factorial(self.liop_neighbors),
            DescriptorFamily::MlbpHog => unreachable!("composite family"),
        }
    }
}

/// A flat non-negative feature vector tagged with its config fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    pub values: Vec<f32>,
    pub fingerprint: u64,
}

impl DescriptorVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn factorial(n: usize) -> usize {
    (1..=n).product::<usize>().max(1)
}

/// One rectangular cell inside a plane.
#[derive(Debug, Clone, Copy)]
struct Cell {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

/// Grayscale view of one pyramid level of one channel.
struct Plane {
    data: Vec<f32>,
    w: usize,
    h: usize,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }
}

fn downsample(p: &Plane) -> Plane {
    let (w, h) = (p.w / 2, p.h / 2);
    let mut data = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let s = p.at(2 * x, 2 * y)
                + p.at(2 * x + 1, 2 * y)
                + p.at(2 * x, 2 * y + 1)
                + p.at(2 * x + 1, 2 * y + 1);
            data[y * w + x] = s * 0.25;
        }
    }
    Plane { data, w, h }
}

fn build_pyramid(plane: &[f32], w: usize, h: usize, levels: usize) -> Vec<Plane> {
    let mut out = Vec::with_capacity(levels);
    out.push(Plane {
        data: plane.to_vec(),
        w,
        h,
    });
    for _ in 1..levels {
        out.push(downsample(out.last().unwrap()));
    }
    out
}

fn grid_cells(w: usize, h: usize, grid: usize) -> Vec<Cell> {
    let (cw, ch) = (w / grid, h / grid);
    let mut cells = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        for gx in 0..grid {
            cells.push(Cell {
                x0: gx * cw,
                y0: gy * ch,
                w: cw,
                h: ch,
            });
        }
    }
    cells
}

fn sliding_cells(w: usize, h: usize, window: usize, stride: usize) -> Vec<Cell> {
    let win_w = window.min(w);
    let win_h = window.min(h);
    let mut cells = Vec::new();
    let mut y0 = 0;
    loop {
        let mut x0 = 0;
        loop {
            cells.push(Cell {
                x0,
                y0,
                w: win_w,
                h: win_h,
            });
            if x0 + win_w >= w {
                break;
            }
            x0 = (x0 + stride).min(w - win_w);
        }
        if y0 + win_h >= h {
            break;
        }
        y0 = (y0 + stride).min(h - win_h);
    }
    cells
}

/// Raw 8-neighbor LBP code of a 3x3 patch, row-major: bit i is set iff
/// the i-th neighbor, clockwise from top-left, is >= the center.
pub fn lbp_code(patch: &[[f32; 3]; 3]) -> u8 {
    let c = patch[1][1];
    // clockwise from top-left: TL, T, TR, R, BR, B, BL, L
    let n = [
        patch[0][0], patch[0][1], patch[0][2], patch[1][2], patch[2][2], patch[2][1], patch[2][0],
        patch[1][0],
    ];
    let mut code = 0u8;
    for (i, v) in n.iter().enumerate() {
        if *v >= c {
            code |= 1 << i;
        }
    }
    code
}

fn lbp_hist(p: &Plane, cell: Cell, hist: &mut [f64]) {
    for y in cell.y0 + 1..cell.y0 + cell.h - 1 {
        for x in cell.x0 + 1..cell.x0 + cell.w - 1 {
            let patch = [
                [p.at(x - 1, y - 1), p.at(x, y - 1), p.at(x + 1, y - 1)],
                [p.at(x - 1, y), p.at(x, y), p.at(x + 1, y)],
                [p.at(x - 1, y + 1), p.at(x, y + 1), p.at(x + 1, y + 1)],
            ];
            hist[lbp_code(&patch) as usize] += 1.0;
        }
    }
}

/// Ternary patterns split into an upper (neighbor >= center + t) and a
/// lower (neighbor <= center - t) 256-bin histogram; with t = 0 the upper
/// histogram equals the LBP histogram.
fn ltp_hist(p: &Plane, cell: Cell, t: f32, hist: &mut [f64]) {
    for y in cell.y0 + 1..cell.y0 + cell.h - 1 {
        for x in cell.x0 + 1..cell.x0 + cell.w - 1 {
            let c = p.at(x, y);
            let n = [
                p.at(x - 1, y - 1),
                p.at(x, y - 1),
                p.at(x + 1, y - 1),
                p.at(x + 1, y),
                p.at(x + 1, y + 1),
                p.at(x, y + 1),
                p.at(x - 1, y + 1),
                p.at(x - 1, y),
            ];
            let mut upper = 0usize;
            let mut lower = 0usize;
            for (i, v) in n.iter().enumerate() {
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
}

/// Central-difference gradient with clamping at the cell border.
#[inline]
fn cell_gradient(p: &Plane, cell: Cell, x: usize, y: usize) -> (f32, f32) {
    let xm = x.max(cell.x0 + 1) - 1;
    let xp = (x + 1).min(cell.x0 + cell.w - 1);
    let ym = y.max(cell.y0 + 1) - 1;
    let yp = (y + 1).min(cell.y0 + cell.h - 1);
    (p.at(xp, y) - p.at(xm, y), p.at(x, yp) - p.at(x, ym))
}

/// Magnitude-weighted unsigned-orientation histogram with linear bin
/// interpolation over [0, pi).
fn hog_hist(p: &Plane, cell: Cell, bins: usize, hist: &mut [f64]) {
    for y in cell.y0..cell.y0 + cell.h {
        for x in cell.x0..cell.x0 + cell.w {
            let (gx, gy) = cell_gradient(p, cell, x, y);
            let mag = (gx * gx + gy * gy).sqrt() as f64;
            if mag == 0.0 {
                continue;
            }
            let mut theta = (gy as f64).atan2(gx as f64);
            if theta < 0.0 {
                theta += std::f64::consts::PI;
            }
            if theta >= std::f64::consts::PI {
                theta -= std::f64::consts::PI;
            }
            let pos = theta / std::f64::consts::PI * bins as f64;
            let b0 = (pos.floor() as usize).min(bins - 1);
            let frac = pos - b0 as f64;
            hist[b0] += mag * (1.0 - frac);
            hist[(b0 + 1) % bins] += mag * frac;
        }
    }
}

/// Dense-SIFT cell: 4x4 subcells x 8 signed-orientation bins = 128 bins.
fn dsift_hist(p: &Plane, cell: Cell, hist: &mut [f64]) {
    const SUB: usize = 4;
    const OBINS: usize = 8;
    let tau = std::f64::consts::TAU;
    for y in cell.y0..cell.y0 + cell.h {
        for x in cell.x0..cell.x0 + cell.w {
            let (gx, gy) = cell_gradient(p, cell, x, y);
            let mag = (gx * gx + gy * gy).sqrt() as f64;
            if mag == 0.0 {
                continue;
            }
            let mut theta = (gy as f64).atan2(gx as f64);
            if theta < 0.0 {
                theta += tau;
            }
            let sx = ((x - cell.x0) * SUB / cell.w).min(SUB - 1);
            let sy = ((y - cell.y0) * SUB / cell.h).min(SUB - 1);
            let base = (sy * SUB + sx) * OBINS;
            let pos = theta / tau * OBINS as f64;
            let b0 = (pos.floor() as usize).min(OBINS - 1);
            let frac = pos - b0 as f64;
            hist[base + b0] += mag * (1.0 - frac);
            hist[base + (b0 + 1) % OBINS] += mag * frac;
        }
    }
}

#[inline]
fn bilinear(p: &Plane, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = (x0 + 1).min(p.w - 1);
    let y1 = (y0 + 1).min(p.h - 1);
    let v00 = p.at(x0, y0) as f64;
    let v10 = p.at(x1, y0) as f64;
    let v01 = p.at(x0, y1) as f64;
    let v11 = p.at(x1, y1) as f64;
    v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy
}

/// Lehmer-code index of the permutation that sorts `vals` ascending,
/// ties broken by sample index.
fn permutation_index(vals: &[f64]) -> usize {
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap().then(a.cmp(&b)));
    let mut index = 0usize;
    for i in 0..n {
        let smaller_after = order[i + 1..].iter().filter(|&&j| j < order[i]).count();
        index += smaller_after * factorial(n - 1 - i);
    }
    index
}

const LIOP_RADIUS: f64 = 3.0;

/// Local intensity-order patterns: circular samples at radius 3, ranked,
/// permutation index histogrammed per cell.
fn liop_hist(p: &Plane, cell: Cell, neighbors: usize, hist: &mut [f64]) {
    let r = LIOP_RADIUS.ceil() as usize;
    if cell.w <= 2 * r || cell.h <= 2 * r {
        return; // degenerate cell stays all-zero
    }
    let mut vals = vec![0f64; neighbors];
    for y in cell.y0 + r..cell.y0 + cell.h - r {
        for x in cell.x0 + r..cell.x0 + cell.w - r {
            for (i, v) in vals.iter_mut().enumerate() {
                let ang = std::f64::consts::TAU * i as f64 / neighbors as f64;
                *v = bilinear(
                    p,
                    x as f64 + LIOP_RADIUS * ang.cos(),
                    y as f64 + LIOP_RADIUS * ang.sin(),
                );
            }
            hist[permutation_index(&vals)] += 1.0;
        }
    }
}

/// L1-normalizes a block in place; an all-zero block is left untouched.
fn l1_normalize(block: &mut [f64]) {
    let sum: f64 = block.iter().sum();
    if sum > 0.0 {
        for v in block.iter_mut() {
            *v /= sum;
        }
    }
}

fn extract_simple_family(
    image: &PlanarImage,
    cfg: &DescriptorConfig,
    family: DescriptorFamily,
    out: &mut Vec<f32>,
) {
    let bins = cfg.bins_per_cell(family);
    for c in 0..image.channels() {
        let pyramid = build_pyramid(image.plane(c), image.width(), image.height(), cfg.pyramid_levels);
        for level in &pyramid {
            let cells = if family == DescriptorFamily::SwMlbp {
                sliding_cells(level.w, level.h, cfg.sw_window, cfg.sw_stride)
            } else {
                grid_cells(level.w, level.h, cfg.grid)
            };
            for cell in cells {
                let mut hist = vec![0f64; bins];
                match family {
                    DescriptorFamily::Mlbp | DescriptorFamily::SwMlbp => {
                        lbp_hist(level, cell, &mut hist);
                        l1_normalize(&mut hist);
                    }
                    DescriptorFamily::Mltp => {
                        ltp_hist(level, cell, cfg.ltp_threshold, &mut hist);
                        l1_normalize(&mut hist[..256]);
                        l1_normalize(&mut hist[256..]);
                    }
                    DescriptorFamily::Mhog => {
                        hog_hist(level, cell, cfg.hog_bins, &mut hist);
                        l1_normalize(&mut hist);
                    }
                    DescriptorFamily::Dsift => {
                        dsift_hist(level, cell, &mut hist);
                        l1_normalize(&mut hist);
                    }
                    DescriptorFamily::Mliop => {
                        liop_hist(level, cell, cfg.liop_neighbors, &mut hist);
                        l1_normalize(&mut hist);
                    }
                    DescriptorFamily::MlbpHog => unreachable!(),
                }
                out.extend(hist.iter().map(|v| *v as f32));
            }
        }
    }
}

fn check_size(image_w: usize, image_h: usize, cfg: &DescriptorConfig) -> Result<(), DescriptorError> {
    let too_small = DescriptorError::ImageTooSmall {
        w: image_w,
        h: image_h,
        levels: cfg.pyramid_levels,
        grid: cfg.grid,
    };
    let (mut w, mut h) = (image_w, image_h);
    for level in 0..cfg.pyramid_levels {
        if level > 0 {
            w /= 2;
            h /= 2;
        }
        let (cw, ch) = if cfg.family == DescriptorFamily::SwMlbp {
            (cfg.sw_window.min(w), cfg.sw_window.min(h))
        } else {
            (w / cfg.grid, h / cfg.grid)
        };
        if cw < 8 || ch < 8 {
            return Err(too_small);
        }
    }
    Ok(())
}

/// Extracts the configured descriptor for one image.
pub fn extract(image: &PlanarImage, cfg: &DescriptorConfig) -> Result<DescriptorVector, DescriptorError> {
    cfg.validate()?;
    if image.space() != cfg.space {
        return Err(DescriptorError::SpaceMismatch {
            expected: cfg.space,
            actual: image.space(),
        });
    }
    check_size(image.width(), image.height(), cfg)?;

    let mut values = Vec::new();
    match cfg.family {
        DescriptorFamily::MlbpHog => {
            extract_simple_family(image, cfg, DescriptorFamily::Mlbp, &mut values);
            extract_simple_family(image, cfg, DescriptorFamily::Mhog, &mut values);
        }
        family => extract_simple_family(image, cfg, family, &mut values),
    }
    Ok(DescriptorVector {
        values,
        fingerprint: cfg.fingerprint(),
    })
}

fn cells_per_level(cfg: &DescriptorConfig, w: usize, h: usize, level: usize) -> usize {
    if cfg.family == DescriptorFamily::SwMlbp {
        let (lw, lh) = (w >> level, h >> level);
        sliding_cells(lw, lh, cfg.sw_window, cfg.sw_stride).len()
    } else {
        cfg.grid * cfg.grid
    }
}

/// Length of any [`extract`] output for this config, channel count and
/// image size. The size matters only for the sliding-window family; all
/// grid families depend on config and channels alone.
pub fn vector_length(
    cfg: &DescriptorConfig,
    channels: usize,
    width: usize,
    height: usize,
) -> Result<usize, DescriptorError> {
    cfg.validate()?;
    check_size(width, height, cfg)?;
    let per_family = |family: DescriptorFamily| -> usize {
        let bins = cfg.bins_per_cell(family);
        (0..cfg.pyramid_levels)
            .map(|l| cells_per_level(cfg, width, height, l) * bins)
            .sum::<usize>()
            * channels
    };
    Ok(match cfg.family {
        DescriptorFamily::MlbpHog => per_family(DescriptorFamily::Mlbp) + per_family(DescriptorFamily::Mhog),
        family => per_family(family),
    })
}

const CACHE_MAGIC: &[u8; 4] = b"RVDC";

/// Writes a descriptor vector as little-endian float32 with a header
/// recording the config fingerprint and length.
pub fn save_vector(vec: &DescriptorVector, path: &Path) -> Result<(), DescriptorError> {
    let mut buf = Vec::with_capacity(16 + vec.values.len() * 4);
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&vec.fingerprint.to_le_bytes());
    buf.extend_from_slice(&(vec.values.len() as u32).to_le_bytes());
    for v in &vec.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads a vector written by [`save_vector`], checking the fingerprint.
pub fn load_vector(path: &Path, expected_fingerprint: u64) -> Result<DescriptorVector, DescriptorError> {
    let buf = fs::read(path)?;
    if buf.len() < 16 || &buf[0..4] != CACHE_MAGIC {
        return Err(DescriptorError::MalformedCache("bad magic".into()));
    }
    let fingerprint = u64::from_le_bytes(buf[4..12].try_into().unwrap());
    if fingerprint != expected_fingerprint {
        return Err(DescriptorError::FingerprintMismatch(fingerprint, expected_fingerprint));
    }
    let len = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + len * 4 {
        return Err(DescriptorError::MalformedCache("length mismatch".into()));
    }
    let values = buf[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DescriptorVector {
        values,
        fingerprint,
    })
}

/// Conventional cache file name for a frame under a given config.
pub fn cache_file_name(intervention_id: &str, frame_id: u32, fingerprint: u64) -> String {
    format!("{intervention_id}_{frame_id:05}_{fingerprint:016x}.desc")
}
