//! Run configuration: every tunable default in one place, loadable from a
//! UTF-8 `key = value` file (`#` starts a comment; lists are
//! comma-separated).

use crate::colorspace::ColorSpace;
use crate::descriptors::{DescriptorConfig, DescriptorFamily};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("line {0}: expected 'key = value'")]
    Syntax(usize),
    #[error("line {line}: bad value for {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("unknown key '{0}' at line {1}")]
    UnknownKey(String, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // descriptors
    pub pyramid_levels: usize,
    pub grid: usize,
    pub sw_window: usize,
    pub sw_stride: usize,
    pub ltp_threshold: f32,
    pub liop_neighbors: usize,
    pub hog_bins: usize,
    // search / matching
    pub radii_mm: Vec<f64>,
    pub correct_roll: bool,
    pub n_queries: usize,
    // synthetic world
    pub tube_length_mm: f64,
    pub tube_radius_mm: f64,
    pub n_frames: usize,
    pub image_size: u32,
    pub em_noise_sigma_mm: f64,
    pub ui_fraction: f64,
    pub score_one_band_mm: f64,
    pub roll_lambda_mm_per_rad: f64,
    // filter training
    pub svm_c_grid: Vec<f64>,
    pub svm_gamma_grid: Vec<f64>,
    pub representative_fraction: f64,
    pub pca_variance: f64,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            pyramid_levels: 3,
            grid: 4,
            sw_window: 64,
            sw_stride: 32,
            ltp_threshold: 5.0 / 255.0,
            liop_neighbors: 4,
            hog_bins: 9,
            radii_mm: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0],
            correct_roll: true,
            n_queries: 9,
            tube_length_mm: 250.0,
            tube_radius_mm: 10.0,
            n_frames: 120,
            image_size: 128,
            em_noise_sigma_mm: 5.0,
            ui_fraction: 0.15,
            score_one_band_mm: 5.0,
            roll_lambda_mm_per_rad: 2.0,
            svm_c_grid: vec![1.0, 10.0, 100.0],
            svm_gamma_grid: vec![0.01, 0.1, 1.0],
            representative_fraction: 0.25,
            pca_variance: 0.95,
        }
    }
}

impl Config {
    /// Builds the descriptor config for one family/color-space combination
    /// from the shared defaults.
    pub fn descriptor(&self, family: DescriptorFamily, space: ColorSpace) -> DescriptorConfig {
        DescriptorConfig {
            family,
            space,
            pyramid_levels: self.pyramid_levels,
            grid: self.grid,
            sw_window: self.sw_window,
            sw_stride: self.sw_stride,
            ltp_threshold: self.ltp_threshold,
            liop_neighbors: self.liop_neighbors,
            hog_bins: self.hog_bins,
        }
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text =
            fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax(line_no))?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value, line_no)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn scalar<T: std::str::FromStr>(
            key: &str,
            value: &str,
            line: usize,
        ) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                line,
                key: key.to_string(),
                reason: e.to_string(),
            })
        }
        fn list(key: &str, value: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
            value
                .split(',')
                .map(|v| scalar::<f64>(key, v.trim(), line))
                .collect()
        }
        match key {
            "pyramid_levels" => self.pyramid_levels = scalar(key, value, line)?,
            "grid" => self.grid = scalar(key, value, line)?,
            "sw_window" => self.sw_window = scalar(key, value, line)?,
            "sw_stride" => self.sw_stride = scalar(key, value, line)?,
            "ltp_threshold" => self.ltp_threshold = scalar(key, value, line)?,
            "liop_neighbors" => self.liop_neighbors = scalar(key, value, line)?,
            "hog_bins" => self.hog_bins = scalar(key, value, line)?,
            "radii_mm" => self.radii_mm = list(key, value, line)?,
            "correct_roll" => self.correct_roll = scalar(key, value, line)?,
            "n_queries" => self.n_queries = scalar(key, value, line)?,
            "tube_length_mm" => self.tube_length_mm = scalar(key, value, line)?,
            "tube_radius_mm" => self.tube_radius_mm = scalar(key, value, line)?,
            "n_frames" => self.n_frames = scalar(key, value, line)?,
            "image_size" => self.image_size = scalar(key, value, line)?,
            "em_noise_sigma_mm" => self.em_noise_sigma_mm = scalar(key, value, line)?,
            "ui_fraction" => self.ui_fraction = scalar(key, value, line)?,
            "score_one_band_mm" => self.score_one_band_mm = scalar(key, value, line)?,
            "roll_lambda_mm_per_rad" => self.roll_lambda_mm_per_rad = scalar(key, value, line)?,
            "svm_c_grid" => self.svm_c_grid = list(key, value, line)?,
            "svm_gamma_grid" => self.svm_gamma_grid = list(key, value, line)?,
            "representative_fraction" => self.representative_fraction = scalar(key, value, line)?,
            "pca_variance" => self.pca_variance = scalar(key, value, line)?,
            other => return Err(ConfigError::UnknownKey(other.to_string(), line)),
        }
        Ok(())
    }
}
