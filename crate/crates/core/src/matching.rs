//! Ranks radius-bounded candidate frames against the query frame by
//! chi-squared descriptor distance and selects the best view-point.

use std::collections::HashMap;

use crate::colorspace::convert;
use crate::dataset::{Frame, FrameRef};
use crate::descriptors::{extract, DescriptorConfig, DescriptorError, DescriptorVector};
use crate::localization::{relative_roll, rotate_image};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("no candidates within the search radius")]
    NoCandidates,
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

/// Ranked candidate list for one query.
#[derive(Debug, Clone)]
pub struct MatchReport {
    pub query: FrameRef,
    /// Ascending by distance; rank 1 (index 0) is the selected view-point.
    pub candidates: Vec<(FrameRef, f64)>,
    /// The EMNN, i.e. the positionally nearest candidate.
    pub em_baseline: FrameRef,
    pub config: DescriptorConfig,
    pub radius_mm: f64,
}

impl MatchReport {
    pub fn best(&self) -> &FrameRef {
        &self.candidates[0].0
    }

    /// Flattens into results-CSV rows; `score_of` may supply a per-candidate
    /// score (ground truth or expert).
    pub fn to_rows(
        &self,
        mut score_of: impl FnMut(&FrameRef) -> Option<u8>,
    ) -> Vec<crate::dataset::ResultRow> {
        self.candidates
            .iter()
            .enumerate()
            .map(|(i, (fr, dist))| crate::dataset::ResultRow {
                query: self.query.clone(),
                matched: fr.clone(),
                radius_mm: self.radius_mm,
                rank: i + 1,
                distance: *dist,
                score: score_of(fr),
            })
            .collect()
    }
}

/// Symmetric chi-squared histogram distance,
/// `0.5 * sum (a_i - b_i)^2 / (a_i + b_i)`, with zero-sum terms
/// contributing zero.
pub fn chi_squared(a: &DescriptorVector, b: &DescriptorVector) -> Result<f64, MatchError> {
    if a.len() != b.len() {
        return Err(DescriptorError::LengthMismatch(a.len(), b.len()).into());
    }
    if a.fingerprint != b.fingerprint {
        return Err(DescriptorError::FingerprintMismatch(a.fingerprint, b.fingerprint).into());
    }
    let mut acc = 0.0f64;
    for (&x, &y) in a.values.iter().zip(&b.values) {
        let sum = x as f64 + y as f64;
        if sum > 0.0 {
            let diff = x as f64 - y as f64;
            acc += diff * diff / sum;
        }
    }
    Ok(0.5 * acc)
}

/// Memoizes candidate descriptors by (intervention, frame, fingerprint,
/// 1-degree roll bucket) so radius and combination sweeps stay tractable.
#[derive(Default)]
pub struct DescriptorCache {
    map: HashMap<(String, u32, u64, i32), DescriptorVector>,
}

impl DescriptorCache {
    pub fn new() -> DescriptorCache {
        DescriptorCache::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn roll_bucket(angle: f64) -> i32 {
    (angle.to_degrees()).round() as i32
}

fn candidate_descriptor(
    frame: &Frame,
    intervention_id: &str,
    cfg: &DescriptorConfig,
    roll: f64,
    cache: Option<&mut DescriptorCache>,
) -> Result<DescriptorVector, DescriptorError> {
    let bucket = roll_bucket(roll);
    if let Some(cache) = cache {
        let key = (
            intervention_id.to_string(),
            frame.frame_id,
            cfg.fingerprint(),
            bucket,
        );
        if let Some(v) = cache.map.get(&key) {
            return Ok(v.clone());
        }
        let v = extract_with_roll(frame, cfg, bucket)?;
        cache.map.insert(key, v.clone());
        Ok(v)
    } else {
        extract_with_roll(frame, cfg, bucket)
    }
}

fn extract_with_roll(
    frame: &Frame,
    cfg: &DescriptorConfig,
    bucket: i32,
) -> Result<DescriptorVector, DescriptorError> {
    let image = if bucket == 0 {
        convert(&frame.image, cfg.space)
    } else {
        let rotated = rotate_image(&frame.image, (bucket as f64).to_radians());
        convert(&rotated, cfg.space)
    };
    extract(&image, cfg)
}

/// Extracts the query descriptor once, scores every candidate by
/// chi-squared distance (after optional roll correction from the 6-dof
/// poses) and returns candidates sorted ascending, ties by frame_id.
pub fn best_viewpoint(
    query: &Frame,
    query_intervention: &str,
    candidates: &[&Frame],
    candidate_intervention: &str,
    cfg: &DescriptorConfig,
    correct_roll: bool,
    radius_mm: f64,
    mut cache: Option<&mut DescriptorCache>,
) -> Result<MatchReport, MatchError> {
    if candidates.is_empty() {
        return Err(MatchError::NoCandidates);
    }
    let query_desc = extract(&convert(&query.image, cfg.space), cfg)?;

    let mut scored = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let roll = if correct_roll {
            relative_roll(&query.pose.orientation, &cand.pose.orientation)
        } else {
            0.0
        };
        // candidate rotated by the relative roll so its orientation matches
        // the query before extraction
        let desc = candidate_descriptor(cand, candidate_intervention, cfg, roll, cache.as_deref_mut())?;
        let dist = chi_squared(&query_desc, &desc)?;
        scored.push((
            FrameRef {
                intervention_id: candidate_intervention.to_string(),
                frame_id: cand.frame_id,
            },
            dist,
        ));
    }
    let em_baseline = FrameRef {
        intervention_id: candidate_intervention.to_string(),
        frame_id: candidates[0].frame_id,
    };
    scored.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap()
            .then(a.0.frame_id.cmp(&b.0.frame_id))
    });
    Ok(MatchReport {
        query: FrameRef {
            intervention_id: query_intervention.to_string(),
            frame_id: query.frame_id,
        },
        candidates: scored,
        em_baseline,
        config: cfg.clone(),
        radius_mm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorspace::ColorSpace;
    use crate::dataset::{Modality, Pose};
    use crate::descriptors::DescriptorFamily;
    use image::RgbImage;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec_of(values: Vec<f32>) -> DescriptorVector {
        DescriptorVector {
            values,
            fingerprint: 42,
        }
    }

    #[test]
    fn chi_squared_basics() {
        let a = vec_of(vec![0.2, 0.8]);
        assert_eq!(chi_squared(&a, &a).unwrap(), 0.0);

        let x = vec_of(vec![1.0, 0.0]);
        let y = vec_of(vec![0.0, 1.0]);
        assert_eq!(chi_squared(&x, &y).unwrap(), 1.0);

        let h1 = vec_of(vec![0.5, 0.5]);
        let h2 = vec_of(vec![0.25, 0.75]);
        // 0.5 * (0.25^2/0.75 + 0.25^2/1.25) = 0.0666..
        assert!((chi_squared(&h1, &h2).unwrap() - 0.0667).abs() < 1e-4);
    }

    #[test]
    fn chi_squared_symmetry_and_mismatch() {
        let a = vec_of(vec![0.1, 0.2, 0.7]);
        let b = vec_of(vec![0.3, 0.3, 0.4]);
        assert_eq!(
            chi_squared(&a, &b).unwrap(),
            chi_squared(&b, &a).unwrap()
        );

        let short = vec_of(vec![1.0]);
        assert!(chi_squared(&a, &short).is_err());

        let other_cfg = DescriptorVector {
            values: vec![0.1, 0.2, 0.7],
            fingerprint: 7,
        };
        assert!(chi_squared(&a, &other_cfg).is_err());
    }

    fn frame_with_image(frame_id: u32, img: RgbImage) -> Frame {
        Frame {
            frame_id,
            image: img,
            pose: Pose::new(
                Vector3::new(0.0, 0.0, frame_id as f64),
                [1.0, 0.0, 0.0, 0.0],
                frame_id as f64,
                frame_id,
            )
            .unwrap(),
            modality: Modality::Nbi,
            informative_label: None,
        }
    }

    fn random_image(seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = RgbImage::new(64, 64);
        for px in img.pixels_mut() {
            px.0 = [rng.random(), rng.random(), rng.random()];
        }
        img
    }

    fn test_cfg() -> DescriptorConfig {
        DescriptorConfig {
            pyramid_levels: 1,
            ..DescriptorConfig::new(DescriptorFamily::Mlbp, ColorSpace::Gray)
        }
    }

    #[test]
    fn identical_image_ranks_first_with_zero_distance() {
        let img = random_image(1);
        let query = frame_with_image(0, img.clone());
        let same = frame_with_image(10, img);
        let other = frame_with_image(11, random_image(2));
        let report = best_viewpoint(
            &query,
            "A",
            &[&other, &same],
            "B",
            &test_cfg(),
            false,
            20.0,
            None,
        )
        .unwrap();
        assert_eq!(report.best().frame_id, 10);
        assert_eq!(report.candidates[0].1, 0.0);
        // distances non-decreasing
        assert!(report.candidates[0].1 <= report.candidates[1].1);
    }

    #[test]
    fn single_candidate_is_rank_one() {
        let query = frame_with_image(0, random_image(3));
        let only = frame_with_image(5, random_image(4));
        let report =
            best_viewpoint(&query, "A", &[&only], "B", &test_cfg(), false, 10.0, None).unwrap();
        assert_eq!(report.best().frame_id, 5);
        assert_eq!(report.em_baseline.frame_id, 5);
    }

    #[test]
    fn empty_candidates_is_distinct_outcome() {
        let query = frame_with_image(0, random_image(5));
        let res = best_viewpoint(&query, "A", &[], "B", &test_cfg(), false, 10.0, None);
        assert!(matches!(res, Err(MatchError::NoCandidates)));
    }

    #[test]
    fn ranking_invariant_under_candidate_permutation() {
        let query = frame_with_image(0, random_image(6));
        let c1 = frame_with_image(1, random_image(7));
        let c2 = frame_with_image(2, random_image(8));
        let c3 = frame_with_image(3, random_image(9));
        let cfg = test_cfg();
        let r1 = best_viewpoint(&query, "A", &[&c1, &c2, &c3], "B", &cfg, false, 10.0, None)
            .unwrap();
        let r2 = best_viewpoint(&query, "A", &[&c3, &c1, &c2], "B", &cfg, false, 10.0, None)
            .unwrap();
        let ids1: Vec<u32> = r1.candidates.iter().map(|(f, _)| f.frame_id).collect();
        let ids2: Vec<u32> = r2.candidates.iter().map(|(f, _)| f.frame_id).collect();
        assert_eq!(ids1, ids2);
    }

    #[test]
    fn cache_hits_reuse_descriptors() {
        let query = frame_with_image(0, random_image(10));
        let cand = frame_with_image(1, random_image(11));
        let cfg = test_cfg();
        let mut cache = DescriptorCache::new();
        let a = best_viewpoint(&query, "A", &[&cand], "B", &cfg, false, 10.0, Some(&mut cache))
            .unwrap();
        assert_eq!(cache.len(), 1);
        let b = best_viewpoint(&query, "A", &[&cand], "B", &cfg, false, 10.0, Some(&mut cache))
            .unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(a.candidates[0].1, b.candidates[0].1);
    }

    #[test]
    fn report_rows_carry_ranks_and_scores() {
        let query = frame_with_image(0, random_image(12));
        let c1 = frame_with_image(1, random_image(13));
        let c2 = frame_with_image(2, random_image(14));
        let report = best_viewpoint(&query, "A", &[&c1, &c2], "B", &test_cfg(), false, 15.0, None)
            .unwrap();
        let rows = report.to_rows(|fr| Some(if fr.frame_id == 1 { 2 } else { 0 }));
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].rank, 1);
        assert_eq!(rows[1].rank, 2);
        assert!(rows[0].distance <= rows[1].distance);
    }
}
