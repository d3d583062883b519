//! Evaluation statistics and sweeps: score distributions and averages per
//! descriptor/color-space combination, radius sweeps, and before/after
//! filtering comparisons, all emitted as plot-ready CSV.

use crate::colorspace::ColorSpace;
use crate::config::Config;
use crate::dataset::{Frame, FrameRef, Intervention, ScoreRecord};
use crate::descriptors::{DescriptorConfig, DescriptorFamily};
use crate::localization::{
    knn_within_radius, register_interventions, transform_intervention, RegistrationError,
    SearchConfig,
};
use crate::matching::{best_viewpoint, DescriptorCache, MatchError};
use crate::synthgen::GroundTruth;
use crate::uifilter::{filter_frames, filter_frames_by_label, FilterError, FilterModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no score records to aggregate")]
    Empty,
    #[error("no informative query frames available")]
    NoQueries,
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Score statistics for one descriptor/color-space combination (or the
/// EM-only baseline).
#[derive(Debug, Clone, PartialEq)]
pub struct ComboStats {
    /// `None` marks the EM-Based baseline row.
    pub family: Option<DescriptorFamily>,
    pub space_tag: String,
    pub avg_score: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    pub pct_zeros: f64,
    pub pct_ones: f64,
    pub pct_twos: f64,
    pub n: usize,
}

impl ComboStats {
    pub fn label(&self) -> String {
        match self.family {
            Some(f) => format!("{} {}", f.name(), self.space_tag),
            None => self.space_tag.clone(),
        }
    }
}

/// Exact mean, sample standard deviation and class percentages of a score
/// list; the combination tags are filled in by the caller.
pub fn compute_stats(records: &[ScoreRecord]) -> Result<ComboStats, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let n = records.len();
    let mut counts = [0usize; 3];
    for r in records {
        counts[r.score as usize] += 1;
    }
    // computed from the class counts, so the result is exactly
    // permutation-invariant (no float summation-order effects)
    let mean = (counts[1] as f64 + 2.0 * counts[2] as f64) / n as f64;
    let var = if n > 1 {
        (0..3usize)
            .map(|k| counts[k] as f64 * (k as f64 - mean).powi(2))
            .sum::<f64>()
            / (n as f64 - 1.0)
    } else {
        0.0
    };
    let pct = |c: usize| 100.0 * c as f64 / n as f64;
    Ok(ComboStats {
        family: None,
        space_tag: String::new(),
        avg_score: mean,
        std_dev: var.sqrt(),
        pct_zeros: pct(counts[0]),
        pct_ones: pct(counts[1]),
        pct_twos: pct(counts[2]),
        n,
    })
}

/// Percentage of queries whose selected match earned score 2.
pub fn retrieval_rate(records: &[ScoreRecord]) -> Result<f64, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Empty);
    }
    let twos = records.iter().filter(|r| r.score == 2).count();
    Ok(100.0 * twos as f64 / records.len() as f64)
}

/// How candidate frames are screened before matching.
pub enum FilterMode<'a> {
    /// No screening.
    Off,
    /// Drop frames whose ground-truth label is uninformative (synthetic
    /// oracle).
    Oracle,
    /// Drop frames the trained model predicts uninformative.
    Model(&'a FilterModel, &'a DescriptorConfig),
}

/// How the match is selected among the radius-bounded candidates.
pub enum Selector<'a> {
    /// Positionally nearest candidate (the EMNN), no image analysis.
    EmOnly,
    /// Chi-squared descriptor ranking.
    ImageBased(&'a DescriptorConfig),
}

/// A registered intervention pair plus the synthetic scoring oracle.
pub struct EvalPair {
    pub a: Intervention,
    /// Intervention B with poses carried into A's tracker space.
    pub b_in_a: Intervention,
    pub ground_truth: GroundTruth,
}

impl EvalPair {
    /// Registers B onto A from the shared landmarks.
    pub fn new(
        a: Intervention,
        b: Intervention,
        ground_truth: GroundTruth,
    ) -> Result<EvalPair, HarnessError> {
        let transform = register_interventions(&b, &a)?;
        let b_in_a = transform_intervention(&b, &transform);
        Ok(EvalPair {
            a,
            b_in_a,
            ground_truth,
        })
    }
}

/// Picks `n` query frames from A at equally spaced ground-truth depths over
/// the covered segment, restricted to informative frames.
pub fn select_queries<'a>(pair: &'a EvalPair, n: usize) -> Result<Vec<&'a Frame>, HarnessError> {
    assert!(n >= 2, "need at least two query locations");
    let informative: Vec<&Frame> = pair
        .a
        .frames
        .iter()
        .filter(|f| pair.ground_truth.a[&f.frame_id].informative)
        .collect();
    if informative.is_empty() {
        return Err(HarnessError::NoQueries);
    }
    let depth_of = |f: &Frame| pair.ground_truth.a[&f.frame_id].depth_mm;
    let min = informative.iter().map(|f| depth_of(f)).fold(f64::INFINITY, f64::min);
    let max = informative
        .iter()
        .map(|f| depth_of(f))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut queries = Vec::with_capacity(n);
    for i in 0..n {
        let target = min + (max - min) * i as f64 / (n as f64 - 1.0);
        let best = informative
            .iter()
            .min_by(|x, y| {
                (depth_of(x) - target)
                    .abs()
                    .partial_cmp(&(depth_of(y) - target).abs())
                    .unwrap()
                    .then(x.frame_id.cmp(&y.frame_id))
            })
            .unwrap();
        queries.push(*best);
    }
    queries.dedup_by_key(|f| f.frame_id);
    Ok(queries)
}

fn screen<'a>(
    candidates: Vec<&'a Frame>,
    filter: &FilterMode,
) -> Result<Vec<&'a Frame>, HarnessError> {
    Ok(match filter {
        FilterMode::Off => candidates,
        FilterMode::Oracle => filter_frames_by_label(&candidates),
        FilterMode::Model(model, cfg) => filter_frames(&candidates, model, cfg)?,
    })
}

/// Runs gross-localization + selection for each query and scores the chosen
/// match against the ground truth. Queries with an empty (post-filter)
/// candidate set fall back to the globally nearest surviving frame so every
/// query yields exactly one record.
pub fn run_queries(
    pair: &EvalPair,
    queries: &[&Frame],
    radius_mm: f64,
    selector: &Selector,
    filter: &FilterMode,
    cache: Option<&mut DescriptorCache>,
) -> Result<Vec<ScoreRecord>, HarnessError> {
    let mut cache = cache;
    let mut records = Vec::with_capacity(queries.len());
    for query in queries {
        let hits = knn_within_radius(
            &query.pose.position,
            &pair.b_in_a,
            &SearchConfig::new(radius_mm),
        );
        let mut candidates: Vec<&Frame> = hits.iter().map(|(f, _)| *f).collect();
        candidates = screen(candidates, filter)?;
        if candidates.is_empty() {
            // nothing survived in radius: take the nearest surviving frame
            // overall so the query still counts against the denominator
            let all: Vec<&Frame> = pair.b_in_a.frames.iter().collect();
            let surviving = screen(all, filter)?;
            let nearest = surviving
                .into_iter()
                .min_by(|x, y| {
                    let dx = (x.pose.position - query.pose.position).norm();
                    let dy = (y.pose.position - query.pose.position).norm();
                    dx.partial_cmp(&dy).unwrap().then(x.frame_id.cmp(&y.frame_id))
                })
                .ok_or(HarnessError::NoQueries)?;
            candidates = vec![nearest];
        }
        let matched_id = match selector {
            Selector::EmOnly => candidates[0].frame_id,
            Selector::ImageBased(cfg) => {
                let report = best_viewpoint(
                    query,
                    &pair.a.intervention_id,
                    &candidates,
                    &pair.b_in_a.intervention_id,
                    cfg,
                    true,
                    radius_mm,
                    cache.as_deref_mut(),
                )?;
                report.best().frame_id
            }
        };
        let score = pair.ground_truth.score(query.frame_id, matched_id);
        records.push(ScoreRecord::new(
            FrameRef {
                intervention_id: pair.a.intervention_id.clone(),
                frame_id: query.frame_id,
            },
            FrameRef {
                intervention_id: pair.b_in_a.intervention_id.clone(),
                frame_id: matched_id,
            },
            score,
            radius_mm,
        ));
    }
    Ok(records)
}

/// Per-radius statistics for one selector/filter setting; radii must be
/// ascending.
pub fn sweep_radius(
    pair: &EvalPair,
    radii_mm: &[f64],
    cfg: &Config,
    selector: &Selector,
    filter: &FilterMode,
) -> Result<Vec<(f64, ComboStats)>, HarnessError> {
    assert!(
        radii_mm.windows(2).all(|w| w[0] < w[1]),
        "radii must be strictly ascending"
    );
    let queries = select_queries(pair, cfg.n_queries)?;
    let mut cache = DescriptorCache::new();
    let mut out = Vec::with_capacity(radii_mm.len());
    for &radius in radii_mm {
        let records = run_queries(pair, &queries, radius, selector, filter, Some(&mut cache))?;
        let mut stats = compute_stats(&records)?;
        if let Selector::ImageBased(dcfg) = selector {
            stats.family = Some(dcfg.family);
            stats.space_tag = dcfg.space.name().to_string();
        } else {
            stats.space_tag = "EM-Based".to_string();
        }
        out.push((radius, stats));
    }
    Ok(out)
}

/// One ComboStats per requested (family, space) combination at a fixed
/// radius, plus the EM-Based baseline row, sorted descending by average
/// score (ties by label for determinism).
pub fn sweep_combos(
    pair: &EvalPair,
    combos: &[(DescriptorFamily, ColorSpace)],
    radius_mm: f64,
    cfg: &Config,
    filter: &FilterMode,
) -> Result<Vec<ComboStats>, HarnessError> {
    let queries = select_queries(pair, cfg.n_queries)?;
    let mut cache = DescriptorCache::new();
    let mut table = Vec::with_capacity(combos.len() + 1);
    for &(family, space) in combos {
        let dcfg = cfg.descriptor(family, space);
        let records = run_queries(
            pair,
            &queries,
            radius_mm,
            &Selector::ImageBased(&dcfg),
            filter,
            Some(&mut cache),
        )?;
        let mut stats = compute_stats(&records)?;
        stats.family = Some(family);
        stats.space_tag = space.name().to_string();
        table.push(stats);
    }
    let em_records = run_queries(pair, &queries, radius_mm, &Selector::EmOnly, filter, None)?;
    let mut em_stats = compute_stats(&em_records)?;
    em_stats.space_tag = "EM-Based".to_string();
    table.push(em_stats);
    table.sort_by(|a, b| {
        b.avg_score
            .partial_cmp(&a.avg_score)
            .unwrap()
            .then(a.label().cmp(&b.label()))
    });
    Ok(table)
}

/// Fixed header of the statistics CSV.
pub const STATS_HEADER: &str = "combo,avg_score,std_dev,pct_zeros,pct_ones,pct_twos,n";

/// Serializes a statistics table as CSV (6-decimal fixed point, so repeated
/// deterministic runs emit byte-identical files).
pub fn stats_to_csv(rows: &[ComboStats]) -> String {
    let mut out = String::from(STATS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.label(),
            r.avg_score,
            r.std_dev,
            r.pct_zeros,
            r.pct_ones,
            r.pct_twos,
            r.n
        ));
    }
    out
}

/// Fixed header of the radius-sweep CSV.
pub const RADIUS_HEADER: &str = "radius_mm,combo,avg_score,std_dev,pct_zeros,pct_ones,pct_twos,n";

pub fn radius_sweep_to_csv(rows: &[(f64, ComboStats)]) -> String {
    let mut out = String::from(RADIUS_HEADER);
    out.push('\n');
    for (radius, r) in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            radius,
            r.label(),
            r.avg_score,
            r.std_dev,
            r.pct_zeros,
            r.pct_ones,
            r.pct_twos,
            r.n
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Modality;
    use crate::synthgen::{generate_pair, SynthParams};

    fn records_from_counts(zeros: usize, ones: usize, twos: usize) -> Vec<ScoreRecord> {
        let mut out = Vec::new();
        for (score, count) in [(0u8, zeros), (1, ones), (2, twos)] {
            for i in 0..count {
                out.push(ScoreRecord::new(
                    FrameRef {
                        intervention_id: "q".into(),
                        frame_id: (score as u32) * 1000 + i as u32,
                    },
                    FrameRef {
                        intervention_id: "m".into(),
                        frame_id: 0,
                    },
                    score,
                    20.0,
                ));
            }
        }
        out
    }

    #[test]
    fn stats_match_reference_rows() {
        // 5 zeros, 8 ones, 47 twos out of 60
        let s = compute_stats(&records_from_counts(5, 8, 47)).unwrap();
        assert!((s.avg_score - 1.700).abs() < 1e-3);
        assert!((s.std_dev - 0.619).abs() < 1e-3);
        assert!((s.pct_zeros - 8.33).abs() < 0.01);
        assert!((s.pct_ones - 13.33).abs() < 0.01);
        assert!((s.pct_twos - 78.33).abs() < 0.01);

        // 16 zeros, 19 ones, 25 twos out of 60
        let s = compute_stats(&records_from_counts(16, 19, 25)).unwrap();
        assert!((s.avg_score - 1.150).abs() < 1e-3);
        assert!((s.pct_zeros - 26.67).abs() < 0.01);
        assert!((s.pct_ones - 31.67).abs() < 0.01);
        assert!((s.pct_twos - 41.67).abs() < 0.01);
    }

    #[test]
    fn stats_invariants_hold() {
        let s = compute_stats(&records_from_counts(3, 11, 21)).unwrap();
        assert!((s.pct_zeros + s.pct_ones + s.pct_twos - 100.0).abs() < 0.01);
        assert!((s.avg_score - (s.pct_ones + 2.0 * s.pct_twos) / 100.0).abs() < 1e-6);
    }

    #[test]
    fn all_twos_and_empty_edge_cases() {
        let s = compute_stats(&records_from_counts(0, 0, 7)).unwrap();
        assert_eq!(s.avg_score, 2.0);
        assert_eq!(s.std_dev, 0.0);
        assert_eq!(s.pct_twos, 100.0);
        assert!(matches!(compute_stats(&[]), Err(HarnessError::Empty)));
    }

    #[test]
    fn stats_permutation_invariant() {
        let mut records = records_from_counts(4, 9, 17);
        let a = compute_stats(&records).unwrap();
        records.reverse();
        records.swap(0, 10);
        let b = compute_stats(&records).unwrap();
        assert_eq!(a.avg_score, b.avg_score);
        assert_eq!(a.std_dev, b.std_dev);
        assert_eq!(a.pct_ones, b.pct_ones);
    }

    #[test]
    fn retrieval_rate_values() {
        assert_eq!(
            retrieval_rate(&records_from_counts(0, 0, 5)).unwrap(),
            100.0
        );
        let r = retrieval_rate(&records_from_counts(5, 8, 47)).unwrap();
        assert!((r - 78.33).abs() < 0.01);
        let r = retrieval_rate(&records_from_counts(16, 19, 25)).unwrap();
        assert!((r - 41.67).abs() < 0.01);
        assert!(retrieval_rate(&[]).is_err());
    }

    fn quick_pair(seed: u64, noise: f64, ui: f64) -> EvalPair {
        let params = SynthParams {
            seed,
            modality: Modality::Nbi,
            n_frames: 40,
            image_size: 64,
            tube_length_mm: 250.0,
            tube_radius_mm: 10.0,
            em_noise_sigma_mm: noise,
            ui_fraction: ui,
            score_one_band_mm: 5.0,
            roll_lambda_mm_per_rad: 2.0,
        };
        let (a, b, gt) = generate_pair(&params);
        EvalPair::new(a, b, gt).unwrap()
    }

    #[test]
    fn noiseless_em_sweep_scores_two_everywhere() {
        let pair = quick_pair(42, 0.0, 0.0);
        let cfg = Config {
            n_queries: 5,
            ..Config::default()
        };
        let rows = sweep_radius(
            &pair,
            &[10.0, 40.0, 70.0],
            &cfg,
            &Selector::EmOnly,
            &FilterMode::Off,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        for (radius, stats) in &rows {
            assert_eq!(stats.avg_score, 2.0, "radius {radius}");
        }
    }

    #[test]
    fn oracle_filter_never_returns_uninformative_match() {
        let pair = quick_pair(7, 5.0, 0.3);
        let queries = select_queries(&pair, 6).unwrap();
        let records = run_queries(
            &pair,
            &queries,
            30.0,
            &Selector::EmOnly,
            &FilterMode::Oracle,
            None,
        )
        .unwrap();
        for r in &records {
            assert!(
                pair.ground_truth.b[&r.matched.frame_id].informative,
                "frame {} is uninformative",
                r.matched.frame_id
            );
        }
    }

    #[test]
    fn combo_table_has_em_row_and_is_sorted() {
        let pair = quick_pair(3, 0.0, 0.0);
        let cfg = Config {
            n_queries: 4,
            pyramid_levels: 1,
            ..Config::default()
        };
        let combos = [(DescriptorFamily::Mlbp, ColorSpace::Gray)];
        let table = sweep_combos(&pair, &combos, 20.0, &cfg, &FilterMode::Off).unwrap();
        assert_eq!(table.len(), 2);
        assert!(table.iter().any(|r| r.space_tag == "EM-Based"));
        assert!(table[0].avg_score >= table[1].avg_score);
    }

    #[test]
    fn csv_emission_is_stable() {
        let rows = vec![ComboStats {
            family: Some(DescriptorFamily::Mlbp),
            space_tag: "hsv".into(),
            avg_score: 1.7,
            std_dev: 0.619,
            pct_zeros: 8.33,
            pct_ones: 13.33,
            pct_twos: 78.33,
            n: 60,
        }];
        let csv = stats_to_csv(&rows);
        assert!(csv.starts_with(STATS_HEADER));
        assert!(csv.contains("mLBP hsv,1.700000,0.619000"));
        assert_eq!(csv, stats_to_csv(&rows));
    }
}
