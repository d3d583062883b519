//! Command-line driver: synthetic data generation, descriptor extraction,
//! filter training/application, single-query matching, radius and
//! combination sweeps, and score statistics — everything emitted as CSV.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use revisit_core::colorspace::ColorSpace;
use revisit_core::config::Config;
use revisit_core::dataset::{
    load_intervention, load_results, save_intervention, save_results, Intervention, Modality,
};
use revisit_core::descriptors::{
    cache_file_name, extract, save_vector, DescriptorConfig, DescriptorFamily,
};
use revisit_core::harness::{
    compute_stats, radius_sweep_to_csv, retrieval_rate, stats_to_csv, sweep_combos, sweep_radius,
    EvalPair, FilterMode, Selector,
};
use revisit_core::matching::best_viewpoint;
use revisit_core::synthgen::{generate_pair, GroundTruth, SynthParams};
use revisit_core::uifilter::{
    cross_validate, frame_feature, load_model, save_model, FilterModel, LabeledIntervention,
    PcaTarget,
};

#[derive(Parser)]
#[command(
    name = "revisit",
    version,
    about = "Position-constrained best view-point retrieval for endoscopic surveillance"
)]
struct Cli {
    /// Seed for synthetic data and model training.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Configuration file (UTF-8 `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for generated files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalityArg {
    Nbi,
    Wl,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Modality {
        match m {
            ModalityArg::Nbi => Modality::Nbi,
            ModalityArg::Wl => Modality::Wl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum FilterArg {
    /// No candidate screening.
    Off,
    /// Screen by ground-truth labels (synthetic data only).
    Oracle,
    /// Screen with a trained model (`--model`).
    Model,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic intervention pair with ground truth.
    Generate {
        #[arg(long, value_enum, default_value_t = ModalityArg::Nbi)]
        modality: ModalityArg,
    },
    /// Extract descriptors for every frame of a manifest into binary cache files.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "mLBP")]
        family: String,
        #[arg(long, default_value = "hsv")]
        space: String,
    },
    /// Train the uninformative-frame filter with leave-one-intervention-out model selection.
    FilterTrain {
        /// Number of synthetic interventions to train on.
        #[arg(long, default_value_t = 6)]
        interventions: usize,
        #[arg(long, value_enum, default_value_t = ModalityArg::Nbi)]
        modality: ModalityArg,
    },
    /// Apply a trained filter to a manifest, emitting per-frame predictions.
    FilterApply {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Match one query frame of the synthetic pair and emit the ranked candidates.
    Match {
        #[arg(long)]
        query_frame: u32,
        #[arg(long, default_value_t = 20.0)]
        radius: f64,
        #[arg(long, default_value = "mLBP")]
        family: String,
        #[arg(long, default_value = "hsv")]
        space: String,
        #[arg(long, value_enum, default_value_t = ModalityArg::Nbi)]
        modality: ModalityArg,
    },
    /// Sweep the search radius for one descriptor/color-space combination.
    SweepRadius {
        #[arg(long, default_value = "mLBP")]
        family: String,
        #[arg(long, default_value = "hsv")]
        space: String,
        #[arg(long, value_enum, default_value_t = FilterArg::Off)]
        filter: FilterArg,
        /// Trained filter model (required with `--filter model`).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModalityArg::Nbi)]
        modality: ModalityArg,
        /// Also sweep the EM-only baseline.
        #[arg(long, default_value_t = true)]
        baseline: bool,
    },
    /// Evaluate every descriptor/color-space combination at a fixed radius.
    SweepCombos {
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, value_enum, default_value_t = FilterArg::Off)]
        filter: FilterArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModalityArg::Nbi)]
        modality: ModalityArg,
    },
    /// Compute score statistics from a scored results CSV.
    Stats {
        #[arg(long)]
        scores: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn parse_family(s: &str) -> Result<DescriptorFamily> {
    DescriptorFamily::parse(s).with_context(|| {
        let names: Vec<&str> = DescriptorFamily::ALL.iter().map(|f| f.name()).collect();
        format!("unknown descriptor family '{s}'; expected one of {names:?}")
    })
}

fn parse_space(s: &str) -> Result<ColorSpace> {
    ColorSpace::parse(s).with_context(|| {
        let names: Vec<&str> = ColorSpace::ALL.iter().map(|c| c.name()).collect();
        format!("unknown color space '{s}'; expected one of {names:?}")
    })
}

/// Descriptor configuration used for filter features: single-scale mLBP on
/// grayscale keeps the feature dimension moderate.
fn filter_descriptor(cfg: &Config) -> DescriptorConfig {
    DescriptorConfig {
        pyramid_levels: 1,
        ..cfg.descriptor(DescriptorFamily::Mlbp, ColorSpace::Gray)
    }
}

fn synth_pair(cfg: &Config, seed: u64, modality: Modality) -> (Intervention, Intervention, GroundTruth) {
    generate_pair(&SynthParams::from_config(cfg, seed, modality))
}

fn write_ground_truth(gt: &GroundTruth, seed: u64, out: &Path) -> Result<PathBuf> {
    let path = out.join(format!("ground_truth_{seed}.csv"));
    let mut text = String::from("a_frame,best_b_frame,a_depth_mm,a_roll_rad,a_informative\n");
    for (a_frame, truth) in &gt.a {
        let best = gt
            .best_b_for_a
            .get(a_frame)
            .map(|b| b.to_string())
            .unwrap_or_default();
        text.push_str(&format!(
            "{},{},{:.6},{:.6},{}\n",
            a_frame, best, truth.depth_mm, truth.roll_rad, truth.informative
        ));
    }
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn filter_mode<'a>(
    filter: FilterArg,
    model: &'a Option<(FilterModel, DescriptorConfig)>,
) -> Result<FilterMode<'a>> {
    Ok(match filter {
        FilterArg::Off => FilterMode::Off,
        FilterArg::Oracle => FilterMode::Oracle,
        FilterArg::Model => {
            let (m, cfg) = model
                .as_ref()
                .context("--filter model requires --model <file>")?;
            FilterMode::Model(m, cfg)
        }
    })
}

fn load_model_arg(
    path: &Option<PathBuf>,
    cfg: &Config,
) -> Result<Option<(FilterModel, DescriptorConfig)>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let dcfg = filter_descriptor(cfg);
            let model =
                load_model(p, &dcfg).with_context(|| format!("loading model {}", p.display()))?;
            Ok(Some((model, dcfg)))
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config)?;
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;

    match cli.command {
        Command::Generate { modality } => {
            let (a, b, gt) = synth_pair(&cfg, cli.seed, modality.into());
            let ma = save_intervention(&a, &cli.out)?;
            let mb = save_intervention(&b, &cli.out)?;
            let gt_path = write_ground_truth(&gt, cli.seed, &cli.out)?;
            println!("wrote {}", ma.display());
            println!("wrote {}", mb.display());
            println!("wrote {}", gt_path.display());
        }
        Command::Extract {
            manifest,
            family,
            space,
        } => {
            let iv = load_intervention(&manifest)?;
            let dcfg = cfg.descriptor(parse_family(&family)?, parse_space(&space)?);
            let fp = dcfg.fingerprint();
            for frame in &iv.frames {
                let planar = revisit_core::colorspace::convert(&frame.image, dcfg.space);
                let vec = extract(&planar, &dcfg)?;
                let path = cli
                    .out
                    .join(cache_file_name(&iv.intervention_id, frame.frame_id, fp));
                save_vector(&vec, &path)?;
            }
            println!(
                "extracted {} descriptors ({} {}, fingerprint {fp:016x}) into {}",
                iv.frames.len(),
                dcfg.family.name(),
                dcfg.space.name(),
                cli.out.display()
            );
        }
        Command::FilterTrain {
            interventions,
            modality,
        } => {
            if interventions < 2 {
                bail!("need at least 2 interventions for cross-validation");
            }
            let dcfg = filter_descriptor(&cfg);
            let mut labeled = Vec::new();
            let mut pair_seed = cli.seed;
            while labeled.len() < interventions {
                let (a, b, _) = synth_pair(&cfg, pair_seed, modality.into());
                for iv in [a, b] {
                    if labeled.len() == interventions {
                        break;
                    }
                    let mut features = Vec::with_capacity(iv.frames.len());
                    let mut uninformative = Vec::with_capacity(iv.frames.len());
                    for frame in &iv.frames {
                        features.push(frame_feature(frame, &dcfg)?);
                        uninformative.push(
                            frame.informative_label
                                == Some(revisit_core::dataset::InformativeLabel::Uninformative),
                        );
                    }
                    labeled.push(LabeledIntervention {
                        intervention_id: iv.intervention_id.clone(),
                        features,
                        uninformative,
                    });
                }
                pair_seed += 1;
            }
            let result = cross_validate(
                &labeled,
                &cfg.svm_c_grid,
                &cfg.svm_gamma_grid,
                cfg.representative_fraction,
                PcaTarget::VarianceFraction(cfg.pca_variance),
                cli.seed,
                dcfg.fingerprint(),
            )?;
            let model_path = cli.out.join("filter.model");
            save_model(&result.model, &model_path)?;
            println!(
                "selected C={} gamma={} over {} folds",
                result.best_c,
                result.best_gamma,
                result.fold_metrics.len()
            );
            for (i, m) in result.fold_metrics.iter().enumerate() {
                println!(
                    "fold {i}: precision {:.3} recall {:.3} f1 {:.3}",
                    m.precision(),
                    m.recall(),
                    m.f1()
                );
            }
            println!("wrote {}", model_path.display());
        }
        Command::FilterApply { manifest, model } => {
            let iv = load_intervention(&manifest)?;
            let dcfg = filter_descriptor(&cfg);
            let model = load_model(&model, &dcfg)?;
            let out_path = cli.out.join(format!("{}_filtered.csv", iv.intervention_id));
            let mut text = String::from("frame_id,predicted\n");
            let mut kept = 0usize;
            for frame in &iv.frames {
                let feature = frame_feature(frame, &dcfg)?;
                let ui = model.predict_uninformative(&feature)?;
                if !ui {
                    kept += 1;
                }
                text.push_str(&format!(
                    "{},{}\n",
                    frame.frame_id,
                    if ui { "uninformative" } else { "informative" }
                ));
            }
            fs::write(&out_path, text)?;
            println!(
                "kept {kept}/{} frames; wrote {}",
                iv.frames.len(),
                out_path.display()
            );
        }
        Command::Match {
            query_frame,
            radius,
            family,
            space,
            modality,
        } => {
            let (a, b, gt) = synth_pair(&cfg, cli.seed, modality.into());
            let pair = EvalPair::new(a, b, gt)?;
            let query = pair
                .a
                .frame(query_frame)
                .with_context(|| format!("frame {query_frame} not in intervention A"))?;
            let hits = revisit_core::localization::knn_within_radius(
                &query.pose.position,
                &pair.b_in_a,
                &revisit_core::localization::SearchConfig::new(radius),
            );
            if hits.is_empty() {
                bail!("no candidates within {radius} mm of frame {query_frame}");
            }
            let candidates: Vec<&revisit_core::dataset::Frame> =
                hits.iter().map(|(f, _)| *f).collect();
            let dcfg = cfg.descriptor(parse_family(&family)?, parse_space(&space)?);
            let report = best_viewpoint(
                query,
                &pair.a.intervention_id,
                &candidates,
                &pair.b_in_a.intervention_id,
                &dcfg,
                cfg.correct_roll,
                radius,
                None,
            )?;
            let rows = report.to_rows(|fr| Some(pair.ground_truth.score(query_frame, fr.frame_id)));
            let out_path = cli.out.join(format!("match_{query_frame}.csv"));
            save_results(&rows, &out_path)?;
            println!(
                "query {query_frame}: best match frame {} among k={} candidates (score {})",
                report.best().frame_id,
                report.candidates.len(),
                pair.ground_truth.score(query_frame, report.best().frame_id)
            );
            println!("wrote {}", out_path.display());
        }
        Command::SweepRadius {
            family,
            space,
            filter,
            model,
            modality,
            baseline,
        } => {
            let model = load_model_arg(&model, &cfg)?;
            let mode = filter_mode(filter, &model)?;
            let (a, b, gt) = synth_pair(&cfg, cli.seed, modality.into());
            let pair = EvalPair::new(a, b, gt)?;
            let dcfg = cfg.descriptor(parse_family(&family)?, parse_space(&space)?);
            let mut rows = sweep_radius(
                &pair,
                &cfg.radii_mm,
                &cfg,
                &Selector::ImageBased(&dcfg),
                &mode,
            )?;
            if baseline {
                rows.extend(sweep_radius(
                    &pair,
                    &cfg.radii_mm,
                    &cfg,
                    &Selector::EmOnly,
                    &mode,
                )?);
            }
            let out_path = cli.out.join("radius_sweep.csv");
            fs::write(&out_path, radius_sweep_to_csv(&rows))?;
            for (radius, stats) in &rows {
                println!(
                    "{:>3} mm  {:<16} avg {:.3}  %2 {:.1}",
                    radius,
                    stats.label(),
                    stats.avg_score,
                    stats.pct_twos
                );
            }
            println!("wrote {}", out_path.display());
        }
        Command::SweepCombos {
            radius,
            filter,
            model,
            modality,
        } => {
            let model = load_model_arg(&model, &cfg)?;
            let mode = filter_mode(filter, &model)?;
            let (a, b, gt) = synth_pair(&cfg, cli.seed, modality.into());
            let pair = EvalPair::new(a, b, gt)?;
            let radius = radius.unwrap_or(20.0);
            let combos: Vec<(DescriptorFamily, ColorSpace)> = DescriptorFamily::ALL
                .iter()
                .flat_map(|&f| ColorSpace::ALL.iter().map(move |&s| (f, s)))
                .collect();
            let table = sweep_combos(&pair, &combos, radius, &cfg, &mode)?;
            let out_path = cli.out.join("combo_sweep.csv");
            fs::write(&out_path, stats_to_csv(&table))?;
            for row in table.iter().take(10) {
                println!(
                    "{:<24} avg {:.3} ± {:.3}  %0/%1/%2 {:.1}/{:.1}/{:.1}",
                    row.label(),
                    row.avg_score,
                    row.std_dev,
                    row.pct_zeros,
                    row.pct_ones,
                    row.pct_twos
                );
            }
            println!("wrote {} ({} rows)", out_path.display(), table.len());
        }
        Command::Stats { scores } => {
            let rows = load_results(&scores)?;
            let records: Vec<revisit_core::dataset::ScoreRecord> = rows
                .iter()
                .filter_map(|r| {
                    r.score.map(|s| {
                        revisit_core::dataset::ScoreRecord::new(
                            r.query.clone(),
                            r.matched.clone(),
                            s,
                            r.radius_mm,
                        )
                    })
                })
                .collect();
            if records.is_empty() {
                bail!("no scored rows in {}", scores.display());
            }
            let mut stats = compute_stats(&records)?;
            stats.space_tag = scores
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scores".into());
            let out_path = cli.out.join("stats.csv");
            fs::write(&out_path, stats_to_csv(std::slice::from_ref(&stats)))?;
            println!(
                "n {}  avg {:.3} ± {:.3}  %0/%1/%2 {:.2}/{:.2}/{:.2}  retrieval {:.2}%",
                stats.n,
                stats.avg_score,
                stats.std_dev,
                stats.pct_zeros,
                stats.pct_ones,
                stats.pct_twos,
                retrieval_rate(&records)?
            );
            println!("wrote {}", out_path.display());
        }
    }
    Ok(())
}
