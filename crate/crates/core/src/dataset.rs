//! Data model for interventions, frames, poses, labels and match scores,
//! plus the on-disk manifest and results-CSV formats.
//!
//! An intervention manifest is a single UTF-8 file: a header block
//! (`intervention_id`, `subject_id`, `modality`, zero or more
//! `landmark,<name>,<x>,<y>,<z>` lines) followed by a frame table with
//! columns `frame_id,timestamp,image_file,x,y,z,qw,qx,qy,qz,label`.
//! Images are lossless PNGs stored alongside the manifest.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

/// Unit-quaternion tolerance accepted on load.
pub const QUAT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("malformed manifest at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("empty intervention")]
    EmptyIntervention,
    #[error("duplicate frame id {0}")]
    DuplicateFrameId(u32),
    #[error("non-monotone timestamps at frame {0}")]
    NonMonotoneTimestamps(u32),
    #[error("quaternion norm {norm} off unit beyond tolerance at frame {frame_id}")]
    NonUnitQuaternion { frame_id: u32, norm: f64 },
    #[error("non-finite position at frame {0}")]
    NonFinitePosition(u32),
    #[error("image for frame {frame_id} is {w}x{h}, below the 32x32 minimum")]
    ImageTooSmall { frame_id: u32, w: u32, h: u32 },
    #[error("malformed results CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
}

/// Endoscopic imaging modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    /// Narrow-band imaging.
    Nbi,
    /// White light.
    Wl,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Nbi => "NBI",
            Modality::Wl => "WL",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        match s.to_ascii_uppercase().as_str() {
            "NBI" => Some(Modality::Nbi),
            "WL" => Some(Modality::Wl),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Expert frame label: a binary informative/uninformative call (grading
/// schemes with more classes collapse onto it). Absence means unlabeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InformativeLabel {
    Informative,
    Uninformative,
}

/// One 6-dof tracker sample in millimeters / seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub timestamp: f64,
}

impl Pose {
    /// Validates the raw quaternion norm before normalizing into a unit
    /// quaternion.
    pub fn new(
        position: Vector3<f64>,
        quat_wxyz: [f64; 4],
        timestamp: f64,
        frame_id: u32,
    ) -> Result<Pose, DatasetError> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(DatasetError::NonFinitePosition(frame_id));
        }
        let [w, x, y, z] = quat_wxyz;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(DatasetError::NonUnitQuaternion { frame_id, norm });
        }
        Ok(Pose {
            position,
            orientation: UnitQuaternion::from_quaternion(q),
            timestamp,
        })
    }
}

/// One endoscopic image with its pose sample and optional label.
#[derive(Debug, Clone)]
pub struct Frame {
    pub frame_id: u32,
    pub image: RgbImage,
    pub pose: Pose,
    pub modality: Modality,
    pub informative_label: Option<InformativeLabel>,
}

/// A named anatomical landmark from the external sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub name: String,
    pub position: Vector3<f64>,
}

/// Ordered frame sequence plus landmark set; the unit of registration and
/// cross-validation. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Intervention {
    pub intervention_id: String,
    pub subject_id: String,
    pub modality: Modality,
    pub frames: Vec<Frame>,
    pub landmarks: Vec<Landmark>,
}

impl Intervention {
    /// Checks the type invariants: nonempty, unique frame ids, strictly
    /// increasing timestamps, minimum image size, constant modality.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.frames.is_empty() {
            return Err(DatasetError::EmptyIntervention);
        }
        let mut seen = HashSet::new();
        let mut last_ts = f64::NEG_INFINITY;
        for f in &self.frames {
            if !seen.insert(f.frame_id) {
                return Err(DatasetError::DuplicateFrameId(f.frame_id));
            }
            if f.pose.timestamp <= last_ts {
                return Err(DatasetError::NonMonotoneTimestamps(f.frame_id));
            }
            last_ts = f.pose.timestamp;
            let (w, h) = f.image.dimensions();
            if w < 32 || h < 32 {
                return Err(DatasetError::ImageTooSmall {
                    frame_id: f.frame_id,
                    w,
                    h,
                });
            }
            debug_assert_eq!(f.modality, self.modality);
        }
        Ok(())
    }

    pub fn frame(&self, frame_id: u32) -> Option<&Frame> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }
}

/// Reference to a frame across interventions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameRef {
    pub intervention_id: String,
    pub frame_id: u32,
}

/// One expert/ground-truth score for a matched frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub query: FrameRef,
    pub matched: FrameRef,
    /// 2 best match, 1 partial match, 0 incorrect match.
    pub score: u8,
    pub radius_mm: f64,
}

impl ScoreRecord {
    pub fn new(query: FrameRef, matched: FrameRef, score: u8, radius_mm: f64) -> ScoreRecord {
        assert!(score <= 2, "score must be 0, 1 or 2");
        ScoreRecord {
            query,
            matched,
            score,
            radius_mm,
        }
    }
}

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub query: FrameRef,
    pub matched: FrameRef,
    pub radius_mm: f64,
    pub rank: usize,
    pub distance: f64,
    /// Empty column when the match is unscored.
    pub score: Option<u8>,
}

pub const RESULTS_HEADER: &str =
    "query_intervention,query_frame,match_intervention,match_frame,radius_mm,rank,distance,score";

fn label_str(l: Option<InformativeLabel>) -> &'static str {
    match l {
        Some(InformativeLabel::Informative) => "informative",
        Some(InformativeLabel::Uninformative) => "uninformative",
        None => "unlabeled",
    }
}

fn parse_label(s: &str, line: usize) -> Result<Option<InformativeLabel>, DatasetError> {
    match s {
        "informative" => Ok(Some(InformativeLabel::Informative)),
        "uninformative" => Ok(Some(InformativeLabel::Uninformative)),
        "unlabeled" | "" => Ok(None),
        other => Err(DatasetError::Malformed {
            line,
            reason: format!("unknown label '{other}'"),
        }),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads an intervention manifest and its referenced PNG images.
pub fn load_intervention(manifest_path: &Path) -> Result<Intervention, DatasetError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let mut intervention_id = None;
    let mut subject_id = None;
    let mut modality = None;
    let mut landmarks = Vec::new();
    let mut frames = Vec::new();
    let mut in_table = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if !in_table {
            match fields[0] {
                "intervention_id" => intervention_id = Some(fields[1..].join(",")),
                "subject_id" => subject_id = Some(fields[1..].join(",")),
                "modality" => {
                    modality =
                        Some(Modality::parse(fields.get(1).unwrap_or(&"")).ok_or_else(|| {
                            DatasetError::Malformed {
                                line: line_no,
                                reason: "modality must be NBI or WL".into(),
                            }
                        })?)
                }
                "landmark" => {
                    if fields.len() != 5 {
                        return Err(DatasetError::Malformed {
                            line: line_no,
                            reason: "landmark needs name,x,y,z".into(),
                        });
                    }
                    let coords: Result<Vec<f64>, _> =
                        fields[2..5].iter().map(|s| s.parse::<f64>()).collect();
                    let coords = coords.map_err(|e| DatasetError::Malformed {
                        line: line_no,
                        reason: format!("bad landmark coordinate: {e}"),
                    })?;
                    landmarks.push(Landmark {
                        name: fields[1].to_string(),
                        position: Vector3::new(coords[0], coords[1], coords[2]),
                    });
                }
                "frame_id" => in_table = true, // table header row
                other => {
                    return Err(DatasetError::Malformed {
                        line: line_no,
                        reason: format!("unexpected header key '{other}'"),
                    })
                }
            }
            continue;
        }

        if fields.len() != 11 {
            return Err(DatasetError::Malformed {
                line: line_no,
                reason: format!("frame row has {} fields, expected 11", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64, DatasetError> {
            s.parse::<f64>().map_err(|e| DatasetError::Malformed {
                line: line_no,
                reason: format!("bad {what}: {e}"),
            })
        };
        let frame_id: u32 = fields[0].parse().map_err(|e| DatasetError::Malformed {
            line: line_no,
            reason: format!("bad frame_id: {e}"),
        })?;
        let timestamp = parse_f(fields[1], "timestamp")?;
        let image_path = dir.join(fields[2]);
        let image = image::open(&image_path)
            .map_err(|source| DatasetError::Image {
                path: image_path.clone(),
                source,
            })?
            .to_rgb8();
        let pos = Vector3::new(
            parse_f(fields[3], "x")?,
            parse_f(fields[4], "y")?,
            parse_f(fields[5], "z")?,
        );
        let quat = [
            parse_f(fields[6], "qw")?,
            parse_f(fields[7], "qx")?,
            parse_f(fields[8], "qy")?,
            parse_f(fields[9], "qz")?,
        ];
        let label = parse_label(fields[10], line_no)?;
        let mod_ = modality.ok_or(DatasetError::Malformed {
            line: line_no,
            reason: "modality must precede the frame table".into(),
        })?;
        frames.push(Frame {
            frame_id,
            image,
            pose: Pose::new(pos, quat, timestamp, frame_id)?,
            modality: mod_,
            informative_label: label,
        });
    }

    let intervention = Intervention {
        intervention_id: intervention_id.ok_or(DatasetError::Malformed {
            line: 0,
            reason: "missing intervention_id".into(),
        })?,
        subject_id: subject_id.unwrap_or_default(),
        modality: modality.ok_or(DatasetError::Malformed {
            line: 0,
            reason: "missing modality".into(),
        })?,
        frames,
        landmarks,
    };
    intervention.validate()?;
    Ok(intervention)
}

/// Writes an intervention as `<dir>/<id>.manifest` plus one PNG per frame.
pub fn save_intervention(intervention: &Intervention, dir: &Path) -> Result<PathBuf, DatasetError> {
    intervention.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest_path = dir.join(format!("{}.manifest", intervention.intervention_id));

    let mut out = String::new();
    out.push_str(&format!("intervention_id,{}\n", intervention.intervention_id));
    out.push_str(&format!("subject_id,{}\n", intervention.subject_id));
    out.push_str(&format!("modality,{}\n", intervention.modality));
    for lm in &intervention.landmarks {
        out.push_str(&format!(
            "landmark,{},{},{},{}\n",
            lm.name, lm.position.x, lm.position.y, lm.position.z
        ));
    }
    out.push_str("frame_id,timestamp,image_file,x,y,z,qw,qx,qy,qz,label\n");
    for f in &intervention.frames {
        let image_file = format!(
            "{}_frame_{:05}.png",
            intervention.intervention_id, f.frame_id
        );
        let image_path = dir.join(&image_file);
        f.image
            .save(&image_path)
            .map_err(|source| DatasetError::Image {
                path: image_path,
                source,
            })?;
        let q = f.pose.orientation.quaternion();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            f.frame_id,
            f.pose.timestamp,
            image_file,
            f.pose.position.x,
            f.pose.position.y,
            f.pose.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
            label_str(f.informative_label)
        ));
    }
    fs::write(&manifest_path, out).map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}

/// Writes match results to CSV; round-trips through [`load_results`].
pub fn save_results(rows: &[ResultRow], out_path: &Path) -> Result<(), DatasetError> {
    let file = fs::File::create(out_path).map_err(io_err(out_path))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>, s: &str| -> Result<(), DatasetError> {
        w.write_all(s.as_bytes()).map_err(io_err(out_path))
    };
    write(&mut w, RESULTS_HEADER)?;
    write(&mut w, "\n")?;
    for r in rows {
        let score = r.score.map(|s| s.to_string()).unwrap_or_default();
        write(
            &mut w,
            &format!(
                "{},{},{},{},{},{},{},{}\n",
                r.query.intervention_id,
                r.query.frame_id,
                r.matched.intervention_id,
                r.matched.frame_id,
                r.radius_mm,
                r.rank,
                r.distance,
                score
            ),
        )?;
    }
    w.flush().map_err(io_err(out_path))
}

/// Reads a results CSV written by [`save_results`].
pub fn load_results(path: &Path) -> Result<Vec<ResultRow>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line != RESULTS_HEADER {
                return Err(DatasetError::MalformedCsv {
                    line: 1,
                    reason: "unexpected header".into(),
                });
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(DatasetError::MalformedCsv {
                line: idx + 1,
                reason: format!("{} fields, expected 8", f.len()),
            });
        }
        let bad = |what: &str| DatasetError::MalformedCsv {
            line: idx + 1,
            reason: format!("bad {what}"),
        };
        rows.push(ResultRow {
            query: FrameRef {
                intervention_id: f[0].to_string(),
                frame_id: f[1].parse().map_err(|_| bad("query_frame"))?,
            },
            matched: FrameRef {
                intervention_id: f[2].to_string(),
                frame_id: f[3].parse().map_err(|_| bad("match_frame"))?,
            },
            radius_mm: f[4].parse().map_err(|_| bad("radius_mm"))?,
            rank: f[5].parse().map_err(|_| bad("rank"))?,
            distance: f[6].parse().map_err(|_| bad("distance"))?,
            score: if f[7].is_empty() {
                None
            } else {
                Some(f[7].parse().map_err(|_| bad("score"))?)
            },
        });
    }
    Ok(rows)
}
