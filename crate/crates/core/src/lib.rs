//! Position-constrained best-view-point retrieval for inter-operative
//! endoscopic surveillance, small enough to run and test on a laptop.
//!
//! The pipeline has three parts:
//!
//! 1. **Gross-localization** — rigid registration of two interventions from
//!    anatomical landmarks, then a radius-bounded nearest-neighbour query over
//!    tracked 3D positions ([`localization`]).
//! 2. **View-point selection** — multi-scale texture descriptors over six
//!    color spaces, ranked by chi-squared histogram distance among the
//!    radius-bounded candidates ([`colorspace`], [`descriptors`], [`matching`]).
//! 3. **Uninformative-frame filtering** — mLBP features, k-means data
//!    selection, PCA embedding and an RBF-kernel SVM trained by SMO
//!    ([`uifilter`]).
//!
//! Since clinical tracker data is unobtainable, [`synthgen`] renders a
//! deterministic virtual esophagus with ground-truth best view-points, and
//! [`harness`] computes the scoring statistics (average score, score-class
//! percentages, radius and descriptor/color-space sweeps).

pub mod colorspace;
pub mod config;
pub mod dataset;
pub mod descriptors;
pub mod harness;
pub mod localization;
pub mod matching;
pub mod synthgen;
pub mod uifilter;

pub use image;

pub use colorspace::{ColorSpace, PlanarImage};
pub use config::Config;
pub use dataset::{Frame, FrameRef, Intervention, Modality, Pose, ResultRow, ScoreRecord};
pub use descriptors::{DescriptorConfig, DescriptorFamily, DescriptorVector};
pub use localization::{RigidTransform, SearchConfig};
pub use matching::MatchReport;
pub use synthgen::{CameraSample, Degradation, GroundTruth, TubeWorld};
