//! Gross-localization: least-squares rigid registration between
//! interventions from named anatomical landmarks, radius-bounded k-NN over
//! tracked 3D positions, and roll-based orientation correction.

use crate::dataset::{Frame, Intervention};
use image::RgbImage;
use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("need at least 3 landmark pairs, got {0}")]
    TooFewPairs(usize),
    #[error("degenerate landmark configuration (spread ratio {0:.3e}, points are near-collinear)")]
    Degenerate(f64),
    #[error("fewer than 3 landmark names shared between interventions")]
    TooFewSharedLandmarks,
}

/// Rotation + translation mapping one tracker space into another,
/// `y = R x + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> RigidTransform {
        RigidTransform {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> RigidTransform {
        let rot_inv = self.rotation.inverse();
        RigidTransform {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        // (self ∘ other)(x) = self(other(x))
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Radius-bounded neighbour query parameters.
#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    /// Search radius in millimeters; sweeps typically cover 10..=70.
    pub radius_mm: f64,
    /// Optional cap on the candidate count (unbounded when `None`).
    pub max_k: Option<usize>,
}

impl SearchConfig {
    pub fn new(radius_mm: f64) -> SearchConfig {
        assert!(radius_mm > 0.0, "radius must be positive");
        SearchConfig {
            radius_mm,
            max_k: None,
        }
    }
}

/// Closed-form least-squares rigid fit (no scaling) from `(source, target)`
/// point pairs, via the quaternion eigenvector of the cross-covariance.
pub fn register_landmarks(
    pairs: &[(Vector3<f64>, Vector3<f64>)],
) -> Result<RigidTransform, RegistrationError> {
    if pairs.len() < 3 {
        return Err(RegistrationError::TooFewPairs(pairs.len()));
    }
    let n = pairs.len() as f64;
    let src_centroid: Vector3<f64> = pairs.iter().map(|(s, _)| s).sum::<Vector3<f64>>() / n;
    let dst_centroid: Vector3<f64> = pairs.iter().map(|(_, d)| d).sum::<Vector3<f64>>() / n;

    // collinearity check on the centered source spread
    let mut scatter = Matrix3::zeros();
    for (s, _) in pairs {
        let c = s - src_centroid;
        scatter += c * c.transpose();
    }
    let eig = scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = eig.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let spread_ratio = if ev[2] > 0.0 { ev[1] / ev[2] } else { 0.0 };
    if spread_ratio < 1e-12 {
        return Err(RegistrationError::Degenerate(spread_ratio));
    }

    let mut cross = Matrix3::zeros();
    for (s, d) in pairs {
        cross += (s - src_centroid) * (d - dst_centroid).transpose();
    }

    // Horn's quaternion method: largest eigenvector of the symmetric 4x4
    // matrix built from the cross-covariance.
    let (sxx, sxy, sxz) = (cross[(0, 0)], cross[(0, 1)], cross[(0, 2)]);
    let (syx, syy, syz) = (cross[(1, 0)], cross[(1, 1)], cross[(1, 2)]);
    let (szx, szy, szz) = (cross[(2, 0)], cross[(2, 1)], cross[(2, 2)]);
    let nmat = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );
    let se = nmat.symmetric_eigen();
    let mut best = 0;
    for i in 1..4 {
        if se.eigenvalues[i] > se.eigenvalues[best] {
            best = i;
        }
    }
    let q = se.eigenvectors.column(best);
    let rotation = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    let translation = dst_centroid - rotation * src_centroid;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Builds `(source, target)` pairs by matching landmark names, then fits the
/// transform carrying `src` coordinates into `dst` coordinates.
pub fn register_interventions(
    src: &Intervention,
    dst: &Intervention,
) -> Result<RigidTransform, RegistrationError> {
    let mut pairs = Vec::new();
    for lm in &src.landmarks {
        if let Some(other) = dst.landmarks.iter().find(|l| l.name == lm.name) {
            pairs.push((lm.position, other.position));
        }
    }
    if pairs.len() < 3 {
        return Err(RegistrationError::TooFewSharedLandmarks);
    }
    register_landmarks(&pairs)
}

/// Returns a copy of `intervention` with every pose and landmark carried
/// through `transform` (positions rotated + translated, orientations
/// pre-rotated).
pub fn transform_intervention(
    intervention: &Intervention,
    transform: &RigidTransform,
) -> Intervention {
    let mut out = intervention.clone();
    for f in out.frames.iter_mut() {
        f.pose.position = transform.apply(&f.pose.position);
        f.pose.orientation = transform.rotation * f.pose.orientation;
    }
    for lm in out.landmarks.iter_mut() {
        lm.position = transform.apply(&lm.position);
    }
    out
}

/// All frames within `cfg.radius_mm` of `query`, ascending distance, ties
/// broken by (timestamp, frame_id). The first element is the EMNN. Returns
/// an empty list when nothing is in range.
pub fn knn_within_radius<'a>(
    query: &Vector3<f64>,
    trajectory: &'a Intervention,
    cfg: &SearchConfig,
) -> Vec<(&'a Frame, f64)> {
    let mut hits: Vec<(&Frame, f64)> = trajectory
        .frames
        .iter()
        .filter_map(|f| {
            let d = (f.pose.position - query).norm();
            (d <= cfg.radius_mm).then_some((f, d))
        })
        .collect();
    hits.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap()
            .then(a.0.pose.timestamp.partial_cmp(&b.0.pose.timestamp).unwrap())
            .then(a.0.frame_id.cmp(&b.0.frame_id))
    });
    if let Some(k) = cfg.max_k {
        hits.truncate(k);
    }
    hits
}

/// Wraps an angle into `(-pi, pi]`.
fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(std::f64::consts::TAU);
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    a
}

/// Rotation angle about the endoscope optical axis (local +z) of the
/// relative rotation `a^-1 * b`, via twist-swing decomposition.
pub fn relative_roll(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let rel = a.inverse() * b;
    let q = rel.quaternion();
    // twist about z: normalize (w, 0, 0, z)
    if q.w == 0.0 && q.k == 0.0 {
        return std::f64::consts::PI;
    }
    wrap_angle(2.0 * q.k.atan2(q.w))
}

/// Rotates an image about its center with bilinear sampling; out-of-bounds
/// reads clamp to the edge. Positive angles rotate content
/// counter-clockwise in image coordinates.
pub fn rotate_image(image: &RgbImage, angle: f64) -> RgbImage {
    if angle == 0.0 {
        return image.clone();
    }
    let (w, h) = image.dimensions();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            // inverse mapping: rotate the output pixel back into the source
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let sx = sx.clamp(0.0, w as f64 - 1.0);
            let sy = sy.clamp(0.0, h as f64 - 1.0);
            let x0 = sx.floor() as u32;
            let y0 = sy.floor() as u32;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let p00 = image.get_pixel(x0, y0).0;
            let p10 = image.get_pixel(x1, y0).0;
            let p01 = image.get_pixel(x0, y1).0;
            let p11 = image.get_pixel(x1, y1).0;
            let mut px = [0u8; 3];
            for c in 0..3 {
                let v = p00[c] as f64 * (1.0 - fx) * (1.0 - fy)
                    + p10[c] as f64 * fx * (1.0 - fy)
                    + p01[c] as f64 * (1.0 - fx) * fy
                    + p11[c] as f64 * fx * fy;
                px[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x, y, image::Rgb(px));
        }
    }
    out
}
