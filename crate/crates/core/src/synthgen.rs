//! Deterministic virtual esophagus: a textured cylinder rendered through a
//! forward-looking pinhole camera, producing paired interventions with
//! ground-truth best view-points, tracker noise and synthetic uninformative
//! frames.
//!
//! The texture is band-limited value noise over (axial mm, angle), periodic
//! in angle, with a per-modality palette: NBI gets high-frequency
//! vascular-like bands, WL low-frequency mucosa-like gradients. None of this
//! aims at photorealism; it only has to give descriptors something to
//! discriminate.

use std::collections::BTreeMap;

use crate::config::Config;
use crate::dataset::{Frame, InformativeLabel, Intervention, Landmark, Modality, Pose};
use crate::localization::RigidTransform;
use image::{Rgb, RgbImage};
use nalgebra::{UnitQuaternion, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Periodic band-limited scalar texture over the tube surface.
#[derive(Debug, Clone)]
pub struct TubeWorld {
    pub seed: u64,
    pub modality: Modality,
    pub length_mm: f64,
    pub radius_mm: f64,
}

/// Frame degradation categories for uninformative frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degradation {
    None,
    Blur,
    Contact,
    Motion,
    Fluid,
}

impl Degradation {
    const UI_KINDS: [Degradation; 4] = [
        Degradation::Blur,
        Degradation::Contact,
        Degradation::Motion,
        Degradation::Fluid,
    ];
}

/// One camera placement on the tube axis.
#[derive(Debug, Clone, Copy)]
pub struct CameraSample {
    pub depth_mm: f64,
    pub roll_rad: f64,
    pub degradation: Degradation,
}

fn hash3(seed: u64, a: i64, b: i64, c: i64) -> u64 {
    let mut h = seed ^ 0x9e3779b97f4a7c15;
    for v in [a as u64, b as u64, c as u64] {
        h ^= v.wrapping_mul(0xff51afd7ed558ccd);
        h = h.rotate_left(23).wrapping_mul(0xc4ceb9fe1a85ec53);
        h ^= h >> 29;
    }
    h
}

fn lattice(seed: u64, octave: i64, ix: i64, iy: i64, angular_cells: i64) -> f64 {
    let iy = iy.rem_euclid(angular_cells);
    (hash3(seed.wrapping_add(octave as u64), ix, iy, octave) >> 11) as f64
        / (1u64 << 53) as f64
}

impl TubeWorld {
    pub fn new(seed: u64, modality: Modality, length_mm: f64, radius_mm: f64) -> TubeWorld {
        TubeWorld {
            seed,
            modality,
            length_mm,
            radius_mm,
        }
    }

    /// Dominant (coarsest-octave) axial period of the texture in mm.
    pub fn dominant_axial_period_mm(&self) -> f64 {
        match self.modality {
            Modality::Nbi => 16.0,
            Modality::Wl => 32.0,
        }
    }

    /// Texture value in [0,1] at (axial mm, angle rad); exactly periodic in
    /// the angle.
    pub fn texture(&self, axial_mm: f64, angle_rad: f64) -> f64 {
        let base_period = self.dominant_axial_period_mm();
        // angular frequencies kept low enough that bilinear image rotation
        // stays within a few gray levels of re-rendering (roll equivariance)
        let base_angular: i64 = match self.modality {
            Modality::Nbi => 8,
            Modality::Wl => 4,
        };
        let mut value = 0.0;
        let mut amplitude = 1.0;
        let mut total = 0.0;
        for octave in 0..2i64 {
            let period = base_period / (1 << octave) as f64;
            let angular_cells = base_angular * (1 << octave);
            let u = axial_mm / period;
            let v = angle_rad.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU
                * angular_cells as f64;
            let (iu, iv) = (u.floor() as i64, v.floor() as i64);
            let (fu, fv) = (u - u.floor(), v - v.floor());
            // smoothstep fade keeps the field C1
            let fu = fu * fu * (3.0 - 2.0 * fu);
            let fv = fv * fv * (3.0 - 2.0 * fv);
            let v00 = lattice(self.seed, octave, iu, iv, angular_cells);
            let v10 = lattice(self.seed, octave, iu + 1, iv, angular_cells);
            let v01 = lattice(self.seed, octave, iu, iv + 1, angular_cells);
            let v11 = lattice(self.seed, octave, iu + 1, iv + 1, angular_cells);
            let sample = v00 * (1.0 - fu) * (1.0 - fv)
                + v10 * fu * (1.0 - fv)
                + v01 * (1.0 - fu) * fv
                + v11 * fu * fv;
            value += amplitude * sample;
            total += amplitude;
            amplitude *= 0.5;
        }
        value / total
    }

    fn palette(&self, value: f64) -> [u8; 3] {
        let v = value.clamp(0.0, 1.0);
        let px = match self.modality {
            // teal mucosa with dark vascular bands
            Modality::Nbi => [30.0 + 90.0 * v, 90.0 + 140.0 * v, 80.0 + 120.0 * v],
            // pinkish mucosa with soft gradients
            Modality::Wl => [150.0 + 90.0 * v, 70.0 + 80.0 * v, 60.0 + 70.0 * v],
        };
        [px[0] as u8, px[1] as u8, px[2] as u8]
    }
}

/// Renders the forward-looking pinhole view from inside the tube.
/// The field of view is circular (endoscope style); pixels outside the
/// inscribed circle are black. Deterministic given all inputs.
pub fn render(world: &TubeWorld, cam: &CameraSample, size: u32) -> RgbImage {
    let mut img = RgbImage::new(size, size);
    let center = (size as f64 - 1.0) / 2.0;
    let focal = size as f64 / 2.0; // 90 degree field of view
    let view_radius = center - 1.0;
    let (sin_r, cos_r) = cam.roll_rad.sin_cos();
    for (px, py, out) in img.enumerate_pixels_mut() {
        let dx = (px as f64 - center) / focal;
        let dy = (py as f64 - center) / focal;
        let rr = ((px as f64 - center).powi(2) + (py as f64 - center).powi(2)).sqrt();
        if rr > view_radius {
            continue; // black outside the circular field
        }
        // camera roll rotates ray directions about the optical axis
        let dxw = cos_r * dx - sin_r * dy;
        let dyw = sin_r * dx + cos_r * dy;
        let radial = (dxw * dxw + dyw * dyw).sqrt().max(1e-6);
        let travel = world.radius_mm / radial;
        // the procedural lattice extends past both tube ends, so views near
        // the ends keep distinct texture instead of collapsing onto one ring
        let axial = cam.depth_mm + travel;
        let angle = dyw.atan2(dxw);
        let value = world.texture(axial, angle);
        // distant wall regions have on-screen texture wavelengths below the
        // bilinear-resampling-safe scale; fading their contrast keeps the
        // render roll-equivariant to within a few gray levels
        let contrast = 1.0 / (1.0 + (travel / 16.0).powi(2));
        let value = 0.5 + (value - 0.5) * contrast;
        // gentle distance falloff so depth changes also shift brightness
        let falloff = 1.0 / (1.0 + 0.02 * travel);
        *out = Rgb(world.palette(value * 0.85 * falloff + 0.15 * falloff));
    }
    apply_degradation(&mut img, cam, world.seed);
    img
}

fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut horiz = vec![[0f64; 3]; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f64; 3];
            for (ki, k) in kernel.iter().enumerate() {
                let sx = (x + ki as i64 - radius).clamp(0, w - 1);
                let p = img.get_pixel(sx as u32, y as u32).0;
                for c in 0..3 {
                    acc[c] += k * p[c] as f64;
                }
            }
            horiz[(y * w + x) as usize] = [acc[0] / ksum, acc[1] / ksum, acc[2] / ksum];
        }
    }
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f64; 3];
            for (ki, k) in kernel.iter().enumerate() {
                let sy = (y + ki as i64 - radius).clamp(0, h - 1);
                let p = horiz[(sy * w + x) as usize];
                for c in 0..3 {
                    acc[c] += k * p[c];
                }
            }
            let px = [
                (acc[0] / ksum).round() as u8,
                (acc[1] / ksum).round() as u8,
                (acc[2] / ksum).round() as u8,
            ];
            out.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    out
}

fn apply_degradation(img: &mut RgbImage, cam: &CameraSample, world_seed: u64) {
    let (w, h) = (img.width(), img.height());
    match cam.degradation {
        Degradation::None => {}
        Degradation::Blur => *img = gaussian_blur(img, 6.0),
        Degradation::Contact => {
            // 70% of pixels replaced by a near-uniform red-dominant patch
            let area = 0.7 * w as f64 * h as f64;
            let radius = (area / std::f64::consts::PI).sqrt();
            let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
            let mut rng = ChaCha8Rng::seed_from_u64(
                world_seed ^ (cam.depth_mm.to_bits().rotate_left(17)),
            );
            for (x, y, px) in img.enumerate_pixels_mut() {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d <= radius {
                    let jitter: i16 = rng.random_range(-6..=6);
                    px.0 = [
                        (185 + jitter).clamp(0, 255) as u8,
                        (40 + jitter / 2).clamp(0, 255) as u8,
                        (35 + jitter / 2).clamp(0, 255) as u8,
                    ];
                }
            }
        }
        Degradation::Motion => {
            // 15 px directional box blur
            let span = 15i64;
            let src = img.clone();
            for (x, y, px) in img.enumerate_pixels_mut() {
                let mut acc = [0u32; 3];
                for k in -(span / 2)..=(span / 2) {
                    let sx = (x as i64 + k).clamp(0, w as i64 - 1) as u32;
                    let p = src.get_pixel(sx, y).0;
                    for c in 0..3 {
                        acc[c] += p[c] as u32;
                    }
                }
                px.0 = [
                    (acc[0] / span as u32) as u8,
                    (acc[1] / span as u32) as u8,
                    (acc[2] / span as u32) as u8,
                ];
            }
        }
        Degradation::Fluid => {
            // low-contrast specular blobs over 40% of the view
            let mut rng = ChaCha8Rng::seed_from_u64(
                world_seed ^ (cam.depth_mm.to_bits().rotate_left(33)),
            );
            let blobs: Vec<(f64, f64, f64)> = (0..12)
                .map(|_| {
                    (
                        rng.random::<f64>() * w as f64,
                        rng.random::<f64>() * h as f64,
                        w as f64 * (0.08 + 0.08 * rng.random::<f64>()),
                    )
                })
                .collect();
            for (x, y, px) in img.enumerate_pixels_mut() {
                let mut alpha: f64 = 0.0;
                for &(bx, by, br) in &blobs {
                    let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                    alpha = alpha.max((-d2 / (br * br)).exp());
                }
                let alpha = 0.65 * alpha;
                for c in 0..3 {
                    px.0[c] = (px.0[c] as f64 * (1.0 - alpha) + 205.0 * alpha) as u8;
                }
            }
        }
    }
}

/// Noise-free per-frame truth recorded by the generator.
#[derive(Debug, Clone, Copy)]
pub struct FrameTruth {
    pub depth_mm: f64,
    pub roll_rad: f64,
    pub informative: bool,
}

/// Ground-truth best-view-point assignment between a generated pair,
/// operationalizing the expert scores: the minimizer of
/// `|d_depth| + lambda * |d_roll|` among informative frames scores 2,
/// anything within the score-1 depth band scores 1, the rest 0.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub a: BTreeMap<u32, FrameTruth>,
    pub b: BTreeMap<u32, FrameTruth>,
    pub best_b_for_a: BTreeMap<u32, u32>,
    pub best_a_for_b: BTreeMap<u32, u32>,
    pub score_one_band_mm: f64,
    pub roll_lambda_mm_per_rad: f64,
}

impl GroundTruth {
    /// Scores a matched B frame against an A query: 2 best, 1 partial,
    /// 0 incorrect.
    pub fn score(&self, a_frame: u32, b_frame: u32) -> u8 {
        if self.best_b_for_a.get(&a_frame) == Some(&b_frame) {
            return 2;
        }
        let (da, db) = (self.a[&a_frame].depth_mm, self.b[&b_frame].depth_mm);
        if (da - db).abs() <= self.score_one_band_mm {
            1
        } else {
            0
        }
    }
}

/// Generator parameters; see [`Config`] for the defaults.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub seed: u64,
    pub modality: Modality,
    pub n_frames: usize,
    pub image_size: u32,
    pub tube_length_mm: f64,
    pub tube_radius_mm: f64,
    pub em_noise_sigma_mm: f64,
    pub ui_fraction: f64,
    pub score_one_band_mm: f64,
    pub roll_lambda_mm_per_rad: f64,
}

impl SynthParams {
    pub fn from_config(cfg: &Config, seed: u64, modality: Modality) -> SynthParams {
        SynthParams {
            seed,
            modality,
            n_frames: cfg.n_frames,
            image_size: cfg.image_size,
            tube_length_mm: cfg.tube_length_mm,
            tube_radius_mm: cfg.tube_radius_mm,
            em_noise_sigma_mm: cfg.em_noise_sigma_mm,
            ui_fraction: cfg.ui_fraction,
            score_one_band_mm: cfg.score_one_band_mm,
            roll_lambda_mm_per_rad: cfg.roll_lambda_mm_per_rad,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct GeneratedTrajectory {
    frames: Vec<Frame>,
    truth: BTreeMap<u32, FrameTruth>,
}

fn generate_trajectory(
    world: &TubeWorld,
    params: &SynthParams,
    stream: u64,
) -> GeneratedTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_mul(0x5851f42d4c957f2d) ^ stream);
    let n = params.n_frames;
    let spacing = params.tube_length_mm / (n as f64 - 1.0);

    // exact uninformative count so the label balance is stable
    let ui_count = (params.ui_fraction * n as f64).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let ui_set: std::collections::HashSet<usize> = indices.into_iter().take(ui_count).collect();

    let mut roll: f64 = 0.0;
    let mut frames = Vec::with_capacity(n);
    let mut truth = BTreeMap::new();
    for i in 0..n {
        // pose jitter on the sampling grid; roll follows a bounded walk
        let depth = (i as f64 * spacing + (rng.random::<f64>() - 0.5) * 0.3 * spacing)
            .clamp(0.0, params.tube_length_mm);
        roll = (roll + normal(&mut rng) * 0.01).clamp(-0.05, 0.05);
        let degradation = if ui_set.contains(&i) {
            Degradation::UI_KINDS[rng.random_range(0..Degradation::UI_KINDS.len())]
        } else {
            Degradation::None
        };
        let cam = CameraSample {
            depth_mm: depth,
            roll_rad: roll,
            degradation,
        };
        let image = render(world, &cam, params.image_size);
        let measured = Vector3::new(
            normal(&mut rng) * params.em_noise_sigma_mm,
            normal(&mut rng) * params.em_noise_sigma_mm,
            depth + normal(&mut rng) * params.em_noise_sigma_mm,
        );
        let orientation = UnitQuaternion::from_scaled_axis(Vector3::z() * roll);
        let q = orientation.quaternion();
        let informative = degradation == Degradation::None;
        frames.push(Frame {
            frame_id: i as u32,
            image,
            pose: Pose::new(
                measured,
                [q.w, q.i, q.j, q.k],
                i as f64 * 0.5,
                i as u32,
            )
            .expect("generated pose is valid"),
            modality: params.modality,
            informative_label: Some(if informative {
                InformativeLabel::Informative
            } else {
                InformativeLabel::Uninformative
            }),
        });
        truth.insert(
            i as u32,
            FrameTruth {
                depth_mm: depth,
                roll_rad: roll,
                informative,
            },
        );
    }
    GeneratedTrajectory { frames, truth }
}

fn canonical_landmarks(length_mm: f64) -> Vec<(String, Vector3<f64>)> {
    vec![
        ("cardia".into(), Vector3::new(0.0, 0.0, 0.0)),
        ("pylorus".into(), Vector3::new(0.0, 0.0, length_mm)),
        ("sternum".into(), Vector3::new(60.0, 0.0, length_mm * 0.4)),
        ("spine".into(), Vector3::new(-55.0, 10.0, length_mm * 0.6)),
        ("rib_l".into(), Vector3::new(20.0, 70.0, length_mm * 0.3)),
        ("rib_r".into(), Vector3::new(15.0, -65.0, length_mm * 0.7)),
    ]
}

fn nearest_assignment(
    from: &BTreeMap<u32, FrameTruth>,
    to: &BTreeMap<u32, FrameTruth>,
    lambda: f64,
) -> BTreeMap<u32, u32> {
    let mut map = BTreeMap::new();
    for (&qid, qt) in from {
        let mut best = None;
        let mut best_cost = f64::INFINITY;
        for (&cid, ct) in to {
            if !ct.informative {
                continue;
            }
            let cost = (qt.depth_mm - ct.depth_mm).abs() + lambda * (qt.roll_rad - ct.roll_rad).abs();
            if cost < best_cost {
                best_cost = cost;
                best = Some(cid);
            }
        }
        if let Some(b) = best {
            map.insert(qid, b);
        }
    }
    map
}

/// Generates two interventions over the same tube world plus the
/// ground-truth assignment. Intervention B's tracker coordinates live in a
/// randomly drawn rigid frame, with six shared named landmarks, so
/// registration is exercised end to end.
pub fn generate_pair(params: &SynthParams) -> (Intervention, Intervention, GroundTruth) {
    let world = TubeWorld::new(
        params.seed,
        params.modality,
        params.tube_length_mm,
        params.tube_radius_mm,
    );
    let traj_a = generate_trajectory(&world, params, 0xA);
    let traj_b = generate_trajectory(&world, params, 0xB);

    // B's frame: a modest random rigid offset from A's tracker space
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xB0D7);
    let axis = Vector3::new(
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
    )
    .normalize();
    let angle = rng.random::<f64>() * std::f64::consts::FRAC_PI_2;
    let b_frame_transform = RigidTransform {
        rotation: UnitQuaternion::from_scaled_axis(axis * angle),
        translation: Vector3::new(
            (rng.random::<f64>() - 0.5) * 200.0,
            (rng.random::<f64>() - 0.5) * 200.0,
            (rng.random::<f64>() - 0.5) * 200.0,
        ),
    };

    let landmarks = canonical_landmarks(params.tube_length_mm);
    let a_landmarks: Vec<Landmark> = landmarks
        .iter()
        .map(|(name, p)| Landmark {
            name: name.clone(),
            position: *p,
        })
        .collect();
    let b_landmarks: Vec<Landmark> = landmarks
        .iter()
        .map(|(name, p)| Landmark {
            name: name.clone(),
            position: b_frame_transform.apply(p),
        })
        .collect();

    let intervention_a = Intervention {
        intervention_id: format!("synthA_{}", params.seed),
        subject_id: format!("subject_{}", params.seed),
        modality: params.modality,
        frames: traj_a.frames,
        landmarks: a_landmarks,
    };
    let mut b_frames = traj_b.frames;
    for f in b_frames.iter_mut() {
        f.pose.position = b_frame_transform.apply(&f.pose.position);
        f.pose.orientation = b_frame_transform.rotation * f.pose.orientation;
    }
    let intervention_b = Intervention {
        intervention_id: format!("synthB_{}", params.seed),
        subject_id: format!("subject_{}", params.seed),
        modality: params.modality,
        frames: b_frames,
        landmarks: b_landmarks,
    };

    let gt = GroundTruth {
        best_b_for_a: nearest_assignment(&traj_a.truth, &traj_b.truth, params.roll_lambda_mm_per_rad),
        best_a_for_b: nearest_assignment(&traj_b.truth, &traj_a.truth, params.roll_lambda_mm_per_rad),
        a: traj_a.truth,
        b: traj_b.truth,
        score_one_band_mm: params.score_one_band_mm,
        roll_lambda_mm_per_rad: params.roll_lambda_mm_per_rad,
    };
    (intervention_a, intervention_b, gt)
}
