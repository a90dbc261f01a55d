//! Synthetic-sequence generation with ground-truth manifests, estimation
//! error metrics, and noise-robustness sweeps.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_motion, EstimatorConfig};
use crate::geometry::{MotionParams, Rotation3};
use crate::imaging::{
    add_gaussian_noise, add_impulse_noise, load_image, save_image, warp_image, ImageBuffer,
    Intrinsics,
};
use crate::scalar::{real, to_f64, Real};

pub const MANIFEST_VERSION: &str = "egomotion-synth/1";

/// Coverage threshold below which sequence generation warns about border
/// loss.
pub const BORDER_LOSS_WARNING: f64 = 0.8;

/// Mix a base seed with stream indices into an independent substream seed
/// (splitmix64 steps). Every seeded experiment derives its per-item seeds
/// through this, so runs are reproducible across platforms.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(base ^ splitmix(a.wrapping_add(splitmix(b))))
}

// ---------------------------------------------------------------------------
// Random motions and textures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionType {
    Plain,
    PureTranslation,
    PureRotation,
}

impl fmt::Display for MotionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MotionType::Plain => write!(f, "plain"),
            MotionType::PureTranslation => write!(f, "pure_translation"),
            MotionType::PureRotation => write!(f, "pure_rotation"),
        }
    }
}

/// Uniform draw from the nominal parameter ranges; deterministic per seed.
/// Pure translations zero the angles, pure rotations zero `(A, B, C)`.
pub fn random_params<S: Real>(seed: u64, motion_type: MotionType) -> MotionParams<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = std::f64::consts::PI - 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    let alpha = 0.03 * rng.gen::<f64>();
    let beta = -0.05 + 0.10 * rng.gen::<f64>();
    let a = -0.09 + 0.18 * rng.gen::<f64>();
    let b = -0.09 + 0.18 * rng.gen::<f64>();
    let c = -0.03 + 0.06 * rng.gen::<f64>();
    let (theta, alpha, beta, a, b, c) = match motion_type {
        MotionType::Plain => (theta, alpha, beta, a, b, c),
        MotionType::PureTranslation => (0.0, 0.0, 0.0, a, b, c),
        MotionType::PureRotation => (theta, alpha, beta, 0.0, 0.0, 0.0),
    };
    MotionParams::new(
        real(theta),
        real(alpha),
        real(beta),
        real(a),
        real(b),
        real(c),
    )
}

/// Deterministic high-texture test image: multi-octave value noise with
/// cell sizes fixed in pixels (64 down to 8) and amplitude halving per
/// octave, lightly smoothed so interpolation behaves as on natural images,
/// normalized into `[10, 245]`.
pub fn synthetic_texture<S: Real>(width: usize, height: usize, seed: u64) -> ImageBuffer<S> {
    let mut acc = vec![0.0f64; width * height];
    for (o, cell) in [64usize, 32, 16, 8].into_iter().enumerate() {
        let nx = width.div_ceil(cell);
        let ny = height.div_ceil(cell);
        let gw = nx + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xA11CE, o as u64));
        let grid: Vec<f64> = (0..gw * (ny + 1)).map(|_| rng.gen::<f64>()).collect();
        let amp = 1.0 / (1 << o) as f64;
        for j in 0..height {
            let gy = j as f64 / cell as f64;
            let y0 = (gy as usize).min(ny - 1);
            let fy = gy - y0 as f64;
            for i in 0..width {
                let gx = i as f64 / cell as f64;
                let x0 = (gx as usize).min(nx - 1);
                let fx = gx - x0 as f64;
                let v00 = grid[y0 * gw + x0];
                let v10 = grid[y0 * gw + x0 + 1];
                let v01 = grid[(y0 + 1) * gw + x0];
                let v11 = grid[(y0 + 1) * gw + x0 + 1];
                let v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10)
                    + fy * ((1.0 - fx) * v01 + fx * v11);
                acc[j * width + i] += amp * v;
            }
        }
    }
    // One (1,2,1)/4 separable pass rounds off the cell-boundary kinks.
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut smooth = vec![0.0f64; width * height];
    for j in 0..height {
        for i in 0..width {
            let at = |di: isize| acc[j * width + clamp(i as isize + di, width)];
            smooth[j * width + i] = 0.25 * at(-1) + 0.5 * at(0) + 0.25 * at(1);
        }
    }
    for i in 0..width {
        for j in 0..height {
            let at = |dj: isize| smooth[clamp(j as isize + dj, height) * width + i];
            acc[j * width + i] = 0.25 * at(-1) + 0.5 * at(0) + 0.25 * at(1);
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &acc {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-12);
    ImageBuffer::from_fn(width, height, |i, j| {
        real(10.0 + 235.0 * (acc[j * width + i] - lo) / span)
    })
}

// ---------------------------------------------------------------------------
// Sequence generation
// ---------------------------------------------------------------------------

/// Ground-truth record for a generated sequence: frame file names (relative
/// to the manifest directory), intrinsics and the per-step motions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceManifest<S> {
    pub version: String,
    pub seed: u64,
    pub motion_type: MotionType,
    pub intrinsics: Intrinsics<S>,
    pub frames: Vec<String>,
    pub truth: Vec<MotionParams<S>>,
}

impl<S: Real> SequenceManifest<S> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Load and validate: the truth list must be one shorter than the frame
    /// list and every referenced frame file must exist next to the manifest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let manifest: Self = serde_json::from_str(&text)?;
        if manifest.truth.len() + 1 != manifest.frames.len() {
            return Err(Error::CountMismatch {
                expected: manifest.frames.len().saturating_sub(1),
                got: manifest.truth.len(),
            });
        }
        for frame in manifest.frame_paths(path) {
            if !frame.exists() {
                return Err(Error::InvalidInput(format!(
                    "referenced frame missing: {}",
                    frame.display()
                )));
            }
        }
        Ok(manifest)
    }

    /// Absolute frame paths given the manifest file location.
    pub fn frame_paths(&self, manifest_path: impl AsRef<Path>) -> Vec<PathBuf> {
        let dir = manifest_path
            .as_ref()
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        self.frames.iter().map(|f| dir.join(f)).collect()
    }

    pub fn load_frames(&self, manifest_path: impl AsRef<Path>) -> Result<Vec<ImageBuffer<S>>> {
        self.frame_paths(manifest_path)
            .iter()
            .map(load_image)
            .collect()
    }
}

/// Generate an `n_frames` sequence by repeatedly warping the previous frame
/// with a fresh random in-range motion, writing frames and a manifest into
/// `out_dir`. Returns the manifest and any border-loss warnings.
pub fn generate_sequence<S: Real>(
    base: &ImageBuffer<S>,
    n_frames: usize,
    motion_type: MotionType,
    seed: u64,
    intr: &Intrinsics<S>,
    out_dir: impl AsRef<Path>,
) -> Result<(SequenceManifest<S>, Vec<String>)> {
    if n_frames < 2 {
        return Err(Error::InvalidInput("need at least 2 frames".into()));
    }
    intr.validate_for(base.width(), base.height())?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;

    let mut warnings = Vec::new();
    let mut frames = Vec::with_capacity(n_frames);
    let mut truth = Vec::with_capacity(n_frames - 1);
    let mut current = base.clone();

    let name0 = "frame_0000.pgm".to_string();
    save_image(out_dir.join(&name0), &current)?;
    frames.push(name0);

    for k in 0..n_frames - 1 {
        let p = random_params::<S>(derive_seed(seed, 1, k as u64), motion_type);
        let (next, mask) = warp_image(&current, &p.psi_map()?, intr)?;
        let coverage = mask.coverage();
        if coverage < BORDER_LOSS_WARNING {
            warnings.push(format!(
                "frame {}: valid coverage {:.1}% below {:.0}%",
                k + 1,
                coverage * 100.0,
                BORDER_LOSS_WARNING * 100.0
            ));
        }
        let name = format!("frame_{:04}.pgm", k + 1);
        save_image(out_dir.join(&name), &next)?;
        frames.push(name);
        truth.push(p);
        current = next;
    }

    let manifest = SequenceManifest {
        version: MANIFEST_VERSION.to_string(),
        seed,
        motion_type,
        intrinsics: *intr,
        frames,
        truth,
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok((manifest, warnings))
}

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

fn degrees<S: Real>(rad: S) -> S {
    rad * real::<S>(180.0 / std::f64::consts::PI)
}

/// Angle in degrees between two translation directions; `None` when either
/// norm is below 1e-12 (direction undefined). Scale invariant, since the
/// estimated translation is known only up to the depth scale.
pub fn translation_direction_error<S: Real>(t_est: &[S; 3], t_true: &[S; 3]) -> Option<S> {
    let n1 = crate::geometry::norm(t_est);
    let n2 = crate::geometry::norm(t_true);
    if n1 < real(1e-12) || n2 < real(1e-12) {
        return None;
    }
    let cos = (crate::geometry::dot(t_est, t_true) / (n1 * n2))
        .max(-S::one())
        .min(S::one());
    Some(degrees(cos.acos()))
}

/// Rotation comparison: angle between the two rotation axes (absent when
/// either rotation is within 1e-6 rad of the identity), absolute angle
/// difference in degrees, and relative angle error (absent for a
/// near-identity truth).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RotationErrors<S> {
    pub axis_error_deg: Option<S>,
    pub angle_abs_deg: S,
    pub angle_rel: Option<S>,
}

pub fn rotation_errors<S: Real>(r_est: &Rotation3<S>, r_true: &Rotation3<S>) -> RotationErrors<S> {
    let est = r_est.axis_angle();
    let tru = r_true.axis_angle();
    let axis_error_deg = if est.angle < real(1e-6) || tru.angle < real(1e-6) {
        None
    } else {
        let cos = crate::geometry::dot(&est.axis, &tru.axis)
            .max(-S::one())
            .min(S::one());
        Some(degrees(cos.acos()))
    };
    let angle_abs_deg = degrees((est.angle - tru.angle).abs());
    let angle_rel = if tru.angle < real(1e-9) {
        None
    } else {
        Some((est.angle - tru.angle).abs() / tru.angle)
    };
    RotationErrors {
        axis_error_deg,
        angle_abs_deg,
        angle_rel,
    }
}

/// Per-pair motion errors; degenerate entries are absent rather than zero.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairErrors<S> {
    pub translation_direction_deg: Option<S>,
    pub rotation_axis_deg: Option<S>,
    pub rotation_angle_abs_deg: S,
    pub rotation_angle_rel: Option<S>,
}

/// Averages over the defined entries of each column.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanErrors<S> {
    pub translation_direction_deg: Option<S>,
    pub rotation_axis_deg: Option<S>,
    pub rotation_angle_abs_deg: Option<S>,
    pub rotation_angle_rel: Option<S>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport<S> {
    pub motion_type: MotionType,
    pub pairs: Vec<PairErrors<S>>,
    pub mean: MeanErrors<S>,
}

fn mean_of<S: Real>(values: impl Iterator<Item = Option<S>>) -> Option<S> {
    let mut acc = S::zero();
    let mut n = 0usize;
    for v in values.flatten() {
        acc = acc + v;
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(acc / real(n as f64))
    }
}

/// Compare estimated motions against ground truth, pair by pair, through
/// the displacement representation.
pub fn evaluate_sequence<S: Real>(
    motion_type: MotionType,
    truth: &[MotionParams<S>],
    estimates: &[MotionParams<S>],
) -> Result<ErrorReport<S>> {
    if truth.len() != estimates.len() {
        return Err(Error::CountMismatch {
            expected: truth.len(),
            got: estimates.len(),
        });
    }
    let pairs: Vec<PairErrors<S>> = truth
        .iter()
        .zip(estimates)
        .map(|(t, e)| {
            let dt = t.displacement();
            let de = e.displacement();
            let rot = rotation_errors(&de.r, &dt.r);
            PairErrors {
                translation_direction_deg: translation_direction_error(&de.t, &dt.t),
                rotation_axis_deg: rot.axis_error_deg,
                rotation_angle_abs_deg: rot.angle_abs_deg,
                rotation_angle_rel: rot.angle_rel,
            }
        })
        .collect();
    let mean = MeanErrors {
        translation_direction_deg: mean_of(pairs.iter().map(|p| p.translation_direction_deg)),
        rotation_axis_deg: mean_of(pairs.iter().map(|p| p.rotation_axis_deg)),
        rotation_angle_abs_deg: mean_of(pairs.iter().map(|p| Some(p.rotation_angle_abs_deg))),
        rotation_angle_rel: mean_of(pairs.iter().map(|p| p.rotation_angle_rel)),
    };
    Ok(ErrorReport {
        motion_type,
        pairs,
        mean,
    })
}

impl<S: Real> fmt::Display for ErrorReport<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn cell<S: Real>(v: Option<S>, unit: &str) -> String {
            match v {
                Some(v) => format!("{:.4}{unit}", to_f64(v)),
                None => "-".to_string(),
            }
        }
        writeln!(
            f,
            "{:<18} {:>14} {:>14} {:>12} {:>10}",
            "", "trans. dir.", "rot. axis", "rot. angle", "relative"
        )?;
        writeln!(
            f,
            "{:<18} {:>14} {:>14} {:>12} {:>10}",
            self.motion_type.to_string(),
            cell(self.mean.translation_direction_deg, "°"),
            cell(self.mean.rotation_axis_deg, "°"),
            cell(self.mean.rotation_angle_abs_deg, "°"),
            cell(self.mean.rotation_angle_rel.map(|v| v * real(100.0)), "%"),
        )
    }
}

// ---------------------------------------------------------------------------
// Noise sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Level is the percentage of pixels replaced by uniform gray values.
    Impulse,
    /// Level is the standard deviation of added Gaussian noise.
    Gaussian,
}

pub fn apply_noise<S: Real>(
    img: &ImageBuffer<S>,
    kind: NoiseKind,
    level: f64,
    seed: u64,
) -> ImageBuffer<S> {
    match kind {
        NoiseKind::Impulse => add_impulse_noise(img, level, seed),
        NoiseKind::Gaussian => add_gaussian_noise(img, level, seed),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow<S> {
    pub level: f64,
    pub mean: MeanErrors<S>,
    /// Pairs whose estimation failed at this level (skipped in the means).
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable<S> {
    pub kind: NoiseKind,
    pub rows: Vec<SweepRow<S>>,
}

impl<S: Real> SweepTable<S> {
    /// Fixed column order for plot tooling; absent averages render as `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,trans_dir_err,rot_axis_err,rot_angle_abs,rot_angle_rel\n");
        fn cell<S: Real>(v: Option<S>) -> String {
            v.map_or("nan".to_string(), |x| format!("{}", to_f64(x)))
        }
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.level,
                cell(row.mean.translation_direction_deg),
                cell(row.mean.rotation_axis_deg),
                cell(row.mean.rotation_angle_abs_deg),
                cell(row.mean.rotation_angle_rel),
            ));
        }
        out
    }
}

/// For each noise level: corrupt every frame with fresh per-frame seeds,
/// re-estimate all adjacent pairs, and average the errors against truth.
/// Estimator failures are counted per level, not fatal.
pub fn noise_sweep<S: Real>(
    frames: &[ImageBuffer<S>],
    truth: &[MotionParams<S>],
    intr: &Intrinsics<S>,
    kind: NoiseKind,
    levels: &[f64],
    seed: u64,
    config: &EstimatorConfig<S>,
) -> Result<SweepTable<S>> {
    if truth.len() + 1 != frames.len() {
        return Err(Error::CountMismatch {
            expected: frames.len().saturating_sub(1),
            got: truth.len(),
        });
    }
    let mut rows = Vec::with_capacity(levels.len());
    for (level_idx, &level) in levels.iter().enumerate() {
        let noisy: Vec<ImageBuffer<S>> = if level == 0.0 {
            frames.to_vec()
        } else {
            frames
                .iter()
                .enumerate()
                .map(|(k, img)| {
                    apply_noise(img, kind, level, derive_seed(seed, level_idx as u64, k as u64))
                })
                .collect()
        };
        let mut kept_truth = Vec::new();
        let mut estimates = Vec::new();
        let mut failures = 0usize;
        for (k, t) in truth.iter().enumerate() {
            match estimate_motion(&noisy[k], &noisy[k + 1], intr, config) {
                Ok(result) => {
                    kept_truth.push(*t);
                    estimates.push(result.params);
                }
                Err(_) => failures += 1,
            }
        }
        let report = evaluate_sequence(MotionType::Plain, &kept_truth, &estimates)?;
        rows.push(SweepRow {
            level,
            mean: report.mean,
            failures,
        });
    }
    Ok(SweepTable { kind, rows })
}
