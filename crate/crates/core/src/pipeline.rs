//! Applications of chained motion estimates: registering frames distant in
//! time by composing per-pair displacements, mosaic rendering, and planar
//! augmented-reality insertion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Displacement, MotionParams, ProjectiveMap};
use crate::imaging::{sample_bilinear, ImageBuffer, Intrinsics};
use crate::scalar::{real, to_f64, Real};

/// Per-adjacent-pair motions for a frame list, plus the reference frame all
/// maps are expressed against. Serialized as
/// `{"reference": k, "motions": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainEstimate<S> {
    pub reference: usize,
    pub motions: Vec<MotionParams<S>>,
}

impl<S: Real> ChainEstimate<S> {
    pub fn frame_count(&self) -> usize {
        self.motions.len() + 1
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.frame_count() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.frame_count(),
            });
        }
        Ok(())
    }

    /// Displacement taking the camera from its pose at frame `from` to its
    /// pose at frame `to`, composed through the per-pair motions.
    pub fn displacement_between(&self, from: usize, to: usize) -> Result<Displacement<S>> {
        self.check_index(from)?;
        self.check_index(to)?;
        if from <= to {
            let mut d = Displacement::identity();
            for p in &self.motions[from..to] {
                d = d.compose(&p.displacement());
            }
            Ok(d)
        } else {
            Ok(self.displacement_between(to, from)?.inverse())
        }
    }

    /// Point map from frame `k` coordinates to reference-frame coordinates:
    /// the forward warp of the composed displacement from `k` to the
    /// reference. Identity at the reference frame itself.
    pub fn map_to_reference(&self, k: usize) -> Result<ProjectiveMap<S>> {
        let d = self.displacement_between(k, self.reference)?;
        d.params().psi_map()
    }

    /// Largest per-pair translation magnitude, in focal units. Large values
    /// mean the planar registration degrades away from pure rotation.
    pub fn max_translation_norm(&self) -> S {
        self.motions
            .iter()
            .fold(S::zero(), |m, p| m.max(p.displacement().translation_norm()))
    }
}

/// Convenience alias matching the operation vocabulary.
pub fn chain_to_reference<S: Real>(chain: &ChainEstimate<S>, k: usize) -> Result<ProjectiveMap<S>> {
    chain.map_to_reference(k)
}

// ---------------------------------------------------------------------------
// Mosaic
// ---------------------------------------------------------------------------

/// Mosaic canvas: the reference frame extended by a fixed margin on all
/// sides. Canvas pixel `(i, j)` corresponds to reference pixel
/// `(i - margin, j - margin)`.
#[derive(Debug, Clone, Copy)]
pub struct CanvasSpec {
    pub frame_width: usize,
    pub frame_height: usize,
    pub margin: usize,
}

impl CanvasSpec {
    pub fn width(&self) -> usize {
        self.frame_width + 2 * self.margin
    }

    pub fn height(&self) -> usize {
        self.frame_height + 2 * self.margin
    }
}

/// One frame rendered into canvas coordinates, with its feather weights
/// (distance of the sampled source location to the frame border, plus one;
/// zero outside the frame).
pub fn render_mosaic_layer<S: Real>(
    frame: &ImageBuffer<S>,
    map_to_ref: &ProjectiveMap<S>,
    intr: &Intrinsics<S>,
    spec: &CanvasSpec,
) -> Result<(ImageBuffer<S>, ImageBuffer<S>)> {
    let inv = map_to_ref.inverse()?;
    let (cw, ch) = (spec.width(), spec.height());
    let margin = real::<S>(spec.margin as f64);
    let max_x = real::<S>((frame.width() - 1) as f64);
    let max_y = real::<S>((frame.height() - 1) as f64);
    let mut values = vec![S::zero(); cw * ch];
    let mut weights = vec![S::zero(); cw * ch];
    for j in 0..ch {
        for i in 0..cw {
            let ref_px = (real::<S>(i as f64) - margin, real::<S>(j as f64) - margin);
            let srcpt = inv.apply(intr.pixel_to_focal(ref_px))?;
            let (px, py) = intr.focal_to_pixel(srcpt);
            if px < S::zero() || px > max_x || py < S::zero() || py > max_y {
                continue;
            }
            let border = px.min(max_x - px).min(py).min(max_y - py);
            values[j * cw + i] = sample_bilinear(frame, px, py);
            weights[j * cw + i] = border + S::one();
        }
    }
    Ok((
        ImageBuffer::from_samples(cw, ch, values)?,
        ImageBuffer::from_samples(cw, ch, weights)?,
    ))
}

/// Register every frame onto the reference frame's plane and blend by
/// feathered weighted average. The reference frame dominates at its center
/// since its own border distance is maximal there. Deterministic: frames
/// accumulate in input order.
pub fn build_mosaic<S: Real>(
    frames: &[ImageBuffer<S>],
    chain: &ChainEstimate<S>,
    intr: &Intrinsics<S>,
    margin: usize,
) -> Result<(ImageBuffer<S>, Vec<String>)> {
    if frames.len() != chain.frame_count() {
        return Err(Error::CountMismatch {
            expected: chain.frame_count(),
            got: frames.len(),
        });
    }
    let first = &frames[0];
    if frames
        .iter()
        .any(|f| f.width() != first.width() || f.height() != first.height())
    {
        return Err(Error::DimensionMismatch(
            "mosaic frames must share dimensions".into(),
        ));
    }
    let spec = CanvasSpec {
        frame_width: first.width(),
        frame_height: first.height(),
        margin,
    };
    let (cw, ch) = (spec.width(), spec.height());
    let mut num = vec![S::zero(); cw * ch];
    let mut den = vec![S::zero(); cw * ch];
    let mut warnings = Vec::new();
    for (k, frame) in frames.iter().enumerate() {
        let map = chain.map_to_reference(k)?;
        let (values, weights) = render_mosaic_layer(frame, &map, intr, &spec)?;
        let mut covered = 0usize;
        for idx in 0..cw * ch {
            let w = weights.samples()[idx];
            if w > S::zero() {
                covered += 1;
                num[idx] = num[idx] + w * values.samples()[idx];
                den[idx] = den[idx] + w;
            }
        }
        let overlap = covered as f64 / (frame.width() * frame.height()) as f64;
        if overlap < 0.10 {
            warnings.push(format!(
                "frame {k}: only {:.1}% of its area landed on the canvas",
                overlap * 100.0
            ));
        }
    }
    let canvas = ImageBuffer::from_fn(cw, ch, |i, j| {
        let idx = j * cw + i;
        if den[idx] > S::zero() {
            num[idx] / den[idx]
        } else {
            S::zero()
        }
    });
    Ok((canvas, warnings))
}

// ---------------------------------------------------------------------------
// Planar augmentation
// ---------------------------------------------------------------------------

/// Quadrilateral placement region in reference-frame pixel coordinates.
/// Corners are ordered (top-left, top-right, bottom-right, bottom-left) as
/// images of the poster's unit-square corners.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlacementRect<S> {
    pub corners: [(S, S); 4],
}

impl<S: Real> PlacementRect<S> {
    /// Axis-aligned shorthand.
    pub fn from_rect(x0: S, y0: S, x1: S, y1: S) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::InvalidInput(
                "rectangle corners must satisfy x1 > x0, y1 > y0".into(),
            ));
        }
        Ok(Self {
            corners: [(x0, y0), (x1, y0), (x1, y1), (x0, y1)],
        })
    }

    /// All corners strictly inside a `width x height` frame.
    pub fn validate_inside(&self, width: usize, height: usize) -> Result<()> {
        let (w, h) = (real::<S>(width as f64), real::<S>(height as f64));
        for &(x, y) in &self.corners {
            if x <= S::zero() || y <= S::zero() || x >= w - S::one() || y >= h - S::one() {
                return Err(Error::InvalidInput(format!(
                    "placement corner ({}, {}) not strictly inside the frame",
                    to_f64(x),
                    to_f64(y)
                )));
            }
        }
        Ok(())
    }

    /// Projective map sending the unit square `[0,1]^2` to the quad.
    /// Fails for degenerate (self-intersecting or collapsed) corners.
    pub fn unit_square_to_quad(&self) -> Result<ProjectiveMap<S>> {
        let src = [
            (S::zero(), S::zero()),
            (S::one(), S::zero()),
            (S::one(), S::one()),
            (S::zero(), S::one()),
        ];
        homography_from_points(&src, &self.corners)
    }
}

/// Solve the eight-unknown linear system for the projective map sending
/// four source points to four destination points (h33 fixed at one).
fn homography_from_points<S: Real>(
    src: &[(S, S); 4],
    dst: &[(S, S); 4],
) -> Result<ProjectiveMap<S>> {
    let mut a = [[S::zero(); 9]; 8];
    for (row2, (&(sx, sy), &(dx, dy))) in src.iter().zip(dst.iter()).enumerate() {
        let r = row2 * 2;
        a[r][0] = sx;
        a[r][1] = sy;
        a[r][2] = S::one();
        a[r][6] = -dx * sx;
        a[r][7] = -dx * sy;
        a[r][8] = dx;
        a[r + 1][3] = sx;
        a[r + 1][4] = sy;
        a[r + 1][5] = S::one();
        a[r + 1][6] = -dy * sx;
        a[r + 1][7] = -dy * sy;
        a[r + 1][8] = dy;
    }
    // Gaussian elimination with partial pivoting on the augmented system.
    let n = 8;
    let mut scale = S::zero();
    for row in &a {
        for &v in row.iter().take(n) {
            scale = scale.max(v.abs());
        }
    }
    let tol = scale * S::epsilon() * real(1e4);
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() <= tol {
            return Err(Error::InvalidInput(
                "degenerate placement quadrilateral".into(),
            ));
        }
        a.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..=n {
                a[row][k] = a[row][k] - factor * a[col][k];
            }
        }
    }
    let mut h = [S::zero(); 8];
    for col in (0..n).rev() {
        let mut acc = a[col][8];
        for k in col + 1..n {
            acc = acc - a[col][k] * h[k];
        }
        h[col] = acc / a[col][col];
    }
    ProjectiveMap::from_matrix([
        [h[0], h[1], h[2]],
        [h[3], h[4], h[5]],
        [h[6], h[7], S::one()],
    ])
}

/// Insert a planar poster into every frame. The poster is fitted to `rect`
/// in frame 0 and carried through each frame by the composed motion map;
/// pixels outside the warped quad are left bit-identical.
pub fn augment_sequence<S: Real>(
    frames: &[ImageBuffer<S>],
    chain: &ChainEstimate<S>,
    poster: &ImageBuffer<S>,
    rect: &PlacementRect<S>,
    intr: &Intrinsics<S>,
) -> Result<Vec<ImageBuffer<S>>> {
    if frames.len() != chain.frame_count() {
        return Err(Error::CountMismatch {
            expected: chain.frame_count(),
            got: frames.len(),
        });
    }
    rect.validate_inside(frames[0].width(), frames[0].height())?;
    let place = rect.unit_square_to_quad()?; // unit square -> frame-0 pixels
    let place_inv = place.inverse()?;
    let pw = real::<S>((poster.width() - 1) as f64);
    let ph = real::<S>((poster.height() - 1) as f64);

    let mut out = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        // The poster travels with the composed frame-0 to frame-k motion;
        // destination-driven rendering samples through its inverse.
        let forward = chain.displacement_between(0, k)?.params().psi_map()?;
        let motion_inv = forward.inverse()?;
        let (w, h) = (frame.width(), frame.height());
        let eps = real::<S>(1e-9);
        let augmented = ImageBuffer::from_fn(w, h, |i, j| {
            let dest_px = (real::<S>(i as f64), real::<S>(j as f64));
            let Ok(src_focal) = motion_inv.apply(intr.pixel_to_focal(dest_px)) else {
                return frame.get(i, j);
            };
            let frame0_px = intr.focal_to_pixel(src_focal);
            let Ok((s, t)) = place_inv.apply(frame0_px) else {
                return frame.get(i, j);
            };
            let inside = s >= -eps && s <= S::one() + eps && t >= -eps && t <= S::one() + eps;
            if inside {
                let s = s.max(S::zero()).min(S::one());
                let t = t.max(S::zero()).min(S::one());
                sample_bilinear(poster, s * pw, t * ph)
            } else {
                frame.get(i, j)
            }
        });
        out.push(augmented);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::synthetic_texture;
    use crate::imaging::warp_image;
    use approx::assert_abs_diff_eq;

    type P = MotionParams<f64>;

    fn small_chain() -> (P, P) {
        (
            P::new(0.3, 0.01, 0.02, 0.03, -0.01, 0.005),
            P::new(-0.8, 0.02, -0.01, -0.02, 0.04, -0.01),
        )
    }

    #[test]
    fn chain_identity_at_reference() {
        let (p1, p2) = small_chain();
        let chain = ChainEstimate {
            reference: 1,
            motions: vec![p1, p2],
        };
        let map = chain.map_to_reference(1).unwrap();
        let pt = map.apply((0.3, -0.4)).unwrap();
        assert_abs_diff_eq!(pt.0, 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(pt.1, -0.4, epsilon = 1e-14);
    }

    #[test]
    fn chain_of_motion_and_inverse_is_identity() {
        let (p1, _) = small_chain();
        let d = p1.displacement();
        let chain = ChainEstimate {
            reference: 0,
            motions: vec![p1, d.inverse().params()],
        };
        let map = chain.map_to_reference(2).unwrap();
        for pt in [(0.0, 0.0), (0.4, -0.3), (-0.5, 0.2)] {
            let out = map.apply(pt).unwrap();
            assert_abs_diff_eq!(out.0, pt.0, epsilon = 1e-12);
            assert_abs_diff_eq!(out.1, pt.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn chain_matches_direct_composition_oracle() {
        let (p1, p2) = small_chain();
        let chain = ChainEstimate {
            reference: 2,
            motions: vec![p1, p2],
        };
        let map = chain.map_to_reference(0).unwrap();
        let oracle = p1
            .displacement()
            .compose(&p2.displacement())
            .params()
            .psi_map()
            .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(
                    map.matrix()[i][j],
                    oracle.matrix()[i][j],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn chain_index_error() {
        let chain = ChainEstimate::<f64> {
            reference: 0,
            motions: vec![],
        };
        assert!(matches!(
            chain.map_to_reference(3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn single_frame_mosaic_contains_frame_unchanged() {
        let frame = synthetic_texture::<f64>(48, 40, 3);
        let intr = Intrinsics::synthetic(48, 40);
        let chain = ChainEstimate {
            reference: 0,
            motions: vec![],
        };
        let (canvas, warnings) = build_mosaic(&[frame.clone()], &chain, &intr, 8).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(canvas.width(), 48 + 16);
        for j in 0..40 {
            for i in 0..48 {
                assert_abs_diff_eq!(canvas.get(i + 8, j + 8), frame.get(i, j), epsilon = 1e-9);
            }
        }
        // Outside the window nothing was written.
        assert_eq!(canvas.get(0, 0), 0.0);
    }

    #[test]
    fn identical_frames_identity_chain_blend_exactly() {
        let frame = synthetic_texture::<f64>(32, 32, 5);
        let intr = Intrinsics::synthetic(32, 32);
        let chain = ChainEstimate {
            reference: 0,
            motions: vec![P::zero(), P::zero()],
        };
        let frames = vec![frame.clone(), frame.clone(), frame.clone()];
        let (canvas, _) = build_mosaic(&frames, &chain, &intr, 4).unwrap();
        for j in 0..32 {
            for i in 0..32 {
                assert_abs_diff_eq!(canvas.get(i + 4, j + 4), frame.get(i, j), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn mosaic_determinism() {
        let base = synthetic_texture::<f64>(64, 64, 7);
        let intr = Intrinsics::synthetic(64, 64);
        let p = P::new(0.0, 0.0, 0.03, 0.0, 0.0, 0.0);
        let (second, _) = warp_image(&base, &p.psi_map().unwrap(), &intr).unwrap();
        let chain = ChainEstimate {
            reference: 0,
            motions: vec![p],
        };
        let frames = vec![base, second];
        let (c1, _) = build_mosaic(&frames, &chain, &intr, 10).unwrap();
        let (c2, _) = build_mosaic(&frames, &chain, &intr, 10).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn mosaic_layers_agree_for_pure_in_plane_rotation() {
        let base = synthetic_texture::<f64>(128, 128, 9);
        let intr = Intrinsics::synthetic(128, 128);
        let p = P::new(0.0, 0.0, 0.04, 0.0, 0.0, 0.0);
        let (second, _) = warp_image(&base, &p.psi_map().unwrap(), &intr).unwrap();
        let chain = ChainEstimate {
            reference: 0,
            motions: vec![p],
        };
        let spec = CanvasSpec {
            frame_width: 128,
            frame_height: 128,
            margin: 16,
        };
        let (v0, w0) = render_mosaic_layer(
            &base,
            &chain.map_to_reference(0).unwrap(),
            &intr,
            &spec,
        )
        .unwrap();
        let (v1, w1) = render_mosaic_layer(
            &second,
            &chain.map_to_reference(1).unwrap(),
            &intr,
            &spec,
        )
        .unwrap();
        let mut sum = 0.0;
        let mut n = 0usize;
        for idx in 0..v0.samples().len() {
            if w0.samples()[idx] > 2.0 && w1.samples()[idx] > 2.0 {
                sum += (v0.samples()[idx] - v1.samples()[idx]).abs();
                n += 1;
            }
        }
        assert!(n > 1000, "overlap too small: {n}");
        let mad = sum / n as f64;
        assert!(mad < 2.0, "overlap layers disagree: mean abs diff {mad}");
    }

    #[test]
    fn augment_identity_chain_pastes_poster_everywhere() {
        let frame = synthetic_texture::<f64>(64, 64, 11);
        let poster = ImageBuffer::<f64>::from_fn(16, 12, |i, j| ((i * 16 + j * 3) % 256) as f64);
        let intr = Intrinsics::synthetic(64, 64);
        let chain = ChainEstimate {
            reference: 0,
            motions: vec![P::zero(), P::zero()],
        };
        let rect = PlacementRect::from_rect(10.0, 20.0, 25.0, 31.0).unwrap();
        let frames = vec![frame.clone(), frame.clone(), frame.clone()];
        let out = augment_sequence(&frames, &chain, &poster, &rect, &intr).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(out[0], out[2]);
        // Poster corners land on rect corners exactly.
        assert_abs_diff_eq!(out[0].get(10, 20), poster.get(0, 0), epsilon = 1e-9);
        assert_abs_diff_eq!(out[0].get(25, 20), poster.get(15, 0), epsilon = 1e-9);
        assert_abs_diff_eq!(out[0].get(25, 31), poster.get(15, 11), epsilon = 1e-9);
        assert_abs_diff_eq!(out[0].get(10, 31), poster.get(0, 11), epsilon = 1e-9);
        // Outside the rect the frame is untouched.
        assert_eq!(out[0].get(5, 5), frame.get(5, 5));
        assert_eq!(out[0].get(40, 50), frame.get(40, 50));
    }

    #[test]
    fn augment_translation_chain_moves_poster_with_background() {
        let frame = synthetic_texture::<f64>(64, 64, 13);
        let intr = Intrinsics::<f64>::synthetic(64, 64);
        // Exactly 2 pixels per step.
        let a = 2.0 / intr.focal_px;
        let p = P::new(0.0, 0.0, 0.0, a, 0.0, 0.0);
        let frames: Vec<_> = (0..3).map(|_| frame.clone()).collect();
        let chain = ChainEstimate {
            reference: 0,
            motions: vec![p, p],
        };
        let poster = ImageBuffer::<f64>::filled(8, 8, 200.0);
        let rect = PlacementRect::from_rect(20.0, 20.0, 34.0, 34.0).unwrap();
        let out = augment_sequence(&frames, &chain, &poster, &rect, &intr).unwrap();
        // The placement map for frame k translates by exactly 2k pixels.
        for (k, img) in out.iter().enumerate() {
            let shift = 2 * k;
            for j in [20usize, 27, 34] {
                for i in [20usize, 27, 34] {
                    let moved = img.get(i + shift, j);
                    assert_abs_diff_eq!(moved, 200.0, epsilon = 1e-9);
                }
            }
            // One pixel left of the shifted quad is background.
            assert_eq!(img.get(19 + shift - 1, 27), frame.get(18 + shift, 27));
        }
    }

    #[test]
    fn placement_validation() {
        assert!(PlacementRect::<f64>::from_rect(5.0, 5.0, 4.0, 9.0).is_err());
        let rect = PlacementRect::from_rect(0.0, 1.0, 10.0, 10.0).unwrap();
        assert!(rect.validate_inside(64, 64).is_err());
        let rect = PlacementRect::from_rect(2.0, 2.0, 10.0, 63.5).unwrap();
        assert!(rect.validate_inside(64, 64).is_err());
        let rect = PlacementRect::from_rect(2.0, 2.0, 10.0, 10.0).unwrap();
        assert!(rect.validate_inside(64, 64).is_ok());

        let degenerate = PlacementRect::<f64> {
            corners: [(1.0, 1.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)],
        };
        assert!(degenerate.unit_square_to_quad().is_err());
    }

    #[test]
    fn chain_json_shape() {
        let chain = ChainEstimate::<f64> {
            reference: 1,
            motions: vec![P::zero()],
        };
        let text = serde_json::to_string(&chain).unwrap();
        assert!(text.contains("\"reference\":1"));
        assert!(text.contains("\"motions\""));
        assert!(text.contains("\"theta\""));
        assert!(text.contains("\"A\""));
        let back: ChainEstimate<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back.reference, 1);
    }
}
