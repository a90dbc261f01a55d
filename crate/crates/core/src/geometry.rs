//! Exact 3D camera geometry: rotations, rigid displacements, the registration
//! group, and the exact perspective warps linking two frames.
//!
//! Conventions:
//!
//! * Image coordinates are in focal-length units: the retinal plane is
//!   `{Z = 1}` and a pixel `(i, j)` maps to `x = (i - cx)/focal_px`,
//!   `y = (j - cy)/focal_px` (see [`crate::imaging::Intrinsics`]).
//! * A rotation matrix is stored row-major. Its *columns* are named
//!   `a = (a1, a2, a3)`, `b = (b1, b2, b3)`, `c = (c1, c2, c3)`:
//!
//!   | entry | index    | entry | index    | entry | index    |
//!   |-------|----------|-------|----------|-------|----------|
//!   | `a1`  | `m[0][0]`| `b1`  | `m[0][1]`| `c1`  | `m[0][2]`|
//!   | `a2`  | `m[1][0]`| `b2`  | `m[1][1]`| `c2`  | `m[1][2]`|
//!   | `a3`  | `m[2][0]`| `b3`  | `m[2][1]`| `c3`  | `m[2][2]`|
//!
//! * A displacement `D = (R, t)` moves the camera from frame `f` to frame
//!   `g`; translations are expressed in focal-length units (the geometry
//!   layer is agnostic to the depth normalization of `t`).
//! * Displacements compose left to right in time:
//!   `compose(d1, d2) = (R1 R2, t1 + R1 t2)` is "first `d1`, then `d2`".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::DepthField;
use crate::scalar::{real, to_f64, Real};

/// Degeneracy cutoff for homogeneous denominators and determinants. Far
/// below any value reachable from in-range motions; hitting it signals
/// misuse rather than modeling.
pub const DEGENERACY_CUTOFF: f64 = 1e-12;

/// Hypothesis limit on the inverse warp denominator.
pub const INV_DENOMINATOR_LIMIT: f64 = 4.0 / 3.0;

// ---------------------------------------------------------------------------
// small fixed-size linear algebra
// ---------------------------------------------------------------------------

pub(crate) type Mat3<S> = [[S; 3]; 3];
pub(crate) type Vec3<S> = [S; 3];

pub(crate) fn mat_identity<S: Real>() -> Mat3<S> {
    let (o, z) = (S::one(), S::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub(crate) fn mat_mul<S: Real>(a: &Mat3<S>, b: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mat_vec<S: Real>(a: &Mat3<S>, v: &Vec3<S>) -> Vec3<S> {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub(crate) fn mat_transpose<S: Real>(a: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[j][i] = v;
        }
    }
    out
}

pub(crate) fn mat_det<S: Real>(a: &Mat3<S>) -> S {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Adjugate (transposed cofactor matrix): `a * adj(a) = det(a) * I`.
pub(crate) fn mat_adjugate<S: Real>(a: &Mat3<S>) -> Mat3<S> {
    [
        [
            a[1][1] * a[2][2] - a[1][2] * a[2][1],
            a[0][2] * a[2][1] - a[0][1] * a[2][2],
            a[0][1] * a[1][2] - a[0][2] * a[1][1],
        ],
        [
            a[1][2] * a[2][0] - a[1][0] * a[2][2],
            a[0][0] * a[2][2] - a[0][2] * a[2][0],
            a[0][2] * a[1][0] - a[0][0] * a[1][2],
        ],
        [
            a[1][0] * a[2][1] - a[1][1] * a[2][0],
            a[0][1] * a[2][0] - a[0][0] * a[2][1],
            a[0][0] * a[1][1] - a[0][1] * a[1][0],
        ],
    ]
}

pub(crate) fn dot<S: Real>(a: &Vec3<S>, b: &Vec3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm<S: Real>(v: &Vec3<S>) -> S {
    dot(v, v).sqrt()
}

pub(crate) fn add3<S: Real>(a: &Vec3<S>, b: &Vec3<S>) -> Vec3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale3<S: Real>(v: &Vec3<S>, s: S) -> Vec3<S> {
    [v[0] * s, v[1] * s, v[2] * s]
}

/// Normalize an angle to `(-pi, pi]`.
pub fn normalize_angle<S: Real>(x: S) -> S {
    let two_pi = S::PI() + S::PI();
    let mut v = x % two_pi;
    if v <= -S::PI() {
        v = v + two_pi;
    } else if v > S::PI() {
        v = v - two_pi;
    }
    v
}

// ---------------------------------------------------------------------------
// Rotation3
// ---------------------------------------------------------------------------

/// A 3D rotation, stored as a row-major 3x3 matrix.
///
/// Columns are named `a`, `b`, `c` (see the module docs for the entry/index
/// mapping); they are the images of the camera basis vectors `i`, `j`, `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3<S> {
    m: Mat3<S>,
}

/// Axis/angle form of a rotation. `degenerate` marks angles below 1e-9,
/// where the axis is undefined and `(0, 0, 1)` is returned by convention.
#[derive(Debug, Clone, Copy)]
pub struct AxisAngle<S> {
    pub axis: Vec3<S>,
    pub angle: S,
    pub degenerate: bool,
}

impl<S: Real> Rotation3<S> {
    pub fn identity() -> Self {
        Self { m: mat_identity() }
    }

    /// Validate and wrap a row-major matrix. Requires orthonormality and
    /// determinant one, entrywise within 1e-12 (loosened to a few ulps for
    /// low-precision scalars).
    pub fn from_matrix(m: Mat3<S>) -> Result<Self> {
        let tol = real::<S>(1e-12).max(S::epsilon() * real(16.0));
        let mt = mat_transpose(&m);
        let prod = mat_mul(&mt, &m);
        let id = mat_identity::<S>();
        for i in 0..3 {
            for j in 0..3 {
                let err = (prod[i][j] - id[i][j]).abs();
                if err > tol {
                    return Err(Error::NotARotation(format!(
                        "m^T m deviates from identity by {:e} at ({i},{j})",
                        to_f64(err)
                    )));
                }
            }
        }
        let det = mat_det(&m);
        if (det - S::one()).abs() > tol {
            return Err(Error::NotARotation(format!(
                "det = {} (must be 1)",
                to_f64(det)
            )));
        }
        Ok(Self { m })
    }

    /// Elementary rotation about the optical axis `k` by `angle`.
    pub fn about_k(angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (S::one(), S::zero());
        Self {
            m: [[c, -s, z], [s, c, z], [z, z, o]],
        }
    }

    /// Elementary rotation about the horizontal image axis `i` by `angle`.
    pub fn about_i(angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (S::one(), S::zero());
        Self {
            m: [[o, z, z], [z, c, -s], [z, s, c]],
        }
    }

    /// Rotation from the `(theta, alpha, beta)` decomposition: an in-plane
    /// rotation by `beta` about `k`, followed by a tilt of the optical axis
    /// by `alpha` about the in-plane axis at azimuth `theta`. Equals the
    /// product of elementary rotations `k(theta) * i(alpha) * k(beta - theta)`
    /// and is evaluated in closed form.
    pub fn from_params(theta: S, alpha: S, beta: S) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sa, ca) = alpha.sin_cos();
        let (sb, cb) = beta.sin_cos();
        let (stb, ctb) = (theta - beta).sin_cos();
        let va = S::one() - ca; // versine of alpha
        Self {
            m: [
                [cb - va * st * stb, -sb + va * st * ctb, st * sa],
                [sb + va * ct * stb, cb - va * ct * ctb, -ct * sa],
                [-sa * stb, sa * ctb, ca],
            ],
        }
    }

    /// Recover `(theta, alpha, beta)` from a rotation. When `alpha < 1e-9`
    /// the azimuth is unobservable: `theta = 0` is returned and `beta` is
    /// the in-plane rotation angle.
    pub fn params(&self) -> (S, S, S) {
        let m = &self.m;
        // alpha from the third column: (sin(theta) sin(a), -cos(theta) sin(a), cos(a)).
        let sin_alpha = (m[0][2] * m[0][2] + m[1][2] * m[1][2]).sqrt();
        let alpha = sin_alpha.atan2(m[2][2]);
        if alpha < real(1e-9) {
            let beta = m[1][0].atan2(m[0][0]);
            return (S::zero(), alpha.max(S::zero()), normalize_angle(beta));
        }
        let theta = m[0][2].atan2(-m[1][2]);
        // Third row is (-sin(a) sin(theta - beta), sin(a) cos(theta - beta), cos(a)).
        let theta_minus_beta = (-m[2][0]).atan2(m[2][1]);
        let beta = normalize_angle(theta - theta_minus_beta);
        (normalize_angle(theta), alpha, beta)
    }

    /// Rodrigues construction from a (not necessarily unit) axis and angle.
    pub fn from_axis_angle(axis: Vec3<S>, angle: S) -> Self {
        let n = norm(&axis);
        if n < real(1e-30) {
            return Self::identity();
        }
        let [x, y, z] = scale3(&axis, n.recip());
        let (s, c) = angle.sin_cos();
        let t = S::one() - c;
        Self {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    /// Axis and angle of the rotation; see [`AxisAngle`] for the degenerate
    /// convention.
    pub fn axis_angle(&self) -> AxisAngle<S> {
        let m = &self.m;
        let skew = [
            m[2][1] - m[1][2],
            m[0][2] - m[2][0],
            m[1][0] - m[0][1],
        ];
        let sin_term = norm(&skew) * real(0.5);
        let cos_term = (self.trace() - S::one()) * real(0.5);
        let angle = sin_term.atan2(cos_term);
        if angle < real(1e-9) {
            return AxisAngle {
                axis: [S::zero(), S::zero(), S::one()],
                angle,
                degenerate: true,
            };
        }
        if angle < S::PI() - real(1e-6) {
            let axis = scale3(&skew, (sin_term + sin_term).recip());
            AxisAngle {
                axis,
                angle,
                degenerate: false,
            }
        } else {
            // Near half-turn the skew part vanishes; use the symmetric part.
            let one_minus_c = S::one() - cos_term;
            let mut axis = [S::zero(); 3];
            let diag = [m[0][0], m[1][1], m[2][2]];
            let k = if diag[0] >= diag[1] && diag[0] >= diag[2] {
                0
            } else if diag[1] >= diag[2] {
                1
            } else {
                2
            };
            axis[k] = ((diag[k] - cos_term) / one_minus_c).max(S::zero()).sqrt();
            let denom = (S::one() + S::one()) * one_minus_c * axis[k];
            for j in 0..3 {
                if j != k {
                    axis[j] = (m[k][j] + m[j][k]) / denom;
                }
            }
            // Pick the sign matching the skew part when it is resolvable.
            if dot(&axis, &skew) < S::zero() {
                axis = scale3(&axis, -S::one());
            }
            let n = norm(&axis);
            AxisAngle {
                axis: scale3(&axis, n.recip()),
                angle,
                degenerate: false,
            }
        }
    }

    pub fn matrix(&self) -> &Mat3<S> {
        &self.m
    }

    /// Columns of the matrix: the rotated camera basis `(R(i), R(j), R(k))`.
    pub fn col_a(&self) -> Vec3<S> {
        [self.m[0][0], self.m[1][0], self.m[2][0]]
    }

    pub fn col_b(&self) -> Vec3<S> {
        [self.m[0][1], self.m[1][1], self.m[2][1]]
    }

    pub fn col_c(&self) -> Vec3<S> {
        [self.m[0][2], self.m[1][2], self.m[2][2]]
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: mat_transpose(&self.m),
        }
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        Self {
            m: mat_mul(&self.m, &other.m),
        }
    }

    pub fn rotate(&self, v: &Vec3<S>) -> Vec3<S> {
        mat_vec(&self.m, v)
    }

    pub fn trace(&self) -> S {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }
}

// ---------------------------------------------------------------------------
// MotionParams
// ---------------------------------------------------------------------------

/// The six camera-motion parameters.
///
/// `theta` locates the tilt axis in the image plane, `alpha` is the tilt
/// angle of the optical axis, `beta` the in-plane rotation angle, and
/// `(-A, -B, -C)` are the coordinates of the translation in the rotated
/// camera basis, in focal-length units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionParams<S> {
    pub theta: S,
    pub alpha: S,
    pub beta: S,
    #[serde(rename = "A")]
    pub a: S,
    #[serde(rename = "B")]
    pub b: S,
    #[serde(rename = "C")]
    pub c: S,
}

impl<S: Real> MotionParams<S> {
    /// Build parameters in canonical form: `theta` normalized to
    /// `(-pi, pi]` and `alpha >= 0` (a negative tilt folds into
    /// `theta + pi`, which produces the same rotation).
    pub fn new(theta: S, alpha: S, beta: S, a: S, b: S, c: S) -> Self {
        let (theta, alpha) = if alpha < S::zero() {
            (normalize_angle(theta + S::PI()), -alpha)
        } else {
            (normalize_angle(theta), alpha)
        };
        Self {
            theta,
            alpha,
            beta,
            a,
            b,
            c,
        }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero(), S::zero(), S::zero(), S::zero())
    }

    /// Non-fatal check against the nominal small-motion ranges:
    /// `alpha` in `[0, 0.03]`, `beta` in `[-0.05, 0.05]`, `A, B` in
    /// `[-0.09, 0.09]`, `C` in `[-0.03, 0.03]` (radians / focal units).
    pub fn in_nominal_range(&self) -> bool {
        self.theta > -S::PI()
            && self.theta <= S::PI()
            && self.alpha >= S::zero()
            && self.alpha <= real(0.03)
            && self.beta.abs() <= real(0.05)
            && self.a.abs() <= real(0.09)
            && self.b.abs() <= real(0.09)
            && self.c.abs() <= real(0.03)
    }

    pub fn rotation(&self) -> Rotation3<S> {
        Rotation3::from_params(self.theta, self.alpha, self.beta)
    }

    /// The rigid displacement with rotation `R(theta, alpha, beta)` and
    /// translation `t = -A R(i) - B R(j) - C R(k)`.
    pub fn displacement(&self) -> Displacement<S> {
        let r = self.rotation();
        let t = [
            -(self.a * r.m[0][0] + self.b * r.m[0][1] + self.c * r.m[0][2]),
            -(self.a * r.m[1][0] + self.b * r.m[1][1] + self.c * r.m[1][2]),
            -(self.a * r.m[2][0] + self.b * r.m[2][1] + self.c * r.m[2][2]),
        ];
        Displacement { r, t }
    }

    /// Forward point map from the first frame to the second, at unit
    /// reference depth:
    ///
    /// ```text
    /// (x, y) -> ( (a1 x + a2 y + a3 + A) / (c1 x + c2 y + c3 + C),
    ///             (b1 x + b2 y + b3 + B) / (c1 x + c2 y + c3 + C) )
    /// ```
    pub fn psi_map(&self) -> Result<ProjectiveMap<S>> {
        let r = self.rotation();
        let m = r.matrix();
        ProjectiveMap::from_matrix([
            [m[0][0], m[1][0], m[2][0] + self.a],
            [m[0][1], m[1][1], m[2][1] + self.b],
            [m[0][2], m[1][2], m[2][2] + self.c],
        ])
    }

    /// Exact point inverse of [`Self::psi_map`]: the map from the second
    /// frame back to the first. This is the inverse in the registration
    /// group; as a matrix it agrees with `R * H` built from the displacement
    /// up to terms quadratic in the translation.
    pub fn phi_map(&self) -> Result<ProjectiveMap<S>> {
        self.psi_map()?.inverse()
    }
}

// ---------------------------------------------------------------------------
// Displacement
// ---------------------------------------------------------------------------

/// A rigid displacement `(R, t)` of the camera, with `t` in focal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Displacement<S> {
    pub r: Rotation3<S>,
    pub t: Vec3<S>,
}

impl<S: Real> Displacement<S> {
    pub fn identity() -> Self {
        Self {
            r: Rotation3::identity(),
            t: [S::zero(); 3],
        }
    }

    pub fn from_params(p: &MotionParams<S>) -> Self {
        p.displacement()
    }

    /// Recover the six motion parameters. `(A, B, C)` are minus the
    /// coordinates of `t` in the rotated basis; the angles come from
    /// [`Rotation3::params`] (including its `alpha ~ 0` convention).
    pub fn params(&self) -> MotionParams<S> {
        let (theta, alpha, beta) = self.r.params();
        let a = -dot(&self.t, &self.r.col_a());
        let b = -dot(&self.t, &self.r.col_b());
        let c = -dot(&self.t, &self.r.col_c());
        MotionParams {
            theta,
            alpha,
            beta,
            a,
            b,
            c,
        }
    }

    /// Group law: first `self`, then `other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            r: self.r.mul(&other.r),
            t: add3(&self.t, &self.r.rotate(&other.t)),
        }
    }

    /// Group inverse `(R^T, -R^T t)`.
    pub fn inverse(&self) -> Self {
        let rt = self.r.transpose();
        let t = scale3(&rt.rotate(&self.t), -S::one());
        Self { r: rt, t }
    }

    pub fn translation_norm(&self) -> S {
        norm(&self.t)
    }

    /// Forward point map at constant scene depth `z0` (the same map as
    /// [`MotionParams::psi_map`] with the translation rescaled by `1/z0`).
    pub fn psi_map_at_depth(&self, z0: S) -> Result<ProjectiveMap<S>> {
        if z0 <= S::zero() {
            return Err(Error::NonPositiveDepth { z: to_f64(z0) });
        }
        let m = self.r.matrix();
        let ts = scale3(&self.t, z0.recip());
        let ta = dot(&ts, &self.r.col_a());
        let tb = dot(&ts, &self.r.col_b());
        let tc = dot(&ts, &self.r.col_c());
        ProjectiveMap::from_matrix([
            [m[0][0], m[1][0], m[2][0] - ta],
            [m[0][1], m[1][1], m[2][1] - tb],
            [m[0][2], m[1][2], m[2][2] - tc],
        ])
    }

    /// Exact forward warp of an image point with known scene depth `z` at
    /// that point:
    ///
    /// ```text
    /// x' = (a1 x + a2 y + a3 - <t/z, R(i)>) / (c1 x + c2 y + c3 - <t/z, R(k)>)
    /// y' = (b1 x + b2 y + b3 - <t/z, R(j)>) / (c1 x + c2 y + c3 - <t/z, R(k)>)
    /// ```
    pub fn exact_warp_point(&self, z: S, pt: (S, S)) -> Result<(S, S)> {
        if z <= S::zero() {
            return Err(Error::NonPositiveDepth { z: to_f64(z) });
        }
        let m = self.r.matrix();
        let tz = scale3(&self.t, z.recip());
        let (x, y) = pt;
        let num_x = m[0][0] * x + m[1][0] * y + m[2][0] - dot(&tz, &self.r.col_a());
        let num_y = m[0][1] * x + m[1][1] * y + m[2][1] - dot(&tz, &self.r.col_b());
        let den = m[0][2] * x + m[1][2] * y + m[2][2] - dot(&tz, &self.r.col_c());
        if den.abs() <= real(DEGENERACY_CUTOFF) {
            return Err(Error::Horizon {
                denom: to_f64(den),
            });
        }
        Ok((num_x / den, num_y / den))
    }

    /// Exact reverse warp: maps a point of the second frame back to the
    /// first, given the scene depth `z_prime` at that point *in the second
    /// camera frame*. Mirror of [`Self::exact_warp_point`].
    pub fn exact_warp_point_inverse(&self, z_prime: S, pt: (S, S)) -> Result<(S, S)> {
        if z_prime <= S::zero() {
            return Err(Error::NonPositiveDepth { z: to_f64(z_prime) });
        }
        let m = self.r.matrix();
        let (xp, yp) = pt;
        let inv_z = z_prime.recip();
        let num_x = m[0][0] * xp + m[0][1] * yp + m[0][2] + self.t[0] * inv_z;
        let num_y = m[1][0] * xp + m[1][1] * yp + m[1][2] + self.t[1] * inv_z;
        let den = m[2][0] * xp + m[2][1] * yp + m[2][2] + self.t[2] * inv_z;
        if den.abs() <= real(DEGENERACY_CUTOFF) {
            return Err(Error::Horizon {
                denom: to_f64(den),
            });
        }
        Ok((num_x / den, num_y / den))
    }

    /// Depth of a scene point in the displaced camera frame, given its
    /// position `m` in the original frame. Used by synthetic oracles.
    pub fn depth_after(&self, m_point: &Vec3<S>) -> S {
        let d = [
            m_point[0] - self.t[0],
            m_point[1] - self.t[1],
            m_point[2] - self.t[2],
        ];
        dot(&d, &self.r.col_c())
    }
}

// ---------------------------------------------------------------------------
// ProjectiveMap
// ---------------------------------------------------------------------------

/// An invertible projective map of the plane, acting on homogeneous
/// coordinates `(x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectiveMap<S> {
    h: Mat3<S>,
}

impl<S: Real> ProjectiveMap<S> {
    pub fn identity() -> Self {
        Self { h: mat_identity() }
    }

    pub fn from_matrix(h: Mat3<S>) -> Result<Self> {
        let det = mat_det(&h);
        if det.abs() <= real(DEGENERACY_CUTOFF) {
            return Err(Error::DegenerateMap { det: to_f64(det) });
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &Mat3<S> {
        &self.h
    }

    pub fn det(&self) -> S {
        mat_det(&self.h)
    }

    /// Evaluate the map at a point. Fails with a horizon error if the
    /// homogeneous denominator vanishes there.
    pub fn apply(&self, pt: (S, S)) -> Result<(S, S)> {
        let (x, y) = pt;
        let h = &self.h;
        let w = h[2][0] * x + h[2][1] * y + h[2][2];
        if w.abs() <= real(DEGENERACY_CUTOFF) {
            return Err(Error::Horizon { denom: to_f64(w) });
        }
        Ok((
            (h[0][0] * x + h[0][1] * y + h[0][2]) / w,
            (h[1][0] * x + h[1][1] * y + h[1][2]) / w,
        ))
    }

    /// Exact point inverse (adjugate over determinant).
    pub fn inverse(&self) -> Result<Self> {
        let det = mat_det(&self.h);
        if det.abs() <= real(DEGENERACY_CUTOFF) {
            return Err(Error::DegenerateMap { det: to_f64(det) });
        }
        let adj = mat_adjugate(&self.h);
        let mut h = [[S::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = adj[i][j] / det;
            }
        }
        Ok(Self { h })
    }

    /// Function composition: `self.after(first)` maps `p` to
    /// `self(first(p))`.
    pub fn after(&self, first: &Self) -> Self {
        Self {
            h: mat_mul(&self.h, &first.h),
        }
    }
}

// ---------------------------------------------------------------------------
// Hypothesis checks
// ---------------------------------------------------------------------------

/// Result of checking the two working hypotheses of the planar model over a
/// depth field on the square domain `[-l/2, l/2]^2`.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesesReport<S> {
    /// Largest `|1 / (c1 x + c2 y + c3 - <t/Z, R(k)>)|` over the grid.
    pub hyp1_max_inv_denominator: S,
    /// `hyp1_max_inv_denominator <= 4/3`.
    pub hyp1_pass: bool,
    /// Largest per-component displacement `max(|x'-x|, |y'-y|)` over the grid.
    pub hyp2_max_displacement: S,
    /// `hyp2_max_displacement <= l/2`.
    pub hyp2_pass: bool,
    pub domain_l: S,
}

/// Coordinate of grid index `i` out of `n` on `[-l/2, l/2]` (inclusive ends).
pub(crate) fn grid_coord<S: Real>(i: usize, n: usize, l: S) -> S {
    if n <= 1 {
        return S::zero();
    }
    let frac = real::<S>(i as f64) / real((n - 1) as f64);
    (frac - real(0.5)) * l
}

/// Check the planar-model hypotheses for displacement `d` with true scene
/// depths `depths` sampled over `[-l/2, l/2]^2`:
///
/// 1. the inverse warp denominator stays within `4/3` in magnitude;
/// 2. no point moves by more than `l/2` in either component.
pub fn check_hypotheses<S: Real>(
    d: &Displacement<S>,
    depths: &DepthField<S>,
    l: S,
) -> Result<HypothesesReport<S>> {
    let (w, h) = (depths.width(), depths.height());
    let m = d.r.matrix();
    let col_c = d.r.col_c();
    let mut max_inv = S::zero();
    let mut max_disp = S::zero();
    for j in 0..h {
        let y = grid_coord(j, h, l);
        for i in 0..w {
            let x = grid_coord(i, w, l);
            let z = depths.get(i, j);
            if z <= S::zero() {
                return Err(Error::NonPositiveDepth { z: to_f64(z) });
            }
            let tz = scale3(&d.t, z.recip());
            let den = m[0][2] * x + m[1][2] * y + m[2][2] - dot(&tz, &col_c);
            if den.abs() <= real(DEGENERACY_CUTOFF) {
                return Err(Error::Horizon {
                    denom: to_f64(den),
                });
            }
            max_inv = max_inv.max(den.recip().abs());
            let (xp, yp) = d.exact_warp_point(z, (x, y))?;
            max_disp = max_disp.max((xp - x).abs()).max((yp - y).abs());
        }
    }
    Ok(HypothesesReport {
        hyp1_max_inv_denominator: max_inv,
        hyp1_pass: max_inv <= real(INV_DENOMINATOR_LIMIT),
        hyp2_max_displacement: max_disp,
        hyp2_pass: max_disp <= l * real(0.5),
        domain_l: l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type P = MotionParams<f64>;

    fn assert_mat_eq(a: &Mat3<f64>, b: &Mat3<f64>, tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (a[i][j] - b[i][j]).abs() <= tol,
                    "entry ({i},{j}): {} vs {}",
                    a[i][j],
                    b[i][j]
                );
            }
        }
    }

    pub(crate) fn random_in_range_params(rng: &mut ChaCha8Rng) -> P {
        let theta = std::f64::consts::PI - 2.0 * std::f64::consts::PI * rng.gen::<f64>();
        let alpha = 0.03 * rng.gen::<f64>();
        let beta = -0.05 + 0.10 * rng.gen::<f64>();
        let a = -0.09 + 0.18 * rng.gen::<f64>();
        let b = -0.09 + 0.18 * rng.gen::<f64>();
        let c = -0.03 + 0.06 * rng.gen::<f64>();
        MotionParams::new(theta, alpha, beta, a, b, c)
    }

    #[test]
    fn rotation_zero_tilt_is_identity_for_any_azimuth() {
        let r = Rotation3::<f64>::from_params(1.3, 0.0, 0.0);
        assert_mat_eq(r.matrix(), Rotation3::identity().matrix(), 0.0);
    }

    #[test]
    fn rotation_pure_tilt_at_zero_azimuth_is_about_i() {
        let r = Rotation3::<f64>::from_params(0.0, 0.3, 0.0);
        let expected = Rotation3::about_i(0.3);
        assert_mat_eq(r.matrix(), expected.matrix(), 1e-15);
    }

    #[test]
    fn rotation_zero_tilt_with_beta_is_in_plane() {
        let r = Rotation3::<f64>::from_params(0.7, 0.0, 0.2);
        assert_abs_diff_eq!(r.matrix()[0][0], 0.2f64.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.matrix()[0][1], -(0.2f64.sin()), epsilon = 1e-15);
    }

    #[test]
    fn rotation_matches_elementary_product() {
        // Independent oracle: multiply the four elementary factors.
        let (theta, alpha, beta) = (0.5, 0.02, 0.01);
        let oracle = Rotation3::about_k(theta)
            .mul(&Rotation3::about_i(alpha))
            .mul(&Rotation3::about_k(beta))
            .mul(&Rotation3::about_k(-theta));
        let r = Rotation3::from_params(theta, alpha, beta);
        assert_mat_eq(r.matrix(), oracle.matrix(), 1e-12);
    }

    #[test]
    fn rotation_elementary_product_random_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let theta: f64 = rng.gen_range(-3.14..3.14);
            let alpha: f64 = rng.gen_range(0.0..0.5);
            let beta: f64 = rng.gen_range(-0.5..0.5);
            let oracle = Rotation3::about_k(theta)
                .mul(&Rotation3::about_i(alpha))
                .mul(&Rotation3::about_k(beta - theta));
            let r = Rotation3::from_params(theta, alpha, beta);
            assert_mat_eq(r.matrix(), oracle.matrix(), 1e-12);
        }
    }

    #[test]
    fn rotation_is_orthonormal_det_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let theta: f64 = rng.gen_range(-3.2..3.2);
            let alpha: f64 = rng.gen_range(0.0..3.0);
            let beta: f64 = rng.gen_range(-3.2..3.2);
            let r = Rotation3::from_params(theta, alpha, beta);
            assert!(Rotation3::from_matrix(*r.matrix()).is_ok());
        }
    }

    #[test]
    fn params_roundtrip_identity_and_degenerate() {
        let (theta, alpha, beta) = Rotation3::<f64>::identity().params();
        assert_eq!((theta, alpha, beta), (0.0, 0.0, 0.0));

        // Pure in-plane rotation: theta defaults to 0.
        let (theta, alpha, beta) = Rotation3::<f64>::about_k(0.2).params();
        assert_abs_diff_eq!(theta, 0.0);
        assert_abs_diff_eq!(alpha, 0.0);
        assert_abs_diff_eq!(beta, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn params_roundtrip_generic() {
        let r = Rotation3::<f64>::from_params(0.5, 0.02, 0.01);
        let (theta, alpha, beta) = r.params();
        assert_abs_diff_eq!(theta, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(alpha, 0.02, epsilon = 1e-10);
        assert_abs_diff_eq!(beta, 0.01, epsilon = 1e-10);
    }

    #[test]
    fn params_roundtrip_random_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let p = random_in_range_params(&mut rng);
            if p.alpha < 1e-9 {
                continue;
            }
            let r = Rotation3::from_params(p.theta, p.alpha, p.beta);
            let (theta, alpha, beta) = r.params();
            assert_abs_diff_eq!(theta, p.theta, epsilon = 1e-10);
            assert_abs_diff_eq!(alpha, p.alpha, epsilon = 1e-10);
            assert_abs_diff_eq!(beta, p.beta, epsilon = 1e-10);
        }
    }

    #[test]
    fn displacement_from_params_examples() {
        let d = P::zero().displacement();
        assert_mat_eq(d.r.matrix(), Rotation3::identity().matrix(), 0.0);
        assert_eq!(d.t, [0.0; 3]);

        let d = P::new(0.0, 0.0, 0.0, 0.05, 0.0, 0.0).displacement();
        assert_abs_diff_eq!(d.t[0], -0.05);
        assert_abs_diff_eq!(d.t[1], 0.0);
        assert_abs_diff_eq!(d.t[2], 0.0);

        // Hand-evaluated third column at theta = 0.
        let d = P::new(0.0, 0.02, 0.0, 0.0, 0.0, 0.01).displacement();
        assert_abs_diff_eq!(d.t[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.t[1], 0.01 * 0.02f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.t[2], -0.01 * 0.02f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn params_from_displacement_roundtrip() {
        let p = Displacement::<f64>::identity().params();
        assert_eq!(
            (p.theta, p.alpha, p.beta, p.a, p.b, p.c),
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        );

        let d = Displacement {
            r: Rotation3::identity(),
            t: [-0.05, 0.0, 0.0],
        };
        let p = d.params();
        assert_abs_diff_eq!(p.a, 0.05);
        assert_abs_diff_eq!(p.b, 0.0);
        assert_abs_diff_eq!(p.c, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let p = random_in_range_params(&mut rng);
            let q = p.displacement().params();
            assert_abs_diff_eq!(q.theta, p.theta, epsilon = 1e-10);
            assert_abs_diff_eq!(q.alpha, p.alpha, epsilon = 1e-10);
            assert_abs_diff_eq!(q.beta, p.beta, epsilon = 1e-10);
            assert_abs_diff_eq!(q.a, p.a, epsilon = 1e-10);
            assert_abs_diff_eq!(q.b, p.b, epsilon = 1e-10);
            assert_abs_diff_eq!(q.c, p.c, epsilon = 1e-10);
        }
    }

    #[test]
    fn compose_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let id = Displacement::<f64>::identity();
        for _ in 0..200 {
            let d = random_in_range_params(&mut rng).displacement();
            let left = d.compose(&id);
            let right = id.compose(&d);
            assert_mat_eq(left.r.matrix(), d.r.matrix(), 0.0);
            assert_mat_eq(right.r.matrix(), d.r.matrix(), 0.0);

            let round = d.compose(&d.inverse());
            assert_mat_eq(round.r.matrix(), id.r.matrix(), 1e-12);
            for k in 0..3 {
                assert_abs_diff_eq!(round.t[k], 0.0, epsilon = 1e-12);
            }
            let round = d.inverse().compose(&d);
            assert_mat_eq(round.r.matrix(), id.r.matrix(), 1e-12);
        }
    }

    #[test]
    fn compose_pure_translations_add() {
        let d1 = Displacement::<f64> {
            r: Rotation3::identity(),
            t: [0.1, -0.2, 0.3],
        };
        let d2 = Displacement {
            r: Rotation3::identity(),
            t: [0.01, 0.02, -0.03],
        };
        let d = d1.compose(&d2);
        assert_abs_diff_eq!(d.t[0], 0.11, epsilon = 1e-15);
        assert_abs_diff_eq!(d.t[1], -0.18, epsilon = 1e-15);
        assert_abs_diff_eq!(d.t[2], 0.27, epsilon = 1e-15);
    }

    #[test]
    fn compose_matches_matrix_arithmetic_oracle() {
        let r1 = Rotation3::<f64>::about_k(std::f64::consts::FRAC_PI_2);
        let d1 = Displacement {
            r: r1,
            t: [1.0, 0.0, 0.0],
        };
        let d2 = Displacement {
            r: Rotation3::identity(),
            t: [0.0, 1.0, 0.0],
        };
        let d = d1.compose(&d2);
        // t = t1 + R1 t2, computed entrywise by hand.
        let expected = [1.0 + 0.0f64.cos() * 0.0 - 1.0, 0.0, 0.0];
        let r1t2 = r1.rotate(&[0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(r1t2[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.t[0], expected[0], epsilon = 1e-15);
        assert_abs_diff_eq!(d.t[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn psi_map_examples() {
        let id = P::zero().psi_map().unwrap();
        let (x, y) = id.apply((0.3, -0.2)).unwrap();
        assert_eq!((x, y), (0.3, -0.2));

        let shift = P::new(0.0, 0.0, 0.0, 0.05, 0.0, 0.0).psi_map().unwrap();
        let (x, y) = shift.apply((0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(x, 0.05);
        assert_abs_diff_eq!(y, 0.0);
        let (x, y) = shift.apply((0.3, 0.7)).unwrap();
        assert_abs_diff_eq!(x, 0.35);
        assert_abs_diff_eq!(y, 0.7);

        // Hand evaluation with R = I, C = 0.03: uniform shrink by 1/1.03.
        let scalemap = P::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.03).psi_map().unwrap();
        let (x, y) = scalemap.apply((0.4, -0.6)).unwrap();
        assert_abs_diff_eq!(x, 0.4 / 1.03, epsilon = 1e-15);
        assert_abs_diff_eq!(y, -0.6 / 1.03, epsilon = 1e-15);
    }

    #[test]
    fn projective_scale_invariance() {
        let p = P::new(0.3, 0.01, 0.02, 0.05, -0.02, 0.01);
        let map = p.psi_map().unwrap();
        let mut scaled = *map.matrix();
        for row in scaled.iter_mut() {
            for v in row.iter_mut() {
                *v *= 3.7;
            }
        }
        let scaled = ProjectiveMap::from_matrix(scaled).unwrap();
        let (x1, y1) = map.apply((0.2, 0.1)).unwrap();
        let (x2, y2) = scaled.apply((0.2, 0.1)).unwrap();
        assert_abs_diff_eq!(x1, x2, epsilon = 1e-14);
        assert_abs_diff_eq!(y1, y2, epsilon = 1e-14);
    }

    #[test]
    fn phi_is_point_inverse_of_psi() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let p = random_in_range_params(&mut rng);
            let psi = p.psi_map().unwrap();
            let phi = p.phi_map().unwrap();
            for _ in 0..10 {
                let pt = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let fwd = psi.apply(pt).unwrap();
                let back = phi.apply(fwd).unwrap();
                assert_abs_diff_eq!(back.0, pt.0, epsilon = 1e-10);
                assert_abs_diff_eq!(back.1, pt.1, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn exact_warp_identity_and_depth_cancellation() {
        let id = Displacement::<f64>::identity();
        let (x, y) = id.exact_warp_point(3.0, (0.4, -0.1)).unwrap();
        assert_eq!((x, y), (0.4, -0.1));

        // No translation: depths cancel.
        let d = Displacement {
            r: Rotation3::from_params(0.4, 0.02, -0.03),
            t: [0.0; 3],
        };
        let p1 = d.exact_warp_point(1.0, (0.2, 0.3)).unwrap();
        let p2 = d.exact_warp_point(250.0, (0.2, 0.3)).unwrap();
        assert_abs_diff_eq!(p1.0, p2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p1.1, p2.1, epsilon = 1e-15);
    }

    #[test]
    fn exact_warp_hand_evaluated() {
        let d = Displacement::<f64> {
            r: Rotation3::identity(),
            t: [0.1, 0.0, 0.0],
        };
        let (x, y) = d.exact_warp_point(2.0, (0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(x, -0.05);
        assert_abs_diff_eq!(y, 0.0);
    }

    #[test]
    fn exact_warp_constant_depth_equals_psi_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_in_range_params(&mut rng);
            let d = p.displacement();
            let z0 = rng.gen_range(0.5..8.0);
            let map = d.psi_map_at_depth(z0).unwrap();
            for _ in 0..5 {
                let pt = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let w1 = d.exact_warp_point(z0, pt).unwrap();
                let w2 = map.apply(pt).unwrap();
                assert_abs_diff_eq!(w1.0, w2.0, epsilon = 1e-12);
                assert_abs_diff_eq!(w1.1, w2.1, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_warp_inverse_consistency_via_3d_point() {
        // Construct a 3D point, project before and after the displacement.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let p = random_in_range_params(&mut rng);
            let d = p.displacement();
            let m_point = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(2.0..6.0)];
            let z = m_point[2];
            let pt = (m_point[0] / z, m_point[1] / z);
            let z_prime = d.depth_after(&m_point);
            let fwd = d.exact_warp_point(z, pt).unwrap();
            let back = d.exact_warp_point_inverse(z_prime, fwd).unwrap();
            assert_abs_diff_eq!(back.0, pt.0, epsilon = 1e-9);
            assert_abs_diff_eq!(back.1, pt.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn warp_rejects_nonpositive_depth() {
        let d = Displacement::<f64>::identity();
        assert!(matches!(
            d.exact_warp_point(0.0, (0.0, 0.0)),
            Err(Error::NonPositiveDepth { .. })
        ));
        assert!(matches!(
            d.exact_warp_point(-1.0, (0.0, 0.0)),
            Err(Error::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn hypotheses_identity_margins() {
        let depths = DepthField::constant(16, 16, 2.0f64);
        let rep = check_hypotheses(&Displacement::identity(), &depths, 1.0).unwrap();
        assert!(rep.hyp1_pass && rep.hyp2_pass);
        assert_abs_diff_eq!(rep.hyp1_max_inv_denominator, 1.0);
        assert_abs_diff_eq!(rep.hyp2_max_displacement, 0.0);
    }

    #[test]
    fn hypotheses_axial_translation_scalar_check() {
        // R = I, t = (0, 0, -0.5 Z): denominator 1 + 0.5 everywhere.
        let z = 2.0;
        let d = Displacement::<f64> {
            r: Rotation3::identity(),
            t: [0.0, 0.0, -0.5 * z],
        };
        let depths = DepthField::constant(8, 8, z);
        let rep = check_hypotheses(&d, &depths, 1.0).unwrap();
        assert!(rep.hyp1_pass);
        assert_abs_diff_eq!(rep.hyp1_max_inv_denominator, 1.0 / 1.5, epsilon = 1e-12);

        // <t/Z, R(k)> = 0.5 makes the denominator 0.5 at the center: fails.
        let d = Displacement::<f64> {
            r: Rotation3::identity(),
            t: [0.0, 0.0, 0.5 * z],
        };
        let rep = check_hypotheses(&d, &depths, 1.0).unwrap();
        assert!(!rep.hyp1_pass);
        assert_abs_diff_eq!(rep.hyp1_max_inv_denominator, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn axis_angle_examples() {
        let aa = Rotation3::<f64>::identity().axis_angle();
        assert!(aa.degenerate);
        assert_eq!(aa.angle, 0.0);

        let aa = Rotation3::<f64>::about_k(0.2).axis_angle();
        assert!(!aa.degenerate);
        assert_abs_diff_eq!(aa.angle, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(aa.axis[2], 1.0, epsilon = 1e-12);

        // Rodrigues round-trip oracle.
        let r = Rotation3::<f64>::from_params(0.5, 0.02, 0.01);
        let aa = r.axis_angle();
        let rebuilt = Rotation3::from_axis_angle(aa.axis, aa.angle);
        assert_mat_eq(r.matrix(), rebuilt.matrix(), 1e-9);
    }

    #[test]
    fn axis_angle_near_half_turn() {
        let axis = [0.6, -0.64, 0.48];
        let r = Rotation3::<f64>::from_axis_angle(axis, std::f64::consts::PI - 1e-9);
        let aa = r.axis_angle();
        let rebuilt = Rotation3::from_axis_angle(aa.axis, aa.angle);
        assert_mat_eq(r.matrix(), rebuilt.matrix(), 1e-7);
    }

    #[test]
    fn angle_normalization() {
        assert_abs_diff_eq!(normalize_angle(4.0 * std::f64::consts::PI + 0.1), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(-std::f64::consts::PI), std::f64::consts::PI);
        assert_abs_diff_eq!(normalize_angle(std::f64::consts::PI), std::f64::consts::PI);
    }

    #[test]
    fn nominal_range_flag() {
        assert!(P::zero().in_nominal_range());
        assert!(!P::new(0.0, 0.1, 0.0, 0.0, 0.0, 0.0).in_nominal_range());
        assert!(!P::new(0.0, 0.0, 0.0, 0.1, 0.0, 0.0).in_nominal_range());
    }

    #[test]
    fn motion_params_canonicalizes_negative_alpha() {
        let p = P::new(0.5, -0.02, 0.01, 0.0, 0.0, 0.0);
        assert!(p.alpha > 0.0);
        let r_neg = Rotation3::<f64>::about_k(0.5)
            .mul(&Rotation3::about_i(-0.02))
            .mul(&Rotation3::about_k(0.01 - 0.5));
        assert_mat_eq(p.rotation().matrix(), r_neg.matrix(), 1e-12);
    }
}
