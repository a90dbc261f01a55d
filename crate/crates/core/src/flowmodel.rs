//! The approximation layer: the quadratic flow induced by a small camera
//! motion, its closed-form error bound, the validity conditions under which
//! scene depth may be replaced by a constant, and the conversions between
//! flow-model coefficients and motion parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_hypotheses, grid_coord, Displacement, MotionParams};
use crate::imaging::DepthField;
use crate::scalar::{real, to_f64, Real};

/// Default acceptance threshold for the depth-substitution error, in focal
/// units. The flow itself has magnitude around 1e-2, so the substitution
/// error must stay below that.
pub const DEFAULT_EPSILON: f64 = 1e-2;

/// Default grid resolution for verification sweeps: dense enough to
/// localize maxima of smooth rational maps, cheap enough for CI.
pub const DEFAULT_GRID: usize = 64;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Coefficients of the constrained quadratic flow model
///
/// ```text
/// u(x, y) = (c1) + (a1  a2) (x)  + (q1 q2 0 ) (x^2)
///           (c2)   (-a2 a1) (y)    (0  q1 q2) (x y)
///                                             (y^2)
/// ```
///
/// plus a global intensity shift `xi` (gray levels). The linear block is a
/// similarity, the quadratic block has the rank-constrained form above.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadraticFlowCoeffs<S> {
    pub c1: S,
    pub c2: S,
    pub a1: S,
    pub a2: S,
    pub q1: S,
    pub q2: S,
    pub xi: S,
}

impl<S: Real> QuadraticFlowCoeffs<S> {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Evaluate the model flow at a point in focal units.
    pub fn flow_at(&self, pt: (S, S)) -> (S, S) {
        let (x, y) = pt;
        (
            self.c1 + self.a1 * x + self.a2 * y + self.q1 * x * x + self.q2 * x * y,
            self.c2 - self.a2 * x + self.a1 * y + self.q1 * x * y + self.q2 * y * y,
        )
    }
}

/// Bounds on a scene depth field, in focal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBounds<S> {
    pub z_inf: S,
    pub z_sup: S,
}

impl<S: Real> DepthBounds<S> {
    pub fn new(z_inf: S, z_sup: S) -> Result<Self> {
        if !(z_inf > S::zero()) {
            return Err(Error::NonPositiveDepth { z: to_f64(z_inf) });
        }
        if z_sup < z_inf {
            return Err(Error::InvalidInput(format!(
                "z_sup {} < z_inf {}",
                to_f64(z_sup),
                to_f64(z_inf)
            )));
        }
        Ok(Self { z_inf, z_sup })
    }

    /// The constant depth minimizing the worst-case inverse-depth deviation
    /// over `[z_inf, z_sup]`: the harmonic mean `2 z_sup z_inf / (z_sup + z_inf)`.
    pub fn optimal_z0(&self) -> S {
        let two = S::one() + S::one();
        two * self.z_sup * self.z_inf / (self.z_sup + self.z_inf)
    }
}

// ---------------------------------------------------------------------------
// Quadratic flow and its bound
// ---------------------------------------------------------------------------

/// The quadratic flow induced at `pt` by motion `p`:
///
/// ```text
/// u = -C x + A + beta y + alpha x (y cos t - x sin t) - alpha sin t
/// v = -C y + B - beta x + alpha y (y cos t - x sin t) + alpha cos t
/// ```
pub fn quadratic_flow<S: Real>(p: &MotionParams<S>, pt: (S, S)) -> (S, S) {
    let (x, y) = pt;
    let (st, ct) = p.theta.sin_cos();
    let swirl = y * ct - x * st;
    (
        -p.c * x + p.a + p.beta * y + p.alpha * x * swirl - p.alpha * st,
        -p.c * y + p.b - p.beta * x + p.alpha * y * swirl + p.alpha * ct,
    )
}

/// Closed-form bound on the per-component error of [`quadratic_flow`]
/// against the exact constant-depth warp, over the square domain of side
/// `l`. The x-component bound takes `a_or_b = A`, the y-component `B`.
pub fn flow_bound_t<S: Real>(l: S, alpha: S, beta: S, a_or_b: S, c: S) -> S {
    let alpha = alpha.abs();
    let beta_abs = beta.abs();
    let c_abs = c.abs();
    let a_abs = a_or_b.abs();
    let third = real::<S>(1.0 / 3.0);
    let alpha2 = alpha * alpha;

    let cubic = l * l * l * (real::<S>(2.0) * alpha2 * third);
    let quad = l
        * l
        * (real::<S>(4.0) * c_abs * alpha * third
            + real::<S>(2.0) * beta_abs * alpha * third
            + real::<S>(4.0 / 9.0) * alpha2 * alpha);
    let linear = l
        * (alpha2 * (real::<S>(2.0) + beta_abs + (c - S::one()).abs() * third)
            + real::<S>(4.0) * a_abs * alpha * third
            + real::<S>(2.0) * beta_abs * c_abs * third
            + beta_abs * beta_abs * third
            + real::<S>(2.0) * c_abs * c_abs * third
            + beta_abs * beta_abs * beta_abs / real(9.0));
    let constant = alpha
        * (real::<S>(2.0) * beta_abs * beta_abs * third
            + real::<S>(4.0) * beta_abs * third
            + real::<S>(4.0) * c_abs * third
            + real::<S>(2.0) * alpha * a_abs * third
            + real::<S>(8.0 / 9.0) * alpha2)
        + real::<S>(4.0) * a_abs * c_abs * third;

    cubic + quad + linear + constant
}

/// Verification report comparing a measured maximum against a bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport<S> {
    pub pass: bool,
    /// Grid maximum of `|exact flow - quadratic flow|`, x component.
    pub max_err_x: S,
    pub bound_x: S,
    /// Same for the y component.
    pub max_err_y: S,
    pub bound_y: S,
    pub grid: usize,
}

/// Measure the worst-case deviation of the quadratic flow from the exact
/// constant-depth warp of `p` on an `n x n` grid over `[-l/2, l/2]^2`, and
/// compare against the closed-form bound.
///
/// Preconditions: the inverse-denominator hypothesis must hold on the grid
/// and `|alpha| < 1`, `|beta| < 1`.
pub fn verify_quadratic_bound<S: Real>(
    p: &MotionParams<S>,
    l: S,
    n: usize,
) -> Result<BoundReport<S>> {
    if p.alpha.abs() >= S::one() || p.beta.abs() >= S::one() {
        return Err(Error::Precondition {
            check: "|alpha| < 1 and |beta| < 1".into(),
            measured: to_f64(p.alpha.abs().max(p.beta.abs())),
            limit: 1.0,
        });
    }
    let psi = p.psi_map()?;
    let h = psi.matrix();
    let limit = real::<S>(crate::geometry::INV_DENOMINATOR_LIMIT);
    let mut max_err_x = S::zero();
    let mut max_err_y = S::zero();
    for j in 0..n {
        let y = grid_coord(j, n, l);
        for i in 0..n {
            let x = grid_coord(i, n, l);
            let den = h[2][0] * x + h[2][1] * y + h[2][2];
            if den.abs() < limit.recip() {
                return Err(Error::Precondition {
                    check: "inverse warp denominator within 4/3".into(),
                    measured: to_f64(den.recip().abs()),
                    limit: to_f64(limit),
                });
            }
            let (xp, yp) = psi.apply((x, y))?;
            let (u, v) = quadratic_flow(p, (x, y));
            max_err_x = max_err_x.max((xp - x - u).abs());
            max_err_y = max_err_y.max((yp - y - v).abs());
        }
    }
    let bound_x = flow_bound_t(l, p.alpha, p.beta, p.a, p.c);
    let bound_y = flow_bound_t(l, p.alpha, p.beta, p.b, p.c);
    Ok(BoundReport {
        pass: max_err_x <= bound_x && max_err_y <= bound_y,
        max_err_x,
        bound_x,
        max_err_y,
        bound_y,
        grid: n,
    })
}

// ---------------------------------------------------------------------------
// Depth substitution validity
// ---------------------------------------------------------------------------

/// Left-hand side of the first validity condition:
/// `(1/z_inf - 1/z_sup) * |t| * 2(l + 1) / 3`. The caller compares the value
/// against its error budget `epsilon`.
pub fn cond1_margin<S: Real>(b: &DepthBounds<S>, t_norm: S, l: S) -> S {
    let spread = b.z_inf.recip() - b.z_sup.recip();
    spread * t_norm * (S::one() + S::one()) * (l + S::one()) / real(3.0)
}

/// Left-hand side of the second validity condition:
/// `4 |t| (l + 1) / (9 z_inf)`, which budgets the reverse-warp error.
pub fn cond2_margin<S: Real>(z_inf: S, t_norm: S, l: S) -> S {
    real::<S>(4.0) * t_norm * (l + S::one()) / (real::<S>(9.0) * z_inf)
}

/// Report of the numeric depth-substitution check.
#[derive(Debug, Clone, Serialize)]
pub struct DepthSubstitutionReport<S> {
    pub pass: bool,
    /// Grid maximum componentwise difference between the true-depth warp
    /// and the constant-depth warp at `z0`.
    pub max_err: S,
    pub epsilon: S,
    pub z0: S,
    pub cond1: S,
    pub grid: (usize, usize),
}

/// Numerically verify that replacing the true depths by the optimal
/// constant `z0` perturbs the exact warp by at most `epsilon` over
/// `[-l/2, l/2]^2`.
///
/// Preconditions checked before measuring: both hypotheses hold for the
/// true depth field, and the first validity condition's margin is within
/// `epsilon`. A violated precondition is reported as an error naming it.
pub fn verify_depth_substitution<S: Real>(
    d: &Displacement<S>,
    depths: &DepthField<S>,
    l: S,
    epsilon: S,
) -> Result<DepthSubstitutionReport<S>> {
    let rep = check_hypotheses(d, depths, l)?;
    if !rep.hyp1_pass {
        return Err(Error::Precondition {
            check: "hypothesis 1 (inverse denominator within 4/3)".into(),
            measured: to_f64(rep.hyp1_max_inv_denominator),
            limit: crate::geometry::INV_DENOMINATOR_LIMIT,
        });
    }
    if !rep.hyp2_pass {
        return Err(Error::Precondition {
            check: "hypothesis 2 (displacement within l/2)".into(),
            measured: to_f64(rep.hyp2_max_displacement),
            limit: to_f64(l * real(0.5)),
        });
    }
    let bounds = depths.bounds()?;
    let t_norm = d.translation_norm();
    let cond1 = cond1_margin(&bounds, t_norm, l);
    if cond1 > epsilon {
        return Err(Error::Precondition {
            check: "condition 1 (inverse-depth spread times translation)".into(),
            measured: to_f64(cond1),
            limit: to_f64(epsilon),
        });
    }
    let z0 = bounds.optimal_z0();
    let (w, h) = (depths.width(), depths.height());
    let mut max_err = S::zero();
    for j in 0..h {
        let y = grid_coord(j, h, l);
        for i in 0..w {
            let x = grid_coord(i, w, l);
            let exact = d.exact_warp_point(depths.get(i, j), (x, y))?;
            let approx = d.exact_warp_point(z0, (x, y))?;
            max_err = max_err
                .max((exact.0 - approx.0).abs())
                .max((exact.1 - approx.1).abs());
        }
    }
    Ok(DepthSubstitutionReport {
        pass: max_err <= epsilon,
        max_err,
        epsilon,
        z0,
        cond1,
        grid: (w, h),
    })
}

// ---------------------------------------------------------------------------
// Coefficient <-> parameter conversions
// ---------------------------------------------------------------------------

/// Coefficients of the quadratic flow model induced by motion `p`
/// (identification against [`quadratic_flow`]); `xi` is left at zero.
pub fn coeffs_from_params<S: Real>(p: &MotionParams<S>) -> QuadraticFlowCoeffs<S> {
    let (st, ct) = p.theta.sin_cos();
    QuadraticFlowCoeffs {
        c1: p.a - p.alpha * st,
        c2: p.b + p.alpha * ct,
        a1: -p.c,
        a2: p.beta,
        q1: -p.alpha * st,
        q2: p.alpha * ct,
        xi: S::zero(),
    }
}

/// Recover motion parameters from flow-model coefficients.
///
/// The azimuth case table is kept verbatim:
///
/// * `theta = -arctan(q1/q2)` if `q2 > 0`,
/// * `theta = -arctan(q1/q2) + pi` if `q2 < 0` (then normalized to `(-pi, pi]`),
/// * `theta = pi/2` if `q2 = 0, q1 > 0`, else `-pi/2`.
///
/// The `q2 = 0` rows pin the convention on a measure-zero boundary (note
/// that `q1 = q2 = 0` yields `alpha = 0, theta = -pi/2`).
pub fn params_from_coeffs<S: Real>(c: &QuadraticFlowCoeffs<S>) -> MotionParams<S> {
    let half_pi = S::PI() * real(0.5);
    let theta = if c.q2 > S::zero() {
        -(c.q1 / c.q2).atan()
    } else if c.q2 < S::zero() {
        -(c.q1 / c.q2).atan() + S::PI()
    } else if c.q1 > S::zero() {
        half_pi
    } else {
        -half_pi
    };
    let theta = crate::geometry::normalize_angle(theta);
    let alpha = (c.q1 * c.q1 + c.q2 * c.q2).sqrt();
    let (st, ct) = theta.sin_cos();
    MotionParams {
        theta,
        alpha,
        beta: c.a2,
        a: c.c1 + alpha * st,
        b: c.c2 - alpha * ct,
        c: -c.a1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type P = MotionParams<f64>;

    fn random_in_range_params(rng: &mut ChaCha8Rng) -> P {
        let theta = std::f64::consts::PI - 2.0 * std::f64::consts::PI * rng.gen::<f64>();
        let alpha = 0.03 * rng.gen::<f64>();
        let beta = -0.05 + 0.10 * rng.gen::<f64>();
        let a = -0.09 + 0.18 * rng.gen::<f64>();
        let b = -0.09 + 0.18 * rng.gen::<f64>();
        let c = -0.03 + 0.06 * rng.gen::<f64>();
        MotionParams::new(theta, alpha, beta, a, b, c)
    }

    #[test]
    fn quadratic_flow_components() {
        // Zero motion: zero flow everywhere.
        let zero = P::zero();
        assert_eq!(quadratic_flow(&zero, (0.4, -0.7)), (0.0, 0.0));

        // Pure in-plane rotation: (beta y, -beta x).
        let p = P::new(0.0, 0.0, 0.02, 0.0, 0.0, 0.0);
        let (u, v) = quadratic_flow(&p, (0.3, 0.5));
        assert_abs_diff_eq!(u, 0.02 * 0.5);
        assert_abs_diff_eq!(v, -0.02 * 0.3);

        // Pure translation: (-C x + A, -C y + B).
        let p = P::new(0.0, 0.0, 0.0, 0.05, -0.02, 0.01);
        let (u, v) = quadratic_flow(&p, (0.3, 0.5));
        assert_abs_diff_eq!(u, -0.01 * 0.3 + 0.05);
        assert_abs_diff_eq!(v, -0.01 * 0.5 - 0.02);

        // theta = 0, alpha only: (alpha x y, alpha y^2 + alpha).
        let p = P::new(0.0, 0.01, 0.0, 0.0, 0.0, 0.0);
        let (u, v) = quadratic_flow(&p, (0.3, 0.5));
        assert_abs_diff_eq!(u, 0.01 * 0.3 * 0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(v, 0.01 * 0.5 * 0.5 + 0.01, epsilon = 1e-16);
    }

    #[test]
    fn flow_decomposes_into_three_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let p = random_in_range_params(&mut rng);
            let trans = P { theta: 0.0, alpha: 0.0, beta: 0.0, ..p };
            let inplane = P { theta: 0.0, alpha: 0.0, a: 0.0, b: 0.0, c: 0.0, ..p };
            let tilt = P { beta: 0.0, a: 0.0, b: 0.0, c: 0.0, ..p };
            let pt = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let whole = quadratic_flow(&p, pt);
            let sum = [
                quadratic_flow(&trans, pt),
                quadratic_flow(&inplane, pt),
                quadratic_flow(&tilt, pt),
            ]
            .iter()
            .fold((0.0, 0.0), |acc, f| (acc.0 + f.0, acc.1 + f.1));
            assert_abs_diff_eq!(whole.0, sum.0, epsilon = 1e-15);
            assert_abs_diff_eq!(whole.1, sum.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn bound_reference_values() {
        // Pure translation, A = B = 0.09, C = 0.03.
        let t = flow_bound_t(1.0, 0.0, 0.0, 0.09, 0.03);
        assert_abs_diff_eq!(t, 4.2e-3, epsilon = 4.2e-3 * 0.025);
        let t = flow_bound_t(8.0, 0.0, 0.0, 0.09, 0.03);
        assert_abs_diff_eq!(t, 8.4e-3, epsilon = 8.4e-3 * 0.025);

        // Pure tilt, alpha = 0.01.
        let t = flow_bound_t(1.0, 0.01, 0.0, 0.0, 0.0);
        assert_abs_diff_eq!(t, 3.0e-4, epsilon = 3.0e-4 * 0.025);
        let t = flow_bound_t(4.0, 0.01, 0.0, 0.0, 0.0);
        assert_abs_diff_eq!(t, 5.2e-3, epsilon = 5.2e-3 * 0.025);
        let t = flow_bound_t(8.0, 0.01, 0.0, 0.0, 0.0);
        assert_abs_diff_eq!(t, 3.6e-2, epsilon = 3.6e-2 * 0.025);
    }

    #[test]
    fn bound_is_monotone_in_each_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let l = rng.gen_range(0.5..8.0);
            let alpha = rng.gen_range(0.0..0.03);
            let beta = rng.gen_range(0.0..0.05);
            let a = rng.gen_range(0.0..0.09);
            let c = rng.gen_range(0.0..0.03);
            let base = flow_bound_t(l, alpha, beta, a, c);
            assert!(flow_bound_t(l * 1.1, alpha, beta, a, c) >= base);
            assert!(flow_bound_t(l, alpha * 1.1, beta, a, c) >= base);
            assert!(flow_bound_t(l, alpha, beta * 1.1, a, c) >= base);
            assert!(flow_bound_t(l, alpha, beta, a * 1.1, c) >= base);
            assert!(flow_bound_t(l, alpha, beta, a, c * 1.1) >= base);
        }
    }

    #[test]
    fn verify_bound_zero_params() {
        let rep = verify_quadratic_bound(&P::zero(), 1.0, 16).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.max_err_x, 0.0);
        assert_eq!(rep.bound_x, 0.0);
    }

    #[test]
    fn verify_bound_random_params_at_unit_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let p = random_in_range_params(&mut rng);
            let rep = verify_quadratic_bound(&p, 1.0, 32).unwrap();
            assert!(
                rep.pass,
                "bound violated: {:?} for params {:?}",
                rep, p
            );
        }
    }

    #[test]
    fn verify_bound_tilt_only_example() {
        let p = P::new(0.0, 0.01, 0.0, 0.0, 0.0, 0.0);
        let rep = verify_quadratic_bound(&p, 4.0, 64).unwrap();
        assert!(rep.pass);
        assert!(rep.max_err_x <= 5.2e-3 * 1.025);
        assert!(rep.max_err_y <= 5.2e-3 * 1.025);
    }

    #[test]
    fn optimal_z0_examples() {
        let b = DepthBounds::new(2.0, 2.0).unwrap();
        assert_abs_diff_eq!(b.optimal_z0(), 2.0);
        let b = DepthBounds::new(1.0, 3.0).unwrap();
        assert_abs_diff_eq!(b.optimal_z0(), 1.5);
        let b = DepthBounds::new(2.0, 6.0).unwrap();
        assert_abs_diff_eq!(b.optimal_z0(), 3.0);
        // 1/z0 is the midpoint of the inverse-depth interval.
        let b = DepthBounds::new(1.7, 5.3).unwrap();
        let mid = 0.5 * (1.0 / 1.7 + 1.0 / 5.3);
        assert_abs_diff_eq!(1.0 / b.optimal_z0(), mid, epsilon = 1e-15);
    }

    #[test]
    fn condition_margins() {
        let b = DepthBounds::new(4.0, 6.0).unwrap();
        assert_abs_diff_eq!(cond1_margin(&b, 0.0, 1.0), 0.0);
        let same = DepthBounds::new(3.0, 3.0).unwrap();
        assert_abs_diff_eq!(cond1_margin(&same, 0.5, 1.0), 0.0);
        // (1/4 - 1/6) * 0.05 * 4/3
        assert_abs_diff_eq!(cond1_margin(&b, 0.05, 1.0), 5.5555555e-3, epsilon = 1e-9);

        assert_abs_diff_eq!(cond2_margin(4.0, 0.0, 1.0), 0.0);
        assert_abs_diff_eq!(cond2_margin(4.0, 0.05, 1.0), 1.1111111e-2, epsilon = 1e-9);
        assert!(cond2_margin(1e9, 0.05, 1.0) < 1e-9);
    }

    #[test]
    fn depth_substitution_trivial_cases() {
        // Constant depth: zero error.
        let depths = DepthField::constant(16, 16, 5.0f64);
        let d = P::new(0.1, 0.01, 0.0, 0.02, 0.0, 0.01).displacement();
        let rep = verify_depth_substitution(&d, &depths, 1.0, 1e-2).unwrap();
        assert!(rep.pass);
        assert_abs_diff_eq!(rep.max_err, 0.0, epsilon = 1e-15);

        // No translation: depths cancel entirely.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let depths = DepthField::from_fn(16, 16, |_, _| rng.gen_range(1.0..100.0));
        let d = Displacement {
            r: crate::geometry::Rotation3::from_params(0.3, 0.02, 0.01),
            t: [0.0; 3],
        };
        let rep = verify_depth_substitution(&d, &depths, 1.0, 1e-2).unwrap();
        assert!(rep.pass);
        assert_abs_diff_eq!(rep.max_err, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn depth_substitution_random_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let depths = DepthField::from_fn(64, 64, |_, _| rng.gen_range(4.0..6.0));
        let t_dir = [0.6, -0.64, 0.48];
        let d = Displacement {
            r: crate::geometry::Rotation3::from_params(0.2, 0.005, 0.01),
            t: crate::geometry::scale3(&t_dir, 0.05 / crate::geometry::norm(&t_dir)),
        };
        let rep = verify_depth_substitution(&d, &depths, 1.0, 1e-2).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.cond1 <= 1e-2);
        // The measured error is also within the analytic margin.
        assert!(rep.max_err <= rep.cond1 * 1.0000001);
    }

    #[test]
    fn depth_substitution_rejects_violated_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let depths = DepthField::from_fn(32, 32, |_, _| rng.gen_range(0.5..6.0));
        let d = Displacement {
            r: crate::geometry::Rotation3::identity(),
            t: [0.05, 0.0, 0.0],
        };
        let err = verify_depth_substitution(&d, &depths, 1.0, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Precondition { .. }));
    }

    #[test]
    fn coeff_conversion_examples() {
        let c = coeffs_from_params(&P::zero());
        assert_eq!(c, QuadraticFlowCoeffs::zero());

        let c = coeffs_from_params(&P::new(0.0, 0.01, 0.0, 0.0, 0.0, 0.0));
        assert_abs_diff_eq!(c.q1, 0.0);
        assert_abs_diff_eq!(c.q2, 0.01);
        assert_abs_diff_eq!(c.c2, 0.01);

        let p = params_from_coeffs(&QuadraticFlowCoeffs {
            q1: 0.0,
            q2: 0.01,
            ..QuadraticFlowCoeffs::zero()
        });
        assert_abs_diff_eq!(p.theta, 0.0);
        assert_abs_diff_eq!(p.alpha, 0.01);

        // Boundary row of the case table.
        let p = params_from_coeffs(&QuadraticFlowCoeffs {
            q1: 0.01,
            q2: 0.0,
            ..QuadraticFlowCoeffs::zero()
        });
        assert_abs_diff_eq!(p.theta, std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(p.alpha, 0.01);

        // q1 = q2 = 0 pins theta = -pi/2 with alpha = 0.
        let p = params_from_coeffs(&QuadraticFlowCoeffs::<f64>::zero());
        assert_abs_diff_eq!(p.theta, -std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(p.alpha, 0.0);
    }

    #[test]
    fn coeff_conversion_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..1000 {
            let p = random_in_range_params(&mut rng);
            if p.alpha <= 1e-9 {
                continue;
            }
            let q = params_from_coeffs(&coeffs_from_params(&p));
            assert_abs_diff_eq!(q.theta, p.theta, epsilon = 1e-12);
            assert_abs_diff_eq!(q.alpha, p.alpha, epsilon = 1e-12);
            assert_abs_diff_eq!(q.beta, p.beta, epsilon = 1e-12);
            assert_abs_diff_eq!(q.a, p.a, epsilon = 1e-12);
            assert_abs_diff_eq!(q.b, p.b, epsilon = 1e-12);
            assert_abs_diff_eq!(q.c, p.c, epsilon = 1e-12);
        }
    }

    #[test]
    fn coeff_roundtrip_alpha_zero_keeps_other_params() {
        let p = P::new(0.0, 0.0, 0.03, 0.01, -0.02, 0.005);
        let q = params_from_coeffs(&coeffs_from_params(&p));
        assert_abs_diff_eq!(q.alpha, 0.0);
        assert_abs_diff_eq!(q.beta, p.beta);
        assert_abs_diff_eq!(q.a, p.a);
        assert_abs_diff_eq!(q.b, p.b);
        assert_abs_diff_eq!(q.c, p.c);
    }
}
