//! Robust coarse-to-fine estimation of the six-parameter quadratic flow
//! model between two frames: iteratively reweighted Gauss-Newton with the
//! Tukey biweight on the displaced frame difference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::{params_from_coeffs, QuadraticFlowCoeffs};
use crate::geometry::MotionParams;
use crate::imaging::{build_pyramid, sample_bilinear_with_gradient, ImageBuffer, Intrinsics};
use crate::scalar::{real, to_f64, Real};

/// Robust-scale policy for the Tukey cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPolicy<S> {
    /// Fixed cutoff in gray levels.
    Fixed(S),
    /// `gamma = c * sigma_hat` where `sigma_hat = 1.4826 * MAD` of the
    /// current residuals (floored at one gray level), recomputed each
    /// iteration. The usual choice is `c = 4.685`.
    MadScaled(S),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig<S> {
    /// Pyramid levels stop before either dimension drops below this.
    pub min_pyramid_dim: usize,
    pub max_iters_per_level: usize,
    /// Convergence threshold on the Gauss-Newton step, focal units.
    pub step_tolerance: S,
    pub gamma_policy: GammaPolicy<S>,
    /// Estimate the global intensity shift alongside the flow model.
    pub estimate_xi: bool,
}

impl<S: Real> Default for EstimatorConfig<S> {
    fn default() -> Self {
        Self {
            min_pyramid_dim: 32,
            max_iters_per_level: 50,
            step_tolerance: real(1e-8),
            gamma_policy: GammaPolicy::MadScaled(real(4.685)),
            estimate_xi: true,
        }
    }
}

/// Per-level solver statistics.
#[derive(Debug, Clone, Serialize)]
pub struct LevelStats<S> {
    pub iterations: usize,
    /// Final robust objective value.
    pub objective: S,
    pub gamma: S,
    /// Share of pixels with nonzero final weight.
    pub support_fraction: S,
    /// Robust residual scale (1.4826 * MAD, floored at 1 gray level).
    pub residual_scale: S,
}

/// Estimation diagnostics reported alongside the motion parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics<S> {
    pub coeffs: QuadraticFlowCoeffs<S>,
    pub xi: S,
    pub support_fraction: S,
    /// Accepted iterations per pyramid level, coarsest first.
    pub iterations: Vec<usize>,
    pub final_residual_scale: S,
}

/// Outcome of [`estimate_motion`]: the recovered motion plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult<S> {
    #[serde(flatten)]
    pub params: MotionParams<S>,
    pub diagnostics: Diagnostics<S>,
}

// ---------------------------------------------------------------------------
// Tukey biweight
// ---------------------------------------------------------------------------

/// Tukey biweight loss: `(t^2/2)(g^4 - g^2 t^2 + t^4/3)` for `|t| < g`,
/// saturating at `g^6/6`.
pub fn tukey_rho<S: Real>(t: S, gamma: S) -> S {
    let g2 = gamma * gamma;
    let t2 = t * t;
    if t.abs() < gamma {
        t2 * real::<S>(0.5) * (g2 * g2 - g2 * t2 + t2 * t2 / real(3.0))
    } else {
        g2 * g2 * g2 / real(6.0)
    }
}

/// Weight `rho'(t)/t = (g^2 - t^2)^2` for `|t| < g`, zero beyond the
/// cutoff (`g^4` at t = 0 by the limit).
pub fn tukey_weight<S: Real>(t: S, gamma: S) -> S {
    if t.abs() < gamma {
        let d = gamma * gamma - t * t;
        d * d
    } else {
        S::zero()
    }
}

// ---------------------------------------------------------------------------
// DFD
// ---------------------------------------------------------------------------

/// Displaced frame difference at one pixel: sample `g` at the model-warped
/// location of `pt_pixel` and subtract `f` there, plus the intensity shift.
/// `None` when the warped location exits `g`'s domain.
pub fn dfd<S: Real>(
    f: &ImageBuffer<S>,
    g: &ImageBuffer<S>,
    coeffs: &QuadraticFlowCoeffs<S>,
    pt_pixel: (S, S),
    intr: &Intrinsics<S>,
) -> Option<S> {
    let (x, y) = intr.pixel_to_focal(pt_pixel);
    let (u, v) = coeffs.flow_at((x, y));
    let (px, py) = intr.focal_to_pixel((x + u, y + v));
    let max_x = real::<S>((g.width() - 1) as f64);
    let max_y = real::<S>((g.height() - 1) as f64);
    if px < S::zero() || px > max_x || py < S::zero() || py > max_y {
        return None;
    }
    let (gs, _, _) = sample_bilinear_with_gradient(g, px, py);
    let (fi, fj) = (to_f64(pt_pixel.0) as usize, to_f64(pt_pixel.1) as usize);
    Some(gs - f.get(fi, fj) + coeffs.xi)
}

// ---------------------------------------------------------------------------
// Level solver
// ---------------------------------------------------------------------------

struct Sample<S> {
    x: S,
    y: S,
    r: S,
    gx: S,
    gy: S,
}

/// Residuals and sampled gradients of `g` at the model-warped location of
/// every pixel of `f` whose warp stays inside `g`. `xs` holds the
/// precomputed focal-unit column coordinates.
fn sample_pass<S: Real>(
    f: &ImageBuffer<S>,
    g: &ImageBuffer<S>,
    coeffs: &QuadraticFlowCoeffs<S>,
    intr: &Intrinsics<S>,
    xs: &[S],
    out: &mut Vec<Sample<S>>,
) {
    out.clear();
    let (w, h) = (f.width(), f.height());
    let f_data = f.samples();
    let g_data = g.samples();
    let max_x = real::<S>((w - 1) as f64);
    let max_y = real::<S>((h - 1) as f64);
    let one = S::one();
    for j in 0..h {
        let y = (real::<S>(j as f64) - intr.cy) / intr.focal_px;
        let row = &f_data[j * w..(j + 1) * w];
        for (i, &x) in xs.iter().enumerate() {
            let (u, v) = coeffs.flow_at((x, y));
            let px = (x + u) * intr.focal_px + intr.cx;
            let py = (y + v) * intr.focal_px + intr.cy;
            if !(px >= S::zero() && px <= max_x && py >= S::zero() && py <= max_y) {
                continue;
            }
            let x0 = px.to_usize().unwrap_or(0).min(w - 2);
            let y0 = py.to_usize().unwrap_or(0).min(h - 2);
            let fx = px - real(x0 as f64);
            let fy = py - real(y0 as f64);
            let base = y0 * w + x0;
            let v00 = g_data[base];
            let v10 = g_data[base + 1];
            let v01 = g_data[base + w];
            let v11 = g_data[base + w + 1];
            let gx = (one - fy) * (v10 - v00) + fy * (v11 - v01);
            let gy = (one - fx) * (v01 - v00) + fx * (v11 - v10);
            let val = (one - fy) * ((one - fx) * v00 + fx * v10)
                + fy * ((one - fx) * v01 + fx * v11);
            out.push(Sample {
                x,
                y,
                r: val - row[i] + coeffs.xi,
                gx,
                gy,
            });
        }
    }
}

fn objective<S: Real>(samples: &[Sample<S>], gamma: S) -> S {
    samples.iter().map(|s| tukey_rho(s.r, gamma)).sum()
}

/// Median via deterministic selection; upper median for even lengths.
fn median<S: Real>(values: &mut [S]) -> S {
    assert!(!values.is_empty());
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    *m
}

/// Robust residual scale: `1.4826 * median(|r - median(r)|)`, floored at
/// one gray level.
fn robust_scale<S: Real>(samples: &[Sample<S>]) -> S {
    let mut r: Vec<S> = samples.iter().map(|s| s.r).collect();
    let med = median(&mut r);
    let mut dev: Vec<S> = r.iter().map(|&v| (v - med).abs()).collect();
    let mad = median(&mut dev);
    (real::<S>(1.4826) * mad).max(S::one())
}

fn gamma_for<S: Real>(policy: GammaPolicy<S>, samples: &[Sample<S>]) -> S {
    match policy {
        GammaPolicy::Fixed(g) => g,
        GammaPolicy::MadScaled(c) => c * robust_scale(samples),
    }
}

/// Gaussian elimination with partial pivoting on the leading `n x n` block.
fn solve_dense<S: Real>(a: &mut [[S; 7]; 7], b: &mut [S; 7], n: usize) -> Option<[S; 7]> {
    let mut scale = S::zero();
    for row in a.iter().take(n) {
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
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] = a[row][k] - factor * a[col][k];
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    let mut x = [S::zero(); 7];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc = acc - a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

fn apply_step<S: Real>(c: &QuadraticFlowCoeffs<S>, delta: &[S; 7], step: S) -> QuadraticFlowCoeffs<S> {
    QuadraticFlowCoeffs {
        c1: c.c1 + step * delta[0],
        c2: c.c2 + step * delta[1],
        a1: c.a1 + step * delta[2],
        a2: c.a2 + step * delta[3],
        q1: c.q1 + step * delta[4],
        q2: c.q2 + step * delta[5],
        xi: c.xi + step * delta[6],
    }
}

/// One pyramid level of robust Gauss-Newton. Starts from `coeffs_init`,
/// iterates weighted normal-equation solves with step halving, and stops on
/// `step_tolerance` or the iteration cap. The robust objective is
/// non-increasing across accepted iterations.
pub fn irls_level_solve<S: Real>(
    f: &ImageBuffer<S>,
    g: &ImageBuffer<S>,
    coeffs_init: &QuadraticFlowCoeffs<S>,
    intr: &Intrinsics<S>,
    config: &EstimatorConfig<S>,
) -> Result<(QuadraticFlowCoeffs<S>, LevelStats<S>)> {
    if f.width() != g.width() || f.height() != g.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            f.width(),
            f.height(),
            g.width(),
            g.height()
        )));
    }
    let n_pixels = real::<S>((f.width() * f.height()) as f64);
    let n_unknowns = if config.estimate_xi { 7 } else { 6 };
    let xs: Vec<S> = (0..f.width())
        .map(|i| (real::<S>(i as f64) - intr.cx) / intr.focal_px)
        .collect();

    let mut coeffs = *coeffs_init;
    let mut samples = Vec::new();
    let mut candidate_samples = Vec::new();
    sample_pass(f, g, &coeffs, intr, &xs, &mut samples);
    if samples.is_empty() {
        return Err(Error::EmptySupport);
    }
    // Absorb any global intensity offset up front so the robust scale
    // measures spread, not bias. The shift enters the residuals linearly.
    if config.estimate_xi {
        let mut r: Vec<S> = samples.iter().map(|s| s.r).collect();
        let shift = median(&mut r);
        if shift != S::zero() {
            coeffs.xi = coeffs.xi - shift;
            for s in &mut samples {
                s.r = s.r - shift;
            }
        }
    }

    let mut iterations = 0;
    let mut gamma = gamma_for(config.gamma_policy, &samples);
    for _ in 0..config.max_iters_per_level {
        gamma = gamma_for(config.gamma_policy, &samples);
        let obj0 = objective(&samples, gamma);

        // Accumulate the weighted normal equations. Weights are normalized
        // by gamma^4 so the system stays well-scaled; the solution is
        // unchanged by that common factor.
        let mut a = [[S::zero(); 7]; 7];
        let mut grad = [S::zero(); 7];
        let mut support = 0usize;
        for s in &samples {
            let t = s.r / gamma;
            if t.abs() >= S::one() {
                continue;
            }
            let d = S::one() - t * t;
            let w = d * d;
            support += 1;
            let fx = intr.focal_px * s.gx;
            let fy = intr.focal_px * s.gy;
            let jac = [
                fx,
                fy,
                fx * s.x + fy * s.y,
                fx * s.y - fy * s.x,
                fx * s.x * s.x + fy * s.x * s.y,
                fx * s.x * s.y + fy * s.y * s.y,
                S::one(),
            ];
            for i in 0..n_unknowns {
                let wj = w * jac[i];
                for j in i..n_unknowns {
                    a[i][j] = a[i][j] + wj * jac[j];
                }
                grad[i] = grad[i] + wj * s.r;
            }
        }
        if support == 0 {
            return Err(Error::EmptySupport);
        }
        for i in 0..n_unknowns {
            for j in 0..i {
                a[i][j] = a[j][i];
            }
        }
        let mut rhs = [S::zero(); 7];
        for i in 0..n_unknowns {
            rhs[i] = -grad[i];
        }
        let delta = solve_dense(&mut a, &mut rhs, n_unknowns).ok_or(Error::SingularNormalEquations)?;

        // Step halving: accept the first candidate that does not increase
        // the objective at the current cutoff.
        let mut step = S::one();
        let mut accepted = false;
        for _ in 0..24 {
            let candidate = apply_step(&coeffs, &delta, step);
            sample_pass(f, g, &candidate, intr, &xs, &mut candidate_samples);
            if candidate_samples.is_empty() {
                step = step * real(0.5);
                continue;
            }
            if objective(&candidate_samples, gamma) <= obj0 {
                coeffs = candidate;
                std::mem::swap(&mut samples, &mut candidate_samples);
                accepted = true;
                break;
            }
            step = step * real(0.5);
        }
        if !accepted {
            break;
        }
        iterations += 1;

        let max_model_step = delta[..6]
            .iter()
            .fold(S::zero(), |m, &d| m.max((d * step).abs()));
        let xi_step = (delta[6] * step).abs() / real(255.0);
        if max_model_step.max(xi_step) <= config.step_tolerance {
            break;
        }
    }

    let scale = robust_scale(&samples);
    let support = samples
        .iter()
        .filter(|s| tukey_weight(s.r, gamma) > S::zero())
        .count();
    let stats = LevelStats {
        iterations,
        objective: objective(&samples, gamma),
        gamma,
        support_fraction: real::<S>(support as f64) / n_pixels,
        residual_scale: scale,
    };
    Ok((coeffs, stats))
}

/// Estimate the camera motion between two frames.
///
/// Pyramids of both frames are built down to `min_pyramid_dim`; the level
/// solver runs coarse to fine starting from zero motion. Coefficients
/// transfer unchanged between levels because the model lives in focal-unit
/// coordinates, which are resolution independent. The final coefficients
/// are converted to motion parameters.
pub fn estimate_motion<S: Real>(
    f: &ImageBuffer<S>,
    g: &ImageBuffer<S>,
    intr: &Intrinsics<S>,
    config: &EstimatorConfig<S>,
) -> Result<EstimateResult<S>> {
    if f.width() != g.width() || f.height() != g.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            f.width(),
            f.height(),
            g.width(),
            g.height()
        )));
    }
    intr.validate_for(f.width(), f.height())?;

    let pyr_f = build_pyramid(f, config.min_pyramid_dim);
    let pyr_g = build_pyramid(g, config.min_pyramid_dim);
    let mut intrs = Vec::with_capacity(pyr_f.len());
    let mut cur = *intr;
    for _ in 0..pyr_f.len() {
        intrs.push(cur);
        cur = cur.level_down();
    }

    let mut coeffs = QuadraticFlowCoeffs::zero();
    let mut iterations = Vec::with_capacity(pyr_f.len());
    let mut last_stats = None;
    for level in (0..pyr_f.len()).rev() {
        let (new_coeffs, stats) =
            irls_level_solve(&pyr_f[level], &pyr_g[level], &coeffs, &intrs[level], config)
                .map_err(|e| Error::AtLevel {
                    level,
                    source: Box::new(e),
                })?;
        coeffs = new_coeffs;
        iterations.push(stats.iterations);
        last_stats = Some(stats);
    }
    let stats = last_stats.expect("pyramid has at least one level");
    let params = params_from_coeffs(&coeffs);
    Ok(EstimateResult {
        params,
        diagnostics: Diagnostics {
            coeffs,
            xi: coeffs.xi,
            support_fraction: stats.support_fraction,
            iterations,
            final_residual_scale: stats.residual_scale,
        },
    })
}
