//! Minimum eigenvalue oracle: either certify λ_min(H) ≥ −β or return a
//! direction of curvature ≤ −β/2 scaled to the trust-region boundary.
//!
//! Two modes. Dense densifies the operator and eigendecomposes, which is
//! deterministic. Lanczos runs from a uniformly random unit tangent vector
//! with full reorthogonalization, tracking the minimum Ritz value of the
//! tridiagonal via Sturm bisection; a certificate produced this way is
//! correct with probability at least 1 − p.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SaddleError};
use crate::manifold::random_unit_tangent;
use crate::model::QuadraticModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeoMode {
    Lanczos,
    Dense,
}

impl MeoMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeoMode::Lanczos => "lanczos",
            MeoMode::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeoConfig {
    /// Negative-curvature threshold β > 0.
    pub beta: f64,
    /// Failure probability tolerance p ∈ [0, 1). p = 0 forces a full sweep.
    pub failure_prob: f64,
    pub kappa_h: f64,
    /// Tangent-space dimension.
    pub dim: usize,
    pub mode: MeoMode,
    pub seed: u64,
}

impl MeoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(SaddleError::InvalidParameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.failure_prob >= 0.0 && self.failure_prob < 1.0) {
            return Err(SaddleError::InvalidParameter(format!(
                "failure probability must lie in [0,1), got {}",
                self.failure_prob
            )));
        }
        if !(self.kappa_h > 0.0) || self.dim == 0 {
            return Err(SaddleError::InvalidParameter(
                "kappa_h must be positive and dim nonzero".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum MeoOutcome {
    /// Claim that λ_min(H) ≥ −β. Deterministic when produced by dense mode.
    Certificate {
        mode: MeoMode,
        min_eigenvalue_estimate: f64,
        hvp_count: usize,
    },
    /// Direction with ⟨g, s⟩ ≤ 0, ⟨s, Hs⟩ ≤ −½β‖s‖², ‖s‖ = Δ.
    Direction {
        step: DVector<f64>,
        /// ⟨s, Hs⟩/‖s‖² of the returned direction.
        curvature: f64,
        hvp_count: usize,
    },
}

impl MeoOutcome {
    pub fn hvp_count(&self) -> usize {
        match self {
            MeoOutcome::Certificate { hvp_count, .. } => *hvp_count,
            MeoOutcome::Direction { hvp_count, .. } => *hvp_count,
        }
    }

    pub fn is_certificate(&self) -> bool {
        matches!(self, MeoOutcome::Certificate { .. })
    }
}

/// Iteration cap min(n, 1 + ⌈½·ln(2.75·n/p²)·√(κ_H/β)⌉). A zero failure
/// probability requires the full sweep.
pub fn jmeo_cap(config: &MeoConfig) -> usize {
    let n = config.dim;
    if config.failure_prob == 0.0 {
        return n;
    }
    let log_arg = 2.75 * (n as f64) / (config.failure_prob * config.failure_prob);
    let formula = 1.0 + (0.5 * log_arg.ln() * (config.kappa_h / config.beta).sqrt()).ceil();
    n.min(formula as usize)
}

pub fn meo_run(model: &QuadraticModel<'_>, radius: f64, config: &MeoConfig) -> Result<MeoOutcome> {
    config.validate()?;
    model.validate_finite()?;
    if !(radius > 0.0) {
        return Err(SaddleError::InvalidParameter(
            "radius must be positive".into(),
        ));
    }
    match config.mode {
        MeoMode::Dense => meo_dense(model, radius, config),
        MeoMode::Lanczos => meo_lanczos(model, radius, config),
    }
}

fn meo_dense(model: &QuadraticModel<'_>, radius: f64, config: &MeoConfig) -> Result<MeoOutcome> {
    let hvp_start = model.hvp_count();
    let (basis, t) = model.densify();
    if t.iter().any(|v| !v.is_finite()) {
        return Err(SaddleError::InvalidModel(
            "Hessian operator produced non-finite entries".into(),
        ));
    }
    let hvp_count = model.hvp_count() - hvp_start;
    let eig = t.symmetric_eigen();
    let mut min_idx = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let lambda_min = eig.eigenvalues[min_idx];
    if lambda_min >= -config.beta {
        return Ok(MeoOutcome::Certificate {
            mode: MeoMode::Dense,
            min_eigenvalue_estimate: lambda_min,
            hvp_count,
        });
    }
    let direction = &basis * eig.eigenvectors.column(min_idx).into_owned();
    let step = scale_and_orient(direction, radius, model.grad());
    Ok(MeoOutcome::Direction {
        step,
        curvature: lambda_min,
        hvp_count,
    })
}

fn meo_lanczos(model: &QuadraticModel<'_>, radius: f64, config: &MeoConfig) -> Result<MeoOutcome> {
    let cap = jmeo_cap(config);
    let hvp_start = model.hvp_count();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let v0 = random_unit_tangent(model.base(), &mut rng);

    let n = v0.components.len();
    let mut alphas: Vec<f64> = Vec::with_capacity(cap);
    let mut betas: Vec<f64> = Vec::with_capacity(cap);
    let mut vectors: Vec<DVector<f64>> = vec![v0.components.clone()];
    let mut v = v0.components;
    let mut v_prev: DVector<f64> = DVector::zeros(n);
    let mut beta_prev = 0.0f64;
    let mut ritz_min = f64::INFINITY;

    for _ in 0..cap {
        let mut w = model.hess_vec(&v);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(SaddleError::InvalidModel(
                "Hessian operator produced non-finite entries".into(),
            ));
        }
        if beta_prev != 0.0 {
            w -= &v_prev * beta_prev;
        }
        let alpha = w.dot(&v);
        alphas.push(alpha);
        w -= &v * alpha;
        // Full reorthogonalization keeps ghost Ritz values from corrupting
        // the certificate at desk scale.
        for prev in &vectors {
            let proj = w.dot(prev);
            w -= prev * proj;
        }

        ritz_min = tridiag_min_eigenvalue(&alphas, &betas);
        if ritz_min <= -0.5 * config.beta {
            let step = ritz_direction(&alphas, &betas, &vectors, radius, model.grad());
            return Ok(MeoOutcome::Direction {
                step,
                curvature: ritz_min,
                hvp_count: model.hvp_count() - hvp_start,
            });
        }

        let beta_next = w.norm();
        if beta_next < 1e-14 {
            break; // invariant subspace exhausted
        }
        betas.push(beta_next);
        v_prev = v;
        beta_prev = beta_next;
        v = w / beta_next;
        vectors.push(v.clone());
    }

    Ok(MeoOutcome::Certificate {
        mode: MeoMode::Lanczos,
        min_eigenvalue_estimate: ritz_min,
        hvp_count: model.hvp_count() - hvp_start,
    })
}

/// Lanczos estimate of the smallest tangent-Hessian eigenvalue: runs up to
/// `max_iters` iterations with full reorthogonalization and returns the
/// final minimum Ritz value together with the products consumed.
pub fn lanczos_min_eig_estimate(
    model: &QuadraticModel<'_>,
    max_iters: usize,
    seed: u64,
) -> (f64, usize) {
    let hvp_start = model.hvp_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v0 = random_unit_tangent(model.base(), &mut rng);
    let n = v0.components.len();
    let mut alphas = Vec::with_capacity(max_iters);
    let mut betas = Vec::with_capacity(max_iters);
    let mut vectors = vec![v0.components.clone()];
    let mut v = v0.components;
    let mut v_prev: DVector<f64> = DVector::zeros(n);
    let mut beta_prev = 0.0f64;
    for _ in 0..max_iters.max(1) {
        let mut w = model.hess_vec(&v);
        if beta_prev != 0.0 {
            w -= &v_prev * beta_prev;
        }
        let alpha = w.dot(&v);
        alphas.push(alpha);
        w -= &v * alpha;
        for prev in &vectors {
            let proj = w.dot(prev);
            w -= prev * proj;
        }
        let beta_next = w.norm();
        if beta_next < 1e-14 {
            break;
        }
        betas.push(beta_next);
        v_prev = v;
        beta_prev = beta_next;
        v = w / beta_next;
        vectors.push(v.clone());
    }
    (
        tridiag_min_eigenvalue(&alphas, &betas),
        model.hvp_count() - hvp_start,
    )
}

fn scale_and_orient(direction: DVector<f64>, radius: f64, grad: &DVector<f64>) -> DVector<f64> {
    let mut step = &direction * (radius / direction.norm());
    // Ties ⟨g, s⟩ = 0 keep the computed sign.
    if step.dot(grad) > 0.0 {
        step = -step;
    }
    step
}

/// Minimum eigenvalue of the symmetric tridiagonal (alphas, betas) via Sturm
/// bisection to 1e-10 relative accuracy. Returns the upper end of the final
/// enclosure so a reported trigger is conservative.
fn tridiag_min_eigenvalue(alphas: &[f64], betas: &[f64]) -> f64 {
    let m = alphas.len();
    debug_assert_eq!(betas.len() + 1, m.max(1));
    if m == 1 {
        return alphas[0];
    }
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let mut r = 0.0;
        if i > 0 {
            r += betas[i - 1].abs();
        }
        if i < m - 1 {
            r += betas[i].abs();
        }
        lo = lo.min(alphas[i] - r);
        hi = hi.max(alphas[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let count_below = |x: f64| -> usize {
        // Sturm sequence: number of eigenvalues below x.
        let mut count = 0usize;
        let mut d = alphas[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..m {
            let denom = if d == 0.0 { 1e-300 } else { d };
            d = alphas[i] - x - betas[i - 1] * betas[i - 1] / denom;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let mut a = lo - 1e-12 * scale;
    let mut b = hi + 1e-12 * scale;
    while b - a > 1e-10 * scale {
        let mid = 0.5 * (a + b);
        if count_below(mid) >= 1 {
            b = mid;
        } else {
            a = mid;
        }
    }
    b
}

/// Ritz vector of the minimum eigenvalue of the current tridiagonal, lifted
/// through the Lanczos basis and scaled to the boundary.
fn ritz_direction(
    alphas: &[f64],
    betas: &[f64],
    vectors: &[DVector<f64>],
    radius: f64,
    grad: &DVector<f64>,
) -> DVector<f64> {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut min_idx = 0;
    for i in 1..m {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let w = eig.eigenvectors.column(min_idx);
    let n = vectors[0].len();
    let mut u = DVector::zeros(n);
    for (k, vk) in vectors.iter().take(m).enumerate() {
        u += vk * w[k];
    }
    scale_and_orient(u, radius, grad)
}
