//! Truncated conjugate gradient subsolver with curvature exits at the
//! strong-convexity constant γ, a strengthened small-residual rule, and a
//! hard iteration cap.
//!
//! The recurrence starts from y₀ = 0, r₀ = g, p₀ = −g. Before each CG update
//! the curvature of the Hessian along y_j and p_j is tested against γ; any
//! direction of curvature below γ is returned scaled to the trust-region
//! boundary. Each iteration consumes exactly one Hessian-vector product
//! (H p_j); the curvature of y_j is tracked by recurrence at no extra cost.

use nalgebra::DVector;

use crate::error::{Result, SaddleError};
use crate::model::QuadraticModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcgFlag {
    NotStronglyConvex,
    BoundaryStep,
    SmallResidual,
    MaxIter,
}

impl TcgFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            TcgFlag::NotStronglyConvex => "not_strongly_convex",
            TcgFlag::BoundaryStep => "boundary_step",
            TcgFlag::SmallResidual => "small_residual",
            TcgFlag::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TcgConfig {
    /// Accuracy parameter ζ ∈ (0, 1) of the small-residual rule.
    pub zeta: f64,
    /// Strong-convexity constant γ used by the curvature exits.
    pub gamma: f64,
    /// Operator-norm bound κ_H ≥ ‖H‖.
    pub kappa_h: f64,
    /// Gradient tolerance ε_g; enters only the iteration cap.
    pub eps_g: f64,
    /// Tangent-space dimension n.
    pub dim: usize,
}

impl TcgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(SaddleError::InvalidParameter(format!(
                "zeta must lie in (0,1), got {}",
                self.zeta
            )));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("kappa_h", self.kappa_h),
            ("eps_g", self.eps_g),
        ] {
            if !(v > 0.0) {
                return Err(SaddleError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.dim == 0 {
            return Err(SaddleError::InvalidParameter("dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TcgOutcome {
    /// Trial step in ambient coordinates, tangent at the model base.
    pub step: DVector<f64>,
    pub flag: TcgFlag,
    /// Completed CG iterations.
    pub iterations: usize,
    /// Hessian-vector products consumed.
    pub hvp_count: usize,
    /// ⟨s, Hs⟩ for the returned step, from tracked recurrences.
    pub step_hess_quad: f64,
    /// H·s for the returned step, from the same recurrences.
    pub step_hess_prod: DVector<f64>,
    /// ⟨s, g⟩ for the returned step.
    pub step_dot_g: f64,
    /// ⟨r, y⟩ at a small-residual exit (CG orthogonality diagnostic).
    pub residual_dot_y: Option<f64>,
    /// Residual norm at exit, when a residual was formed.
    pub residual_norm: Option<f64>,
    /// Search directions, recorded only when asked (conjugacy tests).
    pub directions: Option<Vec<DVector<f64>>>,
}

impl TcgOutcome {
    pub fn step_norm(&self) -> f64 {
        self.step.norm()
    }

    /// m(0) − m(s) from the tracked quadratic form (no extra products).
    pub fn model_decrease(&self) -> f64 {
        -self.step_dot_g - 0.5 * self.step_hess_quad
    }
}

/// Iteration cap: ⌈min(n, ½√(κ_H/γ)·ln((2√κ_H)/(ζ√γ)·max(ε_g⁻², ε_g⁻¹, κ_H/γ)))⌉,
/// floored at 1.
pub fn jcg_cap(config: &TcgConfig) -> usize {
    let ratio = config.kappa_h / config.gamma;
    let log_arg = (2.0 * config.kappa_h.sqrt() / (config.zeta * config.gamma.sqrt()))
        * (config.eps_g.powi(-2)).max(config.eps_g.recip()).max(ratio);
    let formula = 0.5 * ratio.sqrt() * log_arg.ln();
    let capped = (config.dim as f64).min(formula);
    (capped.ceil() as usize).max(1)
}

pub fn tcg_solve(
    model: &QuadraticModel<'_>,
    radius: f64,
    config: &TcgConfig,
    record_directions: bool,
) -> Result<TcgOutcome> {
    config.validate()?;
    model.validate_finite()?;
    if !(radius > 0.0) {
        return Err(SaddleError::InvalidParameter(
            "radius must be positive".into(),
        ));
    }
    let g = model.grad().clone();
    let g_norm = g.norm();
    if g_norm == 0.0 {
        return Err(SaddleError::Precondition(
            "truncated CG requires a nonzero gradient".into(),
        ));
    }

    let hvp_start = model.hvp_count();
    let cap = jcg_cap(config);
    let gamma = config.gamma;

    let n = g.len();
    let mut y: DVector<f64> = DVector::zeros(n);
    let mut r = g.clone();
    let mut p = -g.clone();
    // hy = H y_j, maintained by the recurrence hy += σ_j·(H p_j).
    let mut hy: DVector<f64> = DVector::zeros(n);
    let mut y_norm_sq = 0.0f64;
    let mut prev_y_norm = 0.0f64;
    let mut directions: Option<Vec<DVector<f64>>> = record_directions.then(Vec::new);

    #[allow(clippy::too_many_arguments)]
    let outcome = |step: DVector<f64>,
                   flag: TcgFlag,
                   iterations: usize,
                   hvp: usize,
                   quad: f64,
                   hs: DVector<f64>,
                   dot_g: f64,
                   r_dot_y: Option<f64>,
                   r_norm: Option<f64>,
                   dirs: Option<Vec<DVector<f64>>>| TcgOutcome {
        step,
        flag,
        iterations,
        hvp_count: hvp,
        step_hess_quad: quad,
        step_hess_prod: hs,
        step_dot_g: dot_g,
        residual_dot_y: r_dot_y,
        residual_norm: r_norm,
        directions: dirs,
    };

    let mut j = 0usize;
    while j < cap {
        // Curvature of the current iterate, tracked by recurrence; the test
        // is vacuous at y = 0 and explicitly skipped there.
        if y_norm_sq > 0.0 {
            let y_quad = y.dot(&hy);
            if y_quad < gamma * y_norm_sq {
                let scale = radius / y_norm_sq.sqrt();
                let step = &y * scale;
                let quad = y_quad * scale * scale;
                let dot_g = step.dot(&g);
                let hs = &hy * scale;
                return Ok(outcome(
                    step,
                    TcgFlag::NotStronglyConvex,
                    j,
                    model.hvp_count() - hvp_start,
                    quad,
                    hs,
                    dot_g,
                    None,
                    None,
                    directions,
                ));
            }
        }

        let hp = model.hess_vec(&p);
        let p_quad = p.dot(&hp);
        if !p_quad.is_finite() {
            return Err(SaddleError::InvalidModel(
                "non-finite curvature ⟨p, Hp⟩".into(),
            ));
        }
        let p_norm_sq = p.norm_squared();
        if p_quad < gamma * p_norm_sq {
            let scale = radius / p_norm_sq.sqrt();
            let step = &p * scale;
            let quad = p_quad * scale * scale;
            let dot_g = step.dot(&g);
            let hs = &hp * scale;
            return Ok(outcome(
                step,
                TcgFlag::NotStronglyConvex,
                j,
                model.hvp_count() - hvp_start,
                quad,
                hs,
                dot_g,
                None,
                None,
                directions,
            ));
        }
        if let Some(dirs) = directions.as_mut() {
            dirs.push(p.clone());
        }

        // Past the curvature tests p_quad ≥ γ‖p‖² > 0, so σ_j is well defined.
        let r_norm_sq = r.norm_squared();
        let sigma = r_norm_sq / p_quad;
        let y_next = &y + &p * sigma;
        let y_next_norm = y_next.norm();

        if y_next_norm >= radius {
            // Positive root of ‖y + σ̄p‖² = Δ², stable quadratic formula.
            let b = 2.0 * y.dot(&p);
            let c = y_norm_sq - radius * radius;
            let disc = (b * b - 4.0 * p_norm_sq * c).max(0.0).sqrt();
            let sigma_bar = if b <= 0.0 {
                (-b + disc) / (2.0 * p_norm_sq)
            } else {
                -2.0 * c / (b + disc)
            };
            let step = &y + &p * sigma_bar;
            let hstep = &hy + &hp * sigma_bar;
            let quad = step.dot(&hstep);
            let dot_g = step.dot(&g);
            debug_assert!(
                -dot_g - 0.5 * quad
                    >= 0.25 * gamma * radius * radius - 1e-10 * model.f0().abs().max(1.0),
                "boundary-step decrease fell below γΔ²/4"
            );
            return Ok(outcome(
                step,
                TcgFlag::BoundaryStep,
                j + 1,
                model.hvp_count() - hvp_start,
                quad,
                hstep,
                dot_g,
                None,
                None,
                directions,
            ));
        }

        let r_next = &r + &hp * sigma;
        let r_next_norm = r_next.norm();
        let rule = config.zeta * (g_norm * g_norm).min(g_norm).min(gamma * y_next_norm);
        // An exactly zero residual means the model is solved exactly, even if
        // the right-hand side of the rule has not become positive yet.
        if r_next_norm <= rule || r_next_norm == 0.0 {
            let hy_next = &hy + &hp * sigma;
            let quad = y_next.dot(&hy_next);
            let dot_g = y_next.dot(&g);
            let r_dot_y = r_next.dot(&y_next);
            debug_assert!(
                -dot_g - 0.5 * quad
                    >= 0.25 * gamma * y_next_norm * y_next_norm - 1e-10 * model.f0().abs().max(1.0),
                "small-residual decrease fell below γ‖s‖²/4"
            );
            return Ok(outcome(
                y_next,
                TcgFlag::SmallResidual,
                j + 1,
                model.hvp_count() - hvp_start,
                quad,
                hy_next,
                dot_g,
                Some(r_dot_y),
                Some(r_next_norm),
                directions,
            ));
        }

        let tau = (r_next_norm * r_next_norm) / r_norm_sq;
        p = -&r_next + &p * tau;
        r = r_next;
        hy += &hp * sigma;
        debug_assert!(
            y_next_norm >= prev_y_norm - 1e-12 * (1.0 + y_next_norm),
            "CG iterate norms must be nondecreasing"
        );
        prev_y_norm = y_next_norm;
        y = y_next;
        y_norm_sq = y_next_norm * y_next_norm;
        j += 1;
    }

    let quad = y.dot(&hy);
    let dot_g = y.dot(&g);
    let r_norm = r.norm();
    let hs = hy.clone();
    Ok(outcome(
        y,
        TcgFlag::MaxIter,
        j,
        model.hvp_count() - hvp_start,
        quad,
        hs,
        dot_g,
        None,
        Some(r_norm),
        directions,
    ))
}
