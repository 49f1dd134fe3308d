//! Outer trust-region loops: exact subproblem minimization and the inexact
//! variant that routes between truncated CG and the minimum eigenvalue
//! oracle using the landscape parameters.
//!
//! Hessian-vector products are split into two ledgers: `solver` counts
//! products the algorithm itself consumes (subproblem solves, tCG, oracle
//! calls), `telemetry` counts products spent on trace labeling and
//! diagnostics (region classification, stopping-test eigenvalue checks,
//! pullback gaps). Budget comparisons use the solver ledger.

use nalgebra::DVector;

use crate::error::{Result, SaddleError};
use crate::manifold::{retract, ManifoldPoint, TangentVector};
use crate::meo::{lanczos_min_eig_estimate, meo_run, MeoConfig, MeoMode, MeoOutcome};
use crate::model::QuadraticModel;
use crate::problems::{Objective, StrictSaddleParams};
use crate::subproblem::solve_exact;
use crate::tcg::{tcg_solve, TcgConfig, TcgFlag};
use crate::trace::{
    IterationRecord, Outcome, Region, SolverKind, StepKind, TcgFlagColumn, TraceFile, TraceMeta,
};

/// Gradient norms below 1e-15·κ_H are treated as exactly zero.
pub const ZERO_GRAD_FACTOR: f64 = 1e-15;
/// Predicted decreases below this multiple of the round-off in f cannot be
/// resolved by the ratio test.
pub const NOISE_DECREASE_FACTOR: f64 = 100.0;

/// Threshold under which f(x) − f(trial) is round-off and ρ is meaningless.
pub fn noise_decrease_tol(f_value: f64) -> f64 {
    NOISE_DECREASE_FACTOR * f64::EPSILON * f_value.abs().max(1.0)
}
/// Dense eigenvalue checks are used up to this tangent dimension.
pub const DENSE_EIG_DIM: usize = 200;

#[derive(Debug, Clone)]
pub struct TrConfig {
    pub delta0: f64,
    pub delta_max: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub eps_g: f64,
    pub eps_h: f64,
    pub max_outer_iterations: usize,
    /// Optional cap on solver-ledger Hessian-vector products.
    pub max_hvp: Option<usize>,
}

impl TrConfig {
    pub fn default_with(eps_g: f64, eps_h: f64) -> Self {
        Self {
            delta0: 1.0,
            delta_max: 100.0,
            eta1: 0.1,
            eta2: 0.75,
            tau1: 0.25,
            tau2: 2.0,
            eps_g,
            eps_h,
            max_outer_iterations: 10_000,
            max_hvp: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0 < self.delta_max) {
            return Err(SaddleError::InvalidParameter(format!(
                "need 0 < delta0 < delta_max, got {} and {}",
                self.delta0, self.delta_max
            )));
        }
        if !(self.eta1 > 0.0 && self.eta1 < self.eta2 && self.eta2 < 1.0) {
            return Err(SaddleError::InvalidParameter(format!(
                "need 0 < eta1 < eta2 < 1, got {} and {}",
                self.eta1, self.eta2
            )));
        }
        if !(self.tau1 > 0.0 && self.tau1 < 1.0 && self.tau2 > 1.0) {
            return Err(SaddleError::InvalidParameter(format!(
                "need 0 < tau1 < 1 < tau2, got {} and {}",
                self.tau1, self.tau2
            )));
        }
        if !(self.eps_g > 0.0 && self.eps_h > 0.0) {
            return Err(SaddleError::InvalidParameter(
                "tolerances eps_g and eps_h must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Subsolver settings of the inexact loop.
#[derive(Debug, Clone)]
pub struct InexactSettings {
    pub zeta: f64,
    pub meo_mode: MeoMode,
    pub meo_failure_prob: f64,
    pub meo_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    TargetReached,
    MeoCertificateAtZeroGradient,
    MaxIterations,
    BudgetExhausted,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::TargetReached => "target_reached",
            TerminationReason::MeoCertificateAtZeroGradient => "meo_certificate_at_zero_gradient",
            TerminationReason::MaxIterations => "max_iterations",
            TerminationReason::BudgetExhausted => "budget_exhausted",
        }
    }

    pub fn converged(&self) -> bool {
        matches!(
            self,
            TerminationReason::TargetReached | TerminationReason::MeoCertificateAtZeroGradient
        )
    }
}

/// Ambient-coordinate snapshot of one iteration, kept alongside the scalar
/// trace for verification routines that need the iterates themselves.
#[derive(Debug, Clone)]
pub struct IterateSnapshot {
    pub point: DVector<f64>,
    pub step: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct TerminationReport {
    pub reason: TerminationReason,
    pub final_point: ManifoldPoint,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub min_eigenvalue_estimate: f64,
    pub solver_hvp: usize,
    pub telemetry_hvp: usize,
    pub trace: Vec<IterationRecord>,
    pub snapshots: Vec<IterateSnapshot>,
}

impl TerminationReport {
    pub fn successful_iterations(&self) -> usize {
        self.trace.iter().filter(|r| r.outcome.accepted()).count()
    }

    /// Assembles the serializable trace file for this run.
    pub fn to_trace_file(
        &self,
        solver: SolverKind,
        objective: &dyn Objective,
        params: &StrictSaddleParams,
        config: &TrConfig,
        seed: u64,
        inexact: Option<&InexactSettings>,
    ) -> TraceFile {
        TraceFile {
            meta: TraceMeta {
                solver,
                problem: objective.name(),
                ambient_dim: objective.manifold().ambient_dim(),
                seed,
                params: *params,
                eta1: config.eta1,
                eta2: config.eta2,
                tau1: config.tau1,
                tau2: config.tau2,
                delta0: config.delta0,
                delta_max: config.delta_max,
                eps_g: config.eps_g,
                eps_h: config.eps_h,
                zeta: inexact.map(|s| s.zeta),
                meo_mode: inexact.map(|s| s.meo_mode.as_str().to_string()),
                meo_failure_prob: inexact.map(|s| s.meo_failure_prob),
                meo_seed: inexact.map(|s| s.meo_seed),
                termination: self.reason.as_str().to_string(),
                final_f: self.final_f,
                final_grad_norm: self.final_grad_norm,
                min_eig_estimate: self.min_eigenvalue_estimate,
                solver_hvp: self.solver_hvp,
                telemetry_hvp: self.telemetry_hvp,
            },
            records: self.trace.clone(),
        }
    }
}

/// Ratio test and radius update shared by both loops. Returns the outcome
/// label and the next radius.
pub fn acceptance_and_radius_update(rho: f64, delta: f64, config: &TrConfig) -> (Outcome, f64) {
    if rho > config.eta2 {
        (
            Outcome::VerySuccessful,
            (config.tau2 * delta).min(config.delta_max),
        )
    } else if rho >= config.eta1 {
        (Outcome::Successful, delta)
    } else {
        (Outcome::Unsuccessful, config.tau1 * delta)
    }
}

/// Region label from precomputed scalars. Large gradients win: the regions
/// may overlap and the decrease accounting partitions the others against R1.
pub fn classify_scalars(grad_norm: f64, lambda_min: f64, params: &StrictSaddleParams) -> Region {
    if grad_norm >= params.alpha {
        Region::R1
    } else if lambda_min <= -params.beta {
        Region::R2
    } else if lambda_min >= params.gamma {
        Region::R3Candidate
    } else {
        Region::Unknown
    }
}

/// Smallest tangent-Hessian eigenvalue at x and the Hessian-vector products
/// spent computing it: dense up to `DENSE_EIG_DIM`, Lanczos estimate beyond.
pub fn tangent_min_eigenvalue(objective: &dyn Objective, x: &ManifoldPoint) -> (f64, usize) {
    let model = QuadraticModel::at_point(objective, x);
    let dim = x.manifold.intrinsic_dim();
    if dim <= DENSE_EIG_DIM {
        let (_, t) = model.densify();
        let lmin = t.symmetric_eigen().eigenvalues.min();
        (lmin, model.hvp_count())
    } else {
        let iters = dim.min(150);
        let (est, used) = lanczos_min_eig_estimate(&model, iters, 0x5eed);
        (est, used)
    }
}

/// Region of x under the landscape parameters. The distance clause of the
/// basin region is not checkable without the minimizer, so points with
/// λ_min ≥ γ are reported as basin candidates only.
pub fn classify_region(
    objective: &dyn Objective,
    x: &ManifoldPoint,
    params: &StrictSaddleParams,
) -> (Region, usize) {
    let grad_norm = objective.gradient(x).norm();
    if grad_norm >= params.alpha {
        return (Region::R1, 0);
    }
    let (lmin, hvp) = tangent_min_eigenvalue(objective, x);
    (classify_scalars(grad_norm, lmin, params), hvp)
}

struct LoopState {
    x: ManifoldPoint,
    delta: f64,
    solver_hvp: usize,
    telemetry_hvp: usize,
    records: Vec<IterationRecord>,
    snapshots: Vec<IterateSnapshot>,
}

struct StepData {
    step: DVector<f64>,
    step_hess_prod: DVector<f64>,
    model_decrease: f64,
    step_type: StepKind,
    tcg_flag: TcgFlagColumn,
    hvp_this_iter: usize,
}

fn validate_start(objective: &dyn Objective, config: &TrConfig, x0: &ManifoldPoint) -> Result<()> {
    config.validate()?;
    let manifold = objective.manifold();
    if x0.manifold != manifold {
        return Err(SaddleError::ManifoldMismatch);
    }
    if config.delta_max > manifold.retraction_domain_radius() {
        return Err(SaddleError::InvalidParameter(
            "delta_max exceeds the retraction domain radius".into(),
        ));
    }
    Ok(())
}

fn finalize(
    objective: &dyn Objective,
    reason: TerminationReason,
    min_eig: Option<f64>,
    mut state: LoopState,
) -> TerminationReport {
    let final_f = objective.eval(&state.x);
    let final_grad_norm = objective.gradient(&state.x).norm();
    let min_eigenvalue_estimate = match min_eig {
        Some(v) => v,
        None => {
            let (v, cost) = tangent_min_eigenvalue(objective, &state.x);
            state.telemetry_hvp += cost;
            v
        }
    };
    TerminationReport {
        reason,
        final_point: state.x,
        final_f,
        final_grad_norm,
        min_eigenvalue_estimate,
        solver_hvp: state.solver_hvp,
        telemetry_hvp: state.telemetry_hvp,
        trace: state.records,
        snapshots: state.snapshots,
    }
}

/// Ratio test, bookkeeping, and iterate update shared by both loops.
fn apply_step(
    objective: &dyn Objective,
    config: &TrConfig,
    state: &mut LoopState,
    model: &QuadraticModel<'_>,
    k: usize,
    region: Region,
    data: StepData,
) -> Result<()> {
    let md = data.model_decrease;
    if !(md > 0.0) || !md.is_finite() {
        return Err(SaddleError::InternalInvariant(format!(
            "nonpositive model decrease {md:.3e} at iteration {k} ({:?}); \
             the decrease guarantees exclude this unless the landscape \
             parameters are inconsistent with the objective",
            data.step_type
        )));
    }
    let step_tangent = TangentVector::new(data.step.clone(), state.x.clone());
    let trial = retract(&state.x, &step_tangent)?;
    let f_trial = objective.eval(&trial);
    let rho = (model.f0() - f_trial) / md;
    // The model guarantees a decrease, but below the round-off resolution
    // of f the measured ratio is pure noise; rejecting such steps locks the
    // loop at the same iterate forever. Accept them on the model's word.
    let (outcome, new_delta) = if md <= noise_decrease_tol(model.f0()) {
        acceptance_and_radius_update(1.0, state.delta, config)
    } else {
        acceptance_and_radius_update(rho, state.delta, config)
    };

    // Diagnostics (telemetry; exact pullback gradient, no extra products).
    let pullback = objective.pullback_gradient(&state.x, &step_tangent)?;
    let pullback_gap = (&pullback.components - model.grad() - &data.step_hess_prod).norm();
    let next_grad_norm = objective.gradient(&trial).norm();

    state.records.push(IterationRecord {
        k,
        region,
        step_type: data.step_type,
        tcg_flag: data.tcg_flag,
        outcome,
        f: model.f0(),
        grad_norm: model.grad_norm(),
        delta: state.delta,
        rho,
        step_norm: data.step.norm(),
        model_decrease: md,
        hvp: data.hvp_this_iter,
        f_trial,
        pullback_gap,
        pullback_grad_norm: pullback.norm(),
        next_grad_norm,
    });
    state.snapshots.push(IterateSnapshot {
        point: state.x.coords.clone(),
        step: data.step,
    });
    if outcome.accepted() {
        state.x = trial;
    }
    state.delta = new_delta;
    Ok(())
}

/// Trust-region loop with exact subproblem minimization.
pub fn run_exact_rtr(
    objective: &dyn Objective,
    params: &StrictSaddleParams,
    config: &TrConfig,
    x0: &ManifoldPoint,
) -> Result<TerminationReport> {
    validate_start(objective, config, x0)?;
    let mut state = LoopState {
        x: x0.clone(),
        delta: config.delta0,
        solver_hvp: 0,
        telemetry_hvp: 0,
        records: Vec::new(),
        snapshots: Vec::new(),
    };

    for k in 0..config.max_outer_iterations {
        let model = QuadraticModel::at_point(objective, &state.x);
        model.validate_finite()?;
        let grad_norm = model.grad_norm();

        if grad_norm <= config.eps_g {
            let (lmin, cost) = tangent_min_eigenvalue(objective, &state.x);
            state.telemetry_hvp += cost;
            if lmin >= -config.eps_h {
                return Ok(finalize(
                    objective,
                    TerminationReason::TargetReached,
                    Some(lmin),
                    state,
                ));
            }
        }
        if let Some(cap) = config.max_hvp {
            if state.solver_hvp >= cap {
                return Ok(finalize(
                    objective,
                    TerminationReason::BudgetExhausted,
                    None,
                    state,
                ));
            }
        }

        let sol = solve_exact(&model, state.delta)?;
        state.solver_hvp += sol.hvp_cost;
        let region = classify_scalars(grad_norm, sol.min_eigenvalue(), params);
        let data = StepData {
            step: sol.step.clone(),
            step_hess_prod: sol.step_hess_prod.clone(),
            model_decrease: sol.model_decrease,
            step_type: StepKind::Exact,
            tcg_flag: TcgFlagColumn::None,
            hvp_this_iter: sol.hvp_cost,
        };
        apply_step(objective, config, &mut state, &model, k, region, data)?;
    }
    Ok(finalize(
        objective,
        TerminationReason::MaxIterations,
        None,
        state,
    ))
}

/// Minimizer of the model along −g inside the ball (one Hessian-vector
/// product). Has strictly positive decrease whenever g ≠ 0.
fn cauchy_step(model: &QuadraticModel<'_>, delta: f64) -> StepData {
    let g = model.grad();
    let g_norm = g.norm();
    let hg = model.hess_vec(g);
    let curvature = hg.dot(g);
    let t_boundary = delta / g_norm;
    let t = if curvature > 0.0 {
        (g_norm * g_norm / curvature).min(t_boundary)
    } else {
        t_boundary
    };
    let step = g * (-t);
    let step_hess_prod = hg * (-t);
    let model_decrease = t * g_norm * g_norm - 0.5 * t * t * curvature;
    StepData {
        step,
        step_hess_prod,
        model_decrease,
        step_type: StepKind::CauchyFallback,
        tcg_flag: TcgFlagColumn::None,
        hvp_this_iter: 1,
    }
}

fn tcg_flag_column(flag: TcgFlag) -> TcgFlagColumn {
    match flag {
        TcgFlag::SmallResidual => TcgFlagColumn::SmallResidual,
        TcgFlag::BoundaryStep => TcgFlagColumn::Boundary,
        TcgFlag::NotStronglyConvex => TcgFlagColumn::NotStronglyConvex,
        TcgFlag::MaxIter => TcgFlagColumn::MaxIter,
    }
}

fn tcg_step_kind(flag: TcgFlag) -> StepKind {
    match flag {
        TcgFlag::SmallResidual => StepKind::TcgSmallResidual,
        TcgFlag::BoundaryStep => StepKind::TcgBoundary,
        TcgFlag::NotStronglyConvex => StepKind::TcgNotStronglyConvex,
        TcgFlag::MaxIter => StepKind::TcgMaxIter,
    }
}

/// Trust-region loop with inexact subproblem minimization: truncated CG on
/// nonzero gradients, the minimum eigenvalue oracle when the gradient is
/// small and tCG could not certify strong convexity.
pub fn run_inexact_rtr(
    objective: &dyn Objective,
    params: &StrictSaddleParams,
    config: &TrConfig,
    settings: &InexactSettings,
    x0: &ManifoldPoint,
) -> Result<TerminationReport> {
    validate_start(objective, config, x0)?;
    if !(settings.zeta > 0.0 && settings.zeta < 1.0) {
        return Err(SaddleError::InvalidParameter(format!(
            "zeta must lie in (0,1), got {}",
            settings.zeta
        )));
    }
    let kappa_h = objective.hessian_norm_bound();
    let dim = objective.manifold().intrinsic_dim();
    let tcg_config = TcgConfig {
        zeta: settings.zeta,
        gamma: params.gamma,
        kappa_h,
        eps_g: config.eps_g,
        dim,
    };
    let zero_tol = ZERO_GRAD_FACTOR * kappa_h;
    let meo_config = |k: usize| MeoConfig {
        beta: params.beta,
        failure_prob: settings.meo_failure_prob,
        kappa_h,
        dim,
        mode: settings.meo_mode,
        seed: settings.meo_seed.wrapping_add(k as u64),
    };

    let mut state = LoopState {
        x: x0.clone(),
        delta: config.delta0,
        solver_hvp: 0,
        telemetry_hvp: 0,
        records: Vec::new(),
        snapshots: Vec::new(),
    };

    for k in 0..config.max_outer_iterations {
        let model = QuadraticModel::at_point(objective, &state.x);
        model.validate_finite()?;
        let grad_norm = model.grad_norm();

        // Region label for the trace (telemetry).
        let (lambda_min_tel, tel_cost) = tangent_min_eigenvalue(objective, &state.x);
        state.telemetry_hvp += tel_cost;
        let region = classify_scalars(grad_norm, lambda_min_tel, params);

        // The tolerance test wins over the zero-gradient oracle branch when
        // both would certify the point; the oracle branch remains the only
        // stop for zero-gradient points the tolerances do not cover.
        if grad_norm <= config.eps_g && lambda_min_tel >= -config.eps_h {
            return Ok(finalize(
                objective,
                TerminationReason::TargetReached,
                Some(lambda_min_tel),
                state,
            ));
        }

        if let Some(cap) = config.max_hvp {
            if state.solver_hvp >= cap {
                return Ok(finalize(
                    objective,
                    TerminationReason::BudgetExhausted,
                    None,
                    state,
                ));
            }
        }

        let data = if grad_norm <= zero_tol {
            // Zero gradient: consult the oracle directly.
            let hvp_before = state.solver_hvp;
            let out = meo_run(&model, state.delta, &meo_config(k))?;
            state.solver_hvp += out.hvp_count();
            match out {
                MeoOutcome::Certificate {
                    min_eigenvalue_estimate,
                    ..
                } => {
                    return Ok(finalize(
                        objective,
                        TerminationReason::MeoCertificateAtZeroGradient,
                        Some(min_eigenvalue_estimate),
                        state,
                    ));
                }
                MeoOutcome::Direction { step, .. } => {
                    let hs = model.hess_vec(&step);
                    state.solver_hvp += 1;
                    let quad = hs.dot(&step);
                    let dot_g = step.dot(model.grad());
                    StepData {
                        model_decrease: -dot_g - 0.5 * quad,
                        step,
                        step_hess_prod: hs,
                        step_type: StepKind::MeoDirection,
                        tcg_flag: TcgFlagColumn::None,
                        hvp_this_iter: state.solver_hvp - hvp_before,
                    }
                }
            }
        } else {
            let hvp_before = state.solver_hvp;
            let tout = tcg_solve(&model, state.delta, &tcg_config, false)?;
            state.solver_hvp += tout.hvp_count;

            if grad_norm >= params.alpha || tout.flag == TcgFlag::BoundaryStep {
                StepData {
                    step: tout.step.clone(),
                    step_hess_prod: tout.step_hess_prod.clone(),
                    model_decrease: tout.model_decrease(),
                    step_type: tcg_step_kind(tout.flag),
                    tcg_flag: tcg_flag_column(tout.flag),
                    hvp_this_iter: state.solver_hvp - hvp_before,
                }
            } else {
                // Small gradient without a boundary exit: ask the oracle.
                let out = meo_run(&model, state.delta, &meo_config(k))?;
                state.solver_hvp += out.hvp_count();
                match out {
                    MeoOutcome::Certificate { .. } => StepData {
                        step: tout.step.clone(),
                        step_hess_prod: tout.step_hess_prod.clone(),
                        model_decrease: tout.model_decrease(),
                        step_type: StepKind::MeoCertificateThenTcg,
                        tcg_flag: tcg_flag_column(tout.flag),
                        hvp_this_iter: state.solver_hvp - hvp_before,
                    },
                    MeoOutcome::Direction { step, .. } => {
                        let hs = model.hess_vec(&step);
                        state.solver_hvp += 1;
                        let quad = hs.dot(&step);
                        let dot_g = step.dot(model.grad());
                        StepData {
                            model_decrease: -dot_g - 0.5 * quad,
                            step,
                            step_hess_prod: hs,
                            step_type: StepKind::MeoDirection,
                            tcg_flag: tcg_flag_column(tout.flag),
                            hvp_this_iter: state.solver_hvp - hvp_before,
                        }
                    }
                }
            }
        };
        // A curvature-triggered direction scaled to the boundary need not
        // dominate the Cauchy point (the truncation can fire before the
        // first CG update), and can even carry nonpositive model decrease
        // when the supplied landscape parameters do not cover the current
        // point (curvature between −β and γ). Guard exactly those steps:
        // compare against the curvature-safeguarded steepest-descent step
        // and keep the better of the two.
        let nsc_step = data.tcg_flag == TcgFlagColumn::NotStronglyConvex
            && data.step_type != StepKind::MeoDirection;
        let data = if nsc_step {
            let cauchy = cauchy_step(&model, state.delta);
            state.solver_hvp += 1;
            if cauchy.model_decrease > data.model_decrease {
                StepData {
                    hvp_this_iter: data.hvp_this_iter + 1,
                    tcg_flag: data.tcg_flag,
                    ..cauchy
                }
            } else {
                StepData {
                    hvp_this_iter: data.hvp_this_iter + 1,
                    ..data
                }
            }
        } else {
            data
        };
        apply_step(objective, config, &mut state, &model, k, region, data)?;
    }
    Ok(finalize(
        objective,
        TerminationReason::MaxIterations,
        None,
        state,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        linspace, seeded_start, QuadraticProblem, RayleighProblem, StrictSaddleParams,
    };
    use nalgebra::DMatrix;

    fn quadratic_1_to_10() -> QuadraticProblem {
        let q = DMatrix::from_diagonal(&DVector::from_fn(10, |i, _| (i + 1) as f64));
        let b = &q * DVector::from_element(10, 1.0);
        QuadraticProblem::new(q, b).unwrap()
    }

    #[test]
    fn radius_update_rules() {
        let cfg = TrConfig {
            delta0: 1.0,
            delta_max: 10.0,
            eta1: 0.1,
            eta2: 0.75,
            tau1: 0.25,
            tau2: 2.0,
            eps_g: 1e-9,
            eps_h: 1.0,
            max_outer_iterations: 100,
            max_hvp: None,
        };
        let (o, d) = acceptance_and_radius_update(0.9, 1.0, &cfg);
        assert_eq!(o, Outcome::VerySuccessful);
        assert_eq!(d, 2.0);
        let (o, d) = acceptance_and_radius_update(0.5, 1.0, &cfg);
        assert_eq!(o, Outcome::Successful);
        assert_eq!(d, 1.0);
        let (o, d) = acceptance_and_radius_update(0.05, 1.0, &cfg);
        assert_eq!(o, Outcome::Unsuccessful);
        assert_eq!(d, 0.25);
        // Radius growth saturates at delta_max.
        let (_, d) = acceptance_and_radius_update(0.9, 8.0, &cfg);
        assert_eq!(d, 10.0);
    }

    #[test]
    fn classification_on_diagonal_rayleigh() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let p = RayleighProblem::new(a).unwrap();
        let params = StrictSaddleParams::new(1.0 / 3.0, 1.0, 1.0, 2.0 / 3.0).unwrap();
        let e2 = ManifoldPoint::new(DVector::from_vec(vec![0.0, 1.0, 0.0]), p.manifold()).unwrap();
        let e3 = ManifoldPoint::new(DVector::from_vec(vec![0.0, 0.0, 1.0]), p.manifold()).unwrap();
        assert_eq!(classify_region(&p, &e2, &params).0, Region::R2);
        assert_eq!(classify_region(&p, &e3, &params).0, Region::R3Candidate);
        // Any point with a large gradient is R1 regardless of curvature.
        let mixed =
            ManifoldPoint::new(DVector::from_vec(vec![0.6, 0.8, 0.0]), p.manifold()).unwrap();
        assert_eq!(classify_region(&p, &mixed, &params).0, Region::R1);
    }

    #[test]
    fn exact_on_quadratic_takes_newton_steps() {
        let p = quadratic_1_to_10();
        let params = p.saddle_params(1.0).unwrap();
        let config = TrConfig::default_with(1e-9, 1.0);
        let x0 = seeded_start(p.manifold(), 4, 10.0);
        let report = run_exact_rtr(&p, &params, &config, &x0).unwrap();
        assert_eq!(report.reason, TerminationReason::TargetReached);
        assert!(
            report.trace.len() <= 12,
            "took {} iterations",
            report.trace.len()
        );
        // Every iteration of an exact quadratic model has ρ = 1.
        for r in &report.trace {
            assert!((r.rho - 1.0).abs() < 1e-6, "rho = {}", r.rho);
            assert_eq!(r.outcome, Outcome::VerySuccessful);
        }
        // Interior steps match the global Newton step −Q⁻¹(Qx − b).
        let chol = nalgebra::Cholesky::new(p.q().clone()).unwrap();
        let mut interior_seen = false;
        for (r, snap) in report.trace.iter().zip(report.snapshots.iter()) {
            if r.step_norm < r.delta * (1.0 - 1e-9) {
                interior_seen = true;
                let g = p.q() * &snap.point - p.b();
                let newton = -chol.solve(&g);
                assert!(
                    (&snap.step - &newton).norm() <= 1e-10,
                    "interior step differs from Newton step by {}",
                    (&snap.step - newton).norm()
                );
            }
        }
        assert!(interior_seen, "no interior step in the whole run");
    }

    #[test]
    fn exact_terminates_immediately_when_target_holds() {
        let p = quadratic_1_to_10();
        let params = p.saddle_params(1.0).unwrap();
        let config = TrConfig::default_with(1e-6, 1.0);
        let x0 = ManifoldPoint::new(p.minimizer().clone(), p.manifold()).unwrap();
        let report = run_exact_rtr(&p, &params, &config, &x0).unwrap();
        assert_eq!(report.reason, TerminationReason::TargetReached);
        assert!(report.trace.is_empty());
    }

    #[test]
    fn exact_rayleigh_converges_to_bottom_eigenvector() {
        let p = RayleighProblem::from_spectrum(&linspace(1.0, 3.0, 8), 11).unwrap();
        let params = p.saddle_params(1.0).unwrap();
        let mut config = TrConfig::default_with(1e-9, params.beta);
        config.eps_h = 2.0 / 7.0;
        let x0 = seeded_start(p.manifold(), 0, 1.0);
        let report = run_exact_rtr(&p, &params, &config, &x0).unwrap();
        assert_eq!(report.reason, TerminationReason::TargetReached);
        assert!((report.final_f - p.min_eigenvalue()).abs() <= 1e-8);
    }

    #[test]
    fn inexact_zero_gradient_at_minimizer_reports_target() {
        let p = quadratic_1_to_10();
        let params = p.saddle_params(1.0).unwrap();
        let config = TrConfig::default_with(1e-9, 1.0);
        let settings = InexactSettings {
            zeta: 0.5,
            meo_mode: MeoMode::Dense,
            meo_failure_prob: 0.0,
            meo_seed: 1,
        };
        let x0 = ManifoldPoint::new(p.minimizer().clone(), p.manifold()).unwrap();
        let report = run_inexact_rtr(&p, &params, &config, &settings, &x0).unwrap();
        assert_eq!(report.reason, TerminationReason::TargetReached);
        assert!(report.trace.is_empty());
    }

    #[test]
    fn inexact_certificate_at_zero_gradient_terminates() {
        // A zero-gradient point the tolerance test does not certify
        // (λ_min < −eps_H) but the oracle does (λ_min > −β): the run stops
        // with the oracle-certificate reason, returning the current point.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let p = RayleighProblem::new(a).unwrap();
        // λ_min(Hess) at the middle eigenvector is −2.
        let params = StrictSaddleParams::new(0.5, 3.0, 0.5, 1.0).unwrap();
        let config = TrConfig::default_with(1e-9, 1.0);
        let settings = InexactSettings {
            zeta: 0.5,
            meo_mode: MeoMode::Dense,
            meo_failure_prob: 0.0,
            meo_seed: 1,
        };
        let x0 = ManifoldPoint::new(DVector::from_vec(vec![0.0, 1.0, 0.0]), p.manifold()).unwrap();
        let report = run_inexact_rtr(&p, &params, &config, &settings, &x0).unwrap();
        assert_eq!(
            report.reason,
            TerminationReason::MeoCertificateAtZeroGradient
        );
        assert!((report.min_eigenvalue_estimate + 2.0).abs() < 1e-10);
    }

    #[test]
    fn inexact_escapes_exact_saddle_start() {
        // Start exactly at the middle eigenvector of a diagonal matrix: the
        // gradient is exactly zero and only the oracle can move.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let p = RayleighProblem::new(a).unwrap();
        let params = p.saddle_params(1.0).unwrap();
        let config = TrConfig::default_with(1e-9, 1.0);
        let settings = InexactSettings {
            zeta: 0.5,
            meo_mode: MeoMode::Dense,
            meo_failure_prob: 0.0,
            meo_seed: 5,
        };
        let x0 = ManifoldPoint::new(DVector::from_vec(vec![0.0, 1.0, 0.0]), p.manifold()).unwrap();
        let report = run_inexact_rtr(&p, &params, &config, &settings, &x0).unwrap();
        // Cubic tail convergence can drop the gradient straight below the
        // exact-zero threshold, in which case the zero-gradient certificate
        // branch stops the run instead of the tolerance test.
        assert!(report.reason.converged(), "reason {:?}", report.reason);
        assert!((report.final_f - 1.0).abs() <= 1e-8);
        assert!(report
            .trace
            .iter()
            .any(|r| r.step_type == StepKind::MeoDirection));
    }

    #[test]
    fn inexact_rayleigh_converges_with_lanczos_oracle() {
        let p = RayleighProblem::from_spectrum(&linspace(1.0, 3.0, 10), 23).unwrap();
        let params = p.saddle_params(1.0).unwrap();
        let config = TrConfig::default_with(1e-9, params.beta);
        let settings = InexactSettings {
            zeta: 0.5,
            meo_mode: MeoMode::Lanczos,
            meo_failure_prob: 0.01,
            meo_seed: 9,
        };
        let x0 = seeded_start(p.manifold(), 2, 1.0);
        let report = run_inexact_rtr(&p, &params, &config, &settings, &x0).unwrap();
        assert_eq!(report.reason, TerminationReason::TargetReached);
        assert!((report.final_f - p.min_eigenvalue()).abs() <= 1e-8);
        // Large-gradient records never take oracle directions.
        for r in &report.trace {
            if r.grad_norm >= params.alpha {
                assert_ne!(r.step_type, StepKind::MeoDirection);
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let p = quadratic_1_to_10();
        let params = p.saddle_params(1.0).unwrap();
        let mut config = TrConfig::default_with(1e-9, 1.0);
        config.eta1 = 0.9; // violates eta1 < eta2
        let x0 = seeded_start(p.manifold(), 0, 1.0);
        assert!(run_exact_rtr(&p, &params, &config, &x0).is_err());
    }
}
