//! Post-hoc verification: replays a solver trace against the decrease
//! guarantees, the radius floor, the basin-phase success rule, and the
//! quadratic-tail contraction, measuring the smoothness constants the
//! bounds need from the trace itself. Every check reports its worst signed
//! margin so near-misses are visible.

use crate::budgets;
use crate::driver::{noise_decrease_tol, IterateSnapshot, TrConfig};
use crate::error::{Result, SaddleError};
use crate::manifold::{distance, retract, ManifoldKind, ManifoldPoint, TangentVector};
use crate::model::QuadraticModel;
use crate::problems::{Objective, StrictSaddleParams};
use crate::trace::{Outcome, Region, SolverKind, StepKind, TcgFlagColumn, TraceFile};

/// Cubic-error measurements need steps long enough for the gap to clear the
/// round-off floor of the function values.
pub const MEASURE_MIN_STEP_CUBIC: f64 = 1e-4;
/// Quadratic gradient-error measurements tolerate much shorter steps since
/// the pullback gradient is evaluated analytically.
pub const MEASURE_MIN_STEP_QUAD: f64 = 1e-6;
/// Gradient-ratio measurements need a pullback gradient above noise.
pub const MEASURE_MIN_PULLBACK: f64 = 1e-10;
/// Multiplicative slack on the quadratic-tail contraction constant.
pub const TAIL_SLACK: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Measured,
    Default,
    User,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::Default => "default",
            Provenance::User => "user",
        }
    }
}

/// Per-constant provenance tags.
#[derive(Debug, Clone, Copy)]
pub struct ConstantTags {
    pub l_h: Provenance,
    pub l_hat_h: Provenance,
    pub kappa_r: Provenance,
    pub nu_r: Provenance,
    pub nu_s: Provenance,
    pub kappa_s: Provenance,
}

/// Smoothness constants of the pullback used by the floors, phase
/// constants, and ceilings. `kappa_r` is clamped to ≥ 1 by construction.
#[derive(Debug, Clone)]
pub struct MeasuredConstants {
    /// Cubic bound: f(R_x(s)) ≤ m(s) + (L_H/6)‖s‖³.
    pub l_h: f64,
    /// Gradient bound: ‖∇f̂(s) − g − Hs‖ ≤ (L̂_H/2)‖s‖².
    pub l_hat_h: f64,
    /// ‖grad f(R_x(s))‖ ≤ κ_R‖∇f̂(s)‖ on short steps.
    pub kappa_r: f64,
    pub nu_r: f64,
    pub nu_s: f64,
    pub kappa_s: f64,
    pub tags: ConstantTags,
}

impl MeasuredConstants {
    pub fn defaults() -> Self {
        Self {
            l_h: 1.0,
            l_hat_h: 1.0,
            kappa_r: 1.0,
            nu_r: 1.0,
            nu_s: 1.0,
            kappa_s: 1.0,
            tags: ConstantTags {
                l_h: Provenance::Default,
                l_hat_h: Provenance::Default,
                kappa_r: Provenance::Default,
                nu_r: Provenance::Default,
                nu_s: Provenance::Default,
                kappa_s: Provenance::Default,
            },
        }
    }
}

/// Maxima of the smoothness ratios over the trace. Records whose steps are
/// too short to carry signal are excluded from each ratio; the defaults
/// stand in when nothing qualifies.
pub fn measure_constants(trace: &TraceFile, _objective: &dyn Objective) -> MeasuredConstants {
    let mut out = MeasuredConstants::defaults();
    let mut l_h_max: Option<f64> = None;
    let mut l_hat_max: Option<f64> = None;
    let mut kappa_r_max: Option<f64> = None;
    for r in &trace.records {
        let s = r.step_norm;
        if s >= MEASURE_MIN_STEP_CUBIC {
            // f_trial − m(s) with m(s) = f − model_decrease.
            let gap = r.f_trial - (r.f - r.model_decrease);
            let ratio = 6.0 * gap / (s * s * s);
            l_h_max = Some(l_h_max.map_or(ratio, |m: f64| m.max(ratio)));
        }
        if s >= MEASURE_MIN_STEP_QUAD {
            let ratio = 2.0 * r.pullback_gap / (s * s);
            l_hat_max = Some(l_hat_max.map_or(ratio, |m: f64| m.max(ratio)));
        }
        if r.pullback_grad_norm >= MEASURE_MIN_PULLBACK {
            let ratio = r.next_grad_norm / r.pullback_grad_norm;
            kappa_r_max = Some(kappa_r_max.map_or(ratio, |m: f64| m.max(ratio)));
        }
    }
    if let Some(v) = l_h_max {
        out.l_h = v.max(1e-12);
        out.tags.l_h = Provenance::Measured;
    }
    if let Some(v) = l_hat_max {
        out.l_hat_h = v.max(1e-12);
        out.tags.l_hat_h = Provenance::Measured;
    }
    if let Some(v) = kappa_r_max {
        out.kappa_r = v.max(1.0);
        out.tags.kappa_r = Provenance::Measured;
    }
    out
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    /// The inequality or rule being verified, in plain text.
    pub statement: &'static str,
    pub checked: usize,
    pub violations: usize,
    /// Smallest signed slack seen (negative means a violation of that size).
    pub worst_margin: f64,
    pub notes: Vec<String>,
}

impl CheckResult {
    fn new(name: &'static str, statement: &'static str) -> Self {
        Self {
            name,
            statement,
            checked: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            notes: Vec::new(),
        }
    }

    fn record(&mut self, margin: f64) {
        self.checked += 1;
        if margin < self.worst_margin {
            self.worst_margin = margin;
        }
        if margin < 0.0 {
            self.violations += 1;
        }
    }

    fn skip(&mut self, why: String) {
        self.notes.push(why);
    }
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub constants: MeasuredConstants,
    pub warnings: Vec<String>,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.violations == 0)
    }

    pub fn total_violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn failing_checks(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| c.violations > 0)
            .map(|c| c.name)
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<34} {:>8} {:>7} {:>13}  statement\n",
            "check", "checked", "viols", "worst_margin"
        ));
        for c in &self.checks {
            let margin = if c.checked == 0 {
                "-".to_string()
            } else {
                format!("{:+.3e}", c.worst_margin)
            };
            out.push_str(&format!(
                "{:<34} {:>8} {:>7} {:>13}  {}\n",
                c.name, c.checked, c.violations, margin, c.statement
            ));
            for n in &c.notes {
                out.push_str(&format!("    note: {n}\n"));
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out.push_str(&format!(
            "constants: L_H={:.6e} ({}), Lhat_H={:.6e} ({}), kappa_R={:.6e} ({}), nu_R={} ({}), kappa_S={} ({})\n",
            self.constants.l_h,
            self.constants.tags.l_h.as_str(),
            self.constants.l_hat_h,
            self.constants.tags.l_hat_h.as_str(),
            self.constants.kappa_r,
            self.constants.tags.kappa_r.as_str(),
            self.constants.nu_r,
            self.constants.tags.nu_r.as_str(),
            self.constants.kappa_s,
            self.constants.tags.kappa_s.as_str(),
        ));
        out.push_str(if self.pass() {
            "overall: PASS\n"
        } else {
            "overall: FAIL\n"
        });
        out
    }
}

fn slack(f_value: f64) -> f64 {
    1e-10 * f_value.abs().max(1.0)
}

fn tr_config_from_meta(trace: &TraceFile) -> TrConfig {
    let m = &trace.meta;
    TrConfig {
        delta0: m.delta0,
        delta_max: m.delta_max,
        eta1: m.eta1,
        eta2: m.eta2,
        tau1: m.tau1,
        tau2: m.tau2,
        eps_g: m.eps_g,
        eps_h: m.eps_h,
        max_outer_iterations: usize::MAX,
        max_hvp: None,
    }
}

/// Index of the first record inside the quadratic tail, if any: a basin
/// candidate whose gradient is below the phase-entry threshold.
fn tail_entry(
    trace: &TraceFile,
    params: &StrictSaddleParams,
    config: &TrConfig,
    constants: &MeasuredConstants,
) -> Option<usize> {
    let gamma = params.gamma;
    for (i, r) in trace.records.iter().enumerate() {
        if r.region != Region::R3Candidate {
            continue;
        }
        let threshold = match trace.meta.solver {
            SolverKind::Exact => {
                let c_q = budgets::c_q_exact(config, constants);
                (c_q * gamma.min(gamma * gamma).min(gamma * params.delta)).min(gamma * r.delta)
            }
            SolverKind::Inexact => {
                let c_q = budgets::c_q_inexact(config, constants);
                (c_q * 1.0f64
                    .min(gamma)
                    .min(gamma * gamma)
                    .min(gamma * params.delta))
                .min(gamma * r.delta)
            }
        };
        if r.grad_norm < threshold {
            return Some(i);
        }
    }
    None
}

/// Replays a trace against the full invariant suite.
pub fn verify_trace(
    trace: &TraceFile,
    objective: &dyn Objective,
    constants: Option<MeasuredConstants>,
    snapshots: Option<&[IterateSnapshot]>,
) -> Result<VerificationReport> {
    // Trace/objective agreement.
    if trace.meta.problem != objective.name() {
        return Err(SaddleError::TraceSchema(format!(
            "trace was produced for problem {:?} but the supplied objective is {:?}",
            trace.meta.problem,
            objective.name()
        )));
    }
    if trace.meta.ambient_dim != objective.manifold().ambient_dim() {
        return Err(SaddleError::TraceSchema(format!(
            "trace ambient dimension {} does not match objective dimension {}",
            trace.meta.ambient_dim,
            objective.manifold().ambient_dim()
        )));
    }
    if let Some(snaps) = snapshots {
        if snaps.len() != trace.records.len() {
            return Err(SaddleError::TraceSchema(format!(
                "{} snapshots for {} records",
                snaps.len(),
                trace.records.len()
            )));
        }
    }

    let constants = constants.unwrap_or_else(|| measure_constants(trace, objective));
    let params = trace.meta.params;
    let config = tr_config_from_meta(trace);
    let kappa_h = objective.hessian_norm_bound();
    let solver = trace.meta.solver;
    let records = &trace.records;
    let mut warnings = Vec::new();
    if records.is_empty() {
        warnings.push("empty trace: all checks pass vacuously".to_string());
    }

    let mut checks = Vec::new();

    // --- acceptance bookkeeping -------------------------------------------
    let mut rho_check = CheckResult::new(
        "rho_outcome_consistency",
        "rho = (f - f_trial)/model_decrease and the outcome label matches the thresholds",
    );
    for r in records {
        if r.model_decrease <= noise_decrease_tol(r.f) {
            // Below the round-off resolution of f the ratio is undefined;
            // the driver accepts such steps on the model's guarantee.
            continue;
        }
        let recomputed = (r.f - r.f_trial) / r.model_decrease;
        let rho_margin = 1e-8 * r.rho.abs().max(1.0) - (r.rho - recomputed).abs();
        let expected = if r.rho > trace.meta.eta2 {
            Outcome::VerySuccessful
        } else if r.rho >= trace.meta.eta1 {
            Outcome::Successful
        } else {
            Outcome::Unsuccessful
        };
        let near_threshold =
            (r.rho - trace.meta.eta1).abs() <= 1e-12 || (r.rho - trace.meta.eta2).abs() <= 1e-12;
        let label_margin = if expected == r.outcome || near_threshold {
            0.0
        } else {
            -1.0
        };
        rho_check.record(rho_margin.min(label_margin));
    }
    checks.push(rho_check);

    let mut radius_check = CheckResult::new(
        "radius_update_rule",
        "delta_{k+1} follows the very-successful/successful/unsuccessful update of delta_k",
    );
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let expected = match a.outcome {
            Outcome::VerySuccessful => (trace.meta.tau2 * a.delta).min(trace.meta.delta_max),
            Outcome::Successful => a.delta,
            Outcome::Unsuccessful => trace.meta.tau1 * a.delta,
        };
        let margin = 1e-12 * expected.max(1.0) - (b.delta - expected).abs();
        radius_check.record(margin);
    }
    if let Some(first) = records.first() {
        let margin = 1e-12 * trace.meta.delta0.max(1.0) - (first.delta - trace.meta.delta0).abs();
        radius_check.record(margin);
    }
    checks.push(radius_check);

    let mut monotone = CheckResult::new(
        "monotone_objective_decrease",
        "f decreases strictly (up to round-off slack) across every accepted iteration",
    );
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.outcome.accepted() {
            monotone.record(a.f - b.f + slack(a.f));
        }
    }
    if let Some(last) = records.last() {
        if last.outcome.accepted() {
            monotone.record(last.f - trace.meta.final_f + slack(last.f));
        }
    }
    checks.push(monotone);

    // --- decrease guarantees ----------------------------------------------
    let mut cauchy = CheckResult::new(
        "cauchy_decrease_large_gradient",
        "model_decrease >= 0.5*min(delta, alpha/kappa_H)*alpha on large-gradient records",
    );
    for r in records {
        let applies = match solver {
            SolverKind::Exact => r.region == Region::R1,
            SolverKind::Inexact => {
                r.grad_norm >= params.alpha
                    && matches!(
                        r.step_type,
                        StepKind::TcgSmallResidual
                            | StepKind::TcgNotStronglyConvex
                            | StepKind::TcgMaxIter
                            | StepKind::MeoCertificateThenTcg
                            | StepKind::CauchyFallback
                    )
            }
        };
        if applies {
            let bound = 0.5 * r.delta.min(params.alpha / kappa_h) * params.alpha;
            cauchy.record(r.model_decrease - bound + slack(r.f));
        }
    }
    checks.push(cauchy);

    if solver == SolverKind::Exact {
        let mut eigenstep = CheckResult::new(
            "eigenstep_decrease_negative_curvature",
            "model_decrease >= 0.5*beta*delta^2 on negative-curvature records",
        );
        for r in records {
            if r.region == Region::R2 {
                eigenstep
                    .record(r.model_decrease - 0.5 * params.beta * r.delta * r.delta + slack(r.f));
            }
        }
        checks.push(eigenstep);

        let mut convex = CheckResult::new(
            "strong_convexity_decrease",
            "model_decrease >= 0.5*gamma*step_norm^2 on basin-candidate records",
        );
        for r in records {
            if r.region == Region::R3Candidate {
                convex.record(
                    r.model_decrease - 0.5 * params.gamma * r.step_norm * r.step_norm + slack(r.f),
                );
            }
        }
        checks.push(convex);
    }

    let mut step_bound = CheckResult::new(
        "step_norm_bound_basin",
        "step_norm <= grad_norm/gamma on basin-candidate records",
    );
    for r in records {
        if r.region == Region::R3Candidate {
            let bound = r.grad_norm / params.gamma;
            step_bound.record(bound * (1.0 + 1e-8) + 1e-12 - r.step_norm);
        }
    }
    checks.push(step_bound);

    if solver == SolverKind::Inexact {
        let mut small_res = CheckResult::new(
            "tcg_small_residual_decrease",
            "model_decrease >= 0.25*gamma*step_norm^2 on small-residual steps",
        );
        let mut boundary = CheckResult::new(
            "tcg_boundary_decrease",
            "model_decrease >= 0.25*gamma*delta^2 on boundary steps",
        );
        let mut meo_dec = CheckResult::new(
            "meo_direction_decrease",
            "model_decrease >= 0.25*beta*delta^2 on oracle negative-curvature steps",
        );
        for r in records {
            let took_tcg_step = matches!(
                r.step_type,
                StepKind::TcgSmallResidual
                    | StepKind::TcgBoundary
                    | StepKind::TcgNotStronglyConvex
                    | StepKind::TcgMaxIter
                    | StepKind::MeoCertificateThenTcg
            );
            if took_tcg_step && r.tcg_flag == TcgFlagColumn::SmallResidual {
                small_res.record(
                    r.model_decrease - 0.25 * params.gamma * r.step_norm * r.step_norm + slack(r.f),
                );
            }
            if r.step_type == StepKind::TcgBoundary {
                boundary.record(
                    r.model_decrease - 0.25 * params.gamma * r.delta * r.delta + slack(r.f),
                );
            }
            if r.step_type == StepKind::MeoDirection {
                meo_dec
                    .record(r.model_decrease - 0.25 * params.beta * r.delta * r.delta + slack(r.f));
            }
        }
        checks.push(small_res);
        checks.push(boundary);
        checks.push(meo_dec);
    }

    // --- radius floor -------------------------------------------------------
    let mut floor_check = CheckResult::new(
        "radius_floor",
        "delta_k >= c_Delta * min(delta0, alpha^1/2, alpha^2/3, beta, gamma) with measured L_H",
    );
    let floor = match solver {
        SolverKind::Exact => budgets::delta_min_exact(&params, &config, constants.l_h, kappa_h),
        SolverKind::Inexact => budgets::delta_min_inexact(&params, &config, constants.l_h, kappa_h),
    };
    for r in records {
        floor_check.record(r.delta - floor * (1.0 - 1e-9));
    }
    checks.push(floor_check);

    // --- basin phase ---------------------------------------------------------
    if solver == SolverKind::Exact {
        let mut local_success = CheckResult::new(
            "local_phase_success",
            "basin-candidate records with grad_norm < 3(1-eta1)gamma^2/L_H are successful",
        );
        let threshold = 3.0 * (1.0 - trace.meta.eta1) * params.gamma * params.gamma / constants.l_h;
        for r in records {
            if r.region == Region::R3Candidate && r.grad_norm < threshold {
                local_success.record(if r.outcome.accepted() { 0.0 } else { -1.0 });
            }
        }
        checks.push(local_success);
    }

    let mut tail_check = CheckResult::new(
        "quadratic_tail",
        "after phase entry every record is successful and next_grad <= slack*C*grad^2",
    );
    let c_quad = match solver {
        SolverKind::Exact => {
            constants.kappa_r * constants.l_hat_h / (2.0 * params.gamma * params.gamma)
        }
        SolverKind::Inexact => {
            constants.kappa_r * (constants.l_hat_h + 2.0)
                / (2.0 * params.gamma.min(1.0) * params.gamma.min(1.0))
        }
    };
    // Gradient evaluations carry an absolute round-off floor.
    let n = trace.meta.ambient_dim.max(1) as f64;
    let tail_floor = 100.0 * f64::EPSILON * kappa_h.max(1.0) * n.sqrt();
    if let Some(start) = tail_entry(trace, &params, &config, &constants) {
        for r in &records[start..] {
            let success_margin: f64 = if r.outcome.accepted() { 0.0 } else { -1.0 };
            let contraction_margin = if r.outcome.accepted() {
                TAIL_SLACK * c_quad * r.grad_norm * r.grad_norm + tail_floor - r.next_grad_norm
            } else {
                0.0
            };
            tail_check.record(success_margin.min(contraction_margin));
        }
    }
    checks.push(tail_check);

    // --- iteration ceilings ---------------------------------------------------
    let (f0, f_star) = (
        records.first().map(|r| r.f).unwrap_or(trace.meta.final_f),
        objective.lower_bound(),
    );
    let inputs = budgets::BudgetInputs {
        params,
        config: config.clone(),
        constants: constants.clone(),
        kappa_h,
        f0,
        f_star,
        dim: objective.manifold().intrinsic_dim(),
        zeta: trace.meta.zeta,
        meo_failure_prob: trace.meta.meo_failure_prob,
    };
    let (succ_bound, total_bound) = match solver {
        SolverKind::Exact => (
            budgets::successful_bound_exact(&inputs),
            budgets::total_bound_exact(&inputs),
        ),
        SolverKind::Inexact => (
            budgets::successful_bound_inexact(&inputs),
            budgets::total_bound_inexact(&inputs),
        ),
    };
    let successful = records.iter().filter(|r| r.outcome.accepted()).count();
    let mut ceiling_succ = CheckResult::new(
        "iteration_ceiling_successful",
        "observed successful iterations stay below the worst-case ceiling",
    );
    if !records.is_empty() {
        ceiling_succ.record(succ_bound - successful as f64);
    }
    checks.push(ceiling_succ);
    let mut ceiling_total = CheckResult::new(
        "iteration_ceiling_total",
        "observed total iterations stay below the worst-case ceiling",
    );
    if !records.is_empty() {
        ceiling_total.record(total_bound - records.len() as f64);
    }
    checks.push(ceiling_total);

    // --- snapshot-level checks -------------------------------------------------
    let mut newton_check = CheckResult::new(
        "newton_step_interior",
        "interior steps equal the dense-solve Newton step on constant-Hessian objectives",
    );
    if let Some(snaps) = snapshots {
        if objective.has_constant_hessian() {
            for (r, snap) in records.iter().zip(snaps.iter()) {
                if r.step_norm < r.delta * (1.0 - 1e-9) && r.step_norm > 0.0 {
                    let x = ManifoldPoint::new(snap.point.clone(), objective.manifold())?;
                    let model = QuadraticModel::at_point(objective, &x);
                    let (basis, t) = model.densify();
                    let g_t = basis.transpose() * model.grad();
                    if let Some(chol) = nalgebra::Cholesky::new(t) {
                        let newton = basis * (-chol.solve(&g_t));
                        let diff = (&snap.step - &newton).norm();
                        newton_check.record(1e-10 - diff);
                    }
                }
            }
        } else {
            newton_check.skip("objective does not have a constant Hessian".to_string());
        }
    } else {
        newton_check.skip("no iterate snapshots supplied (file-based trace)".to_string());
    }
    checks.push(newton_check);

    let mut basin_distance = CheckResult::new(
        "tail_stays_near_minimizer",
        "accepted tail iterates stay within delta_ss of the known minimizer",
    );
    match (snapshots, objective.known_minimizer()) {
        (Some(snaps), Some(x_star)) => {
            if let Some(start) = tail_entry(trace, &params, &config, &constants) {
                let manifold = objective.manifold();
                let star = ManifoldPoint::new(x_star.clone(), manifold)?;
                // ±x* are both minimizers of a quadratic form on the sphere.
                let star_neg = match manifold {
                    ManifoldKind::Sphere { .. } => Some(ManifoldPoint::new(-x_star, manifold)?),
                    ManifoldKind::Euclidean { .. } => None,
                };
                for (r, snap) in records[start..].iter().zip(snaps[start..].iter()) {
                    if !r.outcome.accepted() {
                        continue;
                    }
                    let x = ManifoldPoint::new(snap.point.clone(), manifold)?;
                    let sv = TangentVector::new(snap.step.clone(), x.clone());
                    let next = retract(&x, &sv)?;
                    let mut d = distance(&next, &star)?;
                    if let Some(neg) = &star_neg {
                        d = d.min(distance(&next, neg)?);
                    }
                    basin_distance.record(params.delta - d);
                }
            }
        }
        (None, _) => basin_distance.skip("no iterate snapshots supplied".to_string()),
        (_, None) => basin_distance.skip("objective has no known minimizer".to_string()),
    }
    checks.push(basin_distance);

    Ok(VerificationReport {
        checks,
        constants,
        warnings,
    })
}
