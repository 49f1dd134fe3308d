//! The run / verify / budgets commands, factored out of main for testing.

use std::path::Path;

use anyhow::{Context, Result};

use saddletr_core::budgets::{theory_budgets, BudgetInputs, TheoryBudgets};
use saddletr_core::driver::{run_exact_rtr, run_inexact_rtr, TerminationReport};
use saddletr_core::trace::{SolverKind, TraceFile};
use saddletr_core::verify::{measure_constants, verify_trace, MeasuredConstants};

use crate::config::{build_experiment, load_config, Experiment};

/// Runs every repetition of the experiment, writes one trace file per run,
/// and prints one summary line per run. Returns the reports and whether all
/// runs converged. `base_dir` overrides the directory against which relative
/// paths inside the config resolve (used when the config was rewritten to a
/// temporary location by command-line overrides).
pub fn cmd_run(
    config_path: &Path,
    base_dir: Option<&Path>,
    out: &mut impl std::io::Write,
) -> Result<bool> {
    let cfg = load_config(config_path)?;
    let config_dir = base_dir
        .or_else(|| config_path.parent())
        .unwrap_or(Path::new("."));
    let exp = build_experiment(&cfg, config_dir)?;
    std::fs::create_dir_all(&exp.out_dir)
        .with_context(|| format!("cannot create output directory {}", exp.out_dir.display()))?;
    let mut all_converged = true;
    for rep in 0..exp.repetitions {
        let report = run_one(&exp, rep)?;
        let path = exp.trace_path(rep);
        trace_of(&exp, rep, &report).write_to(&path)?;
        writeln!(
            out,
            "run seed={} reason={} final_f={:.12e} final_grad={:.6e} iterations={} successful={} hvp={} trace={}",
            exp.base_seed + rep as u64,
            report.reason.as_str(),
            report.final_f,
            report.final_grad_norm,
            report.trace.len(),
            report.successful_iterations(),
            report.solver_hvp,
            path.display(),
        )?;
        all_converged &= report.reason.converged();
    }
    Ok(all_converged)
}

pub fn run_one(exp: &Experiment, rep: usize) -> Result<TerminationReport> {
    let x0 = exp.start_point(rep)?;
    let report = match &exp.inexact {
        None => run_exact_rtr(exp.objective.as_ref(), &exp.params, &exp.tr_config, &x0)?,
        Some(settings) => run_inexact_rtr(
            exp.objective.as_ref(),
            &exp.params,
            &exp.tr_config,
            settings,
            &x0,
        )?,
    };
    Ok(report)
}

pub fn trace_of(exp: &Experiment, rep: usize, report: &TerminationReport) -> TraceFile {
    let solver = if exp.inexact.is_some() {
        SolverKind::Inexact
    } else {
        SolverKind::Exact
    };
    report.to_trace_file(
        solver,
        exp.objective.as_ref(),
        &exp.params,
        &exp.tr_config,
        exp.base_seed + rep as u64,
        exp.inexact.as_ref(),
    )
}

/// Replays a trace file against the invariant suite. Prints the per-check
/// table and returns the overall pass flag.
pub fn cmd_verify(
    trace_path: &Path,
    config_path: &Path,
    out: &mut impl std::io::Write,
) -> Result<bool> {
    let cfg = load_config(config_path)?;
    let config_dir = config_path.parent().unwrap_or(Path::new("."));
    let exp = build_experiment(&cfg, config_dir)?;
    let trace = TraceFile::read_from(trace_path)
        .with_context(|| format!("cannot read trace {}", trace_path.display()))?;
    let constants = exp
        .user_constants
        .apply(measure_constants(&trace, exp.objective.as_ref()));
    let report = verify_trace(&trace, exp.objective.as_ref(), Some(constants), None)?;
    write!(out, "{}", report.render_table())?;
    Ok(report.pass())
}

pub struct BudgetReport {
    pub budgets: TheoryBudgets,
    pub constants: MeasuredConstants,
    pub observed: Option<ObservedCounts>,
}

pub struct ObservedCounts {
    pub successful: usize,
    pub total: usize,
    pub solver_hvp: usize,
}

/// Evaluates the worst-case budget formulas, optionally against an observed
/// trace. Exceedances are flagged in the output.
pub fn cmd_budgets(
    config_path: &Path,
    trace_path: Option<&Path>,
    out: &mut impl std::io::Write,
) -> Result<BudgetReport> {
    let cfg = load_config(config_path)?;
    let config_dir = config_path.parent().unwrap_or(Path::new("."));
    let exp = build_experiment(&cfg, config_dir)?;

    let trace = trace_path
        .map(|p| TraceFile::read_from(p).with_context(|| format!("cannot read {}", p.display())))
        .transpose()?;
    let constants = {
        let measured = match &trace {
            Some(t) => measure_constants(t, exp.objective.as_ref()),
            None => MeasuredConstants::defaults(),
        };
        exp.user_constants.apply(measured)
    };
    let f0 = match &trace {
        Some(t) => t.records.first().map(|r| r.f).unwrap_or(t.meta.final_f),
        None => exp.objective.eval(&exp.start_point(0)?),
    };
    let inputs = BudgetInputs {
        params: exp.params,
        config: exp.tr_config.clone(),
        constants: constants.clone(),
        kappa_h: exp.objective.hessian_norm_bound(),
        f0,
        f_star: exp.objective.lower_bound(),
        dim: exp.objective.manifold().intrinsic_dim(),
        zeta: exp.inexact.as_ref().map(|s| s.zeta),
        meo_failure_prob: exp.inexact.as_ref().map(|s| s.meo_failure_prob),
    };
    let budgets = theory_budgets(&inputs);

    writeln!(out, "worst-case budgets for {}", exp.objective.name())?;
    writeln!(
        out,
        "  constants: L_H={:.6e} ({}) Lhat_H={:.6e} ({}) kappa_R={:.6e} ({}) nu_R={} kappa_S={}",
        constants.l_h,
        constants.tags.l_h.as_str(),
        constants.l_hat_h,
        constants.tags.l_hat_h.as_str(),
        constants.kappa_r,
        constants.tags.kappa_r.as_str(),
        constants.nu_r,
        constants.kappa_s,
    )?;
    writeln!(out, "  exact loop:")?;
    writeln!(out, "    c_delta            = {:.6e}", budgets.c_delta)?;
    writeln!(out, "    radius_floor       = {:.6e}", budgets.delta_min)?;
    writeln!(out, "    c_q                = {:.6e}", budgets.c_q)?;
    writeln!(out, "    local_phase_cap    = {}", budgets.local_phase_cap)?;
    writeln!(
        out,
        "    successful_bound   = {:.6e}",
        budgets.successful_bound
    )?;
    writeln!(out, "    total_bound        = {:.6e}", budgets.total_bound)?;
    writeln!(out, "  inexact loop:")?;
    writeln!(
        out,
        "    c_delta            = {:.6e}",
        budgets.c_delta_inexact
    )?;
    writeln!(
        out,
        "    radius_floor       = {:.6e}",
        budgets.delta_min_inexact
    )?;
    writeln!(out, "    c_q                = {:.6e}", budgets.c_q_inexact)?;
    match (budgets.jcg, budgets.jmeo) {
        (Some(jcg), Some(jmeo)) => {
            writeln!(out, "    jcg_cap            = {jcg}")?;
            writeln!(out, "    jmeo_cap           = {jmeo}")?;
            writeln!(
                out,
                "    successful_bound   = {:.6e}",
                budgets.successful_bound_inexact.unwrap()
            )?;
            writeln!(
                out,
                "    total_bound        = {:.6e}",
                budgets.total_bound_inexact.unwrap()
            )?;
            writeln!(
                out,
                "    hvp_bound          = {:.6e}",
                budgets.hvp_bound.unwrap()
            )?;
        }
        _ => writeln!(out, "    (no tcg/meo settings: exact-only report)")?,
    }

    let observed = if let Some(t) = &trace {
        let successful = t.records.iter().filter(|r| r.outcome.accepted()).count();
        let counts = ObservedCounts {
            successful,
            total: t.records.len(),
            solver_hvp: t.meta.solver_hvp,
        };
        let (succ_bound, total_bound, hvp_bound) = match t.meta.solver {
            SolverKind::Exact => (budgets.successful_bound, budgets.total_bound, None),
            SolverKind::Inexact => (
                budgets.successful_bound_inexact.unwrap_or(f64::INFINITY),
                budgets.total_bound_inexact.unwrap_or(f64::INFINITY),
                budgets.hvp_bound,
            ),
        };
        writeln!(out, "  observed vs bounds ({}):", t.meta.solver.as_str())?;
        writeln!(
            out,
            "    successful {:>10} <= {:.6e}  {}",
            counts.successful,
            succ_bound,
            flag(counts.successful as f64, succ_bound)
        )?;
        writeln!(
            out,
            "    total      {:>10} <= {:.6e}  {}",
            counts.total,
            total_bound,
            flag(counts.total as f64, total_bound)
        )?;
        if let Some(hb) = hvp_bound {
            writeln!(
                out,
                "    hvp        {:>10} <= {:.6e}  {}",
                counts.solver_hvp,
                hb,
                flag(counts.solver_hvp as f64, hb)
            )?;
        }
        Some(counts)
    } else {
        None
    };

    Ok(BudgetReport {
        budgets,
        constants,
        observed,
    })
}

fn flag(observed: f64, bound: f64) -> &'static str {
    if observed <= bound {
        "ok"
    } else {
        "EXCEEDED"
    }
}
