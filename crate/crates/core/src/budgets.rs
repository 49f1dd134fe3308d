//! Worst-case budget calculators for the exact and inexact trust-region
//! loops: radius floors, quadratic-phase entry constants, iteration-count
//! ceilings, and the Hessian-vector-product ceiling of the inexact method.
//!
//! All bounds are evaluated numerically from the landscape parameters
//! (α, β, γ, δ), the trust-region configuration, and smoothness constants
//! that are measured from traces or supplied by the caller.

use crate::driver::TrConfig;
use crate::meo::{jmeo_cap, MeoConfig, MeoMode};
use crate::problems::StrictSaddleParams;
use crate::tcg::{jcg_cap, TcgConfig};
use crate::verify::MeasuredConstants;

/// Inputs of the budget calculators. `f0` is the starting objective value
/// and `f_star` the lower bound; `dim` is the tangent-space dimension.
#[derive(Debug, Clone)]
pub struct BudgetInputs {
    pub params: StrictSaddleParams,
    pub config: TrConfig,
    pub constants: MeasuredConstants,
    pub kappa_h: f64,
    pub f0: f64,
    pub f_star: f64,
    pub dim: usize,
    /// tCG accuracy parameter; None for exact-only reports.
    pub zeta: Option<f64>,
    /// Oracle failure probability; None for exact-only reports.
    pub meo_failure_prob: Option<f64>,
}

/// All computed budget values. Fields that require inexact settings are
/// None on exact-only reports.
#[derive(Debug, Clone)]
pub struct TheoryBudgets {
    // Exact loop.
    pub c_delta: f64,
    pub delta_min: f64,
    pub c_q: f64,
    /// Quadratic-phase iteration cap ⌈log₂log₂(2γ²/(κ_R·L̂_H·ε_g))⌉.
    pub local_phase_cap: f64,
    /// Ceiling on successful iterations of the exact loop.
    pub successful_bound: f64,
    /// Ceiling on total iterations of the exact loop.
    pub total_bound: f64,
    // Inexact loop.
    pub c_delta_inexact: f64,
    pub delta_min_inexact: f64,
    pub c_q_inexact: f64,
    pub successful_bound_inexact: Option<f64>,
    pub total_bound_inexact: Option<f64>,
    pub jcg: Option<usize>,
    pub jmeo: Option<usize>,
    /// max(J_CG, J_MEO)·K̃, the Hessian-vector-product ceiling.
    pub hvp_bound: Option<f64>,
}

fn underline(theta: f64) -> f64 {
    theta.min(1.0)
}

/// log₂ log₂ x, clamped to zero for arguments where the iterate count is
/// trivially zero.
pub fn log2_log2(x: f64) -> f64 {
    if x <= 2.0 {
        0.0
    } else {
        x.log2().log2()
    }
}

/// Quadratic-phase cap of the exact loop, as an integer ceiling.
pub fn local_phase_cap(gamma: f64, kappa_r_lhat: f64, eps_g: f64) -> f64 {
    log2_log2(2.0 * gamma * gamma / (kappa_r_lhat * eps_g)).ceil()
}

/// c_Δ = min(1, τ₁√(3(1−η₁)/L_H), τ₁·(3(1−η₁)/(κ_H·L_H))^⅓, 3τ₁(1−η₁)/L_H).
pub fn c_delta_exact(config: &TrConfig, l_h: f64, kappa_h: f64) -> f64 {
    let a = 3.0 * (1.0 - config.eta1);
    min_of(&[
        1.0,
        config.tau1 * (a / l_h).sqrt(),
        config.tau1 * (a / (kappa_h * l_h)).cbrt(),
        config.tau1 * a / l_h,
    ])
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Radius floor of the exact loop: c_Δ·min(Δ₀, α^½, α^⅔, β, γ).
pub fn delta_min_exact(
    params: &StrictSaddleParams,
    config: &TrConfig,
    l_h: f64,
    kappa_h: f64,
) -> f64 {
    c_delta_exact(config, l_h, kappa_h)
        * min_of(&[
            config.delta0,
            params.alpha.sqrt(),
            params.alpha.powf(2.0 / 3.0),
            params.beta,
            params.gamma,
        ])
}

/// c_Q = min(3(1−η₁)/L_H, ν_R, 1/κ_S, ½, 1/(κ_R·L̂_H)).
pub fn c_q_exact(config: &TrConfig, c: &MeasuredConstants) -> f64 {
    min_of(&[
        3.0 * (1.0 - config.eta1) / c.l_h,
        c.nu_r,
        1.0 / c.kappa_s,
        0.5,
        1.0 / (c.kappa_r * c.l_hat_h),
    ])
}

/// c̃_Δ = min(1, 3τ₁(1−η₁)/(2L_H), τ₁√(3(1−η₁)/(2L_H)), τ₁·(3(1−η₁)/(2κ_H·L_H))^⅓).
pub fn c_delta_inexact(config: &TrConfig, l_h: f64, kappa_h: f64) -> f64 {
    let a = 3.0 * (1.0 - config.eta1);
    min_of(&[
        1.0,
        config.tau1 * a / (2.0 * l_h),
        config.tau1 * (a / (2.0 * l_h)).sqrt(),
        config.tau1 * (a / (2.0 * kappa_h * l_h)).cbrt(),
    ])
}

pub fn delta_min_inexact(
    params: &StrictSaddleParams,
    config: &TrConfig,
    l_h: f64,
    kappa_h: f64,
) -> f64 {
    c_delta_inexact(config, l_h, kappa_h)
        * min_of(&[
            config.delta0,
            params.alpha.sqrt(),
            params.alpha.powf(2.0 / 3.0),
            params.beta,
            params.gamma,
        ])
}

/// c̃_Q = min(3(1−η₁)/(2L_H), ν_R, 1/κ_S, ½, 1/(κ_R·(2+L̂_H))).
pub fn c_q_inexact(config: &TrConfig, c: &MeasuredConstants) -> f64 {
    min_of(&[
        3.0 * (1.0 - config.eta1) / (2.0 * c.l_h),
        c.nu_r,
        1.0 / c.kappa_s,
        0.5,
        1.0 / (c.kappa_r * (2.0 + c.l_hat_h)),
    ])
}

/// Ceiling on successful iterations of the exact loop.
pub fn successful_bound_exact(inputs: &BudgetInputs) -> f64 {
    let p = &inputs.params;
    let cfg = &inputs.config;
    let c = &inputs.constants;
    let gap = inputs.f0 - inputs.f_star;
    let c_delta = c_delta_exact(cfg, c.l_h, inputs.kappa_h);
    let c_q = c_q_exact(cfg, c);
    let big_c = (gap / cfg.eta1)
        * (4.0 * max_of(&[inputs.kappa_h, 1.0 / (c_delta * cfg.delta0), 1.0 / c_delta])
            + 6.0
                * max_of(&[
                    1.0 / (c_delta * cfg.delta0 * c_delta * cfg.delta0),
                    1.0 / (c_delta * c_delta),
                ])
            + 2.0 / (c.nu_r * c.nu_r)
            + c.kappa_r
                * c.l_hat_h
                * max_of(&[1.0 / c_q, 1.0 / (c_delta * cfg.delta0), 1.0 / c_delta]));
    let (ua, ub, ug, ud) = (
        underline(p.alpha),
        underline(p.beta),
        underline(p.gamma),
        underline(p.delta),
    );
    let denom = min_of(&[
        ua * ua,
        ua.powf(4.0 / 3.0) * ub,
        ua.powf(4.0 / 3.0) * ug,
        ua.powf(2.0 / 3.0) * ug * ug,
        ub * ub * ub,
        ub * ub * ug,
        ub * ug * ug,
        ug * ug * ug,
        ug * ug * ud,
    ]);
    big_c / denom + 1.0 + log2_log2(2.0 * p.gamma * p.gamma / (c.kappa_r * c.l_hat_h * cfg.eps_g))
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Ceiling on total iterations of the exact loop (successful plus
/// unsuccessful).
pub fn total_bound_exact(inputs: &BudgetInputs) -> f64 {
    let p = &inputs.params;
    let cfg = &inputs.config;
    let c_delta = c_delta_exact(cfg, inputs.constants.l_h, inputs.kappa_h);
    let l = (1.0 / cfg.tau1).log(cfg.tau2);
    let succ = successful_bound_exact(inputs);
    let log_terms = max_of(&[
        0.0,
        (1.0 / c_delta).log(cfg.tau2),
        (cfg.delta0 / (c_delta * p.alpha.sqrt())).log(cfg.tau2),
        (cfg.delta0 / (c_delta * p.alpha.powf(2.0 / 3.0))).log(cfg.tau2),
        (cfg.delta0 / (c_delta * p.beta)).log(cfg.tau2),
        (cfg.delta0 / (c_delta * p.gamma)).log(cfg.tau2),
    ]);
    (1.0 + l) / l * succ + log_terms / l
}

/// Ceiling on successful iterations of the inexact loop (holds with
/// probability (1−p) per oracle call).
pub fn successful_bound_inexact(inputs: &BudgetInputs) -> f64 {
    let p = &inputs.params;
    let cfg = &inputs.config;
    let c = &inputs.constants;
    let gap = inputs.f0 - inputs.f_star;
    let c_delta = c_delta_inexact(cfg, c.l_h, inputs.kappa_h);
    let c_q = c_q_inexact(cfg, c);
    let big_c = (4.0 * gap / cfg.eta1)
        * (max_of(&[1.0 / (cfg.delta0 * cfg.delta0), 1.0])
            + max_of(&[inputs.kappa_h, 1.0 / (c_delta * cfg.delta0), 1.0 / c_delta])
            + 1.0 / (c.nu_r * c.nu_r)
            + 0.5
                * (c.kappa_r * c.kappa_r + 2.0 * c.l_hat_h * c.kappa_r)
                * max_of(&[
                    1.0 / (c_delta * cfg.delta0 * c_delta * cfg.delta0),
                    1.0 / (c_q * c_q),
                ]));
    let (ua, ub, ug, ud) = (
        underline(p.alpha),
        underline(p.beta),
        underline(p.gamma),
        underline(p.delta),
    );
    let denom = min_of(&[
        ua * ua,
        ua.powf(4.0 / 3.0) * ub,
        ua.powf(4.0 / 3.0) * ug,
        ub * ub * ub,
        ub * ub * ug,
        ub * ug * ug,
        ug * ug * ug,
        ug * ud * ud,
    ]);
    big_c / denom + 1.0 + log2_log2(2.0 * ug * ug / (c.kappa_r * c.l_hat_h * cfg.eps_g))
}

/// Ceiling on total iterations of the inexact loop.
pub fn total_bound_inexact(inputs: &BudgetInputs) -> f64 {
    let p = &inputs.params;
    let cfg = &inputs.config;
    let c_delta = c_delta_inexact(cfg, inputs.constants.l_h, inputs.kappa_h);
    let l = (1.0 / cfg.tau1).log(cfg.tau2);
    let succ = successful_bound_inexact(inputs);
    let (ua, ub, ug) = (underline(p.alpha), underline(p.beta), underline(p.gamma));
    let log_terms = max_of(&[
        0.0,
        (1.0 / c_delta).log(cfg.tau2),
        (cfg.delta0 / (c_delta * ua.powf(2.0 / 3.0))).log(cfg.tau2),
        (cfg.delta0 / (c_delta * ub)).log(cfg.tau2),
        (cfg.delta0 / (c_delta * ug)).log(cfg.tau2),
    ]);
    (1.0 + l) / l * succ + log_terms / l
}

/// Oracle iteration cap from bare inputs.
pub fn jmeo_cap_inputs(dim: usize, failure_prob: f64, kappa_h: f64, beta: f64) -> usize {
    jmeo_cap(&MeoConfig {
        beta,
        failure_prob,
        kappa_h,
        dim,
        mode: MeoMode::Lanczos,
        seed: 0,
    })
}

/// Computes the full budget report.
pub fn theory_budgets(inputs: &BudgetInputs) -> TheoryBudgets {
    let c = &inputs.constants;
    let kappa_h = inputs.kappa_h;
    let params = &inputs.params;
    let cfg = &inputs.config;

    let (jcg, jmeo, hvp_bound, succ_inexact, total_inexact) =
        match (inputs.zeta, inputs.meo_failure_prob) {
            (Some(zeta), Some(prob)) => {
                let jcg = jcg_cap(&TcgConfig {
                    zeta,
                    gamma: params.gamma,
                    kappa_h,
                    eps_g: cfg.eps_g,
                    dim: inputs.dim,
                });
                let jmeo = jmeo_cap(&MeoConfig {
                    beta: params.beta,
                    failure_prob: prob,
                    kappa_h,
                    dim: inputs.dim,
                    mode: MeoMode::Lanczos,
                    seed: 0,
                });
                let succ = successful_bound_inexact(inputs);
                let total = total_bound_inexact(inputs);
                let hvp = (jcg.max(jmeo) as f64) * total;
                (Some(jcg), Some(jmeo), Some(hvp), Some(succ), Some(total))
            }
            _ => (None, None, None, None, None),
        };

    TheoryBudgets {
        c_delta: c_delta_exact(cfg, c.l_h, kappa_h),
        delta_min: delta_min_exact(params, cfg, c.l_h, kappa_h),
        c_q: c_q_exact(cfg, c),
        local_phase_cap: local_phase_cap(params.gamma, c.kappa_r * c.l_hat_h, cfg.eps_g),
        successful_bound: successful_bound_exact(inputs),
        total_bound: total_bound_exact(inputs),
        c_delta_inexact: c_delta_inexact(cfg, c.l_h, kappa_h),
        delta_min_inexact: delta_min_inexact(params, cfg, c.l_h, kappa_h),
        c_q_inexact: c_q_inexact(cfg, c),
        successful_bound_inexact: succ_inexact,
        total_bound_inexact: total_inexact,
        jcg,
        jmeo,
        hvp_bound,
    }
}
