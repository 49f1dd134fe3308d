//! Solver trace: one record per outer iteration plus a self-describing
//! header. The text format is deterministic — floats are written with 17
//! significant digits so that write → read → write is byte-identical and
//! downstream verification is bit-faithful.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SaddleError};
use crate::problems::StrictSaddleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Exact,
    Inexact,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Exact => "exact",
            SolverKind::Inexact => "inexact",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverKind::Exact),
            "inexact" => Ok(SolverKind::Inexact),
            other => Err(SaddleError::Parse(format!("unknown solver kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    R1,
    R2,
    R3Candidate,
    Unknown,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::R1 => "R1",
            Region::R2 => "R2",
            Region::R3Candidate => "R3_candidate",
            Region::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "R1" => Ok(Region::R1),
            "R2" => Ok(Region::R2),
            "R3_candidate" => Ok(Region::R3Candidate),
            "unknown" => Ok(Region::Unknown),
            other => Err(SaddleError::Parse(format!("unknown region {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Exact,
    TcgSmallResidual,
    TcgBoundary,
    TcgNotStronglyConvex,
    TcgMaxIter,
    MeoDirection,
    MeoCertificateThenTcg,
    /// Safeguard outside the guaranteed regime: the subsolver direction had
    /// nonpositive model decrease, so the curvature-safeguarded steepest
    /// descent step was taken instead.
    CauchyFallback,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Exact => "exact",
            StepKind::TcgSmallResidual => "tcg_small_residual",
            StepKind::TcgBoundary => "tcg_boundary",
            StepKind::TcgNotStronglyConvex => "tcg_not_strongly_convex",
            StepKind::TcgMaxIter => "tcg_max_iter",
            StepKind::MeoDirection => "meo_direction",
            StepKind::MeoCertificateThenTcg => "meo_certificate_then_tcg",
            StepKind::CauchyFallback => "cauchy_fallback",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(StepKind::Exact),
            "tcg_small_residual" => Ok(StepKind::TcgSmallResidual),
            "tcg_boundary" => Ok(StepKind::TcgBoundary),
            "tcg_not_strongly_convex" => Ok(StepKind::TcgNotStronglyConvex),
            "tcg_max_iter" => Ok(StepKind::TcgMaxIter),
            "meo_direction" => Ok(StepKind::MeoDirection),
            "meo_certificate_then_tcg" => Ok(StepKind::MeoCertificateThenTcg),
            "cauchy_fallback" => Ok(StepKind::CauchyFallback),
            other => Err(SaddleError::Parse(format!("unknown step type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    VerySuccessful,
    Successful,
    Unsuccessful,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::VerySuccessful => "very_successful",
            Outcome::Successful => "successful",
            Outcome::Unsuccessful => "unsuccessful",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "very_successful" => Ok(Outcome::VerySuccessful),
            "successful" => Ok(Outcome::Successful),
            "unsuccessful" => Ok(Outcome::Unsuccessful),
            other => Err(SaddleError::Parse(format!("unknown outcome {other:?}"))),
        }
    }

    pub fn accepted(&self) -> bool {
        !matches!(self, Outcome::Unsuccessful)
    }
}

/// Flag of the inner tCG call, when one happened. `none` on exact records
/// and on pure oracle steps at zero gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcgFlagColumn {
    None,
    SmallResidual,
    Boundary,
    NotStronglyConvex,
    MaxIter,
}

impl TcgFlagColumn {
    pub fn as_str(&self) -> &'static str {
        match self {
            TcgFlagColumn::None => "none",
            TcgFlagColumn::SmallResidual => "small_residual",
            TcgFlagColumn::Boundary => "boundary_step",
            TcgFlagColumn::NotStronglyConvex => "not_strongly_convex",
            TcgFlagColumn::MaxIter => "max_iter",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TcgFlagColumn::None),
            "small_residual" => Ok(TcgFlagColumn::SmallResidual),
            "boundary_step" => Ok(TcgFlagColumn::Boundary),
            "not_strongly_convex" => Ok(TcgFlagColumn::NotStronglyConvex),
            "max_iter" => Ok(TcgFlagColumn::MaxIter),
            other => Err(SaddleError::Parse(format!("unknown tcg flag {other:?}"))),
        }
    }
}

/// One row of the solver trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub region: Region,
    pub step_type: StepKind,
    pub tcg_flag: TcgFlagColumn,
    pub outcome: Outcome,
    /// f(x_k).
    pub f: f64,
    /// ‖grad f(x_k)‖.
    pub grad_norm: f64,
    /// Δ_k.
    pub delta: f64,
    /// ρ_k.
    pub rho: f64,
    pub step_norm: f64,
    /// m(0) − m(s_k).
    pub model_decrease: f64,
    /// Hessian-vector products consumed by the subproblem machinery this
    /// iteration.
    pub hvp: usize,
    /// f(R_x(s_k)) at the trial point (also when rejected).
    pub f_trial: f64,
    /// ‖∇f̂(s_k) − g_k − H_k s_k‖, the second-order pullback gap.
    pub pullback_gap: f64,
    /// ‖∇f̂(s_k)‖.
    pub pullback_grad_norm: f64,
    /// ‖grad f(R_x(s_k))‖ at the trial point.
    pub next_grad_norm: f64,
}

pub const COLUMNS: &str = "k,region,step_type,tcg_flag,outcome,f,grad_norm,delta,rho,step_norm,model_decrease,hvp,f_trial,pullback_gap,pullback_grad_norm,next_grad_norm";

/// Header metadata carried by a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub solver: SolverKind,
    pub problem: String,
    pub ambient_dim: usize,
    pub seed: u64,
    pub params: StrictSaddleParams,
    pub eta1: f64,
    pub eta2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub delta0: f64,
    pub delta_max: f64,
    pub eps_g: f64,
    pub eps_h: f64,
    /// tCG accuracy parameter; inexact runs only.
    pub zeta: Option<f64>,
    pub meo_mode: Option<String>,
    pub meo_failure_prob: Option<f64>,
    pub meo_seed: Option<u64>,
    pub termination: String,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub min_eig_estimate: f64,
    pub solver_hvp: usize,
    pub telemetry_hvp: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub meta: TraceMeta,
    pub records: Vec<IterationRecord>,
}

/// 17 significant digits: enough for exact f64 round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| SaddleError::Parse(format!("bad float {s:?}: {e}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|e| SaddleError::Parse(format!("bad integer {s:?}: {e}")))
}

impl TraceFile {
    #[allow(clippy::inherent_to_string)]
    pub fn to_string(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        let _ = writeln!(out, "# saddletr trace v1");
        let _ = writeln!(out, "# solver = {}", m.solver.as_str());
        let _ = writeln!(out, "# problem = {}", m.problem);
        let _ = writeln!(out, "# ambient_dim = {}", m.ambient_dim);
        let _ = writeln!(out, "# seed = {}", m.seed);
        let _ = writeln!(out, "# alpha = {}", fmt_f64(m.params.alpha));
        let _ = writeln!(out, "# beta = {}", fmt_f64(m.params.beta));
        let _ = writeln!(out, "# gamma = {}", fmt_f64(m.params.gamma));
        let _ = writeln!(out, "# delta_ss = {}", fmt_f64(m.params.delta));
        let _ = writeln!(out, "# eta1 = {}", fmt_f64(m.eta1));
        let _ = writeln!(out, "# eta2 = {}", fmt_f64(m.eta2));
        let _ = writeln!(out, "# tau1 = {}", fmt_f64(m.tau1));
        let _ = writeln!(out, "# tau2 = {}", fmt_f64(m.tau2));
        let _ = writeln!(out, "# delta0 = {}", fmt_f64(m.delta0));
        let _ = writeln!(out, "# delta_max = {}", fmt_f64(m.delta_max));
        let _ = writeln!(out, "# eps_g = {}", fmt_f64(m.eps_g));
        let _ = writeln!(out, "# eps_h = {}", fmt_f64(m.eps_h));
        if let Some(z) = m.zeta {
            let _ = writeln!(out, "# zeta = {}", fmt_f64(z));
        }
        if let Some(mode) = &m.meo_mode {
            let _ = writeln!(out, "# meo_mode = {mode}");
        }
        if let Some(p) = m.meo_failure_prob {
            let _ = writeln!(out, "# meo_failure_prob = {}", fmt_f64(p));
        }
        if let Some(s) = m.meo_seed {
            let _ = writeln!(out, "# meo_seed = {s}");
        }
        let _ = writeln!(out, "# termination = {}", m.termination);
        let _ = writeln!(out, "# final_f = {}", fmt_f64(m.final_f));
        let _ = writeln!(out, "# final_grad_norm = {}", fmt_f64(m.final_grad_norm));
        let _ = writeln!(out, "# min_eig_estimate = {}", fmt_f64(m.min_eig_estimate));
        let _ = writeln!(out, "# solver_hvp = {}", m.solver_hvp);
        let _ = writeln!(out, "# telemetry_hvp = {}", m.telemetry_hvp);
        let _ = writeln!(out, "{COLUMNS}");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.k,
                r.region.as_str(),
                r.step_type.as_str(),
                r.tcg_flag.as_str(),
                r.outcome.as_str(),
                fmt_f64(r.f),
                fmt_f64(r.grad_norm),
                fmt_f64(r.delta),
                fmt_f64(r.rho),
                fmt_f64(r.step_norm),
                fmt_f64(r.model_decrease),
                r.hvp,
                fmt_f64(r.f_trial),
                fmt_f64(r.pullback_gap),
                fmt_f64(r.pullback_grad_norm),
                fmt_f64(r.next_grad_norm),
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = std::collections::HashMap::new();
        let mut lines = text.lines().peekable();
        let mut saw_version = false;
        while let Some(line) = lines.peek() {
            if !line.starts_with('#') {
                break;
            }
            let line = lines.next().unwrap();
            let body = line.trim_start_matches('#').trim();
            if body == "saddletr trace v1" {
                saw_version = true;
                continue;
            }
            if let Some((key, value)) = body.split_once('=') {
                kv.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        if !saw_version {
            return Err(SaddleError::Parse(
                "missing trace version line '# saddletr trace v1'".into(),
            ));
        }
        let get = |key: &str| -> Result<&String> {
            kv.get(key)
                .ok_or_else(|| SaddleError::Parse(format!("missing header field {key:?}")))
        };
        let params = StrictSaddleParams::new(
            parse_f64(get("alpha")?)?,
            parse_f64(get("beta")?)?,
            parse_f64(get("gamma")?)?,
            parse_f64(get("delta_ss")?)?,
        )?;
        let meta = TraceMeta {
            solver: SolverKind::parse(get("solver")?)?,
            problem: get("problem")?.clone(),
            ambient_dim: parse_usize(get("ambient_dim")?)?,
            seed: get("seed")?
                .parse::<u64>()
                .map_err(|e| SaddleError::Parse(format!("bad seed: {e}")))?,
            params,
            eta1: parse_f64(get("eta1")?)?,
            eta2: parse_f64(get("eta2")?)?,
            tau1: parse_f64(get("tau1")?)?,
            tau2: parse_f64(get("tau2")?)?,
            delta0: parse_f64(get("delta0")?)?,
            delta_max: parse_f64(get("delta_max")?)?,
            eps_g: parse_f64(get("eps_g")?)?,
            eps_h: parse_f64(get("eps_h")?)?,
            zeta: kv.get("zeta").map(|s| parse_f64(s)).transpose()?,
            meo_mode: kv.get("meo_mode").cloned(),
            meo_failure_prob: kv
                .get("meo_failure_prob")
                .map(|s| parse_f64(s))
                .transpose()?,
            meo_seed: kv
                .get("meo_seed")
                .map(|s| {
                    s.parse::<u64>()
                        .map_err(|e| SaddleError::Parse(format!("bad meo_seed: {e}")))
                })
                .transpose()?,
            termination: get("termination")?.clone(),
            final_f: parse_f64(get("final_f")?)?,
            final_grad_norm: parse_f64(get("final_grad_norm")?)?,
            min_eig_estimate: parse_f64(get("min_eig_estimate")?)?,
            solver_hvp: parse_usize(get("solver_hvp")?)?,
            telemetry_hvp: parse_usize(get("telemetry_hvp")?)?,
        };

        let header = lines
            .next()
            .ok_or_else(|| SaddleError::Parse("missing column header".into()))?;
        if header != COLUMNS {
            return Err(SaddleError::Parse(format!(
                "unexpected column header {header:?}"
            )));
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 16 {
                return Err(SaddleError::Parse(format!(
                    "record line {} has {} columns, expected 16",
                    lineno + 1,
                    cols.len()
                )));
            }
            records.push(IterationRecord {
                k: parse_usize(cols[0])?,
                region: Region::parse(cols[1])?,
                step_type: StepKind::parse(cols[2])?,
                tcg_flag: TcgFlagColumn::parse(cols[3])?,
                outcome: Outcome::parse(cols[4])?,
                f: parse_f64(cols[5])?,
                grad_norm: parse_f64(cols[6])?,
                delta: parse_f64(cols[7])?,
                rho: parse_f64(cols[8])?,
                step_norm: parse_f64(cols[9])?,
                model_decrease: parse_f64(cols[10])?,
                hvp: parse_usize(cols[11])?,
                f_trial: parse_f64(cols[12])?,
                pullback_gap: parse_f64(cols[13])?,
                pullback_grad_norm: parse_f64(cols[14])?,
                next_grad_norm: parse_f64(cols[15])?,
            });
        }
        Ok(TraceFile { meta, records })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_meta() -> TraceMeta {
        TraceMeta {
            solver: SolverKind::Inexact,
            problem: "rayleigh(10)".into(),
            ambient_dim: 10,
            seed: 3,
            params: StrictSaddleParams::new(0.1, 0.2, 0.2, 0.3).unwrap(),
            eta1: 0.1,
            eta2: 0.75,
            tau1: 0.25,
            tau2: 2.0,
            delta0: 1.0,
            delta_max: 100.0,
            eps_g: 1e-9,
            eps_h: 0.2,
            zeta: Some(0.5),
            meo_mode: Some("lanczos".into()),
            meo_failure_prob: Some(0.01),
            meo_seed: Some(42),
            termination: "target_reached".into(),
            final_f: 1.0,
            final_grad_norm: 1e-10,
            min_eig_estimate: 0.08,
            solver_hvp: 123,
            telemetry_hvp: 456,
        }
    }

    fn record(k: usize, f: f64) -> IterationRecord {
        IterationRecord {
            k,
            region: Region::R1,
            step_type: StepKind::TcgBoundary,
            tcg_flag: TcgFlagColumn::Boundary,
            outcome: Outcome::VerySuccessful,
            f,
            grad_norm: 0.5,
            delta: 1.0,
            rho: 0.99,
            step_norm: 1.0,
            model_decrease: 0.25,
            hvp: 7,
            f_trial: f - 0.2,
            pullback_gap: 1e-3,
            pullback_grad_norm: 0.4,
            next_grad_norm: 0.41,
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let tf = TraceFile {
            meta: sample_meta(),
            records: vec![record(0, 2.0), record(1, 1.8)],
        };
        let text = tf.to_string();
        let parsed = TraceFile::parse(&text).unwrap();
        assert_eq!(parsed, tf);
        assert_eq!(parsed.to_string(), text);
    }

    #[test]
    fn exact_meta_omits_inexact_fields() {
        let mut meta = sample_meta();
        meta.solver = SolverKind::Exact;
        meta.zeta = None;
        meta.meo_mode = None;
        meta.meo_failure_prob = None;
        meta.meo_seed = None;
        let tf = TraceFile {
            meta,
            records: vec![],
        };
        let text = tf.to_string();
        assert!(!text.contains("zeta"));
        let parsed = TraceFile::parse(&text).unwrap();
        assert_eq!(parsed.to_string(), text);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(TraceFile::parse("").is_err());
        assert!(TraceFile::parse("# saddletr trace v1\nk,region\n").is_err());
        let tf = TraceFile {
            meta: sample_meta(),
            records: vec![record(0, 2.0)],
        };
        let text = tf
            .to_string()
            .replace("very_successful", "sorta_successful");
        assert!(TraceFile::parse(&text).is_err());
    }

    proptest! {
        #[test]
        fn float_format_round_trips(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(v.to_bits(), back.to_bits());
            // And re-rendering produces the same bytes.
            prop_assert_eq!(fmt_f64(back), s);
        }
    }
}
