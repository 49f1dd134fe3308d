//! Experiment configuration: a single TOML file describing the problem, the
//! solver, the landscape parameters, and the run plan. Seeds are explicit
//! everywhere — there are no entropy defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use saddletr_core::driver::{InexactSettings, TrConfig};
use saddletr_core::manifold::ManifoldPoint;
use saddletr_core::meo::MeoMode;
use saddletr_core::problems::{
    linspace, parse_dense_matrix, seeded_start, start_near_eigenvector, Objective,
    QuadraticProblem, RayleighProblem, StrictSaddleParams,
};
use saddletr_core::verify::{MeasuredConstants, Provenance};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub params: ParamsSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub tcg: TcgSection,
    #[serde(default)]
    pub meo: MeoSection,
    pub run: RunSection,
    #[serde(default)]
    pub constants: ConstantsSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// "rayleigh" (sphere) or "quadratic" (Euclidean).
    pub kind: String,
    pub dim: usize,
    /// Spectrum recipe, conjugated by a seeded random orthogonal matrix.
    pub spectrum: Option<SpectrumSpec>,
    /// Conjugation seed; required together with `spectrum`.
    pub seed: Option<u64>,
    /// Inline dense matrix (row-major), alternative to `spectrum`.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Whitespace-delimited dense matrix file, alternative to `spectrum`.
    pub matrix_file: Option<PathBuf>,
    /// Linear term of a quadratic problem; zeros when omitted.
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Linspace { lo: f64, hi: f64 },
    Values { values: Vec<f64> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    /// Scale of the derived landscape parameters for the sphere problem.
    pub c: Option<f64>,
    /// Gradient threshold for the quadratic problem (defaults to 1).
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// "exact" or "inexact".
    pub kind: String,
    pub delta0: Option<f64>,
    pub delta_max: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub eps_g: f64,
    /// Defaults to the landscape parameter beta.
    pub eps_h: Option<f64>,
    pub max_outer_iterations: Option<usize>,
    pub max_hvp: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcgSection {
    pub zeta: f64,
}

impl Default for TcgSection {
    fn default() -> Self {
        Self { zeta: 0.5 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeoSection {
    /// "lanczos" or "dense".
    pub mode: String,
    pub failure_prob: f64,
    pub seed: u64,
}

impl Default for MeoSection {
    fn default() -> Self {
        Self {
            mode: "lanczos".into(),
            failure_prob: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub start: StartSpec,
    /// Base seed of the run plan; run i uses seed + i.
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    pub out_dir: Option<PathBuf>,
    /// Trace filename stem; defaults to the problem name.
    pub label: Option<String>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartSpec {
    /// Uniform on the sphere / Gaussian scaled to `norm` on Euclidean space.
    Random {
        #[serde(default = "default_norm")]
        norm: f64,
    },
    /// Within `offset` of the eigenvector with 1-based index `index`
    /// (counted from the largest eigenvalue). Sphere problems only.
    NearEigenvector { index: usize, offset: f64 },
    /// Explicit coordinates.
    Coords { values: Vec<f64> },
}

fn default_norm() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub l_h: Option<f64>,
    pub l_hat_h: Option<f64>,
    pub kappa_r: Option<f64>,
    pub nu_r: Option<f64>,
    pub nu_s: Option<f64>,
    pub kappa_s: Option<f64>,
}

/// Everything needed to execute runs, resolved and validated.
pub struct Experiment {
    pub objective: Box<dyn Objective>,
    pub rayleigh: Option<RayleighProblem>,
    pub params: StrictSaddleParams,
    pub tr_config: TrConfig,
    pub inexact: Option<InexactSettings>,
    pub start: StartSpec,
    pub base_seed: u64,
    pub repetitions: usize,
    pub out_dir: PathBuf,
    pub label: String,
    pub user_constants: ConstantsOverride,
}

#[derive(Debug, Clone, Default)]
pub struct ConstantsOverride {
    pub l_h: Option<f64>,
    pub l_hat_h: Option<f64>,
    pub kappa_r: Option<f64>,
    pub nu_r: Option<f64>,
    pub nu_s: Option<f64>,
    pub kappa_s: Option<f64>,
}

impl ConstantsOverride {
    /// Applies the user-supplied values on top of measured/default ones.
    pub fn apply(&self, mut constants: MeasuredConstants) -> MeasuredConstants {
        if let Some(v) = self.l_h {
            constants.l_h = v;
            constants.tags.l_h = Provenance::User;
        }
        if let Some(v) = self.l_hat_h {
            constants.l_hat_h = v;
            constants.tags.l_hat_h = Provenance::User;
        }
        if let Some(v) = self.kappa_r {
            constants.kappa_r = v;
            constants.tags.kappa_r = Provenance::User;
        }
        if let Some(v) = self.nu_r {
            constants.nu_r = v;
            constants.tags.nu_r = Provenance::User;
        }
        if let Some(v) = self.nu_s {
            constants.nu_s = v;
            constants.tags.nu_s = Provenance::User;
        }
        if let Some(v) = self.kappa_s {
            constants.kappa_s = v;
            constants.tags.kappa_s = Provenance::User;
        }
        constants
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .with_context(|| format!("cannot parse config file {}", path.display()))?;
    Ok(cfg)
}

fn build_matrix(section: &ProblemSection, config_dir: &Path) -> Result<DMatrix<f64>> {
    let sources = [
        section.spectrum.is_some(),
        section.matrix.is_some(),
        section.matrix_file.is_some(),
    ]
    .iter()
    .filter(|&&x| x)
    .count();
    if sources != 1 {
        bail!("[problem] needs exactly one of `spectrum`, `matrix`, `matrix_file`");
    }
    if let Some(spec) = &section.spectrum {
        let seed = section
            .seed
            .context("[problem] `seed` is required with a spectrum recipe")?;
        let values = match spec {
            SpectrumSpec::Linspace { lo, hi } => linspace(*lo, *hi, section.dim),
            SpectrumSpec::Values { values } => values.clone(),
        };
        if values.len() != section.dim {
            bail!(
                "[problem] spectrum has {} values but dim = {}",
                values.len(),
                section.dim
            );
        }
        return Ok(saddletr_core::problems::conjugate_spectrum(&values, seed));
    }
    if let Some(rows) = &section.matrix {
        let n = rows.len();
        if n != section.dim || rows.iter().any(|r| r.len() != n) {
            bail!("[problem] inline matrix must be dim x dim");
        }
        return Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]));
    }
    let file = section.matrix_file.as_ref().unwrap();
    let path = if file.is_relative() {
        config_dir.join(file)
    } else {
        file.clone()
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("[problem] cannot read matrix file {}", path.display()))?;
    let m = parse_dense_matrix(&text).context("[problem] bad matrix file")?;
    if m.nrows() != section.dim {
        bail!(
            "[problem] matrix file is {}x{} but dim = {}",
            m.nrows(),
            m.ncols(),
            section.dim
        );
    }
    Ok(m)
}

/// Resolves and validates a parsed config.
pub fn build_experiment(cfg: &ExperimentConfig, config_dir: &Path) -> Result<Experiment> {
    let matrix = build_matrix(&cfg.problem, config_dir)?;

    let (objective, rayleigh, params): (Box<dyn Objective>, Option<RayleighProblem>, _) =
        match cfg.problem.kind.as_str() {
            "rayleigh" => {
                if cfg.problem.b.is_some() {
                    bail!("[problem] `b` only applies to quadratic problems");
                }
                let p = RayleighProblem::new(matrix).context("[problem] invalid matrix")?;
                let c = cfg.params.c.unwrap_or(1.0);
                let mut params = p.saddle_params(c).context("[params] invalid c")?;
                override_params(&mut params, &cfg.params)?;
                (Box::new(p.clone()), Some(p), params)
            }
            "quadratic" => {
                let b = match &cfg.problem.b {
                    Some(values) => {
                        if values.len() != cfg.problem.dim {
                            bail!("[problem] `b` must have dim entries");
                        }
                        DVector::from_row_slice(values)
                    }
                    None => DVector::zeros(cfg.problem.dim),
                };
                let p = QuadraticProblem::new(matrix, b).context("[problem] invalid Q")?;
                let alpha = cfg.params.alpha.unwrap_or(1.0);
                let mut params = p.saddle_params(alpha).context("[params] invalid alpha")?;
                override_params(&mut params, &cfg.params)?;
                (Box::new(p), None, params)
            }
            other => bail!("[problem] unknown kind {other:?} (expected rayleigh|quadratic)"),
        };

    let mut tr_config = TrConfig::default_with(cfg.solver.eps_g, params.beta);
    if let Some(v) = cfg.solver.delta0 {
        tr_config.delta0 = v;
    }
    if let Some(v) = cfg.solver.delta_max {
        tr_config.delta_max = v;
    }
    if let Some(v) = cfg.solver.eta1 {
        tr_config.eta1 = v;
    }
    if let Some(v) = cfg.solver.eta2 {
        tr_config.eta2 = v;
    }
    if let Some(v) = cfg.solver.tau1 {
        tr_config.tau1 = v;
    }
    if let Some(v) = cfg.solver.tau2 {
        tr_config.tau2 = v;
    }
    if let Some(v) = cfg.solver.eps_h {
        tr_config.eps_h = v;
    }
    if let Some(v) = cfg.solver.max_outer_iterations {
        tr_config.max_outer_iterations = v;
    }
    tr_config.max_hvp = cfg.solver.max_hvp;
    tr_config
        .validate()
        .context("[solver] invalid trust-region configuration")?;

    let inexact = match cfg.solver.kind.as_str() {
        "exact" => None,
        "inexact" => {
            let mode = match cfg.meo.mode.as_str() {
                "lanczos" => MeoMode::Lanczos,
                "dense" => MeoMode::Dense,
                other => bail!("[meo] unknown mode {other:?} (expected lanczos|dense)"),
            };
            if !(cfg.meo.failure_prob >= 0.0 && cfg.meo.failure_prob < 1.0) {
                bail!("[meo] failure_prob must lie in [0,1)");
            }
            if !(cfg.tcg.zeta > 0.0 && cfg.tcg.zeta < 1.0) {
                bail!("[tcg] zeta must lie in (0,1)");
            }
            Some(InexactSettings {
                zeta: cfg.tcg.zeta,
                meo_mode: mode,
                meo_failure_prob: cfg.meo.failure_prob,
                meo_seed: cfg.meo.seed,
            })
        }
        other => bail!("[solver] unknown kind {other:?} (expected exact|inexact)"),
    };

    if cfg.run.repetitions == 0 {
        bail!("[run] repetitions must be at least 1");
    }
    if cfg.run.repetitions > 1 && matches!(cfg.run.start, StartSpec::Coords { .. }) {
        bail!("[run] repetitions > 1 requires a seeded start (random or near_eigenvector)");
    }
    if matches!(cfg.run.start, StartSpec::NearEigenvector { .. }) && rayleigh.is_none() {
        bail!("[run] near_eigenvector starts require a rayleigh problem");
    }

    let out_dir = cfg
        .run
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("SADDLETR_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let label = cfg
        .run
        .label
        .clone()
        .unwrap_or_else(|| objective.name().replace(['(', ')'], "_"));

    Ok(Experiment {
        objective,
        rayleigh,
        params,
        tr_config,
        inexact,
        start: cfg.run.start.clone(),
        base_seed: cfg.run.seed,
        repetitions: cfg.run.repetitions,
        out_dir,
        label,
        user_constants: ConstantsOverride {
            l_h: cfg.constants.l_h,
            l_hat_h: cfg.constants.l_hat_h,
            kappa_r: cfg.constants.kappa_r,
            nu_r: cfg.constants.nu_r,
            nu_s: cfg.constants.nu_s,
            kappa_s: cfg.constants.kappa_s,
        },
    })
}

fn override_params(params: &mut StrictSaddleParams, section: &ParamsSection) -> Result<()> {
    if let Some(v) = section.beta {
        params.beta = v;
    }
    if let Some(v) = section.gamma {
        params.gamma = v;
    }
    if let Some(v) = section.delta {
        params.delta = v;
    }
    if let Some(v) = section.alpha {
        params.alpha = v;
    }
    if !(params.alpha > 0.0 && params.beta > 0.0 && params.gamma > 0.0 && params.delta > 0.0) {
        bail!("[params] all landscape parameters must be strictly positive");
    }
    Ok(())
}

impl Experiment {
    /// Starting point of run `rep` (seed = base_seed + rep).
    pub fn start_point(&self, rep: usize) -> Result<ManifoldPoint> {
        let seed = self.base_seed + rep as u64;
        match &self.start {
            StartSpec::Random { norm } => Ok(seeded_start(self.objective.manifold(), seed, *norm)),
            StartSpec::NearEigenvector { index, offset } => {
                let p = self
                    .rayleigh
                    .as_ref()
                    .context("near_eigenvector start without a rayleigh problem")?;
                start_near_eigenvector(p, *index, *offset, seed)
                    .context("[run] invalid near_eigenvector start")
            }
            StartSpec::Coords { values } => {
                let coords = DVector::from_row_slice(values);
                ManifoldPoint::new(coords, self.objective.manifold())
                    .context("[run] start coordinates are not on the manifold")
            }
        }
    }

    pub fn trace_path(&self, rep: usize) -> PathBuf {
        let seed = self.base_seed + rep as u64;
        self.out_dir
            .join(format!("{}_seed{}.trace", self.label, seed))
    }
}
