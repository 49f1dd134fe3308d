//! Objective functions: f, Riemannian gradient, and matrix-free Riemannian
//! Hessian-vector products, together with strict-saddle parameter recipes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SaddleError};
use crate::manifold::{
    project_to_tangent, retract, retraction_differential_adjoint, ManifoldKind, ManifoldPoint,
    TangentVector,
};

/// Landscape parameters (α, β, γ, δ): gradient-norm threshold, negative
/// curvature threshold, strong-convexity constant, basin radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrictSaddleParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl StrictSaddleParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        for (name, v) in [
            ("alpha", alpha),
            ("beta", beta),
            ("gamma", gamma),
            ("delta", delta),
        ] {
            if !(v > 0.0) {
                return Err(SaddleError::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta,
        })
    }
}

/// A twice-differentiable objective on a manifold, with the Hessian exposed
/// only as a matrix-free operator.
pub trait Objective: Send + Sync {
    fn manifold(&self) -> ManifoldKind;

    fn eval(&self, x: &ManifoldPoint) -> f64;

    /// Riemannian gradient (tangent at x).
    fn gradient(&self, x: &ManifoldPoint) -> TangentVector;

    /// Riemannian Hessian-vector product; maps tangent vectors at x to
    /// tangent vectors at x, linearly and self-adjointly.
    fn hess_vec(&self, x: &ManifoldPoint, v: &TangentVector) -> TangentVector;

    /// Uniform bound κ_H on the operator norm of the Hessian.
    fn hessian_norm_bound(&self) -> f64;

    /// Global lower bound f* on the objective.
    fn lower_bound(&self) -> f64;

    /// Gradient of the pullback f ∘ R_x at s, expressed in T_x M. Exact
    /// (not finite-differenced), so it stays meaningful for very short steps.
    fn pullback_gradient(&self, x: &ManifoldPoint, s: &TangentVector) -> Result<TangentVector> {
        let y = retract(x, s)?;
        let grad_y = self.gradient(&y);
        retraction_differential_adjoint(x, s, &grad_y.components)
    }

    /// A known global minimizer in ambient coordinates, when available.
    fn known_minimizer(&self) -> Option<DVector<f64>> {
        None
    }

    /// True when the Hessian operator does not depend on the base point, so
    /// the model is exact and interior steps are full Newton steps.
    fn has_constant_hessian(&self) -> bool {
        false
    }

    fn name(&self) -> String;
}

// ---------------------------------------------------------------------------
// Rayleigh quotient on the sphere
// ---------------------------------------------------------------------------

/// f(x) = xᵀAx on S^{n-1} for symmetric A whose spectrum has strictly
/// positive top and bottom gaps: λ₁ > λ₂ ≥ … ≥ λ_{n-1} > λ_n.
#[derive(Debug, Clone)]
pub struct RayleighProblem {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>, // sorted descending
    min_eigenvector: DVector<f64>,
}

impl RayleighProblem {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n < 2 || matrix.ncols() != n {
            return Err(SaddleError::InvalidParameter(format!(
                "matrix must be square with n >= 2, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let mut max_asym = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                max_asym = max_asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
            }
        }
        if max_asym > 1e-12 {
            return Err(SaddleError::InvalidParameter(format!(
                "matrix is not symmetric: max |A - Aᵀ| = {max_asym:.3e}"
            )));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let mut pairs: Vec<(f64, usize)> = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .map(|(i, v)| (v, i))
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let top_gap = eigenvalues[0] - eigenvalues[1];
        let bottom_gap = eigenvalues[n - 2] - eigenvalues[n - 1];
        if !(top_gap > 0.0) || !(bottom_gap > 0.0) {
            return Err(SaddleError::InvalidParameter(format!(
                "spectral gaps must be strictly positive: top {top_gap:.3e}, bottom {bottom_gap:.3e}"
            )));
        }
        let min_eigenvector = eig.eigenvectors.column(pairs[n - 1].1).into_owned();
        Ok(Self {
            matrix: sym,
            eigenvalues,
            min_eigenvector,
        })
    }

    /// Symmetric matrix with prescribed spectrum, conjugated by a seeded
    /// random orthogonal matrix (QR of a Gaussian with sign-fixed R).
    pub fn from_spectrum(spectrum: &[f64], seed: u64) -> Result<Self> {
        let a = conjugate_spectrum(spectrum, seed);
        Self::new(a)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigenvalues sorted descending: λ₁ ≥ … ≥ λ_n.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    pub fn sphere(&self) -> ManifoldKind {
        ManifoldKind::Sphere {
            ambient_dim: self.matrix.nrows(),
        }
    }

    /// Strict-saddle parameters scaled by the free constant c > 0:
    /// (c·gap/λ₁, c·gap, c·gap, 2c·gap/λ₁) with gap = λ_{n-1} − λ_n.
    pub fn saddle_params(&self, c: f64) -> Result<StrictSaddleParams> {
        if !(c > 0.0) {
            return Err(SaddleError::InvalidParameter(format!(
                "constant c must be positive, got {c}"
            )));
        }
        let n = self.eigenvalues.len();
        let lambda1 = self.eigenvalues[0];
        let gap = self.eigenvalues[n - 2] - self.eigenvalues[n - 1];
        StrictSaddleParams::new(c * gap / lambda1, c * gap, c * gap, 2.0 * c * gap / lambda1)
    }
}

impl Objective for RayleighProblem {
    fn manifold(&self) -> ManifoldKind {
        self.sphere()
    }

    fn eval(&self, x: &ManifoldPoint) -> f64 {
        (&self.matrix * &x.coords).dot(&x.coords)
    }

    fn gradient(&self, x: &ManifoldPoint) -> TangentVector {
        // 2·P_x(Ax) = 2(Ax − (xᵀAx)x). Projecting twice drops the radial
        // round-off from eps·‖A‖ to eps·‖grad‖; matrix-free Krylov loops
        // cancel the gradient nine orders deep and would otherwise stall on
        // the frozen radial noise.
        let ax = &self.matrix * &x.coords;
        let proj = project_to_tangent(x, &ax).expect("dimensions match");
        let proj = project_to_tangent(x, &proj.components).expect("dimensions match");
        TangentVector {
            components: proj.components * 2.0,
            base: x.clone(),
        }
    }

    fn hess_vec(&self, x: &ManifoldPoint, v: &TangentVector) -> TangentVector {
        // 2·P_x(Av − (xᵀAx)v) for tangent v; double projection as in
        // `gradient`.
        let av = &self.matrix * &v.components;
        let fx = self.eval(x);
        let w = av - &v.components * fx;
        let proj = project_to_tangent(x, &w).expect("dimensions match");
        let proj = project_to_tangent(x, &proj.components).expect("dimensions match");
        TangentVector {
            components: proj.components * 2.0,
            base: x.clone(),
        }
    }

    fn hessian_norm_bound(&self) -> f64 {
        // Exact operator-norm bound over the sphere: 2(λ₁ − λ_n).
        2.0 * (self.eigenvalues[0] - self.min_eigenvalue())
    }

    fn lower_bound(&self) -> f64 {
        self.min_eigenvalue()
    }

    fn known_minimizer(&self) -> Option<DVector<f64>> {
        Some(self.min_eigenvector.clone())
    }

    fn name(&self) -> String {
        format!("rayleigh({})", self.matrix.nrows())
    }
}

// ---------------------------------------------------------------------------
// Strongly convex quadratic on R^n
// ---------------------------------------------------------------------------

/// f(x) = ½xᵀQx − bᵀx with Q symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    q: DMatrix<f64>,
    b: DVector<f64>,
    gamma: f64,   // λ_min(Q)
    kappa_h: f64, // λ_max(Q)
    minimizer: DVector<f64>,
    f_star: f64,
}

impl QuadraticProblem {
    pub fn new(q: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n || b.len() != n {
            return Err(SaddleError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let sym = (&q + q.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if !(lambda_min > 0.0) {
            return Err(SaddleError::InvalidParameter(format!(
                "Q must be positive definite, λ_min = {lambda_min:.3e}"
            )));
        }
        let chol = nalgebra::Cholesky::new(sym.clone())
            .ok_or_else(|| SaddleError::InvalidParameter("Q must be positive definite".into()))?;
        let minimizer = chol.solve(&b);
        let f_star = 0.5 * (&sym * &minimizer).dot(&minimizer) - b.dot(&minimizer);
        Ok(Self {
            q: sym,
            b,
            gamma: lambda_min,
            kappa_h: lambda_max,
            minimizer,
            f_star,
        })
    }

    pub fn from_spectrum(spectrum: &[f64], b: DVector<f64>, seed: u64) -> Result<Self> {
        let q = conjugate_spectrum(spectrum, seed);
        Self::new(q, b)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn minimizer(&self) -> &DVector<f64> {
        &self.minimizer
    }

    /// (α, 1, γ, 2α/γ): a γ-strongly convex function has empty negative
    /// curvature region and every small-gradient point within 2α/γ of x*.
    pub fn saddle_params(&self, alpha: f64) -> Result<StrictSaddleParams> {
        StrictSaddleParams::new(alpha, 1.0, self.gamma, 2.0 * alpha / self.gamma)
    }
}

impl Objective for QuadraticProblem {
    fn manifold(&self) -> ManifoldKind {
        ManifoldKind::Euclidean {
            dim: self.q.nrows(),
        }
    }

    fn eval(&self, x: &ManifoldPoint) -> f64 {
        0.5 * (&self.q * &x.coords).dot(&x.coords) - self.b.dot(&x.coords)
    }

    fn gradient(&self, x: &ManifoldPoint) -> TangentVector {
        TangentVector {
            components: &self.q * &x.coords - &self.b,
            base: x.clone(),
        }
    }

    fn hess_vec(&self, x: &ManifoldPoint, v: &TangentVector) -> TangentVector {
        TangentVector {
            components: &self.q * &v.components,
            base: x.clone(),
        }
    }

    fn hessian_norm_bound(&self) -> f64 {
        self.kappa_h
    }

    fn lower_bound(&self) -> f64 {
        self.f_star
    }

    fn known_minimizer(&self) -> Option<DVector<f64>> {
        Some(self.minimizer.clone())
    }

    fn has_constant_hessian(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("quadratic({})", self.q.nrows())
    }
}

// ---------------------------------------------------------------------------
// Construction helpers
// ---------------------------------------------------------------------------

/// UᵀΛU with U drawn from the orthogonal group via QR of a seeded Gaussian
/// matrix (R's diagonal signs fixed), so the spectrum is exact by
/// construction.
pub fn conjugate_spectrum(spectrum: &[f64], seed: u64) -> DMatrix<f64> {
    use rand::SeedableRng;
    let n = spectrum.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gaussian.qr();
    let mut u = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
    let lambda = DMatrix::from_diagonal(&DVector::from_row_slice(spectrum));
    let a = &u * lambda * u.transpose();
    (&a + a.transpose()) * 0.5
}

/// n evenly spaced values from lo to hi inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64) / ((n - 1) as f64))
        .collect()
}

/// Parses a whitespace-delimited dense square matrix (one row per line).
pub fn parse_dense_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|e| SaddleError::Parse(format!("bad matrix entry {tok:?}: {e}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 {
        return Err(SaddleError::Parse("empty matrix".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(SaddleError::Parse(format!(
                "row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Random point used to start a run: uniform on the sphere, or Gaussian
/// scaled to the given norm on Euclidean space.
pub fn seeded_start(manifold: ManifoldKind, seed: u64, euclidean_norm: f64) -> ManifoldPoint {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = crate::manifold::random_point(manifold, &mut rng);
    if let ManifoldKind::Euclidean { .. } = manifold {
        let norm = x.coords.norm();
        if norm > 0.0 {
            x.coords *= euclidean_norm / norm;
        }
    }
    x
}

/// Point on the sphere within `offset` (in ambient norm) of the eigenvector
/// with 1-based index `index` counted from the largest eigenvalue.
pub fn start_near_eigenvector(
    problem: &RayleighProblem,
    index: usize,
    offset: f64,
    seed: u64,
) -> Result<ManifoldPoint> {
    use rand::SeedableRng;
    let n = problem.matrix().nrows();
    if index == 0 || index > n {
        return Err(SaddleError::InvalidParameter(format!(
            "eigenvector index must be in 1..={n}, got {index}"
        )));
    }
    let eig = problem.matrix().clone().symmetric_eigen();
    let mut pairs: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let v = eig.eigenvectors.column(pairs[index - 1].1).into_owned();
    let base = ManifoldPoint::new(v, problem.sphere())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = crate::manifold::random_unit_tangent(&base, &mut rng);
    let step = TangentVector {
        components: dir.components * offset,
        base: base.clone(),
    };
    retract(&base, &step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(values))
    }

    fn sphere_point(coords: Vec<f64>) -> ManifoldPoint {
        let n = coords.len();
        ManifoldPoint::new(
            DVector::from_vec(coords),
            ManifoldKind::Sphere { ambient_dim: n },
        )
        .unwrap()
    }

    #[test]
    fn rayleigh_eval_at_eigenvectors() {
        let p = RayleighProblem::new(diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(p.eval(&sphere_point(vec![1.0, 0.0, 0.0])), 3.0);
        assert_eq!(p.eval(&sphere_point(vec![0.0, 0.0, 1.0])), 1.0);
        let h = 1.0 / 2.0f64.sqrt();
        let mid = p.eval(&sphere_point(vec![h, 0.0, h]));
        assert!((mid - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rayleigh_gradient_vanishes_at_eigenvectors() {
        let p = RayleighProblem::new(diag(&[3.0, 2.0, 1.0])).unwrap();
        let g = p.gradient(&sphere_point(vec![0.0, 1.0, 0.0]));
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn rayleigh_hessian_eigenvalues_at_eigenvectors() {
        let p = RayleighProblem::new(diag(&[3.0, 2.0, 1.0])).unwrap();
        // At x = e₃ the tangent direction e₁ has curvature 2(λ₁ − λ₃) = 4.
        let x = sphere_point(vec![0.0, 0.0, 1.0]);
        let v = TangentVector::new(DVector::from_vec(vec![1.0, 0.0, 0.0]), x.clone());
        let hv = p.hess_vec(&x, &v);
        assert!((hv.components[0] - 4.0).abs() < 1e-14);

        // At the middle eigenvector e₂, direction e₃ has curvature 2(λ₃ − λ₂) = −2.
        let x = sphere_point(vec![0.0, 1.0, 0.0]);
        let v = TangentVector::new(DVector::from_vec(vec![0.0, 0.0, 1.0]), x.clone());
        let hv = p.hess_vec(&x, &v);
        assert!((hv.components[2] + 2.0).abs() < 1e-14);

        // Linearity: zero in, zero out.
        let z = TangentVector::zero(x.clone());
        assert_eq!(p.hess_vec(&x, &z).norm(), 0.0);
    }

    #[test]
    fn rayleigh_saddle_params_formula() {
        let p = RayleighProblem::new(diag(&[3.0, 2.0, 1.0])).unwrap();
        let sp = p.saddle_params(1.0).unwrap();
        assert!((sp.alpha - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(sp.beta, 1.0);
        assert_eq!(sp.gamma, 1.0);
        assert!((sp.delta - 2.0 / 3.0).abs() < 1e-15);

        let half = p.saddle_params(0.5).unwrap();
        assert!((half.alpha - sp.alpha * 0.5).abs() < 1e-15);
        assert!((half.beta - sp.beta * 0.5).abs() < 1e-15);
        assert!((half.gamma - sp.gamma * 0.5).abs() < 1e-15);
        assert!((half.delta - sp.delta * 0.5).abs() < 1e-15);
    }

    #[test]
    fn rayleigh_rejects_bad_matrices() {
        let mut asym = diag(&[3.0, 2.0, 1.0]);
        asym[(0, 1)] = 1e-6;
        assert!(RayleighProblem::new(asym).is_err());
        // Bottom gap zero.
        assert!(RayleighProblem::new(diag(&[3.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn quadratic_minimizer_and_params() {
        let q = diag(&[1.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 4.0]);
        let p = QuadraticProblem::new(q, b).unwrap();
        assert!((p.minimizer() - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-14);
        assert_eq!(p.gamma(), 1.0);

        let at_min = ManifoldPoint::new(p.minimizer().clone(), p.manifold()).unwrap();
        assert!(p.gradient(&at_min).norm() < 1e-14);

        let sp = p.saddle_params(1.0).unwrap();
        assert_eq!(sp.beta, 1.0);
        assert_eq!(sp.gamma, 1.0);
        assert_eq!(sp.delta, 2.0);
    }

    #[test]
    fn quadratic_identity_has_origin_minimizer() {
        let p = QuadraticProblem::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        assert!(p.minimizer().norm() == 0.0);
        assert_eq!(p.lower_bound(), 0.0);
    }

    #[test]
    fn quadratic_rejects_indefinite() {
        assert!(QuadraticProblem::new(diag(&[1.0, -0.5]), DVector::zeros(2)).is_err());
    }

    #[test]
    fn conjugated_spectrum_is_exact() {
        let spectrum = linspace(1.0, 3.0, 10);
        let a = conjugate_spectrum(&spectrum, 42);
        let eig = a.symmetric_eigen();
        let mut got: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        got.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (g, s) in got.iter().zip(spectrum.iter()) {
            assert!((g - s).abs() < 1e-10, "eigenvalue drift: {g} vs {s}");
        }
    }

    #[test]
    fn dense_matrix_parsing() {
        let a = parse_dense_matrix("1 0\n0 2\n").unwrap();
        assert_eq!(a[(1, 1)], 2.0);
        assert!(parse_dense_matrix("1 0\n0\n").is_err());
        assert!(parse_dense_matrix("").is_err());
    }

    #[test]
    fn start_near_eigenvector_is_close() {
        let p = RayleighProblem::from_spectrum(&linspace(1.0, 3.0, 6), 3).unwrap();
        let x = start_near_eigenvector(&p, 3, 1e-3, 0).unwrap();
        let eig = p.matrix().clone().symmetric_eigen();
        let mut pairs: Vec<(f64, usize)> = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .map(|(i, v)| (v, i))
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let v = eig.eigenvectors.column(pairs[2].1).into_owned();
        let dist = (x.coords.clone() - &v)
            .norm()
            .min((x.coords.clone() + &v).norm());
        assert!(dist <= 1.5e-3, "start too far from eigenvector: {dist}");
    }
}
