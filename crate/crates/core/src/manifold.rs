//! Embedded manifolds: Euclidean space R^n and the unit sphere S^{n-1}.
//!
//! Points and tangent vectors are stored in ambient coordinates. Tangency on
//! the sphere is maintained by construction (vectors originate from
//! [`project_to_tangent`] or linear combinations thereof) and asserted in
//! debug builds rather than silently re-projected.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SaddleError};

/// Tolerance for the unit-norm constraint on sphere points.
pub const SPHERE_NORM_TOL: f64 = 1e-12;
/// Tolerance for tangency ⟨v, x⟩ = 0 on the sphere.
pub const TANGENCY_TOL: f64 = 1e-10;

/// Identifier + implementation of a manifold. Copyable so that every point
/// carries its owning manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    /// R^n with the standard inner product.
    Euclidean { dim: usize },
    /// Unit sphere S^{n-1} embedded in R^n.
    Sphere { ambient_dim: usize },
}

impl ManifoldKind {
    pub fn ambient_dim(&self) -> usize {
        match *self {
            ManifoldKind::Euclidean { dim } => dim,
            ManifoldKind::Sphere { ambient_dim } => ambient_dim,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match *self {
            ManifoldKind::Euclidean { dim } => dim,
            ManifoldKind::Sphere { ambient_dim } => ambient_dim - 1,
        }
    }

    /// Radius ϱ of the ball around 0 in the tangent space on which the
    /// retraction is defined. Both shipped retractions are global.
    pub fn retraction_domain_radius(&self) -> f64 {
        f64::INFINITY
    }

    pub fn name(&self) -> String {
        match *self {
            ManifoldKind::Euclidean { dim } => format!("euclidean({dim})"),
            ManifoldKind::Sphere { ambient_dim } => format!("sphere({ambient_dim})"),
        }
    }
}

/// A point on a manifold, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    pub coords: DVector<f64>,
    pub manifold: ManifoldKind,
}

impl ManifoldPoint {
    /// Validates the manifold constraint on construction.
    pub fn new(coords: DVector<f64>, manifold: ManifoldKind) -> Result<Self> {
        if coords.len() != manifold.ambient_dim() {
            return Err(SaddleError::DimensionMismatch {
                expected: manifold.ambient_dim(),
                got: coords.len(),
            });
        }
        if let ManifoldKind::Sphere { .. } = manifold {
            let norm = coords.norm();
            if (norm - 1.0).abs() > SPHERE_NORM_TOL {
                return Err(SaddleError::OffManifold(format!(
                    "sphere point has norm {norm:.17e}"
                )));
            }
        }
        Ok(Self { coords, manifold })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A tangent vector attached to a base point, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub components: DVector<f64>,
    pub base: ManifoldPoint,
}

impl TangentVector {
    pub fn new(components: DVector<f64>, base: ManifoldPoint) -> Self {
        debug_assert!(is_tangent(&base, &components), "vector is not tangent");
        Self { components, base }
    }

    pub fn zero(base: ManifoldPoint) -> Self {
        let n = base.dim();
        Self {
            components: DVector::zeros(n),
            base,
        }
    }

    pub fn norm(&self) -> f64 {
        self.components.norm()
    }
}

fn is_tangent(base: &ManifoldPoint, components: &DVector<f64>) -> bool {
    match base.manifold {
        ManifoldKind::Euclidean { .. } => true,
        ManifoldKind::Sphere { .. } => {
            let radial = components.dot(&base.coords).abs();
            radial <= TANGENCY_TOL * components.norm().max(1.0)
        }
    }
}

/// Metric ⟨u, v⟩ at a shared base point. For both shipped manifolds this is
/// the ambient dot product.
pub fn inner(u: &TangentVector, v: &TangentVector) -> Result<f64> {
    if u.base != v.base {
        return Err(SaddleError::BaseMismatch);
    }
    Ok(u.components.dot(&v.components))
}

/// Moves along the manifold in the direction of a tangent vector.
///
/// Euclidean: x + s. Sphere: metric projection (x + s)/‖x + s‖, a
/// second-order retraction.
pub fn retract(x: &ManifoldPoint, s: &TangentVector) -> Result<ManifoldPoint> {
    if s.base != *x {
        return Err(SaddleError::BaseMismatch);
    }
    let step_norm = s.norm();
    let radius = x.manifold.retraction_domain_radius();
    if step_norm > radius {
        return Err(SaddleError::RetractionDomain { step_norm, radius });
    }
    let moved = &x.coords + &s.components;
    let coords = match x.manifold {
        ManifoldKind::Euclidean { .. } => moved,
        ManifoldKind::Sphere { .. } => {
            let norm = moved.norm();
            moved / norm
        }
    };
    Ok(ManifoldPoint {
        coords,
        manifold: x.manifold,
    })
}

/// Riemannian distance. Euclidean: ‖x − y‖. Sphere: arc length
/// arccos(clamp(⟨x, y⟩, −1, 1)).
pub fn distance(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
    if x.manifold != y.manifold {
        return Err(SaddleError::ManifoldMismatch);
    }
    Ok(match x.manifold {
        ManifoldKind::Euclidean { .. } => (&x.coords - &y.coords).norm(),
        ManifoldKind::Sphere { .. } => x.coords.dot(&y.coords).clamp(-1.0, 1.0).acos(),
    })
}

/// Orthogonal projection of an ambient vector onto the tangent space at x.
/// Sphere: w − ⟨w, x⟩x. Euclidean: identity. Idempotent.
pub fn project_to_tangent(x: &ManifoldPoint, w: &DVector<f64>) -> Result<TangentVector> {
    if w.len() != x.dim() {
        return Err(SaddleError::DimensionMismatch {
            expected: x.dim(),
            got: w.len(),
        });
    }
    let components = match x.manifold {
        ManifoldKind::Euclidean { .. } => w.clone(),
        ManifoldKind::Sphere { .. } => w - &x.coords * w.dot(&x.coords),
    };
    Ok(TangentVector {
        components,
        base: x.clone(),
    })
}

/// Adjoint of the differential of the retraction: maps a tangent vector at
/// R_x(s) back to the tangent space at x. Used to evaluate the gradient of
/// the pullback f ∘ R_x away from the origin.
///
/// Euclidean: identity. Sphere (projection retraction): w ↦ P_x(w)/‖x + s‖.
pub fn retraction_differential_adjoint(
    x: &ManifoldPoint,
    s: &TangentVector,
    w_at_rx: &DVector<f64>,
) -> Result<TangentVector> {
    if s.base != *x {
        return Err(SaddleError::BaseMismatch);
    }
    match x.manifold {
        ManifoldKind::Euclidean { .. } => Ok(TangentVector {
            components: w_at_rx.clone(),
            base: x.clone(),
        }),
        ManifoldKind::Sphere { .. } => {
            let r = (&x.coords + &s.components).norm();
            let projected = project_to_tangent(x, w_at_rx)?;
            Ok(TangentVector {
                components: projected.components / r,
                base: x.clone(),
            })
        }
    }
}

/// Orthonormal basis of the tangent space at x, as columns of an
/// n × intrinsic_dim matrix. Deterministic (Householder completion).
pub fn tangent_basis(x: &ManifoldPoint) -> nalgebra::DMatrix<f64> {
    let n = x.dim();
    match x.manifold {
        ManifoldKind::Euclidean { .. } => nalgebra::DMatrix::identity(n, n),
        ManifoldKind::Sphere { .. } => {
            // Householder reflector mapping x to ∓e_1; its remaining columns
            // span the orthogonal complement of x.
            let sign = if x.coords[0] >= 0.0 { 1.0 } else { -1.0 };
            let mut u = x.coords.clone();
            u[0] += sign;
            let uu = u.dot(&u);
            let mut basis = nalgebra::DMatrix::zeros(n, n - 1);
            for k in 1..n {
                // Column k of Q = I − 2uuᵀ/‖u‖².
                let factor = 2.0 * u[k] / uu;
                for i in 0..n {
                    let mut val = -factor * u[i];
                    if i == k {
                        val += 1.0;
                    }
                    basis[(i, k - 1)] = val;
                }
            }
            basis
        }
    }
}

/// Uniformly random point (sphere) or standard Gaussian point (Euclidean).
pub fn random_point<R: Rng>(manifold: ManifoldKind, rng: &mut R) -> ManifoldPoint {
    let n = manifold.ambient_dim();
    let mut coords = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    if let ManifoldKind::Sphere { .. } = manifold {
        let norm = coords.norm();
        coords /= norm;
    }
    ManifoldPoint { coords, manifold }
}

/// Random unit tangent vector at x.
pub fn random_unit_tangent<R: Rng>(x: &ManifoldPoint, rng: &mut R) -> TangentVector {
    loop {
        let w = DVector::from_fn(x.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = project_to_tangent(x, &w).expect("dimensions match");
        let norm = v.norm();
        if norm > 1e-12 {
            return TangentVector {
                components: v.components / norm,
                base: x.clone(),
            };
        }
    }
}
