//! The trust-region model m(s) = f(x) + ⟨s, g⟩ + ½⟨s, Hs⟩ over the tangent
//! space at a fixed base point, with matrix-free Hessian-vector products and
//! an honest product counter.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SaddleError};
use crate::manifold::{tangent_basis, ManifoldPoint, TangentVector};
use crate::problems::Objective;

type HessOp<'a> = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + 'a>;

pub struct QuadraticModel<'a> {
    f0: f64,
    grad: DVector<f64>,
    base: ManifoldPoint,
    op: HessOp<'a>,
    hvp_count: Cell<usize>,
}

impl<'a> QuadraticModel<'a> {
    /// Second-order model of the pullback of `obj` at `x` (one gradient
    /// evaluation; Hessian products are deferred).
    pub fn at_point(obj: &'a dyn Objective, x: &ManifoldPoint) -> Self {
        let f0 = obj.eval(x);
        let grad = obj.gradient(x).components;
        let base = x.clone();
        let base_for_op = x.clone();
        let op: HessOp<'a> = Box::new(move |v: &DVector<f64>| {
            let tv = TangentVector {
                components: v.clone(),
                base: base_for_op.clone(),
            };
            obj.hess_vec(&base_for_op, &tv).components
        });
        Self {
            f0,
            grad,
            base,
            op,
            hvp_count: Cell::new(0),
        }
    }

    /// Model backed by an explicit symmetric matrix acting on ambient
    /// coordinates. Used by subsolver tests and synthetic instances.
    pub fn from_dense(
        f0: f64,
        grad: DVector<f64>,
        hess: DMatrix<f64>,
        base: ManifoldPoint,
    ) -> Self {
        let op: HessOp<'a> = Box::new(move |v: &DVector<f64>| &hess * v);
        Self {
            f0,
            grad,
            base,
            op,
            hvp_count: Cell::new(0),
        }
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn grad(&self) -> &DVector<f64> {
        &self.grad
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad.norm()
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn grad_tangent(&self) -> TangentVector {
        TangentVector {
            components: self.grad.clone(),
            base: self.base.clone(),
        }
    }

    /// One Hessian-vector product. Counted.
    pub fn hess_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.hvp_count.set(self.hvp_count.get() + 1);
        (self.op)(v)
    }

    pub fn hvp_count(&self) -> usize {
        self.hvp_count.get()
    }

    /// m(s). Costs one Hessian-vector product.
    pub fn value(&self, s: &DVector<f64>) -> f64 {
        let hs = self.hess_vec(s);
        self.f0 + self.grad.dot(s) + 0.5 * hs.dot(s)
    }

    /// m(0) − m(s). Costs one Hessian-vector product.
    pub fn decrease(&self, s: &DVector<f64>) -> f64 {
        self.f0 - self.value(s)
    }

    /// Dense representation T = Bᵀ H B of the Hessian restricted to the
    /// tangent space, with B the deterministic tangent basis. Costs
    /// intrinsic_dim Hessian-vector products. Returns (B, T) with T
    /// symmetrized against round-off.
    pub fn densify(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let b = tangent_basis(&self.base);
        let n = b.nrows();
        let d = b.ncols();
        let mut hb = DMatrix::zeros(n, d);
        for j in 0..d {
            let col = self.hess_vec(&b.column(j).into_owned());
            hb.set_column(j, &col);
        }
        let t = b.transpose() * hb;
        let t = (&t + t.transpose()) * 0.5;
        (b, t)
    }

    pub fn validate_finite(&self) -> Result<()> {
        if !self.f0.is_finite() || self.grad.iter().any(|v| !v.is_finite()) {
            return Err(SaddleError::InvalidModel(
                "non-finite entries in model data".into(),
            ));
        }
        Ok(())
    }
}
