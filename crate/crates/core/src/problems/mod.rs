//! Per-agent objectives: value, gradient, and proximal map, plus seeded data
//! generators for the experiment configurations.

mod io;
mod lasso;
mod phase_retrieval;
mod quadratic;
mod sparse_pca;

pub use io::{dump_agent_csv, load_agent_csv};
pub use lasso::{generate_lasso, LassoAgent};
pub use phase_retrieval::{generate_phase_retrieval, PhaseRetrievalAgent};
pub use quadratic::{generate_quadratics, QuadraticObjective};
pub use sparse_pca::{generate_sparse_pca, SparsePcaAgent};

use crate::error::Result;
use nalgebra::{DMatrix, DVector};

/// Inner-solver settings for prox evaluations that need an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct ProxParams {
    /// Target norm of the subproblem gradient (or fixed-point residual).
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ProxParams {
    fn default() -> Self {
        ProxParams {
            tol: 1e-9,
            max_iters: 500,
        }
    }
}

/// Outcome of a prox evaluation. `converged == false` flags an inner solve
/// that stalled before reaching tolerance; the best iterate is still returned.
#[derive(Debug, Clone)]
pub struct ProxOutcome {
    pub point: DVector<f64>,
    pub iters: usize,
    pub converged: bool,
}

/// Exact smoothness constants `(L, ell)`: gradient Lipschitz bound and
/// weak-convexity modulus (`f + ell/2 ||.||^2` convex).
#[derive(Debug, Clone, Copy)]
pub struct Smoothness {
    pub lipschitz: f64,
    pub weak_convexity: f64,
}

/// Per-agent objective contract: smooth part, optional nonsmooth part, and
/// the proximal map `argmin_u f(u) + (w/2)||u - center||^2` over the full
/// local cost.
pub trait LocalObjective: Send + Sync {
    fn dim(&self) -> usize;

    fn smooth_value(&self, x: &DVector<f64>) -> f64;

    fn smooth_gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Nonsmooth part of the local cost (0 for purely smooth objectives;
    /// +inf outside hard constraints).
    fn nonsmooth_value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.smooth_value(x) + self.nonsmooth_value(x)
    }

    /// `warm` seeds the inner solver when the prox is iterative.
    fn prox(
        &self,
        center: &DVector<f64>,
        weight: f64,
        warm: Option<&DVector<f64>>,
        params: &ProxParams,
    ) -> Result<ProxOutcome>;

    /// Exact `(L, ell)` when known in closed form.
    fn smoothness(&self) -> Option<Smoothness> {
        None
    }
}

/// Componentwise soft-thresholding, the prox of `t * ||.||_1`.
pub fn soft_threshold(x: &DVector<f64>, t: f64) -> DVector<f64> {
    x.map(|v| {
        if v > t {
            v - t
        } else if v < -t {
            v + t
        } else {
            0.0
        }
    })
}

/// Euclidean projection onto the closed unit ball.
pub fn project_unit_ball(x: &DVector<f64>) -> DVector<f64> {
    let n = x.norm();
    if n <= 1.0 {
        x.clone()
    } else {
        x / n
    }
}

/// Largest eigenvalue of the symmetric PSD matrix `a` by power iteration.
pub fn lambda_max_psd(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = a * &v;
        let norm = w.norm();
        if norm < 1e-300 {
            return 0.0;
        }
        let next = w / norm;
        let new_lambda = (&next.transpose() * a * &next)[(0, 0)];
        let done = (new_lambda - lambda).abs() <= 1e-12 * new_lambda.abs().max(1.0);
        v = next;
        lambda = new_lambda;
        if done {
            break;
        }
    }
    lambda
}

/// The nonsmooth part of the *global* objective, used for prox-gradient
/// residual diagnostics. Per-agent shares sum back to this.
#[derive(Debug, Clone, Copy)]
pub enum NonsmoothSum {
    None,
    /// `lambda * ||x||_1`
    L1 { lambda: f64 },
    /// `lambda * ||x||_1 + indicator(||x|| <= 1)`
    L1Ball { lambda: f64 },
}

impl NonsmoothSum {
    /// Prox of `step * (nonsmooth)` at `point`.
    pub fn prox(&self, point: &DVector<f64>, step: f64) -> DVector<f64> {
        match *self {
            NonsmoothSum::None => point.clone(),
            NonsmoothSum::L1 { lambda } => soft_threshold(point, step * lambda),
            NonsmoothSum::L1Ball { lambda } => {
                project_unit_ball(&soft_threshold(point, step * lambda))
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    /// Central finite-difference gradient, step 1e-6.
    pub fn fd_gradient<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>) -> DVector<f64> {
        let h = 1e-6;
        DVector::from_fn(x.len(), |i, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
    }

    pub fn assert_gradient_matches_fd(obj: &dyn LocalObjective, x: &DVector<f64>, rel_tol: f64) {
        let g = obj.smooth_gradient(x);
        let fd = fd_gradient(|v| obj.smooth_value(v), x);
        let err = (&g - &fd).norm() / g.norm().max(1.0);
        assert!(
            err < rel_tol,
            "gradient mismatch: rel err {err:.3e} at x with norm {:.3}",
            x.norm()
        );
    }

    /// The no-worse-than-center inequality every prox must satisfy.
    pub fn assert_prox_no_worse(
        obj: &dyn LocalObjective,
        center: &DVector<f64>,
        weight: f64,
        params: &ProxParams,
    ) {
        let out = obj.prox(center, weight, None, params).unwrap();
        let sub = |u: &DVector<f64>| obj.value(u) + 0.5 * weight * (u - center).norm_squared();
        assert!(
            sub(&out.point) <= sub(center) + 1e-12 * sub(center).abs().max(1.0),
            "prox produced a worse subproblem objective than the center"
        );
    }
}
