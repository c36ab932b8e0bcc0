//! Sparse PCA agent: concave smooth part `-||P x||^2` plus the per-agent
//! share of the l1 regularizer and the unit-ball constraint.
//!
//! The global problem carries `lambda ||x||_1` and `||x|| <= 1`; both are
//! folded into every agent as `lambda/n ||x||_1` plus the ball indicator so
//! each local prox is a strongly convex composite solve (for prox weight
//! `w > 2 lambda_max(P'P)`).

use super::{
    lambda_max_psd, project_unit_ball, soft_threshold, LocalObjective, ProxOutcome, ProxParams,
    Smoothness,
};
use crate::error::{Error, Result};
use crate::rng::{agent_stream, stream_rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct SparsePcaAgent {
    data: DMatrix<f64>,
    /// Cached P'P.
    gram: DMatrix<f64>,
    lambda_max: f64,
    /// Per-agent l1 share (lambda / n).
    l1_weight: f64,
}

impl SparsePcaAgent {
    pub fn new(data: DMatrix<f64>, l1_weight: f64) -> Self {
        assert!(l1_weight >= 0.0);
        let gram = data.transpose() * &data;
        let lambda_max = lambda_max_psd(&gram);
        SparsePcaAgent {
            data,
            gram,
            lambda_max,
            l1_weight,
        }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Largest eigenvalue of P'P; the prox needs weight > 2 * this.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn l1_weight(&self) -> f64 {
        self.l1_weight
    }
}

impl LocalObjective for SparsePcaAgent {
    fn dim(&self) -> usize {
        self.data.ncols()
    }

    fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        -(&self.data * x).norm_squared()
    }

    fn smooth_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        -(&self.gram * x) * 2.0
    }

    fn nonsmooth_value(&self, x: &DVector<f64>) -> f64 {
        if x.norm() > 1.0 + 1e-9 {
            f64::INFINITY
        } else {
            self.l1_weight * x.iter().map(|v| v.abs()).sum::<f64>()
        }
    }

    /// Projected proximal gradient on the strongly convex smooth part
    /// `-||Pu||^2 + (w/2)||u - center||^2`, with the l1-plus-ball prox
    /// (soft-threshold, then ball projection) applied each step.
    fn prox(
        &self,
        center: &DVector<f64>,
        weight: f64,
        warm: Option<&DVector<f64>>,
        params: &ProxParams,
    ) -> Result<ProxOutcome> {
        let d = self.dim();
        if center.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: center.len(),
            });
        }
        let required = 2.0 * self.lambda_max;
        if weight <= required {
            return Err(Error::WeightTooSmall { weight, required });
        }
        // Smooth-part gradient is w(u - center) - 2 P'P u; Lipschitz const w.
        let step = 1.0 / weight;
        let mut u = warm.unwrap_or(center).clone();
        if u.norm() > 1.0 {
            u = project_unit_ball(&u);
        }
        let mut iters = 0;
        let mut converged = false;
        while iters < params.max_iters {
            let grad = (&u - center) * weight - (&self.gram * &u) * 2.0;
            let next = project_unit_ball(&soft_threshold(
                &(&u - &grad * step),
                step * self.l1_weight,
            ));
            let moved = (&next - &u).norm();
            u = next;
            iters += 1;
            if moved <= params.tol * step.max(1e-300) {
                converged = true;
                break;
            }
        }
        Ok(ProxOutcome {
            point: u,
            iters,
            converged,
        })
    }

    fn smoothness(&self) -> Option<Smoothness> {
        // -||Px||^2 has Hessian -2 P'P with eigenvalues in [-2 lmax, 0].
        Some(Smoothness {
            lipschitz: 2.0 * self.lambda_max,
            weak_convexity: 2.0 * self.lambda_max,
        })
    }
}

/// Seeded generator: each entry of `P_i` drawn N(0, entry_sigma^2).
pub fn generate_sparse_pca(
    seed: u64,
    n: usize,
    d: usize,
    m_per_agent: usize,
    entry_sigma: f64,
    lambda: f64,
) -> Vec<SparsePcaAgent> {
    assert!(n > 0 && d > 0 && m_per_agent > 0);
    let share = lambda / n as f64;
    (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, agent_stream(i));
            let data = DMatrix::from_fn(m_per_agent, d, |_, _| {
                entry_sigma * rng.sample::<f64, _>(StandardNormal)
            });
            SparsePcaAgent::new(data, share)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_data_closed_form() {
        // P = I, lambda = 0, w = 4: unconstrained solution (4-2)^{-1} 4c = 2c,
        // then ball-projected.
        let agent = SparsePcaAgent::new(DMatrix::identity(4, 4), 0.0);
        let c = DVector::from_vec(vec![0.1, -0.05, 0.2, 0.0]);
        let out = agent
            .prox(&c, 4.0, None, &ProxParams { tol: 1e-12, max_iters: 50_000 })
            .unwrap();
        let expected = project_unit_ball(&(&c * 2.0));
        assert!((&out.point - &expected).norm() < 1e-9);
    }

    #[test]
    fn zero_data_is_pure_projection() {
        let agent = SparsePcaAgent::new(DMatrix::zeros(3, 3), 0.0);
        let c = DVector::from_vec(vec![3.0, 0.0, 4.0]);
        let out = agent.prox(&c, 1.0, None, &ProxParams::default()).unwrap();
        assert!((&out.point - project_unit_ball(&c)).norm() < 1e-10);
    }

    #[test]
    fn weight_below_curvature_rejected() {
        let agent = SparsePcaAgent::new(DMatrix::identity(3, 3), 0.1);
        let c = DVector::zeros(3);
        assert!(matches!(
            agent.prox(&c, 1.5, None, &ProxParams::default()),
            Err(Error::WeightTooSmall { .. })
        ));
    }

    #[test]
    fn prox_matches_subgradient_descent_oracle() {
        let agents = generate_sparse_pca(17, 2, 4, 6, 0.5, 0.8);
        let agent = &agents[0];
        let w = 2.0 * agent.lambda_max() + 1.5;
        let c = DVector::from_vec(vec![0.9, -0.4, 0.2, 0.6]);
        let out = agent
            .prox(&c, w, None, &ProxParams { tol: 1e-13, max_iters: 100_000 })
            .unwrap();

        // Brute-force oracle: projected subgradient descent with decaying step.
        let mut u = DVector::zeros(4);
        for k in 0..50_000 {
            let mut g = agent.smooth_gradient(&u) + (&u - &c) * w;
            for i in 0..4 {
                g[i] += agent.l1_weight() * if u[i] > 0.0 { 1.0 } else if u[i] < 0.0 { -1.0 } else { 0.0 };
            }
            let step = 0.5 / (w * (1.0 + k as f64).sqrt());
            u = project_unit_ball(&(&u - &g * step));
        }
        assert!(
            (&out.point - &u).norm() < 1e-3,
            "prox {:?} vs oracle {:?}",
            out.point,
            u
        );
        let obj = |v: &DVector<f64>| agent.value(v) + 0.5 * w * (v - &c).norm_squared();
        assert!(obj(&out.point) <= obj(&u) + 1e-8);
    }

    #[test]
    fn generator_deterministic_and_zero_sigma() {
        let a = generate_sparse_pca(1, 3, 5, 4, 0.1, 10.0);
        let b = generate_sparse_pca(1, 3, 5, 4, 0.1, 10.0);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.data(), y.data());
            assert!((x.l1_weight() - 10.0 / 3.0).abs() < 1e-15);
        }
        let z = generate_sparse_pca(1, 2, 3, 3, 0.0, 0.0);
        for agent in &z {
            assert_eq!(agent.data().norm(), 0.0);
            assert_eq!(agent.smooth_value(&DVector::from_element(3, 1.0)), 0.0);
        }
    }
}
