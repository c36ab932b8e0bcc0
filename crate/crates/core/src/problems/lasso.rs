//! LASSO agent: `||A x - b||^2` plus the per-agent share `lambda/n ||x||_1`.

use super::{lambda_max_psd, soft_threshold, LocalObjective, ProxOutcome, ProxParams, Smoothness};
use crate::error::{Error, Result};
use crate::rng::{agent_stream, stream_rng, GLOBAL_STREAM};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct LassoAgent {
    a: DMatrix<f64>,
    b: DVector<f64>,
    gram: DMatrix<f64>,
    atb: DVector<f64>,
    lambda_max: f64,
    l1_weight: f64,
}

impl LassoAgent {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, l1_weight: f64) -> Self {
        assert_eq!(a.nrows(), b.len());
        assert!(l1_weight >= 0.0);
        let gram = a.transpose() * &a;
        let atb = a.transpose() * &b;
        let lambda_max = lambda_max_psd(&gram);
        LassoAgent {
            a,
            b,
            gram,
            atb,
            lambda_max,
            l1_weight,
        }
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn observations(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn l1_weight(&self) -> f64 {
        self.l1_weight
    }
}

impl LocalObjective for LassoAgent {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).norm_squared()
    }

    fn smooth_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        ((&self.gram * x) - &self.atb) * 2.0
    }

    fn nonsmooth_value(&self, x: &DVector<f64>) -> f64 {
        self.l1_weight * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// ISTA on the strongly convex composite subproblem, tol 1e-10 by default.
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
        assert!(weight > 0.0);
        let lip = 2.0 * self.lambda_max + weight;
        let step = 1.0 / lip;
        let mut u = warm.unwrap_or(center).clone();
        let mut iters = 0;
        let mut converged = false;
        while iters < params.max_iters {
            let grad = ((&self.gram * &u) - &self.atb) * 2.0 + (&u - center) * weight;
            let next = soft_threshold(&(&u - &grad * step), step * self.l1_weight);
            let moved = (&next - &u).norm();
            u = next;
            iters += 1;
            if moved <= params.tol * step {
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
        Some(Smoothness {
            lipschitz: 2.0 * self.lambda_max,
            weak_convexity: 0.0,
        })
    }
}

/// Seeded generator for convex baseline runs: standard normal design, sparse
/// ground truth, observations `A x* + noise`.
pub fn generate_lasso(
    seed: u64,
    n: usize,
    d: usize,
    m_per_agent: usize,
    noise_sigma: f64,
    lambda: f64,
) -> (Vec<LassoAgent>, DVector<f64>) {
    assert!(n > 0 && d > 0 && m_per_agent > 0);
    let mut global = stream_rng(seed, GLOBAL_STREAM);
    let mut truth = DVector::zeros(d);
    // Roughly a quarter of the coordinates active.
    for i in 0..d {
        if global.gen::<f64>() < 0.25 {
            truth[i] = global.sample::<f64, _>(StandardNormal);
        }
    }
    let share = lambda / n as f64;
    let agents = (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, agent_stream(i));
            let a = DMatrix::from_fn(m_per_agent, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let noise = DVector::from_fn(m_per_agent, |_, _| {
                noise_sigma * rng.sample::<f64, _>(StandardNormal)
            });
            let b = &a * &truth + noise;
            LassoAgent::new(a, b, share)
        })
        .collect();
    (agents, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::test_util::assert_gradient_matches_fd;

    #[test]
    fn prox_is_soft_threshold_for_identity_design() {
        // A = I, b = 0, l1 = 1, w = 1: argmin u^2 + |u| + (1/2)(u-c)^2 per
        // coordinate. Verified against a per-coordinate grid oracle.
        let agent = LassoAgent::new(DMatrix::identity(3, 3), DVector::zeros(3), 1.0);
        let c = DVector::from_vec(vec![4.0, -0.5, 2.0]);
        let out = agent
            .prox(&c, 1.0, None, &ProxParams { tol: 1e-12, max_iters: 100_000 })
            .unwrap();
        for i in 0..3 {
            let phi = |u: f64| u * u + u.abs() + 0.5 * (u - c[i]).powi(2);
            let mut best = (f64::INFINITY, 0.0);
            let mut v: f64 = -5.0;
            while v <= 5.0 {
                if phi(v) < best.0 {
                    best = (phi(v), v);
                }
                v += 1e-5;
            }
            assert!(
                (out.point[i] - best.1).abs() < 1e-4,
                "coordinate {i}: {} vs {}",
                out.point[i],
                best.1
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::Rng;
        let (agents, _) = generate_lasso(3, 2, 6, 10, 0.1, 0.5);
        let mut rng = crate::rng::stream_rng(4, 0);
        for a in &agents {
            for _ in 0..5 {
                let x = DVector::from_fn(6, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
                assert_gradient_matches_fd(a, &x, 1e-5);
            }
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let (a, t) = generate_lasso(8, 3, 5, 4, 0.05, 1.0);
        let (b, u) = generate_lasso(8, 3, 5, 4, 0.05, 1.0);
        assert_eq!(t, u);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.design(), y.design());
            assert_eq!(x.observations(), y.observations());
        }
    }
}
