//! Distributed phase retrieval: quartic local least squares on amplitude
//! measurements.
//!
//! Complex signals live in the real embedding R^{2d}: for x = (x_re, x_im)
//! and direction t = (t_re, t_im) the squared complex inner product is
//! `|<x,t>|^2 = (x . a)^2 + (x . b)^2` with `a = (t_re, t_im)` and
//! `b = (t_im, -t_re)`.

use super::{LocalObjective, ProxOutcome, ProxParams};
use crate::error::{Error, Result};
use crate::rng::{agent_stream, stream_rng, GLOBAL_STREAM};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct Measurement {
    /// Real-embedding direction `(t_re, t_im)`.
    pub direction: DVector<f64>,
    /// Rotated direction `(t_im, -t_re)`.
    pub rotated: DVector<f64>,
    pub amplitude_sq: f64,
}

/// One agent's measurements; `dim` is 2d (real embedding of C^d).
#[derive(Debug, Clone)]
pub struct PhaseRetrievalAgent {
    pub measurements: Vec<Measurement>,
    dim: usize,
}

impl PhaseRetrievalAgent {
    pub fn new(directions: Vec<DVector<f64>>, amplitudes_sq: Vec<f64>) -> Self {
        assert_eq!(directions.len(), amplitudes_sq.len());
        assert!(!directions.is_empty());
        let dim = directions[0].len();
        assert!(dim % 2 == 0, "real embedding dimension must be even");
        let measurements = directions
            .into_iter()
            .zip(amplitudes_sq)
            .map(|(direction, amplitude_sq)| {
                let d = direction.len() / 2;
                let mut rotated = DVector::zeros(2 * d);
                for i in 0..d {
                    rotated[i] = direction[d + i];
                    rotated[d + i] = -direction[i];
                }
                Measurement {
                    direction,
                    rotated,
                    amplitude_sq,
                }
            })
            .collect();
        PhaseRetrievalAgent { measurements, dim }
    }

    /// Hessian of the smooth part: per measurement, with `q = |<x,t>|^2`,
    /// `(4/m)[(q - b)(t t' + r r') + 2 (re t + im r)(re t + im r)']`.
    fn smooth_hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.measurements.len() as f64;
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for meas in &self.measurements {
            let re = x.dot(&meas.direction);
            let im = x.dot(&meas.rotated);
            let q = re * re + im * im;
            let c = 4.0 * (q - meas.amplitude_sq) / m;
            h.ger(c, &meas.direction, &meas.direction, 1.0);
            h.ger(c, &meas.rotated, &meas.rotated, 1.0);
            let gq = &meas.direction * re + &meas.rotated * im;
            h.ger(8.0 / m, &gq, &gq, 1.0);
        }
        h
    }

    /// `|<x, t>|^2` in the real embedding.
    pub fn intensity(m: &Measurement, x: &DVector<f64>) -> f64 {
        let re = x.dot(&m.direction);
        let im = x.dot(&m.rotated);
        re * re + im * im
    }
}

impl LocalObjective for PhaseRetrievalAgent {
    fn dim(&self) -> usize {
        self.dim
    }

    fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        let m = self.measurements.len() as f64;
        self.measurements
            .iter()
            .map(|meas| {
                let r = meas.amplitude_sq - Self::intensity(meas, x);
                r * r
            })
            .sum::<f64>()
            / m
    }

    fn smooth_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.measurements.len() as f64;
        let mut g = DVector::zeros(self.dim);
        for meas in &self.measurements {
            let re = x.dot(&meas.direction);
            let im = x.dot(&meas.rotated);
            let q = re * re + im * im;
            let scale = 4.0 * (q - meas.amplitude_sq) / m;
            g.axpy(scale * re, &meas.direction, 1.0);
            g.axpy(scale * im, &meas.rotated, 1.0);
        }
        g
    }

    /// Damped Newton on the quartic subproblem, warm-started at `warm`
    /// (default: the center). The subproblem Hessian is `w I` plus a sum of
    /// rank-2 measurement terms, so factorizing it is cheap at these sizes
    /// and the last digits of accuracy are actually reachable, which plain
    /// gradient descent stalls on.
    fn prox(
        &self,
        center: &DVector<f64>,
        weight: f64,
        warm: Option<&DVector<f64>>,
        params: &ProxParams,
    ) -> Result<ProxOutcome> {
        if center.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: center.len(),
            });
        }
        assert!(weight > 0.0, "prox weight must be positive");
        let phi = |u: &DVector<f64>| self.smooth_value(u) + 0.5 * weight * (u - center).norm_squared();
        let grad = |u: &DVector<f64>| self.smooth_gradient(u) + (u - center) * weight;

        let mut u = warm.unwrap_or(center).clone();
        // Never start worse than the center itself.
        if phi(&u) > phi(center) {
            u = center.clone();
        }
        let mut fu = phi(&u);
        let mut iters = 0;
        let mut converged = false;
        while iters < params.max_iters {
            let g = grad(&u);
            if g.norm() <= params.tol {
                converged = true;
                break;
            }
            let mut h = self.smooth_hessian(&u);
            for i in 0..self.dim {
                h[(i, i)] += weight;
            }
            // Levenberg damping until the factorization goes through; far
            // from the solution the quartic's Hessian can push h indefinite.
            let mut damping = 0.0;
            let dir = loop {
                let mut hd = h.clone();
                if damping > 0.0 {
                    for i in 0..self.dim {
                        hd[(i, i)] += damping;
                    }
                }
                if let Some(ch) = hd.cholesky() {
                    break ch.solve(&g);
                }
                damping = if damping == 0.0 {
                    1e-6 * (1.0 + weight)
                } else {
                    damping * 100.0
                };
                if damping > 1e12 * (1.0 + weight) {
                    break &g / weight; // fall back to a gradient step
                }
            };
            let slope = g.dot(&dir);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &u - &dir * t;
                let fc = phi(&cand);
                if fc <= fu - 1e-4 * t * slope {
                    u = cand;
                    fu = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            iters += 1;
            if !accepted || t * dir.norm() <= 1e-15 * (1.0 + u.norm()) {
                break; // movement below float resolution; take the floor
            }
        }
        Ok(ProxOutcome {
            point: u,
            iters,
            converged,
        })
    }
}

/// Seeded measurement generator matching the experiment setup: directions
/// drawn N(0, I/2) in R^{2d}, measurement noise N(0, sigma^2), ground truth
/// standard normal in R^{2d} normalized to unit length.
///
/// Returns the per-agent data and the true signal (diagnostics only).
pub fn generate_phase_retrieval(
    seed: u64,
    n: usize,
    d: usize,
    m_per_agent: usize,
    noise_sigma: f64,
) -> (Vec<PhaseRetrievalAgent>, DVector<f64>) {
    assert!(n > 0 && d > 0 && m_per_agent > 0);
    assert!(noise_sigma >= 0.0);
    let dim = 2 * d;
    let mut global = stream_rng(seed, GLOBAL_STREAM);
    let mut x0 = DVector::from_fn(dim, |_, _| global.sample::<f64, _>(StandardNormal));
    x0 /= x0.norm();

    let half_std = 0.5f64.sqrt();
    let agents = (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, agent_stream(i));
            let mut directions = Vec::with_capacity(m_per_agent);
            let mut amplitudes = Vec::with_capacity(m_per_agent);
            for _ in 0..m_per_agent {
                let t = DVector::from_fn(dim, |_, _| {
                    half_std * rng.sample::<f64, _>(StandardNormal)
                });
                let d_half = dim / 2;
                let re = (0..dim).map(|k| x0[k] * t[k]).sum::<f64>();
                let im = (0..d_half)
                    .map(|k| x0[k] * t[d_half + k] - x0[d_half + k] * t[k])
                    .sum::<f64>();
                let noise = noise_sigma * rng.sample::<f64, _>(StandardNormal);
                directions.push(t);
                amplitudes.push(re * re + im * im + noise);
            }
            PhaseRetrievalAgent::new(directions, amplitudes)
        })
        .collect();
    (agents, x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::test_util::{assert_gradient_matches_fd, assert_prox_no_worse};

    #[test]
    fn noiseless_truth_has_zero_residual() {
        let (agents, x0) = generate_phase_retrieval(3, 4, 5, 8, 0.0);
        for a in &agents {
            assert!(a.smooth_value(&x0).abs() < 1e-22);
            assert!(a.smooth_gradient(&x0).norm() < 1e-10);
        }
    }

    #[test]
    fn value_at_zero_is_mean_square_of_measurements() {
        let (agents, _) = generate_phase_retrieval(9, 2, 3, 7, 0.01);
        let a = &agents[0];
        let x = DVector::zeros(a.dim());
        let expected = a
            .measurements
            .iter()
            .map(|m| m.amplitude_sq * m.amplitude_sq)
            .sum::<f64>()
            / a.measurements.len() as f64;
        assert!((a.smooth_value(&x) - expected).abs() < 1e-14);
    }

    #[test]
    fn generation_is_deterministic_and_paper_sized() {
        let (a1, x1) = generate_phase_retrieval(1, 15, 32, 30, 0.01);
        let (a2, x2) = generate_phase_retrieval(1, 15, 32, 30, 0.01);
        assert_eq!(x1, x2);
        assert_eq!(a1.len(), 15);
        assert_eq!(a1.iter().map(|a| a.measurements.len()).sum::<usize>(), 450);
        for (u, v) in a1.iter().zip(&a2) {
            for (mu, mv) in u.measurements.iter().zip(&v.measurements) {
                assert_eq!(mu.direction, mv.direction);
                assert_eq!(mu.amplitude_sq, mv.amplitude_sq);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::Rng;
        let (agents, _) = generate_phase_retrieval(5, 2, 4, 6, 0.01);
        let mut rng = crate::rng::stream_rng(6, 0);
        for a in &agents {
            for _ in 0..5 {
                let x = DVector::from_fn(a.dim(), |_, _| 2.0 * rng.gen::<f64>() - 1.0);
                assert_gradient_matches_fd(a, &x, 1e-5);
            }
        }
    }

    #[test]
    fn prox_with_huge_weight_stays_at_center() {
        let (agents, _) = generate_phase_retrieval(2, 1, 3, 5, 0.0);
        let center = DVector::from_vec(vec![0.3, -0.2, 0.7, 0.1, -0.5, 0.2]);
        let out = agents[0]
            .prox(&center, 1e8, None, &ProxParams::default())
            .unwrap();
        assert!((&out.point - &center).norm() < 1e-4);
    }

    #[test]
    fn prox_matches_grid_search_on_scalar_problem() {
        // d=1 (two real dims) restricted to a single real coordinate: sweep a
        // dense grid over the quartic subproblem and compare minima.
        let direction = DVector::from_vec(vec![1.0, 0.0]);
        let agent = PhaseRetrievalAgent::new(vec![direction], vec![2.0]);
        let center = DVector::from_vec(vec![0.4, 0.0]);
        let weight = 3.0;
        let out = agent
            .prox(&center, weight, None, &ProxParams { tol: 1e-12, max_iters: 2000 })
            .unwrap();
        // Subproblem is symmetric in the second coordinate; optimum keeps it 0.
        assert!(out.point[1].abs() < 1e-9);
        let phi = |v: f64| {
            let x = DVector::from_vec(vec![v, 0.0]);
            agent.smooth_value(&x) + 0.5 * weight * (&x - &center).norm_squared()
        };
        let mut best = (f64::INFINITY, 0.0);
        let mut v = -3.0;
        while v <= 3.0 {
            let f = phi(v);
            if f < best.0 {
                best = (f, v);
            }
            v += 1e-3;
        }
        assert!(
            (out.point[0] - best.1).abs() < 2e-3,
            "prox {} vs grid {}",
            out.point[0],
            best.1
        );
    }

    #[test]
    fn prox_at_truth_on_noiseless_data_stays_at_truth() {
        let (agents, x0) = generate_phase_retrieval(4, 1, 3, 10, 0.0);
        let a = &agents[0];
        // Gradient vanishes at x0, so for weight above the local curvature the
        // subproblem is minimized at the center.
        assert!(a.smooth_gradient(&x0).norm() < 1e-10);
        let out = a.prox(&x0, 500.0, None, &ProxParams::default()).unwrap();
        assert!((&out.point - &x0).norm() < 1e-8);
        assert_prox_no_worse(a, &x0, 500.0, &ProxParams::default());
    }
}
