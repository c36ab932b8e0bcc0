//! Quadratic test objective `f(x) = x'Qx/2 - c'x` with a closed-form prox.

use super::{LocalObjective, ProxOutcome, ProxParams, Smoothness};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    q: DMatrix<f64>,
    c: DVector<f64>,
    lipschitz: f64,
    weak_convexity: f64,
}

impl QuadraticObjective {
    /// `q` must be symmetric.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        assert_eq!(q.nrows(), q.ncols());
        assert_eq!(q.nrows(), c.len());
        let sym_err = (&q - q.transpose()).norm();
        assert!(sym_err < 1e-10 * q.norm().max(1.0), "Q must be symmetric");
        let eigs = q.clone().symmetric_eigen().eigenvalues;
        let max_e = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_e = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        QuadraticObjective {
            q,
            c,
            lipschitz: max_e.abs().max(min_e.abs()),
            weak_convexity: (-min_e).max(0.0),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.c
    }
}

impl LocalObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.q * x)[(0, 0)] - self.c.dot(x)
    }

    fn smooth_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x - &self.c
    }

    fn prox(
        &self,
        center: &DVector<f64>,
        weight: f64,
        _warm: Option<&DVector<f64>>,
        _params: &ProxParams,
    ) -> Result<ProxOutcome> {
        if center.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: center.len(),
            });
        }
        // (Q + wI) u = c + w*center
        let d = self.dim();
        let mut lhs = self.q.clone();
        for i in 0..d {
            lhs[(i, i)] += weight;
        }
        let rhs = &self.c + center * weight;
        let point = lhs
            .lu()
            .solve(&rhs)
            .expect("Q + wI singular; weight must exceed the negative curvature");
        Ok(ProxOutcome {
            point,
            iters: 0,
            converged: true,
        })
    }

    fn smoothness(&self) -> Option<Smoothness> {
        Some(Smoothness {
            lipschitz: self.lipschitz,
            weak_convexity: self.weak_convexity,
        })
    }
}

/// Seeded family of positive-definite quadratics (random `AA' + 0.1 I`) for
/// toy runs and equivalence checks.
pub fn generate_quadratics(seed: u64, n: usize, d: usize) -> Vec<QuadraticObjective> {
    use crate::rng::{agent_stream, stream_rng};
    use rand::Rng;
    assert!(n > 0 && d > 0);
    (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, agent_stream(i));
            let a = DMatrix::from_fn(d, d, |_, _| rng.gen::<f64>() - 0.5);
            let q = (&a * a.transpose()) + DMatrix::identity(d, d) * 0.1;
            let c = DVector::from_fn(d, |_, _| rng.gen::<f64>() - 0.5);
            QuadraticObjective::new(q, c)
        })
        .collect()
}
