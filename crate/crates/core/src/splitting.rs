//! Douglas-Rachford core on the stacked space: the two proxes, the full and
//! randomized block-coordinate steps, the merit function, and the
//! block-coordinate noise term.
//!
//! `f~` is the image of the separable local cost under the stacking operator;
//! its prox is realized through per-agent proxes with weight `|N_j|/gamma`
//! (never by forming the infimal post-composition explicitly). `g~` is the
//! indicator of per-subgraph consensus; its prox is blockwise averaging.

use crate::error::{Error, Result};
use crate::graph::SubgraphCover;
use crate::par::map_indexed;
use crate::problems::{LocalObjective, ProxParams};
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;

/// Consensus violations up to this are treated as feasible for the indicator;
/// `v` is produced by floating-point averaging.
pub const CONSENSUS_TOL: f64 = 1e-9;

/// Stacked splitting state.
#[derive(Debug, Clone)]
pub struct DrsState {
    /// Shadow variable.
    pub s: DVector<f64>,
    /// Latest prox-of-`f~` output.
    pub u: DVector<f64>,
    /// Latest prox-of-`g~` output.
    pub v: DVector<f64>,
    /// Per-node minimizers recovered alongside `u` (warm starts, metrics).
    pub x: Vec<DVector<f64>>,
    pub gamma: f64,
}

impl DrsState {
    pub fn new(s0: DVector<f64>, gamma: f64, cover: &SubgraphCover) -> Result<Self> {
        if s0.len() != cover.p() {
            return Err(Error::DimensionMismatch {
                expected: cover.p(),
                got: s0.len(),
            });
        }
        assert!(gamma > 0.0);
        let x = cover.unstack_average(&s0)?;
        let p = cover.p();
        Ok(DrsState {
            s: s0,
            u: DVector::zeros(p),
            v: DVector::zeros(p),
            x,
            gamma,
        })
    }
}

/// Output of the `f~` prox: the stacked point, the per-node minimizers, and
/// inner-solver accounting.
#[derive(Debug, Clone)]
pub struct ProxFOutput {
    pub u: DVector<f64>,
    pub x: Vec<DVector<f64>>,
    pub inner_iters: usize,
    pub all_converged: bool,
}

/// `Prox_{gamma f~}(s)`: node j solves its local prox at the average of its
/// block copies with weight `|N_j|/gamma`; the results are re-stacked.
/// Per-node solves run in parallel; each writes a disjoint block of `u`.
pub fn prox_f_tilde(
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    s: &DVector<f64>,
    gamma: f64,
    warm: Option<&[DVector<f64>]>,
    params: &ProxParams,
) -> Result<ProxFOutput> {
    let n = cover.n_nodes();
    if objectives.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: objectives.len(),
        });
    }
    if s.len() != cover.p() {
        return Err(Error::DimensionMismatch {
            expected: cover.p(),
            got: s.len(),
        });
    }
    let results = map_indexed(n, |idx| {
        let j = idx + 1;
        let center = cover.node_block_average(s, j);
        let weight = cover.neighbourhood(j).len() as f64 / gamma;
        objectives[idx].prox(&center, weight, warm.map(|w| &w[idx]), params)
    });
    let mut x = Vec::with_capacity(n);
    let mut inner_iters = 0;
    let mut all_converged = true;
    for r in results {
        let out = r?;
        inner_iters += out.iters;
        all_converged &= out.converged;
        x.push(out.point);
    }
    let u = cover.stack(&x)?;
    Ok(ProxFOutput {
        u,
        x,
        inner_iters,
        all_converged,
    })
}

/// `Prox_{gamma g~}(w)`: projection onto the product of consensus subspaces;
/// every block of subgraph i is replaced by the subgraph mean. Idempotent and
/// nonexpansive; independent of gamma.
pub fn prox_g_tilde(cover: &SubgraphCover, w: &DVector<f64>) -> Result<DVector<f64>> {
    if w.len() != cover.p() {
        return Err(Error::DimensionMismatch {
            expected: cover.p(),
            got: w.len(),
        });
    }
    let d = cover.dim();
    let mut v = DVector::zeros(cover.p());
    for i in 0..cover.m() {
        let blocks = cover.subgraph_blocks(i);
        let count = blocks.len() as f64;
        let mut mean = DVector::zeros(d);
        for b in blocks.clone() {
            mean += w.rows(b * d, d);
        }
        mean /= count;
        for b in blocks {
            v.rows_mut(b * d, d).copy_from(&mean);
        }
    }
    Ok(v)
}

/// A set of stacked-space blocks, each one a `(subgraph, node)` slot of
/// length d, aligned with the cover layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSelection {
    /// Sorted, deduplicated flat block indices.
    blocks: Vec<usize>,
}

impl BlockSelection {
    pub fn from_blocks(mut blocks: Vec<usize>, cover: &SubgraphCover) -> Self {
        blocks.sort_unstable();
        blocks.dedup();
        assert!(
            blocks.last().is_none_or(|&b| b < cover.num_blocks()),
            "block index out of range"
        );
        BlockSelection { blocks }
    }

    /// All blocks: reduces the randomized step to the full step.
    pub fn all(cover: &SubgraphCover) -> Self {
        BlockSelection {
            blocks: (0..cover.num_blocks()).collect(),
        }
    }

    /// The blocks owned by the given subgraphs (an ADMM activation set).
    pub fn from_subgraphs(cover: &SubgraphCover, subgraphs: &[usize]) -> Self {
        let mut blocks = Vec::new();
        for &i in subgraphs {
            blocks.extend(cover.subgraph_blocks(i));
        }
        Self::from_blocks(blocks, cover)
    }

    /// Uniformly random fixed-size subset of blocks (partial shuffle).
    pub fn sample_uniform<R: Rng>(cover: &SubgraphCover, count: usize, rng: &mut R) -> Self {
        assert!(count >= 1 && count <= cover.num_blocks());
        let mut ids: Vec<usize> = (0..cover.num_blocks()).collect();
        let (chosen, _) = ids.partial_shuffle(rng, count);
        Self::from_blocks(chosen.to_vec(), cover)
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    /// Number of scalar coordinates covered (`|C|` in the step-size condition).
    pub fn coord_count(&self, cover: &SubgraphCover) -> usize {
        self.blocks.len() * cover.dim()
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub inner_iters: usize,
    pub all_converged: bool,
    /// `||v - u||` for the freshly computed pair.
    pub residual: f64,
}

fn compute_uv(
    state: &DrsState,
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    params: &ProxParams,
) -> Result<(ProxFOutput, DVector<f64>)> {
    let fu = prox_f_tilde(cover, objectives, &state.s, state.gamma, Some(&state.x), params)?;
    let reflected = &fu.u * 2.0 - &state.s;
    let v = prox_g_tilde(cover, &reflected)?;
    Ok((fu, v))
}

/// One full DRS step: `u = Prox_f~(s)`, `v = Prox_g~(2u - s)`, `s += v - u`.
pub fn drs_step(
    state: &mut DrsState,
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    params: &ProxParams,
) -> Result<StepStats> {
    let (fu, v) = compute_uv(state, cover, objectives, params)?;
    let diff = &v - &fu.u;
    state.s += &diff;
    let stats = StepStats {
        inner_iters: fu.inner_iters,
        all_converged: fu.all_converged,
        residual: diff.norm(),
    };
    state.u = fu.u;
    state.x = fu.x;
    state.v = v;
    Ok(stats)
}

/// Randomized block-coordinate step: `u`, `v` as in the full step, but only
/// the selected blocks of `s` move.
pub fn rbc_drs_step(
    state: &mut DrsState,
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    selection: &BlockSelection,
    params: &ProxParams,
) -> Result<StepStats> {
    rbc_step_inner(state, cover, objectives, selection, params, 1.0)
}

/// Block-coordinate step with the `p/|C|` compensation on updated blocks,
/// i.e. the inexact-DRS form `s+ = s + (v - u) + xi`. Used by the
/// noise-bound verification harness.
pub fn rbc_drs_step_compensated(
    state: &mut DrsState,
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    selection: &BlockSelection,
    params: &ProxParams,
) -> Result<StepStats> {
    let scale = cover.num_blocks() as f64 / selection.len() as f64;
    rbc_step_inner(state, cover, objectives, selection, params, scale)
}

fn rbc_step_inner(
    state: &mut DrsState,
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    selection: &BlockSelection,
    params: &ProxParams,
    scale: f64,
) -> Result<StepStats> {
    if selection.is_empty() {
        return Err(Error::EmptyActivation);
    }
    let (fu, v) = compute_uv(state, cover, objectives, params)?;
    let d = cover.dim();
    let mut residual_sq = 0.0;
    for &b in selection.blocks() {
        for k in b * d..(b + 1) * d {
            let delta = v[k] - fu.u[k];
            state.s[k] += scale * delta;
            residual_sq += delta * delta;
        }
    }
    let stats = StepStats {
        inner_iters: fu.inner_iters,
        all_converged: fu.all_converged,
        residual: residual_sq.sqrt(),
    };
    state.u = fu.u;
    state.x = fu.x;
    state.v = v;
    Ok(stats)
}

/// The block-coordinate noise vector
/// `xi = (p/|C|) sum_{j in C} [v - u]_j e_j - (v - u)`.
pub fn xi_term(
    u: &DVector<f64>,
    v: &DVector<f64>,
    selection: &BlockSelection,
    cover: &SubgraphCover,
) -> DVector<f64> {
    let d = cover.dim();
    let scale = cover.p() as f64 / selection.coord_count(cover) as f64;
    let mut xi = -(v - u);
    for &b in selection.blocks() {
        for k in b * d..(b + 1) * d {
            xi[k] += scale * (v[k] - u[k]);
        }
    }
    xi
}

/// Worst per-subgraph deviation of `v`'s blocks from their mean.
pub fn consensus_violation(cover: &SubgraphCover, v: &DVector<f64>) -> f64 {
    let d = cover.dim();
    let mut worst: f64 = 0.0;
    for i in 0..cover.m() {
        let blocks = cover.subgraph_blocks(i);
        let count = blocks.len() as f64;
        let mut mean = DVector::zeros(d);
        for b in blocks.clone() {
            mean += v.rows(b * d, d);
        }
        mean /= count;
        for b in blocks {
            let dev = (v.rows(b * d, d) - &mean).norm();
            worst = worst.max(dev);
        }
    }
    worst
}

/// The three algebraically equal forms of the merit function
/// `L_gamma(u, v, s) = f~(u) + g~(v) + (1/gamma)<s-u, v-u> - (1/2 gamma)||v-u||^2`.
pub fn merit_forms(
    u: &DVector<f64>,
    v: &DVector<f64>,
    s: &DVector<f64>,
    f_value: f64,
    g_value: f64,
    gamma: f64,
) -> [f64; 3] {
    let su = s - u;
    let vu = v - u;
    let base = f_value + g_value;
    let form1 = base + su.dot(&vu) / gamma - vu.norm_squared() / (2.0 * gamma);
    let reflected = u * 2.0 - s - v;
    let form2 = base + reflected.norm_squared() / (2.0 * gamma)
        - su.norm_squared() / (2.0 * gamma)
        - vu.norm_squared() / gamma;
    let sv = s - v;
    let form3 = base + (su.norm_squared() - sv.norm_squared()) / (2.0 * gamma);
    [form1, form2, form3]
}

/// Total local cost `sum_j f_j(x_j)` (smooth plus nonsmooth parts).
pub fn f_value(objectives: &[Box<dyn LocalObjective>], x: &[DVector<f64>]) -> f64 {
    objectives
        .iter()
        .zip(x)
        .map(|(o, xj)| o.value(xj))
        .sum()
}

/// Merit of a consistent triple; the consensus indicator fires (and the merit
/// is infinite) when `v` violates per-subgraph consensus beyond tolerance.
pub fn merit(
    cover: &SubgraphCover,
    u: &DVector<f64>,
    v: &DVector<f64>,
    s: &DVector<f64>,
    f_value: f64,
    gamma: f64,
) -> Result<f64> {
    let violation = consensus_violation(cover, v);
    if violation > CONSENSUS_TOL {
        return Err(Error::MeritInfinite { violation });
    }
    Ok(merit_forms(u, v, s, f_value, 0.0, gamma)[0])
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::graph::SubgraphCover;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stack_is_linear(coeff in -3.0f64..3.0, vals in proptest::collection::vec(-5.0f64..5.0, 10)) {
            let cover = SubgraphCover::ring(5, 1).unwrap();
            let x: Vec<DVector<f64>> = vals[..5].iter().map(|&v| DVector::from_element(1, v)).collect();
            let y: Vec<DVector<f64>> = vals[5..].iter().map(|&v| DVector::from_element(1, v)).collect();
            let combo: Vec<DVector<f64>> = x.iter().zip(&y).map(|(a, b)| a * coeff + b).collect();
            let lhs = cover.stack(&combo).unwrap();
            let rhs = cover.stack(&x).unwrap() * coeff + cover.stack(&y).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn unstack_inverts_stack(vals in proptest::collection::vec(-5.0f64..5.0, 5)) {
            let cover = SubgraphCover::ring(5, 1).unwrap();
            let x: Vec<DVector<f64>> = vals.iter().map(|&v| DVector::from_element(1, v)).collect();
            let back = cover.unstack_average(&cover.stack(&x).unwrap()).unwrap();
            for (a, b) in x.iter().zip(&back) {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn prox_g_nonexpansive(a in proptest::collection::vec(-5.0f64..5.0, 12),
                               b in proptest::collection::vec(-5.0f64..5.0, 12)) {
            let cover = SubgraphCover::ring(6, 1).unwrap();
            let wa = DVector::from_vec(a);
            let wb = DVector::from_vec(b);
            let va = prox_g_tilde(&cover, &wa).unwrap();
            let vb = prox_g_tilde(&cover, &wb).unwrap();
            prop_assert!((va - vb).norm() <= (wa - wb).norm() + 1e-12);
        }
    }
}
