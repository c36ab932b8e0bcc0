//! Asynchronous decentralised consensus ADMM over a subgraph cover: network
//! state, activation sampling, the three-phase subgraph update, the
//! synchronous reference mode, and the change of variables into the stacked
//! splitting coordinates.

use crate::analysis::RunRecord;
use crate::error::{Error, Result};
use crate::graph::SubgraphCover;
use crate::par::map_indexed;
use crate::problems::{LocalObjective, NonsmoothSum, ProxParams};
use crate::rng::stream_rng;
use crate::splitting::{f_value, merit_forms, prox_g_tilde};
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

/// RNG stream reserved for activation draws (never collides with the data
/// streams, which are small).
pub const SAMPLER_STREAM: u64 = u64::MAX;

/// Full algorithm state: per-node primal vectors plus per-(subgraph, node)
/// consensus copies and duals laid out flat in the cover's block order.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub x: Vec<DVector<f64>>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub beta: f64,
    pub iter: usize,
}

impl NetworkState {
    /// All-zeros initialization.
    pub fn zeros(cover: &SubgraphCover, beta: f64) -> Self {
        assert!(beta > 0.0);
        let d = cover.dim();
        NetworkState {
            x: vec![DVector::zeros(d); cover.n_nodes()],
            z: DVector::zeros(cover.p()),
            y: DVector::zeros(cover.p()),
            beta,
            iter: 0,
        }
    }

    /// Start from given node vectors with copies `z` stacked to agree and
    /// zero duals.
    pub fn from_node_values(cover: &SubgraphCover, x: Vec<DVector<f64>>, beta: f64) -> Result<Self> {
        assert!(beta > 0.0);
        let z = cover.stack(&x)?;
        Ok(NetworkState {
            x,
            z,
            y: DVector::zeros(cover.p()),
            beta,
            iter: 0,
        })
    }

    /// Per-subgraph sums of the dual blocks; zero (up to rounding) whenever
    /// duals start at zero, by the update's construction.
    pub fn dual_block_sums(&self, cover: &SubgraphCover) -> Vec<DVector<f64>> {
        let d = cover.dim();
        (0..cover.m())
            .map(|i| {
                let mut sum = DVector::zeros(d);
                for b in cover.subgraph_blocks(i) {
                    sum += self.y.rows(b * d, d);
                }
                sum
            })
            .collect()
    }
}

/// Uniform activation of subgraph subsets, fixed-cardinality by default with
/// a Bernoulli per-subgraph variant.
#[derive(Debug, Clone)]
pub enum ActivationSampler {
    FixedCardinality {
        m: usize,
        cardinality: usize,
        rng: ChaCha8Rng,
    },
    Bernoulli {
        m: usize,
        prob: f64,
        rng: ChaCha8Rng,
    },
}

impl ActivationSampler {
    pub fn fixed(m: usize, cardinality: usize, seed: u64) -> Self {
        assert!(m > 0 && cardinality >= 1 && cardinality <= m);
        ActivationSampler::FixedCardinality {
            m,
            cardinality,
            rng: stream_rng(seed, SAMPLER_STREAM),
        }
    }

    pub fn bernoulli(m: usize, prob: f64, seed: u64) -> Self {
        assert!(m > 0 && prob > 0.0 && prob <= 1.0);
        ActivationSampler::Bernoulli {
            m,
            prob,
            rng: stream_rng(seed, SAMPLER_STREAM),
        }
    }

    /// Draws a nonempty sorted activation set (0-based subgraph ids). The
    /// Bernoulli variant redraws on the empty outcome so every round does work.
    pub fn draw(&mut self) -> Vec<usize> {
        match self {
            ActivationSampler::FixedCardinality { m, cardinality, rng } => {
                let mut ids: Vec<usize> = (0..*m).collect();
                let (chosen, _) = ids.partial_shuffle(rng, *cardinality);
                let mut out = chosen.to_vec();
                out.sort_unstable();
                out
            }
            ActivationSampler::Bernoulli { m, prob, rng } => loop {
                let out: Vec<usize> = (0..*m).filter(|_| rng.gen::<f64>() < *prob).collect();
                if !out.is_empty() {
                    return out;
                }
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub inner_iters: usize,
    pub all_converged: bool,
}

/// One round of Algorithm updates for the active subgraphs.
///
/// Phase 1 computes `x~_j` for every node of an active subgraph from the
/// pre-round `z, y` (so overlapping active subgraphs see one consistent
/// snapshot and each node is solved exactly once); phase 2 runs the local
/// proxes in parallel; phase 3 refreshes each active subgraph's copies and
/// duals from the fresh `x`.
pub fn admm_iteration(
    state: &mut NetworkState,
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    active: &[usize],
    params: &ProxParams,
) -> Result<IterationStats> {
    if active.is_empty() {
        return Err(Error::EmptyActivation);
    }
    if objectives.len() != cover.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: cover.n_nodes(),
            got: objectives.len(),
        });
    }
    assert!(active.iter().all(|&i| i < cover.m()), "active id out of range");

    let d = cover.dim();
    let beta = state.beta;
    let mut nodes: Vec<usize> = active
        .iter()
        .flat_map(|&i| cover.subgraphs()[i].nodes.iter().copied())
        .collect();
    nodes.sort_unstable();
    nodes.dedup();

    let solved = map_indexed(nodes.len(), |idx| {
        let j = nodes[idx];
        let hood = cover.neighbourhood(j);
        let mut center = DVector::zeros(d);
        for &i in hood {
            let b = cover.block_index(i, j);
            center += state.z.rows(b * d, d) - state.y.rows(b * d, d) / beta;
        }
        center /= hood.len() as f64;
        let weight = beta * hood.len() as f64;
        objectives[j - 1].prox(&center, weight, Some(&state.x[j - 1]), params)
    });

    let mut inner_iters = 0;
    let mut all_converged = true;
    for (idx, r) in solved.into_iter().enumerate() {
        let out = r?;
        inner_iters += out.iters;
        all_converged &= out.converged;
        state.x[nodes[idx] - 1] = out.point;
    }

    for &i in active {
        let sub_nodes = &cover.subgraphs()[i].nodes;
        let mut zbar = DVector::zeros(d);
        for &j in sub_nodes.iter() {
            let b = cover.block_index(i, j);
            zbar += &state.x[j - 1] + state.y.rows(b * d, d) / beta;
        }
        zbar /= sub_nodes.len() as f64;
        for &j in sub_nodes.iter() {
            let b = cover.block_index(i, j);
            let increment = (&state.x[j - 1] - &zbar) * beta;
            state.z.rows_mut(b * d, d).copy_from(&zbar);
            let mut yb = state.y.rows_mut(b * d, d);
            yb += increment;
        }
    }
    state.iter += 1;
    Ok(IterationStats {
        inner_iters,
        all_converged,
    })
}

/// The splitting-coordinate image of the state: block `(i, j)` holds
/// `z_{i_j} - y_{i_j} / beta`.
pub fn to_drs_coordinates(state: &NetworkState, cover: &SubgraphCover) -> DVector<f64> {
    assert_eq!(state.z.len(), cover.p());
    &state.z - &state.y / state.beta
}

/// Metric plumbing for [`run`]: the nonsmooth part of the global objective
/// (for the composite residual column) and the forward step used in it.
pub struct RunOptions {
    pub nonsmooth: NonsmoothSum,
    pub residual_step: f64,
    pub params: ProxParams,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            nonsmooth: NonsmoothSum::None,
            residual_step: 1.0,
            params: ProxParams::default(),
        }
    }
}

fn record_metrics(
    state: &NetworkState,
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    options: &RunOptions,
    active: Vec<usize>,
    inner_iters: usize,
    wall_ms: f64,
) -> Result<RunRecord> {
    let s = to_drs_coordinates(state, cover);
    let u = cover.stack(&state.x)?;
    let v = prox_g_tilde(cover, &(&u * 2.0 - &s))?;
    let fv = f_value(objectives, &state.x);
    let merit = merit_forms(&u, &v, &s, fv, 0.0, 1.0 / state.beta)[0];

    let grad_norm = crate::analysis::gradient_norm(objectives, &state.x);
    let disagreement = crate::analysis::disagreement(&state.x);
    let n = state.x.len() as f64;
    let mut mean = DVector::zeros(cover.dim());
    for xj in &state.x {
        mean += xj;
    }
    mean /= n;
    let prox_residual = crate::analysis::prox_gradient_residual(
        objectives,
        &options.nonsmooth,
        &mean,
        options.residual_step,
    );
    Ok(RunRecord {
        iter: state.iter,
        merit,
        grad_norm,
        disagreement,
        prox_residual,
        active_ids: active,
        inner_iters,
        wall_ms,
    })
}

/// Runs the sampled asynchronous loop (or the synchronous loop when no
/// sampler is given), recording one row per iteration. Deterministic in
/// (state, sampler seed); wall time is the only nondeterministic column.
pub fn run(
    state: &mut NetworkState,
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    mut sampler: Option<&mut ActivationSampler>,
    iterations: usize,
    options: &RunOptions,
) -> Result<Vec<RunRecord>> {
    assert!(iterations >= 1);
    let mut records = Vec::with_capacity(iterations);
    let all: Vec<usize> = (0..cover.m()).collect();
    for _ in 0..iterations {
        let active = match sampler.as_deref_mut() {
            Some(s) => s.draw(),
            None => all.clone(),
        };
        let t0 = Instant::now();
        let stats = admm_iteration(state, cover, objectives, &active, &options.params)?;
        let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        records.push(record_metrics(
            state,
            cover,
            objectives,
            options,
            active,
            stats.inner_iters,
            wall_ms,
        )?);
    }
    Ok(records)
}

/// Synchronous baseline: every subgraph active every round.
pub fn sync_admm_reference(
    state: &mut NetworkState,
    cover: &SubgraphCover,
    objectives: &[Box<dyn LocalObjective>],
    iterations: usize,
    options: &RunOptions,
) -> Result<Vec<RunRecord>> {
    run(state, cover, objectives, None, iterations, options)
}

/// Writes the full state as flat CSV rows keyed by (kind, subgraph, node,
/// coordinate); `x` rows carry subgraph 0.
pub fn save_checkpoint(state: &NetworkState, cover: &SubgraphCover, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "kind,subgraph,node,coordinate,value")?;
    let d = cover.dim();
    for (j, xj) in state.x.iter().enumerate() {
        for k in 0..d {
            writeln!(w, "x,0,{},{},{:?}", j + 1, k, xj[k])?;
        }
    }
    for b in 0..cover.num_blocks() {
        let (i, j) = cover.block(b);
        for k in 0..d {
            writeln!(w, "z,{},{},{},{:?}", i + 1, j, k, state.z[b * d + k])?;
            writeln!(w, "y,{},{},{},{:?}", i + 1, j, k, state.y[b * d + k])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`] back into a state.
pub fn load_checkpoint(cover: &SubgraphCover, beta: f64, path: &Path) -> Result<NetworkState> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut state = NetworkState::zeros(cover, beta);
    let d = cover.dim();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let parse = || -> Option<(String, usize, usize, usize, f64)> {
            let mut it = line.split(',');
            let kind = it.next()?.to_string();
            let sub: usize = it.next()?.parse().ok()?;
            let node: usize = it.next()?.parse().ok()?;
            let coord: usize = it.next()?.parse().ok()?;
            let value: f64 = it.next()?.parse().ok()?;
            Some((kind, sub, node, coord, value))
        };
        let (kind, sub, node, coord, value) = parse().ok_or_else(|| Error::Config {
            line: Some(lineno + 1),
            msg: "bad checkpoint row".into(),
        })?;
        let bad_row = |msg: &str| Error::Config {
            line: Some(lineno + 1),
            msg: msg.into(),
        };
        if node == 0 || node > cover.n_nodes() || coord >= d {
            return Err(bad_row("index out of range"));
        }
        match kind.as_str() {
            "x" => state.x[node - 1][coord] = value,
            "z" | "y" => {
                if sub == 0 || sub > cover.m() {
                    return Err(bad_row("subgraph out of range"));
                }
                let b = cover.block_index(sub - 1, node);
                if kind == "z" {
                    state.z[b * d + coord] = value;
                } else {
                    state.y[b * d + coord] = value;
                }
            }
            _ => return Err(bad_row("unknown kind")),
        }
    }
    Ok(state)
}
