//! Experiment orchestration: problem construction from a config, penalty
//! auto-selection, the four run modes, and CSV/summary persistence.

use crate::admm::{
    admm_iteration, run, to_drs_coordinates, ActivationSampler, NetworkState, RunOptions,
};
use crate::analysis::{
    check_beta_condition, check_gamma_condition, estimate_smoothness, ConditionReport, RunRecord,
};
use crate::error::Result;
use crate::graph::{CommGraph, SubgraphCover};
use crate::harness::config::{Activation, BetaChoice, GraphSpec, Init, Mode, Problem, RunConfig};
use crate::problems::{
    generate_lasso, generate_phase_retrieval, generate_quadratics, generate_sparse_pca,
    LocalObjective, NonsmoothSum, ProxParams,
};
use crate::rng::stream_rng;
use crate::splitting::{
    f_value, merit_forms, prox_g_tilde, rbc_drs_step, BlockSelection, DrsState,
};
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// RNG stream for the Gaussian primal initialization (distinct from the data
/// streams and the sampler stream).
const INIT_STREAM: u64 = u64::MAX - 1;

/// Objectives plus the metadata the driver needs around them.
pub struct BuiltProblem {
    pub objectives: Vec<Box<dyn LocalObjective>>,
    /// Solver-side per-node dimension (2d for phase retrieval).
    pub vec_dim: usize,
    pub nonsmooth: NonsmoothSum,
    pub lipschitz: f64,
    pub weak_convexity: f64,
    pub smoothness_exact: bool,
    /// Ground truth when the generator knows one (diagnostics only).
    pub truth: Option<DVector<f64>>,
}

pub fn build_problem(config: &RunConfig) -> BuiltProblem {
    match config.problem {
        Problem::Quadratic => {
            let agents = generate_quadratics(config.seed, config.n, config.d);
            let (l, ell) = agents.iter().fold((0.0f64, 0.0f64), |(l, e), a| {
                let s = a.smoothness().unwrap();
                (l.max(s.lipschitz), e.max(s.weak_convexity))
            });
            BuiltProblem {
                objectives: agents
                    .into_iter()
                    .map(|a| Box::new(a) as Box<dyn LocalObjective>)
                    .collect(),
                vec_dim: config.d,
                nonsmooth: NonsmoothSum::None,
                lipschitz: l,
                weak_convexity: ell,
                smoothness_exact: true,
                truth: None,
            }
        }
        Problem::Lasso => {
            let (agents, truth) = generate_lasso(
                config.seed,
                config.n,
                config.d,
                config.m_per_agent,
                config.noise_sigma,
                config.lambda,
            );
            let l = agents
                .iter()
                .map(|a| a.smoothness().unwrap().lipschitz)
                .fold(0.0f64, f64::max);
            BuiltProblem {
                objectives: agents
                    .into_iter()
                    .map(|a| Box::new(a) as Box<dyn LocalObjective>)
                    .collect(),
                vec_dim: config.d,
                nonsmooth: NonsmoothSum::L1 {
                    lambda: config.lambda,
                },
                lipschitz: l,
                weak_convexity: 0.0,
                smoothness_exact: true,
                truth: Some(truth),
            }
        }
        Problem::PhaseRetrieval => {
            let (agents, truth) = generate_phase_retrieval(
                config.seed,
                config.n,
                config.d,
                config.m_per_agent,
                config.noise_sigma,
            );
            // No closed-form constants for the quartic: sampled Hessian
            // extremes over the ball holding the iterates of interest.
            let mut l = 0.0f64;
            let mut ell = 0.0f64;
            for a in &agents {
                let e = estimate_smoothness(a, 2.0, 60, config.seed);
                l = l.max(e.lipschitz);
                ell = ell.max(e.weak_convexity);
            }
            BuiltProblem {
                objectives: agents
                    .into_iter()
                    .map(|a| Box::new(a) as Box<dyn LocalObjective>)
                    .collect(),
                vec_dim: 2 * config.d,
                nonsmooth: NonsmoothSum::None,
                lipschitz: l,
                weak_convexity: ell,
                smoothness_exact: false,
                truth: Some(truth),
            }
        }
        Problem::SparsePca => {
            let agents = generate_sparse_pca(
                config.seed,
                config.n,
                config.d,
                config.m_per_agent,
                config.entry_sigma,
                config.lambda,
            );
            let (l, ell) = agents.iter().fold((0.0f64, 0.0f64), |(l, e), a| {
                let s = a.smoothness().unwrap();
                (l.max(s.lipschitz), e.max(s.weak_convexity))
            });
            BuiltProblem {
                objectives: agents
                    .into_iter()
                    .map(|a| Box::new(a) as Box<dyn LocalObjective>)
                    .collect(),
                vec_dim: config.d,
                nonsmooth: NonsmoothSum::L1Ball {
                    lambda: config.lambda,
                },
                lipschitz: l,
                weak_convexity: ell,
                smoothness_exact: true,
                truth: None,
            }
        }
    }
}

pub fn build_cover(config: &RunConfig, vec_dim: usize) -> Result<SubgraphCover> {
    match &config.graph {
        GraphSpec::Ring => SubgraphCover::ring(config.n, vec_dim),
        GraphSpec::Explicit { edges, cover } => {
            let graph = CommGraph::new(config.n, edges)?;
            SubgraphCover::build(&graph, cover, vec_dim)
        }
    }
}

/// Expected activation fraction in coordinates (`sum_{i in S} d|V_i| / p` in
/// expectation; exact for full activation).
pub fn activation_fraction(config: &RunConfig, cover: &SubgraphCover) -> f64 {
    match config.activation {
        Activation::Full => 1.0,
        Activation::FixedCardinality(k) => k as f64 / cover.m() as f64,
        Activation::Bernoulli(q) => q,
    }
}

/// Resolves the penalty: either the configured value, or the smallest
/// Theorem-feasible penalty (with 5% headroom) for the activation fraction,
/// floored for sparse PCA at `2.05 max lambda_max` so every local prox is
/// strongly convex.
pub fn resolve_beta(
    config: &RunConfig,
    built: &BuiltProblem,
    cover: &SubgraphCover,
) -> Result<(f64, ConditionReport)> {
    let fraction = activation_fraction(config, cover);
    let p = cover.p();
    let c_size = ((fraction * p as f64).round() as usize).clamp(1, p);
    match config.beta {
        BetaChoice::Fixed(b) => {
            // A fixed penalty is honored even when no penalty satisfies the
            // sufficient condition at this fraction; the report is advisory.
            let report = check_beta_condition(b, built.lipschitz, built.weak_convexity, p, c_size)
                .unwrap_or_else(|_| {
                    let mut r =
                        check_gamma_condition(1.0 / b, built.lipschitz, built.weak_convexity, p, c_size);
                    r.beta = Some(b);
                    r
                });
            Ok((b, report))
        }
        BetaChoice::Auto => {
            let probe = check_beta_condition(1.0, built.lipschitz, built.weak_convexity, p, c_size)?;
            let mut b = probe.minimal_beta.unwrap() * 1.05;
            if let Problem::SparsePca = config.problem {
                // Paper's selection rule; lipschitz here is 2 max lambda_max.
                b = b.max(1.025 * built.lipschitz);
            }
            let report = check_beta_condition(b, built.lipschitz, built.weak_convexity, p, c_size)?;
            Ok((b, report))
        }
    }
}

fn initial_state(
    config: &RunConfig,
    cover: &SubgraphCover,
    beta: f64,
) -> Result<NetworkState> {
    match config.init {
        Init::Zero => Ok(NetworkState::zeros(cover, beta)),
        Init::Gaussian => {
            let mut rng = stream_rng(config.seed, INIT_STREAM);
            let d = cover.dim();
            let x: Vec<DVector<f64>> = (0..cover.n_nodes())
                .map(|_| DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)))
                .collect();
            NetworkState::from_node_values(cover, x, beta)
        }
    }
}

fn make_sampler(config: &RunConfig, cover: &SubgraphCover) -> Option<ActivationSampler> {
    match config.activation {
        Activation::Full => None,
        Activation::FixedCardinality(k) => {
            Some(ActivationSampler::fixed(cover.m(), k.min(cover.m()), config.seed))
        }
        Activation::Bernoulli(q) => Some(ActivationSampler::bernoulli(cover.m(), q, config.seed)),
    }
}

/// Everything a finished run leaves behind.
pub struct RunArtifacts {
    pub records: Vec<RunRecord>,
    pub run_csv: PathBuf,
    pub summary: PathBuf,
    pub beta: f64,
    pub condition: ConditionReport,
    /// Populated in equivalence mode: max per-step deviation between the
    /// mapped network trajectory and the block-coordinate trajectory.
    pub equivalence_max_dev: Option<f64>,
    pub final_state: Option<NetworkState>,
}

/// Writes records in the fixed column order. Floats use round-trip
/// formatting; `active_ids` are semicolon-joined 0-based subgraph ids.
pub fn write_run_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "iter,merit,grad_norm,disagreement,prox_residual,active_ids,inner_iters,wall_ms"
    )?;
    for r in records {
        let ids: Vec<String> = r.active_ids.iter().map(|i| i.to_string()).collect();
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{},{},{:?}",
            r.iter,
            r.merit,
            r.grad_norm,
            r.disagreement,
            r.prox_residual,
            ids.join(";"),
            r.inner_iters,
            r.wall_ms
        )?;
    }
    w.flush()?;
    Ok(())
}

fn drs_mode_records(
    config: &RunConfig,
    cover: &SubgraphCover,
    built: &BuiltProblem,
    beta: f64,
    options: &RunOptions,
) -> Result<Vec<RunRecord>> {
    let gamma = 1.0 / beta;
    let s0 = to_drs_coordinates(&initial_state(config, cover, beta)?, cover);
    let mut state = DrsState::new(s0, gamma, cover)?;
    let mut sampler = make_sampler(config, cover);
    let all: Vec<usize> = (0..cover.m()).collect();
    let mut records = Vec::with_capacity(config.iterations);
    for k in 1..=config.iterations {
        let active = match sampler.as_mut() {
            Some(s) => s.draw(),
            None => all.clone(),
        };
        let selection = BlockSelection::from_subgraphs(cover, &active);
        let t0 = Instant::now();
        let stats = rbc_drs_step(&mut state, cover, &built.objectives, &selection, &options.params)?;
        let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        let fv = f_value(&built.objectives, &state.x);
        let merit = merit_forms(&state.u, &state.v, &state.s, fv, 0.0, gamma)[0];
        let mut mean = DVector::zeros(cover.dim());
        for xj in &state.x {
            mean += xj;
        }
        mean /= state.x.len() as f64;
        records.push(RunRecord {
            iter: k,
            merit,
            grad_norm: crate::analysis::gradient_norm(&built.objectives, &state.x),
            disagreement: crate::analysis::disagreement(&state.x),
            prox_residual: crate::analysis::prox_gradient_residual(
                &built.objectives,
                &options.nonsmooth,
                &mean,
                options.residual_step,
            ),
            active_ids: active,
            inner_iters: stats.inner_iters,
            wall_ms,
        });
    }
    Ok(records)
}

fn equivalence_mode(
    config: &RunConfig,
    cover: &SubgraphCover,
    built: &BuiltProblem,
    beta: f64,
    options: &RunOptions,
) -> Result<(Vec<RunRecord>, f64, NetworkState)> {
    let mut admm = initial_state(config, cover, beta)?;
    let mut drs = DrsState::new(to_drs_coordinates(&admm, cover), 1.0 / beta, cover)?;
    let mut sampler = make_sampler(config, cover);
    let all: Vec<usize> = (0..cover.m()).collect();
    let mut max_dev: f64 = 0.0;
    let mut records = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let active = match sampler.as_mut() {
            Some(s) => s.draw(),
            None => all.clone(),
        };
        let t0 = Instant::now();
        let stats = admm_iteration(&mut admm, cover, &built.objectives, &active, &options.params)?;
        let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        let selection = BlockSelection::from_subgraphs(cover, &active);
        rbc_drs_step(&mut drs, cover, &built.objectives, &selection, &options.params)?;
        max_dev = max_dev.max((to_drs_coordinates(&admm, cover) - &drs.s).norm());

        let s = to_drs_coordinates(&admm, cover);
        let u = cover.stack(&admm.x)?;
        let v = prox_g_tilde(cover, &(&u * 2.0 - &s))?;
        let fv = f_value(&built.objectives, &admm.x);
        records.push(RunRecord {
            iter: admm.iter,
            merit: merit_forms(&u, &v, &s, fv, 0.0, 1.0 / beta)[0],
            grad_norm: crate::analysis::gradient_norm(&built.objectives, &admm.x),
            disagreement: crate::analysis::disagreement(&admm.x),
            prox_residual: max_dev,
            active_ids: active,
            inner_iters: stats.inner_iters,
            wall_ms,
        });
    }
    Ok((records, max_dev, admm))
}

/// Runs the configured experiment and writes `run.csv` plus `summary.txt`
/// into the output directory.
pub fn run_experiment(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let built = build_problem(config);
    let cover = build_cover(config, built.vec_dim)?;
    let (beta, condition) = resolve_beta(config, &built, &cover)?;
    let total_l: f64 = built.lipschitz * config.n as f64;
    let options = RunOptions {
        nonsmooth: built.nonsmooth,
        residual_step: 1.0 / total_l.max(1e-12),
        params: ProxParams {
            tol: config.inner_tol,
            max_iters: config.inner_max_iters,
        },
    };

    std::fs::create_dir_all(&config.output_dir)?;

    let mut equivalence_max_dev = None;
    let (records, final_state) = match config.mode {
        Mode::Sync => {
            let mut state = initial_state(config, &cover, beta)?;
            let r = run(
                &mut state,
                &cover,
                &built.objectives,
                None,
                config.iterations,
                &options,
            )?;
            (r, Some(state))
        }
        Mode::Async => {
            let mut state = initial_state(config, &cover, beta)?;
            let mut sampler = make_sampler(config, &cover);
            let r = run(
                &mut state,
                &cover,
                &built.objectives,
                sampler.as_mut(),
                config.iterations,
                &options,
            )?;
            (r, Some(state))
        }
        Mode::Drs => (
            drs_mode_records(config, &cover, &built, beta, &options)?,
            None,
        ),
        Mode::EquivalenceCheck => {
            let (r, dev, state) = equivalence_mode(config, &cover, &built, beta, &options)?;
            equivalence_max_dev = Some(dev);
            (r, Some(state))
        }
    };

    let run_csv = config.output_dir.join("run.csv");
    write_run_csv(&run_csv, &records)?;

    let summary = config.output_dir.join("summary.txt");
    let mut text = String::new();
    text.push_str("# resolved configuration\n");
    text.push_str(&config.render());
    text.push_str("\n# derived quantities\n");
    text.push_str(&format!("beta = {beta}\n"));
    text.push_str(&format!(
        "smoothness_l = {} ({})\n",
        built.lipschitz,
        if built.smoothness_exact { "exact" } else { "sampled estimate" }
    ));
    text.push_str(&format!("smoothness_ell = {}\n", built.weak_convexity));
    text.push_str(&format!(
        "condition_value = {} (feasible = {})\n",
        condition.value, condition.feasible
    ));
    if let Some(f) = condition.minimal_fraction {
        text.push_str(&format!("condition_minimal_fraction = {f}\n"));
    }
    if let Some(b) = condition.minimal_beta {
        text.push_str(&format!("condition_minimal_beta = {b}\n"));
    }
    if let Some(dev) = equivalence_max_dev {
        text.push_str(&format!("equivalence_max_deviation = {dev:e}\n"));
    }
    if let Some(last) = records.last() {
        text.push_str("\n# final record\n");
        text.push_str(&format!("iter = {}\n", last.iter));
        text.push_str(&format!("merit = {}\n", last.merit));
        text.push_str(&format!("grad_norm = {}\n", last.grad_norm));
        text.push_str(&format!("disagreement = {}\n", last.disagreement));
        text.push_str(&format!("prox_residual = {}\n", last.prox_residual));
    }
    std::fs::write(&summary, text)?;

    Ok(RunArtifacts {
        records,
        run_csv,
        summary,
        beta,
        condition,
        equivalence_max_dev,
        final_state,
    })
}

/// The determinism digest of a run: the CSV bytes with the wall-time column
/// blanked, hashed with a small FNV-1a. Identical across worker counts.
pub fn determinism_digest(path: &Path) -> Result<u64> {
    let text = std::fs::read_to_string(path)?;
    let mut hash: u64 = 0xcbf29ce484222325;
    for line in text.lines() {
        let stable = match line.rsplit_once(',') {
            Some((prefix, _wall)) => prefix,
            None => line,
        };
        for b in stable.bytes().chain(std::iter::once(b'\n')) {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    Ok(hash)
}
