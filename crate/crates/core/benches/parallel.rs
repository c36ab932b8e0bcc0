//! Parallel vs sequential core: the per-round prox fan-out is the only
//! parallel section, so the interesting comparison is one worker against the
//! machine default on the same instance sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graphsplit::admm::{admm_iteration, NetworkState};
use graphsplit::graph::SubgraphCover;
use graphsplit::problems::{generate_phase_retrieval, LocalObjective, ProxParams};
use graphsplit::splitting::prox_f_tilde;
use nalgebra::DVector;
use rand::Rng;

struct Instance {
    cover: SubgraphCover,
    objectives: Vec<Box<dyn LocalObjective>>,
}

fn phase_retrieval_instance(n: usize, d: usize, m_per_agent: usize) -> Instance {
    let (agents, _) = generate_phase_retrieval(17, n, d, m_per_agent, 0.01);
    Instance {
        cover: SubgraphCover::ring(n, 2 * d).unwrap(),
        objectives: agents
            .into_iter()
            .map(|a| Box::new(a) as Box<dyn LocalObjective>)
            .collect(),
    }
}

fn with_workers<T>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match workers {
        None => f(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .unwrap()
            .install(f),
    }
}

fn bench_prox_fanout(c: &mut Criterion) {
    let mut group = c.benchmark_group("prox_f_tilde");
    for &(n, d, m) in &[(15usize, 8usize, 30usize), (15, 32, 120)] {
        let inst = phase_retrieval_instance(n, d, m);
        let mut rng = graphsplit::rng::stream_rng(1, 0);
        let s = DVector::from_fn(inst.cover.p(), |_, _| rng.gen::<f64>() - 0.5);
        let params = ProxParams::default();
        for workers in [Some(1), None] {
            let label = workers.map_or("default".into(), |k| k.to_string());
            group.bench_with_input(
                BenchmarkId::new(format!("n{n}_d{d}_m{m}"), label),
                &workers,
                |b, &workers| {
                    b.iter(|| {
                        with_workers(workers, || {
                            prox_f_tilde(&inst.cover, &inst.objectives, &s, 0.05, None, &params)
                                .unwrap()
                        })
                    })
                },
            );
        }
    }
    group.finish();
}

fn bench_admm_round(c: &mut Criterion) {
    let mut group = c.benchmark_group("admm_round");
    let inst = phase_retrieval_instance(15, 32, 120);
    let params = ProxParams::default();
    let all: Vec<usize> = (0..inst.cover.m()).collect();
    for workers in [Some(1), None] {
        let label = workers.map_or("default".into(), |k| k.to_string());
        group.bench_with_input(BenchmarkId::new("full", label), &workers, |b, &workers| {
            b.iter_batched(
                || NetworkState::zeros(&inst.cover, 40.0),
                |mut state| {
                    with_workers(workers, || {
                        admm_iteration(&mut state, &inst.cover, &inst.objectives, &all, &params)
                            .unwrap()
                    })
                },
                criterion::BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, bench_prox_fanout, bench_admm_round);
criterion_main!(benches);
