use criterion::{criterion_group, criterion_main, Criterion};
use slicelab::agents::Policy;
use slicelab::mdp::TransitionMeta;
use slicelab::pipeline::{run_episode, Simulator};
use slicelab::traffic::generate_trace;
use slicelab::UserTuple;
use slicelab_bench::bench_config;

fn episodes(c: &mut Criterion) {
    let cfg = bench_config();
    let sim = Simulator::from_config(&cfg).unwrap();
    let users = UserTuple::new(3, 2, 3).unwrap();
    c.bench_function("episode 480 periods, 8 UEs", |b| {
        b.iter(|| run_episode(&sim, &Policy::Random, users, 0.05, 7, TransitionMeta::default(), false).unwrap())
    });
    c.bench_function("episode 480 periods with KPI rows", |b| {
        b.iter(|| run_episode(&sim, &Policy::Random, users, 0.05, 7, TransitionMeta::default(), true).unwrap())
    });
}

fn traces(c: &mut Criterion) {
    let cfg = bench_config();
    let mut g = c.benchmark_group("trace 120 s");
    for p in cfg.traffic.profiles() {
        g.bench_function(p.slice.name(), |b| b.iter(|| generate_trace(&p, 120.0, 3).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, episodes, traces);
criterion_main!(benches);
