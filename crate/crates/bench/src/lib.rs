//! Fixtures shared by the benchmarks.

use rand::Rng;
use slicelab::mdp::{all_allocations, all_user_tuples, MdpState, TransitionMeta};
use slicelab::{seed, Config, State, Transition};

/// Default configuration with a smaller trace library.
pub fn bench_config() -> Config {
    let mut cfg = Config::default();
    cfg.traffic.traces_per_slice = 2;
    cfg
}

/// `n` consistent transitions over random states and valid actions.
pub fn random_transitions(n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = seed::rng(seed);
    let tuples = all_user_tuples();
    let allocs = all_allocations();
    (0..n)
        .map(|i| {
            let s = State::new(tuples[rng.random_range(0..tuples.len())], allocs[rng.random_range(0..allocs.len())]);
            let valid: Vec<_> = s.valid_actions().iter().collect();
            let a = valid[rng.random_range(0..valid.len())];
            Transition {
                s,
                a,
                r: rng.random_range(0.0..1.0),
                sp: s.step(a),
                meta: TransitionMeta {
                    epoch: 1,
                    trial: (i / 480) as u32,
                    period: (i % 480) as u32,
                },
            }
        })
        .collect()
}
