//! The three-state, two-action benchmark used by the experiments.
//!
//! State 0 pays a small reward for staying put; reaching state 2 pays more
//! but takes a detour through state 1. Tables are the same at every step.

use alloc::vec::Vec;

use crate::mdp::{make_tabular_mixture, LinearMixtureMdp};

pub const BENCHMARK_STATES: usize = 3;
pub const BENCHMARK_ACTIONS: usize = 2;
pub const BENCHMARK_HORIZON: usize = 5;

/// `[s][a][s']`
pub const BENCHMARK_TRANSITIONS: [[[f64; 3]; 2]; 3] = [
    [[1.0, 0.0, 0.0], [0.4, 0.6, 0.0]],
    [[0.7, 0.3, 0.0], [0.1, 0.3, 0.6]],
    [[0.0, 0.5, 0.5], [0.0, 0.2, 0.8]],
];

/// `[s][a]`
pub const BENCHMARK_REWARDS: [[f64; 2]; 3] = [[0.2, 0.0], [0.1, 0.0], [0.5, 0.9]];

/// Flattened `([h][s][a][s'], [h][s][a])` tables.
pub fn benchmark_tables() -> (Vec<f64>, Vec<f64>) {
    let mut p = Vec::new();
    let mut r = Vec::new();
    for _ in 0..BENCHMARK_HORIZON {
        for s in 0..BENCHMARK_STATES {
            for a in 0..BENCHMARK_ACTIONS {
                p.extend_from_slice(&BENCHMARK_TRANSITIONS[s][a]);
                r.push(BENCHMARK_REWARDS[s][a]);
            }
        }
    }
    (p, r)
}

/// Tabular linear mixture form (`d1 = 18`, `d2 = 6`), starting in state 0.
pub fn three_state_benchmark() -> LinearMixtureMdp {
    let (p, r) = benchmark_tables();
    make_tabular_mixture(
        BENCHMARK_STATES,
        BENCHMARK_ACTIONS,
        BENCHMARK_HORIZON,
        &p,
        &r,
        0,
    )
    .expect("benchmark tables are valid")
}
