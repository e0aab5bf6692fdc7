#![allow(dead_code)]

use ias_core::random_graphs::{sample_dag, Density, GraphSamplerConfig, InterventionCount};
use ias_core::{Dag, EnvMode, RngState, VarSet};
use rand::Rng;

/// A graph with `d` in `lo..=hi`, random density and intervention count.
pub fn random_dag(rng: &mut RngState, lo: usize, hi: usize, mode: EnvMode) -> Dag {
    let d = rng.random_range(lo..=hi);
    let config = GraphSamplerConfig {
        d,
        density: Density::Uniform { lo: 0.1, hi: 0.9 },
        n_interventions: InterventionCount::Uniform { lo: 1, hi: d },
        seed: 0,
        mode,
        response_last: false,
    };
    sample_dag(&config, rng).expect("sampler succeeds on non-degenerate configs")
}

/// Each predictor observed with probability 0.7.
pub fn random_mask(rng: &mut RngState, d: usize) -> VarSet {
    (1..=d).filter(|_| rng.random_bool(0.7)).collect()
}
