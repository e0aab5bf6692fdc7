//! Random DAGs with an environment node, and the search for graphs with many
//! minimally invariant sets.
//!
//! A graph over `(X, Y)` is drawn by shuffling the `d + 1` nodes into a
//! causal order and adding each forward pair as an edge with probability `p`.
//! `Y` is a uniformly chosen non-root node (or the last node in the order).
//! `E` then receives `N` children among the predictors. Draws where `Y` is not
//! a descendant of `E` are rejected and repeated.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dag::{Dag, EnvMode, NodeId};
use crate::error::{arg, Error, Result};
use crate::oracle::count_minimally_invariant;
use crate::rng::RngState;

/// Attempts before the rejection sampler gives up.
pub const MAX_ATTEMPTS: usize = 100_000;

/// Edge probability between forward pairs of `(X, Y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    /// `p = 2 / d`, about `d + 1` edges.
    Sparse,
    /// `p = 0.75`.
    Dense,
    Explicit(f64),
    /// `p ~ U(lo, hi)`, drawn per graph.
    Uniform { lo: f64, hi: f64 },
}

impl Density {
    fn draw(&self, d: usize, rng: &mut RngState) -> f64 {
        match *self {
            Density::Sparse => (2.0 / d.max(1) as f64).min(1.0),
            Density::Dense => 0.75,
            Density::Explicit(p) => p,
            Density::Uniform { lo, hi } if lo < hi => rng.random_range(lo..hi),
            Density::Uniform { lo, .. } => lo,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        match *self {
            Density::Explicit(p) if !ok(p) => arg(format!("edge probability {p} outside [0, 1]")),
            Density::Uniform { lo, hi } if !(ok(lo) && ok(hi) && lo <= hi) => {
                arg(format!("edge probability range [{lo}, {hi}] invalid"))
            }
            _ => Ok(()),
        }
    }
}

/// Number of children of `E`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionCount {
    Fixed(usize),
    /// Uniform on `lo..=hi`.
    Uniform { lo: usize, hi: usize },
}

impl InterventionCount {
    fn draw(&self, rng: &mut RngState) -> usize {
        match *self {
            InterventionCount::Fixed(k) => k,
            InterventionCount::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    fn bounds(&self) -> (usize, usize) {
        match *self {
            InterventionCount::Fixed(k) => (k, k),
            InterventionCount::Uniform { lo, hi } => (lo, hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSamplerConfig {
    pub d: usize,
    pub density: Density,
    pub n_interventions: InterventionCount,
    /// Seed for [`GraphSamplerConfig::rng`]; sampling functions take the generator explicitly.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: EnvMode,
    /// Put `Y` last in the causal order instead of choosing a random non-root node.
    #[serde(default)]
    pub response_last: bool,
}

impl GraphSamplerConfig {
    pub fn new(d: usize, density: Density, n_interventions: usize) -> Self {
        GraphSamplerConfig {
            d,
            density,
            n_interventions: InterventionCount::Fixed(n_interventions),
            seed: 0,
            mode: EnvMode::Exogenous,
            response_last: false,
        }
    }

    pub fn rng(&self) -> RngState {
        crate::rng::Seed(self.seed).rng()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return arg("need at least one predictor");
        }
        self.density.validate()?;
        let (lo, hi) = self.n_interventions.bounds();
        if lo < 1 || hi > self.d || lo > hi {
            return arg(format!("intervention count range {lo}..={hi} not within 1..={}", self.d));
        }
        Ok(())
    }
}

/// A random DAG on `nodes` vertices: shuffled order, each forward pair an edge with probability `p`.
/// Returns the order and the edges as `(from, to)` pairs of vertex labels.
pub fn sample_order_graph(nodes: usize, p: f64, rng: &mut RngState) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in i + 1..nodes {
            if rng.random_bool(p) {
                edges.push((order[i], order[j]));
            }
        }
    }
    (order, edges)
}

/// Draws a DAG satisfying the config, retrying until `Y` descends from `E`.
pub fn sample_dag(config: &GraphSamplerConfig, rng: &mut RngState) -> Result<Dag> {
    config.validate()?;
    for _ in 0..MAX_ATTEMPTS {
        if let Some(dag) = attempt(config, rng)? {
            return Ok(dag);
        }
    }
    Err(Error::Sampling(MAX_ATTEMPTS))
}

fn attempt(config: &GraphSamplerConfig, rng: &mut RngState) -> Result<Option<Dag>> {
    let d = config.d;
    let p = config.density.draw(d, rng);
    let (order, raw) = sample_order_graph(d + 1, p, rng);
    let mut has_parent = vec![false; d + 1];
    for &(_, c) in &raw {
        has_parent[c] = true;
    }
    let y_raw = if config.response_last {
        order[d]
    } else {
        let candidates: Vec<usize> = (0..=d).filter(|&v| has_parent[v]).collect();
        if candidates.is_empty() {
            return Ok(None);
        }
        candidates[rng.random_range(0..candidates.len())]
    };
    // remaining vertices become X_1..X_d by label
    let mut node_of = vec![0usize; d + 1];
    let mut next = 1;
    for (v, slot) in node_of.iter_mut().enumerate() {
        if v == y_raw {
            *slot = d + 1;
        } else {
            *slot = next;
            next += 1;
        }
    }
    let mut edges: Vec<(NodeId, NodeId)> = raw.iter().map(|&(a, b)| (NodeId(node_of[a]), NodeId(node_of[b]))).collect();

    let k = config.n_interventions.draw(rng);
    match config.mode {
        EnvMode::Exogenous => {
            for i in index::sample(rng, d, k) {
                edges.push((NodeId(0), NodeId(i + 1)));
            }
        }
        EnvMode::Nonexogenous => {
            // E sits at a random slot of the order; parents come from before, children from after
            let slot = rng.random_range(0..=d + 1);
            let before: Vec<usize> = order[..slot.min(d + 1)].iter().map(|&v| node_of[v]).filter(|&v| v <= d).collect();
            let after: Vec<usize> = order[slot.min(d + 1)..].iter().map(|&v| node_of[v]).filter(|&v| v <= d).collect();
            let parents: Vec<usize> = before.iter().copied().filter(|_| rng.random_bool(p)).collect();
            if parents.is_empty() || after.len() < k {
                return Ok(None);
            }
            for &v in &parents {
                edges.push((NodeId(v), NodeId(0)));
            }
            for i in index::sample(rng, after.len(), k) {
                edges.push((NodeId(0), NodeId(after[i])));
            }
        }
    }
    let dag = Dag::new(d, edges, config.mode);
    match dag {
        Ok(dag) if dag.descendants_of(0).contains(d + 1) => Ok(Some(dag)),
        // non-exogenous mode rejects graphs with E outside AN_Y
        Ok(_) | Err(Error::Argument(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Largest number of minimally invariant sets over `batches` sampled graphs.
///
/// With `patience = Some(k)`, stops once `k` consecutive draws fail to raise the maximum.
pub fn simulate_max_mi_count(
    config: &GraphSamplerConfig,
    batches: usize,
    patience: Option<usize>,
    rng: &mut RngState,
) -> Result<usize> {
    if batches == 0 {
        return arg("need at least one batch");
    }
    let mut best = 0;
    let mut stale = 0;
    for _ in 0..batches {
        let dag = sample_dag(config, rng)?;
        let count = count_minimally_invariant(&dag, None)?;
        if count > best {
            best = count;
            stale = 0;
        } else {
            stale += 1;
            if patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }
    Ok(best)
}
