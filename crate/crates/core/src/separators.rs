//! Listing minimal `(E, Y)`-separators with polynomial delay.
//!
//! Minimal d-separators of `E` and `Y` are exactly the minimal vertex
//! separators of `E` and `Y` in the moral graph of `AN({E, Y}) ∪ {E, Y}`.
//! In an undirected graph every minimal separator `S` is `N(C)` for the
//! component `C` of `E` in `G - S`. The enumeration branches on `C`:
//!
//! * a state `(A, X)` asks for every minimal separator whose `E`-component
//!   contains the connected set `A` and avoids `X`;
//! * the separator *closest* to `A` is `S* = N(D)`, where `D` is the component
//!   of `Y` after deleting `N(A)`; its `E`-component `C*` is contained in the
//!   `E`-component of every other answer, so the state is feasible iff `C*`
//!   avoids `X`;
//! * any other answer's component strictly contains `C*` and hence some
//!   `v_i ∈ S*`; branching on the first such `v_i` (earlier ones excluded)
//!   partitions the remaining answers.
//!
//! Every state that survives the feasibility check emits one new separator,
//! and each check is a few graph searches, so the delay between outputs is
//! polynomial. Nodes outside the allowed set (hidden variables, `Y`) cannot
//! separate and are absorbed into `A` before each check.

use crate::dag::Dag;
use crate::dsep::{moral_graph_of, UndirectedGraph};
use crate::error::{Error, Result};
use crate::varset::{NodeSet, VarSet};

/// Lazy stream of the minimal `(E, Y)`-separators of a graph.
pub struct MinimalSeparators {
    graph: UndirectedGraph,
    d: usize,
    target: usize,
    allowed: NodeSet,
    stack: Vec<(NodeSet, NodeSet)>,
    checks: u64,
    budget: Option<u64>,
    exhausted: bool,
}

impl MinimalSeparators {
    /// Separators may only use predictors in `observed` (all predictors when `None`).
    pub fn new(dag: &Dag, observed: Option<&VarSet>, budget: Option<u64>) -> Self {
        let d = dag.d();
        let target = d + 1;
        let graph = moral_graph_of(dag, &[0, target].into_iter().collect());
        let mut allowed = graph.nodes().difference(&[0, target].into_iter().collect());
        if let Some(obs) = observed {
            allowed.intersect_with(&obs.to_nodes());
        }
        let adjacent = graph.has_edge(0, target);
        MinimalSeparators {
            graph,
            d,
            target,
            allowed,
            stack: if adjacent {
                Vec::new()
            } else {
                vec![(NodeSet::singleton(0), NodeSet::new())]
            },
            checks: 0,
            budget,
            exhausted: false,
        }
    }

    /// Feasibility checks performed so far.
    pub fn checks(&self) -> u64 {
        self.checks
    }

    /// Closest separator to `seed`, with its `E`-side component, if the state admits any answer.
    fn closest(&self, seed: &NodeSet, excluded: &NodeSet) -> Option<(NodeSet, NodeSet)> {
        // nodes that cannot be in a separator but touch the E-side join it
        let mut side = seed.clone();
        let mut todo = seed.clone();
        while let Some(v) = todo.first() {
            todo.remove(v);
            let mut fresh = self.graph.neighbors(v).difference(&self.allowed);
            fresh.difference_with(&side);
            side.union_with(&fresh);
            todo.union_with(&fresh);
        }
        if side.contains(self.target) || !side.is_disjoint(excluded) {
            return None;
        }
        let boundary = self.graph.boundary(&side);
        let target_side = self.graph.component(self.target, &boundary);
        let separator = self.graph.boundary(&target_side);
        let e_side = self.graph.component(0, &separator);
        if !e_side.is_disjoint(excluded) {
            return None;
        }
        Some((separator, e_side))
    }
}

impl Iterator for MinimalSeparators {
    type Item = Result<VarSet>;

    fn next(&mut self) -> Option<Result<VarSet>> {
        if self.exhausted {
            return None;
        }
        while let Some((seed, excluded)) = self.stack.pop() {
            if let Some(b) = self.budget {
                if self.checks >= b {
                    self.exhausted = true;
                    return Some(Err(Error::BudgetExceeded { budget: b, found: Vec::new() }));
                }
            }
            self.checks += 1;
            let Some((separator, e_side)) = self.closest(&seed, &excluded) else {
                continue;
            };
            let branch: Vec<usize> = separator.iter().filter(|&v| !excluded.contains(v)).collect();
            // push in reverse so branch 0 is explored first
            for i in (0..branch.len()).rev() {
                let mut next_seed = e_side.clone();
                next_seed.insert(branch[i]);
                let mut next_excluded = excluded.clone();
                for &v in &branch[..i] {
                    next_excluded.insert(v);
                }
                self.stack.push((next_seed, next_excluded));
            }
            return Some(Ok(separator.predictors(self.d)));
        }
        self.exhausted = true;
        None
    }
}
