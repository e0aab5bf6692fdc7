//! d-separation by Bayes-ball reachability, and moralized ancestral graphs.

use crate::dag::{Dag, NodeId};
use crate::error::{arg, Result};
use crate::varset::{NodeSet, VarSet};

/// Reusable scratch space for repeated d-separation queries on one graph.
///
/// Marks are epoch-stamped, so a query costs `O(|V| + |E|)` without clearing buffers.
pub struct DSeparation<'g> {
    dag: &'g Dag,
    epoch: u32,
    in_closure: Vec<u32>,
    seen_up: Vec<u32>,
    seen_down: Vec<u32>,
    stack: Vec<(usize, bool)>,
    work: Vec<usize>,
}

const UP: bool = true;
const DOWN: bool = false;

impl<'g> DSeparation<'g> {
    pub fn new(dag: &'g Dag) -> Self {
        let n = dag.node_count();
        DSeparation {
            dag,
            epoch: 0,
            in_closure: vec![0; n],
            seen_up: vec![0; n],
            seen_down: vec![0; n],
            stack: Vec::new(),
            work: Vec::new(),
        }
    }

    pub fn dag(&self) -> &'g Dag {
        self.dag
    }

    fn bump(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.in_closure.fill(0);
            self.seen_up.fill(0);
            self.seen_down.fill(0);
            self.epoch = 1;
        }
        self.epoch
    }

    /// Whether `a` and `b` are d-separated given the node set `z`.
    /// Assumes `a != b` and neither lies in `z`.
    pub fn separated(&mut self, a: usize, b: usize, z: &NodeSet) -> bool {
        let ep = self.bump();
        let dag = self.dag;

        // z and its ancestors: colliders in here are open
        self.work.clear();
        for v in z.iter() {
            if self.in_closure[v] != ep {
                self.in_closure[v] = ep;
                self.work.push(v);
            }
        }
        while let Some(v) = self.work.pop() {
            for &p in dag.parents(v) {
                if self.in_closure[p] != ep {
                    self.in_closure[p] = ep;
                    self.work.push(p);
                }
            }
        }

        self.stack.clear();
        // entering `a` as if from a child lets the ball leave in both directions
        self.stack.push((a, UP));
        while let Some((v, dir)) = self.stack.pop() {
            let seen = if dir == UP { &mut self.seen_up } else { &mut self.seen_down };
            if seen[v] == ep {
                continue;
            }
            seen[v] = ep;
            if v == b {
                return false;
            }
            let blocked = z.contains(v);
            if dir == UP {
                if !blocked {
                    self.stack.extend(dag.parents(v).iter().map(|&p| (p, UP)));
                    self.stack.extend(dag.children(v).iter().map(|&c| (c, DOWN)));
                }
            } else {
                if !blocked {
                    self.stack.extend(dag.children(v).iter().map(|&c| (c, DOWN)));
                }
                if self.in_closure[v] == ep {
                    self.stack.extend(dag.parents(v).iter().map(|&p| (p, UP)));
                }
            }
        }
        true
    }

    /// `Y ⊥ E | s` in the graph.
    pub fn invariant(&mut self, s: &VarSet) -> bool {
        let y = self.dag.response().0;
        self.separated(0, y, &s.to_nodes())
    }
}

/// Whether `a` and `b` are d-separated given the predictor set `s`.
pub fn d_separated(dag: &Dag, a: NodeId, b: NodeId, s: &VarSet) -> Result<bool> {
    dag.check_varset(s)?;
    if !dag.contains(a) || !dag.contains(b) {
        return arg("query node outside the graph");
    }
    if a == b {
        return arg("d-separation needs two distinct nodes");
    }
    if s.contains(a.0) || s.contains(b.0) {
        return arg(format!(
            "conditioning set {s} contains a query node ({} or {})",
            dag.node_name(a),
            dag.node_name(b)
        ));
    }
    Ok(DSeparation::new(dag).separated(a.0, b.0, &s.to_nodes()))
}

/// An undirected graph on a subset of a [`Dag`]'s nodes, keeping the original indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UndirectedGraph {
    nodes: NodeSet,
    adj: Vec<NodeSet>,
}

impl UndirectedGraph {
    pub fn empty(capacity: usize, nodes: NodeSet) -> Self {
        UndirectedGraph {
            nodes,
            adj: vec![NodeSet::new(); capacity],
        }
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        if u != v {
            self.adj[u].insert(v);
            self.adj[v].insert(u);
        }
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn neighbors(&self, v: usize) -> &NodeSet {
        &self.adj[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(v)
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|v| self.adj[v].len()).sum::<usize>() / 2
    }

    /// Sorted `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .flat_map(|u| self.adj[u].iter().filter(move |&v| v > u).map(move |v| (u, v)))
            .collect()
    }

    /// Neighbours of `set` outside `set`.
    pub fn boundary(&self, set: &NodeSet) -> NodeSet {
        let mut out = NodeSet::new();
        for v in set.iter() {
            out.union_with(&self.adj[v]);
        }
        out.difference_with(set);
        out
    }

    /// Connected component of `start` after deleting `removed`.
    pub fn component(&self, start: usize, removed: &NodeSet) -> NodeSet {
        self.component_of_set(&NodeSet::singleton(start), removed)
    }

    /// Everything reachable from `start` without passing through `removed`.
    pub fn component_of_set(&self, start: &NodeSet, removed: &NodeSet) -> NodeSet {
        let mut seen = start.difference(removed);
        let mut todo = seen.clone();
        while let Some(v) = todo.first() {
            todo.remove(v);
            let mut fresh = self.adj[v].difference(removed);
            fresh.difference_with(&seen);
            seen.union_with(&fresh);
            todo.union_with(&fresh);
        }
        seen
    }

    /// Whether every path from `a` to `b` passes through `removed`.
    pub fn separated(&self, a: usize, b: usize, removed: &NodeSet) -> bool {
        !self.component(a, removed).contains(b)
    }
}

/// Moral graph of the ancestral closure of `set`: co-parents married, directions dropped.
pub fn moral_graph_of(dag: &Dag, set: &NodeSet) -> UndirectedGraph {
    let nodes = dag.ancestral_closure(set);
    let mut g = UndirectedGraph::empty(dag.node_count(), nodes.clone());
    for v in nodes.iter() {
        let ps = dag.parents(v);
        for (i, &p) in ps.iter().enumerate() {
            g.add_edge(p, v);
            for &q in &ps[i + 1..] {
                g.add_edge(p, q);
            }
        }
    }
    g
}

/// Moral graph of `AN({a, b}) ∪ {a, b}`.
pub fn moral_ancestral_graph(dag: &Dag, a: NodeId, b: NodeId) -> Result<UndirectedGraph> {
    if a == b {
        return arg("moral ancestral graph needs two distinct nodes");
    }
    if !dag.contains(a) || !dag.contains(b) {
        return arg("query node outside the graph");
    }
    Ok(moral_graph_of(dag, &[a.0, b.0].into_iter().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{EnvMode, Role};
    use crate::fixtures::{chain, diamond_with_collider};

    fn inv(g: &Dag, s: &[usize]) -> bool {
        d_separated(g, g.env(), g.response(), &s.iter().copied().collect()).unwrap()
    }

    #[test]
    fn diamond_with_collider_separations() {
        let g = diamond_with_collider();
        assert!(inv(&g, &[3]));
        assert!(inv(&g, &[1, 2]));
        // X4 is a collider between X2 and Y; conditioning on it opens E→X2→X4←Y
        assert!(!inv(&g, &[3, 4]));
        assert!(!inv(&g, &[]));
    }

    #[test]
    fn chain_separation() {
        let g = chain(1);
        assert!(inv(&g, &[1]));
        assert!(!inv(&g, &[]));
    }

    #[test]
    fn precondition_violations_are_errors() {
        let g = chain(2);
        assert!(d_separated(&g, g.env(), g.env(), &VarSet::new()).is_err());
        assert!(d_separated(&g, g.predictor(1), g.response(), &VarSet::from([1])).is_err());
        assert!(d_separated(&g, g.env(), g.response(), &VarSet::from([7])).is_err());
    }

    #[test]
    fn moral_graph_of_chain_is_a_path() {
        let g = chain(1);
        let m = moral_ancestral_graph(&g, g.env(), g.response()).unwrap();
        assert_eq!(m.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn collider_is_excluded_from_ancestral_moral_graph() {
        use Role::*;
        let g = Dag::from_roles(1, &[(Env, Predictor(1)), (Response, Predictor(1))], EnvMode::Exogenous).unwrap();
        let m = moral_ancestral_graph(&g, g.env(), g.response()).unwrap();
        assert!(!m.nodes().contains(1));
        assert!(m.edges().is_empty());
        assert!(m.separated(0, 2, &NodeSet::new()));
    }

    #[test]
    fn diamond_with_collider_moral_graph_marries_parents_of_x3() {
        let g = diamond_with_collider();
        let m = moral_ancestral_graph(&g, g.env(), g.response()).unwrap();
        assert_eq!(m.nodes().to_vec(), vec![0, 1, 2, 3, 5]);
        assert!(m.has_edge(1, 2));
        assert_eq!(m.edges(), vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (3, 5)]);
    }

    #[test]
    fn scratch_survives_many_queries() {
        let g = diamond_with_collider();
        let mut ds = DSeparation::new(&g);
        for _ in 0..1000 {
            assert!(ds.invariant(&VarSet::from([3])));
            assert!(!ds.invariant(&VarSet::from([3, 4])));
        }
    }
}
