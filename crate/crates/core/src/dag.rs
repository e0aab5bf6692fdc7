//! Directed acyclic graphs over `(E, X_1..X_d, Y)`.
//!
//! Node index `0` is the environment `E`, indices `1..=d` are the predictors
//! and `d + 1` is the response `Y`. Graphs are validated on construction and
//! immutable afterwards.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::varset::{NodeSet, VarSet};

/// Index of a node in a [`Dag`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ENV: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

/// What a node stands for. Also used as a symbolic label when building graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Env,
    Predictor(usize),
    Response,
}

impl Role {
    pub fn node(self, d: usize) -> Result<NodeId> {
        match self {
            Role::Env => Ok(NodeId(0)),
            Role::Response => Ok(NodeId(d + 1)),
            Role::Predictor(k) if (1..=d).contains(&k) => Ok(NodeId(k)),
            Role::Predictor(k) => arg(format!("predictor X{k} outside 1..={d}")),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Env => f.write_str("E"),
            Role::Predictor(k) => write!(f, "X{k}"),
            Role::Response => f.write_str("Y"),
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "E" => Ok(Role::Env),
            "Y" => Ok(Role::Response),
            _ => s
                .strip_prefix('X')
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(Role::Predictor)
                .ok_or_else(|| format!("unknown node name `{s}`")),
        }
    }
}

/// Whether the environment may have parents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvMode {
    /// `E` is a root node.
    #[default]
    Exogenous,
    /// `E` may have parents but must be an ancestor of `Y`.
    #[serde(alias = "non-exogenous")]
    Nonexogenous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Parents,
    Children,
    Ancestors,
    Descendants,
}

/// Fraction of possible edges above which a bit-matrix is kept for O(1) edge lookups.
pub const DENSE_THRESHOLD: f64 = 0.25;

#[derive(Clone)]
pub struct Dag {
    d: usize,
    mode: EnvMode,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    // child rows, present only for dense graphs
    dense: Option<Vec<NodeSet>>,
    topo: Vec<usize>,
    edge_count: usize,
}

impl Dag {
    /// Builds a graph from index pairs `(parent, child)`; duplicates are merged.
    pub fn new(d: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>, mode: EnvMode) -> Result<Dag> {
        let n = d + 2;
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (p, c) in edges {
            if p.0 >= n || c.0 >= n {
                return arg(format!("edge {}->{} references a node outside 0..{n}", p.0, c.0));
            }
            if p == c {
                return Err(Error::Cycle(name(d, p.0)));
            }
            children[p.0].push(c.0);
            parents[c.0].push(p.0);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        let edge_count = children.iter().map(Vec::len).sum();
        let topo = topological_order(&parents, &children).map_err(|v| Error::Cycle(name(d, v)))?;

        let dense = (edge_count as f64 / (n * n) as f64 >= DENSE_THRESHOLD).then(|| {
            children
                .iter()
                .map(|cs| cs.iter().copied().collect::<NodeSet>())
                .collect()
        });

        let dag = Dag {
            d,
            mode,
            parents,
            children,
            dense,
            topo,
            edge_count,
        };
        match mode {
            EnvMode::Exogenous if !dag.parents[0].is_empty() => {
                arg("exogenous mode requires the environment to have no parents")
            }
            EnvMode::Nonexogenous if !dag.ancestors_of(dag.response().0).contains(0) => {
                arg("non-exogenous mode requires the environment to be an ancestor of Y")
            }
            _ => Ok(dag),
        }
    }

    /// Builds a graph from symbolic edges such as `(Role::Env, Role::Predictor(1))`.
    pub fn from_roles(d: usize, edges: &[(Role, Role)], mode: EnvMode) -> Result<Dag> {
        let resolved = edges
            .iter()
            .map(|&(p, c)| Ok((p.node(d)?, c.node(d)?)))
            .collect::<Result<Vec<_>>>()?;
        Dag::new(d, resolved, mode)
    }

    /// Number of predictors.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn node_count(&self) -> usize {
        self.d + 2
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn mode(&self) -> EnvMode {
        self.mode
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn env(&self) -> NodeId {
        NodeId(0)
    }

    pub fn response(&self) -> NodeId {
        NodeId(self.d + 1)
    }

    pub fn predictor(&self, k: usize) -> NodeId {
        assert!((1..=self.d).contains(&k), "predictor X{k} outside 1..={}", self.d);
        NodeId(k)
    }

    pub fn role(&self, node: NodeId) -> Role {
        match node.0 {
            0 => Role::Env,
            i if i == self.d + 1 => Role::Response,
            k => Role::Predictor(k),
        }
    }

    pub fn node_name(&self, node: NodeId) -> String {
        name(self.d, node.0)
    }

    /// A topological order of all nodes, computed once at construction.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        match &self.dense {
            Some(rows) => rows[from].contains(to),
            None => self.children[from].binary_search(&to).is_ok(),
        }
    }

    /// All `(parent, child)` pairs, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.node_count()
    }

    /// Parents, children, ancestors or descendants of `node`, never including `node` itself.
    pub fn relatives(&self, node: NodeId, kind: Relation) -> Result<NodeSet> {
        if !self.contains(node) {
            return arg(format!("node {} is not in a graph with d = {}", node.0, self.d));
        }
        Ok(match kind {
            Relation::Parents => self.parents[node.0].iter().copied().collect(),
            Relation::Children => self.children[node.0].iter().copied().collect(),
            Relation::Ancestors => self.ancestors_of(node.0),
            Relation::Descendants => self.descendants_of(node.0),
        })
    }

    pub fn ancestors_of(&self, v: usize) -> NodeSet {
        let mut out = self.reach(std::iter::once(v), &self.parents);
        out.remove(v);
        out
    }

    pub fn descendants_of(&self, v: usize) -> NodeSet {
        let mut out = self.reach(std::iter::once(v), &self.children);
        out.remove(v);
        out
    }

    /// `set` together with all of its ancestors.
    pub fn ancestral_closure(&self, set: &NodeSet) -> NodeSet {
        self.reach(set.iter(), &self.parents)
    }

    /// Union of parents of every node in `set`.
    pub fn parents_of_set(&self, set: &NodeSet) -> NodeSet {
        set.iter().flat_map(|v| self.parents[v].iter().copied()).collect()
    }

    fn reach(&self, start: impl Iterator<Item = usize>, step: &[Vec<usize>]) -> NodeSet {
        let mut seen = NodeSet::with_capacity(self.node_count());
        let mut queue: Vec<usize> = Vec::new();
        for s in start {
            if seen.insert(s) {
                queue.push(s);
            }
        }
        while let Some(v) = queue.pop() {
            for &w in &step[v] {
                if seen.insert(w) {
                    queue.push(w);
                }
            }
        }
        seen
    }

    /// `AN_Y ∩ [d]`.
    pub fn response_ancestors(&self) -> VarSet {
        self.ancestors_of(self.d + 1).predictors(self.d)
    }

    /// Errors unless every member of `s` is a predictor of this graph.
    pub fn check_varset(&self, s: &VarSet) -> Result<()> {
        match s.last() {
            Some(m) if m > self.d => arg(format!("set {s} contains index {m} > d = {}", self.d)),
            _ => Ok(()),
        }
    }

    /// Stable 64-bit hash of `(d, mode, edges)`, one SplitMix64 round per edge.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::rng::splitmix64(((self.d as u64) << 8) | self.mode as u64);
        for (p, c) in self.edges() {
            h = crate::rng::splitmix64(h ^ ((p as u64) << 32 | c as u64));
        }
        h
    }

    /// Edge-list text: a `# d=<d>` header, then one `parent child` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# d={}\n", self.d);
        for (p, c) in self.edges() {
            out.push_str(&format!("{} {}\n", name(self.d, p), name(self.d, c)));
        }
        out
    }

    /// Parses the edge-list format. Without a `# d=` header, `d` is the largest `X<k>` seen.
    pub fn parse_edge_list(text: &str, mode: EnvMode) -> Result<Dag> {
        let mut declared_d = None;
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("d=") {
                    let d = v.trim().parse::<usize>().map_err(|e| Error::Parse {
                        line: i + 1,
                        msg: e.to_string(),
                    })?;
                    declared_d = Some(d);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected `parent child`, got `{line}`"),
                });
            }
            let parse = |s: &str| s.parse::<Role>().map_err(|msg| Error::Parse { line: i + 1, msg });
            pairs.push((parse(fields[0])?, parse(fields[1])?));
        }
        let inferred = pairs
            .iter()
            .flat_map(|(a, b)| [a, b])
            .filter_map(|r| match r {
                Role::Predictor(k) => Some(*k),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let d = declared_d.unwrap_or(inferred);
        if inferred > d {
            return arg(format!("edge list mentions X{inferred} but declares d = {d}"));
        }
        Dag::from_roles(d, &pairs, mode)
    }

    /// Reads a 0/1 adjacency matrix in CSV form. The header names the columns
    /// (`E`, `X<k>`, `Y` in any order, optionally preceded by an empty corner
    /// cell); row `i` lists the edges out of the `i`-th named node, optionally
    /// prefixed by that node's name.
    pub fn parse_adjacency_csv(text: &str, mode: EnvMode) -> Result<Dag> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty adjacency matrix".into(),
        })?;
        let mut cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let labelled = cols.first() == Some(&"");
        if labelled {
            cols.remove(0);
        }
        let names = cols
            .iter()
            .map(|s| s.parse::<Role>().map_err(|msg| Error::Parse { line: 1, msg }))
            .collect::<Result<Vec<_>>>()?;
        let d = names.len().saturating_sub(2);
        let mut edges = Vec::new();
        let mut row_count = 0;
        for (i, line) in lines {
            let mut fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let from = if labelled || fields.len() == names.len() + 1 {
                let label = fields.remove(0);
                label.parse::<Role>().map_err(|msg| Error::Parse { line: i + 1, msg })?
            } else {
                *names.get(row_count).ok_or(Error::Parse {
                    line: i + 1,
                    msg: "more rows than columns".into(),
                })?
            };
            if fields.len() != names.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {} entries, got {}", names.len(), fields.len()),
                });
            }
            for (to, cell) in names.iter().zip(&fields) {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("non-numeric entry `{cell}`"),
                })?;
                if v != 0.0 {
                    edges.push((from, *to));
                }
            }
            row_count += 1;
        }
        Dag::from_roles(d, &edges, mode)
    }
}

impl fmt::Debug for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dag(d={}, mode={:?}, edges=[", self.d, self.mode)?;
        for (i, (p, c)) in self.edges().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}->{}", name(self.d, p), name(self.d, c))?;
        }
        f.write_str("])")
    }
}

impl PartialEq for Dag {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.mode == other.mode && self.children == other.children
    }
}

impl Eq for Dag {}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    d: usize,
    #[serde(default)]
    mode: EnvMode,
    edges: Vec<(String, String)>,
}

impl Serialize for Dag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DagRepr {
            d: self.d,
            mode: self.mode,
            edges: self
                .edges()
                .map(|(p, c)| (name(self.d, p), name(self.d, c)))
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Dag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = DagRepr::deserialize(deserializer)?;
        let edges = repr
            .edges
            .iter()
            .map(|(p, c)| Ok((p.parse::<Role>()?, c.parse::<Role>()?)))
            .collect::<Result<Vec<_>, String>>()
            .map_err(D::Error::custom)?;
        Dag::from_roles(repr.d, &edges, repr.mode).map_err(D::Error::custom)
    }
}

pub(crate) fn name(d: usize, v: usize) -> String {
    match v {
        0 => "E".to_string(),
        i if i == d + 1 => "Y".to_string(),
        k => format!("X{k}"),
    }
}

/// Kahn's algorithm; on failure returns a node lying on a cycle.
fn topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Result<Vec<usize>, usize> {
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut queue: VecDeque<usize> = (0..parents.len()).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(parents.len());
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if order.len() == parents.len() {
        Ok(order)
    } else {
        Err((0..parents.len()).find(|&v| indegree[v] > 0).unwrap_or(0))
    }
}
