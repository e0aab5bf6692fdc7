//! Population-level search with the graph as invariance oracle.
//!
//! A set `S` of predictors is invariant when it d-separates `E` and `Y`.
//! This module computes ICP's intersection of invariant sets (closed form and
//! brute force), lists minimally invariant sets, and takes their union.

use serde::{Deserialize, Serialize};

use crate::dag::{Dag, EnvMode};
use crate::dsep::DSeparation;
use crate::error::{Error, Result};
use crate::separators::MinimalSeparators;
use crate::varset::{count_subsets_up_to, Combinations, NodeSet, VarSet};

/// Default number of invariance queries an enumeration may spend.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Largest `d` for which `2^d` subsets are enumerated.
pub const BRUTE_FORCE_MAX_D: usize = 20;

/// Largest Markov boundary searched exhaustively.
pub const MARKOV_BOUNDARY_MAX: usize = 25;

// subset scans above this many sets go to the separator backend
const AUTO_SUBSET_LIMIT: f64 = 1e6;

pub fn oracle_invariant(dag: &Dag, s: &VarSet) -> Result<bool> {
    dag.check_varset(s)?;
    Ok(DSeparation::new(dag).invariant(s))
}

/// Invariant, and no longer invariant once any single member is dropped.
pub fn oracle_minimally_invariant(dag: &Dag, s: &VarSet) -> Result<bool> {
    dag.check_varset(s)?;
    let mut ds = DSeparation::new(dag);
    Ok(ds.invariant(s) && s.iter().all(|j| !ds.invariant(&s.without(j))))
}

fn env_is_parent_of_response(dag: &Dag) -> bool {
    dag.has_edge(0, dag.d() + 1)
}

/// `S_ICP`, the intersection of all invariant sets.
///
/// Exogenous graphs use `PA_Y ∩ (CH_E ∪ PA(AN_Y ∩ CH_E))`; otherwise the
/// intersection is taken by brute force.
pub fn oracle_s_icp(dag: &Dag) -> Result<VarSet> {
    if env_is_parent_of_response(dag) {
        // nothing separates adjacent nodes
        return Ok(VarSet::new());
    }
    if dag.mode() == EnvMode::Nonexogenous {
        return oracle_s_icp_bruteforce(dag);
    }
    let y = dag.d() + 1;
    let pa_y: NodeSet = dag.parents(y).iter().copied().collect();
    let ch_e: NodeSet = dag.children(0).iter().copied().collect();
    let an_y = dag.ancestors_of(y);
    let mut reach = ch_e.clone();
    reach.union_with(&dag.parents_of_set(&an_y.intersection(&ch_e)));
    Ok(pa_y.intersection(&reach).predictors(dag.d()))
}

/// `S_ICP` straight from its definition, over all `2^d` subsets.
pub fn oracle_s_icp_bruteforce(dag: &Dag) -> Result<VarSet> {
    let d = dag.d();
    if d > BRUTE_FORCE_MAX_D {
        return Err(Error::Resource(format!(
            "brute-force ICP enumerates 2^{d} sets; limit is d <= {BRUTE_FORCE_MAX_D}"
        )));
    }
    let mut ds = DSeparation::new(dag);
    let mut acc: Option<VarSet> = None;
    for mask in 0u32..(1u32 << d) {
        let s: VarSet = (1..=d).filter(|k| mask & (1 << (k - 1)) != 0).collect();
        if ds.invariant(&s) {
            acc = Some(match acc {
                Some(a) => a.intersection(&s),
                None => s,
            });
        }
    }
    Ok(acc.unwrap_or_default())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Subset scan for size-capped queries, separator listing otherwise.
    #[default]
    Auto,
    /// Ascending-size scan over subsets of `AN_Y`, skipping supersets of found sets.
    BruteForce,
    /// Minimal vertex separators in the moralized ancestral graph.
    Separators,
}

#[derive(Clone, Debug, Default)]
pub struct EnumerationOptions {
    pub max_size: Option<usize>,
    /// Invariance queries (or separator feasibility checks) allowed; `None` is unlimited.
    pub budget: Option<u64>,
    pub backend: Backend,
    /// Restrict to sets of observed predictors.
    pub observed: Option<VarSet>,
}

impl EnumerationOptions {
    pub fn new() -> Self {
        Self {
            budget: Some(DEFAULT_BUDGET),
            ..Self::default()
        }
    }

    pub fn max_size(mut self, m: Option<usize>) -> Self {
        self.max_size = m;
        self
    }

    pub fn budget(mut self, b: Option<u64>) -> Self {
        self.budget = b;
        self
    }

    pub fn backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn observed(mut self, observed: Option<VarSet>) -> Self {
        self.observed = observed;
        self
    }
}

struct BruteForceScan<'g> {
    ds: DSeparation<'g>,
    pool: VarSet,
    size: usize,
    max_size: usize,
    combos: Combinations,
    found: Vec<VarSet>,
    queries: u64,
    budget: Option<u64>,
    done: bool,
}

impl<'g> BruteForceScan<'g> {
    fn new(dag: &'g Dag, pool: VarSet, max_size: usize, budget: Option<u64>) -> Self {
        let max_size = max_size.min(pool.len());
        BruteForceScan {
            ds: DSeparation::new(dag),
            combos: Combinations::new(&pool, 0),
            pool,
            size: 0,
            max_size,
            found: Vec::new(),
            queries: 0,
            budget,
            done: false,
        }
    }
}

impl Iterator for BruteForceScan<'_> {
    type Item = Result<VarSet>;

    fn next(&mut self) -> Option<Result<VarSet>> {
        while !self.done {
            let Some(s) = self.combos.next() else {
                // ∅ invariant means it is the only minimal set
                if self.size >= self.max_size || self.found.first().is_some_and(VarSet::is_empty) {
                    self.done = true;
                    return None;
                }
                self.size += 1;
                self.combos = Combinations::new(&self.pool, self.size);
                continue;
            };
            if self.found.iter().any(|f| f.is_subset(&s)) {
                continue;
            }
            if let Some(b) = self.budget {
                if self.queries >= b {
                    self.done = true;
                    return Some(Err(Error::BudgetExceeded { budget: b, found: Vec::new() }));
                }
            }
            self.queries += 1;
            // every strict subset was scanned already, so an invariant set here is minimal
            if self.ds.invariant(&s) {
                self.found.push(s.clone());
                return Some(Ok(s));
            }
        }
        None
    }
}

fn choose_backend(opts: &EnumerationOptions, pool: &VarSet) -> Backend {
    match (opts.backend, opts.max_size) {
        (Backend::Auto, Some(m)) if count_subsets_up_to(pool.len(), m) <= AUTO_SUBSET_LIMIT => Backend::BruteForce,
        (Backend::Auto, _) => Backend::Separators,
        (b, _) => b,
    }
}

/// Lazy stream of minimally invariant sets.
///
/// The brute-force backend yields sets by size then lexicographically; the
/// separator backend yields them in search order. A budget overrun ends the
/// stream with [`Error::BudgetExceeded`] (its `found` list is left empty; the
/// stream's consumer holds the sets).
pub fn minimally_invariant_sets<'g>(
    dag: &'g Dag,
    opts: &EnumerationOptions,
) -> Box<dyn Iterator<Item = Result<VarSet>> + 'g> {
    if env_is_parent_of_response(dag) {
        return Box::new(std::iter::empty());
    }
    let mut pool = dag.response_ancestors();
    if let Some(obs) = &opts.observed {
        pool.intersect_with(obs);
    }
    match choose_backend(opts, &pool) {
        Backend::BruteForce => {
            let max = opts.max_size.unwrap_or(usize::MAX);
            Box::new(BruteForceScan::new(dag, pool, max, opts.budget))
        }
        _ => {
            let max = opts.max_size;
            Box::new(
                MinimalSeparators::new(dag, opts.observed.as_ref(), opts.budget)
                    .filter(move |r| match (r, max) {
                        (Ok(s), Some(m)) => s.len() <= m,
                        _ => true,
                    }),
            )
        }
    }
}

/// The minimally invariant sets of one graph, sorted by size then lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalInvariantFamily {
    pub sets: Vec<VarSet>,
    pub source_dag_fingerprint: u64,
}

impl MinimalInvariantFamily {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Union of all members; empty for an empty family.
    pub fn union(&self) -> VarSet {
        self.sets.iter().fold(VarSet::new(), |acc, s| acc.union(s))
    }

    /// Union of the members with at most `m` elements.
    pub fn union_up_to(&self, m: usize) -> VarSet {
        self.sets
            .iter()
            .filter(|s| s.len() <= m)
            .fold(VarSet::new(), |acc, s| acc.union(s))
    }

    /// Size of a smallest member.
    pub fn min_size(&self) -> Option<usize> {
        self.sets.iter().map(VarSet::len).min()
    }

    /// Size of a largest member.
    pub fn max_size(&self) -> Option<usize> {
        self.sets.iter().map(VarSet::len).max()
    }

    /// One JSON array of sorted indices per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.sets {
            out.push_str(&serde_json::to_string(s).expect("index arrays serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str, source_dag_fingerprint: u64) -> Result<Self> {
        let mut sets = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            sets.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?);
        }
        sets.sort();
        Ok(MinimalInvariantFamily {
            sets,
            source_dag_fingerprint,
        })
    }
}

/// Collects the stream into a sorted family. A budget overrun returns the
/// partial family inside [`Error::BudgetExceeded`].
pub fn enumerate_with(dag: &Dag, opts: &EnumerationOptions) -> Result<MinimalInvariantFamily> {
    let mut sets = Vec::new();
    for item in minimally_invariant_sets(dag, opts) {
        match item {
            Ok(s) => sets.push(s),
            Err(Error::BudgetExceeded { budget, .. }) => {
                sets.sort();
                return Err(Error::BudgetExceeded { budget, found: sets });
            }
            Err(e) => return Err(e),
        }
    }
    sets.sort();
    Ok(MinimalInvariantFamily {
        sets,
        source_dag_fingerprint: dag.fingerprint(),
    })
}

pub fn enumerate_minimally_invariant(
    dag: &Dag,
    max_size: Option<usize>,
    budget: Option<u64>,
) -> Result<MinimalInvariantFamily> {
    enumerate_with(dag, &EnumerationOptions::new().max_size(max_size).budget(budget))
}

/// `S_AS` (or `S_AS^m` when `max_size = Some(m)`): union of minimally invariant sets.
pub fn oracle_s_as(dag: &Dag, max_size: Option<usize>) -> Result<VarSet> {
    Ok(enumerate_with(dag, &EnumerationOptions::new().max_size(max_size))?.union())
}

/// `MB_Y = PA_Y ∪ CH_Y ∪ PA(CH_Y)`, predictors only.
pub fn oracle_markov_boundary(dag: &Dag) -> VarSet {
    let y = dag.d() + 1;
    let mut mb: NodeSet = dag.parents(y).iter().copied().collect();
    let ch: NodeSet = dag.children(y).iter().copied().collect();
    mb.union_with(&dag.parents_of_set(&ch));
    mb.union_with(&ch);
    mb.predictors(dag.d())
}

/// ICP restricted to subsets of the Markov boundary.
pub fn oracle_s_icp_mb(dag: &Dag) -> Result<VarSet> {
    let mb = oracle_markov_boundary(dag);
    if mb.len() > MARKOV_BOUNDARY_MAX {
        return Err(Error::Resource(format!(
            "Markov boundary has {} members; exhaustive search is capped at {MARKOV_BOUNDARY_MAX}",
            mb.len()
        )));
    }
    let mut ds = DSeparation::new(dag);
    let mut acc: Option<VarSet> = None;
    for k in 0..=mb.len() {
        for s in Combinations::new(&mb, k) {
            if ds.invariant(&s) {
                acc = Some(match acc {
                    Some(a) => a.intersection(&s),
                    None => s,
                });
            }
        }
    }
    Ok(acc.unwrap_or_default())
}

/// Number of minimally invariant sets, listed with the separator backend.
pub fn count_minimally_invariant(dag: &Dag, budget: Option<u64>) -> Result<usize> {
    let opts = EnumerationOptions::new().budget(budget).backend(Backend::Separators);
    let mut n = 0;
    for item in minimally_invariant_sets(dag, &opts) {
        item?;
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::Role::{self, *};
    use crate::fixtures::{chain, diamond_with_collider, two_routes_with_collider, parallel_paths};

    fn set(items: &[usize]) -> VarSet {
        items.iter().copied().collect()
    }

    #[test]
    fn invariance_on_diamond_with_collider() {
        let g = diamond_with_collider();
        assert!(oracle_invariant(&g, &set(&[1, 2])).unwrap());
        assert!(oracle_invariant(&g, &set(&[3])).unwrap());
        assert!(!oracle_invariant(&g, &set(&[])).unwrap());
        assert!(oracle_invariant(&g, &set(&[9])).is_err());
    }

    #[test]
    fn direct_edge_blocks_every_set() {
        let g = Dag::from_roles(
            2,
            &[(Env, Response), (Env, Predictor(1)), (Predictor(1), Response), (Predictor(2), Response)],
            EnvMode::Exogenous,
        )
        .unwrap();
        for s in crate::varset::subsets_up_to(&VarSet::full(2), 2) {
            assert!(!oracle_invariant(&g, &s).unwrap());
        }
        assert_eq!(oracle_s_icp(&g).unwrap(), VarSet::new());
        assert!(enumerate_minimally_invariant(&g, None, None).unwrap().is_empty());
    }

    #[test]
    fn minimal_invariance_diamond_with_collider() {
        let g = diamond_with_collider();
        assert!(oracle_minimally_invariant(&g, &set(&[3])).unwrap());
        assert!(oracle_minimally_invariant(&g, &set(&[1, 2])).unwrap());
        assert!(!oracle_minimally_invariant(&g, &set(&[1, 2, 3])).unwrap());
    }

    #[test]
    fn minimal_invariance_of_empty_set() {
        // Y not downstream of E: ∅ is invariant, hence minimally so
        let g = Dag::from_roles(1, &[(Env, Predictor(1)), (Response, Predictor(1))], EnvMode::Exogenous).unwrap();
        assert!(oracle_minimally_invariant(&g, &VarSet::new()).unwrap());
        assert!(!oracle_minimally_invariant(&chain(1), &VarSet::new()).unwrap());
    }

    #[test]
    fn minimal_invariance_on_two_node_chain() {
        let g = chain(2);
        assert!(oracle_minimally_invariant(&g, &set(&[2])).unwrap());
        assert!(oracle_minimally_invariant(&g, &set(&[1])).unwrap());
        assert!(!oracle_minimally_invariant(&g, &set(&[1, 2])).unwrap());
        assert!(!oracle_minimally_invariant(&g, &set(&[])).unwrap());
    }

    #[test]
    fn s_icp_closed_form_and_brute_force() {
        for (g, want) in [
            (diamond_with_collider(), set(&[])),
            (two_routes_with_collider(), set(&[1])),
            (chain(1), set(&[1])),
        ] {
            assert_eq!(oracle_s_icp(&g).unwrap(), want);
            assert_eq!(oracle_s_icp_bruteforce(&g).unwrap(), want);
        }
    }

    #[test]
    fn s_icp_bruteforce_guard() {
        assert!(matches!(oracle_s_icp_bruteforce(&chain(21)), Err(Error::Resource(_))));
    }

    #[test]
    fn families_agree_across_backends() {
        let graphs = [diamond_with_collider(), two_routes_with_collider(), chain(4), parallel_paths(2), parallel_paths(3)];
        for g in &graphs {
            for m in [None, Some(1), Some(2)] {
                let base = EnumerationOptions::new().max_size(m);
                let bf = enumerate_with(g, &base.clone().backend(Backend::BruteForce)).unwrap();
                let sep = enumerate_with(g, &base.backend(Backend::Separators)).unwrap();
                assert_eq!(bf, sep, "{g:?} m={m:?}");
            }
        }
    }

    #[test]
    fn enumeration_examples() {
        let fam = enumerate_minimally_invariant(&diamond_with_collider(), None, None).unwrap();
        assert_eq!(fam.sets, vec![set(&[3]), set(&[1, 2])]);
        assert!(enumerate_minimally_invariant(&chain(0), None, None).unwrap().is_empty());
        let fam = enumerate_minimally_invariant(&parallel_paths(2), None, None).unwrap();
        assert_eq!(fam.sets, vec![set(&[1, 3]), set(&[1, 4]), set(&[2, 3]), set(&[2, 4])]);
    }

    #[test]
    fn budget_returns_partial_family() {
        let opts = EnumerationOptions::new().budget(Some(5)).backend(Backend::BruteForce);
        match enumerate_with(&parallel_paths(3), &opts) {
            Err(Error::BudgetExceeded { budget: 5, found }) => {
                let mut sorted = found.clone();
                sorted.sort();
                assert_eq!(found, sorted);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn s_as_examples() {
        assert_eq!(oracle_s_as(&diamond_with_collider(), None).unwrap(), set(&[1, 2, 3]));
        assert_eq!(oracle_s_as(&two_routes_with_collider(), None).unwrap(), set(&[1, 2, 3]));
        assert_eq!(oracle_s_as(&chain(6), Some(1)).unwrap(), VarSet::full(6));
        assert_eq!(oracle_s_as(&chain(0), None).unwrap(), VarSet::new());
        assert_eq!(oracle_s_as(&diamond_with_collider(), Some(1)).unwrap(), set(&[3]));
    }

    #[test]
    fn markov_boundary_examples() {
        assert_eq!(oracle_markov_boundary(&diamond_with_collider()), set(&[2, 3, 4]));
        assert_eq!(oracle_markov_boundary(&two_routes_with_collider()), set(&[1, 2, 3, 4]));
        let g = Dag::from_roles(2, &[(Env, Predictor(2)), (Predictor(1), Response)], EnvMode::Exogenous).unwrap();
        assert_eq!(oracle_markov_boundary(&g), set(&[1]));
    }

    #[test]
    fn icp_on_markov_boundary() {
        let left = oracle_s_icp_mb(&diamond_with_collider()).unwrap();
        assert!(!left.is_empty());
        assert_eq!(left, set(&[3]));
        assert_eq!(oracle_s_icp_mb(&chain(2)).unwrap(), set(&[2]));
        assert_eq!(oracle_s_icp_mb(&chain(0)).unwrap(), VarSet::new());
    }

    #[test]
    fn family_json_lines() {
        let fam = enumerate_minimally_invariant(&diamond_with_collider(), None, None).unwrap();
        let text = fam.to_json_lines();
        assert_eq!(text, "[3]\n[1,2]\n");
        let back = MinimalInvariantFamily::from_json_lines(&text, fam.source_dag_fingerprint).unwrap();
        assert_eq!(back, fam);
    }

    #[test]
    fn nonexogenous_icp_falls_back_to_brute_force() {
        let edges: [(Role, Role); 4] = [
            (Predictor(1), Env),
            (Env, Predictor(2)),
            (Predictor(2), Response),
            (Predictor(1), Response),
        ];
        let g = Dag::from_roles(2, &edges, EnvMode::Nonexogenous).unwrap();
        // both back-door and front-door must be blocked
        assert_eq!(oracle_s_icp(&g).unwrap(), set(&[1, 2]));
        assert_eq!(oracle_s_as(&g, None).unwrap(), set(&[1, 2]));
    }
}
