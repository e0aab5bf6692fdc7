mod common;

use common::{random_dag, random_mask};
use ias_core::audit::{audit_oracle, icp_over};
use ias_core::dsep::{d_separated, moral_graph_of};
use ias_core::stats::GraphOracleTest;
use ias_core::varset::subsets_up_to;
use ias_core::{
    enumerate_with, ias_search, oracle_invariant, oracle_s_as, oracle_s_icp, oracle_s_icp_bruteforce, Backend,
    Correction, DecisionConfig, EnumerationOptions, EnvMode, NodeId, Seed, VarSet,
};
use proptest::prelude::*;

/// Minimally invariant subsets of `pool`, by checking every subset.
fn brute_force_family(dag: &ias_core::Dag, pool: &VarSet) -> Vec<VarSet> {
    let invariant: Vec<VarSet> = subsets_up_to(pool, pool.len())
        .filter(|s| oracle_invariant(dag, s).unwrap())
        .collect();
    let mut out: Vec<VarSet> = invariant
        .iter()
        .filter(|s| !invariant.iter().any(|t| t.is_strict_subset(s)))
        .cloned()
        .collect();
    out.sort();
    out
}

#[test]
fn audit_is_clean_on_random_graphs() {
    let mut rng = Seed(11).rng();
    for mode in [EnvMode::Exogenous, EnvMode::Nonexogenous] {
        for i in 0..300 {
            let dag = random_dag(&mut rng, 3, 8, mode);
            let backend = if i % 2 == 0 { Backend::BruteForce } else { Backend::Separators };
            let v = audit_oracle(&dag, None, backend).unwrap();
            assert!(v.is_empty(), "{}\n{v:#?}", dag.to_edge_list());
        }
    }
}

#[test]
fn audit_is_clean_with_hidden_predictors() {
    let mut rng = Seed(12).rng();
    for _ in 0..300 {
        let dag = random_dag(&mut rng, 3, 8, EnvMode::Exogenous);
        let observed = random_mask(&mut rng, dag.d());
        let v = audit_oracle(&dag, Some(&observed), Backend::Separators).unwrap();
        assert!(v.is_empty(), "{}\nobserved {observed}\n{v:#?}", dag.to_edge_list());
    }
}

#[test]
fn backends_and_brute_force_agree() {
    let mut rng = Seed(13).rng();
    for i in 0..400 {
        let mode = if i % 2 == 0 { EnvMode::Exogenous } else { EnvMode::Nonexogenous };
        let dag = random_dag(&mut rng, 2, 8, mode);
        let observed = if i % 3 == 0 { Some(random_mask(&mut rng, dag.d())) } else { None };
        let pool = observed.clone().unwrap_or_else(|| VarSet::full(dag.d()));
        let expected = if dag.has_edge(0, dag.d() + 1) { Vec::new() } else { brute_force_family(&dag, &pool) };
        for backend in [Backend::BruteForce, Backend::Separators] {
            let opts = EnumerationOptions::new().backend(backend).observed(observed.clone());
            let fam = enumerate_with(&dag, &opts).unwrap();
            assert_eq!(fam.sets, expected, "{backend:?} on {}", dag.to_edge_list());
        }
    }
}

#[test]
fn closed_form_icp_matches_enumeration() {
    let mut rng = Seed(14).rng();
    for i in 0..1000 {
        let mode = if i % 2 == 0 { EnvMode::Exogenous } else { EnvMode::Nonexogenous };
        let dag = random_dag(&mut rng, 2, 9, mode);
        assert_eq!(
            oracle_s_icp(&dag).unwrap(),
            oracle_s_icp_bruteforce(&dag).unwrap(),
            "{}",
            dag.to_edge_list()
        );
    }
}

#[test]
fn hidden_icp_is_intersection_over_observed() {
    let mut rng = Seed(15).rng();
    for _ in 0..200 {
        let dag = random_dag(&mut rng, 2, 7, EnvMode::Exogenous);
        let observed = random_mask(&mut rng, dag.d());
        let expected = subsets_up_to(&observed, observed.len())
            .filter(|s| oracle_invariant(&dag, s).unwrap())
            .reduce(|a, b| a.intersection(&b))
            .unwrap_or_default();
        assert_eq!(icp_over(&dag, &observed).unwrap(), expected);
    }
}

#[test]
fn graph_oracle_search_recovers_s_as_m() {
    let mut rng = Seed(16).rng();
    for i in 0..300 {
        let mode = if i % 2 == 0 { EnvMode::Exogenous } else { EnvMode::Nonexogenous };
        let dag = random_dag(&mut rng, 2, 8, mode);
        let d = dag.d();
        for m in [1, 2.min(d), d] {
            let config = DecisionConfig {
                m: Some(m),
                correction: Correction::Explicit(1.0),
                ..DecisionConfig::default()
            };
            let report = ias_search(&GraphOracleTest::new(&dag), &config).unwrap();
            let expected = oracle_s_as(&dag, Some(m)).unwrap();
            assert_eq!(report.s_hat, expected, "m = {m} on {}", dag.to_edge_list());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn d_separation_matches_moralization(seed in any::<u64>(), a in 0usize..16, b in 0usize..16, mask in any::<u32>()) {
        let mut rng = Seed(seed).rng();
        let dag = random_dag(&mut rng, 2, 7, EnvMode::Exogenous);
        let n = dag.node_count();
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b);
        let s: VarSet = (1..=dag.d()).filter(|k| mask >> k & 1 == 1 && *k != a && *k != b).collect();
        let mut relevant = s.to_nodes();
        relevant.insert(a);
        relevant.insert(b);
        let moral = moral_graph_of(&dag, &dag.ancestral_closure(&relevant));
        let expected = moral.separated(a, b, &s.to_nodes());
        prop_assert_eq!(d_separated(&dag, NodeId(a), NodeId(b), &s).unwrap(), expected);
        prop_assert_eq!(d_separated(&dag, NodeId(b), NodeId(a), &s).unwrap(), expected);
    }

    #[test]
    fn s_as_m_grows_with_m(seed in any::<u64>()) {
        let mut rng = Seed(seed).rng();
        let dag = random_dag(&mut rng, 2, 7, EnvMode::Exogenous);
        let mut prev = VarSet::new();
        for m in 1..=dag.d() {
            let cur = oracle_s_as(&dag, Some(m)).unwrap();
            prop_assert!(prev.is_subset(&cur));
            prev = cur;
        }
        prop_assert_eq!(prev, oracle_s_as(&dag, None).unwrap());
    }
}

#[test]
fn chain_is_blocked_by_its_middle() {
    let g = ias_core::fixtures::chain(2);
    assert!(!d_separated(&g, NodeId(0), NodeId(3), &VarSet::new()).unwrap());
    assert!(d_separated(&g, NodeId(0), NodeId(3), &VarSet::from([1])).unwrap());
}
