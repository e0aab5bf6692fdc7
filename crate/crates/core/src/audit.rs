//! Consistency checks between the oracle quantities of one graph.
//!
//! Used to re-validate experiment output and by the property suites. Every
//! check here is a theorem about invariant sets; a non-empty violation list
//! means a bug somewhere in the oracle code.

use crate::dag::Dag;
use crate::dsep::DSeparation;
use crate::error::{Error, Result};
use crate::oracle::{enumerate_with, oracle_s_icp, Backend, EnumerationOptions, BRUTE_FORCE_MAX_D};
use crate::varset::{subsets_up_to, VarSet};

/// Intersection of the invariant subsets of `pool`; empty when there are none.
pub fn icp_over(dag: &Dag, pool: &VarSet) -> Result<VarSet> {
    if pool.len() > BRUTE_FORCE_MAX_D {
        return Err(Error::Resource(format!("{} candidates is too many to enumerate", pool.len())));
    }
    let mut ds = DSeparation::new(dag);
    let mut acc: Option<VarSet> = None;
    for s in subsets_up_to(pool, pool.len()) {
        if ds.invariant(&s) {
            acc = Some(match acc {
                Some(a) => a.intersection(&s),
                None => s,
            });
        }
    }
    Ok(acc.unwrap_or_default())
}

/// Checks the inclusions between `S_ICP`, `S_AS`, `S_AS^m` and `AN_Y` for
/// every `m`, optionally with only the predictors in `observed` usable.
///
/// Returns a description of each violated statement.
pub fn audit_oracle(dag: &Dag, observed: Option<&VarSet>, backend: Backend) -> Result<Vec<String>> {
    let d = dag.d();
    let mut out = Vec::new();
    let opts = EnumerationOptions::new().backend(backend).observed(observed.cloned());
    let fam = enumerate_with(dag, &opts)?;
    let mut ds = DSeparation::new(dag);
    let an_y = dag.response_ancestors();
    let s_as = fam.union();
    let env_parent = dag.has_edge(0, d + 1);
    // with hidden predictors the invariance statements need an observed invariant set
    let has_mi = !fam.is_empty();
    let s_icp = match observed {
        None => oracle_s_icp(dag)?,
        Some(o) => icp_over(dag, o)?,
    };

    for (i, s) in fam.sets.iter().enumerate() {
        if !ds.invariant(s) || s.iter().any(|j| ds.invariant(&s.without(j))) {
            out.push(format!("family member {s} is not minimally invariant"));
        }
        if fam.sets[..i].iter().any(|t| t.is_subset(s)) {
            out.push(format!("family member {s} contains an earlier member"));
        }
    }
    if !s_as.is_subset(&an_y) {
        out.push(format!("S_AS = {s_as} not within AN_Y = {an_y}"));
    }
    if !env_parent && has_mi {
        if !ds.invariant(&s_as) {
            out.push(format!("S_AS = {s_as} is not invariant"));
        }
        if !s_icp.is_subset(&s_as) {
            out.push(format!("S_ICP = {s_icp} not within S_AS = {s_as}"));
        }
        if (s_icp == s_as) != ds.invariant(&s_icp) {
            out.push(format!("S_ICP = {s_icp} equals S_AS = {s_as} iff invariant fails"));
        }
    }

    let m_min = fam.min_size();
    let m_max = fam.max_size();
    for m in 1..=d {
        let capped = enumerate_with(dag, &opts.clone().max_size(Some(m)))?;
        let s_m = capped.union();
        if s_m != fam.union_up_to(m) {
            out.push(format!("m = {m}: capped enumeration gives {s_m}, filtered family gives {}", fam.union_up_to(m)));
        }
        if !s_m.is_subset(&an_y) {
            out.push(format!("m = {m}: S_AS^m = {s_m} not within AN_Y"));
        }
        if m_max.is_some_and(|mx| m >= mx) && s_m != s_as {
            out.push(format!("m = {m} >= m_max: S_AS^m = {s_m} differs from S_AS = {s_as}"));
        }
        if !env_parent && m_min.is_some_and(|mn| m >= mn) {
            if !ds.invariant(&s_m) {
                out.push(format!("m = {m} >= m_min: S_AS^m = {s_m} is not invariant"));
            }
            if !s_icp.is_subset(&s_m) {
                out.push(format!("m = {m} >= m_min: S_ICP = {s_icp} not within S_AS^m = {s_m}"));
            }
            if (s_icp == s_m) != ds.invariant(&s_icp) {
                out.push(format!("m = {m} >= m_min: S_ICP = S_AS^m iff S_ICP invariant fails"));
            }
        }
    }
    Ok(out)
}
