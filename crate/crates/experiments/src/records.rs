//! Tidy output rows, one per (cell, replication).

use ias_core::VarSet;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentKind;

/// `|A ∩ B| / |A ∪ B|`, with `J(∅, ∅) = 0`.
pub fn jaccard(a: &VarSet, b: &VarSet) -> f64 {
    let union = a.union(b).len();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).len() as f64 / union as f64
}

/// Space-separated indices, empty for the empty set.
pub fn format_set(s: &VarSet) -> String {
    s.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_set(text: &str) -> Result<VarSet, std::num::ParseIntError> {
    text.split_whitespace().map(str::parse).collect()
}

/// Columns identifying a row within a cell; never summarized.
pub const ID_COLUMNS: &[&str] = &["cell", "rep", "scm", "dataset", "seed"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleLowRecord {
    pub cell: usize,
    pub d: usize,
    pub density: String,
    pub n_interventions: usize,
    pub rep: usize,
    pub an_y_size: usize,
    pub s_icp_size: usize,
    pub s_as_size: usize,
    pub mi_count: usize,
    pub strict_superset: bool,
    pub budget_exceeded: bool,
    pub s_icp: String,
    pub s_as: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleHighRecord {
    pub cell: usize,
    pub d: usize,
    pub n_interventions: usize,
    pub m: usize,
    pub rep: usize,
    pub mb_size: usize,
    pub an_y_size: usize,
    pub s_as_m_size: usize,
    pub s_icp_mb_size: usize,
    pub as_larger: bool,
    pub budget_exceeded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteRecord {
    pub cell: usize,
    pub variant: String,
    pub d: usize,
    pub n: usize,
    pub scm: usize,
    pub dataset: usize,
    /// Oracle `S_ICP = S_AS` for this SCM's graph.
    pub oracle_equal: bool,
    pub an_y_size: usize,
    pub ias_jaccard: f64,
    pub icp_jaccard: f64,
    pub ias_subset: bool,
    pub icp_subset: bool,
    pub ias_empty: bool,
    pub icp_empty: bool,
    pub ias_size: usize,
    pub icp_size: usize,
    pub tests_run: usize,
    pub test_failures: usize,
    pub ias: String,
    pub icp: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxMiRecord {
    pub cell: usize,
    pub d: usize,
    pub rep: usize,
    pub mi_count: usize,
    pub running_max: usize,
}

/// Default grouping columns for `summarize`.
pub fn group_columns(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::OracleLowdim => &["d", "density", "n_interventions"],
        ExperimentKind::OracleHighdim => &["d", "n_interventions", "m"],
        ExperimentKind::MaxMi => &["d"],
        _ => &["variant", "d", "n"],
    }
}

impl OracleLowRecord {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (icp, as_) = (parse_set(&self.s_icp), parse_set(&self.s_as));
        if let (Ok(icp), Ok(as_)) = (icp, as_) {
            if !self.budget_exceeded && !icp.is_subset(&as_) && self.mi_count > 0 {
                out.push(format!("S_ICP {icp} not within S_AS {as_}"));
            }
            if self.strict_superset != (icp.is_strict_subset(&as_)) {
                out.push("strict_superset flag inconsistent".into());
            }
        } else {
            out.push("unparseable set column".into());
        }
        if self.s_as_size > self.an_y_size {
            out.push("S_AS larger than AN_Y".into());
        }
        out
    }
}

impl OracleHighRecord {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.s_as_m_size > self.an_y_size {
            out.push("S_AS^m larger than AN_Y".into());
        }
        if self.s_icp_mb_size > self.mb_size {
            out.push("S_ICP^MB larger than MB".into());
        }
        out
    }
}

impl FiniteRecord {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, j) in [("ias", self.ias_jaccard), ("icp", self.icp_jaccard)] {
            if !(0.0..=1.0).contains(&j) {
                out.push(format!("{name} Jaccard {j} outside [0, 1]"));
            }
        }
        if self.ias_empty && self.ias_jaccard != 0.0 {
            out.push("empty IAS output with positive Jaccard".into());
        }
        if self.icp_empty && self.icp_jaccard != 0.0 {
            out.push("empty ICP output with positive Jaccard".into());
        }
        if self.ias_empty != (self.ias_size == 0) || self.icp_empty != (self.icp_size == 0) {
            out.push("emptiness flag disagrees with set size".into());
        }
        if self.ias_empty && !self.ias_subset {
            out.push("empty set reported as not within AN_Y".into());
        }
        out
    }
}
