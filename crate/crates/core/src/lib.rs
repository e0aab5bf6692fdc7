//! Invariant ancestry search: graph oracles, linear SCM simulation, invariance
//! tests and the finite-sample estimator.

pub mod audit;
pub mod dag;
pub mod dsep;
pub mod error;
pub mod estimator;
pub mod fixtures;
pub mod oracle;
pub mod random_graphs;
pub mod rng;
pub mod scm;
pub mod separators;
pub mod stats;
pub mod varset;

pub use dag::{Dag, EnvMode, NodeId, Relation, Role};
pub use error::{Error, Result};
pub use estimator::{ias_search, icp_search, screen_markov_boundary, Correction, DecisionConfig, SearchReport};
pub use oracle::{
    enumerate_minimally_invariant, enumerate_with, oracle_invariant, oracle_markov_boundary,
    oracle_minimally_invariant, oracle_s_as, oracle_s_icp, oracle_s_icp_bruteforce, oracle_s_icp_mb,
    Backend, EnumerationOptions, MinimalInvariantFamily,
};
pub use random_graphs::{sample_dag, simulate_max_mi_count, Density, GraphSamplerConfig, InterventionCount};
pub use rng::{RngState, Seed};
pub use scm::{sample_scm, simulate, Dataset, LinearScm};
pub use stats::{invariance_p_value, phi, phi_mi, InvarianceTest, InvarianceTestResult};
pub use varset::{NodeSet, VarSet};
