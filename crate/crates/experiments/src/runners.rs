//! The studies. Each runner walks its grid cell by cell; replications of a
//! cell run on the rayon pool and come back in replication order, so the
//! output does not depend on the number of workers.
//!
//! Every replication draws from its own stream, `Seed(seed).path(ids)`, where
//! the ids name the stream and the grid coordinates (never the cell index),
//! so shrinking or reordering a grid leaves the remaining rows unchanged.

use std::time::Instant;

use anyhow::{Context, Result};
use ias_core::oracle::{oracle_markov_boundary, oracle_s_icp_mb, EnumerationOptions};
use ias_core::stats::{CachedTest, ResidualTest};
use ias_core::{
    enumerate_with, ias_search, icp_search, oracle_s_as, oracle_s_icp, sample_dag, sample_scm, screen_markov_boundary,
    simulate, Correction, Dag, DecisionConfig, Density, EnvMode, Error, GraphSamplerConfig, InterventionCount,
    LinearScm, Seed, VarSet,
};
use ias_core::oracle::count_minimally_invariant;
use rayon::prelude::*;

use crate::config::{ExperimentKind, Resolved, FULL_SEARCH_MAX_D};
use crate::output::RecordSink;
use crate::records::{format_set, jaccard, FiniteRecord, MaxMiRecord, OracleHighRecord, OracleLowRecord};

const GRAPH_STREAM: u64 = 1;
const SCM_STREAM: u64 = 2;
const DATA_STREAM: u64 = 3;
const MAX_MI_STREAM: u64 = 4;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub cells: usize,
    pub skipped_cells: usize,
    pub rows: usize,
    /// Some enumeration ran out of budget; affected rows carry a flag.
    pub partial: bool,
    pub violations: Vec<String>,
}

impl RunStats {
    fn absorb(&mut self, cell: usize, rows: usize, violations: Vec<String>) {
        self.cells += 1;
        self.rows += rows;
        self.violations.extend(violations.into_iter().map(|v| format!("cell {cell}: {v}")));
    }
}

fn density_code(d: &Density) -> u64 {
    match *d {
        Density::Sparse => 0,
        Density::Dense => 1,
        Density::Explicit(p) => 2 ^ p.to_bits(),
        Density::Uniform { lo, hi } => 3 ^ lo.to_bits() ^ hi.to_bits().rotate_left(17),
    }
}

fn density_name(d: &Density) -> String {
    match *d {
        Density::Sparse => "sparse".into(),
        Density::Dense => "dense".into(),
        Density::Explicit(p) => format!("p={p}"),
        Density::Uniform { lo, hi } => format!("p~U({lo},{hi})"),
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn enumeration(cfg: &Resolved, max_size: Option<usize>) -> EnumerationOptions {
    let opts = EnumerationOptions::new().max_size(max_size);
    match cfg.budget {
        Some(b) => opts.budget(Some(b)),
        None => opts,
    }
}

/// Family union and whether the budget ran out (the union is then partial).
fn union_within_budget(dag: &Dag, opts: &EnumerationOptions) -> Result<(VarSet, usize, bool)> {
    match enumerate_with(dag, opts) {
        Ok(fam) => Ok((fam.union(), fam.len(), false)),
        Err(Error::BudgetExceeded { found, .. }) => {
            let union = found.iter().fold(VarSet::new(), |a, s| a.union(s));
            Ok((union, found.len(), true))
        }
        Err(e) => Err(e.into()),
    }
}

/// `S_ICP` against `S_AS` over the low-dimensional grid.
pub fn run_oracle_lowdim(cfg: &Resolved, sink: &mut impl RecordSink<OracleLowRecord>) -> Result<RunStats> {
    let mut stats = RunStats::default();
    let mut cell = 0;
    for &d in &cfg.d {
        for density in &cfg.densities {
            for k in cfg.intervention_grid(d) {
                let this = cell;
                cell += 1;
                if sink.is_done(this) {
                    stats.skipped_cells += 1;
                    continue;
                }
                let sampler = GraphSamplerConfig::new(d, *density, k);
                let ids = [GRAPH_STREAM, d as u64, density_code(density), k as u64];
                let rows: Vec<(OracleLowRecord, f64)> = (0..cfg.graphs)
                    .into_par_iter()
                    .map(|rep| {
                        timed(|| {
                            let mut rng = Seed(cfg.seed).path(&ids).child(rep as u64).rng();
                            let dag = sample_dag(&sampler, &mut rng)?;
                            let (s_as, mi_count, budget_exceeded) = union_within_budget(&dag, &enumeration(cfg, None))?;
                            let s_icp = oracle_s_icp(&dag)?;
                            Ok(OracleLowRecord {
                                cell: this,
                                d,
                                density: density_name(density),
                                n_interventions: k,
                                rep,
                                an_y_size: dag.response_ancestors().len(),
                                s_icp_size: s_icp.len(),
                                s_as_size: s_as.len(),
                                mi_count,
                                strict_superset: s_icp.is_strict_subset(&s_as),
                                budget_exceeded,
                                s_icp: format_set(&s_icp),
                                s_as: format_set(&s_as),
                            })
                        })
                    })
                    .collect::<Result<_>>()
                    .with_context(|| format!("cell d = {d}, {}, {k} interventions", density_name(density)))?;
                stats.partial |= rows.iter().any(|(r, _)| r.budget_exceeded);
                let violations = rows.iter().flat_map(|(r, _)| r.violations()).collect();
                stats.absorb(this, rows.len(), violations);
                sink.write_cell(this, rows)?;
                log::info!("oracle_lowdim: finished d = {d}, {}, k = {k}", density_name(density));
            }
        }
    }
    Ok(stats)
}

/// `|S_AS^m|` against `|S_ICP^MB|` on large sparse graphs.
pub fn run_oracle_highdim(cfg: &Resolved, sink: &mut impl RecordSink<OracleHighRecord>) -> Result<RunStats> {
    let mut stats = RunStats::default();
    let mut cell = 0;
    for &d in &cfg.d {
        for k in cfg.intervention_grid(d) {
            let this = cell;
            cell += 1;
            if sink.is_done(this) {
                stats.skipped_cells += 1;
                continue;
            }
            let density = cfg.densities[0];
            let sampler = GraphSamplerConfig::new(d, density, k);
            let caps = cfg.oracle_caps(d);
            let ids = [GRAPH_STREAM, d as u64, density_code(&density), k as u64];
            let per_rep: Vec<Vec<(OracleHighRecord, f64)>> = (0..cfg.graphs)
                .into_par_iter()
                .map(|rep| {
                    let start = Instant::now();
                    let mut rng = Seed(cfg.seed).path(&ids).child(rep as u64).rng();
                    let dag = sample_dag(&sampler, &mut rng)?;
                    let mb = oracle_markov_boundary(&dag);
                    let s_icp_mb = oracle_s_icp_mb(&dag)?;
                    let an_y = dag.response_ancestors();
                    let mut out = Vec::new();
                    for &m in &caps {
                        let (s_as, _, budget_exceeded) = union_within_budget(&dag, &enumeration(cfg, Some(m)))?;
                        out.push(OracleHighRecord {
                            cell: this,
                            d,
                            n_interventions: k,
                            m,
                            rep,
                            mb_size: mb.len(),
                            an_y_size: an_y.len(),
                            s_as_m_size: s_as.len(),
                            s_icp_mb_size: s_icp_mb.len(),
                            as_larger: s_as.len() > s_icp_mb.len(),
                            budget_exceeded,
                        });
                    }
                    let t = start.elapsed().as_secs_f64();
                    Ok(out.into_iter().map(|r| (r, t)).collect())
                })
                .collect::<Result<_>>()
                .with_context(|| format!("cell d = {d}, {k} interventions"))?;
            let rows: Vec<_> = per_rep.into_iter().flatten().collect();
            stats.partial |= rows.iter().any(|(r, _)| r.budget_exceeded);
            let violations = rows.iter().flat_map(|(r, _)| r.violations()).collect();
            stats.absorb(this, rows.len(), violations);
            sink.write_cell(this, rows)?;
            log::info!("oracle_highdim: finished d = {d}, k = {k}");
        }
    }
    Ok(stats)
}

/// One arm of a finite-sample study.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub strength: f64,
    pub decision: DecisionConfig,
}

/// Arms run by a finite-sample experiment kind.
pub fn variants(cfg: &Resolved) -> Vec<Variant> {
    let base = Variant {
        name: "strong".into(),
        strength: cfg.strength,
        decision: cfg.decision.clone(),
    };
    match cfg.experiment {
        ExperimentKind::WeakInterventions => vec![
            base.clone(),
            Variant {
                name: "weak".into(),
                strength: cfg.weak_strength,
                ..base
            },
        ],
        ExperimentKind::Alpha0Sweep => cfg
            .alpha0_values
            .iter()
            .map(|&a0| Variant {
                name: format!("alpha0={a0:e}"),
                decision: DecisionConfig {
                    alpha0: a0,
                    ..cfg.decision.clone()
                },
                ..base.clone()
            })
            .collect(),
        ExperimentKind::CorrectionAblation => cfg
            .corrections
            .iter()
            .map(|c| Variant {
                name: format!("C={}", correction_name(c)),
                decision: DecisionConfig {
                    correction: *c,
                    ..cfg.decision.clone()
                },
                ..base.clone()
            })
            .collect(),
        _ => vec![base],
    }
}

fn correction_name(c: &Correction) -> String {
    match c {
        Correction::Auto => "auto".into(),
        Correction::Full2d => "full_2d".into(),
        Correction::Heuristic3Pow => "heuristic_3pow".into(),
        Correction::Restricted => "restricted".into(),
        Correction::Explicit(x) => format!("{x}"),
    }
}

/// SCM number `scm` at dimension `d`; shared by every arm and sample size.
pub fn finite_sample_scm(cfg: &Resolved, d: usize, scm: usize) -> Result<LinearScm> {
    let sampler = GraphSamplerConfig {
        n_interventions: cfg.intervention_law(d),
        ..GraphSamplerConfig::new(d, cfg.densities[0], 1)
    };
    let mut rng = Seed(cfg.seed).path(&[SCM_STREAM, d as u64, scm as u64]).rng();
    let dag = sample_dag(&sampler, &mut rng)?;
    Ok(sample_scm(&dag, cfg.strength, &mut rng)?)
}

struct ScmOracle {
    an_y: VarSet,
    oracle_equal: bool,
}

fn scm_oracle(dag: &Dag, cap: Option<usize>) -> Result<ScmOracle> {
    let s_as = oracle_s_as(dag, cap)?;
    Ok(ScmOracle {
        an_y: dag.response_ancestors(),
        oracle_equal: oracle_s_icp(dag)? == s_as,
    })
}

/// IAS and ICP on one dataset.
fn estimate(
    cfg: &Resolved,
    variant: &Variant,
    scm: &LinearScm,
    n: usize,
    seed: Seed,
) -> Result<(VarSet, VarSet, usize, usize)> {
    let d = scm.d();
    let data = simulate(scm, n, &mut seed.rng())?;
    let test = CachedTest::new(ResidualTest::new(&data));
    let decision = DecisionConfig {
        m: cfg.search_cap(d),
        ..variant.decision.clone()
    };
    let mut failures = 0;
    let ias = match ias_search(&test, &decision) {
        Ok(report) => {
            failures += report.failures.len();
            report.s_hat
        }
        Err(e) => {
            log::warn!("IAS failed on n = {n}: {e}");
            failures += 1;
            VarSet::new()
        }
    };
    let candidates = if d <= FULL_SEARCH_MAX_D {
        Ok(VarSet::full(d))
    } else {
        screen_markov_boundary(&data, cfg.screen_size)
    };
    let icp = match candidates.and_then(|c| icp_search(&test, &c, decision.alpha)) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("ICP failed on n = {n}: {e}");
            failures += 1;
            VarSet::new()
        }
    };
    Ok((ias, icp, test.evaluations(), failures))
}

/// IAS and ICP on simulated data, for every arm of `cfg.experiment`.
pub fn run_finite_sample(cfg: &Resolved, sink: &mut impl RecordSink<FiniteRecord>) -> Result<RunStats> {
    let mut stats = RunStats::default();
    let arms = variants(cfg);
    let mut cell = 0;
    for &d in &cfg.d {
        let mut scms: Option<Vec<(LinearScm, ScmOracle)>> = None;
        for variant in &arms {
            for &n in &cfg.n {
                let this = cell;
                cell += 1;
                if sink.is_done(this) {
                    stats.skipped_cells += 1;
                    continue;
                }
                if scms.is_none() {
                    let cap = cfg.search_cap(d);
                    scms = Some(
                        (0..cfg.scms)
                            .into_par_iter()
                            .map(|i| {
                                let scm = finite_sample_scm(cfg, d, i)?;
                                let oracle = scm_oracle(scm.dag(), cap)?;
                                Ok((scm, oracle))
                            })
                            .collect::<Result<_>>()?,
                    );
                }
                let scms = scms.as_ref().expect("drawn above");
                let jobs: Vec<(usize, usize)> =
                    (0..cfg.scms).flat_map(|s| (0..cfg.datasets).map(move |k| (s, k))).collect();
                let rows: Vec<(FiniteRecord, f64)> = jobs
                    .into_par_iter()
                    .map(|(s, k)| {
                        timed(|| {
                            let (scm, oracle) = &scms[s];
                            let scm = scm.with_strength(variant.strength);
                            let seed = Seed(cfg.seed).path(&[DATA_STREAM, d as u64, n as u64, s as u64, k as u64]);
                            let (ias, icp, tests_run, test_failures) = estimate(cfg, variant, &scm, n, seed)?;
                            Ok(FiniteRecord {
                                cell: this,
                                variant: variant.name.clone(),
                                d,
                                n,
                                scm: s,
                                dataset: k,
                                oracle_equal: oracle.oracle_equal,
                                an_y_size: oracle.an_y.len(),
                                ias_jaccard: jaccard(&ias, &oracle.an_y),
                                icp_jaccard: jaccard(&icp, &oracle.an_y),
                                ias_subset: ias.is_subset(&oracle.an_y),
                                icp_subset: icp.is_subset(&oracle.an_y),
                                ias_empty: ias.is_empty(),
                                icp_empty: icp.is_empty(),
                                ias_size: ias.len(),
                                icp_size: icp.len(),
                                tests_run,
                                test_failures,
                                ias: format_set(&ias),
                                icp: format_set(&icp),
                            })
                        })
                    })
                    .collect::<Result<_>>()
                    .with_context(|| format!("cell {}, d = {d}, n = {n}", variant.name))?;
                let violations = rows.iter().flat_map(|(r, _)| r.violations()).collect();
                stats.absorb(this, rows.len(), violations);
                sink.write_cell(this, rows)?;
                log::info!("{}: finished {}, d = {d}, n = {n}", cfg.experiment.name(), variant.name);
            }
        }
    }
    Ok(stats)
}

/// Counts of minimally invariant sets on graphs with `Y` last in the order.
///
/// With `patience = Some(p)` a cell stops after `p` draws without a new maximum.
pub fn run_max_mi(cfg: &Resolved, sink: &mut impl RecordSink<MaxMiRecord>) -> Result<RunStats> {
    let mut stats = RunStats::default();
    for (cell, &d) in cfg.d.iter().enumerate() {
        if sink.is_done(cell) {
            stats.skipped_cells += 1;
            continue;
        }
        let sampler = GraphSamplerConfig {
            d,
            density: cfg.densities[0],
            n_interventions: cfg.interventions.unwrap_or(InterventionCount::Uniform { lo: 1, hi: d }),
            seed: cfg.seed,
            mode: EnvMode::Exogenous,
            response_last: true,
        };
        let counts: Vec<(usize, f64)> = (0..cfg.batches)
            .into_par_iter()
            .map(|rep| {
                timed(|| {
                    let mut rng = Seed(cfg.seed).path(&[MAX_MI_STREAM, d as u64, rep as u64]).rng();
                    let dag = sample_dag(&sampler, &mut rng)?;
                    Ok(count_minimally_invariant(&dag, cfg.budget)?)
                })
            })
            .collect::<Result<_>>()
            .with_context(|| format!("max_mi cell d = {d}"))?;
        let mut rows = Vec::new();
        let (mut best, mut stale) = (0, 0);
        for (rep, (count, t)) in counts.into_iter().enumerate() {
            if count > best {
                best = count;
                stale = 0;
            } else {
                stale += 1;
            }
            rows.push((
                MaxMiRecord {
                    cell,
                    d,
                    rep,
                    mi_count: count,
                    running_max: best,
                },
                t,
            ));
            if cfg.patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
        stats.absorb(cell, rows.len(), Vec::new());
        sink.write_cell(cell, rows)?;
        log::info!("max_mi: d = {d}, maximum {best}");
    }
    Ok(stats)
}
