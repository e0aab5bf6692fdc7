//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! (written straight to stderr so it survives output capture) and then
//! asserts the same condition.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use ias_core::audit::audit_oracle;
use ias_core::dsep::DSeparation;
use ias_core::dag::Role::{Env as E, Predictor as X, Response as Y};
use ias_core::fixtures::{diamond_with_collider, two_routes_with_collider, parallel_paths};
use ias_core::oracle::{enumerate_with, Backend, EnumerationOptions};
use ias_core::stats::GraphOracleTest;
use ias_core::{
    ias_search, invariance_p_value, oracle_s_as, oracle_s_icp, oracle_s_icp_bruteforce, sample_dag, sample_scm,
    simulate, simulate_max_mi_count, Dag, DecisionConfig, Density, EnvMode, GraphSamplerConfig, InterventionCount,
    RngState, Seed, VarSet,
};
use ias_experiments::records::{FiniteRecord, OracleHighRecord};
use ias_experiments::runners::{run_finite_sample, run_oracle_highdim};
use ias_experiments::{ExperimentConfig, ExperimentKind};
use rand::Rng;
use rayon::prelude::*;

/// The tests share the machine; running them one at a time keeps the timings honest.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "acceptance {id}: {verdict} | {detail}");
    pass
}

fn random_dag(rng: &mut RngState, lo: usize, hi: usize, mode: EnvMode) -> Dag {
    let d = rng.random_range(lo..=hi);
    let config = GraphSamplerConfig {
        density: Density::Uniform { lo: 0.1, hi: 0.9 },
        n_interventions: InterventionCount::Uniform { lo: 1, hi: d },
        mode,
        ..GraphSamplerConfig::new(d, Density::Sparse, 1)
    };
    sample_dag(&config, rng).unwrap()
}

fn graph(id: u64, i: usize, lo: usize, hi: usize, mode: EnvMode) -> Dag {
    random_dag(&mut Seed(id).child(i as u64).rng(), lo, hi, mode)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn rate<'a>(rows: impl Iterator<Item = &'a FiniteRecord>, f: impl Fn(&FiniteRecord) -> bool) -> f64 {
    mean(rows.map(|r| if f(r) { 1.0 } else { 0.0 }))
}

#[test]
fn criterion_1_oracle_soundness() {
    let _serial = serial();
    let start = Instant::now();
    let per_mode = 10_000;
    let mut lines = Vec::new();
    let mut total = 0;
    for (name, mode, latent) in [
        ("exogenous", EnvMode::Exogenous, false),
        ("non-exogenous", EnvMode::Nonexogenous, false),
        ("latent-masked", EnvMode::Exogenous, true),
    ] {
        let violations: Vec<String> = (0..per_mode)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut rng = Seed(101).path(&[mode as u64, latent as u64, i as u64]).rng();
                let dag = random_dag(&mut rng, 3, 8, mode);
                let observed: Option<VarSet> =
                    latent.then(|| (1..=dag.d()).filter(|_| rng.random_bool(0.7)).collect());
                let backend = if i % 2 == 0 { Backend::Separators } else { Backend::BruteForce };
                audit_oracle(&dag, observed.as_ref(), backend)
                    .unwrap()
                    .into_iter()
                    .map(move |v| format!("{}: {v}", dag.to_edge_list().replace('\n', "; ")))
            })
            .collect();
        total += violations.len();
        lines.push(format!("{name} {}", violations.len()));
        for v in violations.iter().take(5) {
            eprintln!("{v}");
        }
    }
    let elapsed = start.elapsed();
    let pass = total == 0 && elapsed < Duration::from_secs(120);
    let detail = format!(
        "{per_mode} graphs per mode, violations [{}], {:.1}s (limit 120s)",
        lines.join(", "),
        elapsed.as_secs_f64()
    );
    assert!(report(1, pass, &detail), "{detail}");
}

#[test]
fn criterion_2_closed_form_icp() {
    let _serial = serial();
    let start = Instant::now();
    let mismatches = (0..10_000)
        .into_par_iter()
        .filter(|&i| {
            let dag = graph(202, i, 1, 8, EnvMode::Exogenous);
            oracle_s_icp(&dag).unwrap() != oracle_s_icp_bruteforce(&dag).unwrap()
        })
        .count();
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(120);
    let detail = format!(
        "10000 graphs, {mismatches} mismatches, {:.1}s (limit 120s)",
        elapsed.as_secs_f64()
    );
    assert!(report(2, pass, &detail), "{detail}");
}

fn family(dag: &Dag, backend: Backend) -> Vec<VarSet> {
    enumerate_with(dag, &EnumerationOptions::new().backend(backend).budget(None)).unwrap().sets
}

/// Minimally invariant sets by checking every subset of `AN_Y`: invariance of
/// all subsets is tabulated once, then each invariant set is kept when no
/// one-smaller subset is invariant.
fn ancestor_brute_force(dag: &Dag) -> Vec<VarSet> {
    let pool: Vec<usize> = dag.response_ancestors().iter().collect();
    let mut ds = DSeparation::new(dag);
    let subset = |mask: usize| -> VarSet { pool.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &k)| k).collect() };
    let invariant: Vec<bool> = (0..1usize << pool.len()).map(|mask| ds.invariant(&subset(mask))).collect();
    let mut out: Vec<VarSet> = (0..invariant.len())
        .filter(|&mask| invariant[mask] && (0..pool.len()).all(|i| mask >> i & 1 == 0 || !invariant[mask & !(1 << i)]))
        .map(subset)
        .collect();
    out.sort();
    out
}

/// Seconds per call: each of five samples repeats `f` for at least 5 ms; the fastest sample wins.
fn time_per_call(f: impl Fn()) -> f64 {
    (0..5)
        .map(|_| {
            let t = Instant::now();
            let mut calls = 0u32;
            while calls == 0 || t.elapsed() < Duration::from_millis(5) {
                f();
                calls += 1;
            }
            t.elapsed().as_secs_f64() / calls as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// Median over graphs of (ancestor brute force time) / (separator listing time),
/// and the same ratio for the pruned subset scan.
fn median_speedups(graphs: usize) -> (f64, f64, usize) {
    let config = GraphSamplerConfig::new(15, Density::Dense, 5);
    let mut rng = Seed(303).child(1).rng();
    let mut plain = Vec::new();
    let mut pruned = Vec::new();
    let mut disagreements = 0;
    for _ in 0..graphs {
        let dag = sample_dag(&config, &mut rng).unwrap();
        if ancestor_brute_force(&dag) != family(&dag, Backend::Separators) {
            disagreements += 1;
        }
        let sep = time_per_call(|| {
            std::hint::black_box(family(&dag, Backend::Separators));
        });
        let brute = time_per_call(|| {
            std::hint::black_box(ancestor_brute_force(&dag));
        });
        let scan = time_per_call(|| {
            std::hint::black_box(family(&dag, Backend::BruteForce));
        });
        plain.push(brute / sep);
        pruned.push(scan / sep);
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    (median(plain), median(pruned), disagreements)
}

#[test]
fn criterion_3_backend_equivalence() {
    let _serial = serial();
    let mut graphs: Vec<Dag> = vec![diamond_with_collider(), two_routes_with_collider()];
    graphs.extend((1..=4).map(parallel_paths));
    let fixtures = graphs.len();
    graphs.extend((0..2000).map(|i| {
        let mode = if i % 2 == 0 { EnvMode::Exogenous } else { EnvMode::Nonexogenous };
        graph(303, i, 2, 10, mode)
    }));
    let mismatches = graphs
        .par_iter()
        .filter(|g| family(g, Backend::Separators) != family(g, Backend::BruteForce))
        .count();
    let (speedup, pruned, disagreements) = median_speedups(51);
    let pass = mismatches == 0 && disagreements == 0 && speedup >= 5.0;
    let detail = format!(
        "{} graphs ({fixtures} fixtures), {} mismatches; d=15 dense, 5 interventions, 51 graphs: median speedup over \
         ancestor brute force {speedup:.1}x (need >= 5x), over the superset-pruned scan {pruned:.1}x",
        graphs.len(),
        mismatches + disagreements
    );
    assert!(report(3, pass, &detail), "{detail}");
}

#[test]
fn criterion_4_search_logic() {
    let _serial = serial();
    let start = Instant::now();
    let mismatches: usize = (0..2000)
        .into_par_iter()
        .map(|i| {
            let mode = if i % 2 == 0 { EnvMode::Exogenous } else { EnvMode::Nonexogenous };
            let dag = graph(404, i, 2, 10, mode);
            let d = dag.d();
            [1, 2, d]
                .into_iter()
                .filter(|&m| {
                    let config = DecisionConfig {
                        m: Some(m.min(d)),
                        ..DecisionConfig::default()
                    };
                    let got = ias_search(&GraphOracleTest::new(&dag), &config).unwrap().s_hat;
                    got != oracle_s_as(&dag, Some(m.min(d))).unwrap()
                })
                .count()
        })
        .sum();
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(60);
    let detail = format!(
        "2000 graphs x m in {{1, 2, d}}, {mismatches} mismatches, {:.1}s (limit 60s)",
        elapsed.as_secs_f64()
    );
    assert!(report(4, pass, &detail), "{detail}");
}

/// Fraction of datasets where the test of `set(dag)` rejects at 0.05.
fn rejection_rate(stream: u64, reps: usize, n: usize, set: impl Fn(&Dag) -> VarSet + Sync) -> f64 {
    let config = GraphSamplerConfig::new(6, Density::Sparse, 1);
    let rejections = (0..reps)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = Seed(505).path(&[stream, i as u64]).rng();
            let dag = sample_dag(&config, &mut rng).unwrap();
            let scm = sample_scm(&dag, 1.0, &mut rng).unwrap();
            let data = simulate(&scm, n, &mut rng).unwrap();
            invariance_p_value(&data, &set(&dag)).unwrap().p_value < 0.05
        })
        .count();
    rejections as f64 / reps as f64
}

#[test]
fn criterion_5_test_calibration() {
    let _serial = serial();
    let start = Instant::now();
    let level = rejection_rate(1, 1000, 10_000, |g| g.parents(g.d() + 1).iter().copied().collect());
    let power = rejection_rate(2, 1000, 100_000, |_| VarSet::new());
    let elapsed = start.elapsed();
    let pass = (0.03..=0.08).contains(&level) && power >= 0.99 && elapsed < Duration::from_secs(600);
    let detail = format!(
        "level at PA_Y {level:.3} (need [0.03, 0.08]), power at empty set {power:.3} (need >= 0.99), {:.1}s",
        elapsed.as_secs_f64()
    );
    assert!(report(5, pass, &detail), "{detail}");
}

/// The desk-scale finite-sample study behind criteria 6 and 7. The seed is fixed up front.
fn finite_sample_rows() -> Vec<FiniteRecord> {
    let cfg = ExperimentConfig {
        seed: Some(0),
        ..ExperimentConfig::for_experiment(ExperimentKind::FiniteSample)
    }
    .resolve(None)
    .unwrap();
    assert_eq!((cfg.scms, cfg.datasets, cfg.d.as_slice()), (20, 20, &[6][..]));
    assert_eq!(cfg.decision.alpha0, 1e-6);
    let mut rows = Vec::new();
    let stats = run_finite_sample(&cfg, &mut rows).unwrap();
    assert!(stats.violations.is_empty(), "{:?}", stats.violations);
    rows
}

#[test]
fn criterion_6_and_7_finite_sample() {
    let _serial = serial();
    let start = Instant::now();
    let rows = finite_sample_rows();
    let at = |n: usize| rows.iter().filter(move |r| r.n == n);
    for n in [100, 1_000, 10_000, 100_000] {
        let _ = writeln!(
            std::io::stderr().lock(),
            "  n = {n:>6}: P(IAS within AN_Y) {:.1}%, P(IAS empty) {:.1}%, P(ICP empty) {:.1}%",
            100.0 * rate(at(n), |r| r.ias_subset),
            100.0 * rate(at(n), |r| r.ias_empty),
            100.0 * rate(at(n), |r| r.icp_empty),
        );
    }
    let subset = 100.0 * rate(at(100_000), |r| r.ias_subset);
    let empty = 100.0 * rate(at(100), |r| r.ias_empty);
    let icp_empty = 100.0 * rate(at(100_000), |r| r.icp_empty);
    let elapsed = start.elapsed();
    let checks = [
        (subset - 93.8).abs() <= 7.0,
        (empty - 89.6).abs() <= 7.0,
        (icp_empty - 22.9).abs() <= 10.0,
        elapsed < Duration::from_secs(45 * 60),
    ];
    let pass6 = checks.iter().all(|&c| c);
    let detail6 = format!(
        "P(IAS within AN_Y | n=1e5) {subset:.1}% (target 93.8 +- 7), P(IAS empty | n=1e2) {empty:.1}% (target 89.6 +- 7), \
         P(ICP empty | n=1e5) {icp_empty:.1}% (target 22.9 +- 10), {:.1}s",
        elapsed.as_secs_f64()
    );
    let pass6 = report(6, pass6, &detail6);

    let mut parts = Vec::new();
    let mut pass7 = true;
    let differ = rows.iter().filter(|r| !r.oracle_equal).map(|r| r.scm).collect::<std::collections::BTreeSet<_>>();
    for n in [10_000, 100_000] {
        let jac = |eq: bool| {
            let sel: Vec<_> = at(n).filter(|r| r.oracle_equal == eq).collect();
            (
                mean(sel.iter().map(|r| r.ias_jaccard)),
                mean(sel.iter().map(|r| r.icp_jaccard)),
                sel.len(),
            )
        };
        let (ias_ne, icp_ne, k_ne) = jac(false);
        let (ias_eq, icp_eq, k_eq) = jac(true);
        pass7 &= k_ne > 0 && ias_ne > icp_ne && (ias_eq - icp_eq).abs() <= 0.05;
        parts.push(format!(
            "n={n}: differ J_AS {ias_ne:.3} vs J_ICP {icp_ne:.3} ({k_ne} rows), equal J_AS {ias_eq:.3} vs J_ICP {icp_eq:.3} ({k_eq} rows)"
        ));
    }
    let detail7 = format!("{} SCMs with S_ICP != S_AS; {}", differ.len(), parts.join("; "));
    let pass7 = report(7, pass7, &detail7);
    assert!(pass6, "{detail6}");
    assert!(pass7, "{detail7}");
}

#[test]
fn criterion_8_high_dimensional_oracle() {
    let _serial = serial();
    let start = Instant::now();
    let cfg = ExperimentConfig {
        d: Some(vec![100]),
        graphs: Some(100),
        m: Some(vec![1]),
        seed: Some(808),
        ..ExperimentConfig::for_experiment(ExperimentKind::OracleHighdim)
    }
    .resolve(None)
    .unwrap();
    let mut rows: Vec<OracleHighRecord> = Vec::new();
    let stats = run_oracle_highdim(&cfg, &mut rows).unwrap();
    let mb = mean(rows.iter().map(|r| r.mb_size as f64));
    let s_as = mean(rows.iter().map(|r| r.s_as_m_size as f64));
    let s_icp = mean(rows.iter().map(|r| r.s_icp_mb_size as f64));
    let elapsed = start.elapsed();
    let pass = rows.len() == 1000
        && stats.violations.is_empty()
        && !stats.partial
        && (mb - 3.5).abs() <= 0.5
        && s_as >= s_icp
        && elapsed < Duration::from_secs(600);
    let detail = format!(
        "{} graphs, d=100, 1..10 interventions: mean |MB_Y| {mb:.2} (target 3.5 +- 0.5), mean |S_AS^1| {s_as:.3} vs mean |S_ICP^MB| {s_icp:.3}, {:.1}s",
        rows.len(),
        elapsed.as_secs_f64()
    );
    assert!(report(8, pass, &detail), "{detail}");
}

/// Two disjoint three-predictor paths from `E` to `Y`: 3 x 3 minimally invariant sets.
fn two_long_paths() -> Dag {
    let mut edges = Vec::new();
    for base in [0, 3] {
        edges.extend([(E, X(base + 1)), (X(base + 1), X(base + 2)), (X(base + 2), X(base + 3)), (X(base + 3), Y)]);
    }
    Dag::from_roles(6, &edges, EnvMode::Exogenous).unwrap()
}

#[test]
fn criterion_9_max_count() {
    let _serial = serial();
    let config = GraphSamplerConfig {
        density: Density::Uniform { lo: 0.0, hi: 1.0 },
        n_interventions: InterventionCount::Uniform { lo: 1, hi: 6 },
        response_last: true,
        ..GraphSamplerConfig::new(6, Density::Sparse, 1)
    };
    let best = simulate_max_mi_count(&config, 10_000, None, &mut Seed(909).rng()).unwrap();
    let paths = family(&parallel_paths(3), Backend::BruteForce).len();
    let nine = family(&two_long_paths(), Backend::BruteForce).len();
    let within_bound = best <= 9;
    let pass = best >= 4 && paths == 8;
    let detail = format!(
        "max over 10000 draws at d=6: {best} (need >= 4; bound 9 {}), parallel paths: {paths} sets (need 8), two 3-paths: {nine} sets",
        if within_bound { "holds" } else { "VIOLATED, reported as a finding" }
    );
    assert!(report(9, pass, &detail), "{detail}");
}
