//! Finite-sample estimators of ancestors and parents of `Y`.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::scm::Dataset;
use crate::stats::InvarianceTest;
use crate::varset::{Combinations, VarSet};

/// Multiplicity correction: every non-empty set is tested at `alpha / C`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    /// `3^⌈d/3⌉` for a full search, `C(m)` when the set size is capped.
    #[default]
    Auto,
    /// `2^d`.
    #[serde(rename = "full_2d")]
    Full2d,
    /// `3^⌈d/3⌉`.
    #[serde(rename = "heuristic_3pow")]
    Heuristic3Pow,
    /// `C(m) = Σ_{i=0}^{m} binom(d, i)`.
    Restricted,
    Explicit(f64),
}

fn binomial_sum(d: usize, m: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..=m.min(d) {
        term *= (d + 1 - i) as f64 / i as f64;
        sum += term;
    }
    sum
}

impl Correction {
    /// The factor `C` for `d` predictors and size cap `m`.
    pub fn factor(&self, d: usize, m: usize) -> Result<f64> {
        let c = match *self {
            Correction::Auto if m >= d => 3f64.powi(d.div_ceil(3) as i32),
            Correction::Auto | Correction::Restricted => binomial_sum(d, m),
            Correction::Full2d => 2f64.powi(d as i32),
            Correction::Heuristic3Pow => 3f64.powi(d.div_ceil(3) as i32),
            Correction::Explicit(c) => c,
        };
        if !(c >= 1.0) || !c.is_finite() {
            return arg(format!("correction factor {c} must be a finite number >= 1"));
        }
        Ok(c)
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_alpha0() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Level for the test of the empty set.
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    /// Level for sets of size exactly `m`, if set.
    #[serde(default)]
    pub alpha1: Option<f64>,
    #[serde(default)]
    pub correction: Correction,
    /// Largest set size searched; `None` searches all sizes.
    #[serde(default)]
    pub m: Option<usize>,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        DecisionConfig {
            alpha: default_alpha(),
            alpha0: default_alpha0(),
            alpha1: None,
            correction: Correction::Auto,
            m: None,
        }
    }
}

impl DecisionConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return arg(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        if !(self.alpha0 >= 0.0 && self.alpha0 <= self.alpha) {
            return arg(format!("alpha0 = {} must lie in [0, alpha]", self.alpha0));
        }
        if let Some(a1) = self.alpha1 {
            if !(a1 >= self.alpha && a1 < 1.0) {
                return arg(format!("alpha1 = {a1} must lie in [alpha, 1)"));
            }
        }
        if let Some(m) = self.m {
            if m > d {
                return arg(format!("m = {m} exceeds d = {d}"));
            }
        }
        self.correction.factor(d, self.m.unwrap_or(d))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFailure {
    pub set: VarSet,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub s_hat: VarSet,
    /// Accepted sets in the order found.
    pub accepted_family: Vec<VarSet>,
    /// Invariance tests run, including the one for the empty set.
    pub tested_count: usize,
    /// Sets skipped as supersets of accepted ones.
    pub skipped_count: usize,
    pub empty_set_rejected: bool,
    pub empty_set_p_value: Option<f64>,
    /// Sets whose test failed numerically; they count as rejected.
    pub failures: Vec<TestFailure>,
    pub correction_factor: f64,
    pub config_echo: DecisionConfig,
}

/// Numerical failures become rejections; anything else aborts the search.
fn rejected_on_failure(err: Error, s: &VarSet, failures: &mut Vec<TestFailure>) -> Result<f64> {
    match err {
        Error::Numerical { reason, .. } => {
            log::debug!("invariance test failed for {s}: {reason}");
            failures.push(TestFailure {
                set: s.clone(),
                message: reason,
            });
            Ok(0.0)
        }
        other => Err(other),
    }
}

/// Union of the accepted minimally invariant sets, searching upward in size.
///
/// The empty set is tested once, at `alpha0`; if it is not rejected the
/// result is empty. Otherwise sets of size `1..=m` are visited by size and
/// lexicographically within a size, supersets of accepted sets are skipped,
/// and a set is accepted when its p-value is at least `alpha / C` (or
/// `alpha1` for sets of size `m`, when configured). The scan stops once the
/// accepted sets cover every predictor.
pub fn ias_search<T: InvarianceTest + ?Sized>(test: &T, config: &DecisionConfig) -> Result<SearchReport> {
    let d = test.d();
    config.validate(d)?;
    let m = config.m.unwrap_or(d);
    let c = config.correction.factor(d, m)?;
    let level = config.alpha / c;

    let mut report = SearchReport {
        s_hat: VarSet::new(),
        accepted_family: Vec::new(),
        tested_count: 1,
        skipped_count: 0,
        empty_set_rejected: false,
        empty_set_p_value: None,
        failures: Vec::new(),
        correction_factor: c,
        config_echo: config.clone(),
    };
    let empty = VarSet::new();
    let p0 = match test.p_value(&empty) {
        Ok(p) => p,
        Err(e) => rejected_on_failure(e, &empty, &mut report.failures)?,
    };
    report.empty_set_p_value = Some(p0);
    if p0 >= config.alpha0 {
        return Ok(report);
    }
    report.empty_set_rejected = true;

    let full = VarSet::full(d);
    'sizes: for size in 1..=m {
        let set_level = match config.alpha1 {
            Some(a1) if size == m => a1,
            _ => level,
        };
        for s in Combinations::new(&full, size) {
            if report.accepted_family.iter().any(|a| a.is_subset(&s)) {
                report.skipped_count += 1;
                continue;
            }
            report.tested_count += 1;
            let p = match test.p_value(&s) {
                Ok(p) => p,
                Err(e) => rejected_on_failure(e, &s, &mut report.failures)?,
            };
            if p >= set_level {
                report.s_hat.union_with(&s);
                report.accepted_family.push(s);
                if report.s_hat == full {
                    break 'sizes;
                }
            }
        }
    }
    Ok(report)
}

/// Largest candidate set [`icp_search`] enumerates.
pub const ICP_MAX_CANDIDATES: usize = 25;

/// Intersection of all subsets of `candidates` whose invariance is not
/// rejected at `alpha`; empty when every set is rejected.
pub fn icp_search<T: InvarianceTest + ?Sized>(test: &T, candidates: &VarSet, alpha: f64) -> Result<VarSet> {
    if candidates.len() > ICP_MAX_CANDIDATES {
        return Err(Error::Resource(format!(
            "{} candidates; exhaustive search is capped at {ICP_MAX_CANDIDATES}",
            candidates.len()
        )));
    }
    if candidates.last().is_some_and(|k| k > test.d()) {
        return arg(format!("candidates {candidates} exceed d = {}", test.d()));
    }
    let mut failures = Vec::new();
    let mut acc: Option<VarSet> = None;
    for size in 0..=candidates.len() {
        for s in Combinations::new(candidates, size) {
            let p = match test.p_value(&s) {
                Ok(p) => p,
                Err(e) => rejected_on_failure(e, &s, &mut failures)?,
            };
            if p >= alpha {
                let next = match acc {
                    Some(a) => a.intersection(&s),
                    None => s,
                };
                if next.is_empty() {
                    return Ok(next);
                }
                acc = Some(next);
            }
        }
    }
    Ok(acc.unwrap_or_default())
}

const LASSO_GRID: usize = 100;
const LASSO_RATIO: f64 = 1e-3;
const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 10_000;

/// At most `k` predictors screened by an ℓ1 path of `Y` on `X`.
///
/// Predictors are standardized. The path runs over 100 log-spaced penalties
/// from the smallest one that zeroes every coefficient down to a thousandth
/// of it, each solved by coordinate descent until the objective improves by
/// less than 1e-8 per sweep. The result is the active set at the last
/// penalty before more than `k` predictors become active. Constant columns
/// are dropped.
pub fn screen_markov_boundary(data: &Dataset, k: usize) -> Result<VarSet> {
    let d = data.d();
    if k > d {
        return arg(format!("k = {k} exceeds d = {d}"));
    }
    let mom = data.moments();
    let n = data.n() as f64;
    let mut cols = Vec::new();
    for j in 0..d {
        if mom.pooled_cross(j, j) <= 1e-12 * n {
            log::warn!("predictor X{} is constant and was dropped from screening", j + 1);
        } else {
            cols.push(j);
        }
    }
    let to_set = |idx: &[usize]| idx.iter().map(|&i| cols[i] + 1).collect::<VarSet>();
    if k >= cols.len() {
        return Ok(to_set(&(0..cols.len()).collect::<Vec<_>>()));
    }
    let syy = mom.pooled_cross(d, d);
    if k == 0 || syy <= 0.0 {
        return Ok(VarSet::new());
    }
    let q = cols.len();
    let sd: Vec<f64> = cols.iter().map(|&j| mom.pooled_cross(j, j).sqrt()).collect();
    let mut r = vec![0.0; q * q];
    for a in 0..q {
        for b in 0..q {
            r[a * q + b] = mom.pooled_cross(cols[a], cols[b]) / (sd[a] * sd[b]);
        }
    }
    let rxy: Vec<f64> = (0..q).map(|a| mom.pooled_cross(cols[a], d) / (sd[a] * syy.sqrt())).collect();
    let lambda_max = rxy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if lambda_max == 0.0 {
        return Ok(VarSet::new());
    }

    let mut beta = vec![0.0; q];
    // grad = rxy - R beta
    let mut grad = rxy.clone();
    let objective = |beta: &[f64], grad: &[f64], lambda: f64| {
        // 0.5 (1 - 2 r'b + b'Rb) = 0.5 (1 - r'b - b'(r - Rb))
        let rb: f64 = rxy.iter().zip(beta).map(|(a, b)| a * b).sum();
        let bg: f64 = beta.iter().zip(grad).map(|(a, b)| a * b).sum();
        0.5 * (1.0 - rb - bg) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    };
    let mut previous: Vec<usize> = Vec::new();
    for step in 0..LASSO_GRID {
        let lambda = lambda_max * LASSO_RATIO.powf(step as f64 / (LASSO_GRID - 1) as f64);
        let mut obj = objective(&beta, &grad, lambda);
        for _ in 0..LASSO_MAX_SWEEPS {
            for j in 0..q {
                let z = grad[j] + beta[j];
                let new = z.signum() * (z.abs() - lambda).max(0.0);
                let delta = new - beta[j];
                if delta != 0.0 {
                    beta[j] = new;
                    for (g, rij) in grad.iter_mut().zip(&r[j * q..(j + 1) * q]) {
                        *g -= rij * delta;
                    }
                }
            }
            let next = objective(&beta, &grad, lambda);
            let done = obj - next < LASSO_TOL;
            obj = next;
            if done {
                break;
            }
        }
        let active: Vec<usize> = (0..q).filter(|&j| beta[j] != 0.0).collect();
        if active.len() > k {
            break;
        }
        previous = active;
    }
    Ok(to_set(&previous))
}
