//! Linear Gaussian SCMs with do-interventions keyed to the environment.

use std::io::{Read, Write};
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dag::{Dag, EnvMode};
use crate::error::{arg, Error, Result};
use crate::rng::RngState;
use crate::varset::VarSet;

/// Law of the edge coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientLaw {
    /// Uniform on `(-hi, -lo) ∪ (lo, hi)`.
    SymmetricBand { lo: f64, hi: f64 },
    /// Uniform on `(lo, hi)`.
    Interval { lo: f64, hi: f64 },
}

impl Default for CoefficientLaw {
    fn default() -> Self {
        CoefficientLaw::SymmetricBand { lo: 0.5, hi: 2.0 }
    }
}

impl CoefficientLaw {
    pub fn sample(&self, rng: &mut RngState) -> f64 {
        match *self {
            CoefficientLaw::SymmetricBand { lo, hi } => {
                let mag = rng.random_range(lo..hi);
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            }
            CoefficientLaw::Interval { lo, hi } => rng.random_range(lo..hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = match *self {
            CoefficientLaw::SymmetricBand { lo, .. } if lo < 0.0 => return arg(format!("band lower edge {lo} < 0")),
            CoefficientLaw::SymmetricBand { lo, hi } | CoefficientLaw::Interval { lo, hi } => (lo, hi),
        };
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return arg(format!("empty coefficient range ({lo}, {hi})"));
        }
        Ok(())
    }
}

/// A linear SCM over a [`Dag`]. `E ~ Bernoulli(env_probability)`; in the
/// `E = 1` environment every child of `E` is set to `intervention_strength`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearScm {
    dag: Dag,
    // per node, coefficients aligned with `dag.parents(v)`; the entry for E is 0 and unused
    weights: Vec<Vec<f64>>,
    targets: VarSet,
    strength: f64,
    env_probability: f64,
}

impl LinearScm {
    /// `coefficients` lists `(parent, child, beta)` for every edge not leaving `E`.
    pub fn new(dag: Dag, coefficients: &[(usize, usize, f64)], strength: f64, env_probability: f64) -> Result<Self> {
        if dag.mode() != EnvMode::Exogenous {
            return arg("SCM simulation needs an exogenous environment");
        }
        if !(env_probability > 0.0 && env_probability < 1.0) {
            return arg(format!("environment probability {env_probability} outside (0, 1)"));
        }
        if !strength.is_finite() {
            return arg("intervention strength must be finite");
        }
        let mut weights: Vec<Vec<f64>> = (0..dag.node_count()).map(|v| vec![f64::NAN; dag.parents(v).len()]).collect();
        for &(p, c, beta) in coefficients {
            if p == 0 {
                return arg("edges out of E carry no coefficient");
            }
            let Some(slot) = (c < dag.node_count()).then(|| dag.parents(c).iter().position(|&q| q == p)).flatten() else {
                return arg(format!("coefficient for missing edge {p} -> {c}"));
            };
            if !beta.is_finite() {
                return arg(format!("coefficient for {p} -> {c} is not finite"));
            }
            weights[c][slot] = beta;
        }
        for (p, c) in dag.edges() {
            let slot = dag.parents(c).iter().position(|&q| q == p).expect("edge listed");
            if p == 0 {
                weights[c][slot] = 0.0;
            } else if weights[c][slot].is_nan() {
                return arg(format!("no coefficient for edge {p} -> {c}"));
            }
        }
        let targets = dag.children(0).iter().copied().collect::<crate::varset::NodeSet>().predictors(dag.d());
        Ok(LinearScm {
            dag,
            weights,
            targets,
            strength,
            env_probability,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn d(&self) -> usize {
        self.dag.d()
    }

    /// Children of `E`, the nodes set by the intervention.
    pub fn intervention_targets(&self) -> &VarSet {
        &self.targets
    }

    pub fn intervention_strength(&self) -> f64 {
        self.strength
    }

    pub fn env_probability(&self) -> f64 {
        self.env_probability
    }

    /// `(parent, child, beta)` for every edge not leaving `E`, sorted.
    pub fn coefficients(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<_> = self
            .dag
            .edges()
            .filter(|&(p, _)| p != 0)
            .map(|(p, c)| (p, c, self.coefficient(p, c).expect("edge listed")))
            .collect();
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }

    pub fn coefficient(&self, parent: usize, child: usize) -> Option<f64> {
        if parent == 0 || child >= self.dag.node_count() {
            return None;
        }
        let slot = self.dag.parents(child).iter().position(|&q| q == parent)?;
        Some(self.weights[child][slot])
    }

    /// Same graph and coefficients, different intervention strength.
    pub fn with_strength(&self, strength: f64) -> LinearScm {
        LinearScm {
            strength,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScmRepr::from(self)).expect("SCM serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ScmRepr = serde_json::from_str(text)?;
        repr.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct ScmRepr {
    dag: Dag,
    coefficients: Vec<EdgeWeight>,
    intervention_targets: VarSet,
    intervention_strength: f64,
    env_probability: f64,
}

#[derive(Serialize, Deserialize)]
struct EdgeWeight {
    from: String,
    to: String,
    beta: f64,
}

impl From<&LinearScm> for ScmRepr {
    fn from(scm: &LinearScm) -> Self {
        let d = scm.d();
        ScmRepr {
            dag: scm.dag.clone(),
            coefficients: scm
                .coefficients()
                .into_iter()
                .map(|(p, c, beta)| EdgeWeight {
                    from: crate::dag::name(d, p),
                    to: crate::dag::name(d, c),
                    beta,
                })
                .collect(),
            intervention_targets: scm.targets.clone(),
            intervention_strength: scm.strength,
            env_probability: scm.env_probability,
        }
    }
}

impl TryFrom<ScmRepr> for LinearScm {
    type Error = Error;

    fn try_from(repr: ScmRepr) -> Result<Self> {
        let d = repr.dag.d();
        let node = |s: &str| -> Result<usize> { Ok(s.parse::<crate::dag::Role>().map_err(Error::Argument)?.node(d)?.0) };
        let coefs = repr
            .coefficients
            .iter()
            .map(|w| Ok((node(&w.from)?, node(&w.to)?, w.beta)))
            .collect::<Result<Vec<_>>>()?;
        let scm = LinearScm::new(repr.dag, &coefs, repr.intervention_strength, repr.env_probability)?;
        if scm.targets != repr.intervention_targets {
            return arg("intervention targets must equal the children of E");
        }
        Ok(scm)
    }
}

/// Draws one coefficient per edge not leaving `E`, in sorted edge order.
pub fn sample_scm(dag: &Dag, strength: f64, rng: &mut RngState) -> Result<LinearScm> {
    sample_scm_with(dag, strength, &CoefficientLaw::default(), 0.5, rng)
}

pub fn sample_scm_with(
    dag: &Dag,
    strength: f64,
    law: &CoefficientLaw,
    env_probability: f64,
    rng: &mut RngState,
) -> Result<LinearScm> {
    law.validate()?;
    let mut edges: Vec<(usize, usize)> = dag.edges().filter(|&(p, _)| p != 0).collect();
    edges.sort_unstable();
    let coefs: Vec<_> = edges.into_iter().map(|(p, c)| (p, c, law.sample(rng))).collect();
    LinearScm::new(dag.clone(), &coefs, strength, env_probability)
}

/// Draws `n` i.i.d. rows.
///
/// Nodes are generated in causal order. Each node is divided by its own
/// empirical standard deviation (over both environments) before its children
/// are generated; an intervened node is standardized first and then set to
/// the intervention strength in the `E = 1` rows.
pub fn simulate(scm: &LinearScm, n: usize, rng: &mut RngState) -> Result<Dataset> {
    if n < 2 {
        return arg(format!("need at least 2 samples to standardize, got {n}"));
    }
    let dag = &scm.dag;
    let d = dag.d();
    let env: Vec<bool> = (0..n).map(|_| rng.random_bool(scm.env_probability)).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); dag.node_count()];
    for &v in dag.topological_order() {
        if v == 0 {
            continue;
        }
        let mut col: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for (&p, &beta) in dag.parents(v).iter().zip(&scm.weights[v]) {
            if p == 0 {
                continue;
            }
            for (x, &pv) in col.iter_mut().zip(&cols[p]) {
                *x += beta * pv;
            }
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
        for x in &mut col {
            *x /= sd;
        }
        if v <= d && scm.targets.contains(v) {
            for (x, &e) in col.iter_mut().zip(&env) {
                if e {
                    *x = scm.strength;
                }
            }
        }
        cols[v] = col;
    }
    let y = std::mem::take(&mut cols[d + 1]);
    let x: Vec<Vec<f64>> = cols.drain(1..=d).collect();
    Dataset::new(env, x, y)
}

/// Per-environment sample moments of `(X_1, .., X_d, Y)`.
#[derive(Clone, Debug)]
pub struct Moments {
    k: usize,
    n: [usize; 2],
    mean: [Vec<f64>; 2],
    // centered cross-products, k x k row-major
    cp: [Vec<f64>; 2],
}

impl Moments {
    fn compute(data: &Dataset) -> Moments {
        let k = data.d() + 1;
        let mut n = [0usize; 2];
        for &e in &data.env {
            n[e as usize] += 1;
        }
        let column = |j: usize| -> &[f64] {
            if j < data.d() {
                &data.x[j]
            } else {
                &data.y
            }
        };
        let mut mean = [vec![0.0; k], vec![0.0; k]];
        let mut cp = [vec![0.0; k * k], vec![0.0; k * k]];
        for e in 0..2 {
            if n[e] == 0 {
                continue;
            }
            let centered: Vec<Vec<f64>> = (0..k)
                .map(|j| {
                    let vals: Vec<f64> = column(j)
                        .iter()
                        .zip(&data.env)
                        .filter(|(_, &env)| env as usize == e)
                        .map(|(&v, _)| v)
                        .collect();
                    let m = vals.iter().sum::<f64>() / n[e] as f64;
                    mean[e][j] = m;
                    vals.into_iter().map(|v| v - m).collect()
                })
                .collect();
            for i in 0..k {
                for j in i..k {
                    let s: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                    cp[e][i * k + j] = s;
                    cp[e][j * k + i] = s;
                }
            }
        }
        Moments { k, n, mean, cp }
    }

    /// Number of variables, `d + 1`; column `d` is `Y`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, env: usize) -> usize {
        self.n[env]
    }

    pub fn mean(&self, env: usize, j: usize) -> f64 {
        self.mean[env][j]
    }

    /// `Σ (a_i - mean_a)(b_i - mean_b)` over the rows of one environment.
    pub fn cross(&self, env: usize, a: usize, b: usize) -> f64 {
        self.cp[env][a * self.k + b]
    }

    pub fn pooled_mean(&self, j: usize) -> f64 {
        let n = (self.n[0] + self.n[1]) as f64;
        (self.n[0] as f64 * self.mean[0][j] + self.n[1] as f64 * self.mean[1][j]) / n
    }

    /// Centered cross-product over all rows.
    pub fn pooled_cross(&self, a: usize, b: usize) -> f64 {
        let (ma, mb) = (self.pooled_mean(a), self.pooled_mean(b));
        (0..2)
            .map(|e| self.cross(e, a, b) + self.n[e] as f64 * (self.mean[e][a] - ma) * (self.mean[e][b] - mb))
            .sum()
    }
}

/// `n` samples of `(E, X_1, .., X_d, Y)` with binary `E`.
#[derive(Debug)]
pub struct Dataset {
    env: Vec<bool>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    moments: OnceLock<Moments>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset {
            env: self.env.clone(),
            x: self.x.clone(),
            y: self.y.clone(),
            moments: OnceLock::new(),
        }
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.env == other.env && self.x == other.x && self.y == other.y
    }
}

impl Dataset {
    /// `x` holds one column per predictor.
    pub fn new(env: Vec<bool>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if env.len() != n || x.iter().any(|c| c.len() != n) {
            return arg("columns differ in length");
        }
        if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
            return arg("dataset contains missing or non-finite values");
        }
        Ok(Dataset {
            env,
            x,
            y,
            moments: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.len()
    }

    pub fn env(&self) -> &[bool] {
        &self.env
    }

    /// Column of predictor `k` (1-based).
    pub fn x(&self, k: usize) -> &[f64] {
        &self.x[k - 1]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Sample moments, computed on first use.
    pub fn moments(&self) -> &Moments {
        self.moments.get_or_init(|| Moments::compute(self))
    }

    /// Same data with environment labels replaced.
    pub fn with_env(&self, env: Vec<bool>) -> Result<Dataset> {
        Dataset::new(env, self.x.clone(), self.y.clone())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["E".to_string()];
        header.extend((1..=self.d()).map(|k| format!("X{k}")));
        header.push("Y".into());
        out.write_record(&header)?;
        let mut row = Vec::with_capacity(self.d() + 2);
        for i in 0..self.n() {
            row.clear();
            row.push(if self.env[i] { "1".to_string() } else { "0".to_string() });
            row.extend(self.x.iter().map(|c| c[i].to_string()));
            row.push(self.y[i].to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a CSV with header `E,X1,..,Xd,Y`.
    pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        let d = names.len().checked_sub(2).ok_or_else(|| Error::Parse {
            line: 1,
            msg: "need at least columns E and Y".into(),
        })?;
        let expected: Vec<String> = std::iter::once("E".to_string())
            .chain((1..=d).map(|k| format!("X{k}")))
            .chain(std::iter::once("Y".to_string()))
            .collect();
        if names != expected {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {}", expected.join(",")),
            });
        }
        let mut env = Vec::new();
        let mut x = vec![Vec::new(); d];
        let mut y = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let num = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    msg: format!("{s:?}: {e}"),
                })
            };
            env.push(match rec[0].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("environment must be 0 or 1, got {other:?}"),
                    })
                }
            });
            for (k, col) in x.iter_mut().enumerate() {
                col.push(num(&rec[k + 1])?);
            }
            y.push(num(&rec[d + 1])?);
        }
        Dataset::new(env, x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain, diamond_with_collider};
    use crate::rng::Seed;

    #[test]
    fn chain_coefficient_support() {
        let scm = sample_scm(&chain(1), 1.0, &mut Seed(1).rng()).unwrap();
        let coefs = scm.coefficients();
        assert_eq!(coefs.len(), 1);
        assert_eq!((coefs[0].0, coefs[0].1), (1, 2));
        let b = coefs[0].2.abs();
        assert!(b > 0.5 && b < 2.0);
    }

    #[test]
    fn coefficient_signs_are_balanced() {
        let law = CoefficientLaw::default();
        let mut rng = Seed(7).rng();
        let draws: Vec<f64> = (0..10_000).map(|_| law.sample(&mut rng)).collect();
        let neg = draws.iter().filter(|b| **b < 0.0).count() as f64 / 1e4;
        assert!((neg - 0.5).abs() < 0.02, "{neg}");
        assert!(draws.iter().all(|b| b.abs() > 0.5 && b.abs() < 2.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = diamond_with_collider();
        let a = sample_scm(&g, 1.0, &mut Seed(3).rng()).unwrap();
        let b = sample_scm(&g, 1.0, &mut Seed(3).rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(simulate(&a, 50, &mut Seed(4).rng()).unwrap(), simulate(&b, 50, &mut Seed(4).rng()).unwrap());
    }

    #[test]
    fn intervened_rows_are_constant() {
        let g = diamond_with_collider();
        let scm = sample_scm(&g, 1.0, &mut Seed(5).rng()).unwrap();
        let data = simulate(&scm, 500, &mut Seed(6).rng()).unwrap();
        for k in [1, 2] {
            for (v, &e) in data.x(k).iter().zip(data.env()) {
                if e {
                    assert_eq!(*v, 1.0);
                }
            }
        }
    }

    #[test]
    fn root_column_has_unit_sd() {
        // a root that is not intervened is standardized and never touched again
        let g = Dag::from_roles(
            2,
            &[
                (crate::Role::Env, crate::Role::Predictor(1)),
                (crate::Role::Predictor(1), crate::Role::Response),
                (crate::Role::Predictor(2), crate::Role::Response),
            ],
            EnvMode::Exogenous,
        )
        .unwrap();
        let scm = sample_scm(&g, 1.0, &mut Seed(8).rng()).unwrap();
        let data = simulate(&scm, 1000, &mut Seed(9).rng()).unwrap();
        let c = data.x(2);
        let m = c.iter().sum::<f64>() / 1000.0;
        let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 1000.0).sqrt();
        assert!((sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let scm = sample_scm(&chain(1), 1.0, &mut Seed(1).rng()).unwrap();
        assert!(matches!(simulate(&scm, 1, &mut Seed(2).rng()), Err(Error::Argument(_))));
    }

    #[test]
    fn nonexogenous_graphs_are_rejected() {
        let g = Dag::from_roles(
            1,
            &[(crate::Role::Predictor(1), crate::Role::Env), (crate::Role::Env, crate::Role::Response)],
            EnvMode::Nonexogenous,
        )
        .unwrap();
        assert!(sample_scm(&g, 1.0, &mut Seed(1).rng()).is_err());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let scm = sample_scm(&diamond_with_collider(), 0.5, &mut Seed(10).rng()).unwrap();
        let back = LinearScm::from_json(&scm.to_json()).unwrap();
        assert_eq!(back, scm);
        let data = simulate(&scm, 20, &mut Seed(11).rng()).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"E,X1,X2,X3,X4,Y\n"));
        assert_eq!(Dataset::read_csv(&buf[..]).unwrap(), data);
    }

    #[test]
    fn csv_header_is_checked() {
        assert!(Dataset::read_csv(&b"E,X2,Y\n0,1,2\n"[..]).is_err());
        assert!(Dataset::read_csv(&b"E,X1,Y\n2,1,2\n"[..]).is_err());
    }

    #[test]
    fn moments_match_direct_computation() {
        let scm = sample_scm(&diamond_with_collider(), 1.0, &mut Seed(12).rng()).unwrap();
        let data = simulate(&scm, 300, &mut Seed(13).rng()).unwrap();
        let m = data.moments();
        let y = data.y();
        let x3 = data.x(3);
        let n = y.len() as f64;
        let my = y.iter().sum::<f64>() / n;
        let mx = x3.iter().sum::<f64>() / n;
        let direct: f64 = y.iter().zip(x3).map(|(a, b)| (a - my) * (b - mx)).sum();
        assert!((m.pooled_cross(4, 2) - direct).abs() < 1e-9 * direct.abs().max(1.0));
        assert_eq!(m.count(0) + m.count(1), 300);
    }
}
