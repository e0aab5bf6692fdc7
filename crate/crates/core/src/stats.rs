//! Residual-based invariance tests and the decision rules built on them.
//!
//! The default test regresses `Y` on `X_S` (with intercept) over the pooled
//! data, splits the residuals by environment, and compares their means with a
//! Welch t-test and their variances with a two-sided F-test. The two p-values
//! are Bonferroni-combined: `p = min(1, 2 min(p_mean, p_var))`.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::dag::Dag;
use crate::dsep::DSeparation;
use crate::error::{arg, Error, Result};
use crate::scm::Dataset;
use crate::varset::VarSet;

/// Anything that yields a p-value for `H_0: S is invariant`.
pub trait InvarianceTest {
    /// Number of predictors.
    fn d(&self) -> usize;

    fn p_value(&self, s: &VarSet) -> Result<f64>;
}

impl<T: InvarianceTest + ?Sized> InvarianceTest for &T {
    fn d(&self) -> usize {
        (**self).d()
    }

    fn p_value(&self, s: &VarSet) -> Result<f64> {
        (**self).p_value(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanTest {
    /// Unequal variances, Welch-Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Equal variances, `n - 2` degrees of freedom.
    Pooled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// `min(1, 2 min(p_mean, p_var))`.
    #[default]
    Bonferroni,
    /// Fisher's `-2 Σ log p` against chi-squared with 4 degrees of freedom.
    Fisher,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOptions {
    #[serde(default)]
    pub mean_test: MeanTest,
    #[serde(default)]
    pub combiner: Combiner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceTestResult {
    pub p_value: f64,
    pub mean_test_p: f64,
    pub variance_test_p: f64,
    /// Degrees of freedom of the t statistic (fractional under Welch).
    pub t_dof: f64,
    /// Numerator and denominator degrees of freedom of the F statistic.
    pub f_dof: (usize, usize),
}

/// Two-sided tail of Student's t.
pub fn t_two_sided(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(dof / 2.0, 0.5, dof / (dof + t * t))
}

/// `2 min(cdf, sf)` of the F distribution.
pub fn f_two_sided(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f.is_infinite() || f == 0.0 {
        return 0.0;
    }
    // both tails from their own argument, so neither loses precision to 1 - x
    let denom = d1 * f + d2;
    let cdf = beta_reg(d1 / 2.0, d2 / 2.0, d1 * f / denom);
    let sf = beta_reg(d2 / 2.0, d1 / 2.0, d2 / denom);
    (2.0 * cdf.min(sf)).min(1.0)
}

/// Regression of `Y` on `X_S` from pooled moments; returns `(b, intercept)`.
fn pooled_ols(data: &Dataset, cols: &[usize], s: &VarSet) -> Result<(Vec<f64>, f64)> {
    let m = data.moments();
    let q = cols.len();
    let y = data.d();
    let mut a = vec![0.0; q * q];
    let mut rhs = vec![0.0; q];
    for i in 0..q {
        for j in 0..=i {
            a[i * q + j] = m.pooled_cross(cols[i], cols[j]);
        }
        rhs[i] = m.pooled_cross(cols[i], y);
    }
    // Cholesky in place (lower triangle)
    for j in 0..q {
        let diag0 = a[j * q + j];
        let mut v = diag0;
        for k in 0..j {
            v -= a[j * q + k] * a[j * q + k];
        }
        if !(v > 1e-10 * diag0) || diag0 <= 0.0 {
            return Err(Error::Numerical {
                set: s.clone(),
                reason: "design matrix is singular".into(),
            });
        }
        let l = v.sqrt();
        a[j * q + j] = l;
        for i in j + 1..q {
            let mut w = a[i * q + j];
            for k in 0..j {
                w -= a[i * q + k] * a[j * q + k];
            }
            a[i * q + j] = w / l;
        }
    }
    let mut z = rhs;
    for i in 0..q {
        for k in 0..i {
            z[i] -= a[i * q + k] * z[k];
        }
        z[i] /= a[i * q + i];
    }
    for i in (0..q).rev() {
        for k in i + 1..q {
            z[i] -= a[k * q + i] * z[k];
        }
        z[i] /= a[i * q + i];
    }
    let intercept = m.pooled_mean(y) - cols.iter().zip(&z).map(|(&c, b)| m.pooled_mean(c) * b).sum::<f64>();
    Ok((z, intercept))
}

/// Residual invariance test of `S` with the default options.
pub fn invariance_p_value(data: &Dataset, s: &VarSet) -> Result<InvarianceTestResult> {
    invariance_test(data, s, &TestOptions::default())
}

pub fn invariance_test(data: &Dataset, s: &VarSet, opts: &TestOptions) -> Result<InvarianceTestResult> {
    let d = data.d();
    if s.last().is_some_and(|k| k > d) {
        return arg(format!("set {s} has indices beyond d = {d}"));
    }
    let m = data.moments();
    let n = [m.count(0), m.count(1)];
    if n[0] == 0 || n[1] == 0 {
        return arg("invariance test needs data from both environments");
    }
    if n[0] < 2 || n[1] < 2 {
        return arg("each environment needs at least two samples");
    }
    if data.n() <= s.len() + 1 {
        return arg(format!("{} samples cannot fit {} regressors and an intercept", data.n(), s.len()));
    }
    let cols: Vec<usize> = s.iter().map(|k| k - 1).collect();
    let (b, intercept) = pooled_ols(data, &cols, s)?;
    let y = d;

    let mut mean = [0.0; 2];
    let mut var = [0.0; 2];
    for e in 0..2 {
        mean[e] = m.mean(e, y) - intercept - cols.iter().zip(&b).map(|(&c, bc)| m.mean(e, c) * bc).sum::<f64>();
        // residual sum of squares within e: v' C_e v with v = (-b, 1)
        let mut ss = m.cross(e, y, y);
        for (i, &ci) in cols.iter().enumerate() {
            ss -= 2.0 * b[i] * m.cross(e, ci, y);
            for (j, &cj) in cols.iter().enumerate() {
                ss += b[i] * b[j] * m.cross(e, ci, cj);
            }
        }
        var[e] = ss.max(0.0) / (n[e] - 1) as f64;
    }
    if var[0] == 0.0 && var[1] == 0.0 {
        return Err(Error::Numerical {
            set: s.clone(),
            reason: "residuals have zero variance in both environments".into(),
        });
    }
    let (n0, n1) = (n[0] as f64, n[1] as f64);
    let diff = mean[0] - mean[1];
    let (t, t_dof) = match opts.mean_test {
        MeanTest::Welch => {
            let (a0, a1) = (var[0] / n0, var[1] / n1);
            let dof = (a0 + a1).powi(2) / (a0 * a0 / (n0 - 1.0) + a1 * a1 / (n1 - 1.0));
            (diff / (a0 + a1).sqrt(), dof)
        }
        MeanTest::Pooled => {
            let dof = n0 + n1 - 2.0;
            let sp = ((n0 - 1.0) * var[0] + (n1 - 1.0) * var[1]) / dof;
            (diff / (sp * (1.0 / n0 + 1.0 / n1)).sqrt(), dof)
        }
    };
    let mean_p = t_two_sided(t, t_dof);
    let f = var[0] / var[1];
    let var_p = f_two_sided(f, n0 - 1.0, n1 - 1.0);
    let p = match opts.combiner {
        Combiner::Bonferroni => (2.0 * mean_p.min(var_p)).min(1.0),
        Combiner::Fisher => {
            // chi-squared(4) survival: exp(-x/2) (1 + x/2)
            let x = -2.0 * (mean_p.ln() + var_p.ln());
            ((-x / 2.0).exp() * (1.0 + x / 2.0)).min(1.0)
        }
    };
    if p.is_nan() {
        return Err(Error::Numerical {
            set: s.clone(),
            reason: "p-value is NaN".into(),
        });
    }
    Ok(InvarianceTestResult {
        p_value: p,
        mean_test_p: mean_p,
        variance_test_p: var_p,
        t_dof,
        f_dof: (n[0] - 1, n[1] - 1),
    })
}

/// The residual test bound to a dataset and options.
#[derive(Clone, Copy, Debug)]
pub struct ResidualTest<'a> {
    pub data: &'a Dataset,
    pub options: TestOptions,
}

impl<'a> ResidualTest<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        ResidualTest {
            data,
            options: TestOptions::default(),
        }
    }

    pub fn with_options(data: &'a Dataset, options: TestOptions) -> Self {
        ResidualTest { data, options }
    }
}

impl InvarianceTest for ResidualTest<'_> {
    fn d(&self) -> usize {
        self.data.d()
    }

    fn p_value(&self, s: &VarSet) -> Result<f64> {
        Ok(invariance_test(self.data, s, &self.options)?.p_value)
    }
}

impl InvarianceTest for Dataset {
    fn d(&self) -> usize {
        Dataset::d(self)
    }

    fn p_value(&self, s: &VarSet) -> Result<f64> {
        Ok(invariance_p_value(self, s)?.p_value)
    }
}

/// A perfect test read off the graph: p = 1 for invariant sets, 0 otherwise.
pub struct GraphOracleTest<'g> {
    ds: RefCell<DSeparation<'g>>,
}

impl<'g> GraphOracleTest<'g> {
    pub fn new(dag: &'g Dag) -> Self {
        GraphOracleTest {
            ds: RefCell::new(DSeparation::new(dag)),
        }
    }
}

impl InvarianceTest for GraphOracleTest<'_> {
    fn d(&self) -> usize {
        self.ds.borrow().dag().d()
    }

    fn p_value(&self, s: &VarSet) -> Result<f64> {
        let mut ds = self.ds.borrow_mut();
        ds.dag().check_varset(s)?;
        Ok(if ds.invariant(s) { 1.0 } else { 0.0 })
    }
}

/// Memoizes successful p-values of another test.
pub struct CachedTest<T> {
    inner: T,
    cache: RefCell<HashMap<VarSet, f64>>,
}

impl<T: InvarianceTest> CachedTest<T> {
    pub fn new(inner: T) -> Self {
        CachedTest {
            inner,
            cache: RefCell::new(HashMap::new()),
        }
    }

    /// Distinct sets evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.cache.borrow().len()
    }
}

impl<T: InvarianceTest> InvarianceTest for CachedTest<T> {
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn p_value(&self, s: &VarSet) -> Result<f64> {
        if let Some(&p) = self.cache.borrow().get(s) {
            return Ok(p);
        }
        let p = self.inner.p_value(s)?;
        self.cache.borrow_mut().insert(s.clone(), p);
        Ok(p)
    }
}

/// `φ(S) = 1` (reject invariance) iff `p < level`.
pub fn phi<T: InvarianceTest + ?Sized>(test: &T, s: &VarSet, level: f64) -> Result<bool> {
    Ok(test.p_value(s)? < level)
}

/// Rejects minimal invariance of `S`: `φ(S) = 1`, or some `S \ {j}` is not rejected.
/// For `S = ∅` this is `φ(∅)`.
pub fn phi_mi<T: InvarianceTest + ?Sized>(test: &T, s: &VarSet, level: f64) -> Result<bool> {
    if phi(test, s, level)? {
        return Ok(true);
    }
    for j in s.iter() {
        if !phi(test, &s.without(j), level)? {
            return Ok(true);
        }
    }
    Ok(false)
}
