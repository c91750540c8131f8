//! Least-squares conditional expectations on polynomial path features.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::DiscretePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// X(s), all components.
    State,
    /// ∫₀^s X, left-Riemann.
    Integral,
    RunningMax,
    RunningMin,
    Time,
}

/// Polynomial features of the realized path prefix, with ridge weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionBasis {
    pub features: Vec<Feature>,
    pub degree: u32,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_ridge() -> f64 {
    1e-8
}

impl Default for RegressionBasis {
    fn default() -> Self {
        RegressionBasis { features: vec![Feature::State, Feature::Integral], degree: 3, ridge: 1e-8 }
    }
}

impl RegressionBasis {
    pub fn new(features: Vec<Feature>, degree: u32) -> Result<Self> {
        let b = RegressionBasis { features, degree, ridge: default_ridge() };
        b.validate()?;
        Ok(b)
    }

    pub fn state(degree: u32) -> Self {
        RegressionBasis { features: vec![Feature::State], degree, ridge: default_ridge() }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("regression basis needs at least one feature".into()));
        }
        if !(1..=3).contains(&self.degree) {
            return Err(Error::Config(format!("regression degree {} must be 1, 2 or 3", self.degree)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config(format!("ridge weight {} must be nonnegative", self.ridge)));
        }
        Ok(())
    }

    /// Raw feature values at every node of `p` from `from` on.
    pub fn raw_table(&self, p: &DiscretePath, from: usize) -> Vec<Vec<f64>> {
        let d = p.dim();
        let h = p.step();
        let mut integral = vec![0.0; d];
        let mut hi = p.node(0).to_vec();
        let mut lo = p.node(0).to_vec();
        let mut out = Vec::with_capacity(p.node_count().saturating_sub(from));
        for k in 0..p.node_count() {
            let x = p.node(k);
            if k > 0 {
                let prev = p.node(k - 1);
                for j in 0..d {
                    integral[j] += h * prev[j];
                    hi[j] = hi[j].max(x[j]);
                    lo[j] = lo[j].min(x[j]);
                }
            }
            if k >= from {
                let mut row = Vec::new();
                for f in &self.features {
                    match f {
                        Feature::State => row.extend_from_slice(x),
                        Feature::Integral => row.extend_from_slice(&integral),
                        Feature::RunningMax => row.extend_from_slice(&hi),
                        Feature::RunningMin => row.extend_from_slice(&lo),
                        Feature::Time => row.push(p.time_of(k)),
                    }
                }
                out.push(row);
            }
        }
        out
    }
}

/// Exponent vectors of all monomials of total degree 1..=`degree` in `r` variables.
fn monomials(r: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(r: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == r {
            if cur.iter().sum::<u32>() > 0 {
                out.push(cur.clone());
            }
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(r, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(r, degree, &mut Vec::new(), &mut out);
    out.sort_by_key(|m| m.iter().sum::<u32>());
    out
}

/// Standardization and centred monomial expansion learned from one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kept: Vec<(usize, f64, f64)>,
    monos: Vec<Vec<u32>>,
    col_means: Vec<f64>,
}

impl FeatureMap {
    fn uncentred(&self, row: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self.kept.iter().map(|&(j, mu, sd)| (row[j] - mu) / sd).collect();
        self.monos
            .iter()
            .map(|mono| mono.iter().zip(&z).map(|(&e, &v)| v.powi(e as i32)).product())
            .collect()
    }

    /// Centred design row for raw features `row`.
    pub fn expand(&self, row: &[f64]) -> Vec<f64> {
        self.uncentred(row).iter().zip(&self.col_means).map(|(v, m)| v - m).collect()
    }

    pub fn columns(&self) -> usize {
        self.monos.len()
    }
}

/// A fitted projection onto the span of the centred polynomial features of
/// one time step; reusable for any number of targets.
#[derive(Debug, Clone)]
pub struct Projection {
    map: std::sync::Arc<FeatureMap>,
    design: DMatrix<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    pub condition: f64,
    pub columns: usize,
}

/// y ≈ mean + expand(row)·β.
#[derive(Debug, Clone)]
pub struct LinearModel {
    map: std::sync::Arc<FeatureMap>,
    mean: f64,
    beta: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        if self.beta.is_empty() {
            return self.mean;
        }
        self.mean + self.map.expand(row).iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn constant(mean: f64) -> Self {
        LinearModel {
            map: std::sync::Arc::new(FeatureMap { kept: vec![], monos: vec![], col_means: vec![] }),
            mean,
            beta: vec![],
        }
    }
}

pub const CONDITION_LIMIT: f64 = 1e12;

impl Projection {
    /// `rows[i]` holds the raw features of sample i.
    pub fn fit(rows: &[Vec<f64>], basis: &RegressionBasis, step: usize) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Empty("regression sample".into()));
        }
        let r = rows[0].len();
        // standardize, dropping features that do not vary across samples
        let mut kept = Vec::new();
        for j in 0..r {
            let col: Vec<f64> = rows.iter().map(|row| row[j]).collect();
            let mean = crate::stats::mean(&col);
            let sd = crate::stats::variance(&col, mean).sqrt();
            if sd > 1e-12 * (1.0 + mean.abs()) {
                kept.push((j, mean, sd));
            }
        }
        let monos = if kept.is_empty() { vec![] } else { monomials(kept.len(), basis.degree) };
        let mut map = FeatureMap { kept, monos, col_means: vec![] };
        let p = map.columns();
        if p == 0 {
            return Ok(Projection {
                map: std::sync::Arc::new(map),
                design: DMatrix::zeros(m, 0),
                chol: None,
                condition: 1.0,
                columns: 0,
            });
        }
        let mut design = DMatrix::zeros(m, p);
        for (i, row) in rows.iter().enumerate() {
            for (c, v) in map.uncentred(row).into_iter().enumerate() {
                design[(i, c)] = v;
            }
        }
        for c in 0..p {
            let col: Vec<f64> = design.column(c).iter().copied().collect();
            let mu = crate::stats::mean(&col);
            design.column_mut(c).add_scalar_mut(-mu);
            map.col_means.push(mu);
        }
        let mut gram = design.transpose() * &design / m as f64;
        for c in 0..p {
            gram[(c, c)] += basis.ridge;
        }
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::SingularRegression { step, condition });
        }
        let chol = gram.cholesky().ok_or(Error::SingularRegression { step, condition })?;
        Ok(Projection { map: std::sync::Arc::new(map), design, chol: Some(chol), condition, columns: p })
    }

    /// Least-squares model for target `y`.
    pub fn solve(&self, y: &[f64]) -> LinearModel {
        let m = y.len();
        let mean = crate::stats::mean(y);
        let beta = match &self.chol {
            None => vec![],
            Some(chol) => {
                let yc = DVector::from_iterator(m, y.iter().map(|v| v - mean));
                let rhs = self.design.transpose() * yc / m as f64;
                chol.solve(&rhs).iter().copied().collect()
            }
        };
        LinearModel { map: self.map.clone(), mean, beta }
    }

    /// Fitted conditional expectation of `y` at every sample.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        let model = self.solve(y);
        if model.beta.is_empty() {
            return vec![model.mean; y.len()];
        }
        let fit = &self.design * DVector::from_column_slice(&model.beta);
        fit.iter().map(|v| model.mean + v).collect()
    }
}
