//! Dupire derivatives of path functionals by finite differences, the class-𝒢
//! time derivative, and the functional Itô residual along simulated paths.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{grid_steps, DiscretePath};
use crate::rng::{self, keyed, Domain};
use crate::sde::{CoefficientSet, ControlSet, TrajectoryBatch};
use crate::stats::Summary;

pub type PathFn = Arc<dyn Fn(&DiscretePath) -> f64 + Send + Sync>;
pub type PathVecFn = Arc<dyn Fn(&DiscretePath) -> Vec<f64> + Send + Sync>;
pub type PathMatFn = Arc<dyn Fn(&DiscretePath) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Central,
    Forward,
}

/// Step sizes for the finite-difference Dupire derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FDConfig {
    pub h_vertical: f64,
    /// Horizontal extension; `None` means one grid step of the path.
    pub h_horizontal: Option<f64>,
    pub scheme: Scheme,
    /// Paths may not be extended past this time; at the horizon itself the
    /// time derivative is taken one-sided from the left.
    pub horizon: Option<f64>,
}

impl Default for FDConfig {
    fn default() -> Self {
        FDConfig { h_vertical: 1e-4, h_horizontal: None, scheme: Scheme::Central, horizon: None }
    }
}

impl FDConfig {
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn forward(mut self) -> Self {
        self.scheme = Scheme::Forward;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.h_vertical > 0.0 && self.h_vertical.is_finite()) {
            return Err(Error::OutOfRange(format!("vertical step {} must be positive", self.h_vertical)));
        }
        if let Some(h) = self.h_horizontal {
            if !(h > 0.0) {
                return Err(Error::OutOfRange(format!("horizontal step {h} must be positive")));
            }
        }
        Ok(())
    }

    fn horizontal_steps(&self, p: &DiscretePath) -> Result<usize> {
        match self.h_horizontal {
            None => Ok(1),
            Some(h) => grid_steps(h, p.step()),
        }
    }
}

/// Random probe paths used to validate analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    pub dim: usize,
    pub step: f64,
    pub max_nodes: usize,
    pub count: usize,
    pub seed: u64,
    pub fd: FDConfig,
}

impl ProbeSpec {
    pub fn new(dim: usize) -> Self {
        ProbeSpec { dim, step: 1e-6, max_nodes: 12, count: 10, seed: 0x5eed, fd: FDConfig::default() }
    }

    pub fn paths(&self) -> Vec<DiscretePath> {
        (0..self.count)
            .map(|i| {
                let mut rng = keyed(self.seed, Domain::Probe, i as u64, 7);
                let nodes = rng.random_range(2..=self.max_nodes.max(2));
                let mut p = DiscretePath::zeros(self.dim, self.step, 1).expect("valid grid");
                for _ in 1..nodes {
                    let v: Vec<f64> = rng::normals(&mut rng, self.dim);
                    p.push_node(&v).expect("finite");
                }
                p
            })
            .collect()
    }
}

/// A scalar functional of a path with optional analytic Dupire derivatives.
#[derive(Clone)]
pub struct FunctionalHandle {
    eval: PathFn,
    dt: Option<PathFn>,
    dx: Option<PathVecFn>,
    dxx: Option<PathMatFn>,
    growth_degree: u32,
}

impl std::fmt::Debug for FunctionalHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionalHandle")
            .field("analytic_dt", &self.dt.is_some())
            .field("analytic_dx", &self.dx.is_some())
            .field("analytic_dxx", &self.dxx.is_some())
            .field("growth_degree", &self.growth_degree)
            .finish()
    }
}

/// Analytic derivative callbacks; any may be omitted.
#[derive(Clone, Default)]
pub struct Derivatives {
    pub dt: Option<PathFn>,
    pub dx: Option<PathVecFn>,
    pub dxx: Option<PathMatFn>,
}

impl Derivatives {
    pub fn dt(mut self, f: impl Fn(&DiscretePath) -> f64 + Send + Sync + 'static) -> Self {
        self.dt = Some(Arc::new(f));
        self
    }

    pub fn dx(mut self, f: impl Fn(&DiscretePath) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.dx = Some(Arc::new(f));
        self
    }

    pub fn dxx(mut self, f: impl Fn(&DiscretePath) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.dxx = Some(Arc::new(f));
        self
    }
}

fn agrees(analytic: f64, fd: f64) -> bool {
    (analytic - fd).abs() <= 1e-6f64.max(1e-3 * analytic.abs())
}

impl FunctionalHandle {
    pub fn new(f: impl Fn(&DiscretePath) -> f64 + Send + Sync + 'static) -> Self {
        Self::from_fn(Arc::new(f))
    }

    pub fn from_fn(eval: PathFn) -> Self {
        FunctionalHandle { eval, dt: None, dx: None, dxx: None, growth_degree: 0 }
    }

    pub fn constant(c: f64) -> Self {
        FunctionalHandle::new(move |_| c).with_unchecked_derivatives(
            Derivatives::default()
                .dt(|_| 0.0)
                .dx(|p| vec![0.0; p.dim()])
                .dxx(|p| DMatrix::zeros(p.dim(), p.dim())),
        )
    }

    pub fn with_growth_degree(mut self, k: u32) -> Self {
        self.growth_degree = k;
        self
    }

    pub fn growth_degree(&self) -> u32 {
        self.growth_degree
    }

    /// Attaches analytic derivatives after checking them against finite
    /// differences on the probe paths.
    pub fn with_derivatives(self, d: Derivatives, probes: &ProbeSpec) -> Result<Self> {
        let h = self.with_unchecked_derivatives(d);
        h.check_derivatives(probes)?;
        Ok(h)
    }

    /// Attaches derivatives without the finite-difference check; for
    /// compositions of already-checked handles.
    pub fn with_unchecked_derivatives(mut self, d: Derivatives) -> Self {
        self.dt = d.dt;
        self.dx = d.dx;
        self.dxx = d.dxx;
        self
    }

    pub fn check_derivatives(&self, probes: &ProbeSpec) -> Result<()> {
        let fd = probes.fd;
        let plain = FunctionalHandle::from_fn(self.eval.clone());
        for (i, p) in probes.paths().iter().enumerate() {
            if let Some(dt) = &self.dt {
                let (a, n) = (dt(p), plain.time_derivative(p, &fd)?);
                if !agrees(a, n) {
                    return Err(Error::DerivativeMismatch(format!("probe {i}: time derivative {a} vs {n}")));
                }
            }
            if let Some(dx) = &self.dx {
                let (a, n) = (dx(p), plain.space_gradient(p, &fd)?);
                if a.len() != n.len() || a.iter().zip(&n).any(|(x, y)| !agrees(*x, *y)) {
                    return Err(Error::DerivativeMismatch(format!("probe {i}: gradient {a:?} vs {n:?}")));
                }
            }
            if let Some(dxx) = &self.dxx {
                let (a, n) = (dxx(p), plain.space_hessian(p, &fd)?);
                if a.shape() != n.shape() || a.iter().zip(n.iter()).any(|(x, y)| !agrees(*x, *y)) {
                    return Err(Error::DerivativeMismatch(format!("probe {i}: Hessian {a} vs {n}")));
                }
            }
        }
        Ok(())
    }

    pub fn has_analytic_derivatives(&self) -> (bool, bool, bool) {
        (self.dt.is_some(), self.dx.is_some(), self.dxx.is_some())
    }

    pub fn eval(&self, p: &DiscretePath) -> f64 {
        (self.eval)(p)
    }

    pub fn eval_fn(&self) -> PathFn {
        self.eval.clone()
    }

    pub fn try_eval(&self, p: &DiscretePath) -> Result<f64> {
        let v = self.eval(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("functional evaluation".into()))
        }
    }

    /// ∂_t, analytic when supplied.
    pub fn time_derivative(&self, p: &DiscretePath, cfg: &FDConfig) -> Result<f64> {
        match &self.dt {
            Some(dt) => finite(dt(p), "analytic time derivative"),
            None => horizontal_derivative(self, p, cfg),
        }
    }

    /// ∂_x, analytic when supplied.
    pub fn space_gradient(&self, p: &DiscretePath, cfg: &FDConfig) -> Result<Vec<f64>> {
        match &self.dx {
            Some(dx) => {
                let g = dx(p);
                if g.len() != p.dim() {
                    return Err(Error::DimensionMismatch { expected: p.dim(), found: g.len() });
                }
                Ok(g)
            }
            None => vertical_derivative(self, p, cfg),
        }
    }

    /// ∂_xx, analytic when supplied.
    pub fn space_hessian(&self, p: &DiscretePath, cfg: &FDConfig) -> Result<DMatrix<f64>> {
        match &self.dxx {
            Some(dxx) => {
                let m = dxx(p);
                if m.shape() != (p.dim(), p.dim()) {
                    return Err(Error::DimensionMismatch { expected: p.dim() * p.dim(), found: m.len() });
                }
                Ok(m)
            }
            None => second_vertical(self, p, cfg),
        }
    }

    /// `self + c`, keeping any analytic derivatives.
    pub fn shifted(&self, c: f64) -> Self {
        let e = self.eval.clone();
        FunctionalHandle { eval: Arc::new(move |p| e(p) + c), ..self.clone() }
    }

    /// `a · self`, keeping any analytic derivatives.
    pub fn scaled(&self, a: f64) -> Self {
        let e = self.eval.clone();
        FunctionalHandle {
            eval: Arc::new(move |p| a * e(p)),
            dt: self.dt.clone().map(|f| Arc::new(move |p: &DiscretePath| a * f(p)) as PathFn),
            dx: self
                .dx
                .clone()
                .map(|f| Arc::new(move |p: &DiscretePath| f(p).into_iter().map(|v| a * v).collect()) as PathVecFn),
            dxx: self.dxx.clone().map(|f| Arc::new(move |p: &DiscretePath| f(p) * a) as PathMatFn),
            growth_degree: self.growth_degree,
        }
    }

    /// `self + other`; a derivative is analytic only when both parts supply it.
    pub fn plus(&self, other: &FunctionalHandle) -> Self {
        let (e1, e2) = (self.eval.clone(), other.eval.clone());
        let dt = match (&self.dt, &other.dt) {
            (Some(a), Some(b)) => {
                let (a, b) = (a.clone(), b.clone());
                Some(Arc::new(move |p: &DiscretePath| a(p) + b(p)) as PathFn)
            }
            _ => None,
        };
        let dx = match (&self.dx, &other.dx) {
            (Some(a), Some(b)) => {
                let (a, b) = (a.clone(), b.clone());
                Some(Arc::new(move |p: &DiscretePath| a(p).iter().zip(b(p)).map(|(x, y)| x + y).collect()) as PathVecFn)
            }
            _ => None,
        };
        let dxx = match (&self.dxx, &other.dxx) {
            (Some(a), Some(b)) => {
                let (a, b) = (a.clone(), b.clone());
                Some(Arc::new(move |p: &DiscretePath| a(p) + b(p)) as PathMatFn)
            }
            _ => None,
        };
        FunctionalHandle {
            eval: Arc::new(move |p| e1(p) + e2(p)),
            dt,
            dx,
            dxx,
            growth_degree: self.growth_degree.max(other.growth_degree),
        }
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn unit(dim: usize, i: usize, h: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = h;
    v
}

/// ∂_x f by bumping the final node.
pub fn vertical_derivative(f: &FunctionalHandle, p: &DiscretePath, cfg: &FDConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let h = cfg.h_vertical;
    let d = p.dim();
    let base = match cfg.scheme {
        Scheme::Forward => Some(f.try_eval(p)?),
        Scheme::Central => None,
    };
    (0..d)
        .map(|i| {
            let up = f.try_eval(&p.vertical_bump(&unit(d, i, h))?)?;
            match base {
                Some(b) => Ok((up - b) / h),
                None => {
                    let down = f.try_eval(&p.vertical_bump(&unit(d, i, -h))?)?;
                    Ok((up - down) / (2.0 * h))
                }
            }
        })
        .collect()
}

/// ∂_xx f by second differences on the final node, symmetrized.
pub fn second_vertical(f: &FunctionalHandle, p: &DiscretePath, cfg: &FDConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let h = cfg.h_vertical;
    let d = p.dim();
    let at = |v: Vec<f64>| -> Result<f64> { f.try_eval(&p.vertical_bump(&v)?) };
    let centre = f.try_eval(p)?;
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let up = at(unit(d, i, h))?;
        let down = at(unit(d, i, -h))?;
        m[(i, i)] = (up - 2.0 * centre + down) / (h * h);
        for j in (i + 1)..d {
            let corner = |si: f64, sj: f64| {
                let mut v = vec![0.0; d];
                v[i] = si * h;
                v[j] = sj * h;
                at(v)
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// ∂_t f by a forward difference along the frozen extension. At the horizon
/// the difference is taken from t − h to t.
pub fn horizontal_derivative(f: &FunctionalHandle, p: &DiscretePath, cfg: &FDConfig) -> Result<f64> {
    cfg.validate()?;
    let k = cfg.horizontal_steps(p)?;
    let dt = k as f64 * p.step();
    let base = match cfg.horizon {
        Some(horizon) => {
            let horizon_steps = grid_steps(horizon, p.step())?;
            if p.steps() + k <= horizon_steps {
                p.clone()
            } else if p.steps() == horizon_steps && p.steps() >= k {
                p.prefix(p.node_count() - k)
            } else {
                return Err(Error::BeyondHorizon { requested: p.final_time() + dt, horizon });
            }
        }
        None => p.clone(),
    };
    let later = f.try_eval(&base.extend_steps(k))?;
    let now = f.try_eval(&base)?;
    Ok((later - now) / dt)
}

/// A class-𝒢 functional g(γ_t) = g₀(t, ‖γ_t − a_{t̂,t}‖²_H).
#[derive(Clone)]
pub struct ClassGSpec {
    g0: ScalarFn2,
    g0_t: ScalarFn2,
    g0_y: ScalarFn2,
    anchor: DiscretePath,
}

impl std::fmt::Debug for ClassGSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClassGSpec").field("anchor", &self.anchor).finish_non_exhaustive()
    }
}

impl ClassGSpec {
    /// Spot-checks the partial derivatives of g₀ by central differences.
    pub fn new(
        g0: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g0_t: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g0_y: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        anchor: DiscretePath,
    ) -> Result<Self> {
        let spec = ClassGSpec { g0: Arc::new(g0), g0_t: Arc::new(g0_t), g0_y: Arc::new(g0_y), anchor };
        let t_hat = spec.t_hat();
        let e = 1e-5;
        for dt in [0.0, 0.3, 1.0] {
            for y in [0.0, 0.5, 2.0] {
                let t = t_hat + dt;
                let fd_t = ((spec.g0)(t + e, y) - (spec.g0)(t - e, y)) / (2.0 * e);
                let fd_y = ((spec.g0)(t, y + e) - (spec.g0)(t, y - e)) / (2.0 * e);
                let (at, ay) = ((spec.g0_t)(t, y), (spec.g0_y)(t, y));
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-6f64.max(1e-4 * a.abs());
                if !close(at, fd_t) || !close(ay, fd_y) {
                    return Err(Error::DerivativeMismatch(format!(
                        "g0 partials at ({t}, {y}): ({at}, {ay}) vs finite differences ({fd_t}, {fd_y})"
                    )));
                }
            }
        }
        Ok(spec)
    }

    pub fn t_hat(&self) -> f64 {
        self.anchor.final_time()
    }

    pub fn anchor(&self) -> &DiscretePath {
        &self.anchor
    }

    /// (t, ‖γ_t − a_{t̂,t}‖²_H, |γ_t(t) − a(t̂)|²).
    fn arguments(&self, p: &DiscretePath) -> Result<(f64, f64, f64)> {
        p.same_grid(&self.anchor)?;
        if p.steps() < self.anchor.steps() {
            return Err(Error::OutOfRange(format!(
                "path ends at {} before the anchor time {}",
                p.final_time(),
                self.t_hat()
            )));
        }
        let a = self.anchor.extend_steps(p.steps() - self.anchor.steps());
        let y = p.difference(&a)?.h_norm_sq();
        let jump: f64 = p.endpoint().iter().zip(self.anchor.endpoint()).map(|(x, z)| (x - z) * (x - z)).sum();
        Ok((p.final_time(), y, jump))
    }

    pub fn eval(&self, p: &DiscretePath) -> Result<f64> {
        let (t, y, _) = self.arguments(p)?;
        Ok((self.g0)(t, y))
    }

    /// A handle with the closed-form time derivative attached.
    pub fn to_handle(&self) -> FunctionalHandle {
        let (a, b) = (self.clone(), self.clone());
        FunctionalHandle::new(move |p| a.eval(p).unwrap_or(f64::NAN))
            .with_unchecked_derivatives(Derivatives::default().dt(move |p| class_g_time_derivative(&b, p).unwrap_or(f64::NAN)))
    }
}

/// (g₀)_t(t, y) + (g₀)_y(t, y)·|γ_t(t) − a(t̂)|² with y = ‖γ_t − a_{t̂,t}‖²_H.
pub fn class_g_time_derivative(spec: &ClassGSpec, p: &DiscretePath) -> Result<f64> {
    let (t, y, jump) = spec.arguments(p)?;
    finite((spec.g0_t)(t, y) + (spec.g0_y)(t, y) * jump, "class-G time derivative")
}

/// Per-trajectory functional Itô residuals along a simulated batch.
pub fn ito_residuals(
    f: &FunctionalHandle,
    coeffs: &CoefficientSet,
    controls: &ControlSet,
    batch: &TrajectoryBatch,
    cfg: &FDConfig,
) -> Result<Vec<f64>> {
    if !batch.has_increments() {
        return Err(Error::Empty("Brownian increments of the trajectory batch".into()));
    }
    let h = batch.step;
    let start = batch.start_node;
    let end = batch.end_node();
    (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let x = &batch.paths[i];
            let mut cur = x.prefix(start + 1);
            let mut drift_terms = Vec::with_capacity(end - start);
            let mut noise_terms = Vec::with_capacity(end - start);
            for k in start..end {
                let u = controls.point(batch.control(i, k));
                let dt = f.time_derivative(&cur, cfg)?;
                let dx = f.space_gradient(&cur, cfg)?;
                let dxx = f.space_hessian(&cur, cfg)?;
                let fv = coeffs.drift_at(&cur, u)?;
                let g = coeffs.diffusion_at(&cur, u)?;
                let ggt = &g * g.transpose();
                let trace = (dxx * ggt).trace();
                let first: f64 = dx.iter().zip(&fv).map(|(a, b)| a * b).sum();
                drift_terms.push((dt + 0.5 * trace + first) * h);
                let gdw = &g * nalgebra::DVector::from_column_slice(batch.increment(i, k));
                noise_terms.push(dx.iter().zip(gdw.iter()).map(|(a, b)| a * b).sum::<f64>());
                cur.push_node(x.node(k + 1))?;
            }
            let total = f.try_eval(x)? - f.try_eval(&x.prefix(start + 1))?;
            Ok(total - crate::stats::pairwise_sum(&drift_terms) - crate::stats::pairwise_sum(&noise_terms))
        })
        .collect()
}

/// Mean and standard error of the functional Itô residual.
pub fn ito_residual(
    f: &FunctionalHandle,
    coeffs: &CoefficientSet,
    controls: &ControlSet,
    batch: &TrajectoryBatch,
    cfg: &FDConfig,
) -> Result<Summary> {
    Ok(Summary::of(&ito_residuals(f, coeffs, controls, batch, cfg)?))
}

/// Root mean square of the residuals.
pub fn rms(xs: &[f64]) -> f64 {
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    crate::stats::mean(&sq).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{simulate_forward, ControlProcess};

    fn ramp() -> DiscretePath {
        DiscretePath::scalar(0.25, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap()
    }

    fn endpoint_sq() -> FunctionalHandle {
        FunctionalHandle::new(|p| p.endpoint().iter().map(|x| x * x).sum())
    }

    fn integral() -> FunctionalHandle {
        FunctionalHandle::new(|p| p.running_integral()[0])
    }

    #[test]
    fn vertical_examples() {
        let cfg = FDConfig::default();
        let p = DiscretePath::scalar(0.5, &[0.0, 2.0]).unwrap();
        assert!((vertical_derivative(&endpoint_sq(), &p, &cfg).unwrap()[0] - 4.0).abs() < 1e-9);
        assert_eq!(vertical_derivative(&integral(), &ramp(), &cfg).unwrap()[0], 0.0);
        let prod = FunctionalHandle::new(|p| p.endpoint()[0] * p.running_integral()[0]);
        assert!((vertical_derivative(&prod, &ramp(), &cfg).unwrap()[0] - 0.375).abs() < 1e-9);
    }

    #[test]
    fn forward_scheme_is_first_order() {
        let p = DiscretePath::scalar(0.5, &[0.0, 2.0]).unwrap();
        let fwd = vertical_derivative(&endpoint_sq(), &p, &FDConfig::default().forward()).unwrap()[0];
        // ((2 + h)² − 4)/h = 4 + h
        assert!((fwd - 4.0 - 1e-4).abs() < 1e-8);
    }

    #[test]
    fn second_vertical_examples() {
        let cfg = FDConfig::default();
        let p = DiscretePath::scalar(0.5, &[0.0, 2.0]).unwrap();
        assert!((second_vertical(&endpoint_sq(), &p, &cfg).unwrap()[(0, 0)] - 2.0).abs() < 1e-6);
        let lin = FunctionalHandle::new(|p| 3.0 * p.endpoint()[0]);
        assert!(second_vertical(&lin, &p, &cfg).unwrap()[(0, 0)].abs() < 1e-6);
        let q = DiscretePath::new(2, 0.5, vec![vec![0.0, 0.0], vec![1.5, -0.5]]).unwrap();
        let cross = FunctionalHandle::new(|p| p.endpoint()[0] * p.endpoint()[1]);
        let m = second_vertical(&cross, &q, &cfg).unwrap();
        assert!((m[(0, 1)] - 1.0).abs() < 1e-6 && (m[(1, 0)] - 1.0).abs() < 1e-6);
        assert!(m[(0, 0)].abs() < 1e-6 && m[(1, 1)].abs() < 1e-6);
    }

    #[test]
    fn horizontal_examples() {
        let cfg = FDConfig::default();
        assert!((horizontal_derivative(&integral(), &ramp(), &cfg).unwrap() - 1.0).abs() < 1e-12);
        let p = DiscretePath::scalar(0.5, &[0.0, 2.0]).unwrap();
        assert_eq!(horizontal_derivative(&endpoint_sq(), &p, &cfg).unwrap(), 0.0);
        let tx = FunctionalHandle::new(|p| p.final_time() * p.endpoint()[0]);
        assert!((horizontal_derivative(&tx, &p, &cfg).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn horizontal_at_horizon_is_one_sided() {
        let cfg = FDConfig::default().with_horizon(1.0);
        // ∫γ on the ramp: at T the derivative is taken over [0.75, 1], giving γ(0.75)
        let v = horizontal_derivative(&integral(), &ramp(), &cfg).unwrap();
        assert!((v - 0.75).abs() < 1e-12);
        let short = DiscretePath::scalar(0.25, &[0.0, 0.1]).unwrap();
        let cfg = FDConfig { h_horizontal: Some(1.0), ..FDConfig::default().with_horizon(1.0) };
        assert!(matches!(horizontal_derivative(&integral(), &short, &cfg), Err(Error::BeyondHorizon { .. })));
    }

    #[test]
    fn analytic_derivatives_are_checked() {
        let probes = ProbeSpec::new(1);
        let good = endpoint_sq().with_derivatives(
            Derivatives::default()
                .dt(|_| 0.0)
                .dx(|p| vec![2.0 * p.endpoint()[0]])
                .dxx(|_| DMatrix::from_element(1, 1, 2.0)),
            &probes,
        );
        assert!(good.is_ok());
        let bad = endpoint_sq().with_derivatives(Derivatives::default().dx(|p| vec![3.0 * p.endpoint()[0]]), &probes);
        assert!(matches!(bad, Err(Error::DerivativeMismatch(_))));
    }

    #[test]
    fn non_finite_evaluation_is_an_error() {
        let f = FunctionalHandle::new(|p| p.endpoint()[0].ln());
        let p = DiscretePath::scalar(0.5, &[0.0, 1e-4]).unwrap();
        assert!(matches!(vertical_derivative(&f, &p, &FDConfig::default()), Err(Error::NonFinite(_))));
    }

    fn quadratic_h_spec(anchor: DiscretePath) -> ClassGSpec {
        ClassGSpec::new(|_, y| y, |_, _| 0.0, |_, _| 1.0, anchor).unwrap()
    }

    #[test]
    fn class_g_examples() {
        let s = quadratic_h_spec(DiscretePath::zeros(1, 0.25, 1).unwrap());
        assert_eq!(class_g_time_derivative(&s, &ramp()).unwrap(), 1.0);
        let c = ClassGSpec::new(|_, _| 3.0, |_, _| 0.0, |_, _| 0.0, DiscretePath::zeros(1, 0.25, 1).unwrap()).unwrap();
        assert_eq!(class_g_time_derivative(&c, &ramp()).unwrap(), 0.0);
        let long = quadratic_h_spec(DiscretePath::zeros(1, 0.25, 9).unwrap());
        assert!(class_g_time_derivative(&long, &ramp()).is_err());
    }

    #[test]
    fn class_g_rejects_wrong_partials() {
        let r = ClassGSpec::new(|t, y| t * y, |_, y| 2.0 * y, |t, _| t, DiscretePath::zeros(1, 0.25, 1).unwrap());
        assert!(matches!(r, Err(Error::DerivativeMismatch(_))));
    }

    #[test]
    fn constant_functional_has_zero_ito_residual() {
        let c = CoefficientSet::zero(1, 1, 1.0).unwrap().with_diffusion(|_, _| DMatrix::from_element(1, 1, 1.0));
        let u = ControlSet::singleton(vec![0.0]);
        let origin = DiscretePath::zeros(1, 1.0 / 16.0, 1).unwrap();
        let b = simulate_forward(&c, &origin, &u, &ControlProcess::Constant(0), 50, 1).unwrap();
        let r = ito_residuals(&FunctionalHandle::constant(2.5), &c, &u, &b, &FDConfig::default()).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn combinators_keep_derivatives() {
        let f = FunctionalHandle::constant(1.0).scaled(-2.0).shifted(0.5);
        assert_eq!(f.has_analytic_derivatives(), (true, true, true));
        let p = ramp();
        assert_eq!(f.eval(&p), -1.5);
        let g = f.plus(&integral());
        assert_eq!(g.has_analytic_derivatives(), (false, false, false));
        assert!((g.eval(&p) - (-1.5 + 0.375)).abs() < 1e-15);
    }
}
