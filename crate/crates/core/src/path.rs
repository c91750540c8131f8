//! Discrete paths on a uniform grid and the geometry of path space.
//!
//! A [`DiscretePath`] holds `node_count` points of ℝ^d sampled at times
//! `0, h, 2h, …`; its final time is `h · (node_count − 1)` and is never stored
//! as a float. Paths are càdlàg-by-convention: the value on `[t_k, t_{k+1})`
//! is the value at node `k`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct DiscretePath {
    dim: usize,
    step: f64,
    values: Vec<f64>,
}

/// JSON layout: `{"dim": d, "step": h, "values": [[...], ...]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRepr {
    dim: usize,
    step: f64,
    values: Vec<Vec<f64>>,
}

impl TryFrom<PathRepr> for DiscretePath {
    type Error = Error;

    fn try_from(r: PathRepr) -> Result<Self> {
        DiscretePath::new(r.dim, r.step, r.values)
    }
}

impl From<DiscretePath> for PathRepr {
    fn from(p: DiscretePath) -> Self {
        PathRepr { dim: p.dim, step: p.step, values: p.nodes().map(<[f64]>::to_vec).collect() }
    }
}

/// Number of whole grid steps in `delta`, or an error when `delta` is not a
/// nonnegative multiple of `step`.
pub fn grid_steps(delta: f64, step: f64) -> Result<usize> {
    let k = (delta / step).round();
    if !delta.is_finite() || delta < -GRID_TOL * step || (k * step - delta).abs() > GRID_TOL * step.max(delta.abs()) {
        return Err(Error::NotGridMultiple { delta, step });
    }
    Ok(k.max(0.0) as usize)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl DiscretePath {
    pub fn new(dim: usize, step: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        let mut flat = Vec::with_capacity(values.len() * dim);
        for v in &values {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
            flat.extend_from_slice(v);
        }
        Self::from_flat(dim, step, flat)
    }

    /// Node-major flat storage: node `k` occupies `flat[k*dim..(k+1)*dim]`.
    pub fn from_flat(dim: usize, step: f64, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be positive".into()));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidPath(format!("step must be positive, got {step}")));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::InvalidPath(format!(
                "{} values do not form a nonempty sequence of {dim}-vectors",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path values".into()));
        }
        Ok(DiscretePath { dim, step, values })
    }

    /// One-dimensional path from scalar node values.
    pub fn scalar(step: f64, values: &[f64]) -> Result<Self> {
        Self::from_flat(1, step, values.to_vec())
    }

    pub fn zeros(dim: usize, step: f64, nodes: usize) -> Result<Self> {
        Self::from_flat(dim, step, vec![0.0; dim * nodes.max(1)])
    }

    pub fn constant(step: f64, nodes: usize, value: &[f64]) -> Result<Self> {
        let flat = value.iter().copied().cycle().take(value.len() * nodes.max(1)).collect();
        Self::from_flat(value.len(), step, flat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.dim
    }

    /// Number of grid steps from 0 to the final time.
    pub fn steps(&self) -> usize {
        self.node_count() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.step * self.steps() as f64
    }

    pub fn time_of(&self, k: usize) -> f64 {
        self.step * k as f64
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// γ_t(t).
    pub fn endpoint(&self) -> &[f64] {
        self.node(self.steps())
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    /// Λ-membership of the origin: γ(0) = 0.
    pub fn vanishes_at_origin(&self) -> bool {
        self.node(0).iter().all(|&v| v == 0.0)
    }

    pub fn same_grid(&self, other: &DiscretePath) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if (self.step - other.step).abs() > 1e-12 * self.step {
            return Err(Error::StepMismatch { left: self.step, right: other.step });
        }
        Ok(())
    }

    /// Appends a node. Non-finite values are rejected.
    pub fn push_node(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("appended node".into()));
        }
        self.values.extend_from_slice(v);
        Ok(())
    }

    /// Keeps the first `nodes` nodes (at least one).
    pub fn truncate(&mut self, nodes: usize) {
        self.values.truncate(nodes.max(1) * self.dim);
    }

    /// The restriction γ_s for s = time_of(nodes − 1).
    pub fn prefix(&self, nodes: usize) -> DiscretePath {
        let n = nodes.clamp(1, self.node_count());
        DiscretePath { dim: self.dim, step: self.step, values: self.values[..n * self.dim].to_vec() }
    }

    /// Components `range` of every node, as a path of dimension `range.len()`.
    pub fn components(&self, range: std::ops::Range<usize>) -> DiscretePath {
        let values = self.nodes().flat_map(|v| v[range.clone()].iter().copied()).collect();
        DiscretePath { dim: range.len(), step: self.step, values }
    }

    /// Same grid, with each node replaced by `f(node)`.
    pub fn map_nodes(&self, dim: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<DiscretePath> {
        let values: Vec<f64> = self.nodes().flat_map(f).collect();
        Self::from_flat(dim, self.step, values)
    }

    /// ‖γ_t‖₀: the largest Euclidean norm over grid nodes.
    pub fn sup_norm(&self) -> f64 {
        self.nodes().map(norm).fold(0.0, f64::max)
    }

    /// ‖γ_t‖²_H by left-Riemann quadrature; the final node carries no weight.
    pub fn h_norm_sq(&self) -> f64 {
        let n = self.steps();
        self.step * self.nodes().take(n).map(|v| v.iter().map(|x| x * x).sum::<f64>()).sum::<f64>()
    }

    /// ∫₀^t γ(s) ds by left-Riemann quadrature, per component.
    pub fn running_integral(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for v in self.nodes().take(self.steps()) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        acc.iter_mut().for_each(|a| *a *= self.step);
        acc
    }

    /// sup over node pairs s < r of |γ(s) − γ(r)| / (r − s)^α; 0 for a single node.
    pub fn holder_seminorm(&self, alpha: f64) -> f64 {
        let n = self.node_count();
        let mut best: f64 = 0.0;
        for i in 0..n {
            let a = self.node(i);
            for j in (i + 1)..n {
                let gap = (self.step * (j - i) as f64).powf(alpha);
                best = best.max(dist(a, self.node(j)) / gap);
            }
        }
        best
    }

    pub fn in_holder_ball(&self, spec: &HolderBallSpec) -> BallCheck {
        let t = self.final_time();
        if t < spec.t0 - GRID_TOL * self.step {
            return BallCheck::violated(BallViolation::TooEarly { t, t0: spec.t0 });
        }
        let sup = self.sup_norm();
        if sup > spec.m0 {
            return BallCheck::violated(BallViolation::SupNorm { value: sup, bound: spec.m0 });
        }
        let semi = self.holder_seminorm(spec.alpha);
        if semi > spec.mu {
            return BallCheck::violated(BallViolation::Holder { value: semi, bound: spec.mu });
        }
        BallCheck { member: true, violation: None }
    }

    /// γ_{t,t+δ}: the path frozen at its final value for `delta` more time.
    pub fn horizontal_extend(&self, delta: f64) -> Result<DiscretePath> {
        Ok(self.extend_steps(grid_steps(delta, self.step)?))
    }

    pub fn extend_steps(&self, k: usize) -> DiscretePath {
        let mut out = self.clone();
        let last = self.endpoint().to_vec();
        out.values.reserve(k * self.dim);
        for _ in 0..k {
            out.values.extend_from_slice(&last);
        }
        out
    }

    /// γ_t^{v}: the final node shifted by `v`, all other nodes untouched.
    pub fn vertical_bump(&self, v: &[f64]) -> Result<DiscretePath> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("bump vector".into()));
        }
        let mut out = self.clone();
        let start = self.steps() * self.dim;
        for (x, dv) in out.values[start..].iter_mut().zip(v) {
            *x += dv;
        }
        Ok(out)
    }

    /// Node-wise difference after freezing the shorter path to the common length.
    pub fn difference(&self, other: &DiscretePath) -> Result<DiscretePath> {
        self.same_grid(other)?;
        let n = self.node_count().max(other.node_count());
        let a = self.extend_steps(n - self.node_count());
        let b = other.extend_steps(n - other.node_count());
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
        Ok(DiscretePath { dim: self.dim, step: self.step, values })
    }

    /// d_∞: |t − t̄| plus the sup distance after freezing the shorter path.
    pub fn d_infty(&self, other: &DiscretePath) -> Result<f64> {
        let diff = self.difference(other)?;
        let dt = (self.final_time() - other.final_time()).abs();
        Ok(dt + diff.sup_norm())
    }

    /// Radial retraction of the path toward its endpoint onto the cone of
    /// radius (μ − ε)(t − s)^α. The final node is never moved.
    pub fn perturb(&self, eps: f64, spec: &HolderBallSpec) -> Result<DiscretePath> {
        if !(eps > 0.0 && eps <= spec.mu / 2.0) {
            return Err(Error::OutOfRange(format!("eps = {eps} must lie in (0, mu/2 = {}]", spec.mu / 2.0)));
        }
        let check = self.in_holder_ball(spec);
        if let Some(v) = check.violation {
            return Err(Error::NotInBall(v.to_string()));
        }
        let mut out = self.clone();
        let last_k = self.steps();
        let end = self.endpoint().to_vec();
        let radius_scale = spec.mu - eps;
        for k in 0..last_k {
            let v = self.node(k);
            let gap = dist(v, &end);
            let radius = radius_scale * (self.step * (last_k - k) as f64).powf(spec.alpha);
            if gap > radius {
                let dst = &mut out.values[k * self.dim..(k + 1) * self.dim];
                for ((o, x), e) in dst.iter_mut().zip(v).zip(&end) {
                    *o = e + radius * (x - e) / gap;
                }
            }
        }
        Ok(out)
    }

    /// W^{γ_t}: the path followed by its endpoint plus cumulative increments
    /// up to `horizon`. `increments` is node-major with `dim` entries per step.
    pub fn concat_brownian(&self, increments: &[f64], horizon: f64) -> Result<DiscretePath> {
        let k = grid_steps(horizon - self.final_time(), self.step)?;
        if increments.len() != k * self.dim {
            return Err(Error::LengthMismatch { expected: k * self.dim, found: increments.len() });
        }
        let mut out = self.clone();
        let mut cur = self.endpoint().to_vec();
        for dw in increments.chunks_exact(self.dim) {
            for (c, d) in cur.iter_mut().zip(dw) {
                *c += d;
            }
            out.push_node(&cur)?;
        }
        Ok(out)
    }
}

/// The Hölder ball 𝒞^α_{μ,M₀,t₀}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderBallSpec {
    pub alpha: f64,
    pub mu: f64,
    pub m0: f64,
    pub t0: f64,
}

impl HolderBallSpec {
    pub const DEFAULT_ALPHA: f64 = 0.25;

    pub fn new(alpha: f64, mu: f64, m0: f64, t0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::OutOfRange(format!("alpha = {alpha} must lie in (0, 1]")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::OutOfRange(format!("mu = {mu} must be positive")));
        }
        if !(m0 > 0.0 && m0.is_finite()) {
            return Err(Error::OutOfRange(format!("m0 = {m0} must be positive")));
        }
        if !(t0 >= 0.0 && t0.is_finite()) {
            return Err(Error::OutOfRange(format!("t0 = {t0} must be nonnegative")));
        }
        Ok(HolderBallSpec { alpha, mu, m0, t0 })
    }

    pub fn with_mu(self, mu: f64) -> Result<Self> {
        Self::new(self.alpha, mu, self.m0, self.t0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BallViolation {
    TooEarly { t: f64, t0: f64 },
    SupNorm { value: f64, bound: f64 },
    Holder { value: f64, bound: f64 },
}

impl fmt::Display for BallViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BallViolation::TooEarly { t, t0 } => write!(f, "final time {t} < t0 = {t0}"),
            BallViolation::SupNorm { value, bound } => write!(f, "sup-norm {value} > M0 = {bound}"),
            BallViolation::Holder { value, bound } => write!(f, "Hölder seminorm {value} > mu = {bound}"),
        }
    }
}

/// Ball membership with the first violated clause, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BallCheck {
    pub member: bool,
    pub violation: Option<BallViolation>,
}

impl BallCheck {
    fn violated(v: BallViolation) -> Self {
        BallCheck { member: false, violation: Some(v) }
    }
}

/// A random member of the ball on `nodes` grid nodes: a Gaussian walk from the
/// origin rescaled to a random fraction of the Hölder and sup-norm bounds.
pub fn sample_ball_path(spec: &HolderBallSpec, dim: usize, step: f64, nodes: usize, rng: &mut impl Rng) -> DiscretePath {
    let nodes = nodes.max(1);
    let mut values = vec![0.0; dim * nodes];
    let sd = step.sqrt();
    for k in 1..nodes {
        let dw = rng::normals(rng, dim);
        for i in 0..dim {
            values[k * dim + i] = values[(k - 1) * dim + i] + sd * dw[i];
        }
    }
    let mut p = DiscretePath { dim, step, values };
    let semi = p.holder_seminorm(spec.alpha);
    let sup = p.sup_norm();
    if semi > 0.0 && sup > 0.0 {
        let target_mu = spec.mu * rng.random_range(0.05..=1.0);
        let target_m0 = spec.m0 * rng.random_range(0.05..=1.0);
        // the 1 − 1e-12 factor keeps rounding from pushing a boundary path out
        let scale = (target_mu / semi).min(target_m0 / sup) * (1.0 - 1e-12);
        p.values.iter_mut().for_each(|v| *v *= scale);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{keyed, Domain};

    fn ramp(n: usize) -> DiscretePath {
        let h = 1.0 / n as f64;
        DiscretePath::scalar(h, &(0..=n).map(|k| k as f64 * h).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(DiscretePath::scalar(0.5, &[0.0, 1.5, -2.0]).unwrap().sup_norm(), 2.0);
        assert_eq!(DiscretePath::zeros(3, 0.1, 5).unwrap().sup_norm(), 0.0);
        let p = DiscretePath::new(2, 1.0, vec![vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(p.sup_norm(), 5.0);
    }

    #[test]
    fn d_infty_examples() {
        let p = DiscretePath::scalar(0.5, &[0.0, 1.0]).unwrap();
        let q = DiscretePath::scalar(0.5, &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.d_infty(&q).unwrap(), 0.5);
        assert_eq!(p.d_infty(&p).unwrap(), 0.0);
        let r = DiscretePath::scalar(0.5, &[0.0, 1.0, 3.0]).unwrap();
        assert_eq!(p.d_infty(&r).unwrap(), 2.5);
    }

    #[test]
    fn d_infty_rejects_mismatched_grids() {
        let p = DiscretePath::scalar(0.5, &[0.0, 1.0]).unwrap();
        let q = DiscretePath::scalar(0.25, &[0.0, 1.0]).unwrap();
        assert!(matches!(p.d_infty(&q), Err(Error::StepMismatch { .. })));
        let r = DiscretePath::zeros(2, 0.5, 2).unwrap();
        assert!(matches!(p.d_infty(&r), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn h_norm_examples() {
        assert_eq!(DiscretePath::zeros(1, 0.25, 5).unwrap().h_norm_sq(), 0.0);
        assert_eq!(ramp(4).h_norm_sq(), 0.21875);
        let p = DiscretePath::scalar(0.5, &[0.0, 1.0]).unwrap();
        let ext = p.horizontal_extend(0.5).unwrap();
        // the final node is excluded, so (0, 1) has zero H-mass of its own
        assert_eq!(p.h_norm_sq(), 0.0);
        assert_eq!(ext.h_norm_sq(), p.h_norm_sq() + 0.5 * 1.0);
        assert_eq!(ext.h_norm_sq(), 0.5);
    }

    #[test]
    fn holder_examples() {
        assert!((ramp(4).holder_seminorm(0.5) - 1.0).abs() < 1e-15);
        assert_eq!(DiscretePath::constant(0.1, 4, &[2.0]).unwrap().holder_seminorm(0.5), 0.0);
        let p = DiscretePath::scalar(0.5, &[0.0, 1.0, 0.0]).unwrap();
        assert!((p.holder_seminorm(0.5) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(DiscretePath::scalar(0.5, &[3.0]).unwrap().holder_seminorm(0.5), 0.0);
    }

    #[test]
    fn ball_membership_examples() {
        let zero = DiscretePath::zeros(1, 0.25, 5).unwrap();
        assert!(zero.in_holder_ball(&HolderBallSpec::new(0.5, 0.1, 0.1, 0.5).unwrap()).member);

        let tight_mu = HolderBallSpec::new(0.5, 0.5, 2.0, 0.0).unwrap();
        let c = ramp(4).in_holder_ball(&tight_mu);
        assert!(!c.member);
        assert!(matches!(c.violation, Some(BallViolation::Holder { .. })));

        let tight_m0 = HolderBallSpec::new(0.5, 2.0, 0.5, 0.0).unwrap();
        let c = ramp(4).in_holder_ball(&tight_m0);
        assert!(matches!(c.violation, Some(BallViolation::SupNorm { .. })));

        let late = HolderBallSpec::new(0.5, 2.0, 2.0, 1.5).unwrap();
        assert!(matches!(ramp(4).in_holder_ball(&late).violation, Some(BallViolation::TooEarly { .. })));
    }

    #[test]
    fn ball_spec_validation() {
        assert!(HolderBallSpec::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(HolderBallSpec::new(1.2, 1.0, 1.0, 0.0).is_err());
        assert!(HolderBallSpec::new(0.5, -1.0, 1.0, 0.0).is_err());
        assert!(HolderBallSpec::new(1.0, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn horizontal_extend_examples() {
        let p = DiscretePath::scalar(0.5, &[0.0, 1.0]).unwrap();
        assert_eq!(p.horizontal_extend(0.5).unwrap().flat(), &[0.0, 1.0, 1.0]);
        assert_eq!(p.horizontal_extend(0.0).unwrap(), p);
        let twice = p.horizontal_extend(0.5).unwrap().horizontal_extend(0.5).unwrap();
        assert_eq!(twice, p.horizontal_extend(1.0).unwrap());
        assert!(matches!(p.horizontal_extend(0.3), Err(Error::NotGridMultiple { .. })));
        assert!(p.horizontal_extend(-0.5).is_err());
    }

    #[test]
    fn vertical_bump_examples() {
        let p = DiscretePath::scalar(0.5, &[0.0, 1.0]).unwrap();
        assert_eq!(p.vertical_bump(&[0.3]).unwrap().flat(), &[0.0, 1.3]);
        assert_eq!(p.vertical_bump(&[0.0]).unwrap(), p);
        assert_eq!(p.vertical_bump(&[0.25]).unwrap().vertical_bump(&[-0.25]).unwrap(), p);
        assert!(p.vertical_bump(&[f64::NAN]).is_err());
        assert!(p.vertical_bump(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn perturb_examples() {
        let spec = HolderBallSpec::new(0.5, 1.0, 2.0, 0.0).unwrap();
        let c = DiscretePath::constant(0.25, 5, &[0.7]).unwrap();
        assert_eq!(c.perturb(0.5, &spec).unwrap(), c);

        let p = ramp(4).perturb(0.5, &spec).unwrap();
        for (k, v) in p.flat().iter().enumerate() {
            let s = 0.25 * k as f64;
            let expected = if s < 0.75 { 1.0 - 0.5 * (1.0 - s).sqrt() } else { s };
            assert!((v - expected).abs() < 1e-15, "node {k}: {v} vs {expected}");
        }
        assert_eq!(p.flat()[0], 0.5);
        assert!(!p.vanishes_at_origin());
    }

    #[test]
    fn perturb_rejects_bad_inputs() {
        let spec = HolderBallSpec::new(0.5, 1.0, 2.0, 0.0).unwrap();
        assert!(matches!(ramp(4).perturb(0.6, &spec), Err(Error::OutOfRange(_))));
        assert!(matches!(ramp(4).perturb(0.0, &spec), Err(Error::OutOfRange(_))));
        let outside = HolderBallSpec::new(0.5, 1.0, 0.5, 0.0).unwrap();
        assert!(matches!(ramp(4).perturb(0.25, &outside), Err(Error::NotInBall(_))));
    }

    #[test]
    fn concat_brownian_examples() {
        let p = DiscretePath::scalar(0.5, &[0.0]).unwrap();
        assert_eq!(p.concat_brownian(&[1.0, -1.0], 1.0).unwrap().flat(), &[0.0, 1.0, 0.0]);
        let q = DiscretePath::scalar(0.5, &[0.0, 0.4]).unwrap();
        assert_eq!(q.concat_brownian(&[0.0, 0.0], 1.5).unwrap(), q.horizontal_extend(1.0).unwrap());
        assert!(matches!(q.concat_brownian(&[0.0], 1.5), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn json_layout() {
        let p = DiscretePath::new(2, 0.5, vec![vec![0.0, 0.1], vec![1.0 / 3.0, -2.5e-300]]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.starts_with("{\"dim\":2,\"step\":0.5,\"values\":[[0.0,0.1]"));
        let back: DiscretePath = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<DiscretePath>("{\"dim\":1,\"step\":0.5,\"values\":[[0.0,1.0]]}").is_err());
        assert!(serde_json::from_str::<DiscretePath>("{\"dim\":1,\"step\":0.5,\"values\":[[0.0]],\"x\":1}").is_err());
    }

    #[test]
    fn construction_errors() {
        assert!(DiscretePath::scalar(0.0, &[0.0]).is_err());
        assert!(DiscretePath::scalar(0.5, &[]).is_err());
        assert!(DiscretePath::scalar(0.5, &[f64::INFINITY]).is_err());
        assert!(DiscretePath::new(2, 0.5, vec![vec![1.0]]).is_err());
    }

    #[test]
    fn sampled_paths_are_ball_members() {
        let spec = HolderBallSpec::new(0.25, 2.0, 1.5, 0.0).unwrap();
        let mut rng = keyed(1, Domain::Ball, 0, 0);
        for n in 1..40 {
            let p = sample_ball_path(&spec, 2, 1.0 / 32.0, n, &mut rng);
            assert!(p.in_holder_ball(&spec).member);
            assert!(p.vanishes_at_origin());
        }
    }
}
