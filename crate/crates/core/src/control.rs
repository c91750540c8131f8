//! The value functional by exact tree backward induction and by regression
//! Monte Carlo, the Hamiltonian, the generator 𝓛φ, DPP residuals and
//! regularity reports.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bsde::{SolverKind, ValueEstimate};
use crate::calculus::{FDConfig, FunctionalHandle};
use crate::error::{Error, Result};
use crate::path::{grid_steps, DiscretePath};
use crate::regression::{LinearModel, Projection, RegressionBasis};
use crate::rng::{keyed, Domain};
use crate::sde::{euler_step, simulate, CoefficientSet, ControlProcess, ControlSet, NoiseKind, SimConfig};
use crate::stats::{self, Summary};

/// (r, p, l) ∈ ℝ × ℝ^d × Sym(d).
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianInput {
    pub r: f64,
    pub p: Vec<f64>,
    pub l: DMatrix<f64>,
}

impl HamiltonianInput {
    pub fn new(r: f64, p: Vec<f64>, l: DMatrix<f64>) -> Result<Self> {
        if l.nrows() != p.len() || l.ncols() != p.len() {
            return Err(Error::DimensionMismatch { expected: p.len() * p.len(), found: l.len() });
        }
        if (&l - l.transpose()).amax() > 1e-12 {
            return Err(Error::OutOfRange("Hamiltonian matrix argument must be symmetric".into()));
        }
        Ok(HamiltonianInput { r, p, l })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianValue {
    pub value: f64,
    /// Index into the control set of the lowest-index maximizer.
    pub argmax: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gᵀp.
fn gt_times(g: &DMatrix<f64>, p: &[f64]) -> Vec<f64> {
    (0..g.ncols()).map(|j| (0..g.nrows()).map(|i| g[(i, j)] * p[i]).sum()).collect()
}

/// sup_u [(p, F) + ½ tr(l GGᵀ) + q(γ, r, Gᵀp, u)], ties to the lowest index.
pub fn hamiltonian(
    coeffs: &CoefficientSet,
    path: &DiscretePath,
    inp: &HamiltonianInput,
    controls: &ControlSet,
) -> Result<HamiltonianValue> {
    if inp.p.len() != coeffs.dim_state() || path.dim() != coeffs.dim_state() {
        return Err(Error::DimensionMismatch { expected: coeffs.dim_state(), found: inp.p.len() });
    }
    let mut best: Option<HamiltonianValue> = None;
    for i in 0..controls.len() {
        let u = controls.point(i);
        let f = coeffs.drift_at(path, u)?;
        let g = coeffs.diffusion_at(path, u)?;
        let trace = (&inp.l * (&g * g.transpose())).trace();
        let q = coeffs.driver_at(path, inp.r, &gt_times(&g, &inp.p), u)?;
        let v = dot(&inp.p, &f) + 0.5 * trace + q;
        if !v.is_finite() {
            return Err(Error::NonFinite("Hamiltonian summand".into()));
        }
        if best.is_none_or(|b| v > b.value) {
            best = Some(HamiltonianValue { value: v, argmax: i });
        }
    }
    Ok(best.expect("control sets are nonempty"))
}

/// 𝓛φ = ∂_tφ + (∂_xφ, F) + ½tr(∂_xxφ GGᵀ) + q(γ, φ, (∂_xφ)ᵀG, u).
pub fn generator_l(
    coeffs: &CoefficientSet,
    phi: &FunctionalHandle,
    path: &DiscretePath,
    u: &[f64],
    cfg: &FDConfig,
) -> Result<f64> {
    let dt = phi.time_derivative(path, cfg)?;
    let dx = phi.space_gradient(path, cfg)?;
    let dxx = phi.space_hessian(path, cfg)?;
    let f = coeffs.drift_at(path, u)?;
    let g = coeffs.diffusion_at(path, u)?;
    let trace = (dxx * (&g * g.transpose())).trace();
    let q = coeffs.driver_at(path, phi.try_eval(path)?, &gt_times(&g, &dx), u)?;
    Ok(dt + dot(&dx, &f) + 0.5 * trace + q)
}

/// Largest tree (leaves of the (|U|·2^n)-ary tree) the enumerator accepts.
pub const TREE_LEAF_LIMIT: f64 = 1e8;

type Terminal<'a> = &'a (dyn Fn(&DiscretePath) -> Result<f64> + Sync);

struct Tree<'a> {
    coeffs: &'a CoefficientSet,
    controls: &'a ControlSet,
    policy: Option<&'a ControlProcess>,
    end: usize,
    terminal: Terminal<'a>,
    signs: Vec<Vec<f64>>,
    root_h: f64,
}

impl Tree<'_> {
    fn new<'a>(
        coeffs: &'a CoefficientSet,
        controls: &'a ControlSet,
        policy: Option<&'a ControlProcess>,
        end: usize,
        terminal: Terminal<'a>,
        step: f64,
    ) -> Tree<'a> {
        let n = coeffs.dim_noise();
        let signs = (0..1usize << n)
            .map(|b| (0..n).map(|j| if b >> j & 1 == 1 { -1.0 } else { 1.0 }).collect())
            .collect();
        Tree { coeffs, controls, policy, end, terminal, signs, root_h: step }
    }

    /// Value of control `ui` at `path`, given the children's values.
    fn combine(&self, path: &DiscretePath, ui: usize, children: &[f64]) -> Result<f64> {
        let h = self.root_h;
        let sq = h.sqrt();
        let e = stats::mean(children);
        let n = self.coeffs.dim_noise();
        let z: Vec<f64> = (0..n)
            .map(|j| {
                let w: Vec<f64> = children.iter().zip(&self.signs).map(|(v, s)| v * s[j]).collect();
                stats::pairwise_sum(&w) / children.len() as f64 / sq
            })
            .collect();
        let u = self.controls.point(ui);
        let pred = e + h * self.coeffs.driver_at(path, e, &z, u)?;
        Ok(e + h * self.coeffs.driver_at(path, pred, &z, u)?)
    }

    fn candidates(&self, path: &DiscretePath) -> Result<Vec<usize>> {
        match self.policy {
            None => Ok((0..self.controls.len()).collect()),
            Some(p) => Ok(vec![p.choose(path, path.steps(), 0, self.controls)?]),
        }
    }

    fn child(&self, path: &DiscretePath, ui: usize, signs: &[f64]) -> Result<Vec<f64>> {
        let sq = self.root_h.sqrt();
        let dw: Vec<f64> = signs.iter().map(|s| s * sq).collect();
        euler_step(self.coeffs, path, self.controls.point(ui), &dw)
    }

    fn value(&self, path: &mut DiscretePath) -> Result<f64> {
        if path.steps() == self.end {
            return (self.terminal)(path);
        }
        let mut best = f64::NEG_INFINITY;
        for ui in self.candidates(path)? {
            let mut children = Vec::with_capacity(self.signs.len());
            for s in &self.signs {
                let next = self.child(path, ui, s)?;
                path.push_node(&next)?;
                let v = self.value(path);
                path.truncate(path.node_count() - 1);
                children.push(v?);
            }
            let v = self.combine(path, ui, &children)?;
            if v > best {
                best = v;
            }
        }
        Ok(best)
    }

    /// Same recursion with the first level fanned out across threads.
    fn root_value(&self, root: &DiscretePath) -> Result<f64> {
        if root.steps() == self.end {
            return (self.terminal)(root);
        }
        let cands = self.candidates(root)?;
        let jobs: Vec<(usize, usize)> =
            cands.iter().flat_map(|&u| (0..self.signs.len()).map(move |b| (u, b))).collect();
        let leaves: Vec<f64> = jobs
            .par_iter()
            .map(|&(ui, b)| {
                let mut p = root.clone();
                p.push_node(&self.child(root, ui, &self.signs[b])?)?;
                self.value(&mut p)
            })
            .collect::<Result<_>>()?;
        let mut best = f64::NEG_INFINITY;
        for (c, &ui) in cands.iter().enumerate() {
            let k = self.signs.len();
            let v = self.combine(root, ui, &leaves[c * k..(c + 1) * k])?;
            if v > best {
                best = v;
            }
        }
        Ok(best)
    }
}

fn tree_guard(coeffs: &CoefficientSet, controls: usize, steps: usize, step: f64) -> Result<()> {
    let branching = controls as f64 * 2f64.powi(coeffs.dim_noise() as i32);
    let leaves = branching.powi(steps as i32);
    if leaves > TREE_LEAF_LIMIT {
        return Err(Error::TreeTooLarge { leaves });
    }
    if let Some(l) = coeffs.lipschitz() {
        if step * l >= 1.0 {
            return Err(Error::OutOfRange(format!("h·L = {} must be below 1 for the implicit step", step * l)));
        }
    }
    Ok(())
}

/// Backward induction over the Rademacher tree from `initial` to absolute
/// node `end`, with terminal values from `terminal` and either the sup over
/// controls or a fixed policy.
pub fn tree_value_with(
    coeffs: &CoefficientSet,
    initial: &DiscretePath,
    controls: &ControlSet,
    end: usize,
    terminal: Terminal<'_>,
    policy: Option<&ControlProcess>,
) -> Result<f64> {
    let horizon = coeffs.horizon_steps(initial.step())?;
    if end > horizon || end < initial.steps() {
        return Err(Error::BeyondHorizon { requested: initial.step() * end as f64, horizon: coeffs.horizon() });
    }
    let fan = if policy.is_some() { 1 } else { controls.len() };
    tree_guard(coeffs, fan, end - initial.steps(), initial.step())?;
    Tree::new(coeffs, controls, policy, end, terminal, initial.step()).root_value(initial)
}

fn check_tree_steps(coeffs: &CoefficientSet, initial: &DiscretePath, n_steps: usize) -> Result<usize> {
    let horizon = coeffs.horizon_steps(initial.step())?;
    if initial.steps() + n_steps != horizon {
        return Err(Error::Config(format!(
            "initial path ends at node {} of a {}-step grid; {} further steps do not reach the horizon",
            initial.steps(),
            horizon,
            n_steps
        )));
    }
    Ok(horizon)
}

/// V(γ_t) by exact backward induction on the non-recombining tree.
pub fn value_tree(
    coeffs: &CoefficientSet,
    initial: &DiscretePath,
    controls: &ControlSet,
    n_steps: usize,
) -> Result<ValueEstimate> {
    let end = check_tree_steps(coeffs, initial, n_steps)?;
    let phi = |p: &DiscretePath| coeffs.terminal_at(p);
    let value = tree_value_with(coeffs, initial, controls, end, &phi, None)?;
    Ok(ValueEstimate {
        value,
        std_error: 0.0,
        solver: SolverKind::Tree,
        n_steps,
        n_paths: 1 << coeffs.dim_noise(),
        seed: None,
    })
}

/// The tree value of a fixed control process.
pub fn policy_value_tree(
    coeffs: &CoefficientSet,
    initial: &DiscretePath,
    controls: &ControlSet,
    policy: &ControlProcess,
    n_steps: usize,
) -> Result<f64> {
    let end = check_tree_steps(coeffs, initial, n_steps)?;
    let phi = |p: &DiscretePath| coeffs.terminal_at(p);
    tree_value_with(coeffs, initial, controls, end, &phi, Some(policy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionConfig {
    pub paths: usize,
    pub seed: u64,
    pub basis: RegressionBasis,
}

impl RegressionConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        RegressionConfig { paths, seed, basis: RegressionBasis::default() }
    }

    pub fn with_basis(mut self, basis: RegressionBasis) -> Self {
        self.basis = basis;
        self
    }
}

struct StepModels {
    /// Per control: continuation and one Z model per noise component.
    per_control: Vec<(LinearModel, Vec<LinearModel>)>,
}

/// A value functional learned by regression Monte Carlo, evaluable at any
/// path ending on a grid node in [t, T].
pub struct RegressionValue<'a> {
    coeffs: &'a CoefficientSet,
    controls: &'a ControlSet,
    basis: RegressionBasis,
    step: f64,
    start: usize,
    end: usize,
    terminal: Terminal<'a>,
    models: Vec<StepModels>,
    pub estimate: ValueEstimate,
}

impl RegressionValue<'_> {
    fn step_value(&self, k: usize, path: &DiscretePath, row: &[f64]) -> Result<(f64, usize)> {
        let h = self.step;
        let mut best = (f64::NEG_INFINITY, 0);
        for (ui, (cont, zs)) in self.models[k - self.start].per_control.iter().enumerate() {
            let c = cont.predict(row);
            let z: Vec<f64> = zs.iter().map(|m| m.predict(row)).collect();
            let u = self.controls.point(ui);
            let pred = c + h * self.coeffs.driver_at(path, c, &z, u)?;
            let v = c + h * self.coeffs.driver_at(path, pred, &z, u)?;
            if v > best.0 {
                best = (v, ui);
            }
        }
        Ok(best)
    }

    /// V at a path ending at a node between the start and end of the fit.
    pub fn eval_at(&self, path: &DiscretePath) -> Result<f64> {
        let k = path.steps();
        if k < self.start || k > self.end {
            return Err(Error::OutOfRange(format!("node {k} outside the fitted range {}..={}", self.start, self.end)));
        }
        if k == self.end {
            return (self.terminal)(path);
        }
        let row = self.basis.raw_table(path, k).pop().expect("one row");
        Ok(self.step_value(k, path, &row)?.0)
    }
}

/// Fits the regression value functional on [t, node `end`] with terminal
/// values from `terminal`.
pub fn fit_value_regression<'a>(
    coeffs: &'a CoefficientSet,
    initial: &DiscretePath,
    controls: &'a ControlSet,
    end: usize,
    terminal: Terminal<'a>,
    cfg: &RegressionConfig,
) -> Result<RegressionValue<'a>> {
    cfg.basis.validate()?;
    let step = initial.step();
    let start = initial.steps();
    let sim = SimConfig { paths: cfg.paths, seed: cfg.seed, noise: NoiseKind::Gaussian, end_time: Some(step * end as f64) };
    let explore = ControlProcess::UniformRandom { seed: cfg.seed ^ 0x9e37_79b9_7f4a_7c15 };
    let batch = simulate(coeffs, initial, controls, &explore, &sim)?;
    let m = batch.len();
    let n = coeffs.dim_noise();
    let tables: Vec<Vec<Vec<f64>>> = batch.paths.par_iter().map(|p| cfg.basis.raw_table(p, start)).collect();
    let mut v_next: Vec<f64> = batch.paths.par_iter().map(|p| terminal(p)).collect::<Result<_>>()?;
    let mut rv = RegressionValue {
        coeffs,
        controls,
        basis: cfg.basis.clone(),
        step,
        start,
        end,
        terminal,
        models: Vec::new(),
        estimate: ValueEstimate {
            value: f64::NAN,
            std_error: f64::NAN,
            solver: SolverKind::Regression,
            n_steps: end - start,
            n_paths: m,
            seed: Some(cfg.seed),
        },
    };
    let mut value = (f64::NAN, f64::NAN);
    for k in (start..end).rev() {
        let j = k - start;
        let mut per_control = Vec::with_capacity(controls.len());
        let mut subsets = Vec::with_capacity(controls.len());
        for ui in 0..controls.len() {
            let idx: Vec<usize> = (0..m).filter(|&i| batch.control(i, k) == ui).collect();
            if idx.is_empty() {
                return Err(Error::Empty(format!("exploration sample for control {ui} at step {k}")));
            }
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| tables[i][j].clone()).collect();
            let proj = Projection::fit(&rows, &cfg.basis, k)?;
            let y: Vec<f64> = idx.iter().map(|&i| v_next[i]).collect();
            let cont = proj.solve(&y);
            let fitted = proj.project(&y);
            let zs: Vec<LinearModel> = (0..n)
                .map(|c| {
                    let t: Vec<f64> =
                        idx.iter().zip(&fitted).map(|(&i, f)| (v_next[i] - f) * batch.increment(i, k)[c] / step).collect();
                    proj.solve(&t)
                })
                .collect();
            per_control.push((cont, zs));
            subsets.push(idx);
        }
        rv.models.insert(0, StepModels { per_control });
        rv.start = k;
        let prefixes: Vec<DiscretePath> = batch.paths.iter().map(|p| p.prefix(k + 1)).collect();
        let stepped: Vec<(f64, usize)> = (0..m)
            .into_par_iter()
            .map(|i| rv.step_value(k, &prefixes[i], &tables[i][j]))
            .collect::<Result<_>>()?;
        if k == start {
            let (v0, u0) = stepped[0];
            let targets: Vec<f64> = subsets[u0].iter().map(|&i| v_next[i]).collect();
            value = (v0, Summary::of(&targets).std_error);
        }
        v_next = stepped.into_iter().map(|(v, _)| v).collect();
    }
    if start == end {
        value = (terminal(initial)?, 0.0);
    }
    rv.start = start;
    rv.estimate.value = value.0;
    rv.estimate.std_error = value.1;
    Ok(rv)
}

/// V(γ_t) by regression Monte Carlo under a uniform exploration mixture.
pub fn value_regression(
    coeffs: &CoefficientSet,
    initial: &DiscretePath,
    controls: &ControlSet,
    cfg: &RegressionConfig,
) -> Result<ValueEstimate> {
    let end = coeffs.horizon_steps(initial.step())?;
    let phi = |p: &DiscretePath| coeffs.terminal_at(p);
    Ok(fit_value_regression(coeffs, initial, controls, end, &phi, cfg)?.estimate)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverConfig {
    Tree,
    Regression(RegressionConfig),
}

/// V(γ_t) against sup_u G_{t,t+δ}[V(X_{t+δ})].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DppReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub lhs_std_error: f64,
    pub rhs_std_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Computes both sides of the DPP. The right side maximizes over adapted
/// controls on [t, t+δ] with the solver's own value functional as terminal.
pub fn dpp_residual(
    coeffs: &CoefficientSet,
    initial: &DiscretePath,
    controls: &ControlSet,
    delta: f64,
    solver: &SolverConfig,
    tolerance: f64,
) -> Result<DppReport> {
    let k = grid_steps(delta, initial.step())?;
    let horizon = coeffs.horizon_steps(initial.step())?;
    let mid = initial.steps() + k;
    if mid > horizon {
        return Err(Error::BeyondHorizon { requested: initial.final_time() + delta, horizon: coeffs.horizon() });
    }
    let phi = |p: &DiscretePath| coeffs.terminal_at(p);
    let (lhs, rhs, lse, rse) = match solver {
        SolverConfig::Tree => {
            let lhs = tree_value_with(coeffs, initial, controls, horizon, &phi, None)?;
            let eta = |p: &DiscretePath| tree_value_with(coeffs, p, controls, horizon, &phi, None);
            let rhs = tree_value_with(coeffs, initial, controls, mid, &eta, None)?;
            (lhs, rhs, 0.0, 0.0)
        }
        SolverConfig::Regression(cfg) => {
            let full = fit_value_regression(coeffs, initial, controls, horizon, &phi, cfg)?;
            let eta = |p: &DiscretePath| full.eval_at(p);
            let fresh = RegressionConfig { seed: cfg.seed.wrapping_add(0x5151_5151), ..cfg.clone() };
            let head = fit_value_regression(coeffs, initial, controls, mid, &eta, &fresh)?;
            (full.estimate.value, head.estimate.value, full.estimate.std_error, head.estimate.std_error)
        }
    };
    let residual = (lhs - rhs).abs();
    Ok(DppReport {
        lhs,
        rhs,
        residual,
        lhs_std_error: lse,
        rhs_std_error: rse,
        tolerance,
        pass: residual <= tolerance,
    })
}

/// Ratios |V(γ) − V(γ′)|/‖γ − γ′‖₀ and |V(γ)|/(1 + ‖γ‖₀) over random pairs,
/// at a base pair distance and at one tenth of it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub max_lipschitz_ratio: f64,
    pub max_lipschitz_ratio_refined: f64,
    pub max_growth_ratio: f64,
}

/// Samples pairs of initial paths on a `grid_steps`-step grid, each ending at
/// a random node in the first half, and values them with `value`.
pub fn value_lipschitz_report(
    value: &(dyn Fn(&DiscretePath) -> Result<f64> + Sync),
    dim: usize,
    step: f64,
    max_start_node: usize,
    pairs: usize,
    distance: f64,
    seed: u64,
) -> Result<LipschitzReport> {
    let rows: Vec<(f64, f64, f64)> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed(seed, Domain::Pairs, i as u64, 0);
            let nodes = rng.random_range(1..=max_start_node + 1);
            let mut a = DiscretePath::zeros(dim, step, 1)?;
            let mut dir = DiscretePath::zeros(dim, step, 1)?;
            for _ in 1..nodes {
                a.push_node(&(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())?;
                dir.push_node(&(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())?;
            }
            if nodes == 1 {
                dir = DiscretePath::constant(step, 1, &vec![1.0; dim])?;
            }
            let sup = dir.sup_norm();
            let shift = |scale: f64| -> Result<DiscretePath> {
                let v: Vec<f64> = a.flat().iter().zip(dir.flat()).map(|(x, d)| x + scale * d / sup).collect();
                DiscretePath::from_flat(dim, step, v)
            };
            let (b, c) = (shift(distance)?, shift(distance / 10.0)?);
            let (va, vb, vc) = (value(&a)?, value(&b)?, value(&c)?);
            let lip = (va - vb).abs() / a.difference(&b)?.sup_norm();
            let lip_fine = (va - vc).abs() / a.difference(&c)?.sup_norm();
            Ok((lip, lip_fine, va.abs() / (1.0 + a.sup_norm())))
        })
        .collect::<Result<_>>()?;
    let max = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(LipschitzReport {
        pairs,
        max_lipschitz_ratio: max(|r| r.0),
        max_lipschitz_ratio_refined: max(|r| r.1),
        max_growth_ratio: max(|r| r.2),
    })
}
