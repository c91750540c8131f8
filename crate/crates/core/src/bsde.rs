//! Backward solution of path-dependent BSDEs by least-squares regression,
//! the backward semigroup, and the comparison and a-priori stability checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{grid_steps, DiscretePath};
use crate::regression::{Projection, RegressionBasis};
use crate::sde::{simulate, CoefficientSet, ControlProcess, ControlSet, DriverFn, SimConfig, TerminalFn, TrajectoryBatch};
use crate::stats::{self, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    /// Predictor with the continuation value, then one fixed-point correction.
    #[default]
    Implicit,
    /// Driver evaluated at Y_{k+1} inside the conditional expectation.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BsdeConfig {
    #[serde(default)]
    pub basis: RegressionBasis,
    #[serde(default)]
    pub mode: StepMode,
}

impl BsdeConfig {
    pub fn new(basis: RegressionBasis) -> Self {
        BsdeConfig { basis, mode: StepMode::Implicit }
    }

    pub fn explicit(mut self) -> Self {
        self.mode = StepMode::Explicit;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Tree,
    Regression,
}

/// A numerical value with its Monte Carlo error and discretization metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub std_error: f64,
    pub solver: SolverKind,
    pub n_steps: usize,
    /// Trajectory count for regression; branches per node for the tree.
    pub n_paths: usize,
    pub seed: Option<u64>,
}

/// (Y, Z) on every trajectory of a batch, from the batch's start node to its end.
#[derive(Debug, Clone, PartialEq)]
pub struct BsdeSolution {
    pub start_node: usize,
    pub noise_dim: usize,
    /// `y[i][j]` is Y at absolute node `start_node + j`.
    pub y: Vec<Vec<f64>>,
    /// `z[i]` holds `noise_dim` entries per step.
    pub z: Vec<Vec<f64>>,
    pub y0: f64,
    pub std_error: f64,
    pub basis: RegressionBasis,
    /// Largest design condition number across steps.
    pub max_condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsdeSummary {
    pub y0: f64,
    pub std_error: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub basis: RegressionBasis,
}

impl BsdeSolution {
    pub fn n_paths(&self) -> usize {
        self.y.len()
    }

    pub fn n_steps(&self) -> usize {
        self.y.first().map(|v| v.len() - 1).unwrap_or(0)
    }

    pub fn y_at(&self, i: usize, k: usize) -> f64 {
        self.y[i][k - self.start_node]
    }

    pub fn z_at(&self, i: usize, k: usize) -> &[f64] {
        let j = k - self.start_node;
        &self.z[i][j * self.noise_dim..(j + 1) * self.noise_dim]
    }

    pub fn summary(&self) -> BsdeSummary {
        BsdeSummary {
            y0: self.y0,
            std_error: self.std_error,
            n_steps: self.n_steps(),
            n_paths: self.n_paths(),
            basis: self.basis.clone(),
        }
    }

    pub fn estimate(&self, seed: Option<u64>) -> ValueEstimate {
        ValueEstimate {
            value: self.y0,
            std_error: self.std_error,
            solver: SolverKind::Regression,
            n_steps: self.n_steps(),
            n_paths: self.n_paths(),
            seed,
        }
    }
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Solves Y(s) = ξ + ∫_s^T q(X_r, Y, Z, u) dr − ∫_s^T Z dW backward on the
/// batch, with conditional expectations regressed on path features.
pub fn solve_bsde(
    batch: &TrajectoryBatch,
    controls: &ControlSet,
    driver: &DriverFn,
    terminal: &TerminalFn,
    cfg: &BsdeConfig,
) -> Result<BsdeSolution> {
    cfg.basis.validate()?;
    if batch.is_empty() {
        return Err(Error::Empty("trajectory batch".into()));
    }
    if !batch.has_increments() {
        return Err(Error::Empty("Brownian increments of the trajectory batch".into()));
    }
    let m = batch.len();
    let n = batch.noise_dim;
    let h = batch.step;
    let start = batch.start_node;
    let end = batch.end_node();
    let steps = end - start;

    let tables: Vec<Vec<Vec<f64>>> = batch.paths.par_iter().map(|p| cfg.basis.raw_table(p, start)).collect();
    let mut y = vec![vec![0.0; steps + 1]; m];
    let mut z = vec![vec![0.0; steps * n]; m];
    let terminal_values: Vec<f64> = batch
        .paths
        .par_iter()
        .map(|p| check_finite(terminal(p), "terminal functional"))
        .collect::<Result<_>>()?;
    // ξ + Σ h·q along each trajectory; its mean tracks y0 and its spread
    // carries the terminal variance into the standard error
    let mut pathwise = terminal_values.clone();
    let mut y_next = terminal_values;
    for (row, v) in y.iter_mut().zip(&y_next) {
        row[steps] = *v;
    }
    let mut max_condition: f64 = 1.0;
    for k in (start..end).rev() {
        let j = k - start;
        let rows: Vec<Vec<f64>> = tables.iter().map(|t| t[j].clone()).collect();
        let proj = Projection::fit(&rows, &cfg.basis, k)?;
        max_condition = max_condition.max(proj.condition);
        let cont = proj.project(&y_next);
        let mut zk = vec![vec![0.0; n]; m];
        for c in 0..n {
            let target: Vec<f64> = (0..m).map(|i| (y_next[i] - cont[i]) * batch.increment(i, k)[c] / h).collect();
            for (zi, v) in zk.iter_mut().zip(proj.project(&target)) {
                zi[c] = v;
            }
        }
        let prefixes: Vec<DiscretePath> = batch.paths.iter().map(|p| p.prefix(k + 1)).collect();
        let q = |i: usize, yv: f64| -> Result<f64> {
            let u = controls.point(batch.control(i, k));
            check_finite(driver(&prefixes[i], yv, &zk[i], u), "driver")
        };
        let (y_k, hq): (Vec<f64>, Vec<f64>) = match cfg.mode {
            StepMode::Implicit => (0..m)
                .into_par_iter()
                .map(|i| {
                    let pred = cont[i] + h * q(i, cont[i])?;
                    let hq = h * q(i, pred)?;
                    Ok((cont[i] + hq, hq))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip(),
            StepMode::Explicit => {
                let hq: Vec<f64> = (0..m).into_par_iter().map(|i| Ok(h * q(i, y_next[i])?)).collect::<Result<_>>()?;
                let target: Vec<f64> = (0..m).map(|i| y_next[i] + hq[i]).collect();
                (proj.project(&target), hq)
            }
        };
        for (acc, v) in pathwise.iter_mut().zip(&hq) {
            *acc += v;
        }
        for i in 0..m {
            y[i][j] = y_k[i];
            z[i][j * n..(j + 1) * n].copy_from_slice(&zk[i]);
        }
        y_next = y_k;
    }
    let y0 = stats::mean(&y_next);
    let std_error = Summary::of(&pathwise).std_error;
    Ok(BsdeSolution {
        start_node: start,
        noise_dim: n,
        y,
        z,
        y0,
        std_error,
        basis: cfg.basis.clone(),
        max_condition,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupConfig {
    pub paths: usize,
    pub seed: u64,
    pub bsde: BsdeConfig,
}

impl SemigroupConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        SemigroupConfig { paths, seed, bsde: BsdeConfig::default() }
    }
}

/// G^{γ_t,u}_{t,t+δ}[η]: simulate on [t, t+δ] and solve the BSDE with terminal
/// η(X_{t+δ}) back to t.
pub fn backward_semigroup(
    coeffs: &CoefficientSet,
    initial: &DiscretePath,
    controls: &ControlSet,
    u: &ControlProcess,
    delta: f64,
    eta: &TerminalFn,
    cfg: &SemigroupConfig,
) -> Result<ValueEstimate> {
    let k = grid_steps(delta, initial.step())?;
    let end = initial.final_time() + delta;
    let horizon_steps = coeffs.horizon_steps(initial.step())?;
    if initial.steps() + k > horizon_steps {
        return Err(Error::BeyondHorizon { requested: end, horizon: coeffs.horizon() });
    }
    let sim = SimConfig::new(cfg.paths, cfg.seed).until(initial.step() * (initial.steps() + k) as f64);
    let batch = simulate(coeffs, initial, controls, u, &sim)?;
    let sol = solve_bsde(&batch, controls, &coeffs.driver_fn(), eta, &cfg.bsde)?;
    Ok(sol.estimate(Some(cfg.seed)))
}

/// Outcome of solving two BSDEs with ordered terminals on shared noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Fraction of (trajectory, step) pairs with Y_hi ≥ Y_lo − 3·SE_k.
    pub pointwise_fraction: f64,
    /// Most negative Y_hi − Y_lo over all pairs (0 if none negative).
    pub worst_violation: f64,
    /// Every step mean of Y_hi − Y_lo is ≥ −3·SE_k.
    pub step_means_ordered: bool,
    /// Most negative step mean of Y_hi − Y_lo in units of its standard error.
    pub worst_mean_z_score: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Solves both BSDEs on the same trajectories and checks that the ordering of
/// the terminals propagates to every time step.
pub fn comparison_check(
    batch: &TrajectoryBatch,
    controls: &ControlSet,
    driver: &DriverFn,
    terminal_lo: &TerminalFn,
    terminal_hi: &TerminalFn,
    cfg: &BsdeConfig,
) -> Result<ComparisonReport> {
    let lo = solve_bsde(batch, controls, driver, terminal_lo, cfg)?;
    let hi = solve_bsde(batch, controls, driver, terminal_hi, cfg)?;
    Ok(compare_solutions(&lo, &hi))
}

pub fn compare_solutions(lo: &BsdeSolution, hi: &BsdeSolution) -> ComparisonReport {
    let m = lo.n_paths();
    let cols = lo.n_steps() + 1;
    let mut ok = 0usize;
    let mut worst: f64 = 0.0;
    let mut means_ordered = true;
    let mut worst_z: f64 = 0.0;
    for j in 0..cols {
        let gaps: Vec<f64> = (0..m).map(|i| hi.y[i][j] - lo.y[i][j]).collect();
        let s = Summary::of(&gaps);
        let tol = 3.0 * s.std_error;
        ok += gaps.iter().filter(|&&g| g >= -tol).count();
        worst = gaps.iter().copied().fold(worst, f64::min);
        if s.mean < -tol {
            means_ordered = false;
        }
        if s.mean < 0.0 {
            let z = if s.std_error > 0.0 { s.mean / s.std_error } else { f64::NEG_INFINITY };
            worst_z = worst_z.min(z);
        }
    }
    let pairs = m * cols;
    let pointwise_fraction = ok as f64 / pairs as f64;
    ComparisonReport {
        pointwise_fraction,
        worst_violation: worst,
        step_means_ordered: means_ordered,
        worst_mean_z_score: worst_z,
        pairs,
        pass: pointwise_fraction == 1.0,
    }
}

/// Both sides of the a-priori estimate for two BSDEs sharing a driver up to
/// deterministic perturbations φ¹ − φ².
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityGapReport {
    pub lhs: f64,
    pub rhs: f64,
    pub beta: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Empirical both sides of
/// |ΔY(t)|² + ½E∫(|ΔY|² + |ΔZ|²)e^{β(s−t)}ds ≤ E|Δξ|²e^{β(T−t)} + E∫|Δφ|²e^{β(s−t)}ds.
/// `varphi_gap[j]` is φ¹ − φ² on step j of the solutions' grid.
pub fn stability_gap(
    a: &BsdeSolution,
    b: &BsdeSolution,
    varphi_gap: &[f64],
    step: f64,
    lipschitz: f64,
    beta: f64,
    slack: f64,
) -> Result<StabilityGapReport> {
    let floor = 2.0 * (2.0 * lipschitz * lipschitz + lipschitz + 1.0);
    if beta < floor {
        return Err(Error::OutOfRange(format!("beta {beta} is below 2(2L² + L + 1) = {floor}")));
    }
    if a.n_paths() != b.n_paths() || a.n_steps() != b.n_steps() {
        return Err(Error::LengthMismatch { expected: a.n_paths() * a.n_steps(), found: b.n_paths() * b.n_steps() });
    }
    let steps = a.n_steps();
    if varphi_gap.len() != steps {
        return Err(Error::LengthMismatch { expected: steps, found: varphi_gap.len() });
    }
    let m = a.n_paths();
    let n = a.noise_dim;
    let dy0 = a.y0 - b.y0;
    let mut integral = 0.0;
    let mut forcing = 0.0;
    for j in 0..steps {
        let w = (beta * step * j as f64).exp() * step;
        let sq: Vec<f64> = (0..m)
            .map(|i| {
                let dy = a.y[i][j] - b.y[i][j];
                let dz: f64 = (0..n).map(|c| (a.z[i][j * n + c] - b.z[i][j * n + c]).powi(2)).sum();
                dy * dy + dz
            })
            .collect();
        integral += stats::mean(&sq) * w;
        forcing += varphi_gap[j] * varphi_gap[j] * w;
    }
    let dxi: Vec<f64> = (0..m).map(|i| (a.y[i][steps] - b.y[i][steps]).powi(2)).collect();
    let lhs = dy0 * dy0 + 0.5 * integral;
    let rhs = stats::mean(&dxi) * (beta * step * steps as f64).exp() + forcing;
    Ok(StabilityGapReport { lhs, rhs, beta, slack, pass: lhs <= rhs * (1.0 + slack) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::simulate_forward;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn bm_batch(steps: usize, paths: usize, seed: u64) -> (TrajectoryBatch, ControlSet) {
        let c = CoefficientSet::zero(1, 1, 1.0).unwrap().with_diffusion(|_, _| DMatrix::from_element(1, 1, 1.0));
        let u = ControlSet::singleton(vec![0.0]);
        let origin = DiscretePath::zeros(1, 1.0 / steps as f64, 1).unwrap();
        (simulate_forward(&c, &origin, &u, &ControlProcess::Constant(0), paths, seed).unwrap(), u)
    }

    fn zero_driver() -> DriverFn {
        Arc::new(|_, _, _, _| 0.0)
    }

    #[test]
    fn constant_terminal_is_exact() {
        let (b, u) = bm_batch(16, 500, 1);
        let term: TerminalFn = Arc::new(|_| 1.25);
        let s = solve_bsde(&b, &u, &zero_driver(), &term, &BsdeConfig::default()).unwrap();
        assert!(s.y.iter().flatten().all(|&v| v == 1.25));
        assert!(s.z.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(s.y0, 1.25);
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn terminal_values_are_exact() {
        let (b, u) = bm_batch(8, 200, 2);
        let term: TerminalFn = Arc::new(|p| p.endpoint()[0].sin());
        let s = solve_bsde(&b, &u, &zero_driver(), &term, &BsdeConfig::default()).unwrap();
        for (i, p) in b.paths.iter().enumerate() {
            assert_eq!(s.y[i][8], p.endpoint()[0].sin());
        }
    }

    #[test]
    fn martingale_representation_of_brownian_terminal() {
        let (b, u) = bm_batch(50, 20_000, 3);
        let term: TerminalFn = Arc::new(|p| p.endpoint()[0]);
        let s = solve_bsde(&b, &u, &zero_driver(), &term, &BsdeConfig::new(RegressionBasis::state(3))).unwrap();
        let worst = (0..50)
            .map(|j| {
                let sq: Vec<f64> = (0..b.len()).map(|i| (s.z[i][j] - 1.0).powi(2)).collect();
                stats::mean(&sq).sqrt()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 0.1, "max over steps of the L² deviation of Z from 1: {worst}");
        for (i, p) in b.paths.iter().enumerate().take(50) {
            assert!((s.y[i][25] - p.node(25)[0]).abs() < 0.05);
        }
    }

    #[test]
    fn linear_in_the_terminal() {
        let (b, u) = bm_batch(8, 1_000, 4);
        let f: TerminalFn = Arc::new(|p| p.endpoint()[0].powi(2));
        let g: TerminalFn = Arc::new(|p| p.running_integral()[0]);
        let fg: TerminalFn = Arc::new(|p| 2.0 * p.endpoint()[0].powi(2) - 3.0 * p.running_integral()[0]);
        let cfg = BsdeConfig::default();
        let sf = solve_bsde(&b, &u, &zero_driver(), &f, &cfg).unwrap();
        let sg = solve_bsde(&b, &u, &zero_driver(), &g, &cfg).unwrap();
        let sfg = solve_bsde(&b, &u, &zero_driver(), &fg, &cfg).unwrap();
        for i in 0..b.len() {
            for j in 0..=8 {
                let lin = 2.0 * sf.y[i][j] - 3.0 * sg.y[i][j];
                assert!((sfg.y[i][j] - lin).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shifted_terminal_shifts_the_solution() {
        let (b, u) = bm_batch(16, 1_000, 5);
        let lo: TerminalFn = Arc::new(|p| p.endpoint()[0]);
        let hi: TerminalFn = Arc::new(|p| p.endpoint()[0] + 1.0);
        let r = comparison_check(&b, &u, &zero_driver(), &lo, &hi, &BsdeConfig::default()).unwrap();
        assert!(r.pass);
        let s_lo = solve_bsde(&b, &u, &zero_driver(), &lo, &BsdeConfig::default()).unwrap();
        let s_hi = solve_bsde(&b, &u, &zero_driver(), &hi, &BsdeConfig::default()).unwrap();
        for i in 0..b.len() {
            for j in 0..=16 {
                assert!((s_hi.y[i][j] - s_lo.y[i][j] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_terminals_compare_equal() {
        let (b, u) = bm_batch(8, 300, 6);
        let f: TerminalFn = Arc::new(|p| p.endpoint()[0].abs());
        let r = comparison_check(&b, &u, &zero_driver(), &f, &f, &BsdeConfig::default()).unwrap();
        assert!(r.pass);
        assert_eq!(r.worst_violation, 0.0);
    }

    #[test]
    fn semigroup_with_constant_terminal() {
        let c = CoefficientSet::zero(1, 1, 1.0).unwrap().with_diffusion(|_, _| DMatrix::from_element(1, 1, 1.0));
        let u = ControlSet::singleton(vec![0.0]);
        let origin = DiscretePath::zeros(1, 0.125, 1).unwrap();
        let eta: TerminalFn = Arc::new(|_| -0.5);
        let v = backward_semigroup(&c, &origin, &u, &ControlProcess::Constant(0), 0.5, &eta, &SemigroupConfig::new(100, 1))
            .unwrap();
        assert_eq!(v.value, -0.5);
        assert!(backward_semigroup(&c, &origin, &u, &ControlProcess::Constant(0), 1.5, &eta, &SemigroupConfig::new(10, 1))
            .is_err());
    }

    #[test]
    fn semigroup_without_driver_is_a_sample_mean() {
        let c = CoefficientSet::zero(1, 1, 1.0).unwrap().with_diffusion(|_, _| DMatrix::from_element(1, 1, 1.0));
        let u = ControlSet::singleton(vec![0.0]);
        let origin = DiscretePath::zeros(1, 0.125, 1).unwrap();
        let eta: TerminalFn = Arc::new(|p| p.endpoint()[0].powi(2));
        let cfg = SemigroupConfig::new(2_000, 9);
        let v = backward_semigroup(&c, &origin, &u, &ControlProcess::Constant(0), 0.5, &eta, &cfg).unwrap();
        let b = simulate(&c, &origin, &u, &ControlProcess::Constant(0), &SimConfig::new(2_000, 9).until(0.5)).unwrap();
        let direct = stats::mean(&b.paths.iter().map(|p| p.endpoint()[0].powi(2)).collect::<Vec<_>>());
        assert!((v.value - direct).abs() < 1e-12, "{} vs {}", v.value, direct);
    }

    #[test]
    fn stability_gap_identical_inputs() {
        let (b, u) = bm_batch(8, 200, 7);
        let f: TerminalFn = Arc::new(|p| p.endpoint()[0]);
        let s = solve_bsde(&b, &u, &zero_driver(), &f, &BsdeConfig::default()).unwrap();
        let r = stability_gap(&s, &s, &[0.0; 8], 0.125, 1.0, 10.0, 0.1).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass);
        assert!(stability_gap(&s, &s, &[0.0; 8], 0.125, 1.0, 7.9, 0.1).is_err());
    }

    #[test]
    fn bsde_summary_json_fields() {
        let (b, u) = bm_batch(4, 50, 8);
        let f: TerminalFn = Arc::new(|p| p.endpoint()[0]);
        let s = solve_bsde(&b, &u, &zero_driver(), &f, &BsdeConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(s.summary()).unwrap();
        for key in ["y0", "std_error", "n_steps", "n_paths", "basis"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
