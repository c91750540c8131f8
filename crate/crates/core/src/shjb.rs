//! Lifting state-dependent control problems driven by a Brownian path into the
//! augmented path space, and the pure-BSDE special case.
//!
//! The augmented path is (ω, ξ) with ω ∈ ℝ^d the driving Brownian path and
//! ξ ∈ ℝ^m the controlled state. The lifted diffusion is (I_d; Ḡ), so the
//! first d components reproduce the noise exactly.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bsde::{solve_bsde, BsdeConfig, SolverKind, ValueEstimate};
use crate::control::{value_regression, value_tree, SolverConfig};
use crate::error::{Error, Result};
use crate::path::{grid_steps, DiscretePath};
use crate::sde::{increments_at, CoefficientSet, ControlSet, DriverFn, NoiseKind, TerminalFn, TrajectoryBatch};

pub type LiftedDriftFn = Arc<dyn Fn(&DiscretePath, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type LiftedDiffusionFn = Arc<dyn Fn(&DiscretePath, &[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;
pub type LiftedDriverFn = Arc<dyn Fn(&DiscretePath, &[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type LiftedTerminalFn = Arc<dyn Fn(&DiscretePath, &[f64]) -> f64 + Send + Sync>;

/// State coefficients F̄(ω, x, u), Ḡ(ω, x, u), q̄(ω, x, y, z, u) and φ̄(ω, x),
/// where ω is the Brownian path so far and x the current state.
#[derive(Clone)]
pub struct LiftedProblem {
    pub dim_noise: usize,
    pub dim_state: usize,
    pub horizon: f64,
    pub bar_f: LiftedDriftFn,
    pub bar_g: LiftedDiffusionFn,
    pub bar_q: LiftedDriverFn,
    pub bar_phi: LiftedTerminalFn,
}

impl std::fmt::Debug for LiftedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiftedProblem")
            .field("dim_noise", &self.dim_noise)
            .field("dim_state", &self.dim_state)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl LiftedProblem {
    /// All coefficients zero.
    pub fn zero(dim_noise: usize, dim_state: usize, horizon: f64) -> Result<Self> {
        if dim_noise == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::OutOfRange(format!("horizon {horizon} must be positive")));
        }
        Ok(LiftedProblem {
            dim_noise,
            dim_state,
            horizon,
            bar_f: Arc::new(move |_, _, _| vec![0.0; dim_state]),
            bar_g: Arc::new(move |_, _, _| DMatrix::zeros(dim_state, dim_noise)),
            bar_q: Arc::new(|_, _, _, _, _| 0.0),
            bar_phi: Arc::new(|_, _| 0.0),
        })
    }

    pub fn with_bar_f(mut self, f: impl Fn(&DiscretePath, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.bar_f = Arc::new(f);
        self
    }

    pub fn with_bar_g(mut self, g: impl Fn(&DiscretePath, &[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.bar_g = Arc::new(g);
        self
    }

    pub fn with_bar_q(
        mut self,
        q: impl Fn(&DiscretePath, &[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.bar_q = Arc::new(q);
        self
    }

    pub fn with_bar_phi(mut self, phi: impl Fn(&DiscretePath, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.bar_phi = Arc::new(phi);
        self
    }
}

fn split(p: &DiscretePath, d: usize) -> (DiscretePath, Vec<f64>) {
    (p.components(0..d), p.endpoint()[d..].to_vec())
}

/// Coefficients on ℝ^{d+m} with noise dimension d: F = (0; F̄),
/// G = (I_d; Ḡ), q and φ read ω from the first d components and x = ξ(t)
/// from the last m.
pub fn lift_coefficients(lp: &LiftedProblem, controls: &ControlSet) -> Result<CoefficientSet> {
    let (d, m) = (lp.dim_noise, lp.dim_state);
    let (f, g, q, phi) = (lp.bar_f.clone(), lp.bar_g.clone(), lp.bar_q.clone(), lp.bar_phi.clone());
    let coeffs = CoefficientSet::zero(d + m, d, lp.horizon)?
        .with_drift(move |p, u| {
            let (w, x) = split(p, d);
            let mut out = vec![0.0; d];
            out.extend(f(&w, &x, u));
            out
        })
        .with_diffusion(move |p, u| {
            let (w, x) = split(p, d);
            let gb = g(&w, &x, u);
            let mut out = DMatrix::zeros(d + m, d);
            for i in 0..d {
                out[(i, i)] = 1.0;
            }
            if gb.shape() == (m, d) {
                out.view_mut((d, 0), (m, d)).copy_from(&gb);
                out
            } else {
                DMatrix::from_element(d + m + 1, d, f64::NAN)
            }
        })
        .with_driver(move |p, y, z, u| {
            let (w, x) = split(p, d);
            q(&w, &x, y, z, u)
        })
        .with_terminal(move |p| {
            let (w, x) = split(p, d);
            phi(&w, &x)
        });
    coeffs.check_probes(controls, 8, 0)?;
    Ok(coeffs)
}

/// The augmented initial path: ω on the first d components, the constant
/// path x on the last m.
pub fn augmented_initial(omega: &DiscretePath, x: &[f64]) -> Result<DiscretePath> {
    let d = omega.dim();
    let values = omega.nodes().flat_map(|w| w.iter().chain(x).copied().collect::<Vec<_>>()).collect();
    DiscretePath::from_flat(d + x.len(), omega.step(), values)
}

/// V̄(t, x) = sup_u Ȳ^{t,x,u}(t) through the lifted problem.
pub fn shjb_value(
    lp: &LiftedProblem,
    omega: &DiscretePath,
    x: &[f64],
    controls: &ControlSet,
    solver: &SolverConfig,
) -> Result<ValueEstimate> {
    if omega.dim() != lp.dim_noise {
        return Err(Error::DimensionMismatch { expected: lp.dim_noise, found: omega.dim() });
    }
    if x.len() != lp.dim_state {
        return Err(Error::DimensionMismatch { expected: lp.dim_state, found: x.len() });
    }
    let coeffs = lift_coefficients(lp, controls)?;
    let initial = augmented_initial(omega, x)?;
    match solver {
        SolverConfig::Tree => {
            let n = coeffs.horizon_steps(omega.step())?;
            if omega.steps() > n {
                return Err(Error::BeyondHorizon { requested: omega.final_time(), horizon: lp.horizon });
            }
            value_tree(&coeffs, &initial, controls, n - omega.steps())
        }
        SolverConfig::Regression(cfg) => value_regression(&coeffs, &initial, controls, cfg),
    }
}

/// V(γ_t) = V̄^{γ_t}(t) for data depending on the Brownian path only: the
/// BSDE solved along M drivers W^{γ_t}, each γ followed by fresh Gaussian
/// increments. The state argument of q̄ and φ̄ is empty.
pub fn bsde_value_functional(
    lp: &LiftedProblem,
    gamma: &DiscretePath,
    paths: usize,
    seed: u64,
    cfg: &BsdeConfig,
) -> Result<ValueEstimate> {
    let d = lp.dim_noise;
    if gamma.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: gamma.dim() });
    }
    if gamma.final_time() > lp.horizon + 1e-12 {
        return Err(Error::BeyondHorizon { requested: gamma.final_time(), horizon: lp.horizon });
    }
    let n = grid_steps(lp.horizon - gamma.final_time(), gamma.step())?;
    let phi = lp.bar_phi.clone();
    if n == 0 {
        let value = phi(gamma, &[]);
        if !value.is_finite() {
            return Err(Error::NonFinite("terminal functional".into()));
        }
        return Ok(ValueEstimate { value, std_error: 0.0, solver: SolverKind::Regression, n_steps: 0, n_paths: paths, seed: Some(seed) });
    }
    if paths == 0 {
        return Err(Error::Empty("trajectory batch".into()));
    }
    let start = gamma.steps();
    let h = gamma.step();
    let increments: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| (start..start + n).flat_map(|k| increments_at(seed, i, k, d, h, NoiseKind::Gaussian)).collect())
        .collect();
    let drivers = increments.par_iter().map(|inc| gamma.concat_brownian(inc, lp.horizon)).collect::<Result<Vec<_>>>()?;
    let batch = TrajectoryBatch {
        seed,
        step: h,
        dim: d,
        noise_dim: d,
        noise: NoiseKind::Gaussian,
        start_node: start,
        paths: drivers,
        increments,
        controls: vec![vec![0; n]; paths],
    };
    let q = lp.bar_q.clone();
    let driver: DriverFn = Arc::new(move |p, y, z, u| q(p, &[], y, z, u));
    let terminal: TerminalFn = Arc::new(move |p| phi(p, &[]));
    let sol = solve_bsde(&batch, &ControlSet::singleton(vec![0.0]), &driver, &terminal, cfg)?;
    Ok(sol.estimate(Some(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{simulate_forward, ControlProcess};
    use rand::Rng;

    fn brownian(seed: u64, steps: usize, step: f64) -> DiscretePath {
        let mut rng = crate::rng::keyed(seed, crate::rng::Domain::Probe, 0, 0);
        let incs: Vec<f64> = (0..steps).map(|_| step.sqrt() * rng.random_range(-1.5..1.5)).collect();
        DiscretePath::zeros(1, step, 1).unwrap().concat_brownian(&incs, step * steps as f64).unwrap()
    }

    #[test]
    fn lifted_blocks() {
        let lp = LiftedProblem::zero(1, 1, 1.0).unwrap().with_bar_f(|_, _, u| vec![u[0]]);
        let controls = ControlSet::scalar(&[-1.0, 1.0]).unwrap();
        let c = lift_coefficients(&lp, &controls).unwrap();
        let p = DiscretePath::new(2, 0.25, vec![vec![0.0, 0.5], vec![0.3, 0.1]]).unwrap();
        assert_eq!(c.drift_at(&p, &[1.0]).unwrap(), vec![0.0, 1.0]);
        let g = c.diffusion_at(&p, &[1.0]).unwrap();
        assert_eq!((g[(0, 0)], g[(1, 0)]), (1.0, 0.0));
    }

    #[test]
    fn first_components_reproduce_the_noise() {
        let lp = LiftedProblem::zero(2, 1, 1.0)
            .unwrap()
            .with_bar_f(|_, x, _| vec![-x[0]])
            .with_bar_g(|_, _, _| DMatrix::from_row_slice(1, 2, &[0.3, 0.2]));
        let controls = ControlSet::singleton(vec![0.0]);
        let c = lift_coefficients(&lp, &controls).unwrap();
        let init = augmented_initial(&DiscretePath::zeros(2, 1.0 / 16.0, 1).unwrap(), &[1.0]).unwrap();
        let batch = simulate_forward(&c, &init, &controls, &ControlProcess::Constant(0), 20, 3).unwrap();
        for (i, p) in batch.paths.iter().enumerate() {
            let mut cum = [0.0, 0.0];
            for k in 0..16 {
                let dw = batch.increment(i, k);
                cum[0] += dw[0];
                cum[1] += dw[1];
                assert_eq!(&p.node(k + 1)[..2], &cum[..]);
            }
        }
    }

    #[test]
    fn lifted_tree_matches_unlifted_tree() {
        let lp = LiftedProblem::zero(1, 1, 1.0)
            .unwrap()
            .with_bar_f(|_, x, u| vec![u[0] * (1.0 + 0.1 * x[0].sin())])
            .with_bar_g(|_, x, u| DMatrix::from_element(1, 1, 0.5 + 0.2 * x[0].cos() + 0.1 * u[0]))
            .with_bar_q(|_, x, y, z, u| -0.2 * y + 0.1 * z[0] * u[0] - 0.5 * u[0] * u[0] + 0.05 * x[0])
            .with_bar_phi(|_, x| (x[0] - 0.3).abs());
        let controls = ControlSet::scalar(&[-1.0, 0.0, 1.0]).unwrap();
        let unlifted = CoefficientSet::zero(1, 1, 1.0)
            .unwrap()
            .with_drift(|p, u| vec![u[0] * (1.0 + 0.1 * p.endpoint()[0].sin())])
            .with_diffusion(|p, u| DMatrix::from_element(1, 1, 0.5 + 0.2 * p.endpoint()[0].cos() + 0.1 * u[0]))
            .with_driver(|p, y, z, u| -0.2 * y + 0.1 * z[0] * u[0] - 0.5 * u[0] * u[0] + 0.05 * p.endpoint()[0])
            .with_terminal(|p| (p.endpoint()[0] - 0.3).abs());
        let x = [0.4];
        let expected = value_tree(&unlifted, &DiscretePath::constant(0.25, 1, &x).unwrap(), &controls, 4).unwrap().value;
        let lifted = shjb_value(&lp, &DiscretePath::zeros(1, 0.25, 1).unwrap(), &x, &controls, &SolverConfig::Tree).unwrap();
        assert_eq!(lifted.value, expected);
    }

    #[test]
    fn drift_control_value_and_history_invariance() {
        let lp = LiftedProblem::zero(1, 1, 1.0).unwrap().with_bar_f(|_, _, u| vec![u[0]]).with_bar_phi(|_, x| x[0]);
        let controls = ControlSet::scalar(&[-1.0, 0.0, 1.0]).unwrap();
        let omega = brownian(1, 3, 0.125);
        let v = shjb_value(&lp, &omega, &[0.2], &controls, &SolverConfig::Tree).unwrap();
        assert!((v.value - (0.2 + 1.0 - 0.375)).abs() < 1e-12);

        let coeffs = lift_coefficients(&lp, &controls).unwrap();
        let n = 8 - omega.steps();
        let base = value_tree(&coeffs, &augmented_initial(&omega, &[0.2]).unwrap(), &controls, n).unwrap().value;
        let mut rng = crate::rng::keyed(9, crate::rng::Domain::Probe, 1, 0);
        for _ in 0..10 {
            let mut nodes: Vec<Vec<f64>> =
                omega.nodes().map(|w| vec![w[0], rng.random_range(-2.0..2.0)]).collect();
            nodes.last_mut().unwrap()[1] = 0.2;
            let init = DiscretePath::new(2, 0.125, nodes).unwrap();
            assert_eq!(value_tree(&coeffs, &init, &controls, n).unwrap().value, base);
        }
    }

    #[test]
    fn constant_data_gives_constant_value() {
        let lp = LiftedProblem::zero(1, 1, 1.0).unwrap().with_bar_phi(|_, _| 2.5);
        let controls = ControlSet::singleton(vec![0.0]);
        let v = shjb_value(&lp, &DiscretePath::zeros(1, 0.25, 1).unwrap(), &[0.0], &controls, &SolverConfig::Tree).unwrap();
        assert_eq!(v.value, 2.5);
        let b = bsde_value_functional(&lp, &brownian(2, 2, 0.25), 100, 1, &BsdeConfig::default()).unwrap();
        assert_eq!(b.value, 2.5);
    }

    #[test]
    fn bsde_functional_martingale_and_terminal() {
        let lp = LiftedProblem::zero(1, 0, 1.0).unwrap().with_bar_phi(|w, _| w.endpoint()[0]);
        let gamma = brownian(3, 8, 1.0 / 32.0);
        let v = bsde_value_functional(&lp, &gamma, 4000, 7, &BsdeConfig::default()).unwrap();
        assert!((v.value - gamma.endpoint()[0]).abs() <= 3.0 * v.std_error.max(1e-12), "{v:?}");
        let full = brownian(3, 32, 1.0 / 32.0);
        let at_t = bsde_value_functional(&lp, &full, 10, 7, &BsdeConfig::default()).unwrap();
        assert_eq!(at_t.value, full.endpoint()[0]);
    }

    #[test]
    fn bsde_functional_linear_driver() {
        let lp = LiftedProblem::zero(1, 0, 1.0).unwrap().with_bar_q(|_, _, y, _, _| y).with_bar_phi(|_, _| 1.0);
        let gamma = DiscretePath::zeros(1, 1.0 / 64.0, 1).unwrap();
        let v = bsde_value_functional(&lp, &gamma, 10_000, 4, &BsdeConfig::default()).unwrap();
        assert!((v.value - 1f64.exp()).abs() / 1f64.exp() < 0.01, "{}", v.value);
    }
}
