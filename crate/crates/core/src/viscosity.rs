//! Classical residuals and Hölder-ball viscosity tests for candidate value
//! functionals.
//!
//! Ball sampling can only falsify: a passing report means no counterexample was
//! found among the sampled paths, never that the candidate is a viscosity
//! solution.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{Derivatives, FDConfig, FunctionalHandle};
use crate::control::{hamiltonian, HamiltonianInput};
use crate::error::{Error, Result};
use crate::path::{sample_ball_path, DiscretePath, HolderBallSpec};
use crate::rng::{keyed, Domain};
use crate::sde::{CoefficientSet, ControlSet};

/// Gap allowed between the reported extremum and the sample extremum.
pub const EXTREMUM_TOL: f64 = 1e-9;
/// Slack in the terminal comparison of `W` against the terminal functional.
pub const TERMINAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Sub,
    Super,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sub" => Ok(Side::Sub),
            "super" => Ok(Side::Super),
            _ => Err(Error::Config(format!("side must be `sub` or `super`, got `{s}`"))),
        }
    }
}

/// ∂_tV + 𝐇(γ, V, ∂_xV, ∂_xxV) at `p`.
pub fn classical_residual(
    v: &FunctionalHandle,
    coeffs: &CoefficientSet,
    controls: &ControlSet,
    p: &DiscretePath,
    cfg: &FDConfig,
) -> Result<f64> {
    let dt = v.time_derivative(p, cfg)?;
    let inp = HamiltonianInput::new(v.try_eval(p)?, v.space_gradient(p, cfg)?, v.space_hessian(p, cfg)?)?;
    Ok(dt + hamiltonian(coeffs, p, &inp, controls)?.value)
}

fn common_grid(p: &DiscretePath, anchor: &DiscretePath) -> Result<(DiscretePath, DiscretePath)> {
    p.same_grid(anchor)?;
    let n = p.steps().max(anchor.steps());
    Ok((p.extend_steps(n - p.steps()), anchor.extend_steps(n - anchor.steps())))
}

fn endpoint_gap(p: &DiscretePath, anchor: &DiscretePath) -> Vec<f64> {
    p.endpoint().iter().zip(anchor.endpoint()).map(|(x, a)| x - a).collect()
}

/// d(γ) = |γ(t) − γ̂(t̂)|² + ‖γ − γ̂‖²_H, the shorter path frozen at its
/// endpoint, with closed-form derivatives valid for t ≥ t̂.
pub fn quadratic_penalty(anchor: DiscretePath) -> FunctionalHandle {
    let dim = anchor.dim();
    let (a0, a1, a2) = (anchor.clone(), anchor.clone(), anchor);
    let eval = move |p: &DiscretePath| match common_grid(p, &a0) {
        Ok((x, a)) => {
            let jump: f64 = endpoint_gap(p, &a0).iter().map(|v| v * v).sum();
            jump + x.difference(&a).map(|d| d.h_norm_sq()).unwrap_or(f64::NAN)
        }
        Err(_) => f64::NAN,
    };
    FunctionalHandle::new(eval).with_growth_degree(2).with_unchecked_derivatives(
        Derivatives::default()
            .dt(move |p| endpoint_gap(p, &a1).iter().map(|v| v * v).sum())
            .dx(move |p| endpoint_gap(p, &a2).iter().map(|v| 2.0 * v).collect())
            .dxx(move |_| DMatrix::identity(dim, dim) * 2.0),
    )
}

/// Sampling and tolerance settings for [`viscosity_test`].
#[derive(Debug, Clone)]
pub struct ViscosityConfig {
    pub samples: usize,
    pub terminal_samples: usize,
    pub seed: u64,
    /// Grid step of the sampled ball paths.
    pub step: f64,
    pub tol: f64,
    pub fd: FDConfig,
    /// Extra candidate paths, checked first so ties resolve to them.
    pub hints: Vec<DiscretePath>,
}

impl ViscosityConfig {
    pub fn new(samples: usize, seed: u64, step: f64) -> Self {
        ViscosityConfig { samples, terminal_samples: 1000, seed, step, tol: 1e-2, fd: FDConfig::default(), hints: Vec::new() }
    }

    pub fn with_hint(mut self, p: DiscretePath) -> Self {
        self.hints.push(p);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalCheck {
    pub samples: usize,
    /// Largest violation of w ≤ φ (sub) or w ≥ φ (super); ≤ 0 when none.
    pub worst_violation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViscosityTestReport {
    pub side: Side,
    pub mu: f64,
    pub maximizer: Option<DiscretePath>,
    pub maximizer_time: Option<f64>,
    pub interior: bool,
    pub residual: Option<f64>,
    /// Only set when the extremum is interior.
    pub pass: Option<bool>,
    pub samples: usize,
    /// sup (W − φ) for sub, inf (W + φ) for super, before recentring.
    pub max_gap: Option<f64>,
    /// Gap at the reported extremum after recentring.
    pub extremal_gap: Option<f64>,
    pub no_sample: bool,
    pub terminal: TerminalCheck,
    pub note: String,
}

impl ViscosityTestReport {
    /// Interior condition and terminal condition both hold.
    pub fn passed(&self) -> bool {
        self.pass == Some(true) && self.terminal.pass
    }
}

fn first_node(ball: &HolderBallSpec, step: f64) -> usize {
    (ball.t0 / step - 1e-9).ceil().max(0.0) as usize
}

fn ramp_probes(ball: &HolderBallSpec, dim: usize, step: f64, last: usize) -> Vec<DiscretePath> {
    let mut out = vec![DiscretePath::zeros(dim, step, last + 1).expect("valid grid")];
    let unit: Vec<f64> = (0..=last).map(|k| k as f64 * step).collect();
    let unit_path = DiscretePath::scalar(step, &unit).expect("valid grid");
    let (semi, sup) = (unit_path.holder_seminorm(ball.alpha), unit_path.sup_norm());
    if semi > 0.0 && sup > 0.0 {
        let c = (0.5 * ball.mu / semi).min(0.5 * ball.m0 / sup);
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let vals = unit.iter().flat_map(|s| (0..dim).map(move |j| if j == i { sign * c * s } else { 0.0 })).collect();
                out.push(DiscretePath::from_flat(dim, step, vals).expect("valid grid"));
            }
        }
    }
    out
}

/// Candidate ball members: hints, deterministic probes, then random walks on
/// random horizons in [t₀, T], keeping only members of the ball.
fn ball_candidates(ball: &HolderBallSpec, dim: usize, horizon_steps: usize, cfg: &ViscosityConfig) -> Vec<DiscretePath> {
    let k0 = first_node(ball, cfg.step);
    if k0 > horizon_steps {
        return Vec::new();
    }
    let mut out: Vec<DiscretePath> = cfg.hints.clone();
    out.extend(ramp_probes(ball, dim, cfg.step, horizon_steps.saturating_sub(1).max(k0)));
    out.extend((0..cfg.samples).into_par_iter().map(|i| {
        let mut rng = keyed(cfg.seed, Domain::Ball, i as u64, 0);
        let last = rand::Rng::random_range(&mut rng, k0..=horizon_steps);
        sample_ball_path(ball, dim, cfg.step, last + 1, &mut rng)
    }).collect::<Vec<_>>());
    out.into_iter().filter(|p| (p.step() - cfg.step).abs() <= 1e-12 * cfg.step && p.in_holder_ball(ball).member).collect()
}

fn terminal_check(
    w: &FunctionalHandle,
    side: Side,
    ball: &HolderBallSpec,
    coeffs: &CoefficientSet,
    horizon_steps: usize,
    cfg: &ViscosityConfig,
) -> Result<TerminalCheck> {
    let violations: Vec<f64> = (0..cfg.terminal_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed(cfg.seed, Domain::Ball, i as u64, 1);
            let p = sample_ball_path(ball, coeffs.dim_state(), cfg.step, horizon_steps + 1, &mut rng);
            let gap = w.try_eval(&p)? - coeffs.terminal_at(&p)?;
            Ok(match side {
                Side::Sub => gap,
                Side::Super => -gap,
            })
        })
        .collect::<Result<_>>()?;
    let worst = violations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = if violations.is_empty() { 0.0 } else { worst };
    Ok(TerminalCheck { samples: violations.len(), worst_violation: worst, pass: worst <= TERMINAL_TOL })
}

/// Tests the sub- or supersolution condition of `w` against `phi` over the
/// Hölder ball: sub looks for the max of w − φ, super for the min of w + φ.
#[allow(clippy::too_many_arguments)]
pub fn viscosity_test(
    w: &FunctionalHandle,
    phi: &FunctionalHandle,
    side: Side,
    ball: &HolderBallSpec,
    coeffs: &CoefficientSet,
    controls: &ControlSet,
    cfg: &ViscosityConfig,
) -> Result<ViscosityTestReport> {
    let horizon_steps = coeffs.horizon_steps(cfg.step)?;
    let terminal = terminal_check(w, side, ball, coeffs, horizon_steps, cfg)?;
    let candidates = ball_candidates(ball, coeffs.dim_state(), horizon_steps, cfg);
    let mut report = ViscosityTestReport {
        side,
        mu: ball.mu,
        maximizer: None,
        maximizer_time: None,
        interior: false,
        residual: None,
        pass: None,
        samples: candidates.len(),
        max_gap: None,
        extremal_gap: None,
        no_sample: candidates.is_empty(),
        terminal,
        note: String::new(),
    };
    if candidates.is_empty() {
        report.note = "no sampled path lies in the ball".into();
        return Ok(report);
    }
    // sub: maximize w − φ; super: maximize −(w + φ)
    let sign = match side {
        Side::Sub => -1.0,
        Side::Super => 1.0,
    };
    let gaps: Vec<f64> = candidates
        .par_iter()
        .map(|p| {
            let g = w.try_eval(p)? + sign * phi.try_eval(p)?;
            Ok(if side == Side::Sub { g } else { -g })
        })
        .collect::<Result<_>>()?;
    let (best, best_gap) = gaps.iter().enumerate().fold((0, gaps[0]), |acc, (i, &g)| if g > acc.1 { (i, g) } else { acc });
    let hat = candidates[best].clone();
    let extremum = if side == Side::Sub { best_gap } else { -best_gap };
    // recentred φ̃ = φ + c so that the extremal gap is zero
    let c = if side == Side::Sub { extremum } else { -extremum };
    let phi_hat = phi.try_eval(&hat)? + c;
    let extremal_gap = w.try_eval(&hat)? + sign * phi_hat;
    let s = hat.final_time();
    let endpoint_norm = hat.endpoint().iter().map(|v| v * v).sum::<f64>().sqrt();
    report.interior = hat.steps() < horizon_steps && endpoint_norm < ball.m0;
    report.maximizer_time = Some(s);
    report.max_gap = Some(extremum);
    report.extremal_gap = Some(extremal_gap);
    report.maximizer = Some(hat.clone());
    if !report.interior {
        report.note = format!("extremum at s = {s} is not interior; no verdict");
        return Ok(report);
    }
    if extremal_gap.abs() > EXTREMUM_TOL {
        report.note = format!("extremal gap {extremal_gap} exceeds {EXTREMUM_TOL} after recentring");
        return Ok(report);
    }
    let dt = phi.time_derivative(&hat, &cfg.fd)?;
    let dx = phi.space_gradient(&hat, &cfg.fd)?;
    let dxx = phi.space_hessian(&hat, &cfg.fd)?;
    let residual = match side {
        Side::Sub => dt + hamiltonian(coeffs, &hat, &HamiltonianInput::new(phi_hat, dx, dxx)?, controls)?.value,
        Side::Super => {
            let neg: Vec<f64> = dx.iter().map(|v| -v).collect();
            -dt + hamiltonian(coeffs, &hat, &HamiltonianInput::new(-phi_hat, neg, -dxx)?, controls)?.value
        }
    };
    let pass = match side {
        Side::Sub => residual >= -cfg.tol,
        Side::Super => residual <= cfg.tol,
    };
    report.residual = Some(residual);
    report.pass = Some(pass);
    report.note = if pass {
        format!("no counterexample found at {} samples", report.samples)
    } else {
        format!("condition violated at the extremum: residual {residual}")
    };
    Ok(report)
}

/// Reports of a sweep over increasing μ with the running lim-inf (sub) or
/// lim-sup (super) of the residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuSweepReport {
    pub reports: Vec<ViscosityTestReport>,
    pub running: Vec<Option<f64>>,
    /// max − min of the residuals that were evaluated.
    pub spread: Option<f64>,
}

/// Runs [`viscosity_test`] per μ with the same seed, feeding each extremum to
/// the next run as a hint.
#[allow(clippy::too_many_arguments)]
pub fn mu_limit_sweep(
    w: &FunctionalHandle,
    phi: &FunctionalHandle,
    side: Side,
    ball: &HolderBallSpec,
    coeffs: &CoefficientSet,
    controls: &ControlSet,
    cfg: &ViscosityConfig,
    mus: &[f64],
) -> Result<MuSweepReport> {
    if mus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("the mu sweep must be strictly increasing".into()));
    }
    let mut cfg = cfg.clone();
    let mut reports = Vec::with_capacity(mus.len());
    let mut running = Vec::with_capacity(mus.len());
    let mut acc: Option<f64> = None;
    for &mu in mus {
        let r = viscosity_test(w, phi, side, &ball.with_mu(mu)?, coeffs, controls, &cfg)?;
        if let Some(res) = r.residual {
            acc = Some(match (acc, side) {
                (None, _) => res,
                (Some(a), Side::Sub) => a.min(res),
                (Some(a), Side::Super) => a.max(res),
            });
        }
        running.push(acc);
        if let Some(m) = &r.maximizer {
            cfg.hints.insert(0, m.clone());
        }
        reports.push(r);
    }
    let residuals: Vec<f64> = reports.iter().filter_map(|r| r.residual).collect();
    let spread = (!residuals.is_empty()).then(|| {
        residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - residuals.iter().copied().fold(f64::INFINITY, f64::min)
    });
    Ok(MuSweepReport { reports, running, spread })
}

/// A random interior member of the ball, for anchoring penalties.
pub fn sample_interior_anchor(ball: &HolderBallSpec, dim: usize, step: f64, horizon: f64, seed: u64) -> Result<DiscretePath> {
    let n = crate::path::grid_steps(horizon, step)?;
    let k0 = first_node(ball, step);
    if k0 >= n {
        return Err(Error::OutOfRange(format!("t0 = {} leaves no interior time before {horizon}", ball.t0)));
    }
    let mut rng = keyed(seed, Domain::Ball, 0, 2);
    let last = rand::Rng::random_range(&mut rng, k0..n);
    Ok(sample_ball_path(ball, dim, step, last + 1, &mut rng))
}
