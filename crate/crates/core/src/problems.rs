//! Built-in benchmark problems with closed-form value functionals.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calculus::{Derivatives, FunctionalHandle};
use crate::error::{Error, Result};
use crate::path::DiscretePath;
use crate::sde::{CoefficientSet, ControlSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemId {
    #[serde(rename = "P1_frozen")]
    P1Frozen,
    #[serde(rename = "P2_drift_control")]
    P2DriftControl,
    #[serde(rename = "P3_running_integral")]
    P3RunningIntegral,
    #[serde(rename = "P4_multiplicative")]
    P4Multiplicative,
}

impl ProblemId {
    pub const ALL: [ProblemId; 4] =
        [ProblemId::P1Frozen, ProblemId::P2DriftControl, ProblemId::P3RunningIntegral, ProblemId::P4Multiplicative];

    pub fn name(&self) -> &'static str {
        match self {
            ProblemId::P1Frozen => "P1_frozen",
            ProblemId::P2DriftControl => "P2_drift_control",
            ProblemId::P3RunningIntegral => "P3_running_integral",
            ProblemId::P4Multiplicative => "P4_multiplicative",
        }
    }

    pub fn short(&self) -> &'static str {
        &self.name()[..2]
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    /// Accepts the full name or the short `P1`..`P4` form, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|id| s.eq_ignore_ascii_case(id.name()) || s.eq_ignore_ascii_case(id.short()))
            .ok_or_else(|| Error::UnknownProblem(s.to_string()))
    }
}

/// A benchmark: coefficients, controls and (when known) the value functional.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub id: ProblemId,
    pub coeffs: CoefficientSet,
    pub controls: ControlSet,
    pub analytic: Option<FunctionalHandle>,
    pub note: &'static str,
}

impl ProblemSpec {
    pub fn horizon(&self) -> f64 {
        self.coeffs.horizon()
    }

    /// |closed form − tree value| at `p` for the tree on the same grid. The
    /// left-Riemann running integral of P3 loses h(T − t)/2 against the
    /// closed form; every other benchmark is exact on the tree.
    pub fn tree_budget(&self, p: &DiscretePath) -> f64 {
        match self.id {
            ProblemId::P3RunningIntegral => p.step() * (self.horizon() - p.final_time()) / 2.0,
            _ => 0.0,
        }
    }
}

fn one() -> DMatrix<f64> {
    DMatrix::from_element(1, 1, 1.0)
}

fn endpoint_handle(offset: impl Fn(f64) -> f64 + Send + Sync + 'static, dt: f64) -> FunctionalHandle {
    FunctionalHandle::new(move |p| p.endpoint()[0] + offset(p.final_time()))
        .with_growth_degree(1)
        .with_unchecked_derivatives(
            Derivatives::default().dt(move |_| dt).dx(|_| vec![1.0]).dxx(|_| DMatrix::zeros(1, 1)),
        )
}

pub fn make_problem(id: ProblemId) -> ProblemSpec {
    make_problem_with_horizon(id, 1.0).expect("unit horizon is valid")
}

pub fn make_problem_with_horizon(id: ProblemId, horizon: f64) -> Result<ProblemSpec> {
    let base = CoefficientSet::zero(1, 1, horizon)?.with_lipschitz(1.0);
    let spec = match id {
        ProblemId::P1Frozen => ProblemSpec {
            id,
            coeffs: base.with_terminal(|p| p.endpoint()[0]),
            controls: ControlSet::singleton(vec![0.0]),
            analytic: Some(endpoint_handle(|_| 0.0, 0.0)),
            note: "frozen dynamics: F = G = q = 0, terminal γ(T); V(γ_t) = γ(t)",
        },
        ProblemId::P2DriftControl => ProblemSpec {
            id,
            coeffs: base
                .with_drift(|_, u| vec![u[0]])
                .with_diffusion(|_, _| one())
                .with_terminal(|p| p.endpoint()[0]),
            controls: ControlSet::scalar(&[-1.0, 0.0, 1.0])?,
            analytic: Some(endpoint_handle(move |t| horizon - t, -1.0)),
            note: "drift control dX = u dt + dW, U = {-1, 0, 1}, terminal γ(T); V(γ_t) = γ(t) + (T - t)",
        },
        ProblemId::P3RunningIntegral => {
            let v = move |p: &DiscretePath| {
                let r = horizon - p.final_time();
                p.running_integral()[0] + p.endpoint()[0] * r + r * r / 2.0
            };
            ProblemSpec {
                id,
                coeffs: base
                    .with_drift(|_, u| vec![u[0]])
                    .with_diffusion(|_, _| one())
                    .with_terminal(|p| p.running_integral()[0]),
                controls: ControlSet::scalar(&[-1.0, 1.0])?,
                analytic: Some(FunctionalHandle::new(v).with_growth_degree(1).with_unchecked_derivatives(
                    Derivatives::default()
                        .dt(move |p| -(horizon - p.final_time()))
                        .dx(move |p| vec![horizon - p.final_time()])
                        .dxx(|_| DMatrix::zeros(1, 1)),
                )),
                note: "running-integral payoff, dX = u dt + dW, U = {-1, 1}; \
                       V(γ_t) = ∫₀^t γ + γ(t)(T - t) + (T - t)²/2",
            }
        }
        ProblemId::P4Multiplicative => ProblemSpec {
            id,
            coeffs: base
                .with_diffusion(|p, _| DMatrix::from_element(1, 1, p.endpoint()[0]))
                .with_terminal(|p| p.endpoint()[0]),
            controls: ControlSet::singleton(vec![0.0]),
            analytic: Some(endpoint_handle(|_| 0.0, 0.0)),
            note: "multiplicative noise dX = X dW vanishing at the zero path; V(γ_t) = γ(t)",
        },
    };
    Ok(spec)
}

/// A problem in the portable inline form: coefficients as expressions over
/// `x` (endpoint), `integral`, `runmax`, `t`, `u`, and for the driver `y`
/// and `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSchema {
    pub name: String,
    pub horizon: f64,
    pub controls: Vec<f64>,
    pub drift: String,
    pub diffusion: String,
    pub driver: String,
    pub terminal: String,
    pub lipschitz: Option<f64>,
}

impl ProblemSpec {
    /// The problem in inline form; loading it reproduces these coefficients.
    pub fn schema(&self) -> ProblemSchema {
        let (drift, diffusion, terminal) = match self.id {
            ProblemId::P1Frozen => ("0", "0", "x"),
            ProblemId::P2DriftControl => ("u", "1", "x"),
            ProblemId::P3RunningIntegral => ("u", "1", "integral"),
            ProblemId::P4Multiplicative => ("0", "x", "x"),
        };
        ProblemSchema {
            name: self.id.name().into(),
            horizon: self.horizon(),
            controls: self.controls.points().iter().map(|u| u[0]).collect(),
            drift: drift.into(),
            diffusion: diffusion.into(),
            driver: "0".into(),
            terminal: terminal.into(),
            lipschitz: self.coeffs.lipschitz(),
        }
    }
}

/// The closed-form value functional of `spec` at `p`.
pub fn analytic_value(spec: &ProblemSpec, p: &DiscretePath) -> Result<f64> {
    let v = spec.analytic.as_ref().ok_or(Error::NoClosedForm)?;
    if p.final_time() > spec.horizon() + 1e-12 {
        return Err(Error::BeyondHorizon { requested: p.final_time(), horizon: spec.horizon() });
    }
    v.try_eval(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::ProbeSpec;
    use crate::control::value_tree;

    #[test]
    fn parse_ids() {
        assert_eq!("P2".parse::<ProblemId>().unwrap(), ProblemId::P2DriftControl);
        assert_eq!("p3_running_integral".parse::<ProblemId>().unwrap(), ProblemId::P3RunningIntegral);
        assert!(matches!("P9".parse::<ProblemId>(), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn analytic_examples() {
        let p1 = make_problem(ProblemId::P1Frozen);
        let q = DiscretePath::scalar(0.25, &[0.0, 0.7, -0.4]).unwrap();
        assert_eq!(analytic_value(&p1, &q).unwrap(), -0.4);

        let p2 = make_problem(ProblemId::P2DriftControl);
        let q = DiscretePath::scalar(0.5, &[0.0, 0.3]).unwrap();
        assert!((analytic_value(&p2, &q).unwrap() - 0.8).abs() < 1e-15);

        let p3 = make_problem(ProblemId::P3RunningIntegral);
        assert_eq!(analytic_value(&p3, &DiscretePath::zeros(1, 0.25, 1).unwrap()).unwrap(), 0.5);
        let p3_long = make_problem_with_horizon(ProblemId::P3RunningIntegral, 2.0).unwrap();
        assert_eq!(analytic_value(&p3_long, &DiscretePath::zeros(1, 0.25, 1).unwrap()).unwrap(), 2.0);

        let p4 = make_problem(ProblemId::P4Multiplicative);
        let q = DiscretePath::scalar(0.5, &[0.0, 2.0]).unwrap();
        assert_eq!(analytic_value(&p4, &q).unwrap(), 2.0);
    }

    #[test]
    fn analytic_derivatives_agree_with_finite_differences() {
        for id in ProblemId::ALL {
            let spec = make_problem(id);
            spec.analytic.as_ref().unwrap().check_derivatives(&ProbeSpec::new(1)).unwrap();
        }
    }

    #[test]
    fn tree_matches_closed_forms_within_budget() {
        for id in ProblemId::ALL {
            let spec = make_problem(id);
            let origin = DiscretePath::zeros(1, 0.125, 1).unwrap();
            let tree = value_tree(&spec.coeffs, &origin, &spec.controls, 8).unwrap().value;
            let exact = analytic_value(&spec, &origin).unwrap();
            let budget = spec.tree_budget(&origin);
            assert!(((exact - tree).abs() - budget).abs() < 1e-12, "{id}: tree {tree}, closed form {exact}");
        }
    }
}
