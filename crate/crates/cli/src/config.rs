//! Run configuration files and problem loading.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::Deserialize;

use pathhjb::calculus::FunctionalHandle;
use pathhjb::problems::{make_problem, ProblemId};
use pathhjb::regression::RegressionBasis;
use pathhjb::sde::{CoefficientSet, ControlSet};
use pathhjb::shjb::{augmented_initial, lift_coefficients, LiftedProblem};
use pathhjb::DiscretePath;

use crate::expr::{Env, Expr, Var};

pub const CONFIG_VERSION: u32 = 1;

/// Every field is optional; command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: Option<u32>,
    pub problem: Option<serde_json::Value>,
    pub solver: Option<String>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub basis: Option<RegressionBasis>,
    pub delta: Option<f64>,
    pub mu: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub m0: Option<f64>,
    pub t0: Option<f64>,
    pub side: Option<String>,
    pub tolerance: Option<f64>,
    pub samples: Option<usize>,
    pub path: Option<Vec<f64>>,
    pub control: Option<usize>,
    pub shift: Option<f64>,
    pub criteria: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(v) = cfg.version {
            if v != CONFIG_VERSION {
                bail!("config field `version`: expected {CONFIG_VERSION}, found {v}");
            }
        }
        if let Some(p) = &cfg.problem {
            ProblemSource::from_json(p)?;
        }
        if let Some(b) = &cfg.basis {
            b.validate().context("config field `basis`")?;
        }
        Ok(cfg)
    }
}

fn default_horizon() -> f64 {
    1.0
}

fn default_controls() -> Vec<f64> {
    vec![0.0]
}

fn zero_expr() -> String {
    "0".into()
}

fn endpoint_expr() -> String {
    "x".into()
}

/// Scalar coefficients written in the expression grammar. With `lifted`,
/// `w` is the Brownian endpoint and `x` the controlled state.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_controls")]
    pub controls: Vec<f64>,
    #[serde(default = "zero_expr")]
    pub drift: String,
    #[serde(default = "zero_expr")]
    pub diffusion: String,
    #[serde(default = "zero_expr")]
    pub driver: String,
    #[serde(default = "endpoint_expr")]
    pub terminal: String,
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub lifted: bool,
    #[serde(default)]
    pub x0: f64,
}

#[derive(Debug, Clone)]
pub enum ProblemSource {
    Builtin(ProblemId),
    Inline(Box<InlineProblem>),
}

impl ProblemSource {
    pub fn parse(s: &str) -> Result<Self> {
        let trimmed = s.trim_start();
        if trimmed.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(trimmed).context("inline problem JSON")?;
            Self::from_json(&v)
        } else {
            Ok(ProblemSource::Builtin(s.parse()?))
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::String(s) => Ok(ProblemSource::Builtin(s.parse().context("config field `problem`")?)),
            serde_json::Value::Object(_) => {
                let p = InlineProblem::deserialize(v).context("config field `problem`")?;
                Ok(ProblemSource::Inline(Box::new(p)))
            }
            _ => bail!("config field `problem`: expected a builtin id or an inline problem object"),
        }
    }
}

/// Coefficients, controls and the start state, ready for the solvers.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub name: String,
    pub coeffs: CoefficientSet,
    pub controls: ControlSet,
    pub analytic: Option<FunctionalHandle>,
    pub lifted: bool,
    pub x0: f64,
}

impl LoadedProblem {
    pub fn load(src: &ProblemSource) -> Result<Self> {
        match src {
            ProblemSource::Builtin(id) => {
                let spec = make_problem(*id);
                Ok(LoadedProblem {
                    name: id.name().into(),
                    coeffs: spec.coeffs,
                    controls: spec.controls,
                    analytic: spec.analytic,
                    lifted: false,
                    x0: 0.0,
                })
            }
            ProblemSource::Inline(p) => build_inline(p),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.coeffs.horizon()
    }

    /// The initial path on a `steps`-step grid. `values` are the scalar
    /// node values (the Brownian history for lifted problems); by default
    /// the path is the single node `x0` (or the origin when lifted).
    pub fn initial_path(&self, steps: usize, values: Option<&[f64]>) -> Result<DiscretePath> {
        if steps == 0 {
            bail!("`steps` must be positive");
        }
        let step = self.horizon() / steps as f64;
        let default = [if self.lifted { 0.0 } else { self.x0 }];
        let vals = values.unwrap_or(&default);
        if vals.is_empty() {
            bail!("`path` must contain at least one node");
        }
        if vals.len() > steps + 1 {
            bail!("`path` has {} nodes, more than the {} of a {steps}-step grid", vals.len(), steps + 1);
        }
        let base = DiscretePath::scalar(step, vals)?;
        if self.lifted {
            Ok(augmented_initial(&base, &[self.x0])?)
        } else {
            Ok(base)
        }
    }
}

fn path_env(p: &DiscretePath) -> Env {
    let runmax = p.nodes().map(|n| n[0]).fold(f64::NEG_INFINITY, f64::max);
    Env { x: p.endpoint()[0], integral: p.running_integral()[0], runmax, t: p.final_time(), ..Env::default() }
}

fn lifted_env(w: &DiscretePath, x: &[f64]) -> Env {
    let base = path_env(w);
    Env { w: base.x, x: x.first().copied().unwrap_or(0.0), ..base }
}

fn build_inline(p: &InlineProblem) -> Result<LoadedProblem> {
    if p.controls.is_empty() {
        bail!("inline problem field `controls` must be nonempty");
    }
    let controls = ControlSet::scalar(&p.controls)?;
    let path_vars: &[Var] = if p.lifted {
        &[Var::W, Var::X, Var::Integral, Var::RunMax, Var::T]
    } else {
        &[Var::X, Var::Integral, Var::RunMax, Var::T]
    };
    let with = |extra: &[Var]| -> Vec<Var> { path_vars.iter().chain(extra).copied().collect() };
    let field = |name: &str, src: &str, vars: &[Var]| -> Result<Expr> {
        Expr::parse(src, vars).with_context(|| format!("inline problem field `{name}`"))
    };
    let drift = field("drift", &p.drift, &with(&[Var::U]))?;
    let diffusion = field("diffusion", &p.diffusion, &with(&[Var::U]))?;
    let driver = field("driver", &p.driver, &with(&[Var::U, Var::Y, Var::Z]))?;
    let terminal = field("terminal", &p.terminal, path_vars)?;
    let name = p.name.clone().unwrap_or_else(|| "inline".into());

    let coeffs = if p.lifted {
        let lp = LiftedProblem::zero(1, 1, p.horizon)?
            .with_bar_f(move |w, x, u| vec![drift.eval(&Env { u: u[0], ..lifted_env(w, x) })])
            .with_bar_g(move |w, x, u| DMatrix::from_element(1, 1, diffusion.eval(&Env { u: u[0], ..lifted_env(w, x) })))
            .with_bar_q(move |w, x, y, z, u| driver.eval(&Env { u: u[0], y, z: z[0], ..lifted_env(w, x) }))
            .with_bar_phi(move |w, x| terminal.eval(&lifted_env(w, x)));
        lift_coefficients(&lp, &controls)?
    } else {
        CoefficientSet::zero(1, 1, p.horizon)?
            .with_drift(move |q, u| vec![drift.eval(&Env { u: u[0], ..path_env(q) })])
            .with_diffusion(move |q, u| DMatrix::from_element(1, 1, diffusion.eval(&Env { u: u[0], ..path_env(q) })))
            .with_driver(move |q, y, z, u| driver.eval(&Env { u: u[0], y, z: z[0], ..path_env(q) }))
            .with_terminal(move |q| terminal.eval(&path_env(q)))
    };
    let coeffs = match p.lipschitz {
        Some(l) => coeffs.with_lipschitz(l),
        None => coeffs,
    };
    coeffs.check_probes(&controls, 8, 0)?;
    Ok(LoadedProblem { name, coeffs, controls, analytic: None, lifted: p.lifted, x0: p.x0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_named() {
        let err = serde_json::from_str::<RunConfig>(r#"{"steps": 4, "stepz": 3}"#).unwrap_err().to_string();
        assert!(err.contains("stepz"), "{err}");
        let v: serde_json::Value = serde_json::from_str(r#"{"drift": "u", "difusion": "1"}"#).unwrap();
        let err = format!("{:#}", ProblemSource::from_json(&v).unwrap_err());
        assert!(err.contains("difusion"), "{err}");
    }

    #[test]
    fn inline_matches_builtin_p2() {
        let src = ProblemSource::parse(
            r#"{"controls": [-1, 0, 1], "drift": "u", "diffusion": "1", "terminal": "x", "lipschitz": 1}"#,
        )
        .unwrap();
        let inline = LoadedProblem::load(&src).unwrap();
        let builtin = LoadedProblem::load(&ProblemSource::parse("P2").unwrap()).unwrap();
        let a = pathhjb::control::value_tree(&inline.coeffs, &inline.initial_path(4, None).unwrap(), &inline.controls, 4)
            .unwrap();
        let b = pathhjb::control::value_tree(&builtin.coeffs, &builtin.initial_path(4, None).unwrap(), &builtin.controls, 4)
            .unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn lifted_inline_problem() {
        let src = ProblemSource::parse(
            r#"{"lifted": true, "controls": [-1, 0, 1], "drift": "u", "terminal": "x", "x0": 0.25}"#,
        )
        .unwrap();
        let p = LoadedProblem::load(&src).unwrap();
        let init = p.initial_path(4, None).unwrap();
        assert_eq!(init.dim(), 2);
        let v = pathhjb::control::value_tree(&p.coeffs, &init, &p.controls, 4).unwrap();
        assert!((v.value - 1.25).abs() < 1e-12);
    }

    #[test]
    fn driver_variables_are_restricted() {
        let err = format!("{:#}", ProblemSource::parse(r#"{"terminal": "y"}"#).and_then(|s| LoadedProblem::load(&s)).unwrap_err());
        assert!(err.contains("terminal") && err.contains("`y`"), "{err}");
    }

    #[test]
    fn exported_builtins_round_trip() {
        use pathhjb::control::{value_regression, value_tree, RegressionConfig};
        for id in ProblemId::ALL {
            let json = serde_json::to_value(make_problem(id).schema()).unwrap();
            let inline = LoadedProblem::load(&ProblemSource::from_json(&json).unwrap()).unwrap();
            let builtin = LoadedProblem::load(&ProblemSource::Builtin(id)).unwrap();
            let init = builtin.initial_path(8, Some(&[0.0, 0.5, -0.25])).unwrap();
            let a = value_tree(&inline.coeffs, &init, &inline.controls, 6).unwrap();
            let b = value_tree(&builtin.coeffs, &init, &builtin.controls, 6).unwrap();
            assert_eq!(a.value, b.value, "{id:?}");
            let cfg = RegressionConfig { paths: 500, seed: 3, basis: RegressionBasis::default() };
            let a = value_regression(&inline.coeffs, &init, &inline.controls, &cfg).unwrap();
            let b = value_regression(&builtin.coeffs, &init, &builtin.controls, &cfg).unwrap();
            assert_eq!(a.value, b.value, "{id:?}");
        }
    }
}
