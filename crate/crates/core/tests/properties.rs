use nalgebra::DMatrix;
use proptest::prelude::*;

use pathhjb::control::{hamiltonian, value_tree, HamiltonianInput};
use pathhjb::path::sample_ball_path;
use pathhjb::problems::{analytic_value, make_problem, ProblemId};
use pathhjb::rng::{keyed, Domain};
use pathhjb::sde::{simulate, ControlProcess, SimConfig};
use pathhjb::stats::{pairwise_sum, Summary};
use pathhjb::{DiscretePath, HolderBallSpec};

fn scalar_path() -> impl Strategy<Value = DiscretePath> {
    (prop::sample::select(vec![0.125, 0.25, 0.0625]), prop::collection::vec(-3.0..3.0f64, 1..9))
        .prop_map(|(step, v)| DiscretePath::scalar(step, &v).unwrap())
}

fn paths_on(step: f64, max_nodes: usize) -> impl Strategy<Value = DiscretePath> {
    prop::collection::vec(-3.0..3.0f64, 1..=max_nodes).prop_map(move |v| DiscretePath::scalar(step, &v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn d_infty_is_a_pseudometric(a in paths_on(0.25, 6), b in paths_on(0.25, 6), c in paths_on(0.25, 6)) {
        let ab = a.d_infty(&b).unwrap();
        prop_assert_eq!(a.d_infty(&a).unwrap(), 0.0);
        prop_assert!((ab - b.d_infty(&a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= a.d_infty(&c).unwrap() + c.d_infty(&b).unwrap() + 1e-12);
    }

    #[test]
    fn horizontal_extension_costs_only_time(p in scalar_path(), k in 0usize..5) {
        let delta = k as f64 * p.step();
        let q = p.horizontal_extend(delta).unwrap();
        prop_assert_eq!(q.endpoint(), p.endpoint());
        prop_assert!((p.d_infty(&q).unwrap() - delta).abs() < 1e-12);
    }

    #[test]
    fn vertical_bump_moves_only_the_endpoint(p in scalar_path(), v in -2.0..2.0f64) {
        let q = p.vertical_bump(&[v]).unwrap();
        let n = p.steps();
        prop_assert_eq!(&q.flat()[..n], &p.flat()[..n]);
        prop_assert!((q.endpoint()[0] - p.endpoint()[0] - v).abs() < 1e-12);
        prop_assert!((p.d_infty(&q).unwrap() - v.abs()).abs() < 1e-12);
    }

    #[test]
    fn perturbation_stays_in_the_ball(seed in any::<u64>(), nodes in 2usize..20, eps_frac in 0.01..0.5f64) {
        let spec = HolderBallSpec::new(0.25, 2.0, 2.0, 0.0).unwrap();
        let step = 1.0 / 16.0;
        let p = sample_ball_path(&spec, 1, step, nodes, &mut keyed(seed, Domain::Ball, 0, 0));
        prop_assume!(p.in_holder_ball(&spec).member);
        let eps = eps_frac * spec.mu;
        let q = p.perturb(eps, &spec).unwrap();
        prop_assert!(q.in_holder_ball(&spec).member);
        prop_assert_eq!(q.endpoint(), p.endpoint());
        let t = p.final_time();
        prop_assert!(p.d_infty(&q).unwrap() <= eps * t.powf(spec.alpha) + 1e-12);
    }

    #[test]
    fn tree_matches_closed_form_for_drift_control(v in prop::collection::vec(-2.0..2.0f64, 1..5)) {
        let spec = make_problem(ProblemId::P2DriftControl);
        let p = DiscretePath::scalar(0.125, &v).unwrap();
        let remaining = 8 - p.steps();
        let tree = value_tree(&spec.coeffs, &p, &spec.controls, remaining).unwrap();
        let exact = p.endpoint()[0] + (1.0 - p.final_time());
        prop_assert!((tree.value - exact).abs() < 1e-12);
        prop_assert!((analytic_value(&spec, &p).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn tree_error_within_budget_for_running_integral(v in prop::collection::vec(-2.0..2.0f64, 1..5)) {
        let spec = make_problem(ProblemId::P3RunningIntegral);
        let p = DiscretePath::scalar(0.125, &v).unwrap();
        let tree = value_tree(&spec.coeffs, &p, &spec.controls, 8 - p.steps()).unwrap();
        let exact = analytic_value(&spec, &p).unwrap();
        prop_assert!((tree.value - exact).abs() <= spec.tree_budget(&p) + 1e-12);
    }

    #[test]
    fn hamiltonian_dominates_every_control(
        x in -2.0..2.0f64, r in -1.0..1.0f64, dp in -2.0..2.0f64, l in -2.0..2.0f64,
    ) {
        let spec = make_problem(ProblemId::P2DriftControl);
        let path = DiscretePath::scalar(0.25, &[0.0, x]).unwrap();
        let inp = HamiltonianInput::new(r, vec![dp], DMatrix::from_element(1, 1, l)).unwrap();
        let h = hamiltonian(&spec.coeffs, &path, &inp, &spec.controls).unwrap();
        for u in spec.controls.points() {
            prop_assert!(h.value >= dp * u[0] + 0.5 * l - 1e-12);
        }
        prop_assert!((h.value - (dp.abs() + 0.5 * l)).abs() < 1e-12);
    }

    #[test]
    fn simulation_is_reproducible_and_extends_the_initial_path(seed in any::<u64>(), v in prop::collection::vec(-1.0..1.0f64, 1..4)) {
        let spec = make_problem(ProblemId::P2DriftControl);
        let p = DiscretePath::scalar(0.125, &v).unwrap();
        let cfg = SimConfig::new(8, seed);
        let u = ControlProcess::UniformRandom { seed };
        let a = simulate(&spec.coeffs, &p, &spec.controls, &u, &cfg).unwrap();
        let b = simulate(&spec.coeffs, &p, &spec.controls, &u, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        for q in &a.paths {
            prop_assert_eq!(&q.flat()[..p.node_count()], p.flat());
            prop_assert!((q.final_time() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_sum_agrees_with_naive_sum(xs in prop::collection::vec(-1e3..1e3f64, 0..200)) {
        let naive: f64 = xs.iter().sum();
        prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-9 * (1.0 + xs.iter().map(|x| x.abs()).sum::<f64>()));
        if xs.len() > 1 {
            let s = Summary::of(&xs);
            prop_assert!(s.std_error >= 0.0);
        }
    }
}
