mod common;

use common::single_agent_reference;
use dopbc::baseline::{coupling_diagnostic, run_baseline};
use dopbc::dopbc::{run, AlgoParams, Initialization};
use dopbc::metrics::{ccv, consensus_error_sum, static_regret, MetricSequence};
use dopbc::netgraph::{build_graph, build_mixing, MixingScheme, Topology};
use dopbc::problems::{
    grid_comparator, hindsight_comparator, make_coupled_quadratic, make_separable_quadratic,
    subgradient_comparator, validate_gradients, ComparatorMethod, CoupledQuadraticParams,
    ProblemSequence, SeparableQuadraticParams, SubgradientOptions,
};

fn coupled(
    n: usize,
    di: usize,
    m: usize,
    horizon: usize,
    seed: u64,
) -> dopbc::problems::CoupledQuadratic {
    make_coupled_quadratic(CoupledQuadraticParams {
        n_agents: n,
        block_dim: di,
        constraints: m,
        horizon,
        seed,
        drift: 1.0,
    })
    .unwrap()
}

fn separable(
    n: usize,
    di: usize,
    horizon: usize,
    seed: u64,
) -> dopbc::problems::SeparableQuadratic {
    make_separable_quadratic(SeparableQuadraticParams {
        n_agents: n,
        block_dim: di,
        horizon,
        seed,
        drift: 0.5,
    })
    .unwrap()
}

fn assert_matches_reference(
    p: &dyn ProblemSequence,
    trace: &dopbc::metrics::RunTrace,
    alpha: f64,
    cap: f64,
) {
    let d = p.dim();
    let (actions, duals) = single_agent_reference(p, alpha, cap, &vec![-1.0; d], &vec![1.0; d]);
    for (r, (a, l)) in trace.rounds.iter().zip(actions.iter().zip(&duals)) {
        for j in 0..d {
            assert!(
                (r.action[j] - a[j]).abs() <= 1e-12,
                "round {} coord {j}",
                r.t
            );
        }
        for k in 0..l.len() {
            assert!(
                (r.lambda_bar[k] - l[k]).abs() <= 1e-12,
                "round {} dual {k}",
                r.t
            );
        }
    }
}

#[test]
fn single_agent_dopbc_matches_reference() {
    let g = build_graph(&Topology::Complete, 1).unwrap();
    let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
    for seed in [1, 2, 3] {
        let p = coupled(1, 3, 2, 100, seed);
        // a small cap so that upper clipping is exercised too
        let params = AlgoParams::for_horizon(0.5, 100, 0.5).unwrap();
        let trace = run(&p, &g, &w, &params, Initialization::Common).unwrap();
        assert_matches_reference(&p, &trace, params.alpha(1), 0.5);
    }
}

#[test]
fn single_agent_baseline_matches_reference() {
    let g = build_graph(&Topology::Complete, 1).unwrap();
    let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
    let p = separable(1, 3, 100, 5);
    let params = AlgoParams::for_horizon(0.5, 100, 2.0).unwrap();
    let trace = run_baseline(&p, &g, &w, &params, Initialization::Common).unwrap();
    assert_matches_reference(&p, &trace, params.alpha(1), 2.0);
}

#[test]
fn grid_and_subgradient_agree_in_two_dimensions() {
    for (n, di, seed) in [(1, 2, 3), (2, 1, 4), (2, 1, 9)] {
        let p = coupled(n, di, 1, 40, seed);
        let grid = grid_comparator(&p, 1e-2 * p.bounds().diameter).unwrap();
        let sub = subgradient_comparator(&p, &SubgradientOptions::default()).unwrap();
        let rel = (grid.objective_value - sub.objective_value).abs() / grid.objective_value.abs();
        assert!(
            rel <= 1e-3,
            "seed {seed}: grid {} subgradient {}",
            grid.objective_value,
            sub.objective_value
        );
        // the registered optimum is the exact answer
        let exact = hindsight_comparator(&p, ComparatorMethod::Analytic).unwrap();
        assert!(grid.objective_value >= exact.objective_value - 1e-9 * exact.objective_value.abs());
        assert!(
            (grid.objective_value - exact.objective_value).abs()
                <= 1e-6 * exact.objective_value.abs()
        );
    }
}

#[test]
fn separable_comparators_agree() {
    let p = separable(2, 1, 50, 6);
    let grid = grid_comparator(&p, 1e-2 * p.bounds().diameter).unwrap();
    let exact = hindsight_comparator(&p, ComparatorMethod::Analytic).unwrap();
    let sub = subgradient_comparator(&p, &SubgradientOptions::default()).unwrap();
    for other in [&grid, &sub] {
        let rel =
            (other.objective_value - exact.objective_value).abs() / exact.objective_value.abs();
        assert!(rel <= 1e-3);
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in [1, 2] {
        let c = coupled(4, 2, 2, 200, seed);
        let r = validate_gradients(&c, 100, 1e-6, seed);
        assert!(r.passed(), "{r:?}");
        let s = separable(4, 2, 200, seed);
        let r = validate_gradients(&s, 100, 1e-6, seed);
        assert!(r.passed(), "{r:?}");
    }
}

#[test]
fn regret_against_grid_and_subgradient_comparators() {
    let p = coupled(2, 1, 1, 300, 11);
    let g = build_graph(&Topology::Path, 2).unwrap();
    let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
    let params = AlgoParams::for_horizon(0.5, 300, 20.0).unwrap();
    let trace = run(&p, &g, &w, &params, Initialization::Common).unwrap();
    let grid = grid_comparator(&p, 1e-2 * p.bounds().diameter).unwrap();
    let sub = subgradient_comparator(&p, &SubgradientOptions::default()).unwrap();
    let r_grid = static_regret(&trace, &grid, &p, MetricSequence::Action).unwrap();
    let r_sub = static_regret(&trace, &sub, &p, MetricSequence::Action).unwrap();
    assert!((r_grid - r_sub).abs() <= 1e-3 * grid.objective_value.abs());
}

#[test]
fn ccv_equals_recomputation_from_oracle() {
    let p = coupled(3, 2, 2, 500, 4);
    let g = build_graph(&Topology::Ring, 3).unwrap();
    let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
    let params = AlgoParams::for_horizon(0.5, 500, 50.0).unwrap();
    let trace = run(&p, &g, &w, &params, Initialization::Common).unwrap();
    for k in 0..2 {
        let brute: f64 = trace
            .rounds
            .iter()
            .map(|r| p.constraint(r.t, &r.action)[k].max(0.0))
            .sum();
        assert_eq!(ccv(&trace, k, MetricSequence::Action).unwrap(), brute);
    }
}

#[test]
fn consensus_sum_below_ceiling() {
    let p = coupled(6, 2, 1, 2000, 8);
    let g = build_graph(&Topology::Star, 6).unwrap();
    let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
    let params = AlgoParams::for_horizon(0.5, 2000, 30.0).unwrap();
    let trace = run(&p, &g, &w, &params, Initialization::Common).unwrap();
    let ce = consensus_error_sum(&trace, &p.bounds(), w.sigma());
    assert!(ce.sum > 0.0 && ce.within_ceiling(), "{ce:?}");
}

#[test]
fn identical_beliefs_on_static_problem_stay_together() {
    let p = make_coupled_quadratic(CoupledQuadraticParams {
        n_agents: 4,
        block_dim: 1,
        constraints: 1,
        horizon: 200,
        seed: 2,
        drift: 0.0,
    })
    .unwrap();
    let g = build_graph(&Topology::Complete, 4).unwrap();
    let w = build_mixing(&g, MixingScheme::UniformAverage).unwrap();
    let params = AlgoParams::for_horizon(0.5, 200, 30.0).unwrap();
    let trace = run(&p, &g, &w, &params, Initialization::Common).unwrap();
    let ce = consensus_error_sum(&trace, &p.bounds(), w.sigma());
    // uniform averaging resets the spread every round; only one step of drift remains
    assert!(ce.sum <= 2.0 * params.alpha(1) * 200.0 * p.bounds().pseudo_gradient_bound(30.0));
    assert_eq!(trace.rounds[0].delta_x, 0.0);
}

#[test]
fn baseline_coupling_ratio_is_stable() {
    let p = separable(8, 2, 8192, 42);
    let g = build_graph(&Topology::Ring, 8).unwrap();
    let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
    let cap = dopbc::problems::slater_dual_cap(&p).unwrap();
    let params = AlgoParams::for_horizon(0.5, 8192, cap).unwrap();
    let trace = run_baseline(&p, &g, &w, &params, Initialization::Common).unwrap();
    let rep = coupling_diagnostic(&trace);
    assert!(rep.lhs > 0.0 && rep.s_v > 0.0);
    assert!(rep.trailing_cv < 0.5, "{rep:?}");
}
