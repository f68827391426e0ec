use dopbc::dopbc::{consensus_step, run, AgentState, AlgoParams, Initialization};
use dopbc::geometry::{project_dual, ConvexSet};
use dopbc::metrics::{consensus_recursion_check, dual_telescoping_check, fit_growth_exponent};
use dopbc::netgraph::{
    build_graph, build_mixing, sigma_dense, sigma_power_iteration, MixingScheme, Topology,
};
use dopbc::problems::{
    is_convex_on_samples, make_coupled_quadratic, make_separable_quadratic, CoupledQuadraticParams,
    ProblemSequence, SeparableQuadraticParams,
};
use dopbc::{Matrix, Vector};
use proptest::prelude::*;

fn vec_strategy(dim: usize, scale: f64) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-scale..scale, dim).prop_map(Vector::from_vec)
}

fn convex_set(dim: usize) -> impl Strategy<Value = ConvexSet> {
    prop_oneof![
        (
            vec_strategy(dim, 2.0),
            prop::collection::vec(0.0..3.0f64, dim)
        )
            .prop_map(|(lo, w)| {
                let hi = &lo + Vector::from_vec(w);
                ConvexSet::new_box(lo, hi).unwrap()
            }),
        (vec_strategy(dim, 2.0), 0.0..3.0f64).prop_map(|(c, r)| ConvexSet::new_ball(c, r).unwrap()),
    ]
}

fn set_and_points() -> impl Strategy<Value = (ConvexSet, Vector, Vector)> {
    (1usize..6).prop_flat_map(|d| (convex_set(d), vec_strategy(d, 10.0), vec_strategy(d, 10.0)))
}

fn topology() -> impl Strategy<Value = Topology> {
    prop_oneof![
        Just(Topology::Complete),
        Just(Topology::Ring),
        Just(Topology::Path),
        Just(Topology::Star),
        (0.2..1.0f64, any::<u64>())
            .prop_map(|(radius, seed)| Topology::RandomGeometric { radius, seed }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn projection_is_idempotent((set, x, _) in set_and_points()) {
        let p = set.project(&x).unwrap();
        prop_assert!(set.contains(&p, 1e-12));
        let pp = set.project(&p).unwrap();
        prop_assert!((&pp - &p).norm() <= 1e-12 * (1.0 + p.norm()));
    }

    #[test]
    fn projection_is_nonexpansive((set, x, y) in set_and_points()) {
        let px = set.project(&x).unwrap();
        let py = set.project(&y).unwrap();
        prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-12);
    }

    #[test]
    fn dual_projection_is_a_clamp(v in vec_strategy(4, 20.0), cap in 0.1..10.0f64) {
        let p = project_dual(cap, &v);
        for (a, b) in p.iter().zip(v.iter()) {
            prop_assert_eq!(*a, b.clamp(0.0, cap));
        }
        prop_assert_eq!(project_dual(cap, &p), p);
    }

    #[test]
    fn mixing_matrix_invariants(kind in topology(), n in 2usize..=64) {
        let g = build_graph(&kind, n).unwrap();
        let schemes: &[MixingScheme] = if g.is_complete() {
            &[MixingScheme::LazyMetropolis, MixingScheme::UniformAverage]
        } else {
            &[MixingScheme::LazyMetropolis]
        };
        for &scheme in schemes {
            let w = build_mixing(&g, scheme).unwrap();
            let m = w.weights();
            for i in 0..n {
                prop_assert!((m.row(i).sum() - 1.0).abs() <= 1e-12);
                prop_assert!((m.column(i).sum() - 1.0).abs() <= 1e-12);
                for j in 0..n {
                    prop_assert_eq!(m[(i, j)], m[(j, i)]);
                    prop_assert!(m[(i, j)] >= 0.0);
                    if i != j && !g.has_edge(i, j) {
                        prop_assert_eq!(m[(i, j)], 0.0);
                    }
                }
            }
            let eig = w.eigenvalues();
            prop_assert!(*eig.last().unwrap() >= -1e-12, "not PSD: {:?}", eig.last());
            prop_assert!((eig[0] - 1.0).abs() <= 1e-10);
            prop_assert!(w.sigma() < 1.0 && w.sigma() >= -1e-12);
            prop_assert!((w.sigma() - eig[1]).abs() <= 1e-10);
        }
    }

    #[test]
    fn consensus_preserves_averages(
        n in 2usize..12,
        seed in any::<u64>(),
        beliefs in prop::collection::vec(vec_strategy(3, 5.0), 12),
        duals in prop::collection::vec(prop::collection::vec(0.0..10.0f64, 2), 12),
    ) {
        let g = build_graph(&Topology::RandomGeometric { radius: 0.6, seed }, n).unwrap();
        let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
        let states: Vec<AgentState> = (0..n)
            .map(|i| AgentState { belief: beliefs[i].clone(), dual: Vector::from_vec(duals[i].clone()) })
            .collect();
        let (xh, lh) = consensus_step(&states, &w).unwrap();
        let avg = |vs: &mut dyn Iterator<Item = Vector>| {
            let all: Vec<Vector> = vs.collect();
            all.iter().fold(Vector::zeros(all[0].len()), |a, v| a + v) / all.len() as f64
        };
        let before_x = avg(&mut states.iter().map(|s| s.belief.clone()));
        let after_x = avg(&mut xh.into_iter());
        let before_l = avg(&mut states.iter().map(|s| s.dual.clone()));
        let after_l = avg(&mut lh.into_iter());
        prop_assert!((before_x - after_x).amax() <= 1e-10);
        prop_assert!((before_l - after_l).amax() <= 1e-10);
    }

    #[test]
    fn fit_is_exact_on_power_laws(
        exponent in -1.0..2.0f64,
        scale in 0.01..100.0f64,
        start in 1usize..8,
        count in 4usize..9,
    ) {
        let pairs: Vec<(f64, f64)> = (0..count)
            .map(|k| {
                let t = (1u64 << (start + k)) as f64;
                (t, scale * t.powf(exponent))
            })
            .collect();
        let fit = fit_growth_exponent(&pairs).unwrap();
        prop_assert!((fit.exponent - exponent).abs() <= 1e-10);
        prop_assert!((fit.intercept - scale.ln()).abs() <= 1e-9);
        prop_assert!(fit.r_squared >= 1.0 - 1e-12 && fit.r_squared <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn dense_and_power_sigma_agree(n in 2usize..=64, seed in any::<u64>(), radius in 0.3..0.8f64) {
        let g = build_graph(&Topology::RandomGeometric { radius, seed }, n).unwrap();
        let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
        let dense = sigma_dense(w.weights());
        let power = sigma_power_iteration(w.weights());
        prop_assert!((dense - power).abs() <= 1e-8, "dense {} power {}", dense, power);
    }

    #[test]
    fn instances_are_convex(seed in any::<u64>(), n in 1usize..5, di in 1usize..4, m in 1usize..3) {
        let c = make_coupled_quadratic(CoupledQuadraticParams {
            n_agents: n, block_dim: di, constraints: m, horizon: 50, seed, drift: 1.0,
        }).unwrap();
        prop_assert!(is_convex_on_samples(&c, 200, seed));
        let s = make_separable_quadratic(SeparableQuadraticParams {
            n_agents: n, block_dim: di, horizon: 50, seed, drift: 0.5,
        }).unwrap();
        prop_assert!(is_convex_on_samples(&s, 200, seed));
    }

    #[test]
    fn runs_keep_states_feasible_and_satisfy_recursions(
        seed in any::<u64>(),
        n in 2usize..7,
        kind in topology(),
        cap in 0.5..50.0f64,
        random_start in any::<bool>(),
    ) {
        let horizon = 300;
        let p = make_coupled_quadratic(CoupledQuadraticParams {
            n_agents: n, block_dim: 2, constraints: 2, horizon, seed, drift: 1.0,
        }).unwrap();
        let g = build_graph(&kind, n).unwrap();
        let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
        let params = AlgoParams::for_horizon(0.5, horizon, cap).unwrap();
        let init = if random_start { Initialization::Random { seed } } else { Initialization::Common };
        let trace = run(&p, &g, &w, &params, init).unwrap();
        for r in &trace.rounds {
            prop_assert!(p.product_set().contains(&r.action, 1e-12));
            prop_assert!(r.lambda_bar.iter().all(|l| *l >= 0.0 && *l <= cap));
            prop_assert!(r.delta_x >= 0.0 && r.cost_action.is_finite());
        }
        let rec = consensus_recursion_check(&trace, &p.bounds(), w.sigma());
        prop_assert_eq!(rec.violations, 0);
        let tel = dual_telescoping_check(&trace);
        prop_assert_eq!(tel.violations, 0);
    }
}

#[test]
fn identity_weights_have_unit_sigma() {
    assert!((sigma_dense(&Matrix::identity(4, 4)) - 1.0).abs() < 1e-12);
}
