//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::Instant;

use common::{config, single_agent_reference, COUPLED_RING, SEPARABLE_RING, SMALL};
use dopbc::dopbc::{run, AlgoParams, Initialization};
use dopbc::geometry::{project_dual, ConvexSet};
use dopbc::harness::{run_experiment, run_sweep, ExperimentConfig, SweepResult};
use dopbc::metrics::{consensus_recursion_check, dual_telescoping_check, Algorithm};
use dopbc::netgraph::{build_graph, build_mixing, MixingScheme, Topology};
use dopbc::problems::{
    grid_comparator, make_coupled_quadratic, make_separable_quadratic, subgradient_comparator,
    validate_gradients, CoupledQuadraticParams, ProblemSequence, SeparableQuadraticParams,
    SubgradientOptions,
};
use dopbc::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RATE_CEILING: f64 = 0.65;
const MIN_R2: f64 = 0.9;
const TRADEOFF_RANGE: (f64, f64) = (0.60, 0.90);
const MIN_UNCLIPPED: f64 = 0.99;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!(
            "criterion {id} {}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn sweep(text: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> (SweepResult, f64) {
    let mut cfg = config(text);
    edit(&mut cfg);
    let started = Instant::now();
    let result = run_sweep(&cfg).expect("acceptance sweep runs");
    (result, started.elapsed().as_secs_f64())
}

fn exponent(s: &SweepResult, metric: &str) -> (f64, f64) {
    let fit = s.slope(metric).expect("fit present");
    (fit.exponent, fit.r_squared)
}

fn optimal_rate(r: &mut Report, c1: &SweepResult, secs: f64) {
    let (reg, reg_r2) = exponent(c1, "regret_a");
    let (ccv, ccv_r2) = exponent(c1, "ccv_1");
    let ok = reg <= RATE_CEILING
        && ccv <= RATE_CEILING
        && reg_r2 >= MIN_R2
        && ccv_r2 >= MIN_R2
        && secs < 180.0;
    r.line(
        1,
        ok,
        format!(
            "c=0.5 on executed actions: regret exponent {reg:.4} (r2 {reg_r2:.4}), ccv exponent {ccv:.4} (r2 {ccv_r2:.4}), {secs:.1}s"
        ),
    );
}

fn tradeoff(r: &mut Report, hi: &SweepResult, lo: &SweepResult, secs: f64) {
    let (reg, _) = exponent(hi, "regret_a");
    let (ccv, _) = exponent(lo, "ccv_1");
    let inside = |x: f64| x >= TRADEOFF_RANGE.0 && x <= TRADEOFF_RANGE.1;
    r.line(
        2,
        inside(reg) && inside(ccv) && secs < 300.0,
        format!("c=0.75 regret exponent {reg:.4}, c=0.25 ccv exponent {ccv:.4}, {secs:.1}s"),
    );
}

fn separable_gap(r: &mut Report, ours: &SweepResult, base: &SweepResult) {
    let (a, _) = exponent(ours, "ccv_1");
    let (b, _) = exponent(base, "ccv_1");
    r.line(
        3,
        a <= b && a <= RATE_CEILING,
        format!("ccv exponent: belief consensus {a:.4}, decision sharing {b:.4}"),
    );
}

fn recursion(r: &mut Report, sweeps: &[&SweepResult]) {
    let (mut rounds, mut violations, mut worst) = (0, 0, f64::NEG_INFINITY);
    for s in sweeps {
        for o in &s.outcomes {
            let rep = consensus_recursion_check(&o.trace, &o.bounds, o.sigma);
            rounds += rep.rounds_checked;
            violations += rep.violations;
            worst = worst.max(rep.max_excess);
        }
    }
    r.line(
        4,
        violations == 0 && rounds > 0,
        format!("{violations} violations over {rounds} rounds, largest lhs - rhs {worst:.3e}"),
    );
}

fn ceiling(r: &mut Report, sweeps: &[&SweepResult], baseline: &SweepResult) {
    let mut runs = 0;
    let mut bad = 0;
    let mut tightest = 0.0f64;
    for s in sweeps {
        for o in &s.outcomes {
            runs += 1;
            if o.delta_sum > o.delta_ceiling {
                bad += 1;
            }
            tightest = tightest.max(o.delta_sum / o.delta_ceiling);
        }
    }
    let base_ratio = baseline
        .outcomes
        .iter()
        .map(|o| o.delta_sum / o.delta_ceiling)
        .fold(0.0, f64::max);
    r.line(
        5,
        bad == 0,
        format!(
            "{bad} of {runs} belief-consensus runs above the ceiling, largest sum/ceiling {tightest:.3e} (decision-sharing copies, not gated: {base_ratio:.3e})"
        ),
    );
}

fn telescoping(r: &mut Report, c1: &SweepResult, others: &[&SweepResult]) {
    let mut violations = 0;
    let mut min_unclipped = 1.0f64;
    for o in &c1.outcomes {
        let rep = dual_telescoping_check(&o.trace);
        violations += rep.violations;
        min_unclipped = min_unclipped.min(rep.unclipped_fraction());
    }
    for s in others {
        for o in &s.outcomes {
            violations += dual_telescoping_check(&o.trace).violations;
        }
    }
    r.line(
        6,
        violations == 0 && min_unclipped >= MIN_UNCLIPPED,
        format!(
            "{violations} violations, smallest unclipped share in the c=0.5 runs {:.2}%",
            100.0 * min_unclipped
        ),
    );
}

fn oracle_equivalences(r: &mut Report) {
    // single agent against the plain reference
    let mut worst_ref = 0.0f64;
    let g = build_graph(&Topology::Complete, 1).unwrap();
    let w = build_mixing(&g, MixingScheme::LazyMetropolis).unwrap();
    for seed in 0..5 {
        let p = make_coupled_quadratic(CoupledQuadraticParams {
            n_agents: 1,
            block_dim: 3,
            constraints: 2,
            horizon: 100,
            seed,
            drift: 1.0,
        })
        .unwrap();
        let cap = 1.0;
        let params = AlgoParams::for_horizon(0.5, 100, cap).unwrap();
        let trace = run(&p, &g, &w, &params, Initialization::Common).unwrap();
        let (actions, _) = single_agent_reference(&p, params.alpha(1), cap, &[-1.0; 3], &[1.0; 3]);
        for (rec, a) in trace.rounds.iter().zip(&actions) {
            for j in 0..3 {
                worst_ref = worst_ref.max((rec.action[j] - a[j]).abs());
            }
        }
    }

    // grid search against penalty subgradient on two-dimensional instances
    let mut worst_cmp = 0.0f64;
    for (n, di, seed) in [(1, 2, 1), (2, 1, 2), (1, 2, 3), (2, 1, 4)] {
        let p = make_coupled_quadratic(CoupledQuadraticParams {
            n_agents: n,
            block_dim: di,
            constraints: 1,
            horizon: 64,
            seed,
            drift: 1.0,
        })
        .unwrap();
        let grid = grid_comparator(&p, 1e-2 * p.bounds().diameter).unwrap();
        let sub = subgradient_comparator(&p, &SubgradientOptions::default()).unwrap();
        worst_cmp = worst_cmp
            .max((grid.objective_value - sub.objective_value).abs() / grid.objective_value.abs());
    }

    // analytic gradients against central differences
    let mut worst_fd = 0.0f64;
    for seed in 0..3 {
        let c = make_coupled_quadratic(CoupledQuadraticParams {
            n_agents: 8,
            block_dim: 2,
            constraints: 2,
            horizon: 500,
            seed,
            drift: 1.0,
        })
        .unwrap();
        let s = make_separable_quadratic(SeparableQuadraticParams {
            n_agents: 8,
            block_dim: 2,
            horizon: 500,
            seed,
            drift: 0.5,
        })
        .unwrap();
        for p in [&c as &dyn ProblemSequence, &s] {
            worst_fd = worst_fd.max(validate_gradients(p, 100, 1e-6, seed).max_error());
        }
    }

    r.line(
        7,
        worst_ref <= 1e-12 && worst_cmp <= 1e-3 && worst_fd <= 1e-6,
        format!(
            "single-agent reference gap {worst_ref:.2e}, grid vs subgradient {worst_cmp:.2e}, finite differences {worst_fd:.2e}"
        ),
    );
}

fn infrastructure(r: &mut Report) {
    let mut mixing_bad = 0;
    let mut checked = 0;
    for n in 2..=64 {
        let kinds = [
            Topology::Complete,
            Topology::Ring,
            Topology::Path,
            Topology::Star,
            Topology::RandomGeometric {
                radius: 0.5,
                seed: n as u64,
            },
        ];
        for kind in kinds {
            let g = build_graph(&kind, n).unwrap();
            let mut schemes = vec![MixingScheme::LazyMetropolis];
            if g.is_complete() {
                schemes.push(MixingScheme::UniformAverage);
            }
            for scheme in schemes {
                checked += 1;
                let w = build_mixing(&g, scheme).unwrap();
                let m = w.weights();
                let stochastic = (0..n).all(|i| {
                    (m.row(i).sum() - 1.0).abs() <= 1e-12
                        && (m.column(i).sum() - 1.0).abs() <= 1e-12
                });
                let symmetric = (m - m.transpose()).amax() == 0.0;
                let eig = w.eigenvalues();
                let psd = *eig.last().unwrap() >= -1e-12;
                let sigma_ok = (w.sigma() - eig[1]).abs() <= 1e-10 && w.sigma() < 1.0;
                if !(stochastic && symmetric && psd && sigma_ok) {
                    mixing_bad += 1;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut projection_bad = 0;
    for _ in 0..2000 {
        let d = rng.random_range(1..6);
        let center = Vector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        let set = if rng.random_bool(0.5) {
            let width = Vector::from_fn(d, |_, _| rng.random_range(0.0..3.0));
            ConvexSet::new_box(center.clone(), &center + width).unwrap()
        } else {
            ConvexSet::new_ball(center, rng.random_range(0.0..3.0)).unwrap()
        };
        let x = Vector::from_fn(d, |_, _| rng.random_range(-10.0..10.0));
        let y = Vector::from_fn(d, |_, _| rng.random_range(-10.0..10.0));
        let (px, py) = (set.project(&x).unwrap(), set.project(&y).unwrap());
        let idempotent = (set.project(&px).unwrap() - &px).norm() <= 1e-12 * (1.0 + px.norm());
        let nonexpansive = (&px - &py).norm() <= (&x - &y).norm() + 1e-12;
        let cap = rng.random_range(0.1..5.0);
        let dual = project_dual(cap, &x);
        let dual_ok = project_dual(cap, &dual) == dual;
        if !(idempotent && nonexpansive && dual_ok) {
            projection_bad += 1;
        }
    }

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut cfg = config(SMALL);
        cfg.output_dir = dir.path().to_path_buf();
        run_experiment(&cfg).unwrap();
    }
    let mut files: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    files.sort();
    let identical = !files.is_empty()
        && files
            .iter()
            .all(|f| std::fs::read(a.path().join(f)).ok() == std::fs::read(b.path().join(f)).ok());

    r.line(
        8,
        mixing_bad == 0 && projection_bad == 0 && identical,
        format!(
            "{mixing_bad} of {checked} mixing matrices off, {projection_bad} of 2000 projection samples off, {} output files byte-identical: {identical}",
            files.len()
        ),
    );
}

fn main() {
    let mut report = Report { failures: 0 };

    let (c1, c1_secs) = sweep(COUPLED_RING, |_| {});
    let started = Instant::now();
    let (c_hi, _) = sweep(COUPLED_RING, |c| c.c = 0.75);
    let (c_lo, _) = sweep(COUPLED_RING, |c| c.c = 0.25);
    let tradeoff_secs = started.elapsed().as_secs_f64();
    let (sep, _) = sweep(SEPARABLE_RING, |_| {});
    let (sep_base, _) = sweep(SEPARABLE_RING, |c| c.algorithm = Algorithm::Baseline);

    optimal_rate(&mut report, &c1, c1_secs);
    tradeoff(&mut report, &c_hi, &c_lo, tradeoff_secs);
    separable_gap(&mut report, &sep, &sep_base);
    recursion(&mut report, &[&c1, &sep]);
    ceiling(&mut report, &[&c1, &c_hi, &c_lo, &sep], &sep_base);
    telescoping(&mut report, &c1, &[&c_hi, &c_lo, &sep, &sep_base]);
    oracle_equivalences(&mut report);
    infrastructure(&mut report);

    if report.failures > 0 {
        println!("{} acceptance criteria failed", report.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
