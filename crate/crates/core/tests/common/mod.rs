#![allow(dead_code)]

use dopbc::harness::ExperimentConfig;
use dopbc::problems::ProblemSequence;
use dopbc::Vector;

/// Plain projected primal-dual method for one agent, written against the
/// problem oracles only: `x <- clamp(x - a (grad f + J^T lam))`,
/// `lam <- clamp(lam + a g(x), 0, cap)`. Returns `(actions, duals)` per round,
/// where the dual is the one held at the start of the round.
pub fn single_agent_reference(
    p: &dyn ProblemSequence,
    alpha: f64,
    cap: f64,
    lo: &[f64],
    hi: &[f64],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = lo.len();
    let m = p.num_constraints();
    let mut x: Vec<f64> = (0..d).map(|j| 0f64.max(lo[j]).min(hi[j])).collect();
    let mut lam = vec![0.0; m];
    let mut actions = Vec::new();
    let mut duals = Vec::new();
    for t in 1..=p.horizon() {
        actions.push(x.clone());
        duals.push(lam.clone());
        let xv = Vector::from_column_slice(&x);
        let grad = p.cost_grad(t, &xv);
        let jac = p.constraint_jac(t, &xv);
        let g = p.constraint(t, &xv);
        let mut step = vec![0.0; d];
        for j in 0..d {
            let mut gj = grad[j];
            for k in 0..m {
                gj += lam[k] * jac[(k, j)];
            }
            step[j] = (x[j] - alpha * gj).max(lo[j]).min(hi[j]);
        }
        for k in 0..m {
            lam[k] = (lam[k] + alpha * g[k]).max(0.0).min(cap);
        }
        x = step;
    }
    (actions, duals)
}

pub fn config(text: &str) -> ExperimentConfig {
    text.parse().expect("test config parses")
}

/// Optimal-rate setting: ring of 8, two coordinates per agent, one constraint.
pub const COUPLED_RING: &str = "\
topology.kind = ring
topology.n = 8
mixing.scheme = lazy-metropolis
problem.kind = coupled-quadratic
problem.d_i = 2
problem.m = 1
problem.drift = 1.0
problem.seed = 42
algo.kind = dopbc
algo.c = 0.5
algo.lambda_max = auto
horizons = 1024, 2048, 4096, 8192, 16384, 32768, 65536
comparator = analytic
output.timing = false
seed = 42
";

pub const SEPARABLE_RING: &str = "\
topology.kind = ring
topology.n = 8
mixing.scheme = lazy-metropolis
problem.kind = separable-quadratic
problem.d_i = 2
problem.m = 1
problem.drift = 0.5
problem.seed = 42
algo.kind = dopbc
algo.c = 0.5
algo.lambda_max = auto
horizons = 1024, 2048, 4096, 8192, 16384, 32768, 65536
comparator = analytic
output.timing = false
seed = 42
";

pub const SMALL: &str = "\
topology.kind = complete
topology.n = 2
mixing.scheme = uniform-average
problem.kind = coupled-quadratic
problem.d_i = 1
problem.m = 1
problem.drift = 0.5
problem.seed = 7
algo.kind = dopbc
algo.c = 0.5
algo.lambda_max = auto
horizons = 64, 128, 256, 512
comparator = grid
output.timing = false
seed = 3
";
