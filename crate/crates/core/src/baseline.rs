//! Decision-sharing primal-dual baseline for separable instances.
//!
//! Each agent owns only its local decision `x_i` and a dual estimate. Duals
//! are averaged over the network; decisions are not. The dual ascent uses the
//! local constraint term scaled by `N`, so the network-average dual tracks the
//! full constraint `g = sum_i g_i`.
//!
//! For diagnostics every agent also keeps a copy of the joint decision that it
//! mixes with its neighbours' copies and then overwrites with its own block.
//! Consensus errors of a baseline trace are measured on these copies.

use crate::dopbc::{check_network, mean, mix, spread, AlgoParams, Initialization};
use crate::geometry::project_dual;
use crate::metrics::{Algorithm, RoundRecord, RunTrace};
use crate::netgraph::{Graph, MixingMatrix};
use crate::problems::ProblemSequence;
use crate::{Error, Result, Vector};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_baseline(
    p: &dyn ProblemSequence,
    graph: &Graph,
    w: &MixingMatrix,
    params: &AlgoParams,
    init: Initialization,
) -> Result<RunTrace> {
    let oracle = p.separable().ok_or_else(|| {
        Error::Capability("decision-sharing baseline needs a separable instance".into())
    })?;
    check_network(p, graph, w)?;
    params.validate()?;
    let set = p.product_set();
    let n = set.num_blocks();
    let m = p.num_constraints();
    let scale = n as f64;

    let joint0 = match init {
        Initialization::Common => set.project(&Vector::zeros(set.dim()))?,
        Initialization::Random { seed } => set.sample(&mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut decisions: Vec<Vector> = (0..n)
        .map(|i| set.extract(i, &joint0))
        .collect::<Result<_>>()?;
    let mut duals = vec![Vector::zeros(m); n];
    let mut copies = vec![joint0; n];
    let mut rounds = Vec::with_capacity(p.horizon());

    for t in 1..=p.horizon() {
        let alpha = params.alpha(t);
        let action = set.join(decisions.iter().cloned());
        let copy_mean = mean(&copies);
        let (delta_x, disagreement_l1) = spread(&copies, &copy_mean);
        let lambda_bar = mean(&duals);

        let duals_hat = mix(w, &duals);
        let mut dual_clips = 0;
        let mut local_violation = 0.0;
        let mut next_decisions = Vec::with_capacity(n);
        let mut next_duals = Vec::with_capacity(n);
        for i in 0..n {
            let xi = &decisions[i];
            let g = oracle.local_constraint(t, i, xi);
            local_violation += g.iter().map(|v| v.max(0.0)).sum::<f64>();
            let mut d = oracle.local_cost_grad(t, i, xi);
            if duals_hat[i].iter().any(|l| *l != 0.0) {
                d += oracle.local_constraint_jac(t, i, xi).tr_mul(&duals_hat[i]);
            }
            next_decisions.push(set.blocks()[i].project(&(xi - d * alpha))?);
            let raw = &duals_hat[i] + g * (alpha * scale);
            dual_clips += raw.iter().filter(|v| **v > params.lambda_max).count();
            next_duals.push(project_dual(params.lambda_max, &raw));
        }

        let mut next_copies = mix(w, &copies);
        for (i, copy) in next_copies.iter_mut().enumerate() {
            let r = set.range(i);
            copy.rows_mut(r.start, r.len())
                .copy_from(&next_decisions[i]);
        }

        let constraint_action = p.constraint(t, &action);
        rounds.push(RoundRecord {
            t,
            alpha,
            cost_action: p.cost(t, &action),
            mean_belief_constraint: constraint_action.clone(),
            constraint_action,
            cost_mean: p.cost(t, &copy_mean),
            constraint_mean: p.constraint(t, &copy_mean),
            action,
            delta_x,
            disagreement_l1,
            lambda_bar,
            dual_clips,
            local_violation,
        });
        decisions = next_decisions;
        duals = next_duals;
        copies = next_copies;
    }

    let (final_delta_x, _) = spread(&copies, &mean(&copies));
    Ok(RunTrace {
        algorithm: Algorithm::Baseline,
        num_agents: n,
        lambda_max: params.lambda_max,
        rounds,
        final_delta_x,
        final_lambda_bar: mean(&duals),
    })
}

/// Cumulative disagreement against the two step accumulators
/// `S_alpha = sum_t alpha_t` and `S_v = sum_t alpha_t sum_i [g_i(x_i)]^+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingReport {
    /// `sum_t sum_i ||x_i - x_bar||`
    pub lhs: f64,
    pub s_alpha: f64,
    pub s_v: f64,
    /// `lhs / (s_alpha + s_v)`
    pub ratio: f64,
    /// Coefficient of variation of the running ratio over the last half of
    /// the rounds.
    pub trailing_cv: f64,
}

pub fn coupling_diagnostic(trace: &RunTrace) -> CouplingReport {
    let (mut lhs, mut s_alpha, mut s_v) = (0.0, 0.0, 0.0);
    let horizon = trace.horizon();
    let mut trailing = Vec::with_capacity(horizon / 2 + 1);
    for (idx, r) in trace.rounds.iter().enumerate() {
        lhs += r.disagreement_l1;
        s_alpha += r.alpha;
        s_v += r.alpha * r.local_violation;
        if idx >= horizon / 2 {
            let denom = s_alpha + s_v;
            trailing.push(if denom > 0.0 { lhs / denom } else { 0.0 });
        }
    }
    let denom = s_alpha + s_v;
    let ratio = if denom > 0.0 { lhs / denom } else { 0.0 };
    let trailing_cv = if trailing.is_empty() {
        0.0
    } else {
        let k = trailing.len() as f64;
        let mu = trailing.iter().sum::<f64>() / k;
        let var = trailing.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / k;
        if mu > 0.0 {
            var.sqrt() / mu
        } else {
            0.0
        }
    };
    CouplingReport {
        lhs,
        s_alpha,
        s_v,
        ratio,
        trailing_cv,
    }
}
