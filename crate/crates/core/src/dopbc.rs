//! Primal-dual learning with belief consensus.
//!
//! Every agent keeps a belief about the whole joint decision and a dual
//! estimate. In each round agents average both with their neighbours, act on
//! their own block of the averaged belief, take a projected pseudo-gradient
//! step on that block only and a projected ascent step on the dual.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{project_dual, ProductSet};
use crate::metrics::{Algorithm, RoundRecord, RunTrace};
use crate::netgraph::{Graph, MixingMatrix};
use crate::problems::ProblemSequence;
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Estimate of the joint decision, `d` entries.
    pub belief: Vector,
    /// Dual estimate, `m` entries in `[0, lambda_max]`.
    pub dual: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    /// The same step every round.
    Constant(f64),
    /// Explicit per-round steps, `alphas[t - 1]` in round `t`. Outside the
    /// constant-step guarantees.
    Schedule(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoParams {
    /// Trade-off exponent in `(0, 1)`.
    pub c: f64,
    pub step: StepRule,
    pub lambda_max: f64,
}

impl AlgoParams {
    /// Constant step `alpha = T^{-c}`.
    pub fn for_horizon(c: f64, horizon: usize, lambda_max: f64) -> Result<Self> {
        let params = Self {
            c,
            step: StepRule::Constant((horizon as f64).powf(-c)),
            lambda_max,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::validation(
                "algo.c",
                format!("must lie in (0, 1), got {}", self.c),
            ));
        }
        if !(self.lambda_max > 0.0) {
            return Err(Error::validation(
                "algo.lambda_max",
                format!("must be positive, got {}", self.lambda_max),
            ));
        }
        let ok = match &self.step {
            StepRule::Constant(a) => *a > 0.0 && a.is_finite(),
            StepRule::Schedule(s) => !s.is_empty() && s.iter().all(|a| *a > 0.0 && a.is_finite()),
        };
        if !ok {
            return Err(Error::validation(
                "algo.alpha",
                "step sizes must be positive and finite",
            ));
        }
        Ok(())
    }

    /// Step used in round `t` (1-based).
    pub fn alpha(&self, t: usize) -> f64 {
        match &self.step {
            StepRule::Constant(a) => *a,
            StepRule::Schedule(s) => s[(t - 1).min(s.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Initialization {
    /// Every belief is the projection of zero onto `X`.
    #[default]
    Common,
    /// Independent uniform beliefs per agent.
    Random { seed: u64 },
}

impl Initialization {
    pub fn name(&self) -> &'static str {
        match self {
            Initialization::Common => "common",
            Initialization::Random { .. } => "random",
        }
    }
}

pub fn initial_states(p: &dyn ProblemSequence, init: Initialization) -> Result<Vec<AgentState>> {
    let set = p.product_set();
    let m = p.num_constraints();
    let n = p.num_agents();
    Ok(match init {
        Initialization::Common => {
            let x0 = set.project(&Vector::zeros(set.dim()))?;
            (0..n)
                .map(|_| AgentState {
                    belief: x0.clone(),
                    dual: Vector::zeros(m),
                })
                .collect()
        }
        Initialization::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| AgentState {
                    belief: set.sample(&mut rng),
                    dual: Vector::zeros(m),
                })
                .collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutput {
    pub alpha: f64,
    /// Executed joint action `a_t`.
    pub action: Vector,
    pub beliefs_hat: Vec<Vector>,
    pub duals_hat: Vec<Vector>,
    /// `g_t(x_hat_i)` per agent.
    pub belief_constraints: Vec<Vector>,
    pub next: Vec<AgentState>,
    /// Pre-round consensus error.
    pub delta_x: f64,
    pub disagreement_l1: f64,
    pub belief_mean: Vector,
    pub dual_mean: Vector,
    pub dual_clips: usize,
}

pub(crate) fn mean(vs: &[Vector]) -> Vector {
    let mut acc = Vector::zeros(vs[0].len());
    for v in vs {
        acc += v;
    }
    acc / vs.len() as f64
}

/// `(sqrt(sum_i ||v_i - mean||^2), sum_i ||v_i - mean||)`.
pub(crate) fn spread(vs: &[Vector], center: &Vector) -> (f64, f64) {
    let (sq, l1) = vs.iter().fold((0.0, 0.0), |(sq, l1), v| {
        let d = (v - center).norm();
        (sq + d * d, l1 + d)
    });
    (sq.sqrt(), l1)
}

/// Row-wise weighted averages `sum_j W_ij v_j`.
pub(crate) fn mix(w: &MixingMatrix, vs: &[Vector]) -> Vec<Vector> {
    let n = vs.len();
    (0..n)
        .map(|i| {
            let mut acc = Vector::zeros(vs[0].len());
            for (j, v) in vs.iter().enumerate() {
                let wij = w.get(i, j);
                if wij != 0.0 {
                    acc.axpy(wij, v, 1.0);
                }
            }
            acc
        })
        .collect()
}

/// `(x_hat_i, lambda_hat_i)` for every agent.
pub fn consensus_step(
    states: &[AgentState],
    w: &MixingMatrix,
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    if states.len() != w.n() {
        return Err(Error::Shape(format!(
            "{} agents but a {}x{} mixing matrix",
            states.len(),
            w.n(),
            w.n()
        )));
    }
    let Some(first) = states.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let (d, m) = (first.belief.len(), first.dual.len());
    if states
        .iter()
        .any(|s| s.belief.len() != d || s.dual.len() != m)
    {
        return Err(Error::Shape(
            "agent states have inconsistent dimensions".into(),
        ));
    }
    let beliefs: Vec<Vector> = states.iter().map(|s| s.belief.clone()).collect();
    let duals: Vec<Vector> = states.iter().map(|s| s.dual.clone()).collect();
    Ok((mix(w, &beliefs), mix(w, &duals)))
}

/// Block `i` of `grad f_t(x_hat) + sum_k lambda_k grad g_{k,t}(x_hat)`.
pub fn pseudo_gradient(
    p: &dyn ProblemSequence,
    t: usize,
    i: usize,
    x_hat: &Vector,
    lambda_hat: &Vector,
) -> Result<Vector> {
    if let Some(k) = lambda_hat.iter().position(|l| *l < 0.0) {
        return Err(Error::Domain(format!(
            "dual entry {k} is negative: {}",
            lambda_hat[k]
        )));
    }
    let set = p.product_set();
    if i >= set.num_blocks() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: set.num_blocks(),
        });
    }
    if x_hat.len() != set.dim() || lambda_hat.len() != p.num_constraints() {
        return Err(Error::Shape(
            "pseudo-gradient arguments have wrong length".into(),
        ));
    }
    let r = set.range(i);
    let mut d: Vector = p.cost_grad(t, x_hat).rows(r.start, r.len()).into_owned();
    if lambda_hat.iter().any(|l| *l != 0.0) {
        let jac = p.constraint_jac(t, x_hat);
        let block = jac.columns(r.start, r.len());
        d += block.tr_mul(lambda_hat);
    }
    Ok(d)
}

/// Belief after moving block `i` to `P_{X_i}(x_hat_i - alpha d_i)`; the other
/// blocks are copied from `x_hat`.
pub fn primal_update(
    set: &ProductSet,
    i: usize,
    x_hat: &Vector,
    d_i: &Vector,
    alpha: f64,
) -> Result<Vector> {
    let block = set.block(i)?;
    if x_hat.len() != set.dim() || d_i.len() != block.dim() {
        return Err(Error::Shape(
            "primal update arguments have wrong length".into(),
        ));
    }
    let r = set.range(i);
    let step: Vector = x_hat.rows(r.start, r.len()) - d_i * alpha;
    let projected = block.project(&step)?;
    let mut out = x_hat.clone();
    out.rows_mut(r.start, r.len()).copy_from(&projected);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualStep {
    pub dual: Vector,
    /// Coordinates whose unprojected value exceeded the cap.
    pub clipped: Vec<bool>,
    /// `g_t(x_hat)`
    pub constraint: Vector,
}

impl DualStep {
    pub fn clip_count(&self) -> usize {
        self.clipped.iter().filter(|c| **c).count()
    }
}

fn dual_step_from(lambda_hat: &Vector, g: Vector, alpha: f64, lambda_max: f64) -> DualStep {
    let raw = lambda_hat + &g * alpha;
    DualStep {
        clipped: raw.iter().map(|v| *v > lambda_max).collect(),
        dual: project_dual(lambda_max, &raw),
        constraint: g,
    }
}

/// `clamp(lambda_hat + alpha g_t(x_hat), 0, lambda_max)`.
pub fn dual_update(
    p: &dyn ProblemSequence,
    t: usize,
    lambda_hat: &Vector,
    x_hat: &Vector,
    alpha: f64,
    lambda_max: f64,
) -> Result<DualStep> {
    if lambda_hat.len() != p.num_constraints() {
        return Err(Error::Shape("dual has wrong length".into()));
    }
    Ok(dual_step_from(
        lambda_hat,
        p.constraint(t, x_hat),
        alpha,
        lambda_max,
    ))
}

/// One synchronous round: every agent reads the same snapshot `states`.
pub fn run_round(
    p: &dyn ProblemSequence,
    t: usize,
    states: &[AgentState],
    w: &MixingMatrix,
    params: &AlgoParams,
) -> Result<RoundOutput> {
    if t == 0 || t > p.horizon() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: p.horizon(),
        });
    }
    if states.len() != p.num_agents() {
        return Err(Error::Shape(format!(
            "{} states for {} agents",
            states.len(),
            p.num_agents()
        )));
    }
    let set = p.product_set();
    let alpha = params.alpha(t);

    let beliefs: Vec<Vector> = states.iter().map(|s| s.belief.clone()).collect();
    let duals: Vec<Vector> = states.iter().map(|s| s.dual.clone()).collect();
    let belief_mean = mean(&beliefs);
    let dual_mean = mean(&duals);
    let (delta_x, disagreement_l1) = spread(&beliefs, &belief_mean);

    let (beliefs_hat, duals_hat) = consensus_step(states, w)?;
    let action = set.join((0..set.num_blocks()).map(|i| {
        set.extract(i, &beliefs_hat[i])
            .and_then(|b| set.blocks()[i].project(&b))
            .expect("block shapes checked")
    }));

    let mut next = Vec::with_capacity(states.len());
    let mut belief_constraints = Vec::with_capacity(states.len());
    let mut dual_clips = 0;
    for i in 0..states.len() {
        let d = pseudo_gradient(p, t, i, &beliefs_hat[i], &duals_hat[i])?;
        let belief = primal_update(set, i, &beliefs_hat[i], &d, alpha)?;
        let step = dual_update(
            p,
            t,
            &duals_hat[i],
            &beliefs_hat[i],
            alpha,
            params.lambda_max,
        )?;
        dual_clips += step.clip_count();
        belief_constraints.push(step.constraint);
        next.push(AgentState {
            belief,
            dual: step.dual,
        });
    }

    Ok(RoundOutput {
        alpha,
        action,
        beliefs_hat,
        duals_hat,
        belief_constraints,
        next,
        delta_x,
        disagreement_l1,
        belief_mean,
        dual_mean,
        dual_clips,
    })
}

pub(crate) fn check_network(
    p: &dyn ProblemSequence,
    graph: &Graph,
    w: &MixingMatrix,
) -> Result<()> {
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    if graph.n() != p.num_agents() || w.n() != p.num_agents() {
        return Err(Error::Shape(format!(
            "graph has {} nodes and mixing matrix {} rows for {} agents",
            graph.n(),
            w.n(),
            p.num_agents()
        )));
    }
    Ok(())
}

/// Runs all `T` rounds from the given initialization (duals start at zero).
pub fn run(
    p: &dyn ProblemSequence,
    graph: &Graph,
    w: &MixingMatrix,
    params: &AlgoParams,
    init: Initialization,
) -> Result<RunTrace> {
    check_network(p, graph, w)?;
    params.validate()?;
    let mut states = initial_states(p, init)?;
    let n = states.len() as f64;
    let mut rounds = Vec::with_capacity(p.horizon());
    for t in 1..=p.horizon() {
        let out = run_round(p, t, &states, w, params)?;
        let mut mean_g = Vector::zeros(p.num_constraints());
        for g in &out.belief_constraints {
            mean_g += g;
        }
        mean_g /= n;
        rounds.push(RoundRecord {
            t,
            alpha: out.alpha,
            cost_action: p.cost(t, &out.action),
            constraint_action: p.constraint(t, &out.action),
            cost_mean: p.cost(t, &out.belief_mean),
            constraint_mean: p.constraint(t, &out.belief_mean),
            action: out.action,
            delta_x: out.delta_x,
            disagreement_l1: out.disagreement_l1,
            lambda_bar: out.dual_mean,
            mean_belief_constraint: mean_g,
            dual_clips: out.dual_clips,
            local_violation: 0.0,
        });
        states = out.next;
    }
    let beliefs: Vec<Vector> = states.iter().map(|s| s.belief.clone()).collect();
    let duals: Vec<Vector> = states.iter().map(|s| s.dual.clone()).collect();
    let (final_delta_x, _) = spread(&beliefs, &mean(&beliefs));
    Ok(RunTrace {
        algorithm: Algorithm::Dopbc,
        num_agents: states.len(),
        lambda_max: params.lambda_max,
        rounds,
        final_delta_x,
        final_lambda_bar: mean(&duals),
    })
}
