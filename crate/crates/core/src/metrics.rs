//! Run traces, regret, cumulative constraint violation, growth-exponent fits
//! and per-round diagnostics over traces.

use crate::problems::{Comparator, DeclaredBounds, ProblemSequence};
use crate::{Error, Result, Vector};

/// Largest comparator violation accepted by [`static_regret`].
pub const COMPARATOR_MARGIN: f64 = 1e-6;
pub const RECURSION_TOL: f64 = 1e-9;
pub const TELESCOPE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Dopbc,
    Baseline,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Dopbc => "dopbc",
            Algorithm::Baseline => "baseline-dspd",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dopbc" => Ok(Self::Dopbc),
            "baseline-dspd" => Ok(Self::Baseline),
            other => Err(format!(
                "unknown algorithm `{other}` (expected dopbc or baseline-dspd)"
            )),
        }
    }
}

/// Which joint point a metric is evaluated on: the executed action `a_t` or
/// the network-average belief `x_bar_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSequence {
    Action,
    MeanBelief,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub alpha: f64,
    pub action: Vector,
    /// `f_t(a_t)`
    pub cost_action: f64,
    /// `g_t(a_t)`
    pub constraint_action: Vector,
    /// `f_t(x_bar_t)`
    pub cost_mean: f64,
    /// `g_t(x_bar_t)`
    pub constraint_mean: Vector,
    /// `sqrt(sum_i ||x_i - x_bar||^2)` on pre-round beliefs.
    pub delta_x: f64,
    /// `sum_i ||x_i - x_bar||` on pre-round beliefs.
    pub disagreement_l1: f64,
    /// Pre-round average dual.
    pub lambda_bar: Vector,
    /// Average constraint value driving this round's dual step. For DOPBC it is
    /// `(1/N) sum_i g_t(x_hat_i)`; for the baseline it is `g_t(a_t)`.
    pub mean_belief_constraint: Vector,
    /// Dual coordinates clipped at the upper cap this round, over all agents.
    pub dual_clips: usize,
    /// `sum_i sum_k [g_{i,k,t}(x_i)]^+` for the baseline; 0 for DOPBC.
    pub local_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub num_agents: usize,
    pub lambda_max: f64,
    pub rounds: Vec<RoundRecord>,
    /// Consensus error of the states left after the last round.
    pub final_delta_x: f64,
    pub final_lambda_bar: Vector,
}

impl RunTrace {
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.final_lambda_bar.len()
    }

    /// Trace of a fixed action sequence with no algorithm state: consensus
    /// errors and duals are zero. Useful for evaluating metrics on arbitrary
    /// sequences.
    pub fn replay(p: &dyn ProblemSequence, actions: &[Vector]) -> Result<RunTrace> {
        if actions.len() != p.horizon() {
            return Err(Error::HorizonMismatch {
                trace: actions.len(),
                problem: p.horizon(),
            });
        }
        let m = p.num_constraints();
        let rounds = actions
            .iter()
            .enumerate()
            .map(|(idx, a)| {
                if a.len() != p.dim() {
                    return Err(Error::Shape(format!(
                        "action {} has length {}, expected {}",
                        idx + 1,
                        a.len(),
                        p.dim()
                    )));
                }
                let t = idx + 1;
                let cost = p.cost(t, a);
                let g = p.constraint(t, a);
                Ok(RoundRecord {
                    t,
                    alpha: 0.0,
                    action: a.clone(),
                    cost_action: cost,
                    constraint_action: g.clone(),
                    cost_mean: cost,
                    constraint_mean: g.clone(),
                    delta_x: 0.0,
                    disagreement_l1: 0.0,
                    lambda_bar: Vector::zeros(m),
                    mean_belief_constraint: g,
                    dual_clips: 0,
                    local_violation: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunTrace {
            algorithm: Algorithm::Dopbc,
            num_agents: p.num_agents(),
            lambda_max: f64::INFINITY,
            rounds,
            final_delta_x: 0.0,
            final_lambda_bar: Vector::zeros(m),
        })
    }

    pub fn costs(&self, seq: MetricSequence) -> impl Iterator<Item = f64> + '_ {
        self.rounds.iter().map(move |r| match seq {
            MetricSequence::Action => r.cost_action,
            MetricSequence::MeanBelief => r.cost_mean,
        })
    }

    fn constraint_values(&self, seq: MetricSequence, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.rounds.iter().map(move |r| match seq {
            MetricSequence::Action => r.constraint_action[k],
            MetricSequence::MeanBelief => r.constraint_mean[k],
        })
    }

    /// `delta_x` of round `t + 1`, with the post-run value for the last round.
    fn next_delta(&self, idx: usize) -> f64 {
        self.rounds
            .get(idx + 1)
            .map_or(self.final_delta_x, |r| r.delta_x)
    }

    fn next_lambda_bar(&self, idx: usize) -> &Vector {
        self.rounds
            .get(idx + 1)
            .map_or(&self.final_lambda_bar, |r| &r.lambda_bar)
    }

    pub fn step_sum(&self) -> f64 {
        self.rounds.iter().map(|r| r.alpha).sum()
    }
}

fn check_comparator(trace: &RunTrace, comp: &Comparator, p: &dyn ProblemSequence) -> Result<()> {
    if trace.horizon() != p.horizon() {
        return Err(Error::HorizonMismatch {
            trace: trace.horizon(),
            problem: p.horizon(),
        });
    }
    if comp.feasibility_margin > COMPARATOR_MARGIN {
        return Err(Error::Infeasible(format!(
            "comparator violates a constraint by {}",
            comp.feasibility_margin
        )));
    }
    Ok(())
}

/// `sum_t f_t(seq_t) - sum_t f_t(x_star)`. Not clamped at zero.
pub fn static_regret(
    trace: &RunTrace,
    comp: &Comparator,
    p: &dyn ProblemSequence,
    seq: MetricSequence,
) -> Result<f64> {
    check_comparator(trace, comp, p)?;
    Ok(trace.costs(seq).sum::<f64>() - comp.objective_value)
}

/// Running regret `sum_{s<=t} (f_s(seq_s) - f_s(x_star))` for every `t`.
pub fn cumulative_regret(
    trace: &RunTrace,
    comp: &Comparator,
    p: &dyn ProblemSequence,
    seq: MetricSequence,
) -> Result<Vec<f64>> {
    check_comparator(trace, comp, p)?;
    let mut acc = 0.0;
    Ok(trace
        .costs(seq)
        .enumerate()
        .map(|(idx, c)| {
            acc += c - p.cost(idx + 1, &comp.x_star);
            acc
        })
        .collect())
}

fn check_index(trace: &RunTrace, k: usize) -> Result<()> {
    let m = trace.num_constraints();
    if k >= m {
        return Err(Error::IndexOutOfRange { index: k, len: m });
    }
    Ok(())
}

/// `sum_t [g_{k,t}(seq_t)]^+`.
pub fn ccv(trace: &RunTrace, k: usize, seq: MetricSequence) -> Result<f64> {
    check_index(trace, k)?;
    Ok(trace.constraint_values(seq, k).map(|g| g.max(0.0)).sum())
}

/// Prefix sums of `[g_{k,t}(seq_t)]^+`.
pub fn cumulative_ccv(trace: &RunTrace, k: usize, seq: MetricSequence) -> Result<Vec<f64>> {
    check_index(trace, k)?;
    let mut acc = 0.0;
    Ok(trace
        .constraint_values(seq, k)
        .map(|g| {
            acc += g.max(0.0);
            acc
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(ln T, ln metric)` pairs; empty for degenerate fits.
    pub points: Vec<(f64, f64)>,
    /// Set when some metric was not positive; the exponent is then reported as 0.
    pub degenerate: bool,
}

/// Ordinary least squares of `ln metric` on `ln T`.
pub fn fit_growth_exponent(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: pairs.len(),
        });
    }
    if let Some((t, _)) = pairs.iter().find(|(t, _)| !(*t > 0.0)) {
        return Err(Error::Domain(format!("horizon must be positive, got {t}")));
    }
    if pairs.iter().any(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Ok(SlopeFit {
            exponent: 0.0,
            intercept: 0.0,
            r_squared: 0.0,
            points: Vec::new(),
            degenerate: true,
        });
    }
    let points: Vec<(f64, f64)> = pairs.iter().map(|&(t, v)| (t.ln(), v.ln())).collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all horizons are equal".into()));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - exponent * p.0).powi(2))
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(SlopeFit {
        exponent,
        intercept,
        r_squared,
        points,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusErrorSum {
    pub sum: f64,
    /// `sqrt(N) G_d / (1 - sigma) * sum_t alpha_t`; infinite when `sigma >= 1`.
    pub ceiling: f64,
}

impl ConsensusErrorSum {
    pub fn within_ceiling(&self) -> bool {
        self.sum <= self.ceiling
    }
}

/// `sum_t delta_{x,t}` next to its ceiling. With a constant step the ceiling
/// is `sqrt(N) G_d T^{1-c} / (1 - sigma)`.
pub fn consensus_error_sum(
    trace: &RunTrace,
    bounds: &DeclaredBounds,
    sigma: f64,
) -> ConsensusErrorSum {
    let sum = trace.rounds.iter().map(|r| r.delta_x).sum();
    let g_d = bounds.pseudo_gradient_bound(trace.lambda_max);
    let ceiling = if sigma < 1.0 {
        (trace.num_agents as f64).sqrt() * g_d / (1.0 - sigma) * trace.step_sum()
    } else {
        f64::INFINITY
    };
    ConsensusErrorSum { sum, ceiling }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionReport {
    pub rounds_checked: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` seen (negative when every round holds with room).
    pub max_excess: f64,
}

/// Per-round check of
/// `delta_{t+1}^2 <= (1+b) sigma^2 delta_t^2 + (1+1/b) alpha^2 N G_d^2`
/// with `b = (1 - sigma) / (1 + sigma)`, to within `1e-9`.
pub fn consensus_recursion_check(
    trace: &RunTrace,
    bounds: &DeclaredBounds,
    sigma: f64,
) -> RecursionReport {
    let mut report = RecursionReport {
        rounds_checked: 0,
        violations: 0,
        max_excess: f64::NEG_INFINITY,
    };
    if sigma >= 1.0 {
        return report;
    }
    let beta = (1.0 - sigma) / (1.0 + sigma);
    let g_d = bounds.pseudo_gradient_bound(trace.lambda_max);
    let n = trace.num_agents as f64;
    for (idx, r) in trace.rounds.iter().enumerate() {
        let lhs = trace.next_delta(idx).powi(2);
        let rhs = (1.0 + beta) * sigma * sigma * r.delta_x.powi(2)
            + (1.0 + 1.0 / beta) * r.alpha * r.alpha * n * g_d * g_d;
        let excess = lhs - rhs;
        report.rounds_checked += 1;
        report.max_excess = report.max_excess.max(excess);
        if excess > RECURSION_TOL {
            report.violations += 1;
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelescopeReport {
    pub rounds_checked: usize,
    pub clipped_rounds: usize,
    pub violations: usize,
}

impl TelescopeReport {
    pub fn unclipped_fraction(&self) -> f64 {
        let total = self.rounds_checked + self.clipped_rounds;
        if total == 0 {
            1.0
        } else {
            self.rounds_checked as f64 / total as f64
        }
    }
}

/// On rounds without an upper dual clip, checks
/// `lambda_bar_{t+1} >= lambda_bar_t + alpha * mean_belief_constraint - 1e-12`
/// componentwise.
pub fn dual_telescoping_check(trace: &RunTrace) -> TelescopeReport {
    let mut report = TelescopeReport {
        rounds_checked: 0,
        clipped_rounds: 0,
        violations: 0,
    };
    for (idx, r) in trace.rounds.iter().enumerate() {
        if r.dual_clips > 0 {
            report.clipped_rounds += 1;
            continue;
        }
        report.rounds_checked += 1;
        let next = trace.next_lambda_bar(idx);
        let bad = (0..next.len()).any(|k| {
            next[k] < r.lambda_bar[k] + r.alpha * r.mean_belief_constraint[k] - TELESCOPE_TOL
        });
        if bad {
            report.violations += 1;
        }
    }
    report
}
