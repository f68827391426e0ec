//! Best fixed action in hindsight: `argmin sum_t f_t(x)` over the points of
//! `X` that satisfy every `g_{k,t}(x) <= 0`.

use std::str::FromStr;

use super::ProblemSequence;
use crate::{Error, Result, Vector};

/// Feasibility threshold used by grid search.
const GRID_FEAS_TOL: f64 = 1e-9;
/// Refinement stops once the grid spacing falls below this fraction of `D`.
const GRID_FINEST: f64 = 1e-9;
const GRID_REFINE_FACTOR: f64 = 5.0;
const GRID_WINDOW: i64 = 10;
const MAX_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparatorMethod {
    Analytic,
    Grid,
    Subgradient,
}

impl ComparatorMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ComparatorMethod::Analytic => "analytic",
            ComparatorMethod::Grid => "grid",
            ComparatorMethod::Subgradient => "subgradient",
        }
    }
}

impl FromStr for ComparatorMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "grid" => Ok(Self::Grid),
            "subgradient" => Ok(Self::Subgradient),
            other => Err(format!(
                "unknown comparator `{other}` (expected analytic, grid or subgradient)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    pub x_star: Vector,
    /// `sum_t f_t(x_star)`.
    pub objective_value: f64,
    /// `max_{t,k} g_{k,t}(x_star)`.
    pub feasibility_margin: f64,
    pub method: ComparatorMethod,
}

impl Comparator {
    fn evaluate(p: &dyn ProblemSequence, x_star: Vector, method: ComparatorMethod) -> Self {
        let margin = if p.num_constraints() == 0 {
            f64::NEG_INFINITY
        } else {
            p.worst_constraint(&x_star).max()
        };
        Self {
            objective_value: p.total_cost(&x_star),
            feasibility_margin: margin,
            x_star,
            method,
        }
    }
}

pub fn hindsight_comparator(
    p: &dyn ProblemSequence,
    method: ComparatorMethod,
) -> Result<Comparator> {
    match method {
        ComparatorMethod::Analytic => {
            let x = p.analytic_optimum().ok_or_else(|| {
                Error::Capability("instance has no closed-form hindsight optimum".into())
            })?;
            let comp = Comparator::evaluate(p, x, method);
            if comp.feasibility_margin > MAX_MARGIN {
                return Err(Error::Infeasible(format!(
                    "registered optimum violates a constraint by {}",
                    comp.feasibility_margin
                )));
            }
            Ok(comp)
        }
        ComparatorMethod::Grid => grid_comparator(p, 1e-2 * p.bounds().diameter),
        ComparatorMethod::Subgradient => subgradient_comparator(p, &SubgradientOptions::default()),
    }
}

fn worst(p: &dyn ProblemSequence, x: &Vector) -> f64 {
    if p.num_constraints() == 0 {
        f64::NEG_INFINITY
    } else {
        p.worst_constraint(x).max()
    }
}

/// Multi-level grid search.
///
/// Level 0 enumerates the bounding box of `X` at spacing `resolution` per
/// axis. Each further level re-grids a window of +-2 spacings around the
/// incumbent at a fifth of the spacing, until the spacing drops below
/// `1e-9 * D`. A point counts as feasible when it lies in `X` and every
/// `g_{k,t}` is at most `1e-9` there.
pub fn grid_comparator(p: &dyn ProblemSequence, resolution: f64) -> Result<Comparator> {
    let d = p.dim();
    if d > 4 {
        return Err(Error::Dimensionality(d));
    }
    if !(resolution > 0.0) {
        return Err(Error::Domain(format!(
            "grid resolution must be positive, got {resolution}"
        )));
    }
    let set = p.product_set();
    let (lo, hi): (Vec<f64>, Vec<f64>) = {
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        for b in set.blocks() {
            let (l, h) = b.bounding_box();
            lo.extend(l.iter());
            hi.extend(h.iter());
        }
        (lo, hi)
    };
    let feasible = |x: &Vector| set.contains(x, 0.0) && worst(p, x) <= GRID_FEAS_TOL;

    let mut best: Option<(f64, Vector)> = None;
    let consider = |x: Vector, best: &mut Option<(f64, Vector)>| {
        if feasible(&x) {
            let v = p.total_cost(&x);
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                *best = Some((v, x));
            }
        }
    };

    let axes: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let width = hi[j] - lo[j];
            if width <= 0.0 {
                return vec![lo[j]];
            }
            let count = (width / resolution).ceil() as usize + 1;
            (0..count)
                .map(|k| lo[j] + width * k as f64 / (count - 1) as f64)
                .collect()
        })
        .collect();
    for_each_grid_point(&axes, |x| consider(x, &mut best));

    let diameter = p.bounds().diameter.max(f64::MIN_POSITIVE);
    let mut spacing = resolution;
    while spacing > GRID_FINEST * diameter {
        let Some((_, center)) = best.clone() else {
            break;
        };
        let fine = spacing / GRID_REFINE_FACTOR;
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                (-GRID_WINDOW..=GRID_WINDOW)
                    .map(|k| center[j] + k as f64 * fine)
                    .filter(|x| *x >= lo[j] && *x <= hi[j])
                    .collect()
            })
            .collect();
        for_each_grid_point(&axes, |x| consider(x, &mut best));
        spacing = fine;
    }

    let (_, x) =
        best.ok_or_else(|| Error::Infeasible("no grid point satisfies every constraint".into()))?;
    Ok(Comparator::evaluate(p, x, ComparatorMethod::Grid))
}

fn for_each_grid_point(axes: &[Vec<f64>], mut f: impl FnMut(Vector)) {
    if axes.iter().any(|a| a.is_empty()) {
        return;
    }
    let d = axes.len();
    let mut idx = vec![0usize; d];
    loop {
        f(Vector::from_fn(d, |j, _| axes[j][idx[j]]));
        let mut j = 0;
        loop {
            if j == d {
                return;
            }
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientOptions {
    pub iterations: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_escalations: usize,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        Self {
            iterations: 100_000,
            initial_penalty: 1.0,
            penalty_growth: 10.0,
            max_escalations: 8,
        }
    }
}

/// Value and subgradient of `(1/T) [sum_t f_t(x) + mu sum_t sum_k [g_{k,t}(x)]^+]`.
fn penalized(p: &dyn ProblemSequence, x: &Vector, mu: f64) -> (f64, Vector) {
    let horizon = p.horizon() as f64;
    let (viol, viol_grad) = p.violation_penalty(x);
    let value = p.total_cost(x) + mu * viol;
    let grad = p.total_cost_grad(x) + viol_grad * mu;
    (value / horizon, grad / horizon)
}

/// Projected subgradient on the exact-penalty objective with normalized steps
/// of length `D / sqrt(s)`, escalating the penalty by `penalty_growth` until
/// the best iterate violates no constraint by more than `1e-6`. A residual
/// positive violation is then removed by bisecting towards the Slater point
/// when the instance has one.
pub fn subgradient_comparator(
    p: &dyn ProblemSequence,
    opts: &SubgradientOptions,
) -> Result<Comparator> {
    let set = p.product_set();
    let diameter = p.bounds().diameter;
    let slater = p.slater_point();
    let mut start = set.project(&slater.clone().unwrap_or_else(|| set.center()))?;
    let mut mu = opts.initial_penalty;
    let mut best = start.clone();
    let mut margin = worst(p, &best);

    for _ in 0..=opts.max_escalations {
        let mut x = start.clone();
        best = x.clone();
        let mut best_val = penalized(p, &x, mu).0;
        for s in 1..=opts.iterations {
            let (val, sg) = penalized(p, &x, mu);
            if val < best_val {
                best_val = val;
                best = x.clone();
            }
            let norm = sg.norm();
            if norm == 0.0 {
                break;
            }
            let step = diameter / (s as f64).sqrt();
            x = set.project(&(&x - sg * (step / norm)))?;
        }
        if penalized(p, &x, mu).0 < best_val {
            best = x;
        }
        margin = worst(p, &best);
        if margin <= MAX_MARGIN {
            break;
        }
        mu *= opts.penalty_growth;
        start = best.clone();
    }

    if margin > 0.0 {
        if let Some(xs) = slater {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let cand = &best * (1.0 - mid) + &xs * mid;
                if worst(p, &cand) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            best = &best * (1.0 - hi) + &xs * hi;
        }
    }

    let comp = Comparator::evaluate(p, best, ComparatorMethod::Subgradient);
    if comp.feasibility_margin > MAX_MARGIN {
        return Err(Error::Infeasible(format!(
            "penalty escalation ended with violation {}",
            comp.feasibility_margin
        )));
    }
    Ok(comp)
}
