//! Time-varying cost and constraint oracles.
//!
//! A [`ProblemSequence`] reveals, for every round `t` in `1..=T`, a convex
//! cost `f_t` and `m` convex constraints `g_{k,t}` over the joint action set
//! together with their gradients. Instances also declare the regularity
//! constants the analysis depends on (gradient bounds, constraint Lipschitz
//! constant, set diameter).

mod comparator;
mod coupled;
mod separable;
mod validate;

pub use comparator::{
    grid_comparator, hindsight_comparator, subgradient_comparator, Comparator, ComparatorMethod,
    SubgradientOptions,
};
pub use coupled::{
    make_coupled_quadratic, CoupledQuadratic, CoupledQuadraticParams, QuadraticConstraint,
};
pub use separable::{make_separable_quadratic, SeparableQuadratic, SeparableQuadraticParams};
pub use validate::{
    audit_bounds, convexity_probe, is_convex_on_samples, validate_gradients, BoundAudit,
    GradientReport, FD_STEP,
};

use crate::geometry::ProductSet;
use crate::{Matrix, Vector};

/// Regularity constants an instance certifies over its action set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredBounds {
    /// Upper bound on `||grad f_t(x)||`.
    pub grad_f: f64,
    /// Upper bound on the Frobenius norm of the constraint Jacobian.
    pub jac_g: f64,
    /// Upper bound on the Lipschitz constant of every constraint component.
    pub lipschitz_g: f64,
    /// Diameter of the joint action set.
    pub diameter: f64,
}

impl DeclaredBounds {
    /// Bound on a pseudo-gradient block: `G_f + lambda_max * G_g`.
    pub fn pseudo_gradient_bound(&self, lambda_max: f64) -> f64 {
        self.grad_f + lambda_max * self.jac_g
    }
}

/// Oracle for a sequence of rounds `t = 1..=horizon`.
///
/// Oracles are pure functions of `(t, x)`; implementations must be shareable
/// across threads.
pub trait ProblemSequence: Send + Sync {
    fn horizon(&self) -> usize;
    fn product_set(&self) -> &ProductSet;
    fn num_constraints(&self) -> usize;

    fn cost(&self, t: usize, x: &Vector) -> f64;
    fn cost_grad(&self, t: usize, x: &Vector) -> Vector;
    fn constraint(&self, t: usize, x: &Vector) -> Vector;
    /// `m x d` Jacobian; row `k` is the gradient of `g_{k,t}`.
    fn constraint_jac(&self, t: usize, x: &Vector) -> Matrix;

    fn bounds(&self) -> DeclaredBounds;

    fn dim(&self) -> usize {
        self.product_set().dim()
    }

    fn num_agents(&self) -> usize {
        self.product_set().num_blocks()
    }

    /// A point strictly feasible for every round, when the instance knows one.
    fn slater_point(&self) -> Option<Vector> {
        None
    }

    /// Closed-form hindsight optimum, when the instance registers one.
    fn analytic_optimum(&self) -> Option<Vector> {
        None
    }

    /// Per-agent sub-oracles for separable instances.
    fn separable(&self) -> Option<&dyn SeparableOracle> {
        None
    }

    /// `sum_t f_t(x)`.
    fn total_cost(&self, x: &Vector) -> f64 {
        (1..=self.horizon()).map(|t| self.cost(t, x)).sum()
    }

    /// `sum_t grad f_t(x)`.
    fn total_cost_grad(&self, x: &Vector) -> Vector {
        (1..=self.horizon()).fold(Vector::zeros(self.dim()), |acc, t| {
            acc + self.cost_grad(t, x)
        })
    }

    /// `sum_t sum_k [g_{k,t}(x)]^+` and a subgradient of it.
    fn violation_penalty(&self, x: &Vector) -> (f64, Vector) {
        let mut value = 0.0;
        let mut grad = Vector::zeros(self.dim());
        for t in 1..=self.horizon() {
            let g = self.constraint(t, x);
            if g.iter().any(|v| *v > 0.0) {
                let jac = self.constraint_jac(t, x);
                for k in 0..g.len() {
                    if g[k] > 0.0 {
                        value += g[k];
                        grad += jac.row(k).transpose();
                    }
                }
            }
        }
        (value, grad)
    }

    /// `max_t g_{k,t}(x)` for each component `k`.
    fn worst_constraint(&self, x: &Vector) -> Vector {
        let mut worst = Vector::from_element(self.num_constraints(), f64::NEG_INFINITY);
        for t in 1..=self.horizon() {
            let g = self.constraint(t, x);
            for k in 0..g.len() {
                worst[k] = worst[k].max(g[k]);
            }
        }
        worst
    }
}

/// Local oracles of a separable instance: `f_t = sum_i f_{i,t}(x_i)` and
/// `g_t = sum_i g_{i,t}(x_i)`.
pub trait SeparableOracle: Send + Sync {
    fn local_cost(&self, t: usize, agent: usize, xi: &Vector) -> f64;
    fn local_cost_grad(&self, t: usize, agent: usize, xi: &Vector) -> Vector;
    /// `m`-vector of local constraint terms.
    fn local_constraint(&self, t: usize, agent: usize, xi: &Vector) -> Vector;
    /// `m x d_i` Jacobian of the local constraint terms.
    fn local_constraint_jac(&self, t: usize, agent: usize, xi: &Vector) -> Matrix;
}

/// Dual cap sized from a Slater point: `2 G_f D / s` where `s` is the worst
/// slack `min_{k,t} -g_{k,t}(x_slater)`. Returns `None` when the instance has
/// no strictly feasible point on record.
pub fn slater_dual_cap(p: &dyn ProblemSequence) -> Option<f64> {
    let xs = p.slater_point()?;
    let slack = -p.worst_constraint(&xs).max();
    if slack <= 0.0 {
        return None;
    }
    let b = p.bounds();
    Some(2.0 * b.grad_f * b.diameter / slack)
}

/// `sin(omega t + phase)` for `t = 1..=horizon`, shifted to have zero mean over
/// the horizon so that the time-averaged instance is drift-free.
pub(crate) fn centered_wave(horizon: usize, omega: f64, phase: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=horizon)
        .map(|t| (omega * t as f64 + phase).sin())
        .collect();
    let mean = raw.iter().sum::<f64>() / horizon.max(1) as f64;
    raw.into_iter().map(|s| s - mean).collect()
}

pub(crate) fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
