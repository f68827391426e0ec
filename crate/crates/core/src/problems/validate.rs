//! Self-checks for problem oracles: finite-difference gradients, sampled
//! convexity and the declared regularity bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ProblemSequence;
use crate::Vector;

/// Central difference step.
pub const FD_STEP: f64 = 1e-5;
const CONVEXITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub samples: usize,
    pub max_cost_error: f64,
    pub max_constraint_error: f64,
    pub tol: f64,
}

impl GradientReport {
    pub fn max_error(&self) -> f64 {
        self.max_cost_error.max(self.max_constraint_error)
    }

    pub fn passed(&self) -> bool {
        self.max_error() <= self.tol
    }
}

fn relative_error(analytic: &Vector, fd: &Vector) -> f64 {
    let scale = analytic.norm().max(fd.norm()).max(1.0);
    (analytic - fd).norm() / scale
}

fn central_difference(x: &Vector, mut f: impl FnMut(&Vector) -> f64) -> Vector {
    let mut probe = x.clone();
    Vector::from_fn(x.len(), |j, _| {
        let orig = probe[j];
        probe[j] = orig + FD_STEP;
        let up = f(&probe);
        probe[j] = orig - FD_STEP;
        let down = f(&probe);
        probe[j] = orig;
        (up - down) / (2.0 * FD_STEP)
    })
}

/// Compares `cost_grad` and every `constraint_jac` row against central
/// differences at `samples` random `(t, x)` pairs. The error of one gradient
/// is `||analytic - fd|| / max(||analytic||, ||fd||, 1)`.
pub fn validate_gradients(
    p: &dyn ProblemSequence,
    samples: usize,
    tol: f64,
    seed: u64,
) -> GradientReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = p.product_set();
    let mut report = GradientReport {
        samples,
        max_cost_error: 0.0,
        max_constraint_error: 0.0,
        tol,
    };
    for _ in 0..samples {
        let t = rng.random_range(1..=p.horizon());
        let x = set.sample(&mut rng);
        let fd = central_difference(&x, |y| p.cost(t, y));
        report.max_cost_error = report
            .max_cost_error
            .max(relative_error(&p.cost_grad(t, &x), &fd));
        let jac = p.constraint_jac(t, &x);
        for k in 0..p.num_constraints() {
            let fd = central_difference(&x, |y| p.constraint(t, y)[k]);
            let row: Vector = jac.row(k).transpose();
            report.max_constraint_error =
                report.max_constraint_error.max(relative_error(&row, &fd));
        }
    }
    report
}

/// Largest observed excess of a chord inequality
/// `h(s x + (1-s) y) - s h(x) - (1-s) h(y)` over `triples` random triples,
/// across `f_t` and every `g_{k,t}`. Convex oracles give values `<= 1e-9`.
pub fn convexity_probe(p: &dyn ProblemSequence, triples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = p.product_set();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..triples {
        let t = rng.random_range(1..=p.horizon());
        let x = set.sample(&mut rng);
        let y = set.sample(&mut rng);
        let s: f64 = rng.random();
        let z = &x * s + &y * (1.0 - s);
        let excess = p.cost(t, &z) - s * p.cost(t, &x) - (1.0 - s) * p.cost(t, &y);
        worst = worst.max(excess);
        let (gx, gy, gz) = (
            p.constraint(t, &x),
            p.constraint(t, &y),
            p.constraint(t, &z),
        );
        for k in 0..p.num_constraints() {
            worst = worst.max(gz[k] - s * gx[k] - (1.0 - s) * gy[k]);
        }
    }
    worst
}

pub fn is_convex_on_samples(p: &dyn ProblemSequence, triples: usize, seed: u64) -> bool {
    convexity_probe(p, triples, seed) <= CONVEXITY_SLACK
}

/// Largest sampled gradient norms next to the declared bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundAudit {
    pub max_grad_f: f64,
    pub max_jac_g: f64,
    pub declared_grad_f: f64,
    pub declared_jac_g: f64,
}

impl BoundAudit {
    pub fn passed(&self) -> bool {
        self.max_grad_f <= self.declared_grad_f && self.max_jac_g <= self.declared_jac_g
    }
}

pub fn audit_bounds(p: &dyn ProblemSequence, samples: usize, seed: u64) -> BoundAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = p.product_set();
    let b = p.bounds();
    let mut audit = BoundAudit {
        max_grad_f: 0.0,
        max_jac_g: 0.0,
        declared_grad_f: b.grad_f,
        declared_jac_g: b.jac_g,
    };
    for _ in 0..samples {
        let t = rng.random_range(1..=p.horizon());
        let x = set.sample(&mut rng);
        audit.max_grad_f = audit.max_grad_f.max(p.cost_grad(t, &x).norm());
        audit.max_jac_g = audit.max_jac_g.max(p.constraint_jac(t, &x).norm());
    }
    audit
}
