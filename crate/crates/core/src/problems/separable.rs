use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{centered_wave, max_abs, DeclaredBounds, ProblemSequence, SeparableOracle};
use crate::geometry::ProductSet;
use crate::{Error, Matrix, Result, Vector};

const OMEGA: f64 = 2.0;
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableQuadraticParams {
    pub n_agents: usize,
    pub block_dim: usize,
    pub horizon: usize,
    pub seed: u64,
    pub drift: f64,
}

/// Separable instance with one shared budget constraint:
///
/// * `f_{i,t}(x_i) = ||x_i - b_{i,t}||^2`
/// * `g_{i,t}(x_i) = 1^T x_i - rho_i / n`, so `g_t(x) = 1^T x - (1/n) sum_i rho_i`
#[derive(Debug, Clone)]
pub struct SeparableQuadratic {
    set: ProductSet,
    horizon: usize,
    centers: Vec<Vector>,
    drift_dirs: Vec<Vector>,
    drift: f64,
    waves: Vec<Vec<f64>>,
    budgets: Vec<f64>,
    mean_targets: Vec<Vector>,
    /// `sum_t sum_i ||b_{i,t} - mean_i||^2`
    target_spread: f64,
    bounds: DeclaredBounds,
}

impl SeparableQuadratic {
    /// Drift-free instance: `b_{i,t} = centers[i]`.
    pub fn from_parts(
        set: ProductSet,
        centers: Vec<Vector>,
        budgets: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let n = set.num_blocks();
        if centers.len() != n || budgets.len() != n {
            return Err(Error::Shape(format!(
                "{n} agents but {} centers and {} budgets",
                centers.len(),
                budgets.len()
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidSize("horizon must be positive".into()));
        }
        for (i, c) in centers.iter().enumerate() {
            if c.len() != set.blocks()[i].dim() {
                return Err(Error::Shape(format!("center {i} has wrong dimension")));
            }
        }
        let dirs = centers.iter().map(|c| Vector::zeros(c.len())).collect();
        Ok(Self::assemble(
            set,
            horizon,
            centers,
            dirs,
            0.0,
            vec![vec![0.0; horizon]; n],
            budgets,
        ))
    }

    fn assemble(
        set: ProductSet,
        horizon: usize,
        centers: Vec<Vector>,
        drift_dirs: Vec<Vector>,
        drift: f64,
        waves: Vec<Vec<f64>>,
        budgets: Vec<f64>,
    ) -> Self {
        let mean_targets = (0..centers.len())
            .map(|i| {
                let s: f64 = waves[i].iter().sum::<f64>() / horizon as f64;
                &centers[i] + &drift_dirs[i] * (drift * s)
            })
            .collect();
        let target_spread = (0..centers.len())
            .map(|i| {
                let w = &waves[i];
                let wm = w.iter().sum::<f64>() / horizon as f64;
                let var: f64 = w.iter().map(|s| (s - wm).powi(2)).sum();
                drift * drift * drift_dirs[i].norm_squared() * var
            })
            .sum();
        let target_max = centers
            .iter()
            .zip(&drift_dirs)
            .zip(&waves)
            .map(|((c, u), w)| (c.norm() + drift * max_abs(w) * u.norm()).powi(2))
            .sum::<f64>()
            .sqrt();
        let root_d = (set.dim() as f64).sqrt();
        let bounds = DeclaredBounds {
            grad_f: 2.0 * (set.max_norm() + target_max),
            jac_g: root_d,
            lipschitz_g: root_d,
            diameter: set.diameter(),
        };
        Self {
            set,
            horizon,
            centers,
            drift_dirs,
            drift,
            waves,
            budgets,
            mean_targets,
            target_spread,
            bounds,
        }
    }

    fn target(&self, t: usize, i: usize) -> Vector {
        &self.centers[i] + &self.drift_dirs[i] * (self.drift * self.waves[i][t - 1])
    }

    /// Total budget `(1/n) sum_i rho_i`.
    pub fn budget(&self) -> f64 {
        self.budgets.iter().sum::<f64>() / self.budgets.len() as f64
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    fn block<'a>(&self, i: usize, x: &'a Vector) -> nalgebra::DVectorView<'a, f64> {
        let r = self.set.range(i);
        x.rows(r.start, r.len())
    }

    /// Minimiser of `sum_i ||x_i - mean_i||^2` over boxes subject to
    /// `1^T x <= budget`: `x(mu) = clamp(mean - mu/2)` with `mu >= 0` found by
    /// bisection on the monotone budget residual.
    fn budgeted_projection(&self) -> Option<Vector> {
        let budget = self.budget();
        let at = |mu: f64| -> Option<Vector> {
            let parts = self
                .mean_targets
                .iter()
                .enumerate()
                .map(|(i, m)| self.set.blocks()[i].project(&m.add_scalar(-0.5 * mu)).ok())
                .collect::<Option<Vec<_>>>()?;
            Some(self.set.join(parts))
        };
        let x0 = at(0.0)?;
        if x0.sum() <= budget {
            return Some(x0);
        }
        let mut hi = 1.0;
        while at(hi)?.sum() > budget {
            hi *= 2.0;
            if hi > 1e12 {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if at(mid)?.sum() > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(hi)
    }
}

/// Random separable instance on `[-1, 1]^block_dim` boxes.
///
/// Mean targets lie in `[0.3, 0.9]^block_dim`; the total budget is half the
/// sum of all target coordinates (so the constraint binds), split unevenly
/// across agents. Each agent's target oscillates with its own phase.
pub fn make_separable_quadratic(params: SeparableQuadraticParams) -> Result<SeparableQuadratic> {
    let SeparableQuadraticParams {
        n_agents: n,
        block_dim,
        horizon,
        seed,
        drift,
    } = params;
    if n == 0 || block_dim == 0 || horizon == 0 {
        return Err(Error::InvalidSize(
            "agents, block dimension and horizon must be positive".into(),
        ));
    }
    if !(drift >= 0.0) || !drift.is_finite() {
        return Err(Error::Domain(format!(
            "drift must be finite and >= 0, got {drift}"
        )));
    }
    let set = ProductSet::uniform_cubes(n, block_dim, -1.0, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vector> = (0..n)
        .map(|_| Vector::from_fn(block_dim, |_, _| rng.random_range(0.3..0.9)))
        .collect();
    let shares: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let share_sum: f64 = shares.iter().sum();
    let total = 0.5 * centers.iter().map(|c| c.sum()).sum::<f64>();
    let budgets = shares
        .iter()
        .map(|s| n as f64 * total * s / share_sum)
        .collect();
    let dirs = (0..n)
        .map(|_| {
            let u = Vector::from_fn(block_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = u.norm();
            u / norm
        })
        .collect();
    let waves = (0..n)
        .map(|_| {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            centered_wave(horizon, OMEGA, phase)
        })
        .collect();
    Ok(SeparableQuadratic::assemble(
        set, horizon, centers, dirs, drift, waves, budgets,
    ))
}

impl ProblemSequence for SeparableQuadratic {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn product_set(&self) -> &ProductSet {
        &self.set
    }

    fn num_constraints(&self) -> usize {
        1
    }

    fn cost(&self, t: usize, x: &Vector) -> f64 {
        (0..self.centers.len())
            .map(|i| (self.block(i, x) - self.target(t, i)).norm_squared())
            .sum()
    }

    fn cost_grad(&self, t: usize, x: &Vector) -> Vector {
        let parts = (0..self.centers.len()).map(|i| (self.block(i, x) - self.target(t, i)) * 2.0);
        self.set.join(parts)
    }

    fn constraint(&self, _t: usize, x: &Vector) -> Vector {
        Vector::from_element(1, x.sum() - self.budget())
    }

    fn constraint_jac(&self, _t: usize, x: &Vector) -> Matrix {
        Matrix::from_element(1, x.len(), 1.0)
    }

    fn bounds(&self) -> DeclaredBounds {
        self.bounds
    }

    fn slater_point(&self) -> Option<Vector> {
        let center = self.set.center();
        (center.sum() < self.budget()).then_some(center)
    }

    fn analytic_optimum(&self) -> Option<Vector> {
        self.budgeted_projection()
    }

    fn separable(&self) -> Option<&dyn SeparableOracle> {
        Some(self)
    }

    fn worst_constraint(&self, x: &Vector) -> Vector {
        self.constraint(1, x)
    }

    fn total_cost(&self, x: &Vector) -> f64 {
        let dev: f64 = (0..self.centers.len())
            .map(|i| (self.block(i, x) - &self.mean_targets[i]).norm_squared())
            .sum();
        self.horizon as f64 * dev + self.target_spread
    }

    fn total_cost_grad(&self, x: &Vector) -> Vector {
        let scale = 2.0 * self.horizon as f64;
        let parts =
            (0..self.centers.len()).map(|i| (self.block(i, x) - &self.mean_targets[i]) * scale);
        self.set.join(parts)
    }

    fn violation_penalty(&self, x: &Vector) -> (f64, Vector) {
        let g = self.constraint(1, x)[0];
        if g > 0.0 {
            let t = self.horizon as f64;
            (t * g, Vector::from_element(x.len(), t))
        } else {
            (0.0, Vector::zeros(x.len()))
        }
    }
}

impl SeparableOracle for SeparableQuadratic {
    fn local_cost(&self, t: usize, agent: usize, xi: &Vector) -> f64 {
        (xi - self.target(t, agent)).norm_squared()
    }

    fn local_cost_grad(&self, t: usize, agent: usize, xi: &Vector) -> Vector {
        (xi - self.target(t, agent)) * 2.0
    }

    fn local_constraint(&self, _t: usize, agent: usize, xi: &Vector) -> Vector {
        let n = self.centers.len() as f64;
        Vector::from_element(1, xi.sum() - self.budgets[agent] / n)
    }

    fn local_constraint_jac(&self, _t: usize, _agent: usize, xi: &Vector) -> Matrix {
        Matrix::from_element(1, xi.len(), 1.0)
    }
}
