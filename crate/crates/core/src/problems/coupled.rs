use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{centered_wave, max_abs, DeclaredBounds, ProblemSequence};
use crate::geometry::ProductSet;
use crate::{Error, Matrix, Result, Vector};

const COST_OMEGA: f64 = 2.0;
const CONSTRAINT_OMEGA: f64 = 1.3;
const CONSTRAINT_PHASE: f64 = 0.7;
/// Constraint drift amplitude relative to the cost drift.
const CONSTRAINT_DRIFT_RATIO: f64 = 0.2;
const SLATER_MARGIN: f64 = 0.2;
const MIN_SINGULAR: f64 = 0.2;

/// `g(x) = x^T Q x + q^T x - rho` with symmetric PSD `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraint {
    pub quad: Matrix,
    pub lin: Vector,
    pub offset: f64,
}

impl QuadraticConstraint {
    fn value(&self, x: &Vector) -> f64 {
        x.dot(&(&self.quad * x)) + self.lin.dot(x) - self.offset
    }

    fn grad(&self, x: &Vector) -> Vector {
        &self.quad * x * 2.0 + &self.lin
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledQuadraticParams {
    pub n_agents: usize,
    pub block_dim: usize,
    pub constraints: usize,
    pub horizon: usize,
    pub seed: u64,
    pub drift: f64,
}

/// Nonseparable quadratic instance.
///
/// * cost `f_t(x) = ||A x - b_t||^2`, `b_t = b_0 + drift * s_t * u`
/// * constraints `g_{k,t}(x) = x^T Q_k x + q_k^T x - rho_k + eps * s'_t * v_k^T (x - p)`
///
/// `s_t`, `s'_t` are zero-mean sinusoids over the horizon. The constraint
/// drift pivots around the anchor `p`, so `g_{k,t}(p)` does not depend on `t`.
#[derive(Debug, Clone)]
pub struct CoupledQuadratic {
    set: ProductSet,
    horizon: usize,
    a: Matrix,
    a_t: Matrix,
    b0: Vector,
    cost_dir: Vector,
    cost_drift: f64,
    cost_wave: Vec<f64>,
    constraints: Vec<QuadraticConstraint>,
    constraint_dirs: Vec<Vector>,
    constraint_drift: f64,
    constraint_wave: Vec<f64>,
    anchor: Vector,
    optimum: Option<Vector>,
    slater: Option<Vector>,
    bounds: DeclaredBounds,
    sum_b: Vector,
    sum_b_sq: f64,
    wave_max: f64,
    wave_min: f64,
    /// Constraint wave sorted ascending, with prefix sums (length `T + 1`).
    sorted_wave: Vec<f64>,
    wave_prefix: Vec<f64>,
}

fn spectral_norm(m: &Matrix) -> f64 {
    m.singular_values().max()
}

impl CoupledQuadratic {
    /// Drift-free instance from explicit parts: `f_t(x) = ||A x - b||^2` and
    /// the given time-invariant constraints.
    pub fn from_parts(
        set: ProductSet,
        a: Matrix,
        b: Vector,
        constraints: Vec<QuadraticConstraint>,
        horizon: usize,
    ) -> Result<Self> {
        let d = set.dim();
        if horizon == 0 {
            return Err(Error::InvalidSize("horizon must be positive".into()));
        }
        if a.nrows() != b.len() || a.ncols() != d {
            return Err(Error::Shape(format!(
                "A is {}x{}, b has {} entries, joint dimension is {d}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        for (k, c) in constraints.iter().enumerate() {
            if c.quad.nrows() != d || c.quad.ncols() != d || c.lin.len() != d {
                return Err(Error::Shape(format!("constraint {k} has wrong dimensions")));
            }
        }
        let m = constraints.len();
        let mut inst = Self {
            a_t: a.transpose(),
            a,
            b0: b.clone(),
            cost_dir: Vector::zeros(b.len()),
            cost_drift: 0.0,
            cost_wave: vec![0.0; horizon],
            constraint_dirs: vec![Vector::zeros(d); m],
            constraint_drift: 0.0,
            constraint_wave: vec![0.0; horizon],
            anchor: Vector::zeros(d),
            optimum: None,
            slater: None,
            bounds: DeclaredBounds {
                grad_f: 0.0,
                jac_g: 0.0,
                lipschitz_g: 0.0,
                diameter: 0.0,
            },
            sum_b: Vector::zeros(0),
            sum_b_sq: 0.0,
            wave_max: 0.0,
            wave_min: 0.0,
            sorted_wave: Vec::new(),
            wave_prefix: Vec::new(),
            constraints,
            set,
            horizon,
        };
        inst.finish();
        let center = inst.set.center();
        if m == 0 || inst.worst_constraint(&center).max() < 0.0 {
            inst.slater = Some(center);
        }
        Ok(inst)
    }

    /// Precomputes the aggregates and the declared bounds.
    fn finish(&mut self) {
        let mut sum_b = Vector::zeros(self.b0.len());
        let mut sum_b_sq = 0.0;
        for t in 1..=self.horizon {
            let b = self.target(t);
            sum_b_sq += b.norm_squared();
            sum_b += b;
        }
        self.sum_b = sum_b;
        self.sum_b_sq = sum_b_sq;
        self.wave_max = self.constraint_wave.iter().copied().fold(0.0, f64::max);
        self.wave_min = self.constraint_wave.iter().copied().fold(0.0, f64::min);
        let mut sorted = self.constraint_wave.clone();
        sorted.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        prefix.push(0.0);
        for s in &sorted {
            prefix.push(prefix.last().unwrap() + s);
        }
        self.sorted_wave = sorted;
        self.wave_prefix = prefix;

        let radius = self.set.max_norm();
        let a_norm = spectral_norm(&self.a);
        let b_max =
            self.b0.norm() + self.cost_drift * max_abs(&self.cost_wave) * self.cost_dir.norm();
        let grad_f = 2.0 * a_norm * (a_norm * radius + b_max);
        let eps_max = self.constraint_drift * max_abs(&self.constraint_wave);
        let per_component: Vec<f64> = self
            .constraints
            .iter()
            .zip(&self.constraint_dirs)
            .map(|(c, v)| 2.0 * spectral_norm(&c.quad) * radius + c.lin.norm() + eps_max * v.norm())
            .collect();
        self.bounds = DeclaredBounds {
            grad_f,
            jac_g: per_component.iter().map(|l| l * l).sum::<f64>().sqrt(),
            lipschitz_g: per_component.iter().copied().fold(0.0, f64::max),
            diameter: self.set.diameter(),
        };
    }

    fn target(&self, t: usize) -> Vector {
        &self.b0 + &self.cost_dir * (self.cost_drift * self.cost_wave[t - 1])
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn constraints(&self) -> &[QuadraticConstraint] {
        &self.constraints
    }

    /// Point around which the constraint drift pivots.
    pub fn anchor(&self) -> &Vector {
        &self.anchor
    }
}

/// Random instance whose hindsight optimum is known exactly.
///
/// All per-agent sets are `[-1, 1]^block_dim`. An anchor `p` is drawn inside
/// the set, every constraint is shifted so that `g_k(p) = 0` while the set
/// centre keeps a slack of at least 0.2, and `b_0` is chosen so that `p`
/// satisfies the KKT conditions of the time-averaged problem with unit
/// multipliers. Because the drifts have zero mean over the horizon and the
/// constraint drift pivots at `p`, `p` is the exact minimiser of
/// `sum_t f_t` over the points feasible in every round. The cost drift moves
/// the per-round unconstrained minimiser along the constraint normal.
pub fn make_coupled_quadratic(params: CoupledQuadraticParams) -> Result<CoupledQuadratic> {
    let CoupledQuadraticParams {
        n_agents,
        block_dim,
        constraints: m,
        horizon,
        seed,
        drift,
    } = params;
    if n_agents == 0 || block_dim == 0 || m == 0 || horizon == 0 {
        return Err(Error::InvalidSize(
            "agents, block dimension, constraint count and horizon must be positive".into(),
        ));
    }
    if !(drift >= 0.0) || !drift.is_finite() {
        return Err(Error::Domain(format!(
            "drift must be finite and >= 0, got {drift}"
        )));
    }
    let d = n_agents * block_dim;
    let set = ProductSet::uniform_cubes(n_agents, block_dim, -1.0, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
        Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    };

    // Dense, well-conditioned, row-normalized coupling matrix.
    let a = loop {
        let mut a = Matrix::identity(d, d) + normal(&mut rng, d, d) * (0.25 / (d as f64).sqrt());
        for mut row in a.row_iter_mut() {
            let n = row.norm();
            row /= n;
        }
        if a.singular_values().min() > MIN_SINGULAR {
            break a;
        }
    };

    let mut anchor = Vector::from_fn(d, |_, _| 0.5 * (2.0 * rng.random::<f64>() - 1.0));
    if anchor.norm() < 0.2 {
        anchor *= 0.2 / anchor.norm().max(1e-12);
    }
    let anchor_norm = anchor.norm();
    let eps = CONSTRAINT_DRIFT_RATIO * drift;

    let mut constraints = Vec::with_capacity(m);
    let mut dirs = Vec::with_capacity(m);
    for _ in 0..m {
        let b = normal(&mut rng, d, d);
        let quad = b.transpose() * &b / (4.0 * d as f64);
        let w = normal(&mut rng, d, 1).column(0) * (0.3 / (d as f64).sqrt());
        let base = anchor.dot(&(&quad * &anchor)) + w.dot(&anchor);
        let target = SLATER_MARGIN + 2.0 * eps * anchor_norm;
        let gamma = ((target - base) / anchor_norm).max(0.0);
        let lin = w + &anchor * (gamma / anchor_norm);
        let offset = anchor.dot(&(&quad * &anchor)) + lin.dot(&anchor);
        constraints.push(QuadraticConstraint { quad, lin, offset });
        let v = normal(&mut rng, d, 1).column(0).into_owned();
        let vn = v.norm();
        dirs.push(v / vn);
    }

    let multiplier_grad = constraints
        .iter()
        .fold(Vector::zeros(d), |acc, c| acc + c.grad(&anchor));
    let a_t_inv = a
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Domain("coupling matrix is singular".into()))?;
    let pull = &a_t_inv * &multiplier_grad;
    let b0 = &a * &anchor + &pull * 0.5;
    let mut cost_dir = pull;
    if cost_dir.norm() < 1e-12 {
        cost_dir = normal(&mut rng, d, 1).column(0).into_owned();
    }
    let cn = cost_dir.norm();
    cost_dir /= cn;

    let mut inst = CoupledQuadratic {
        a_t: a.transpose(),
        a,
        b0,
        cost_dir,
        cost_drift: drift,
        cost_wave: centered_wave(horizon, COST_OMEGA, 0.0),
        constraints,
        constraint_dirs: dirs,
        constraint_drift: eps,
        constraint_wave: centered_wave(horizon, CONSTRAINT_OMEGA, CONSTRAINT_PHASE),
        optimum: Some(anchor.clone()),
        slater: Some(set.center()),
        anchor,
        bounds: DeclaredBounds {
            grad_f: 0.0,
            jac_g: 0.0,
            lipschitz_g: 0.0,
            diameter: 0.0,
        },
        sum_b: Vector::zeros(0),
        sum_b_sq: 0.0,
        wave_max: 0.0,
        wave_min: 0.0,
        sorted_wave: Vec::new(),
        wave_prefix: Vec::new(),
        set,
        horizon,
    };
    inst.finish();
    Ok(inst)
}

impl ProblemSequence for CoupledQuadratic {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn product_set(&self) -> &ProductSet {
        &self.set
    }

    fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn cost(&self, t: usize, x: &Vector) -> f64 {
        (&self.a * x - self.target(t)).norm_squared()
    }

    fn cost_grad(&self, t: usize, x: &Vector) -> Vector {
        &self.a_t * (&self.a * x - self.target(t)) * 2.0
    }

    fn constraint(&self, t: usize, x: &Vector) -> Vector {
        let shift = self.constraint_drift * self.constraint_wave[t - 1];
        let dx = x - &self.anchor;
        Vector::from_iterator(
            self.constraints.len(),
            self.constraints
                .iter()
                .zip(&self.constraint_dirs)
                .map(|(c, v)| c.value(x) + shift * v.dot(&dx)),
        )
    }

    fn constraint_jac(&self, t: usize, x: &Vector) -> Matrix {
        let shift = self.constraint_drift * self.constraint_wave[t - 1];
        let mut jac = Matrix::zeros(self.constraints.len(), self.set.dim());
        for (k, (c, v)) in self
            .constraints
            .iter()
            .zip(&self.constraint_dirs)
            .enumerate()
        {
            let row = c.grad(x) + v * shift;
            jac.row_mut(k).copy_from(&row.transpose());
        }
        jac
    }

    fn bounds(&self) -> DeclaredBounds {
        self.bounds
    }

    fn slater_point(&self) -> Option<Vector> {
        self.slater.clone()
    }

    fn analytic_optimum(&self) -> Option<Vector> {
        self.optimum.clone()
    }

    fn total_cost(&self, x: &Vector) -> f64 {
        let ax = &self.a * x;
        self.horizon as f64 * ax.norm_squared() - 2.0 * ax.dot(&self.sum_b) + self.sum_b_sq
    }

    fn total_cost_grad(&self, x: &Vector) -> Vector {
        &self.a_t * (&self.a * x * self.horizon as f64 - &self.sum_b) * 2.0
    }

    fn worst_constraint(&self, x: &Vector) -> Vector {
        let dx = x - &self.anchor;
        Vector::from_iterator(
            self.constraints.len(),
            self.constraints
                .iter()
                .zip(&self.constraint_dirs)
                .map(|(c, v)| {
                    let h = v.dot(&dx);
                    let s = if h >= 0.0 {
                        self.wave_max
                    } else {
                        self.wave_min
                    };
                    c.value(x) + self.constraint_drift * s * h
                }),
        )
    }

    /// Each `g_{k,t}(x) = a + b s'_t` is affine in the wave value, so the
    /// rounds where it is positive form a contiguous run of the sorted wave.
    fn violation_penalty(&self, x: &Vector) -> (f64, Vector) {
        let dx = x - &self.anchor;
        let total = self.sorted_wave.len();
        let mut value = 0.0;
        let mut grad = Vector::zeros(x.len());
        for (c, v) in self.constraints.iter().zip(&self.constraint_dirs) {
            let a = c.value(x);
            let b = self.constraint_drift * v.dot(&dx);
            let (count, wave_sum) = if b == 0.0 {
                if a > 0.0 {
                    (total, self.wave_prefix[total])
                } else {
                    (0, 0.0)
                }
            } else {
                let threshold = -a / b;
                if b > 0.0 {
                    let idx = self.sorted_wave.partition_point(|s| *s <= threshold);
                    (total - idx, self.wave_prefix[total] - self.wave_prefix[idx])
                } else {
                    let idx = self.sorted_wave.partition_point(|s| *s < threshold);
                    (idx, self.wave_prefix[idx])
                }
            };
            if count > 0 {
                value += count as f64 * a + b * wave_sum;
                grad += c.grad(x) * count as f64 + v * (self.constraint_drift * wave_sum);
            }
        }
        (value.max(0.0), grad)
    }
}
