//! Communication graphs, doubly stochastic mixing matrices and the spectral
//! quantity `sigma` that governs how fast belief averaging contracts.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Matrix, Result, Vector};

/// Dense eigendecomposition is used up to this size, power iteration above.
pub const DENSE_EIGEN_LIMIT: usize = 512;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 100_000;
const RADIUS_GROWTH: f64 = 1.2;
const RADIUS_RETRIES: usize = 50;

/// Supported graph families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    Complete,
    Ring,
    Path,
    Star,
    /// Agents dropped uniformly in the unit square, linked when closer than `radius`.
    RandomGeometric {
        radius: f64,
        seed: u64,
    },
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::Complete => "complete",
            Topology::Ring => "ring",
            Topology::Path => "path",
            Topology::Star => "star",
            Topology::RandomGeometric { .. } => "random-geometric",
        }
    }
}

/// Undirected simple graph on agents `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    /// Final connection radius for random-geometric graphs.
    radius: Option<f64>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Pairs are normalized to `(min, max)`;
    /// duplicates collapse. Self-loops and out-of-range endpoints are rejected.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("graph needs at least one agent".into()));
        }
        let mut edges = BTreeSet::new();
        for (i, j) in pairs {
            if i == j {
                return Err(Error::Shape(format!("self-loop at agent {i}")));
            }
            let hi = i.max(j);
            if hi >= n {
                return Err(Error::IndexOutOfRange { index: hi, len: n });
            }
            edges.insert((i.min(j), hi));
        }
        Ok(Self {
            n,
            edges,
            radius: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * (self.n - 1) / 2
    }
}

/// Builds one of the named topologies on `n` agents.
///
/// Random-geometric graphs grow their radius by 20% until connected (at most
/// 50 retries); the radius actually used is kept on the returned graph.
pub fn build_graph(kind: &Topology, n: usize) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidSize("graph needs at least one agent".into()));
    }
    match *kind {
        Topology::Complete => Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))),
        Topology::Ring => {
            let pairs: Vec<_> = if n < 3 {
                (1..n).map(|i| (i - 1, i)).collect()
            } else {
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            };
            Graph::new(n, pairs)
        }
        Topology::Path => Graph::new(n, (1..n).map(|i| (i - 1, i))),
        Topology::Star => Graph::new(n, (1..n).map(|i| (0, i))),
        Topology::RandomGeometric { radius, seed } => random_geometric(n, radius, seed),
    }
}

fn random_geometric(n: usize, radius: f64, seed: u64) -> Result<Graph> {
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
        return Err(Error::Domain(format!(
            "random-geometric radius must lie in (0, sqrt 2], got {radius}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let mut r = radius;
    for _ in 0..=RADIUS_RETRIES {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
                if (dx * dx + dy * dy).sqrt() <= r {
                    pairs.push((i, j));
                }
            }
        }
        let mut g = Graph::new(n, pairs)?;
        if g.is_connected() {
            g.radius = Some(r);
            return Ok(g);
        }
        r *= RADIUS_GROWTH;
    }
    Err(Error::Disconnected)
}

/// How neighbour weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingScheme {
    /// `(I + M) / 2` with Metropolis–Hastings weights `M`.
    LazyMetropolis,
    /// `(1/n) 11^T`; only compatible with complete graphs.
    UniformAverage,
}

impl MixingScheme {
    pub fn name(&self) -> &'static str {
        match self {
            MixingScheme::LazyMetropolis => "lazy-metropolis",
            MixingScheme::UniformAverage => "uniform-average",
        }
    }
}

impl FromStr for MixingScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lazy-metropolis" => Ok(Self::LazyMetropolis),
            "uniform-average" => Ok(Self::UniformAverage),
            other => Err(format!(
                "unknown mixing scheme `{other}` (expected lazy-metropolis or uniform-average)"
            )),
        }
    }
}

/// Symmetric, doubly stochastic, positive semi-definite weight matrix with its
/// cached second-largest eigenvalue.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: Matrix,
    sigma: f64,
}

impl MixingMatrix {
    /// Wraps an arbitrary symmetric matrix. Used by tests and by callers that
    /// bring their own weights; no stochasticity check is made here.
    pub fn from_matrix(w: Matrix) -> Result<Self> {
        let sigma = spectral_sigma(&w)?;
        Ok(Self { w, sigma })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.w)
    }

    /// Row-major CSV with 17 significant digits, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n())
                .map(|j| format!("{:.16e}", self.w[(i, j)]))
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Lazy Metropolis weights `(I + M)/2` without any connectivity check.
pub fn lazy_metropolis_weights(g: &Graph) -> Matrix {
    let n = g.n();
    let deg = g.degrees();
    let mut m = Matrix::zeros(n, n);
    for (i, j) in g.edges() {
        let w = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        m[(i, j)] = w;
        m[(j, i)] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = 1.0 - off;
    }
    (Matrix::identity(n, n) + m) * 0.5
}

pub fn build_mixing(g: &Graph, scheme: MixingScheme) -> Result<MixingMatrix> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = g.n();
    let w = match scheme {
        MixingScheme::LazyMetropolis => lazy_metropolis_weights(g),
        MixingScheme::UniformAverage => {
            if !g.is_complete() {
                return Err(Error::Compatibility(
                    "uniform averaging needs a complete graph".into(),
                ));
            }
            Matrix::from_element(n, n, 1.0 / n as f64)
        }
    };
    MixingMatrix::from_matrix(w)
}

fn check_symmetric(w: &Matrix) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(Error::Shape(format!(
            "mixing matrix must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    if w.nrows() == 0 {
        return Err(Error::InvalidSize("empty mixing matrix".into()));
    }
    let n = w.nrows();
    for i in 0..n {
        for j in i + 1..n {
            if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 {
                return Err(Error::Shape(format!(
                    "mixing matrix not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

fn sorted_eigenvalues(w: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = w
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Second-largest eigenvalue of a symmetric matrix.
///
/// Dense eigendecomposition up to [`DENSE_EIGEN_LIMIT`] agents, power
/// iteration on `w - (1/n) 11^T` beyond that.
pub fn spectral_sigma(w: &Matrix) -> Result<f64> {
    check_symmetric(w)?;
    if w.nrows() <= DENSE_EIGEN_LIMIT {
        Ok(sigma_dense(w))
    } else {
        Ok(sigma_power_iteration(w))
    }
}

/// Dense route of [`spectral_sigma`]. Assumes a symmetric input.
pub fn sigma_dense(w: &Matrix) -> f64 {
    let ev = sorted_eigenvalues(w);
    ev.get(1).copied().unwrap_or(0.0)
}

/// Power-iteration route of [`spectral_sigma`]: dominant eigenvalue magnitude
/// of the deflated matrix `w - (1/n) 11^T`, which equals the second-largest
/// eigenvalue for doubly stochastic PSD `w`.
pub fn sigma_power_iteration(w: &Matrix) -> f64 {
    let n = w.nrows();
    if n < 2 {
        return 0.0;
    }
    let deflate = |v: &Vector| -> Vector {
        let wv = w * v;
        let mean = v.sum() / n as f64;
        wv.add_scalar(-mean)
    };
    let mut v = Vector::from_fn(n, |i, _| {
        ((i + 1) as f64).sin() + 0.5 * ((i * i) as f64).cos()
    });
    let m = v.mean();
    v.add_scalar_mut(-m);
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let mut theta = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let bv = deflate(&v);
        theta = v.dot(&bv);
        let residual = (&bv - &v * theta).norm();
        let bnorm = bv.norm();
        if bnorm == 0.0 {
            return 0.0;
        }
        if residual <= POWER_TOL {
            break;
        }
        v = bv / bnorm;
    }
    theta.abs()
}
