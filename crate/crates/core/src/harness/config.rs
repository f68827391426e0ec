//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. Keys are
//! dotted paths; every key may appear at most once. See the README for the
//! full list.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dopbc::Initialization;
use crate::metrics::Algorithm;
use crate::netgraph::{MixingScheme, Topology};
use crate::problems::ComparatorMethod;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    CoupledQuadratic,
    SeparableQuadratic,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::CoupledQuadratic => "coupled-quadratic",
            ProblemKind::SeparableQuadratic => "separable-quadratic",
        }
    }
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "coupled-quadratic" => Ok(Self::CoupledQuadratic),
            "separable-quadratic" => Ok(Self::SeparableQuadratic),
            other => Err(format!(
                "unknown problem `{other}` (expected coupled-quadratic or separable-quadratic)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualCap {
    Fixed(f64),
    /// Sized per horizon from the instance's Slater point.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Common,
    /// Per-agent uniform beliefs seeded from the per-horizon seed.
    Random,
}

impl InitMode {
    pub fn resolve(&self, seed: u64) -> Initialization {
        match self {
            InitMode::Common => Initialization::Common,
            InitMode::Random => Initialization::Random { seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub n: usize,
    pub mixing: MixingScheme,
    pub problem: ProblemKind,
    pub block_dim: usize,
    pub constraints: usize,
    pub drift: f64,
    pub problem_seed: u64,
    pub algorithm: Algorithm,
    pub c: f64,
    pub lambda_max: DualCap,
    pub init: InitMode,
    pub horizons: Vec<usize>,
    pub comparator: ComparatorMethod,
    pub output_dir: PathBuf,
    /// When false, `runtime_ms` is written as 0 so outputs are reproducible.
    pub timing: bool,
    pub seed: u64,
}

const KEYS: &[&str] = &[
    "topology.kind",
    "topology.n",
    "topology.radius",
    "topology.seed",
    "mixing.scheme",
    "problem.kind",
    "problem.d_i",
    "problem.m",
    "problem.drift",
    "problem.seed",
    "algo.kind",
    "algo.c",
    "algo.lambda_max",
    "init.mode",
    "horizons",
    "comparator",
    "output.dir",
    "output.timing",
    "seed",
];

struct Entries {
    pairs: Vec<(String, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| Error::validation(key, "missing required key"))
    }

    fn parse<T: FromStr>(&self, key: &str, value: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        value
            .parse::<T>()
            .map_err(|e| Error::validation(key, format!("cannot parse `{value}`: {e}")))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key, self.required(key)?)
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            Some(v) => self.parse(key, v),
            None => Ok(default),
        }
    }
}

fn lex(text: &str) -> Result<Entries> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::validation(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::validation(key, "unknown key"));
        }
        if pairs.iter().any(|(k, _)| k == key) {
            return Err(Error::validation(key, "duplicate key"));
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(Entries { pairs })
}

pub fn parse_horizons(field: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<usize>()
                .map_err(|e| Error::validation(field, format!("cannot parse horizon `{s}`: {e}")))
        })
        .collect()
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let e = lex(text)?;
        let kind = e.required("topology.kind")?;
        let topology = match kind {
            "complete" => Topology::Complete,
            "ring" => Topology::Ring,
            "path" => Topology::Path,
            "star" => Topology::Star,
            "random-geometric" => Topology::RandomGeometric {
                radius: e.get("topology.radius")?,
                seed: e.get_or("topology.seed", e.get_or("seed", 0u64)?)?,
            },
            other => {
                return Err(Error::validation(
                    "topology.kind",
                    format!("unknown topology `{other}` (expected complete, ring, path, star or random-geometric)"),
                ))
            }
        };
        let lambda_max = match e.required("algo.lambda_max")? {
            "auto" => DualCap::Auto,
            v => DualCap::Fixed(e.parse("algo.lambda_max", v)?),
        };
        let init = match e.raw("init.mode").unwrap_or("common") {
            "common" => InitMode::Common,
            "random" => InitMode::Random,
            other => {
                return Err(Error::validation(
                    "init.mode",
                    format!("unknown mode `{other}` (expected common or random)"),
                ))
            }
        };
        let cfg = ExperimentConfig {
            topology,
            n: e.get("topology.n")?,
            mixing: e.get("mixing.scheme")?,
            problem: e.get("problem.kind")?,
            block_dim: e.get("problem.d_i")?,
            constraints: e.get("problem.m")?,
            drift: e.get("problem.drift")?,
            problem_seed: e.get("problem.seed")?,
            algorithm: e.get("algo.kind")?,
            c: e.get("algo.c")?,
            lambda_max,
            init,
            horizons: parse_horizons("horizons", e.required("horizons")?)?,
            comparator: e.get_or("comparator", ComparatorMethod::Subgradient)?,
            output_dir: PathBuf::from(e.raw("output.dir").unwrap_or("results")),
            timing: e.get_or("output.timing", true)?,
            seed: e.get("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::validation("topology.n", "must be at least 1"));
        }
        if let Topology::RandomGeometric { radius, .. } = self.topology {
            if !(radius > 0.0 && radius <= 2f64.sqrt()) {
                return Err(Error::validation(
                    "topology.radius",
                    format!("must lie in (0, sqrt 2], got {radius}"),
                ));
            }
        }
        if self.mixing == MixingScheme::UniformAverage
            && self.topology != Topology::Complete
            && self.n > 2
        {
            return Err(Error::validation(
                "mixing.scheme",
                format!(
                    "uniform-average needs a complete graph, topology is {}",
                    self.topology.name()
                ),
            ));
        }
        if self.block_dim == 0 {
            return Err(Error::validation("problem.d_i", "must be at least 1"));
        }
        match self.problem {
            ProblemKind::CoupledQuadratic if self.constraints == 0 => {
                return Err(Error::validation("problem.m", "must be at least 1"));
            }
            ProblemKind::SeparableQuadratic if self.constraints != 1 => {
                return Err(Error::validation(
                    "problem.m",
                    "separable-quadratic has exactly one constraint",
                ));
            }
            _ => {}
        }
        if !(self.drift >= 0.0 && self.drift.is_finite()) {
            return Err(Error::validation(
                "problem.drift",
                format!("must be finite and >= 0, got {}", self.drift),
            ));
        }
        if self.algorithm == Algorithm::Baseline && self.problem != ProblemKind::SeparableQuadratic
        {
            return Err(Error::validation(
                "algo.kind",
                "baseline-dspd needs a separable problem",
            ));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::validation(
                "algo.c",
                format!("must lie in (0, 1), got {}", self.c),
            ));
        }
        if let DualCap::Fixed(v) = self.lambda_max {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(
                    "algo.lambda_max",
                    format!("must be positive, got {v}"),
                ));
            }
        }
        self.validate_horizons(&self.horizons, "horizons")?;
        if self.comparator == ComparatorMethod::Grid && self.n * self.block_dim > 4 {
            return Err(Error::validation(
                "comparator",
                format!(
                    "grid search needs joint dimension <= 4, got {}",
                    self.n * self.block_dim
                ),
            ));
        }
        Ok(())
    }

    pub fn validate_horizons(&self, horizons: &[usize], field: &str) -> Result<()> {
        if horizons.is_empty() {
            return Err(Error::validation(field, "at least one horizon required"));
        }
        if horizons[0] == 0 {
            return Err(Error::validation(field, "horizons must be positive"));
        }
        if horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(
                field,
                "horizons must be strictly increasing",
            ));
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an identical config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("topology.kind", self.topology.name().to_string());
        put("topology.n", self.n.to_string());
        if let Topology::RandomGeometric { radius, seed } = self.topology {
            put("topology.radius", radius.to_string());
            put("topology.seed", seed.to_string());
        }
        put("mixing.scheme", self.mixing.name().to_string());
        put("problem.kind", self.problem.name().to_string());
        put("problem.d_i", self.block_dim.to_string());
        put("problem.m", self.constraints.to_string());
        put("problem.drift", self.drift.to_string());
        put("problem.seed", self.problem_seed.to_string());
        put("algo.kind", self.algorithm.name().to_string());
        put("algo.c", self.c.to_string());
        put(
            "algo.lambda_max",
            match self.lambda_max {
                DualCap::Auto => "auto".to_string(),
                DualCap::Fixed(v) => v.to_string(),
            },
        );
        put(
            "init.mode",
            match self.init {
                InitMode::Common => "common",
                InitMode::Random => "random",
            }
            .to_string(),
        );
        put(
            "horizons",
            self.horizons
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        );
        put("comparator", self.comparator.name().to_string());
        put("output.dir", self.output_dir.display().to_string());
        put("output.timing", self.timing.to_string());
        put("seed", self.seed.to_string());
        s
    }
}
