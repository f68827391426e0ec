//! Horizon sweeps: one independent run per horizon, metrics, CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{DualCap, ExperimentConfig, ProblemKind};
use crate::baseline::run_baseline;
use crate::dopbc::{run, AlgoParams};
use crate::metrics::{
    ccv, consensus_error_sum, cumulative_ccv, cumulative_regret, fit_growth_exponent,
    static_regret, Algorithm, MetricSequence, RunTrace, SlopeFit,
};
use crate::netgraph::{build_graph, build_mixing, Graph, MixingMatrix};
use crate::problems::{
    hindsight_comparator, make_coupled_quadratic, make_separable_quadratic, slater_dual_cap,
    Comparator, CoupledQuadraticParams, DeclaredBounds, ProblemSequence, SeparableQuadraticParams,
};
use crate::{Error, Result};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "DOPBC_WORKERS";

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the run at horizon `t`; independent of scheduling order.
pub fn horizon_seed(master: u64, horizon: usize) -> u64 {
    mix64(mix64(master) ^ horizon as u64)
}

pub fn build_network(cfg: &ExperimentConfig) -> Result<(Graph, MixingMatrix)> {
    let graph = build_graph(&cfg.topology, cfg.n)?;
    let mixing = build_mixing(&graph, cfg.mixing)?;
    Ok((graph, mixing))
}

pub fn build_problem(cfg: &ExperimentConfig, horizon: usize) -> Result<Box<dyn ProblemSequence>> {
    Ok(match cfg.problem {
        ProblemKind::CoupledQuadratic => {
            Box::new(make_coupled_quadratic(CoupledQuadraticParams {
                n_agents: cfg.n,
                block_dim: cfg.block_dim,
                constraints: cfg.constraints,
                horizon,
                seed: cfg.problem_seed,
                drift: cfg.drift,
            })?)
        }
        ProblemKind::SeparableQuadratic => {
            Box::new(make_separable_quadratic(SeparableQuadraticParams {
                n_agents: cfg.n,
                block_dim: cfg.block_dim,
                horizon,
                seed: cfg.problem_seed,
                drift: cfg.drift,
            })?)
        }
    })
}

pub fn resolve_dual_cap(cap: DualCap, p: &dyn ProblemSequence) -> Result<f64> {
    match cap {
        DualCap::Fixed(v) => Ok(v),
        DualCap::Auto => slater_dual_cap(p).ok_or_else(|| {
            Error::Infeasible("instance has no strictly feasible point to size the dual cap".into())
        }),
    }
}

/// Everything measured at one horizon.
#[derive(Debug, Clone)]
pub struct HorizonOutcome {
    pub horizon: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub lambda_max: f64,
    pub bounds: DeclaredBounds,
    pub comparator: Comparator,
    pub trace: RunTrace,
    pub regret_a: f64,
    pub regret_xbar: f64,
    pub ccv_a: Vec<f64>,
    pub ccv_xbar: Vec<f64>,
    pub delta_sum: f64,
    pub delta_ceiling: f64,
    pub runtime_ms: u128,
    trace_csv: String,
}

impl HorizonOutcome {
    pub fn trace_csv(&self) -> &str {
        &self.trace_csv
    }
}

/// `{:.16e}`: 17 significant digits, exact round trip for `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_header(m: usize) -> String {
    let mut cols = vec![
        "t".to_string(),
        "cost_inst".into(),
        "cum_regret_a".into(),
        "cum_regret_xbar".into(),
    ];
    cols.extend((1..=m).map(|k| format!("ccv_{k}")));
    cols.push("delta_x".into());
    cols.extend((1..=m).map(|k| format!("lambda_bar_{k}")));
    cols.push("dual_clips".into());
    cols.join(",")
}

pub fn summary_header(m: usize) -> String {
    let mut cols = vec![
        "T".to_string(),
        "alpha".into(),
        "sigma".into(),
        "regret_a".into(),
        "regret_xbar".into(),
    ];
    cols.extend((1..=m).map(|k| format!("ccv_{k}")));
    cols.extend((1..=m).map(|k| format!("ccv_xbar_{k}")));
    cols.push("delta_sum".into());
    cols.push("runtime_ms".into());
    cols.join(",")
}

pub const SLOPES_HEADER: &str = "metric,exponent,intercept,r_squared,points,degenerate";

fn render_trace(trace: &RunTrace, comp: &Comparator, p: &dyn ProblemSequence) -> Result<String> {
    let m = p.num_constraints();
    let regret_a = cumulative_regret(trace, comp, p, MetricSequence::Action)?;
    let regret_x = cumulative_regret(trace, comp, p, MetricSequence::MeanBelief)?;
    let ccvs = (0..m)
        .map(|k| cumulative_ccv(trace, k, MetricSequence::Action))
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::with_capacity(trace.horizon() * (40 + 48 * m) + 128);
    out.push_str(&trace_header(m));
    out.push('\n');
    for (idx, r) in trace.rounds.iter().enumerate() {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.t,
            num(r.cost_action),
            num(regret_a[idx]),
            num(regret_x[idx])
        );
        for c in &ccvs {
            let _ = write!(out, ",{}", num(c[idx]));
        }
        let _ = write!(out, ",{}", num(r.delta_x));
        for l in r.lambda_bar.iter() {
            let _ = write!(out, ",{}", num(*l));
        }
        let _ = writeln!(out, ",{}", r.dual_clips);
    }
    Ok(out)
}

/// Builds the instance for `horizon`, runs the configured algorithm and
/// evaluates every metric.
pub fn run_horizon(
    cfg: &ExperimentConfig,
    graph: &Graph,
    mixing: &MixingMatrix,
    horizon: usize,
) -> Result<HorizonOutcome> {
    let started = Instant::now();
    let p = build_problem(cfg, horizon)?;
    let p = p.as_ref();
    let lambda_max = resolve_dual_cap(cfg.lambda_max, p)?;
    let params = AlgoParams::for_horizon(cfg.c, horizon, lambda_max)?;
    let init = cfg.init.resolve(horizon_seed(cfg.seed, horizon));
    let trace = match cfg.algorithm {
        Algorithm::Dopbc => run(p, graph, mixing, &params, init)?,
        Algorithm::Baseline => run_baseline(p, graph, mixing, &params, init)?,
    };
    let comparator = hindsight_comparator(p, cfg.comparator)?;
    let m = p.num_constraints();
    let bounds = p.bounds();
    let sigma = mixing.sigma();
    let consensus = consensus_error_sum(&trace, &bounds, sigma);
    let regret_a = static_regret(&trace, &comparator, p, MetricSequence::Action)?;
    let regret_xbar = static_regret(&trace, &comparator, p, MetricSequence::MeanBelief)?;
    let ccv_a = (0..m)
        .map(|k| ccv(&trace, k, MetricSequence::Action))
        .collect::<Result<_>>()?;
    let ccv_xbar = (0..m)
        .map(|k| ccv(&trace, k, MetricSequence::MeanBelief))
        .collect::<Result<_>>()?;
    let trace_csv = render_trace(&trace, &comparator, p)?;
    let runtime_ms = if cfg.timing {
        started.elapsed().as_millis()
    } else {
        0
    };
    Ok(HorizonOutcome {
        horizon,
        alpha: params.alpha(1),
        sigma,
        lambda_max,
        bounds,
        comparator,
        trace,
        regret_a,
        regret_xbar,
        ccv_a,
        ccv_xbar,
        delta_sum: consensus.sum,
        delta_ceiling: consensus.ceiling,
        runtime_ms,
        trace_csv,
    })
}

#[derive(Debug, Clone)]
pub struct SlopeRow {
    pub metric: String,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub outcomes: Vec<HorizonOutcome>,
    /// Empty when fewer than four horizons were run.
    pub slopes: Vec<SlopeRow>,
}

impl SweepResult {
    pub fn slope(&self, metric: &str) -> Option<&SlopeFit> {
        self.slopes
            .iter()
            .find(|r| r.metric == metric)
            .map(|r| &r.fit)
    }

    pub fn summary_csv(&self) -> String {
        let m = self.outcomes.first().map_or(0, |o| o.ccv_a.len());
        let mut out = summary_header(m);
        out.push('\n');
        for o in &self.outcomes {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                o.horizon,
                num(o.alpha),
                num(o.sigma),
                num(o.regret_a),
                num(o.regret_xbar)
            );
            for v in o.ccv_a.iter().chain(&o.ccv_xbar) {
                let _ = write!(out, ",{}", num(*v));
            }
            let _ = writeln!(out, ",{},{}", num(o.delta_sum), o.runtime_ms);
        }
        out
    }

    pub fn slopes_csv(&self) -> String {
        let mut out = format!("{SLOPES_HEADER}\n");
        for r in &self.slopes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.metric,
                num(r.fit.exponent),
                num(r.fit.intercept),
                num(r.fit.r_squared),
                self.outcomes.len(),
                r.fit.degenerate
            );
        }
        out
    }
}

fn fit_all(outcomes: &[HorizonOutcome]) -> Result<Vec<SlopeRow>> {
    if outcomes.len() < 4 {
        return Ok(Vec::new());
    }
    let m = outcomes[0].ccv_a.len();
    let series = |f: &dyn Fn(&HorizonOutcome) -> f64| -> Vec<(f64, f64)> {
        outcomes.iter().map(|o| (o.horizon as f64, f(o))).collect()
    };
    let mut rows = vec![
        ("regret_a".to_string(), series(&|o| o.regret_a)),
        ("regret_xbar".to_string(), series(&|o| o.regret_xbar)),
    ];
    for k in 0..m {
        rows.push((format!("ccv_{}", k + 1), series(&|o| o.ccv_a[k])));
    }
    for k in 0..m {
        rows.push((format!("ccv_xbar_{}", k + 1), series(&|o| o.ccv_xbar[k])));
    }
    rows.push(("delta_sum".to_string(), series(&|o| o.delta_sum)));
    rows.into_iter()
        .map(|(metric, pts)| {
            Ok(SlopeRow {
                metric,
                fit: fit_growth_exponent(&pts)?,
            })
        })
        .collect()
}

fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every configured horizon in parallel and fits growth exponents. The
/// worker count comes from `DOPBC_WORKERS`, defaulting to the available
/// parallelism.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep_with_workers(cfg, worker_count())
}

pub fn run_sweep_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<SweepResult> {
    cfg.validate()?;
    let (graph, mixing) = build_network(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    // Longest horizons first so they do not end up last in the queue.
    let mut order: Vec<usize> = cfg.horizons.clone();
    order.reverse();
    let mut outcomes = pool.install(|| {
        order
            .par_iter()
            .map(|&t| run_horizon(cfg, &graph, &mixing, t))
            .collect::<Result<Vec<_>>>()
    })?;
    outcomes.sort_by_key(|o| o.horizon);
    let slopes = fit_all(&outcomes)?;
    Ok(SweepResult { outcomes, slopes })
}

pub fn write_outputs(dir: &Path, sweep: &SweepResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    for o in &sweep.outcomes {
        fs::write(dir.join(format!("trace_T{}.csv", o.horizon)), o.trace_csv())?;
    }
    fs::write(dir.join("summary.csv"), sweep.summary_csv())?;
    fs::write(dir.join("slopes.csv"), sweep.slopes_csv())?;
    Ok(())
}

/// Sweep plus CSV output into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let sweep = run_sweep(cfg)?;
    write_outputs(&cfg.output_dir, &sweep)?;
    Ok(sweep)
}
