//! Command-line surface. Exit codes: 0 success, 1 usage or config error,
//! 2 runtime error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::{parse_horizons, ExperimentConfig, ProblemKind};
use super::runner::{
    build_network, build_problem, horizon_seed, resolve_dual_cap, run_experiment, run_sweep,
};
use crate::dopbc::{run, AlgoParams};
use crate::metrics::{
    consensus_error_sum, consensus_recursion_check, dual_telescoping_check, Algorithm, SlopeFit,
};
use crate::netgraph::{build_graph, build_mixing, MixingScheme, Topology};
use crate::problems::{audit_bounds, convexity_probe, validate_gradients};
use crate::{Error, Result};

const CHECK_SAMPLES: usize = 100;
const CHECK_GRAD_TOL: f64 = 1e-6;
const CHECK_TRIPLES: usize = 200;

#[derive(Debug, Parser)]
#[command(
    name = "dopbc",
    version,
    about = "Distributed online primal-dual experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured horizon and write trace, summary and slope CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Like `run` with the horizon list replaced (at least four horizons).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        horizons: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the second-largest eigenvalue of a mixing matrix.
    Spectral {
        #[arg(long)]
        topology: String,
        #[arg(long)]
        n: usize,
        /// Connection radius for random-geometric graphs.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to uniform-average on complete graphs, lazy-metropolis otherwise.
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Gradient, convexity, bound and per-round invariant checks on the configured instance.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run both algorithms on a separable instance and print their slope fits.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Entry point used by the binary; `args` includes the program name.
pub fn run_cli<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Run { config, out: dir } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(dir) = dir {
                cfg.output_dir = dir;
            }
            let sweep = run_experiment(&cfg)?;
            writeln!(
                out,
                "wrote {} horizons to {}",
                sweep.outcomes.len(),
                cfg.output_dir.display()
            )?;
            for row in &sweep.slopes {
                print_fit(out, &row.metric, &row.fit)?;
            }
            Ok(0)
        }
        Command::Sweep {
            config,
            horizons,
            out: dir,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            let hs = parse_horizons("--horizons", &horizons)?;
            cfg.validate_horizons(&hs, "--horizons")?;
            if hs.len() < 4 {
                return Err(Error::validation(
                    "--horizons",
                    "a sweep needs at least four horizons",
                ));
            }
            cfg.horizons = hs;
            if let Some(dir) = dir {
                cfg.output_dir = dir;
            }
            let sweep = run_experiment(&cfg)?;
            writeln!(
                out,
                "wrote {} horizons to {}",
                sweep.outcomes.len(),
                cfg.output_dir.display()
            )?;
            for row in &sweep.slopes {
                print_fit(out, &row.metric, &row.fit)?;
            }
            Ok(0)
        }
        Command::Spectral {
            topology,
            n,
            radius,
            seed,
            scheme,
        } => spectral(out, &topology, n, radius, seed, scheme),
        Command::Check { config } => check(out, &ExperimentConfig::load(&config)?),
        Command::Compare { config } => compare(out, ExperimentConfig::load(&config)?),
    }
}

fn print_fit(out: &mut dyn Write, label: &str, fit: &SlopeFit) -> Result<()> {
    writeln!(
        out,
        "{label}: exponent={:.4} r2={:.4}{}",
        fit.exponent,
        fit.r_squared,
        if fit.degenerate { " (degenerate)" } else { "" }
    )?;
    Ok(())
}

fn spectral(
    out: &mut dyn Write,
    topology: &str,
    n: usize,
    radius: Option<f64>,
    seed: u64,
    scheme: Option<String>,
) -> Result<i32> {
    let kind = match topology {
        "complete" => Topology::Complete,
        "ring" => Topology::Ring,
        "path" => Topology::Path,
        "star" => Topology::Star,
        "random-geometric" => Topology::RandomGeometric {
            radius: radius
                .ok_or_else(|| Error::validation("--radius", "required for random-geometric"))?,
            seed,
        },
        other => {
            return Err(Error::validation(
                "--topology",
                format!("unknown topology `{other}`"),
            ))
        }
    };
    if n == 0 {
        return Err(Error::validation("--n", "must be at least 1"));
    }
    let graph = build_graph(&kind, n)?;
    let scheme = match scheme {
        Some(s) => s
            .parse::<MixingScheme>()
            .map_err(|e| Error::validation("--scheme", e))?,
        None if graph.is_complete() => MixingScheme::UniformAverage,
        None => MixingScheme::LazyMetropolis,
    };
    let w = build_mixing(&graph, scheme)?;
    let clean = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
    let eig = w.eigenvalues();
    writeln!(out, "sigma={}", clean(w.sigma()))?;
    writeln!(out, "scheme={}", scheme.name())?;
    writeln!(out, "spectral_gap={}", clean(1.0 - w.sigma()))?;
    writeln!(out, "eigenvalue_max={}", clean(eig[0]))?;
    writeln!(out, "eigenvalue_min={}", clean(*eig.last().unwrap()))?;
    Ok(0)
}

fn check(out: &mut dyn Write, cfg: &ExperimentConfig) -> Result<i32> {
    let horizon = cfg.horizons[0];
    let p = build_problem(cfg, horizon)?;
    let p = p.as_ref();
    let mut all_ok = true;
    let mut line = |out: &mut dyn Write, name: &str, ok: bool, detail: String| -> Result<()> {
        all_ok &= ok;
        writeln!(out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" })?;
        Ok(())
    };

    let grads = validate_gradients(p, CHECK_SAMPLES, CHECK_GRAD_TOL, cfg.seed);
    line(
        out,
        "gradients",
        grads.passed(),
        format!("max relative error {:.3e}", grads.max_error()),
    )?;
    let excess = convexity_probe(p, CHECK_TRIPLES, cfg.seed);
    line(
        out,
        "convexity",
        excess <= 1e-9,
        format!("largest chord excess {excess:.3e}"),
    )?;
    let audit = audit_bounds(p, 1000, cfg.seed);
    line(
        out,
        "declared bounds",
        audit.passed(),
        format!(
            "grad f {:.3} <= {:.3}, jac g {:.3} <= {:.3}",
            audit.max_grad_f, audit.declared_grad_f, audit.max_jac_g, audit.declared_jac_g
        ),
    )?;

    let (graph, mixing) = build_network(cfg)?;
    let lambda_max = resolve_dual_cap(cfg.lambda_max, p)?;
    let params = AlgoParams::for_horizon(cfg.c, horizon, lambda_max)?;
    let init = cfg.init.resolve(horizon_seed(cfg.seed, horizon));
    let trace = match cfg.algorithm {
        Algorithm::Dopbc => run(p, &graph, &mixing, &params, init)?,
        Algorithm::Baseline => crate::baseline::run_baseline(p, &graph, &mixing, &params, init)?,
    };
    let set = p.product_set();
    let feasible = trace.rounds.iter().all(|r| {
        set.contains(&r.action, 1e-12)
            && r.lambda_bar.iter().all(|l| (0.0..=lambda_max).contains(l))
    });
    line(
        out,
        "state feasibility",
        feasible,
        format!("{} rounds", trace.horizon()),
    )?;
    let bounds = p.bounds();
    let sigma = mixing.sigma();
    if cfg.algorithm == Algorithm::Dopbc {
        let rec = consensus_recursion_check(&trace, &bounds, sigma);
        line(
            out,
            "consensus recursion",
            rec.violations == 0,
            format!(
                "{} violations in {} rounds",
                rec.violations, rec.rounds_checked
            ),
        )?;
        let ce = consensus_error_sum(&trace, &bounds, sigma);
        line(
            out,
            "consensus ceiling",
            ce.within_ceiling(),
            format!("sum {:.4e} <= ceiling {:.4e}", ce.sum, ce.ceiling),
        )?;
    }
    let tel = dual_telescoping_check(&trace);
    line(
        out,
        "dual telescoping",
        tel.violations == 0,
        format!(
            "{} violations, {:.2}% rounds unclipped",
            tel.violations,
            100.0 * tel.unclipped_fraction()
        ),
    )?;
    Ok(if all_ok { 0 } else { 2 })
}

fn compare(out: &mut dyn Write, cfg: ExperimentConfig) -> Result<i32> {
    if cfg.problem != ProblemKind::SeparableQuadratic {
        return Err(Error::validation(
            "problem.kind",
            "compare needs separable-quadratic",
        ));
    }
    if cfg.horizons.len() < 4 {
        return Err(Error::validation(
            "horizons",
            "compare needs at least four horizons",
        ));
    }
    for algorithm in [Algorithm::Dopbc, Algorithm::Baseline] {
        let cfg = ExperimentConfig {
            algorithm,
            ..cfg.clone()
        };
        let sweep = run_sweep(&cfg)?;
        for metric in ["ccv_1", "regret_a"] {
            if let Some(fit) = sweep.slope(metric) {
                print_fit(out, &format!("{} {metric}", algorithm.name()), fit)?;
            }
        }
    }
    Ok(0)
}
