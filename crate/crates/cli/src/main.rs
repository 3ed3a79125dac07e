//! `cbl`: regret experiments for bandits with post-action contexts, and
//! causal-graph checks.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a bad config or
//! bad input.

mod config;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use causal_bandits::causal_graph::{Dag, GraphReport};
use causal_bandits::harness::{
    make_prior_marginals, prior_stream, run_grid, run_many, trace, validate_grid, CurvePoint, EnvSpec,
    MarginalSource, RunConfig,
};
use causal_bandits::{Environment, PolicySpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;

#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T> = std::result::Result<T, Failure>;

fn bad_config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

#[derive(Parser)]
#[command(name = "cbl", version, about = "Regret experiments for bandits with post-action contexts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo regret experiments and write one CSV per (env, policy).
    Run(RunArgs),
    /// Causal-graph utilities.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Print a per-round trace of one seeded run as CSV.
    Trace(TraceArgs),
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Print d-separation on G, on the mutilated graph, and the front-door verdict.
    Check { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Benign,
    Worstcase,
}

impl Preset {
    fn env(self, actions: Option<usize>) -> EnvSpec {
        match self {
            Preset::Benign => EnvSpec::benign(actions.unwrap_or(10)),
            Preset::Worstcase => EnvSpec::worstcase(actions.unwrap_or(2)),
        }
    }
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["preset", "config"]))]
struct RunArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Horizon.
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Replicates.
    #[arg(long = "M")]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated: ucb, cucb, hacucb, corral, uniform, const:<label>.
    #[arg(long)]
    policies: Option<String>,
    /// Number of actions for presets.
    #[arg(long)]
    actions: Option<usize>,
    /// exact | perturbed:<eps>
    #[arg(long)]
    marginal_source: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write regret.svg.
    #[arg(long)]
    svg: bool,
    /// Re-run every grid horizon with its own environment and replicates.
    #[arg(long)]
    strict_protocol: bool,
    /// Comma-separated horizon grid (default: every round, or ten points with --strict-protocol).
    #[arg(long)]
    horizons: Option<String>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["preset", "env"]))]
struct TraceArgs {
    #[arg(long, default_value = "hacucb")]
    policy: String,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Environment JSON file.
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long = "T", default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long, default_value = "exact")]
    marginal_source: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Graph {
            command: GraphCommand::Check { file },
        } => cmd_graph_check(&file),
        Command::Trace(args) => cmd_trace(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Honours `CBL_THREADS` as the size of the replicate thread pool.
fn configure_threads() -> Outcome<()> {
    let Ok(value) = std::env::var("CBL_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| bad_config(anyhow!("CBL_THREADS must be a positive integer, got '{value}'")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(runtime)?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn default_policies() -> Vec<PolicySpec> {
    let mut p = vec![PolicySpec::Ucb, PolicySpec::CausalUcb, PolicySpec::HacUcb];
    if cfg!(feature = "corral") {
        p.push(PolicySpec::Corral);
    }
    p
}

fn parse_policies<S: AsRef<str>>(names: &[S]) -> Outcome<Vec<PolicySpec>> {
    if names.is_empty() {
        return Err(bad_config(anyhow!("policy list is empty")));
    }
    names
        .iter()
        .map(|n| n.as_ref().parse::<PolicySpec>().map_err(bad_config))
        .collect()
}

fn parse_grid(text: &str) -> Outcome<Vec<usize>> {
    let grid = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().with_context(|| format!("horizon '{s}'")))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(bad_config)?;
    validate_grid(&grid).map_err(bad_config)?;
    Ok(grid)
}

struct Job {
    env_name: String,
    cfg: RunConfig,
}

struct Plan {
    jobs: Vec<Job>,
    grid: Option<Vec<usize>>,
    strict: bool,
    out: PathBuf,
    svg: bool,
}

fn plan_from_args(args: &RunArgs) -> Outcome<Plan> {
    let grid = args.horizons.as_deref().map(parse_grid).transpose()?;
    let marginals: Option<MarginalSource> = args
        .marginal_source
        .as_deref()
        .map(|s| s.parse().map_err(bad_config))
        .transpose()?;
    let cli_policies = args
        .policies
        .as_deref()
        .map(|s| parse_policies(&s.split(',').map(str::trim).collect::<Vec<_>>()))
        .transpose()?;

    if let Some(path) = &args.config {
        let file = ExperimentConfig::load(path).map_err(bad_config)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let horizon = args.horizon.unwrap_or(file.horizon);
        let replicates = args.replicates.unwrap_or(file.replicates);
        let seed = args.seed.unwrap_or(file.seed);
        let grid = match (grid, &file.horizons) {
            (Some(g), _) => Some(g),
            (None, Some(g)) => {
                validate_grid(g).map_err(bad_config)?;
                Some(g.clone())
            }
            (None, None) => None,
        };
        let mut jobs = Vec::new();
        for run in &file.runs {
            let (env, env_name) = run.env.resolve(base).map_err(bad_config)?;
            let policies = match (&cli_policies, &run.policies) {
                (Some(p), _) => p.clone(),
                (None, Some(names)) => parse_policies(names)?,
                (None, None) => default_policies(),
            };
            let source = match (&marginals, &run.marginals) {
                (Some(m), _) => m.clone(),
                (None, Some(s)) => s.parse().map_err(bad_config)?,
                (None, None) => MarginalSource::Exact,
            };
            for policy in policies {
                let mut cfg = RunConfig::new(env.clone(), policy, horizon, replicates, seed).with_marginals(source.clone());
                cfg.delta = run.delta;
                cfg.common_random_numbers = !run.independent_seeds;
                jobs.push(Job {
                    env_name: env_name.clone(),
                    cfg,
                });
            }
        }
        return Ok(Plan {
            jobs,
            grid,
            strict: args.strict_protocol || file.strict_protocol,
            out: args.out.clone().or(file.out).unwrap_or_else(|| "results".into()),
            svg: args.svg || file.svg,
        });
    }

    let preset = args.preset.expect("clap enforces preset or config");
    let env = preset.env(args.actions);
    let policies = cli_policies.unwrap_or_else(default_policies);
    let jobs = policies
        .into_iter()
        .map(|policy| Job {
            env_name: env.name(),
            cfg: RunConfig::new(
                env.clone(),
                policy,
                args.horizon.unwrap_or(2000),
                args.replicates.unwrap_or(50),
                args.seed.unwrap_or(0),
            )
            .with_marginals(marginals.clone().unwrap_or(MarginalSource::Exact)),
        })
        .collect();
    Ok(Plan {
        jobs,
        grid,
        strict: args.strict_protocol,
        out: args.out.clone().unwrap_or_else(|| "results".into()),
        svg: args.svg,
    })
}

/// Builds every environment, prior and policy once so config mistakes
/// surface before any simulation starts.
fn preflight(plan: &Plan) -> Outcome<()> {
    for job in &plan.jobs {
        let cfg = &job.cfg;
        cfg.validate().map_err(bad_config)?;
        let horizons: Vec<usize> = match (&plan.grid, plan.strict) {
            (Some(g), true) => g.clone(),
            _ => vec![cfg.horizon],
        };
        for t in horizons {
            let env = cfg
                .env
                .build(t)
                .with_context(|| format!("environment {}", job.env_name))
                .map_err(bad_config)?;
            let prior = make_prior_marginals(&env, &cfg.marginals, &mut prior_stream(cfg.base_seed))
                .context("prior marginals")
                .map_err(bad_config)?;
            cfg.policy
                .build(env.actions(), &prior, t, cfg.delta)
                .with_context(|| format!("policy {}", cfg.policy))
                .map_err(bad_config)?;
        }
        if let (Some(g), false) = (&plan.grid, plan.strict) {
            if *g.last().expect("validated") > cfg.horizon {
                return Err(bad_config(anyhow!(
                    "grid point {} exceeds horizon {}",
                    g.last().unwrap(),
                    cfg.horizon
                )));
            }
        }
    }
    Ok(())
}

fn file_stem(env_name: &str, policy: &PolicySpec) -> String {
    let policy: String = policy
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect();
    format!("{env_name}_{policy}")
}

fn cmd_run(args: RunArgs) -> Outcome<()> {
    let plan = plan_from_args(&args)?;
    preflight(&plan)?;
    std::fs::create_dir_all(&plan.out)
        .with_context(|| format!("creating output directory {}", plan.out.display()))
        .map_err(bad_config)?;

    let mut series = Vec::new();
    for job in &plan.jobs {
        log::info!("running {} on {}", job.cfg.policy, job.env_name);
        let points: Vec<CurvePoint> = if plan.strict {
            let grid = plan.grid.clone().unwrap_or_else(|| {
                let t = job.cfg.horizon;
                let mut g: Vec<usize> = (1..=10).map(|k| (t * k).div_ceil(10)).filter(|&x| x > 0).collect();
                g.dedup();
                g
            });
            run_grid(&job.cfg, &grid, true).map_err(runtime)?
        } else {
            let ensemble = run_many(&job.cfg).map_err(runtime)?;
            let curve = &ensemble.curve;
            let grid: Vec<usize> = plan.grid.clone().unwrap_or_else(|| (1..=curve.horizon()).collect());
            grid.iter()
                .map(|&t| CurvePoint {
                    t,
                    mean: curve.at(t),
                    se: curve.se_at(t),
                    replicates: curve.replicates,
                })
                .collect()
        };
        let path = plan.out.join(format!("{}.csv", file_stem(&job.env_name, &job.cfg.policy)));
        output::write_curve_csv(&path, &points).map_err(runtime)?;
        println!("{}", path.display());
        series.push((format!("{}/{}", job.env_name, job.cfg.policy), points));
    }
    if plan.svg {
        let path = plan.out.join("regret.svg");
        std::fs::write(&path, output::render_svg(&series))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_graph_check(file: &Path) -> Outcome<()> {
    let text = std::fs::read_to_string(file)
        .with_context(|| format!("reading {}", file.display()))
        .map_err(bad_config)?;
    let dag = Dag::parse(&text)
        .with_context(|| format!("graph {}", file.display()))
        .map_err(bad_config)?;
    println!("{}", GraphReport::of(&dag));
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Outcome<()> {
    let env: Environment = match (&args.env, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(bad_config)?;
            Environment::from_json(&text).map_err(bad_config)?
        }
        (None, Some(preset)) => preset.env(args.actions).build(args.horizon).map_err(bad_config)?,
        (None, None) => unreachable!("clap enforces preset or env"),
    };
    let policy: PolicySpec = args.policy.parse().map_err(bad_config)?;
    let source: MarginalSource = args.marginal_source.parse().map_err(bad_config)?;
    let prior = make_prior_marginals(&env, &source, &mut prior_stream(args.seed)).map_err(bad_config)?;
    let mut p = policy
        .build(env.actions(), &prior, args.horizon, None)
        .map_err(bad_config)?;
    let rows = trace(&env, p.as_mut(), args.horizon, args.seed).map_err(runtime)?;

    let stdout = std::io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    let mut run = || -> anyhow::Result<()> {
        w.write_record(["t", "a", "z", "y", "phase"])?;
        for r in &rows {
            w.write_record([
                r.t.to_string(),
                env.actions()[r.action].clone(),
                env.contexts()[r.context].clone(),
                r.reward.to_string(),
                r.phase.map(|p| p.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    run().map_err(runtime)?;
    std::io::stdout().flush().map_err(runtime)
}
