//! Monte Carlo regret experiments.
//!
//! Every replicate owns two ChaCha streams derived from `base_seed + index`:
//! stream 0 feeds the environment, stream 1 the policy. Regret increments are
//! expected regret given the chosen action (`μ* - μ(A_t)`), not realised
//! reward. Replicates are reduced in index order, so the aggregate does not
//! depend on how they were scheduled.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{
    make_benign_env, make_worstcase_env, Environment, MarginalTable, WorstCaseParams,
};
use crate::error::{Error, Result};
use crate::policies::{Phase, Policy, PolicySpec, PolicyStatus, Stream};

/// `ε'` of the benign family.
pub const BENIGN_EPS_PRIME: f64 = 0.0005;

const ENV_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;
const PRIOR_STREAM: u64 = 2;

/// The two ChaCha streams of replicate `index`.
pub fn replicate_streams(base_seed: u64, index: u64) -> (Stream, Stream) {
    let seed = base_seed.wrapping_add(index);
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(ENV_STREAM);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
    policy_rng.set_stream(POLICY_STREAM);
    (env_rng, policy_rng)
}

/// The stream used to draw perturbed prior marginals for a config seeded with `base_seed`.
pub fn prior_stream(base_seed: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(PRIOR_STREAM);
    rng
}

/// How an environment is obtained for a given horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum EnvSpec {
    /// Benign family; its gap depends on the horizon.
    Benign {
        actions: usize,
        #[serde(default = "default_eps_prime")]
        eps_prime: f64,
    },
    /// Two-block worst-case family with `A_0 = {first}`, `Z_0 = {first}` unless given.
    Worstcase {
        actions: usize,
        #[serde(default = "two")]
        contexts: usize,
        #[serde(default = "first_only")]
        a0: Vec<usize>,
        #[serde(default = "first_only")]
        z0: Vec<usize>,
        #[serde(default)]
        params: Option<WorstCaseParams>,
    },
    /// A fully specified environment.
    Fixed { environment: Environment },
}

fn default_eps_prime() -> f64 {
    BENIGN_EPS_PRIME
}

fn two() -> usize {
    2
}

fn first_only() -> Vec<usize> {
    vec![0]
}

impl EnvSpec {
    pub fn benign(actions: usize) -> Self {
        EnvSpec::Benign {
            actions,
            eps_prime: BENIGN_EPS_PRIME,
        }
    }

    pub fn worstcase(actions: usize) -> Self {
        EnvSpec::Worstcase {
            actions,
            contexts: 2,
            a0: vec![0],
            z0: vec![0],
            params: None,
        }
    }

    pub fn build(&self, horizon: usize) -> Result<Environment> {
        match self {
            EnvSpec::Benign { actions, eps_prime } => make_benign_env(*actions, horizon, *eps_prime),
            EnvSpec::Worstcase {
                actions,
                contexts,
                a0,
                z0,
                params,
            } => make_worstcase_env(*actions, *contexts, a0, z0, *params),
            EnvSpec::Fixed { environment } => Ok(environment.clone()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            EnvSpec::Benign { actions, .. } => format!("benign_a{actions}"),
            EnvSpec::Worstcase { actions, contexts, .. } => format!("worstcase_a{actions}_z{contexts}"),
            EnvSpec::Fixed { .. } => "custom".to_string(),
        }
    }
}

/// Where the marginals handed to causal policies come from.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginalSource {
    Exact,
    /// Every row moved to un-halved total variation exactly `ε` from the truth.
    Perturbed(f64),
    Custom(MarginalTable),
}

impl FromStr for MarginalSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(MarginalSource::Exact);
        }
        let eps = s
            .strip_prefix("perturbed:")
            .ok_or_else(|| Error::config(format!("unknown marginal source '{s}'")))?
            .parse::<f64>()
            .map_err(|e| Error::config(format!("perturbation '{s}': {e}")))?;
        Ok(MarginalSource::Perturbed(eps))
    }
}

/// Builds the prior marginals for `env`.
///
/// `Perturbed(ε)` moves mass `ε/2` from a randomly chosen context holding at
/// least that much to a different random context, independently per action.
pub fn make_prior_marginals<R: Rng + ?Sized>(
    env: &Environment,
    source: &MarginalSource,
    rng: &mut R,
) -> Result<MarginalTable> {
    match source {
        MarginalSource::Exact => Ok(env.marginals().clone()),
        MarginalSource::Custom(table) => {
            if table.num_actions() != env.num_actions() || table.num_contexts() != env.num_contexts() {
                return Err(Error::config("custom marginal table does not match the environment"));
            }
            Ok(table.clone())
        }
        MarginalSource::Perturbed(eps) => {
            let eps = *eps;
            if !(0.0..=2.0).contains(&eps) {
                return Err(Error::config(format!("perturbation {eps} outside [0, 2]")));
            }
            if eps == 0.0 {
                return Ok(env.marginals().clone());
            }
            let shift = eps / 2.0;
            let n_z = env.num_contexts();
            let rows = env
                .marginals()
                .rows()
                .iter()
                .enumerate()
                .map(|(a, row)| {
                    let donors: Vec<usize> = (0..n_z).filter(|&z| row[z] >= shift).collect();
                    if donors.is_empty() || n_z < 2 {
                        return Err(Error::config(format!(
                            "cannot move mass {shift} within marginal row {a}"
                        )));
                    }
                    let from = donors[rng.random_range(0..donors.len())];
                    let mut to = rng.random_range(0..n_z - 1);
                    if to >= from {
                        to += 1;
                    }
                    let mut out = row.clone();
                    out[from] -= shift;
                    out[to] += shift;
                    out[from] = out[from].max(0.0);
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?;
            MarginalTable::new(rows)
        }
    }
}

/// One replicate-set experiment.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub policy: PolicySpec,
    pub horizon: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub delta: Option<f64>,
    pub marginals: MarginalSource,
    /// Share replicate seeds across policies (common random numbers).
    pub common_random_numbers: bool,
}

impl RunConfig {
    pub fn new(env: EnvSpec, policy: PolicySpec, horizon: usize, replicates: usize, base_seed: u64) -> Self {
        Self {
            env,
            policy,
            horizon,
            replicates,
            base_seed,
            delta: None,
            marginals: MarginalSource::Exact,
            common_random_numbers: true,
        }
    }

    pub fn with_marginals(mut self, marginals: MarginalSource) -> Self {
        self.marginals = marginals;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(Error::config("need at least one replicate"));
        }
        Ok(())
    }

    fn replicate_seed_base(&self) -> u64 {
        if self.common_random_numbers {
            return self.base_seed;
        }
        // FNV-1a over the policy name
        let salt = self
            .policy
            .to_string()
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        self.base_seed ^ salt
    }
}

/// Per-round cumulative expected regret averaged over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCurve {
    /// `mean[t-1]` is the mean cumulative regret after round `t`.
    pub mean: Vec<f64>,
    /// Standard error of the mean, same indexing.
    pub se: Vec<f64>,
    pub replicates: usize,
}

impl RegretCurve {
    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    /// Mean cumulative regret after round `t` (1-based).
    pub fn at(&self, t: usize) -> f64 {
        self.mean[t - 1]
    }

    pub fn se_at(&self, t: usize) -> f64 {
        self.se[t - 1]
    }

    pub fn final_mean(&self) -> f64 {
        *self.mean.last().unwrap_or(&0.0)
    }

    pub fn final_se(&self) -> f64 {
        *self.se.last().unwrap_or(&0.0)
    }

    /// Aggregates cumulative curves in the given order.
    pub fn from_cumulative(curves: &[Vec<f64>]) -> Self {
        let m = curves.len();
        let horizon = curves.first().map(Vec::len).unwrap_or(0);
        let mut mean = vec![0.0; horizon];
        for c in curves {
            for (acc, v) in mean.iter_mut().zip(c) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        let mut se = vec![0.0; horizon];
        if m > 1 {
            for c in curves {
                for ((acc, v), mu) in se.iter_mut().zip(c).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
            se.iter_mut()
                .for_each(|v| *v = (*v / (m as f64 - 1.0)).sqrt() / (m as f64).sqrt());
        }
        Self {
            mean,
            se,
            replicates: m,
        }
    }
}

/// Per-replicate outcome kept alongside the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateSummary {
    pub final_regret: f64,
    pub status: PolicyStatus,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub curve: RegretCurve,
    pub replicates: Vec<ReplicateSummary>,
}

impl Ensemble {
    /// Fraction of replicates whose HAC-UCB run fell back to UCB at or before `round`.
    pub fn fallback_fraction_by(&self, round: u64) -> f64 {
        let hits = self
            .replicates
            .iter()
            .filter(|r| r.status.fallback_round.is_some_and(|f| f <= round))
            .count();
        hits as f64 / self.replicates.len() as f64
    }

    pub fn fallback_fraction(&self) -> f64 {
        self.fallback_fraction_by(u64::MAX)
    }

    pub fn replacement_fraction(&self) -> f64 {
        let hits = self.replicates.iter().filter(|r| r.status.replaced).count();
        hits as f64 / self.replicates.len() as f64
    }
}

/// One row of a per-round trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub action: usize,
    pub context: usize,
    pub reward: f64,
    pub phase: Option<Phase>,
}

/// Plays `horizon` rounds, calling `on_round` after each, and returns the
/// per-round regret increments.
pub fn run_one_with<F>(
    env: &Environment,
    policy: &mut dyn Policy,
    horizon: usize,
    env_rng: &mut Stream,
    policy_rng: &mut Stream,
    mut on_round: F,
) -> Result<Vec<f64>>
where
    F: FnMut(TraceRow, &dyn Policy),
{
    let means = env.arm_means();
    let (_, best) = env.optimal_mean();
    let mut increments = Vec::with_capacity(horizon);
    for t in 1..=horizon as u64 {
        let a = policy.select(policy_rng);
        let (z, y) = env.sample(a, env_rng)?;
        policy.observe(a, z, y)?;
        increments.push((best - means[a]).max(0.0));
        let row = TraceRow {
            t,
            action: a,
            context: z,
            reward: y,
            phase: policy.status().phase,
        };
        on_round(row, &*policy);
    }
    Ok(increments)
}

/// Per-round regret increments of one seeded run.
pub fn run_one(env: &Environment, policy: &mut dyn Policy, horizon: usize, seed: u64) -> Result<Vec<f64>> {
    let (mut env_rng, mut policy_rng) = replicate_streams(seed, 0);
    run_one_with(env, policy, horizon, &mut env_rng, &mut policy_rng, |_, _| {})
}

/// Full per-round trace of one seeded run.
pub fn trace(env: &Environment, policy: &mut dyn Policy, horizon: usize, seed: u64) -> Result<Vec<TraceRow>> {
    let (mut env_rng, mut policy_rng) = replicate_streams(seed, 0);
    let mut rows = Vec::with_capacity(horizon);
    run_one_with(env, policy, horizon, &mut env_rng, &mut policy_rng, |row, _| rows.push(row))?;
    Ok(rows)
}

/// How replicates are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Execution::Parallel;
        #[cfg(not(feature = "parallel"))]
        return Execution::Sequential;
    }
}

struct Prepared {
    env: Environment,
    prior: MarginalTable,
    seed_base: u64,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let env = cfg.env.build(cfg.horizon)?;
    let mut prior_rng = prior_stream(cfg.base_seed);
    let prior = make_prior_marginals(&env, &cfg.marginals, &mut prior_rng)?;
    // fail on bad policy names before spawning replicates
    cfg.policy.build(env.actions(), &prior, cfg.horizon, cfg.delta)?;
    Ok(Prepared {
        seed_base: cfg.replicate_seed_base(),
        env,
        prior,
    })
}

fn run_replicate(cfg: &RunConfig, prep: &Prepared, index: usize) -> Result<(Vec<f64>, ReplicateSummary)> {
    let mut policy = cfg
        .policy
        .build(prep.env.actions(), &prep.prior, cfg.horizon, cfg.delta)?;
    let (mut env_rng, mut policy_rng) = replicate_streams(prep.seed_base, index as u64);
    let increments = run_one_with(
        &prep.env,
        policy.as_mut(),
        cfg.horizon,
        &mut env_rng,
        &mut policy_rng,
        |_, _| {},
    )?;
    let mut total = 0.0;
    let cumulative: Vec<f64> = increments
        .iter()
        .map(|d| {
            total += d;
            total
        })
        .collect();
    let summary = ReplicateSummary {
        final_regret: total,
        status: policy.status(),
    };
    Ok((cumulative, summary))
}

/// Runs one replicate by index. Replicate `i` of a config always produces
/// the same output, whichever other replicates are run.
pub fn run_replicate_by_index(cfg: &RunConfig, index: usize) -> Result<(Vec<f64>, ReplicateSummary)> {
    let prep = prepare(cfg)?;
    run_replicate(cfg, &prep, index)
}

pub fn run_many_with(cfg: &RunConfig, exec: Execution) -> Result<Ensemble> {
    let prep = prepare(cfg)?;
    let results: Vec<(Vec<f64>, ReplicateSummary)> = match exec {
        Execution::Sequential => (0..cfg.replicates)
            .map(|i| run_replicate(cfg, &prep, i))
            .collect::<Result<_>>()?,
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..cfg.replicates)
                .into_par_iter()
                .map(|i| run_replicate(cfg, &prep, i))
                .collect::<Result<_>>()?
        }
    };
    let (curves, replicates): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(Ensemble {
        curve: RegretCurve::from_cumulative(&curves),
        replicates,
    })
}

/// Runs every replicate of `cfg` with the default scheduling.
pub fn run_many(cfg: &RunConfig) -> Result<Ensemble> {
    run_many_with(cfg, Execution::default())
}

/// A point on a regret-versus-horizon curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: usize,
    pub mean: f64,
    pub se: f64,
    pub replicates: usize,
}

/// A horizon grid must be non-empty, positive and strictly increasing.
pub fn validate_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config("horizon grid is empty"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(Error::config("horizon grid must be positive and strictly increasing"));
    }
    Ok(())
}

/// Regret at each horizon of `grid`.
///
/// With `strict` every horizon gets its own environment, policy and fresh
/// replicates. Otherwise one run at the largest horizon is read off at each
/// grid point.
pub fn run_grid(cfg: &RunConfig, grid: &[usize], strict: bool) -> Result<Vec<CurvePoint>> {
    validate_grid(grid)?;
    if strict {
        grid.iter()
            .map(|&t| {
                let mut c = cfg.clone();
                c.horizon = t;
                let e = run_many(&c)?;
                Ok(CurvePoint {
                    t,
                    mean: e.curve.final_mean(),
                    se: e.curve.final_se(),
                    replicates: e.curve.replicates,
                })
            })
            .collect()
    } else {
        let mut c = cfg.clone();
        c.horizon = *grid.last().expect("non-empty");
        let e = run_many(&c)?;
        Ok(grid
            .iter()
            .map(|&t| CurvePoint {
                t,
                mean: e.curve.at(t),
                se: e.curve.se_at(t),
                replicates: e.curve.replicates,
            })
            .collect())
    }
}
