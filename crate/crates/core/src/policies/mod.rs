//! Decision rules.
//!
//! The index rules are exposed twice: as pure functions of
//! [`SufficientStats`] ([`ucb_step`], [`cucb_step`], [`hac::hac_step`]) and as
//! stateful [`Policy`] objects the harness drives round by round.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::environment::MarginalTable;
use crate::error::{Error, Result};
use crate::stats::{default_delta, pseudo_index, SufficientStats};

#[cfg(feature = "corral")]
pub mod corral;
pub mod hac;

pub use hac::{hac_step, HacState, Phase};

/// Random stream type handed to policies.
pub type Stream = ChaCha8Rng;

/// Index of the first maximal entry.
pub(crate) fn first_argmax<I: IntoIterator<Item = f64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// UCB: the action with the largest `μ̂(a) + sqrt(ln(2/δ)/(2 T(a)))`,
/// lowest index on ties.
pub fn ucb_step(s: &SufficientStats, delta: f64) -> usize {
    first_argmax((0..s.num_actions()).map(|a| s.ucb_action(a, delta)))
}

/// C-UCB: the action with the largest pseudo-UCB under `m`, lowest index on ties.
pub fn cucb_step(s: &SufficientStats, m: &MarginalTable, delta: f64) -> usize {
    debug_assert_eq!(m.num_actions(), s.num_actions());
    let context_ucbs = s.context_ucbs(delta);
    first_argmax(
        m.rows()
            .iter()
            .map(|row| pseudo_index(&context_ucbs, row).expect("marginal width matches contexts")),
    )
}

/// What a policy reports about itself after a round, for traces and diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PolicyStatus {
    pub phase: Option<Phase>,
    /// HAC-UCB replaced its prior marginals with the MLE.
    pub replaced: bool,
    /// First round HAC-UCB played by the UCB rule after its test failed.
    pub fallback_round: Option<u64>,
}

/// A bandit policy driven one round at a time.
pub trait Policy: Send {
    fn select(&mut self, rng: &mut Stream) -> usize;

    fn observe(&mut self, action: usize, context: usize, reward: f64) -> Result<()>;

    fn status(&self) -> PolicyStatus {
        PolicyStatus::default()
    }
}

pub struct Ucb {
    stats: SufficientStats,
    delta: f64,
}

impl Ucb {
    pub fn new(num_actions: usize, num_contexts: usize, delta: f64) -> Self {
        Self {
            stats: SufficientStats::new(num_actions, num_contexts),
            delta,
        }
    }
}

impl Policy for Ucb {
    fn select(&mut self, _rng: &mut Stream) -> usize {
        ucb_step(&self.stats, self.delta)
    }

    fn observe(&mut self, action: usize, context: usize, reward: f64) -> Result<()> {
        self.stats.update(action, context, reward)
    }
}

pub struct CausalUcb {
    stats: SufficientStats,
    marginals: MarginalTable,
    delta: f64,
}

impl CausalUcb {
    pub fn new(marginals: MarginalTable, delta: f64) -> Self {
        Self {
            stats: SufficientStats::new(marginals.num_actions(), marginals.num_contexts()),
            marginals,
            delta,
        }
    }
}

impl Policy for CausalUcb {
    fn select(&mut self, _rng: &mut Stream) -> usize {
        cucb_step(&self.stats, &self.marginals, self.delta)
    }

    fn observe(&mut self, action: usize, context: usize, reward: f64) -> Result<()> {
        self.stats.update(action, context, reward)
    }
}

pub struct HacUcb {
    stats: SufficientStats,
    state: HacState,
}

impl HacUcb {
    pub fn new(prior: MarginalTable, horizon: usize, delta: f64) -> Self {
        Self {
            stats: SufficientStats::new(prior.num_actions(), prior.num_contexts()),
            state: HacState::new(prior, horizon, delta),
        }
    }

    pub fn state(&self) -> &HacState {
        &self.state
    }
}

impl Policy for HacUcb {
    fn select(&mut self, _rng: &mut Stream) -> usize {
        hac_step(&mut self.state, &self.stats)
    }

    fn observe(&mut self, action: usize, context: usize, reward: f64) -> Result<()> {
        self.stats.update(action, context, reward)
    }

    fn status(&self) -> PolicyStatus {
        PolicyStatus {
            phase: Some(self.state.phase()),
            replaced: self.state.replaced(),
            fallback_round: self.state.fallback_round(),
        }
    }
}

/// Plays one fixed action forever.
pub struct Constant {
    action: usize,
}

impl Constant {
    pub fn new(action: usize, num_actions: usize) -> Result<Self> {
        if action >= num_actions {
            return Err(Error::domain(format!("constant action {action} not in action set")));
        }
        Ok(Self { action })
    }
}

impl Policy for Constant {
    fn select(&mut self, _rng: &mut Stream) -> usize {
        self.action
    }

    fn observe(&mut self, _: usize, _: usize, _: f64) -> Result<()> {
        Ok(())
    }
}

/// Picks uniformly at random every round.
pub struct Uniform {
    num_actions: usize,
}

impl Uniform {
    pub fn new(num_actions: usize) -> Self {
        Self { num_actions }
    }
}

impl Policy for Uniform {
    fn select(&mut self, rng: &mut Stream) -> usize {
        rng.random_range(0..self.num_actions)
    }

    fn observe(&mut self, _: usize, _: usize, _: f64) -> Result<()> {
        Ok(())
    }
}

/// Policy names accepted on the command line and in configs:
/// `ucb | cucb | hacucb | corral | const:<label> | uniform`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PolicySpec {
    Ucb,
    CausalUcb,
    HacUcb,
    Corral,
    Constant(String),
    Uniform,
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ucb" => Ok(PolicySpec::Ucb),
            "cucb" => Ok(PolicySpec::CausalUcb),
            "hacucb" => Ok(PolicySpec::HacUcb),
            "corral" => Ok(PolicySpec::Corral),
            "uniform" => Ok(PolicySpec::Uniform),
            other => match other.strip_prefix("const:") {
                Some(label) if !label.is_empty() => Ok(PolicySpec::Constant(label.to_string())),
                _ => Err(Error::config(format!("unknown policy '{other}'"))),
            },
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Ucb => f.write_str("ucb"),
            PolicySpec::CausalUcb => f.write_str("cucb"),
            PolicySpec::HacUcb => f.write_str("hacucb"),
            PolicySpec::Corral => f.write_str("corral"),
            PolicySpec::Constant(a) => write!(f, "const:{a}"),
            PolicySpec::Uniform => f.write_str("uniform"),
        }
    }
}

impl PolicySpec {
    /// Instantiates the policy for an environment with the given action
    /// labels, prior marginals and horizon. `delta` defaults to `2/T²`.
    pub fn build(
        &self,
        action_labels: &[String],
        prior: &MarginalTable,
        horizon: usize,
        delta: Option<f64>,
    ) -> Result<Box<dyn Policy>> {
        if prior.num_actions() != action_labels.len() {
            return Err(Error::config(format!(
                "prior marginals cover {} actions, environment has {}",
                prior.num_actions(),
                action_labels.len()
            )));
        }
        let delta = delta.unwrap_or_else(|| default_delta(horizon));
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(format!("delta {delta} outside (0, 1)")));
        }
        let (n_a, n_z) = (prior.num_actions(), prior.num_contexts());
        Ok(match self {
            PolicySpec::Ucb => Box::new(Ucb::new(n_a, n_z, delta)),
            PolicySpec::CausalUcb => Box::new(CausalUcb::new(prior.clone(), delta)),
            PolicySpec::HacUcb => Box::new(HacUcb::new(prior.clone(), horizon, delta)),
            PolicySpec::Uniform => Box::new(Uniform::new(n_a)),
            PolicySpec::Constant(label) => {
                let a = action_labels
                    .iter()
                    .position(|l| l == label)
                    .ok_or_else(|| Error::domain(format!("action '{label}' not in action set")))?;
                Box::new(Constant::new(a, n_a)?)
            }
            #[cfg(feature = "corral")]
            PolicySpec::Corral => Box::new(corral::Corral::new(prior.clone(), horizon)),
            #[cfg(not(feature = "corral"))]
            PolicySpec::Corral => {
                return Err(Error::NotAvailable(
                    "corral support was not compiled in (enable the `corral` feature)".into(),
                ))
            }
        })
    }
}
