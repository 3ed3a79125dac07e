//! Hypothesis-tested adaptive causal UCB (HAC-UCB).
//!
//! Two round-robin exploration phases are followed by C-UCB play guarded by
//! a per-round test comparing each arm's UCB index with its pseudo-UCB.
//! The first failed test switches the policy to plain UCB for good.
//!
//! Inside the test all radii are `sqrt(ln T / count)`, independent of the
//! `δ` used to pick actions.

use crate::environment::MarginalTable;
use crate::stats::{log_radius, tv_unhalved, SufficientStats};

use super::{cucb_step, ucb_step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Explore1,
    Explore2,
    Tested,
    Fallback,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Explore1 => "explore1",
            Phase::Explore2 => "explore2",
            Phase::Tested => "tested",
            Phase::Fallback => "fallback",
        }
    }
}

/// `ceil(4 sqrt(T) / |A|)` rounds per arm in the first exploration phase.
pub fn explore1_len(horizon: usize, num_actions: usize) -> u64 {
    (4.0 * (horizon as f64).sqrt() / num_actions as f64).ceil() as u64
}

/// `ceil(sqrt(T) / |A|)` rounds per arm in the second exploration phase.
pub fn explore2_len(horizon: usize, num_actions: usize) -> u64 {
    ((horizon as f64).sqrt() / num_actions as f64).ceil() as u64
}

/// `sqrt(|A| |Z| ln T) / T^{1/4}`.
pub fn slack(horizon: usize, num_actions: usize, num_contexts: usize) -> f64 {
    let t = horizon as f64;
    ((num_actions * num_contexts) as f64 * t.ln()).sqrt() / t.powf(0.25)
}

/// One arm's two-sided check. With `d = ucb - pseudo + slack` it holds iff
/// `-2 context_radius <= d <= 2 action_radius + 2 slack`, where
/// `context_radius = Σ_z sqrt(ln T / N(z)) m_a(z)` and
/// `action_radius = sqrt(ln T / T(a))`.
pub fn arm_test_holds(
    ucb: f64,
    pseudo: f64,
    action_radius: f64,
    context_radius: f64,
    slack: f64,
) -> bool {
    let d = ucb - pseudo + slack;
    -2.0 * context_radius <= d && d <= 2.0 * action_radius + 2.0 * slack
}

#[derive(Debug, Clone)]
pub struct HacState {
    phase: Phase,
    marginals: MarginalTable,
    horizon: usize,
    delta: f64,
    ln_horizon: f64,
    explore1_len: u64,
    explore2_len: u64,
    slack: f64,
    replaced: bool,
    fallback_round: Option<u64>,
}

impl HacState {
    pub fn new(prior: MarginalTable, horizon: usize, delta: f64) -> Self {
        let (n_a, n_z) = (prior.num_actions(), prior.num_contexts());
        let horizon = horizon.max(1);
        if horizon < 25 * n_a * n_a {
            log::warn!(
                "HAC-UCB horizon {horizon} is below 25|A|^2 = {}; exploration may use most of it",
                25 * n_a * n_a
            );
        }
        Self {
            phase: Phase::Explore1,
            marginals: prior,
            horizon,
            delta,
            ln_horizon: (horizon as f64).ln(),
            explore1_len: explore1_len(horizon, n_a),
            explore2_len: explore2_len(horizon, n_a),
            slack: slack(horizon, n_a, n_z),
            replaced: false,
            fallback_round: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// The algorithm's flag: true until the test first fails.
    pub fn flag(&self) -> bool {
        self.phase != Phase::Fallback
    }

    pub fn marginals(&self) -> &MarginalTable {
        &self.marginals
    }

    pub fn explore1_len(&self) -> u64 {
        self.explore1_len
    }

    pub fn explore2_len(&self) -> u64 {
        self.explore2_len
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn replaced(&self) -> bool {
        self.replaced
    }

    pub fn fallback_round(&self) -> Option<u64> {
        self.fallback_round
    }

    /// Threshold on `sup_a Σ_z |m_a(z) - m̂_a(z)|` above which the prior is
    /// replaced by the MLE.
    pub fn replacement_threshold(&self) -> f64 {
        2.0 * self.slack
    }

    fn forced_rounds(&self) -> (u64, u64) {
        let n_a = self.marginals.num_actions() as u64;
        let first = n_a * self.explore1_len;
        (first, first + n_a * self.explore2_len)
    }

    fn maybe_replace(&mut self, s: &SufficientStats) {
        let mle = s
            .mle_marginals()
            .expect("first exploration phase plays every action");
        let worst = self
            .marginals
            .rows()
            .iter()
            .zip(mle.rows())
            .map(|(p, q)| tv_unhalved(p, q).expect("same context set"))
            .fold(0.0, f64::max);
        if worst > self.replacement_threshold() {
            self.marginals = mle;
            self.replaced = true;
        }
    }

    /// Runs the per-arm test on the current statistics, in action order.
    pub fn test_holds(&self, s: &SufficientStats) -> bool {
        let radii: Vec<f64> = (0..s.num_contexts())
            .map(|z| log_radius(self.ln_horizon, s.context_count(z)))
            .collect();
        let context_ucbs: Vec<f64> = radii
            .iter()
            .enumerate()
            .map(|(z, r)| s.mean_context(z) + r)
            .collect();
        (0..s.num_actions()).all(|a| {
            let row = self.marginals.row(a);
            let action_radius = log_radius(self.ln_horizon, s.action_count(a));
            let ucb = s.mean_action(a) + action_radius;
            let pseudo: f64 = context_ucbs.iter().zip(row).map(|(u, m)| u * m).sum();
            let context_radius: f64 = radii.iter().zip(row).map(|(r, m)| r * m).sum();
            arm_test_holds(ucb, pseudo, action_radius, context_radius, self.slack)
        })
    }
}

/// Chooses the action for round `s.rounds() + 1` and advances the phase machine.
pub fn hac_step(state: &mut HacState, s: &SufficientStats) -> usize {
    let n_a = state.marginals.num_actions() as u64;
    let played = s.rounds();
    let (end1, end2) = state.forced_rounds();
    loop {
        match state.phase {
            Phase::Explore1 => {
                if played < end1 {
                    return (played % n_a) as usize;
                }
                state.maybe_replace(s);
                state.phase = Phase::Explore2;
            }
            Phase::Explore2 => {
                if played < end2 {
                    return ((played - end1) % n_a) as usize;
                }
                state.phase = Phase::Tested;
            }
            Phase::Tested => {
                if state.test_holds(s) {
                    return cucb_step(s, &state.marginals, state.delta);
                }
                state.phase = Phase::Fallback;
                state.fallback_round = Some(played + 1);
            }
            Phase::Fallback => return ucb_step(s, state.delta),
        }
    }
}
