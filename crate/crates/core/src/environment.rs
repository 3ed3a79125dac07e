//! Environments: one distribution over (context, reward) per action.
//!
//! An [`Environment`] is a finite action set, a finite context set, a marginal
//! `P_a(z)` for every action and a reward law for every `(action, context)`
//! pair. Reward laws are kept symbolic ([`RewardLaw`]) so that structural
//! questions (is the conditional reward law shared across actions?) can be
//! decided exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Conditional reward law at one `(action, context)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardLaw {
    Bernoulli { mean: f64 },
    PointMass { value: f64 },
}

impl RewardLaw {
    pub fn bernoulli(mean: f64) -> Result<Self> {
        let law = RewardLaw::Bernoulli { mean };
        law.validate()?;
        Ok(law)
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        let law = RewardLaw::PointMass { value };
        law.validate()?;
        Ok(law)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RewardLaw::Bernoulli { mean } => mean,
            RewardLaw::PointMass { value } => value,
        }
    }

    /// Turns one uniform draw `u ∈ [0, 1)` into a reward.
    pub fn draw(&self, u: f64) -> f64 {
        match *self {
            RewardLaw::Bernoulli { mean } => {
                if u < mean {
                    1.0
                } else {
                    0.0
                }
            }
            RewardLaw::PointMass { value } => value,
        }
    }

    /// Same kind and parameter within `tol`.
    pub fn approx_eq(&self, other: &RewardLaw, tol: f64) -> bool {
        match (self, other) {
            (RewardLaw::Bernoulli { mean: a }, RewardLaw::Bernoulli { mean: b }) => {
                (a - b).abs() <= tol
            }
            (RewardLaw::PointMass { value: a }, RewardLaw::PointMass { value: b }) => {
                (a - b).abs() <= tol
            }
            _ => false,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.mean();
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parameter(format!(
                "reward law parameter {v} outside [0, 1]"
            )));
        }
        Ok(())
    }
}

fn validate_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Parameter(format!(
            "{what}: negative or non-finite probability"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::Parameter(format!("{what}: row sums to {sum}, not 1")));
    }
    Ok(())
}

/// One probability vector over contexts per action.
///
/// Used both for the true marginals of an environment and for the
/// approximate marginals handed to causal policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MarginalTable {
    rows: Vec<Vec<f64>>,
}

impl MarginalTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Parameter("marginal table has no rows".into()))?;
        if width == 0 {
            return Err(Error::Parameter("marginal table has no columns".into()));
        }
        for (a, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Parameter(format!(
                    "marginal row {a} has {} entries, expected {width}",
                    row.len()
                )));
            }
            validate_row(row, &format!("marginal row {a}"))?;
        }
        Ok(Self { rows })
    }

    pub fn num_actions(&self) -> usize {
        self.rows.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.rows[a]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, a: usize, z: usize) -> f64 {
        self.rows[a][z]
    }
}

impl TryFrom<Vec<Vec<f64>>> for MarginalTable {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        MarginalTable::new(rows)
    }
}

impl From<MarginalTable> for Vec<Vec<f64>> {
    fn from(m: MarginalTable) -> Self {
        m.rows
    }
}

/// Wire form of an environment; field order is part of the JSON contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EnvironmentDoc {
    actions: Vec<String>,
    contexts: Vec<String>,
    marginal: Vec<Vec<f64>>,
    reward: Vec<Vec<RewardLaw>>,
}

/// A stochastic bandit environment with post-action contexts.
///
/// Actions and contexts are addressed by their position in the label lists;
/// the action order is the tie-breaking order used by every policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentDoc", into = "EnvironmentDoc")]
pub struct Environment {
    actions: Vec<String>,
    contexts: Vec<String>,
    marginal: MarginalTable,
    reward: Vec<Vec<RewardLaw>>,
}

impl TryFrom<EnvironmentDoc> for Environment {
    type Error = Error;

    fn try_from(doc: EnvironmentDoc) -> Result<Self> {
        Environment::new(doc.actions, doc.contexts, doc.marginal, doc.reward)
    }
}

impl From<Environment> for EnvironmentDoc {
    fn from(env: Environment) -> Self {
        EnvironmentDoc {
            actions: env.actions,
            contexts: env.contexts,
            marginal: env.marginal.rows,
            reward: env.reward,
        }
    }
}

impl Environment {
    pub fn new(
        actions: Vec<String>,
        contexts: Vec<String>,
        marginal: Vec<Vec<f64>>,
        reward: Vec<Vec<RewardLaw>>,
    ) -> Result<Self> {
        if actions.is_empty() || contexts.is_empty() {
            return Err(Error::Parameter(
                "action and context sets must be non-empty".into(),
            ));
        }
        if marginal.len() != actions.len() || reward.len() != actions.len() {
            return Err(Error::Parameter(
                "marginal and reward tables need one row per action".into(),
            ));
        }
        let marginal = MarginalTable::new(marginal)?;
        if marginal.num_contexts() != contexts.len() {
            return Err(Error::Parameter(
                "marginal rows need one entry per context".into(),
            ));
        }
        for (a, row) in reward.iter().enumerate() {
            if row.len() != contexts.len() {
                return Err(Error::Parameter(format!(
                    "reward row {a} needs one law per context"
                )));
            }
            for law in row {
                law.validate()?;
            }
        }
        Ok(Self {
            actions,
            contexts,
            marginal,
            reward,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn contexts(&self) -> &[String] {
        &self.contexts
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == label)
    }

    pub fn marginals(&self) -> &MarginalTable {
        &self.marginal
    }

    pub fn reward_law(&self, a: usize, z: usize) -> &RewardLaw {
        &self.reward[a][z]
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.actions.len() {
            return Err(Error::domain(format!(
                "unknown action {a} (environment has {})",
                self.actions.len()
            )));
        }
        Ok(())
    }

    /// Draws `(context, reward)` for action `a`.
    ///
    /// Always consumes exactly two `f64` uniforms from `rng`: the first picks
    /// the context by inverse CDF, the second drives the reward law.
    pub fn sample<R: Rng + ?Sized>(&self, a: usize, rng: &mut R) -> Result<(usize, f64)> {
        self.check_action(a)?;
        let u_context: f64 = rng.random();
        let u_reward: f64 = rng.random();
        let row = self.marginal.row(a);
        let mut z = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        let mut acc = 0.0;
        for (i, &p) in row.iter().enumerate() {
            acc += p;
            if p > 0.0 && u_context < acc {
                z = i;
                break;
            }
        }
        Ok((z, self.reward[a][z].draw(u_reward)))
    }

    pub fn arm_mean(&self, a: usize) -> Result<f64> {
        self.check_action(a)?;
        Ok(self.arm_mean_unchecked(a))
    }

    fn arm_mean_unchecked(&self, a: usize) -> f64 {
        self.marginal
            .row(a)
            .iter()
            .zip(&self.reward[a])
            .map(|(p, law)| p * law.mean())
            .sum()
    }

    /// All arm means in action order.
    pub fn arm_means(&self) -> Vec<f64> {
        (0..self.num_actions())
            .map(|a| self.arm_mean_unchecked(a))
            .collect()
    }

    /// Lowest-ordered optimal action and its mean.
    pub fn optimal_mean(&self) -> (usize, f64) {
        let mut best = (0, self.arm_mean_unchecked(0));
        for a in 1..self.num_actions() {
            let m = self.arm_mean_unchecked(a);
            if m > best.1 {
                best = (a, m);
            }
        }
        best
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("environment JSON: {e}")))
    }
}

fn numbered_labels(n: usize, start: usize) -> Vec<String> {
    (start..start + n).map(|i| i.to_string()).collect()
}

/// Gap used by the benign family: `sqrt(n ln T / T)`.
pub fn benign_gap(num_actions: usize, horizon: usize) -> f64 {
    let t = horizon as f64;
    (num_actions as f64 * t.ln() / t).sqrt()
}

/// The conditionally benign family with two contexts.
///
/// `Y | Z ~ Ber(1/2 + (1 - Z) Δ)` for every action, action `1` lands on
/// context `0` with probability `1 - eps_prime` and every other action with
/// probability `eps_prime`. Action labels are `1..=num_actions`, context
/// labels `0` and `1`.
pub fn make_benign_env(num_actions: usize, horizon: usize, eps_prime: f64) -> Result<Environment> {
    if num_actions < 2 {
        return Err(Error::Parameter("benign environment needs at least 2 actions".into()));
    }
    if horizon < 2 {
        return Err(Error::Parameter("benign environment needs T >= 2".into()));
    }
    if !(eps_prime > 0.0 && eps_prime < 0.5) {
        return Err(Error::Parameter(format!(
            "eps_prime {eps_prime} outside (0, 1/2)"
        )));
    }
    let gap = benign_gap(num_actions, horizon);
    if gap >= 0.5 {
        return Err(Error::Parameter(format!(
            "gap {gap} >= 1/2 for |A| = {num_actions}, T = {horizon}"
        )));
    }
    let laws = vec![
        RewardLaw::Bernoulli { mean: 0.5 + gap },
        RewardLaw::Bernoulli { mean: 0.5 },
    ];
    let marginal = (0..num_actions)
        .map(|a| {
            let p0 = if a == 0 { 1.0 - eps_prime } else { eps_prime };
            vec![p0, 1.0 - p0]
        })
        .collect();
    Environment::new(
        numbered_labels(num_actions, 1),
        numbered_labels(2, 0),
        marginal,
        vec![laws; num_actions],
    )
}

/// Parameters of the two-block worst-case family.
///
/// `mu[i][j]` is the Bernoulli mean for actions in block `A_i` at contexts in
/// block `Z_j`; `p[i]` is the mass actions in `A_i` put on `Z_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseParams {
    pub mu: [[f64; 2]; 2],
    pub p: [f64; 2],
}

impl Default for WorstCaseParams {
    fn default() -> Self {
        Self {
            mu: [[1.0 / 6.0, 5.0 / 6.0], [2.0 / 6.0, 4.0 / 6.0]],
            p: [6.0 / 8.0, 7.0 / 8.0],
        }
    }
}

impl WorstCaseParams {
    /// Mean reward of any action in block `A_i`.
    pub fn block_mean(&self, i: usize) -> f64 {
        self.mu[i][1] * self.p[i] + self.mu[i][0] * (1.0 - self.p[i])
    }

    /// Checks conditions (1)-(3): `A_0` strictly better, `p(0) < p(1)`, and
    /// every `Z_1` mean above every `Z_0` mean.
    pub fn validate(&self) -> Result<()> {
        let in_open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !self.mu.iter().flatten().chain(&self.p).all(|&v| in_open_unit(v)) {
            return Err(Error::Parameter(
                "worst-case parameters must lie in (0, 1)".into(),
            ));
        }
        let (m0, m1) = (self.block_mean(0), self.block_mean(1));
        if m0 <= m1 {
            return Err(Error::Condition {
                condition: "1",
                detail: format!("A0 mean {m0} is not above A1 mean {m1}"),
            });
        }
        if self.p[0] >= self.p[1] {
            return Err(Error::Condition {
                condition: "2",
                detail: format!("p(0) = {} is not below p(1) = {}", self.p[0], self.p[1]),
            });
        }
        let lo = self.mu[0][1].min(self.mu[1][1]);
        let hi = self.mu[0][0].max(self.mu[1][0]);
        if lo <= hi {
            return Err(Error::Condition {
                condition: "3",
                detail: format!("min Z1 mean {lo} is not above max Z0 mean {hi}"),
            });
        }
        Ok(())
    }

    /// Margin by which the pseudo-mean of an `A_0` action undershoots its true
    /// mean once the context statistics are dominated by `A_1` plays. The
    /// switch argument for HAC-UCB needs this to be positive.
    pub fn switch_margin(&self) -> f64 {
        (self.mu[0][1] - self.mu[1][1]) * self.p[0]
            + (self.mu[0][0] - self.mu[1][0]) * (1.0 - self.p[0])
    }

    pub fn validate_switch_condition(&self) -> Result<()> {
        let margin = self.switch_margin();
        if margin <= 0.0 {
            return Err(Error::Condition {
                condition: "switch",
                detail: format!("switch margin {margin} is not positive"),
            });
        }
        Ok(())
    }
}

/// The two-block environment on which C-UCB concentrates on a bad action.
///
/// `a0` and `z0` list the indices of `A_0` and `Z_0`; both must be non-empty
/// strict subsets. Actions in block `i` put mass `p(i)/|Z_1|` on each context
/// of `Z_1` and `(1 - p(i))/|Z_0|` on each context of `Z_0`.
pub fn make_worstcase_env(
    num_actions: usize,
    num_contexts: usize,
    a0: &[usize],
    z0: &[usize],
    params: Option<WorstCaseParams>,
) -> Result<Environment> {
    let params = params.unwrap_or_default();
    params.validate()?;
    let in_a0 = block_mask(num_actions, a0, "A0")?;
    let in_z0 = block_mask(num_contexts, z0, "Z0")?;
    let z0_len = in_z0.iter().filter(|&&b| b).count() as f64;
    let z1_len = num_contexts as f64 - z0_len;

    let mut marginal = Vec::with_capacity(num_actions);
    let mut reward = Vec::with_capacity(num_actions);
    for &a_in_0 in &in_a0 {
        let i = if a_in_0 { 0 } else { 1 };
        let p = params.p[i];
        marginal.push(
            in_z0
                .iter()
                .map(|&z_in_0| if z_in_0 { (1.0 - p) / z0_len } else { p / z1_len })
                .collect(),
        );
        reward.push(
            in_z0
                .iter()
                .map(|&z_in_0| RewardLaw::Bernoulli {
                    mean: params.mu[i][if z_in_0 { 0 } else { 1 }],
                })
                .collect(),
        );
    }
    Environment::new(
        numbered_labels(num_actions, 1),
        numbered_labels(num_contexts, 0),
        marginal,
        reward,
    )
}

fn block_mask(n: usize, members: &[usize], name: &str) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &m in members {
        if m >= n {
            return Err(Error::Parameter(format!("{name} member {m} out of range")));
        }
        mask[m] = true;
    }
    let k = mask.iter().filter(|&&b| b).count();
    if k == 0 || k == n {
        return Err(Error::Parameter(format!(
            "{name} must be a non-empty strict subset"
        )));
    }
    Ok(mask)
}

/// Worst-case environment with the default split `A_0 = {first}`,
/// `Z_0 = {first}` and the default parameters.
pub fn default_worstcase_env(num_actions: usize, num_contexts: usize) -> Result<Environment> {
    make_worstcase_env(num_actions, num_contexts, &[0], &[0], None)
}
