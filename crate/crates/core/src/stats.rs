//! Sufficient statistics and confidence indices shared by all policies.
//!
//! Counts are stored raw and floored at one only when read, so
//! `Σ_a count(a) = Σ_z count(z) = t` holds exactly.

use crate::environment::MarginalTable;
use crate::error::{Error, Result};

/// Hoeffding radius `sqrt(ln(2/δ) / (2 n))` with `n` floored at one.
pub fn hoeffding_radius(count: u64, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * count.max(1) as f64)).sqrt()
}

/// Radius `sqrt(ln T / n)` with `n` floored at one. Equals
/// [`hoeffding_radius`] when `δ = 2/T²`.
pub fn log_radius(ln_horizon: f64, count: u64) -> f64 {
    (ln_horizon / count.max(1) as f64).sqrt()
}

/// The default confidence level `2/T²`.
pub fn default_delta(horizon: usize) -> f64 {
    2.0 / (horizon as f64).powi(2)
}

/// Un-halved total variation `Σ |p - q|`, in `[0, 2]`.
pub fn tv_unhalved(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::domain(format!(
            "probability vectors differ in length ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// `Σ_z index(z) m(z)`: a context-index vector averaged under one marginal row.
pub fn pseudo_index(context_indices: &[f64], row: &[f64]) -> Result<f64> {
    if context_indices.len() != row.len() {
        return Err(Error::domain(format!(
            "marginal row has {} entries for {} contexts",
            row.len(),
            context_indices.len()
        )));
    }
    Ok(context_indices.iter().zip(row).map(|(u, m)| u * m).sum())
}

/// Maximum-likelihood marginals from observed `(action, context)` pairs.
pub fn mle_marginals<I>(pairs: I, num_actions: usize, num_contexts: usize) -> Result<MarginalTable>
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut joint = vec![0u64; num_actions * num_contexts];
    for (a, z) in pairs {
        if a >= num_actions || z >= num_contexts {
            return Err(Error::domain(format!("pair ({a}, {z}) out of range")));
        }
        joint[a * num_contexts + z] += 1;
    }
    marginals_from_joint(&joint, num_actions, num_contexts)
}

fn marginals_from_joint(joint: &[u64], num_actions: usize, num_contexts: usize) -> Result<MarginalTable> {
    let rows = joint
        .chunks(num_contexts)
        .take(num_actions)
        .enumerate()
        .map(|(a, counts)| {
            let n: u64 = counts.iter().sum();
            if n == 0 {
                return Err(Error::domain(format!("action {a} has no observations")));
            }
            Ok(counts.iter().map(|&c| c as f64 / n as f64).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    MarginalTable::new(rows)
}

/// Per-action and per-context counts and reward sums after `t` rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    rounds: u64,
    action_count: Vec<u64>,
    action_sum: Vec<f64>,
    context_count: Vec<u64>,
    context_sum: Vec<f64>,
    joint_count: Vec<u64>,
}

impl SufficientStats {
    pub fn new(num_actions: usize, num_contexts: usize) -> Self {
        Self {
            rounds: 0,
            action_count: vec![0; num_actions],
            action_sum: vec![0.0; num_actions],
            context_count: vec![0; num_contexts],
            context_sum: vec![0.0; num_contexts],
            joint_count: vec![0; num_actions * num_contexts],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.action_count.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.context_count.len()
    }

    /// Rounds observed so far.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn update(&mut self, a: usize, z: usize, y: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::domain(format!("reward {y} outside [0, 1]")));
        }
        if a >= self.num_actions() || z >= self.num_contexts() {
            return Err(Error::domain(format!("observation ({a}, {z}) out of range")));
        }
        self.rounds += 1;
        self.action_count[a] += 1;
        self.action_sum[a] += y;
        self.context_count[z] += 1;
        self.context_sum[z] += y;
        self.joint_count[a * self.context_count.len() + z] += 1;
        Ok(())
    }

    /// Raw number of plays of `a`.
    pub fn action_count(&self, a: usize) -> u64 {
        self.action_count[a]
    }

    /// Raw number of observations of `z`.
    pub fn context_count(&self, z: usize) -> u64 {
        self.context_count[z]
    }

    pub fn action_reward_sum(&self, a: usize) -> f64 {
        self.action_sum[a]
    }

    pub fn context_reward_sum(&self, z: usize) -> f64 {
        self.context_sum[z]
    }

    pub fn joint_count(&self, a: usize, z: usize) -> u64 {
        self.joint_count[a * self.context_count.len() + z]
    }

    /// Empirical mean reward of `a`; zero before the first play.
    pub fn mean_action(&self, a: usize) -> f64 {
        self.action_sum[a] / self.action_count[a].max(1) as f64
    }

    /// Empirical mean reward given context `z`; zero before it is observed.
    pub fn mean_context(&self, z: usize) -> f64 {
        self.context_sum[z] / self.context_count[z].max(1) as f64
    }

    pub fn ucb_action(&self, a: usize, delta: f64) -> f64 {
        self.mean_action(a) + hoeffding_radius(self.action_count[a], delta)
    }

    pub fn ucb_context(&self, z: usize, delta: f64) -> f64 {
        self.mean_context(z) + hoeffding_radius(self.context_count[z], delta)
    }

    pub fn context_ucbs(&self, delta: f64) -> Vec<f64> {
        (0..self.num_contexts())
            .map(|z| self.ucb_context(z, delta))
            .collect()
    }

    /// C-UCB's index: context indices averaged under `m`'s row for `a`.
    pub fn pseudo_ucb(&self, a: usize, m: &MarginalTable, delta: f64) -> Result<f64> {
        if a >= m.num_actions() {
            return Err(Error::domain(format!("marginal table has no row for action {a}")));
        }
        pseudo_index(&self.context_ucbs(delta), m.row(a))
    }

    /// MLE of the marginals from every round observed so far.
    pub fn mle_marginals(&self) -> Result<MarginalTable> {
        marginals_from_joint(&self.joint_count, self.num_actions(), self.num_contexts())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_update() {
        let mut s = SufficientStats::new(2, 2);
        s.update(0, 0, 1.0).unwrap();
        assert_eq!(s.mean_action(0), 1.0);
        assert_eq!(s.mean_context(0), 1.0);
        assert!(matches!(s.update(0, 0, 1.5), Err(Error::Domain(_))));
        assert!(matches!(s.update(0, 0, -0.1), Err(Error::Domain(_))));
        assert!(s.update(2, 0, 0.5).is_err());
        assert_eq!(s.rounds(), 1);
    }

    #[test]
    fn three_updates() {
        let mut s = SufficientStats::new(2, 1);
        s.update(0, 0, 1.0).unwrap();
        s.update(0, 0, 0.0).unwrap();
        s.update(1, 0, 1.0).unwrap();
        assert_abs_diff_eq!(s.mean_action(0), 0.5);
        assert_abs_diff_eq!(s.mean_context(0), 2.0 / 3.0, epsilon = 1e-15);
        let total: u64 = (0..2).map(|a| s.action_count(a)).sum();
        assert_eq!(total, s.rounds());
    }

    #[test]
    fn unseen_arm_reads_floored() {
        let s = SufficientStats::new(3, 2);
        assert_eq!(s.mean_action(2), 0.0);
        let delta = default_delta(10);
        // sqrt(ln(100) / 2)
        assert_abs_diff_eq!(s.ucb_action(2, delta), 1.517_427_129_385_146_5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.ucb_context(1, delta), 1.517_427_129_385_146_5, epsilon = 1e-12);
    }

    #[test]
    fn default_delta_matches_log_radius() {
        let t = 10_000;
        let delta = default_delta(t);
        for n in [1u64, 7, 100, 5000] {
            assert_abs_diff_eq!(
                hoeffding_radius(n, delta),
                log_radius((t as f64).ln(), n),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn context_index_after_two_draws() {
        let mut s = SufficientStats::new(1, 2);
        s.update(0, 0, 1.0).unwrap();
        s.update(0, 0, 0.0).unwrap();
        assert_abs_diff_eq!(s.ucb_context(0, 2.0 / 100.0), 1.572_983_013_144_673_6, epsilon = 1e-12);
    }

    #[test]
    fn radius_shrinks_with_count() {
        let delta = 0.01;
        let mut last = f64::INFINITY;
        for n in 0..200 {
            let r = hoeffding_radius(n, delta);
            assert!(r <= last);
            last = r;
        }
    }

    #[test]
    fn pseudo_index_examples() {
        assert_abs_diff_eq!(pseudo_index(&[0.9, 0.3], &[0.75, 0.25]).unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!(pseudo_index(&[0.9, 0.3], &[1.0, 0.0]).unwrap(), 0.9);
        assert_abs_diff_eq!(pseudo_index(&[0.9, 0.3], &[0.5, 0.5]).unwrap(), 0.6, epsilon = 1e-15);
        assert!(pseudo_index(&[0.9, 0.3], &[1.0]).is_err());

        let mut s = SufficientStats::new(2, 2);
        s.update(0, 1, 1.0).unwrap();
        let m = MarginalTable::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(s.pseudo_ucb(0, &m, 0.1).unwrap(), s.ucb_context(0, 0.1));
        assert_eq!(s.pseudo_ucb(1, &m, 0.1).unwrap(), s.ucb_context(1, 0.1));
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_unhalved(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(tv_unhalved(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_abs_diff_eq!(tv_unhalved(&[0.5, 0.5], &[0.75, 0.25]).unwrap(), 0.5);
        assert!(matches!(tv_unhalved(&[1.0], &[0.5, 0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn mle_counts() {
        let m = mle_marginals([(0, 0), (0, 0), (0, 1), (1, 1)], 2, 2).unwrap();
        assert_abs_diff_eq!(m.get(0, 0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.row(1), &[0.0, 1.0]);
        assert!(matches!(mle_marginals([(0, 0)], 2, 2), Err(Error::Domain(_))));

        let mut s = SufficientStats::new(2, 2);
        for (a, z) in [(0, 0), (0, 0), (0, 1), (1, 1)] {
            s.update(a, z, 0.0).unwrap();
        }
        assert_eq!(s.mle_marginals().unwrap(), m);
    }
}
