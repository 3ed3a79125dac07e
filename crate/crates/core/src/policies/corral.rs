//! Corral master over a UCB base and a C-UCB base.
//!
//! The master is log-barrier online mirror descent with the stabilised
//! sampling distribution and per-base learning-rate increases. Bases see
//! importance-weighted rewards and use Freedman-style radii scaled by the
//! current bound `ρ` on the importance weights; a base restarts (new epoch)
//! whenever the master raises its `ρ`.

use rand::Rng;

use crate::environment::MarginalTable;
use crate::error::Result;

use super::{first_argmax, Policy, PolicyStatus, Stream};

/// `2|Z| + 6 sqrt(|Z| T ln T) + ln T sqrt(2T)`: the C-UCB regret bound with exact marginals.
pub fn cucb_regret_bound(horizon: usize, num_contexts: usize) -> f64 {
    let t = horizon as f64;
    let z = num_contexts as f64;
    2.0 * z + 6.0 * (z * t * t.ln()).sqrt() + t.ln() * (2.0 * t).sqrt()
}

/// Master learning rate `1 / (40 R(T) ln T)`.
pub fn learning_rate(horizon: usize, num_contexts: usize) -> f64 {
    let t = horizon as f64;
    1.0 / (40.0 * cucb_regret_bound(horizon, num_contexts) * t.ln())
}

/// `sqrt(4 ρ ln t / n) + 4 ρ ln t / (3 n)` with `n` floored at one and `t` at two.
pub fn freedman_radius(rho: f64, t: u64, n: f64) -> f64 {
    let n = n.max(1.0);
    let log_t = (t.max(2) as f64).ln();
    (4.0 * rho * log_t / n).sqrt() + 4.0 * rho * log_t / (3.0 * n)
}

/// One log-barrier OMD step: finds `λ` with `Σ_i 1/(1/q_i + η_i (ℓ_i - λ)) = 1`.
pub fn log_barrier_step(q: &[f64], losses: &[f64], eta: &[f64]) -> Vec<f64> {
    let lo0 = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights = |lambda: f64| -> Vec<f64> {
        q.iter()
            .zip(losses)
            .zip(eta)
            .map(|((&qi, &li), &ei)| 1.0 / (1.0 / qi + ei * (li - lambda)))
            .collect()
    };
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let w = weights(mid);
        if w.iter().any(|&x| x <= 0.0) || w.iter().sum::<f64>() > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut w = weights(lo);
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

#[derive(Debug, Clone)]
pub struct LogBarrierMaster {
    q: Vec<f64>,
    p: Vec<f64>,
    eta: Vec<f64>,
    rho: Vec<f64>,
    gamma: f64,
    beta: f64,
}

impl LogBarrierMaster {
    pub fn new(num_bases: usize, eta: f64, horizon: usize) -> Self {
        let m = num_bases as f64;
        let t = (horizon.max(3)) as f64;
        Self {
            q: vec![1.0 / m; num_bases],
            p: vec![1.0 / m; num_bases],
            eta: vec![eta; num_bases],
            rho: vec![2.0 * m; num_bases],
            gamma: 1.0 / t,
            beta: (1.0 / t.ln()).exp(),
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn sample(&self, rng: &mut Stream) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &pi) in self.p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        self.p.len() - 1
    }

    /// Feeds the loss of the sampled base; returns the bases whose `ρ` grew.
    pub fn update(&mut self, chosen: usize, loss: f64) -> Vec<usize> {
        let mut losses = vec![0.0; self.q.len()];
        losses[chosen] = loss / self.p[chosen];
        self.q = log_barrier_step(&self.q, &losses, &self.eta);
        let m = self.q.len() as f64;
        self.p = self
            .q
            .iter()
            .map(|&qi| (1.0 - self.gamma) * qi + self.gamma / m)
            .collect();
        let mut grown = Vec::new();
        for i in 0..self.p.len() {
            if 1.0 / self.p[i] > self.rho[i] {
                self.rho[i] = 2.0 / self.p[i];
                self.eta[i] *= self.beta;
                grown.push(i);
            }
        }
        grown
    }
}

/// Base learner fed importance-weighted rewards.
#[derive(Debug, Clone)]
enum Base {
    /// Per-action IW reward sums over the rounds the base proposed that action.
    Ucb { count: Vec<f64>, sum: Vec<f64> },
    /// Per-context IW counts and reward sums from rounds the base was followed.
    Causal {
        marginals: MarginalTable,
        count: Vec<f64>,
        sum: Vec<f64>,
    },
}

impl Base {
    fn restart(&mut self) {
        match self {
            Base::Ucb { count, sum } | Base::Causal { count, sum, .. } => {
                count.iter_mut().for_each(|c| *c = 0.0);
                sum.iter_mut().for_each(|s| *s = 0.0);
            }
        }
    }

    fn propose(&self, rho: f64, t: u64) -> usize {
        let index = |count: &[f64], sum: &[f64]| -> Vec<f64> {
            count
                .iter()
                .zip(sum)
                .map(|(&n, &s)| s / n.max(1.0) + freedman_radius(rho, t, n))
                .collect()
        };
        match self {
            Base::Ucb { count, sum } => first_argmax(index(count, sum)),
            Base::Causal {
                marginals,
                count,
                sum,
            } => {
                let u = index(count, sum);
                first_argmax(
                    marginals
                        .rows()
                        .iter()
                        .map(|row| row.iter().zip(&u).map(|(m, x)| m * x).sum::<f64>()),
                )
            }
        }
    }

    fn feed(&mut self, proposed: usize, followed: Option<(usize, f64, f64)>) {
        match self {
            Base::Ucb { count, sum } => {
                count[proposed] += 1.0;
                if let Some((_, y, p)) = followed {
                    sum[proposed] += y / p;
                }
            }
            Base::Causal { count, sum, .. } => {
                if let Some((z, y, p)) = followed {
                    count[z] += 1.0 / p;
                    sum[z] += y / p;
                }
            }
        }
    }
}

pub struct Corral {
    master: LogBarrierMaster,
    bases: Vec<Base>,
    epoch_start: Vec<u64>,
    round: u64,
    pending: Option<(usize, Vec<usize>)>,
    min_probability: Vec<f64>,
}

impl Corral {
    pub fn new(prior: MarginalTable, horizon: usize) -> Self {
        let (n_a, n_z) = (prior.num_actions(), prior.num_contexts());
        let bases = vec![
            Base::Ucb {
                count: vec![0.0; n_a],
                sum: vec![0.0; n_a],
            },
            Base::Causal {
                marginals: prior,
                count: vec![0.0; n_z],
                sum: vec![0.0; n_z],
            },
        ];
        Self {
            master: LogBarrierMaster::new(2, learning_rate(horizon, n_z), horizon),
            epoch_start: vec![0; bases.len()],
            bases,
            round: 0,
            pending: None,
            min_probability: vec![0.5; 2],
        }
    }

    pub fn master(&self) -> &LogBarrierMaster {
        &self.master
    }

    /// Smallest sampling probability each base has had so far.
    pub fn min_probability(&self) -> &[f64] {
        &self.min_probability
    }
}

impl Policy for Corral {
    fn select(&mut self, rng: &mut Stream) -> usize {
        let proposals: Vec<usize> = self
            .bases
            .iter()
            .enumerate()
            .map(|(i, b)| b.propose(self.master.rho()[i], self.round - self.epoch_start[i] + 1))
            .collect();
        let chosen = self.master.sample(rng);
        let action = proposals[chosen];
        self.pending = Some((chosen, proposals));
        action
    }

    fn observe(&mut self, _action: usize, context: usize, reward: f64) -> Result<()> {
        let (chosen, proposals) = self
            .pending
            .take()
            .expect("observe follows select");
        self.round += 1;
        let p = self.master.probabilities()[chosen];
        for (i, base) in self.bases.iter_mut().enumerate() {
            let followed = (i == chosen).then_some((context, reward, p));
            base.feed(proposals[i], followed);
        }
        for i in self.master.update(chosen, 1.0 - reward) {
            self.bases[i].restart();
            self.epoch_start[i] = self.round;
        }
        for (lowest, &p) in self.min_probability.iter_mut().zip(self.master.probabilities()) {
            *lowest = lowest.min(p);
        }
        Ok(())
    }

    fn status(&self) -> PolicyStatus {
        PolicyStatus::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::default_worstcase_env;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn learning_rate_at_5000() {
        // 4 + 6 sqrt(2·5000·ln 5000) + ln(5000) sqrt(10000)
        assert_relative_eq!(cucb_regret_bound(5000, 2), 2_606.773_158_665_082_5, max_relative = 1e-12);
        assert_relative_eq!(learning_rate(5000, 2), 1.126_004_872_720_058e-6, max_relative = 1e-9);
    }

    #[test]
    fn zero_loss_keeps_master_uniform() {
        let mut master = LogBarrierMaster::new(2, 0.1, 1000);
        for t in 0..100 {
            master.update(t % 2, 0.0);
        }
        assert_relative_eq!(master.probabilities()[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(master.probabilities()[1], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn omd_step_is_a_distribution() {
        let q = log_barrier_step(&[0.3, 0.7], &[5.0, 0.0], &[0.05, 0.05]);
        assert_relative_eq!(q.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert!(q[0] < 0.3, "penalised base loses mass: {q:?}");
    }

    #[test]
    fn rho_dominates_inverse_probabilities() {
        let env = default_worstcase_env(2, 2).unwrap();
        let mut policy = Corral::new(env.marginals().clone(), 2000);
        // a large rate so the master actually moves
        policy.master.eta = vec![0.05; 2];
        let mut rng = Stream::seed_from_u64(11);
        let mut env_rng = Stream::seed_from_u64(12);
        for _ in 0..2000 {
            let a = policy.select(&mut rng);
            let (z, y) = env.sample(a, &mut env_rng).unwrap();
            policy.observe(a, z, y).unwrap();
            for (rho, p) in policy.master().rho().iter().zip(policy.min_probability()) {
                assert!(*rho >= 1.0 / p - 1e-9);
            }
        }
    }

    #[test]
    fn freedman_radius_shrinks() {
        assert!(freedman_radius(4.0, 100, 10.0) > freedman_radius(4.0, 100, 1000.0));
        assert!(freedman_radius(8.0, 100, 10.0) > freedman_radius(4.0, 100, 10.0));
    }
}
