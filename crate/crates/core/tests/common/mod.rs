//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use causal_bandits::causal_graph::{Dag, GraphReport, Role};
use causal_bandits::environment::{Environment, MarginalTable, RewardLaw};
use causal_bandits::harness::trace;
use causal_bandits::stats::{hoeffding_radius, mle_marginals, tv_unhalved, SufficientStats};
use causal_bandits::PolicySpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Hand-traced five-round fixtures
// ---------------------------------------------------------------------------

pub struct TraceFixture {
    pub name: &'static str,
    pub policy: PolicySpec,
    pub env: Environment,
    pub prior: Vec<Vec<f64>>,
    pub expected_actions: Vec<usize>,
}

/// Action 0 always lands in context 0 with reward `y0`, action 1 in
/// context 1 with reward `y1`.
pub fn deterministic_env(y0: f64, y1: f64) -> Environment {
    Environment::new(
        vec!["a0".into(), "a1".into()],
        vec!["z0".into(), "z1".into()],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![
            vec![RewardLaw::PointMass { value: y0 }, RewardLaw::PointMass { value: y0 }],
            vec![RewardLaw::PointMass { value: y1 }, RewardLaw::PointMass { value: y1 }],
        ],
    )
    .unwrap()
}

/// With `δ = 2/25` the radius is `r(n) = sqrt(ln 25 / (2n))`:
/// `r(1) = 1.26864`, `r(2) = 0.89706`, `r(3) = 0.73245`, `r(4) = 0.63432`.
/// Unplayed arms and unseen contexts read as mean 0 with count 1.
pub fn trace_fixtures() -> Vec<TraceFixture> {
    vec![
        // t1 tie -> a0 (0.4). t2 1.669 vs 1.269 -> a0. t3 1.297 vs 1.269 -> a0.
        // t4 1.132 vs 1.269 -> a1 (0.6). t5 1.132 vs 1.869 -> a1.
        TraceFixture {
            name: "ucb 0.4/0.6",
            policy: PolicySpec::Ucb,
            env: deterministic_env(0.4, 0.6),
            prior: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            expected_actions: vec![0, 0, 0, 1, 1],
        },
        // t1 tie -> a0 (0). t2 a0 and a1 both r(1), tie -> a0. t3 r(2) vs r(1) -> a1 (1).
        // t4 0.897 vs 2.269 -> a1. t5 0.897 vs 1.897 -> a1.
        TraceFixture {
            name: "ucb 0/1",
            policy: PolicySpec::Ucb,
            env: deterministic_env(0.0, 1.0),
            prior: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            expected_actions: vec![0, 0, 1, 1, 1],
        },
        // Prior claims both actions land in z0, so both pseudo-UCBs equal
        // U(z0) every round and the tie always goes to a0.
        TraceFixture {
            name: "cucb wrong prior",
            policy: PolicySpec::CausalUcb,
            env: deterministic_env(0.0, 1.0),
            prior: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            expected_actions: vec![0, 0, 0, 0, 0],
        },
        // Prior a0 = (1/2, 1/2), a1 = (0, 1).
        // t1 both r(1) -> a0 (z0, 0). t2 U(z0) = U(z1) = r(1), tie -> a0.
        // t3 U(z0) = r(2): a0 (0.897+1.269)/2 = 1.083, a1 1.269 -> a1 (z1, 1).
        // t4 U(z1) = 2.269 -> a1. t5 U(z1) = 1.897, a0 1.397 -> a1.
        TraceFixture {
            name: "cucb mixed prior",
            policy: PolicySpec::CausalUcb,
            env: deterministic_env(0.0, 1.0),
            prior: vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            expected_actions: vec![0, 0, 1, 1, 1],
        },
        // ceil(4 sqrt(5) / 2) = 5 rounds per arm, longer than the horizon:
        // the whole run is first-phase round-robin.
        TraceFixture {
            name: "hacucb explore",
            policy: PolicySpec::HacUcb,
            env: deterministic_env(0.0, 1.0),
            prior: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            expected_actions: vec![0, 1, 0, 1, 0],
        },
    ]
}

pub fn run_fixture(f: &TraceFixture) -> Vec<usize> {
    let prior = MarginalTable::new(f.prior.clone()).unwrap();
    let mut policy = f
        .policy
        .build(f.env.actions(), &prior, 5, Some(2.0 / 25.0))
        .unwrap();
    trace(&f.env, policy.as_mut(), 5, 0)
        .unwrap()
        .iter()
        .map(|r| r.action)
        .collect()
}

// ---------------------------------------------------------------------------
// Graphs
// ---------------------------------------------------------------------------

pub const GRAPH_A: &str = "@action A\n@context Z\n@reward Y\nA -> Z\nZ -> Y\n";
pub const GRAPH_B: &str = "@action A\n@context Z\n@reward Y\nA -> Z\nZ -> Y\nA -> Y\n";
pub const GRAPH_C: &str =
    "@action A\n@context Z\n@reward Y\n@latent U\nA -> Z\nZ -> Y\nU -> A\nU -> Y\n";
pub const GRAPH_D: &str =
    "@action A\n@context Z\n@reward Y\n@latent U\nA -> Z\nZ -> Y\nU -> Z\nU -> Y\n";

fn report(dsep: bool, dsep_mutilated: bool, front_door: bool) -> GraphReport {
    GraphReport {
        dsep,
        dsep_mutilated,
        front_door,
    }
}

pub fn reference_graphs() -> Vec<(&'static str, &'static str, GraphReport)> {
    vec![
        ("a", GRAPH_A, report(true, true, true)),
        ("b", GRAPH_B, report(false, false, false)),
        ("c", GRAPH_C, report(false, true, true)),
        ("d", GRAPH_D, report(false, false, false)),
    ]
}

/// The DAG on nodes `0..n` whose edges `i -> j` (`i < j`) are the set bits
/// of `mask` in row-major order. Node 0 is the action, node `n-1` the reward.
pub fn dag_from_mask(n: usize, mask: u64) -> Dag {
    let mut edges = Vec::new();
    let mut bit = 0;
    for i in 0..n {
        for j in i + 1..n {
            if mask >> bit & 1 == 1 {
                edges.push((i, j));
            }
            bit += 1;
        }
    }
    let names = (0..n).map(|i| format!("v{i}")).collect();
    let mut roles = vec![Role::Other; n];
    roles[0] = Role::Action;
    roles[n - 1] = Role::Reward;
    Dag::new(names, roles, &edges).unwrap()
}

/// Path-enumeration d-separation of single nodes `x` and `y` given the set
/// `sep` (bitmask): every simple path in the skeleton must contain a
/// non-collider in `sep` or a collider with no descendant-or-self in `sep`.
pub fn dsep_by_paths(g: &Dag, x: usize, y: usize, sep: u32) -> bool {
    let n = g.len();
    let mut desc = vec![0u32; n];
    for v in g.topological_order().into_iter().rev() {
        desc[v] = 1 << v;
        for &c in g.children(v) {
            desc[v] |= desc[c];
        }
    }
    let is_edge = |u: usize, v: usize| g.children(u).contains(&v);
    let mut path = vec![x];
    fn walk(
        n: usize,
        y: usize,
        sep: u32,
        desc: &[u32],
        is_edge: &dyn Fn(usize, usize) -> bool,
        path: &mut Vec<usize>,
    ) -> bool {
        let here = *path.last().unwrap();
        if here == y {
            // open path found if no interior node blocks it
            return (1..path.len() - 1).all(|i| {
                let (p, v, q) = (path[i - 1], path[i], path[i + 1]);
                let collider = is_edge(p, v) && is_edge(q, v);
                if collider {
                    desc[v] & sep != 0
                } else {
                    sep >> v & 1 == 0
                }
            });
        }
        for next in 0..n {
            if (is_edge(here, next) || is_edge(next, here)) && !path.contains(&next) {
                path.push(next);
                let open = walk(n, y, sep, desc, is_edge, path);
                path.pop();
                if open {
                    return true;
                }
            }
        }
        false
    }
    !walk(n, y, sep, &desc, &is_edge, &mut path)
}

/// Compares `d_separates` with path enumeration for every DAG on
/// `2..=max_nodes` nodes consistent with the node order (every DAG up to
/// relabelling), every node pair and every conditioning set.
/// Returns `(queries, disagreements)`.
pub fn exhaustive_dsep_agreement(max_nodes: usize) -> (u64, u64) {
    let mut queries = 0;
    let mut bad = 0;
    for n in 2..=max_nodes {
        let pairs = n * (n - 1) / 2;
        for mask in 0..1u64 << pairs {
            let g = dag_from_mask(n, mask);
            for x in 0..n {
                for y in x + 1..n {
                    let others: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
                    for pick in 0..1u32 << others.len() {
                        let sep: Vec<usize> = others
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| pick >> i & 1 == 1)
                            .map(|(_, &v)| v)
                            .collect();
                        let bits = sep.iter().fold(0u32, |b, &v| b | 1 << v);
                        let fast = g.d_separates(&sep, &[x], &[y]).unwrap();
                        queries += 1;
                        if fast != dsep_by_paths(&g, x, y, bits) {
                            bad += 1;
                        }
                    }
                }
            }
        }
    }
    (queries, bad)
}

/// A random role-tagged DAG on 3 to 8 nodes. Edges follow node order; the
/// last node is the reward, one or two action nodes and up to two context
/// nodes are drawn from the rest. Edges from contexts into actions are
/// dropped, and with probability 1/2 action -> context -> reward edges are
/// added where the order allows.
pub fn random_dag<R: Rng>(rng: &mut R) -> Dag {
    let n = rng.random_range(3..=8usize);
    let y = n - 1;
    let mut roles = vec![Role::Other; n];
    roles[y] = Role::Reward;
    let mut pool: Vec<usize> = (0..y).collect();
    let take = |rng: &mut R, pool: &mut Vec<usize>| pool.swap_remove(rng.random_range(0..pool.len()));
    let n_a = if pool.len() > 1 { rng.random_range(1..=2) } else { 1 };
    for _ in 0..n_a {
        let v = take(rng, &mut pool);
        roles[v] = Role::Action;
    }
    let n_z = rng.random_range(0..=pool.len().min(2));
    for _ in 0..n_z {
        let v = take(rng, &mut pool);
        roles[v] = Role::Context;
    }
    for v in pool {
        if rng.random_bool(0.5) {
            roles[v] = Role::Latent;
        }
    }
    let density = rng.random_range(0.15..0.6);
    let chain = rng.random_bool(0.5);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if roles[i] == Role::Context && roles[j] == Role::Action {
                continue;
            }
            let forced = chain
                && ((roles[i] == Role::Action && roles[j] == Role::Context)
                    || (roles[i] == Role::Context && roles[j] == Role::Reward));
            if forced || rng.random_bool(density) {
                edges.push((i, j));
            }
        }
    }
    let names = (0..n).map(|i| format!("v{i}")).collect();
    Dag::new(names, roles, &edges).unwrap()
}

/// Number of random DAGs on which "front door implies `Z` d-separates `A`
/// from `Y` after mutilation" fails.
pub fn random_front_door_failures(count: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .filter(|_| !random_dag(&mut rng).front_door_implies_dsep_check())
        .count()
}

// ---------------------------------------------------------------------------
// Statistical suites
// ---------------------------------------------------------------------------

/// Largest violation margin of `Σ_{s=t}^{t'} 1/sqrt(1 ∨ T_{s-1}(A_s)) <= sqrt(8|A|(t'-t))`
/// over all `1 <= t < t' <= T` of one trajectory; positive means violated.
pub fn count_inequality_excess(actions: &[usize], num_actions: usize) -> f64 {
    let mut counts = vec![0u64; num_actions];
    let terms: Vec<f64> = actions
        .iter()
        .map(|&a| {
            let c = counts[a].max(1) as f64;
            counts[a] += 1;
            1.0 / c.sqrt()
        })
        .collect();
    let mut prefix = vec![0.0];
    for x in &terms {
        prefix.push(prefix.last().unwrap() + x);
    }
    let horizon = actions.len();
    let mut worst = f64::NEG_INFINITY;
    for t in 1..=horizon {
        for t2 in t + 1..=horizon {
            let lhs = prefix[t2] - prefix[t - 1];
            let rhs = (8.0 * num_actions as f64 * (t2 - t) as f64).sqrt();
            worst = worst.max(lhs - rhs);
        }
    }
    worst
}

/// Random trajectories mixing uniform play, long runs of one action and
/// round-robin segments.
pub fn random_trajectory<R: Rng>(rng: &mut R) -> (Vec<usize>, usize) {
    let num_actions = rng.random_range(1..=8usize);
    let horizon = rng.random_range(2..=250usize);
    let mut actions = Vec::with_capacity(horizon);
    while actions.len() < horizon {
        let len = rng.random_range(1..=40usize).min(horizon - actions.len());
        match rng.random_range(0..3) {
            0 => actions.extend((0..len).map(|_| rng.random_range(0..num_actions))),
            1 => {
                let a = rng.random_range(0..num_actions);
                actions.extend(std::iter::repeat_n(a, len));
            }
            _ => {
                let start = rng.random_range(0..num_actions);
                actions.extend((0..len).map(|i| (start + i) % num_actions));
            }
        }
    }
    (actions, num_actions)
}

pub fn count_inequality_violations(count: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .filter(|_| {
            let (actions, n_a) = random_trajectory(&mut rng);
            count_inequality_excess(&actions, n_a) > 0.0
        })
        .count()
}

/// Fractions of runs where some `(t, a)` (resp. `(t, z)`) has an empirical
/// mean outside the Hoeffding radius at `δ = 2/T²`. Environments are random
/// benign ones (shared reward law per context) so context means are defined;
/// actions are uniform.
pub fn hoeffding_failure_rates(horizon: usize, num_actions: usize, runs: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = 2.0 / (horizon as f64).powi(2);
    let n_z = 3;
    let (mut action_fail, mut context_fail) = (0, 0);
    for _ in 0..runs {
        let context_means: Vec<f64> = (0..n_z).map(|_| rng.random_range(0.05..0.95)).collect();
        let rows: Vec<Vec<f64>> = (0..num_actions)
            .map(|_| {
                let w: Vec<f64> = (0..n_z).map(|_| rng.random_range(0.1..1.0)).collect();
                let s: f64 = w.iter().sum();
                let mut row: Vec<f64> = w.iter().map(|x| x / s).collect();
                let head: f64 = row[..n_z - 1].iter().sum();
                row[n_z - 1] = 1.0 - head;
                row
            })
            .collect();
        let laws: Vec<RewardLaw> = context_means.iter().map(|&m| RewardLaw::Bernoulli { mean: m }).collect();
        let env = Environment::new(
            (0..num_actions).map(|a| a.to_string()).collect(),
            (0..n_z).map(|z| z.to_string()).collect(),
            rows,
            vec![laws; num_actions],
        )
        .unwrap();
        let means = env.arm_means();
        let mut s = SufficientStats::new(num_actions, n_z);
        let (mut a_bad, mut z_bad) = (false, false);
        for _ in 0..horizon {
            let a = rng.random_range(0..num_actions);
            let (z, y) = env.sample(a, &mut rng).unwrap();
            s.update(a, z, y).unwrap();
            for (b, mean) in means.iter().enumerate() {
                let n = s.action_count(b);
                if n > 0 && (s.mean_action(b) - mean).abs() > hoeffding_radius(n, delta) {
                    a_bad = true;
                }
            }
            for (c, mean) in context_means.iter().enumerate() {
                let n = s.context_count(c);
                if n > 0 && (s.mean_context(c) - mean).abs() > hoeffding_radius(n, delta) {
                    z_bad = true;
                }
            }
        }
        action_fail += a_bad as usize;
        context_fail += z_bad as usize;
    }
    (action_fail as f64 / runs as f64, context_fail as f64 / runs as f64)
}

/// Sample size `max(|Z|/ε², (2/ε²) ln(2/δ))` for the MLE total-variation bound.
pub fn mle_sample_size(num_contexts: usize, eps: f64, delta: f64) -> usize {
    let a = num_contexts as f64 / (eps * eps);
    let b = 2.0 / (eps * eps) * (2.0 / delta).ln();
    a.max(b).ceil() as usize
}

/// Fraction of trials in which the MLE of a random distribution over
/// `num_contexts` points is more than `eps` away in un-halved total variation.
pub fn mle_tv_failure_rate(num_contexts: usize, eps: f64, delta: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mle_sample_size(num_contexts, eps, delta);
    let mut fails = 0;
    for _ in 0..trials {
        let w: Vec<f64> = (0..num_contexts).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|x| x / total).collect();
        let draws = (0..n).map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut z = num_contexts - 1;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    z = i;
                    break;
                }
            }
            (0, z)
        });
        let mle = mle_marginals(draws.collect::<Vec<_>>(), 1, num_contexts).unwrap();
        if tv_unhalved(&p, mle.row(0)).unwrap() > eps {
            fails += 1;
        }
    }
    fails as f64 / trials as f64
}
