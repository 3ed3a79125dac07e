//! Causal DAGs over action nodes `A`, context nodes `Z` and a reward leaf `Y`.
//!
//! Provides d-separation (reachability over `(node, direction)` states),
//! mutilation (removing edges into `A`), the front-door criterion, a decision
//! procedure for the conditionally benign property of a discrete environment,
//! and interventional environments from binary CPTs.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

use crate::environment::{Environment, RewardLaw};
use crate::error::{Error, Result};

/// Tolerance when comparing reward-law parameters across actions.
pub const LAW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Action,
    Context,
    Reward,
    Latent,
    Other,
}

/// A finite DAG with role-tagged nodes.
///
/// Construction checks acyclicity, that there is exactly one reward node and
/// it is a leaf, at least one action node, and no edge from a context node
/// into an action node.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    names: Vec<String>,
    roles: Vec<Role>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new(names: Vec<String>, roles: Vec<Role>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = names.len();
        if roles.len() != n {
            return Err(Error::Graph("one role per node required".into()));
        }
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(Error::Cycle {
                    from: names[u].clone(),
                    to: names[v].clone(),
                });
            }
            if !children[u].contains(&v) {
                children[u].push(v);
                parents[v].push(u);
            }
        }
        let dag = Self {
            names,
            roles,
            parents,
            children,
        };
        dag.check_acyclic()?;
        dag.check_roles()?;
        Ok(dag)
    }

    /// Parses the line format: `src -> dst` edges and `@action`, `@context`,
    /// `@reward`, `@latent` declarations. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut names = Vec::new();
        let mut roles: Vec<Role> = Vec::new();
        let mut edges = Vec::new();
        let mut intern = |name: &str, names: &mut Vec<String>, roles: &mut Vec<Role>| -> usize {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                roles.push(Role::Other);
                names.len() - 1
            })
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('@') {
                let mut parts = rest.split_whitespace();
                let role = match parts.next() {
                    Some("action") => Role::Action,
                    Some("context") => Role::Context,
                    Some("reward") => Role::Reward,
                    Some("latent") => Role::Latent,
                    other => {
                        return Err(Error::Graph(format!(
                            "line {}: unknown role declaration {other:?}",
                            lineno + 1
                        )))
                    }
                };
                let mut any = false;
                for name in parts {
                    any = true;
                    let id = intern(name, &mut names, &mut roles);
                    if roles[id] != Role::Other && roles[id] != role {
                        return Err(Error::Graph(format!(
                            "line {}: node {name} already has role {:?}",
                            lineno + 1,
                            roles[id]
                        )));
                    }
                    roles[id] = role;
                }
                if !any {
                    return Err(Error::Graph(format!("line {}: role without nodes", lineno + 1)));
                }
                continue;
            }
            let (src, dst) = line.split_once("->").ok_or_else(|| {
                Error::Graph(format!("line {}: expected `src -> dst`", lineno + 1))
            })?;
            let (src, dst) = (src.trim(), dst.trim());
            if src.is_empty() || dst.is_empty() || src.contains(char::is_whitespace) || dst.contains(char::is_whitespace) {
                return Err(Error::Graph(format!("line {}: malformed edge", lineno + 1)));
            }
            let u = intern(src, &mut names, &mut roles);
            let v = intern(dst, &mut names, &mut roles);
            edges.push((u, v));
        }
        Dag::new(names, roles, &edges)
    }

    fn check_acyclic(&self) -> Result<()> {
        // colour-marking DFS; the first back edge names the cycle
        let n = self.len();
        let mut colour = vec![0u8; n];
        for root in 0..n {
            if colour[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            colour[root] = 1;
            while let Some(&mut (u, ref mut next)) = stack.last_mut() {
                if let Some(&v) = self.children[u].get(*next) {
                    *next += 1;
                    match colour[v] {
                        0 => {
                            colour[v] = 1;
                            stack.push((v, 0));
                        }
                        1 => {
                            return Err(Error::Cycle {
                                from: self.names[u].clone(),
                                to: self.names[v].clone(),
                            })
                        }
                        _ => {}
                    }
                } else {
                    colour[u] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    fn check_roles(&self) -> Result<()> {
        let rewards = self.nodes_with(Role::Reward);
        if rewards.len() != 1 {
            return Err(Error::Graph(format!(
                "exactly one reward node required, found {}",
                rewards.len()
            )));
        }
        if !self.children[rewards[0]].is_empty() {
            return Err(Error::Graph(format!(
                "reward node {} must be a leaf",
                self.names[rewards[0]]
            )));
        }
        if self.nodes_with(Role::Action).is_empty() {
            return Err(Error::Graph("at least one action node required".into()));
        }
        for a in self.nodes_with(Role::Action) {
            if let Some(&z) = self.parents[a].iter().find(|&&p| self.roles[p] == Role::Context) {
                return Err(Error::Graph(format!(
                    "context node {} is a parent of action node {}",
                    self.names[z], self.names[a]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn role(&self, v: usize) -> Role {
        self.roles[v]
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|u| self.children[u].iter().map(move |&v| (u, v)))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn nodes_with(&self, role: Role) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.roles[v] == role).collect()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.nodes_with(Role::Action)
    }

    pub fn contexts(&self) -> Vec<usize> {
        self.nodes_with(Role::Context)
    }

    pub fn reward(&self) -> usize {
        self.nodes_with(Role::Reward)[0]
    }

    /// Nodes in a topological order.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &self.children[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
        order
    }

    fn without_edges(&self, drop: impl Fn(usize, usize) -> bool) -> Dag {
        let mut parents = vec![Vec::new(); self.len()];
        let mut children = vec![Vec::new(); self.len()];
        for (u, v) in self.edges() {
            if !drop(u, v) {
                children[u].push(v);
                parents[v].push(u);
            }
        }
        Dag {
            names: self.names.clone(),
            roles: self.roles.clone(),
            parents,
            children,
        }
    }

    /// The graph with every edge into an action node removed.
    pub fn mutilate(&self) -> Dag {
        self.without_edges(|_, v| self.roles[v] == Role::Action)
    }

    /// Nodes in `seeds` and all their ancestors.
    pub fn ancestors_mask(&self, seeds: &[usize]) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        let mut stack: Vec<usize> = seeds.to_vec();
        while let Some(v) = stack.pop() {
            if !mask[v] {
                mask[v] = true;
                stack.extend_from_slice(&self.parents[v]);
            }
        }
        mask
    }

    /// True iff every path between `src` and `dst` is blocked by `sep`.
    pub fn d_separates(&self, sep: &[usize], src: &[usize], dst: &[usize]) -> Result<bool> {
        let n = self.len();
        let mut member = vec![0u8; n];
        for (bit, set) in [(1u8, sep), (2, src), (4, dst)] {
            for &v in set {
                if v >= n {
                    return Err(Error::domain(format!("node {v} out of range")));
                }
                if member[v] & !bit != 0 {
                    return Err(Error::domain(format!(
                        "node {} appears in more than one set",
                        self.names[v]
                    )));
                }
                member[v] |= bit;
            }
        }
        let in_sep: Vec<bool> = member.iter().map(|m| m & 1 != 0).collect();
        let sep_ancestors = self.ancestors_mask(sep);

        // direction: 0 = arrived from a child (moving up), 1 = arrived from a parent
        let mut visited = vec![[false; 2]; n];
        let mut queue: VecDeque<(usize, usize)> = src.iter().map(|&x| (x, 0)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if member[v] & 4 != 0 {
                return Ok(false);
            }
            if dir == 0 {
                if !in_sep[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, 0)));
                    queue.extend(self.children[v].iter().map(|&c| (c, 1)));
                }
            } else {
                if !in_sep[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, 1)));
                }
                if sep_ancestors[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, 0)));
                }
            }
        }
        Ok(true)
    }

    /// Whether some directed path from `src` reaches `dst` without entering `avoid`.
    fn directed_path_avoiding(&self, src: &[usize], dst: usize, avoid: &[usize]) -> bool {
        let mut seen = vec![false; self.len()];
        for &a in avoid {
            seen[a] = true;
        }
        let mut stack: Vec<usize> = src.iter().copied().filter(|&s| !avoid.contains(&s)).collect();
        while let Some(u) = stack.pop() {
            if u == dst {
                return true;
            }
            for &c in &self.children[u] {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        false
    }

    /// Front-door criterion for `Z` relative to `(A, Y)`:
    /// every directed `A → Y` path meets `Z`, there is no unblocked back-door
    /// path from `A` to `Z`, and `A` blocks every back-door path from `Z` to `Y`.
    pub fn front_door(&self) -> bool {
        let a = self.actions();
        let z = self.contexts();
        let y = self.reward();
        if self.directed_path_avoiding(&a, y, &z) {
            return false;
        }
        if z.is_empty() {
            return true;
        }
        // back-door paths leave through an incoming edge: drop outgoing edges of the source set
        let no_a_out = self.without_edges(|u, _| self.roles[u] == Role::Action);
        if !no_a_out.d_separates(&[], &a, &z).expect("disjoint roles") {
            return false;
        }
        let no_z_out = self.without_edges(|u, _| self.roles[u] == Role::Context);
        no_z_out.d_separates(&a, &z, &[y]).expect("disjoint roles")
    }

    /// `Z` d-separates `A` from `Y` on this graph.
    pub fn context_separates(&self) -> bool {
        self.d_separates(&self.contexts(), &self.actions(), &[self.reward()])
            .expect("role sets are disjoint")
    }

    /// Machine check of "front door implies d-separation on the mutilated
    /// graph"; true for every graph when the procedures are correct.
    pub fn front_door_implies_dsep_check(&self) -> bool {
        !self.front_door() || self.mutilate().context_separates()
    }
}

/// Verdicts printed by the graph checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphReport {
    pub dsep: bool,
    pub dsep_mutilated: bool,
    pub front_door: bool,
}

impl GraphReport {
    pub fn of(g: &Dag) -> Self {
        Self {
            dsep: g.context_separates(),
            dsep_mutilated: g.mutilate().context_separates(),
            front_door: g.front_door(),
        }
    }
}

impl std::fmt::Display for GraphReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "dsep:G={} dsep:mutilated={} frontdoor={}",
            self.dsep, self.dsep_mutilated, self.front_door
        )
    }
}

/// Decides whether a discrete environment is conditionally benign: at every
/// context, all actions that reach it with positive probability carry the
/// same reward law. `include_null` only records whether the environment
/// models the observational (null) intervention; the check is the same.
pub fn is_conditionally_benign(env: &Environment, include_null: bool) -> bool {
    let _ = include_null;
    let m = env.marginals();
    (0..env.num_contexts()).all(|z| {
        let mut laws = (0..env.num_actions())
            .filter(|&a| m.get(a, z) > 0.0)
            .map(|a| env.reward_law(a, z));
        match laws.next() {
            None => true,
            Some(first) => laws.all(|l| l.approx_eq(first, LAW_TOL)),
        }
    })
}

/// Conditional probability tables for binary nodes.
///
/// `p_one[v][k]` is `P(v = 1 | parents = k)`, where bit `i` of `k` is the
/// value of `dag.parents(v)[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCpt {
    pub p_one: Vec<Vec<f64>>,
}

impl BinaryCpt {
    /// Uniform draws in `[0.05, 0.95]`, keeping every marginal strictly positive.
    pub fn random<R: Rng + ?Sized>(dag: &Dag, rng: &mut R) -> Self {
        let p_one = (0..dag.len())
            .map(|v| {
                (0..1usize << dag.parents(v).len())
                    .map(|_| rng.random_range(0.05..=0.95))
                    .collect()
            })
            .collect();
        Self { p_one }
    }

    fn prob(&self, dag: &Dag, v: usize, assignment: u64) -> f64 {
        let key = dag
            .parents(v)
            .iter()
            .enumerate()
            .fold(0usize, |k, (i, &p)| k | (((assignment >> p) & 1) as usize) << i);
        let p1 = self.p_one[v][key];
        if (assignment >> v) & 1 == 1 {
            p1
        } else {
            1.0 - p1
        }
    }
}

fn bits_label(dag: &Dag, nodes: &[usize], value: usize) -> String {
    nodes
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{}={}", dag.name(v), (value >> i) & 1))
        .collect::<Vec<_>>()
        .join(",")
}

/// The environment induced by `do(A = a)` for every joint value `a` of the
/// action nodes (plus the observational distribution when `include_null`),
/// with contexts the joint values of `Z` and the binary reward `Y`.
pub fn interventional_environment(dag: &Dag, cpt: &BinaryCpt, include_null: bool) -> Result<Environment> {
    let n = dag.len();
    if n > 20 {
        return Err(Error::Graph("binary enumeration limited to 20 nodes".into()));
    }
    if cpt.p_one.len() != n || (0..n).any(|v| cpt.p_one[v].len() != 1 << dag.parents(v).len()) {
        return Err(Error::Graph("CPT shape does not match the graph".into()));
    }
    let a_nodes = dag.actions();
    let z_nodes = dag.contexts();
    let y = dag.reward();
    let n_z = 1usize << z_nodes.len();

    let mut interventions: Vec<Option<usize>> = (0..1usize << a_nodes.len()).map(Some).collect();
    if include_null {
        interventions.push(None);
    }
    let mut labels = Vec::new();
    let mut marginal = Vec::new();
    let mut reward = Vec::new();
    for intervention in &interventions {
        labels.push(match intervention {
            Some(v) => format!("do({})", bits_label(dag, &a_nodes, *v)),
            None => "null".to_string(),
        });
        let mut pz = vec![0.0; n_z];
        let mut py1 = vec![0.0; n_z];
        for assignment in 0u64..(1u64 << n) {
            if let Some(v) = intervention {
                let consistent = a_nodes
                    .iter()
                    .enumerate()
                    .all(|(i, &node)| (assignment >> node) & 1 == ((*v >> i) & 1) as u64);
                if !consistent {
                    continue;
                }
            }
            let weight: f64 = (0..n)
                .filter(|&v| intervention.is_none() || dag.role(v) != Role::Action)
                .map(|v| cpt.prob(dag, v, assignment))
                .product();
            let z_value = z_nodes
                .iter()
                .enumerate()
                .fold(0usize, |k, (i, &node)| k | (((assignment >> node) & 1) as usize) << i);
            pz[z_value] += weight;
            if (assignment >> y) & 1 == 1 {
                py1[z_value] += weight;
            }
        }
        let total: f64 = pz.iter().sum();
        reward.push(
            pz.iter()
                .zip(&py1)
                .map(|(&p, &q)| RewardLaw::Bernoulli {
                    mean: if p > 0.0 { (q / p).clamp(0.0, 1.0) } else { 0.5 },
                })
                .collect(),
        );
        marginal.push(pz.iter().map(|p| p / total).collect());
    }
    let contexts = (0..n_z).map(|v| bits_label(dag, &z_nodes, v)).collect();
    Environment::new(labels, contexts, marginal, reward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{default_worstcase_env, make_benign_env};

    const FIG_A: &str = "@action A\n@context Z\n@reward Y\nA -> Z\nZ -> Y\n";
    const FIG_C: &str = "@action A\n@context Z\n@reward Y\n@latent U\nA -> Z\nZ -> Y\nU -> A\nU -> Y\n";

    #[test]
    fn parse_and_roles() {
        let g = Dag::parse(FIG_C).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.num_edges(), 4);
        assert_eq!(g.role(g.node("U").unwrap()), Role::Latent);
        assert_eq!(g.name(g.reward()), "Y");
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            Dag::parse("@action A\n@reward Y\nA -> A\n"),
            Err(Error::Cycle { .. })
        ));
        let err = Dag::parse("@action A\n@reward Y\n@context Z\nA -> Z\nZ -> W\nW -> A\nZ -> Y\n");
        assert!(matches!(err, Err(Error::Cycle { .. })), "{err:?}");
        assert!(Dag::parse("@action A\n@reward Y\nY -> A\n").is_err(), "Y not a leaf");
        assert!(Dag::parse("@action A\n@context Z\n@reward Y\nZ -> A\nA -> Y\n").is_err());
        assert!(Dag::parse("@action A\nA -> Z\n").is_err(), "no reward");
        assert!(Dag::parse("A => Z\n").is_err());
        assert!(Dag::parse("@action A\n@context A\n@reward Y\n").is_err());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let g = Dag::parse(FIG_A).unwrap();
        let (a, z) = (g.node("A").unwrap(), g.node("Z").unwrap());
        assert!(matches!(g.d_separates(&[z], &[a], &[a]), Err(Error::Domain(_))));
    }

    #[test]
    fn mutilation_drops_edges_into_actions() {
        let g = Dag::parse(FIG_C).unwrap();
        let m = g.mutilate();
        assert_eq!(m.num_edges(), g.num_edges() - 1);
        assert!(m.parents(m.node("A").unwrap()).is_empty());
        assert_eq!(m.mutilate(), m);
        let a = Dag::parse(FIG_A).unwrap();
        assert_eq!(a.mutilate(), a);
        // the original is untouched
        assert_eq!(g.parents(g.node("A").unwrap()).len(), 1);
    }

    #[test]
    fn benign_check_on_generated_envs() {
        assert!(is_conditionally_benign(&make_benign_env(5, 1000, 0.0005).unwrap(), true));
        assert!(!is_conditionally_benign(&default_worstcase_env(2, 2).unwrap(), true));
        let disjoint = Environment::new(
            vec!["1".into(), "2".into()],
            vec!["0".into(), "1".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![
                vec![RewardLaw::Bernoulli { mean: 0.9 }, RewardLaw::PointMass { value: 0.0 }],
                vec![RewardLaw::Bernoulli { mean: 0.1 }, RewardLaw::Bernoulli { mean: 0.2 }],
            ],
        )
        .unwrap();
        assert!(is_conditionally_benign(&disjoint, false));
    }

    #[test]
    fn interventional_env_shape() {
        let g = Dag::parse(FIG_C).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let cpt = BinaryCpt::random(&g, &mut rng);
        let with_null = interventional_environment(&g, &cpt, true).unwrap();
        assert_eq!(with_null.num_actions(), 3);
        assert_eq!(with_null.actions()[2], "null");
        assert_eq!(with_null.num_contexts(), 2);
        let without = interventional_environment(&g, &cpt, false).unwrap();
        assert_eq!(without.actions(), &["do(A=0)", "do(A=1)"]);
    }

    use rand::SeedableRng;
}
