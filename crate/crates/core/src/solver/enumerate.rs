use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use crate::cssp::{CsspModel, DeterministicPolicy, PolicyValue};

use super::weighted::{solve_restricted, Heuristic, Restriction, WeightedSolution};
use super::SolveError;

/// A policy produced by [`PolicyEnumerator`] with its Lagrangian value at
/// the enumerator's multipliers.
#[derive(Debug, Clone)]
pub struct Enumerated {
    pub policy: DeterministicPolicy,
    pub lagrangian: f64,
    pub value: PolicyValue,
}

struct Node {
    /// Exact optimum of the subproblem once solved, a lower bound inherited
    /// from the parent before that.
    key: f64,
    solution: Option<WeightedSolution>,
    restriction: Restriction,
    seq: u64,
}

impl Node {
    fn rank(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then_with(|| self.solution.is_some().cmp(&other.solution.is_some()))
            .then_with(|| match (&self.solution, &other.solution) {
                (Some(a), Some(b)) => a.policy.cmp(&b.policy),
                _ => Ordering::Equal,
            })
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other)
    }
}

/// Lazily enumerates distinct proper deterministic policies (restricted to
/// the states they reach) in nondecreasing Lagrangian value.
///
/// The policy space is partitioned by forced and forbidden `(state, action)`
/// pairs. Popping a solved subproblem emits its optimum and replaces it by
/// children that each forbid one decision of that optimum while forcing the
/// decisions before it. Children are solved only when they reach the front
/// of the queue.
pub struct PolicyEnumerator<'a> {
    model: &'a CsspModel,
    lambda: Vec<f64>,
    heuristic: &'a dyn Heuristic,
    heap: BinaryHeap<Reverse<Node>>,
    emitted: HashSet<DeterministicPolicy>,
    seq: u64,
    solves: usize,
}

impl<'a> PolicyEnumerator<'a> {
    pub fn new(model: &'a CsspModel, lambda: &[f64], heuristic: &'a dyn Heuristic) -> Self {
        let mut e = Self {
            model,
            lambda: lambda.to_vec(),
            heuristic,
            heap: BinaryHeap::new(),
            emitted: HashSet::new(),
            seq: 0,
            solves: 0,
        };
        e.push(f64::NEG_INFINITY, None, Restriction::default());
        e
    }

    /// Starts from an already solved root, skipping one solve.
    pub fn with_root(
        model: &'a CsspModel,
        lambda: &[f64],
        heuristic: &'a dyn Heuristic,
        root: WeightedSolution,
    ) -> Self {
        let mut e = Self {
            model,
            lambda: lambda.to_vec(),
            heuristic,
            heap: BinaryHeap::new(),
            emitted: HashSet::new(),
            seq: 0,
            solves: 0,
        };
        e.push(root.value, Some(root), Restriction::default());
        e
    }

    fn push(&mut self, key: f64, solution: Option<WeightedSolution>, restriction: Restriction) {
        self.seq += 1;
        self.heap.push(Reverse(Node {
            key,
            solution,
            restriction,
            seq: self.seq,
        }));
    }

    /// Lower bound on the Lagrangian value of every policy not yet emitted,
    /// or `None` when the space is exhausted.
    pub fn peek_bound(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(n)| n.key)
    }

    /// Number of restricted subproblems solved so far.
    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    fn branch(&mut self, parent: &Restriction, sol: &WeightedSolution) {
        let mut prefix = parent.clone();
        for (s, a) in sol.policy.decisions() {
            if parent.forced(s).is_some() {
                continue;
            }
            let mut child = prefix.clone();
            child.forbid(s, a);
            self.push(sol.value, None, child);
            prefix.force(s, a);
        }
    }
}

impl Iterator for PolicyEnumerator<'_> {
    type Item = Result<Enumerated, SolveError>;

    fn next(&mut self) -> Option<Self::Item> {
        while let Some(Reverse(node)) = self.heap.pop() {
            match node.solution {
                None => {
                    self.solves += 1;
                    match solve_restricted(
                        self.model,
                        &self.lambda,
                        Some(&node.restriction),
                        self.heuristic,
                    ) {
                        Ok(sol) => {
                            let key = sol.value.max(node.key);
                            self.push(key, Some(sol), node.restriction);
                        }
                        Err(SolveError::NoProperPolicy(_)) => {}
                        Err(e) => return Some(Err(e)),
                    }
                }
                Some(sol) => {
                    self.branch(&node.restriction, &sol);
                    if self.emitted.insert(sol.policy.clone()) {
                        return Some(Ok(Enumerated {
                            policy: sol.policy,
                            lagrangian: node.key,
                            value: sol.eval,
                        }));
                    }
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cssp::{CsspBuilder, Outcome};
    use crate::solver::ZeroHeuristic;
    use crate::testing::ch1;

    fn values(model: &CsspModel, lambda: &[f64]) -> Vec<(Option<usize>, f64)> {
        PolicyEnumerator::new(model, lambda, &ZeroHeuristic)
            .map(|e| {
                let e = e.unwrap();
                (e.policy.get(0), e.lagrangian)
            })
            .collect()
    }

    #[test]
    fn ch1_at_dual_optimum() {
        assert_eq!(values(&ch1(), &[1.0]), vec![(Some(0), 6.0), (Some(1), 6.0)]);
    }

    #[test]
    fn ch1_at_zero() {
        assert_eq!(
            values(&ch1(), &[0.0]),
            vec![(Some(0), 1.0), (Some(1), 10.0)]
        );
    }

    #[test]
    fn three_state_instance_enumerates_all_eight() {
        // two actions at each of three states; every combination is proper
        let mut b = CsspBuilder::new(1);
        let s: Vec<usize> = (0..3).map(|i| b.state(format!("s{i}"))).collect();
        let g = b.goal("g");
        b.initial(s[0], 1.0);
        let costs = [
            [1.0, 3.0, 2.0, 0.5],
            [2.0, 1.0, 4.0, 0.0],
            [1.5, 2.0, 0.5, 3.0],
        ];
        for i in 0..3 {
            let next = if i + 1 < 3 { s[i + 1] } else { g };
            let c = costs[i];
            b.action(
                s[i],
                "x",
                vec![
                    Outcome::new(next, 0.8, vec![c[0], c[1]]),
                    Outcome::new(g, 0.2, vec![c[0], c[1]]),
                ],
            );
            b.action(s[i], "y", vec![Outcome::new(next, 1.0, vec![c[2], c[3]])]);
        }
        b.bounds(vec![3.0]);
        let m = b.build();
        let lambda = [0.7];
        let got: Vec<f64> = PolicyEnumerator::new(&m, &lambda, &ZeroHeuristic)
            .map(|e| e.unwrap().lagrangian)
            .collect();
        assert_eq!(got.len(), 8);
        let mut oracle = Vec::new();
        for mask in 0..8usize {
            let p = DeterministicPolicy::from_pairs(4, (0..3).map(|i| (i, (mask >> i) & 1)));
            let v = crate::cssp::evaluate_policy(&m, &p).unwrap();
            oracle.push(v.lagrangian(&lambda));
        }
        oracle.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{got:?} vs {oracle:?}");
        }
        assert!(got.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }

    #[test]
    fn unreachable_decisions_do_not_duplicate() {
        // choosing "exit" at s0 makes s1 unreachable
        let mut b = CsspBuilder::new(0);
        let s0 = b.state("s0");
        let s1 = b.state("s1");
        let g = b.goal("g");
        b.initial(s0, 1.0);
        b.action(s0, "exit", vec![Outcome::new(g, 1.0, vec![5.0])]);
        b.action(s0, "go", vec![Outcome::new(s1, 1.0, vec![1.0])]);
        b.action(s1, "a", vec![Outcome::new(g, 1.0, vec![1.0])]);
        b.action(s1, "b", vec![Outcome::new(g, 1.0, vec![2.0])]);
        let m = b.build();
        let got: Vec<f64> = PolicyEnumerator::new(&m, &[], &ZeroHeuristic)
            .map(|e| e.unwrap().lagrangian)
            .collect();
        assert_eq!(got, vec![2.0, 3.0, 5.0]);
    }
}
