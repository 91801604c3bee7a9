use std::collections::BTreeMap;

use thiserror::Error;

use super::model::CsspModel;

/// Largest transient set solved by dense elimination; larger systems use
/// Gauss-Seidel sweeps.
pub const DIRECT_SOLVE_LIMIT: usize = 500;
/// Sweep cap for iterative evaluation.
pub const MAX_SWEEPS: usize = 1_000_000;
/// Minimum goal-absorption mass of a proper policy.
pub const ABSORPTION_TOLERANCE: f64 = 1e-6;
/// Slack allowed when testing `g_i <= 0`.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("policy is improper: {0}")]
    ImproperPolicy(String),
    #[error("reachable state `{0}` has no assigned action")]
    UnassignedState(String),
    #[error("state `{state}` has no action with index {action}")]
    InvalidAction { state: String, action: usize },
}

/// Deterministic policy: one action index per assigned state. Only states
/// reachable under the policy are meant to be assigned, which makes equality
/// coincide with equality of the induced behaviour.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeterministicPolicy {
    action_of: Vec<Option<usize>>,
}

impl DeterministicPolicy {
    pub fn empty(num_states: usize) -> Self {
        Self {
            action_of: vec![None; num_states],
        }
    }

    pub fn from_pairs(num_states: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut p = Self::empty(num_states);
        for (s, a) in pairs {
            p.set(s, a);
        }
        p
    }

    #[inline]
    pub fn get(&self, s: usize) -> Option<usize> {
        self.action_of.get(s).copied().flatten()
    }

    pub fn set(&mut self, s: usize, a: usize) {
        self.action_of[s] = Some(a);
    }

    pub fn unset(&mut self, s: usize) {
        self.action_of[s] = None;
    }

    /// `(state, action)` pairs in increasing state order.
    pub fn decisions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.action_of
            .iter()
            .enumerate()
            .filter_map(|(s, a)| a.map(|a| (s, a)))
    }

    pub fn len(&self) -> usize {
        self.action_of.iter().filter(|a| a.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_named(&self, model: &CsspModel) -> BTreeMap<String, String> {
        self.decisions()
            .map(|(s, a)| {
                (
                    model.state_name(s).to_string(),
                    model.actions(s)[a].name().to_string(),
                )
            })
            .collect()
    }

    pub fn from_named(model: &CsspModel, named: &BTreeMap<String, String>) -> Result<Self, String> {
        let mut p = Self::empty(model.num_states());
        for (state, action) in named {
            let s = model
                .state_index(state)
                .ok_or_else(|| format!("unknown state `{state}`"))?;
            let a = model
                .action_index(s, action)
                .ok_or_else(|| format!("unknown action `{action}` at `{state}`"))?;
            p.set(s, a);
        }
        Ok(p)
    }

    /// Drops assignments at states the policy never reaches from the model's
    /// initial distribution.
    pub fn restrict_to_reachable(&self, model: &CsspModel) -> Self {
        let mut out = Self::empty(self.action_of.len());
        for s in reachable_under(model, self) {
            if let Some(a) = self.get(s) {
                if !model.is_goal(s) {
                    out.set(s, a);
                }
            }
        }
        out
    }
}

/// Expected primary cost `f`, expected secondary costs `raw_g` and the
/// bound-shifted `g = raw_g - bounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub f: f64,
    pub g: Vec<f64>,
    pub raw_g: Vec<f64>,
}

impl PolicyValue {
    /// `f + lambda . g`, skipping zero multipliers so that infinite bounds
    /// contribute nothing.
    pub fn lagrangian(&self, lambda: &[f64]) -> f64 {
        self.f
            + lambda
                .iter()
                .zip(&self.g)
                .filter(|(l, _)| **l != 0.0)
                .map(|(l, g)| l * g)
                .sum::<f64>()
    }

    pub fn is_feasible(&self) -> bool {
        self.g.iter().all(|&g| g <= FEASIBILITY_TOLERANCE)
    }
}

/// Full evaluation output including the occupancy measure over transient
/// states and the absorption distribution over goals.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub value: PolicyValue,
    pub occupancy: Vec<(usize, f64)>,
    pub termination: Vec<(usize, f64)>,
    pub residual: f64,
}

pub fn evaluate_policy(
    model: &CsspModel,
    policy: &DeterministicPolicy,
) -> Result<PolicyValue, EvalError> {
    evaluate_policy_full(model, policy).map(|e| e.value)
}

/// States reachable from the initial support when following `policy`;
/// unassigned non-goal states are included but not expanded.
pub fn reachable_under(model: &CsspModel, policy: &DeterministicPolicy) -> Vec<usize> {
    let mut seen = vec![false; model.num_states()];
    let mut order = Vec::new();
    for &(s, p) in model.initial() {
        if p > 0.0 && !seen[s] {
            seen[s] = true;
            order.push(s);
        }
    }
    let mut head = 0;
    while head < order.len() {
        let s = order[head];
        head += 1;
        if model.is_goal(s) {
            continue;
        }
        let Some(a) = policy.get(s) else { continue };
        let Some(action) = model.actions(s).get(a) else {
            continue;
        };
        for o in action.outcomes() {
            if o.prob > 0.0 && !seen[o.next] {
                seen[o.next] = true;
                order.push(o.next);
            }
        }
    }
    order
}

/// Exact evaluation through the occupancy measure `x = mu0 + P_pi^T x` over
/// the transient (reachable non-goal) states. Every expected cost and the
/// absorption distribution follow from `x` by linearity.
pub fn evaluate_policy_full(
    model: &CsspModel,
    policy: &DeterministicPolicy,
) -> Result<PolicyEvaluation, EvalError> {
    let reach = reachable_under(model, policy);
    let mut local = vec![usize::MAX; model.num_states()];
    let mut transient = Vec::new();
    for &s in &reach {
        if model.is_goal(s) {
            continue;
        }
        let a = policy
            .get(s)
            .ok_or_else(|| EvalError::UnassignedState(model.state_name(s).to_string()))?;
        if a >= model.actions(s).len() {
            return Err(EvalError::InvalidAction {
                state: model.state_name(s).to_string(),
                action: a,
            });
        }
        local[s] = transient.len();
        transient.push(s);
    }
    let n = transient.len();

    // Every transient state must be able to reach a goal under the policy.
    let mut preds: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut to_goal = vec![false; n];
    for (i, &s) in transient.iter().enumerate() {
        let action = &model.actions(s)[policy.get(s).unwrap()];
        for o in action.outcomes() {
            if o.prob <= 0.0 {
                continue;
            }
            if model.is_goal(o.next) {
                to_goal[i] = true;
            } else {
                preds[local[o.next]].push((i, o.prob));
            }
        }
    }
    let mut can_finish = to_goal.clone();
    let mut queue: Vec<usize> = (0..n).filter(|&i| to_goal[i]).collect();
    while let Some(j) = queue.pop() {
        for &(i, _) in &preds[j] {
            if !can_finish[i] {
                can_finish[i] = true;
                queue.push(i);
            }
        }
    }
    if let Some(i) = (0..n).find(|&i| !can_finish[i]) {
        return Err(EvalError::ImproperPolicy(format!(
            "goal unreachable from `{}`",
            model.state_name(transient[i])
        )));
    }

    let mut mu0 = vec![0.0; n];
    for &(s, p) in model.initial() {
        if local[s] != usize::MAX {
            mu0[local[s]] += p;
        }
    }

    let occupancy = if n <= DIRECT_SOLVE_LIMIT {
        solve_dense(n, &preds, &mu0)
    } else {
        solve_gauss_seidel(n, &preds, &mu0)?
    };

    let mut residual: f64 = 0.0;
    for j in 0..n {
        let mut r = mu0[j];
        for &(i, p) in &preds[j] {
            r += occupancy[i] * p;
        }
        residual = residual.max((r - occupancy[j]).abs());
    }

    let k = model.num_costs();
    let mut totals = vec![0.0; k];
    let mut absorbed: BTreeMap<usize, f64> = BTreeMap::new();
    for &(s, p) in model.initial() {
        if model.is_goal(s) && p > 0.0 {
            *absorbed.entry(s).or_default() += p;
        }
    }
    for (i, &s) in transient.iter().enumerate() {
        let x = occupancy[i];
        let action = &model.actions(s)[policy.get(s).unwrap()];
        for (c, t) in totals.iter_mut().enumerate() {
            *t += x * action.expected_cost(c);
        }
        for o in action.outcomes() {
            if model.is_goal(o.next) && o.prob > 0.0 {
                *absorbed.entry(o.next).or_default() += x * o.prob;
            }
        }
    }
    let mass: f64 = absorbed.values().sum();
    let initial_mass: f64 = model.initial().iter().map(|&(_, p)| p).sum();
    if mass < initial_mass - ABSORPTION_TOLERANCE {
        return Err(EvalError::ImproperPolicy(format!(
            "goal absorption mass {mass} below {initial_mass}"
        )));
    }

    let raw_g: Vec<f64> = totals[1..].to_vec();
    let g = raw_g
        .iter()
        .zip(model.bounds())
        .map(|(r, b)| r - b)
        .collect();
    Ok(PolicyEvaluation {
        value: PolicyValue {
            f: totals[0],
            g,
            raw_g,
        },
        occupancy: transient.iter().copied().zip(occupancy).collect(),
        termination: absorbed.into_iter().collect(),
        residual,
    })
}

/// Dense LU with partial pivoting on `(I - P^T) x = mu0`.
pub(crate) fn solve_dense(n: usize, preds: &[Vec<(usize, f64)>], mu0: &[f64]) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for j in 0..n {
        a[j * n + j] = 1.0;
        for &(i, p) in &preds[j] {
            a[j * n + i] -= p;
        }
    }
    let mut b = mu0.to_vec();
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r * n + c] * x[c];
        }
        x[r] = acc / a[r * n + r];
    }
    x
}

fn solve_gauss_seidel(
    n: usize,
    preds: &[Vec<(usize, f64)>],
    mu0: &[f64],
) -> Result<Vec<f64>, EvalError> {
    let mut x = mu0.to_vec();
    let self_prob: Vec<f64> = (0..n)
        .map(|j| {
            preds[j]
                .iter()
                .filter(|&&(i, _)| i == j)
                .map(|&(_, p)| p)
                .sum()
        })
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for j in 0..n {
            let mut acc = mu0[j];
            for &(i, p) in &preds[j] {
                if i != j {
                    acc += x[i] * p;
                }
            }
            let v = acc / (1.0 - self_prob[j]);
            delta = delta.max((v - x[j]).abs());
            scale = scale.max(v);
            x[j] = v;
        }
        if delta <= 1e-13 * scale {
            return Ok(x);
        }
    }
    Err(EvalError::ImproperPolicy(
        "occupancy iteration did not contract".to_string(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cssp::{CsspBuilder, Outcome};

    fn ch1() -> CsspModel {
        let mut b = CsspBuilder::new(1);
        let s0 = b.state("s0");
        let s1 = b.goal("s1");
        b.initial(s0, 1.0);
        b.action(s0, "a_fast", vec![Outcome::new(s1, 1.0, vec![1.0, 10.0])]);
        b.action(s0, "a_slow", vec![Outcome::new(s1, 1.0, vec![10.0, 1.0])]);
        b.bounds(vec![5.0]);
        b.build()
    }

    #[test]
    fn ch1_fast_and_slow() {
        let m = ch1();
        let fast = DeterministicPolicy::from_pairs(2, [(0, 0)]);
        let v = evaluate_policy(&m, &fast).unwrap();
        assert_eq!(v.f, 1.0);
        assert_eq!(v.raw_g, vec![10.0]);
        assert_eq!(v.g, vec![5.0]);
        let slow = DeterministicPolicy::from_pairs(2, [(0, 1)]);
        let v = evaluate_policy(&m, &slow).unwrap();
        assert_eq!(v.f, 10.0);
        assert_eq!(v.raw_g, vec![1.0]);
        assert_eq!(v.g, vec![-4.0]);
    }

    #[test]
    fn self_loop_geometric() {
        let mut b = CsspBuilder::new(0);
        let s0 = b.state("s0");
        let s1 = b.goal("s1");
        b.initial(s0, 1.0);
        b.action(
            s0,
            "a",
            vec![
                Outcome::new(s0, 0.5, vec![1.0]),
                Outcome::new(s1, 0.5, vec![1.0]),
            ],
        );
        let m = b.build();
        let e = evaluate_policy_full(&m, &DeterministicPolicy::from_pairs(2, [(0, 0)])).unwrap();
        assert!((e.value.f - 2.0).abs() < 1e-12);
        assert!(e.residual <= 1e-9);
        assert_eq!(e.termination.len(), 1);
        assert!((e.termination[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unassigned_and_improper() {
        let m = ch1();
        assert_eq!(
            evaluate_policy(&m, &DeterministicPolicy::empty(2)),
            Err(EvalError::UnassignedState("s0".into()))
        );

        let mut b = CsspBuilder::new(0);
        let s0 = b.state("s0");
        let g = b.goal("g");
        b.initial(s0, 1.0);
        b.action(s0, "loop", vec![Outcome::new(s0, 1.0, vec![1.0])]);
        b.action(s0, "go", vec![Outcome::new(g, 1.0, vec![1.0])]);
        let m = b.build();
        let looping = DeterministicPolicy::from_pairs(2, [(0, 0)]);
        assert!(matches!(
            evaluate_policy(&m, &looping),
            Err(EvalError::ImproperPolicy(_))
        ));
    }

    #[test]
    fn gauss_seidel_matches_dense_on_long_chain() {
        // chain longer than the dense limit: each state advances w.p. 0.9
        let n = DIRECT_SOLVE_LIMIT + 40;
        let mut b = CsspBuilder::new(1);
        let ids: Vec<usize> = (0..n).map(|i| b.state(format!("s{i}"))).collect();
        let g = b.goal("g");
        b.initial(ids[0], 1.0);
        for i in 0..n {
            let next = if i + 1 < n { ids[i + 1] } else { g };
            b.action(
                ids[i],
                "step",
                vec![
                    Outcome::new(next, 0.9, vec![1.0, 0.5]),
                    Outcome::new(ids[i], 0.1, vec![1.0, 0.0]),
                ],
            );
        }
        b.bounds(vec![f64::INFINITY]);
        let m = b.build();
        let pol = DeterministicPolicy::from_pairs(n + 1, (0..n).map(|i| (i, 0)));
        let e = evaluate_policy_full(&m, &pol).unwrap();
        let expected_steps = n as f64 / 0.9;
        assert!((e.value.f - expected_steps).abs() < 1e-7);
        assert!((e.value.raw_g[0] - 0.5 * n as f64).abs() < 1e-7);
        assert!(e.residual <= 1e-9);
    }
}
