use std::collections::{BTreeMap, BTreeSet};

use crate::cssp::{
    evaluate_policy, reachable_under, solve_dense, CsspBuilder, CsspModel, DeterministicPolicy,
    Outcome, PolicyValue, DIRECT_SOLVE_LIMIT,
};

use super::SolveError;

/// Residual at which value iteration stops, relative to `1 + max |V|`.
pub const VI_TOLERANCE: f64 = 1e-12;
const VI_MAX_SWEEPS: usize = 1_000_000;
const MAX_POLICY_ITERATIONS: usize = 1_000;
/// Relative decrease a policy-iteration step needs before it switches
/// action.
const IMPROVEMENT_TOLERANCE: f64 = 1e-10;

/// Admissible estimate of the scalarized cost-to-go, for forward-search
/// backends. The value-iteration backend starts from the value of a proper
/// policy instead and does not consult it.
pub trait Heuristic: Sync {
    fn estimate(&self, state: usize) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroHeuristic;

impl Heuristic for ZeroHeuristic {
    fn estimate(&self, _state: usize) -> f64 {
        0.0
    }
}

impl<F: Fn(usize) -> f64 + Sync> Heuristic for F {
    fn estimate(&self, state: usize) -> f64 {
        self(state)
    }
}

/// Forced and forbidden `(state, action)` commitments of a subproblem.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Restriction {
    forced: BTreeMap<usize, usize>,
    forbidden: BTreeSet<(usize, usize)>,
}

impl Restriction {
    pub fn force(&mut self, s: usize, a: usize) {
        self.forced.insert(s, a);
    }

    pub fn forbid(&mut self, s: usize, a: usize) {
        self.forbidden.insert((s, a));
    }

    pub fn forced(&self, s: usize) -> Option<usize> {
        self.forced.get(&s).copied()
    }

    pub fn allows(&self, s: usize, a: usize) -> bool {
        match self.forced.get(&s) {
            Some(&f) => f == a,
            None => !self.forbidden.contains(&(s, a)),
        }
    }
}

/// Optimal deterministic policy of a scalarized SSP together with its exact
/// component-wise value.
#[derive(Debug, Clone)]
pub struct WeightedSolution {
    pub policy: DeterministicPolicy,
    /// `f + lambda . g`, including the `-lambda . bounds` offset.
    pub value: f64,
    pub eval: PolicyValue,
}

/// Single-cost SSP with edge cost `C_0 + sum_i lambda_i C_i` plus the
/// constant `offset = -lambda . bounds`.
#[derive(Debug, Clone)]
pub struct ScalarizedSsp {
    pub model: CsspModel,
    pub offset: f64,
}

fn check_lambda(model: &CsspModel, lambda: &[f64]) -> Result<(), SolveError> {
    if lambda.len() != model.num_secondary() {
        return Err(SolveError::DimensionMismatch {
            expected: model.num_secondary(),
            found: lambda.len(),
        });
    }
    if let Some(&l) = lambda.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(SolveError::InvalidMultiplier(l));
    }
    Ok(())
}

pub fn scalarize(model: &CsspModel, lambda: &[f64]) -> Result<ScalarizedSsp, SolveError> {
    check_lambda(model, lambda)?;
    let mut b = CsspBuilder::new(0);
    for s in 0..model.num_states() {
        let i = b.state(model.state_name(s));
        if model.is_goal(s) {
            b.set_goal(i);
        }
    }
    for &(s, p) in model.initial() {
        b.initial(s, p);
    }
    for s in 0..model.num_states() {
        for a in model.actions(s) {
            let outs = a
                .outcomes()
                .iter()
                .map(|o| {
                    let c = o.costs[0] + weighted(lambda, &o.costs[1..]);
                    Outcome::new(o.next, o.prob, vec![c])
                })
                .collect();
            b.action(s, a.name(), outs);
        }
    }
    b.bounds(Vec::new());
    let offset = -weighted(lambda, model.bounds());
    Ok(ScalarizedSsp {
        model: b.build(),
        offset,
    })
}

/// Gauss-Seidel sweeps of `update` over `states` until the largest change is below tolerance.
fn sweep(states: &[usize], v: &mut [f64], update: impl Fn(&[f64], usize) -> f64) -> bool {
    for _ in 0..VI_MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for &s in states {
            let next = update(v, s);
            delta = delta.max((next - v[s]).abs());
            scale = scale.max(next.abs());
            v[s] = next;
        }
        if delta <= VI_TOLERANCE * scale {
            return true;
        }
    }
    false
}

fn weighted(lambda: &[f64], values: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(values)
        .filter(|(l, _)| **l != 0.0)
        .map(|(l, v)| l * v)
        .sum()
}

/// Policy iteration from the proper policy `pol` with exact dense
/// evaluation. Leaves the optimal values in `v` and returns false if an
/// improvement step produced an improper policy.
fn policy_iteration(
    model: &CsspModel,
    order: &[usize],
    transient: &[usize],
    candidates: &[Vec<(usize, f64)>],
    mut pol: Vec<usize>,
    cost_of: &dyn Fn(usize, usize) -> f64,
    v: &mut [f64],
) -> bool {
    let mut local = vec![usize::MAX; model.num_states()];
    for (i, &s) in transient.iter().enumerate() {
        local[s] = i;
    }
    for _ in 0..MAX_POLICY_ITERATIONS {
        let mut succ: Vec<Vec<(usize, f64)>> = vec![Vec::new(); transient.len()];
        for (i, &s) in transient.iter().enumerate() {
            for o in model.actions(s)[pol[s]].outcomes() {
                if o.prob > 0.0 && local[o.next] != usize::MAX {
                    succ[i].push((local[o.next], o.prob));
                }
            }
        }
        let c: Vec<f64> = transient.iter().map(|&s| cost_of(s, pol[s])).collect();
        let x = solve_dense(transient.len(), &succ, &c);
        if x.iter().any(|x| !x.is_finite()) {
            return false;
        }
        for (&s, &x) in transient.iter().zip(&x) {
            v[s] = x;
        }
        let mut changed = false;
        for &s in transient {
            let margin = IMPROVEMENT_TOLERANCE * (1.0 + v[s].abs());
            let mut best = (v[s] - margin, usize::MAX);
            for &(a, c) in &candidates[s] {
                let q = c + model.actions(s)[a]
                    .outcomes()
                    .iter()
                    .filter(|o| o.prob > 0.0)
                    .map(|o| o.prob * v[o.next])
                    .sum::<f64>();
                if q < best.0 {
                    best = (q, a);
                }
            }
            if best.1 != usize::MAX {
                pol[s] = best.1;
                changed = true;
            }
        }
        if !changed {
            return true;
        }
        let mut dp = DeterministicPolicy::empty(model.num_states());
        for &s in transient {
            dp.set(s, pol[s]);
        }
        if !reaches_goal(model, order, &dp) {
            return false;
        }
    }
    false
}

/// Whether every state of `reached`, a set closed under `policy`, can reach
/// a goal.
fn reaches_goal(model: &CsspModel, reached: &[usize], policy: &DeterministicPolicy) -> bool {
    let mut pred: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &s in reached {
        if let Some(a) = policy.get(s).filter(|_| !model.is_goal(s)) {
            for o in model.actions(s)[a].outcomes() {
                if o.prob > 0.0 {
                    pred.entry(o.next).or_default().push(s);
                }
            }
        }
    }
    let mut ok: BTreeSet<usize> = reached
        .iter()
        .copied()
        .filter(|&s| model.is_goal(s))
        .collect();
    let mut stack: Vec<usize> = ok.iter().copied().collect();
    while let Some(t) = stack.pop() {
        for &s in pred.get(&t).into_iter().flatten() {
            if ok.insert(s) {
                stack.push(s);
            }
        }
    }
    ok.len() == reached.len()
}

pub fn solve_weighted_ssp(
    model: &CsspModel,
    lambda: &[f64],
    heuristic: &dyn Heuristic,
) -> Result<WeightedSolution, SolveError> {
    solve_restricted(model, lambda, None, heuristic)
}

/// Minimizes the scalarized cost over deterministic policies that respect
/// `restriction`. Value iteration runs on the states from which the goal is
/// reachable with probability one; the greedy policy is then evaluated
/// exactly.
pub fn solve_restricted(
    model: &CsspModel,
    lambda: &[f64],
    restriction: Option<&Restriction>,
    _heuristic: &dyn Heuristic,
) -> Result<WeightedSolution, SolveError> {
    check_lambda(model, lambda)?;
    let n = model.num_states();
    let allowed = |s: usize, a: usize| restriction.is_none_or(|r| r.allows(s, a));

    // Almost-sure reachability fixpoint: `good` states can reach a goal with
    // probability one using actions whose successors are all good.
    let mut good = vec![true; n];
    let mut rev: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for s in 0..n {
        for (a, act) in model.actions(s).iter().enumerate() {
            if !allowed(s, a) {
                continue;
            }
            for o in act.outcomes() {
                if o.prob > 0.0 {
                    rev[o.next].push((s, a));
                }
            }
        }
    }
    let safe_action = |good: &[bool], s: usize, a: usize| {
        model.actions(s)[a]
            .outcomes()
            .iter()
            .all(|o| o.prob <= 0.0 || good[o.next])
    };
    let mut order;
    loop {
        let mut reached = vec![false; n];
        order = Vec::new();
        for s in 0..n {
            if model.is_goal(s) {
                reached[s] = true;
                order.push(s);
            }
        }
        let mut head = 0;
        while head < order.len() {
            let t = order[head];
            head += 1;
            for &(s, a) in &rev[t] {
                if !reached[s] && good[s] && safe_action(&good, s, a) {
                    reached[s] = true;
                    order.push(s);
                }
            }
        }
        if reached == good {
            break;
        }
        good = reached;
    }

    for &(s, p) in model.initial() {
        if p > 0.0 && !good[s] {
            return Err(SolveError::NoProperPolicy(model.state_name(s).to_string()));
        }
    }

    // Candidate actions and their scalarized expected immediate cost.
    let mut candidates: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &s in &order {
        if model.is_goal(s) {
            continue;
        }
        for (a, act) in model.actions(s).iter().enumerate() {
            if allowed(s, a) && safe_action(&good, s, a) {
                let c = act.expected_cost(0) + weighted(lambda, &act.expected_costs()[1..]);
                candidates[s].push((a, c));
            }
        }
    }

    // Value iteration from above: start at the value of the proper policy
    // found by the reachability search, so improper cycles are never
    // preferred and values decrease monotonically.
    // Each transient state moves to an earlier state of `order` with
    // positive probability under `via`, so `via` is proper. Preferring the
    // action with the most such mass keeps its evaluation fast.
    let mut via = vec![usize::MAX; n];
    let mut rank = vec![usize::MAX; n];
    for (i, &s) in order.iter().enumerate() {
        rank[s] = i;
    }
    for &s in &order {
        let mut best = (0.0, usize::MAX);
        for &(a, _) in &candidates[s] {
            let mass: f64 = model.actions(s)[a]
                .outcomes()
                .iter()
                .filter(|o| o.prob > 0.0 && rank[o.next] < rank[s])
                .map(|o| o.prob)
                .sum();
            if mass > best.0 {
                best = (mass, a);
            }
        }
        if best.1 != usize::MAX {
            via[s] = best.1;
        }
    }
    let cost_of = |s: usize, a: usize| {
        let act = &model.actions(s)[a];
        act.expected_cost(0) + weighted(lambda, &act.expected_costs()[1..])
    };
    let q = |v: &[f64], s: usize, a: usize, c: f64| -> f64 {
        let mut acc = c;
        for o in model.actions(s)[a].outcomes() {
            if o.prob > 0.0 {
                acc += o.prob * v[o.next];
            }
        }
        acc
    };
    let transient: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&s| !model.is_goal(s))
        .collect();
    let mut v = vec![f64::INFINITY; n];
    for &s in &order {
        v[s] = 0.0;
    }
    let solved = transient.len() <= DIRECT_SOLVE_LIMIT
        && policy_iteration(
            model,
            &order,
            &transient,
            &candidates,
            via.clone(),
            &cost_of,
            &mut v,
        );
    if !solved {
        for &s in &transient {
            v[s] = 0.0;
        }
        let mut converged = sweep(&transient, &mut v, |v, s| {
            q(v, s, via[s], cost_of(s, via[s]))
        });
        if converged {
            converged = sweep(&transient, &mut v, |v, s| {
                candidates[s]
                    .iter()
                    .map(|&(a, c)| q(v, s, a, c))
                    .fold(f64::INFINITY, f64::min)
            });
        }
        if !converged {
            return Err(SolveError::Numerical(
                "value iteration did not converge".into(),
            ));
        }
    }

    // Greedy extraction over states reachable from the initial support;
    // near-ties go to the lowest action index unless that closes a cycle
    // that never reaches the goal.
    let extract = |tie_factor: f64| -> Result<DeterministicPolicy, SolveError> {
        let mut policy = DeterministicPolicy::empty(n);
        let mut seen = vec![false; n];
        let mut queue: Vec<usize> = Vec::new();
        for &(s, p) in model.initial() {
            if p > 0.0 && !seen[s] {
                seen[s] = true;
                queue.push(s);
            }
        }
        let mut head = 0;
        while head < queue.len() {
            let s = queue[head];
            head += 1;
            if model.is_goal(s) {
                continue;
            }
            let qs: Vec<(usize, f64)> = candidates[s]
                .iter()
                .map(|&(a, c)| (a, q(&v, s, a, c)))
                .collect();
            let min = qs.iter().map(|&(_, x)| x).fold(f64::INFINITY, f64::min);
            let tie = tie_factor * (1.0 + min.abs());
            let (a, _) = *qs
                .iter()
                .find(|&&(_, x)| x <= min + tie)
                .ok_or_else(|| SolveError::Numerical("state without candidate action".into()))?;
            policy.set(s, a);
            for o in model.actions(s)[a].outcomes() {
                if o.prob > 0.0 && !seen[o.next] {
                    seen[o.next] = true;
                    queue.push(o.next);
                }
            }
        }
        Ok(policy)
    };
    let mut policy = extract(1e-9)?;
    if !reaches_goal(model, &reachable_under(model, &policy), &policy) {
        policy = extract(0.0)?;
    }

    let eval = evaluate_policy(model, &policy).map_err(|e| SolveError::Numerical(e.to_string()))?;
    Ok(WeightedSolution {
        value: eval.lagrangian(lambda),
        policy,
        eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{ch1, ch1_with_bound};

    #[test]
    fn scalarize_ch1() {
        let m = ch1();
        let s = scalarize(&m, &[0.0]).unwrap();
        assert_eq!(s.offset, 0.0);
        assert_eq!(s.model.actions(0)[0].expected_cost(0), 1.0);
        assert_eq!(s.model.actions(0)[1].expected_cost(0), 10.0);

        let s = scalarize(&m, &[1.0]).unwrap();
        assert_eq!(s.model.actions(0)[0].expected_cost(0), 11.0);
        assert_eq!(s.model.actions(0)[1].expected_cost(0), 11.0);
        assert_eq!(s.offset, -5.0);

        let s = scalarize(&m, &[0.5]).unwrap();
        assert_eq!(s.model.actions(0)[0].expected_cost(0), 6.0);
        assert_eq!(s.model.actions(0)[1].expected_cost(0), 10.5);
        assert_eq!(s.offset, -2.5);

        assert!(matches!(
            scalarize(&m, &[1.0, 2.0]),
            Err(SolveError::DimensionMismatch {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn weighted_ch1() {
        let m = ch1();
        let sol = solve_weighted_ssp(&m, &[0.0], &ZeroHeuristic).unwrap();
        assert_eq!(sol.policy.get(0), Some(0));
        assert_eq!(sol.value, 1.0);
        let sol = solve_weighted_ssp(&m, &[2.0], &ZeroHeuristic).unwrap();
        assert_eq!(sol.policy.get(0), Some(1));
        assert_eq!(sol.value, 2.0);
        // exact tie at lambda = 1 goes to the first action
        let sol = solve_weighted_ssp(&ch1_with_bound(5.0), &[1.0], &ZeroHeuristic).unwrap();
        assert_eq!(sol.policy.get(0), Some(0));
        assert_eq!(sol.value, 6.0);
    }

    #[test]
    fn restriction_forbids_action() {
        let m = ch1();
        let mut r = Restriction::default();
        r.forbid(0, 0);
        let sol = solve_restricted(&m, &[0.0], Some(&r), &ZeroHeuristic).unwrap();
        assert_eq!(sol.policy.get(0), Some(1));
        r.forbid(0, 1);
        assert!(matches!(
            solve_restricted(&m, &[0.0], Some(&r), &ZeroHeuristic),
            Err(SolveError::NoProperPolicy(_))
        ));
    }

    #[test]
    fn dead_end_action_is_avoided() {
        let mut b = CsspBuilder::new(0);
        let s0 = b.state("s0");
        let trap = b.state("trap");
        let g = b.goal("g");
        b.initial(s0, 1.0);
        // cheap but risky: reaches a trap with no way out
        b.action(
            s0,
            "risky",
            vec![
                Outcome::new(g, 0.5, vec![0.1]),
                Outcome::new(trap, 0.5, vec![0.1]),
            ],
        );
        b.action(s0, "safe", vec![Outcome::new(g, 1.0, vec![3.0])]);
        b.action(trap, "stay", vec![Outcome::new(trap, 1.0, vec![1.0])]);
        let m = b.build();
        let sol = solve_weighted_ssp(&m, &[], &ZeroHeuristic).unwrap();
        assert_eq!(sol.policy.get(s0), Some(1));
        assert_eq!(sol.value, 3.0);
    }

    #[test]
    fn self_loop_is_not_a_tie_at_large_multiplier() {
        let mut b = CsspBuilder::new(1);
        let s0 = b.state("s0");
        let g = b.goal("g");
        b.initial(s0, 1.0);
        b.action(s0, "wait", vec![Outcome::new(s0, 1.0, vec![1.0, 0.0])]);
        b.action(s0, "go", vec![Outcome::new(g, 1.0, vec![1.0, 1.0])]);
        b.bounds(vec![0.0]);
        let m = b.build();
        let sol = solve_weighted_ssp(&m, &[1e9], &ZeroHeuristic).unwrap();
        assert_eq!(sol.policy.get(s0), Some(1));
        assert_eq!(sol.value, 1.0 + 1e9);
    }
}
