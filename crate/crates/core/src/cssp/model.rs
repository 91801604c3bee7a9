use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

/// Tolerance used when checking that probability rows sum to one.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// One stochastic outcome of an action: successor, probability and the
/// cost vector `[C_0, C_1, .., C_N]` charged on that transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub costs: Vec<f64>,
}

impl Outcome {
    pub fn new(next: usize, prob: f64, costs: Vec<f64>) -> Self {
        Self { next, prob, costs }
    }
}

#[derive(Debug, Clone)]
pub struct Action {
    name: String,
    outcomes: Vec<Outcome>,
    expected: Vec<f64>,
}

impl Action {
    fn new(name: String, outcomes: Vec<Outcome>, num_costs: usize) -> Self {
        let mut expected = vec![0.0; num_costs];
        for o in &outcomes {
            for (i, e) in expected.iter_mut().enumerate() {
                *e += o.prob * o.costs.get(i).copied().unwrap_or(0.0);
            }
        }
        Self {
            name,
            outcomes,
            expected,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    /// Expected immediate cost of cost function `index`.
    #[inline]
    pub fn expected_cost(&self, index: usize) -> f64 {
        self.expected[index]
    }

    pub fn expected_costs(&self) -> &[f64] {
        &self.expected
    }
}

/// State space, actions and costs. Shared between models that differ only in
/// their initial distribution or bounds.
#[derive(Debug)]
pub struct Dynamics {
    states: Vec<String>,
    index: HashMap<String, usize>,
    goal: Vec<bool>,
    actions: Vec<Vec<Action>>,
    num_costs: usize,
}

/// Explicit finite constrained stochastic shortest path problem.
///
/// Goal states are absorbing and carry no actions. Costs are indexed with 0
/// as the primary cost and `1..=N` as secondary costs, each secondary cost
/// having an upper bound (possibly `+inf`).
#[derive(Debug, Clone)]
pub struct CsspModel {
    dynamics: Arc<Dynamics>,
    initial: Vec<(usize, f64)>,
    bounds: Vec<f64>,
}

impl CsspModel {
    pub fn num_states(&self) -> usize {
        self.dynamics.states.len()
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.dynamics.states[s]
    }

    pub fn state_names(&self) -> &[String] {
        &self.dynamics.states
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.dynamics.index.get(name).copied()
    }

    #[inline]
    pub fn is_goal(&self, s: usize) -> bool {
        self.dynamics.goal[s]
    }

    pub fn goals(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states()).filter(move |&s| self.is_goal(s))
    }

    #[inline]
    pub fn actions(&self, s: usize) -> &[Action] {
        &self.dynamics.actions[s]
    }

    pub fn action_index(&self, s: usize, name: &str) -> Option<usize> {
        self.actions(s).iter().position(|a| a.name == name)
    }

    /// Number of secondary cost functions `N`.
    pub fn num_secondary(&self) -> usize {
        self.dynamics.num_costs - 1
    }

    pub fn num_costs(&self) -> usize {
        self.dynamics.num_costs
    }

    pub fn initial(&self) -> &[(usize, f64)] {
        &self.initial
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn dynamics(&self) -> &Arc<Dynamics> {
        &self.dynamics
    }

    /// Same dynamics, different initial distribution.
    pub fn with_initial(&self, initial: Vec<(usize, f64)>) -> Self {
        Self {
            dynamics: Arc::clone(&self.dynamics),
            initial: normalize_sparse(initial),
            bounds: self.bounds.clone(),
        }
    }

    /// Same dynamics, different secondary-cost bounds.
    pub fn with_bounds(&self, bounds: Vec<f64>) -> Self {
        Self {
            dynamics: Arc::clone(&self.dynamics),
            initial: self.initial.clone(),
            bounds,
        }
    }

    /// Checks every structural invariant and returns the violations found.
    /// An empty report means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut report = self.validate_dynamics();
        report.extend(self.validate_initial());
        report
    }

    /// Validation of everything except the initial distribution; used for
    /// activity fragments that receive their initial distribution later.
    pub fn validate_dynamics(&self) -> Vec<Violation> {
        let d = &*self.dynamics;
        let mut report = Vec::new();
        if !d.goal.iter().any(|&g| g) {
            report.push(Violation::NoGoal);
        }
        for (s, acts) in d.actions.iter().enumerate() {
            for a in acts {
                let mut total = 0.0;
                for o in &a.outcomes {
                    if !(o.prob >= 0.0) || !o.prob.is_finite() {
                        report.push(Violation::InvalidProbability {
                            state: d.states[s].clone(),
                            action: a.name.clone(),
                            successor: d.states[o.next].clone(),
                            prob: o.prob,
                        });
                    }
                    total += o.prob;
                    if o.costs.len() != d.num_costs {
                        report.push(Violation::CostArity {
                            state: d.states[s].clone(),
                            action: a.name.clone(),
                            expected: d.num_costs,
                            found: o.costs.len(),
                        });
                    }
                    for (i, &c) in o.costs.iter().enumerate() {
                        if !(c >= 0.0) || !c.is_finite() {
                            report.push(Violation::NegativeCost {
                                state: d.states[s].clone(),
                                action: a.name.clone(),
                                successor: d.states[o.next].clone(),
                                index: i,
                                value: c,
                            });
                        }
                    }
                }
                if (total - 1.0).abs() > ROW_TOLERANCE {
                    report.push(Violation::RowSum {
                        state: d.states[s].clone(),
                        action: a.name.clone(),
                        total,
                    });
                }
            }
        }
        if self.bounds.len() != self.num_secondary() {
            report.push(Violation::BoundCount {
                expected: self.num_secondary(),
                found: self.bounds.len(),
            });
        }
        for (i, &b) in self.bounds.iter().enumerate() {
            if !(b >= 0.0) {
                report.push(Violation::NegativeBound {
                    index: i + 1,
                    value: b,
                });
            }
        }
        for cycle in zero_cost_cycles(d) {
            report.push(Violation::ZeroCostCycle {
                states: cycle.into_iter().map(|s| d.states[s].clone()).collect(),
            });
        }
        report
    }

    fn validate_initial(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        let mut total = 0.0;
        for &(s, p) in &self.initial {
            if !(p >= 0.0) {
                report.push(Violation::InvalidInitial {
                    state: self.state_name(s).to_string(),
                    prob: p,
                });
            }
            total += p;
        }
        if (total - 1.0).abs() > ROW_TOLERANCE {
            report.push(Violation::InitialMass { total });
        }
        report
    }

    /// States reachable from the initial support under *some* sequence of
    /// actions, in breadth-first order.
    pub fn potentially_reachable(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_states()];
        let mut order = Vec::new();
        for &(s, p) in &self.initial {
            if p > 0.0 && !seen[s] {
                seen[s] = true;
                order.push(s);
            }
        }
        let mut head = 0;
        while head < order.len() {
            let s = order[head];
            head += 1;
            for a in self.actions(s) {
                for o in &a.outcomes {
                    if o.prob > 0.0 && !seen[o.next] {
                        seen[o.next] = true;
                        order.push(o.next);
                    }
                }
            }
        }
        order
    }
}

fn normalize_sparse(mut dist: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    dist.sort_by_key(|&(s, _)| s);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(dist.len());
    for (s, p) in dist {
        match out.last_mut() {
            Some(last) if last.0 == s => last.1 += p,
            _ => out.push((s, p)),
        }
    }
    out.retain(|&(_, p)| p != 0.0);
    out
}

/// Strongly connected components of the graph of zero-primary-cost
/// transitions between non-goal states that contain a cycle.
fn zero_cost_cycles(d: &Dynamics) -> Vec<Vec<usize>> {
    let n = d.states.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut self_loop = vec![false; n];
    for (s, acts) in d.actions.iter().enumerate() {
        if d.goal[s] {
            continue;
        }
        for a in acts {
            for o in &a.outcomes {
                let c0 = o.costs.first().copied().unwrap_or(0.0);
                if o.prob > 0.0 && c0 == 0.0 && !d.goal[o.next] {
                    if o.next == s {
                        self_loop[s] = true;
                    }
                    adj[s].push(o.next);
                }
            }
        }
    }
    crate::graph::strongly_connected_components(&adj)
        .into_iter()
        .filter(|c| c.len() > 1 || self_loop[c[0]])
        .collect()
}

/// A violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoGoal,
    InitialMass {
        total: f64,
    },
    InvalidInitial {
        state: String,
        prob: f64,
    },
    RowSum {
        state: String,
        action: String,
        total: f64,
    },
    InvalidProbability {
        state: String,
        action: String,
        successor: String,
        prob: f64,
    },
    NegativeCost {
        state: String,
        action: String,
        successor: String,
        index: usize,
        value: f64,
    },
    CostArity {
        state: String,
        action: String,
        expected: usize,
        found: usize,
    },
    BoundCount {
        expected: usize,
        found: usize,
    },
    NegativeBound {
        index: usize,
        value: f64,
    },
    ZeroCostCycle {
        states: Vec<String>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoGoal => write!(f, "model has no goal state"),
            Violation::InitialMass { total } => {
                write!(f, "initial distribution sums to {total}, expected 1")
            }
            Violation::InvalidInitial { state, prob } => {
                write!(f, "initial probability of `{state}` is {prob}")
            }
            Violation::RowSum {
                state,
                action,
                total,
            } => write!(
                f,
                "transition row ({state}, {action}) sums to {total}, expected 1"
            ),
            Violation::InvalidProbability {
                state,
                action,
                successor,
                prob,
            } => write!(
                f,
                "transition ({state}, {action}) -> {successor} has invalid probability {prob}"
            ),
            Violation::NegativeCost {
                state,
                action,
                successor,
                index,
                value,
            } => write!(
                f,
                "cost C_{index}({state}, {action}, {successor}) = {value} violates nonnegativity"
            ),
            Violation::CostArity {
                state,
                action,
                expected,
                found,
            } => write!(
                f,
                "transition ({state}, {action}) carries {found} cost values, expected {expected}"
            ),
            Violation::BoundCount { expected, found } => {
                write!(f, "{found} bounds given for {expected} secondary costs")
            }
            Violation::NegativeBound { index, value } => {
                write!(
                    f,
                    "bound for cost {index} is {value}, expected a nonnegative value"
                )
            }
            Violation::ZeroCostCycle { states } => write!(
                f,
                "cycle with zero primary cost through states [{}]",
                states.join(", ")
            ),
        }
    }
}

/// Incremental construction of a [`CsspModel`].
///
/// ```
/// use hcssp::cssp::{CsspBuilder, Outcome};
/// let mut b = CsspBuilder::new(1);
/// let s0 = b.state("s0");
/// let s1 = b.goal("s1");
/// b.initial(s0, 1.0);
/// b.action(s0, "a_fast", vec![Outcome::new(s1, 1.0, vec![1.0, 10.0])]);
/// b.bounds(vec![5.0]);
/// let model = b.build();
/// assert!(model.validate().is_empty());
/// ```
#[derive(Debug, Clone)]
pub struct CsspBuilder {
    states: Vec<String>,
    index: HashMap<String, usize>,
    goal: Vec<bool>,
    actions: Vec<Vec<(String, Vec<Outcome>)>>,
    num_costs: usize,
    initial: Vec<(usize, f64)>,
    bounds: Vec<f64>,
}

impl CsspBuilder {
    pub fn new(num_secondary: usize) -> Self {
        Self {
            states: Vec::new(),
            index: HashMap::new(),
            goal: Vec::new(),
            actions: Vec::new(),
            num_costs: num_secondary + 1,
            initial: Vec::new(),
            bounds: vec![f64::INFINITY; num_secondary],
        }
    }

    /// Returns the index of `name`, adding it if needed.
    pub fn state(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.states.len();
        self.index.insert(name.clone(), i);
        self.states.push(name);
        self.goal.push(false);
        self.actions.push(Vec::new());
        i
    }

    pub fn goal(&mut self, name: impl Into<String>) -> usize {
        let i = self.state(name);
        self.goal[i] = true;
        i
    }

    pub fn set_goal(&mut self, s: usize) {
        self.goal[s] = true;
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn initial(&mut self, s: usize, prob: f64) -> &mut Self {
        self.initial.push((s, prob));
        self
    }

    pub fn action(
        &mut self,
        s: usize,
        name: impl Into<String>,
        outcomes: Vec<Outcome>,
    ) -> &mut Self {
        self.actions[s].push((name.into(), outcomes));
        self
    }

    pub fn bounds(&mut self, bounds: Vec<f64>) -> &mut Self {
        self.bounds = bounds;
        self
    }

    /// Builds the model. Actions attached to goal states are discarded so
    /// that goals are absorbing with zero cost. Outcomes to the same
    /// successor stay separate.
    pub fn build(self) -> CsspModel {
        let num_costs = self.num_costs;
        let actions = self
            .actions
            .into_iter()
            .enumerate()
            .map(|(s, acts)| {
                if self.goal[s] {
                    Vec::new()
                } else {
                    acts.into_iter()
                        .map(|(name, outs)| Action::new(name, outs, num_costs))
                        .collect()
                }
            })
            .collect();
        let dynamics = Dynamics {
            states: self.states,
            index: self.index,
            goal: self.goal,
            actions,
            num_costs,
        };
        CsspModel {
            dynamics: Arc::new(dynamics),
            initial: normalize_sparse(self.initial),
            bounds: self.bounds,
        }
    }
}
