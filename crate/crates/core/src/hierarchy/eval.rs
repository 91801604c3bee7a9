use std::collections::BTreeMap;

use crate::cssp::{
    evaluate_policy_full, DeterministicPolicy, PolicyEvaluation, FEASIBILITY_TOLERANCE,
};

use super::model::HcsspModel;
use super::HierarchyError;

/// Assignment of a choice to events. Only events reachable under the
/// assignment need an entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProceduralPolicy {
    choice_of: Vec<Option<usize>>,
}

impl ProceduralPolicy {
    pub fn empty(num_events: usize) -> Self {
        Self {
            choice_of: vec![None; num_events],
        }
    }

    pub fn from_choices(choices: Vec<Option<usize>>) -> Self {
        Self { choice_of: choices }
    }

    pub fn get(&self, t: usize) -> Option<usize> {
        self.choice_of.get(t).copied().flatten()
    }

    pub fn set(&mut self, t: usize, c: usize) {
        self.choice_of[t] = Some(c);
    }

    pub fn assignments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.choice_of
            .iter()
            .enumerate()
            .filter_map(|(t, c)| c.map(|c| (t, c)))
    }

    pub fn to_named(&self, model: &HcsspModel) -> BTreeMap<String, String> {
        self.assignments()
            .map(|(t, c)| (model.event_name(t).to_string(), model.choices(t)[c].clone()))
            .collect()
    }

    pub fn from_named(
        model: &HcsspModel,
        named: &BTreeMap<String, String>,
    ) -> Result<Self, HierarchyError> {
        let mut p = Self::empty(model.num_events());
        for (event, choice) in named {
            let t = model
                .event_index(event)
                .ok_or_else(|| HierarchyError::Invalid(format!("unknown event `{event}`")))?;
            let c = model.choice_index(t, choice).ok_or_else(|| {
                HierarchyError::Invalid(format!("unknown choice `{choice}` at `{event}`"))
            })?;
            p.set(t, c);
        }
        Ok(p)
    }
}

/// Event reach probabilities and edge traversal probabilities.
#[derive(Debug, Clone)]
pub struct Flow {
    pub order: Vec<usize>,
    pub reach: Vec<f64>,
    /// Traversal probability of each `(t, t2)` edge with positive mass.
    pub edges: BTreeMap<(usize, usize), f64>,
}

/// Forward propagation of event probabilities from the start event, with
/// `weights(t)` giving the probability of each choice at a reached event.
pub fn propagate<F>(model: &HcsspModel, mut weights: F) -> Result<Flow, HierarchyError>
where
    F: FnMut(usize) -> Result<Vec<(usize, f64)>, HierarchyError>,
{
    let order = model.event_order()?;
    let mut reach = vec![0.0; model.num_events()];
    reach[model.start_event()] = 1.0;
    let mut edges = BTreeMap::new();
    for &t in &order {
        if reach[t] <= 0.0 || t == model.end_event() {
            continue;
        }
        for (c, w) in weights(t)? {
            for &(t2, p) in model.event_row(t, c) {
                let mass = reach[t] * w * p;
                if mass > 0.0 {
                    reach[t2] += mass;
                    *edges.entry((t, t2)).or_insert(0.0) += mass;
                }
            }
        }
    }
    Ok(Flow {
        order,
        reach,
        edges,
    })
}

pub fn procedural_flow(model: &HcsspModel, rho: &ProceduralPolicy) -> Result<Flow, HierarchyError> {
    propagate(model, |t| {
        rho.get(t)
            .filter(|&c| c < model.choices(t).len())
            .map(|c| vec![(c, 1.0)])
            .ok_or_else(|| HierarchyError::UnassignedChoice(model.event_name(t).to_string()))
    })
}

/// `L(E | rho)` for every activity.
pub fn activity_likelihoods(
    model: &HcsspModel,
    rho: &ProceduralPolicy,
) -> Result<Vec<f64>, HierarchyError> {
    let flow = procedural_flow(model, rho)?;
    Ok(model
        .activities()
        .iter()
        .map(|a| {
            flow.edges
                .get(&(a.start_event, a.end_event))
                .copied()
                .unwrap_or(0.0)
        })
        .collect())
}

pub fn activity_likelihood(
    model: &HcsspModel,
    rho: &ProceduralPolicy,
    e: usize,
) -> Result<f64, HierarchyError> {
    Ok(activity_likelihoods(model, rho)?[e])
}

/// Every procedural policy, assigning choices only at events it reaches.
pub fn procedural_policies(model: &HcsspModel) -> Result<Vec<ProceduralPolicy>, HierarchyError> {
    let order = model.event_order()?;
    let mut out = Vec::new();
    let mut reached = vec![false; model.num_events()];
    reached[model.start_event()] = true;
    extend(
        model,
        &order,
        0,
        ProceduralPolicy::empty(model.num_events()),
        reached,
        &mut out,
    );
    Ok(out)
}

fn extend(
    model: &HcsspModel,
    order: &[usize],
    pos: usize,
    rho: ProceduralPolicy,
    reached: Vec<bool>,
    out: &mut Vec<ProceduralPolicy>,
) {
    let Some(next) =
        (pos..order.len()).find(|&i| reached[order[i]] && order[i] != model.end_event())
    else {
        out.push(rho);
        return;
    };
    let t = order[next];
    for c in 0..model.choices(t).len() {
        let mut r = rho.clone();
        r.set(t, c);
        let mut reach = reached.clone();
        for &(t2, p) in model.event_row(t, c) {
            if p > 0.0 {
                reach[t2] = true;
            }
        }
        extend(model, order, next + 1, r, reach, out);
    }
}

/// Minimum likelihood of each activity over the procedural policies that
/// activate it; `None` for activities no policy activates.
pub fn min_activity_likelihoods(model: &HcsspModel) -> Result<Vec<Option<f64>>, HierarchyError> {
    let mut min: Vec<Option<f64>> = vec![None; model.activities().len()];
    for rho in procedural_policies(model)? {
        for (e, l) in activity_likelihoods(model, &rho)?.into_iter().enumerate() {
            if l > 0.0 {
                min[e] = Some(min[e].map_or(l, |m: f64| m.min(l)));
            }
        }
    }
    Ok(min)
}

pub fn min_activity_likelihood(model: &HcsspModel, e: usize) -> Result<f64, HierarchyError> {
    min_activity_likelihoods(model)?[e]
        .ok_or_else(|| HierarchyError::NeverActivated(model.activity(e).id.clone()))
}

/// Activities ordered by the topological position of their start event,
/// then by end event index, which is the order evaluation visits edges in.
pub fn topological_order(model: &HcsspModel) -> Result<Vec<usize>, HierarchyError> {
    let order = model.event_order()?;
    let mut pos = vec![0; model.num_events()];
    for (i, &t) in order.iter().enumerate() {
        pos[t] = i;
    }
    let mut acts: Vec<usize> = (0..model.activities().len()).collect();
    acts.sort_by_key(|&e| {
        let a = model.activity(e);
        (pos[a.start_event], a.end_event, e)
    });
    Ok(acts)
}

/// A procedural policy together with policies for the activities it
/// activates.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalSolution {
    pub rho: ProceduralPolicy,
    pub gamma: BTreeMap<usize, DeterministicPolicy>,
    pub objective: f64,
    pub constraint_values: Vec<f64>,
}

/// Exact evaluation of a hierarchical solution.
#[derive(Debug, Clone)]
pub struct SolutionEvaluation {
    pub objective: f64,
    pub constraint_values: Vec<f64>,
    pub feasible: bool,
    /// Probability of reaching each event.
    pub reach: Vec<f64>,
    pub likelihoods: Vec<f64>,
    /// Local initial distribution of each activated activity.
    pub initial: Vec<Option<Vec<(usize, f64)>>>,
    pub activity_eval: Vec<Option<PolicyEvaluation>>,
}

type GlobalDist = BTreeMap<usize, f64>;

/// Walks events in topological order, chaining each activated activity's
/// termination distribution into the distribution at its end event.
struct Chain<'a> {
    model: &'a HcsspModel,
    flow: Flow,
    at_event: Vec<GlobalDist>,
}

impl<'a> Chain<'a> {
    fn new(model: &'a HcsspModel, rho: &ProceduralPolicy) -> Result<Self, HierarchyError> {
        let flow = procedural_flow(model, rho)?;
        let mut at_event = vec![GlobalDist::new(); model.num_events()];
        at_event[model.start_event()] = model.initial().iter().copied().collect();
        Ok(Self {
            model,
            flow,
            at_event,
        })
    }

    /// Local initial distribution of activity `e` from the mixture at its
    /// start event, restricted and renormalized to the activity's states.
    fn initial_of(&self, e: usize) -> Result<Vec<(usize, f64)>, HierarchyError> {
        let act = self.model.activity(e);
        let mut local = Vec::new();
        let mut mass = 0.0;
        for (&s, &p) in &self.at_event[act.start_event] {
            if let Some(l) = act.local_state(s) {
                local.push((l, p));
                mass += p;
            }
        }
        if !(mass > 0.0) {
            return Err(HierarchyError::EmptySupport(act.id.clone()));
        }
        Ok(local.into_iter().map(|(l, p)| (l, p / mass)).collect())
    }

    /// Processes all events; `policy(e, init)` evaluates activity `e`.
    fn run<F>(&mut self, mut policy: F) -> Result<(), HierarchyError>
    where
        F: FnMut(usize, Vec<(usize, f64)>) -> Result<Option<Vec<(usize, f64)>>, HierarchyError>,
    {
        let order = self.flow.order.clone();
        for t in order {
            let reach = self.flow.reach[t];
            if reach <= 0.0 {
                continue;
            }
            if t != self.model.start_event() {
                let total: f64 = self.at_event[t].values().sum();
                if total > 0.0 {
                    for p in self.at_event[t].values_mut() {
                        *p /= total;
                    }
                }
            }
            let outgoing: Vec<((usize, usize), f64)> = self
                .flow
                .edges
                .range((t, 0)..(t + 1, 0))
                .map(|(&k, &v)| (k, v))
                .collect();
            for ((_, t2), w) in outgoing {
                let arriving: GlobalDist = match self.model.edge_activity(t, t2) {
                    None => self.at_event[t].clone(),
                    Some(e) => {
                        let init = self.initial_of(e)?;
                        let Some(term) = policy(e, init)? else {
                            return Ok(());
                        };
                        let act = self.model.activity(e);
                        term.into_iter().map(|(l, p)| (act.global[l], p)).collect()
                    }
                };
                for (s, p) in arriving {
                    *self.at_event[t2].entry(s).or_default() += w * p;
                }
            }
        }
        Ok(())
    }
}

/// Initial distribution of activity `next` given policies for the
/// activities activated before it.
pub fn chain_distributions(
    model: &HcsspModel,
    rho: &ProceduralPolicy,
    gamma_prefix: &BTreeMap<usize, DeterministicPolicy>,
    next: usize,
) -> Result<Vec<(usize, f64)>, HierarchyError> {
    let mut chain = Chain::new(model, rho)?;
    let mut found = None;
    chain.run(|e, init| {
        if e == next {
            found = Some(init);
            return Ok(None);
        }
        let act = model.activity(e);
        let pi = gamma_prefix
            .get(&e)
            .ok_or_else(|| HierarchyError::MissingPolicy(act.id.clone()))?;
        let ev = evaluate_policy_full(&act.model.with_initial(init), pi)
            .map_err(|err| HierarchyError::Activity(act.id.clone(), err))?;
        Ok(Some(ev.termination))
    })?;
    found.ok_or_else(|| HierarchyError::NeverActivated(model.activity(next).id.clone()))
}

pub fn evaluate_solution(
    model: &HcsspModel,
    rho: &ProceduralPolicy,
    gamma: &BTreeMap<usize, DeterministicPolicy>,
) -> Result<SolutionEvaluation, HierarchyError> {
    let n = model.activities().len();
    let mut chain = Chain::new(model, rho)?;
    let mut initial = vec![None; n];
    let mut activity_eval: Vec<Option<PolicyEvaluation>> = vec![None; n];
    chain.run(|e, init| {
        let act = model.activity(e);
        let pi = gamma
            .get(&e)
            .ok_or_else(|| HierarchyError::MissingPolicy(act.id.clone()))?;
        let ev = evaluate_policy_full(&act.model.with_initial(init.clone()), pi)
            .map_err(|err| HierarchyError::Activity(act.id.clone(), err))?;
        let term = ev.termination.clone();
        initial[e] = Some(init);
        activity_eval[e] = Some(ev);
        Ok(Some(term))
    })?;
    let likelihoods: Vec<f64> = model
        .activities()
        .iter()
        .map(|a| {
            chain
                .flow
                .edges
                .get(&(a.start_event, a.end_event))
                .copied()
                .unwrap_or(0.0)
        })
        .collect();
    let mut objective = 0.0;
    for e in 0..n {
        if let Some(ev) = &activity_eval[e] {
            objective += likelihoods[e] * ev.value.f;
        }
    }
    let constraint_values: Vec<f64> = model
        .constraints()
        .iter()
        .map(|c| {
            c.members
                .iter()
                .filter_map(|&(e, i)| {
                    activity_eval[e]
                        .as_ref()
                        .map(|ev| likelihoods[e] * ev.value.raw_g[i - 1])
                })
                .sum()
        })
        .collect();
    let feasible = constraint_values
        .iter()
        .zip(model.constraints())
        .all(|(v, c)| *v <= c.bound + FEASIBILITY_TOLERANCE);
    Ok(SolutionEvaluation {
        objective,
        constraint_values,
        feasible,
        reach: chain.flow.reach.clone(),
        likelihoods,
        initial,
        activity_eval,
    })
}

impl HierarchicalSolution {
    /// Evaluates `rho` and `gamma` and keeps only the policies of activated
    /// activities.
    pub fn assemble(
        model: &HcsspModel,
        rho: ProceduralPolicy,
        mut gamma: BTreeMap<usize, DeterministicPolicy>,
    ) -> Result<(Self, SolutionEvaluation), HierarchyError> {
        let ev = evaluate_solution(model, &rho, &gamma)?;
        let mut reached = ProceduralPolicy::empty(model.num_events());
        for (t, c) in rho.assignments() {
            if ev.reach[t] > 0.0 && t != model.end_event() {
                reached.set(t, c);
            }
        }
        let rho = reached;
        gamma.retain(|e, _| ev.activity_eval[*e].is_some());
        for (e, pi) in gamma.iter_mut() {
            let act = model.activity(*e);
            let init = ev.initial[*e].clone().unwrap_or_default();
            *pi = pi.restrict_to_reachable(&act.model.with_initial(init));
        }
        let sol = Self {
            rho,
            gamma,
            objective: ev.objective,
            constraint_values: ev.constraint_values.clone(),
        };
        Ok((sol, ev))
    }
}
