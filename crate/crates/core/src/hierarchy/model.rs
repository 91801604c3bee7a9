use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::cssp::{CsspModel, Violation, ROW_TOLERANCE};
use crate::graph::{strongly_connected_components, topological_sort};

use super::HierarchyError;

/// An activity: a sub-SSP attached to the event edge `(start, end)`.
///
/// The embedded model carries no initial distribution and infinite bounds;
/// both are attached when the activity is planned or evaluated.
#[derive(Debug, Clone)]
pub struct Activity {
    pub id: String,
    pub start_event: usize,
    pub end_event: usize,
    pub model: CsspModel,
    /// Global index of each local state.
    pub global: Vec<usize>,
    local: HashMap<usize, usize>,
}

impl Activity {
    pub fn local_state(&self, global: usize) -> Option<usize> {
        self.local.get(&global).copied()
    }

    pub fn num_secondary(&self) -> usize {
        self.model.num_secondary()
    }
}

/// `sum over members of likelihood * g_index <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// `(activity, secondary cost index)`; cost indices start at 1.
    pub members: Vec<(usize, usize)>,
    pub bound: f64,
}

/// Hierarchical constrained SSP.
#[derive(Debug, Clone)]
pub struct HcsspModel {
    states: Vec<String>,
    state_index: HashMap<String, usize>,
    initial: Vec<(usize, f64)>,
    events: Vec<String>,
    event_index: HashMap<String, usize>,
    start: usize,
    end: usize,
    choices: Vec<Vec<String>>,
    /// `event -> choice -> [(event, prob)]`.
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
    activities: Vec<Activity>,
    constraints: Vec<Constraint>,
    edge_activity: HashMap<(usize, usize), usize>,
}

impl HcsspModel {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_index.get(name).copied()
    }

    pub fn initial(&self) -> &[(usize, f64)] {
        &self.initial
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    pub fn event_name(&self, t: usize) -> &str {
        &self.events[t]
    }

    pub fn event_names(&self) -> &[String] {
        &self.events
    }

    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.event_index.get(name).copied()
    }

    pub fn start_event(&self) -> usize {
        self.start
    }

    pub fn end_event(&self) -> usize {
        self.end
    }

    pub fn choices(&self, t: usize) -> &[String] {
        &self.choices[t]
    }

    pub fn choice_index(&self, t: usize, name: &str) -> Option<usize> {
        self.choices[t].iter().position(|c| c == name)
    }

    /// Successor events of choice `c` at event `t`.
    pub fn event_row(&self, t: usize, c: usize) -> &[(usize, f64)] {
        &self.transitions[t][c]
    }

    pub fn activities(&self) -> &[Activity] {
        &self.activities
    }

    pub fn activity(&self, e: usize) -> &Activity {
        &self.activities[e]
    }

    pub fn activity_index(&self, id: &str) -> Option<usize> {
        self.activities.iter().position(|a| a.id == id)
    }

    /// Activity attached to the event edge `(t, t2)`, if any.
    pub fn edge_activity(&self, t: usize, t2: usize) -> Option<usize> {
        self.edge_activity.get(&(t, t2)).copied()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Event adjacency: `t -> t2` when some choice at `t` reaches `t2`.
    pub fn event_graph(&self) -> Vec<Vec<usize>> {
        self.transitions
            .iter()
            .map(|rows| {
                let mut outs: Vec<usize> = rows
                    .iter()
                    .flatten()
                    .filter(|(_, p)| *p > 0.0)
                    .map(|&(t, _)| t)
                    .collect();
                outs.sort_unstable();
                outs.dedup();
                outs
            })
            .collect()
    }

    /// Events in topological order.
    pub fn event_order(&self) -> Result<Vec<usize>, HierarchyError> {
        topological_sort(&self.event_graph()).ok_or(HierarchyError::CyclicGraph)
    }

    /// Constraint containing `(activity, cost index)`, if any.
    pub fn constraint_of(&self, e: usize, index: usize) -> Option<usize> {
        self.constraints
            .iter()
            .position(|c| c.members.contains(&(e, index)))
    }

    pub fn validate(&self) -> Vec<HierarchyViolation> {
        let mut report = Vec::new();
        let mass: f64 = self.initial.iter().map(|&(_, p)| p).sum();
        if (mass - 1.0).abs() > ROW_TOLERANCE || self.initial.iter().any(|&(_, p)| !(p >= 0.0)) {
            report.push(HierarchyViolation::InitialMass { total: mass });
        }
        for t in 0..self.events.len() {
            if t == self.end {
                if !self.choices[t].is_empty() {
                    report.push(HierarchyViolation::EndEventHasChoices);
                }
                continue;
            }
            if self.choices[t].is_empty() {
                report.push(HierarchyViolation::MissingChoice {
                    event: self.events[t].clone(),
                });
            }
            for (c, row) in self.transitions[t].iter().enumerate() {
                let total: f64 = row.iter().map(|&(_, p)| p).sum();
                let bad = row.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p));
                if bad || (total - 1.0).abs() > ROW_TOLERANCE {
                    report.push(HierarchyViolation::RowSum {
                        event: self.events[t].clone(),
                        choice: self.choices[t][c].clone(),
                        total,
                    });
                }
            }
        }
        let graph = self.event_graph();
        for comp in strongly_connected_components(&graph) {
            let cyclic = comp.len() > 1 || graph[comp[0]].contains(&comp[0]);
            if cyclic {
                report.push(HierarchyViolation::Cycle {
                    events: comp.iter().map(|&t| self.events[t].clone()).collect(),
                });
            }
        }
        let mut seen_edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (e, act) in self.activities.iter().enumerate() {
            if !graph[act.start_event].contains(&act.end_event) {
                report.push(HierarchyViolation::UnrealizableEdge {
                    activity: act.id.clone(),
                });
            }
            if let Some(&other) = seen_edges.get(&(act.start_event, act.end_event)) {
                report.push(HierarchyViolation::SharedEdge {
                    first: self.activities[other].id.clone(),
                    second: act.id.clone(),
                });
            } else {
                seen_edges.insert((act.start_event, act.end_event), e);
            }
            for v in act.model.validate_dynamics() {
                if matches!(v, Violation::BoundCount { .. }) {
                    continue;
                }
                report.push(HierarchyViolation::Activity {
                    activity: act.id.clone(),
                    violation: v,
                });
            }
        }
        let mut membership: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (j, c) in self.constraints.iter().enumerate() {
            if !(c.bound >= 0.0) {
                report.push(HierarchyViolation::NegativeBound {
                    constraint: j,
                    value: c.bound,
                });
            }
            for &(e, i) in &c.members {
                let act = &self.activities[e];
                if i == 0 || i > act.num_secondary() {
                    report.push(HierarchyViolation::UnknownCostIndex {
                        activity: act.id.clone(),
                        index: i,
                    });
                }
                if membership.insert((e, i), j).is_some() {
                    report.push(HierarchyViolation::DuplicateMembership {
                        activity: act.id.clone(),
                        index: i,
                    });
                }
            }
        }
        report
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HierarchyViolation {
    InitialMass {
        total: f64,
    },
    MissingChoice {
        event: String,
    },
    EndEventHasChoices,
    RowSum {
        event: String,
        choice: String,
        total: f64,
    },
    Cycle {
        events: Vec<String>,
    },
    UnrealizableEdge {
        activity: String,
    },
    SharedEdge {
        first: String,
        second: String,
    },
    Activity {
        activity: String,
        violation: Violation,
    },
    NegativeBound {
        constraint: usize,
        value: f64,
    },
    UnknownCostIndex {
        activity: String,
        index: usize,
    },
    DuplicateMembership {
        activity: String,
        index: usize,
    },
}

impl fmt::Display for HierarchyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use HierarchyViolation::*;
        match self {
            InitialMass { total } => write!(f, "initial distribution sums to {total}, expected 1"),
            MissingChoice { event } => write!(f, "event `{event}` has no choice"),
            EndEventHasChoices => write!(f, "end event must not have choices"),
            RowSum { event, choice, total } => write!(
                f,
                "event transition row ({event}, {choice}) sums to {total}, expected 1"
            ),
            Cycle { events } => write!(f, "event graph cycle through [{}]", events.join(", ")),
            UnrealizableEdge { activity } => write!(
                f,
                "activity `{activity}` sits on an edge no event transition realizes"
            ),
            SharedEdge { first, second } => {
                write!(f, "activities `{first}` and `{second}` share an event edge")
            }
            Activity { activity, violation } => write!(f, "activity `{activity}`: {violation}"),
            NegativeBound { constraint, value } => {
                write!(f, "constraint {constraint} has negative bound {value}")
            }
            UnknownCostIndex { activity, index } => {
                write!(f, "activity `{activity}` has no secondary cost {index}")
            }
            DuplicateMembership { activity, index } => write!(
                f,
                "secondary cost {index} of activity `{activity}` appears in more than one constraint"
            ),
        }
    }
}

/// Incremental construction of an [`HcsspModel`]. State names are global:
/// an activity model's states are matched to global states by name.
#[derive(Debug, Clone, Default)]
pub struct HcsspBuilder {
    states: Vec<String>,
    state_index: HashMap<String, usize>,
    initial: Vec<(usize, f64)>,
    events: Vec<String>,
    event_index: HashMap<String, usize>,
    start: Option<usize>,
    end: Option<usize>,
    choices: Vec<Vec<String>>,
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
    activities: Vec<(String, usize, usize, CsspModel)>,
    constraints: Vec<Constraint>,
}

impl HcsspBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        if let Some(&i) = self.state_index.get(&name) {
            return i;
        }
        let i = self.states.len();
        self.state_index.insert(name.clone(), i);
        self.states.push(name);
        i
    }

    pub fn event(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        if let Some(&i) = self.event_index.get(&name) {
            return i;
        }
        let i = self.events.len();
        self.event_index.insert(name.clone(), i);
        self.events.push(name);
        self.choices.push(Vec::new());
        self.transitions.push(Vec::new());
        i
    }

    pub fn lookup_event(&self, name: &str) -> Option<usize> {
        self.event_index.get(name).copied()
    }

    pub fn event_name(&self, t: usize) -> &str {
        &self.events[t]
    }

    pub fn start(&mut self, t: usize) -> &mut Self {
        self.start = Some(t);
        self
    }

    pub fn end(&mut self, t: usize) -> &mut Self {
        self.end = Some(t);
        self
    }

    pub fn initial(&mut self, s: usize, p: f64) -> &mut Self {
        self.initial.push((s, p));
        self
    }

    /// Adds choice `name` at event `t` leading to `row`; returns its index.
    pub fn choice(&mut self, t: usize, name: impl Into<String>, row: Vec<(usize, f64)>) -> usize {
        self.choices[t].push(name.into());
        self.transitions[t].push(row);
        self.choices[t].len() - 1
    }

    pub fn activity(
        &mut self,
        id: impl Into<String>,
        start: usize,
        end: usize,
        model: CsspModel,
    ) -> usize {
        for name in model.state_names() {
            self.state(name.clone());
        }
        self.activities.push((id.into(), start, end, model));
        self.activities.len() - 1
    }

    pub fn constraint(&mut self, members: Vec<(usize, usize)>, bound: f64) -> usize {
        self.constraints.push(Constraint { members, bound });
        self.constraints.len() - 1
    }

    pub fn build(self) -> Result<HcsspModel, HierarchyError> {
        let start = self
            .start
            .ok_or_else(|| HierarchyError::Invalid("start event not set".into()))?;
        let end = self
            .end
            .ok_or_else(|| HierarchyError::Invalid("end event not set".into()))?;
        let mut ids = HashMap::new();
        let mut edge_activity = HashMap::new();
        let mut activities = Vec::with_capacity(self.activities.len());
        for (e, (id, s, t, model)) in self.activities.into_iter().enumerate() {
            if ids.insert(id.clone(), e).is_some() {
                return Err(HierarchyError::Invalid(format!(
                    "duplicate activity id `{id}`"
                )));
            }
            edge_activity.entry((s, t)).or_insert(e);
            let global: Vec<usize> = model
                .state_names()
                .iter()
                .map(|n| self.state_index[n])
                .collect();
            let local = global.iter().enumerate().map(|(l, &g)| (g, l)).collect();
            let bounds = vec![f64::INFINITY; model.num_secondary()];
            activities.push(Activity {
                id,
                start_event: s,
                end_event: t,
                model: model.with_initial(Vec::new()).with_bounds(bounds),
                global,
                local,
            });
        }
        let mut initial: BTreeMap<usize, f64> = BTreeMap::new();
        for (s, p) in self.initial {
            *initial.entry(s).or_default() += p;
        }
        Ok(HcsspModel {
            states: self.states,
            state_index: self.state_index,
            initial: initial.into_iter().collect(),
            events: self.events,
            event_index: self.event_index,
            start,
            end,
            choices: self.choices,
            transitions: self.transitions,
            activities,
            constraints: self.constraints,
            edge_activity,
        })
    }
}
