use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cssp::{
    build_fragment, fragment_tables, CostTable, DeterministicPolicy, Fragment, TransitionTable,
};

use super::eval::{HierarchicalSolution, ProceduralPolicy};
use super::model::{HcsspBuilder, HcsspModel};
use super::HierarchyError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityFile {
    pub id: String,
    pub start_event: String,
    pub end_event: String,
    pub states: Vec<String>,
    pub goals: Vec<String>,
    pub actions: BTreeMap<String, Vec<String>>,
    pub transitions: TransitionTable,
    pub costs: Vec<CostTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub activities: Vec<String>,
    /// Secondary cost index per member activity; 1 when omitted.
    #[serde(default)]
    pub cost_index: BTreeMap<String, usize>,
    pub bound: f64,
}

/// JSON HC-SSP file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcsspFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    pub initial: BTreeMap<String, f64>,
    pub events: Vec<String>,
    pub start_event: String,
    pub end_event: String,
    pub choices: BTreeMap<String, Vec<String>>,
    pub event_transitions: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    pub activities: Vec<ActivityFile>,
    #[serde(default)]
    pub constraints: Vec<ConstraintFile>,
}

impl HcsspFile {
    pub fn to_model(&self) -> Result<HcsspModel, HierarchyError> {
        let mut b = HcsspBuilder::new();
        for s in &self.states {
            b.state(s.clone());
        }
        for t in &self.events {
            if b.lookup_event(t).is_some() {
                return Err(HierarchyError::Invalid(format!("duplicate event `{t}`")));
            }
            b.event(t.clone());
        }
        let event = |b: &HcsspBuilder, name: &str| {
            b.lookup_event(name)
                .ok_or_else(|| HierarchyError::Invalid(format!("unknown event `{name}`")))
        };
        let start = event(&b, &self.start_event)?;
        let end = event(&b, &self.end_event)?;
        b.start(start).end(end);
        for name in self.choices.keys().chain(self.event_transitions.keys()) {
            event(&b, name)?;
        }
        for t in &self.events {
            let Some(domain) = self.choices.get(t) else {
                continue;
            };
            let ti = event(&b, t)?;
            for c in domain {
                let row = self
                    .event_transitions
                    .get(t)
                    .and_then(|r| r.get(c))
                    .cloned()
                    .unwrap_or_default();
                let mut out = Vec::with_capacity(row.len());
                for (t2, p) in row {
                    out.push((event(&b, &t2)?, p));
                }
                b.choice(ti, c.clone(), out);
            }
        }
        for (t, rows) in &self.event_transitions {
            for c in rows.keys() {
                if !self.choices.get(t).is_some_and(|d| d.contains(c)) {
                    return Err(HierarchyError::Invalid(format!(
                        "transition for undeclared choice `{c}` at `{t}`"
                    )));
                }
            }
        }
        for a in &self.activities {
            let model = build_fragment(&Fragment {
                states: &a.states,
                goals: &a.goals,
                actions: &a.actions,
                transitions: &a.transitions,
                costs: &a.costs,
            })
            .map_err(|e| HierarchyError::Invalid(format!("activity `{}`: {e}", a.id)))?
            .build();
            let s = event(&b, &a.start_event)?;
            let t = event(&b, &a.end_event)?;
            b.activity(a.id.clone(), s, t, model);
        }
        for (state, &p) in &self.initial {
            let s = b.state(state.clone());
            b.initial(s, p);
        }
        let ids: Vec<&str> = self.activities.iter().map(|a| a.id.as_str()).collect();
        for c in &self.constraints {
            let mut members = Vec::new();
            for id in &c.activities {
                let e = ids.iter().position(|x| x == id).ok_or_else(|| {
                    HierarchyError::Invalid(format!("unknown activity `{id}` in constraint"))
                })?;
                members.push((e, c.cost_index.get(id).copied().unwrap_or(1)));
            }
            for id in c.cost_index.keys() {
                if !c.activities.contains(id) {
                    return Err(HierarchyError::Invalid(format!(
                        "cost index given for `{id}`, which is not a member of the constraint"
                    )));
                }
            }
            b.constraint(members, c.bound);
        }
        b.build()
    }

    pub fn from_model(model: &HcsspModel) -> Self {
        let name = |t: usize| model.event_name(t).to_string();
        let mut choices = BTreeMap::new();
        let mut event_transitions = BTreeMap::new();
        for t in 0..model.num_events() {
            if model.choices(t).is_empty() {
                continue;
            }
            choices.insert(name(t), model.choices(t).to_vec());
            let rows: BTreeMap<String, BTreeMap<String, f64>> = model
                .choices(t)
                .iter()
                .enumerate()
                .map(|(c, cname)| {
                    let mut row = BTreeMap::new();
                    for &(t2, p) in model.event_row(t, c) {
                        *row.entry(name(t2)).or_insert(0.0) += p;
                    }
                    (cname.clone(), row)
                })
                .collect();
            event_transitions.insert(name(t), rows);
        }
        let activities = model
            .activities()
            .iter()
            .map(|a| {
                let (actions, transitions, costs) = fragment_tables(&a.model);
                ActivityFile {
                    id: a.id.clone(),
                    start_event: name(a.start_event),
                    end_event: name(a.end_event),
                    states: a.model.state_names().to_vec(),
                    goals: a
                        .model
                        .goals()
                        .map(|g| a.model.state_name(g).to_string())
                        .collect(),
                    actions,
                    transitions,
                    costs,
                }
            })
            .collect();
        let constraints = model
            .constraints()
            .iter()
            .map(|c| ConstraintFile {
                activities: c
                    .members
                    .iter()
                    .map(|&(e, _)| model.activity(e).id.clone())
                    .collect(),
                cost_index: c
                    .members
                    .iter()
                    .map(|&(e, i)| (model.activity(e).id.clone(), i))
                    .collect(),
                bound: c.bound,
            })
            .collect();
        let in_activities = model
            .activities()
            .iter()
            .flat_map(|a| a.model.state_names())
            .chain(
                model
                    .initial()
                    .iter()
                    .map(|&(s, _)| &model.state_names()[s]),
            )
            .collect::<std::collections::HashSet<_>>();
        let declared_needed = model
            .state_names()
            .iter()
            .any(|s| !in_activities.contains(s));
        Self {
            states: if declared_needed {
                model.state_names().to_vec()
            } else {
                Vec::new()
            },
            initial: model
                .initial()
                .iter()
                .map(|&(s, p)| (model.state_name(s).to_string(), p))
                .collect(),
            events: model.event_names().to_vec(),
            start_event: name(model.start_event()),
            end_event: name(model.end_event()),
            choices,
            event_transitions,
            activities,
            constraints,
        }
    }
}

/// Serialized hierarchical solution with its bound certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub procedural: BTreeMap<String, String>,
    pub activities: BTreeMap<String, BTreeMap<String, String>>,
    pub objective: f64,
    pub constraint_values: Vec<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl SolutionFile {
    pub fn new(
        model: &HcsspModel,
        sol: &HierarchicalSolution,
        alpha: Option<f64>,
        beta: Option<f64>,
    ) -> Self {
        Self {
            procedural: sol.rho.to_named(model),
            activities: sol
                .gamma
                .iter()
                .map(|(&e, pi)| {
                    let act = model.activity(e);
                    (act.id.clone(), pi.to_named(&act.model))
                })
                .collect(),
            objective: sol.objective,
            constraint_values: sol.constraint_values.clone(),
            alpha,
            beta,
        }
    }

    /// Policies named in the file, resolved against `model`.
    pub fn policies(
        &self,
        model: &HcsspModel,
    ) -> Result<(ProceduralPolicy, BTreeMap<usize, DeterministicPolicy>), HierarchyError> {
        let rho = ProceduralPolicy::from_named(model, &self.procedural)?;
        let mut gamma = BTreeMap::new();
        for (id, named) in &self.activities {
            let e = model
                .activity_index(id)
                .ok_or_else(|| HierarchyError::Invalid(format!("unknown activity `{id}`")))?;
            let pi = DeterministicPolicy::from_named(&model.activity(e).model, named)
                .map_err(HierarchyError::Invalid)?;
            gamma.insert(e, pi);
        }
        Ok((rho, gamma))
    }
}
