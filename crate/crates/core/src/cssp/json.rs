use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{CsspBuilder, CsspModel, Outcome};

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("transition for undeclared action `{action}` at `{state}`")]
    UndeclaredAction { state: String, action: String },
    #[error("{0}")]
    Invalid(String),
}

/// A cost entry is either one value charged for every successor or a
/// per-successor table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostEntry {
    Flat(f64),
    PerSuccessor(BTreeMap<String, f64>),
}

/// `state -> action -> cost entry`; missing entries cost zero.
pub type CostTable = BTreeMap<String, BTreeMap<String, CostEntry>>;

/// `state -> action -> {successor: probability}`.
pub type TransitionTable = BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>;

/// JSON problem file. `bounds` entries may be `null` for an unbounded cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsspFile {
    pub states: Vec<String>,
    pub initial: BTreeMap<String, f64>,
    pub goals: Vec<String>,
    pub actions: BTreeMap<String, Vec<String>>,
    pub transitions: TransitionTable,
    pub costs: Vec<CostTable>,
    #[serde(default)]
    pub bounds: Vec<Option<f64>>,
}

/// Dynamics part shared with activity fragments.
pub(crate) struct Fragment<'a> {
    pub states: &'a [String],
    pub goals: &'a [String],
    pub actions: &'a BTreeMap<String, Vec<String>>,
    pub transitions: &'a TransitionTable,
    pub costs: &'a [CostTable],
}

pub(crate) fn build_fragment(frag: &Fragment<'_>) -> Result<CsspBuilder, FormatError> {
    if frag.costs.is_empty() {
        return Err(FormatError::Invalid(
            "`costs` must contain at least the primary cost table".into(),
        ));
    }
    let mut b = CsspBuilder::new(frag.costs.len() - 1);
    for s in frag.states {
        if b.lookup(s).is_some() {
            return Err(FormatError::DuplicateState(s.clone()));
        }
        b.state(s.clone());
    }
    let lookup = |b: &CsspBuilder, s: &str| {
        b.lookup(s)
            .ok_or_else(|| FormatError::UnknownState(s.to_string()))
    };
    for g in frag.goals {
        let i = lookup(&b, g)?;
        b.set_goal(i);
    }
    for state in frag.actions.keys().chain(frag.transitions.keys()) {
        lookup(&b, state)?;
    }
    for (state, rows) in frag.transitions {
        let declared = frag.actions.get(state);
        for action in rows.keys() {
            if !declared.is_some_and(|d| d.contains(action)) {
                return Err(FormatError::UndeclaredAction {
                    state: state.clone(),
                    action: action.clone(),
                });
            }
        }
    }
    for table in frag.costs {
        for (state, row) in table {
            lookup(&b, state)?;
            for (action, entry) in row {
                if !frag.actions.get(state).is_some_and(|d| d.contains(action)) {
                    return Err(FormatError::UndeclaredAction {
                        state: state.clone(),
                        action: action.clone(),
                    });
                }
                if let CostEntry::PerSuccessor(m) = entry {
                    for succ in m.keys() {
                        lookup(&b, succ)?;
                    }
                }
            }
        }
    }
    // Declared order of states and actions is preserved.
    for state in frag.states {
        let Some(names) = frag.actions.get(state) else {
            continue;
        };
        let s = b.lookup(state).unwrap();
        for action in names {
            let row = frag
                .transitions
                .get(state)
                .and_then(|r| r.get(action))
                .cloned()
                .unwrap_or_default();
            let mut outcomes = Vec::with_capacity(row.len());
            for (succ, &prob) in &row {
                let next = lookup(&b, succ)?;
                let costs = frag
                    .costs
                    .iter()
                    .map(|table| match table.get(state).and_then(|r| r.get(action)) {
                        None => 0.0,
                        Some(CostEntry::Flat(c)) => *c,
                        Some(CostEntry::PerSuccessor(m)) => m.get(succ).copied().unwrap_or(0.0),
                    })
                    .collect();
                outcomes.push((next, Outcome::new(next, prob, costs)));
            }
            outcomes.sort_by_key(|(n, _)| *n);
            b.action(
                s,
                action.clone(),
                outcomes.into_iter().map(|(_, o)| o).collect(),
            );
        }
    }
    Ok(b)
}

pub(crate) fn fragment_tables(
    model: &CsspModel,
) -> (
    BTreeMap<String, Vec<String>>,
    TransitionTable,
    Vec<CostTable>,
) {
    let mut actions = BTreeMap::new();
    let mut transitions = TransitionTable::new();
    let mut costs: Vec<CostTable> = vec![CostTable::new(); model.num_costs()];
    for s in 0..model.num_states() {
        let acts = model.actions(s);
        if acts.is_empty() {
            continue;
        }
        let sname = model.state_name(s).to_string();
        actions.insert(
            sname.clone(),
            acts.iter().map(|a| a.name().to_string()).collect(),
        );
        for a in acts {
            let mut row = BTreeMap::new();
            for o in a.outcomes() {
                *row.entry(model.state_name(o.next).to_string())
                    .or_insert(0.0) += o.prob;
            }
            transitions
                .entry(sname.clone())
                .or_default()
                .insert(a.name().to_string(), row);
            for (i, table) in costs.iter_mut().enumerate() {
                let values: Vec<f64> = a.outcomes().iter().map(|o| o.costs[i]).collect();
                if values.iter().all(|&c| c == 0.0) {
                    continue;
                }
                let entry = if values.iter().all(|&c| c == values[0]) {
                    CostEntry::Flat(values[0])
                } else {
                    CostEntry::PerSuccessor(
                        a.outcomes()
                            .iter()
                            .filter(|o| o.costs[i] != 0.0)
                            .map(|o| (model.state_name(o.next).to_string(), o.costs[i]))
                            .collect(),
                    )
                };
                table
                    .entry(sname.clone())
                    .or_default()
                    .insert(a.name().to_string(), entry);
            }
        }
    }
    (actions, transitions, costs)
}

impl CsspFile {
    pub fn to_model(&self) -> Result<CsspModel, FormatError> {
        let mut b = build_fragment(&Fragment {
            states: &self.states,
            goals: &self.goals,
            actions: &self.actions,
            transitions: &self.transitions,
            costs: &self.costs,
        })?;
        for (state, &p) in &self.initial {
            let s = b
                .lookup(state)
                .ok_or_else(|| FormatError::UnknownState(state.clone()))?;
            b.initial(s, p);
        }
        b.bounds(
            self.bounds
                .iter()
                .map(|b| b.unwrap_or(f64::INFINITY))
                .collect(),
        );
        Ok(b.build())
    }

    pub fn from_model(model: &CsspModel) -> Self {
        let (actions, transitions, costs) = fragment_tables(model);
        Self {
            states: model.state_names().to_vec(),
            initial: model
                .initial()
                .iter()
                .map(|&(s, p)| (model.state_name(s).to_string(), p))
                .collect(),
            goals: model
                .goals()
                .map(|g| model.state_name(g).to_string())
                .collect(),
            actions,
            transitions,
            costs,
            bounds: model
                .bounds()
                .iter()
                .map(|&b| b.is_finite().then_some(b))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CH1: &str = r#"{
        "states": ["s0", "s1"],
        "initial": {"s0": 1.0},
        "goals": ["s1"],
        "actions": {"s0": ["a_fast", "a_slow"]},
        "transitions": {"s0": {"a_fast": {"s1": 1.0}, "a_slow": {"s1": 1.0}}},
        "costs": [
            {"s0": {"a_fast": 1.0, "a_slow": 10.0}},
            {"s0": {"a_fast": {"s1": 10.0}, "a_slow": 1.0}}
        ],
        "bounds": [5.0]
    }"#;

    #[test]
    fn parses_ch1() {
        let file: CsspFile = serde_json::from_str(CH1).unwrap();
        let m = file.to_model().unwrap();
        assert!(m.validate().is_empty());
        assert_eq!(m.actions(0).len(), 2);
        assert_eq!(m.actions(0)[0].name(), "a_fast");
        assert_eq!(m.actions(0)[0].expected_costs(), &[1.0, 10.0]);
        assert_eq!(m.bounds(), &[5.0]);
    }

    #[test]
    fn round_trip_preserves_model() {
        let file: CsspFile = serde_json::from_str(CH1).unwrap();
        let m = file.to_model().unwrap();
        let again = CsspFile::from_model(&m).to_model().unwrap();
        assert_eq!(CsspFile::from_model(&again), CsspFile::from_model(&m));
    }

    #[test]
    fn unknown_successor_is_rejected() {
        let bad = CH1.replace(r#""a_slow": {"s1": 1.0}}"#, r#""a_slow": {"s9": 1.0}}"#);
        let file: CsspFile = serde_json::from_str(&bad).unwrap();
        assert_eq!(
            file.to_model().unwrap_err(),
            FormatError::UnknownState("s9".into())
        );
    }
}
