//! Procedural and activity planning as constrained SSPs.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cssp::{CsspBuilder, CsspModel, DeterministicPolicy, Outcome};
use crate::hierarchy::{Activity, HcsspModel, ProceduralPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("no primary cost estimate for activity `{0}`")]
    MissingEstimate(String),
    #[error("initial distribution of activity `{0}` has mass outside its states")]
    SupportOutsideActivity(String),
    #[error("activity `{activity}` has {expected} secondary costs, got {found} intervals")]
    IntervalCount {
        activity: String,
        expected: usize,
        found: usize,
    },
    #[error("interval [{lo}, {hi}] is not well ordered")]
    BadInterval { lo: f64, hi: f64 },
}

/// Per-activity cost estimates used to build the procedural problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostEstimates {
    /// Estimated expected primary cost per activity; `+inf` marks an
    /// activity that cannot be executed.
    pub f_bar: BTreeMap<usize, f64>,
    /// Estimated expected secondary cost per `(activity, cost index)`.
    /// Missing entries count as zero.
    pub g_bar: BTreeMap<(usize, usize), f64>,
}

/// Procedural C-SSP: states are events, actions are the choices that do not
/// lead into an activity with an infinite estimate.
#[derive(Debug, Clone)]
pub struct ProceduralProblem {
    pub model: CsspModel,
    /// Choice index of each action, per event.
    pub choice_of_action: Vec<Vec<usize>>,
}

impl ProceduralProblem {
    pub fn to_procedural(&self, policy: &DeterministicPolicy) -> ProceduralPolicy {
        let mut rho = ProceduralPolicy::empty(self.choice_of_action.len());
        for (t, a) in policy.decisions() {
            rho.set(t, self.choice_of_action[t][a]);
        }
        rho
    }
}

pub fn procedural_to_cssp(
    model: &HcsspModel,
    est: &CostEstimates,
) -> Result<ProceduralProblem, ReductionError> {
    let num_constraints = model.constraints().len();
    let mut cost_of = vec![vec![0.0; num_constraints + 1]; model.activities().len()];
    for (e, act) in model.activities().iter().enumerate() {
        cost_of[e][0] = *est
            .f_bar
            .get(&e)
            .ok_or_else(|| ReductionError::MissingEstimate(act.id.clone()))?;
    }
    for (j, c) in model.constraints().iter().enumerate() {
        for &(e, i) in &c.members {
            cost_of[e][j + 1] = est.g_bar.get(&(e, i)).copied().unwrap_or(0.0);
        }
    }

    let mut b = CsspBuilder::new(num_constraints);
    for t in 0..model.num_events() {
        b.state(model.event_name(t));
    }
    b.set_goal(model.end_event());
    b.initial(model.start_event(), 1.0);
    let mut choice_of_action = vec![Vec::new(); model.num_events()];
    for t in 0..model.num_events() {
        if t == model.end_event() {
            continue;
        }
        'choice: for (c, name) in model.choices(t).iter().enumerate() {
            let mut outcomes = Vec::new();
            for &(t2, p) in model.event_row(t, c) {
                let costs = match model.edge_activity(t, t2) {
                    Some(e) => cost_of[e].clone(),
                    None => vec![0.0; num_constraints + 1],
                };
                if p > 0.0 && !costs[0].is_finite() {
                    continue 'choice;
                }
                outcomes.push(Outcome::new(t2, p, costs));
            }
            b.action(t, name.clone(), outcomes);
            choice_of_action[t].push(c);
        }
    }
    b.bounds(model.constraints().iter().map(|c| c.bound).collect());
    Ok(ProceduralProblem {
        model: b.build(),
        choice_of_action,
    })
}

/// Activity C-SSP with its lower budget limits kept alongside.
#[derive(Debug, Clone)]
pub struct ActivityProblem {
    pub model: CsspModel,
    pub lower_limits: Vec<f64>,
}

/// Builds the activity C-SSP from a global initial distribution and one
/// `[lo, hi]` interval per secondary cost; `hi` becomes the bound.
pub fn activity_to_cssp(
    activity: &Activity,
    init: &[(usize, f64)],
    intervals: &[(f64, f64)],
) -> Result<ActivityProblem, ReductionError> {
    if intervals.len() != activity.num_secondary() {
        return Err(ReductionError::IntervalCount {
            activity: activity.id.clone(),
            expected: activity.num_secondary(),
            found: intervals.len(),
        });
    }
    if let Some(&(lo, hi)) = intervals.iter().find(|(lo, hi)| !(lo <= hi)) {
        return Err(ReductionError::BadInterval { lo, hi });
    }
    let mut local = Vec::with_capacity(init.len());
    for &(s, p) in init {
        match activity.local_state(s) {
            Some(l) => local.push((l, p)),
            None if p > 0.0 => {
                return Err(ReductionError::SupportOutsideActivity(activity.id.clone()))
            }
            None => {}
        }
    }
    Ok(ActivityProblem {
        model: activity
            .model
            .with_initial(local)
            .with_bounds(intervals.iter().map(|&(_, hi)| hi).collect()),
        lower_limits: intervals.iter().map(|&(lo, _)| lo).collect(),
    })
}
