use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::cssp::{evaluate_policy_full, DeterministicPolicy, PolicyValue};
use crate::hierarchy::{HcsspModel, HierarchicalSolution, SolutionEvaluation};
use crate::reduction::{activity_to_cssp, procedural_to_cssp, CostEstimates};
use crate::solver::{anytime_run, ZeroHeuristic};

use super::{BnbError, Partition};

/// Outcome of planning one activity under the upper limits of a partition.
#[derive(Debug, Clone)]
pub struct ActivityPlan {
    /// Lower bound on the cheapest policy meeting the limits (`phi-`).
    pub lower: f64,
    /// Cost of the incumbent (`phi+`), `+inf` without one.
    pub upper: f64,
    pub incumbent: Option<(DeterministicPolicy, PolicyValue)>,
    /// Global termination distribution used to seed successor activities.
    pub termination: Option<Vec<(usize, f64)>>,
}

/// Upper bound of a partition and the solution that attains it.
#[derive(Debug, Clone)]
pub struct UpperBound {
    /// Exact objective of `solution`; `+inf` when none was found.
    pub alpha: f64,
    /// Procedural incumbent cost under the planned activity costs.
    pub phi_plus: f64,
    pub solution: Option<HierarchicalSolution>,
    pub evaluation: Option<SolutionEvaluation>,
}

#[derive(Debug, Clone)]
pub struct PartitionBounds {
    pub beta: f64,
    pub upper: UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Corner {
    Upper,
    Lower,
}

type PlanKey = (usize, Vec<u64>, Vec<(usize, u64)>);

/// Computes partition bounds, caching activity plans across partitions.
pub struct Bounder<'a> {
    model: &'a HcsspModel,
    l: Option<usize>,
    order: Vec<usize>,
    cache: Mutex<HashMap<PlanKey, Arc<ActivityPlan>>>,
    solves: AtomicUsize,
}

impl<'a> Bounder<'a> {
    pub fn new(model: &'a HcsspModel, l: Option<usize>) -> Result<Self, BnbError> {
        Ok(Self {
            model,
            l,
            order: model.event_order()?,
            cache: Mutex::new(HashMap::new()),
            solves: AtomicUsize::new(0),
        })
    }

    /// Activity problems solved so far (cache misses).
    pub fn activity_solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    fn intervals(&self, q: &Partition, e: usize, corner: Corner) -> Vec<(f64, f64)> {
        (1..=self.model.activity(e).num_secondary())
            .map(|i| match (q.interval(e, i), corner) {
                (None, _) => (0.0, f64::INFINITY),
                (Some(iv), Corner::Upper) => iv,
                (Some((lo, _)), Corner::Lower) => (lo, lo),
            })
            .collect()
    }

    /// Plans activity `e` from the global initial distribution `init`.
    pub fn plan(
        &self,
        q: &Partition,
        e: usize,
        init: &[(usize, f64)],
    ) -> Result<Arc<ActivityPlan>, BnbError> {
        self.plan_at(q, e, init, Corner::Upper)
    }

    fn plan_at(
        &self,
        q: &Partition,
        e: usize,
        init: &[(usize, f64)],
        corner: Corner,
    ) -> Result<Arc<ActivityPlan>, BnbError> {
        let intervals = self.intervals(q, e, corner);
        let key = (
            e,
            intervals.iter().map(|(_, h)| h.to_bits()).collect(),
            init.iter().map(|&(s, p)| (s, p.to_bits())).collect(),
        );
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        let act = self.model.activity(e);
        let problem = activity_to_cssp(act, init, &intervals)?;
        let run = anytime_run(&problem.model, self.l, &ZeroHeuristic)?;
        let seed = run
            .incumbent
            .as_ref()
            .map(|(pi, _)| pi.clone())
            .or_else(|| run.dual.as_ref().map(|d| d.best_dual_policy.clone()));
        let termination = match seed {
            Some(pi) => Some(
                evaluate_policy_full(&problem.model, &pi)
                    .map_err(|err| crate::hierarchy::HierarchyError::Activity(act.id.clone(), err))?
                    .termination
                    .into_iter()
                    .map(|(l, p)| (act.global[l], p))
                    .collect(),
            ),
            None => None,
        };
        let plan = Arc::new(ActivityPlan {
            lower: run.lower_bound,
            upper: run.upper_bound,
            incumbent: run.incumbent,
            termination,
        });
        self.cache.lock().unwrap().insert(key, plan.clone());
        Ok(plan)
    }

    /// Plans every activity reachable in the event graph. The distribution
    /// at an event is the equal-weight mixture of what arrives over its
    /// incoming edges.
    pub fn plan_all(&self, q: &Partition) -> Result<Vec<Option<Arc<ActivityPlan>>>, BnbError> {
        self.plan_all_at(q, Corner::Upper)
    }

    fn plan_all_at(
        &self,
        q: &Partition,
        corner: Corner,
    ) -> Result<Vec<Option<Arc<ActivityPlan>>>, BnbError> {
        let m = self.model;
        let mut plans = vec![None; m.activities().len()];
        let mut at: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); m.num_events()];
        at[m.start_event()] = m.initial().iter().copied().collect();
        for &t in &self.order {
            if t == m.end_event() {
                continue;
            }
            let total: f64 = at[t].values().sum();
            if !(total > 0.0) {
                continue;
            }
            let dist: Vec<(usize, f64)> = at[t].iter().map(|(&s, &p)| (s, p / total)).collect();
            let targets: BTreeSet<usize> = (0..m.choices(t).len())
                .flat_map(|c| m.event_row(t, c).iter())
                .filter(|(_, p)| *p > 0.0)
                .map(|&(t2, _)| t2)
                .collect();
            for t2 in targets {
                let arriving = match m.edge_activity(t, t2) {
                    None => dist.clone(),
                    Some(e) => {
                        let act = m.activity(e);
                        let inside: Vec<(usize, f64)> = dist
                            .iter()
                            .copied()
                            .filter(|(s, _)| act.local_state(*s).is_some())
                            .collect();
                        let mass: f64 = inside.iter().map(|(_, p)| p).sum();
                        if !(mass > 0.0) {
                            continue;
                        }
                        let init: Vec<(usize, f64)> =
                            inside.into_iter().map(|(s, p)| (s, p / mass)).collect();
                        let plan = self.plan_at(q, e, &init, corner)?;
                        let term = plan.termination.clone();
                        plans[e] = Some(plan);
                        match term {
                            Some(term) => term,
                            None => continue,
                        }
                    }
                };
                for (s, p) in arriving {
                    *at[t2].entry(s).or_default() += p;
                }
            }
        }
        Ok(plans)
    }

    fn estimates<F, G>(&self, plans: &[Option<Arc<ActivityPlan>>], f: F, mut g: G) -> CostEstimates
    where
        F: Fn(&ActivityPlan) -> f64,
        G: FnMut(usize, usize, &ActivityPlan) -> f64,
    {
        let mut est = CostEstimates::default();
        for (e, plan) in plans.iter().enumerate() {
            est.f_bar
                .insert(e, plan.as_deref().map_or(f64::INFINITY, &f));
        }
        for c in self.model.constraints() {
            for &(e, i) in &c.members {
                if let Some(plan) = plans[e].as_deref() {
                    est.g_bar.insert((e, i), g(e, i, plan));
                }
            }
        }
        est
    }

    fn lower_from(
        &self,
        q: &Partition,
        plans: &[Option<Arc<ActivityPlan>>],
    ) -> Result<f64, BnbError> {
        let est = self.estimates(
            plans,
            |p| p.lower,
            |e, i, _| q.interval(e, i).map_or(0.0, |(lo, _)| lo),
        );
        let proc = procedural_to_cssp(self.model, &est)?;
        Ok(anytime_run(&proc.model, self.l, &ZeroHeuristic)?.lower_bound)
    }

    fn upper_from(&self, plans: &[Option<Arc<ActivityPlan>>]) -> Result<UpperBound, BnbError> {
        let none = UpperBound {
            alpha: f64::INFINITY,
            phi_plus: f64::INFINITY,
            solution: None,
            evaluation: None,
        };
        let est = self.estimates(
            plans,
            |p| p.upper,
            |_, i, p| {
                p.incumbent
                    .as_ref()
                    .map_or(f64::INFINITY, |(_, v)| v.raw_g[i - 1])
            },
        );
        let proc = procedural_to_cssp(self.model, &est)?;
        let run = anytime_run(&proc.model, self.l, &ZeroHeuristic)?;
        let Some((policy, _)) = run.incumbent else {
            return Ok(none);
        };
        let rho = proc.to_procedural(&policy);
        let gamma: BTreeMap<usize, DeterministicPolicy> = plans
            .iter()
            .enumerate()
            .filter_map(|(e, p)| {
                p.as_ref()
                    .and_then(|p| p.incumbent.as_ref())
                    .map(|(pi, _)| (e, pi.clone()))
            })
            .collect();
        match HierarchicalSolution::assemble(self.model, rho, gamma) {
            Ok((sol, ev)) if ev.feasible => Ok(UpperBound {
                alpha: sol.objective,
                phi_plus: run.upper_bound,
                solution: Some(sol),
                evaluation: Some(ev),
            }),
            _ => Ok(UpperBound {
                phi_plus: run.upper_bound,
                ..none
            }),
        }
    }

    /// Lower bound on the best solution whose activity costs lie in `q`.
    pub fn compute_lb(&self, q: &Partition) -> Result<f64, BnbError> {
        let plans = self.plan_all(q)?;
        self.lower_from(q, &plans)
    }

    /// Feasible solution built from per-activity incumbents under `q`. Two
    /// candidates are assembled, one from plans under the upper limits of
    /// `q` and one under its lower limits, and the better one is kept.
    pub fn compute_ub(&self, q: &Partition) -> Result<UpperBound, BnbError> {
        let plans = self.plan_all(q)?;
        self.best_upper(q, &plans)
    }

    fn best_upper(
        &self,
        q: &Partition,
        plans: &[Option<Arc<ActivityPlan>>],
    ) -> Result<UpperBound, BnbError> {
        let upper = self.upper_from(plans)?;
        if q.dims() == 0 || q.lo() == q.hi() {
            return Ok(upper);
        }
        let lower = self.upper_from(&self.plan_all_at(q, Corner::Lower)?)?;
        Ok(if lower.alpha < upper.alpha {
            lower
        } else {
            upper
        })
    }

    pub fn bound(&self, q: &Partition) -> Result<PartitionBounds, BnbError> {
        let plans = self.plan_all(q)?;
        Ok(PartitionBounds {
            beta: self.lower_from(q, &plans)?,
            upper: self.best_upper(q, &plans)?,
        })
    }
}
