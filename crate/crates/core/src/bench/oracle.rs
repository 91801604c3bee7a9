use std::collections::BTreeMap;

use crate::cssp::{
    evaluate_policy, CsspModel, DeterministicPolicy, PolicyValue, FEASIBILITY_TOLERANCE,
};
use crate::hierarchy::{
    activity_likelihoods, chain_distributions, evaluate_solution, procedural_policies,
    topological_order, HcsspModel, HierarchicalSolution, ProceduralPolicy,
};

use super::BenchError;

/// Largest number of candidates an oracle will examine.
pub const ORACLE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct OracleResult<T> {
    /// `None` when no feasible candidate exists.
    pub optimum: Option<f64>,
    pub argmin: Option<T>,
    /// Candidates examined.
    pub count: usize,
}

impl<T> OracleResult<T> {
    pub fn is_infeasible(&self) -> bool {
        self.optimum.is_none()
    }
}

/// Every proper deterministic policy over the states reachable from the
/// initial distribution, with its value.
pub fn enumerate_policies(
    model: &CsspModel,
    limit: usize,
) -> Result<Vec<(DeterministicPolicy, PolicyValue)>, BenchError> {
    let states: Vec<usize> = model
        .potentially_reachable()
        .into_iter()
        .filter(|&s| !model.is_goal(s) && !model.actions(s).is_empty())
        .collect();
    let radix: Vec<usize> = states.iter().map(|&s| model.actions(s).len()).collect();
    let total = radix
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r).filter(|&n| n <= limit));
    let Some(total) = total else {
        return Err(BenchError::TooLarge { limit });
    };
    let mut out = Vec::new();
    let mut digits = vec![0; states.len()];
    for _ in 0..total {
        let policy = DeterministicPolicy::from_pairs(
            model.num_states(),
            states.iter().copied().zip(digits.iter().copied()),
        );
        if let Ok(v) = evaluate_policy(model, &policy) {
            out.push((policy, v));
        }
        for (d, r) in digits.iter_mut().zip(&radix) {
            *d += 1;
            if *d < *r {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}

/// Exhaustive constrained optimum over deterministic policies.
pub fn brute_force_cssp(
    model: &CsspModel,
) -> Result<OracleResult<(DeterministicPolicy, PolicyValue)>, BenchError> {
    let all = enumerate_policies(model, ORACLE_LIMIT)?;
    let count = all.len();
    let best = all.into_iter().filter(|(_, v)| v.is_feasible()).fold(
        None::<(DeterministicPolicy, PolicyValue)>,
        |best, (p, v)| match best {
            Some(b) if b.1.f <= v.f => Some(b),
            _ => Some((p.restrict_to_reachable(model), v)),
        },
    );
    Ok(OracleResult {
        optimum: best.as_ref().map(|(_, v)| v.f),
        argmin: best,
        count,
    })
}

/// Exhaustive HC-SSP optimum over procedural policies and activity
/// policies.
pub fn brute_force_hcssp(
    model: &HcsspModel,
) -> Result<OracleResult<HierarchicalSolution>, BenchError> {
    brute_force_hcssp_filtered(model, &|_, _| true)
}

/// Like [`brute_force_hcssp`], but activity policies rejected by
/// `keep(activity, value)` are never used. The value is computed under the
/// activity's chained initial distribution.
///
/// When every activity has a single goal state the distribution entering an
/// activity depends on the procedural policy only, so each activity is
/// enumerated once per procedural policy and only its Pareto-optimal
/// `(f, g)` points are combined. Otherwise all combinations are chained and
/// evaluated.
pub fn brute_force_hcssp_filtered(
    model: &HcsspModel,
    keep: &dyn Fn(usize, &PolicyValue) -> bool,
) -> Result<OracleResult<HierarchicalSolution>, BenchError> {
    let single_goal = model
        .activities()
        .iter()
        .all(|a| a.model.goals().count() == 1);
    let order = topological_order(model)?;
    let mut count = 0;
    let mut best: Option<(f64, ProceduralPolicy, BTreeMap<usize, DeterministicPolicy>)> = None;
    for rho in procedural_policies(model)? {
        let lik = activity_likelihoods(model, &rho)?;
        let active: Vec<usize> = order.iter().copied().filter(|&e| lik[e] > 0.0).collect();
        let found = if single_goal {
            pareto_search(model, &rho, &lik, &active, keep, &mut count)?
        } else {
            let mut prefix = BTreeMap::new();
            let mut found = None;
            full_search(
                model,
                &rho,
                &active,
                keep,
                &mut prefix,
                &mut found,
                &mut count,
            )?;
            found
        };
        if let Some((obj, gamma)) = found {
            if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
                best = Some((obj, rho, gamma));
            }
        }
    }
    match best {
        None => Ok(OracleResult {
            optimum: None,
            argmin: None,
            count,
        }),
        Some((_, rho, gamma)) => {
            let (sol, _) = HierarchicalSolution::assemble(model, rho, gamma)?;
            Ok(OracleResult {
                optimum: Some(sol.objective),
                argmin: Some(sol),
                count,
            })
        }
    }
}

fn feasible(model: &HcsspModel, values: &[f64]) -> bool {
    values
        .iter()
        .zip(model.constraints())
        .all(|(v, c)| *v <= c.bound + FEASIBILITY_TOLERANCE)
}

fn candidates(
    model: &HcsspModel,
    e: usize,
    init: Vec<(usize, f64)>,
    keep: &dyn Fn(usize, &PolicyValue) -> bool,
    count: &mut usize,
) -> Result<Vec<(DeterministicPolicy, PolicyValue)>, BenchError> {
    let m = model.activity(e).model.with_initial(init);
    let all = enumerate_policies(&m, ORACLE_LIMIT.saturating_sub(*count))?;
    *count += all.len();
    Ok(all
        .into_iter()
        .filter(|(_, v)| keep(e, v))
        .map(|(p, v)| (p.restrict_to_reachable(&m), v))
        .collect())
}

fn pareto(
    mut cands: Vec<(DeterministicPolicy, PolicyValue)>,
) -> Vec<(DeterministicPolicy, PolicyValue)> {
    cands.sort_by(|a, b| a.1.f.total_cmp(&b.1.f));
    let mut kept: Vec<(DeterministicPolicy, PolicyValue)> = Vec::new();
    for (p, v) in cands {
        let dominated = kept
            .iter()
            .any(|(_, k)| k.f <= v.f && k.raw_g.iter().zip(&v.raw_g).all(|(a, b)| a <= b));
        if !dominated {
            kept.push((p, v));
        }
    }
    kept
}

type Found = Option<(f64, BTreeMap<usize, DeterministicPolicy>)>;

fn pareto_search(
    model: &HcsspModel,
    rho: &ProceduralPolicy,
    lik: &[f64],
    active: &[usize],
    keep: &dyn Fn(usize, &PolicyValue) -> bool,
    count: &mut usize,
) -> Result<Found, BenchError> {
    let mut prefix = BTreeMap::new();
    let mut fronts = Vec::with_capacity(active.len());
    for &e in active {
        let init = chain_distributions(model, rho, &prefix, e)?;
        let front = pareto(candidates(model, e, init, keep, count)?);
        let Some((p, _)) = front.first() else {
            return Ok(None);
        };
        prefix.insert(e, p.clone());
        fronts.push(front);
    }
    let mut best: Found = None;
    let mut pick = vec![0; active.len()];
    loop {
        *count += 1;
        if *count > ORACLE_LIMIT {
            return Err(BenchError::TooLarge {
                limit: ORACLE_LIMIT,
            });
        }
        let mut obj = 0.0;
        let mut values = vec![0.0; model.constraints().len()];
        for (k, &e) in active.iter().enumerate() {
            let v = &fronts[k][pick[k]].1;
            obj += lik[e] * v.f;
            for (j, c) in model.constraints().iter().enumerate() {
                for &(m, i) in &c.members {
                    if m == e {
                        values[j] += lik[e] * v.raw_g[i - 1];
                    }
                }
            }
        }
        if feasible(model, &values) && best.as_ref().is_none_or(|(b, _)| obj < *b) {
            let gamma = active
                .iter()
                .enumerate()
                .map(|(k, &e)| (e, fronts[k][pick[k]].0.clone()))
                .collect();
            best = Some((obj, gamma));
        }
        let mut k = 0;
        loop {
            if k == active.len() {
                return Ok(best);
            }
            pick[k] += 1;
            if pick[k] < fronts[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn full_search(
    model: &HcsspModel,
    rho: &ProceduralPolicy,
    active: &[usize],
    keep: &dyn Fn(usize, &PolicyValue) -> bool,
    prefix: &mut BTreeMap<usize, DeterministicPolicy>,
    best: &mut Found,
    count: &mut usize,
) -> Result<(), BenchError> {
    let Some((&e, rest)) = active.split_first() else {
        *count += 1;
        if *count > ORACLE_LIMIT {
            return Err(BenchError::TooLarge {
                limit: ORACLE_LIMIT,
            });
        }
        let ev = evaluate_solution(model, rho, prefix)?;
        if ev.feasible && best.as_ref().is_none_or(|(b, _)| ev.objective < *b) {
            *best = Some((ev.objective, prefix.clone()));
        }
        return Ok(());
    };
    let init = chain_distributions(model, rho, prefix, e)?;
    for (p, _) in candidates(model, e, init, keep, count)? {
        prefix.insert(e, p);
        full_search(model, rho, rest, keep, prefix, best, count)?;
    }
    prefix.remove(&e);
    Ok(())
}
