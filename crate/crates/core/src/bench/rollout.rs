use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cssp::{Action, CsspModel, DeterministicPolicy};
use crate::hierarchy::{HcsspModel, ProceduralPolicy};

use super::BenchError;

/// Episodes longer than this abort the rollout.
pub const MAX_EPISODE_STEPS: usize = 10_000_000;

/// Sample means of the primary cost and of each tracked secondary quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub episodes: usize,
    pub mean: f64,
    pub std_err: f64,
    pub secondary_means: Vec<f64>,
}

impl McEstimate {
    /// `|value - mean|` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.std_err == 0.0 {
            if value == self.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (value - self.mean).abs() / self.std_err
        }
    }
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    sum: f64,
    sum_sq: f64,
    secondary: Vec<f64>,
}

impl Accumulator {
    fn push(&mut self, cost: f64, secondary: &[f64]) {
        self.n += 1;
        self.sum += cost;
        self.sum_sq += cost * cost;
        if self.secondary.len() < secondary.len() {
            self.secondary.resize(secondary.len(), 0.0);
        }
        for (acc, g) in self.secondary.iter_mut().zip(secondary) {
            *acc += g;
        }
    }

    fn finish(self) -> McEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
        McEstimate {
            episodes: self.n,
            mean,
            std_err: (var / n).sqrt(),
            secondary_means: self.secondary.iter().map(|s| s / n).collect(),
        }
    }
}

fn sample<T: Copy>(rng: &mut impl Rng, items: impl IntoIterator<Item = (T, f64)>) -> Option<T> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (x, p) in items {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(x);
        if u < acc {
            return last;
        }
    }
    last
}

fn step<'a>(rng: &mut impl Rng, action: &'a Action) -> Option<&'a crate::cssp::Outcome> {
    let k = sample(
        rng,
        action
            .outcomes()
            .iter()
            .enumerate()
            .map(|(i, o)| (i, o.prob)),
    )?;
    Some(&action.outcomes()[k])
}

/// Runs `policy` from a state sampled from the initial distribution until
/// a goal, returning the accumulated cost vector.
fn run_policy(
    rng: &mut impl Rng,
    model: &CsspModel,
    policy: &DeterministicPolicy,
    mut s: usize,
    costs: &mut [f64],
) -> Result<usize, BenchError> {
    let mut steps = 0;
    while !model.is_goal(s) {
        let a = policy.get(s).ok_or_else(|| {
            BenchError::Rollout(format!("no action at state `{}`", model.state_name(s)))
        })?;
        let o = step(rng, &model.actions(s)[a]).ok_or_else(|| {
            BenchError::Rollout(format!("empty action at `{}`", model.state_name(s)))
        })?;
        for (acc, c) in costs.iter_mut().zip(&o.costs) {
            *acc += c;
        }
        s = o.next;
        steps += 1;
        if steps > MAX_EPISODE_STEPS {
            return Err(BenchError::Rollout(
                "episode exceeded the step limit".into(),
            ));
        }
    }
    Ok(s)
}

/// Monte Carlo estimate of a flat policy's costs; `secondary_means` holds
/// one entry per secondary cost.
pub fn rollout_policy(
    model: &CsspModel,
    policy: &DeterministicPolicy,
    episodes: usize,
    seed: u64,
) -> Result<McEstimate, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::default();
    let mut costs = vec![0.0; model.num_costs()];
    for _ in 0..episodes {
        costs.iter_mut().for_each(|c| *c = 0.0);
        let s = sample(&mut rng, model.initial().iter().copied())
            .ok_or_else(|| BenchError::Rollout("empty initial distribution".into()))?;
        run_policy(&mut rng, model, policy, s, &mut costs)?;
        acc.push(costs[0], &costs[1..]);
    }
    Ok(acc.finish())
}

/// Monte Carlo estimate of a hierarchical solution: events are sampled from
/// the procedural dynamics and every activity is simulated step by step
/// from the state the previous one ended in. `secondary_means` holds one
/// entry per constraint.
pub fn rollout_solution(
    model: &HcsspModel,
    rho: &ProceduralPolicy,
    gamma: &BTreeMap<usize, DeterministicPolicy>,
    episodes: usize,
    seed: u64,
) -> Result<McEstimate, BenchError> {
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); model.activities().len()];
    for (j, c) in model.constraints().iter().enumerate() {
        for &(e, i) in &c.members {
            members[e].push((j, i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::default();
    let mut totals = vec![0.0; model.constraints().len()];
    for _ in 0..episodes {
        totals.iter_mut().for_each(|c| *c = 0.0);
        let mut cost = 0.0;
        let mut state = sample(&mut rng, model.initial().iter().copied())
            .ok_or_else(|| BenchError::Rollout("empty initial distribution".into()))?;
        let mut t = model.start_event();
        while t != model.end_event() {
            let c = rho.get(t).ok_or_else(|| {
                BenchError::Rollout(format!("no choice at event `{}`", model.event_name(t)))
            })?;
            let t2 = sample(&mut rng, model.event_row(t, c).iter().copied()).ok_or_else(|| {
                BenchError::Rollout(format!("empty choice at `{}`", model.event_name(t)))
            })?;
            if let Some(e) = model.edge_activity(t, t2) {
                let act = model.activity(e);
                let pi = gamma.get(&e).ok_or_else(|| {
                    BenchError::Rollout(format!("no policy for activity `{}`", act.id))
                })?;
                let local = act.local_state(state).ok_or_else(|| {
                    BenchError::Rollout(format!(
                        "state `{}` is outside activity `{}`",
                        model.state_name(state),
                        act.id
                    ))
                })?;
                let mut costs = vec![0.0; act.model.num_costs()];
                let end = run_policy(&mut rng, &act.model, pi, local, &mut costs)?;
                cost += costs[0];
                for &(j, i) in &members[e] {
                    totals[j] += costs[i];
                }
                state = act.global[end];
            }
            t = t2;
        }
        acc.push(cost, &totals);
    }
    Ok(acc.finish())
}
