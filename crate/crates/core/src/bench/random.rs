use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cssp::{evaluate_policy, CsspBuilder, CsspModel, DeterministicPolicy, Outcome};
use crate::hierarchy::{
    activity_likelihoods, chain_distributions, topological_order, HcsspBuilder, HcsspModel,
    ProceduralPolicy,
};

use super::grid::{grid_cssp, GridTask};
use super::HAZARD_DAMAGE;

/// Random C-SSP with one secondary cost. State `s{n-1}` is the goal; every
/// other state gets between one and `max_actions` actions with up to three
/// outcomes each. Primary costs are in `[1, 10]`, secondary costs in
/// `[0, 10]` (zero about a third of the time).
pub fn random_cssp(rng: &mut impl Rng, max_states: usize, max_actions: usize) -> CsspModel {
    let n = rng.gen_range(2..=max_states.max(2));
    let mut b = CsspBuilder::new(1);
    let states: Vec<usize> = (0..n).map(|i| b.state(format!("s{i}"))).collect();
    b.set_goal(states[n - 1]);
    b.initial(states[0], 1.0);
    if n > 2 && rng.gen_bool(0.3) {
        b.initial(states[1], 1.0);
    }
    for &s in &states[..n - 1] {
        for a in 0..rng.gen_range(1..=max_actions.max(1)) {
            let k = rng.gen_range(1..=3.min(n));
            let next: Vec<usize> = states.choose_multiple(rng, k).copied().collect();
            let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let outcomes = next
                .iter()
                .zip(&weights)
                .map(|(&t, w)| {
                    let g = if rng.gen_bool(0.35) {
                        0.0
                    } else {
                        rng.gen_range(0.0..10.0)
                    };
                    Outcome::new(t, w / total, vec![rng.gen_range(1.0..10.0), g])
                })
                .collect();
            b.action(s, format!("a{a}"), outcomes);
        }
    }
    b.bounds(vec![rng.gen_range(0.0..20.0)]);
    b.build()
}

fn random_grid(
    rng: &mut (impl Rng + ?Sized),
    id: &str,
    max_side: usize,
    from: &str,
    to: &str,
) -> CsspModel {
    let (w, h) = loop {
        let w = rng.gen_range(1..=max_side);
        let h = rng.gen_range(1..=max_side);
        if w * h >= 2 {
            break (w, h);
        }
    };
    let cells: Vec<(usize, usize)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
    let mut ends = cells.choose_multiple(rng, 2);
    let start = *ends.next().unwrap();
    let goal = *ends.next().unwrap();
    let mut hazards = BTreeMap::new();
    for &c in &cells {
        if c != start && c != goal && rng.gen_bool(0.3) {
            hazards.insert(c, HAZARD_DAMAGE * rng.gen_range(0.2..1.0));
        }
    }
    let name = |x: usize, y: usize| {
        if (x, y) == start {
            from.to_string()
        } else if (x, y) == goal {
            to.to_string()
        } else {
            format!("{id}:{x}:{y}")
        }
    };
    grid_cssp(&GridTask {
        w,
        h,
        name: &name,
        hazards: &hazards,
        goal,
        entry: None,
    })
    .with_initial(Vec::new())
}

/// Random HC-SSP of up to four events and three grid activities (sides up
/// to `max_side`) under one damage constraint. Every event is a landmark
/// cell, so activities start and end at single cells. Four layouts are
/// drawn from:
///
/// * `s -A-> e`
/// * `s -A-> m -B-> e`
/// * `s -A-> m -C-> e` or `s -B-> e`, chosen or left to chance
/// * `s -A-> m -B-> n -C-> e`, where `m` may gamble on skipping to `e`
pub fn random_hcssp(rng: &mut impl Rng, max_side: usize) -> HcsspModel {
    let mut b = HcsspBuilder::new();
    let s = b.event("s");
    let e = b.event("e");
    b.start(s).end(e);
    let layout = rng.gen_range(0..4);
    let mut acts = Vec::new();
    let mut act =
        |b: &mut HcsspBuilder, rng: &mut dyn rand::RngCore, id: &str, t: usize, t2: usize| {
            let from = format!("L_{}", b.event_name(t));
            let to = format!("L_{}", b.event_name(t2));
            let m = random_grid(rng, id, max_side, &from, &to);
            acts.push(b.activity(id, t, t2, m));
        };
    match layout {
        0 => {
            b.choice(s, "go", vec![(e, 1.0)]);
            act(&mut b, rng, "A", s, e);
        }
        1 => {
            let m = b.event("m");
            b.choice(s, "go", vec![(m, 1.0)]);
            b.choice(m, "go", vec![(e, 1.0)]);
            act(&mut b, rng, "A", s, m);
            act(&mut b, rng, "B", m, e);
        }
        2 => {
            let m = b.event("m");
            b.choice(s, "via-m", vec![(m, 1.0)]);
            b.choice(s, "direct", vec![(e, 1.0)]);
            if rng.gen_bool(0.5) {
                let p = rng.gen_range(0.2..0.8);
                b.choice(s, "chance", vec![(m, p), (e, 1.0 - p)]);
            }
            b.choice(m, "go", vec![(e, 1.0)]);
            act(&mut b, rng, "A", s, m);
            act(&mut b, rng, "B", s, e);
            act(&mut b, rng, "C", m, e);
        }
        _ => {
            let m = b.event("m");
            let n = b.event("n");
            b.choice(s, "go", vec![(m, 1.0)]);
            b.choice(m, "go", vec![(n, 1.0)]);
            let q = rng.gen_range(0.3..0.9);
            b.choice(m, "gamble", vec![(n, q), (e, 1.0 - q)]);
            b.choice(n, "go", vec![(e, 1.0)]);
            act(&mut b, rng, "A", s, m);
            act(&mut b, rng, "B", m, n);
            act(&mut b, rng, "C", n, e);
        }
    }
    let start = b.state("L_s");
    b.initial(start, 1.0);
    let delta = rng.gen_range(0.0..25.0);
    b.constraint(acts.iter().map(|&a| (a, 1)).collect(), delta);
    b.build().expect("generated model is valid")
}

/// Uniformly random procedural policy plus random proper policies for the
/// activities it activates, or `None` if no proper policy turned up within
/// `tries` draws for some activity.
pub fn random_solution(
    rng: &mut impl Rng,
    model: &HcsspModel,
    tries: usize,
) -> Option<(ProceduralPolicy, BTreeMap<usize, DeterministicPolicy>)> {
    let mut rho = ProceduralPolicy::empty(model.num_events());
    for t in 0..model.num_events() {
        let n = model.choices(t).len();
        if n > 0 {
            rho.set(t, rng.gen_range(0..n));
        }
    }
    let lik = activity_likelihoods(model, &rho).ok()?;
    let mut gamma = BTreeMap::new();
    for e in topological_order(model).ok()? {
        if lik[e] <= 0.0 {
            continue;
        }
        let init = chain_distributions(model, &rho, &gamma, e).ok()?;
        let m = model.activity(e).model.with_initial(init);
        let pi = (0..tries).find_map(|_| {
            let mut pi = DeterministicPolicy::empty(m.num_states());
            for s in 0..m.num_states() {
                let k = m.actions(s).len();
                if !m.is_goal(s) && k > 0 {
                    pi.set(s, rng.gen_range(0..k));
                }
            }
            evaluate_policy(&m, &pi)
                .ok()
                .map(|_| pi.restrict_to_reachable(&m))
        })?;
        gamma.insert(e, pi);
    }
    Some((rho, gamma))
}
