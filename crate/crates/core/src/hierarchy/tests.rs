use std::collections::BTreeMap;

use super::*;
use crate::cssp::{CsspBuilder, DeterministicPolicy, Outcome};
use crate::testing::{door_model, step_activity};

fn rho_all(model: &HcsspModel) -> ProceduralPolicy {
    let mut rho = ProceduralPolicy::empty(model.num_events());
    for t in 0..model.num_events() {
        if !model.choices(t).is_empty() {
            rho.set(t, 0);
        }
    }
    rho
}

fn pick(model: &HcsspModel, picks: &[(&str, usize)]) -> BTreeMap<usize, DeterministicPolicy> {
    picks
        .iter()
        .map(|&(id, a)| {
            let e = model.activity_index(id).unwrap();
            (
                e,
                DeterministicPolicy::from_pairs(model.activity(e).model.num_states(), [(0, a)]),
            )
        })
        .collect()
}

#[test]
fn door_model_is_valid() {
    assert_eq!(door_model(12.0).validate(), vec![]);
}

#[test]
fn likelihoods_follow_door_outcomes() {
    let m = door_model(12.0);
    let l = activity_likelihoods(&m, &rho_all(&m)).unwrap();
    assert_eq!(l, vec![1.0, 0.9, 0.1]);
    let mins = min_activity_likelihoods(&m).unwrap();
    assert_eq!(mins, vec![Some(1.0), Some(0.9), Some(0.1)]);
}

#[test]
fn constraint_value_weights_by_likelihood() {
    let m = door_model(12.0);
    let ev = evaluate_solution(
        &m,
        &rho_all(&m),
        &pick(&m, &[("E1", 0), ("E2", 0), ("E3", 0)]),
    )
    .unwrap();
    assert!((ev.constraint_values[0] - 11.0).abs() < 1e-12);
    assert!(ev.feasible);
    assert!((ev.objective - (3.0 + 0.9 * 4.0 + 0.1 * 20.0)).abs() < 1e-12);

    let tight = door_model(10.0);
    let ev = evaluate_solution(
        &tight,
        &rho_all(&tight),
        &pick(&tight, &[("E1", 0), ("E2", 0), ("E3", 0)]),
    )
    .unwrap();
    assert!(!ev.feasible);
}

#[test]
fn missing_policy_is_reported() {
    let m = door_model(12.0);
    let err = evaluate_solution(&m, &rho_all(&m), &pick(&m, &[("E1", 0), ("E2", 0)])).unwrap_err();
    assert_eq!(err, HierarchyError::MissingPolicy("E3".into()));
}

#[test]
fn unassigned_choice_is_reported() {
    let m = door_model(12.0);
    let mut rho = rho_all(&m);
    rho = ProceduralPolicy::from_choices(
        (0..m.num_events())
            .map(|t| {
                if m.event_name(t) == "t1" {
                    None
                } else {
                    rho.get(t)
                }
            })
            .collect(),
    );
    assert_eq!(
        activity_likelihoods(&m, &rho).unwrap_err(),
        HierarchyError::UnassignedChoice("t1".into())
    );
}

fn chain3() -> HcsspModel {
    let mut b = HcsspBuilder::new();
    let t: Vec<usize> = (0..4).map(|i| b.event(format!("t{i}"))).collect();
    b.start(t[0]).end(t[3]);
    for i in 0..3 {
        b.choice(t[i], "go", vec![(t[i + 1], 1.0)]);
    }
    b.activity(
        "A",
        t[0],
        t[1],
        step_activity("x0", "x1", &[("a", 3.0, 0.0)]),
    );
    b.activity(
        "B",
        t[1],
        t[2],
        step_activity("x1", "x2", &[("a", 4.0, 0.0)]),
    );
    b.activity(
        "C",
        t[2],
        t[3],
        step_activity("x2", "x3", &[("a", 0.0, 0.0)]),
    );
    let x0 = b.state("x0");
    b.initial(x0, 1.0);
    b.build().unwrap()
}

#[test]
fn chain_objective_is_sum() {
    let m = chain3();
    let ev =
        evaluate_solution(&m, &rho_all(&m), &pick(&m, &[("A", 0), ("B", 0), ("C", 0)])).unwrap();
    assert_eq!(ev.objective, 7.0);
    assert!(ev.constraint_values.is_empty() && ev.feasible);
    assert_eq!(topological_order(&m).unwrap(), vec![0, 1, 2]);
}

#[test]
fn first_activity_receives_initial_distribution() {
    let m = chain3();
    let init = chain_distributions(&m, &rho_all(&m), &BTreeMap::new(), 0).unwrap();
    assert_eq!(init, vec![(0, 1.0)]);
    let gamma = pick(&m, &[("A", 0)]);
    assert_eq!(
        chain_distributions(&m, &rho_all(&m), &gamma, 1).unwrap(),
        vec![(0, 1.0)]
    );
}

#[test]
fn split_termination_feeds_successor() {
    // A ends in y1 or y2 (0.7 / 0.3); B starts from either
    let mut a = CsspBuilder::new(0);
    let x = a.state("x");
    let y1 = a.goal("y1");
    let y2 = a.goal("y2");
    a.action(
        x,
        "go",
        vec![
            Outcome::new(y1, 0.7, vec![1.0]),
            Outcome::new(y2, 0.3, vec![1.0]),
        ],
    );
    let mut bm = CsspBuilder::new(0);
    let y1b = bm.state("y1");
    let y2b = bm.state("y2");
    let z = bm.goal("z");
    bm.action(y1b, "go", vec![Outcome::new(z, 1.0, vec![1.0])]);
    bm.action(y2b, "go", vec![Outcome::new(z, 1.0, vec![5.0])]);

    let mut b = HcsspBuilder::new();
    let t: Vec<usize> = (0..3).map(|i| b.event(format!("t{i}"))).collect();
    b.start(t[0]).end(t[2]);
    b.choice(t[0], "go", vec![(t[1], 1.0)]);
    b.choice(t[1], "go", vec![(t[2], 1.0)]);
    b.activity("A", t[0], t[1], a.build());
    b.activity("B", t[1], t[2], bm.build());
    let xs = b.state("x");
    b.initial(xs, 1.0);
    let m = b.build().unwrap();
    assert_eq!(m.validate(), vec![]);

    let gamma: BTreeMap<usize, DeterministicPolicy> = [
        (0, DeterministicPolicy::from_pairs(3, [(0, 0)])),
        (1, DeterministicPolicy::from_pairs(3, [(0, 0), (1, 0)])),
    ]
    .into_iter()
    .collect();
    let init = chain_distributions(&m, &rho_all(&m), &gamma, 1).unwrap();
    assert_eq!(init.len(), 2);
    assert!((init[0].1 - 0.7).abs() < 1e-12 && (init[1].1 - 0.3).abs() < 1e-12);
    let ev = evaluate_solution(&m, &rho_all(&m), &gamma).unwrap();
    assert!((ev.objective - (1.0 + 0.7 + 0.3 * 5.0)).abs() < 1e-12);
}

#[test]
fn cycle_is_reported() {
    let mut b = HcsspBuilder::new();
    let s = b.event("s");
    let t1 = b.event("t1");
    let t2 = b.event("t2");
    let e = b.event("e");
    b.start(s).end(e);
    b.choice(s, "go", vec![(t1, 1.0)]);
    b.choice(t1, "go", vec![(t2, 1.0)]);
    b.choice(t2, "back", vec![(t1, 1.0)]);
    b.choice(t2, "out", vec![(e, 1.0)]);
    let x = b.state("x");
    b.initial(x, 1.0);
    let m = b.build().unwrap();
    let report = m.validate();
    assert!(report
        .iter()
        .any(|v| matches!(v, HierarchyViolation::Cycle { events } if events == &["t1", "t2"])));
    assert_eq!(m.event_order().unwrap_err(), HierarchyError::CyclicGraph);
}

#[test]
fn duplicate_membership_is_reported() {
    let mut b = HcsspBuilder::new();
    let s = b.event("s");
    let e = b.event("e");
    b.start(s).end(e);
    b.choice(s, "go", vec![(e, 1.0)]);
    let a = b.activity("A", s, e, step_activity("x0", "x1", &[("a", 1.0, 1.0)]));
    let x = b.state("x0");
    b.initial(x, 1.0);
    b.constraint(vec![(a, 1)], 3.0);
    b.constraint(vec![(a, 1)], 4.0);
    let m = b.build().unwrap();
    assert_eq!(
        m.validate(),
        vec![HierarchyViolation::DuplicateMembership {
            activity: "A".into(),
            index: 1
        }]
    );
}

/// Branch structure of the six-room evacuation: door or hallway first,
/// each door open with probability 0.9.
fn evac_like() -> HcsspModel {
    let mut b = HcsspBuilder::new();
    let start = b.event("start");
    let at_d1 = b.event("at-door1");
    let d1_open = b.event("door1-open");
    let d1_locked = b.event("door1-locked");
    let at_d2 = b.event("at-door2");
    let d2_open = b.event("door2-open");
    let d2_locked = b.event("door2-locked");
    let at_h1 = b.event("at-hallway1");
    let exit = b.event("exit");
    b.start(start).end(exit);
    b.choice(start, "door1", vec![(at_d1, 1.0)]);
    b.choice(start, "hallway1", vec![(at_h1, 1.0)]);
    b.choice(at_d1, "try", vec![(d1_open, 0.9), (d1_locked, 0.1)]);
    b.choice(d1_open, "door2", vec![(at_d2, 1.0)]);
    b.choice(d1_locked, "exit", vec![(exit, 1.0)]);
    b.choice(at_d2, "try", vec![(d2_open, 0.9), (d2_locked, 0.1)]);
    b.choice(d2_open, "exit", vec![(exit, 1.0)]);
    b.choice(d2_locked, "exit", vec![(exit, 1.0)]);
    b.choice(at_h1, "exit", vec![(exit, 1.0)]);
    b.activity(
        "go-to-door1",
        start,
        at_d1,
        step_activity("s", "d1", &[("a", 1.0, 0.0)]),
    );
    b.activity(
        "go-to-hallway1",
        start,
        at_h1,
        step_activity("s", "h1", &[("a", 1.0, 0.0)]),
    );
    b.activity(
        "pass-door1-go-door2",
        d1_open,
        at_d2,
        step_activity("d1", "d2", &[("a", 1.0, 0.0)]),
    );
    b.activity(
        "roundabout1",
        d1_locked,
        exit,
        step_activity("d1", "x", &[("a", 1.0, 0.0)]),
    );
    b.activity(
        "pass-door2-exit",
        d2_open,
        exit,
        step_activity("d2", "x", &[("a", 1.0, 0.0)]),
    );
    b.activity(
        "roundabout2",
        d2_locked,
        exit,
        step_activity("d2", "x", &[("a", 1.0, 0.0)]),
    );
    b.activity(
        "hallway1-exit",
        at_h1,
        exit,
        step_activity("h1", "x", &[("a", 1.0, 0.0)]),
    );
    let s = b.state("s");
    b.initial(s, 1.0);
    b.build().unwrap()
}

#[test]
fn evacuation_likelihoods() {
    let m = evac_like();
    assert_eq!(m.validate(), vec![]);
    let door = ProceduralPolicy::from_named(
        &m,
        &[
            ("start", "door1"),
            ("at-door1", "try"),
            ("door1-open", "door2"),
            ("door1-locked", "exit"),
            ("at-door2", "try"),
            ("door2-open", "exit"),
            ("door2-locked", "exit"),
        ]
        .iter()
        .map(|&(a, b)| (a.to_string(), b.to_string()))
        .collect(),
    )
    .unwrap();
    let id = |name: &str| m.activity_index(name).unwrap();
    assert_eq!(
        activity_likelihood(&m, &door, id("go-to-door1")).unwrap(),
        1.0
    );
    assert_eq!(
        activity_likelihood(&m, &door, id("pass-door1-go-door2")).unwrap(),
        0.9
    );
    assert_eq!(
        activity_likelihood(&m, &door, id("go-to-hallway1")).unwrap(),
        0.0
    );
    assert!((min_activity_likelihood(&m, id("pass-door2-exit")).unwrap() - 0.81).abs() < 1e-12);
    assert_eq!(min_activity_likelihood(&m, id("go-to-door1")).unwrap(), 1.0);
    assert_eq!(procedural_policies(&m).unwrap().len(), 2);

    let order = topological_order(&m).unwrap();
    let pos = |name: &str| order.iter().position(|&e| e == id(name)).unwrap();
    for later in [
        "pass-door1-go-door2",
        "roundabout1",
        "pass-door2-exit",
        "hallway1-exit",
    ] {
        assert!(pos("go-to-door1") < pos(later) || later == "hallway1-exit");
        assert!(pos("go-to-hallway1") < pos(later));
    }
}

#[test]
fn branch_likelihoods_conserve_probability() {
    let m = evac_like();
    for rho in procedural_policies(&m).unwrap() {
        let flow = procedural_flow(&m, &rho).unwrap();
        for t in 0..m.num_events() {
            if t == m.end_event() || flow.reach[t] == 0.0 {
                continue;
            }
            let out: f64 = flow.edges.range((t, 0)..(t + 1, 0)).map(|(_, p)| p).sum();
            assert!((out - flow.reach[t]).abs() < 1e-9);
        }
    }
}

#[test]
fn json_round_trip() {
    let m = door_model(12.0);
    let file = HcsspFile::from_model(&m);
    let text = serde_json::to_string_pretty(&file).unwrap();
    let back: HcsspFile = serde_json::from_str(&text).unwrap();
    assert_eq!(back, file);
    let m2 = back.to_model().unwrap();
    assert_eq!(m2.validate(), vec![]);
    assert_eq!(HcsspFile::from_model(&m2), file);
}

#[test]
fn solution_file_round_trip() {
    let m = door_model(12.0);
    let gamma = pick(&m, &[("E1", 0), ("E2", 0), ("E3", 0)]);
    let (sol, _) = HierarchicalSolution::assemble(&m, rho_all(&m), gamma).unwrap();
    let file = SolutionFile::new(&m, &sol, Some(sol.objective), Some(1.0));
    let (rho, gamma) = file.policies(&m).unwrap();
    assert_eq!(rho, sol.rho);
    assert_eq!(gamma, sol.gamma);
}
