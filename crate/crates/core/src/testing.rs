use crate::cssp::{CsspBuilder, CsspModel, Outcome};
use crate::hierarchy::{HcsspBuilder, HcsspModel};

pub(crate) fn ch1_with_bound(delta: f64) -> CsspModel {
    let mut b = CsspBuilder::new(1);
    let s0 = b.state("s0");
    let s1 = b.goal("s1");
    b.initial(s0, 1.0);
    b.action(s0, "a_fast", vec![Outcome::new(s1, 1.0, vec![1.0, 10.0])]);
    b.action(s0, "a_slow", vec![Outcome::new(s1, 1.0, vec![10.0, 1.0])]);
    b.bounds(vec![delta]);
    b.build()
}

pub(crate) fn ch1() -> CsspModel {
    ch1_with_bound(5.0)
}

/// One decision state `from` with actions `(name, primary, secondary)`
/// leading to the goal `to`.
pub(crate) fn step_activity(from: &str, to: &str, options: &[(&str, f64, f64)]) -> CsspModel {
    let mut b = CsspBuilder::new(1);
    let s = b.state(from);
    let g = b.goal(to);
    for &(name, f, g2) in options {
        b.action(s, name, vec![Outcome::new(g, 1.0, vec![f, g2])]);
    }
    b.build()
}

/// `start -E1-> t1 -(0.9 open | 0.1 locked)-> {open -E2-> end, locked -E3-> end}`
/// with one constraint over E1 and E2.
pub(crate) fn door_model(delta: f64) -> HcsspModel {
    let mut b = HcsspBuilder::new();
    let start = b.event("start");
    let t1 = b.event("t1");
    let open = b.event("open");
    let locked = b.event("locked");
    let end = b.event("end");
    b.start(start).end(end);
    b.choice(start, "go", vec![(t1, 1.0)]);
    b.choice(t1, "check", vec![(open, 0.9), (locked, 0.1)]);
    b.choice(open, "go", vec![(end, 1.0)]);
    b.choice(locked, "go", vec![(end, 1.0)]);
    let e1 = b.activity(
        "E1",
        start,
        t1,
        step_activity("x0", "x1", &[("a", 3.0, 2.0), ("b", 5.0, 0.0)]),
    );
    let e2 = b.activity(
        "E2",
        open,
        end,
        step_activity("x1", "x2", &[("a", 4.0, 10.0), ("b", 9.0, 1.0)]),
    );
    b.activity(
        "E3",
        locked,
        end,
        step_activity("x1", "x2", &[("a", 20.0, 0.0)]),
    );
    let x0 = b.state("x0");
    b.initial(x0, 1.0);
    b.constraint(vec![(e1, 1), (e2, 1)], delta);
    b.build().unwrap()
}
