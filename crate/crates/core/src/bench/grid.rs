use std::collections::BTreeMap;

use crate::cssp::{CsspBuilder, CsspModel, Outcome};

pub const INTENDED: f64 = 0.85;
pub const SLIP: f64 = 0.075;

/// `(name, dx, dy)` with `y` growing downward.
pub const MOVES: [(&str, i64, i64); 4] = [("N", 0, -1), ("E", 1, 0), ("S", 0, 1), ("W", -1, 0)];

/// Rectangular grid navigation task with one goal cell.
pub struct GridTask<'a> {
    pub w: usize,
    pub h: usize,
    /// Global name of each cell.
    pub name: &'a dyn Fn(usize, usize) -> String,
    /// Damage charged on entering a cell.
    pub hazards: &'a BTreeMap<(usize, usize), f64>,
    pub goal: (usize, usize),
    /// Extra state outside the grid with a single deterministic `enter`
    /// action into the given cell.
    pub entry: Option<(String, (usize, usize))>,
}

fn step(w: usize, h: usize, x: usize, y: usize, dir: usize) -> (usize, usize) {
    let (_, dx, dy) = MOVES[dir];
    let nx = x as i64 + dx;
    let ny = y as i64 + dy;
    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
        (x, y)
    } else {
        (nx as usize, ny as usize)
    }
}

/// Grid SSP with one secondary cost (damage). Each move goes in the intended
/// direction with probability 0.85 and deviates by 90 degrees either way
/// with probability 0.075; bumping into a wall leaves the robot in place.
pub fn grid_cssp(task: &GridTask) -> CsspModel {
    let GridTask { w, h, .. } = *task;
    let mut b = CsspBuilder::new(1);
    let mut id = vec![0; w * h];
    for y in 0..h {
        for x in 0..w {
            id[y * w + x] = b.state((task.name)(x, y));
        }
    }
    let (gx, gy) = task.goal;
    b.set_goal(id[gy * w + gx]);
    let damage = |from: (usize, usize), to: (usize, usize)| {
        if from == to {
            0.0
        } else {
            task.hazards.get(&to).copied().unwrap_or(0.0)
        }
    };
    for y in 0..h {
        for x in 0..w {
            if (x, y) == task.goal {
                continue;
            }
            for (dir, &(name, _, _)) in MOVES.iter().enumerate() {
                let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
                for (d, p) in [
                    (dir, INTENDED),
                    ((dir + 1) % 4, SLIP),
                    ((dir + 3) % 4, SLIP),
                ] {
                    *merged.entry(step(w, h, x, y, d)).or_default() += p;
                }
                let outcomes = merged
                    .into_iter()
                    .map(|((nx, ny), p)| {
                        Outcome::new(id[ny * w + nx], p, vec![1.0, damage((x, y), (nx, ny))])
                    })
                    .collect();
                b.action(id[y * w + x], name, outcomes);
            }
        }
    }
    if let Some((name, (ex, ey))) = &task.entry {
        let s = b.state(name.clone());
        let to = (*ex, *ey);
        b.action(
            s,
            "enter",
            vec![Outcome::new(
                id[ey * w + ex],
                1.0,
                vec![1.0, task.hazards.get(&to).copied().unwrap_or(0.0)],
            )],
        );
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{anytime_solve, ZeroHeuristic};

    fn name(x: usize, y: usize) -> String {
        format!("{x}:{y}")
    }

    #[test]
    fn rows_and_wall_bumps() {
        let hz = BTreeMap::new();
        let m = grid_cssp(&GridTask {
            w: 2,
            h: 2,
            name: &name,
            hazards: &hz,
            goal: (1, 1),
            entry: None,
        });
        assert!(m.validate_dynamics().is_empty());
        let s = m.state_index("0:0").unwrap();
        let north = &m.actions(s)[0];
        // N bumps, W slip bumps, E slip moves
        let stay: f64 = north
            .outcomes()
            .iter()
            .filter(|o| o.next == s)
            .map(|o| o.prob)
            .sum();
        assert!((stay - 0.925).abs() < 1e-12);
        assert_eq!(m.actions(m.state_index("1:1").unwrap()).len(), 0);
    }

    #[test]
    fn hazard_charged_on_entry() {
        let mut hz = BTreeMap::new();
        hz.insert((1, 0), 50.0);
        let m = grid_cssp(&GridTask {
            w: 3,
            h: 1,
            name: &name,
            hazards: &hz,
            goal: (2, 0),
            entry: None,
        });
        let s = m.state_index("0:0").unwrap();
        let east = &m.actions(s)[1];
        assert!((east.expected_cost(1) - 0.85 * 50.0).abs() < 1e-12);
        let h = m.state_index("1:0").unwrap();
        // staying inside the hazard costs nothing extra
        let north = &m.actions(h)[0];
        assert!(north
            .outcomes()
            .iter()
            .all(|o| o.next != h || o.costs[1] == 0.0));
    }

    #[test]
    fn corridor_expected_steps() {
        // 1x3 corridor: every east move advances with probability 0.85
        let hz = BTreeMap::new();
        let m = grid_cssp(&GridTask {
            w: 3,
            h: 1,
            name: &name,
            hazards: &hz,
            goal: (2, 0),
            entry: None,
        })
        .with_initial(vec![(0, 1.0)]);
        let r = anytime_solve(&m, None, &ZeroHeuristic).unwrap();
        assert!((r.upper_bound - 2.0 / 0.85).abs() < 1e-9);
    }
}
