use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::graph::topological_sort;
use crate::hierarchy::{HcsspBuilder, HcsspModel};

use super::grid::{grid_cssp, GridTask};
use super::BenchError;

pub const DEFAULT_LOCK_PROB: f64 = 0.1;
pub const HAZARD_DAMAGE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub id: String,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectorKind {
    Door,
    Hallway,
}

/// A one-way passage between two rooms. Cells are `[x, y]` on the room
/// boundaries; when omitted they are spread evenly along the perimeter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectorSpec {
    pub from: String,
    pub to: String,
    pub kind: ConnectorKind,
    /// Doors default to 0.1; hallways are never locked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock_prob: Option<f64>,
    /// Defaults to `door<n>` / `hallway<n>` counted per kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_cell: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_cell: Option<[usize; 2]>,
}

fn default_damage() -> f64 {
    HAZARD_DAMAGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardSpec {
    pub room: String,
    pub x: usize,
    pub y: usize,
    #[serde(default = "default_damage")]
    pub damage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRef {
    pub room: String,
    pub x: usize,
    pub y: usize,
}

/// Building layout for the evacuation benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacuationSpec {
    pub rooms: Vec<RoomSpec>,
    pub connectors: Vec<ConnectorSpec>,
    #[serde(default)]
    pub hazards: Vec<HazardSpec>,
    pub start: CellRef,
    pub exit: CellRef,
    pub delta: f64,
}

impl EvacuationSpec {
    pub fn total_cells(&self) -> usize {
        self.rooms.iter().map(|r| r.w * r.h).sum()
    }
}

struct Connector {
    id: String,
    from: usize,
    to: usize,
    from_cell: (usize, usize),
    to_cell: (usize, usize),
    lock: f64,
}

fn invalid(msg: impl Into<String>) -> BenchError {
    BenchError::InvalidSpec(msg.into())
}

fn perimeter(w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |c: (usize, usize)| {
        if seen.insert(c) {
            cells.push(c);
        }
    };
    for x in 0..w {
        push((x, 0));
    }
    for y in 0..h {
        push((w - 1, y));
    }
    for x in (0..w).rev() {
        push((x, h - 1));
    }
    for y in (0..h).rev() {
        push((0, y));
    }
    cells
}

fn cell_name(room: &str, (x, y): (usize, usize)) -> String {
    format!("{room}:{x}:{y}")
}

fn resolve(spec: &EvacuationSpec) -> Result<(HashMap<&str, usize>, Vec<Connector>), BenchError> {
    let mut rooms = HashMap::new();
    for (i, r) in spec.rooms.iter().enumerate() {
        if r.w == 0 || r.h == 0 {
            return Err(invalid(format!("rooms[{i}] `{}` has an empty grid", r.id)));
        }
        if rooms.insert(r.id.as_str(), i).is_some() {
            return Err(invalid(format!("rooms[{i}]: duplicate room id `{}`", r.id)));
        }
    }
    let room = |what: &str, id: &str| {
        rooms
            .get(id)
            .copied()
            .ok_or_else(|| invalid(format!("{what}: unknown room `{id}`")))
    };
    let inside = |what: &str, r: usize, (x, y): (usize, usize)| {
        let rs = &spec.rooms[r];
        if x < rs.w && y < rs.h {
            Ok(())
        } else {
            Err(invalid(format!(
                "{what}: cell ({x}, {y}) lies outside room `{}` ({}x{})",
                rs.id, rs.w, rs.h
            )))
        }
    };

    // Endpoints without explicit cells, per room in order of appearance.
    let mut pending: Vec<Vec<(usize, bool)>> = vec![Vec::new(); spec.rooms.len()];
    let mut counts: HashMap<ConnectorKind, usize> = HashMap::new();
    let mut conns = Vec::with_capacity(spec.connectors.len());
    for (i, c) in spec.connectors.iter().enumerate() {
        let what = format!("connectors[{i}]");
        let from = room(&format!("{what}.from"), &c.from)?;
        let to = room(&format!("{what}.to"), &c.to)?;
        if from == to {
            return Err(invalid(format!(
                "{what}: connects room `{}` to itself",
                c.from
            )));
        }
        let n = counts.entry(c.kind).or_insert(0);
        *n += 1;
        let id = c.id.clone().unwrap_or_else(|| match c.kind {
            ConnectorKind::Door => format!("door{n}"),
            ConnectorKind::Hallway => format!("hallway{n}"),
        });
        let lock = match (c.kind, c.lock_prob) {
            (ConnectorKind::Door, p) => p.unwrap_or(DEFAULT_LOCK_PROB),
            (ConnectorKind::Hallway, None) => 0.0,
            (ConnectorKind::Hallway, Some(p)) if p == 0.0 => 0.0,
            (ConnectorKind::Hallway, Some(_)) => {
                return Err(invalid(format!("{what}: hallways cannot be locked")))
            }
        };
        if !(0.0..=1.0).contains(&lock) {
            return Err(invalid(format!(
                "{what}: lock_prob {lock} is not a probability"
            )));
        }
        let mut cell = |explicit: Option<[usize; 2]>, r: usize, is_from: bool| match explicit {
            Some([x, y]) => (x, y),
            None => {
                pending[r].push((i, is_from));
                (usize::MAX, usize::MAX)
            }
        };
        let from_cell = cell(c.from_cell, from, true);
        let to_cell = cell(c.to_cell, to, false);
        conns.push(Connector {
            id,
            from,
            to,
            from_cell,
            to_cell,
            lock,
        });
    }
    for (r, ends) in pending.iter().enumerate() {
        let rs = &spec.rooms[r];
        let per = perimeter(rs.w, rs.h);
        let n = ends.len();
        for (j, &(i, is_from)) in ends.iter().enumerate() {
            let at = per[((2 * j + 1) * per.len()) / (2 * n)];
            if is_from {
                conns[i].from_cell = at;
            } else {
                conns[i].to_cell = at;
            }
        }
    }
    let mut ids = BTreeSet::new();
    for (i, c) in conns.iter().enumerate() {
        if !ids.insert(c.id.as_str()) {
            return Err(invalid(format!("connectors[{i}]: duplicate id `{}`", c.id)));
        }
        for (end, r, (x, y)) in [
            ("from_cell", c.from, c.from_cell),
            ("to_cell", c.to, c.to_cell),
        ] {
            let what = format!("connectors[{i}].{end}");
            inside(&what, r, (x, y))?;
            let rs = &spec.rooms[r];
            if !(x == 0 || y == 0 || x + 1 == rs.w || y + 1 == rs.h) {
                return Err(invalid(format!(
                    "{what}: ({x}, {y}) is not on the boundary of room `{}`",
                    rs.id
                )));
            }
        }
    }
    Ok((rooms, conns))
}

/// Builds the evacuation HC-SSP. Events are landmarks (start, exit, the
/// near side of each connector, the far side after crossing, and the near
/// side again after finding a door locked); every navigation between two
/// landmarks of one room is an activity over that room's grid. Known-locked
/// doors are part of the event, so the robot never retries them.
pub fn build_evacuation(spec: &EvacuationSpec) -> Result<HcsspModel, BenchError> {
    let (rooms, conns) = resolve(spec)?;
    if !(spec.delta >= 0.0) || !spec.delta.is_finite() {
        return Err(invalid(format!(
            "delta {} must be finite and nonnegative",
            spec.delta
        )));
    }
    let start_room = *rooms
        .get(spec.start.room.as_str())
        .ok_or_else(|| invalid(format!("start: unknown room `{}`", spec.start.room)))?;
    let exit_room = *rooms
        .get(spec.exit.room.as_str())
        .ok_or_else(|| invalid(format!("exit: unknown room `{}`", spec.exit.room)))?;
    let start_cell = (spec.start.x, spec.start.y);
    let exit_cell = (spec.exit.x, spec.exit.y);
    for (what, r, (x, y)) in [
        ("start", start_room, start_cell),
        ("exit", exit_room, exit_cell),
    ] {
        let rs = &spec.rooms[r];
        if x >= rs.w || y >= rs.h {
            return Err(invalid(format!(
                "{what}: cell ({x}, {y}) lies outside room `{}`",
                rs.id
            )));
        }
    }

    let mut hazards: Vec<BTreeMap<(usize, usize), f64>> = vec![BTreeMap::new(); spec.rooms.len()];
    for (i, hz) in spec.hazards.iter().enumerate() {
        let r = *rooms
            .get(hz.room.as_str())
            .ok_or_else(|| invalid(format!("hazards[{i}]: unknown room `{}`", hz.room)))?;
        let rs = &spec.rooms[r];
        if hz.x >= rs.w || hz.y >= rs.h {
            return Err(invalid(format!(
                "hazards[{i}]: cell ({}, {}) lies outside room `{}`",
                hz.x, hz.y, rs.id
            )));
        }
        if !(hz.damage >= 0.0) || !hz.damage.is_finite() {
            return Err(invalid(format!(
                "hazards[{i}]: damage {} must be finite and nonnegative",
                hz.damage
            )));
        }
        if (r, (hz.x, hz.y)) == (start_room, start_cell)
            || (r, (hz.x, hz.y)) == (exit_room, exit_cell)
        {
            return Err(invalid(format!(
                "hazards[{i}]: start and exit cells cannot be hazards"
            )));
        }
        hazards[r].insert((hz.x, hz.y), hz.damage);
    }

    // Landmarks must not share a cell within a room.
    if (exit_room, exit_cell) == (start_room, start_cell) {
        return Err(invalid("start and exit share a cell"));
    }
    let mut landmarks: BTreeMap<(usize, (usize, usize)), String> = BTreeMap::new();
    let mut mark = |r: usize, cell: (usize, usize), what: String| match landmarks.get(&(r, cell)) {
        Some(other) => Err(invalid(format!(
            "{what} and {other} share cell ({}, {}) in room `{}`",
            cell.0, cell.1, spec.rooms[r].id
        ))),
        None => {
            landmarks.insert((r, cell), what);
            Ok(())
        }
    };
    mark(start_room, start_cell, "start".into())?;
    mark(exit_room, exit_cell, "exit".into())?;
    for c in &conns {
        mark(c.from, c.from_cell, format!("`{}` (near side)", c.id))?;
        mark(c.to, c.to_cell, format!("`{}` (far side)", c.id))?;
    }

    let adj: Vec<Vec<usize>> = (0..spec.rooms.len())
        .map(|r| conns.iter().filter(|c| c.from == r).map(|c| c.to).collect())
        .collect();
    if topological_sort(&adj).is_none() {
        return Err(invalid("connectors form a cycle between rooms"));
    }

    let mut b = HcsspBuilder::new();
    let start = b.event("start");
    let exit = b.event("exit");
    b.start(start).end(exit);
    let s0 = b.state(cell_name(&spec.rooms[start_room].id, start_cell));
    b.initial(s0, 1.0);

    struct Position {
        event: usize,
        room: usize,
        /// Cell the robot stands on, possibly in the previous room.
        entry: Option<(String, (usize, usize))>,
        locked: BTreeSet<usize>,
    }
    let suffix = |locked: &BTreeSet<usize>, skip: Option<usize>| {
        let names: Vec<&str> = locked
            .iter()
            .filter(|&&k| Some(k) != skip)
            .map(|&k| conns[k].id.as_str())
            .collect();
        if names.is_empty() {
            String::new()
        } else {
            format!("/locked:{}", names.join(","))
        }
    };

    let mut activities = Vec::new();
    let mut queue = VecDeque::from([Position {
        event: start,
        room: start_room,
        entry: None,
        locked: BTreeSet::new(),
    }]);
    let mut expanded = BTreeSet::new();
    let mut crossings = BTreeSet::new();
    while let Some(p) = queue.pop_front() {
        if !expanded.insert(p.event) {
            continue;
        }
        let rs = &spec.rooms[p.room];
        let mut targets: Vec<(usize, String, (usize, usize), Option<usize>)> = Vec::new();
        for (k, c) in conns.iter().enumerate() {
            if c.from == p.room && !p.locked.contains(&k) {
                let name = format!("at:{}{}", c.id, suffix(&p.locked, None));
                targets.push((b.event(name), format!("to:{}", c.id), c.from_cell, Some(k)));
            }
        }
        if p.room == exit_room {
            targets.push((exit, "to:exit".into(), exit_cell, None));
        }
        if targets.is_empty() {
            return Err(invalid(format!(
                "no way out of room `{}` at event `{}`",
                rs.id,
                b.event_name(p.event)
            )));
        }
        for (t, choice, goal, conn) in targets {
            let from_name = b.event_name(p.event).to_string();
            let to_name = b.event_name(t).to_string();
            let room_id = rs.id.clone();
            let model = grid_cssp(&GridTask {
                w: rs.w,
                h: rs.h,
                name: &|x, y| cell_name(&room_id, (x, y)),
                hazards: &hazards[p.room],
                goal,
                entry: p.entry.clone(),
            });
            let e = b.activity(format!("go:{from_name}->{to_name}"), p.event, t, model);
            activities.push(e);
            b.choice(p.event, choice, vec![(t, 1.0)]);
            let Some(k) = conn else { continue };
            if !crossings.insert(t) {
                continue;
            }
            let c = &conns[k];
            let mut row = Vec::new();
            if c.lock < 1.0 {
                let inside = b.event(format!("in:{}", c.id));
                row.push((inside, 1.0 - c.lock));
                queue.push_back(Position {
                    event: inside,
                    room: c.to,
                    entry: Some((cell_name(&rs.id, c.from_cell), c.to_cell)),
                    locked: BTreeSet::new(),
                });
            }
            if c.lock > 0.0 {
                let mut locked = p.locked.clone();
                locked.insert(k);
                let stuck = b.event(format!("locked:{}{}", c.id, suffix(&locked, Some(k))));
                row.push((stuck, c.lock));
                queue.push_back(Position {
                    event: stuck,
                    room: p.room,
                    entry: None,
                    locked,
                });
            }
            let name = if c.lock > 0.0 { "open" } else { "cross" };
            b.choice(t, name, row);
        }
    }
    b.constraint(activities.iter().map(|&e| (e, 1)).collect(), spec.delta);
    b.build().map_err(BenchError::from)
}
