//! Breadth-first search over the true occupancy grid.

use std::collections::{HashMap, VecDeque};

use super::scenario::{CellXY, Scenario};

const STEPS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Shortest 4-connected walk from `start` that steps on a cell of each target
/// set in order. Returns the walk including `start`.
pub fn visiting_walk(
    scenario: &Scenario,
    start: CellXY,
    targets: &[Vec<CellXY>],
) -> Option<Vec<CellXY>> {
    let grid = &scenario.grid;
    if !grid.passable(start) {
        return None;
    }
    let advance = |cell: CellXY, mut k: usize| {
        while k < targets.len() && targets[k].contains(&cell) {
            k += 1;
        }
        k
    };
    let first = (start, advance(start, 0));
    let mut parent: HashMap<(CellXY, usize), (CellXY, usize)> = HashMap::new();
    let mut queue = VecDeque::from([first]);
    parent.insert(first, first);
    while let Some(state @ (cell, k)) = queue.pop_front() {
        if k == targets.len() {
            let mut walk = vec![cell];
            let mut cur = state;
            while cur != first {
                cur = parent[&cur];
                walk.push(cur.0);
            }
            walk.reverse();
            return Some(walk);
        }
        for (dx, dy) in STEPS {
            let next = (cell.0 + dx, cell.1 + dy);
            if !grid.passable(next) {
                continue;
            }
            let ns = (next, advance(next, k));
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(ns) {
                e.insert(state);
                queue.push_back(ns);
            }
        }
    }
    None
}

/// Target cell sets for the scenario's ground-truth subtasks.
pub fn subtask_targets(scenario: &Scenario) -> Vec<Vec<CellXY>> {
    scenario
        .subtasks
        .iter()
        .map(|name| {
            scenario
                .landmark(name)
                .map(|l| l.cells_xy().collect())
                .unwrap_or_default()
        })
        .collect()
}

/// Number of moves on the shortest in-order visiting walk from the start.
pub fn shortest_visiting_moves(scenario: &Scenario) -> Option<usize> {
    let start = scenario.cell_of(&scenario.start.position())?;
    visiting_walk(scenario, start, &subtask_targets(scenario)).map(|w| w.len() - 1)
}

/// Shortest in-order visiting path length in meters (L*).
pub fn shortest_visiting_length(scenario: &Scenario) -> Option<f64> {
    shortest_visiting_moves(scenario).map(|m| m as f64 * scenario.cell_size)
}

/// Hop distance from `from` to every reachable free cell.
pub fn distance_field(scenario: &Scenario, from: CellXY) -> HashMap<CellXY, usize> {
    let mut dist = HashMap::from([(from, 0usize)]);
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        let d = dist[&c];
        for (dx, dy) in STEPS {
            let n = (c.0 + dx, c.1 + dy);
            if scenario.grid.passable(n) && !dist.contains_key(&n) {
                dist.insert(n, d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}
