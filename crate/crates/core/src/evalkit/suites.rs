//! Built-in scenario suites.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Heading;
use crate::orchestrator::EpisodeConfig;
use crate::simworld::paths::shortest_visiting_moves;
use crate::simworld::{
    budget_for, generate_scenario, generate_scenario_with, instruction_for, CellKind, Grid, KeyPoint, Landmark, Layout,
    Scenario, SimError, BUDGET_FACTOR, LANDMARK_NAMES,
};
use crate::Pose;

pub const SUITE_NAMES: [&str; 3] = ["oracle", "glass-corridor", "revisit-heavy"];

/// Named suite with the episode settings it is meant to run under.
pub fn by_name(name: &str) -> Option<(Vec<(String, Scenario)>, EpisodeConfig)> {
    match name {
        "oracle" => Some((oracle(), EpisodeConfig::default())),
        "glass-corridor" => Some((glass_corridor(30), glass_config())),
        "revisit-heavy" => Some((revisit_heavy(20), EpisodeConfig::default())),
        _ => None,
    }
}

/// 100 generated 10x10 rooms (seeds 0-99), three landmarks, two sub-tasks.
pub fn oracle() -> Vec<(String, Scenario)> {
    (0..100u64)
        .map(|seed| {
            let s = generate_scenario(seed, 10, 10, 3, 2).expect("oracle layouts exist for every seed");
            (format!("oracle-{seed:03}"), s)
        })
        .collect()
}

/// Rooms whose first target cannot be seen from the start.
pub fn revisit_heavy(count: u64) -> Vec<(String, Scenario)> {
    (0..count)
        .map(|seed| {
            let s = generate_scenario_with(seed, 12, 12, 4, 2, Layout::HiddenFirst).expect("hidden layouts exist");
            (format!("revisit-{seed:03}"), s)
        })
        .collect()
}

/// Glass reported as free space.
pub fn glass_config() -> EpisodeConfig {
    let mut cfg = EpisodeConfig::default();
    cfg.percept.noise.glass_blind = true;
    cfg
}

/// Two rooms split by a wall. The direct route crosses a glass door; an open
/// doorway elsewhere in the wall is the detour.
pub fn glass_corridor(count: u64) -> Vec<(String, Scenario)> {
    (0..count).map(|seed| (format!("glass-{seed:03}"), glass_scenario(seed).expect("glass layout"))).collect()
}

pub fn glass_scenario(seed: u64) -> Result<Scenario, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..200 {
        if let Some(s) = glass_attempt(&mut rng) {
            return Ok(s);
        }
    }
    Err(SimError::Unsatisfiable(format!("no glass layout for seed {seed}")))
}

fn glass_attempt(rng: &mut ChaCha8Rng) -> Option<Scenario> {
    let width = rng.random_range(9..=12i64);
    let height = rng.random_range(5..=7i64);
    let wall_x = rng.random_range(3..=width - 4);
    let row = rng.random_range(0..height);
    let gaps: Vec<i64> = (0..height).filter(|y| (y - row).abs() >= 2).collect();
    let gap = *gaps.choose(rng)?;
    let start_x = wall_x - rng.random_range(1..=2);
    let target_x = wall_x + rng.random_range(2..=3);

    let mut grid = Grid::new(width as usize, height as usize);
    for y in 0..height {
        if y != gap {
            grid.set((wall_x, y), CellKind::Obstacle);
        }
    }
    grid.set((wall_x, row), CellKind::Glass);
    for _ in 0..rng.random_range(0..=3) {
        let c = (rng.random_range(0..width), rng.random_range(0..height));
        let near_gap = (c.0 - wall_x).abs() <= 1 && (c.1 - gap).abs() <= 1;
        if c.1 != row && c.0 != wall_x && !near_gap {
            grid.set(c, CellKind::Obstacle);
        }
    }

    let mut names: Vec<&str> = LANDMARK_NAMES.to_vec();
    names.shuffle(rng);
    let target = names[0].to_string();
    let distractor_y = (0..height).filter(|y| *y != row).collect::<Vec<_>>();
    let dy = *distractor_y.choose(rng)?;
    let dx = rng.random_range(0..wall_x);
    let landmarks = vec![
        Landmark { name: target.clone(), cells: vec![[row, target_x]] },
        Landmark { name: names[1].to_string(), cells: vec![[dy, dx]] },
    ];
    grid.set((target_x, row), CellKind::Free);
    grid.set((dx, dy), CellKind::Free);
    grid.set((start_x, row), CellKind::Free);

    let mut scenario = Scenario {
        grid,
        cell_size: 1.0,
        landmarks,
        start: Pose::new(start_x as f64, row as f64, Heading::East),
        instruction: instruction_for(std::slice::from_ref(&target)),
        subtasks: vec![target.clone()],
        key_points: vec![
            KeyPoint::Reach { label: format!("locate the {target}"), landmark: target.clone() },
            KeyPoint::Exit { label: "pass through the open doorway".into(), cell: [gap, wall_x], heading: Heading::East },
        ],
        step_budget: 1,
    };
    let moves = shortest_visiting_moves(&scenario)?;
    scenario.step_budget = budget_for(moves, BUDGET_FACTOR);
    scenario.validate().ok()?;
    Some(scenario)
}
