use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::paths::{distance_field, shortest_visiting_moves};
use super::percept::{line_of_sight, NoiseConfig, PerceptConfig};
use super::scenario::{CellKind, CellXY, Grid, KeyPoint, Landmark, Scenario};
use super::SimError;
use crate::geom::Heading;
use crate::Pose;

/// Landmark vocabulary. No two names share a token.
pub const LANDMARK_NAMES: [&str; 16] = [
    "printer",
    "swivel chair",
    "water cooler",
    "bookshelf",
    "potted plant",
    "coffee machine",
    "whiteboard",
    "filing cabinet",
    "sofa",
    "microwave",
    "treadmill",
    "fridge",
    "snack kiosk",
    "umbrella stand",
    "piano",
    "aquarium",
];

const MAX_ATTEMPTS: usize = 500;

/// Budget multiplier applied to the shortest visiting path.
pub const BUDGET_FACTOR: f64 = 4.0;

pub fn budget_for(moves: usize, factor: f64) -> u32 {
    ((moves as f64 * factor).ceil() as u32).max(1)
}

/// Instruction text naming `targets` in order.
pub fn instruction_for(targets: &[String]) -> String {
    match targets {
        [] => String::new(),
        [only] => format!("Find the {only}."),
        [first, rest @ ..] => {
            let mut s = format!("Walk to the {first}");
            let (last, middle) = rest.split_last().expect("at least one");
            for m in middle {
                s.push_str(&format!(", then go to the {m}"));
            }
            if middle.is_empty() {
                s.push_str(&format!(", then find the {last}."));
            } else {
                s.push_str(&format!(", and finally find the {last}."));
            }
            s
        }
    }
}

/// How targets are placed relative to the waypoints that precede them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// Each target is within the default view range, with a clear line of
    /// sight, of the previous waypoint and of its free neighbors.
    #[default]
    Visible,
    /// The first target cannot be seen from the start; finding it takes
    /// exploration.
    HiddenFirst,
}

/// Random cluttered room with landmarks and an in-order visiting instruction,
/// using [`Layout::Visible`].
pub fn generate_scenario(
    seed: u64,
    width: usize,
    height: usize,
    landmark_count: usize,
    subtask_count: usize,
) -> Result<Scenario, SimError> {
    generate_scenario_with(seed, width, height, landmark_count, subtask_count, Layout::Visible)
}

/// Deterministic in `seed`. Every output has a free walk visiting the subtask
/// landmarks in order, and the first target is at least two cells from the
/// start.
pub fn generate_scenario_with(
    seed: u64,
    width: usize,
    height: usize,
    landmark_count: usize,
    subtask_count: usize,
    layout: Layout,
) -> Result<Scenario, SimError> {
    if width < 4 || height < 4 {
        return Err(SimError::Precondition(format!(
            "grid must be at least 4x4 (got {width}x{height})"
        )));
    }
    if subtask_count == 0 || subtask_count > landmark_count {
        return Err(SimError::Precondition(format!(
            "need 1 <= subtask-count <= landmark-count (got {subtask_count} > {landmark_count})"
        )));
    }
    if landmark_count > LANDMARK_NAMES.len() || landmark_count + 1 > width * height / 2 {
        return Err(SimError::Precondition(format!(
            "too many landmarks ({landmark_count}) for the grid"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(s) = attempt(&mut rng, width, height, landmark_count, subtask_count, layout) {
            return Ok(s);
        }
    }
    Err(SimError::Unsatisfiable(format!(
        "no valid layout after {MAX_ATTEMPTS} attempts"
    )))
}

fn attempt(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    landmarks: usize,
    subtasks: usize,
    layout: Layout,
) -> Option<Scenario> {
    let mut grid = Grid::new(width, height);
    let area = width * height;
    let walls = rng.random_range(0..=area / 24);
    for _ in 0..walls {
        let len = rng.random_range(2..=4i64);
        let horizontal = rng.random_bool(0.5);
        let (x0, y0) = (
            rng.random_range(0..width as i64),
            rng.random_range(0..height as i64),
        );
        for k in 0..len {
            let c = if horizontal {
                (x0 + k, y0)
            } else {
                (x0, y0 + k)
            };
            if grid.in_bounds(c) {
                grid.set(c, CellKind::Obstacle);
            }
        }
    }
    for _ in 0..area / 10 {
        let c = (
            rng.random_range(0..width as i64),
            rng.random_range(0..height as i64),
        );
        grid.set(c, CellKind::Obstacle);
    }

    let mut free: Vec<CellXY> = grid
        .cells()
        .filter(|(_, k)| *k == CellKind::Free)
        .map(|(c, _)| c)
        .collect();
    if free.len() < landmarks + 1 {
        return None;
    }
    free.shuffle(rng);
    let start = free[0];
    let probe = Scenario {
        grid: grid.clone(),
        cell_size: 1.0,
        landmarks: vec![],
        start: Pose::new(start.0 as f64, start.1 as f64, Heading::East),
        instruction: String::new(),
        subtasks: vec![],
        key_points: vec![],
        step_budget: 1,
    };
    let reach = distance_field(&probe, start);
    let spots: Vec<CellXY> = free[1..]
        .iter()
        .copied()
        .filter(|c| reach.contains_key(c))
        .take(landmarks)
        .collect();
    if spots.len() < landmarks {
        return None;
    }

    let mut names: Vec<&str> = LANDMARK_NAMES.to_vec();
    names.shuffle(rng);
    let lms: Vec<Landmark> = spots
        .iter()
        .zip(&names)
        .map(|((x, y), n)| Landmark {
            name: n.to_string(),
            cells: vec![[*y, *x]],
        })
        .collect();
    let mut order: Vec<usize> = (0..landmarks).collect();
    order.shuffle(rng);
    let chosen: Vec<usize> = order.into_iter().take(subtasks).collect();

    let range = PerceptConfig::default().max_range as f64;
    let noise = NoiseConfig::default();
    let visible = |a: CellXY, b: CellXY| {
        let sep = ((b.0 - a.0) as f64).hypot((b.1 - a.1) as f64);
        sep <= range && line_of_sight(&probe, a, b, &noise)
    };
    let first = spots[chosen[0]];
    if ((first.0 - start.0) as f64).hypot((first.1 - start.1) as f64) < 2.0 {
        return None;
    }
    match layout {
        Layout::HiddenFirst if visible(start, first) => return None,
        Layout::HiddenFirst => {}
        Layout::Visible => {
            // Vantage points: the start, then every passable cell within one
            // cell of the previous landmark, since a sub-task may be verified
            // from there.
            let mut vantage = vec![start];
            for &i in &chosen {
                let c = spots[i];
                if !vantage.iter().all(|v| visible(*v, c)) {
                    return None;
                }
                vantage = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .map(|(dx, dy)| (c.0 + dx, c.1 + dy))
                    .filter(|n| probe.grid.passable(*n))
                    .collect();
            }
        }
    }

    let targets: Vec<String> = chosen.iter().map(|&i| lms[i].name.clone()).collect();
    let heading = Heading::ALL[rng.random_range(0..4)];
    let mut scenario = Scenario {
        grid,
        cell_size: 1.0,
        landmarks: lms,
        start: Pose::new(start.0 as f64, start.1 as f64, heading),
        instruction: instruction_for(&targets),
        key_points: targets
            .iter()
            .map(|t| KeyPoint::Reach {
                label: format!("locate the {t}"),
                landmark: t.clone(),
            })
            .collect(),
        subtasks: targets,
        step_budget: 1,
    };
    let moves = shortest_visiting_moves(&scenario)?;
    scenario.step_budget = budget_for(moves, BUDGET_FACTOR);
    Some(scenario)
}
