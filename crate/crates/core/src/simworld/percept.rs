use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{CellKind, CellXY, Scenario};
use crate::geom::{normalize_bearing, Direction};
use crate::Pose;

/// Perception noise channel. Off by default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Glass cells are reported as free space.
    #[serde(default)]
    pub glass_blind: bool,
    /// Half-width (meters) of uniform noise added to reported distances.
    #[serde(default)]
    pub distance_jitter: f64,
}

impl NoiseConfig {
    pub fn is_off(&self) -> bool {
        !self.glass_blind && self.distance_jitter == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptConfig {
    /// View range in cells.
    pub max_range: u32,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl Default for PerceptConfig {
    fn default() -> Self {
        PerceptConfig {
            max_range: 5,
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSighting {
    pub category: String,
    /// Degrees relative to the body heading, positive to the left.
    pub bearing: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSighting {
    pub name: String,
    pub bearing: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Traversability {
    pub walkable: bool,
    /// Free distance along the view axis, in meters.
    pub free_range: f64,
}

/// One view: obstacles, landmarks, traversability and a context phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptTuple {
    pub direction: Direction,
    pub obstacles: Vec<ObstacleSighting>,
    pub landmarks: Vec<LandmarkSighting>,
    pub traversability: Traversability,
    pub context: String,
}

pub const WALL: &str = "wall";
pub const GLASS: &str = "glass door";

fn opaque(kind: CellKind, noise: &NoiseConfig) -> bool {
    match kind {
        CellKind::Free => false,
        CellKind::Obstacle => true,
        CellKind::Glass => !noise.glass_blind,
    }
}

/// Whether no opaque cell lies strictly between `a` and `b` on the Bresenham line.
pub(crate) fn line_of_sight(
    scenario: &Scenario,
    a: CellXY,
    b: CellXY,
    noise: &NoiseConfig,
) -> bool {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if (x, y) == b {
            return true;
        }
        if (x, y) != a && scenario.grid.get((x, y)).is_none_or(|k| opaque(k, noise)) {
            return false;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn round_bearing(b: f64) -> f64 {
    normalize_bearing((b * 1e6).round() / 1e6)
}

/// Ray-cast percepts for the four body-relative views.
///
/// Each view covers a 90 degree sector around its axis; the first opaque cell
/// along a line occludes what lies behind it.
pub fn perceive<R: Rng>(
    scenario: &Scenario,
    pose: &Pose,
    config: &PerceptConfig,
    rng: &mut R,
) -> [PerceptTuple; 4] {
    let noise = &config.noise;
    let cs = scenario.cell_size;
    let me = scenario
        .cell_of(&pose.position())
        .expect("pose on a cell center");
    let range = config.max_range as i64;
    let heading_deg = pose.heading.degrees() as f64;

    let mut obstacles: [Vec<ObstacleSighting>; 4] = Default::default();
    let mut landmarks: [Vec<LandmarkSighting>; 4] = Default::default();

    for dy in -range..=range {
        for dx in -range..=range {
            if (dx, dy) == (0, 0) {
                continue;
            }
            let dist_cells = (dx as f64).hypot(dy as f64);
            if dist_cells > range as f64 + 1e-9 {
                continue;
            }
            let c = (me.0 + dx, me.1 + dy);
            let Some(kind) = scenario.grid.get(c) else {
                continue;
            };
            if !line_of_sight(scenario, me, c, noise) {
                continue;
            }
            let bearing = round_bearing((dy as f64).atan2(dx as f64).to_degrees() - heading_deg);
            let view = Direction::from_bearing(bearing).index();
            let distance = dist_cells * cs;
            if opaque(kind, noise) {
                let category = if kind == CellKind::Glass { GLASS } else { WALL };
                obstacles[view].push(ObstacleSighting {
                    category: category.into(),
                    bearing,
                    distance,
                });
            }
            // A glass-blind observer still sees the pane; it misjudges it as open.
            let name = match scenario.landmark_at(c) {
                Some(lm) => Some(lm.name.as_str()),
                None if kind == CellKind::Glass => Some(GLASS),
                None => None,
            };
            if let Some(name) = name {
                let seen = &mut landmarks[view];
                match seen.iter_mut().find(|s| s.name == name) {
                    Some(s) if s.distance > distance => {
                        s.distance = distance;
                        s.bearing = bearing;
                    }
                    Some(_) => {}
                    None => seen.push(LandmarkSighting {
                        name: name.to_string(),
                        bearing,
                        distance,
                    }),
                }
            }
        }
    }

    Direction::ALL.map(|dir| {
        let i = dir.index();
        let axis = pose.heading.toward(dir).unit();
        let mut free = 0u32;
        for k in 1..=range {
            let c = (me.0 + axis.0 * k, me.1 + axis.1 * k);
            match scenario.grid.get(c) {
                Some(kind) if !opaque(kind, noise) => free += 1,
                _ => break,
            }
        }
        let mut obs = std::mem::take(&mut obstacles[i]);
        let mut lms = std::mem::take(&mut landmarks[i]);
        if noise.distance_jitter > 0.0 {
            let a = noise.distance_jitter;
            for o in &mut obs {
                o.distance = (o.distance + rng.random_range(-a..=a)).max(0.0);
            }
            for l in &mut lms {
                l.distance = (l.distance + rng.random_range(-a..=a)).max(0.0);
            }
        }
        obs.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.bearing.total_cmp(&b.bearing))
        });
        lms.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.name.cmp(&b.name))
        });
        let context = match (lms.first(), obs.first()) {
            (Some(l), _) => format!("near {}", l.name),
            (None, Some(o)) => format!("{} nearby", o.category),
            (None, None) => "open space".to_string(),
        };
        PerceptTuple {
            direction: dir,
            obstacles: obs,
            landmarks: lms,
            traversability: Traversability {
                walkable: free > 0,
                free_range: free as f64 * cs,
            },
            context,
        }
    })
}
