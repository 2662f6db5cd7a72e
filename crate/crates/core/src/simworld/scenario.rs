use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SimError;
use crate::geom::{Action, Heading};
use crate::{Point, Pose};

/// Grid coordinate: `x` is the column, `y` the row.
pub type CellXY = (i64, i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Free,
    Obstacle,
    Glass,
}

impl CellKind {
    fn from_char(c: char) -> Option<CellKind> {
        match c {
            '.' => Some(CellKind::Free),
            '#' => Some(CellKind::Obstacle),
            'g' => Some(CellKind::Glass),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match self {
            CellKind::Free => '.',
            CellKind::Obstacle => '#',
            CellKind::Glass => 'g',
        }
    }

    /// Whether the body can enter the cell.
    pub fn passable(self) -> bool {
        self == CellKind::Free
    }
}

/// Occupancy grid, stored row-major. Row index is the `y` coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Grid {
    width: usize,
    height: usize,
    cells: Vec<CellKind>,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        Grid {
            width,
            height,
            cells: vec![CellKind::Free; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn in_bounds(&self, (x, y): CellXY) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn get(&self, c: CellXY) -> Option<CellKind> {
        self.in_bounds(c)
            .then(|| self.cells[c.1 as usize * self.width + c.0 as usize])
    }

    pub fn set(&mut self, c: CellXY, kind: CellKind) {
        assert!(self.in_bounds(c), "cell {c:?} outside grid");
        self.cells[c.1 as usize * self.width + c.0 as usize] = kind;
    }

    pub fn passable(&self, c: CellXY) -> bool {
        self.get(c).is_some_and(CellKind::passable)
    }

    pub fn cells(&self) -> impl Iterator<Item = (CellXY, CellKind)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, k)| (((i % self.width) as i64, (i / self.width) as i64), *k))
    }

    pub fn has_glass(&self) -> bool {
        self.cells.contains(&CellKind::Glass)
    }

    pub fn rows(&self) -> Vec<String> {
        self.cells
            .chunks(self.width.max(1))
            .map(|row| row.iter().map(|k| k.to_char()).collect())
            .collect()
    }
}

impl TryFrom<Vec<String>> for Grid {
    type Error = String;

    fn try_from(rows: Vec<String>) -> Result<Self, Self::Error> {
        let height = rows.len();
        if height == 0 {
            return Err("grid has no rows".into());
        }
        let width = rows[0].chars().count();
        if width == 0 {
            return Err("grid rows are empty".into());
        }
        let mut cells = Vec::with_capacity(width * height);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(format!(
                    "grid row {r} has {} cells, expected {width}",
                    row.chars().count()
                ));
            }
            for ch in row.chars() {
                cells.push(
                    CellKind::from_char(ch)
                        .ok_or_else(|| format!("unknown grid char {ch:?} in row {r}"))?,
                );
            }
        }
        Ok(Grid {
            width,
            height,
            cells,
        })
    }
}

impl From<Grid> for Vec<String> {
    fn from(g: Grid) -> Self {
        g.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub name: String,
    /// Cells as `[row, col]` pairs.
    pub cells: Vec<[i64; 2]>,
}

impl Landmark {
    pub fn cells_xy(&self) -> impl Iterator<Item = CellXY> + '_ {
        self.cells.iter().map(|[r, c]| (*c, *r))
    }
}

/// Annotated decision point used for key-point accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KeyPoint {
    /// Correct when the landmark is reached in instruction order.
    Reach { label: String, landmark: String },
    /// Correct when the first departure from `cell` (`[row, col]`) is along `heading`.
    Exit {
        label: String,
        cell: [i64; 2],
        heading: Heading,
    },
    /// Correct when the first action taken at `cell` equals `expected`.
    Act {
        label: String,
        cell: [i64; 2],
        expected: Action,
    },
}

impl KeyPoint {
    pub fn label(&self) -> &str {
        match self {
            KeyPoint::Reach { label, .. }
            | KeyPoint::Exit { label, .. }
            | KeyPoint::Act { label, .. } => label,
        }
    }
}

/// A navigation task: world ground truth plus the instruction to follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: Grid,
    pub cell_size: f64,
    pub landmarks: Vec<Landmark>,
    pub start: Pose,
    pub instruction: String,
    pub subtasks: Vec<String>,
    #[serde(default)]
    pub key_points: Vec<KeyPoint>,
    pub step_budget: u32,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, SimError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return bad(format!(
                "cell_size must be positive (got {})",
                self.cell_size
            ));
        }
        let Some(start) = self.cell_of(&self.start.position()) else {
            return bad(format!(
                "start ({}, {}) is not on a cell center",
                self.start.x, self.start.y
            ));
        };
        if !self.grid.in_bounds(start) {
            return bad(format!("start cell {start:?} outside grid"));
        }
        if !self.grid.passable(start) {
            return bad(format!("start cell {start:?} is not free"));
        }
        let mut names = BTreeSet::new();
        for lm in &self.landmarks {
            if lm.name.trim().is_empty() {
                return bad("landmark with empty name".into());
            }
            if !names.insert(lm.name.as_str()) {
                return bad(format!("duplicate landmark name {:?}", lm.name));
            }
            if lm.cells.is_empty() {
                return bad(format!("landmark {:?} has no cells", lm.name));
            }
            if let Some(c) = lm.cells_xy().find(|c| !self.grid.in_bounds(*c)) {
                return bad(format!("landmark {:?} cell {c:?} outside grid", lm.name));
            }
        }
        if self.subtasks.is_empty() {
            return bad("scenario lists no subtasks".into());
        }
        for name in &self.subtasks {
            if !names.contains(name.as_str()) {
                return bad(format!("subtask references unknown landmark {name:?}"));
            }
        }
        for kp in &self.key_points {
            match kp {
                KeyPoint::Reach { landmark, .. } if !names.contains(landmark.as_str()) => {
                    return bad(format!(
                        "key point references unknown landmark {landmark:?}"
                    ));
                }
                KeyPoint::Exit { cell: [r, c], .. } | KeyPoint::Act { cell: [r, c], .. }
                    if !self.grid.in_bounds((*c, *r)) =>
                {
                    return bad(format!("key point cell [{r}, {c}] outside grid"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn landmark(&self, name: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.name == name)
    }

    /// Cell whose center is `p`, if `p` lies on a center.
    pub fn cell_of(&self, p: &Point) -> Option<CellXY> {
        let fx = p.x / self.cell_size;
        let fy = p.y / self.cell_size;
        let (rx, ry) = (fx.round(), fy.round());
        ((fx - rx).abs() < 1e-6 && (fy - ry).abs() < 1e-6).then_some((rx as i64, ry as i64))
    }

    pub fn center(&self, (x, y): CellXY) -> Point {
        Point::new(x as f64 * self.cell_size, y as f64 * self.cell_size)
    }

    /// Distance from `p` to the nearest cell center of landmark `name`.
    pub fn distance_to_landmark(&self, p: &Point, name: &str) -> Option<f64> {
        let lm = self.landmark(name)?;
        lm.cells_xy()
            .map(|c| self.center(c).distance(p))
            .min_by(f64::total_cmp)
    }

    /// Bounding-box diagonal of the world in meters.
    pub fn diameter(&self) -> f64 {
        self.cell_size * (self.grid.width() as f64).hypot(self.grid.height() as f64)
    }

    pub fn landmark_names(&self) -> Vec<String> {
        self.landmarks.iter().map(|l| l.name.clone()).collect()
    }

    /// Landmark occupying a cell, if any.
    pub fn landmark_at(&self, c: CellXY) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.cells_xy().any(|x| x == c))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} scenario: {}",
            self.grid.width(),
            self.grid.height(),
            self.instruction
        )
    }
}
