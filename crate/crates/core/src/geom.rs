//! Poses, headings and the four-primitive action space.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::num::{snap, Real};

/// Cardinal heading. Degrees grow counter-clockwise from the +x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Heading {
    East,
    North,
    West,
    South,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::East, Heading::North, Heading::West, Heading::South];

    pub fn degrees(self) -> i64 {
        match self {
            Heading::East => 0,
            Heading::North => 90,
            Heading::West => 180,
            Heading::South => 270,
        }
    }

    /// Accepts any multiple of 90, including negative values.
    pub fn from_degrees(deg: i64) -> Option<Heading> {
        if deg % 90 != 0 {
            return None;
        }
        Some(Heading::ALL[(deg.rem_euclid(360) / 90) as usize])
    }

    /// Rotates by `quarter_turns` counter-clockwise quarter turns (negative is clockwise).
    pub fn rotated(self, quarter_turns: i64) -> Heading {
        Heading::from_degrees(self.degrees() + 90 * quarter_turns).expect("multiple of 90")
    }

    pub fn left(self) -> Heading {
        self.rotated(1)
    }

    pub fn right(self) -> Heading {
        self.rotated(-1)
    }

    /// Unit grid step `(dx, dy)` along this heading.
    pub fn unit(self) -> (i64, i64) {
        match self {
            Heading::East => (1, 0),
            Heading::North => (0, 1),
            Heading::West => (-1, 0),
            Heading::South => (0, -1),
        }
    }

    pub fn radians<T: Real>(self) -> T {
        T::lit(self.degrees() as f64).to_radians()
    }

    /// Heading of the view `dir` relative to this heading.
    pub fn toward(self, dir: Direction) -> Heading {
        self.rotated(-(dir.index() as i64))
    }

    /// Relative direction that a body facing `self` must look along to face `other`.
    pub fn relative(self, other: Heading) -> Direction {
        let diff = (self.degrees() - other.degrees()).rem_euclid(360) / 90;
        Direction::ALL[diff as usize]
    }
}

impl From<Heading> for i64 {
    fn from(h: Heading) -> i64 {
        h.degrees()
    }
}

impl TryFrom<i64> for Heading {
    type Error = String;

    fn try_from(deg: i64) -> Result<Self, Self::Error> {
        match deg {
            0 | 90 | 180 | 270 => Ok(Heading::from_degrees(deg).expect("cardinal")),
            other => Err(format!(
                "heading must be one of 0, 90, 180, 270 (got {other})"
            )),
        }
    }
}

/// Body-relative view direction, in candidate order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Front,
    Right,
    Back,
    Left,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Front,
        Direction::Right,
        Direction::Back,
        Direction::Left,
    ];

    pub fn index(self) -> usize {
        match self {
            Direction::Front => 0,
            Direction::Right => 1,
            Direction::Back => 2,
            Direction::Left => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Front => "front",
            Direction::Right => "right",
            Direction::Back => "back",
            Direction::Left => "left",
        }
    }

    /// Quadrant containing a relative bearing (degrees, positive to the left).
    ///
    /// (-45, 45] is Front, (45, 135] Left, (-135, -45] Right, everything else Back.
    pub fn from_bearing(bearing: f64) -> Direction {
        let b = normalize_bearing(bearing);
        if b > -45.0 && b <= 45.0 {
            Direction::Front
        } else if b > 45.0 && b <= 135.0 {
            Direction::Left
        } else if b > -135.0 && b <= -45.0 {
            Direction::Right
        } else {
            Direction::Back
        }
    }

    /// First primitive that makes progress toward this direction.
    pub fn first_action(self) -> Action {
        match self {
            Direction::Front => Action::MoveForward,
            Direction::Left => Action::TurnLeft90,
            Direction::Right | Direction::Back => Action::TurnRight90,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Wraps degrees into `[-180, 180)`.
pub fn normalize_bearing(deg: f64) -> f64 {
    let b = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if b >= 180.0 {
        b - 360.0
    } else {
        b
    }
}

/// The discrete action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    TurnRight90,
    TurnLeft90,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::MoveForward,
        Action::TurnRight90,
        Action::TurnLeft90,
        Action::Stop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveForward => "MoveForward",
            Action::TurnRight90 => "TurnRight90",
            Action::TurnLeft90 => "TurnLeft90",
            Action::Stop => "Stop",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn is_turn(self) -> bool {
        matches!(self, Action::TurnLeft90 | Action::TurnRight90)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point<T>) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn approx_eq(&self, other: &Point<T>, tol: T) -> bool {
        (self.x - other.x).abs() <= tol && (self.y - other.y).abs() <= tol
    }
}

/// Agent pose: position in meters and a cardinal heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub heading: Heading,
}

impl<T: Real> Pose<T> {
    pub fn new(x: T, y: T, heading: Heading) -> Self {
        Pose { x, y, heading }
    }

    pub fn position(&self) -> Point<T> {
        Point::new(self.x, self.y)
    }

    /// World point at `distance` along relative `bearing` degrees (positive to the left).
    pub fn project(&self, bearing: T, distance: T) -> Point<T> {
        let angle = (T::lit(self.heading.degrees() as f64) + bearing).to_radians();
        let eps = T::lit(1e-9);
        let (s, c) = angle.sin_cos();
        Point::new(
            self.x + distance * snap(c, eps),
            self.y + distance * snap(s, eps),
        )
    }

    /// Relative bearing (degrees, `[-180, 180)`) and distance to `p`.
    pub fn polar_to(&self, p: &Point<T>) -> (T, T) {
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        let abs = dy.atan2(dx).to_degrees();
        let rel = normalize_bearing((abs - T::lit(self.heading.degrees() as f64)).to_f64_lossy());
        (T::lit(rel), dx.hypot(dy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heading_rotation_wraps() {
        assert_eq!(Heading::East.left(), Heading::North);
        assert_eq!(Heading::East.right(), Heading::South);
        assert_eq!(Heading::South.left(), Heading::East);
        assert_eq!(Heading::from_degrees(-90), Some(Heading::South));
        assert_eq!(Heading::from_degrees(45), None);
    }

    #[test]
    fn heading_serde_is_degrees() {
        assert_eq!(serde_json::to_string(&Heading::West).unwrap(), "180");
        assert!(serde_json::from_str::<Heading>("45").is_err());
        assert_eq!(
            serde_json::from_str::<Heading>("270").unwrap(),
            Heading::South
        );
    }

    #[test]
    fn relative_direction_roundtrip() {
        for h in Heading::ALL {
            for d in Direction::ALL {
                assert_eq!(h.relative(h.toward(d)), d);
            }
        }
    }

    #[test]
    fn bearing_quadrants() {
        assert_eq!(Direction::from_bearing(0.0), Direction::Front);
        assert_eq!(Direction::from_bearing(45.0), Direction::Front);
        assert_eq!(Direction::from_bearing(90.0), Direction::Left);
        assert_eq!(Direction::from_bearing(-90.0), Direction::Right);
        assert_eq!(Direction::from_bearing(180.0), Direction::Back);
        assert_eq!(Direction::from_bearing(-135.0), Direction::Back);
        assert_eq!(Direction::from_bearing(-134.9), Direction::Right);
    }

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_bearing(180.0), -180.0);
        assert_eq!(normalize_bearing(-180.0), -180.0);
        assert_eq!(normalize_bearing(270.0), -90.0);
        assert_eq!(normalize_bearing(-190.0), 170.0);
    }

    #[test]
    fn project_and_polar_agree() {
        let p = Pose::new(2.0f64, 1.0, Heading::North);
        let q = p.project(90.0, 2.0);
        assert_eq!(q, Point::new(0.0, 1.0));
        let (b, d) = p.polar_to(&q);
        assert!((b - 90.0).abs() < 1e-9 && (d - 2.0).abs() < 1e-12);
    }
}
