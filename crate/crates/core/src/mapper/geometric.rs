use std::collections::BTreeMap;

use super::NodeId;
use crate::geom::{Point, Pose};
use crate::num::{snap, Real};

/// Coordinates closer than this (meters) resolve to the same node.
pub const NODE_TOLERANCE: f64 = 1e-6;

/// Quadrature waypoints at distance `delta`, ordered Front, Right, Back, Left:
/// `(x + delta cos(theta - i pi/2), y + delta sin(theta - i pi/2))`.
pub fn candidates<T: Real>(pose: &Pose<T>, delta: T) -> [Point<T>; 4] {
    let theta = pose.heading.radians::<T>();
    let eps = T::lit(1e-9);
    std::array::from_fn(|i| {
        let angle = theta - T::lit(i as f64) * T::FRAC_PI_2();
        let (s, c) = angle.sin_cos();
        Point::new(pose.x + delta * snap(c, eps), pose.y + delta * snap(s, eps))
    })
}

/// Incremental coordinate record anchored at the episode origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMap<T> {
    pub origin: Option<Pose<T>>,
    pub trajectory: Vec<Pose<T>>,
    pub nodes: BTreeMap<NodeId, Point<T>>,
    pub obstacles: Vec<Point<T>>,
    next_id: u32,
}

impl<T: Real> GeometricMap<T> {
    pub fn new(origin: Pose<T>) -> Self {
        GeometricMap {
            origin: Some(origin),
            trajectory: vec![origin],
            nodes: BTreeMap::new(),
            obstacles: vec![],
            next_id: 1,
        }
    }

    pub fn empty() -> Self {
        GeometricMap {
            origin: None,
            trajectory: vec![],
            nodes: BTreeMap::new(),
            obstacles: vec![],
            next_id: 1,
        }
    }

    fn tol() -> T {
        T::lit(NODE_TOLERANCE)
    }

    pub fn record_pose(&mut self, pose: Pose<T>) {
        self.trajectory.push(pose);
    }

    pub fn node_at(&self, p: &Point<T>) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|(_, q)| q.approx_eq(p, Self::tol()))
            .map(|(id, _)| *id)
    }

    /// Existing node at `p`, or a fresh id. Ids are never reused.
    pub fn ensure_node(&mut self, p: Point<T>) -> NodeId {
        if let Some(id) = self.node_at(&p) {
            return id;
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(id, p);
        id
    }

    /// Resolves the four candidates of `pose` to node ids. Adds no edges.
    pub fn register_candidates(&mut self, pose: &Pose<T>, delta: T) -> [NodeId; 4] {
        candidates(pose, delta).map(|p| self.ensure_node(p))
    }

    pub fn mark_obstacle(&mut self, p: Point<T>) {
        if !self.obstacles.iter().any(|q| q.approx_eq(&p, Self::tol())) {
            self.obstacles.push(p);
        }
    }

    pub fn is_obstacle(&self, p: &Point<T>) -> bool {
        self.obstacles.iter().any(|q| q.approx_eq(p, Self::tol()))
    }

    pub fn visited(&self, p: &Point<T>) -> bool {
        self.trajectory
            .iter()
            .any(|q| q.position().approx_eq(p, Self::tol()))
    }
}
