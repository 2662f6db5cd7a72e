//! Internal map of the control-execution role: geometric record, quadrature
//! candidate waypoints and a topological graph of confirmed connectivity.

mod geometric;
mod topo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometric::{candidates, GeometricMap, NODE_TOLERANCE};
pub use topo::TopoGraph;

use crate::geom::{Direction, Point, Pose};
use crate::num::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("self loop on {0}")]
    SelfLoop(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no path from {from} to {to}")]
    Unreachable { from: NodeId, to: NodeId },
}

/// Place identifier. Serialized as `"v<n>"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl From<NodeId> for String {
    fn from(v: NodeId) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for NodeId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.strip_prefix('v')
            .and_then(|n| n.parse().ok())
            .map(NodeId)
            .ok_or_else(|| format!("node id must look like v<n> (got {s:?})"))
    }
}

/// Coupled geometric map and topological graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap<T> {
    pub geometric: GeometricMap<T>,
    pub topo: TopoGraph,
    pub delta: T,
    topo_enabled: bool,
}

/// Serializable view embedded into trace records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot<T> {
    pub trajectory: Vec<Pose<T>>,
    pub nodes: std::collections::BTreeMap<NodeId, [T; 2]>,
    pub edges: Vec<[NodeId; 2]>,
    #[serde(default)]
    pub obstacles: Vec<[T; 2]>,
}

impl<T: Real> WorldMap<T> {
    pub fn new(origin: Pose<T>, delta: T) -> Self {
        WorldMap {
            geometric: GeometricMap::new(origin),
            topo: TopoGraph::default(),
            delta,
            topo_enabled: true,
        }
    }

    /// Map with no geometric record at all (and hence no topology).
    pub fn empty(delta: T) -> Self {
        WorldMap {
            geometric: GeometricMap::empty(),
            topo: TopoGraph::default(),
            delta,
            topo_enabled: false,
        }
    }

    pub fn without_topology(mut self) -> Self {
        self.topo_enabled = false;
        self.topo = TopoGraph::default();
        self
    }

    pub fn topology_enabled(&self) -> bool {
        self.topo_enabled
    }

    pub fn current_pose(&self) -> Option<Pose<T>> {
        self.geometric.trajectory.last().copied()
    }

    /// Registers the four candidates around `pose` and links the current node
    /// to every candidate whose direction was confirmed traversable.
    pub fn integrate_view(
        &mut self,
        pose: &Pose<T>,
        traversable: &[Direction],
        obstacles: &[Point<T>],
    ) -> [NodeId; 4] {
        let current = self.geometric.ensure_node(pose.position());
        let cands = self.geometric.register_candidates(pose, self.delta);
        for p in obstacles {
            self.geometric.mark_obstacle(*p);
        }
        if self.topo_enabled {
            self.topo.add_node(current);
            for d in traversable {
                self.topo
                    .connect(current, cands[d.index()])
                    .expect("current node registered, candidate distinct");
            }
        }
        cands
    }

    /// Appends the post-step pose; a displacement links the two places.
    pub fn record_step(&mut self, before: &Pose<T>, after: &Pose<T>) {
        self.geometric.record_pose(*after);
        if !before
            .position()
            .approx_eq(&after.position(), T::lit(NODE_TOLERANCE))
        {
            let a = self.geometric.ensure_node(before.position());
            let b = self.geometric.ensure_node(after.position());
            if self.topo_enabled {
                self.topo.add_node(a);
                self.topo.connect(a, b).expect("distinct places");
            }
        }
    }

    pub fn snapshot(&self) -> MapSnapshot<T> {
        MapSnapshot {
            trajectory: self.geometric.trajectory.clone(),
            nodes: self
                .geometric
                .nodes
                .iter()
                .map(|(k, p)| (*k, [p.x, p.y]))
                .collect(),
            edges: self.topo.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            obstacles: self
                .geometric
                .obstacles
                .iter()
                .map(|p| [p.x, p.y])
                .collect(),
        }
    }

    /// Every topology node has coordinates in the geometric registry.
    pub fn is_consistent(&self) -> bool {
        self.topo
            .nodes()
            .all(|v| self.geometric.nodes.contains_key(&v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Heading;

    #[test]
    fn node_id_serde() {
        assert_eq!(serde_json::to_string(&NodeId(5)).unwrap(), "\"v5\"");
        assert_eq!(
            serde_json::from_str::<NodeId>("\"v12\"").unwrap(),
            NodeId(12)
        );
        assert!(serde_json::from_str::<NodeId>("\"12\"").is_err());
    }

    #[test]
    fn integrate_and_move_keep_graph_consistent() {
        let p0 = Pose::new(2.0f64, 1.0, Heading::North);
        let mut m = WorldMap::new(p0, 1.0);
        let c = m.integrate_view(
            &p0,
            &[Direction::Front, Direction::Left],
            &[Point::new(3.0, 1.0)],
        );
        assert_eq!(m.topo.edges().len(), 2);
        let p1 = Pose::new(2.0, 2.0, Heading::North);
        m.record_step(&p0, &p1);
        assert_eq!(m.geometric.node_at(&p1.position()), Some(c[0]));
        assert_eq!(
            m.topo.edges().len(),
            2,
            "move along a confirmed edge adds nothing"
        );
        assert!(m.is_consistent());
        let snap = m.snapshot();
        assert_eq!(snap.trajectory.len(), 2);
        assert_eq!(snap.obstacles, vec![[3.0, 1.0]]);
        let json = serde_json::to_string(&snap).unwrap();
        assert!(json.contains("\"v2\":[2.0,2.0]"));
    }

    #[test]
    fn disabled_topology_stays_empty() {
        let p0 = Pose::new(0.0f64, 0.0, Heading::East);
        let mut m = WorldMap::new(p0, 1.0).without_topology();
        m.integrate_view(&p0, &Direction::ALL, &[]);
        m.record_step(&p0, &Pose::new(1.0, 0.0, Heading::East));
        assert_eq!(m.topo.nodes().count(), 0);
        assert_eq!(m.geometric.trajectory.len(), 2);
    }
}
