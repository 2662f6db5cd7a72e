use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{MapError, NodeId};

/// Undirected place graph backed by an adjacency map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopoGraph {
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl TopoGraph {
    pub fn add_node(&mut self, v: NodeId) {
        self.adjacency.entry(v).or_default();
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.adjacency.contains_key(&v)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Adds `vi` and the edge `(vc, vi)`. Returns whether the edge is new.
    pub fn connect(&mut self, vc: NodeId, vi: NodeId) -> Result<bool, MapError> {
        if vc == vi {
            return Err(MapError::SelfLoop(vc));
        }
        if !self.contains(vc) {
            return Err(MapError::UnknownNode(vc));
        }
        let fresh = self.adjacency.entry(vc).or_default().insert(vi);
        self.adjacency.entry(vi).or_default().insert(vc);
        Ok(fresh)
    }

    /// Sorted neighbor list.
    pub fn neighbors(&self, v: NodeId) -> Vec<NodeId> {
        self.adjacency
            .get(&v)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    /// Edges as `(low, high)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.adjacency
            .iter()
            .flat_map(|(a, ns)| ns.iter().filter(move |b| a < *b).map(move |b| (*a, *b)))
            .collect()
    }

    fn hops_from(&self, root: NodeId) -> BTreeMap<NodeId, usize> {
        let mut dist = BTreeMap::from([(root, 0)]);
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for n in &self.adjacency[&v] {
                if !dist.contains_key(n) {
                    dist.insert(*n, d + 1);
                    queue.push_back(*n);
                }
            }
        }
        dist
    }

    /// Minimum-hop path including both endpoints. Among equal-length paths the
    /// lexicographically smallest id sequence wins.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Result<Vec<NodeId>, MapError> {
        for v in [from, to] {
            if !self.contains(v) {
                return Err(MapError::UnknownNode(v));
            }
        }
        let to_goal = self.hops_from(to);
        let Some(&total) = to_goal.get(&from) else {
            return Err(MapError::Unreachable { from, to });
        };
        let mut path = Vec::with_capacity(total + 1);
        let mut cur = from;
        path.push(cur);
        while cur != to {
            let want = to_goal[&cur] - 1;
            cur = *self.adjacency[&cur]
                .iter()
                .find(|n| to_goal.get(n) == Some(&want))
                .expect("a neighbor one hop closer exists");
            path.push(cur);
        }
        Ok(path)
    }

    /// Path to the closest node satisfying `pred` (excluding `from` itself),
    /// ties broken by smallest id.
    pub fn path_to_nearest(
        &self,
        from: NodeId,
        pred: impl Fn(NodeId) -> bool,
    ) -> Option<Vec<NodeId>> {
        if !self.contains(from) {
            return None;
        }
        let dist = self.hops_from(from);
        let goal = dist
            .iter()
            .filter(|(v, d)| **d > 0 && pred(**v))
            .min_by_key(|(v, d)| (**d, **v))
            .map(|(v, _)| *v)?;
        self.shortest_path(from, goal).ok()
    }
}
