use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use super::types::{
    token_overlap, ActRequest, Decision, EnvDescription, LandmarkGeometry, ObserveRequest,
    PlanRequest, Salient, SubTaskPlan, Verification, VerifyRequest,
};
use super::{AgentError, Controller, Observer, Planner};
use crate::geom::{Action, Direction};
use crate::mapper::{NodeId, TopoGraph};
use crate::memory::tokenize;
use crate::simworld::{PerceptTuple, WALL};
use crate::{MapSnapshot, Point, Pose};

const EPS: f64 = 1e-9;

/// Landmark names found in `text`, ordered by first occurrence.
pub fn landmark_mentions(text: &str, names: &[String]) -> Vec<String> {
    let words: Vec<String> = tokenize(text).collect();
    let mut found: Vec<(usize, &String)> = names
        .iter()
        .filter_map(|name| {
            let pat: Vec<String> = tokenize(name).collect();
            if pat.is_empty() || pat.len() > words.len() {
                return None;
            }
            words
                .windows(pat.len())
                .position(|w| w == pat.as_slice())
                .map(|pos| (pos, name))
        })
        .collect();
    found.sort();
    found.into_iter().map(|(_, n)| n.clone()).collect()
}

/// Splits the instruction at landmark mentions; verifies by distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedPlanner;

impl ScriptedPlanner {
    fn resolve<'a>(
        target: &str,
        landmarks: &'a [LandmarkGeometry],
    ) -> Option<&'a LandmarkGeometry> {
        if let Some(lm) = landmarks.iter().find(|l| l.name == target) {
            return Some(lm);
        }
        let names: Vec<String> = landmarks.iter().map(|l| l.name.clone()).collect();
        let last = landmark_mentions(target, &names).pop()?;
        landmarks.iter().find(|l| l.name == last)
    }
}

impl Planner for ScriptedPlanner {
    fn plan(&mut self, req: &PlanRequest) -> Result<SubTaskPlan, AgentError> {
        if req.instruction.trim().is_empty() {
            return Err(AgentError::PlanEmpty);
        }
        let items = landmark_mentions(&req.instruction, &req.landmarks)
            .into_iter()
            .map(|n| (n.clone(), format!("go to the {n}")))
            .collect();
        SubTaskPlan::new(&req.instruction, items)
    }

    fn verify(&mut self, req: &VerifyRequest) -> Result<Verification, AgentError> {
        let Some(lm) = Self::resolve(&req.subtask.target, &req.landmarks) else {
            return Ok(Verification {
                done: false,
                progress: 0.0,
            });
        };
        let here = req.pose.position();
        let dist = lm
            .cells
            .iter()
            .map(|[x, y]| here.distance(&Point::new(*x, *y)))
            .fold(f64::INFINITY, f64::min);
        let progress = (1.0 - dist / req.d_norm).clamp(0.0, 1.0);
        let done = progress + EPS >= req.tau && dist <= req.radius + EPS;
        Ok(Verification { done, progress })
    }
}

fn summary(view: &PerceptTuple) -> String {
    let mut parts = vec![];
    if let Some(l) = view.landmarks.first() {
        parts.push(format!("{} at {:.1} m", l.name, l.distance));
    }
    if let Some(o) = view.obstacles.first() {
        parts.push(format!("{} at {:.1} m", o.category, o.distance));
    }
    if parts.is_empty() {
        "open space".to_string()
    } else {
        parts.join(", ")
    }
}

/// Salience filtering against `target`, traversability against `delta`.
pub fn describe_scene(views: &[PerceptTuple], target: Option<&str>, delta: f64) -> EnvDescription {
    let mut salient = vec![];
    for v in views {
        for l in &v.landmarks {
            let task_relevant = target.is_some_and(|t| token_overlap(&l.name, t));
            salient.push(Salient {
                name: l.name.clone(),
                bearing: l.bearing,
                distance: l.distance,
                task_relevant,
            });
        }
        let mut seen = HashSet::new();
        for o in v.obstacles.iter().filter(|o| o.category != WALL) {
            if seen.insert(o.category.as_str()) {
                let task_relevant = target.is_some_and(|t| token_overlap(&o.category, t));
                salient.push(Salient {
                    name: o.category.clone(),
                    bearing: o.bearing,
                    distance: o.distance,
                    task_relevant,
                });
            }
        }
    }
    EnvDescription {
        summaries: views.iter().map(summary).collect(),
        salient,
        traversable_dirs: views
            .iter()
            .filter(|v| v.traversability.walkable && v.traversability.free_range + EPS >= delta)
            .map(|v| v.direction)
            .collect(),
        raw_views: views.to_vec(),
    }
}

/// The replacement used when the observation role is ablated: every landmark
/// counts as relevant and raw walkable flags are passed through.
pub fn describe_direct(views: &[PerceptTuple]) -> EnvDescription {
    EnvDescription {
        summaries: views.iter().map(|v| v.context.clone()).collect(),
        salient: views
            .iter()
            .flat_map(|v| &v.landmarks)
            .map(|l| Salient {
                name: l.name.clone(),
                bearing: l.bearing,
                distance: l.distance,
                task_relevant: true,
            })
            .collect(),
        traversable_dirs: views
            .iter()
            .filter(|v| v.traversability.walkable)
            .map(|v| v.direction)
            .collect(),
        raw_views: views.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedObserver;

impl Observer for ScriptedObserver {
    fn observe(&mut self, req: &ObserveRequest) -> Result<EnvDescription, AgentError> {
        Ok(describe_scene(
            &req.views,
            req.subtask.as_ref().map(|s| s.target.as_str()),
            req.delta,
        ))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DirectObserver;

impl Observer for DirectObserver {
    fn observe(&mut self, req: &ObserveRequest) -> Result<EnvDescription, AgentError> {
        Ok(describe_direct(&req.views))
    }
}

type Key = (i64, i64);

/// Integer lattice anchored at the current pose with spacing delta.
struct Lattice<'a> {
    pose: Pose,
    delta: f64,
    map: &'a MapSnapshot,
    blocked: HashSet<Key>,
    visited: HashSet<Key>,
}

impl<'a> Lattice<'a> {
    fn new(req: &'a ActRequest) -> Option<Self> {
        if req.map.trajectory.is_empty() {
            return None;
        }
        let mut lat = Lattice {
            pose: req.pose,
            delta: req.delta,
            map: &req.map,
            blocked: HashSet::new(),
            visited: HashSet::new(),
        };
        lat.blocked = req
            .map
            .obstacles
            .iter()
            .map(|[x, y]| lat.key(&Point::new(*x, *y)))
            .collect();
        for d in Direction::ALL {
            if !req.env.traversable(d) {
                lat.blocked.insert(lat.neighbor(d));
            }
        }
        lat.visited = req
            .map
            .trajectory
            .iter()
            .map(|p| lat.key(&p.position()))
            .collect();
        Some(lat)
    }

    fn key(&self, p: &Point) -> Key {
        (
            ((p.x - self.pose.x) / self.delta).round() as i64,
            ((p.y - self.pose.y) / self.delta).round() as i64,
        )
    }

    fn neighbor(&self, d: Direction) -> Key {
        self.pose.heading.toward(d).unit()
    }

    fn direction_of(&self, k: Key) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| self.neighbor(*d) == k)
    }

    fn node_keys(&self) -> BTreeMap<NodeId, Key> {
        self.map
            .nodes
            .iter()
            .map(|(id, [x, y])| (*id, self.key(&Point::new(*x, *y))))
            .collect()
    }

    /// Hop distances to `goal` over the optimistic lattice (unknown cells free).
    fn distances_to(&self, goal: Key) -> HashMap<Key, u32> {
        let pts = self
            .map
            .nodes
            .values()
            .chain(self.map.obstacles.iter())
            .map(|[x, y]| self.key(&Point::new(*x, *y)))
            .chain(self.visited.iter().copied())
            .chain([goal, (0, 0)]);
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
        for (x, y) in pts {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        let (lo, hi) = ((lo.0 - 2, lo.1 - 2), (hi.0 + 2, hi.1 + 2));
        let mut dist = HashMap::from([(goal, 0u32)]);
        let mut queue = VecDeque::from([goal]);
        while let Some(k) = queue.pop_front() {
            let d = dist[&k];
            for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
                let n = (k.0 + dx, k.1 + dy);
                if n.0 < lo.0
                    || n.1 < lo.1
                    || n.0 > hi.0
                    || n.1 > hi.1
                    || self.blocked.contains(&n)
                    || dist.contains_key(&n)
                {
                    continue;
                }
                dist.insert(n, d + 1);
                queue.push_back(n);
            }
        }
        dist
    }

    fn candidate_refs(&self) -> Vec<NodeId> {
        let keys = self.node_keys();
        Direction::ALL
            .iter()
            .filter_map(|d| {
                keys.iter()
                    .find(|(_, k)| **k == self.neighbor(*d))
                    .map(|(id, _)| *id)
            })
            .collect()
    }
}

fn act(action: Action, justification: String, refs: Vec<NodeId>) -> Decision {
    Decision {
        action,
        justification,
        candidate_refs: refs,
    }
}

fn toward(dir: Direction) -> Action {
    dir.first_action()
}

/// Deterministic controller: goal-directed routing over the known map,
/// frontier exploration otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedController;

impl ScriptedController {
    fn goal(req: &ActRequest, visited: impl Fn(&Point) -> bool) -> Option<(Point, String)> {
        let pose = &req.pose;
        let mut seen: Vec<(f64, &str, Point)> = req
            .env
            .salient
            .iter()
            .filter(|s| s.task_relevant)
            .map(|s| {
                (
                    s.distance,
                    s.name.as_str(),
                    pose.project(s.bearing, s.distance),
                )
            })
            .filter(|(_, _, p)| !visited(p))
            .collect();
        seen.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        if let Some((_, name, p)) = seen.first() {
            return Some((*p, name.to_string()));
        }
        let target = req.subtask.as_ref().map(|s| s.target.as_str())?;
        let here = pose.position();
        for rec in req.history.iter().rev() {
            if rec.subtask_target.as_deref() != Some(target) {
                continue;
            }
            let mut pts: Vec<(f64, &str, Point)> = rec
                .observation
                .salient
                .iter()
                .filter(|s| s.relevant)
                .map(|s| Point::new(s.x, s.y))
                .zip(
                    rec.observation
                        .salient
                        .iter()
                        .filter(|s| s.relevant)
                        .map(|s| s.name.as_str()),
                )
                .map(|(p, n)| (p.distance(&here), n, p))
                .filter(|(_, _, p)| !visited(p))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
            if let Some((_, name, p)) = pts.first() {
                return Some((*p, name.to_string()));
            }
        }
        None
    }

    fn reactive(req: &ActRequest, goal: Option<(Point, String)>) -> Decision {
        let env = &req.env;
        if let Some((p, name)) = goal {
            let (bearing, _) = req.pose.polar_to(&p);
            let dir = Direction::from_bearing(bearing);
            if dir != Direction::Front && env.traversable(dir) {
                return act(toward(dir), format!("{name} to the {dir}; turning"), vec![]);
            }
            if dir == Direction::Front && env.traversable(Direction::Front) {
                return act(
                    Action::MoveForward,
                    format!("{name} ahead; moving forward"),
                    vec![],
                );
            }
        }
        if env.traversable(Direction::Front) {
            return act(
                Action::MoveForward,
                "front is open; moving forward".into(),
                vec![],
            );
        }
        let dir = [Direction::Right, Direction::Left, Direction::Back]
            .into_iter()
            .find(|d| env.traversable(*d))
            .expect("caller checked some direction is traversable");
        act(
            toward(dir),
            format!("front blocked; turning toward {dir}"),
            vec![],
        )
    }

    fn route(lat: &Lattice<'_>, req: &ActRequest, goal: Point, name: &str) -> Option<Decision> {
        let gk = lat.key(&goal);
        let dist = lat.distances_to(gk);
        let &d0 = dist.get(&(0, 0))?;
        let refs = lat.candidate_refs();
        if d0 == 0 {
            return Some(act(
                Action::TurnLeft90,
                format!("at {name}; holding position"),
                refs,
            ));
        }
        let (bearing, _) = req.pose.polar_to(&goal);
        let quadrant = Direction::from_bearing(bearing);
        let order = [
            quadrant,
            Direction::Front,
            Direction::Left,
            Direction::Right,
            Direction::Back,
        ];
        let dir = order
            .into_iter()
            .find(|d| req.env.traversable(*d) && dist.get(&lat.neighbor(*d)) == Some(&(d0 - 1)))?;
        let why = match dir {
            Direction::Front => format!("{name} {d0} steps away; moving forward"),
            _ => format!("{name} {d0} steps away; route continues {dir}"),
        };
        Some(act(toward(dir), why, refs))
    }

    /// One step toward `goal` using only the cells around the agent, preferring
    /// cells not yet visited.
    fn greedy(lat: &Lattice<'_>, req: &ActRequest, goal: Point, name: &str) -> Decision {
        if lat.key(&goal) == (0, 0) {
            return act(Action::TurnLeft90, format!("at {name}; holding position"), vec![]);
        }
        let (bearing, _) = req.pose.polar_to(&goal);
        let order = [
            Direction::from_bearing(bearing),
            Direction::Front,
            Direction::Left,
            Direction::Right,
            Direction::Back,
        ];
        let open = |d: &Direction| req.env.traversable(*d) && !lat.blocked.contains(&lat.neighbor(*d));
        let dir = order
            .iter()
            .find(|d| open(d) && !lat.visited.contains(&lat.neighbor(**d)))
            .or_else(|| order.iter().find(|d| open(d)))
            .copied()
            .unwrap_or(order[0]);
        if !req.env.traversable(dir) {
            return Self::reactive(req, Some((goal, name.to_string())));
        }
        let why = match dir {
            Direction::Front => format!("{name} nearby; moving forward"),
            _ => format!("{name} nearby; stepping {dir}"),
        };
        act(toward(dir), why, vec![])
    }

    fn explore(lat: &Lattice<'_>, req: &ActRequest) -> Decision {
        let env = &req.env;
        let refs = lat.candidate_refs();
        let ahead = lat.neighbor(Direction::Front);
        if env.traversable(Direction::Front) && !lat.blocked.contains(&ahead) && !lat.visited.contains(&ahead) {
            return act(
                Action::MoveForward,
                "unvisited space ahead; exploring".into(),
                refs,
            );
        }
        if !req.map.edges.is_empty() {
            let keys = lat.node_keys();
            let mut topo = TopoGraph::default();
            for [a, b] in &req.map.edges {
                if lat.blocked.contains(&keys[a]) || lat.blocked.contains(&keys[b]) {
                    continue;
                }
                topo.add_node(*a);
                topo.connect(*a, *b).expect("snapshot edges are proper");
            }
            let here = keys.iter().find(|(_, k)| **k == (0, 0)).map(|(id, _)| *id);
            let path =
                here.and_then(|h| topo.path_to_nearest(h, |v| !lat.visited.contains(&keys[&v])));
            if let Some(path) = path {
                if let Some(dir) = lat
                    .direction_of(keys[&path[1]])
                    .filter(|d| env.traversable(*d))
                {
                    let frontier = path.last().expect("nonempty path");
                    return act(
                        toward(dir),
                        format!("heading {dir} toward frontier {frontier}"),
                        path,
                    );
                }
            }
        }
        for dir in [Direction::Right, Direction::Left, Direction::Back] {
            let n = lat.neighbor(dir);
            if env.traversable(dir) && !lat.blocked.contains(&n) && !lat.visited.contains(&n) {
                return act(toward(dir), format!("unvisited space {dir}; turning"), refs);
            }
        }
        let mut d = Self::reactive(req, None);
        d.candidate_refs = refs;
        d
    }
}

impl Controller for ScriptedController {
    fn decide(&mut self, req: &ActRequest) -> Result<Decision, AgentError> {
        if req.plan_complete {
            return Ok(act(
                Action::Stop,
                "all sub-tasks verified; stopping".into(),
                vec![],
            ));
        }
        if req.env.traversable_dirs.is_empty() {
            return Err(AgentError::Deadlock);
        }
        let Some(lat) = Lattice::new(req) else {
            return Ok(Self::reactive(req, Self::goal(req, |_| false)));
        };
        // Cells reached while pursuing the current sub-task are not goals any more.
        let since = req.subtask.as_ref().and_then(|s| s.started_at).unwrap_or(0) as usize;
        let recent: HashSet<Key> = req
            .map
            .trajectory
            .iter()
            .skip(since)
            .map(|p| lat.key(&p.position()))
            .collect();
        if let Some((goal, name)) = Self::goal(req, |p| recent.contains(&lat.key(p))) {
            // Route search runs over connectivity; without a topological map only
            // local steps are available.
            if req.map.edges.is_empty() {
                return Ok(Self::greedy(&lat, req, goal, &name));
            }
            if let Some(d) = Self::route(&lat, req, goal, &name) {
                return Ok(d);
            }
        }
        Ok(Self::explore(&lat, req))
    }
}

pub const INJECTED_JUSTIFICATION: &str = "injected fault: forward despite blocked front";

/// Scripted controller that proposes MoveForward on every other step whose
/// front is not traversable. Used to exercise the local veto.
#[derive(Debug, Clone, Default)]
pub struct FaultInjectingController {
    inner: ScriptedController,
    opportunities: u64,
}

impl Controller for FaultInjectingController {
    fn decide(&mut self, req: &ActRequest) -> Result<Decision, AgentError> {
        if !req.plan_complete && !req.env.traversable(Direction::Front) {
            self.opportunities += 1;
            if self.opportunities % 2 == 1 {
                return Ok(act(
                    Action::MoveForward,
                    INJECTED_JUSTIFICATION.into(),
                    vec![],
                ));
            }
        }
        self.inner.decide(req)
    }
}
