use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::state::{transition, ActionFailure, Event, FailCause, MasterState, Phase};
use super::trace::{
    EndRecord, Envelope, GlobalReflectRecord, Payload, ReflectNotice, Role, TraceHeader,
    TraceRecord,
};
use super::OrchestratorError;
use crate::agents::{
    describe_direct, ActRequest, AgentError, Backends, Decision, EnvDescription, LandmarkGeometry,
    ObserveRequest, PlanRequest, SubTaskPlan, VerifyRequest,
};
use crate::geom::Action;
use crate::memory::{
    ExperienceBank, ExperienceEntry, History, HistoryRecord, MapRecord, ReflectFlag, ReflectKind,
    ReflectStage, ReflectionEvent, RetrievalRecord,
};
use crate::reflection::{
    expected_outcome, global_reflect, hazards_ahead, local_check, micro_plan, post_check, scene_features,
    EpisodeReview, GlobalConfig, LocalFlag, LocalVerdict, PostCheck,
};
use crate::simworld::paths::shortest_visiting_moves;
use crate::simworld::{budget_for, PerceptConfig, PerceptTuple, Scenario, StepOutcome, World};
use crate::{Point, Pose, WorldMap};

/// Module ablations. Each flag swaps a component for its simplest stand-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_planner: bool,
    pub no_observer: bool,
    pub no_memory: bool,
    pub no_reflection: bool,
    pub no_geo_map: bool,
    pub no_topo_map: bool,
}

impl Ablations {
    pub const NAMES: [&'static str; 6] = [
        "no_planner",
        "no_observer",
        "no_memory",
        "no_reflection",
        "no_geo_map",
        "no_topo_map",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut bool> {
        Some(match name {
            "no_planner" => &mut self.no_planner,
            "no_observer" => &mut self.no_observer,
            "no_memory" => &mut self.no_memory,
            "no_reflection" => &mut self.no_reflection,
            "no_geo_map" => &mut self.no_geo_map,
            "no_topo_map" => &mut self.no_topo_map,
            _ => return None,
        })
    }

    pub fn enable(&mut self, name: &str) -> Result<(), String> {
        let slot = self.slot(name).ok_or_else(|| {
            format!(
                "unknown ablation {name:?} (known: {})",
                Self::NAMES.join(", ")
            )
        })?;
        *slot = true;
        Ok(())
    }

    pub fn parse(names: &[String]) -> Result<Ablations, String> {
        let mut a = Ablations::default();
        for n in names {
            a.enable(n)?;
        }
        Ok(a)
    }

    pub fn active(&self) -> Vec<&'static str> {
        let mut copy = *self;
        Self::NAMES
            .into_iter()
            .filter(|n| *copy.slot(n).expect("known name"))
            .collect()
    }
}

/// Per-episode parameters. Echoed into every trace header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Verification threshold on normalized progress.
    pub tau: f64,
    /// Risk threshold on experience similarity.
    pub tau_risk: f64,
    /// Waypoint spacing in meters; the scenario cell size when unset.
    pub delta: Option<f64>,
    /// Minimum similarity for a retrieval to count.
    pub match_threshold: f64,
    pub history_window: usize,
    pub evaluate_every_n: u32,
    pub success_radius: f64,
    /// Overrides the scenario budget with `ceil(multiplier * L*)` moves.
    pub budget_multiplier: Option<f64>,
    /// Inline map snapshots into history records instead of step references.
    pub full_maps: bool,
    pub percept: PerceptConfig,
    pub global: GlobalConfig,
    pub ablations: Ablations,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            tau: 0.8,
            tau_risk: 0.75,
            delta: None,
            match_threshold: 0.5,
            history_window: 10,
            evaluate_every_n: 1,
            success_radius: 1.0,
            budget_multiplier: None,
            full_maps: false,
            percept: PerceptConfig::default(),
            global: GlobalConfig::default(),
            ablations: Ablations::default(),
        }
    }
}

fn unit_interval(name: &str, v: f64, open_low: bool) -> Result<(), String> {
    let ok = v.is_finite() && v <= 1.0 && if open_low { v > 0.0 } else { v >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(format!(
            "{name} must lie in {}0, 1] (got {v})",
            if open_low { "(" } else { "[" }
        ))
    }
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(format!("{name} must be positive (got {v})"))
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), String> {
        unit_interval("tau", self.tau, true)?;
        unit_interval("tau_risk", self.tau_risk, true)?;
        unit_interval("match_threshold", self.match_threshold, false)?;
        if let Some(d) = self.delta {
            positive("delta", d)?;
        }
        if let Some(m) = self.budget_multiplier {
            positive("budget_multiplier", m)?;
        }
        positive("success_radius", self.success_radius)?;
        if self.evaluate_every_n == 0 {
            return Err("evaluate_every_n must be at least 1".into());
        }
        if self.percept.max_range == 0 {
            return Err("percept.max_range must be at least 1".into());
        }
        let jitter = self.percept.noise.distance_jitter;
        if !(jitter.is_finite() && jitter >= 0.0) {
            return Err(format!(
                "percept.noise.distance_jitter must be non-negative (got {jitter})"
            ));
        }
        if self.global.stagnation_window == 0 || self.global.oscillation_len < 2 {
            return Err(
                "global.stagnation_window must be >= 1 and global.oscillation_len >= 2".into(),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub trace: Vec<TraceRecord>,
    pub state: MasterState,
    pub cause: Option<FailCause>,
    pub steps: u32,
    pub budget: u32,
    pub plan: Option<SubTaskPlan>,
    pub history: Vec<HistoryRecord>,
    pub review: Option<EpisodeReview>,
    /// Experience entries distilled by global reflection (empty without memory).
    pub distilled: Vec<ExperienceEntry>,
}

impl EpisodeResult {
    pub fn is_done(&self) -> bool {
        self.state.phase == Phase::Done
    }
}

pub fn code_version() -> String {
    format!("conav-core {}", env!("CARGO_PKG_VERSION"))
}

/// Step budget for `scenario` under `config`.
pub fn episode_budget(
    scenario: &Scenario,
    config: &EpisodeConfig,
) -> Result<u32, OrchestratorError> {
    match config.budget_multiplier {
        None => Ok(scenario.step_budget),
        Some(m) => shortest_visiting_moves(scenario)
            .map(|moves| budget_for(moves, m))
            .ok_or_else(|| {
                OrchestratorError::ConfigInvalid(
                    "budget multiplier needs a walkable in-order route".into(),
                )
            }),
    }
}

struct Run<'a> {
    scenario: Arc<Scenario>,
    cfg: &'a EpisodeConfig,
    backends: &'a mut Backends,
    bank: Option<&'a ExperienceBank>,
    world: World,
    map: WorldMap,
    history: History,
    trace: Vec<TraceRecord>,
    state: MasterState,
    seq: u64,
    plan: Option<SubTaskPlan>,
    env: Option<EnvDescription>,
    budget: u32,
    delta: f64,
    landmarks: Vec<LandmarkGeometry>,
    evaluations: u64,
    consecutive_deadlocks: u32,
    pending_failure: Option<ActionFailure>,
    carry_events: Vec<ReflectionEvent>,
    carry_checks: u32,
    cause: Option<FailCause>,
}

/// Runs one episode to DONE or FAILED. Backend failures end the episode as
/// FAILED with a cause; only programming and configuration errors are `Err`.
pub fn run_episode(
    scenario: Arc<Scenario>,
    backends: &mut Backends,
    bank: Option<&ExperienceBank>,
    config: &EpisodeConfig,
    seed: u64,
) -> Result<EpisodeResult, OrchestratorError> {
    config
        .validate()
        .map_err(OrchestratorError::ConfigInvalid)?;
    scenario.validate()?;
    let budget = episode_budget(&scenario, config)?;
    let delta = config.delta.unwrap_or(scenario.cell_size);
    let ab = config.ablations;
    let map = if ab.no_geo_map {
        WorldMap::empty(delta)
    } else if ab.no_topo_map {
        WorldMap::new(scenario.start, delta).without_topology()
    } else {
        WorldMap::new(scenario.start, delta)
    };
    let landmarks = scenario
        .landmarks
        .iter()
        .map(|l| LandmarkGeometry {
            name: l.name.clone(),
            cells: l
                .cells_xy()
                .map(|c| scenario.center(c))
                .map(|p| [p.x, p.y])
                .collect(),
        })
        .collect();
    let header = TraceHeader {
        scenario_hash: scenario.content_hash(),
        scenario: (*scenario).clone(),
        config: config.clone(),
        backends: backends.describe(),
        code_version: code_version(),
        seed,
    };
    let mut run = Run {
        world: World::new(scenario.clone(), config.percept, seed)?,
        scenario,
        cfg: config,
        backends,
        bank: if ab.no_memory { None } else { bank },
        map,
        history: History::new(),
        trace: vec![TraceRecord::Header(Box::new(header))],
        state: MasterState::default(),
        seq: 0,
        plan: None,
        env: None,
        budget,
        delta,
        landmarks,
        evaluations: 0,
        consecutive_deadlocks: 0,
        pending_failure: None,
        carry_events: vec![],
        carry_checks: 0,
        cause: None,
    };
    run.drive()?;
    Ok(run.finish())
}

impl Run<'_> {
    fn send(&mut self, from: Role, to: Role, payload: Payload) {
        self.seq += 1;
        let env = Envelope {
            seq: self.seq,
            from,
            to,
            phase: self.state.phase,
            t: self.world.steps(),
            payload,
        };
        self.trace.push(TraceRecord::Envelope(env));
    }

    fn fire(&mut self, event: Event) -> Result<(), OrchestratorError> {
        let next = transition(&self.state, &event)?;
        debug!("{:?} --{:?}--> {:?}", self.state.phase, event, next.phase);
        if let Event::Fail(cause) = &event {
            self.cause = Some(cause.clone());
        }
        self.trace.push(TraceRecord::Transition {
            from: self.state.phase,
            event,
            to: next.phase,
        });
        self.state = next;
        Ok(())
    }

    fn audit(&mut self, role: Role) {
        let audits = match role {
            Role::Planner => self.backends.planner.drain_audit(),
            Role::Observer => self.backends.observer.drain_audit(),
            Role::Controller => self.backends.controller.drain_audit(),
            _ => vec![],
        };
        self.trace.extend(audits.into_iter().map(TraceRecord::Llm));
    }

    fn history_window(&self) -> Vec<HistoryRecord> {
        if self.cfg.ablations.no_memory {
            vec![]
        } else {
            self.history.window(self.cfg.history_window).to_vec()
        }
    }

    fn target(&self) -> Option<String> {
        self.plan
            .as_ref()
            .and_then(|p| p.active())
            .map(|s| s.target.clone())
    }

    /// Advisory lines from the best bank match; backends may ignore them.
    fn advisory(&self, env: &EnvDescription) -> Vec<String> {
        let Some(bank) = self.bank else { return vec![] };
        let target = self.target();
        match bank.best(&scene_features(target.as_deref(), env)) {
            Some(hit) if hit.score >= self.cfg.match_threshold => {
                let r = &hit.entry.reflective;
                vec![format!(
                    "past {} failure: avoid {} here ({})",
                    r.cause.category, r.a_err, r.cause.text
                )]
            }
            _ => vec![],
        }
    }

    fn drive(&mut self) -> Result<(), OrchestratorError> {
        loop {
            match self.state.phase {
                Phase::Planning => self.planning()?,
                Phase::Perception => self.perception()?,
                Phase::Action => self.action()?,
                Phase::Evaluation => self.evaluation()?,
                Phase::Reflection => self.reflection()?,
                Phase::Done => return self.done(),
                Phase::Failed => return Ok(()),
            }
        }
    }

    fn planning(&mut self) -> Result<(), OrchestratorError> {
        let instruction = self.scenario.instruction.clone();
        let plan = if self.cfg.ablations.no_planner {
            SubTaskPlan::new(
                &instruction,
                vec![(instruction.clone(), instruction.clone())],
            )
        } else {
            let req = PlanRequest {
                instruction,
                landmarks: self.scenario.landmark_names(),
            };
            self.send(
                Role::Master,
                Role::Planner,
                Payload::PlanRequest(req.clone()),
            );
            let plan = self.backends.planner.plan(&req);
            self.audit(Role::Planner);
            if let Ok(p) = &plan {
                self.send(Role::Planner, Role::Master, Payload::PlanReply(p.clone()));
            }
            plan
        };
        match plan {
            Ok(p) => {
                let n = p.len();
                self.plan = Some(p);
                self.fire(Event::PlanReady { subtasks: n })
            }
            Err(AgentError::PlanEmpty) => self.fire(Event::Fail(FailCause::PlanEmpty)),
            Err(e) => self.fire(Event::Fail(FailCause::Backend(e.to_string()))),
        }
    }

    /// Obstacle points for the map: sightings snapped to the waypoint lattice,
    /// plus the first cell past each view's free range.
    fn obstacle_points(&self, pose: &Pose, views: &[PerceptTuple]) -> Vec<Point> {
        let d = self.delta;
        let snap = |p: Point| {
            Point::new(
                pose.x + ((p.x - pose.x) / d).round() * d,
                pose.y + ((p.y - pose.y) / d).round() * d,
            )
        };
        let reach = self.cfg.percept.max_range as f64 * self.scenario.cell_size;
        let mut pts = vec![];
        for v in views {
            pts.extend(
                v.obstacles
                    .iter()
                    .map(|o| snap(pose.project(o.bearing, o.distance))),
            );
            let free = v.traversability.free_range;
            if free + 1e-9 < reach {
                let steps = (free / d + 1e-9).floor() + 1.0;
                let axis = -90.0 * v.direction.index() as f64;
                pts.push(snap(pose.project(axis, steps * d)));
            }
        }
        pts
    }

    fn perception(&mut self) -> Result<(), OrchestratorError> {
        if self.world.steps() >= self.budget {
            return self.fire(Event::Fail(FailCause::Budget));
        }
        let pose = self.world.pose();
        let views = self.world.perceive().to_vec();
        let subtask = self.plan.as_ref().and_then(|p| p.active()).cloned();
        let req = ObserveRequest {
            views: views.clone(),
            subtask,
            delta: self.delta,
        };
        self.send(
            Role::Master,
            Role::Observer,
            Payload::ObserveRequest(req.clone()),
        );
        let env = if self.cfg.ablations.no_observer {
            describe_direct(&views)
        } else {
            let reply = self.backends.observer.observe(&req);
            self.audit(Role::Observer);
            match reply {
                Ok(env) => env,
                Err(e) => return self.fire(Event::Fail(FailCause::Backend(e.to_string()))),
            }
        };
        self.send(
            Role::Observer,
            Role::Master,
            Payload::ObserveReply(env.clone()),
        );
        if !self.cfg.ablations.no_geo_map {
            let obstacles = self.obstacle_points(&pose, &views);
            self.map
                .integrate_view(&pose, &env.traversable_dirs, &obstacles);
        }
        self.env = Some(env);
        self.fire(Event::Observed)
    }

    fn deadlock(&mut self, failure: ActionFailure) -> Result<(), OrchestratorError> {
        self.consecutive_deadlocks += 1;
        if self.consecutive_deadlocks >= 2 {
            self.fire(Event::Fail(FailCause::Deadlock))
        } else {
            self.pending_failure = Some(failure);
            self.fire(Event::ActionFailed(failure))
        }
    }

    fn event(
        &self,
        verdict: &LocalVerdict,
        proposed: Action,
        executed: Option<Action>,
        pose: Pose,
    ) -> ReflectionEvent {
        ReflectionEvent {
            kind: ReflectKind::Reflect,
            stage: ReflectStage::Local,
            flag: if verdict.flag == LocalFlag::Risk {
                ReflectFlag::Risk
            } else {
                ReflectFlag::Conflict
            },
            reason: verdict.reason.clone(),
            matched_id: verdict.matched.as_ref().map(|m| m.id.clone()),
            similarity: verdict.matched.as_ref().map(|m| m.similarity),
            proposed,
            executed,
            pose,
            subtask_index: self.plan.as_ref().and_then(|p| p.active_index()),
        }
    }

    fn map_record(&self, t: u32) -> MapRecord {
        if self.cfg.full_maps {
            MapRecord::Full(self.map.snapshot())
        } else {
            MapRecord::Ref {
                step: t,
                nodes: self.map.geometric.nodes.len(),
                edges: self.map.topo.edges().len(),
            }
        }
    }

    fn act_request(&self, env: &EnvDescription, plan_complete: bool) -> ActRequest {
        ActRequest {
            subtask: if plan_complete {
                None
            } else {
                self.plan.as_ref().and_then(|p| p.active()).cloned()
            },
            plan_complete,
            env: env.clone(),
            map: self.map.snapshot(),
            history: self.history_window(),
            pose: self.world.pose(),
            delta: self.delta,
            advisory: self.advisory(env),
        }
    }

    fn action(&mut self) -> Result<(), OrchestratorError> {
        let env = self.env.clone().expect("perception precedes action");
        let pose = self.world.pose();
        let req = self.act_request(&env, false);
        self.send(
            Role::Master,
            Role::Controller,
            Payload::ActRequest(Box::new(req.clone())),
        );
        let decision = self.backends.controller.decide(&req);
        self.audit(Role::Controller);
        let decision = match decision {
            Ok(d) => d,
            Err(AgentError::Deadlock) => return self.deadlock(ActionFailure::Deadlock),
            Err(e) => return self.fire(Event::Fail(FailCause::Backend(e.to_string()))),
        };
        self.send(
            Role::Controller,
            Role::Master,
            Payload::ActReply(decision.clone()),
        );

        let target = self.target();
        let reflect = !self.cfg.ablations.no_reflection;
        let mut events = std::mem::take(&mut self.carry_events);
        let mut checks = std::mem::take(&mut self.carry_checks);
        let mut retrievals = vec![];
        let mut executed = decision.action;
        if reflect {
            checks += 1;
            if let Some(hit) = self
                .bank
                .and_then(|b| b.best(&scene_features(target.as_deref(), &env)))
            {
                if hit.score >= self.cfg.match_threshold {
                    retrievals.push(RetrievalRecord {
                        entry_id: hit.entry.id.clone(),
                        similarity: hit.score,
                        category: hit.entry.reflective.cause.category,
                    });
                }
            }
            let mut verdict = local_check(
                decision.action,
                &env,
                target.as_deref(),
                self.bank,
                self.cfg.tau_risk,
                self.delta,
            );
            // A remembered hazard ahead that the map already holds is planned around.
            let mut implicated = vec![];
            if verdict.flag == LocalFlag::Risk && decision.action == Action::MoveForward && !self.cfg.ablations.no_geo_map {
                implicated = self.implicated(&verdict, &env, &pose, target.as_deref());
                if !implicated.is_empty() && implicated.iter().all(|p| self.map.geometric.is_obstacle(p)) {
                    verdict = LocalVerdict { flag: LocalFlag::Pass, reason: "remembered hazard already mapped".into(), matched: None };
                }
            }
            if verdict.flag != LocalFlag::Pass {
                match micro_plan(&verdict, &env, decision.action) {
                    Ok(a) => {
                        debug!("veto {} -> {}: {}", decision.action, a, verdict.reason);
                        for p in implicated {
                            self.map.geometric.mark_obstacle(p);
                        }
                        events.push(self.event(&verdict, decision.action, Some(a), pose));
                        executed = a;
                    }
                    Err(_) => {
                        events.push(self.event(&verdict, decision.action, None, pose));
                        self.carry_events = events;
                        self.carry_checks = checks;
                        return self.deadlock(ActionFailure::NoAlternative);
                    }
                }
            }
        }
        self.execute(pose, executed, &env, events, checks, retrievals)
    }

    /// Lattice points of objects ahead that the experience behind a risk
    /// verdict names (the sub-task target excluded).
    fn implicated(&self, verdict: &LocalVerdict, env: &EnvDescription, pose: &Pose, target: Option<&str>) -> Vec<Point> {
        let entry = verdict.matched.as_ref().zip(self.bank).and_then(|(m, b)| b.get(&m.id));
        let Some(entry) = entry else {
            return vec![];
        };
        let d = self.delta;
        hazards_ahead(entry, env, target)
            .into_iter()
            .map(|s| {
                let p = pose.project(s.bearing, s.distance);
                Point::new(pose.x + ((p.x - pose.x) / d).round() * d, pose.y + ((p.y - pose.y) / d).round() * d)
            })
            .collect()
    }

    fn execute(
        &mut self,
        pose: Pose,
        action: Action,
        env: &EnvDescription,
        mut events: Vec<ReflectionEvent>,
        checks: u32,
        retrievals: Vec<RetrievalRecord>,
    ) -> Result<(), OrchestratorError> {
        let t = self.world.steps();
        let result = self.world.step(action)?;
        if !self.cfg.ablations.no_geo_map {
            self.map.record_step(&pose, &result.pose);
        }
        let reflect = !self.cfg.ablations.no_reflection;
        let mismatch = reflect
            && post_check(expected_outcome(action, env), result.outcome) == PostCheck::Mismatch;
        if mismatch {
            let ahead = pose.project(0.0, self.delta);
            if !self.cfg.ablations.no_geo_map {
                self.map.geometric.mark_obstacle(ahead);
            }
            events.push(ReflectionEvent {
                kind: ReflectKind::Reflect,
                stage: ReflectStage::Local,
                flag: ReflectFlag::Mismatch,
                reason: "expected to move but the step was blocked".into(),
                matched_id: None,
                similarity: None,
                proposed: action,
                executed: Some(action),
                pose,
                subtask_index: self.plan.as_ref().and_then(|p| p.active_index()),
            });
        }
        self.consecutive_deadlocks = 0;
        let record = HistoryRecord {
            t,
            pose,
            action,
            outcome: result.outcome,
            pose_after: result.pose,
            observation: env.digest(&pose),
            subtask_index: self.plan.as_ref().and_then(|p| p.active_index()),
            subtask_target: self.target(),
            map: self.map_record(t),
            reflection_events: events,
            checks,
            retrievals,
        };
        self.history.log(record.clone())?;
        self.trace.push(TraceRecord::History(Box::new(record)));

        if self.state.phase != Phase::Action {
            return Ok(());
        }
        if action == Action::Stop {
            return self.fire(Event::Fail(FailCause::PrematureStop));
        }
        if mismatch {
            self.pending_failure = Some(ActionFailure::Mismatch);
            return self.fire(Event::ActionFailed(ActionFailure::Mismatch));
        }
        if reflect && result.outcome == StepOutcome::Blocked {
            self.pending_failure = Some(ActionFailure::Blocked);
            return self.fire(Event::ActionFailed(ActionFailure::Blocked));
        }
        self.fire(Event::ActionSucceeded)
    }

    fn evaluation(&mut self) -> Result<(), OrchestratorError> {
        self.evaluations += 1;
        if !self.evaluations.is_multiple_of(self.cfg.evaluate_every_n as u64) {
            return self.fire(Event::EvaluationSkipped);
        }
        let plan = self.plan.as_ref().expect("planned");
        let subtask = plan
            .active()
            .cloned()
            .expect("evaluation only while a sub-task is active");
        let last = plan.active_index().expect("active") + 1 == plan.len();
        let env = self.env.clone().expect("observed");
        let req = VerifyRequest {
            subtask,
            advisory: self.advisory(&env),
            env,
            history: self.history_window(),
            pose: self.world.pose(),
            tau: self.cfg.tau,
            landmarks: self.landmarks.clone(),
            d_norm: self.scenario.diameter(),
            radius: self.cfg.success_radius,
        };
        self.send(
            Role::Master,
            Role::Planner,
            Payload::VerifyRequest(Box::new(req.clone())),
        );
        let reply = self.backends.planner.verify(&req);
        self.audit(Role::Planner);
        let v = match reply {
            Ok(v) => v,
            Err(e) => return self.fire(Event::Fail(FailCause::Backend(e.to_string()))),
        };
        self.send(Role::Planner, Role::Master, Payload::VerifyReply(v));
        if !v.done {
            return self.fire(Event::Verified {
                done: false,
                last: false,
            });
        }
        if last && self.world.steps() >= self.budget {
            return self.fire(Event::Fail(FailCause::Budget));
        }
        let t = self.world.steps().saturating_sub(1);
        self.plan.as_mut().expect("planned").complete_active(t);
        self.fire(Event::Verified { done: true, last })
    }

    fn reflection(&mut self) -> Result<(), OrchestratorError> {
        let reason = self
            .pending_failure
            .take()
            .unwrap_or(ActionFailure::Blocked);
        let notice = ReflectNotice {
            reason,
            t: self.world.steps(),
            pose: self.world.pose(),
        };
        self.send(Role::Master, Role::Memory, Payload::ReflectNotice(notice));
        self.fire(Event::Reflected)
    }

    fn done(&mut self) -> Result<(), OrchestratorError> {
        let env = self.env.clone().expect("observed");
        let pose = self.world.pose();
        let req = self.act_request(&env, true);
        self.send(
            Role::Master,
            Role::Controller,
            Payload::ActRequest(Box::new(req.clone())),
        );
        let reply = self.backends.controller.decide(&req);
        self.audit(Role::Controller);
        let decision = match reply {
            Ok(d) if d.action == Action::Stop => d,
            other => {
                warn!("controller did not stop on a completed plan ({other:?}); stopping anyway");
                Decision {
                    action: Action::Stop,
                    justification: "plan complete; stop enforced by master".into(),
                    candidate_refs: vec![],
                }
            }
        };
        self.send(Role::Controller, Role::Master, Payload::ActReply(decision));
        let events = std::mem::take(&mut self.carry_events);
        let checks = std::mem::take(&mut self.carry_checks);
        self.execute(pose, Action::Stop, &env, events, checks, vec![])
    }

    fn finish(mut self) -> EpisodeResult {
        let failed = self.state.phase == Phase::Failed;
        let mut review = None;
        let mut distilled = vec![];
        if !self.cfg.ablations.no_reflection && !self.history.is_empty() {
            let gr = global_reflect(
                self.history.records(),
                self.plan.as_ref(),
                &self.scenario.instruction,
                failed,
                &self.cfg.global,
            );
            for a in &gr.review.attributions {
                let seg = gr.review.segments[a.segment];
                self.trace.push(TraceRecord::Reflect(GlobalReflectRecord {
                    stage: ReflectStage::Global,
                    flag: seg.label,
                    reason: format!("{}: {}", a.tuple.cause.category, a.tuple.cause.text),
                    matched_id: Some(a.entry_id.clone()),
                    similarity: None,
                    start_t: seg.start_t,
                    end_t: seg.end_t,
                }));
            }
            if !self.cfg.ablations.no_memory {
                distilled = gr.distilled;
            }
            review = Some(gr.review);
        }
        let completed = self.plan.as_ref().map_or(0, |p| p.completed());
        self.trace.push(TraceRecord::End(EndRecord {
            phase: self.state.phase,
            cause: self.cause.clone(),
            steps: self.world.steps(),
            completed_subtasks: completed,
        }));
        EpisodeResult {
            trace: self.trace,
            state: self.state,
            cause: self.cause,
            steps: self.world.steps(),
            budget: self.budget,
            plan: self.plan,
            history: self.history.records().to_vec(),
            review,
            distilled,
        }
    }
}
