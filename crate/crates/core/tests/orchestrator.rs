use std::sync::Arc;

use conav_core::agents::{Backends, FaultInjectingController, INJECTED_JUSTIFICATION};
use conav_core::evalkit::{run_bench, suites, BenchConfig};
use conav_core::memory::ReflectFlag;
use conav_core::orchestrator::{
    replay, run_episode, to_jsonl, EpisodeConfig, Payload, Phase, ReplayError, TraceRecord,
};
use conav_core::simworld::{generate_scenario, Scenario};
use conav_core::Action;

fn oracle_trace(seed: u64) -> Vec<TraceRecord> {
    let s = Arc::new(generate_scenario(seed, 10, 10, 3, 2).unwrap());
    run_episode(s, &mut Backends::scripted(), None, &EpisodeConfig::default(), seed).unwrap().trace
}

#[test]
fn oracle_traces_replay_cleanly() {
    for seed in 0..100 {
        let trace = oracle_trace(seed);
        let report = replay(&trace, false).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(report.final_phase, Phase::Done, "seed {seed}");
        let steps = trace.iter().filter(|r| matches!(r, TraceRecord::History(_))).count();
        assert_eq!(report.steps as usize, steps);
    }
}

#[test]
fn rendered_replay_has_a_frame_per_step() {
    let trace = oracle_trace(5);
    let report = replay(&trace, true).unwrap();
    assert_eq!(report.frames.len(), report.steps as usize);
}

#[test]
fn tampered_action_diverges() {
    let mut trace = oracle_trace(2);
    let h = trace
        .iter_mut()
        .find_map(|r| match r {
            TraceRecord::History(h) if h.action == Action::MoveForward => Some(h),
            _ => None,
        })
        .unwrap();
    h.action = Action::TurnLeft90;
    assert!(matches!(replay(&trace, false), Err(ReplayError::Divergence { .. })));
}

#[test]
fn tampered_transition_is_illegal() {
    let mut trace = oracle_trace(2);
    let i = trace.iter().position(|r| matches!(r, TraceRecord::Transition { .. })).unwrap();
    if let TraceRecord::Transition { from, .. } = &mut trace[i] {
        *from = Phase::Done;
    }
    let err = replay(&trace, false).unwrap_err();
    assert!(matches!(err, ReplayError::Illegal(_) | ReplayError::Invariant(_)), "{err}");
}

#[test]
fn episodes_are_deterministic() {
    for seed in [0, 17, 42] {
        assert_eq!(to_jsonl(&oracle_trace(seed)), to_jsonl(&oracle_trace(seed)));
    }
    let (suite, cfg) = suites::by_name("glass-corridor").unwrap();
    let scenarios: Vec<(String, Arc<Scenario>)> = suite.into_iter().take(8).map(|(n, s)| (n, Arc::new(s))).collect();
    let factory = || Ok(Backends::scripted());
    let run = |jobs| {
        let bench = BenchConfig { repeats: 2, jobs, seed: 3, episode: cfg.clone() };
        run_bench(&scenarios, &factory, None, &bench).unwrap()
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.report.to_json(), b.report.to_json());
    let traces = |o: &conav_core::evalkit::BenchOutcome| o.traces.iter().map(|(l, t)| (l.clone(), to_jsonl(t))).collect::<Vec<_>>();
    assert_eq!(traces(&a), traces(&b));
}

#[test]
fn injected_forward_moves_are_always_vetoed() {
    let (suite, cfg) = suites::by_name("glass-corridor").unwrap();
    let mut injected = 0;
    for (name, s) in suite {
        let mut backends = Backends::scripted().with_controller(Box::new(FaultInjectingController::default()), "fault");
        let out = run_episode(Arc::new(s), &mut backends, None, &cfg, 0).unwrap();
        let mut pending = None;
        for r in &out.trace {
            match r {
                TraceRecord::Envelope(e) => {
                    if let Payload::ActReply(d) = &e.payload {
                        pending = (d.justification == INJECTED_JUSTIFICATION).then_some(e.t);
                    }
                }
                TraceRecord::History(h) if pending == Some(h.t) => {
                    injected += 1;
                    assert_ne!(h.action, Action::MoveForward, "{name} t={}", h.t);
                    assert!(h.reflection_events.iter().any(|e| e.flag == ReflectFlag::Conflict && e.proposed == Action::MoveForward));
                    pending = None;
                }
                _ => {}
            }
        }
    }
    assert!(injected > 0);
}

#[test]
fn ablations_move_metrics_in_the_expected_direction() {
    let bench = |suite: &str, ablate: Option<&str>| {
        let (s, mut cfg) = suites::by_name(suite).unwrap();
        if let Some(a) = ablate {
            cfg.ablations.enable(a).unwrap();
        }
        let scenarios: Vec<_> = s.into_iter().map(|(n, s)| (n, Arc::new(s))).collect();
        let bench = BenchConfig { repeats: 1, jobs: 2, seed: 0, episode: cfg };
        run_bench(&scenarios, &|| Ok(Backends::scripted()), None, &bench).unwrap().report.aggregate
    };
    let (full, blind) = (bench("glass-corridor", None), bench("glass-corridor", Some("no_reflection")));
    assert!(full.sr > blind.sr);
    assert_eq!(full.reflection.ra, Some(100.0));
    let (full, flat) = (bench("revisit-heavy", None), bench("revisit-heavy", Some("no_topo_map")));
    assert!(flat.nl > full.nl);
}
