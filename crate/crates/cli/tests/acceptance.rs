//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to
//! see the lines; the test fails if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conav_core::agents::{Backends, FaultInjectingController, INJECTED_JUSTIFICATION};
use conav_core::evalkit::{run_bench, spl, suites, Aggregate, BenchConfig, BenchOutcome, SplRow};
use conav_core::llm::schema::{self, decide_reply, observe_reply, plan_reply, verify_reply};
use conav_core::llm::stub::{StubReply, StubServer};
use conav_core::llm::{RemoteConfig, RemoteController, RemoteObserver, RemotePlanner};
use conav_core::mapper::candidates;
use conav_core::memory::{
    encode, Cause, CauseCategory, Correction, ExperienceBank, ExperienceContext, ExperienceEntry, FeatureVector,
    ReflectiveTuple,
};
use conav_core::orchestrator::{
    replay, review_trace, run_episode, write_trace, EpisodeConfig, Payload, ReplayError, TraceRecord,
};
use conav_core::simworld::{generate_scenario, Scenario};
use conav_core::{Action, Heading, Point, Pose};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bench(suite: &str, ablate: &[&str], bank: Option<&ExperienceBank>, jobs: usize) -> BenchOutcome {
    let (s, mut cfg) = suites::by_name(suite).expect("built-in suite");
    for a in ablate {
        cfg.ablations.enable(a).expect("known ablation");
    }
    let scenarios: Vec<(String, Arc<Scenario>)> = s.into_iter().map(|(n, s)| (n, Arc::new(s))).collect();
    let bench = BenchConfig { repeats: 1, jobs, seed: 0, episode: cfg };
    run_bench(&scenarios, &|| Ok(Backends::scripted()), bank, &bench).expect("bench runs")
}

fn waypoint_exactness() -> Verdict {
    let pose = Pose::new(2.0, 1.0, Heading::North);
    let want = [Point::new(2.0, 2.0), Point::new(3.0, 1.0), Point::new(2.0, 0.0), Point::new(1.0, 1.0)];
    let got = candidates(&pose, 1.0);
    let mut times: Vec<Duration> = (0..101)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(candidates(std::hint::black_box(&pose), 1.0));
            t.elapsed()
        })
        .collect();
    times.sort();
    let median = times[50];
    check(got == want && median < Duration::from_millis(1), format!("{got:?}, median {median:?}"))
}

fn spl_formula() -> Verdict {
    let row = |success, length, shortest| SplRow { success, length, shortest };
    let a = spl(&[row(true, 10.0, 8.0), row(false, 1.0, 1.0)]).map_err(|e| e.to_string())?;
    let b = spl(&[row(true, 7.0, 7.0), row(true, 3.0, 3.0)]).map_err(|e| e.to_string())?;
    let c = spl(&[row(true, 5.0, 8.0)]).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let rows: Vec<SplRow<f64>> = (0..1000)
        .map(|_| row(rng.random_bool(0.6), rng.random_range(0.0..50.0), rng.random_range(0.5..50.0)))
        .collect();
    let mut max_err: f64 = 0.0;
    for chunk in rows.chunks(10) {
        let got = spl(chunk).map_err(|e| e.to_string())?;
        let want = chunk
            .iter()
            .map(|r| if r.success { r.shortest / if r.length > r.shortest { r.length } else { r.shortest } } else { 0.0 })
            .sum::<f64>()
            / chunk.len() as f64;
        max_err = max_err.max((got - want).abs());
    }
    let whole = spl(&rows).map_err(|e| e.to_string())?;
    let whole_want = rows.iter().filter(|r| r.success).map(|r| r.shortest / r.length.max(r.shortest)).sum::<f64>() / 1000.0;
    max_err = max_err.max((whole - whole_want).abs());
    check(
        (a - 0.4).abs() < 1e-12 && b == 1.0 && c == 1.0 && max_err < 1e-12,
        format!("{a}, {b}, {c}; 1000 random rows max err {max_err:e}"),
    )
}

fn sane(a: &Aggregate) -> bool {
    a.spl <= a.sr + 1e-9 && a.osr >= a.sr
}

fn oracle_navigation(traces: &mut Vec<(String, Vec<TraceRecord>)>) -> Verdict {
    let t = Instant::now();
    let out = bench("oracle", &[], None, 1);
    let elapsed = t.elapsed();
    let a = &out.report.aggregate;
    *traces = out.traces;
    check(
        a.episodes == 100 && a.sr == 100.0 && a.osr == 100.0 && a.spl >= 50.0 && sane(a) && elapsed < Duration::from_secs(60),
        format!("SR {:.1}% OSR {:.1}% SPL {:.1}% in {elapsed:.2?}", a.sr, a.osr, a.spl),
    )
}

fn state_machine_replay(traces: &[(String, Vec<TraceRecord>)]) -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut illegal = 0;
    let mut nonzero = vec![];
    for (label, trace) in traces {
        if matches!(replay(trace, false), Err(ReplayError::Illegal(_))) {
            illegal += 1;
        }
        let path = dir.path().join(format!("{label}.jsonl"));
        write_trace(&path, trace).map_err(|e| e.to_string())?;
        let status = Command::new(env!("CARGO_BIN_EXE_conav"))
            .args(["replay", "--trace", path.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())?;
        if status.status.code() != Some(0) {
            nonzero.push(label.clone());
        }
    }
    check(
        traces.len() == 100 && illegal == 0 && nonzero.is_empty(),
        format!("{} traces, {illegal} illegal transitions, non-zero exits {nonzero:?}", traces.len()),
    )
}

fn cosine_oracle(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> f64 {
    let dot: f64 = a.iter().map(|(k, v)| f64::from(*v) * f64::from(*b.get(k).unwrap_or(&0))).sum();
    let norm = |m: &BTreeMap<String, u32>| m.values().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot / d
    }
}

fn random_counts(rng: &mut ChaCha8Rng, vocab: usize) -> BTreeMap<String, u32> {
    (0..rng.random_range(1..=6)).map(|_| (format!("w{}", rng.random_range(0..vocab)), rng.random_range(1..4))).collect()
}

fn random_entry(rng: &mut ChaCha8Rng, vocab: usize, i: usize) -> ExperienceEntry {
    let tokens = FeatureVector::from_counts(random_counts(rng, vocab));
    let actions = Action::ALL;
    let a_err = actions[rng.random_range(0..actions.len())];
    let a_corr = match rng.random_range(0..3) {
        0 => Correction::NoCorrection,
        1 => Correction::Pattern((0..rng.random_range(1..4)).map(|_| actions[rng.random_range(0..4)]).collect()),
        _ => Correction::Action(if a_err == Action::TurnLeft90 { Action::TurnRight90 } else { Action::TurnLeft90 }),
    };
    let poses = (0..rng.random_range(0..4))
        .map(|_| Pose::new(rng.random_range(0..12) as f64, rng.random_range(0..12) as f64, Heading::ALL[rng.random_range(0..4)]))
        .collect::<Vec<_>>();
    let context = ExperienceContext {
        actions: poses.iter().map(|_| actions[rng.random_range(0..4)]).collect(),
        observations: poses.iter().map(|p| format!("seen from {:.0},{:.0}", p.x, p.y)).collect(),
        poses,
    };
    let category = [CauseCategory::Misperception, CauseCategory::Oscillation, CauseCategory::Stagnation, CauseCategory::Other]
        [rng.random_range(0..4)];
    let reflective = ReflectiveTuple {
        f_err_tokens: tokens.tokens().map(String::from).collect(),
        a_err,
        cause: Cause { category, text: format!("case {i}") },
        a_corr,
    };
    ExperienceEntry::new(tokens, context, reflective)
}

fn random_bank(rng: &mut ChaCha8Rng, size: usize, vocab: usize) -> Result<ExperienceBank, String> {
    let mut bank = ExperienceBank::new();
    for i in 0..size {
        bank.store(random_entry(rng, vocab, i)).map_err(|e| e.to_string())?;
    }
    Ok(bank)
}

fn retrieval_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut mismatches = 0;
    for _ in 0..50 {
        let size = rng.random_range(1..=1000);
        let vocab = rng.random_range(4..40);
        let bank = random_bank(&mut rng, size, vocab)?;
        for _ in 0..20 {
            let q = random_counts(&mut rng, vocab + 3);
            let mut best: Option<(f64, &str)> = None;
            for e in &bank.entries {
                let s = cosine_oracle(&q, e.tokens.counts());
                if best.is_none_or(|(bs, bid)| s > bs || (s == bs && e.id.as_str() < bid)) {
                    best = Some((s, &e.id));
                }
            }
            let got = bank.retrieve(&FeatureVector::from_counts(q), 1).map_err(|e| e.to_string())?;
            let (bs, bid) = best.expect("nonempty bank");
            if got[0].entry.id != bid || (got[0].score - bs).abs() > 1e-12 {
                mismatches += 1;
            }
        }
    }
    let mut hand = ExperienceBank::new();
    let r = ReflectiveTuple {
        f_err_tokens: vec!["glass".into(), "door".into(), "corridor".into()],
        a_err: Action::MoveForward,
        cause: Cause { category: CauseCategory::Misperception, text: "glass read as open".into() },
        a_corr: Correction::Action(Action::TurnLeft90),
    };
    hand.store(ExperienceEntry::new(encode("glass door corridor"), ExperienceContext::default(), r)).map_err(|e| e.to_string())?;
    let score = hand.retrieve(&encode("glass door"), 1).map_err(|e| e.to_string())?[0].score;
    check(
        mismatches == 0 && (score - 0.8165).abs() < 1e-4,
        format!("{mismatches}/1000 top-1 mismatches; hand case {score:.4}"),
    )
}

fn reflection_efficacy() -> Verdict {
    let full = bench("glass-corridor", &[], None, 4).report.aggregate;
    let blind = bench("glass-corridor", &["no_reflection"], None, 4).report.aggregate;

    let (suite, cfg) = suites::by_name("glass-corridor").expect("suite");
    let (mut injected, mut vetoed) = (0, 0);
    for (_, s) in suite {
        let mut b = Backends::scripted().with_controller(Box::new(FaultInjectingController::default()), "fault");
        let out = run_episode(Arc::new(s), &mut b, None, &cfg, 0).map_err(|e| e.to_string())?;
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
                    vetoed += usize::from(h.action != Action::MoveForward && !h.reflection_events.is_empty());
                    pending = None;
                }
                _ => {}
            }
        }
    }
    let edr = full.reflection.edr.unwrap_or(0.0);
    check(
        full.sr > blind.sr && injected > 0 && vetoed == injected && edr > 0.0 && full.reflection.ra == Some(100.0),
        format!(
            "SR {:.1}% vs {:.1}% without reflection; injected vetoed {vetoed}/{injected}; EDR {edr:.2}% RA {:?}",
            full.sr, blind.sr, full.reflection.ra
        ),
    )
}

fn topology_efficacy() -> Verdict {
    let full = bench("revisit-heavy", &[], None, 4).report.aggregate;
    let flat = bench("revisit-heavy", &["no_topo_map"], None, 4).report.aggregate;
    check(flat.nl > full.nl && sane(&full) && sane(&flat), format!("NL {:.2} without topology vs {:.2}", flat.nl, full.nl))
}

fn memory_round_trip() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut unequal = 0;
    for i in 0..100 {
        let size = rng.random_range(0..60);
        let bank = random_bank(&mut rng, size, 30)?;
        let path = dir.path().join(format!("b{i}.json"));
        bank.persist(&path).map_err(|e| e.to_string())?;
        unequal += usize::from(ExperienceBank::load(&path).map_err(|e| e.to_string())? != bank);
    }

    let planted = bench("glass-corridor", &["no_reflection"], None, 4);
    let mut bank = ExperienceBank::new();
    for (_, trace) in &planted.traces {
        for e in review_trace(trace).map_err(|e| e.to_string())?.distilled {
            bank.store(e).map_err(|e| e.to_string())?;
        }
    }
    let glass: Vec<&ExperienceEntry> =
        bank.entries.iter().filter(|e| e.reflective.cause.category == CauseCategory::Misperception).collect();
    let mut not_first = 0;
    for e in &glass {
        let top = &bank.retrieve(&e.tokens, 1).map_err(|e| e.to_string())?[0];
        // An entry with the same token set ties at 1.0 and may win on id.
        not_first += usize::from(top.entry.id != e.id && top.entry.tokens != e.tokens);
    }
    let with_bank = bench("glass-corridor", &[], Some(&bank), 4).report.aggregate;
    check(
        unequal == 0 && !glass.is_empty() && not_first == 0 && with_bank.reflection.mra == Some(100.0),
        format!(
            "{unequal}/100 banks differ after reload; {} glass entries, {not_first} not at rank 1; MRA {:?}",
            glass.len(),
            with_bank.reflection.mra
        ),
    )
}

fn run_bench_process(dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_conav"))
        .args(["bench", "--scenarios", "glass-corridor", "--repeat", "2", "--jobs", "3", "--seed", "9"])
        .args(["--report", dir.join("report").to_str().unwrap(), "--traces", dir.join("traces").to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for sub in ["report", "traces"] {
        for e in std::fs::read_dir(dir.join(sub)).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            out.insert(format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    run_bench_process(a.path())?;
    run_bench_process(b.path())?;
    let (fa, fb) = (files(a.path())?, files(b.path())?);
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    check(
        fa.len() == 62 && fa.keys().eq(fb.keys()) && differing.is_empty(),
        format!("{} files per run, {} differ", fa.len(), differing.len()),
    )
}

fn remote_config(url: &str) -> RemoteConfig {
    let mut c = RemoteConfig::new(url, "stub");
    c.max_retries = 0;
    c.backoff_ms = 1;
    c
}

fn steps(trace: &[TraceRecord]) -> Vec<(Pose, Action, Pose)> {
    trace
        .iter()
        .filter_map(|r| match r {
            TraceRecord::History(h) => Some((h.pose, h.action, h.pose_after)),
            _ => None,
        })
        .collect()
}

fn remote_firewall() -> Verdict {
    let fenced = |b: &str| format!("```json\n{b}\n```");
    let bad = [
        fenced(r#"{"action": "Leap", "justification": "x"}"#),
        fenced(r#"{"action": "MoveForward"}"#),
        "MoveForward, because the corridor is open".to_string(),
    ];
    let rejected = bad.iter().filter(|r| schema::parse_decide(r).is_err()).count()
        + usize::from(schema::parse_plan(&fenced(r#"{"subtasks": [{"index": 1}]}"#)).is_err())
        + usize::from(schema::parse_verify("done").is_err());

    let cfg = EpisodeConfig::default();
    let mut identical = 0;
    for seed in 0..10u64 {
        let s = Arc::new(generate_scenario(seed, 10, 10, 3, 2).map_err(|e| e.to_string())?);
        let scripted = run_episode(s.clone(), &mut Backends::scripted(), None, &cfg, seed).map_err(|e| e.to_string())?.trace;
        let mut replies: [Vec<StubReply>; 3] = Default::default();
        for r in &scripted {
            let TraceRecord::Envelope(e) = r else { continue };
            match &e.payload {
                Payload::PlanReply(p) => replies[0].push(StubReply::ok(&plan_reply(p))),
                Payload::VerifyReply(v) => replies[0].push(StubReply::ok(&verify_reply(v))),
                Payload::ObserveReply(env) => replies[1].push(StubReply::ok(&observe_reply(env))),
                Payload::ActReply(d) => replies[2].push(StubReply::ok(&decide_reply(d))),
                _ => {}
            }
        }
        let [p, o, c] = replies.map(StubServer::start);
        let mut backends = Backends {
            planner: Box::new(RemotePlanner::new(remote_config(&p.url())).map_err(|e| e.to_string())?),
            observer: Box::new(RemoteObserver::new(remote_config(&o.url())).map_err(|e| e.to_string())?),
            controller: Box::new(RemoteController::new(remote_config(&c.url())).map_err(|e| e.to_string())?),
            labels: ["remote:stub".into(), "remote:stub".into(), "remote:stub".into()],
        };
        let remote = run_episode(s, &mut backends, None, &cfg, seed).map_err(|e| e.to_string())?.trace;
        identical += usize::from(steps(&remote) == steps(&scripted));
    }
    check(
        rejected == 5 && identical == 10,
        format!("{rejected}/5 malformed replies rejected; {identical}/10 stub trajectories identical"),
    )
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    match &verdict {
        Ok(d) => println!("PASS [{id:>2}] {name}: {d}"),
        Err(d) => println!("FAIL [{id:>2}] {name}: {d}"),
    }
    verdict.is_ok()
}

#[test]
fn acceptance() {
    let mut oracle_traces = vec![];
    let results = [
        run(1, "waypoint exactness", waypoint_exactness),
        run(2, "SPL formula", spl_formula),
        run(3, "oracle-suite navigation", || oracle_navigation(&mut oracle_traces)),
        run(4, "state-machine replay", || state_machine_replay(&oracle_traces)),
        run(5, "retrieval oracle equivalence", retrieval_equivalence),
        run(6, "reflection efficacy", reflection_efficacy),
        run(7, "topology efficacy", topology_efficacy),
        run(8, "memory round-trip", memory_round_trip),
        run(9, "determinism", determinism),
        run(10, "remote-backend firewall", remote_firewall),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len());
}
