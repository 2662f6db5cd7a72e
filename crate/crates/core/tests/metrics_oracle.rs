use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use proptest::prelude::*;

use conav_core::agents::Backends;
use conav_core::evalkit::{score_episode, spl, suites, SplRow};
use conav_core::orchestrator::{run_episode, EpisodeConfig, Phase, TraceRecord};
use conav_core::simworld::{PerceptConfig, Scenario, StepOutcome, World};
use conav_core::Point;

fn spl_oracle(rows: &[(bool, f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for &(s, l, ls) in rows {
        if s {
            acc += if l > ls { ls / l } else { 1.0 };
        }
    }
    acc / rows.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn spl_matches_formula(rows in prop::collection::vec((any::<bool>(), 0.0f64..100.0, 0.01f64..100.0), 1..20)) {
        let typed: Vec<SplRow<f64>> = rows.iter().map(|&(success, length, shortest)| SplRow { success, length, shortest }).collect();
        let got = spl(&typed).unwrap();
        prop_assert!((got - spl_oracle(&rows)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
        let successes = rows.iter().filter(|r| r.0).count() as f64 / rows.len() as f64;
        prop_assert!(got <= successes + 1e-12);
    }
}

fn near(s: &Scenario, p: &Point, name: &str, radius: f64) -> bool {
    s.landmarks
        .iter()
        .filter(|l| l.name == name)
        .flat_map(|l| l.cells.iter())
        .any(|[r, c]| ((*c as f64 * s.cell_size - p.x).powi(2) + (*r as f64 * s.cell_size - p.y).powi(2)).sqrt() <= radius + 1e-9)
}

/// Fewest moves stepping within `radius` of every target in order, by layered Dijkstra.
fn shortest_in_order(s: &Scenario, radius: f64) -> f64 {
    let (w, h) = (s.grid.width() as i64, s.grid.height() as i64);
    let start = ((s.start.x / s.cell_size).round() as i64, (s.start.y / s.cell_size).round() as i64);
    let mut cost: HashMap<(i64, i64), u64> = HashMap::from([(start, 0)]);
    for target in &s.subtasks {
        let mut dist: HashMap<(i64, i64), u64> = HashMap::new();
        let mut heap: BinaryHeap<Reverse<(u64, (i64, i64))>> = cost.iter().map(|(c, d)| Reverse((*d, *c))).collect();
        while let Some(Reverse((d, c))) = heap.pop() {
            if dist.contains_key(&c) {
                continue;
            }
            dist.insert(c, d);
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let n = (c.0 + dx, c.1 + dy);
                if n.0 >= 0 && n.1 >= 0 && n.0 < w && n.1 < h && s.grid.passable(n) && !dist.contains_key(&n) {
                    heap.push(Reverse((d + 1, n)));
                }
            }
        }
        cost = dist
            .into_iter()
            .filter(|(c, _)| near(s, &Point::new(c.0 as f64 * s.cell_size, c.1 as f64 * s.cell_size), target, radius))
            .collect();
    }
    *cost.values().min().expect("reachable") as f64 * s.cell_size
}

fn check_resimulated(name: &str, s: Scenario, cfg: &EpisodeConfig, seed: u64) -> u8 {
    let r = cfg.success_radius;
    let s = Arc::new(s);
    let out = run_episode(s.clone(), &mut Backends::scripted(), None, cfg, seed).unwrap();
    let m = score_episode(&out.trace, &s, r).unwrap();

    let mut world = World::new(s.clone(), PerceptConfig::default(), seed).unwrap();
    let mut poses = vec![world.pose()];
    let mut length = 0.0;
    for rec in &out.trace {
        if let TraceRecord::History(h) = rec {
            let step = world.step(h.action).unwrap();
            assert_eq!(step.pose, h.pose_after, "{name}");
            if step.outcome == StepOutcome::Moved {
                length += s.cell_size;
            }
            poses.push(step.pose);
        }
    }
    let mut k = 0;
    for p in &poses {
        while k < s.subtasks.len() && near(&s, &p.position(), &s.subtasks[k], r) {
            k += 1;
        }
    }
    let done = matches!(out.trace.last(), Some(TraceRecord::End(e)) if e.phase == Phase::Done);
    let success = k == s.subtasks.len() && done;
    let oracle = poses.iter().any(|p| s.subtasks.iter().any(|t| near(&s, &p.position(), t, r)));
    let last = poses.last().unwrap().position();
    let ne = s
        .landmark(s.subtasks.last().unwrap())
        .unwrap()
        .cells
        .iter()
        .map(|[row, col]| ((*col as f64 * s.cell_size - last.x).powi(2) + (*row as f64 * s.cell_size - last.y).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min);

    assert_eq!(m.nl as usize, poses.len() - 1, "{name}");
    assert_eq!(m.s == 1, success, "{name}");
    assert_eq!(m.oracle_s == 1, oracle, "{name}");
    assert!((m.l - length).abs() < 1e-9, "{name}");
    assert!((m.ne - ne).abs() < 1e-9, "{name}");
    // L* steps onto the target cells themselves.
    assert!((m.l_star - shortest_in_order(&s, 0.0)).abs() < 1e-9, "{name}");
    assert!(shortest_in_order(&s, r) <= m.l_star);
    assert!(m.oracle_s >= m.s);
    m.s
}

#[test]
fn metrics_match_independent_resimulation() {
    let cfg = EpisodeConfig::default();
    let successes: u32 = suites::oracle().into_iter().map(|(n, s)| check_resimulated(&n, s, &cfg, 7) as u32).sum();
    assert_eq!(successes, 100);

    let (glass, mut cfg) = suites::by_name("glass-corridor").unwrap();
    cfg.ablations.enable("no_reflection").unwrap();
    let successes: u32 = glass.into_iter().take(10).map(|(n, s)| check_resimulated(&n, s, &cfg, 3) as u32).sum();
    assert_eq!(successes, 0, "glass-blind runs without reflection fail");
}
