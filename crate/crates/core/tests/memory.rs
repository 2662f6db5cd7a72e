use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conav_core::agents::Backends;
use conav_core::evalkit::{run_bench, suites, BenchConfig};
use conav_core::memory::{
    encode, Cause, CauseCategory, Correction, ExperienceBank, ExperienceContext, ExperienceEntry,
    FeatureVector, ReflectiveTuple,
};
use conav_core::orchestrator::{review_trace, run_episode};
use conav_core::{Action, Heading, Pose};

const VOCAB: [&str; 12] = [
    "glass", "door", "corridor", "sofa", "frontsofa", "ahead3", "plant", "leftplant", "desk", "wall", "ahead5", "lamp",
];

fn action() -> impl Strategy<Value = Action> {
    prop::sample::select(Action::ALL.to_vec())
}

fn entry() -> impl Strategy<Value = ExperienceEntry> {
    (
        prop::collection::btree_map(prop::sample::select(VOCAB.to_vec()), 1u32..4, 1..6),
        prop::collection::vec((-20i32..20, -20i32..20, 0i64..4, action()), 0..5),
        action(),
        prop::sample::select(vec![
            CauseCategory::Misperception,
            CauseCategory::SpatialMisjudgment,
            CauseCategory::Oscillation,
            CauseCategory::Stagnation,
        ]),
        prop_oneof![
            Just(Correction::NoCorrection),
            action().prop_map(Correction::Action),
            prop::collection::vec(action(), 1..4).prop_map(Correction::Pattern),
        ],
        "[a-z ]{0,24}",
    )
        .prop_filter_map("correction repeats the error", |(tokens, ctx, a_err, category, a_corr, text)| {
            if a_corr == Correction::Action(a_err) {
                return None;
            }
            let tokens = FeatureVector::from_counts(tokens.into_iter().map(|(k, v)| (k.to_string(), v)).collect());
            let context = ExperienceContext {
                poses: ctx.iter().map(|(x, y, q, _)| Pose::new(*x as f64, *y as f64, Heading::East.rotated(*q))).collect(),
                actions: ctx.iter().map(|c| c.3).collect(),
                observations: ctx.iter().map(|c| format!("view {}", c.0)).collect(),
            };
            let reflective = ReflectiveTuple {
                f_err_tokens: tokens.tokens().map(String::from).collect(),
                a_err,
                cause: Cause { category, text },
                a_corr,
            };
            Some(ExperienceEntry::new(tokens, context, reflective))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn persist_load_is_lossless(entries in prop::collection::vec(entry(), 0..30)) {
        let mut bank = ExperienceBank::new();
        for e in entries {
            bank.store(e).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        bank.persist(&path).unwrap();
        let loaded = ExperienceBank::load(&path).unwrap();
        prop_assert_eq!(&loaded, &bank);
        prop_assert_eq!(loaded.to_json(), bank.to_json());
    }
}

fn cosine_oracle(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> f64 {
    let dot: f64 = a.iter().map(|(k, v)| *v as f64 * *b.get(k).unwrap_or(&0) as f64).sum();
    let na = a.values().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    let nb = b.values().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn random_vector(rng: &mut ChaCha8Rng, vocab: usize) -> BTreeMap<String, u32> {
    let n = rng.random_range(1..=6);
    (0..n).map(|_| (format!("t{}", rng.random_range(0..vocab)), rng.random_range(1..4))).collect()
}

#[test]
fn top1_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for b in 0..50 {
        let size = rng.random_range(1..=1000);
        let vocab = rng.random_range(4..40);
        let mut bank = ExperienceBank::new();
        for i in 0..size {
            let tokens = FeatureVector::from_counts(random_vector(&mut rng, vocab));
            let reflective = ReflectiveTuple {
                f_err_tokens: vec![],
                a_err: Action::MoveForward,
                cause: Cause { category: CauseCategory::Other, text: format!("entry {i}") },
                a_corr: Correction::NoCorrection,
            };
            bank.store(ExperienceEntry::new(tokens, ExperienceContext::default(), reflective)).unwrap();
        }
        for _ in 0..20 {
            let q = random_vector(&mut rng, vocab + 3);
            let (want_id, want_score) = bank
                .entries
                .iter()
                .map(|e| (e.id.clone(), cosine_oracle(&q, e.tokens.counts())))
                .fold(None::<(String, f64)>, |best, (id, s)| match best {
                    Some((bid, bs)) if bs > s || (bs == s && bid < id) => Some((bid, bs)),
                    _ => Some((id, s)),
                })
                .unwrap();
            let got = bank.retrieve(&FeatureVector::from_counts(q.clone()), 1).unwrap();
            assert_eq!(got[0].entry.id, want_id, "bank {b}");
            assert!((got[0].score - want_score).abs() < 1e-12);
        }
    }
}

#[test]
fn hand_case_similarity() {
    let mut bank = ExperienceBank::new();
    let reflective = ReflectiveTuple {
        f_err_tokens: vec!["glass".into(), "door".into(), "corridor".into()],
        a_err: Action::MoveForward,
        cause: Cause { category: CauseCategory::Misperception, text: "glass read as open".into() },
        a_corr: Correction::Action(Action::TurnLeft90),
    };
    bank.store(ExperienceEntry::new(encode("glass door corridor"), ExperienceContext::default(), reflective)).unwrap();
    let got = bank.retrieve(&encode("glass door"), 1).unwrap();
    assert!((got[0].score - 2.0 / 6f64.sqrt()).abs() < 1e-12);
    assert!((got[0].score - 0.8165).abs() < 1e-4);
}

/// Banks distilled from failed glass-blind runs.
fn planted_bank(count: usize) -> ExperienceBank {
    let (suite, mut cfg) = suites::by_name("glass-corridor").unwrap();
    cfg.ablations.enable("no_reflection").unwrap();
    let mut bank = ExperienceBank::new();
    for (_, s) in suite.into_iter().take(count) {
        let out = run_episode(Arc::new(s), &mut Backends::scripted(), None, &cfg, 0).unwrap();
        assert!(!out.is_done());
        for e in review_trace(&out.trace).unwrap().distilled {
            bank.store(e).unwrap();
        }
    }
    bank
}

#[test]
fn distilled_glass_entries_rank_first_for_their_own_tokens() {
    let bank = planted_bank(30);
    assert!(bank.len() >= 30);
    let glass: Vec<_> = bank.entries.iter().filter(|e| e.reflective.cause.category == CauseCategory::Misperception).collect();
    assert!(!glass.is_empty());
    for e in glass {
        let top = &bank.retrieve(&e.tokens, 1).unwrap()[0];
        // Entries with an identical token set tie at 1.0; ties break by id.
        assert!((top.score - 1.0).abs() < 1e-12);
        assert_eq!(top.entry.tokens, e.tokens);
        assert!(top.entry.id <= e.id);
    }
}

#[test]
fn planted_bank_retrievals_are_relevant() {
    let bank = planted_bank(30);
    let (suite, cfg) = suites::by_name("glass-corridor").unwrap();
    let scenarios: Vec<_> = suite.into_iter().map(|(n, s)| (n, Arc::new(s))).collect();
    let bench = BenchConfig { repeats: 1, jobs: 1, seed: 0, episode: cfg };
    let factory = || Ok(Backends::scripted());
    let out = run_bench(&scenarios, &factory, Some(&bank), &bench).unwrap();
    let a = &out.report.aggregate;
    assert!(a.reflect_counts.retrievals > 0);
    assert_eq!(a.reflection.mra, Some(100.0));
    assert_eq!(a.sr, 100.0, "stored experience must not cost successes");
}
