use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{reflection_metrics, score_episode, spl, EpisodeMetrics, ReflectCounts, ReflectionMetrics, SplRow};
use super::EvalError;
use crate::agents::Backends;
use crate::memory::ExperienceBank;
use crate::orchestrator::{run_episode, EpisodeConfig, Phase, TraceRecord};
use crate::simworld::paths::shortest_visiting_length;
use crate::simworld::Scenario;

/// Builds fresh backends for one episode.
pub type BackendFactory = dyn Fn() -> Result<Backends, String> + Sync;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub repeats: u32,
    /// Worker threads; 1 runs everything on the calling thread.
    pub jobs: usize,
    /// Noise seed of the first repeat; repeat `r` uses `seed + r`.
    pub seed: u64,
    pub episode: EpisodeConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { repeats: 5, jobs: 1, seed: 0, episode: EpisodeConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub repeat: u32,
    pub seed: u64,
    pub phase: Phase,
    pub cause: Option<String>,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: usize,
    #[serde(rename = "NL")]
    pub nl: f64,
    #[serde(rename = "NE")]
    pub ne: f64,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "OSR")]
    pub osr: f64,
    #[serde(rename = "SPL")]
    pub spl: f64,
    #[serde(rename = "KPA")]
    pub kpa: Option<f64>,
    #[serde(flatten)]
    pub reflection: ReflectionMetrics,
    pub reflect_counts: ReflectCounts,
}

impl Aggregate {
    /// Recomputes every aggregate from the rows.
    pub fn from_rows(rows: &[BenchRow]) -> Result<Aggregate, EvalError> {
        if rows.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        let spl_rows: Vec<SplRow<f64>> = rows
            .iter()
            .map(|r| SplRow { success: r.metrics.s == 1, length: r.metrics.l, shortest: r.metrics.l_star })
            .collect();
        let decisions: Vec<bool> = rows.iter().flat_map(|r| r.metrics.key_decisions.iter().map(|k| k.correct)).collect();
        let mut counts = ReflectCounts::default();
        for r in rows {
            counts += r.metrics.reflect_counts;
        }
        Ok(Aggregate {
            episodes: rows.len(),
            nl: mean(&|m| m.nl as f64),
            ne: mean(&|m| m.ne),
            sr: 100.0 * mean(&|m| m.s as f64),
            osr: 100.0 * mean(&|m| m.oracle_s as f64),
            spl: 100.0 * spl(&spl_rows)?,
            kpa: (!decisions.is_empty())
                .then(|| 100.0 * decisions.iter().filter(|c| **c).count() as f64 / decisions.len() as f64),
            reflection: reflection_metrics(&counts),
            reflect_counts: counts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repeats: u32,
    pub seed: u64,
    pub ablations: Vec<String>,
    pub backends: BTreeMap<String, String>,
    pub config: EpisodeConfig,
    pub rows: Vec<BenchRow>,
    pub aggregate: Aggregate,
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.2}%"))
}

impl BenchReport {
    /// Ordering and bound properties every aggregate must satisfy.
    pub fn check_invariants(&self) -> Result<(), EvalError> {
        let a = &self.aggregate;
        let fail = |m: String| Err(EvalError::InvariantViolated(m));
        if !(0.0..=100.0).contains(&a.spl) {
            return fail(format!("SPL {} outside [0, 100]", a.spl));
        }
        if a.spl > a.sr + 1e-9 {
            return fail(format!("SPL {} exceeds SR {}", a.spl, a.sr));
        }
        if a.osr + 1e-9 < a.sr {
            return fail(format!("OSR {} below SR {}", a.osr, a.sr));
        }
        for r in &self.rows {
            let m = &r.metrics;
            if m.s > m.oracle_s || m.l < 0.0 || m.l_star <= 0.0 {
                return fail(format!("row {} repeat {} violates S <= oracle_S, L >= 0, L* > 0", r.scenario, r.repeat));
            }
        }
        if Aggregate::from_rows(&self.rows)? != *a {
            return fail("aggregate differs from the rows".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned plain-text table: one line per episode, then the aggregates.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.scenario.len()).max().unwrap_or(8).max(8);
        let mut s = String::new();
        writeln!(s, "{:<width$}  {:>3}  {:<6}  {:>5}  {:>6}  {:>1}  {:>2}  {:>5}  {:>6}", "scenario", "rep", "phase", "NL", "NE", "S", "OS", "SPL", "KPA")
            .unwrap();
        for r in &self.rows {
            let m = &r.metrics;
            let row_spl = if m.s == 1 { m.l_star / m.l.max(m.l_star) } else { 0.0 };
            let kpa = if m.key_decisions.is_empty() {
                "N/A".to_string()
            } else {
                let ok = m.key_decisions.iter().filter(|k| k.correct).count();
                format!("{:.1}", 100.0 * ok as f64 / m.key_decisions.len() as f64)
            };
            let phase = if r.phase == Phase::Done { "DONE" } else { "FAILED" };
            writeln!(
                s,
                "{:<width$}  {:>3}  {:<6}  {:>5}  {:>6.2}  {:>1}  {:>2}  {:>5.2}  {:>6}",
                r.scenario, r.repeat, phase, m.nl, m.ne, m.s, m.oracle_s, row_spl, kpa
            )
            .unwrap();
        }
        let a = &self.aggregate;
        let ablations = if self.ablations.is_empty() { "none".to_string() } else { self.ablations.join(", ") };
        writeln!(s).unwrap();
        writeln!(s, "episodes {}  repeats {}  ablations {}", a.episodes, self.repeats, ablations).unwrap();
        writeln!(s, "{:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}", "NL", "NE", "SR", "OSR", "SPL", "KPA").unwrap();
        writeln!(
            s,
            "{:>8.2}  {:>8.2}  {:>7.2}%  {:>7.2}%  {:>7.2}%  {:>8}",
            a.nl,
            a.ne,
            a.sr,
            a.osr,
            a.spl,
            na(a.kpa)
        )
        .unwrap();
        let r = &a.reflection;
        writeln!(s, "EDR {}  RA {}  RSR {}  MRA {}", na(r.edr), na(r.ra), na(r.rsr), na(r.mra)).unwrap();
        s
    }
}

pub struct BenchOutcome {
    pub report: BenchReport,
    /// `(label, trace)` per episode, in row order.
    pub traces: Vec<(String, Vec<TraceRecord>)>,
}

fn episode(
    name: &str,
    scenario: &Arc<Scenario>,
    repeat: u32,
    factory: &BackendFactory,
    bank: Option<&ExperienceBank>,
    cfg: &BenchConfig,
) -> Result<(BenchRow, Vec<TraceRecord>), EvalError> {
    let seed = cfg.seed + repeat as u64;
    let radius = cfg.episode.success_radius;
    let mut backends = match factory() {
        Ok(b) => b,
        Err(cause) => {
            let l_star = shortest_visiting_length(scenario).unwrap_or(f64::NAN);
            let target = scenario.subtasks.last().expect("validated");
            let metrics = EpisodeMetrics {
                nl: 0,
                ne: scenario.distance_to_landmark(&scenario.start.position(), target).unwrap_or(f64::NAN),
                s: 0,
                oracle_s: 0,
                l: 0.0,
                l_star,
                key_decisions: vec![],
                reflect_counts: ReflectCounts::default(),
            };
            let row = BenchRow { scenario: name.into(), repeat, seed, phase: Phase::Failed, cause: Some(cause), metrics };
            return Ok((row, vec![]));
        }
    };
    let result = run_episode(scenario.clone(), &mut backends, bank, &cfg.episode, seed)?;
    let metrics = score_episode(&result.trace, scenario, radius)?;
    let row = BenchRow {
        scenario: name.into(),
        repeat,
        seed,
        phase: result.state.phase,
        cause: result.cause.map(|c| c.to_string()),
        metrics,
    };
    Ok((row, result.trace))
}

/// Runs `repeats` episodes per scenario and aggregates them. Rows come out in
/// (scenario, repeat) order whatever the number of jobs.
pub fn run_bench(
    scenarios: &[(String, Arc<Scenario>)],
    factory: &BackendFactory,
    bank: Option<&ExperienceBank>,
    cfg: &BenchConfig,
) -> Result<BenchOutcome, EvalError> {
    if scenarios.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if cfg.repeats == 0 {
        return Err(EvalError::InvalidConfig("repeats must be at least 1".into()));
    }
    cfg.episode.validate().map_err(EvalError::InvalidConfig)?;
    let labels = factory().map(|b| b.describe()).unwrap_or_default();
    let jobs: Vec<(usize, u32)> = (0..scenarios.len()).flat_map(|i| (0..cfg.repeats).map(move |r| (i, r))).collect();
    let run = |&(i, r): &(usize, u32)| {
        let (name, s) = &scenarios[i];
        episode(name, s, r, factory, bank, cfg).map(|(row, trace)| (row, (format!("{name}-r{r}"), trace)))
    };
    let results: Vec<Result<_, EvalError>> = if cfg.jobs <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| EvalError::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };
    let mut rows = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        let (row, trace) = r?;
        rows.push(row);
        traces.push(trace);
    }
    let report = BenchReport {
        repeats: cfg.repeats,
        seed: cfg.seed,
        ablations: cfg.episode.ablations.active().into_iter().map(String::from).collect(),
        backends: labels,
        config: cfg.episode.clone(),
        aggregate: Aggregate::from_rows(&rows)?,
        rows,
    };
    report.check_invariants()?;
    Ok(BenchOutcome { report, traces })
}
