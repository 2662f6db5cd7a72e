use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde_json::json;

use conav_core::evalkit::{run_bench, score_episode, suites, BenchConfig};
use conav_core::memory::{encode, ExperienceBank};
use conav_core::orchestrator::{
    read_trace, replay as replay_trace, review_trace, run_episode, write_trace, EpisodeConfig,
    ReplayError,
};
use conav_core::simworld::{generate_scenario_with, Layout, Scenario};

use crate::config::RunConfig;
use crate::{BenchArgs, GenArgs, LayoutArg, MemoryCommand, ReplayArgs, RunArgs};

const EXIT_FAILED: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn load_bank(path: Option<&Path>) -> Result<Option<ExperienceBank>> {
    path.map(|p| ExperienceBank::load(p).with_context(|| format!("bank {}", p.display())))
        .transpose()
}

pub fn run(args: RunArgs) -> Result<u8> {
    let mut cfg = RunConfig::layered(&RunConfig::default(), args.episode.config.as_deref())?;
    args.episode.apply(&mut cfg)?;
    cfg.scenario = args.scenario.or(cfg.scenario);
    cfg.trace = args.trace.or(cfg.trace);
    cfg.validate()?;
    let path = cfg.scenario.clone().context("--scenario is required")?;
    let scenario = Arc::new(
        Scenario::load(&path).with_context(|| format!("scenario {}", path.display()))?,
    );
    let bank = load_bank(cfg.bank.as_deref())?;
    let mut backends = cfg.backends().map_err(anyhow::Error::msg)?;

    let result = run_episode(scenario.clone(), &mut backends, bank.as_ref(), &cfg.episode, cfg.seed)?;
    if let Some(t) = &cfg.trace {
        write_trace(t, &result.trace).with_context(|| format!("writing trace {}", t.display()))?;
    }
    let metrics = score_episode(&result.trace, &scenario, cfg.episode.success_radius)?;
    let out = json!({
        "scenario": path.display().to_string(),
        "seed": cfg.seed,
        "phase": result.state.phase,
        "cause": result.cause.as_ref().map(|c| c.to_string()),
        "budget": result.budget,
        "metrics": metrics,
    });
    emit(&(serde_json::to_string_pretty(&out)? + "\n"))?;
    Ok(if result.is_done() { 0 } else { EXIT_FAILED })
}

/// Scenario files of a directory (sorted by name), or a built-in suite with
/// the episode settings it is defined under.
type Named = Vec<(String, Scenario)>;

fn load_scenarios(source: &str) -> Result<(Named, Option<EpisodeConfig>)> {
    let dir = Path::new(source);
    if dir.is_dir() {
        let mut files: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        if files.is_empty() {
            bail!("no scenario files in {}", dir.display());
        }
        let scenarios = files
            .iter()
            .map(|p| {
                let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                Scenario::load(p).map(|s| (name, s)).with_context(|| format!("scenario {}", p.display()))
            })
            .collect::<Result<_>>()?;
        return Ok((scenarios, None));
    }
    match suites::by_name(source) {
        Some((s, ep)) => Ok((s, Some(ep))),
        None => bail!(
            "{source} is neither a directory nor a suite ({})",
            suites::SUITE_NAMES.join(", ")
        ),
    }
}

pub fn bench(args: BenchArgs) -> Result<u8> {
    let config_path = args.episode.config.as_deref();
    let from_file = RunConfig::layered(&RunConfig::default(), config_path)?;
    let source = args
        .scenarios
        .clone()
        .or(from_file.scenarios)
        .context("--scenarios is required")?;
    let (scenarios, suite_episode) = load_scenarios(&source)?;
    let mut base = RunConfig::default();
    if let Some(ep) = suite_episode {
        base.episode = ep;
    }
    let mut cfg = RunConfig::layered(&base, config_path)?;
    args.episode.apply(&mut cfg)?;
    cfg.scenarios = Some(source);
    cfg.repeat = args.repeat.unwrap_or(cfg.repeat);
    cfg.jobs = args.jobs.unwrap_or(cfg.jobs);
    cfg.report = args.report.or(cfg.report);
    cfg.validate()?;

    let bank = load_bank(cfg.bank.as_deref())?;
    let scenarios: Vec<(String, Arc<Scenario>)> =
        scenarios.into_iter().map(|(n, s)| (n, Arc::new(s))).collect();
    let bench_cfg = BenchConfig {
        repeats: cfg.repeat,
        jobs: cfg.jobs,
        seed: cfg.seed,
        episode: cfg.episode.clone(),
    };
    let backend_cfg = cfg.clone();
    let factory = move || backend_cfg.backends();
    let outcome = run_bench(&scenarios, &factory, bank.as_ref(), &bench_cfg)?;
    let text = outcome.report.to_text();
    if let Some(dir) = &cfg.report {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("report.json"), outcome.report.to_json())?;
        fs::write(dir.join("report.txt"), &text)?;
    }
    if let Some(dir) = &args.traces {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (label, trace) in outcome.traces.iter().filter(|(_, t)| !t.is_empty()) {
            write_trace(&dir.join(format!("{label}.jsonl")), trace)?;
        }
    }
    emit(&text)?;
    Ok(0)
}

pub fn gen(args: GenArgs) -> Result<u8> {
    if let Some(name) = &args.suite {
        let dir = args.out.as_ref().context("--suite needs --out DIR")?;
        let (scenarios, _) = suites::by_name(name).with_context(|| {
            format!("unknown suite {name} ({})", suites::SUITE_NAMES.join(", "))
        })?;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (n, s) in &scenarios {
            s.save(dir.join(format!("{n}.json")))?;
        }
        emit(&format!("{} scenarios written to {}\n", scenarios.len(), dir.display()))?;
        return Ok(0);
    }
    let layout = match args.layout {
        LayoutArg::Visible => Layout::Visible,
        LayoutArg::HiddenFirst => Layout::HiddenFirst,
    };
    let s = generate_scenario_with(args.seed, args.width, args.height, args.landmarks, args.subtasks, layout)?;
    match &args.out {
        Some(p) => s.save(p)?,
        None => emit(&s.to_json())?,
    }
    Ok(0)
}

pub fn replay(args: ReplayArgs) -> Result<u8> {
    let records = read_trace(&args.trace).with_context(|| format!("trace {}", args.trace.display()))?;
    match replay_trace(&records, args.render.is_some()) {
        Ok(report) => {
            if report.frames.is_empty() && args.render.is_none() {
                emit(&format!(
                    "replay ok: {} steps, {} transitions, final phase {:?}\n",
                    report.steps, report.transitions, report.final_phase
                ))?;
            }
            for f in &report.frames {
                emit(&format!("{f}\n"))?;
            }
            Ok(0)
        }
        Err(ReplayError::Trace(e)) => Err(e).context(format!("trace {}", args.trace.display())),
        Err(e) => {
            eprintln!("divergence: {e}");
            Ok(EXIT_DIVERGED)
        }
    }
}

pub fn memory(cmd: MemoryCommand) -> Result<u8> {
    match cmd {
        MemoryCommand::Inspect { bank, query, top_k } => {
            let bank = ExperienceBank::load(&bank).with_context(|| format!("bank {}", bank.display()))?;
            let ranked = bank.retrieve(&encode(&query), top_k)?;
            for (i, s) in ranked.iter().enumerate() {
                let r = &s.entry.reflective;
                emit(&format!(
                    "{}  {}  {:.4}  {}  {}  [{}]\n",
                    i + 1,
                    s.entry.id,
                    s.score,
                    r.cause.category,
                    r.a_err,
                    r.f_err_tokens.join(" ")
                ))?;
            }
            Ok(0)
        }
        MemoryCommand::Distill { trace, bank: path } => {
            let records = read_trace(&trace).with_context(|| format!("trace {}", trace.display()))?;
            let review = review_trace(&records)?;
            let mut bank = if path.exists() {
                ExperienceBank::load(&path).with_context(|| format!("bank {}", path.display()))?
            } else {
                ExperienceBank::new()
            };
            let mut added = 0;
            for e in review.distilled {
                added += bank.store(e)? as usize;
            }
            bank.persist(&path)?;
            emit(&format!("{added} entries added ({} in bank)\n", bank.len()))?;
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_resolve() {
        let (s, ep) = load_scenarios("glass-corridor").unwrap();
        assert_eq!(s.len(), 30);
        assert!(ep.unwrap().percept.noise.glass_blind);
        assert!(load_scenarios("no-such-suite").is_err());
    }
}
