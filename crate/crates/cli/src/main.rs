mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{BackendKind, RunConfig};
use conav_core::llm::RemoteConfig;

/// Multi-agent grid-world navigation: episodes, benchmarks, replay and memory tools.
///
/// Exit codes: 0 success, 1 usage or configuration error, 2 episode failed,
/// 3 replay divergence.
#[derive(Debug, Parser)]
#[command(name = "conav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode; prints its metrics as JSON.
    Run(RunArgs),
    /// Run every scenario of a suite several times and report aggregates.
    Bench(BenchArgs),
    /// Generate a scenario, or write out a built-in suite.
    Gen(GenArgs),
    /// Re-simulate a trace and check it against the recorded trajectory.
    Replay(ReplayArgs),
    /// Experience bank tools.
    #[command(subcommand)]
    Memory(MemoryCommand),
}

/// Settings shared by `run` and `bench`. Each flag overrides the config file.
#[derive(Debug, Args)]
struct EpisodeArgs {
    /// JSON config file with keys named after the run configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Backend for every role.
    #[arg(long, value_enum)]
    agents: Option<BackendKind>,
    /// Backend for the planner role.
    #[arg(long, value_enum)]
    planner: Option<BackendKind>,
    /// Backend for the observer role.
    #[arg(long, value_enum)]
    observer: Option<BackendKind>,
    /// Backend for the controller role.
    #[arg(long, value_enum)]
    controller: Option<BackendKind>,
    /// Base URL of the chat-completions endpoint used by remote roles.
    #[arg(long)]
    remote_url: Option<String>,
    /// Model name sent to the remote endpoint.
    #[arg(long)]
    remote_model: Option<String>,
    /// Noise seed (first repeat for `bench`).
    #[arg(long)]
    seed: Option<u64>,
    /// Verification threshold in (0, 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Experience-risk threshold in (0, 1].
    #[arg(long)]
    tau_risk: Option<f64>,
    /// Waypoint spacing in meters.
    #[arg(long)]
    delta: Option<f64>,
    /// Step budget as a multiple of the shortest route's move count.
    #[arg(long)]
    budget_multiplier: Option<f64>,
    /// Disable modules: no_planner, no_observer, no_memory, no_reflection,
    /// no_geo_map, no_topo_map. Repeatable or comma separated.
    #[arg(long, value_delimiter = ',')]
    ablate: Vec<String>,
    /// Report glass cells as free space.
    #[arg(long)]
    glass_blind: bool,
    /// Half-width of uniform noise on reported distances, in meters.
    #[arg(long)]
    distance_jitter: Option<f64>,
    /// View range in cells.
    #[arg(long)]
    max_range: Option<u32>,
    /// Experience bank consulted during episodes (read only).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Inline map snapshots into history records.
    #[arg(long)]
    full_maps: bool,
}

impl EpisodeArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(k) = self.agents {
            cfg.agents.backend = k;
            cfg.agents.planner = None;
            cfg.agents.observer = None;
            cfg.agents.controller = None;
        }
        cfg.agents.planner = self.planner.or(cfg.agents.planner);
        cfg.agents.observer = self.observer.or(cfg.agents.observer);
        cfg.agents.controller = self.controller.or(cfg.agents.controller);
        match (&self.remote_url, &self.remote_model, &mut cfg.remote) {
            (None, None, _) => {}
            (url, model, Some(r)) => {
                if let Some(u) = url {
                    r.base_url = u.clone();
                }
                if let Some(m) = model {
                    r.model = m.clone();
                }
            }
            (Some(u), Some(m), slot) => *slot = Some(RemoteConfig::new(u, m)),
            _ => bail!("--remote-url and --remote-model must be given together unless the config file sets remote"),
        }
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        let ep = &mut cfg.episode;
        ep.tau = self.tau.unwrap_or(ep.tau);
        ep.tau_risk = self.tau_risk.unwrap_or(ep.tau_risk);
        ep.delta = self.delta.or(ep.delta);
        ep.budget_multiplier = self.budget_multiplier.or(ep.budget_multiplier);
        for name in &self.ablate {
            ep.ablations.enable(name.trim()).map_err(anyhow::Error::msg)?;
        }
        ep.percept.noise.glass_blind |= self.glass_blind;
        ep.percept.noise.distance_jitter =
            self.distance_jitter.unwrap_or(ep.percept.noise.distance_jitter);
        ep.percept.max_range = self.max_range.unwrap_or(ep.percept.max_range);
        ep.full_maps |= self.full_maps;
        cfg.bank = self.bank.clone().or(cfg.bank.take());
        Ok(())
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Where to write the JSONL trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    episode: EpisodeArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Directory of scenario JSON files, or a suite: oracle, glass-corridor, revisit-heavy.
    #[arg(long)]
    scenarios: Option<String>,
    /// Episodes per scenario (default 5).
    #[arg(long)]
    repeat: Option<u32>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory receiving report.json and report.txt.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory receiving one JSONL trace per episode.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[command(flatten)]
    episode: EpisodeArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LayoutArg {
    Visible,
    HiddenFirst,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    width: usize,
    #[arg(long, default_value_t = 10)]
    height: usize,
    #[arg(long, default_value_t = 3)]
    landmarks: usize,
    #[arg(long, default_value_t = 2)]
    subtasks: usize,
    /// Target placement relative to the preceding waypoint.
    #[arg(long, value_enum, default_value_t = LayoutArg::Visible)]
    layout: LayoutArg,
    /// Write a built-in suite instead of a single scenario; needs --out DIR.
    #[arg(long)]
    suite: Option<String>,
    /// Output file (directory with --suite); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Render {
    Ascii,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Print one grid frame per executed step.
    #[arg(long, value_enum)]
    render: Option<Render>,
}

#[derive(Debug, Subcommand)]
enum MemoryCommand {
    /// Rank bank entries against a free-text scene query.
    Inspect {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Run global reflection over a trace and store its distilled entries.
    Distill {
        #[arg(long)]
        trace: PathBuf,
        /// Bank file; created when missing.
        #[arg(long)]
        bank: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Bench(a) => commands::bench(a),
        Command::Gen(a) => commands::gen(a),
        Command::Replay(a) => commands::replay(a),
        Command::Memory(m) => commands::memory(m),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
