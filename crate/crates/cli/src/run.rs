//! The `run` command: replay an agent over episodes and write outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use pmbench_core::agent_api::Agent;
use pmbench_core::agents::{agent_by_name, BollingerConfig, RandomConfig};
use pmbench_core::bridge::{BridgeAgent, BridgeConfig};
use pmbench_core::episode::{load_episode, render_episode, Episode, FORMAT_VERSION, METADATA_FILE};
use pmbench_core::fsio::write_atomic;
use pmbench_core::metrics::{aggregate, AggregateMetrics, EpisodeMetrics};
use pmbench_core::simulator::{run_episode_observed, EpisodeResult, SimConfig, StepObserver};

use crate::trajectory::{TrajectoryWriter, TRAJECTORY_FILE};
use crate::usage;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRADES_OUT: &str = "trades.jsonl";
pub const EQUITY_OUT: &str = "equity.csv";
pub const WARNINGS_OUT: &str = "warnings.log";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub episodes: PathBuf,
    pub agent: String,
    pub sim: SimConfig,
    pub out: Option<PathBuf>,
    pub out_root: Option<PathBuf>,
    pub parallel: usize,
    pub agent_cmd: Option<Vec<String>>,
    pub bridge_timeout: Duration,
    pub trajectory_every: Option<u64>,
}

impl RunOptions {
    pub fn new(episodes: impl Into<PathBuf>, agent: &str, out: impl Into<PathBuf>) -> Self {
        Self {
            episodes: episodes.into(),
            agent: agent.to_string(),
            sim: SimConfig::default(),
            out: Some(out.into()),
            out_root: None,
            parallel: 1,
            agent_cmd: None,
            bridge_timeout: pmbench_core::bridge::DEFAULT_TIMEOUT,
            trajectory_every: None,
        }
    }
}

/// Per-episode `metrics.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeMetricsFile {
    pub format_version: String,
    pub episode_id: String,
    #[serde(flatten)]
    pub metrics: EpisodeMetrics,
}

/// Run-level `metrics.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateMetricsFile {
    pub format_version: String,
    pub run_id: String,
    pub agent: String,
    #[serde(flatten)]
    pub metrics: AggregateMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDescriptor {
    pub name: String,
    pub command: Option<Vec<String>>,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEpisode {
    pub episode_id: String,
    pub input_sha256: String,
    pub output_dir: String,
    pub steps: u64,
    pub aborted: Option<String>,
    pub non_reproducible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub run_id: String,
    pub engine_version: String,
    pub config_hash: String,
    pub agent: AgentDescriptor,
    pub sim_config: SimConfig,
    pub episodes: Vec<ManifestEpisode>,
    pub non_reproducible: bool,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub episode_id: String,
    pub output_dir: PathBuf,
    pub steps: u64,
    pub aborted: Option<String>,
    pub non_reproducible: bool,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub run_id: String,
    pub episodes: Vec<EpisodeOutcome>,
    pub aggregate: AggregateMetrics,
}

impl RunSummary {
    pub fn any_aborted(&self) -> bool {
        self.episodes.iter().any(|e| e.aborted.is_some())
    }
}

/// Episode directories under `dir`: `dir` itself if it holds an episode,
/// otherwise its immediate subdirectories that do, sorted by name.
pub fn discover_episodes(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if dir.join(METADATA_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    if !dir.is_dir() {
        return usage(format!("episode directory {} does not exist", dir.display()));
    }
    let mut found: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(METADATA_FILE).is_file())
        .collect();
    found.sort();
    if found.is_empty() {
        return usage(format!("no episodes found under {}", dir.display()));
    }
    Ok(found)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of an episode's canonical rendering, independent of input formatting.
pub fn episode_hash(ep: &Episode) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    for (name, bytes) in render_episode(ep)? {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn agent_config(name: &str) -> Value {
    match name {
        "random" => serde_json::to_value(RandomConfig::default()).expect("serializable"),
        "bollinger" => serde_json::to_value(BollingerConfig::default()).expect("serializable"),
        _ => Value::Null,
    }
}

fn make_agent(opts: &RunOptions) -> anyhow::Result<Box<dyn Agent + Send>> {
    if opts.agent == "bridge" {
        let cmd = match &opts.agent_cmd {
            Some(c) if !c.is_empty() => c.clone(),
            _ => return usage("--agent bridge requires --agent-cmd"),
        };
        return Ok(Box::new(BridgeAgent::new(BridgeConfig { command: cmd, timeout: opts.bridge_timeout })));
    }
    match agent_by_name(&opts.agent) {
        Some(a) => Ok(a),
        None => usage(format!(
            "unknown agent {:?} (expected null, random, bollinger, scripted or bridge)",
            opts.agent
        )),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_episode_outputs(dir: &Path, result: &EpisodeResult) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(&dir.join(TRADES_OUT), &result.trades_jsonl())?;
    write_atomic(&dir.join(EQUITY_OUT), &result.equity_csv())?;
    let mut warnings = String::new();
    for w in &result.warnings {
        warnings.push_str(w);
        warnings.push('\n');
    }
    write_atomic(&dir.join(WARNINGS_OUT), warnings.as_bytes())?;
    let file = EpisodeMetricsFile {
        format_version: FORMAT_VERSION.to_string(),
        episode_id: result.episode_id.clone(),
        metrics: result.metrics.clone(),
    };
    write_json(&dir.join(METRICS_FILE), &file)
}

fn run_one(opts: &RunOptions, episode: &Episode, dir: &Path) -> anyhow::Result<EpisodeOutcome> {
    let mut agent = make_agent(opts)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut writer = match opts.trajectory_every {
        Some(n) => Some(TrajectoryWriter::create(&dir.join(TRAJECTORY_FILE), n)?),
        None => None,
    };
    let observer = writer.as_mut().map(|w| w as &mut dyn StepObserver);
    let result = run_episode_observed(episode, agent.as_mut(), &opts.sim, observer)
        .with_context(|| format!("episode {}", episode.metadata.episode_id))?;
    if let Some(w) = writer {
        w.finish()?;
    }
    write_episode_outputs(dir, &result)?;
    Ok(EpisodeOutcome {
        episode_id: result.episode_id.clone(),
        output_dir: dir.to_path_buf(),
        steps: result.steps,
        aborted: result.aborted.clone(),
        non_reproducible: result.non_reproducible,
        metrics: result.metrics.clone(),
    })
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn run(opts: &RunOptions) -> anyhow::Result<RunSummary> {
    let started_at = now_rfc3339();
    opts.sim.validate().map_err(|e| crate::UsageError(e.to_string()))?;
    make_agent(opts)?;

    let mut episodes = Vec::new();
    for dir in discover_episodes(&opts.episodes)? {
        let ep = load_episode(&dir).map_err(|e| crate::UsageError(format!("{}: {e}", dir.display())))?;
        episodes.push(ep);
    }
    let mut ids: Vec<&str> = episodes.iter().map(|e| e.metadata.episode_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return usage(format!("duplicate episode id {:?}", w[0]));
    }
    let hashes = episodes.iter().map(episode_hash).collect::<anyhow::Result<Vec<_>>>()?;

    let agent = AgentDescriptor {
        name: opts.agent.clone(),
        command: if opts.agent == "bridge" { opts.agent_cmd.clone() } else { None },
        config: agent_config(&opts.agent),
    };
    let hash_input = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "engine_version": env!("CARGO_PKG_VERSION"),
        "agent": agent,
        "sim_config": opts.sim,
        "episodes": episodes.iter().zip(&hashes).map(|(e, h)| (e.metadata.episode_id.clone(), h.clone())).collect::<Vec<_>>(),
    });
    let config_hash = sha256_hex(&serde_json::to_vec(&hash_input)?);
    let run_id = format!("{}-{}", opts.agent, &config_hash[..12]);
    let out = match (&opts.out, &opts.out_root) {
        (Some(o), _) => o.clone(),
        (None, Some(root)) => root.join(&run_id),
        (None, None) => PathBuf::from("runs").join(&run_id),
    };
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let work = |ep: &Episode| run_one(opts, ep, &out.join(&ep.metadata.episode_id));
    let outcomes: Vec<EpisodeOutcome> = if opts.parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.parallel).build()?;
        pool.install(|| episodes.par_iter().map(work).collect::<anyhow::Result<Vec<_>>>())?
    } else {
        episodes.iter().map(work).collect::<anyhow::Result<Vec<_>>>()?
    };

    let per_episode: Vec<EpisodeMetrics> = outcomes.iter().map(|o| o.metrics.clone()).collect();
    let agg = aggregate(&per_episode).map_err(|e| anyhow!(e))?;
    write_json(
        &out.join(METRICS_FILE),
        &AggregateMetricsFile {
            format_version: FORMAT_VERSION.to_string(),
            run_id: run_id.clone(),
            agent: opts.agent.clone(),
            metrics: agg.clone(),
        },
    )?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION.to_string(),
        run_id: run_id.clone(),
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        agent,
        sim_config: opts.sim.clone(),
        episodes: outcomes
            .iter()
            .zip(&hashes)
            .map(|(o, h)| ManifestEpisode {
                episode_id: o.episode_id.clone(),
                input_sha256: h.clone(),
                output_dir: o.episode_id.clone(),
                steps: o.steps,
                aborted: o.aborted.clone(),
                non_reproducible: o.non_reproducible,
            })
            .collect(),
        non_reproducible: outcomes.iter().any(|o| o.non_reproducible),
        started_at,
        finished_at: now_rfc3339(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;

    Ok(RunSummary { out, run_id, episodes: outcomes, aggregate: agg })
}

/// Recomputes an episode's metrics from its `trades.jsonl`, `equity.csv`
/// and `warnings.log`.
pub fn replay_metrics(dir: &Path, bankroll: i64) -> anyhow::Result<EpisodeMetrics> {
    use pmbench_core::tradelog;
    let log = tradelog::from_jsonl(&fs::read_to_string(dir.join(TRADES_OUT))?)?;
    let fills: Vec<_> = tradelog::fills(&log).cloned().collect();
    let orders: Vec<_> = tradelog::orders(&log).cloned().collect();
    let curve = read_equity_csv(&dir.join(EQUITY_OUT))?;
    let mut m = pmbench_core::metrics::compute_metrics(&curve, &fills, &orders, bankroll).map_err(|e| anyhow!(e))?;
    m.data_warnings = fs::read_to_string(dir.join(WARNINGS_OUT))?.lines().count() as u64;
    Ok(m)
}

pub fn read_equity_csv(path: &Path) -> anyhow::Result<Vec<(i64, i64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some("ts_ms,equity_micro_usd") {
        return Err(anyhow!("{}: unexpected header", path.display()));
    }
    lines
        .map(|l| {
            let (ts, eq) = l.split_once(',').ok_or_else(|| anyhow!("{}: bad row {l:?}", path.display()))?;
            Ok((ts.parse()?, eq.parse()?))
        })
        .collect()
}
