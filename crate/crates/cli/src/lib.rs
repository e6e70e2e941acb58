//! Command-line harness: `run`, `synth` and `report`.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use pmbench_core::simulator::SimConfig;
use pmbench_core::synth::SynthConfig;
use pmbench_core::types::{ExecutionMode, MICROS_PER_CONTRACT};

pub mod report;
pub mod run;
pub mod synth;
pub mod trajectory;

/// Bad flags or unusable inputs; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Debug, Parser)]
#[command(name = "pmbench", version, about = "Deterministic replay backtester for binary prediction markets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an agent over a set of episodes.
    Run(RunArgs),
    /// Generate synthetic episodes.
    Synth(SynthArgs),
    /// Print a metrics table for a finished run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// An episode directory, or a directory of episode directories.
    #[arg(long)]
    pub episodes: PathBuf,
    /// null, random, bollinger, scripted or bridge.
    #[arg(long)]
    pub agent: String,
    /// Seconds between decision steps.
    #[arg(long, default_value_t = 300)]
    pub cadence: u64,
    /// Seconds between equity samples.
    #[arg(long, default_value_t = 60)]
    pub equity_interval: u64,
    /// Tool rounds per step; each round allows 8 calls.
    #[arg(long, default_value_t = 3)]
    pub tool_rounds: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides each episode's execution mode.
    #[arg(long)]
    pub mode: Option<ExecutionMode>,
    /// Run directory. Defaults to `$PMBENCH_OUT/<run id>`, else `runs/<run id>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "PMBENCH_OUT", hide_env_values = true)]
    pub out_root: Option<PathBuf>,
    /// Episodes run concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Command line for `--agent bridge`, split on whitespace.
    #[arg(long)]
    pub agent_cmd: Option<String>,
    /// Per-step wall-clock limit for bridged agents, in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub bridge_timeout: f64,
    /// Write trajectory.jsonl for each episode.
    #[arg(long)]
    pub trajectory: bool,
    /// Steps between trajectory checkpoints.
    #[arg(long, default_value_t = 50)]
    pub checkpoint_every: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub episodes: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tickers: Option<u32>,
    /// Episode length in seconds.
    #[arg(long)]
    pub duration: Option<u64>,
    /// Seconds between book snapshots.
    #[arg(long)]
    pub book_period: Option<u64>,
    /// Expected trade prints per minute per ticker.
    #[arg(long)]
    pub trade_rate: Option<f64>,
    /// Spread in cents.
    #[arg(long)]
    pub spread: Option<u8>,
    /// Contracts per book level.
    #[arg(long)]
    pub depth: Option<u64>,
    /// Largest latent mid move per book update, in cents.
    #[arg(long)]
    pub vol: Option<u8>,
    /// Starting bankroll in whole dollars.
    #[arg(long)]
    pub bankroll: Option<i64>,
    #[arg(long)]
    pub mode: Option<ExecutionMode>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Also write the equity curves of every episode to this CSV.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

impl RunArgs {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            cadence_s: self.cadence,
            equity_sample_s: self.equity_interval,
            max_tool_rounds: self.tool_rounds,
            rng_seed: self.seed,
            execution_mode: self.mode,
            ..SimConfig::default()
        }
    }

    pub fn options(&self) -> anyhow::Result<run::RunOptions> {
        if self.parallel == 0 {
            return usage("--parallel must be at least 1");
        }
        if !(self.bridge_timeout.is_finite() && self.bridge_timeout > 0.0) {
            return usage("--bridge-timeout must be positive");
        }
        if self.checkpoint_every == 0 {
            return usage("--checkpoint-every must be at least 1");
        }
        let agent_cmd = self.agent_cmd.as_ref().map(|c| c.split_whitespace().map(String::from).collect());
        Ok(run::RunOptions {
            episodes: self.episodes.clone(),
            agent: self.agent.clone(),
            sim: self.sim_config(),
            out: self.out.clone(),
            out_root: self.out_root.clone(),
            parallel: self.parallel,
            agent_cmd,
            bridge_timeout: Duration::from_secs_f64(self.bridge_timeout),
            trajectory_every: self.trajectory.then_some(self.checkpoint_every),
        })
    }
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        let d = SynthConfig::default();
        SynthConfig {
            seed: self.seed,
            n_tickers: self.tickers.unwrap_or(d.n_tickers),
            duration_s: self.duration.unwrap_or(d.duration_s),
            book_update_period_s: self.book_period.unwrap_or(d.book_update_period_s),
            trade_rate_per_min: self.trade_rate.unwrap_or(d.trade_rate_per_min),
            spread_c: self.spread.unwrap_or(d.spread_c),
            depth_per_level: self.depth.unwrap_or(d.depth_per_level),
            vol_per_step_c: self.vol.unwrap_or(d.vol_per_step_c),
            bankroll: self.bankroll.map(|b| b * MICROS_PER_CONTRACT).unwrap_or(d.bankroll),
            execution_mode: self.mode.unwrap_or(d.execution_mode),
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let summary = run::run(&args.options()?)?;
            for ep in &summary.episodes {
                if let Some(why) = &ep.aborted {
                    eprintln!("episode {} aborted: {why}", ep.episode_id);
                }
            }
            println!("{}", summary.out.display());
            Ok(if summary.any_aborted() { 2 } else { 0 })
        }
        Command::Synth(args) => {
            for dir in synth::synth(&args.config(), args.episodes, &args.out)? {
                println!("{}", dir.display());
            }
            Ok(0)
        }
        Command::Report(args) => {
            print!("{}", report::report(&args.run, args.plot.as_deref())?);
            Ok(0)
        }
    }
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() || e.is::<report::ReportError>() {
                1
            } else {
                2
            }
        }
    }
}
