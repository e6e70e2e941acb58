use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use pmbench_cli::run::{replay_metrics, run, EpisodeMetricsFile, Manifest, RunOptions, MANIFEST_FILE, METRICS_FILE, TRADES_OUT};
use pmbench_cli::synth::synth;
use pmbench_cli::trajectory::{read_trajectory, TrajectoryWriter, TRAJECTORY_FILE};
use pmbench_core::agent_api::StepRecord;
use pmbench_core::agents::{RandomAgent, RandomConfig};
use pmbench_core::episode::load_episode;
use pmbench_core::simulator::{run_episode_observed, SimConfig, StepObserver};
use pmbench_core::synth::SynthConfig;

const PMBENCH: &str = env!("CARGO_BIN_EXE_pmbench");
const REF_AGENT: &str = env!("CARGO_BIN_EXE_pmbench-ref-agent");

fn pmbench(args: &[&str]) -> Output {
    Command::new(PMBENCH).args(args).env_remove("PMBENCH_OUT").output().expect("spawn pmbench")
}

fn synth_set(root: &Path, seed: u64, count: u64) -> PathBuf {
    let eps = root.join("eps");
    synth(&SynthConfig { seed, duration_s: 2 * 3600, ..SynthConfig::default() }, count, &eps).unwrap();
    eps
}

fn manifest(run_dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(run_dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

fn bridge_opts(eps: &Path, out: PathBuf, strategy: &[&str]) -> RunOptions {
    let mut opts = RunOptions::new(eps, "bridge", out);
    let mut cmd = vec![REF_AGENT.to_string()];
    cmd.extend(strategy.iter().map(|s| s.to_string()));
    opts.agent_cmd = Some(cmd);
    opts
}

#[test]
fn synth_is_reproducible_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = pmbench(&["synth", "--seed", "7", "--episodes", "2", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for id in ["synth-7", "synth-8"] {
        for f in fs::read_dir(tmp.path().join("a").join(id)).unwrap() {
            let name = f.unwrap().file_name();
            let a = fs::read(tmp.path().join("a").join(id).join(&name)).unwrap();
            let b = fs::read(tmp.path().join("b").join(id).join(&name)).unwrap();
            assert_eq!(a, b, "{id}/{}", name.to_string_lossy());
        }
        load_episode(&tmp.path().join("a").join(id)).unwrap();
    }
}

#[test]
fn synth_without_trades_has_no_prints() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { seed: 3, trade_rate_per_min: 0.0, duration_s: 1800, ..SynthConfig::default() };
    let dirs = synth(&cfg, 1, tmp.path()).unwrap();
    let ep = load_episode(&dirs[0]).unwrap();
    assert!(ep.events.iter().all(|e| !matches!(e.payload, pmbench_core::episode::EventPayload::TradePrint(_))));
    let text = fs::read_to_string(dirs[0].join("trades.jsonl")).unwrap();
    assert!(text.trim().is_empty());
}

#[test]
fn null_agent_breaks_even() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = synth_set(tmp.path(), 1, 2);
    let s = run(&RunOptions::new(&eps, "null", tmp.path().join("run"))).unwrap();
    assert_eq!(s.aggregate.pnl, 0);
    assert_eq!(s.aggregate.contracts_traded, 0);
    for ep in &s.episodes {
        assert_eq!(ep.metrics.pnl, 0);
        assert_eq!(ep.metrics.max_drawdown_pct, "0.000000");
    }
}

#[test]
fn metrics_replay_from_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = synth_set(tmp.path(), 4, 2);
    let mut opts = RunOptions::new(&eps, "random", tmp.path().join("run"));
    opts.sim.rng_seed = 3;
    let s = run(&opts).unwrap();
    for ep in &s.episodes {
        let file: EpisodeMetricsFile =
            serde_json::from_str(&fs::read_to_string(ep.output_dir.join(METRICS_FILE)).unwrap()).unwrap();
        let bankroll = load_episode(&eps.join(&ep.episode_id)).unwrap().metadata.bankroll;
        assert_eq!(replay_metrics(&ep.output_dir, bankroll).unwrap(), file.metrics);
        assert_eq!(file.metrics, ep.metrics);
    }
}

#[test]
fn report_prints_episode_and_total_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = synth_set(tmp.path(), 5, 1);
    let out = tmp.path().join("run");
    let o = pmbench(&["run", "--episodes", eps.to_str().unwrap(), "--agent", "random", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plot = tmp.path().join("plot.csv");
    let o = pmbench(&["report", "--run", out.to_str().unwrap(), "--plot", plot.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('-') && !l.starts_with("Episode")).collect();
    assert_eq!(rows.len(), 2, "{text}");
    assert!(rows[0].starts_with("synth-5"));
    assert!(rows[1].starts_with("Total"));
    let csv = fs::read_to_string(plot).unwrap();
    assert!(csv.starts_with("episode_id,ts_ms,equity_micro_usd\n"));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("synth-5,")));
}

#[test]
fn report_on_missing_run_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pmbench(&["report", "--run", tmp.path().join("nope").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no completed run"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = synth_set(tmp.path(), 1, 1);
    let eps = eps.to_str().unwrap();
    assert_eq!(pmbench(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pmbench(&["run", "--agent", "null"]).status.code(), Some(1));
    assert_eq!(pmbench(&["run", "--episodes", eps, "--agent", "oracle"]).status.code(), Some(1));
    assert_eq!(pmbench(&["run", "--episodes", eps, "--agent", "bridge"]).status.code(), Some(1));
    assert_eq!(pmbench(&["run", "--episodes", eps, "--agent", "null", "--cadence", "0"]).status.code(), Some(1));
    assert_eq!(pmbench(&["run", "--episodes", "/nonexistent", "--agent", "null"]).status.code(), Some(1));
    assert_eq!(pmbench(&["synth", "--episodes", "0", "--out", tmp.path().to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(pmbench(&["--help"]).status.code(), Some(0));
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = synth_set(tmp.path(), 1, 1);
    let root = tmp.path().join("runs");
    let o = Command::new(PMBENCH)
        .args(["run", "--episodes", eps.to_str().unwrap(), "--agent", "null"])
        .env("PMBENCH_OUT", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let printed = PathBuf::from(String::from_utf8(o.stdout).unwrap().trim());
    assert!(printed.starts_with(&root));
    assert!(printed.file_name().unwrap().to_string_lossy().starts_with("null-"));
    assert!(printed.join(MANIFEST_FILE).is_file());
}

#[test]
fn bridge_budget_is_enforced() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = synth_set(tmp.path(), 2, 1);
    let mut opts = bridge_opts(&eps, tmp.path().join("run"), &["spam"]);
    opts.trajectory_every = Some(50);
    let s = run(&opts).unwrap();
    assert!(!s.any_aborted());
    let steps = read_trajectory(&s.episodes[0].output_dir.join(TRAJECTORY_FILE)).unwrap();
    assert_eq!(steps.len() as u64, s.episodes[0].steps);
    for step in &steps {
        assert_eq!(step.calls.iter().filter(|c| c.ok && c.tool == "get_markets").count(), 24);
        let refused: Vec<_> = step.calls.iter().filter(|c| !c.ok).collect();
        assert_eq!(refused.len(), 1);
        assert_eq!(refused[0].result["code"], "BudgetExhausted");
    }
}

#[test]
fn bridge_garbage_ends_steps_without_trading() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = synth_set(tmp.path(), 2, 1);
    let s = run(&bridge_opts(&eps, tmp.path().join("run"), &["garbage"])).unwrap();
    assert!(!s.any_aborted());
    assert!(s.episodes[0].steps > 1);
    assert_eq!(s.aggregate.contracts_traded, 0);
    let log = fs::read_to_string(s.out.join(&s.episodes[0].episode_id).join(TRADES_OUT)).unwrap();
    assert!(log.lines().all(|l| l.contains(r#""event":"settlement""#)), "{log}");
}

#[test]
fn bridge_crash_aborts_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = synth_set(tmp.path(), 2, 1);
    let out = tmp.path().join("run");
    let cmd = format!("{REF_AGENT} crash --after 3");
    let o = pmbench(&[
        "run", "--episodes", eps.to_str().unwrap(), "--agent", "bridge", "--agent-cmd", &cmd, "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m.episodes[0].steps, 4);
    assert!(m.episodes[0].aborted.as_deref().unwrap().contains("exit"));
    assert!(out.join(&m.episodes[0].output_dir).join(METRICS_FILE).is_file());
}

#[test]
fn bridge_timeout_marks_run_non_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let eps = synth_set(tmp.path(), 2, 1);
    let mut opts = bridge_opts(&eps, tmp.path().join("run"), &["sleep"]);
    opts.bridge_timeout = Duration::from_millis(300);
    let s = run(&opts).unwrap();
    assert!(s.any_aborted());
    let m = manifest(&s.out);
    assert!(m.non_reproducible);
    assert!(m.episodes[0].non_reproducible);
}

/// Forwards to a trajectory writer until `fail_after` steps, then reports an
/// I/O failure and stops without flushing, as a killed process would.
struct Crashing {
    inner: Option<TrajectoryWriter>,
    fail_after: u64,
}

impl StepObserver for Crashing {
    fn on_step(&mut self, r: &StepRecord) -> io::Result<()> {
        if r.step > self.fail_after {
            self.inner.take();
            return Err(io::Error::other("injected crash"));
        }
        self.inner.as_mut().unwrap().on_step(r)
    }
}

#[test]
fn trajectory_survives_a_crash_at_the_last_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { seed: 9, duration_s: 3 * 3600, ..SynthConfig::default() };
    let dirs = synth(&cfg, 1, &tmp.path().join("eps")).unwrap();
    let ep = load_episode(&dirs[0]).unwrap();
    let sim = SimConfig { cadence_s: 60, rng_seed: 1, ..SimConfig::default() };

    let full_path = tmp.path().join("full.jsonl");
    let mut full = TrajectoryWriter::create(&full_path, 50).unwrap();
    let r = run_episode_observed(&ep, &mut RandomAgent::new(RandomConfig::default()), &sim, Some(&mut full)).unwrap();
    assert!(r.steps > 100);
    full.finish().unwrap();
    let complete = read_trajectory(&full_path).unwrap();
    assert_eq!(complete.len() as u64, r.steps);

    let crash_path = tmp.path().join("crash.jsonl");
    let mut crashing = Crashing { inner: Some(TrajectoryWriter::create(&crash_path, 50).unwrap()), fail_after: 60 };
    let r = run_episode_observed(&ep, &mut RandomAgent::new(RandomConfig::default()), &sim, Some(&mut crashing)).unwrap();
    assert!(r.aborted.unwrap().contains("injected crash"));
    let recovered = read_trajectory(&crash_path).unwrap();
    assert_eq!(recovered.len(), 50);
    assert_eq!(recovered[..], complete[..50]);
}
