//! External-process agents over line-delimited JSON on stdin/stdout.
//!
//! The wire contract is documented in `PROTOCOL.md`. One child process is
//! spawned per episode; all traffic is strictly request/response so replay
//! stays deterministic as long as the child is.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent_api::{Agent, AgentContext, AgentError, EpisodeInfo, ToolCall, ToolError};

pub const PROTOCOL_VERSION: &str = "1";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
/// Messages accepted per step beyond the call budget before the step is cut.
const MESSAGE_SLACK: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Hello,
    Step,
    ToolCall,
    ToolResult,
    ActionAck,
    Error,
    Done,
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub step_id: u64,
    pub protocol_version: String,
    #[serde(default)]
    pub body: Value,
}

impl Message {
    pub fn new(kind: MessageType, step_id: u64, body: Value) -> Self {
        Self { kind, step_id, protocol_version: PROTOCOL_VERSION.to_string(), body }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("serializable");
        s.push('\n');
        s
    }
}

/// Body of a `tool_call` message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallBody {
    pub tool: String,
    #[serde(default)]
    pub args: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Wall-clock limit for the handshake and for each step.
    pub timeout: Duration,
}

impl BridgeConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self { command, timeout: DEFAULT_TIMEOUT }
    }
}

enum Incoming {
    Line(String),
    Eof,
}

enum Recv {
    Line(String),
    Eof,
    Timeout,
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    rx: Receiver<Incoming>,
}

impl Session {
    fn spawn(cmd: &[String]) -> Result<Session, AgentError> {
        let (prog, args) = cmd.split_first().ok_or_else(|| AgentError::Failed("empty agent command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AgentError::Failed(format!("cannot start {prog}: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(Incoming::Line(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(Incoming::Eof);
        });
        Ok(Session { child, stdin, rx })
    }

    fn send(&mut self, msg: &Message) -> Result<(), AgentError> {
        let stdin = self.stdin.as_mut().ok_or_else(|| AgentError::Crashed("stdin closed".into()))?;
        stdin
            .write_all(msg.to_line().as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| AgentError::Crashed(format!("write failed: {e}")))
    }

    fn recv(&mut self, deadline: Instant) -> Recv {
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.rx.recv_timeout(wait) {
            Ok(Incoming::Line(l)) => Recv::Line(l),
            Ok(Incoming::Eof) | Err(RecvTimeoutError::Disconnected) => Recv::Eof,
            Err(RecvTimeoutError::Timeout) => Recv::Timeout,
        }
    }

    fn exit_status(&mut self) -> String {
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            if let Ok(Some(st)) = self.child.try_wait() {
                return st.to_string();
            }
            thread::sleep(Duration::from_millis(10));
        }
        "still running".into()
    }

    fn shutdown(&mut self, grace: Duration) {
        self.stdin.take();
        let deadline = Instant::now() + grace;
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Counters for what happened on the wire during an episode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BridgeStats {
    pub protocol_errors: u64,
    pub stale_messages: u64,
}

/// An [`Agent`] backed by a child process.
pub struct BridgeAgent {
    cfg: BridgeConfig,
    session: Option<Session>,
    non_reproducible: bool,
    pub stats: BridgeStats,
}

impl BridgeAgent {
    pub fn new(cfg: BridgeConfig) -> Self {
        Self { cfg, session: None, non_reproducible: false, stats: BridgeStats::default() }
    }

    fn session(&mut self) -> Result<&mut Session, AgentError> {
        self.session.as_mut().ok_or_else(|| AgentError::Failed("agent process not started".into()))
    }

    fn timed_out(&mut self) -> AgentError {
        self.non_reproducible = true;
        if let Some(mut s) = self.session.take() {
            s.shutdown(Duration::ZERO);
        }
        AgentError::Timeout(self.cfg.timeout.as_millis() as u64)
    }

    fn crashed(&mut self) -> AgentError {
        let status = self.session.as_mut().map(Session::exit_status).unwrap_or_default();
        self.session = None;
        AgentError::Crashed(format!("agent closed its output ({status})"))
    }

    /// Reports a protocol violation to the child and closes the step.
    fn protocol_error(&mut self, ctx: &mut AgentContext<'_>, step_id: u64, message: String) -> Result<(), AgentError> {
        self.stats.protocol_errors += 1;
        let _ = ctx.done();
        let body = json!({ "code": "ProtocolError", "message": message });
        self.session()?.send(&Message::new(MessageType::Error, step_id, body))
    }

    fn handle_call(&mut self, ctx: &mut AgentContext<'_>, step_id: u64, body: Value) -> Result<bool, AgentError> {
        let call = serde_json::from_value::<ToolCallBody>(body)
            .map_err(|e| ToolError::InvalidArguments(e.to_string()))
            .and_then(|b| ToolCall::from_wire(&b.tool, &b.args));
        let (reply, finished) = match call {
            Ok(ToolCall::Done) => match ctx.done() {
                Ok(()) => (Message::new(MessageType::ActionAck, step_id, json!({ "tool": "done", "result": {} })), true),
                Err(e) => (error_message(step_id, "done", &e), true),
            },
            Ok(call) => {
                let tool = call.name();
                let kind = match call {
                    ToolCall::PlaceOrder(_) | ToolCall::CancelOrder { .. } => MessageType::ActionAck,
                    _ => MessageType::ToolResult,
                };
                match ctx.call(call) {
                    Ok(result) => (Message::new(kind, step_id, json!({ "tool": tool, "result": result })), false),
                    Err(e) => (error_message(step_id, tool, &e), false),
                }
            }
            Err(e) => (error_message(step_id, "", &e), false),
        };
        self.session()?.send(&reply)?;
        Ok(finished)
    }
}

fn error_message(step_id: u64, tool: &str, e: &ToolError) -> Message {
    Message::new(MessageType::Error, step_id, json!({ "tool": tool, "code": e.code(), "message": e.to_string() }))
}

impl Agent for BridgeAgent {
    fn name(&self) -> &str {
        "bridge"
    }

    fn begin_episode(&mut self, info: &EpisodeInfo) -> Result<(), AgentError> {
        self.non_reproducible = false;
        self.stats = BridgeStats::default();
        self.session = Some(Session::spawn(&self.cfg.command)?);
        let deadline = Instant::now() + self.cfg.timeout;
        let line = match self.session()?.recv(deadline) {
            Recv::Line(l) => l,
            Recv::Eof => return Err(self.crashed()),
            Recv::Timeout => return Err(self.timed_out()),
        };
        let hello: Message =
            serde_json::from_str(&line).map_err(|e| AgentError::Protocol(format!("bad hello: {e}")))?;
        if hello.kind != MessageType::Hello {
            return Err(AgentError::Protocol(format!("expected hello, got {:?}", hello.kind)));
        }
        if hello.protocol_version != PROTOCOL_VERSION {
            return Err(AgentError::Protocol(format!(
                "protocol version {:?} not supported (want {PROTOCOL_VERSION:?})",
                hello.protocol_version
            )));
        }
        let body = serde_json::to_value(info).expect("serializable");
        self.session()?.send(&Message::new(MessageType::Hello, 0, body))
    }

    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), AgentError> {
        let step_id = ctx.step_index() + 1;
        let body = json!({
            "step_index": ctx.step_index(),
            "budget": ctx.budget(),
            "summary": ctx.summary(),
        });
        self.session()?.send(&Message::new(MessageType::Step, step_id, body))?;
        let deadline = Instant::now() + self.cfg.timeout;
        let limit = ctx.budget() + MESSAGE_SLACK;
        let mut seen = 0u32;
        loop {
            let line = match self.session()?.recv(deadline) {
                Recv::Line(l) => l,
                Recv::Eof => return Err(self.crashed()),
                Recv::Timeout => return Err(self.timed_out()),
            };
            let msg: Message = match serde_json::from_str(&line) {
                Ok(m) => m,
                Err(e) => return self.protocol_error(ctx, step_id, format!("malformed message: {e}")),
            };
            if msg.protocol_version != PROTOCOL_VERSION {
                return self.protocol_error(ctx, step_id, format!("protocol version {:?}", msg.protocol_version));
            }
            if msg.step_id < step_id {
                self.stats.stale_messages += 1;
                continue;
            }
            if msg.step_id > step_id {
                return self.protocol_error(ctx, step_id, format!("step_id {} is ahead of {step_id}", msg.step_id));
            }
            seen += 1;
            if seen > limit {
                return self.protocol_error(ctx, step_id, "too many messages in one step".into());
            }
            match msg.kind {
                MessageType::Done => {
                    let _ = ctx.done();
                    return Ok(());
                }
                MessageType::ToolCall => {
                    if self.handle_call(ctx, step_id, msg.body)? {
                        return Ok(());
                    }
                }
                other => return self.protocol_error(ctx, step_id, format!("unexpected {other:?} message")),
            }
        }
    }

    fn end_episode(&mut self) {
        if let Some(mut s) = self.session.take() {
            let _ = s.send(&Message::new(MessageType::Bye, 0, json!({})));
            s.shutdown(Duration::from_secs(2));
        }
    }

    fn non_reproducible(&self) -> bool {
        self.non_reproducible
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::agents::NullAgent;
    use crate::simulator::{run_episode, SimConfig};
    use crate::synth::{generate_synthetic, SynthConfig};

    fn sh(script: &str) -> BridgeConfig {
        BridgeConfig::new(vec!["sh".into(), "-c".into(), script.into()])
    }

    const HELLO: &str = r#"echo '{"type":"hello","step_id":0,"protocol_version":"1","body":{}}'"#;

    /// Replies `done` to every step, echoing its step_id.
    fn done_agent() -> String {
        format!(
            r#"{HELLO}
while read -r line; do
  case "$line" in
    *'"type":"step"'*)
      id=$(printf '%s' "$line" | sed -e 's/.*"step_id":\([0-9]*\).*/\1/')
      echo "{{\"type\":\"done\",\"step_id\":$id,\"protocol_version\":\"1\",\"body\":{{}}}}" ;;
    *'"type":"bye"'*) exit 0 ;;
  esac
done"#
        )
    }

    fn episode() -> crate::episode::Episode {
        generate_synthetic(&SynthConfig { seed: 5, duration_s: 1800, ..SynthConfig::default() }).unwrap()
    }

    #[test]
    fn message_round_trip() {
        let m = Message::new(MessageType::ToolCall, 3, json!({"tool": "get_markets", "args": {}}));
        let line = m.to_line();
        assert!(line.starts_with(r#"{"type":"tool_call","step_id":3,"protocol_version":"1""#));
        assert_eq!(serde_json::from_str::<Message>(line.trim()).unwrap(), m);
    }

    #[test]
    fn done_agent_matches_null_agent() {
        let ep = episode();
        let cfg = SimConfig::default();
        let mut bridged = BridgeAgent::new(sh(&done_agent()));
        let a = run_episode(&ep, &mut bridged, &cfg).unwrap();
        let b = run_episode(&ep, &mut NullAgent, &cfg).unwrap();
        assert_eq!(a.aborted, None);
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.equity_csv(), b.equity_csv());
        assert_eq!(a.trades_jsonl(), b.trades_jsonl());
        assert!(!a.non_reproducible);
    }

    #[test]
    fn crash_aborts_episode() {
        let mut agent = BridgeAgent::new(sh(&format!("{HELLO}; read -r line; read -r line; exit 3")));
        let r = run_episode(&episode(), &mut agent, &SimConfig::default()).unwrap();
        let why = r.aborted.expect("aborted");
        assert!(why.contains("crashed"), "{why}");
        assert!(!r.non_reproducible);
    }

    #[test]
    fn timeout_marks_run_non_reproducible() {
        let mut cfg = sh(&format!("{HELLO}; sleep 5"));
        cfg.timeout = Duration::from_millis(200);
        let mut agent = BridgeAgent::new(cfg);
        let r = run_episode(&episode(), &mut agent, &SimConfig::default()).unwrap();
        assert!(r.aborted.unwrap().contains("timed out"));
        assert!(r.non_reproducible);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let script = r#"echo '{"type":"hello","step_id":0,"protocol_version":"9","body":{}}'; sleep 1"#;
        let mut agent = BridgeAgent::new(sh(script));
        let r = run_episode(&episode(), &mut agent, &SimConfig::default()).unwrap();
        assert!(r.aborted.unwrap().contains("protocol version"));
        assert_eq!(r.steps, 0);
    }

    #[test]
    fn malformed_line_ends_step_only() {
        let script = format!(
            r#"{HELLO}
while read -r line; do
  case "$line" in
    *'"type":"step"'*) echo 'not json' ;;
    *'"type":"bye"'*) exit 0 ;;
  esac
done"#
        );
        let mut agent = BridgeAgent::new(sh(&script));
        let ep = episode();
        let r = run_episode(&ep, &mut agent, &SimConfig::default()).unwrap();
        assert_eq!(r.aborted, None);
        assert_eq!(agent.stats.protocol_errors, r.steps);
        assert!(r.steps > 1);
    }

    #[test]
    fn missing_program_fails_cleanly() {
        let mut agent = BridgeAgent::new(BridgeConfig::new(vec!["/nonexistent/agent".into()]));
        let r = run_episode(&episode(), &mut agent, &SimConfig::default()).unwrap();
        assert!(r.aborted.unwrap().contains("cannot start"));
    }
}
