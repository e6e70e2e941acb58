//! Reference bridge agent used by the test suites.
//!
//! Strategies:
//! - `done`: ends every step immediately.
//! - `scripted`: same as the in-process scripted agent.
//! - `random`: same as the in-process random baseline, seeded from `hello`.
//! - `spam`: calls `get_markets` until refused, then ends the step.
//! - `crash`: exits with status 3 when step `--after + 1` arrives.
//! - `garbage`: answers every step with a line that is not JSON.
//! - `sleep`: never answers a step.

use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

use pmbench_core::agent_api::{EpisodeInfo, MarketSummary, StepSummary};
use pmbench_core::agents::{RandomAgent, RandomConfig, RandomDecision, ScriptedAgent};
use pmbench_core::bridge::{Message, MessageType, PROTOCOL_VERSION};

#[derive(Parser)]
struct Args {
    strategy: String,
    #[arg(long, default_value_t = 0)]
    after: u64,
}

struct Wire {
    lines: io::Lines<io::StdinLock<'static>>,
    out: io::Stdout,
}

impl Wire {
    fn send(&mut self, kind: MessageType, step_id: u64, body: Value) {
        let mut out = self.out.lock();
        let _ = out.write_all(Message::new(kind, step_id, body).to_line().as_bytes());
        let _ = out.flush();
    }

    fn raw(&mut self, line: &str) {
        let mut out = self.out.lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    }

    fn recv(&mut self) -> Option<Message> {
        loop {
            let line = self.lines.next()?.ok()?;
            if let Ok(m) = serde_json::from_str::<Message>(&line) {
                return Some(m);
            }
        }
    }

    /// Sends a tool call and waits for its answer.
    fn call(&mut self, step_id: u64, tool: &str, args: Value) -> Option<Message> {
        self.send(MessageType::ToolCall, step_id, json!({ "tool": tool, "args": args }));
        loop {
            let m = self.recv()?;
            if m.step_id == step_id
                && matches!(m.kind, MessageType::ToolResult | MessageType::ActionAck | MessageType::Error)
            {
                return Some(m);
            }
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut wire = Wire { lines: io::stdin().lines(), out: io::stdout() };
    wire.send(MessageType::Hello, 0, json!({ "name": format!("ref-{}", args.strategy), "protocol_version": PROTOCOL_VERSION }));
    let mut random = RandomAgent::new(RandomConfig::default());
    while let Some(msg) = wire.recv() {
        match msg.kind {
            MessageType::Hello => {
                if let Ok(info) = serde_json::from_value::<EpisodeInfo>(msg.body) {
                    random.reseed(&info.episode_id, info.rng_seed);
                }
            }
            MessageType::Bye => return ExitCode::SUCCESS,
            MessageType::Step => {
                let id = msg.step_id;
                let summary: StepSummary = match serde_json::from_value(msg.body["summary"].clone()) {
                    Ok(s) => s,
                    Err(_) => return ExitCode::from(4),
                };
                match args.strategy.as_str() {
                    "done" => {}
                    "scripted" => {
                        if let Some(reply) = wire.call(id, "get_markets", json!({})) {
                            let markets: Vec<MarketSummary> =
                                serde_json::from_value(reply.body["result"].clone()).unwrap_or_default();
                            if let Some(spec) = ScriptedAgent::order(summary.step_index, &markets) {
                                wire.call(id, "place_order", serde_json::to_value(spec).expect("serializable"));
                            }
                        }
                    }
                    "random" => {
                        if let RandomDecision::Submit(spec) = random.decide(&summary.markets, &summary.positions) {
                            wire.call(id, "place_order", serde_json::to_value(spec).expect("serializable"));
                        }
                    }
                    "spam" => {
                        while let Some(reply) = wire.call(id, "get_markets", json!({})) {
                            if reply.kind == MessageType::Error {
                                break;
                            }
                        }
                    }
                    "crash" => {
                        if id > args.after {
                            return ExitCode::from(3);
                        }
                    }
                    "garbage" => {
                        wire.raw("this is not a message");
                        continue;
                    }
                    "sleep" => loop {
                        std::thread::sleep(std::time::Duration::from_secs(3600));
                    },
                    other => {
                        eprintln!("unknown strategy {other:?}");
                        return ExitCode::from(1);
                    }
                }
                wire.send(MessageType::Done, id, json!({}));
            }
            _ => {}
        }
    }
    ExitCode::SUCCESS
}
