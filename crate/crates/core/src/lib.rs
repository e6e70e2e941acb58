//! Deterministic event-driven backtesting for binary prediction-market contracts.
//!
//! Prices are integer cents in `1..=99`, money is integer micro-USD, and all
//! replay is ordered by `(ts, seq)`.

pub mod agent_api;
pub mod agents;
pub mod bridge;
pub mod episode;
pub mod execution;
pub mod fsio;
pub mod metrics;
pub mod orderbook;
pub mod portfolio;
pub mod simulator;
pub mod synth;
pub mod tradelog;
pub mod types;

pub use agent_api::{Agent, AgentContext, AgentError, EpisodeInfo, StepRecord, ToolCall, ToolError};
pub use agents::{agent_by_name, BollingerAgent, NullAgent, RandomAgent};
pub use bridge::{BridgeAgent, BridgeConfig};
pub use episode::{load_episode, write_episode, Episode, EpisodeError, EpisodeMetadata, MarketEvent};
pub use execution::{ExecutionEngine, FeeModel, Fill, OrderSpec};
pub use metrics::{aggregate, compute_metrics, AggregateMetrics, EpisodeMetrics};
pub use orderbook::Book;
pub use portfolio::Portfolio;
pub use simulator::{run_episode, run_episode_observed, EpisodeResult, SimConfig, SimError, World};
pub use synth::{generate_synthetic, SynthConfig};
pub use types::*;
