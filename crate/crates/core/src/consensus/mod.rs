//! Consortium authority consensus: round-robin proposers, quorum votes,
//! skip-on-timeout, and a deterministic simulator with fault injection.

mod config;
mod node;
mod scenario;
mod sim;

pub use config::{
    quorum_for, vote_message, Authority, AuthorityConfig, AuthorityId, ConfigError, Vote,
    DEFAULT_ROUND_DURATION,
};
pub use node::{select_batch, AuthorityNode, Message, Outbox, Target};
pub use scenario::{parse_scenario, ScenarioError};
pub use sim::{
    authority_keys, check_safety, organization_key, recipient_key, simulate, simulate_with,
    standard_workload, Behavior, Fault, FaultSchedule, Network, NodeSummary, RoundOutcome,
    RoundRecord, SafetyViolation, Scenario, SimError, SimulationTrace, SkipReason, Workload,
    DEFAULT_MAX_BATCH,
};
