//! Scenario runner, trace recording, flow matching and ladder rendering.

pub mod assemble;
pub mod builtin;
mod flow;
mod ladder;
mod scenario;
mod trace;
mod world;

pub use builtin::{builtin, builtin_names, builtin_scenarios};
pub use flow::{assert_flow, FlowPattern, FlowResult, FlowStep, MatchMode, PatternError};
pub use ladder::render_ladder;
pub use scenario::{
    ActorSpec, GroupFixture, LocationFixture, RuleFixture, Scenario, ScenarioError,
    SubscriberFixture, TimelineEntry, DEFAULT_T_MAX_MS,
};
pub use trace::{
    CommandRecord, CxRecord, EventRef, HttpRecord, Trace, TraceNode, TransitionRecord, WireRecord,
};
pub use world::{check, run, LiveParts, RunError, World};
