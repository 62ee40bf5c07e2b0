use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::flow::{FlowPattern, PatternError};
use crate::endpoint::{Instant, NetAddress, Role, TimerConfig, Topology, TopologyError};
use crate::exam::Channel;
use crate::hss::{HssStore, ProfileRole, SubscriberProfile};
use crate::ims::{TriggerCondition, TriggerRule};
use crate::node::Command;
use crate::sip::SipUri;
use crate::xdms::{lists_to_xml, DocKey, GroupList, XdmsStore, AUID_RESOURCE_LISTS};

const RESOURCE_LISTS_CT: &str = "application/resource-lists+xml";

/// Virtual-time ceiling used when a scenario does not set one: two hours.
pub const DEFAULT_T_MAX_MS: u64 = 2 * 3600 * 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscriberFixture {
    pub impu: SipUri,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impi: Option<String>,
    pub passkey: String,
    #[serde(default)]
    pub roles: BTreeSet<ProfileRole>,
}

impl SubscriberFixture {
    pub fn new(impu: &str, passkey: &str) -> Self {
        SubscriberFixture {
            impu: SipUri::parse(impu).expect("fixture identity"),
            impi: None,
            passkey: passkey.into(),
            roles: BTreeSet::new(),
        }
    }

    pub fn with_role(mut self, role: ProfileRole) -> Self {
        self.roles.insert(role);
        self
    }

    /// Private identity: explicit, or `user@host` of the public one.
    pub fn private_identity(&self) -> String {
        self.impi.clone().unwrap_or_else(|| {
            let aor = self.impu.aor_key();
            aor.trim_start_matches("sip:").to_string()
        })
    }
}

/// A trigger rule whose target is named by topology node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFixture {
    pub priority: i32,
    pub condition: TriggerCondition,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupFixture {
    pub owner: SipUri,
    pub doc: String,
    pub uri: SipUri,
    pub members: Vec<SipUri>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationFixture {
    pub server: String,
    pub aor: SipUri,
    pub contact: SipUri,
}

/// Settings for a UA node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub node: String,
    pub identity: SipUri,
    #[serde(default)]
    pub passkey: String,
    /// First hop: a P-CSCF in IMS scenarios, a proxy or redirect server in
    /// standalone ones. Defaults to the first such node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outbound: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_answer: Option<BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Channel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires: Option<u32>,
}

impl ActorSpec {
    pub fn new(node: &str, identity: &str, passkey: &str) -> Self {
        ActorSpec {
            node: node.into(),
            identity: SipUri::parse(identity).expect("actor identity"),
            passkey: passkey.into(),
            outbound: None,
            auto_answer: None,
            channel: None,
            refresh: None,
            expires: None,
        }
    }
}

fn empty_args() -> serde_json::Value {
    serde_json::Value::Object(serde_json::Map::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub at: Instant,
    pub actor: String,
    pub action: String,
    #[serde(default = "empty_args")]
    pub args: serde_json::Value,
}

impl TimelineEntry {
    pub fn new(at_ms: u64, actor: &str, command: &Command) -> Self {
        let v = serde_json::to_value(command).unwrap_or_default();
        TimelineEntry {
            at: Instant(at_ms),
            actor: actor.into(),
            action: v["action"].as_str().unwrap_or_default().into(),
            args: v.get("args").cloned().unwrap_or_else(empty_args),
        }
    }

    pub fn command(&self) -> Result<Command, ScenarioError> {
        let v = serde_json::json!({ "action": self.action, "args": self.args });
        serde_json::from_value(v).map_err(|e| ScenarioError::BadAction {
            actor: self.actor.clone(),
            action: self.action.clone(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub topology: Topology,
    #[serde(default)]
    pub timers: TimerConfig,
    #[serde(default)]
    pub subscribers: Vec<SubscriberFixture>,
    /// Trigger rules added to every subscriber profile.
    #[serde(default)]
    pub service_rules: Vec<RuleFixture>,
    #[serde(default)]
    pub groups: Vec<GroupFixture>,
    #[serde(default)]
    pub locations: Vec<LocationFixture>,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub timeline: Vec<TimelineEntry>,
    #[serde(default)]
    pub expectations: Vec<FlowPattern>,
    /// Seeds the loss generator. Overrides the topology's loss seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_max")]
    pub t_max: Instant,
}

fn default_t_max() -> Instant {
    Instant(DEFAULT_T_MAX_MS)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("invalid timers: {0}")]
    Timers(&'static str),
    #[error("timeline is not sorted by time at entry {0}")]
    UnsortedTimeline(usize),
    #[error("{0} is not a node in the topology")]
    UnknownNode(String),
    #[error("{node} is a {role} and cannot be an actor")]
    NotAnActor { node: String, role: Role },
    #[error("{actor} cannot perform {action}: {reason}")]
    BadAction {
        actor: String,
        action: String,
        reason: String,
    },
    #[error("scenario needs a {0} node")]
    MissingRole(Role),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

impl Scenario {
    pub fn new(name: &str, topology: Topology) -> Self {
        Scenario {
            name: name.into(),
            description: String::new(),
            topology,
            timers: TimerConfig::default(),
            subscribers: Vec::new(),
            service_rules: Vec::new(),
            groups: Vec::new(),
            locations: Vec::new(),
            actors: Vec::new(),
            timeline: Vec::new(),
            expectations: Vec::new(),
            seed: 0,
            t_max: default_t_max(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn at(mut self, at_ms: u64, actor: &str, command: Command) -> Self {
        self.timeline
            .push(TimelineEntry::new(at_ms, actor, &command));
        self
    }

    pub fn expect(mut self, pattern: FlowPattern) -> Self {
        self.expectations.push(pattern);
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.topology.validate()?;
        self.timers.validate().map_err(ScenarioError::Timers)?;
        if let Some(i) = self.timeline.windows(2).position(|w| w[0].at > w[1].at) {
            return Err(ScenarioError::UnsortedTimeline(i + 1));
        }
        for e in &self.timeline {
            let node = self
                .topology
                .node(&e.actor)
                .ok_or_else(|| ScenarioError::UnknownNode(e.actor.clone()))?;
            if !matches!(node.role, Role::Ua) {
                return Err(ScenarioError::NotAnActor {
                    node: e.actor.clone(),
                    role: node.role,
                });
            }
            e.command()?;
        }
        for a in &self.actors {
            self.topology
                .node(&a.node)
                .ok_or_else(|| ScenarioError::UnknownNode(a.node.clone()))?;
            if let Some(o) = &a.outbound {
                self.topology
                    .node(o)
                    .ok_or_else(|| ScenarioError::UnknownNode(o.clone()))?;
            }
        }
        for r in &self.service_rules {
            self.topology
                .node(&r.target)
                .ok_or_else(|| ScenarioError::UnknownNode(r.target.clone()))?;
        }
        for l in &self.locations {
            self.topology
                .node(&l.server)
                .ok_or_else(|| ScenarioError::UnknownNode(l.server.clone()))?;
        }
        for p in &self.expectations {
            if p.steps.is_empty() {
                return Err(PatternError::Empty(p.name.clone()).into());
            }
            for s in &p.steps {
                for e in [&s.src, &s.dst] {
                    let known = self
                        .topology
                        .nodes
                        .iter()
                        .any(|n| n.name == *e || n.role.as_str() == e.as_str());
                    if !known {
                        return Err(PatternError::UnknownEndpoint {
                            pattern: p.name.clone(),
                            endpoint: e.clone(),
                        }
                        .into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn address_of(&self, node: &str) -> Result<NetAddress, ScenarioError> {
        self.topology
            .node(node)
            .map(|n| n.address())
            .ok_or_else(|| ScenarioError::UnknownNode(node.into()))
    }

    pub fn actor(&self, node: &str) -> Option<&ActorSpec> {
        self.actors.iter().find(|a| a.node == node)
    }

    /// Short digest of everything except the seed, so traces of the same
    /// configuration under different seeds share a hash.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).unwrap_or_default();
        if let Some(o) = v.as_object_mut() {
            o.remove("seed");
        }
        let text = serde_json::to_string(&v).unwrap_or_default();
        crate::digest::short_hex(&[text.as_bytes()], 8)
    }

    /// HSS contents described by the subscriber fixtures. Every profile
    /// carries the scenario's service rules.
    pub fn hss_store(&self) -> Result<HssStore, ScenarioError> {
        let mut store = HssStore::new();
        for s in &self.subscribers {
            let mut profile =
                SubscriberProfile::new(&s.private_identity(), s.impu.clone(), &s.passkey);
            for r in &s.roles {
                profile = profile.with_role(*r);
            }
            for r in &self.service_rules {
                profile = profile.with_rule(TriggerRule {
                    priority: r.priority,
                    condition: r.condition.clone(),
                    target: self.address_of(&r.target)?,
                });
            }
            store.provision(profile).map_err(fixture_error)?;
        }
        Ok(store)
    }

    /// XDMS contents described by the group fixtures.
    pub fn xdms_store(&self) -> Result<XdmsStore, ScenarioError> {
        let mut store = XdmsStore::new();
        for g in &self.groups {
            let xml = lists_to_xml(&[GroupList::new(g.uri.clone(), g.members.clone())]);
            store
                .put(
                    DocKey::new(AUID_RESOURCE_LISTS, &g.owner.aor_key(), &g.doc),
                    RESOURCE_LISTS_CT,
                    xml.into_bytes(),
                    None,
                )
                .map_err(fixture_error)?;
        }
        Ok(store)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn from_json(text: &str) -> Result<Scenario, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl core::fmt::Display for Scenario {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{} ({} nodes, {} timeline entries)",
            self.name,
            self.topology.nodes.len(),
            self.timeline.len()
        )
    }
}

pub(crate) fn missing(role: Role) -> ScenarioError {
    ScenarioError::MissingRole(role)
}

fn fixture_error(e: impl core::fmt::Display) -> ScenarioError {
    ScenarioError::Fixture(format!("{e}"))
}
