use alloc::boxed::Box;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

use thiserror::Error;

use super::assemble::{build_node, LocalBackends};
use super::flow::{assert_flow, FlowResult};
use super::scenario::{missing, Scenario, ScenarioError};
use super::trace::{
    CommandRecord, CxRecord, HttpRecord, Trace, TraceNode, TransitionRecord, WireRecord,
};
use crate::endpoint::{Instant, LossConfig, NetAddress, NodeSpec, Role, SimNetwork};
use crate::hss::{HssStore, LocalCx};
use crate::http::{HttpRequest, HttpResponse};
use crate::node::{Command, CommandError, Effect, Node, Outbox};
use crate::xdms::XdmsStore;

/// How many driver steps may run at one instant before the run is declared
/// stuck. Guards against a node whose deadline never advances.
const MAX_STEPS_PER_INSTANT: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("configuration invalid: {0}")]
    ConfigInvalid(#[from] ScenarioError),
    #[error("scenario stuck at {at}: {reason}")]
    ScenarioStuck { at: Instant, reason: String },
    #[error("no node named {0}")]
    UnknownNode(String),
}

struct Pending {
    at: Instant,
    actor: String,
    command: Command,
}

/// Nodes and stores of an assembled scenario, for drivers other than the
/// virtual-time loop.
pub struct LiveParts {
    pub nodes: Vec<Box<dyn Node>>,
    pub timeline: Vec<(Instant, String, Command)>,
    pub trace: Trace,
    pub hss: Rc<RefCell<HssStore>>,
    pub xdms: Rc<RefCell<XdmsStore>>,
}

/// Virtual-time driver: owns every node, the simulated network and the
/// shared HSS and XDMS stores, and records the trace.
pub struct World {
    scenario: Scenario,
    nodes: Vec<Box<dyn Node>>,
    sip_index: BTreeMap<NetAddress, usize>,
    http_index: BTreeMap<NetAddress, usize>,
    names: BTreeMap<NetAddress, String>,
    net: SimNetwork,
    hss: Rc<RefCell<HssStore>>,
    hss_up: Rc<Cell<bool>>,
    xdms: Rc<RefCell<XdmsStore>>,
    timeline: VecDeque<Pending>,
    now: Instant,
    seq: u64,
    steps_at_now: u32,
    trace: Trace,
}

impl World {
    pub fn new(scenario: Scenario) -> Result<World, RunError> {
        scenario.validate()?;
        let topo = &scenario.topology;

        let mut net = SimNetwork::new(LossConfig {
            p: topo.loss.p,
            seed: scenario.seed,
        });
        for ((a, b), ms) in topo.latencies() {
            net.set_latency(&a, &b, ms);
        }

        let hss = Rc::new(RefCell::new(scenario.hss_store()?));
        let hss_up = Rc::new(Cell::new(true));
        let xdms = Rc::new(RefCell::new(scenario.xdms_store()?));
        let ims = topo.first(Role::Scscf).is_some();
        let hss_addr = topo
            .first(Role::Hss)
            .map(NodeSpec::address)
            .unwrap_or_else(|| NetAddress::new("hss.invalid", 3868));
        if ims && topo.first(Role::Hss).is_none() {
            return Err(missing(Role::Hss).into());
        }

        let backends = LocalBackends {
            cx: LocalCx::new(hss.clone(), hss_addr).with_availability(hss_up.clone()),
            xdms: xdms.clone(),
        };
        let mut nodes: Vec<Box<dyn Node>> = Vec::new();
        let mut sip_index = BTreeMap::new();
        let mut http_index = BTreeMap::new();
        let mut names = BTreeMap::new();
        for spec in &topo.nodes {
            names.insert(spec.address(), spec.name.clone());
            if let Some(h) = spec.http_address() {
                names.insert(h, spec.name.clone());
            }
            let Some(node) = build_node(&scenario, spec, &backends)? else {
                continue;
            };
            if let Some(h) = spec.http_address() {
                http_index.insert(h, nodes.len());
            }
            sip_index.insert(spec.address(), nodes.len());
            nodes.push(node);
        }

        let mut timeline = VecDeque::new();
        for e in &scenario.timeline {
            timeline.push_back(Pending {
                at: e.at,
                actor: e.actor.clone(),
                command: e.command()?,
            });
        }

        let trace = Trace {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            config_hash: scenario.config_hash(),
            nodes: topo
                .nodes
                .iter()
                .map(|n| TraceNode {
                    name: n.name.clone(),
                    role: n.role,
                    address: n.address(),
                })
                .collect(),
            ..Trace::default()
        };

        Ok(World {
            scenario,
            nodes,
            sip_index,
            http_index,
            names,
            net,
            hss,
            hss_up,
            xdms,
            timeline,
            now: Instant::ZERO,
            seq: 0,
            steps_at_now: 0,
            trace,
        })
    }

    pub fn now(&self) -> Instant {
        self.now
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn hss(&self) -> core::cell::Ref<'_, HssStore> {
        self.hss.borrow()
    }

    pub fn xdms(&self) -> core::cell::Ref<'_, XdmsStore> {
        self.xdms.borrow()
    }

    /// Switch that makes every Cx-lite call fail while cleared.
    pub fn set_hss_available(&self, up: bool) {
        self.hss_up.set(up);
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name() == name)
    }

    pub fn node<T: Node>(&self, name: &str) -> Option<&T> {
        let i = self.index_of(name)?;
        self.nodes[i].as_any().downcast_ref::<T>()
    }

    pub fn node_mut<T: Node>(&mut self, name: &str) -> Option<&mut T> {
        let i = self.index_of(name)?;
        self.nodes[i].as_any_mut().downcast_mut::<T>()
    }

    fn name_of(&self, addr: &NetAddress) -> String {
        self.names
            .get(addr)
            .cloned()
            .unwrap_or_else(|| addr.to_string())
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    /// Runs a command on `actor` now, as the timeline would.
    pub fn command(&mut self, actor: &str, command: &Command) -> Result<(), RunError> {
        let i = self
            .index_of(actor)
            .ok_or_else(|| RunError::UnknownNode(actor.into()))?;
        let mut out = Outbox::new();
        let result = self.nodes[i].on_command(self.now, command, &mut out);
        self.record_command(actor, command, result.as_ref().err());
        self.process(i, &mut out);
        result.map_err(|e| RunError::ScenarioStuck {
            at: self.now,
            reason: e.to_string(),
        })
    }

    fn record_command(&mut self, actor: &str, command: &Command, err: Option<&CommandError>) {
        if let Some(e) = err {
            let seq = self.next_seq();
            self.trace.commands.push(CommandRecord {
                seq,
                time: self.now,
                actor: actor.into(),
                action: command.name().into(),
                error: Some(e.to_string()),
            });
        }
    }

    /// Carries out the effects node `i` produced.
    fn process(&mut self, i: usize, out: &mut Outbox) {
        let effects: Vec<Effect> = out.drain().collect();
        let src_addr = self.nodes[i].address().clone();
        let src_name = self.nodes[i].name().to_string();
        for effect in effects {
            match effect {
                Effect::Sip { dst, msg } => self.net.enqueue(self.now, src_addr.clone(), dst, msg),
                Effect::Cx {
                    hss,
                    request,
                    answer,
                } => {
                    let dst = self.name_of(&hss);
                    let s = self.next_seq();
                    self.trace.cx_events.push(CxRecord::request(
                        s,
                        self.now,
                        src_name.clone(),
                        dst.clone(),
                        &request,
                    ));
                    let s = self.next_seq();
                    self.trace.cx_events.push(CxRecord::answer(
                        s,
                        self.now,
                        dst,
                        src_name.clone(),
                        &request,
                        &answer,
                    ));
                }
                Effect::Http { id, dst, request } => self.http(i, id, dst, request),
                Effect::Transition { from, to, cause } => {
                    let seq = self.next_seq();
                    self.trace.node_transitions.push(TransitionRecord {
                        seq,
                        time: self.now,
                        node: src_name.clone(),
                        from,
                        to,
                        cause,
                    });
                }
            }
        }
    }

    fn http(&mut self, src: usize, id: u64, dst: NetAddress, request: HttpRequest) {
        let mut out = Outbox::new();
        let target = self.http_index.get(&dst).copied();
        let response = target
            .and_then(|t| self.nodes[t].on_http_request(self.now, &request, &mut out))
            .unwrap_or_else(|| HttpResponse::error(503, "Unreachable"));
        let seq = self.next_seq();
        let src_name = self.nodes[src].name().to_string();
        let dst_name = self.name_of(&dst);
        self.trace.http_events.push(HttpRecord::new(
            seq, self.now, src_name, dst_name, &request, &response,
        ));
        if let Some(t) = target {
            self.process(t, &mut out);
        }
        let mut out = Outbox::new();
        self.nodes[src].on_http_response(self.now, id, response, &mut out);
        self.process(src, &mut out);
    }

    /// Earliest instant at which anything is scheduled.
    fn next_time(&self) -> Option<Instant> {
        let timeline = self.timeline.front().map(|p| p.at);
        let deadlines = self.nodes.iter().filter_map(|n| n.next_deadline());
        timeline
            .into_iter()
            .chain(self.net.next_delivery())
            .chain(deadlines)
            .min()
    }

    /// Nothing left to do except housekeeping such as registration refresh.
    pub fn is_quiescent(&self) -> bool {
        self.timeline.is_empty()
            && self.net.in_flight() == 0
            && self
                .nodes
                .iter()
                .all(|n| n.next_activity().is_none() && n.transactions_settled())
    }

    /// Processes everything due at `self.now`.
    fn step(&mut self) {
        while self.timeline.front().is_some_and(|p| p.at <= self.now) {
            let Some(p) = self.timeline.pop_front() else {
                break;
            };
            if let Some(i) = self.index_of(&p.actor) {
                let mut out = Outbox::new();
                let result = self.nodes[i].on_command(self.now, &p.command, &mut out);
                self.record_command(&p.actor, &p.command, result.as_ref().err());
                self.process(i, &mut out);
            }
        }
        let mut seq = self.seq;
        let delivered = self.net.transport_step(self.now, &mut seq);
        self.seq = seq;
        for ev in delivered {
            let src = self.name_of(&ev.src);
            let dst = self.name_of(&ev.dst);
            let record = WireRecord::new(ev.seq, ev.time, src, dst, &ev.msg, ev.disposition);
            let ok = record.delivered();
            self.trace.wire_events.push(record);
            if !ok {
                continue;
            }
            if let Some(&i) = self.sip_index.get(&ev.dst) {
                let mut out = Outbox::new();
                self.nodes[i].on_sip(self.now, &ev.src, ev.msg, &mut out);
                self.process(i, &mut out);
            }
        }
        for i in 0..self.nodes.len() {
            if self.nodes[i].next_deadline().is_some_and(|d| d <= self.now) {
                let mut out = Outbox::new();
                self.nodes[i].on_timer(self.now, &mut out);
                self.process(i, &mut out);
            }
        }
        for i in 0..self.nodes.len() {
            let mut out = Outbox::new();
            self.nodes[i].poll(self.now, &mut out);
            self.process(i, &mut out);
        }
    }

    fn advance_to(&mut self, t: Instant) -> Result<(), RunError> {
        if t > self.now {
            self.now = t;
            self.steps_at_now = 0;
        }
        self.steps_at_now += 1;
        if self.steps_at_now > MAX_STEPS_PER_INSTANT {
            return Err(RunError::ScenarioStuck {
                at: self.now,
                reason: "no progress in virtual time".into(),
            });
        }
        self.step();
        Ok(())
    }

    /// Processes every event scheduled up to and including `t`, then leaves
    /// the clock at `t`.
    pub fn run_until(&mut self, t: Instant) -> Result<(), RunError> {
        while let Some(next) = self.next_time().filter(|n| *n <= t) {
            self.advance_to(next.max(self.now))?;
        }
        if t > self.now {
            self.now = t;
            self.steps_at_now = 0;
        }
        self.trace.end_time = self.now;
        Ok(())
    }

    /// Runs until quiescence. Fails if that does not happen by `t_max`.
    pub fn run_to_quiescence(&mut self) -> Result<(), RunError> {
        let t_max = self.scenario.t_max;
        while !self.is_quiescent() {
            let Some(next) = self.next_time() else {
                return Err(RunError::ScenarioStuck {
                    at: self.now,
                    reason: "transactions open with nothing scheduled".into(),
                });
            };
            if next > t_max {
                return Err(RunError::ScenarioStuck {
                    at: self.now,
                    reason: format!("not quiescent by t_max {t_max}"),
                });
            }
            self.advance_to(next.max(self.now))?;
        }
        self.trace.end_time = self.now;
        Ok(())
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Hands the assembled nodes and fixtures to a wall-clock driver.
    pub fn into_parts(self) -> LiveParts {
        LiveParts {
            nodes: self.nodes,
            timeline: self
                .timeline
                .into_iter()
                .map(|p| (p.at, p.actor, p.command))
                .collect(),
            trace: self.trace,
            hss: self.hss,
            xdms: self.xdms,
        }
    }

    /// Checks every bundled expectation against the trace so far.
    pub fn check_expectations(&self) -> Vec<(String, FlowResult)> {
        check(&self.scenario, &self.trace)
    }
}

pub fn check(scenario: &Scenario, trace: &Trace) -> Vec<(String, FlowResult)> {
    scenario
        .expectations
        .iter()
        .map(|p| (p.name.clone(), assert_flow(trace, p)))
        .collect()
}

/// Runs `scenario` to quiescence in virtual time and returns its trace.
pub fn run(scenario: &Scenario) -> Result<Trace, RunError> {
    let mut world = World::new(scenario.clone())?;
    world.run_to_quiescence()?;
    Ok(world.into_trace())
}
