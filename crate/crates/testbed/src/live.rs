//! Wall-clock driver: nodes on real UDP sockets, HTTP faces on real ports.
//!
//! Nodes keep their logical topology addresses. An [`AddressMap`] translates
//! those to the sockets actually bound, so a whole scenario can run on
//! loopback with ephemeral ports.

use std::collections::{BTreeMap, VecDeque};
use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::thread;
use std::time::{Duration, Instant as WallInstant};

use imsbed_core::endpoint::{Disposition, Instant, NetAddress};
use imsbed_core::harness::{
    CommandRecord, CxRecord, HttpRecord, RunError, Scenario, Trace, TransitionRecord, WireRecord,
    World,
};
use imsbed_core::http::{HttpRequest, HttpResponse};
use imsbed_core::node::{Command, CommandError, Effect, Node, Outbox};
use imsbed_core::sip::{parse_message, serialize_message};
use thiserror::Error;

use crate::http_net::{from_tiny, http_call, http_server, respond_tiny};

const MAX_DATAGRAM: usize = 65_535;

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("socket {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] RunError),
    #[error("no node named {0}")]
    UnknownNode(String),
    #[error("{0}")]
    Command(#[from] CommandError),
}

/// Logical address ↔ bound socket translation.
#[derive(Debug, Default, Clone)]
pub struct AddressMap {
    to_socket: BTreeMap<NetAddress, SocketAddr>,
    to_logical: BTreeMap<SocketAddr, NetAddress>,
}

impl AddressMap {
    pub fn insert(&mut self, logical: NetAddress, socket: SocketAddr) {
        self.to_logical.insert(socket, logical.clone());
        self.to_socket.insert(logical, socket);
    }

    pub fn socket(&self, logical: &NetAddress) -> Option<SocketAddr> {
        if let Some(s) = self.to_socket.get(logical) {
            return Some(*s);
        }
        (logical.host.as_str(), logical.port)
            .to_socket_addrs()
            .ok()?
            .next()
    }

    pub fn logical(&self, socket: &SocketAddr) -> NetAddress {
        self.to_logical
            .get(socket)
            .cloned()
            .unwrap_or_else(|| NetAddress::new(&socket.ip().to_string(), socket.port()))
    }
}

struct LiveNode {
    node: Box<dyn Node>,
    socket: UdpSocket,
    http: Option<tiny_http::Server>,
}

/// Runs nodes against the wall clock and records what it sees.
pub struct LiveDriver {
    nodes: Vec<LiveNode>,
    /// HTTP faces served in-process, by logical address.
    http_index: BTreeMap<NetAddress, usize>,
    addrs: AddressMap,
    names: BTreeMap<NetAddress, String>,
    timeline: VecDeque<(Instant, String, Command)>,
    start: WallInstant,
    seq: u64,
    trace: Trace,
    http_timeout: Duration,
    buf: Vec<u8>,
}

pub fn bind_udp(addr: SocketAddr) -> Result<UdpSocket, LiveError> {
    UdpSocket::bind(addr).map_err(|source| LiveError::Bind {
        addr: addr.to_string(),
        source,
    })
}

impl Default for LiveDriver {
    fn default() -> Self {
        LiveDriver::new()
    }
}

impl LiveDriver {
    pub fn new() -> Self {
        LiveDriver {
            nodes: Vec::new(),
            http_index: BTreeMap::new(),
            addrs: AddressMap::default(),
            names: BTreeMap::new(),
            timeline: VecDeque::new(),
            start: WallInstant::now(),
            seq: 0,
            trace: Trace::default(),
            http_timeout: Duration::from_secs(5),
            buf: vec![0; MAX_DATAGRAM],
        }
    }

    /// Adds a node listening for SIP on `sip` and, when given, serving its
    /// HTTP face on `http` (`logical_http` is the address peers use).
    pub fn add_node(
        &mut self,
        node: Box<dyn Node>,
        sip: SocketAddr,
        http: Option<(NetAddress, SocketAddr)>,
    ) -> Result<SocketAddr, LiveError> {
        let socket = bind_udp(sip)?;
        self.add_node_on(node, socket, http)
    }

    /// Like [`LiveDriver::add_node`] with a socket the caller already bound,
    /// for nodes that must know their port before they are built.
    pub fn add_node_on(
        &mut self,
        node: Box<dyn Node>,
        socket: UdpSocket,
        http: Option<(NetAddress, SocketAddr)>,
    ) -> Result<SocketAddr, LiveError> {
        let bind_err = |source| LiveError::Bind {
            addr: node.address().to_string(),
            source,
        };
        socket.set_nonblocking(true).map_err(bind_err)?;
        let bound = socket.local_addr().map_err(|source| LiveError::Bind {
            addr: node.address().to_string(),
            source,
        })?;
        let logical = node.address().clone();
        self.names.insert(logical.clone(), node.name().to_string());
        self.addrs.insert(logical, bound);
        let server = match http {
            Some((logical_http, at)) => {
                let server = http_server(at).map_err(|source| LiveError::Bind {
                    addr: at.to_string(),
                    source,
                })?;
                if let Some(actual) = server.server_addr().to_ip() {
                    self.addrs.insert(logical_http.clone(), actual);
                }
                self.names.insert(logical_http, node.name().to_string());
                Some(server)
            }
            None => None,
        };
        self.nodes.push(LiveNode {
            node,
            socket,
            http: server,
        });
        Ok(bound)
    }

    /// Assembles `scenario` on loopback with ephemeral ports. HTTP between
    /// nodes of the scenario stays in-process.
    pub fn from_scenario(scenario: &Scenario) -> Result<LiveDriver, LiveError> {
        let world = World::new(scenario.clone())?;
        let parts = world.into_parts();
        let mut d = LiveDriver::new();
        d.trace = parts.trace;
        let loopback: SocketAddr = ([127, 0, 0, 1], 0).into();
        for node in parts.nodes {
            let spec = scenario
                .topology
                .nodes
                .iter()
                .find(|n| n.name == node.name());
            if let Some(h) = spec.and_then(|s| s.http_address()) {
                d.http_index.insert(h.clone(), d.nodes.len());
                d.names.insert(h, node.name().to_string());
            }
            d.add_node(node, loopback, None)?;
        }
        for n in &scenario.topology.nodes {
            d.names.entry(n.address()).or_insert_with(|| n.name.clone());
        }
        d.timeline = parts.timeline.into();
        Ok(d)
    }

    pub fn now(&self) -> Instant {
        Instant(self.start.elapsed().as_millis() as u64)
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(mut self) -> Trace {
        self.trace.end_time = self.now();
        self.trace
    }

    pub fn addresses(&self) -> &AddressMap {
        &self.addrs
    }

    pub fn node<T: Node>(&self, name: &str) -> Option<&T> {
        self.nodes
            .iter()
            .find(|n| n.node.name() == name)
            .and_then(|n| n.node.as_any().downcast_ref::<T>())
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn name_of(&self, addr: &NetAddress) -> String {
        self.names
            .get(addr)
            .cloned()
            .unwrap_or_else(|| addr.to_string())
    }

    pub fn command(&mut self, actor: &str, command: &Command) -> Result<(), LiveError> {
        let i = self
            .nodes
            .iter()
            .position(|n| n.node.name() == actor)
            .ok_or_else(|| LiveError::UnknownNode(actor.into()))?;
        let now = self.now();
        let mut out = Outbox::new();
        let result = self.nodes[i].node.on_command(now, command, &mut out);
        if let Err(e) = &result {
            let seq = self.next_seq();
            self.trace.commands.push(CommandRecord {
                seq,
                time: now,
                actor: actor.into(),
                action: command.name().into(),
                error: Some(e.to_string()),
            });
        }
        self.process(i, &mut out);
        result.map_err(LiveError::from)
    }

    fn process(&mut self, i: usize, out: &mut Outbox) {
        let now = self.now();
        let src_name = self.nodes[i].node.name().to_string();
        for effect in out.drain().collect::<Vec<_>>() {
            match effect {
                Effect::Sip { dst, msg } => {
                    let Some(to) = self.addrs.socket(&dst) else {
                        log::warn!("{src_name}: cannot resolve {dst}");
                        continue;
                    };
                    let bytes = serialize_message(&msg);
                    log::debug!("{src_name} -> {to}: {}", msg.label());
                    if let Err(e) = self.nodes[i].socket.send_to(&bytes, to) {
                        log::warn!("{src_name}: send to {to} failed: {e}");
                    }
                }
                Effect::Cx {
                    hss,
                    request,
                    answer,
                } => {
                    let dst = self.name_of(&hss);
                    let s = self.next_seq();
                    self.trace.cx_events.push(CxRecord::request(
                        s,
                        now,
                        src_name.clone(),
                        dst.clone(),
                        &request,
                    ));
                    let s = self.next_seq();
                    self.trace.cx_events.push(CxRecord::answer(
                        s,
                        now,
                        dst,
                        src_name.clone(),
                        &request,
                        &answer,
                    ));
                }
                Effect::Http { id, dst, request } => {
                    let response = self.http(i, &dst, &request);
                    let s = self.next_seq();
                    let dst_name = self.name_of(&dst);
                    self.trace.http_events.push(HttpRecord::new(
                        s,
                        now,
                        src_name.clone(),
                        dst_name,
                        &request,
                        &response,
                    ));
                    let mut out = Outbox::new();
                    self.nodes[i]
                        .node
                        .on_http_response(now, id, response, &mut out);
                    self.process(i, &mut out);
                }
                Effect::Transition { from, to, cause } => {
                    log::info!("{src_name}: {from} -> {to} ({cause})");
                    let seq = self.next_seq();
                    self.trace.node_transitions.push(TransitionRecord {
                        seq,
                        time: now,
                        node: src_name.clone(),
                        from,
                        to,
                        cause,
                    });
                }
            }
        }
    }

    fn http(&mut self, src: usize, dst: &NetAddress, request: &HttpRequest) -> HttpResponse {
        match self.http_index.get(dst).copied() {
            Some(t) if t != src => {
                let now = self.now();
                let mut out = Outbox::new();
                let resp = self.nodes[t]
                    .node
                    .on_http_request(now, request, &mut out)
                    .unwrap_or_else(|| HttpResponse::error(404, "NotFound"));
                self.process(t, &mut out);
                resp
            }
            _ => {
                let target = self
                    .addrs
                    .socket(dst)
                    .map(|s| NetAddress::new(&s.ip().to_string(), s.port()))
                    .unwrap_or_else(|| dst.clone());
                http_call(&target, request, self.http_timeout)
            }
        }
    }

    /// Does everything currently due. Returns whether anything happened.
    pub fn step(&mut self) -> bool {
        let mut busy = false;
        let now = self.now();
        while self.timeline.front().is_some_and(|(at, _, _)| *at <= now) {
            let Some((_, actor, command)) = self.timeline.pop_front() else {
                break;
            };
            busy = true;
            if let Err(e) = self.command(&actor, &command) {
                log::warn!("{actor}: {} refused: {e}", command.name());
            }
        }
        for i in 0..self.nodes.len() {
            loop {
                let (len, from) = match self.nodes[i].socket.recv_from(&mut self.buf) {
                    Ok(r) => r,
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => break,
                    Err(e) => {
                        log::warn!("{}: receive failed: {e}", self.nodes[i].node.name());
                        break;
                    }
                };
                busy = true;
                let src = self.addrs.logical(&from);
                let msg = match parse_message(&self.buf[..len]) {
                    Ok(m) => m,
                    Err(e) => {
                        log::warn!(
                            "{}: dropped malformed datagram from {src}: {e}",
                            self.nodes[i].node.name()
                        );
                        continue;
                    }
                };
                let now = self.now();
                let seq = self.next_seq();
                let dst = self.nodes[i].node.address().clone();
                self.trace.wire_events.push(WireRecord::new(
                    seq,
                    now,
                    self.name_of(&src),
                    self.name_of(&dst),
                    &msg,
                    Disposition::Delivered,
                ));
                let mut out = Outbox::new();
                self.nodes[i].node.on_sip(now, &src, msg, &mut out);
                self.process(i, &mut out);
            }
        }
        for i in 0..self.nodes.len() {
            let now = self.now();
            if self.nodes[i].node.next_deadline().is_some_and(|d| d <= now) {
                busy = true;
                let mut out = Outbox::new();
                self.nodes[i].node.on_timer(now, &mut out);
                self.process(i, &mut out);
            }
        }
        for i in 0..self.nodes.len() {
            let incoming = match &self.nodes[i].http {
                Some(server) => server.try_recv().ok().flatten(),
                None => None,
            };
            if let Some(mut raw) = incoming {
                busy = true;
                let req = from_tiny(&mut raw);
                let now = self.now();
                let mut out = Outbox::new();
                let resp = self.nodes[i]
                    .node
                    .on_http_request(now, &req, &mut out)
                    .unwrap_or_else(|| HttpResponse::error(404, "NotFound"));
                let seq = self.next_seq();
                let name = self.nodes[i].node.name().to_string();
                self.trace.http_events.push(HttpRecord::new(
                    seq,
                    now,
                    "client".into(),
                    name,
                    &req,
                    &resp,
                ));
                respond_tiny(raw, resp);
                self.process(i, &mut out);
            }
        }
        for i in 0..self.nodes.len() {
            let mut out = Outbox::new();
            let now = self.now();
            self.nodes[i].node.poll(now, &mut out);
            busy |= !out.is_empty();
            self.process(i, &mut out);
        }
        busy
    }

    fn idle_wait(&self) {
        let now = self.now();
        let next = self
            .nodes
            .iter()
            .filter_map(|n| n.node.next_deadline())
            .chain(self.timeline.front().map(|(at, _, _)| *at))
            .min();
        let ms = next.map(|t| t.since(now)).unwrap_or(5).clamp(1, 5);
        thread::sleep(Duration::from_millis(ms));
    }

    /// Same notion as the virtual-time world, minus the network queue,
    /// which is not observable here.
    pub fn is_quiescent(&self) -> bool {
        self.timeline.is_empty()
            && self
                .nodes
                .iter()
                .all(|n| n.node.next_activity().is_none() && n.node.transactions_settled())
    }

    /// Steps until `done` holds or `limit` of wall time passes. Returns
    /// whether `done` held.
    pub fn run_until(
        &mut self,
        limit: Duration,
        mut done: impl FnMut(&LiveDriver) -> bool,
    ) -> bool {
        let until = WallInstant::now() + limit;
        loop {
            let busy = self.step();
            if done(self) {
                return true;
            }
            if WallInstant::now() >= until {
                return false;
            }
            if !busy {
                self.idle_wait();
            }
        }
    }

    /// Runs until quiescent or `limit` passes.
    pub fn run_to_quiescence(&mut self, limit: Duration) -> bool {
        self.run_until(limit, |d| d.is_quiescent())
    }

    /// Serves forever.
    pub fn serve(&mut self) -> ! {
        loop {
            if !self.step() {
                self.idle_wait();
            }
        }
    }
}
