use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::rc::Rc;
use core::cell::RefCell;

use super::scenario::{missing, Scenario, ScenarioError};
use crate::endpoint::{NetAddress, NodeSpec, Role};
use crate::exam::{ExamAs, ExamAsConfig};
use crate::hss::{CxClient, LocalCx};
use crate::ims::{Icscf, Pcscf, ProxyServer, RedirectServer, Scscf, ScscfConfig};
use crate::node::Node;
use crate::sip::SipUri;
use crate::ua::{SimpleUa, UaConfig, UaNode, EXAM_SERVICE_USER};
use crate::xdms::{LocalXdms, XdmsClient, XdmsNode, XdmsStore};
use crate::HOME_DOMAIN;

/// Where nodes reach the HSS and the XDMS document store.
pub trait Backends {
    fn cx(&self) -> Box<dyn CxClient>;

    fn xdms_client(&self) -> Box<dyn XdmsClient>;

    /// Store an XDMS node serves from.
    fn xdms_store(&self) -> Rc<RefCell<XdmsStore>>;

    /// Whether nodes may only send to topology addresses. Deployed nodes
    /// also answer user agents that are not part of the topology.
    fn closed_topology(&self) -> bool {
        true
    }
}

/// In-process backends over shared stores.
pub struct LocalBackends {
    pub cx: LocalCx,
    pub xdms: Rc<RefCell<XdmsStore>>,
}

impl Backends for LocalBackends {
    fn cx(&self) -> Box<dyn CxClient> {
        Box::new(self.cx.clone())
    }

    fn xdms_client(&self) -> Box<dyn XdmsClient> {
        Box::new(LocalXdms(self.xdms.clone()))
    }

    fn xdms_store(&self) -> Rc<RefCell<XdmsStore>> {
        self.xdms.clone()
    }
}

fn scoped<N>(
    node: N,
    directory: &Option<BTreeSet<NetAddress>>,
    restrict: fn(N, BTreeSet<NetAddress>) -> N,
) -> N {
    match directory {
        Some(d) => restrict(node, d.clone()),
        None => node,
    }
}

fn home_uri(user: &str) -> SipUri {
    SipUri::new(Some(user), HOME_DOMAIN)
}

/// Builds the state machine for one topology entry. HSS entries have no
/// SIP face and yield `None`.
pub fn build_node(
    scenario: &Scenario,
    spec: &NodeSpec,
    backends: &dyn Backends,
) -> Result<Option<Box<dyn Node>>, ScenarioError> {
    let topo = &scenario.topology;
    let timers = scenario.timers;
    let directory = backends.closed_topology().then(|| topo.directory());
    let addr = spec.address();
    let first_addr = |role: Role| {
        topo.first(role)
            .map(NodeSpec::address)
            .ok_or_else(|| missing(role))
    };
    let scscfs: BTreeMap<_, NetAddress> = topo
        .by_role(Role::Scscf)
        .map(|n| (n.name.clone(), n.address()))
        .collect();
    let node: Box<dyn Node> = match spec.role {
        Role::Hss => return Ok(None),
        Role::Pcscf => Box::new(scoped(
            Pcscf::new(&spec.name, addr, first_addr(Role::Icscf)?, timers)
                .with_core_peers(scscfs.values().cloned()),
            &directory,
            Pcscf::with_directory,
        )),
        Role::Icscf => Box::new(scoped(
            Icscf::new(&spec.name, addr, backends.cx(), scscfs, timers),
            &directory,
            Icscf::with_directory,
        )),
        Role::Scscf => {
            let app_servers: BTreeSet<NetAddress> = topo
                .nodes
                .iter()
                .filter(|n| matches!(n.role, Role::As | Role::Xdms))
                .map(NodeSpec::address)
                .collect();
            let cfg = ScscfConfig {
                scscf_name: spec.name.clone(),
                home_domain: HOME_DOMAIN.into(),
                xdms: first_addr(Role::Xdms)?,
                app_servers,
                timers,
            };
            Box::new(scoped(
                Scscf::new(&spec.name, addr, backends.cx(), cfg),
                &directory,
                Scscf::with_directory,
            ))
        }
        Role::Xdms => {
            let mut n = scoped(
                XdmsNode::new(&spec.name, addr, backends.xdms_store(), timers),
                &directory,
                XdmsNode::with_directory,
            );
            if let Some(h) = spec.http_address() {
                n = n.with_http(h);
            }
            Box::new(n)
        }
        Role::As => {
            let cfg = ExamAsConfig {
                service_uri: home_uri(EXAM_SERVICE_USER),
                scscf: first_addr(Role::Scscf)?,
                timers,
            };
            Box::new(scoped(
                ExamAs::new(&spec.name, addr, backends.cx(), backends.xdms_client(), cfg),
                &directory,
                ExamAs::with_directory,
            ))
        }
        Role::Proxy => {
            let mut p = scoped(
                ProxyServer::new(&spec.name, addr, timers),
                &directory,
                ProxyServer::with_directory,
            );
            for l in scenario.locations.iter().filter(|l| l.server == spec.name) {
                p = p.with_location(&l.aor, l.contact.clone());
            }
            Box::new(p)
        }
        Role::Redirect => {
            let mut r = RedirectServer::new(&spec.name, addr, timers);
            for l in scenario.locations.iter().filter(|l| l.server == spec.name) {
                r = r.with_location(&l.aor, l.contact.clone());
            }
            Box::new(r)
        }
        Role::Ua => build_ua(scenario, spec, &directory)?,
    };
    Ok(Some(node))
}

fn build_ua(
    scenario: &Scenario,
    spec: &NodeSpec,
    directory: &Option<BTreeSet<NetAddress>>,
) -> Result<Box<dyn Node>, ScenarioError> {
    let topo = &scenario.topology;
    let timers = scenario.timers;
    let ims = topo.first(Role::Scscf).is_some();
    let actor = scenario.actor(&spec.name);
    let identity = actor
        .map(|a| a.identity.clone())
        .unwrap_or_else(|| home_uri(&spec.name));
    let first_of = |roles: &[Role]| {
        topo.nodes
            .iter()
            .find(|n| roles.contains(&n.role))
            .map(NodeSpec::address)
    };
    let outbound = match actor.and_then(|a| a.outbound.as_deref()) {
        Some(name) => Some(scenario.address_of(name)?),
        None if ims => first_of(&[Role::Pcscf]),
        None => first_of(&[Role::Proxy, Role::Redirect]),
    };
    let local = spec.address();
    if !ims {
        // Without a first hop the UA talks to peers directly.
        let outbound = outbound.unwrap_or_else(|| local.clone());
        return Ok(Box::new(scoped(
            SimpleUa::new(&spec.name, identity, local, outbound, timers),
            directory,
            SimpleUa::with_directory,
        )));
    }
    let pcscf = outbound.ok_or_else(|| missing(Role::Pcscf))?;
    let mut cfg = UaConfig::new(
        identity,
        actor.map(|a| a.passkey.as_str()).unwrap_or(""),
        pcscf,
        local,
    );
    if let Some(a) = actor {
        cfg.auto_answer = a.auto_answer.clone();
        if let Some(c) = a.channel {
            cfg.channel = c;
        }
        if let Some(r) = a.refresh {
            cfg.refresh = r;
        }
        if let Some(e) = a.expires {
            cfg.expires = e;
        }
    }
    cfg.as_http = topo.first(Role::As).and_then(NodeSpec::http_address);
    Ok(Box::new(scoped(
        UaNode::new(&spec.name, cfg, timers),
        directory,
        UaNode::with_directory,
    )))
}
