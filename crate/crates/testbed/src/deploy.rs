//! Running single topology nodes as standalone processes.

use std::cell::RefCell;
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::rc::Rc;

use imsbed_core::endpoint::{NetAddress, Role};
use imsbed_core::harness::assemble::{build_node, Backends};
use imsbed_core::harness::{Scenario, ScenarioError};
use imsbed_core::hss::CxClient;
use imsbed_core::xdms::{XdmsClient, XdmsStore};
use thiserror::Error;

use crate::cx_net::{HssService, TcpCx};
use crate::http_net::HttpXdms;
use crate::live::{LiveDriver, LiveError};

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("no node named {0} in the topology")]
    UnknownNode(String),
    #[error("{0} does not resolve to a socket address")]
    Resolve(NetAddress),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Live(#[from] LiveError),
    #[error("HSS listener: {0}")]
    Io(#[from] std::io::Error),
}

/// Backends reached over the network: Cx-lite over TCP, XDMS documents
/// over HTTP. An XDMS node serves its own local store.
pub struct NetBackends {
    pub hss: NetAddress,
    pub xdms_http: Option<NetAddress>,
    pub store: Rc<RefCell<XdmsStore>>,
}

impl Backends for NetBackends {
    fn cx(&self) -> Box<dyn CxClient> {
        Box::new(TcpCx::new(self.hss.clone()))
    }

    fn xdms_client(&self) -> Box<dyn XdmsClient> {
        let peer = self
            .xdms_http
            .clone()
            .unwrap_or_else(|| NetAddress::new("127.0.0.1", 8081));
        Box::new(HttpXdms::new(peer))
    }

    fn xdms_store(&self) -> Rc<RefCell<XdmsStore>> {
        self.store.clone()
    }

    fn closed_topology(&self) -> bool {
        false
    }
}

pub fn resolve(addr: &NetAddress) -> Result<SocketAddr, DeployError> {
    (addr.host.as_str(), addr.port)
        .to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| DeployError::Resolve(addr.clone()))
}

/// What a standalone node process runs.
pub enum Deployed {
    Sip(Box<LiveDriver>),
    Hss(HssService, TcpListener),
}

/// Builds topology node `name` on its own topology address. HSS nodes
/// serve Cx-lite over TCP with the scenario's subscribers.
pub fn deploy_node(scenario: &Scenario, name: &str) -> Result<Deployed, DeployError> {
    scenario.validate()?;
    let topo = &scenario.topology;
    let spec = topo
        .node(name)
        .ok_or_else(|| DeployError::UnknownNode(name.into()))?;
    if spec.role == Role::Hss {
        let listener = TcpListener::bind(resolve(&spec.address())?)?;
        return Ok(Deployed::Hss(
            HssService::new(scenario.hss_store()?, None),
            listener,
        ));
    }
    let backends = NetBackends {
        hss: topo
            .first(Role::Hss)
            .map(|n| n.address())
            .unwrap_or_else(|| NetAddress::new("127.0.0.1", 3868)),
        xdms_http: topo.first(Role::Xdms).and_then(|n| n.http_address()),
        store: Rc::new(RefCell::new(scenario.xdms_store()?)),
    };
    let Some(node) = build_node(scenario, spec, &backends)? else {
        return Err(DeployError::UnknownNode(name.into()));
    };
    let mut driver = LiveDriver::new();
    let http = match spec.http_address() {
        Some(h) => Some((h.clone(), resolve(&h)?)),
        None => None,
    };
    driver.add_node(node, resolve(&spec.address())?, http)?;
    Ok(Deployed::Sip(Box::new(driver)))
}
