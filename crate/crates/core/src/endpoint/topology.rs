use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LossConfig, NetAddress};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Ua,
    Pcscf,
    Icscf,
    Scscf,
    Hss,
    Xdms,
    As,
    Proxy,
    Redirect,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Ua => "ua",
            Role::Pcscf => "pcscf",
            Role::Icscf => "icscf",
            Role::Scscf => "scscf",
            Role::Hss => "hss",
            Role::Xdms => "xdms",
            Role::As => "as",
            Role::Proxy => "proxy",
            Role::Redirect => "redirect",
        }
    }

    /// Column heading used in ladder diagrams.
    pub fn display_name(self) -> &'static str {
        match self {
            Role::Ua => "UA",
            Role::Pcscf => "P-CSCF",
            Role::Icscf => "I-CSCF",
            Role::Scscf => "S-CSCF",
            Role::Hss => "HSS",
            Role::Xdms => "XDMS",
            Role::As => "AS",
            Role::Proxy => "Proxy",
            Role::Redirect => "Redirect",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub role: Role,
    pub host: String,
    pub port: u16,
    /// Port of the node's HTTP face (AS API, XDMS document RPC).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http_port: Option<u16>,
    /// Physical server the node is co-located on, for grouping only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl NodeSpec {
    pub fn new(name: &str, role: Role, host: &str, port: u16) -> Self {
        NodeSpec {
            name: name.into(),
            role,
            host: host.into(),
            port,
            http_port: None,
            group: None,
        }
    }

    pub fn with_http(mut self, port: u16) -> Self {
        self.http_port = Some(port);
        self
    }

    pub fn in_group(mut self, group: &str) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn address(&self) -> NetAddress {
        NetAddress::new(&self.host, self.port)
    }

    pub fn http_address(&self) -> Option<NetAddress> {
        self.http_port.map(|p| NetAddress::new(&self.host, p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<Link>,
    #[serde(default)]
    pub loss: LossConfig,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("duplicate node name {0}")]
    DuplicateName(String),
    #[error("address {0} is used by more than one node")]
    DuplicateAddress(NetAddress),
    #[error("link references unknown node {0}")]
    UnknownLinkEnd(String),
    #[error("node {0} has port 0 or an empty host")]
    BadAddress(String),
    #[error("loss probability {0} is outside [0, 1]")]
    LossOutOfRange(f64),
}

impl Topology {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let mut names = BTreeSet::new();
        let mut addrs = BTreeSet::new();
        for n in &self.nodes {
            if n.host.is_empty() || n.port == 0 {
                return Err(TopologyError::BadAddress(n.name.clone()));
            }
            if !names.insert(n.name.as_str()) {
                return Err(TopologyError::DuplicateName(n.name.clone()));
            }
            if !addrs.insert(n.address()) {
                return Err(TopologyError::DuplicateAddress(n.address()));
            }
            if let Some(h) = n.http_address() {
                if !addrs.insert(h.clone()) {
                    return Err(TopologyError::DuplicateAddress(h));
                }
            }
        }
        for l in &self.links {
            for end in [&l.a, &l.b] {
                if !names.contains(end.as_str()) {
                    return Err(TopologyError::UnknownLinkEnd(end.clone()));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.loss.p) {
            return Err(TopologyError::LossOutOfRange(self.loss.p));
        }
        Ok(())
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn by_role(&self, role: Role) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(move |n| n.role == role)
    }

    pub fn first(&self, role: Role) -> Option<&NodeSpec> {
        self.by_role(role).next()
    }

    pub fn node_at(&self, addr: &NetAddress) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.address() == *addr)
    }

    /// Every SIP and HTTP address in the topology: the registry that
    /// destinations are checked against.
    pub fn directory(&self) -> BTreeSet<NetAddress> {
        self.nodes
            .iter()
            .flat_map(|n| core::iter::once(n.address()).chain(n.http_address()))
            .collect()
    }

    /// Link latencies keyed by address pair, in both directions.
    pub fn latencies(&self) -> BTreeMap<(NetAddress, NetAddress), u64> {
        let mut out = BTreeMap::new();
        for l in &self.links {
            if let (Some(a), Some(b)) = (self.node(&l.a), self.node(&l.b)) {
                out.insert((a.address(), b.address()), l.latency_ms);
                out.insert((b.address(), a.address()), l.latency_ms);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo() -> Topology {
        Topology {
            nodes: alloc::vec![
                NodeSpec::new("alice", Role::Ua, "10.0.0.1", 5060),
                NodeSpec::new("proxy", Role::Proxy, "10.0.0.2", 5060),
            ],
            links: alloc::vec![Link {
                a: "alice".into(),
                b: "proxy".into(),
                latency_ms: 5
            }],
            loss: LossConfig::default(),
        }
    }

    #[test]
    fn valid_topology() {
        let t = topo();
        t.validate().unwrap();
        assert_eq!(t.directory().len(), 2);
        assert_eq!(t.latencies().len(), 2);
    }

    #[test]
    fn json_shape() {
        let t: Topology = serde_json::from_str(
            r#"{"nodes":[{"name":"p","role":"pcscf","host":"10.0.1.1","port":5060}],
                "links":[],"loss":{"p":0.2,"seed":7}}"#,
        )
        .unwrap();
        assert_eq!(t.nodes[0].role, Role::Pcscf);
        assert_eq!(t.loss.seed, 7);
    }

    #[test]
    fn rejects_duplicates_and_dangling_links() {
        let mut t = topo();
        t.nodes[1].name = "alice".into();
        assert!(matches!(t.validate(), Err(TopologyError::DuplicateName(_))));
        let mut t = topo();
        t.nodes[1].host = "10.0.0.1".into();
        assert!(matches!(
            t.validate(),
            Err(TopologyError::DuplicateAddress(_))
        ));
        let mut t = topo();
        t.links[0].b = "bob".into();
        assert!(matches!(
            t.validate(),
            Err(TopologyError::UnknownLinkEnd(_))
        ));
        let mut t = topo();
        t.loss.p = 1.5;
        assert!(matches!(
            t.validate(),
            Err(TopologyError::LossOutOfRange(_))
        ));
    }
}
