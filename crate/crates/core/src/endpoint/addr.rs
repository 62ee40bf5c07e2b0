use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::sip::{SipUri, Via};

/// Transport address of a node: `host:port`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetAddress {
    pub host: String,
    pub port: u16,
}

impl NetAddress {
    pub fn new(host: &str, port: u16) -> Self {
        NetAddress {
            host: host.to_string(),
            port,
        }
    }

    pub fn from_uri(uri: &SipUri) -> Self {
        NetAddress::new(&uri.host, uri.effective_port())
    }

    pub fn from_via(via: &Via) -> Self {
        NetAddress::new(&via.host, via.sent_by_port())
    }

    /// `sip:host:port`, optionally with a user part and `lr` flag.
    pub fn to_uri(&self, user: Option<&str>) -> SipUri {
        SipUri::new(user, &self.host).with_port(self.port)
    }

    pub fn matches_via(&self, via: &Via) -> bool {
        via.host.eq_ignore_ascii_case(&self.host) && via.sent_by_port() == self.port
    }
}

impl fmt::Display for NetAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid address {0:?}, expected host:port")]
pub struct AddressError(pub String);

impl FromStr for NetAddress {
    type Err = AddressError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, p) = s
            .rsplit_once(':')
            .ok_or_else(|| AddressError(s.to_string()))?;
        let port: u16 = p.parse().map_err(|_| AddressError(s.to_string()))?;
        if h.is_empty() || port == 0 {
            return Err(AddressError(s.to_string()));
        }
        Ok(NetAddress::new(h, port))
    }
}

impl Serialize for NetAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NetAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
