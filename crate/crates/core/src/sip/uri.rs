use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 5060;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UriError {
    #[error("unsupported or missing scheme in {0:?}")]
    Scheme(String),
    #[error("empty host")]
    EmptyHost,
    #[error("invalid host {0:?}")]
    Host(String),
    #[error("invalid port {0:?}")]
    Port(String),
    #[error("invalid user part {0:?}")]
    User(String),
    #[error("invalid parameter {0:?}")]
    Param(String),
    #[error("URI headers are not supported")]
    Headers,
}

/// A `sip:` URI restricted to the subset the testbed speaks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SipUri {
    pub user: Option<String>,
    pub host: String,
    pub port: Option<u16>,
    /// Parameters in declaration order; `lr` style flags carry no value.
    pub params: Vec<(String, Option<String>)>,
}

impl SipUri {
    pub fn new(user: Option<&str>, host: &str) -> Self {
        SipUri {
            user: user.map(ToString::to_string),
            host: host.to_string(),
            port: None,
            params: Vec::new(),
        }
    }

    pub fn with_port(mut self, port: u16) -> Self {
        self.port = Some(port);
        self
    }

    pub fn with_param(mut self, name: &str, value: Option<&str>) -> Self {
        self.params
            .push((name.to_string(), value.map(ToString::to_string)));
        self
    }

    pub fn effective_port(&self) -> u16 {
        self.port.unwrap_or(DEFAULT_PORT)
    }

    pub fn param(&self, name: &str) -> Option<Option<&str>> {
        self.params
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_deref())
    }

    /// Address-of-record form: `sip:user@host`, no port or parameters.
    pub fn aor(&self) -> SipUri {
        SipUri {
            user: self.user.clone(),
            host: self.host.to_ascii_lowercase(),
            port: None,
            params: Vec::new(),
        }
    }

    /// Stable string key for the address of record.
    pub fn aor_key(&self) -> String {
        self.aor().to_string()
    }

    pub fn parse(s: &str) -> Result<SipUri, UriError> {
        let rest = match s.get(..4) {
            Some(p) if p.eq_ignore_ascii_case("sip:") => &s[4..],
            _ => return Err(UriError::Scheme(s.to_string())),
        };
        if rest.contains('?') {
            return Err(UriError::Headers);
        }
        let (user, hostpart) = match rest.rfind('@') {
            Some(i) => (Some(&rest[..i]), &rest[i + 1..]),
            None => (None, rest),
        };
        if let Some(u) = user {
            validate_user(u)?;
        }
        let mut pieces = hostpart.split(';');
        let hostport = pieces.next().unwrap_or("");
        if hostport.starts_with('[') {
            return Err(UriError::Host(hostport.to_string()));
        }
        let (host, port) = match hostport.rfind(':') {
            Some(i) => {
                let p = &hostport[i + 1..];
                let port: u16 = p.parse().map_err(|_| UriError::Port(p.to_string()))?;
                if port == 0 {
                    return Err(UriError::Port(p.to_string()));
                }
                (&hostport[..i], Some(port))
            }
            None => (hostport, None),
        };
        validate_host(host)?;
        let mut params = Vec::new();
        for p in pieces {
            params.push(parse_param(p).ok_or_else(|| UriError::Param(p.to_string()))?);
        }
        Ok(SipUri {
            user: user.map(ToString::to_string),
            host: host.to_string(),
            port,
            params,
        })
    }
}

pub(crate) fn is_token_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "-.!%*_+`'~".contains(c)
}

/// Parses `name` or `name=value`; returns None for empty or non-token names.
pub(crate) fn parse_param(p: &str) -> Option<(String, Option<String>)> {
    let p = p.trim();
    let (name, value) = match p.find('=') {
        Some(i) => (p[..i].trim(), Some(p[i + 1..].trim())),
        None => (p, None),
    };
    if name.is_empty() || !name.chars().all(is_token_char) {
        return None;
    }
    if let Some(v) = value {
        if v.is_empty() || v.chars().any(|c| c.is_whitespace() || c == ';' || c == ',') {
            return None;
        }
    }
    Some((name.to_string(), value.map(ToString::to_string)))
}

fn validate_user(u: &str) -> Result<(), UriError> {
    if u.is_empty() {
        return Err(UriError::User(u.to_string()));
    }
    let bytes = u.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '%' {
            let ok = bytes.len() > i + 2
                && (bytes[i + 1] as char).is_ascii_hexdigit()
                && (bytes[i + 2] as char).is_ascii_hexdigit();
            if !ok {
                return Err(UriError::User(u.to_string()));
            }
            i += 3;
            continue;
        }
        if !(c.is_ascii_alphanumeric() || "-_.!~*'()&=+$,/".contains(c)) {
            return Err(UriError::User(u.to_string()));
        }
        i += 1;
    }
    Ok(())
}

fn validate_host(h: &str) -> Result<(), UriError> {
    if h.is_empty() {
        return Err(UriError::EmptyHost);
    }
    let ok = h
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '.')
        && !h.starts_with('.')
        && !h.starts_with('-');
    if ok {
        Ok(())
    } else {
        Err(UriError::Host(h.to_string()))
    }
}

pub(crate) fn write_params(
    f: &mut fmt::Formatter<'_>,
    params: &[(String, Option<String>)],
) -> fmt::Result {
    for (n, v) in params {
        match v {
            Some(v) => write!(f, ";{n}={v}")?,
            None => write!(f, ";{n}")?,
        }
    }
    Ok(())
}

impl fmt::Display for SipUri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("sip:")?;
        if let Some(u) = &self.user {
            write!(f, "{u}@")?;
        }
        f.write_str(&self.host)?;
        if let Some(p) = self.port {
            write!(f, ":{p}")?;
        }
        write_params(f, &self.params)
    }
}

impl FromStr for SipUri {
    type Err = UriError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SipUri::parse(s)
    }
}

impl Serialize for SipUri {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SipUri {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SipUri::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_form_round_trips() {
        let u = SipUri::parse("sip:s1@ims.kau.test:5070;transport=udp;lr").unwrap();
        assert_eq!(u.user.as_deref(), Some("s1"));
        assert_eq!(u.port, Some(5070));
        assert_eq!(u.param("lr"), Some(None));
        assert_eq!(SipUri::parse(&u.to_string()).unwrap(), u);
    }

    #[test]
    fn default_port_applies() {
        let u = SipUri::parse("sip:ims.kau.test").unwrap();
        assert_eq!(u.port, None);
        assert_eq!(u.effective_port(), 5060);
    }

    #[test]
    fn rejects_bad_forms() {
        assert!(matches!(
            SipUri::parse("sips:a@b"),
            Err(UriError::Scheme(_))
        ));
        assert!(matches!(SipUri::parse("sip:a@"), Err(UriError::EmptyHost)));
        assert!(matches!(SipUri::parse("sip:a@h:0"), Err(UriError::Port(_))));
        assert!(matches!(
            SipUri::parse("sip:a@h:70000"),
            Err(UriError::Port(_))
        ));
        assert!(matches!(
            SipUri::parse("sip:a%zz@h"),
            Err(UriError::User(_))
        ));
        assert!(matches!(
            SipUri::parse("sip:a@h?x=y"),
            Err(UriError::Headers)
        ));
        assert!(matches!(
            SipUri::parse("sip:a@[::1]"),
            Err(UriError::Host(_))
        ));
    }

    #[test]
    fn escaped_user_is_kept_verbatim() {
        let u = SipUri::parse("sip:s%31@h").unwrap();
        assert_eq!(u.user.as_deref(), Some("s%31"));
        assert_eq!(u.to_string(), "sip:s%31@h");
    }

    #[test]
    fn aor_drops_port_and_params() {
        let u = SipUri::parse("sip:s1@IMS.kau.test:5070;lr").unwrap();
        assert_eq!(u.aor_key(), "sip:s1@ims.kau.test");
    }
}
