use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::uri::SipUri;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Register,
    Subscribe,
    Notify,
    Message,
    Invite,
    Ack,
    Bye,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Register,
        Method::Subscribe,
        Method::Notify,
        Method::Message,
        Method::Invite,
        Method::Ack,
        Method::Bye,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Register => "REGISTER",
            Method::Subscribe => "SUBSCRIBE",
            Method::Notify => "NOTIFY",
            Method::Message => "MESSAGE",
            Method::Invite => "INVITE",
            Method::Ack => "ACK",
            Method::Bye => "BYE",
        }
    }

    /// ACK and NOTIFY are sent without a retransmitting client transaction.
    pub fn is_fire_and_forget(self) -> bool {
        matches!(self, Method::Ack | Method::Notify)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

/// Response status restricted to the codes the testbed uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct StatusCode(u16);

impl StatusCode {
    pub const TRYING: StatusCode = StatusCode(100);
    pub const RINGING: StatusCode = StatusCode(180);
    pub const OK: StatusCode = StatusCode(200);
    pub const ACCEPTED: StatusCode = StatusCode(202);
    pub const MOVED_TEMPORARILY: StatusCode = StatusCode(302);
    pub const UNAUTHORIZED: StatusCode = StatusCode(401);
    pub const FORBIDDEN: StatusCode = StatusCode(403);
    pub const NOT_FOUND: StatusCode = StatusCode(404);
    pub const REQUEST_TIMEOUT: StatusCode = StatusCode(408);
    pub const TEMPORARILY_UNAVAILABLE: StatusCode = StatusCode(480);
    pub const SERVER_ERROR: StatusCode = StatusCode(500);

    pub const ALLOWED: [u16; 11] = [100, 180, 200, 202, 302, 401, 403, 404, 408, 480, 500];

    pub fn new(code: u16) -> Option<StatusCode> {
        Self::ALLOWED.contains(&code).then_some(StatusCode(code))
    }

    pub fn code(self) -> u16 {
        self.0
    }

    pub fn class(self) -> u16 {
        self.0 / 100
    }

    pub fn is_provisional(self) -> bool {
        self.class() == 1
    }

    pub fn is_final(self) -> bool {
        !self.is_provisional()
    }

    pub fn is_success(self) -> bool {
        self.class() == 2
    }

    pub fn default_reason(self) -> &'static str {
        match self.0 {
            100 => "Trying",
            180 => "Ringing",
            200 => "OK",
            202 => "Accepted",
            302 => "Moved Temporarily",
            401 => "Unauthorized",
            403 => "Forbidden",
            404 => "Not Found",
            408 => "Request Timeout",
            480 => "Temporarily Unavailable",
            _ => "Server Internal Error",
        }
    }
}

impl TryFrom<u16> for StatusCode {
    type Error = String;
    fn try_from(v: u16) -> Result<Self, Self::Error> {
        StatusCode::new(v).ok_or_else(|| alloc::format!("unsupported status code {v}"))
    }
}

impl From<StatusCode> for u16 {
    fn from(s: StatusCode) -> u16 {
        s.0
    }
}

impl fmt::Display for StatusCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Via {
    pub transport: String,
    pub host: String,
    pub port: Option<u16>,
    pub branch: String,
    pub params: Vec<(String, Option<String>)>,
}

impl Via {
    pub fn udp(host: &str, port: u16, branch: &str) -> Via {
        Via {
            transport: "UDP".to_string(),
            host: host.to_string(),
            port: Some(port),
            branch: branch.to_string(),
            params: Vec::new(),
        }
    }

    pub fn sent_by_port(&self) -> u16 {
        self.port.unwrap_or(super::uri::DEFAULT_PORT)
    }
}

/// `From`, `To`, `Contact` and route entries: a URI plus header parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameAddr {
    pub display: Option<String>,
    pub uri: SipUri,
    pub tag: Option<String>,
    pub params: Vec<(String, Option<String>)>,
}

impl NameAddr {
    pub fn new(uri: SipUri) -> Self {
        NameAddr {
            display: None,
            uri,
            tag: None,
            params: Vec::new(),
        }
    }

    pub fn with_tag(mut self, tag: &str) -> Self {
        self.tag = Some(tag.to_string());
        self
    }

    pub fn param(&self, name: &str) -> Option<Option<&str>> {
        self.params
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CSeq {
    pub seq: u32,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StartLine {
    Request { method: Method, uri: SipUri },
    Response { status: StatusCode, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    Request,
    Response,
}

/// A parsed SIP request or response.
///
/// Headers outside the modelled subset are kept in `extra` in the order they
/// were received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SipMessage {
    pub start: StartLine,
    pub vias: Vec<Via>,
    pub max_forwards: Option<u8>,
    pub from: NameAddr,
    pub to: NameAddr,
    pub call_id: String,
    pub cseq: CSeq,
    pub contact: Option<NameAddr>,
    pub expires: Option<u32>,
    pub event: Option<String>,
    pub routes: Vec<NameAddr>,
    pub record_routes: Vec<NameAddr>,
    pub content_type: Option<String>,
    pub extra: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl SipMessage {
    pub fn kind(&self) -> MessageKind {
        match self.start {
            StartLine::Request { .. } => MessageKind::Request,
            StartLine::Response { .. } => MessageKind::Response,
        }
    }

    pub fn is_request(&self) -> bool {
        self.kind() == MessageKind::Request
    }

    /// Request method, or the CSeq method for responses.
    pub fn method(&self) -> Method {
        match &self.start {
            StartLine::Request { method, .. } => *method,
            StartLine::Response { .. } => self.cseq.method,
        }
    }

    pub fn request_uri(&self) -> Option<&SipUri> {
        match &self.start {
            StartLine::Request { uri, .. } => Some(uri),
            StartLine::Response { .. } => None,
        }
    }

    pub fn request_uri_mut(&mut self) -> Option<&mut SipUri> {
        match &mut self.start {
            StartLine::Request { uri, .. } => Some(uri),
            StartLine::Response { .. } => None,
        }
    }

    pub fn status(&self) -> Option<StatusCode> {
        match &self.start {
            StartLine::Response { status, .. } => Some(*status),
            StartLine::Request { .. } => None,
        }
    }

    pub fn top_via(&self) -> Option<&Via> {
        self.vias.first()
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.extra
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn set_header(&mut self, name: &str, value: &str) {
        self.remove_header(name);
        self.extra
            .push((super::canonical_header_name(name), value.to_string()));
    }

    pub fn remove_header(&mut self, name: &str) -> Option<String> {
        let pos = self
            .extra
            .iter()
            .position(|(n, _)| n.eq_ignore_ascii_case(name))?;
        Some(self.extra.remove(pos).1)
    }

    pub fn with_body(mut self, content_type: &str, body: Vec<u8>) -> Self {
        self.content_type = Some(content_type.to_string());
        self.body = body;
        self
    }

    pub fn body_str(&self) -> &str {
        core::str::from_utf8(&self.body).unwrap_or("")
    }

    /// One-line summary used by logs and ladder diagrams.
    pub fn label(&self) -> String {
        match &self.start {
            StartLine::Request { method, .. } => method.as_str().to_string(),
            StartLine::Response { status, reason } => alloc::format!("{status} {reason}"),
        }
    }
}
