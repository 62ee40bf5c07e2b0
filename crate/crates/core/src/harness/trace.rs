use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::endpoint::{Disposition, Instant, NetAddress, Role};
use crate::hss::{CxError, CxMessage};
use crate::http::{HttpRequest, HttpResponse};
use crate::sip::{wire_text, SipMessage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceNode {
    pub name: String,
    pub role: Role,
    pub address: NetAddress,
}

/// One datagram as the simulated network saw it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRecord {
    pub seq: u64,
    pub time: Instant,
    pub src: String,
    pub dst: String,
    /// Method for requests, status code for responses.
    pub kind: String,
    pub cseq: String,
    pub call_id: String,
    pub branch: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
    pub disposition: Disposition,
    pub wire: String,
}

impl WireRecord {
    pub fn new(
        seq: u64,
        time: Instant,
        src: String,
        dst: String,
        msg: &SipMessage,
        disposition: Disposition,
    ) -> Self {
        let kind = match msg.status() {
            Some(s) => s.code().to_string(),
            None => msg.method().as_str().to_string(),
        };
        WireRecord {
            seq,
            time,
            src,
            dst,
            kind,
            cseq: alloc::format!("{} {}", msg.cseq.seq, msg.cseq.method),
            call_id: msg.call_id.clone(),
            branch: msg.top_via().map(|v| v.branch.clone()).unwrap_or_default(),
            content_type: msg.content_type.clone(),
            disposition,
            wire: wire_text(msg),
        }
    }

    pub fn delivered(&self) -> bool {
        self.disposition == Disposition::Delivered
    }

    pub fn is_request(&self) -> bool {
        !self.kind.starts_with(|c: char| c.is_ascii_digit())
    }
}

/// One half of a Cx-lite exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CxRecord {
    pub seq: u64,
    pub time: Instant,
    pub src: String,
    pub dst: String,
    pub kind: String,
    pub message: Option<CxMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CxRecord {
    pub fn request(seq: u64, time: Instant, src: String, dst: String, req: &CxMessage) -> Self {
        CxRecord {
            seq,
            time,
            src,
            dst,
            kind: req.op.as_str().into(),
            message: Some(req.clone()),
            error: None,
        }
    }

    pub fn answer(
        seq: u64,
        time: Instant,
        src: String,
        dst: String,
        req: &CxMessage,
        ans: &Result<CxMessage, CxError>,
    ) -> Self {
        CxRecord {
            seq,
            time,
            src,
            dst,
            kind: req.op.answer().as_str().into(),
            message: ans.as_ref().ok().cloned(),
            error: ans.as_ref().err().map(ToString::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRecord {
    pub seq: u64,
    pub time: Instant,
    pub src: String,
    pub dst: String,
    pub method: String,
    pub path: String,
    pub status: u16,
    pub request_body: String,
    pub response_body: String,
}

/// Masks credential fields in a JSON body before it is traced.
fn redact_body(body: &[u8]) -> String {
    match serde_json::from_slice::<serde_json::Value>(body) {
        Ok(mut v) => {
            if let Some(obj) = v.as_object_mut() {
                for k in ["passkey", "token"] {
                    if obj.contains_key(k) {
                        obj.insert(k.into(), serde_json::Value::String("***".into()));
                    }
                }
            }
            serde_json::to_string(&v).unwrap_or_default()
        }
        Err(_) => String::from_utf8_lossy(body).into_owned(),
    }
}

impl HttpRecord {
    pub fn new(
        seq: u64,
        time: Instant,
        src: String,
        dst: String,
        req: &HttpRequest,
        resp: &HttpResponse,
    ) -> Self {
        HttpRecord {
            seq,
            time,
            src,
            dst,
            method: req.method.clone(),
            path: req.path.clone(),
            status: resp.status,
            request_body: redact_body(&req.body),
            response_body: redact_body(&resp.body),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub seq: u64,
    pub time: Instant,
    pub node: String,
    pub from: String,
    pub to: String,
    pub cause: String,
}

/// A command a scenario actor refused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub seq: u64,
    pub time: Instant,
    pub actor: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything observable about one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub nodes: Vec<TraceNode>,
    pub wire_events: Vec<WireRecord>,
    pub cx_events: Vec<CxRecord>,
    pub http_events: Vec<HttpRecord>,
    pub node_transitions: Vec<TransitionRecord>,
    pub commands: Vec<CommandRecord>,
    pub end_time: Instant,
}

/// A trace event with endpoints, in the shape flow matching and ladder
/// rendering need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventRef<'a> {
    Wire(&'a WireRecord),
    Cx(&'a CxRecord),
    Http(&'a HttpRecord),
}

impl<'a> EventRef<'a> {
    pub fn seq(&self) -> u64 {
        match self {
            EventRef::Wire(w) => w.seq,
            EventRef::Cx(c) => c.seq,
            EventRef::Http(h) => h.seq,
        }
    }

    pub fn time(&self) -> Instant {
        match self {
            EventRef::Wire(w) => w.time,
            EventRef::Cx(c) => c.time,
            EventRef::Http(h) => h.time,
        }
    }

    pub fn src(&self) -> &'a str {
        match self {
            EventRef::Wire(w) => &w.src,
            EventRef::Cx(c) => &c.src,
            EventRef::Http(h) => &h.src,
        }
    }

    pub fn dst(&self) -> &'a str {
        match self {
            EventRef::Wire(w) => &w.dst,
            EventRef::Cx(c) => &c.dst,
            EventRef::Http(h) => &h.dst,
        }
    }

    pub fn kind(&self) -> String {
        match self {
            EventRef::Wire(w) => w.kind.clone(),
            EventRef::Cx(c) => c.kind.clone(),
            EventRef::Http(h) => alloc::format!("{} {}", h.method, h.path),
        }
    }

    pub fn dropped(&self) -> bool {
        matches!(self, EventRef::Wire(w) if !w.delivered())
    }
}

impl Trace {
    pub fn node(&self, name: &str) -> Option<&TraceNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn role_of(&self, name: &str) -> Option<Role> {
        self.node(name).map(|n| n.role)
    }

    /// Wire, Cx and HTTP events merged in sequence order.
    pub fn events(&self) -> Vec<EventRef<'_>> {
        let mut all: Vec<EventRef<'_>> = self
            .wire_events
            .iter()
            .map(EventRef::Wire)
            .chain(self.cx_events.iter().map(EventRef::Cx))
            .chain(self.http_events.iter().map(EventRef::Http))
            .collect();
        all.sort_by_key(EventRef::seq);
        all
    }

    /// Delivered wire events only.
    pub fn delivered(&self) -> impl Iterator<Item = &WireRecord> {
        self.wire_events.iter().filter(|w| w.delivered())
    }

    pub fn transitions_of<'a>(
        &'a self,
        node: &'a str,
    ) -> impl Iterator<Item = &'a TransitionRecord> + 'a {
        self.node_transitions.iter().filter(move |t| t.node == node)
    }

    /// Canonical serialization: sorted keys, integer times, no whitespace.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).unwrap_or_default();
        serde_json::to_string(&value).unwrap_or_default()
    }

    pub fn from_json(text: &str) -> Result<Trace, serde_json::Error> {
        serde_json::from_str(text)
    }
}
