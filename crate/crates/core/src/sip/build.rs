use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::message::{CSeq, Method, NameAddr, SipMessage, StartLine, StatusCode, Via};
use super::uri::SipUri;
use crate::digest::{hash64, short_hex};

pub const BRANCH_MAGIC: &str = "z9hG4bK";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("responses can only be built from requests")]
    NotARequest,
}

/// Deterministic generator of branch tokens, tags and Call-IDs for one
/// endpoint. The seed separates endpoints; the counter separates calls.
#[derive(Debug, Clone)]
pub struct IdGen {
    seed: u32,
    next: u64,
}

impl IdGen {
    pub fn new(scope: &str) -> Self {
        IdGen {
            seed: hash64(&[scope.as_bytes()]) as u32,
            next: 1,
        }
    }

    fn bump(&mut self) -> u64 {
        let n = self.next;
        self.next += 1;
        n
    }

    pub fn branch(&mut self) -> String {
        let n = self.bump();
        format!("{BRANCH_MAGIC}{:08x}.{n:x}", self.seed)
    }

    pub fn tag(&mut self) -> String {
        let n = self.bump();
        format!("{:08x}-{n:x}", self.seed)
    }

    pub fn call_id(&mut self, host: &str) -> String {
        let n = self.bump();
        format!("{:08x}.{n}@{host}", self.seed)
    }
}

/// Builds a request carrying one Via for `sent_by` with a fresh branch,
/// `Max-Forwards: 70`, a fresh From tag and no body.
#[allow(clippy::too_many_arguments)]
pub fn make_request(
    ids: &mut IdGen,
    sent_by: (&str, u16),
    method: Method,
    target: SipUri,
    from: SipUri,
    to: SipUri,
    call_id: &str,
    cseq: u32,
) -> SipMessage {
    debug_assert!(cseq >= 1);
    let branch = ids.branch();
    let tag = ids.tag();
    SipMessage {
        start: StartLine::Request {
            method,
            uri: target,
        },
        vias: alloc::vec![Via::udp(sent_by.0, sent_by.1, &branch)],
        max_forwards: Some(70),
        from: NameAddr::new(from).with_tag(&tag),
        to: NameAddr::new(to),
        call_id: call_id.to_string(),
        cseq: CSeq {
            seq: cseq.max(1),
            method,
        },
        contact: None,
        expires: None,
        event: None,
        routes: Vec::new(),
        record_routes: Vec::new(),
        content_type: None,
        extra: Vec::new(),
        body: Vec::new(),
    }
}

/// Builds a response that copies the request's Via stack, From, To,
/// Call-ID and CSeq. Final responses gain a To tag when the request had
/// none; the tag is derived from the request so retransmitted requests get
/// the same tag.
pub fn make_response(
    req: &SipMessage,
    status: StatusCode,
    body: Vec<u8>,
) -> Result<SipMessage, BuildError> {
    if !req.is_request() {
        return Err(BuildError::NotARequest);
    }
    let mut to = req.to.clone();
    if status.is_final() && to.tag.is_none() {
        let branch = req.top_via().map(|v| v.branch.as_str()).unwrap_or("");
        let seq = req.cseq.seq.to_string();
        let tag = short_hex(
            &[
                req.call_id.as_bytes(),
                req.from.tag.as_deref().unwrap_or("").as_bytes(),
                seq.as_bytes(),
                branch.as_bytes(),
            ],
            4,
        );
        to.tag = Some(tag);
    }
    Ok(SipMessage {
        start: StartLine::Response {
            status,
            reason: status.default_reason().to_string(),
        },
        vias: req.vias.clone(),
        max_forwards: None,
        from: req.from.clone(),
        to,
        call_id: req.call_id.clone(),
        cseq: req.cseq,
        contact: None,
        expires: None,
        event: None,
        routes: Vec::new(),
        record_routes: Vec::new(),
        content_type: None,
        extra: Vec::new(),
        body,
    })
}
