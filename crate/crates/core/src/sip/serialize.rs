use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use super::message::{NameAddr, SipMessage, StartLine, Via};
use super::uri::write_params;

struct ViaDisplay<'a>(&'a Via);

impl fmt::Display for ViaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        write!(f, "SIP/2.0/{} {}", v.transport, v.host)?;
        if let Some(p) = v.port {
            write!(f, ":{p}")?;
        }
        write!(f, ";branch={}", v.branch)?;
        write_params(f, &v.params)
    }
}

struct NameAddrDisplay<'a>(&'a NameAddr);

impl fmt::Display for NameAddrDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0;
        if let Some(d) = &n.display {
            write!(f, "\"{d}\" ")?;
        }
        write!(f, "<{}>", n.uri)?;
        if let Some(t) = &n.tag {
            write!(f, ";tag={t}")?;
        }
        write_params(f, &n.params)
    }
}

fn join_addrs(list: &[NameAddr]) -> String {
    let mut s = String::new();
    for (i, a) in list.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{}", NameAddrDisplay(a));
    }
    s
}

/// Emits the canonical wire form: CRLF line endings, canonical header
/// casing, modelled headers in a fixed order followed by opaque headers in
/// arrival order, and a Content-Length computed from the body.
pub fn serialize_message(msg: &SipMessage) -> Vec<u8> {
    let mut s = String::with_capacity(256 + msg.body.len());
    match &msg.start {
        StartLine::Request { method, uri } => {
            let _ = write!(s, "{method} {uri} SIP/2.0\r\n");
        }
        StartLine::Response { status, reason } => {
            let _ = write!(s, "SIP/2.0 {status} {reason}\r\n");
        }
    }
    for v in &msg.vias {
        let _ = write!(s, "Via: {}\r\n", ViaDisplay(v));
    }
    if let Some(mf) = msg.max_forwards {
        let _ = write!(s, "Max-Forwards: {mf}\r\n");
    }
    let _ = write!(s, "From: {}\r\n", NameAddrDisplay(&msg.from));
    let _ = write!(s, "To: {}\r\n", NameAddrDisplay(&msg.to));
    let _ = write!(s, "Call-ID: {}\r\n", msg.call_id);
    let _ = write!(s, "CSeq: {} {}\r\n", msg.cseq.seq, msg.cseq.method);
    if let Some(c) = &msg.contact {
        let _ = write!(s, "Contact: {}\r\n", NameAddrDisplay(c));
    }
    if let Some(e) = msg.expires {
        let _ = write!(s, "Expires: {e}\r\n");
    }
    if let Some(e) = &msg.event {
        let _ = write!(s, "Event: {e}\r\n");
    }
    if !msg.routes.is_empty() {
        let _ = write!(s, "Route: {}\r\n", join_addrs(&msg.routes));
    }
    if !msg.record_routes.is_empty() {
        let _ = write!(s, "Record-Route: {}\r\n", join_addrs(&msg.record_routes));
    }
    if let Some(ct) = &msg.content_type {
        let _ = write!(s, "Content-Type: {ct}\r\n");
    }
    for (n, v) in &msg.extra {
        let _ = write!(s, "{n}: {v}\r\n");
    }
    let _ = write!(s, "Content-Length: {}\r\n\r\n", msg.body.len());
    let mut out = s.into_bytes();
    out.extend_from_slice(&msg.body);
    out
}

/// Lossy text rendering of the wire form, for traces and logs.
pub fn wire_text(msg: &SipMessage) -> String {
    String::from_utf8_lossy(&serialize_message(msg)).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sip::{make_response, parse_message, StatusCode};

    const REGISTER: &str = "REGISTER sip:ims.kau.test SIP/2.0\r\nVia: SIP/2.0/UDP 10.0.0.9:5060;branch=z9hG4bKa1\r\nMax-Forwards: 70\r\nFrom: <sip:s1@ims.kau.test>;tag=t1\r\nTo: <sip:s1@ims.kau.test>\r\nCall-ID: c1\r\nCSeq: 1 REGISTER\r\nContact: <sip:s1@10.0.0.9:5060>\r\nExpires: 3600\r\nContent-Length: 0\r\n\r\n";

    #[test]
    fn canonical_register_is_byte_identical() {
        let m = parse_message(REGISTER.as_bytes()).unwrap();
        assert_eq!(serialize_message(&m), REGISTER.as_bytes());
    }

    #[test]
    fn header_case_is_normalised() {
        let lower = REGISTER
            .replace("Max-Forwards", "max-forwards")
            .replace("Call-ID", "CALL-ID");
        let m = parse_message(lower.as_bytes()).unwrap();
        assert_eq!(serialize_message(&m), REGISTER.as_bytes());
    }

    #[test]
    fn content_length_is_computed() {
        let req = parse_message(REGISTER.as_bytes()).unwrap();
        let resp = make_response(&req, StatusCode::OK, b"ok".to_vec()).unwrap();
        let text = wire_text(&resp);
        assert!(text.contains("Content-Length: 2\r\n\r\nok"));
    }
}
