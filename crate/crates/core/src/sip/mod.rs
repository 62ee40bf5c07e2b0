//! SIP message model, wire parser and canonical serializer.

mod build;
mod message;
mod parse;
mod serialize;
mod uri;

use alloc::string::String;

pub use build::{make_request, make_response, BuildError, IdGen, BRANCH_MAGIC};
pub use message::{
    CSeq, MessageKind, Method, NameAddr, SipMessage, StartLine, StatusCode, UnknownMethod, Via,
};
pub use parse::{parse_message, ParseError};
pub use serialize::{serialize_message, wire_text};
pub use uri::{SipUri, UriError, DEFAULT_PORT};

/// Canonical casing for a header name: the modelled headers use their
/// registered spelling, everything else capitalises each dash-separated word.
pub fn canonical_header_name(name: &str) -> String {
    const KNOWN: [&str; 13] = [
        "Via",
        "Max-Forwards",
        "From",
        "To",
        "Call-ID",
        "CSeq",
        "Contact",
        "Expires",
        "Event",
        "Route",
        "Record-Route",
        "Content-Type",
        "Content-Length",
    ];
    if let Some(k) = KNOWN.iter().find(|k| k.eq_ignore_ascii_case(name)) {
        return String::from(*k);
    }
    let mut out = String::with_capacity(name.len());
    let mut upper = true;
    for c in name.chars() {
        if upper {
            out.extend(c.to_uppercase());
        } else {
            out.extend(c.to_lowercase());
        }
        upper = c == '-';
    }
    out
}
