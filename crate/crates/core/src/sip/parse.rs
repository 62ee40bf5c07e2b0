use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::canonical_header_name;
use super::message::{CSeq, Method, NameAddr, SipMessage, StartLine, StatusCode, Via};
use super::uri::{is_token_char, parse_param, SipUri};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed start line")]
    MalformedStartLine,
    #[error("missing mandatory header {0}")]
    MissingMandatoryHeader(&'static str),
    #[error("Content-Length does not match the body length")]
    BodyLengthMismatch,
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("malformed header {0}")]
    MalformedHeader(String),
    #[error("header section not terminated by an empty line")]
    Unterminated,
}

type Params = Vec<(String, Option<String>)>;

#[derive(Default)]
struct Collected {
    vias: Vec<Via>,
    max_forwards: Option<u8>,
    from: Option<NameAddr>,
    to: Option<NameAddr>,
    call_id: Option<String>,
    cseq: Option<CSeq>,
    contact: Option<NameAddr>,
    expires: Option<u32>,
    event: Option<String>,
    routes: Vec<NameAddr>,
    record_routes: Vec<NameAddr>,
    content_type: Option<String>,
    content_length: Option<usize>,
    extra: Vec<(String, String)>,
}

fn malformed(name: &str) -> ParseError {
    ParseError::MalformedHeader(canonical_header_name(name))
}

fn set_once<T>(slot: &mut Option<T>, v: T, name: &str) -> Result<(), ParseError> {
    if slot.is_some() {
        return Err(malformed(name));
    }
    *slot = Some(v);
    Ok(())
}

/// Parses one SIP message from its wire form.
///
/// Header names match case-insensitively, folded continuation lines are
/// joined with a single space, and headers outside the modelled subset are
/// kept verbatim in arrival order. Compact (single-letter) header names are
/// rejected rather than expanded.
pub fn parse_message(raw: &[u8]) -> Result<SipMessage, ParseError> {
    if raw.is_empty() {
        return Err(ParseError::MalformedStartLine);
    }
    let (head, body) = split_head(raw)?;
    let mut lines = head
        .split(|&b| b == b'\n')
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l));

    let start_raw = lines.next().ok_or(ParseError::MalformedStartLine)?;
    let start_line = core::str::from_utf8(start_raw).map_err(|_| ParseError::MalformedStartLine)?;
    let start = parse_start_line(start_line)?;

    // Unfold continuation lines before interpreting anything.
    let mut headers: Vec<(String, String)> = Vec::new();
    for line in lines {
        let line = core::str::from_utf8(line).map_err(|_| malformed("<utf-8>"))?;
        if line.starts_with(' ') || line.starts_with('\t') {
            let last = headers
                .last_mut()
                .ok_or_else(|| malformed("<continuation>"))?;
            last.1.push(' ');
            last.1.push_str(line.trim());
            continue;
        }
        let colon = line.find(':').ok_or_else(|| malformed(line))?;
        let name = line[..colon].trim();
        if name.is_empty() || !name.chars().all(is_token_char) {
            return Err(malformed(line));
        }
        headers.push((name.to_string(), line[colon + 1..].trim().to_string()));
    }

    let mut c = Collected::default();
    for (name, value) in headers {
        apply_header(&mut c, &name, &value)?;
    }

    if c.vias.is_empty() {
        return Err(ParseError::MissingMandatoryHeader("Via"));
    }
    let from = c.from.ok_or(ParseError::MissingMandatoryHeader("From"))?;
    let to = c.to.ok_or(ParseError::MissingMandatoryHeader("To"))?;
    let call_id = c
        .call_id
        .ok_or(ParseError::MissingMandatoryHeader("Call-ID"))?;
    let cseq = c.cseq.ok_or(ParseError::MissingMandatoryHeader("CSeq"))?;
    if let StartLine::Request { method, .. } = &start {
        if *method != cseq.method {
            return Err(malformed("CSeq"));
        }
    }
    if let Some(len) = c.content_length {
        if len != body.len() {
            return Err(ParseError::BodyLengthMismatch);
        }
    }

    Ok(SipMessage {
        start,
        vias: c.vias,
        max_forwards: c.max_forwards,
        from,
        to,
        call_id,
        cseq,
        contact: c.contact,
        expires: c.expires,
        event: c.event,
        routes: c.routes,
        record_routes: c.record_routes,
        content_type: c.content_type,
        extra: c.extra,
        body: body.to_vec(),
    })
}

fn split_head(raw: &[u8]) -> Result<(&[u8], &[u8]), ParseError> {
    for i in 0..raw.len() {
        if raw[i..].starts_with(b"\r\n\r\n") {
            return Ok((&raw[..i], &raw[i + 4..]));
        }
        if raw[i..].starts_with(b"\n\n") {
            return Ok((&raw[..i], &raw[i + 2..]));
        }
    }
    Err(ParseError::Unterminated)
}

fn parse_start_line(line: &str) -> Result<StartLine, ParseError> {
    if let Some(rest) = line.strip_prefix("SIP/2.0 ") {
        let (code, reason) = match rest.find(' ') {
            Some(i) => (&rest[..i], rest[i + 1..].trim()),
            None => (rest, ""),
        };
        if code.len() != 3 || !code.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError::MalformedStartLine);
        }
        let code: u16 = code.parse().map_err(|_| ParseError::MalformedStartLine)?;
        let status = StatusCode::new(code).ok_or(ParseError::MalformedStartLine)?;
        let reason = if reason.is_empty() {
            status.default_reason().to_string()
        } else {
            reason.to_string()
        };
        return Ok(StartLine::Response { status, reason });
    }
    let parts: Vec<&str> = line.split(' ').collect();
    if parts.len() != 3 || parts[2] != "SIP/2.0" {
        return Err(ParseError::MalformedStartLine);
    }
    let method_s = parts[0];
    if method_s.is_empty() || !method_s.chars().all(is_token_char) {
        return Err(ParseError::MalformedStartLine);
    }
    let method: Method = method_s
        .parse()
        .map_err(|_| ParseError::UnknownMethod(method_s.to_string()))?;
    let uri = SipUri::parse(parts[1]).map_err(|_| ParseError::MalformedStartLine)?;
    Ok(StartLine::Request { method, uri })
}

fn apply_header(c: &mut Collected, name: &str, value: &str) -> Result<(), ParseError> {
    if name.len() == 1 {
        // compact form
        return Err(malformed(name));
    }
    match name.to_ascii_lowercase().as_str() {
        "via" => {
            for item in split_list(value) {
                c.vias
                    .push(parse_via(item).ok_or_else(|| malformed("Via"))?);
            }
        }
        "max-forwards" => {
            let v: u8 = value.parse().map_err(|_| malformed(name))?;
            if v > 70 {
                return Err(malformed(name));
            }
            set_once(&mut c.max_forwards, v, name)?;
        }
        "from" => set_once(
            &mut c.from,
            parse_name_addr(value).ok_or_else(|| malformed(name))?,
            name,
        )?,
        "to" => set_once(
            &mut c.to,
            parse_name_addr(value).ok_or_else(|| malformed(name))?,
            name,
        )?,
        "call-id" => {
            if value.is_empty() || value.chars().any(char::is_whitespace) {
                return Err(malformed(name));
            }
            set_once(&mut c.call_id, value.to_string(), name)?;
        }
        "cseq" => {
            let mut it = value.split_whitespace();
            let seq: u32 = it
                .next()
                .and_then(|s| s.parse().ok())
                .filter(|&s| s >= 1)
                .ok_or_else(|| malformed(name))?;
            let method: Method = it
                .next()
                .and_then(|m| m.parse().ok())
                .ok_or_else(|| malformed(name))?;
            if it.next().is_some() {
                return Err(malformed(name));
            }
            set_once(&mut c.cseq, CSeq { seq, method }, name)?;
        }
        "contact" => {
            let items = split_list(value);
            if items.len() != 1 {
                return Err(malformed(name));
            }
            set_once(
                &mut c.contact,
                parse_name_addr(items[0]).ok_or_else(|| malformed(name))?,
                name,
            )?;
        }
        "expires" => {
            let v: u32 = value.parse().map_err(|_| malformed(name))?;
            set_once(&mut c.expires, v, name)?;
        }
        "event" => {
            if value.is_empty() || value.chars().any(char::is_whitespace) {
                return Err(malformed(name));
            }
            set_once(&mut c.event, value.to_string(), name)?;
        }
        "route" | "record-route" => {
            let target = if name.eq_ignore_ascii_case("route") {
                &mut c.routes
            } else {
                &mut c.record_routes
            };
            for item in split_list(value) {
                target.push(parse_name_addr(item).ok_or_else(|| malformed(name))?);
            }
        }
        "content-type" => {
            if value.is_empty() || value.chars().any(char::is_whitespace) {
                return Err(malformed(name));
            }
            set_once(&mut c.content_type, value.to_string(), name)?;
        }
        "content-length" => {
            let v: usize = value.parse().map_err(|_| malformed(name))?;
            set_once(&mut c.content_length, v, name)?;
        }
        _ => c
            .extra
            .push((canonical_header_name(name), value.to_string())),
    }
    Ok(())
}

/// Splits a comma-separated header value, ignoring commas inside quotes or
/// angle brackets.
fn split_list(value: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut quoted, mut start) = (0i32, false, 0usize);
    for (i, ch) in value.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '<' if !quoted => depth += 1,
            '>' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                out.push(value[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(value[start..].trim());
    out
}

fn parse_params(s: &str) -> Option<Params> {
    let mut out = Vec::new();
    for p in s.split(';') {
        if p.trim().is_empty() {
            return None;
        }
        out.push(parse_param(p)?);
    }
    Some(out)
}

fn parse_via(item: &str) -> Option<Via> {
    let item = item.trim();
    let rest = item.strip_prefix("SIP/2.0/")?;
    let sp = rest.find(|c: char| c.is_whitespace())?;
    let transport = &rest[..sp];
    if transport.is_empty() || !transport.chars().all(|c| c.is_ascii_alphanumeric()) {
        return None;
    }
    let rest = rest[sp..].trim_start();
    let (sent_by, params) = match rest.find(';') {
        Some(i) => (rest[..i].trim(), parse_params(&rest[i + 1..])?),
        None => (rest.trim(), Vec::new()),
    };
    let probe = SipUri::parse(&alloc::format!("sip:{sent_by}")).ok()?;
    if probe.user.is_some() || !probe.params.is_empty() {
        return None;
    }
    let mut branch = None;
    let mut others = Vec::new();
    for (n, v) in params {
        if n.eq_ignore_ascii_case("branch") {
            if branch.is_some() {
                return None;
            }
            branch = Some(v?);
        } else {
            others.push((n, v));
        }
    }
    Some(Via {
        transport: transport.to_ascii_uppercase(),
        host: probe.host,
        port: probe.port,
        branch: branch?,
        params: others,
    })
}

fn parse_name_addr(value: &str) -> Option<NameAddr> {
    let value = value.trim();
    let (display, uri_s, rest) = if let Some(open) = value.find('<') {
        let close = value[open..].find('>')? + open;
        let display = value[..open].trim();
        let display = if display.is_empty() {
            None
        } else if let Some(inner) = display.strip_prefix('"') {
            Some(inner.strip_suffix('"')?.to_string())
        } else {
            if !display.chars().all(|c| is_token_char(c) || c == ' ') {
                return None;
            }
            Some(display.to_string())
        };
        (display, &value[open + 1..close], value[close + 1..].trim())
    } else {
        // Without brackets every parameter belongs to the header.
        match value.find(';') {
            Some(i) => (None, &value[..i], &value[i..]),
            None => (None, value, ""),
        }
    };
    let uri = SipUri::parse(uri_s.trim()).ok()?;
    let mut tag = None;
    let mut params = Vec::new();
    if !rest.is_empty() {
        let rest = rest.strip_prefix(';')?;
        for (n, v) in parse_params(rest)? {
            if n.eq_ignore_ascii_case("tag") {
                if tag.is_some() {
                    return None;
                }
                tag = Some(v?);
            } else {
                params.push((n, v));
            }
        }
    }
    Some(NameAddr {
        display,
        uri,
        tag,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const REGISTER: &str = "REGISTER sip:ims.kau.test SIP/2.0\r\nVia: SIP/2.0/UDP 10.0.0.9:5060;branch=z9hG4bKa1\r\nMax-Forwards: 70\r\nFrom: <sip:s1@ims.kau.test>;tag=t1\r\nTo: <sip:s1@ims.kau.test>\r\nCall-ID: c1\r\nCSeq: 1 REGISTER\r\nContact: <sip:s1@10.0.0.9:5060>\r\nExpires: 3600\r\nContent-Length: 0\r\n\r\n";

    #[test]
    fn parses_register() {
        let m = parse_message(REGISTER.as_bytes()).unwrap();
        assert!(m.is_request());
        assert_eq!(m.method(), Method::Register);
        assert_eq!(m.request_uri().unwrap().to_string(), "sip:ims.kau.test");
        assert_eq!(m.expires, Some(3600));
        assert_eq!(m.vias[0].branch, "z9hG4bKa1");
        assert_eq!(m.from.tag.as_deref(), Some("t1"));
        assert_eq!(m.to.tag, None);
    }

    #[test]
    fn parses_response() {
        let raw = "SIP/2.0 200 OK\r\nVia: SIP/2.0/UDP 10.0.0.9:5060;branch=z9hG4bKa1\r\nFrom: <sip:s1@ims.kau.test>;tag=t1\r\nTo: <sip:s1@ims.kau.test>;tag=t2\r\nCall-ID: c1\r\nCSeq: 1 REGISTER\r\nContent-Length: 0\r\n\r\n";
        let m = parse_message(raw.as_bytes()).unwrap();
        assert_eq!(m.status(), Some(StatusCode::OK));
        assert_eq!(
            m.cseq,
            CSeq {
                seq: 1,
                method: Method::Register
            }
        );
    }

    #[test]
    fn content_length_mismatch() {
        let raw = REGISTER.replace("Content-Length: 0", "Content-Length: 5");
        assert_eq!(
            parse_message(raw.as_bytes()),
            Err(ParseError::BodyLengthMismatch)
        );
    }

    #[test]
    fn header_names_are_case_insensitive_and_unknowns_keep_order() {
        let raw = REGISTER
            .replace("Call-ID", "call-id")
            .replace("Expires: 3600\r\n", "Expires: 3600\r\nx-b: 2\r\nX-A: 1\r\n");
        let m = parse_message(raw.as_bytes()).unwrap();
        assert_eq!(m.call_id, "c1");
        assert_eq!(
            m.extra,
            alloc::vec![("X-B".into(), "2".into()), ("X-A".into(), "1".into())]
        );
    }

    #[test]
    fn folded_lines_are_unfolded() {
        let raw = REGISTER.replace(
            "Expires: 3600\r\n",
            "Subject: exam\r\n  announcement\r\nExpires: 3600\r\n",
        );
        let m = parse_message(raw.as_bytes()).unwrap();
        assert_eq!(m.header("subject"), Some("exam announcement"));
    }

    #[test]
    fn compact_forms_are_rejected() {
        let raw = REGISTER.replace("Call-ID: c1", "i: c1");
        assert_eq!(
            parse_message(raw.as_bytes()),
            Err(ParseError::MalformedHeader("I".into()))
        );
    }

    #[test]
    fn missing_headers_are_named() {
        let raw = REGISTER.replace("CSeq: 1 REGISTER\r\n", "");
        assert_eq!(
            parse_message(raw.as_bytes()),
            Err(ParseError::MissingMandatoryHeader("CSeq"))
        );
        let raw = REGISTER.replace("Via: SIP/2.0/UDP 10.0.0.9:5060;branch=z9hG4bKa1\r\n", "");
        assert_eq!(
            parse_message(raw.as_bytes()),
            Err(ParseError::MissingMandatoryHeader("Via"))
        );
    }

    #[test]
    fn unknown_method() {
        let raw = REGISTER
            .replace("REGISTER sip:", "OPTIONS sip:")
            .replace("1 REGISTER", "1 OPTIONS");
        assert_eq!(
            parse_message(raw.as_bytes()),
            Err(ParseError::UnknownMethod("OPTIONS".into()))
        );
    }

    #[test]
    fn multiple_vias_on_one_line() {
        let raw = REGISTER.replace(
            "branch=z9hG4bKa1\r\n",
            "branch=z9hG4bKa1, SIP/2.0/UDP 10.0.1.1;branch=z9hG4bKb2\r\n",
        );
        let m = parse_message(raw.as_bytes()).unwrap();
        assert_eq!(m.vias.len(), 2);
        assert_eq!(m.vias[1].port, None);
    }

    #[test]
    fn bare_uri_header_params_belong_to_header() {
        let raw = REGISTER.replace(
            "From: <sip:s1@ims.kau.test>;tag=t1",
            "From: sip:s1@ims.kau.test;tag=t1",
        );
        let m = parse_message(raw.as_bytes()).unwrap();
        assert_eq!(m.from.tag.as_deref(), Some("t1"));
        assert!(m.from.uri.params.is_empty());
    }
}
