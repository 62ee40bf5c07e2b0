//! Blocking HTTP client and server glue around the core request types.

use std::io::Read;
use std::net::SocketAddr;
use std::time::Duration;

use imsbed_core::endpoint::NetAddress;
use imsbed_core::http::{percent_encode, HttpRequest, HttpResponse};
use imsbed_core::sip::SipUri;
use imsbed_core::xdms::{DocKey, XdmDocument, XdmsClient, XdmsError};

/// Status used when the peer could not be reached at all.
pub const UNREACHABLE: u16 = 503;

fn read_response(resp: ureq::Response) -> HttpResponse {
    let status = resp.status();
    let headers = resp
        .headers_names()
        .into_iter()
        .filter_map(|n| resp.header(&n).map(|v| (n.clone(), v.to_string())))
        .collect();
    let mut body = Vec::new();
    let _ = resp.into_reader().take(16 << 20).read_to_end(&mut body);
    HttpResponse {
        status,
        headers,
        body,
    }
}

/// Sends `req` to `dst` and waits for the answer. Transport failures come
/// back as a 503 `Unreachable` error body.
pub fn http_call(dst: &NetAddress, req: &HttpRequest, timeout: Duration) -> HttpResponse {
    let url = format!("http://{}:{}{}", dst.host, dst.port, req.path);
    let mut call = ureq::AgentBuilder::new()
        .timeout(timeout)
        .build()
        .request(&req.method, &url);
    for (n, v) in &req.headers {
        call = call.set(n, v);
    }
    match call.send_bytes(&req.body) {
        Ok(resp) | Err(ureq::Error::Status(_, resp)) => read_response(resp),
        Err(e) => {
            log::debug!("HTTP {} {url}: {e}", req.method);
            HttpResponse::error(UNREACHABLE, "Unreachable")
        }
    }
}

/// Converts an incoming server request into the core type.
pub fn from_tiny(req: &mut tiny_http::Request) -> HttpRequest {
    let mut body = Vec::new();
    let _ = req.as_reader().take(16 << 20).read_to_end(&mut body);
    HttpRequest {
        method: req.method().as_str().to_string(),
        path: req.url().to_string(),
        headers: req
            .headers()
            .iter()
            .map(|h| {
                (
                    h.field.as_str().as_str().to_string(),
                    h.value.as_str().to_string(),
                )
            })
            .collect(),
        body,
    }
}

pub fn respond_tiny(req: tiny_http::Request, resp: HttpResponse) {
    let mut out = tiny_http::Response::from_data(resp.body).with_status_code(resp.status);
    for (n, v) in &resp.headers {
        if let Ok(h) = tiny_http::Header::from_bytes(n.as_bytes(), v.as_bytes()) {
            out.add_header(h);
        }
    }
    if let Err(e) = req.respond(out) {
        log::debug!("HTTP response not sent: {e}");
    }
}

/// Binds an HTTP server on `addr`.
pub fn http_server(addr: SocketAddr) -> std::io::Result<tiny_http::Server> {
    tiny_http::Server::http(addr).map_err(std::io::Error::other)
}

/// XDMS document access over the XCAP-style document RPC.
pub struct HttpXdms {
    peer: NetAddress,
    timeout: Duration,
}

impl HttpXdms {
    pub fn new(peer: NetAddress) -> Self {
        HttpXdms {
            peer,
            timeout: Duration::from_secs(2),
        }
    }

    fn doc_path(key: &DocKey) -> String {
        format!(
            "/xcap/{}/users/{}/{}",
            percent_encode(&key.auid),
            percent_encode(&key.owner),
            percent_encode(&key.doc_name)
        )
    }

    fn error_of(resp: &HttpResponse) -> XdmsError {
        let kind = resp
            .json_body()
            .and_then(|v| v["error"].as_str().map(str::to_string))
            .unwrap_or_default();
        match (resp.status, kind.as_str()) {
            (412, _) => XdmsError::EtagMismatch,
            (404, "UnknownGroup") => XdmsError::UnknownGroup(kind),
            (400, _) => XdmsError::MalformedGroupXml(imsbed_core::xdms::GroupError::Xml(kind)),
            _ => XdmsError::NotFound,
        }
    }
}

fn etag_of(resp: &HttpResponse) -> String {
    resp.header("ETag")
        .unwrap_or_default()
        .trim_matches('"')
        .to_string()
}

impl XdmsClient for HttpXdms {
    fn put_document(
        &mut self,
        key: DocKey,
        content_type: &str,
        body: Vec<u8>,
        if_etag: Option<&str>,
    ) -> Result<String, XdmsError> {
        let mut req = HttpRequest::new("PUT", &Self::doc_path(&key))
            .with_header("Content-Type", content_type)
            .with_body(body);
        if let Some(e) = if_etag {
            req = req.with_header("If-Match", &format!("\"{e}\""));
        }
        let resp = http_call(&self.peer, &req, self.timeout);
        if (200..300).contains(&resp.status) {
            Ok(etag_of(&resp))
        } else {
            Err(Self::error_of(&resp))
        }
    }

    fn get_document(&mut self, key: &DocKey) -> Result<XdmDocument, XdmsError> {
        let resp = http_call(
            &self.peer,
            &HttpRequest::new("GET", &Self::doc_path(key)),
            self.timeout,
        );
        if resp.status != 200 {
            return Err(Self::error_of(&resp));
        }
        Ok(XdmDocument {
            auid: key.auid.clone(),
            owner: key.owner.clone(),
            doc_name: key.doc_name.clone(),
            content_type: resp.header("Content-Type").unwrap_or_default().to_string(),
            etag: etag_of(&resp),
            body: resp.body,
        })
    }

    fn resolve_group(&mut self, group_uri: &SipUri) -> Result<Vec<SipUri>, XdmsError> {
        let path = format!("/groups?uri={}", percent_encode(&group_uri.to_string()));
        let resp = http_call(&self.peer, &HttpRequest::new("GET", &path), self.timeout);
        if resp.status != 200 {
            return Err(XdmsError::UnknownGroup(group_uri.to_string()));
        }
        let members = resp
            .json_body()
            .and_then(|v| {
                v["members"].as_array().map(|a| {
                    a.iter()
                        .filter_map(|m| m.as_str().and_then(|s| SipUri::parse(s).ok()))
                        .collect()
                })
            })
            .unwrap_or_default();
        Ok(members)
    }
}
