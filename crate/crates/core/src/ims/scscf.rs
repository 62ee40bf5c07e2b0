use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::any::Any;

use super::forward::{ProxyCore, Relay};
use super::ifc::evaluate_ifc;
use crate::endpoint::{Instant, NetAddress, TimerConfig};
use crate::hss::{Assignment, CxClient, CxMessage, CxResult, SubscriberProfile};
use crate::node::{Node, Outbox};
use crate::sip::{Method, NameAddr, SipMessage, SipUri, StatusCode};

/// Upper bound on granted registration lifetime, in seconds.
pub const MAX_EXPIRES: u32 = 3600;

/// Event package that the S-CSCF hands to the XDMS.
pub const EXAM_EVENT: &str = "exam-service";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub contact: SipUri,
    pub pcscf: NetAddress,
    pub created_at: Instant,
    pub expires_at: Instant,
}

impl Binding {
    pub fn is_live(&self, now: Instant) -> bool {
        self.expires_at > now
    }
}

#[derive(Debug, Clone)]
pub struct ScscfConfig {
    /// Capability name the HSS hands out for this S-CSCF.
    pub scscf_name: String,
    pub home_domain: String,
    pub xdms: NetAddress,
    /// Application servers whose requests go straight to terminating
    /// routing.
    pub app_servers: BTreeSet<NetAddress>,
    pub timers: TimerConfig,
}

/// Serving CSCF: registrar, trigger evaluation and terminating routing.
pub struct Scscf {
    name: String,
    cfg: ScscfConfig,
    core: ProxyCore,
    hss: Box<dyn CxClient>,
    bindings: BTreeMap<String, Binding>,
    profiles: BTreeMap<String, SubscriberProfile>,
    next_cx: u64,
}

impl Scscf {
    pub fn new(name: &str, addr: NetAddress, hss: Box<dyn CxClient>, cfg: ScscfConfig) -> Self {
        Scscf {
            name: name.into(),
            core: ProxyCore::new(addr, cfg.timers),
            cfg,
            hss,
            bindings: BTreeMap::new(),
            profiles: BTreeMap::new(),
            next_cx: 1,
        }
    }

    pub fn with_directory(mut self, directory: BTreeSet<NetAddress>) -> Self {
        self.core.tx = self.core.tx.clone().with_directory(directory);
        self
    }

    pub fn binding(&self, now: Instant, impu: &SipUri) -> Option<&Binding> {
        self.bindings
            .get(&impu.aor_key())
            .filter(|b| b.is_live(now))
    }

    /// All stored bindings, including any not yet swept.
    pub fn bindings(&self) -> impl Iterator<Item = (&String, &Binding)> {
        self.bindings.iter()
    }

    fn cx(&mut self, req: CxMessage, out: &mut Outbox) -> Option<CxMessage> {
        let answer = self.hss.call(&req);
        out.cx(self.hss.peer(), req.redacted(), answer.clone());
        answer.ok()
    }

    fn next_id(&mut self) -> u64 {
        let id = self.next_cx;
        self.next_cx += 1;
        id
    }

    fn drop_binding(&mut self, key: &str, cause: &str, out: &mut Outbox) {
        if self.bindings.remove(key).is_some() {
            self.profiles.remove(key);
            out.transition("bound", "unbound", format!("{key} {cause}"));
        }
    }

    /// Removes expired bindings and releases them at the HSS.
    pub fn sweep(&mut self, now: Instant, out: &mut Outbox) {
        let expired: Vec<String> = self
            .bindings
            .iter()
            .filter(|(_, b)| !b.is_live(now))
            .map(|(k, _)| k.clone())
            .collect();
        for key in expired {
            if let Ok(impu) = SipUri::parse(&key) {
                let id = self.next_id();
                let name = self.cfg.scscf_name.clone();
                self.cx(
                    CxMessage::sar(id, impu, &name, Assignment::Deregister, None),
                    out,
                );
            }
            self.drop_binding(&key, "expired", out);
        }
    }

    fn handle_register(
        &mut self,
        now: Instant,
        from: &NetAddress,
        req: SipMessage,
        out: &mut Outbox,
    ) {
        let impu = req.to.uri.aor();
        let key = impu.to_string();
        let Some(contact) = req.contact.clone() else {
            return self
                .core
                .respond(now, &req, StatusCode::TEMPORARILY_UNAVAILABLE, out);
        };
        let offered = req
            .expires
            .or_else(|| {
                contact
                    .param("expires")
                    .flatten()
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or(MAX_EXPIRES);
        let passkey = req.header("X-Passkey").map(String::from);
        let assignment = if offered == 0 {
            Assignment::Deregister
        } else {
            Assignment::Register
        };
        let id = self.next_id();
        let name = self.cfg.scscf_name.clone();
        let sar = CxMessage::sar(id, impu, &name, assignment, passkey.as_deref());
        let Some(answer) = self.cx(sar, out) else {
            return self.core.respond(now, &req, StatusCode::SERVER_ERROR, out);
        };
        match answer.result {
            Some(CxResult::Success) => {}
            Some(CxResult::AuthRejected) => {
                return self.core.respond(now, &req, StatusCode::FORBIDDEN, out)
            }
            _ => return self.core.respond(now, &req, StatusCode::NOT_FOUND, out),
        }
        if assignment == Assignment::Deregister {
            self.drop_binding(&key, "deregistered", out);
            return self
                .core
                .respond_with(now, &req, StatusCode::OK, |r| r.expires = Some(0), out);
        }
        let granted = offered.min(MAX_EXPIRES);
        let pcscf = req
            .header("Path")
            .and_then(|p| SipUri::parse(p.trim().trim_start_matches('<').split('>').next()?).ok())
            .map(|u| NetAddress::from_uri(&u))
            .unwrap_or_else(|| from.clone());
        let fresh = !self.bindings.contains_key(&key);
        self.bindings.insert(
            key.clone(),
            Binding {
                contact: contact.uri.clone(),
                pcscf,
                created_at: now,
                expires_at: now.plus_secs(u64::from(granted)),
            },
        );
        if let Some(p) = answer.profile {
            self.profiles.insert(key.clone(), p);
        }
        if fresh {
            out.transition("unbound", "bound", format!("{key} registered"));
        }
        let service_route = format!("<{};lr>", self.core.addr().to_uri(Some("orig")));
        let granted_s = granted.to_string();
        self.core.respond_with(
            now,
            &req,
            StatusCode::OK,
            |r| {
                let mut c = NameAddr::new(contact.uri.clone());
                c.params.push(("expires".into(), Some(granted_s)));
                r.contact = Some(c);
                r.expires = Some(granted);
                r.set_header("Service-Route", &service_route);
            },
            out,
        );
    }

    fn route_terminating(&mut self, now: Instant, req: SipMessage, out: &mut Outbox) {
        let Some(uri) = req.request_uri().cloned() else {
            return;
        };
        let status = if !uri.host.eq_ignore_ascii_case(&self.cfg.home_domain) {
            StatusCode::NOT_FOUND
        } else if let Some(b) = self.binding(now, &uri) {
            let pcscf = b.pcscf.clone();
            return self.core.forward(now, req, pcscf, out);
        } else {
            StatusCode::TEMPORARILY_UNAVAILABLE
        };
        if !req.method().is_fire_and_forget() {
            self.core.respond(now, &req, status, out);
        }
    }

    fn route(&mut self, now: Instant, from: &NetAddress, req: SipMessage, out: &mut Outbox) {
        if self.cfg.app_servers.contains(from) || req.method() == Method::Notify {
            return self.route_terminating(now, req, out);
        }
        let origin = req.from.uri.aor_key();
        if self.binding(now, &req.from.uri).is_none() {
            if !req.method().is_fire_and_forget() {
                self.core.respond(now, &req, StatusCode::FORBIDDEN, out);
            }
            return;
        }
        if req.method() == Method::Subscribe
            && req
                .event
                .as_deref()
                .is_some_and(|e| e.eq_ignore_ascii_case(EXAM_EVENT))
        {
            let xdms = self.cfg.xdms.clone();
            return self.core.forward(now, req, xdms, out);
        }
        let target = self
            .profiles
            .get(&origin)
            .map(|p| evaluate_ifc(&p.trigger_rules, &req))
            .and_then(|t| t.into_iter().next());
        match target {
            Some(app) => self.core.forward(now, req, app, out),
            None => self.route_terminating(now, req, out),
        }
    }
}

impl Node for Scscf {
    fn name(&self) -> &str {
        &self.name
    }

    fn address(&self) -> &NetAddress {
        self.core.addr()
    }

    fn on_sip(&mut self, now: Instant, from: &NetAddress, msg: SipMessage, out: &mut Outbox) {
        if !msg.is_request() {
            if let Relay::Forwarded { response, .. } = self.core.on_response(now, msg, out) {
                self.core.relay(now, response, out);
            }
            return;
        }
        if !self.core.accept(now, &msg, out) {
            return;
        }
        if msg.method() == Method::Register {
            self.handle_register(now, from, msg, out);
        } else {
            self.route(now, from, msg, out);
        }
    }

    fn on_timer(&mut self, now: Instant, out: &mut Outbox) {
        self.sweep(now, out);
        self.core.on_timer(now, out);
    }

    fn next_deadline(&self) -> Option<Instant> {
        let expiry = self.bindings.values().map(|b| b.expires_at).min();
        match (self.core.next_deadline(), expiry) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn next_activity(&self) -> Option<Instant> {
        self.core.next_deadline()
    }

    fn transactions_settled(&self) -> bool {
        self.core.settled()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
