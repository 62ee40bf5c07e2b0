use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use core::any::Any;

use super::forward::{ProxyCore, Relay};
use crate::endpoint::{Instant, NetAddress, TimerConfig};
use crate::node::{Node, Outbox};
use crate::sip::{Method, SipMessage, SipUri, StatusCode};

/// A UA reachable through this P-CSCF.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UaRoute {
    pub addr: NetAddress,
    pub scscf: Option<NetAddress>,
    pub expires_at: Instant,
}

/// Edge proxy: first and last IMS hop for every UA.
#[derive(Debug)]
pub struct Pcscf {
    name: String,
    core: ProxyCore,
    home_icscf: NetAddress,
    core_peers: BTreeSet<NetAddress>,
    ua_routes: BTreeMap<String, UaRoute>,
}

impl Pcscf {
    pub fn new(name: &str, addr: NetAddress, home_icscf: NetAddress, timers: TimerConfig) -> Self {
        let mut core_peers = BTreeSet::new();
        core_peers.insert(home_icscf.clone());
        Pcscf {
            name: name.into(),
            core: ProxyCore::new(addr, timers),
            home_icscf,
            core_peers,
            ua_routes: BTreeMap::new(),
        }
    }

    /// Restricts destinations to the topology registry.
    pub fn with_directory(mut self, directory: BTreeSet<NetAddress>) -> Self {
        self.core.tx = self.core.tx.clone().with_directory(directory);
        self
    }

    /// Addresses on the network side; requests from them travel towards UAs.
    pub fn with_core_peers(mut self, peers: impl IntoIterator<Item = NetAddress>) -> Self {
        self.core_peers.extend(peers);
        self
    }

    /// Live route for a public identity.
    pub fn route(&self, now: Instant, impu: &SipUri) -> Option<&UaRoute> {
        self.ua_routes
            .get(&impu.aor_key())
            .filter(|r| r.expires_at > now)
    }

    pub fn routes(&self) -> impl Iterator<Item = (&String, &UaRoute)> {
        self.ua_routes.iter()
    }

    fn purge(&mut self, now: Instant) {
        self.ua_routes.retain(|_, r| r.expires_at > now);
    }

    fn path_value(&self) -> String {
        format!("<{};lr>", self.core.addr().to_uri(Some("pcscf")))
    }

    fn on_request(&mut self, now: Instant, from: &NetAddress, req: SipMessage, out: &mut Outbox) {
        if !self.core.accept(now, &req, out) {
            return;
        }
        if self.core_peers.contains(from) {
            // Terminating side: towards a registered UA.
            let target = req.request_uri().cloned();
            match target.and_then(|t| self.route(now, &t).map(|r| r.addr.clone())) {
                Some(ua) => self.core.forward(now, req, ua, out),
                None if req.method().is_fire_and_forget() => {}
                None => self.core.respond(now, &req, StatusCode::NOT_FOUND, out),
            }
            return;
        }
        if req.method() == Method::Register {
            let mut fwd = req;
            let path = self.path_value();
            fwd.set_header("Path", &path);
            let icscf = self.home_icscf.clone();
            self.core.forward(now, fwd, icscf, out);
            return;
        }
        // Originating side: straight to the S-CSCF learned at registration.
        let scscf = self.route(now, &req.from.uri).and_then(|r| r.scscf.clone());
        match scscf {
            Some(s) => self.core.forward(now, req, s, out),
            None if req.method().is_fire_and_forget() => {}
            None => self.core.respond(now, &req, StatusCode::FORBIDDEN, out),
        }
    }

    fn on_response(&mut self, now: Instant, resp: SipMessage, out: &mut Outbox) {
        let Relay::Forwarded {
            pending,
            mut response,
            is_final,
        } = self.core.on_response(now, resp, out)
        else {
            return;
        };
        if is_final && response.method() == Method::Register {
            let service_route = response.remove_header("Service-Route");
            if response.status().is_some_and(StatusCode::is_success) {
                self.learn_registration(
                    now,
                    &pending.inbound,
                    &response,
                    service_route.as_deref(),
                    out,
                );
            }
        }
        self.core.relay(now, response, out);
    }

    fn learn_registration(
        &mut self,
        now: Instant,
        req: &SipMessage,
        resp: &SipMessage,
        service_route: Option<&str>,
        out: &mut Outbox,
    ) {
        let key = req.to.uri.aor_key();
        let granted = resp.expires.unwrap_or(0);
        if granted == 0 {
            if self.ua_routes.remove(&key).is_some() {
                out.transition("routed", "unrouted", format!("{key} deregistered"));
            }
            return;
        }
        let Some(contact) = &req.contact else { return };
        let scscf = service_route
            .and_then(|v| SipUri::parse(v.trim().trim_start_matches('<').split('>').next()?).ok())
            .map(|u| NetAddress::from_uri(&u));
        let fresh = !self.ua_routes.contains_key(&key);
        self.ua_routes.insert(
            key.clone(),
            UaRoute {
                addr: NetAddress::from_uri(&contact.uri),
                scscf,
                expires_at: now.plus_secs(u64::from(granted)),
            },
        );
        if fresh {
            out.transition("unrouted", "routed", format!("{key} registered"));
        }
    }
}

impl Node for Pcscf {
    fn name(&self) -> &str {
        &self.name
    }

    fn address(&self) -> &NetAddress {
        self.core.addr()
    }

    fn on_sip(&mut self, now: Instant, from: &NetAddress, msg: SipMessage, out: &mut Outbox) {
        self.purge(now);
        if msg.is_request() {
            self.on_request(now, from, msg, out);
        } else {
            self.on_response(now, msg, out);
        }
    }

    fn on_timer(&mut self, now: Instant, out: &mut Outbox) {
        self.purge(now);
        self.core.on_timer(now, out);
    }

    fn next_deadline(&self) -> Option<Instant> {
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
