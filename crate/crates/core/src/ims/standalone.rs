//! Plain SIP proxy and redirect servers, outside the IMS chain.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::any::Any;

use super::forward::{ProxyCore, Relay};
use crate::endpoint::{Instant, NetAddress, TimerConfig, TransactionLayer};
use crate::node::{Node, Outbox};
use crate::sip::{make_response, Method, NameAddr, SipMessage, SipUri, StatusCode};

/// Address-of-record to contact URI.
pub type LocationTable = BTreeMap<String, SipUri>;

fn learn(locations: &mut LocationTable, req: &SipMessage) -> StatusCode {
    let Some(contact) = &req.contact else {
        return StatusCode::TEMPORARILY_UNAVAILABLE;
    };
    let key = req.to.uri.aor_key();
    if req.expires == Some(0) {
        locations.remove(&key);
    } else {
        locations.insert(key, contact.uri.clone());
    }
    StatusCode::OK
}

/// Stateful forwarding proxy with a static (or REGISTER-fed) location table.
#[derive(Debug)]
pub struct ProxyServer {
    name: String,
    core: ProxyCore,
    locations: LocationTable,
}

impl ProxyServer {
    pub fn new(name: &str, addr: NetAddress, timers: TimerConfig) -> Self {
        ProxyServer {
            name: name.into(),
            core: ProxyCore::new(addr, timers),
            locations: LocationTable::new(),
        }
    }

    pub fn with_directory(mut self, directory: BTreeSet<NetAddress>) -> Self {
        self.core.tx = self.core.tx.clone().with_directory(directory);
        self
    }

    pub fn with_location(mut self, aor: &SipUri, contact: SipUri) -> Self {
        self.locations.insert(aor.aor_key(), contact);
        self
    }

    fn next_hop(&self, uri: &SipUri) -> NetAddress {
        match self.locations.get(&uri.aor_key()) {
            Some(c) => NetAddress::from_uri(c),
            None => NetAddress::from_uri(uri),
        }
    }
}

impl Node for ProxyServer {
    fn name(&self) -> &str {
        &self.name
    }

    fn address(&self) -> &NetAddress {
        self.core.addr()
    }

    fn on_sip(&mut self, now: Instant, _from: &NetAddress, msg: SipMessage, out: &mut Outbox) {
        if !msg.is_request() {
            if let Relay::Forwarded { response, .. } = self.core.on_response(now, msg, out) {
                self.core.relay(now, response, out);
            }
            return;
        }
        if !self.core.accept(now, &msg, out) {
            return;
        }
        let Some(uri) = msg.request_uri().cloned() else {
            return;
        };
        if msg.method() == Method::Register && uri.user.is_none() {
            let status = learn(&mut self.locations, &msg);
            return self.core.respond(now, &msg, status, out);
        }
        if msg.method() != Method::Ack && !self.locations.contains_key(&uri.aor_key()) {
            return self.core.respond(now, &msg, StatusCode::NOT_FOUND, out);
        }
        let dst = self.next_hop(&uri);
        self.core.forward(now, msg, dst, out);
    }

    fn on_timer(&mut self, now: Instant, out: &mut Outbox) {
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

/// Answers every INVITE with 302 and the callee's contact; never forwards.
#[derive(Debug)]
pub struct RedirectServer {
    name: String,
    tx: TransactionLayer,
    locations: LocationTable,
}

impl RedirectServer {
    pub fn new(name: &str, addr: NetAddress, timers: TimerConfig) -> Self {
        RedirectServer {
            name: name.into(),
            tx: TransactionLayer::new(addr, timers),
            locations: LocationTable::new(),
        }
    }

    pub fn with_location(mut self, aor: &SipUri, contact: SipUri) -> Self {
        self.locations.insert(aor.aor_key(), contact);
        self
    }
}

impl Node for RedirectServer {
    fn name(&self) -> &str {
        &self.name
    }

    fn address(&self) -> &NetAddress {
        self.tx.local()
    }

    fn on_sip(&mut self, now: Instant, _from: &NetAddress, msg: SipMessage, out: &mut Outbox) {
        // ACKs for the 302 end here; responses have nothing to match.
        if !msg.is_request() || msg.method() == Method::Ack {
            return;
        }
        if self.tx.receive_request(now, &msg, out) != crate::endpoint::Inbound::New {
            return;
        }
        let Some(uri) = msg.request_uri() else { return };
        let (status, contact) = if msg.method() == Method::Register && uri.user.is_none() {
            (learn(&mut self.locations, &msg), None)
        } else {
            match self.locations.get(&uri.aor_key()) {
                Some(c) => (StatusCode::MOVED_TEMPORARILY, Some(c.clone())),
                None => (StatusCode::NOT_FOUND, None),
            }
        };
        if let Ok(mut resp) = make_response(&msg, status, Vec::new()) {
            resp.contact = contact.map(NameAddr::new);
            let _ = self.tx.send_response(now, resp, out);
        }
    }

    fn on_timer(&mut self, now: Instant, out: &mut Outbox) {
        self.tx.on_timer(now, out);
    }

    fn next_deadline(&self) -> Option<Instant> {
        self.tx.next_deadline()
    }

    fn transactions_settled(&self) -> bool {
        self.tx.settled()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
