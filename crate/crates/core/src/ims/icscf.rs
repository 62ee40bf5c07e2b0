use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use core::any::Any;

use super::forward::{ProxyCore, Relay};
use crate::endpoint::{Instant, NetAddress, TimerConfig};
use crate::hss::{CxClient, CxMessage, CxResult};
use crate::node::{Node, Outbox};
use crate::sip::{Method, SipMessage, StatusCode};

/// Interrogating CSCF: asks the HSS which S-CSCF serves an identity and
/// forwards there. It adds nothing but its own Via, so the S-CSCF address
/// never appears in headers it inserts.
pub struct Icscf {
    name: String,
    core: ProxyCore,
    hss: Box<dyn CxClient>,
    scscf_directory: BTreeMap<String, NetAddress>,
    next_cx: u64,
}

impl Icscf {
    pub fn new(
        name: &str,
        addr: NetAddress,
        hss: Box<dyn CxClient>,
        scscf_directory: BTreeMap<String, NetAddress>,
        timers: TimerConfig,
    ) -> Self {
        Icscf {
            name: name.into(),
            core: ProxyCore::new(addr, timers),
            hss,
            scscf_directory,
            next_cx: 1,
        }
    }

    pub fn with_directory(mut self, directory: BTreeSet<NetAddress>) -> Self {
        self.core.tx = self.core.tx.clone().with_directory(directory);
        self
    }

    fn query(&mut self, req: CxMessage, out: &mut Outbox) -> Result<CxMessage, ()> {
        let answer = self.hss.call(&req);
        out.cx(self.hss.peer(), req.redacted(), answer.clone());
        answer.map_err(|_| ())
    }

    fn on_request(&mut self, now: Instant, req: SipMessage, out: &mut Outbox) {
        if !self.core.accept(now, &req, out) {
            return;
        }
        let id = self.next_cx;
        self.next_cx += 1;
        let query = if req.method() == Method::Register {
            CxMessage::uar(id, req.to.uri.aor())
        } else {
            match req.request_uri() {
                Some(uri) => CxMessage::lir(id, uri.aor()),
                None => return,
            }
        };
        let status = match self.query(query, out) {
            Err(()) => StatusCode::SERVER_ERROR,
            Ok(a) => match a.result {
                Some(CxResult::Success) => {
                    let dst = a
                        .scscf_name
                        .as_ref()
                        .and_then(|n| self.scscf_directory.get(n))
                        .cloned();
                    match dst {
                        Some(dst) => return self.core.forward(now, req, dst, out),
                        None => StatusCode::SERVER_ERROR,
                    }
                }
                Some(CxResult::AuthRejected) => StatusCode::FORBIDDEN,
                _ => StatusCode::NOT_FOUND,
            },
        };
        if !req.method().is_fire_and_forget() {
            self.core.respond(now, &req, status, out);
        }
    }
}

impl Node for Icscf {
    fn name(&self) -> &str {
        &self.name
    }

    fn address(&self) -> &NetAddress {
        self.core.addr()
    }

    fn on_sip(&mut self, now: Instant, _from: &NetAddress, msg: SipMessage, out: &mut Outbox) {
        if msg.is_request() {
            self.on_request(now, msg, out);
        } else if let Relay::Forwarded { response, .. } = self.core.on_response(now, msg, out) {
            self.core.relay(now, response, out);
        }
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
