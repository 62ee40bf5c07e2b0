use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::any::Any;

use crate::endpoint::{
    Inbound, Instant, NetAddress, ResponseMatch, TimerConfig, TransactionLayer, TxKey,
};
use crate::node::{Command, CommandError, Node, Outbox};
use crate::sip::{make_request, make_response, Method, NameAddr, SipMessage, SipUri, StatusCode};

/// Call state of a plain SIP user agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallState {
    Idle,
    Calling,
    Established,
    Failed(u16),
}

#[derive(Debug, Clone)]
struct Call {
    invite: SipMessage,
    hop: NetAddress,
    redirects: u8,
}

/// Plain SIP caller/callee used for the proxy and redirect flows: sends
/// INVITE via its outbound hop, follows a 3xx once, acknowledges finals
/// and answers incoming INVITEs with 200.
pub struct SimpleUa {
    name: String,
    identity: SipUri,
    outbound: NetAddress,
    tx: TransactionLayer,
    state: CallState,
    calls: BTreeMap<TxKey, Call>,
}

impl SimpleUa {
    pub fn new(
        name: &str,
        identity: SipUri,
        local: NetAddress,
        outbound: NetAddress,
        timers: TimerConfig,
    ) -> Self {
        SimpleUa {
            name: name.into(),
            identity: identity.aor(),
            outbound,
            tx: TransactionLayer::new(local, timers),
            state: CallState::Idle,
            calls: BTreeMap::new(),
        }
    }

    pub fn with_directory(mut self, directory: BTreeSet<NetAddress>) -> Self {
        self.tx = self.tx.clone().with_directory(directory);
        self
    }

    pub fn state(&self) -> CallState {
        self.state
    }

    fn set_state(&mut self, to: CallState, cause: &str, out: &mut Outbox) {
        if self.state != to {
            out.transition(
                format!("{:?}", self.state),
                format!("{to:?}"),
                format!("{} {cause}", self.identity),
            );
            self.state = to;
        }
    }

    fn contact(&self) -> NameAddr {
        NameAddr::new(self.tx.local().to_uri(self.identity.user.as_deref()))
    }

    pub fn invite(
        &mut self,
        now: Instant,
        target: &SipUri,
        out: &mut Outbox,
    ) -> Result<(), CommandError> {
        if self.state == CallState::Calling {
            return Err(CommandError::Rejected("call already in progress".into()));
        }
        let (host, port) = (self.tx.local().host.clone(), self.tx.local().port);
        let call_id = self.tx.ids().call_id(&host);
        let mut req = make_request(
            self.tx.ids(),
            (&host, port),
            Method::Invite,
            target.clone(),
            self.identity.clone(),
            target.aor(),
            &call_id,
            1,
        );
        req.contact = Some(self.contact());
        let hop = self.outbound.clone();
        self.send_invite(now, req, hop, 0, out)?;
        self.set_state(CallState::Calling, "invite", out);
        Ok(())
    }

    fn send_invite(
        &mut self,
        now: Instant,
        req: SipMessage,
        hop: NetAddress,
        redirects: u8,
        out: &mut Outbox,
    ) -> Result<(), CommandError> {
        match self.tx.send_request(now, req.clone(), hop.clone(), out) {
            Ok(Some(key)) => {
                self.calls.insert(
                    key,
                    Call {
                        invite: req,
                        hop,
                        redirects,
                    },
                );
                Ok(())
            }
            Ok(None) => Ok(()),
            Err(e) => Err(CommandError::Rejected(format!("{e}"))),
        }
    }

    /// ACK for a final response. A non-2xx ACK reuses the INVITE branch; a
    /// 2xx ACK is a new transaction.
    fn ack(&mut self, call: &Call, resp: &SipMessage, out: &mut Outbox) {
        let mut ack = call.invite.clone();
        ack.start = crate::sip::StartLine::Request {
            method: Method::Ack,
            uri: call
                .invite
                .request_uri()
                .cloned()
                .unwrap_or_else(|| resp.to.uri.clone()),
        };
        ack.cseq.method = Method::Ack;
        ack.to = resp.to.clone();
        ack.contact = None;
        ack.body.clear();
        ack.content_type = None;
        if resp.status().is_some_and(StatusCode::is_success) {
            let branch = self.tx.ids().branch();
            if let Some(v) = ack.vias.first_mut() {
                v.branch = branch;
            }
        }
        let _ = self.tx.send_stateless(call.hop.clone(), ack, out);
    }

    fn on_response(&mut self, now: Instant, resp: SipMessage, out: &mut Outbox) {
        let ResponseMatch::Deliver {
            key,
            is_final: true,
            ..
        } = self.tx.match_response(now, &resp)
        else {
            return;
        };
        let Some(call) = self.calls.remove(&key) else {
            return;
        };
        let code = resp.status().map_or(500, StatusCode::code);
        self.ack(&call, &resp, out);
        match code {
            200..=299 => self.set_state(CallState::Established, "answered", out),
            300..=399 if call.redirects == 0 => {
                let Some(contact) = resp.contact.as_ref().map(|c| c.uri.clone()) else {
                    return self.set_state(
                        CallState::Failed(code),
                        "redirect without contact",
                        out,
                    );
                };
                let mut again = call.invite.clone();
                if let Some(uri) = again.request_uri_mut() {
                    *uri = contact.clone();
                }
                again.cseq.seq += 1;
                let branch = self.tx.ids().branch();
                if let Some(v) = again.vias.first_mut() {
                    v.branch = branch;
                }
                if self
                    .send_invite(now, again, NetAddress::from_uri(&contact), 1, out)
                    .is_err()
                {
                    self.set_state(CallState::Failed(code), "redirect target unknown", out);
                }
            }
            _ => self.set_state(CallState::Failed(code), "rejected", out),
        }
    }

    fn on_request(&mut self, now: Instant, req: SipMessage, out: &mut Outbox) {
        if req.method() == Method::Ack {
            if self.state != CallState::Established {
                self.set_state(CallState::Established, "acknowledged", out);
            }
            return;
        }
        if self.tx.receive_request(now, &req, out) != Inbound::New {
            return;
        }
        let status = match req.method() {
            Method::Invite | Method::Bye => StatusCode::OK,
            _ => StatusCode::TEMPORARILY_UNAVAILABLE,
        };
        if let Ok(mut r) = make_response(&req, status, Vec::new()) {
            if req.method() == Method::Invite {
                r.contact = Some(self.contact());
            }
            let _ = self.tx.send_response(now, r, out);
        }
    }
}

impl Node for SimpleUa {
    fn name(&self) -> &str {
        &self.name
    }

    fn address(&self) -> &NetAddress {
        self.tx.local()
    }

    fn on_sip(&mut self, now: Instant, _from: &NetAddress, msg: SipMessage, out: &mut Outbox) {
        if msg.is_request() {
            self.on_request(now, msg, out);
        } else {
            self.on_response(now, msg, out);
        }
    }

    fn on_timer(&mut self, now: Instant, out: &mut Outbox) {
        for t in self.tx.on_timer(now, out) {
            if self.calls.remove(&t.key).is_some() {
                self.set_state(CallState::Failed(408), "timeout", out);
            }
        }
    }

    fn next_deadline(&self) -> Option<Instant> {
        self.tx.next_deadline()
    }

    fn on_command(
        &mut self,
        now: Instant,
        command: &Command,
        out: &mut Outbox,
    ) -> Result<(), CommandError> {
        match command {
            Command::Invite { target } => self.invite(now, target, out),
            other => Err(CommandError::Unsupported {
                node: self.name.clone(),
                command: other.name().into(),
            }),
        }
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
