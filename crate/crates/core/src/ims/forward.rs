use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::endpoint::{
    Inbound, Instant, NetAddress, ResponseMatch, TimerConfig, TransactionLayer, TxKey,
};
use crate::node::Outbox;
use crate::sip::{make_response, SipMessage, StatusCode, Via};

#[derive(Debug, Clone)]
pub(crate) struct PendingForward {
    /// The request as it arrived, before this hop added its Via.
    pub inbound: SipMessage,
}

/// Outcome of a response arriving at a stateful proxy.
#[derive(Debug)]
pub(crate) enum Relay {
    /// First copy of a response to something this hop forwarded. The
    /// response already has this hop's Via removed.
    Forwarded {
        pending: PendingForward,
        response: SipMessage,
        is_final: bool,
    },
    Handled,
}

/// Transaction-stateful forwarding shared by the CSCFs and the standalone
/// proxy: every forwarded request gets its own client transaction, so each
/// hop retransmits independently and answers its upstream with 408 when
/// the downstream leg times out.
#[derive(Debug, Clone)]
pub(crate) struct ProxyCore {
    pub tx: TransactionLayer,
    pending: BTreeMap<TxKey, PendingForward>,
}

impl ProxyCore {
    pub fn new(addr: NetAddress, timers: TimerConfig) -> Self {
        ProxyCore {
            tx: TransactionLayer::new(addr, timers),
            pending: BTreeMap::new(),
        }
    }

    pub fn addr(&self) -> &NetAddress {
        self.tx.local()
    }

    /// Server-side bookkeeping for an incoming request. False means the
    /// request was a retransmission and has been dealt with.
    pub fn accept(&mut self, now: Instant, req: &SipMessage, out: &mut Outbox) -> bool {
        self.tx.receive_request(now, req, out) == Inbound::New
    }

    pub fn respond(
        &mut self,
        now: Instant,
        req: &SipMessage,
        status: StatusCode,
        out: &mut Outbox,
    ) {
        self.respond_with(now, req, status, |_| {}, out);
    }

    pub fn respond_with(
        &mut self,
        now: Instant,
        req: &SipMessage,
        status: StatusCode,
        edit: impl FnOnce(&mut SipMessage),
        out: &mut Outbox,
    ) {
        if let Ok(mut resp) = make_response(req, status, Vec::new()) {
            edit(&mut resp);
            let _ = self.tx.send_response(now, resp, out);
        }
    }

    /// Pushes this hop's Via, decrements Max-Forwards and sends `req`
    /// towards `dst`. Requests with Max-Forwards 0 are answered 480 here.
    /// ACK and NOTIFY are relayed without a client transaction.
    pub fn forward(
        &mut self,
        now: Instant,
        mut req: SipMessage,
        dst: NetAddress,
        out: &mut Outbox,
    ) {
        let inbound = req.clone();
        if req.max_forwards == Some(0) {
            if !req.method().is_fire_and_forget() {
                self.respond(now, &inbound, StatusCode::TEMPORARILY_UNAVAILABLE, out);
            }
            return;
        }
        req.max_forwards = Some(req.max_forwards.unwrap_or(70).saturating_sub(1));
        let branch = self.tx.ids().branch();
        let (host, port) = (self.addr().host.clone(), self.addr().port);
        req.vias.insert(0, Via::udp(&host, port, &branch));
        match self.tx.send_request(now, req, dst, out) {
            Ok(Some(key)) => {
                self.pending.insert(key, PendingForward { inbound });
            }
            Ok(None) => {}
            Err(_) => {
                if !inbound.method().is_fire_and_forget() {
                    self.respond(now, &inbound, StatusCode::NOT_FOUND, out);
                }
            }
        }
    }

    /// Correlates a response. Responses to stateless relays (NOTIFY) are
    /// passed on statelessly by popping this hop's Via.
    pub fn on_response(&mut self, now: Instant, mut resp: SipMessage, out: &mut Outbox) -> Relay {
        match self.tx.match_response(now, &resp) {
            ResponseMatch::Deliver { key, is_final, .. } => {
                let Some(pending) = self.pending.get(&key).cloned() else {
                    return Relay::Handled;
                };
                if is_final {
                    self.pending.remove(&key);
                }
                resp.vias.remove(0);
                Relay::Forwarded {
                    pending,
                    response: resp,
                    is_final,
                }
            }
            ResponseMatch::Absorbed => Relay::Handled,
            ResponseMatch::Unmatched => {
                if resp.top_via().is_some_and(|v| self.addr().matches_via(v)) {
                    resp.vias.remove(0);
                    if let Some(next) = resp.top_via() {
                        let dst = NetAddress::from_via(next);
                        let _ = self.tx.send_stateless(dst, resp, out);
                    }
                }
                Relay::Handled
            }
        }
    }

    /// Sends a relayed response upstream on the server transaction.
    pub fn relay(&mut self, now: Instant, response: SipMessage, out: &mut Outbox) {
        let _ = self.tx.send_response(now, response, out);
    }

    /// Drives retransmission timers; downstream timeouts become 408
    /// upstream.
    pub fn on_timer(&mut self, now: Instant, out: &mut Outbox) {
        for t in self.tx.on_timer(now, out) {
            if let Some(p) = self.pending.remove(&t.key) {
                self.respond(now, &p.inbound, StatusCode::REQUEST_TIMEOUT, out);
            }
        }
    }

    pub fn next_deadline(&self) -> Option<Instant> {
        self.tx.next_deadline()
    }

    pub fn settled(&self) -> bool {
        self.tx.settled() && self.pending.is_empty()
    }
}
