use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Instant, NetAddress, TimerConfig};
use crate::node::Outbox;
use crate::sip::{IdGen, Method, SipMessage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndpointError {
    #[error("destination {0} is not in the topology")]
    UnknownDestination(NetAddress),
    #[error("expected a request")]
    NotARequest,
    #[error("message has no Via")]
    NoVia,
}

/// Transaction identity: top Via branch plus CSeq method.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxKey {
    pub branch: String,
    pub method: Method,
}

impl TxKey {
    pub fn of(msg: &SipMessage) -> Option<TxKey> {
        Some(TxKey {
            branch: msg.top_via()?.branch.clone(),
            method: msg.cseq.method,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxState {
    Trying,
    Proceeding,
    Completed,
    Terminated,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimerAction {
    Retransmit {
        request: SipMessage,
        dst: NetAddress,
    },
    Timeout,
}

#[derive(Debug, Clone)]
pub struct ClientTransaction {
    pub id: TxKey,
    pub request: SipMessage,
    pub dst: NetAddress,
    pub state: TxState,
    pub retransmit_count: u32,
    pub next_fire: Instant,
    pub started_at: Instant,
}

impl ClientTransaction {
    pub fn new(
        request: SipMessage,
        dst: NetAddress,
        now: Instant,
        cfg: &TimerConfig,
    ) -> Option<Self> {
        Some(ClientTransaction {
            id: TxKey::of(&request)?,
            request,
            dst,
            state: TxState::Trying,
            retransmit_count: 0,
            next_fire: now.plus_ms(cfg.interval(0)),
            started_at: now,
        })
    }

    fn deadline(&self, cfg: &TimerConfig) -> Instant {
        self.started_at.plus_ms(cfg.transaction_timeout_ms)
    }

    pub fn is_live(&self) -> bool {
        matches!(self.state, TxState::Trying | TxState::Proceeding)
    }

    /// Timer expiry. Trying retransmits with a doubling interval capped at
    /// T2; running out of retransmissions or of the overall budget ends the
    /// transaction with a timeout.
    pub fn on_timer(&mut self, now: Instant, cfg: &TimerConfig) -> Vec<TimerAction> {
        match self.state {
            TxState::Trying => {
                if self.retransmit_count >= cfg.max_retransmits || now >= self.deadline(cfg) {
                    self.state = TxState::Terminated;
                    return alloc::vec![TimerAction::Timeout];
                }
                self.retransmit_count += 1;
                self.next_fire = now
                    .plus_ms(cfg.interval(self.retransmit_count))
                    .min(self.deadline(cfg));
                alloc::vec![TimerAction::Retransmit {
                    request: self.request.clone(),
                    dst: self.dst.clone(),
                }]
            }
            TxState::Proceeding => {
                if now >= self.deadline(cfg) {
                    self.state = TxState::Terminated;
                    alloc::vec![TimerAction::Timeout]
                } else {
                    self.next_fire = self.deadline(cfg);
                    Vec::new()
                }
            }
            TxState::Completed | TxState::Terminated => Vec::new(),
        }
    }

    /// Returns true when the response should reach the transaction user.
    fn on_response(&mut self, provisional: bool, cfg: &TimerConfig) -> bool {
        match self.state {
            TxState::Trying | TxState::Proceeding if provisional => {
                self.state = TxState::Proceeding;
                self.next_fire = self.deadline(cfg);
                true
            }
            TxState::Trying | TxState::Proceeding => {
                // Completed is transient: unreliable-transport linger is
                // handled by the layer's absorb window.
                self.state = TxState::Terminated;
                true
            }
            TxState::Completed | TxState::Terminated => false,
        }
    }
}

#[derive(Debug, Clone)]
struct ServerTransaction {
    state: TxState,
    last_response: Option<SipMessage>,
    expires_at: Option<Instant>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseMatch {
    /// First copy of a response for a live transaction.
    Deliver {
        key: TxKey,
        request: SipMessage,
        is_final: bool,
    },
    /// Duplicate of an already delivered final response.
    Absorbed,
    Unmatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inbound {
    New,
    /// Retransmitted request; any stored response was re-sent.
    Retransmission,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeoutIndication {
    pub key: TxKey,
    pub request: SipMessage,
    pub dst: NetAddress,
}

/// Client and server transaction bookkeeping for one endpoint.
#[derive(Debug, Clone)]
pub struct TransactionLayer {
    local: NetAddress,
    cfg: TimerConfig,
    directory: Option<BTreeSet<NetAddress>>,
    ids: IdGen,
    clients: BTreeMap<TxKey, ClientTransaction>,
    ended: BTreeMap<TxKey, Instant>,
    servers: BTreeMap<TxKey, ServerTransaction>,
}

impl TransactionLayer {
    pub fn new(local: NetAddress, cfg: TimerConfig) -> Self {
        let ids = IdGen::new(&local.to_string());
        TransactionLayer {
            local,
            cfg,
            directory: None,
            ids,
            clients: BTreeMap::new(),
            ended: BTreeMap::new(),
            servers: BTreeMap::new(),
        }
    }

    /// Restricts destinations to the given topology registry.
    pub fn with_directory(mut self, directory: BTreeSet<NetAddress>) -> Self {
        self.directory = Some(directory);
        self
    }

    pub fn local(&self) -> &NetAddress {
        &self.local
    }

    pub fn timers(&self) -> &TimerConfig {
        &self.cfg
    }

    pub fn ids(&mut self) -> &mut IdGen {
        &mut self.ids
    }

    pub fn sent_by(&self) -> (&str, u16) {
        (&self.local.host, self.local.port)
    }

    fn check_destination(&self, dst: &NetAddress) -> Result<(), EndpointError> {
        match &self.directory {
            Some(d) if !d.contains(dst) => Err(EndpointError::UnknownDestination(dst.clone())),
            _ => Ok(()),
        }
    }

    /// Sends a request. Everything except ACK and NOTIFY gets a client
    /// transaction in Trying with its first retransmission at now + T1.
    pub fn send_request(
        &mut self,
        now: Instant,
        req: SipMessage,
        dst: NetAddress,
        out: &mut Outbox,
    ) -> Result<Option<TxKey>, EndpointError> {
        if !req.is_request() {
            return Err(EndpointError::NotARequest);
        }
        self.check_destination(&dst)?;
        out.send(dst.clone(), req.clone());
        if req.method().is_fire_and_forget() {
            return Ok(None);
        }
        let tx = ClientTransaction::new(req, dst, now, &self.cfg).ok_or(EndpointError::NoVia)?;
        let key = tx.id.clone();
        self.clients.insert(key.clone(), tx);
        Ok(Some(key))
    }

    /// Sends without transaction state (ACK, NOTIFY, stateless relays).
    pub fn send_stateless(
        &mut self,
        dst: NetAddress,
        msg: SipMessage,
        out: &mut Outbox,
    ) -> Result<(), EndpointError> {
        self.check_destination(&dst)?;
        out.send(dst, msg);
        Ok(())
    }

    /// Correlates a response with a client transaction by top Via branch
    /// and CSeq method.
    pub fn match_response(&mut self, now: Instant, resp: &SipMessage) -> ResponseMatch {
        self.purge_ended(now);
        let (Some(key), Some(status)) = (TxKey::of(resp), resp.status()) else {
            return ResponseMatch::Unmatched;
        };
        if self.ended.contains_key(&key) {
            return ResponseMatch::Absorbed;
        }
        let Some(tx) = self.clients.get_mut(&key) else {
            return ResponseMatch::Unmatched;
        };
        if !tx.on_response(status.is_provisional(), &self.cfg) {
            return ResponseMatch::Absorbed;
        }
        let request = tx.request.clone();
        let is_final = status.is_final();
        if is_final {
            self.clients.remove(&key);
            self.ended.insert(key.clone(), now);
        }
        ResponseMatch::Deliver {
            key,
            request,
            is_final,
        }
    }

    /// Registers an incoming request with the server side. Retransmissions
    /// of a request we already answered get the stored response again.
    /// ACK and NOTIFY carry no server transaction.
    pub fn receive_request(
        &mut self,
        _now: Instant,
        req: &SipMessage,
        out: &mut Outbox,
    ) -> Inbound {
        if req.method().is_fire_and_forget() {
            return Inbound::New;
        }
        let Some(key) = TxKey::of(req) else {
            return Inbound::New;
        };
        if let Some(st) = self.servers.get(&key) {
            if let Some(resp) = &st.last_response {
                if let Some(via) = resp.top_via() {
                    out.send(NetAddress::from_via(via), resp.clone());
                }
            }
            return Inbound::Retransmission;
        }
        self.servers.insert(
            key,
            ServerTransaction {
                state: TxState::Trying,
                last_response: None,
                expires_at: None,
            },
        );
        Inbound::New
    }

    /// Sends a response to the sent-by of its top Via and records it on the
    /// matching server transaction.
    pub fn send_response(
        &mut self,
        now: Instant,
        resp: SipMessage,
        out: &mut Outbox,
    ) -> Result<(), EndpointError> {
        let via = resp.top_via().ok_or(EndpointError::NoVia)?;
        let dst = NetAddress::from_via(via);
        self.check_destination(&dst)?;
        if let (Some(key), Some(status)) = (TxKey::of(&resp), resp.status()) {
            if let Some(st) = self.servers.get_mut(&key) {
                st.last_response = Some(resp.clone());
                if status.is_final() {
                    st.state = TxState::Completed;
                    st.expires_at = Some(now.plus_ms(self.cfg.transaction_timeout_ms));
                } else {
                    st.state = TxState::Proceeding;
                }
            }
        }
        out.send(dst, resp);
        Ok(())
    }

    pub fn on_timer(&mut self, now: Instant, out: &mut Outbox) -> Vec<TimeoutIndication> {
        let cfg = self.cfg;
        let mut timeouts = Vec::new();
        let due: Vec<TxKey> = self
            .clients
            .iter()
            .filter(|(_, tx)| tx.is_live() && tx.next_fire <= now)
            .map(|(k, _)| k.clone())
            .collect();
        for key in due {
            let Some(tx) = self.clients.get_mut(&key) else {
                continue;
            };
            for action in tx.on_timer(now, &cfg) {
                match action {
                    TimerAction::Retransmit { request, dst } => out.send(dst, request),
                    TimerAction::Timeout => timeouts.push(TimeoutIndication {
                        key: key.clone(),
                        request: tx.request.clone(),
                        dst: tx.dst.clone(),
                    }),
                }
            }
            if !tx.is_live() {
                self.clients.remove(&key);
                self.ended.insert(key, now);
            }
        }
        self.servers
            .retain(|_, st| st.expires_at.is_none_or(|t| t > now));
        self.purge_ended(now);
        timeouts
    }

    fn purge_ended(&mut self, now: Instant) {
        let linger = self.cfg.transaction_timeout_ms;
        self.ended.retain(|_, at| at.plus_ms(linger) > now);
    }

    pub fn next_deadline(&self) -> Option<Instant> {
        let clients = self
            .clients
            .values()
            .filter(|tx| tx.is_live())
            .map(|tx| tx.next_fire);
        let servers = self.servers.values().filter_map(|st| st.expires_at);
        clients.chain(servers).min()
    }

    pub fn client(&self, key: &TxKey) -> Option<&ClientTransaction> {
        self.clients.get(key)
    }

    pub fn live_clients(&self) -> usize {
        self.clients.values().filter(|tx| tx.is_live()).count()
    }

    /// No client transaction live and no server transaction awaiting a
    /// final response.
    pub fn settled(&self) -> bool {
        self.live_clients() == 0
            && self
                .servers
                .values()
                .all(|st| matches!(st.state, TxState::Completed | TxState::Terminated))
    }

    pub fn server_count(&self) -> usize {
        self.servers.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::Effect;
    use crate::sip::{make_request, make_response, SipUri, StatusCode};

    fn addr(s: &str) -> NetAddress {
        s.parse().unwrap()
    }

    fn register(layer: &mut TransactionLayer) -> SipMessage {
        let s1 = SipUri::parse("sip:s1@ims.kau.test").unwrap();
        let (h, p) = (layer.local().host.clone(), layer.local().port);
        make_request(
            layer.ids(),
            (&h, p),
            Method::Register,
            SipUri::parse("sip:ims.kau.test").unwrap(),
            s1.clone(),
            s1,
            "c1",
            1,
        )
    }

    fn layer() -> TransactionLayer {
        let dir: BTreeSet<NetAddress> = [addr("10.0.0.1:5060"), addr("10.0.1.1:5060")]
            .into_iter()
            .collect();
        TransactionLayer::new(addr("10.0.0.1:5060"), TimerConfig::default()).with_directory(dir)
    }

    #[test]
    fn request_creates_trying_transaction() {
        let mut l = layer();
        let mut out = Outbox::new();
        let req = register(&mut l);
        let key = l
            .send_request(Instant(0), req, addr("10.0.1.1:5060"), &mut out)
            .unwrap()
            .unwrap();
        let tx = l.client(&key).unwrap();
        assert_eq!(tx.state, TxState::Trying);
        assert_eq!(tx.next_fire, Instant(500));
        assert_eq!(out.effects().len(), 1);
    }

    #[test]
    fn ack_has_no_transaction() {
        let mut l = layer();
        let mut out = Outbox::new();
        let mut req = register(&mut l);
        req.start = crate::sip::StartLine::Request {
            method: Method::Ack,
            uri: SipUri::parse("sip:x@h").unwrap(),
        };
        req.cseq.method = Method::Ack;
        assert_eq!(
            l.send_request(Instant(0), req, addr("10.0.1.1:5060"), &mut out),
            Ok(None)
        );
        assert_eq!(l.live_clients(), 0);
        assert_eq!(out.effects().len(), 1);
    }

    #[test]
    fn unknown_destination() {
        let mut l = layer();
        let mut out = Outbox::new();
        let req = register(&mut l);
        assert_eq!(
            l.send_request(Instant(0), req, addr("10.9.9.9:5060"), &mut out),
            Err(EndpointError::UnknownDestination(addr("10.9.9.9:5060")))
        );
        assert!(out.is_empty());
    }

    #[test]
    fn timer_doubles_then_times_out() {
        let cfg = TimerConfig::default();
        let mut l = layer();
        let req = register(&mut l);
        let mut tx = ClientTransaction::new(req, addr("10.0.1.1:5060"), Instant(0), &cfg).unwrap();
        let mut fires = Vec::new();
        loop {
            let now = tx.next_fire;
            let acts = tx.on_timer(now, &cfg);
            fires.push(now.0);
            if acts == [TimerAction::Timeout] {
                break;
            }
        }
        assert_eq!(fires, [500, 1500, 3500, 7500, 11500, 15500]);
        assert_eq!(tx.state, TxState::Terminated);
        assert_eq!(tx.retransmit_count, 5);
    }

    #[test]
    fn first_retransmission_sets_next_interval() {
        let cfg = TimerConfig::default();
        let mut l = layer();
        let mut tx =
            ClientTransaction::new(register(&mut l), addr("10.0.1.1:5060"), Instant(0), &cfg)
                .unwrap();
        let acts = tx.on_timer(Instant(500), &cfg);
        assert!(matches!(acts[0], TimerAction::Retransmit { .. }));
        assert_eq!(tx.retransmit_count, 1);
        assert_eq!(tx.next_fire.since(Instant(500)), 1000);
    }

    #[test]
    fn at_max_retransmits_times_out() {
        let cfg = TimerConfig::default();
        let mut l = layer();
        let mut tx =
            ClientTransaction::new(register(&mut l), addr("10.0.1.1:5060"), Instant(0), &cfg)
                .unwrap();
        tx.retransmit_count = 5;
        assert_eq!(tx.on_timer(Instant(20_000), &cfg), [TimerAction::Timeout]);
        assert_eq!(tx.state, TxState::Terminated);
    }

    #[test]
    fn final_response_delivered_once() {
        let mut l = layer();
        let mut out = Outbox::new();
        let req = register(&mut l);
        l.send_request(Instant(0), req.clone(), addr("10.0.1.1:5060"), &mut out)
            .unwrap();
        let ok = make_response(&req, StatusCode::OK, Vec::new()).unwrap();
        assert!(matches!(
            l.match_response(Instant(20), &ok),
            ResponseMatch::Deliver { is_final: true, .. }
        ));
        assert_eq!(l.match_response(Instant(30), &ok), ResponseMatch::Absorbed);
        assert!(l.settled());
    }

    #[test]
    fn provisional_stops_retransmissions() {
        let mut l = layer();
        let mut out = Outbox::new();
        let mut req = register(&mut l);
        req.start = crate::sip::StartLine::Request {
            method: Method::Invite,
            uri: SipUri::parse("sip:b@h").unwrap(),
        };
        req.cseq.method = Method::Invite;
        let key = l
            .send_request(Instant(0), req.clone(), addr("10.0.1.1:5060"), &mut out)
            .unwrap()
            .unwrap();
        let trying = make_response(&req, StatusCode::TRYING, Vec::new()).unwrap();
        assert!(matches!(
            l.match_response(Instant(20), &trying),
            ResponseMatch::Deliver {
                is_final: false,
                ..
            }
        ));
        assert_eq!(l.client(&key).unwrap().state, TxState::Proceeding);
        let mut out = Outbox::new();
        l.on_timer(Instant(500), &mut out);
        l.on_timer(Instant(1500), &mut out);
        assert!(out.is_empty());
        assert_eq!(l.next_deadline(), Some(Instant(32_000)));
    }

    #[test]
    fn server_side_replays_final_response() {
        let mut client = layer();
        let req = register(&mut client);
        let mut server = TransactionLayer::new(addr("10.0.1.1:5060"), TimerConfig::default());
        let mut out = Outbox::new();
        assert_eq!(
            server.receive_request(Instant(10), &req, &mut out),
            Inbound::New
        );
        assert_eq!(
            server.receive_request(Instant(11), &req, &mut out),
            Inbound::Retransmission
        );
        assert!(out.is_empty());
        let ok = make_response(&req, StatusCode::OK, Vec::new()).unwrap();
        server
            .send_response(Instant(12), ok.clone(), &mut out)
            .unwrap();
        assert_eq!(
            server.receive_request(Instant(600), &req, &mut out),
            Inbound::Retransmission
        );
        let sent: Vec<_> = out.drain().collect();
        assert_eq!(sent.len(), 2);
        assert!(
            matches!(&sent[1], Effect::Sip { dst, msg } if *dst == addr("10.0.0.1:5060") && *msg == ok)
        );
        assert_eq!(server.next_deadline(), Some(Instant(32_012)));
        server.on_timer(Instant(32_012), &mut out);
        assert_eq!(server.server_count(), 0);
    }
}
