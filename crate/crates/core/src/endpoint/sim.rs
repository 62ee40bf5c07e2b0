use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Instant, NetAddress};
use crate::sip::SipMessage;

pub const DEFAULT_LATENCY_MS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { p: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Disposition {
    Delivered,
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireEvent {
    pub seq: u64,
    pub time: Instant,
    pub src: NetAddress,
    pub dst: NetAddress,
    pub msg: SipMessage,
    pub disposition: Disposition,
}

#[derive(Debug, Clone)]
struct InFlight {
    src: NetAddress,
    dst: NetAddress,
    msg: SipMessage,
}

/// In-process datagram network with per-link latency and seeded loss.
#[derive(Debug, Clone)]
pub struct SimNetwork {
    default_latency_ms: u64,
    latency: BTreeMap<(NetAddress, NetAddress), u64>,
    loss: f64,
    rng: ChaCha8Rng,
    in_flight: BTreeMap<(Instant, u64), InFlight>,
    enqueued: u64,
}

impl SimNetwork {
    pub fn new(loss: LossConfig) -> Self {
        SimNetwork {
            default_latency_ms: DEFAULT_LATENCY_MS,
            latency: BTreeMap::new(),
            loss: loss.p.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(loss.seed),
            in_flight: BTreeMap::new(),
            enqueued: 0,
        }
    }

    pub fn with_default_latency(mut self, ms: u64) -> Self {
        self.default_latency_ms = ms;
        self
    }

    /// Sets the one-way latency between two addresses, in both directions.
    pub fn set_latency(&mut self, a: &NetAddress, b: &NetAddress, ms: u64) {
        self.latency.insert((a.clone(), b.clone()), ms);
        self.latency.insert((b.clone(), a.clone()), ms);
    }

    pub fn latency(&self, src: &NetAddress, dst: &NetAddress) -> u64 {
        self.latency
            .get(&(src.clone(), dst.clone()))
            .copied()
            .unwrap_or(self.default_latency_ms)
    }

    pub fn enqueue(&mut self, now: Instant, src: NetAddress, dst: NetAddress, msg: SipMessage) {
        let at = now.plus_ms(self.latency(&src, &dst));
        self.in_flight
            .insert((at, self.enqueued), InFlight { src, dst, msg });
        self.enqueued += 1;
    }

    pub fn next_delivery(&self) -> Option<Instant> {
        self.in_flight.keys().next().map(|(t, _)| *t)
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// Releases every message due by `now` in (delivery time, enqueue order),
    /// drawing one loss sample per message. `seq` is the run-wide event
    /// counter and is advanced once per event.
    pub fn transport_step(&mut self, now: Instant, seq: &mut u64) -> Vec<WireEvent> {
        let mut events = Vec::new();
        while let Some(entry) = self.in_flight.first_entry() {
            let (at, _) = *entry.key();
            if at > now {
                break;
            }
            let f = entry.remove();
            let dropped = self.loss > 0.0 && self.rng.random::<f64>() < self.loss;
            *seq += 1;
            events.push(WireEvent {
                seq: *seq,
                time: at,
                src: f.src,
                dst: f.dst,
                msg: f.msg,
                disposition: if dropped {
                    Disposition::Dropped
                } else {
                    Disposition::Delivered
                },
            });
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sip::{make_request, IdGen, Method, SipUri};

    fn msg(ids: &mut IdGen) -> SipMessage {
        let u = SipUri::parse("sip:s1@ims.kau.test").unwrap();
        make_request(
            ids,
            ("10.0.0.1", 5060),
            Method::Message,
            u.clone(),
            u.clone(),
            u,
            "c",
            1,
        )
    }

    fn run(p: f64, seed: u64, n: usize) -> Vec<(u64, Instant, Disposition)> {
        let mut net = SimNetwork::new(LossConfig { p, seed });
        let mut ids = IdGen::new("t");
        let a: NetAddress = "10.0.0.1:5060".parse().unwrap();
        let b: NetAddress = "10.0.0.2:5060".parse().unwrap();
        for i in 0..n {
            net.enqueue(Instant(i as u64), a.clone(), b.clone(), msg(&mut ids));
        }
        let mut seq = 0;
        net.transport_step(Instant(u64::MAX), &mut seq)
            .into_iter()
            .map(|e| (e.seq, e.time, e.disposition))
            .collect()
    }

    #[test]
    fn lossless_delivers_everything_once() {
        let ev = run(0.0, 1, 50);
        assert_eq!(ev.len(), 50);
        assert!(ev.iter().all(|e| e.2 == Disposition::Delivered));
    }

    #[test]
    fn total_loss_drops_everything() {
        assert!(run(1.0, 1, 50).iter().all(|e| e.2 == Disposition::Dropped));
    }

    #[test]
    fn same_seed_same_events() {
        assert_eq!(run(0.3, 9, 200), run(0.3, 9, 200));
        assert_ne!(run(0.3, 9, 200), run(0.3, 10, 200));
    }

    #[test]
    fn latency_and_ordering() {
        let ev = run(0.0, 0, 3);
        assert_eq!(ev.iter().map(|e| e.1 .0).collect::<Vec<_>>(), [10, 11, 12]);
        assert_eq!(ev.iter().map(|e| e.0).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn not_due_is_held() {
        let mut net = SimNetwork::new(LossConfig::default());
        let mut ids = IdGen::new("t");
        let a: NetAddress = "10.0.0.1:5060".parse().unwrap();
        let b: NetAddress = "10.0.0.2:5060".parse().unwrap();
        net.set_latency(&a, &b, 25);
        net.enqueue(Instant(0), b.clone(), a.clone(), msg(&mut ids));
        let mut seq = 0;
        assert!(net.transport_step(Instant(24), &mut seq).is_empty());
        assert_eq!(net.next_delivery(), Some(Instant(25)));
        assert_eq!(net.transport_step(Instant(25), &mut seq).len(), 1);
    }
}
