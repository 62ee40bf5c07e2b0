use alloc::collections::BTreeSet;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::any::Any;
use core::cell::RefCell;

use super::store::{DocKey, ExamSubscription, XdmsError, XdmsStore};
use crate::endpoint::{DialogId, Inbound, Instant, NetAddress, TimerConfig, TransactionLayer};
use crate::http::{percent_decode, HttpRequest, HttpResponse};
use crate::ims::EXAM_EVENT;
use crate::node::{Node, Outbox};
use crate::sip::{make_request, make_response, Method, SipMessage, SipUri, StatusCode};

/// Default subscription lifetime when the SUBSCRIBE carries no Expires.
pub const DEFAULT_SUBSCRIPTION_SECS: u32 = 3600;

pub const NOTIFY_CONTENT_TYPE: &str = "text/plain";

/// Outcome of a SUBSCRIBE: the final response, plus the initial NOTIFY
/// when the subscription was accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct SubscribeOutcome {
    pub response: SipMessage,
    pub notify: Option<(NetAddress, SipMessage)>,
}

pub struct XdmsNode {
    name: String,
    tx: TransactionLayer,
    store: Rc<RefCell<XdmsStore>>,
    http: Option<NetAddress>,
}

impl XdmsNode {
    pub fn new(
        name: &str,
        addr: NetAddress,
        store: Rc<RefCell<XdmsStore>>,
        timers: TimerConfig,
    ) -> Self {
        XdmsNode {
            name: name.into(),
            tx: TransactionLayer::new(addr, timers),
            store,
            http: None,
        }
    }

    pub fn with_directory(mut self, directory: BTreeSet<NetAddress>) -> Self {
        self.tx = self.tx.clone().with_directory(directory);
        self
    }

    pub fn with_http(mut self, addr: NetAddress) -> Self {
        self.http = Some(addr);
        self
    }

    pub fn http_address(&self) -> Option<&NetAddress> {
        self.http.as_ref()
    }

    pub fn store(&self) -> Rc<RefCell<XdmsStore>> {
        self.store.clone()
    }

    fn build_notify(&mut self, sub: &ExamSubscription, state: &str, expires_in: u32) -> SipMessage {
        let (host, port) = (self.tx.local().host.clone(), self.tx.local().port);
        let service = SipUri::new(Some("xdms"), crate::HOME_DOMAIN);
        let mut n = make_request(
            self.tx.ids(),
            (&host, port),
            Method::Notify,
            sub.subscriber.clone(),
            service,
            sub.subscriber.clone(),
            &sub.dialog.call_id,
            sub.notify_cseq,
        );
        n.from.tag = Some(sub.dialog.local_tag.clone());
        n.to.tag = sub.dialog.remote_tag.clone();
        n.event = Some(sub.event.clone());
        let state_header = if state == "terminated" {
            String::from("terminated")
        } else {
            format!("{state};expires={expires_in}")
        };
        n.set_header("Subscription-State", &state_header);
        n.with_body(NOTIFY_CONTENT_TYPE, state.as_bytes().to_vec())
    }

    /// Authorizes and records a subscription relayed by the S-CSCF.
    pub fn handle_subscribe(
        &mut self,
        now: Instant,
        from: &NetAddress,
        msg: &SipMessage,
    ) -> SubscribeOutcome {
        let reject = |status| SubscribeOutcome {
            response: make_response(msg, status, Vec::new()).expect("request"),
            notify: None,
        };
        if !msg
            .event
            .as_deref()
            .is_some_and(|e| e.eq_ignore_ascii_case(EXAM_EVENT))
        {
            return reject(StatusCode::TEMPORARILY_UNAVAILABLE);
        }
        let subscriber = msg.from.uri.aor();
        if !self.store.borrow().is_group_member(&subscriber) {
            return reject(StatusCode::FORBIDDEN);
        }
        let expires = msg.expires.unwrap_or(DEFAULT_SUBSCRIPTION_SECS);
        let mut response = make_response(msg, StatusCode::ACCEPTED, Vec::new()).expect("request");
        response.expires = Some(expires);
        let local_tag = response.to.tag.clone().unwrap_or_default();
        let dialog = DialogId::from_request_as_uas(msg);
        let dialog = DialogId {
            local_tag,
            ..dialog
        };
        let sub = if expires == 0 {
            let mut s = self
                .store
                .borrow_mut()
                .remove_subscription(&subscriber, EXAM_EVENT)
                .unwrap_or(ExamSubscription {
                    subscriber: subscriber.clone(),
                    event: EXAM_EVENT.into(),
                    dialog: dialog.clone(),
                    expires_at: now,
                    route: from.clone(),
                    notify_cseq: 0,
                });
            s.notify_cseq += 1;
            s.dialog = dialog;
            s.route = from.clone();
            s
        } else {
            let mut store = self.store.borrow_mut();
            let slot = store.upsert_subscription(ExamSubscription {
                subscriber: subscriber.clone(),
                event: EXAM_EVENT.into(),
                dialog,
                expires_at: now.plus_secs(u64::from(expires)),
                route: from.clone(),
                notify_cseq: 0,
            });
            slot.notify_cseq += 1;
            slot.clone()
        };
        let state = if expires == 0 { "terminated" } else { "active" };
        let notify = self.build_notify(&sub, state, expires);
        SubscribeOutcome {
            response,
            notify: Some((sub.route.clone(), notify)),
        }
    }

    fn send_change_notifies(&mut self, now: Instant, out: &mut Outbox) {
        let changes = self.store.borrow_mut().take_changes();
        if changes.is_empty() {
            return;
        }
        let subs: Vec<ExamSubscription> = {
            let mut store = self.store.borrow_mut();
            store
                .subscriptions_mut()
                .filter(|s| s.expires_at > now)
                .map(|s| {
                    s.notify_cseq += 1;
                    s.clone()
                })
                .collect()
        };
        for _ in &changes {
            for s in &subs {
                let left = s.expires_at.since(now) / 1000;
                let n = self.build_notify(s, "active", left as u32);
                let _ = self.tx.send_request(now, n, s.route.clone(), out);
            }
        }
    }

    fn http_doc(&mut self, req: &HttpRequest) -> HttpResponse {
        let segs = req.segments();
        // xcap/{auid}/users/{owner}/{doc}
        if segs.len() != 5 || segs[2] != "users" {
            return HttpResponse::error(404, "NotFound");
        }
        let key = DocKey::new(
            &percent_decode(segs[1]),
            &percent_decode(segs[3]),
            &percent_decode(segs[4]),
        );
        let if_match = req
            .header("If-Match")
            .map(|v| v.trim_matches('"').to_string());
        let mut store = self.store.borrow_mut();
        let result = match req.method.as_str() {
            "GET" => store.get(&key).map(|d| {
                HttpResponse::new(200)
                    .with_header("Content-Type", &d.content_type)
                    .with_header("ETag", &format!("\"{}\"", d.etag))
                    .with_body(d.body.clone())
            }),
            "PUT" => {
                let ct = req
                    .header("Content-Type")
                    .unwrap_or("application/octet-stream")
                    .to_string();
                let existed = store.get(&key).is_ok();
                store
                    .put(key, &ct, req.body.clone(), if_match.as_deref())
                    .map(|etag| {
                        HttpResponse::new(if existed { 200 } else { 201 })
                            .with_header("ETag", &format!("\"{etag}\""))
                    })
            }
            "DELETE" => store
                .delete(&key, if_match.as_deref())
                .map(|()| HttpResponse::new(200)),
            _ => return HttpResponse::error(405, "MethodNotAllowed"),
        };
        result.unwrap_or_else(|e| match e {
            XdmsError::EtagMismatch => HttpResponse::error(412, "EtagMismatch"),
            XdmsError::MalformedGroupXml(_) => HttpResponse::error(400, "MalformedGroupXml"),
            XdmsError::NotFound => HttpResponse::error(404, "NotFound"),
            XdmsError::UnknownGroup(_) => HttpResponse::error(404, "UnknownGroup"),
        })
    }

    fn http_groups(&self, req: &HttpRequest) -> HttpResponse {
        let Some(uri) = req.query("uri").and_then(|u| SipUri::parse(&u).ok()) else {
            return HttpResponse::error(400, "Malformed");
        };
        match self.store.borrow().resolve_group(&uri) {
            Ok(members) => {
                let members: Vec<String> = members.iter().map(ToString::to_string).collect();
                HttpResponse::json(
                    200,
                    &serde_json::json!({ "group": uri.to_string(), "members": members }),
                )
            }
            Err(_) => HttpResponse::error(404, "UnknownGroup"),
        }
    }
}

impl Node for XdmsNode {
    fn name(&self) -> &str {
        &self.name
    }

    fn address(&self) -> &NetAddress {
        self.tx.local()
    }

    fn on_sip(&mut self, now: Instant, from: &NetAddress, msg: SipMessage, out: &mut Outbox) {
        if !msg.is_request() {
            // 200s to NOTIFY need no action.
            let _ = self.tx.match_response(now, &msg);
            return;
        }
        if msg.method() == Method::Ack || self.tx.receive_request(now, &msg, out) != Inbound::New {
            return;
        }
        if msg.method() != Method::Subscribe {
            if let Ok(r) = make_response(&msg, StatusCode::TEMPORARILY_UNAVAILABLE, Vec::new()) {
                let _ = self.tx.send_response(now, r, out);
            }
            return;
        }
        let outcome = self.handle_subscribe(now, from, &msg);
        let accepted = outcome.notify.is_some();
        let _ = self.tx.send_response(now, outcome.response, out);
        if let Some((dst, notify)) = outcome.notify {
            let _ = self.tx.send_request(now, notify, dst, out);
        }
        if accepted {
            let who = msg.from.uri.aor_key();
            let (a, b) = if msg.expires == Some(0) {
                ("active", "terminated")
            } else {
                ("none", "active")
            };
            out.transition(a, b, format!("{who} {EXAM_EVENT}"));
        }
    }

    fn on_timer(&mut self, now: Instant, out: &mut Outbox) {
        self.store.borrow_mut().expire_subscriptions(now);
        self.tx.on_timer(now, out);
    }

    fn next_deadline(&self) -> Option<Instant> {
        let subs = self.store.borrow().next_subscription_expiry();
        match (self.tx.next_deadline(), subs) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn next_activity(&self) -> Option<Instant> {
        self.tx.next_deadline()
    }

    fn on_http_request(
        &mut self,
        _now: Instant,
        req: &HttpRequest,
        _out: &mut Outbox,
    ) -> Option<HttpResponse> {
        let segs = req.segments();
        Some(match segs.first().copied() {
            Some("xcap") => self.http_doc(req),
            Some("groups") if req.method == "GET" => self.http_groups(req),
            _ => HttpResponse::error(404, "NotFound"),
        })
    }

    fn poll(&mut self, now: Instant, out: &mut Outbox) {
        self.send_change_notifies(now, out);
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
