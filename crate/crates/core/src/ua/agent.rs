use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::any::Any;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::endpoint::{
    DialogId, Inbound, Instant, NetAddress, ResponseMatch, SubState, Subscription, TimerConfig,
    TransactionLayer, TxKey,
};
use crate::exam::{
    AnswerSheet, Channel, ExamPaper, ExamSpec, GradeReport, Receipt, ResultSummary, SubmitError,
    CT_ANSWERS, CT_EXAM, CT_RECEIPT, CT_RESULT, CT_SUMMARY,
};
use crate::http::{HttpRequest, HttpResponse};
use crate::ims::EXAM_EVENT;
use crate::node::{Command, CommandError, Node, Outbox};
use crate::sip::{make_request, make_response, Method, NameAddr, SipMessage, SipUri, StatusCode};

/// Service URI that answer MESSAGEs are addressed to.
pub const EXAM_SERVICE_USER: &str = "exam";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UaConfig {
    pub identity: SipUri,
    pub passkey: String,
    pub pcscf: NetAddress,
    pub local: NetAddress,
    /// Scripted mode: answers submitted as soon as an exam arrives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_answer: Option<BTreeMap<String, usize>>,
    #[serde(default = "sip_channel")]
    pub channel: Channel,
    /// Re-register at 80% of the granted expiry.
    #[serde(default = "yes")]
    pub refresh: bool,
    #[serde(default = "default_expires")]
    pub expires: u32,
    /// HTTP address of the exam AS, for the HTTP submission channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_http: Option<NetAddress>,
}

fn sip_channel() -> Channel {
    Channel::SipMessage
}

fn yes() -> bool {
    true
}

fn default_expires() -> u32 {
    3600
}

impl UaConfig {
    pub fn new(identity: SipUri, passkey: &str, pcscf: NetAddress, local: NetAddress) -> Self {
        UaConfig {
            identity: identity.aor(),
            passkey: passkey.into(),
            pcscf,
            local,
            auto_answer: None,
            channel: Channel::SipMessage,
            refresh: true,
            expires: default_expires(),
            as_http: None,
        }
    }

    pub fn exam_service(&self) -> SipUri {
        SipUri::new(Some(EXAM_SERVICE_USER), &self.identity.host)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegFailure {
    BadPasskey,
    Unreachable,
    Rejected(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Registration {
    Idle,
    Registering,
    Registered,
    Failed(RegFailure),
}

impl Registration {
    fn label(self) -> String {
        match self {
            Registration::Failed(f) => format!("Failed({f:?})"),
            other => format!("{other:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UaError {
    #[error("not registered")]
    NotRegistered,
    #[error("registration already in progress or active")]
    AlreadyRegistered,
    #[error("no active subscription")]
    NotSubscribed,
    #[error("exam {0} is not in the inbox")]
    UnknownExam(String),
    #[error("no HTTP endpoint configured for the exam service")]
    NoHttpEndpoint,
}

impl From<UaError> for CommandError {
    fn from(e: UaError) -> Self {
        CommandError::Rejected(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "item", rename_all = "snake_case")]
pub enum InboxItem {
    Exam(ExamPaper),
    Result(GradeReport),
    Receipt(Receipt),
    Summary(ResultSummary),
}

/// Where a submission stands, as far as this UA knows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubmitOutcome {
    Pending,
    Accepted,
    Rejected(String),
    /// The request itself failed (SIP or HTTP status).
    Failed(u16),
}

impl SubmitOutcome {
    pub fn error(&self) -> Option<SubmitError> {
        match self {
            SubmitOutcome::Rejected(k) => SubmitError::from_kind(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    Register,
    Deregister,
    Subscribe,
    Unsubscribe,
    Answers,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum HttpPurpose {
    Login,
    Submit(String),
    Provision,
}

/// Work that waits for a web session token.
#[derive(Debug, Clone, PartialEq)]
enum Queued {
    Submit(String, BTreeMap<String, usize>),
    Provision(ExamSpec),
}

/// IMS user agent for students and teachers.
pub struct UaNode {
    name: String,
    cfg: UaConfig,
    tx: TransactionLayer,
    registration: Registration,
    reg_call_id: String,
    reg_cseq: u32,
    expires_at: Option<Instant>,
    refresh_at: Option<Instant>,
    subscription: Option<Subscription>,
    sub_cseq: u32,
    sub_error: Option<u16>,
    inbox: Vec<InboxItem>,
    outcomes: BTreeMap<String, SubmitOutcome>,
    inflight: BTreeMap<TxKey, (Purpose, Option<String>)>,
    token: Option<String>,
    http_next: u64,
    http_pending: BTreeMap<u64, HttpPurpose>,
    http_queue: Vec<Queued>,
    provisioned: Vec<Result<String, String>>,
    answered: BTreeSet<String>,
}

impl UaNode {
    pub fn new(name: &str, cfg: UaConfig, timers: TimerConfig) -> Self {
        let mut tx = TransactionLayer::new(cfg.local.clone(), timers);
        let reg_call_id = tx.ids().call_id(&cfg.local.host);
        UaNode {
            name: name.into(),
            cfg,
            tx,
            registration: Registration::Idle,
            reg_call_id,
            reg_cseq: 0,
            expires_at: None,
            refresh_at: None,
            subscription: None,
            sub_cseq: 0,
            sub_error: None,
            inbox: Vec::new(),
            outcomes: BTreeMap::new(),
            inflight: BTreeMap::new(),
            token: None,
            http_next: 1,
            http_pending: BTreeMap::new(),
            http_queue: Vec::new(),
            provisioned: Vec::new(),
            answered: BTreeSet::new(),
        }
    }

    pub fn with_directory(mut self, directory: BTreeSet<NetAddress>) -> Self {
        self.tx = self.tx.clone().with_directory(directory);
        self
    }

    pub fn config(&self) -> &UaConfig {
        &self.cfg
    }

    pub fn registration(&self) -> Registration {
        self.registration
    }

    pub fn expires_at(&self) -> Option<Instant> {
        self.expires_at
    }

    pub fn subscription(&self) -> Option<&Subscription> {
        self.subscription.as_ref()
    }

    /// Final error status of the last SUBSCRIBE, if it was refused.
    pub fn subscribe_error(&self) -> Option<u16> {
        self.sub_error
    }

    pub fn inbox(&self) -> &[InboxItem] {
        &self.inbox
    }

    pub fn exams(&self) -> impl Iterator<Item = &ExamPaper> {
        self.inbox.iter().filter_map(|i| match i {
            InboxItem::Exam(e) => Some(e),
            _ => None,
        })
    }

    pub fn results(&self) -> impl Iterator<Item = &GradeReport> {
        self.inbox.iter().filter_map(|i| match i {
            InboxItem::Result(r) => Some(r),
            _ => None,
        })
    }

    pub fn outcome(&self, exam_id: &str) -> Option<&SubmitOutcome> {
        self.outcomes.get(exam_id)
    }

    /// Results of exam provisioning requests: the new exam id or the
    /// error kind returned by the AS.
    pub fn provisioned(&self) -> &[Result<String, String>] {
        &self.provisioned
    }

    fn set_registration(&mut self, to: Registration, cause: &str, out: &mut Outbox) {
        if self.registration != to {
            out.transition(
                self.registration.label(),
                to.label(),
                format!("{} {cause}", self.cfg.identity),
            );
            self.registration = to;
        }
    }

    fn sent_by(&self) -> (String, u16) {
        (self.cfg.local.host.clone(), self.cfg.local.port)
    }

    fn send(
        &mut self,
        now: Instant,
        req: SipMessage,
        purpose: Purpose,
        exam: Option<String>,
        out: &mut Outbox,
    ) {
        let pcscf = self.cfg.pcscf.clone();
        if let Ok(Some(key)) = self.tx.send_request(now, req, pcscf, out) {
            self.inflight.insert(key, (purpose, exam));
        }
    }

    fn register_request(&mut self, passkey: &str, expires: u32) -> SipMessage {
        self.reg_cseq += 1;
        let (host, port) = self.sent_by();
        let me = self.cfg.identity.clone();
        let registrar = SipUri::new(None, &me.host);
        let call_id = self.reg_call_id.clone();
        let mut req = make_request(
            self.tx.ids(),
            (&host, port),
            Method::Register,
            registrar,
            me.clone(),
            me.clone(),
            &call_id,
            self.reg_cseq,
        );
        req.contact = Some(NameAddr::new(self.cfg.local.to_uri(me.user.as_deref())));
        req.expires = Some(expires);
        req.set_header("X-Passkey", passkey);
        req
    }

    /// Sends REGISTER through the P-CSCF. Allowed from Idle or Failed.
    pub fn register(
        &mut self,
        now: Instant,
        passkey: Option<&str>,
        expires: Option<u32>,
        out: &mut Outbox,
    ) -> Result<(), UaError> {
        if matches!(
            self.registration,
            Registration::Registering | Registration::Registered
        ) {
            return Err(UaError::AlreadyRegistered);
        }
        let passkey = passkey.map_or_else(|| self.cfg.passkey.clone(), String::from);
        let req = self.register_request(&passkey, expires.unwrap_or(self.cfg.expires));
        self.set_registration(Registration::Registering, "register", out);
        self.send(now, req, Purpose::Register, None, out);
        Ok(())
    }

    pub fn deregister(&mut self, now: Instant, out: &mut Outbox) -> Result<(), UaError> {
        if self.registration != Registration::Registered {
            return Err(UaError::NotRegistered);
        }
        let passkey = self.cfg.passkey.clone();
        let req = self.register_request(&passkey, 0);
        self.refresh_at = None;
        self.send(now, req, Purpose::Deregister, None, out);
        Ok(())
    }

    fn refresh(&mut self, now: Instant, out: &mut Outbox) {
        self.refresh_at = None;
        let passkey = self.cfg.passkey.clone();
        let req = self.register_request(&passkey, self.cfg.expires);
        self.send(now, req, Purpose::Register, None, out);
    }

    fn subscribe_request(&mut self, expires: u32) -> SipMessage {
        let (host, port) = self.sent_by();
        let me = self.cfg.identity.clone();
        let service = self.cfg.exam_service();
        let (call_id, from_tag, to_tag) = match &self.subscription {
            Some(s) if s.state != SubState::Terminated => (
                s.dialog.call_id.clone(),
                Some(s.dialog.local_tag.clone()),
                s.dialog.remote_tag.clone(),
            ),
            _ => (self.tx.ids().call_id(&host), None, None),
        };
        self.sub_cseq += 1;
        let mut req = make_request(
            self.tx.ids(),
            (&host, port),
            Method::Subscribe,
            service.clone(),
            me,
            service,
            &call_id,
            self.sub_cseq,
        );
        if let Some(t) = from_tag {
            req.from.tag = Some(t);
        }
        req.to.tag = to_tag;
        req.event = Some(EXAM_EVENT.into());
        req.expires = Some(expires);
        req.contact = Some(NameAddr::new(
            self.cfg.local.to_uri(self.cfg.identity.user.as_deref()),
        ));
        req
    }

    /// Subscribes to the exam service. Requires an active registration.
    pub fn subscribe(&mut self, now: Instant, out: &mut Outbox) -> Result<(), UaError> {
        if self.registration != Registration::Registered {
            return Err(UaError::NotRegistered);
        }
        let req = self.subscribe_request(3600);
        self.sub_error = None;
        let live = self
            .subscription
            .as_ref()
            .is_some_and(|s| s.state != SubState::Terminated);
        if !live {
            self.subscription = Some(Subscription::pending(
                DialogId::from_uac(&req),
                EXAM_EVENT,
                now.plus_secs(3600),
            ));
        }
        self.send(now, req, Purpose::Subscribe, None, out);
        Ok(())
    }

    pub fn unsubscribe(&mut self, now: Instant, out: &mut Outbox) -> Result<(), UaError> {
        if !self
            .subscription
            .as_ref()
            .is_some_and(|s| s.state == SubState::Active)
        {
            return Err(UaError::NotSubscribed);
        }
        let req = self.subscribe_request(0);
        self.send(now, req, Purpose::Unsubscribe, None, out);
        Ok(())
    }

    /// Submits answers over the given channel (the configured one by
    /// default).
    pub fn submit(
        &mut self,
        now: Instant,
        exam_id: &str,
        answers: BTreeMap<String, usize>,
        channel: Option<Channel>,
        out: &mut Outbox,
    ) -> Result<(), UaError> {
        if !self.exams().any(|e| e.exam_id == exam_id) {
            return Err(UaError::UnknownExam(exam_id.into()));
        }
        match channel.unwrap_or(self.cfg.channel) {
            Channel::SipMessage => {
                if self.registration != Registration::Registered {
                    return Err(UaError::NotRegistered);
                }
                let (host, port) = self.sent_by();
                let call_id = self.tx.ids().call_id(&host);
                let service = self.cfg.exam_service();
                let sheet = AnswerSheet {
                    exam_id: exam_id.into(),
                    answers,
                };
                let req = make_request(
                    self.tx.ids(),
                    (&host, port),
                    Method::Message,
                    service.clone(),
                    self.cfg.identity.clone(),
                    service,
                    &call_id,
                    1,
                )
                .with_body(CT_ANSWERS, serde_json::to_vec(&sheet).unwrap_or_default());
                self.outcomes.insert(exam_id.into(), SubmitOutcome::Pending);
                self.send(now, req, Purpose::Answers, Some(exam_id.into()), out);
            }
            Channel::HttpApi => {
                if self.cfg.as_http.is_none() {
                    return Err(UaError::NoHttpEndpoint);
                }
                self.outcomes.insert(exam_id.into(), SubmitOutcome::Pending);
                self.enqueue_http(Queued::Submit(exam_id.into(), answers), out);
            }
        }
        Ok(())
    }

    /// Creates an exam through the AS web API, logging in first if needed.
    pub fn provision_exam(&mut self, spec: ExamSpec, out: &mut Outbox) -> Result<(), UaError> {
        if self.cfg.as_http.is_none() {
            return Err(UaError::NoHttpEndpoint);
        }
        self.enqueue_http(Queued::Provision(spec), out);
        Ok(())
    }

    fn enqueue_http(&mut self, item: Queued, out: &mut Outbox) {
        self.http_queue.push(item);
        if self.token.is_some() {
            self.flush_http(out);
        } else if !self.http_pending.values().any(|p| *p == HttpPurpose::Login) {
            let req = HttpRequest::new("POST", "/api/login").with_json(&json!({
                "user": self.cfg.identity.to_string(),
                "passkey": self.cfg.passkey,
            }));
            self.http_send(HttpPurpose::Login, req, out);
        }
    }

    fn http_send(&mut self, purpose: HttpPurpose, req: HttpRequest, out: &mut Outbox) {
        let Some(dst) = self.cfg.as_http.clone() else {
            return;
        };
        let id = self.http_next;
        self.http_next += 1;
        self.http_pending.insert(id, purpose);
        out.http(id, dst, req);
    }

    fn flush_http(&mut self, out: &mut Outbox) {
        let Some(token) = self.token.clone() else {
            return;
        };
        for item in core::mem::take(&mut self.http_queue) {
            match item {
                Queued::Submit(exam_id, answers) => {
                    let path = format!(
                        "/api/exams/{}/submissions",
                        crate::http::percent_encode(&exam_id)
                    );
                    let req = HttpRequest::new("POST", &path)
                        .with_bearer(&token)
                        .with_json(&json!({ "answers": answers }));
                    self.http_send(HttpPurpose::Submit(exam_id), req, out);
                }
                Queued::Provision(spec) => {
                    let body = serde_json::to_value(&spec).unwrap_or_default();
                    let req = HttpRequest::new("POST", "/api/exams")
                        .with_bearer(&token)
                        .with_json(&body);
                    self.http_send(HttpPurpose::Provision, req, out);
                }
            }
        }
    }

    fn on_request(&mut self, now: Instant, msg: SipMessage, out: &mut Outbox) {
        if msg.method() == Method::Ack || self.tx.receive_request(now, &msg, out) != Inbound::New {
            return;
        }
        let status = match msg.method() {
            Method::Message => self.on_message(now, &msg, out),
            Method::Notify => self.on_notify(&msg, out),
            _ => StatusCode::TEMPORARILY_UNAVAILABLE,
        };
        if let Ok(r) = make_response(&msg, status, Vec::new()) {
            let _ = self.tx.send_response(now, r, out);
        }
    }

    fn on_notify(&mut self, msg: &SipMessage, out: &mut Outbox) -> StatusCode {
        let Some(sub) = self.subscription.as_mut() else {
            return StatusCode::NOT_FOUND;
        };
        // The NOTIFY comes from the notifier, so its To tag is ours.
        let incoming = DialogId {
            call_id: msg.call_id.clone(),
            local_tag: msg.to.tag.clone().unwrap_or_default(),
            remote_tag: msg.from.tag.clone(),
        };
        if !sub.dialog.matches(&incoming) {
            return StatusCode::NOT_FOUND;
        }
        let before = sub.state;
        if sub.state == SubState::Pending && msg.body_str().trim() == "active" {
            sub.accept(msg.from.tag.clone());
        }
        if !sub.on_notify(msg.body_str()) {
            return StatusCode::NOT_FOUND;
        }
        if sub.state != before {
            out.transition(
                format!("{before:?}"),
                format!("{:?}", sub.state),
                format!("{} {EXAM_EVENT}", self.cfg.identity),
            );
        }
        StatusCode::OK
    }

    fn on_message(&mut self, now: Instant, msg: &SipMessage, out: &mut Outbox) -> StatusCode {
        let ct = msg.content_type.as_deref().unwrap_or("");
        let item = match ct {
            CT_EXAM => serde_json::from_slice(&msg.body).ok().map(InboxItem::Exam),
            CT_RESULT => serde_json::from_slice(&msg.body)
                .ok()
                .map(InboxItem::Result),
            CT_RECEIPT => serde_json::from_slice(&msg.body)
                .ok()
                .map(InboxItem::Receipt),
            CT_SUMMARY => serde_json::from_slice(&msg.body)
                .ok()
                .map(InboxItem::Summary),
            _ => None,
        };
        let Some(item) = item else {
            return StatusCode::TEMPORARILY_UNAVAILABLE;
        };
        match &item {
            InboxItem::Receipt(r) => {
                let outcome = if r.accepted {
                    SubmitOutcome::Accepted
                } else {
                    SubmitOutcome::Rejected(r.reason.clone().unwrap_or_default())
                };
                self.outcomes.insert(r.exam_id.clone(), outcome);
            }
            InboxItem::Exam(paper) => {
                if let Some(key) = self.cfg.auto_answer.clone() {
                    if self.answered.insert(paper.exam_id.clone()) {
                        let answers = paper
                            .questions
                            .iter()
                            .filter_map(|q| key.get(&q.qid).map(|i| (q.qid.clone(), *i)))
                            .collect();
                        let id = paper.exam_id.clone();
                        self.inbox.push(item);
                        let _ = self.submit(now, &id, answers, None, out);
                        return StatusCode::OK;
                    }
                }
            }
            _ => {}
        }
        self.inbox.push(item);
        StatusCode::OK
    }

    fn on_response(&mut self, now: Instant, msg: SipMessage, out: &mut Outbox) {
        let ResponseMatch::Deliver { key, is_final, .. } = self.tx.match_response(now, &msg) else {
            return;
        };
        if !is_final {
            return;
        }
        let Some((purpose, exam)) = self.inflight.remove(&key) else {
            return;
        };
        let code = msg.status().map_or(500, StatusCode::code);
        self.finish(now, purpose, exam, code, Some(&msg), out);
    }

    fn finish(
        &mut self,
        now: Instant,
        purpose: Purpose,
        exam: Option<String>,
        code: u16,
        msg: Option<&SipMessage>,
        out: &mut Outbox,
    ) {
        let ok = (200..300).contains(&code);
        match purpose {
            Purpose::Register if ok => {
                let granted = msg.and_then(|m| m.expires).unwrap_or(self.cfg.expires);
                self.expires_at = Some(now.plus_secs(u64::from(granted)));
                self.refresh_at = self
                    .cfg
                    .refresh
                    .then(|| now.plus_ms(u64::from(granted) * 800));
                self.set_registration(Registration::Registered, "200", out);
            }
            Purpose::Register => {
                let failure = match code {
                    403 => RegFailure::BadPasskey,
                    408 => RegFailure::Unreachable,
                    c => RegFailure::Rejected(c),
                };
                self.expires_at = None;
                self.refresh_at = None;
                self.set_registration(Registration::Failed(failure), &code.to_string(), out);
            }
            Purpose::Deregister => {
                if ok {
                    self.expires_at = None;
                    if let Some(s) = self.subscription.as_mut() {
                        s.terminate();
                    }
                    self.set_registration(Registration::Idle, "deregistered", out);
                }
            }
            Purpose::Subscribe => {
                let remote = msg.and_then(|m| m.to.tag.clone());
                if let Some(s) = self.subscription.as_mut() {
                    if ok {
                        s.accept(remote);
                    } else {
                        s.terminate();
                        self.sub_error = Some(code);
                    }
                }
            }
            Purpose::Unsubscribe => {}
            Purpose::Answers => {
                if !ok {
                    if let Some(id) = exam {
                        self.outcomes.insert(id, SubmitOutcome::Failed(code));
                    }
                }
            }
        }
    }
}

impl Node for UaNode {
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
            if let Some((purpose, exam)) = self.inflight.remove(&t.key) {
                self.finish(
                    now,
                    purpose,
                    exam,
                    StatusCode::REQUEST_TIMEOUT.code(),
                    None,
                    out,
                );
            }
        }
        if self.refresh_at.is_some_and(|r| r <= now)
            && self.registration == Registration::Registered
        {
            self.refresh(now, out);
        }
        if self.registration == Registration::Registered
            && self.expires_at.is_some_and(|e| e <= now)
        {
            self.expires_at = None;
            self.set_registration(Registration::Idle, "expired", out);
        }
    }

    fn next_deadline(&self) -> Option<Instant> {
        let upkeep = match self.registration {
            Registration::Registered => [self.refresh_at, self.expires_at]
                .into_iter()
                .flatten()
                .min(),
            _ => None,
        };
        match (self.tx.next_deadline(), upkeep) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn next_activity(&self) -> Option<Instant> {
        self.tx.next_deadline()
    }

    fn on_command(
        &mut self,
        now: Instant,
        command: &Command,
        out: &mut Outbox,
    ) -> Result<(), CommandError> {
        match command {
            Command::Register { passkey, expires } => {
                self.register(now, passkey.as_deref(), *expires, out)?
            }
            Command::Deregister {} => self.deregister(now, out)?,
            Command::Subscribe {} => self.subscribe(now, out)?,
            Command::Unsubscribe {} => self.unsubscribe(now, out)?,
            Command::Submit {
                exam_id,
                answers,
                channel,
            } => self.submit(now, exam_id, answers.clone(), *channel, out)?,
            Command::ProvisionExam { exam } => self.provision_exam(exam.clone(), out)?,
            other => {
                return Err(CommandError::Unsupported {
                    node: self.name.clone(),
                    command: other.name().into(),
                })
            }
        }
        Ok(())
    }

    fn on_http_response(&mut self, _now: Instant, id: u64, resp: HttpResponse, out: &mut Outbox) {
        match self.http_pending.remove(&id) {
            Some(HttpPurpose::Login) => {
                let token = resp
                    .json_body()
                    .and_then(|v| v["token"].as_str().map(String::from));
                match token {
                    Some(t) if resp.status == 200 => {
                        self.token = Some(t);
                        self.flush_http(out);
                    }
                    _ => {
                        for item in core::mem::take(&mut self.http_queue) {
                            match item {
                                Queued::Submit(exam_id, _) => {
                                    self.outcomes
                                        .insert(exam_id, SubmitOutcome::Failed(resp.status));
                                }
                                Queued::Provision(_) => {
                                    self.provisioned.push(Err("BadCredential".into()))
                                }
                            }
                        }
                    }
                }
            }
            Some(HttpPurpose::Submit(exam_id)) => {
                let outcome = if resp.status == 201 {
                    SubmitOutcome::Accepted
                } else {
                    match resp
                        .json_body()
                        .and_then(|v| v["error"].as_str().map(String::from))
                    {
                        Some(kind) => SubmitOutcome::Rejected(kind),
                        None => SubmitOutcome::Failed(resp.status),
                    }
                };
                self.outcomes.insert(exam_id, outcome);
            }
            Some(HttpPurpose::Provision) => {
                let body = resp.json_body().unwrap_or_default();
                let result = match (resp.status, body["exam_id"].as_str()) {
                    (201, Some(id)) => Ok(id.to_string()),
                    _ => Err(body["error"].as_str().unwrap_or("Failed").to_string()),
                };
                self.provisioned.push(result);
            }
            None => {}
        }
    }

    fn transactions_settled(&self) -> bool {
        self.tx.settled() && self.http_pending.is_empty()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
