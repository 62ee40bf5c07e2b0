use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::any::Any;

use serde_json::json;
use thiserror::Error;

use super::grade::{grade, no_submission, summarize};
use super::model::*;
use crate::digest::short_hex;
use crate::endpoint::{
    Inbound, Instant, NetAddress, ResponseMatch, TimerConfig, TransactionLayer, TxKey,
};
use crate::hss::{CxClient, CxMessage, CxResult, ProfileRole};
use crate::http::{HttpRequest, HttpResponse};
use crate::node::{Node, Outbox};
use crate::sip::{make_request, make_response, Method, SipMessage, SipUri, StatusCode};
use crate::xdms::{DocKey, XdmsClient, XdmsError, AUID_EXAM_DOCS};

pub const AUID_SUBMISSIONS: &str = "exam-submissions";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExamError {
    #[error("only teachers may provision exams")]
    NotTeacher,
    #[error("open_at must be before close_at")]
    InvalidSchedule,
    #[error("invalid exam: {0}")]
    InvalidExam(SpecError),
    #[error("unknown group {0}")]
    UnknownGroup(String),
    #[error("exam {0} already exists")]
    DuplicateExam(String),
    #[error("unknown exam {0}")]
    UnknownExam(String),
    #[error("exam {exam_id} is {state}")]
    WrongState { exam_id: String, state: ExamState },
    #[error("document store: {0}")]
    Store(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubmitError {
    #[error("unknown exam")]
    UnknownExam,
    #[error("exam is not open")]
    ExamNotOpen,
    #[error("student is not in the exam group")]
    NotAMember,
    #[error("a submission was already accepted")]
    DuplicateSubmission,
    #[error("malformed answers: {0}")]
    MalformedAnswers(String),
}

impl SubmitError {
    pub fn kind(&self) -> &'static str {
        match self {
            SubmitError::UnknownExam => "UnknownExam",
            SubmitError::ExamNotOpen => "ExamNotOpen",
            SubmitError::NotAMember => "NotAMember",
            SubmitError::DuplicateSubmission => "DuplicateSubmission",
            SubmitError::MalformedAnswers(_) => "MalformedAnswers",
        }
    }

    pub fn from_kind(kind: &str) -> Option<SubmitError> {
        Some(match kind {
            "UnknownExam" => SubmitError::UnknownExam,
            "ExamNotOpen" => SubmitError::ExamNotOpen,
            "NotAMember" => SubmitError::NotAMember,
            "DuplicateSubmission" => SubmitError::DuplicateSubmission,
            "MalformedAnswers" => SubmitError::MalformedAnswers(String::new()),
            _ => return None,
        })
    }

    fn http_status(&self) -> u16 {
        match self {
            SubmitError::UnknownExam => 404,
            SubmitError::NotAMember => 403,
            SubmitError::ExamNotOpen | SubmitError::DuplicateSubmission => 409,
            SubmitError::MalformedAnswers(_) => 400,
        }
    }
}

/// An authenticated web session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub identity: SipUri,
    pub roles: BTreeSet<ProfileRole>,
}

impl Session {
    pub fn is_teacher(&self) -> bool {
        self.roles.contains(&ProfileRole::Teacher)
    }
}

#[derive(Debug, Clone)]
enum Outgoing {
    Delivery { exam_id: String, recipient: SipUri },
    Notice,
}

#[derive(Debug, Clone)]
pub struct ExamAsConfig {
    /// URI students address answer MESSAGEs to.
    pub service_uri: SipUri,
    /// S-CSCF the AS sends its own requests through.
    pub scscf: NetAddress,
    pub timers: TimerConfig,
}

/// The mass-examination application server.
pub struct ExamAs {
    name: String,
    cfg: ExamAsConfig,
    tx: TransactionLayer,
    hss: Box<dyn CxClient>,
    xdms: Box<dyn XdmsClient>,
    exams: BTreeMap<String, Exam>,
    jobs: BTreeSet<ScheduledJob>,
    fired: Vec<ScheduledJob>,
    submissions: BTreeMap<(String, String), Submission>,
    journal: Vec<Submission>,
    reports: BTreeMap<String, Vec<GradeReport>>,
    deliveries: BTreeMap<String, DeliveryReport>,
    published: BTreeSet<String>,
    sessions: BTreeMap<String, Session>,
    outgoing: BTreeMap<TxKey, Outgoing>,
    next_exam: u64,
    next_cx: u64,
    next_token: u64,
}

impl ExamAs {
    pub fn new(
        name: &str,
        addr: NetAddress,
        hss: Box<dyn CxClient>,
        xdms: Box<dyn XdmsClient>,
        cfg: ExamAsConfig,
    ) -> Self {
        ExamAs {
            name: name.into(),
            tx: TransactionLayer::new(addr, cfg.timers),
            cfg,
            hss,
            xdms,
            exams: BTreeMap::new(),
            jobs: BTreeSet::new(),
            fired: Vec::new(),
            submissions: BTreeMap::new(),
            journal: Vec::new(),
            reports: BTreeMap::new(),
            deliveries: BTreeMap::new(),
            published: BTreeSet::new(),
            sessions: BTreeMap::new(),
            outgoing: BTreeMap::new(),
            next_exam: 1,
            next_cx: 1,
            next_token: 1,
        }
    }

    pub fn with_directory(mut self, directory: BTreeSet<NetAddress>) -> Self {
        self.tx = self.tx.clone().with_directory(directory);
        self
    }

    pub fn exam(&self, id: &str) -> Option<&Exam> {
        self.exams.get(id)
    }

    pub fn exams(&self) -> impl Iterator<Item = &Exam> {
        self.exams.values()
    }

    pub fn delivery(&self, id: &str) -> Option<&DeliveryReport> {
        self.deliveries.get(id)
    }

    pub fn reports(&self, id: &str) -> Option<&[GradeReport]> {
        self.reports.get(id).map(Vec::as_slice)
    }

    /// Accepted submissions in acceptance order.
    pub fn journal(&self) -> &[Submission] {
        &self.journal
    }

    pub fn pending_jobs(&self) -> impl Iterator<Item = &ScheduledJob> {
        self.jobs.iter()
    }

    pub fn fired_jobs(&self) -> &[ScheduledJob] {
        &self.fired
    }

    fn set_state(&mut self, exam_id: &str, to: ExamState, out: &mut Outbox) {
        if let Some(e) = self.exams.get_mut(exam_id) {
            debug_assert_eq!(e.state.next(), Some(to));
            let from = e.state;
            e.state = to;
            out.transition(from, to, format!("exam {exam_id}"));
        }
        self.persist_exam(exam_id);
    }

    fn persist_exam(&mut self, exam_id: &str) {
        let Some(e) = self.exams.get(exam_id) else {
            return;
        };
        let key = DocKey::new(AUID_EXAM_DOCS, &e.owner.aor_key(), exam_id);
        let body = serde_json::to_vec(e).unwrap_or_default();
        // The in-memory exam stays authoritative if the store is down.
        let _ = self.xdms.put_document(key, CT_EXAM, body, None);
    }

    fn members(&mut self, group: &SipUri) -> Result<Vec<SipUri>, ExamError> {
        self.xdms.resolve_group(group).map_err(|e| match e {
            XdmsError::UnknownGroup(g) => ExamError::UnknownGroup(g),
            other => ExamError::Store(other.to_string()),
        })
    }

    /// Creates and schedules an exam on behalf of an authenticated teacher.
    pub fn provision_exam(
        &mut self,
        spec: ExamSpec,
        teacher: &Session,
        out: &mut Outbox,
    ) -> Result<String, ExamError> {
        if !teacher.is_teacher() {
            return Err(ExamError::NotTeacher);
        }
        spec.validate().map_err(|e| match e {
            SpecError::InvalidSchedule => ExamError::InvalidSchedule,
            other => ExamError::InvalidExam(other),
        })?;
        let exam_id = match spec.exam_id.clone() {
            Some(id) if self.exams.contains_key(&id) => return Err(ExamError::DuplicateExam(id)),
            Some(id) => id,
            None => loop {
                let id = format!("exam-{}", self.next_exam);
                self.next_exam += 1;
                if !self.exams.contains_key(&id) {
                    break id;
                }
            },
        };
        self.members(&spec.group_uri)?;
        let exam = Exam {
            exam_id: exam_id.clone(),
            title: spec.title,
            owner: teacher.identity.aor(),
            group_uri: spec.group_uri,
            questions: spec.questions,
            open_at: spec.open_at,
            close_at: spec.close_at,
            state: ExamState::Draft,
        };
        self.jobs.insert(ScheduledJob {
            fire_at: exam.open_at,
            exam_id: exam_id.clone(),
            action: JobAction::OpenAndDeliver,
        });
        self.jobs.insert(ScheduledJob {
            fire_at: exam.close_at,
            exam_id: exam_id.clone(),
            action: JobAction::CloseAndGrade,
        });
        self.exams.insert(exam_id.clone(), exam);
        self.set_state(&exam_id, ExamState::Scheduled, out);
        Ok(exam_id)
    }

    /// Fires every job due by `now` in (time, exam id, action) order.
    pub fn scheduler_tick(&mut self, now: Instant, out: &mut Outbox) -> Vec<ScheduledJob> {
        let mut fired = Vec::new();
        while self.jobs.first().is_some_and(|j| j.fire_at <= now) {
            let Some(job) = self.jobs.pop_first() else {
                break;
            };
            match job.action {
                JobAction::OpenAndDeliver => {
                    if self.exam_state(&job.exam_id) == Some(ExamState::Scheduled) {
                        self.set_state(&job.exam_id, ExamState::Open, out);
                        let _ = self.deliver_exam(now, &job.exam_id, out);
                    }
                }
                JobAction::CloseAndGrade => {
                    if self.exam_state(&job.exam_id) == Some(ExamState::Open) {
                        self.set_state(&job.exam_id, ExamState::Closed, out);
                        let _ = self.grade_exam(&job.exam_id, out);
                        let _ = self.publish_results(now, &job.exam_id, out);
                    }
                }
            }
            self.fired.push(job.clone());
            fired.push(job);
        }
        fired
    }

    fn exam_state(&self, id: &str) -> Option<ExamState> {
        self.exams.get(id).map(|e| e.state)
    }

    fn require_state(&self, id: &str, state: ExamState) -> Result<&Exam, ExamError> {
        let e = self
            .exams
            .get(id)
            .ok_or_else(|| ExamError::UnknownExam(id.into()))?;
        if e.state != state {
            return Err(ExamError::WrongState {
                exam_id: id.into(),
                state: e.state,
            });
        }
        Ok(e)
    }

    fn send_message(
        &mut self,
        now: Instant,
        to: &SipUri,
        content_type: &str,
        body: Vec<u8>,
        purpose: Outgoing,
        out: &mut Outbox,
    ) -> bool {
        let (host, port) = (self.tx.local().host.clone(), self.tx.local().port);
        let call_id = self.tx.ids().call_id(&host);
        let req = make_request(
            self.tx.ids(),
            (&host, port),
            Method::Message,
            to.aor(),
            self.cfg.service_uri.clone(),
            to.aor(),
            &call_id,
            1,
        )
        .with_body(content_type, body);
        match self.tx.send_request(now, req, self.cfg.scscf.clone(), out) {
            Ok(Some(key)) => {
                self.outgoing.insert(key, purpose);
                true
            }
            _ => false,
        }
    }

    /// Sends the redacted exam to every group member.
    pub fn deliver_exam(
        &mut self,
        now: Instant,
        exam_id: &str,
        out: &mut Outbox,
    ) -> Result<&DeliveryReport, ExamError> {
        let exam = self.require_state(exam_id, ExamState::Open)?;
        let group = exam.group_uri.clone();
        let body = serde_json::to_vec(&exam.paper()).unwrap_or_default();
        let members = self.members(&group)?;
        let mut report = DeliveryReport {
            recipients: members
                .iter()
                .map(|m| (m.aor(), DeliveryStatus::Pending))
                .collect(),
        };
        for m in &members {
            let purpose = Outgoing::Delivery {
                exam_id: exam_id.into(),
                recipient: m.aor(),
            };
            if !self.send_message(now, m, CT_EXAM, body.clone(), purpose, out) {
                report.set(
                    m,
                    DeliveryStatus::Undeliverable(StatusCode::SERVER_ERROR.code()),
                );
            }
        }
        self.deliveries.insert(exam_id.into(), report);
        Ok(&self.deliveries[exam_id])
    }

    /// Validates and records a submission. The first accepted submission
    /// per student and exam wins.
    pub fn accept_submission(&mut self, now: Instant, sub: Submission) -> Result<(), SubmitError> {
        let exam = self
            .exams
            .get(&sub.exam_id)
            .ok_or(SubmitError::UnknownExam)?;
        if exam.state != ExamState::Open || now < exam.open_at || now > exam.close_at {
            return Err(SubmitError::ExamNotOpen);
        }
        let group = exam.group_uri.clone();
        let student = sub.student.aor();
        let key = (sub.exam_id.clone(), student.aor_key());
        let known: BTreeMap<&str, usize> = exam
            .questions
            .iter()
            .map(|q| (q.qid.as_str(), q.choices.len()))
            .collect();
        let bad = sub
            .answers
            .iter()
            .find(|(q, i)| known.get(q.as_str()).is_none_or(|n| **i >= *n));
        let bad = bad.map(|(q, i)| format!("{q}={i}"));
        let members = self.xdms.resolve_group(&group).unwrap_or_default();
        if !members.iter().any(|m| m.aor_key() == student.aor_key()) {
            return Err(SubmitError::NotAMember);
        }
        if self.submissions.contains_key(&key) {
            return Err(SubmitError::DuplicateSubmission);
        }
        if let Some(b) = bad {
            return Err(SubmitError::MalformedAnswers(b));
        }
        let sub = Submission {
            student,
            submitted_at: now,
            ..sub
        };
        let doc = DocKey::new(AUID_SUBMISSIONS, &sub.student.aor_key(), &sub.exam_id);
        // The journal is the durable record; the document copy is for
        // inspection through the XDMS.
        let _ = self.xdms.put_document(
            doc,
            CT_ANSWERS,
            serde_json::to_vec(&sub).unwrap_or_default(),
            None,
        );
        self.journal.push(sub.clone());
        self.submissions.insert(key, sub);
        Ok(())
    }

    fn grade_exam(&mut self, exam_id: &str, out: &mut Outbox) -> Result<(), ExamError> {
        let exam = self.require_state(exam_id, ExamState::Closed)?.clone();
        let members = self.members(&exam.group_uri)?;
        let reports = members
            .iter()
            .map(
                |m| match self.submissions.get(&(exam_id.to_string(), m.aor_key())) {
                    Some(s) => grade(&exam, s),
                    None => no_submission(&exam, m),
                },
            )
            .collect();
        self.reports.insert(exam_id.into(), reports);
        self.set_state(exam_id, ExamState::Graded, out);
        Ok(())
    }

    /// Sends every group member their result and the owner a summary.
    pub fn publish_results(
        &mut self,
        now: Instant,
        exam_id: &str,
        out: &mut Outbox,
    ) -> Result<usize, ExamError> {
        let exam = self.require_state(exam_id, ExamState::Graded)?.clone();
        if !self.published.insert(exam_id.into()) {
            return Err(ExamError::WrongState {
                exam_id: exam_id.into(),
                state: ExamState::Graded,
            });
        }
        let reports = self.reports.get(exam_id).cloned().unwrap_or_default();
        for r in &reports {
            let body = serde_json::to_vec(r).unwrap_or_default();
            self.send_message(now, &r.student, CT_RESULT, body, Outgoing::Notice, out);
        }
        let summary = summarize(&exam, &reports);
        let body = serde_json::to_vec(&summary).unwrap_or_default();
        self.send_message(now, &exam.owner, CT_SUMMARY, body, Outgoing::Notice, out);
        Ok(reports.len() + 1)
    }

    fn on_request(&mut self, now: Instant, msg: SipMessage, out: &mut Outbox) {
        if msg.method() == Method::Ack || self.tx.receive_request(now, &msg, out) != Inbound::New {
            return;
        }
        let answers =
            msg.method() == Method::Message && msg.content_type.as_deref() == Some(CT_ANSWERS);
        let status = if answers {
            StatusCode::OK
        } else {
            StatusCode::TEMPORARILY_UNAVAILABLE
        };
        if let Ok(r) = make_response(&msg, status, Vec::new()) {
            let _ = self.tx.send_response(now, r, out);
        }
        if !answers {
            return;
        }
        let student = msg.from.uri.aor();
        let outcome = match serde_json::from_slice::<AnswerSheet>(&msg.body) {
            Err(e) => Err((String::new(), SubmitError::MalformedAnswers(e.to_string()))),
            Ok(sheet) if sheet.exam_id.is_empty() => Err((
                String::new(),
                SubmitError::MalformedAnswers("missing exam_id".into()),
            )),
            Ok(sheet) => {
                let exam_id = sheet.exam_id.clone();
                self.accept_submission(
                    now,
                    Submission {
                        exam_id: sheet.exam_id,
                        student: student.clone(),
                        answers: sheet.answers,
                        submitted_at: now,
                        channel: Channel::SipMessage,
                    },
                )
                .map(|()| exam_id.clone())
                .map_err(|e| (exam_id, e))
            }
        };
        let receipt = match outcome {
            Ok(exam_id) => Receipt {
                exam_id,
                accepted: true,
                reason: None,
            },
            Err((exam_id, e)) => Receipt {
                exam_id,
                accepted: false,
                reason: Some(e.kind().into()),
            },
        };
        let body = serde_json::to_vec(&receipt).unwrap_or_default();
        self.send_message(now, &student, CT_RECEIPT, body, Outgoing::Notice, out);
    }

    fn on_response(&mut self, now: Instant, msg: SipMessage) {
        if let ResponseMatch::Deliver {
            key,
            is_final: true,
            ..
        } = self.tx.match_response(now, &msg)
        {
            let status = msg.status().map_or(500, StatusCode::code);
            self.settle(&key, status);
        }
    }

    fn settle(&mut self, key: &TxKey, status: u16) {
        if let Some(Outgoing::Delivery { exam_id, recipient }) = self.outgoing.remove(key) {
            let s = if (200..300).contains(&status) {
                DeliveryStatus::Delivered
            } else {
                DeliveryStatus::Undeliverable(status)
            };
            if let Some(r) = self.deliveries.get_mut(&exam_id) {
                r.set(&recipient, s);
            }
        }
    }

    // ---- HTTP API ----

    fn session(&self, req: &HttpRequest) -> Result<Session, HttpResponse> {
        req.bearer()
            .and_then(|t| self.sessions.get(t))
            .cloned()
            .ok_or_else(|| HttpResponse::error(401, "Unauthorized"))
    }

    fn login(&mut self, req: &HttpRequest, out: &mut Outbox) -> HttpResponse {
        let Some(body) = req.json_body() else {
            return HttpResponse::error(400, "Malformed");
        };
        let (Some(user), Some(passkey)) = (body["user"].as_str(), body["passkey"].as_str()) else {
            return HttpResponse::error(400, "Malformed");
        };
        let Ok(identity) = SipUri::parse(user) else {
            return HttpResponse::error(400, "Malformed");
        };
        let id = self.next_cx;
        self.next_cx += 1;
        let mar = CxMessage::mar(id, identity.aor(), passkey);
        let answer = self.hss.call(&mar);
        out.cx(self.hss.peer(), mar.redacted(), answer.clone());
        let profile = match answer {
            Err(_) => return HttpResponse::error(500, "HssUnreachable"),
            Ok(a) if a.result == Some(CxResult::Success) => a.profile,
            Ok(_) => return HttpResponse::error(401, "BadCredential"),
        };
        let roles = profile.map(|p| p.roles).unwrap_or_default();
        let token = short_hex(
            &[
                b"session",
                identity.aor_key().as_bytes(),
                &self.next_token.to_be_bytes(),
            ],
            16,
        );
        self.next_token += 1;
        let role = if roles.contains(&ProfileRole::Teacher) {
            "teacher"
        } else {
            "student"
        };
        self.sessions.insert(
            token.clone(),
            Session {
                identity: identity.aor(),
                roles,
            },
        );
        HttpResponse::json(
            200,
            &json!({ "token": token, "role": role, "identity": identity.aor_key() }),
        )
    }

    fn create_exam(&mut self, req: &HttpRequest, out: &mut Outbox) -> HttpResponse {
        let session = match self.session(req) {
            Ok(s) => s,
            Err(r) => return r,
        };
        let Ok(spec) = serde_json::from_slice::<ExamSpec>(&req.body) else {
            return HttpResponse::error(400, "Malformed");
        };
        match self.provision_exam(spec, &session, out) {
            Ok(id) => HttpResponse::json(201, &json!({ "exam_id": id, "state": "Scheduled" })),
            Err(ExamError::NotTeacher) => HttpResponse::error(403, "NotTeacher"),
            Err(ExamError::InvalidSchedule) => HttpResponse::error(400, "InvalidSchedule"),
            Err(ExamError::InvalidExam(_)) => HttpResponse::error(400, "InvalidExam"),
            Err(ExamError::UnknownGroup(_)) => HttpResponse::error(404, "UnknownGroup"),
            Err(ExamError::DuplicateExam(_)) => HttpResponse::error(409, "DuplicateExam"),
            Err(_) => HttpResponse::error(500, "Internal"),
        }
    }

    fn owns(session: &Session, exam: &Exam) -> bool {
        session.is_teacher() && session.identity.aor_key() == exam.owner.aor_key()
    }

    fn student_exam_json(exam: &Exam) -> serde_json::Value {
        let mut v = serde_json::to_value(exam.paper()).unwrap_or_default();
        v["open_at"] = json!(exam.open_at);
        v["state"] = json!(exam.state);
        v
    }

    fn get_exam(&self, session: &Session, exam: &Exam) -> HttpResponse {
        if Self::owns(session, exam) {
            HttpResponse::json(200, &serde_json::to_value(exam).unwrap_or_default())
        } else {
            HttpResponse::json(200, &Self::student_exam_json(exam))
        }
    }

    fn active(&mut self, session: &Session, req: &HttpRequest) -> HttpResponse {
        let student = match req.query("student") {
            Some(s) => match SipUri::parse(&s) {
                Ok(u) => u.aor(),
                Err(_) => return HttpResponse::error(400, "Malformed"),
            },
            None => session.identity.clone(),
        };
        if !session.is_teacher() && student.aor_key() != session.identity.aor_key() {
            return HttpResponse::error(403, "Forbidden");
        }
        let open: Vec<Exam> = self
            .exams
            .values()
            .filter(|e| e.state == ExamState::Open)
            .cloned()
            .collect();
        let mut list = Vec::new();
        for e in open {
            let members = self.xdms.resolve_group(&e.group_uri).unwrap_or_default();
            if members.iter().any(|m| m.aor_key() == student.aor_key()) {
                list.push(Self::student_exam_json(&e));
            }
        }
        HttpResponse::json(200, &json!({ "exams": list }))
    }

    fn submit_http(
        &mut self,
        now: Instant,
        session: &Session,
        exam_id: &str,
        req: &HttpRequest,
    ) -> HttpResponse {
        let Ok(sheet) = serde_json::from_slice::<AnswerSheet>(&req.body) else {
            return HttpResponse::error(400, "Malformed");
        };
        if !sheet.exam_id.is_empty() && sheet.exam_id != exam_id {
            return HttpResponse::error(400, "Malformed");
        }
        let sub = Submission {
            exam_id: exam_id.into(),
            student: session.identity.clone(),
            answers: sheet.answers,
            submitted_at: now,
            channel: Channel::HttpApi,
        };
        match self.accept_submission(now, sub) {
            Ok(()) => HttpResponse::json(201, &json!({ "exam_id": exam_id, "accepted": true })),
            Err(e) => HttpResponse::error(e.http_status(), e.kind()),
        }
    }

    fn results(&self, session: &Session, exam: &Exam) -> HttpResponse {
        if exam.state != ExamState::Graded {
            return HttpResponse::error(404, "NotGraded");
        }
        let reports = self.reports.get(&exam.exam_id).cloned().unwrap_or_default();
        if Self::owns(session, exam) {
            let summary = summarize(exam, &reports);
            return HttpResponse::json(200, &json!({ "reports": reports, "summary": summary }));
        }
        match reports
            .iter()
            .find(|r| r.student.aor_key() == session.identity.aor_key())
        {
            Some(r) => HttpResponse::json(200, &serde_json::to_value(r).unwrap_or_default()),
            None => HttpResponse::error(403, "NotAMember"),
        }
    }

    fn report(&self, session: &Session, exam: &Exam) -> HttpResponse {
        if !Self::owns(session, exam) {
            return HttpResponse::error(403, "NotTeacher");
        }
        let submissions = self
            .submissions
            .keys()
            .filter(|(id, _)| *id == exam.exam_id)
            .count();
        let delivery = self.deliveries.get(&exam.exam_id);
        let reports = self.reports.get(&exam.exam_id);
        let summary = reports.map(|r| summarize(exam, r));
        HttpResponse::json(
            200,
            &json!({
                "exam_id": exam.exam_id,
                "state": exam.state,
                "submissions": submissions,
                "delivered": delivery.map(DeliveryReport::delivered),
                "undeliverable": delivery.map(DeliveryReport::undeliverable),
                "summary": summary,
                "reports": reports,
            }),
        )
    }

    /// Serves the JSON API.
    pub fn http_api(&mut self, now: Instant, req: &HttpRequest, out: &mut Outbox) -> HttpResponse {
        let segs: Vec<String> = req.segments().into_iter().map(String::from).collect();
        let segs: Vec<&str> = segs.iter().map(String::as_str).collect();
        let method = req.method.as_str();
        match (method, segs.as_slice()) {
            ("POST", ["api", "login"]) => return self.login(req, out),
            ("POST", ["api", "exams"]) => return self.create_exam(req, out),
            _ => {}
        }
        let session = match self.session(req) {
            Ok(s) => s,
            Err(r) => return r,
        };
        if let ("GET", ["api", "exams", "active"]) = (method, segs.as_slice()) {
            return self.active(&session, req);
        }
        let (["api", "exams", id] | ["api", "exams", id, _]) = segs.as_slice() else {
            return HttpResponse::error(404, "NotFound");
        };
        let id = crate::http::percent_decode(id);
        if method == "POST" && segs.get(3) == Some(&"submissions") {
            return self.submit_http(now, &session, &id, req);
        }
        let Some(exam) = self.exams.get(&id) else {
            return HttpResponse::error(404, "UnknownExam");
        };
        match (method, segs.get(3).copied()) {
            ("GET", None) => self.get_exam(&session, exam),
            ("GET", Some("results")) => self.results(&session, exam),
            ("GET", Some("report")) => self.report(&session, exam),
            _ => HttpResponse::error(404, "NotFound"),
        }
    }
}

impl Node for ExamAs {
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
            self.on_response(now, msg);
        }
    }

    fn on_timer(&mut self, now: Instant, out: &mut Outbox) {
        for t in self.tx.on_timer(now, out) {
            self.settle(&t.key, StatusCode::REQUEST_TIMEOUT.code());
        }
        self.scheduler_tick(now, out);
    }

    fn next_deadline(&self) -> Option<Instant> {
        let job = self.jobs.first().map(|j| j.fire_at);
        match (self.tx.next_deadline(), job) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn on_http_request(
        &mut self,
        now: Instant,
        req: &HttpRequest,
        out: &mut Outbox,
    ) -> Option<HttpResponse> {
        Some(self.http_api(now, req, out))
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
