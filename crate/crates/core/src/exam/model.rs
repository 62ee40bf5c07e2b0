use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::endpoint::Instant;
use crate::sip::SipUri;

pub const CT_EXAM: &str = "application/exam+json";
pub const CT_ANSWERS: &str = "application/exam-answers+json";
pub const CT_RESULT: &str = "application/exam-result+json";
pub const CT_RECEIPT: &str = "application/exam-receipt+json";
pub const CT_SUMMARY: &str = "application/exam-summary+json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExamState {
    Draft,
    Scheduled,
    Open,
    Closed,
    Graded,
}

impl ExamState {
    pub fn as_str(self) -> &'static str {
        match self {
            ExamState::Draft => "Draft",
            ExamState::Scheduled => "Scheduled",
            ExamState::Open => "Open",
            ExamState::Closed => "Closed",
            ExamState::Graded => "Graded",
        }
    }

    /// The single permitted successor state.
    pub fn next(self) -> Option<ExamState> {
        match self {
            ExamState::Draft => Some(ExamState::Scheduled),
            ExamState::Scheduled => Some(ExamState::Open),
            ExamState::Open => Some(ExamState::Closed),
            ExamState::Closed => Some(ExamState::Graded),
            ExamState::Graded => None,
        }
    }
}

impl fmt::Display for ExamState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Single-correct-choice question. Points are whole numbers so that scores
/// and their sums compare exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub qid: String,
    pub prompt: String,
    pub choices: Vec<String>,
    pub correct_index: usize,
    #[serde(default = "one")]
    pub points: u32,
}

fn one() -> u32 {
    1
}

/// What a teacher submits to create an exam.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exam_id: Option<String>,
    pub title: String,
    pub group_uri: SipUri,
    pub questions: Vec<Question>,
    pub open_at: Instant,
    pub close_at: Instant,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("open_at must be before close_at")]
    InvalidSchedule,
    #[error("exam has no questions")]
    NoQuestions,
    #[error("question {0} needs at least two choices")]
    TooFewChoices(String),
    #[error("question {0} has correct_index out of range")]
    CorrectIndexOutOfRange(String),
    #[error("question id {0} is used twice")]
    DuplicateQid(String),
}

impl ExamSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.open_at >= self.close_at {
            return Err(SpecError::InvalidSchedule);
        }
        if self.questions.is_empty() {
            return Err(SpecError::NoQuestions);
        }
        let mut seen = Vec::new();
        for q in &self.questions {
            if q.choices.len() < 2 {
                return Err(SpecError::TooFewChoices(q.qid.clone()));
            }
            if q.correct_index >= q.choices.len() {
                return Err(SpecError::CorrectIndexOutOfRange(q.qid.clone()));
            }
            if seen.contains(&&q.qid) {
                return Err(SpecError::DuplicateQid(q.qid.clone()));
            }
            seen.push(&q.qid);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exam {
    pub exam_id: String,
    pub title: String,
    pub owner: SipUri,
    pub group_uri: SipUri,
    pub questions: Vec<Question>,
    pub open_at: Instant,
    pub close_at: Instant,
    pub state: ExamState,
}

impl Exam {
    pub fn max_score(&self) -> u32 {
        self.questions.iter().map(|q| q.points).sum()
    }

    /// The payload students see: no answer key, no points.
    pub fn paper(&self) -> ExamPaper {
        ExamPaper {
            exam_id: self.exam_id.clone(),
            title: self.title.clone(),
            questions: self
                .questions
                .iter()
                .map(|q| PaperQuestion {
                    qid: q.qid.clone(),
                    prompt: q.prompt.clone(),
                    choices: q.choices.clone(),
                })
                .collect(),
            close_at: self.close_at,
        }
    }
}

/// Exam payload as delivered to students.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamPaper {
    pub exam_id: String,
    pub title: String,
    pub questions: Vec<PaperQuestion>,
    pub close_at: Instant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperQuestion {
    pub qid: String,
    pub prompt: String,
    pub choices: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    SipMessage,
    HttpApi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub exam_id: String,
    pub student: SipUri,
    pub answers: BTreeMap<String, usize>,
    pub submitted_at: Instant,
    pub channel: Channel,
}

/// Body of an answers MESSAGE or an HTTP submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSheet {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub exam_id: String,
    pub answers: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mark {
    Correct,
    Wrong,
    Unanswered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeReport {
    pub exam_id: String,
    pub student: SipUri,
    pub per_question: BTreeMap<String, Mark>,
    pub score: u32,
    pub max_score: u32,
    /// False for group members who never submitted.
    #[serde(default = "yes")]
    pub submitted: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub exam_id: String,
    pub count: usize,
    pub mean_score: Option<f64>,
    pub max_score: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub exam_id: String,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JobAction {
    OpenAndDeliver,
    CloseAndGrade,
}

/// Ordered by fire time, then exam id, then action.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScheduledJob {
    pub fire_at: Instant,
    pub exam_id: String,
    pub action: JobAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "code")]
pub enum DeliveryStatus {
    Pending,
    Delivered,
    Undeliverable(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub recipients: Vec<(SipUri, DeliveryStatus)>,
}

impl DeliveryReport {
    pub fn count(&self, pred: impl Fn(DeliveryStatus) -> bool) -> usize {
        self.recipients.iter().filter(|(_, s)| pred(*s)).count()
    }

    pub fn delivered(&self) -> usize {
        self.count(|s| s == DeliveryStatus::Delivered)
    }

    pub fn undeliverable(&self) -> usize {
        self.count(|s| matches!(s, DeliveryStatus::Undeliverable(_)))
    }

    pub fn is_complete(&self) -> bool {
        self.count(|s| s == DeliveryStatus::Pending) == 0
    }

    pub(crate) fn set(&mut self, who: &SipUri, status: DeliveryStatus) {
        let key = who.aor_key();
        if let Some(slot) = self.recipients.iter_mut().find(|(u, _)| u.aor_key() == key) {
            slot.1 = status;
        }
    }
}
