//! The mass-examination application: exam model, grading and the
//! application server node.

mod grade;
mod model;
mod service;

pub use grade::{grade, no_submission, summarize};
pub use model::{
    AnswerSheet, Channel, DeliveryReport, DeliveryStatus, Exam, ExamPaper, ExamSpec, ExamState,
    GradeReport, JobAction, Mark, PaperQuestion, Question, Receipt, ResultSummary, ScheduledJob,
    SpecError, Submission, CT_ANSWERS, CT_EXAM, CT_RECEIPT, CT_RESULT, CT_SUMMARY,
};
pub use service::{ExamAs, ExamAsConfig, ExamError, Session, SubmitError, AUID_SUBMISSIONS};
