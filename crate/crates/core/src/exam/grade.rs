use alloc::collections::BTreeMap;

use super::model::{Exam, GradeReport, Mark, ResultSummary, Submission};
use crate::sip::SipUri;

/// Marks each question Correct when the chosen index equals the key,
/// Unanswered when the qid is absent and Wrong otherwise.
pub fn grade(exam: &Exam, sub: &Submission) -> GradeReport {
    let mut per_question = BTreeMap::new();
    let mut score = 0;
    for q in &exam.questions {
        let mark = match sub.answers.get(&q.qid) {
            None => Mark::Unanswered,
            Some(&i) if i == q.correct_index => {
                score += q.points;
                Mark::Correct
            }
            Some(_) => Mark::Wrong,
        };
        per_question.insert(q.qid.clone(), mark);
    }
    GradeReport {
        exam_id: exam.exam_id.clone(),
        student: sub.student.aor(),
        per_question,
        score,
        max_score: exam.max_score(),
        submitted: true,
    }
}

/// Zero-score report for a group member who never submitted.
pub fn no_submission(exam: &Exam, student: &SipUri) -> GradeReport {
    GradeReport {
        exam_id: exam.exam_id.clone(),
        student: student.aor(),
        per_question: exam
            .questions
            .iter()
            .map(|q| (q.qid.clone(), Mark::Unanswered))
            .collect(),
        score: 0,
        max_score: exam.max_score(),
        submitted: false,
    }
}

/// Count and mean over submitted reports only.
pub fn summarize(exam: &Exam, reports: &[GradeReport]) -> ResultSummary {
    let submitted: alloc::vec::Vec<&GradeReport> = reports.iter().filter(|r| r.submitted).collect();
    let total: u64 = submitted.iter().map(|r| u64::from(r.score)).sum();
    ResultSummary {
        exam_id: exam.exam_id.clone(),
        count: submitted.len(),
        mean_score: (!submitted.is_empty()).then(|| total as f64 / submitted.len() as f64),
        max_score: exam.max_score(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endpoint::Instant;
    use crate::exam::model::{Channel, ExamState, Question};

    fn exam(key: &[usize], points: &[u32]) -> Exam {
        Exam {
            exam_id: "e".into(),
            title: "t".into(),
            owner: SipUri::parse("sip:t1@ims.kau.test").unwrap(),
            group_uri: SipUri::parse("sip:cs101@ims.kau.test").unwrap(),
            questions: key
                .iter()
                .zip(points)
                .enumerate()
                .map(|(i, (&k, &p))| Question {
                    qid: alloc::format!("q{}", i + 1),
                    prompt: "?".into(),
                    choices: alloc::vec!["a".into(), "b".into(), "c".into()],
                    correct_index: k,
                    points: p,
                })
                .collect(),
            open_at: Instant(0),
            close_at: Instant(1),
            state: ExamState::Closed,
        }
    }

    fn sub(answers: &[(&str, usize)]) -> Submission {
        Submission {
            exam_id: "e".into(),
            student: SipUri::parse("sip:s1@ims.kau.test").unwrap(),
            answers: answers.iter().map(|(q, i)| (q.to_string(), *i)).collect(),
            submitted_at: Instant(0),
            channel: Channel::SipMessage,
        }
    }

    #[test]
    fn two_of_three() {
        let r = grade(
            &exam(&[0, 1, 0], &[1, 1, 1]),
            &sub(&[("q1", 0), ("q2", 1), ("q3", 2)]),
        );
        assert_eq!((r.score, r.max_score), (2, 3));
        assert_eq!(r.per_question["q3"], Mark::Wrong);
    }

    #[test]
    fn weighted_full_marks() {
        let r = grade(
            &exam(&[0, 1, 2], &[2, 3, 5]),
            &sub(&[("q1", 0), ("q2", 1), ("q3", 2)]),
        );
        assert_eq!((r.score, r.max_score), (10, 10));
    }

    #[test]
    fn missing_is_unanswered() {
        let r = grade(&exam(&[0, 1], &[1, 1]), &sub(&[("q1", 0)]));
        assert_eq!(r.per_question["q2"], Mark::Unanswered);
        assert_eq!(r.score, 1);
    }

    #[test]
    fn mean_of_two_and_three() {
        let e = exam(&[0, 0, 0], &[1, 1, 1]);
        let mut a = grade(&e, &sub(&[("q1", 0), ("q2", 0)]));
        a.score = 2;
        let mut b = a.clone();
        b.score = 3;
        let none = no_submission(&e, &SipUri::parse("sip:s9@ims.kau.test").unwrap());
        let s = summarize(&e, &[a, b, none]);
        assert_eq!((s.count, s.mean_score, s.max_score), (2, Some(2.5), 3));
    }
}
