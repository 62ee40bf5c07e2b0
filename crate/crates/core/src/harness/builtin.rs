//! The scenario set shipped with the harness, one per reproduced figure
//! plus a lossy registration run.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::flow::{FlowPattern, FlowStep, MatchMode};
use super::scenario::{
    ActorSpec, GroupFixture, LocationFixture, RuleFixture, Scenario, SubscriberFixture,
};
use crate::endpoint::{Instant, LossConfig, NodeSpec, Role, Topology};
use crate::exam::{Channel, ExamSpec, Question, CT_ANSWERS, CT_EXAM, CT_RESULT, CT_SUMMARY};
use crate::hss::ProfileRole;
use crate::ims::{TriggerCondition, EXAM_EVENT};
use crate::node::Command;
use crate::sip::{Method, SipUri};
use crate::ua::EXAM_SERVICE_USER;
use crate::HOME_DOMAIN;

pub const PROXY_INVITE: &str = "fig2_3_proxy_invite";
pub const REDIRECT_INVITE: &str = "fig5_6_redirect_invite";
pub const REGISTER_SUBSCRIBE: &str = "fig10_register_subscribe";
pub const CSCF_CHAIN: &str = "fig11_cscf_chain";
pub const EXAM_E2E: &str = "fig8_exam_e2e";
pub const LOSSY_REGISTER: &str = "lossy_register";

/// Loss probability of the lossy registration run.
pub const LOSSY_P: f64 = 0.2;

/// Open and close instants of the exam in the end-to-end run.
pub const EXAM_OPEN_MS: u64 = 60_000;
pub const EXAM_CLOSE_MS: u64 = 660_000;
pub const EXAM_GROUP: &str = "cs101";
pub const EXAM_ID: &str = "cs101-midterm";

pub fn builtin_names() -> Vec<&'static str> {
    vec![
        PROXY_INVITE,
        REDIRECT_INVITE,
        REGISTER_SUBSCRIBE,
        CSCF_CHAIN,
        EXAM_E2E,
        LOSSY_REGISTER,
    ]
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![
        proxy_invite(),
        redirect_invite(),
        register_subscribe(),
        cscf_chain(),
        exam_e2e(),
        lossy_register(),
    ]
}

pub fn builtin(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

fn home(user: &str) -> SipUri {
    SipUri::new(Some(user), HOME_DOMAIN)
}

fn uri(text: &str) -> SipUri {
    SipUri::parse(text).expect("builtin uri")
}

fn step(src: &str, dst: &str, kind: &str) -> FlowStep {
    FlowStep::new(src, dst, kind)
}

fn standalone(server: NodeSpec) -> Topology {
    Topology {
        nodes: vec![
            NodeSpec::new("caller", Role::Ua, "10.0.0.1", 5060),
            server,
            NodeSpec::new("callee", Role::Ua, "10.0.0.2", 5060),
        ],
        links: Vec::new(),
        loss: LossConfig::default(),
    }
}

fn callee_location(server: &str) -> LocationFixture {
    LocationFixture {
        server: server.into(),
        aor: home("callee"),
        contact: uri("sip:callee@10.0.0.2:5060"),
    }
}

fn invite_callee() -> Command {
    Command::Invite {
        target: home("callee"),
    }
}

pub fn proxy_invite() -> Scenario {
    let mut s = Scenario::new(
        PROXY_INVITE,
        standalone(NodeSpec::new("proxy", Role::Proxy, "10.0.5.1", 5060)),
    );
    s.description = "INVITE, 200 and ACK relayed through a stateful proxy".into();
    s.actors = vec![
        ActorSpec::new("caller", "sip:caller@ims.kau.test", ""),
        ActorSpec::new("callee", "sip:callee@ims.kau.test", ""),
    ];
    s.locations = vec![callee_location("proxy")];
    s.at(0, "caller", invite_callee()).expect(FlowPattern::new(
        "proxy_invite_ladder",
        MatchMode::Exact,
        vec![
            step("caller", "proxy", "INVITE"),
            step("proxy", "callee", "INVITE"),
            step("callee", "proxy", "200"),
            step("proxy", "caller", "200"),
            step("caller", "proxy", "ACK"),
            step("proxy", "callee", "ACK"),
        ],
    ))
}

pub fn redirect_invite() -> Scenario {
    let mut s = Scenario::new(
        REDIRECT_INVITE,
        standalone(NodeSpec::new("redirect", Role::Redirect, "10.0.5.2", 5060)),
    );
    s.description =
        "INVITE answered with 302, then re-sent by the caller straight to the callee".into();
    s.actors = vec![
        ActorSpec::new("caller", "sip:caller@ims.kau.test", ""),
        ActorSpec::new("callee", "sip:callee@ims.kau.test", ""),
    ];
    s.locations = vec![callee_location("redirect")];
    s.at(0, "caller", invite_callee()).expect(FlowPattern::new(
        "redirect_invite_ladder",
        MatchMode::Exact,
        vec![
            step("caller", "redirect", "INVITE"),
            step("redirect", "caller", "302"),
            step("caller", "redirect", "ACK"),
            step("caller", "callee", "INVITE"),
            step("callee", "caller", "200"),
            step("caller", "callee", "ACK"),
        ],
    ))
}

/// P-CSCF, I-CSCF, S-CSCF, HSS, XDMS and the exam AS, plus the given UAs
/// at 10.0.0.x in order.
pub fn ims_topology(uas: &[&str]) -> Topology {
    let mut nodes = Vec::new();
    for (i, name) in uas.iter().enumerate() {
        nodes.push(NodeSpec::new(
            name,
            Role::Ua,
            &format!("10.0.0.{}", i + 1),
            5060,
        ));
    }
    nodes.extend([
        NodeSpec::new("pcscf-1", Role::Pcscf, "10.0.1.1", 5060).in_group("edge"),
        NodeSpec::new("icscf-1", Role::Icscf, "10.0.2.1", 5060).in_group("core"),
        NodeSpec::new("scscf-1", Role::Scscf, "10.0.2.2", 5060).in_group("core"),
        NodeSpec::new("hss-1", Role::Hss, "10.0.2.3", 3868).in_group("core"),
        NodeSpec::new("xdms-1", Role::Xdms, "10.0.3.2", 5060)
            .with_http(8081)
            .in_group("services"),
        NodeSpec::new("exam-as", Role::As, "10.0.3.1", 5060)
            .with_http(8080)
            .in_group("services"),
    ]);
    Topology {
        nodes,
        links: Vec::new(),
        loss: LossConfig::default(),
    }
}

fn student_fixture(user: &str) -> SubscriberFixture {
    SubscriberFixture::new(&format!("sip:{user}@{HOME_DOMAIN}"), &format!("pk-{user}"))
        .with_role(ProfileRole::Student)
}

fn actor(user: &str) -> ActorSpec {
    ActorSpec::new(
        user,
        &format!("sip:{user}@{HOME_DOMAIN}"),
        &format!("pk-{user}"),
    )
}

/// Answer MESSAGEs to the exam service go to the AS; exam-service
/// SUBSCRIBEs are steered to the XDMS by the S-CSCF itself.
fn exam_rule() -> RuleFixture {
    RuleFixture {
        priority: 0,
        condition: TriggerCondition {
            method: Some(Method::Message),
            request_uri_user: Some(EXAM_SERVICE_USER.into()),
            ..TriggerCondition::default()
        },
        target: "exam-as".into(),
    }
}

fn group(owner: &str, members: &[&str]) -> GroupFixture {
    GroupFixture {
        owner: home(owner),
        doc: "groups".into(),
        uri: home(EXAM_GROUP),
        members: members.iter().map(|m| home(m)).collect(),
    }
}

fn register() -> Command {
    Command::Register {
        passkey: None,
        expires: None,
    }
}

fn registration_steps(ua: &str) -> Vec<FlowStep> {
    vec![
        step(ua, "pcscf-1", "REGISTER"),
        step("pcscf-1", "icscf-1", "REGISTER"),
        step("icscf-1", "hss-1", "UAR"),
        step("hss-1", "icscf-1", "UAA"),
        step("icscf-1", "scscf-1", "REGISTER"),
        step("scscf-1", "hss-1", "SAR"),
        step("hss-1", "scscf-1", "SAA"),
        step("scscf-1", "icscf-1", "200"),
        step("icscf-1", "pcscf-1", "200"),
        step("pcscf-1", ua, "200"),
    ]
}

pub fn register_subscribe() -> Scenario {
    let mut s = Scenario::new(REGISTER_SUBSCRIBE, ims_topology(&["s1"]));
    s.description =
        "Registration through the CSCF chain, then a subscription to the exam service".into();
    s.subscribers = vec![
        student_fixture("s1"),
        SubscriberFixture::new("sip:t1@ims.kau.test", "pk-t1").with_role(ProfileRole::Teacher),
    ];
    s.service_rules = vec![exam_rule()];
    s.groups = vec![group("t1", &["s1"])];
    s.actors = vec![actor("s1")];
    let mut steps = registration_steps("s1");
    steps.extend([
        step("s1", "pcscf-1", "SUBSCRIBE"),
        step("pcscf-1", "scscf-1", "SUBSCRIBE"),
        step("scscf-1", "xdms-1", "SUBSCRIBE"),
        step("xdms-1", "scscf-1", "202"),
        step("scscf-1", "pcscf-1", "202"),
        step("pcscf-1", "s1", "202"),
        step("pcscf-1", "s1", "NOTIFY").containing("Subscription-State: active"),
        step("s1", "pcscf-1", "200"),
    ]);
    s.at(0, "s1", register())
        .at(1000, "s1", Command::Subscribe {})
        .expect(FlowPattern::new(
            "register_then_subscribe",
            MatchMode::Subsequence,
            steps,
        ))
}

pub fn cscf_chain() -> Scenario {
    let mut s = Scenario::new(CSCF_CHAIN, ims_topology(&["s1"]));
    s.description =
        "A single registration and nothing else, so the CSCF chain is seen in isolation".into();
    s.subscribers = vec![student_fixture("s1")];
    s.actors = vec![actor("s1")];
    s.at(0, "s1", register()).expect(FlowPattern::new(
        "cscf_chain",
        MatchMode::Exact,
        registration_steps("s1"),
    ))
}

/// Scripted answers: student `i` answers question `j` with `(i + j) % 3`,
/// so scores differ across the class.
pub fn scripted_answers(student: usize, questions: &[Question]) -> BTreeMap<String, usize> {
    questions
        .iter()
        .enumerate()
        .map(|(j, q)| (q.qid.clone(), (student + j) % q.choices.len()))
        .collect()
}

pub fn exam_questions() -> Vec<Question> {
    let q =
        |qid: &str, prompt: &str, choices: &[&str], correct_index: usize, points: u32| Question {
            qid: qid.into(),
            prompt: prompt.into(),
            choices: choices.iter().map(|c| (*c).into()).collect(),
            correct_index,
            points,
        };
    vec![
        q(
            "q1",
            "Which CSCF is the registrar?",
            &["P-CSCF", "I-CSCF", "S-CSCF"],
            2,
            2,
        ),
        q(
            "q2",
            "Which method carries an instant message?",
            &["MESSAGE", "INFO", "NOTIFY"],
            0,
            1,
        ),
        q(
            "q3",
            "Which node stores subscriber profiles?",
            &["XDMS", "HSS", "AS"],
            1,
            3,
        ),
        q(
            "q4",
            "Which response confirms a SUBSCRIBE?",
            &["200", "180", "202"],
            2,
            1,
        ),
    ]
}

pub fn exam_spec() -> ExamSpec {
    ExamSpec {
        exam_id: Some(EXAM_ID.into()),
        title: "CS101 midterm".into(),
        group_uri: home(EXAM_GROUP),
        questions: exam_questions(),
        open_at: Instant(EXAM_OPEN_MS),
        close_at: Instant(EXAM_CLOSE_MS),
    }
}

pub fn exam_students() -> Vec<String> {
    (1..=10).map(|i| format!("s{i}")).collect()
}

/// Students that register; the rest stay offline.
pub const REGISTERED_STUDENTS: usize = 8;
/// Registered students that submit over HTTP instead of SIP.
pub const HTTP_STUDENTS: [&str; 2] = ["s7", "s8"];

pub fn exam_e2e() -> Scenario {
    let students = exam_students();
    let mut uas: Vec<&str> = vec!["t1"];
    uas.extend(students.iter().map(String::as_str));
    let mut s = Scenario::new(EXAM_E2E, ims_topology(&uas));
    s.description =
        "One teacher and ten students: provisioning, delivery, submission, grading and results"
            .into();
    s.subscribers = vec![
        SubscriberFixture::new("sip:t1@ims.kau.test", "pk-t1").with_role(ProfileRole::Teacher)
    ];
    s.subscribers
        .extend(students.iter().map(|u| student_fixture(u)));
    s.service_rules = vec![exam_rule()];
    s.groups = vec![group("t1", &uas[1..])];
    s.actors = vec![actor("t1")];
    let questions = exam_questions();
    for (i, u) in students.iter().enumerate() {
        let mut a = actor(u);
        a.auto_answer = Some(scripted_answers(i + 1, &questions));
        if HTTP_STUDENTS.contains(&u.as_str()) {
            a.channel = Some(Channel::HttpApi);
        }
        s.actors.push(a);
    }
    s = s.at(0, "t1", register());
    for (i, u) in students.iter().take(REGISTERED_STUDENTS).enumerate() {
        s = s.at(100 * (i as u64 + 1), u, register());
    }
    for (i, u) in students.iter().take(REGISTERED_STUDENTS).enumerate() {
        s = s.at(2000 + 100 * i as u64, u, Command::Subscribe {});
    }
    s = s.at(5000, "t1", Command::ProvisionExam { exam: exam_spec() });
    s.expect(FlowPattern::new(
        "exam_lifecycle",
        MatchMode::Subsequence,
        vec![
            step("t1", "exam-as", "POST /api/exams"),
            step("exam-as", "scscf-1", "MESSAGE").with_content_type(CT_EXAM),
            step("pcscf-1", "s1", "MESSAGE").with_content_type(CT_EXAM),
            step("s1", "pcscf-1", "MESSAGE").with_content_type(CT_ANSWERS),
            step("scscf-1", "exam-as", "MESSAGE").with_content_type(CT_ANSWERS),
            step("exam-as", "scscf-1", "MESSAGE").with_content_type(CT_RESULT),
            step("pcscf-1", "s1", "MESSAGE").with_content_type(CT_RESULT),
            step("pcscf-1", "t1", "MESSAGE").with_content_type(CT_SUMMARY),
        ],
    ))
    .expect(FlowPattern::new(
        "exam_subscription",
        MatchMode::Subsequence,
        vec![
            step("scscf-1", "xdms-1", "SUBSCRIBE").containing(EXAM_EVENT),
            step("xdms-1", "scscf-1", "202"),
            step("pcscf-1", "s1", "NOTIFY"),
        ],
    ))
}

pub fn lossy_register() -> Scenario {
    let mut topo = ims_topology(&["s1"]);
    topo.loss = LossConfig {
        p: LOSSY_P,
        seed: 0,
    };
    let mut s = Scenario::new(LOSSY_REGISTER, topo);
    s.description = "Registration with every datagram dropped with probability 0.2".into();
    s.subscribers = vec![student_fixture("s1")];
    s.actors = vec![actor("s1")];
    s.at(0, "s1", register()).expect(FlowPattern::new(
        "registered_despite_loss",
        MatchMode::Subsequence,
        vec![
            step("s1", "pcscf-1", "REGISTER"),
            step("scscf-1", "hss-1", "SAR"),
            step("pcscf-1", "s1", "200"),
        ],
    ))
}
