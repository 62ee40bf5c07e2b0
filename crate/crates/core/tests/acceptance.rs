//! One test per primary acceptance criterion. Each prints a single
//! `PASS <criterion>` or `FAIL <criterion>: <reason>` line.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;

use imsbed_core::endpoint::{Instant, LossConfig, Role};
use imsbed_core::exam::{ExamAs, ExamState, CT_EXAM, CT_RESULT, CT_SUMMARY};
use imsbed_core::harness::builtin::{
    exam_questions, exam_students, ims_topology, scripted_answers, EXAM_CLOSE_MS, EXAM_ID,
    EXAM_OPEN_MS, REGISTERED_STUDENTS,
};
use imsbed_core::harness::{
    builtin, builtin_scenarios, check, run, ActorSpec, Scenario, SubscriberFixture, Trace,
    WireRecord, World,
};
use imsbed_core::hss::ProfileRole;
use imsbed_core::ims::Scscf;
use imsbed_core::node::Command;
use imsbed_core::sip::{parse_message, serialize_message, SipUri};
use imsbed_core::ua::{Registration, SubmitOutcome, UaNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: &str, outcome: Result<(), String>) {
    match outcome {
        Ok(()) => println!("PASS {criterion}"),
        Err(why) => {
            println!("FAIL {criterion}: {why}");
            panic!("{criterion}: {why}");
        }
    }
}

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

fn wire<'a>(
    t: &'a Trace,
    src: &'a str,
    dst: &'a str,
    kind: &'a str,
) -> impl Iterator<Item = &'a WireRecord> + 'a {
    t.wire_events
        .iter()
        .filter(move |w| w.src == src && w.dst == dst && w.kind == kind)
}

fn quiescent_world(s: Scenario) -> Result<World, String> {
    let mut w = World::new(s).map_err(|e| e.to_string())?;
    w.run_to_quiescence().map_err(|e| e.to_string())?;
    Ok(w)
}

fn proxy_flow_conformance() {
    report(
        "proxy_flow_conformance",
        (|| {
            let s = builtin("fig2_3_proxy_invite").ok_or("builtin missing")?;
            let trace = run(&s).map_err(|e| e.to_string())?;
            for (name, result) in check(&s, &trace) {
                ensure(result.is_match(), || format!("{name}: {result:?}"))?;
            }
            let invites = trace
                .wire_events
                .iter()
                .filter(|w| w.kind == "INVITE")
                .count();
            ensure(invites == 2, || {
                format!("{invites} INVITE wire events, expected 2")
            })
        })(),
    );
}

fn redirect_flow_conformance() {
    report(
        "redirect_flow_conformance",
        (|| {
            let s = builtin("fig5_6_redirect_invite").ok_or("builtin missing")?;
            let w = quiescent_world(s.clone())?;
            ensure(w.is_quiescent(), || "not quiescent".into())?;
            let t = w.trace();
            let received = t
                .wire_events
                .iter()
                .filter(|e| e.dst == "redirect" && e.kind == "INVITE")
                .count();
            ensure(received == 1, || {
                format!("redirect received {received} INVITEs")
            })?;
            let redirects: Vec<_> = wire(t, "redirect", "caller", "302").collect();
            ensure(redirects.len() == 1, || {
                format!("{} 302 responses", redirects.len())
            })?;
            ensure(redirects[0].wire.contains("\r\nContact: "), || {
                "302 without Contact".into()
            })?;
            let forwarded = t
                .wire_events
                .iter()
                .filter(|e| e.src == "redirect" && e.is_request())
                .count();
            ensure(forwarded == 0, || {
                format!("redirect forwarded {forwarded} requests")
            })?;
            let direct = wire(t, "caller", "callee", "INVITE").count();
            ensure(direct == 1, || {
                format!("{direct} direct INVITEs to the callee")
            })?;
            let first_302 = redirects[0].seq;
            ensure(
                wire(t, "caller", "callee", "INVITE").all(|e| e.seq > first_302),
                || "direct INVITE before the 302".into(),
            )?;
            for (name, result) in check(&s, t) {
                ensure(result.is_match(), || format!("{name}: {result:?}"))?;
            }
            Ok(())
        })(),
    );
}

fn registration_subscription_conformance() {
    report(
        "registration_subscription_conformance",
        (|| {
            let s = builtin("fig10_register_subscribe").ok_or("builtin missing")?;
            let trace = run(&s).map_err(|e| e.to_string())?;
            for (name, result) in check(&s, &trace) {
                ensure(result.is_match(), || format!("{name}: {result:?}"))?;
            }
            let first = |kind: &str| {
                trace
                    .cx_events
                    .iter()
                    .find(|c| c.kind == kind)
                    .map(|c| c.seq)
            };
            let (uar, sar) = (first("UAR"), first("SAR"));
            ensure(matches!((uar, sar), (Some(u), Some(s)) if u < s), || {
                format!("UAR at {uar:?}, SAR at {sar:?}")
            })?;
            ensure(wire(&trace, "pcscf-1", "s1", "200").count() >= 1, || {
                "no 200 to the UA".into()
            })?;
            ensure(
                wire(&trace, "scscf-1", "xdms-1", "SUBSCRIBE").count() == 1,
                || "SUBSCRIBE not routed S-CSCF to XDMS once".into(),
            )?;
            ensure(
                wire(&trace, "xdms-1", "scscf-1", "202").count() == 1,
                || "no 202 from the XDMS".into(),
            )?;
            let subscribe = wire(&trace, "s1", "pcscf-1", "SUBSCRIBE")
                .next()
                .ok_or("UA sent no SUBSCRIBE")?;
            let active: Vec<_> = trace
                .wire_events
                .iter()
                .filter(|w| w.dst == "s1" && w.kind == "NOTIFY" && w.delivered())
                .filter(|w| w.wire.contains("Subscription-State: active"))
                .collect();
            ensure(active.len() == 1, || {
                format!("{} NOTIFY(active) to the UA", active.len())
            })?;
            let delay = active[0].time.since(subscribe.time);
            ensure(delay <= 1000, || {
                format!("NOTIFY(active) {delay} ms after SUBSCRIBE")
            })
        })(),
    );
}

const ONE_HOP_MS: u64 = 10;

/// Score of every student computed straight from the answer key.
fn oracle_scores() -> BTreeMap<String, u32> {
    let questions = exam_questions();
    exam_students()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let mut score = 0;
            if i < REGISTERED_STUDENTS {
                let answers = scripted_answers(i + 1, &questions);
                for q in &questions {
                    for choice in 0..q.choices.len() {
                        if answers.get(&q.qid) == Some(&choice) && choice == q.correct_index {
                            score += q.points;
                        }
                    }
                }
            }
            (format!("sip:{u}@ims.kau.test"), score)
        })
        .collect()
}

fn exam_end_to_end() {
    report(
        "exam_end_to_end",
        (|| {
            let s = builtin("fig8_exam_e2e").ok_or("builtin missing")?;
            let w = quiescent_world(s.clone())?;
            let t = w.trace();
            for (name, result) in check(&s, t) {
                ensure(result.is_match(), || format!("{name}: {result:?}"))?;
            }
            let t1: &UaNode = w.node("t1").ok_or("no teacher node")?;
            ensure(t1.provisioned() == [Ok(EXAM_ID.to_string())], || {
                format!("provisioning: {:?}", t1.provisioned())
            })?;

            let exam_as: &ExamAs = w.node("exam-as").ok_or("no AS node")?;
            let report = exam_as.delivery(EXAM_ID).ok_or("no delivery report")?;
            ensure(
                report.delivered() == 8 && report.undeliverable() == 2,
                || {
                    format!(
                        "{} delivered, {} undeliverable",
                        report.delivered(),
                        report.undeliverable()
                    )
                },
            )?;
            let deliveries: Vec<_> = t
                .wire_events
                .iter()
                .filter(|e| e.src == "exam-as" && e.content_type.as_deref() == Some(CT_EXAM))
                .collect();
            let opened = t
                .transitions_of("exam-as")
                .find(|r| r.to == ExamState::Open.as_str())
                .ok_or("exam never opened")?;
            ensure(opened.time == Instant(EXAM_OPEN_MS), || {
                format!("opened at {}", opened.time)
            })?;
            // Wire events are stamped on arrival, one hop after sending.
            ensure(
                deliveries.len() == 10
                    && deliveries
                        .iter()
                        .all(|e| e.time.since(opened.time) <= ONE_HOP_MS),
                || {
                    format!(
                        "{} exam MESSAGEs, not all sent at open_at",
                        deliveries.len()
                    )
                },
            )?;

            ensure(exam_as.journal().len() == 8, || {
                format!("{} submissions accepted", exam_as.journal().len())
            })?;
            for u in exam_students().iter().take(REGISTERED_STUDENTS) {
                let ua: &UaNode = w.node(u).ok_or("missing student")?;
                ensure(
                    ua.outcome(EXAM_ID) == Some(&SubmitOutcome::Accepted),
                    || format!("{u}: {:?}", ua.outcome(EXAM_ID)),
                )?;
            }

            let grades: BTreeMap<String, u32> = exam_as
                .reports(EXAM_ID)
                .ok_or("no grade reports")?
                .iter()
                .map(|r| (r.student.aor_key(), r.score))
                .collect();
            let oracle = oracle_scores();
            ensure(grades == oracle, || {
                format!("grades {grades:?} != oracle {oracle:?}")
            })?;

            let count = |ct: &str| {
                t.wire_events
                    .iter()
                    .filter(|e| {
                        e.src == "exam-as"
                            && e.kind == "MESSAGE"
                            && e.content_type.as_deref() == Some(ct)
                    })
                    .count()
            };
            ensure(count(CT_RESULT) == 10, || {
                format!("{} result MESSAGEs", count(CT_RESULT))
            })?;
            ensure(count(CT_SUMMARY) == 1, || {
                format!("{} summary MESSAGEs", count(CT_SUMMARY))
            })?;

            let graded = t
                .transitions_of("exam-as")
                .find(|r| r.to == ExamState::Graded.as_str())
                .ok_or("exam never graded")?;
            ensure(graded.time == Instant(EXAM_CLOSE_MS), || {
                format!("graded at {}", graded.time)
            })?;
            let students: Vec<String> = t
                .nodes
                .iter()
                .filter(|n| n.role == Role::Ua && n.name != "t1")
                .map(|n| n.name.clone())
                .collect();
            let visible = |src: &str, dst: &str| students.iter().any(|s| s == src || s == dst);
            let leaks = t
                .wire_events
                .iter()
                .filter(|e| {
                    e.seq < graded.seq
                        && visible(&e.src, &e.dst)
                        && e.wire.contains("correct_index")
                })
                .count()
                + t.http_events
                    .iter()
                    .filter(|e| e.seq < graded.seq && visible(&e.src, &e.dst))
                    .filter(|e| {
                        e.response_body.contains("correct_index")
                            || e.request_body.contains("correct_index")
                    })
                    .count();
            ensure(leaks == 0, || {
                format!("{leaks} student-visible events carry correct_index")
            })
        })(),
    );
}

fn corpus_dir(kind: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/corpus")
        .join(kind)
}

fn valid_corpus() -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(corpus_dir("valid"))
        .expect("valid corpus")
        .map(|e| e.expect("corpus entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "sip"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn mutate(rng: &mut ChaCha8Rng, base: &[u8]) -> Vec<u8> {
    let mut m = base.to_vec();
    for _ in 0..rng.random_range(1..=4) {
        let len = m.len();
        match rng.random_range(0..7) {
            0 if len > 0 => {
                let i = rng.random_range(0..len);
                m[i] ^= 1 << rng.random_range(0..8);
            }
            1 => {
                let i = rng.random_range(0..=len);
                let b = *b"\r\n:;,<>\" \t0z\x00\xff"
                    .get(rng.random_range(0..14))
                    .unwrap();
                m.insert(i, b);
            }
            2 if len > 0 => {
                m.remove(rng.random_range(0..len));
            }
            3 => m.truncate(rng.random_range(0..=len)),
            4 if len > 0 => {
                let a = rng.random_range(0..len);
                let b = rng.random_range(a..len);
                let chunk = m[a..=b].to_vec();
                let at = rng.random_range(0..=m.len());
                m.splice(at..at, chunk);
            }
            5 if len > 0 => {
                let i = rng.random_range(0..len);
                m[i] = rng.random();
            }
            _ => m.extend_from_slice(b"X-Extra: y\r\n"),
        }
    }
    m
}

fn parser_corpus() {
    report(
        "parser_corpus",
        (|| {
            let valid = valid_corpus();
            ensure(valid.len() == 50, || {
                format!("{} valid messages", valid.len())
            })?;
            for (name, raw) in &valid {
                let first = parse_message(raw).map_err(|e| format!("{name}: {e:?}"))?;
                let bytes = serialize_message(&first);
                let second = parse_message(&bytes).map_err(|e| format!("{name} reparse: {e:?}"))?;
                ensure(first == second, || {
                    format!("{name}: parse/serialize/parse differs")
                })?;
                ensure(serialize_message(&second) == bytes, || {
                    format!("{name}: serialization not a fixpoint")
                })?;
            }

            let manifest = fs::read_to_string(corpus_dir("malformed").join("EXPECTED"))
                .map_err(|e| e.to_string())?;
            let mut malformed = 0;
            for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
                let (name, expected) = line.split_once(' ').ok_or("bad manifest line")?;
                let raw = fs::read(corpus_dir("malformed").join(format!("{name}.sip")))
                    .map_err(|e| e.to_string())?;
                match parse_message(&raw) {
                    Ok(_) => return Err(format!("{name}: parsed, expected {expected}")),
                    Err(e) => ensure(format!("{e:?}") == expected, || {
                        format!("{name}: {e:?}, expected {expected}")
                    })?,
                }
                malformed += 1;
            }
            ensure(malformed == 20, || {
                format!("{malformed} malformed messages")
            })?;

            let mut rng = ChaCha8Rng::seed_from_u64(0x51b);
            let mut panics = 0;
            for i in 0..10_000 {
                let input = mutate(&mut rng, &valid[i % valid.len()].1);
                let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
                    if let Ok(m) = parse_message(&input) {
                        let _ = parse_message(&serialize_message(&m));
                    }
                }));
                if outcome.is_err() {
                    panics += 1;
                }
            }
            ensure(panics == 0, || {
                format!("{panics} of 10000 mutated inputs panicked")
            })
        })(),
    );
}

fn registered(w: &World, ua: &str) -> bool {
    w.node::<UaNode>(ua)
        .is_some_and(|u| u.registration() == Registration::Registered)
}

/// Gaps between sends of each REGISTER client transaction from the UA.
fn register_gaps(t: &Trace) -> Vec<Vec<u64>> {
    let mut by_branch: BTreeMap<&str, Vec<Instant>> = BTreeMap::new();
    for e in wire(t, "s1", "pcscf-1", "REGISTER") {
        by_branch.entry(e.branch.as_str()).or_default().push(e.time);
    }
    by_branch
        .values()
        .map(|times| times.windows(2).map(|p| p[1].since(p[0])).collect())
        .collect()
}

fn retransmission_under_loss() {
    report(
        "retransmission_under_loss",
        (|| {
            let base = builtin("lossy_register").ok_or("builtin missing")?;
            let expected = [500, 1000, 2000, 4000, 4000];
            let mut ok = 0;
            let mut failed = Vec::new();
            for seed in 0..100 {
                let w = quiescent_world(base.clone().with_seed(seed))?;
                if registered(&w, "s1") {
                    ok += 1;
                } else {
                    failed.push(seed);
                }
                for gaps in register_gaps(w.trace()) {
                    ensure(
                        gaps.len() <= 5 && gaps[..] == expected[..gaps.len()],
                        || format!("seed {seed}: retransmission gaps {gaps:?}"),
                    )?;
                }
            }
            ensure(ok >= 95, || {
                format!("registered in {ok} of 100 seeds, failed {failed:?}")
            })?;

            let mut dead = base.clone();
            dead.topology.loss = LossConfig { p: 1.0, seed: 0 };
            let w = quiescent_world(dead)?;
            let gaps = register_gaps(w.trace());
            ensure(gaps == vec![expected.to_vec()], || {
                format!("total loss gave gaps {gaps:?}")
            })?;
            println!("    registered in {ok}/100 seeds, failures at {failed:?}");
            Ok(())
        })(),
    );
}

fn determinism() {
    report(
        "determinism",
        (|| {
            for s in builtin_scenarios() {
                let a = run(&s).map_err(|e| e.to_string())?.to_canonical_json();
                let b = run(&s).map_err(|e| e.to_string())?.to_canonical_json();
                ensure(a == b, || format!("{} differs between runs", s.name))?;
            }
            Ok(())
        })(),
    );
}

const UAS: usize = 10;

fn consistency_scenario() -> Scenario {
    let names: Vec<String> = (1..=UAS).map(|i| format!("u{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut s = Scenario::new("registrar_consistency", ims_topology(&refs));
    for n in &names {
        let impu = format!("sip:{n}@ims.kau.test");
        s.subscribers.push(
            SubscriberFixture::new(&impu, &format!("pk-{n}")).with_role(ProfileRole::Student),
        );
        let mut a = ActorSpec::new(n, &impu, &format!("pk-{n}"));
        a.refresh = Some(false);
        s.actors.push(a);
    }
    s
}

fn consistency_violation(w: &World) -> Option<String> {
    let hss = w.hss();
    if let Some(p) = hss.profiles().find(|p| !p.assignment_consistent()) {
        return Some(format!(
            "{} registered={} assigned={:?}",
            p.impi,
            p.is_registered(),
            p.assigned_scscf
        ));
    }
    let scscf: &Scscf = w.node("scscf-1")?;
    for (aor, b) in scscf.bindings() {
        if !b.is_live(w.now()) {
            continue;
        }
        let impu = SipUri::parse(aor).ok()?;
        if !hss.is_registered(&impu) {
            return Some(format!("binding for {aor} not registered at the HSS"));
        }
    }
    None
}

/// Drives one random register/deregister/expiry sequence, checking the
/// invariants every 100 ms of virtual time.
fn consistency_run(seed: u64) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = World::new(consistency_scenario()).map_err(|e| e.to_string())?;
    let mut peak = 0;
    let mut checks = 0;
    for event in 0..200 {
        let ua = format!("u{}", rng.random_range(1..=UAS));
        let start = w.now().millis();
        let span = match rng.random_range(0..5) {
            0 | 1 => {
                let expires = Some(rng.random_range(1..=30));
                let _ = w.command(
                    &ua,
                    &Command::Register {
                        passkey: None,
                        expires,
                    },
                );
                200
            }
            2 => {
                let _ = w.command(&ua, &Command::Deregister {});
                200
            }
            // Let bindings lapse.
            _ => rng.random_range(1_000..=20_000),
        };
        let mut t = start;
        while t < start + span {
            t = (t + 100).min(start + span);
            w.run_until(Instant(t)).map_err(|e| e.to_string())?;
            if let Some(v) = consistency_violation(&w) {
                return Err(format!("event {event} at {}: {v}", w.now()));
            }
            checks += 1;
            peak = peak.max(w.hss().profiles().filter(|p| p.is_registered()).count());
        }
    }
    let expiries = w
        .trace()
        .node_transitions
        .iter()
        .filter(|r| r.cause.ends_with("expired"))
        .count();
    let deregs = w
        .trace()
        .node_transitions
        .iter()
        .filter(|r| r.node == "scscf-1" && r.cause.ends_with("deregistered"))
        .count();
    ensure(peak >= 3 && expiries > 0 && deregs > 0, || {
        format!("sequence too weak: peak {peak}, {expiries} expiries, {deregs} deregistrations")
    })?;
    Ok((checks, peak))
}

fn registrar_hss_consistency() {
    report(
        "registrar_hss_consistency",
        (|| {
            let mut total = 0;
            for seed in 0..10 {
                let (checks, peak) =
                    consistency_run(seed).map_err(|e| format!("seed {seed}: {e}"))?;
                total += checks;
                println!("    seed {seed}: peak {peak} registered");
            }
            println!("    {total} invariant checks");
            Ok(())
        })(),
    );
}

fn main() -> std::process::ExitCode {
    let criteria: [(&str, fn()); 8] = [
        ("proxy_flow_conformance", proxy_flow_conformance),
        ("redirect_flow_conformance", redirect_flow_conformance),
        (
            "registration_subscription_conformance",
            registration_subscription_conformance,
        ),
        ("exam_end_to_end", exam_end_to_end),
        ("parser_corpus", parser_corpus),
        ("retransmission_under_loss", retransmission_under_loss),
        ("determinism", determinism),
        ("registrar_hss_consistency", registrar_hss_consistency),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        if std::panic::catch_unwind(run).is_err() {
            failed.push(name);
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    if failed.is_empty() {
        std::process::ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        std::process::ExitCode::FAILURE
    }
}
