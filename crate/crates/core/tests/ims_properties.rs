use std::collections::BTreeSet;

use imsbed_core::endpoint::{LossConfig, Role};
use imsbed_core::harness::{builtin, Scenario, Trace, World};
use imsbed_core::sip::parse_message;
use imsbed_core::ua::UaNode;

fn finished(s: Scenario) -> World {
    let mut w = World::new(s).unwrap();
    w.run_to_quiescence().unwrap();
    w
}

fn with_loss(name: &str, p: f64, seed: u64) -> Scenario {
    let mut s = builtin(name).unwrap();
    s.topology.loss = LossConfig { p, seed: 0 };
    s.with_seed(seed)
}

/// IMS runs with and without loss.
fn ims_worlds() -> Vec<World> {
    let mut out: Vec<World> = [
        "fig10_register_subscribe",
        "fig11_cscf_chain",
        "fig8_exam_e2e",
    ]
    .into_iter()
    .map(|n| finished(builtin(n).unwrap()))
    .collect();
    out.extend((0..20).map(|seed| finished(builtin("lossy_register").unwrap().with_seed(seed))));
    out.extend((0..4).map(|seed| finished(with_loss("fig10_register_subscribe", 0.2, seed))));
    out.extend((0..3).map(|seed| finished(with_loss("fig8_exam_e2e", 0.05, seed))));
    out
}

fn is_ua(t: &Trace, name: &str) -> bool {
    t.role_of(name) == Some(Role::Ua)
}

fn address(t: &Trace, name: &str) -> String {
    t.node(name).unwrap().address.to_string()
}

#[test]
fn wire_time_is_monotonic_in_seq() {
    for w in ims_worlds() {
        let t = w.trace();
        for pair in t.wire_events.windows(2) {
            assert!(pair[0].seq < pair[1].seq, "{}: seq order", t.scenario);
            assert!(
                pair[0].time <= pair[1].time,
                "{}: time went back at seq {}",
                t.scenario,
                pair[1].seq
            );
        }
    }
}

#[test]
fn runs_end_with_every_transaction_settled() {
    for w in ims_worlds() {
        assert!(
            w.is_quiescent(),
            "{} seed {}",
            w.trace().scenario,
            w.trace().seed
        );
    }
}

#[test]
fn responses_retrace_the_request_path() {
    for w in ims_worlds() {
        let t = w.trace();
        let requests: BTreeSet<(&str, &str, &str, &str)> = t
            .wire_events
            .iter()
            .filter(|e| e.is_request())
            .map(|e| {
                (
                    e.src.as_str(),
                    e.dst.as_str(),
                    e.branch.as_str(),
                    e.call_id.as_str(),
                )
            })
            .collect();
        for r in t.wire_events.iter().filter(|e| !e.is_request()) {
            assert!(
                requests.contains(&(
                    r.dst.as_str(),
                    r.src.as_str(),
                    r.branch.as_str(),
                    r.call_id.as_str()
                )),
                "{}: {} {} -> {} has no matching request hop",
                t.scenario,
                r.kind,
                r.src,
                r.dst
            );
        }
    }
}

#[test]
fn user_agents_only_talk_to_their_pcscf() {
    for w in ims_worlds() {
        let t = w.trace();
        for e in t.wire_events.iter().filter(|e| e.is_request()) {
            if is_ua(t, &e.src) {
                assert_eq!(
                    t.role_of(&e.dst),
                    Some(Role::Pcscf),
                    "{}: {} {} -> {}",
                    t.scenario,
                    e.kind,
                    e.src,
                    e.dst
                );
            }
            if is_ua(t, &e.dst) {
                assert_eq!(
                    t.role_of(&e.src),
                    Some(Role::Pcscf),
                    "{}: {} {} -> {}",
                    t.scenario,
                    e.kind,
                    e.src,
                    e.dst
                );
            }
        }
    }
}

#[test]
fn icscf_leaves_no_trace_towards_user_agents() {
    for w in ims_worlds() {
        let t = w.trace();
        let icscf = address(t, "icscf-1");
        let scscf = address(t, "scscf-1");
        for e in t.wire_events.iter().filter(|e| is_ua(t, &e.dst)) {
            assert!(
                !e.wire.contains(&icscf),
                "{}: I-CSCF address in\n{}",
                t.scenario,
                e.wire
            );
            // The S-CSCF may only show up in Via headers it added itself.
            let non_via = e
                .wire
                .lines()
                .filter(|l| !l.starts_with("Via:"))
                .collect::<Vec<_>>()
                .join("\n");
            assert!(
                !non_via.contains(&scscf),
                "{}: S-CSCF address outside Via in\n{}",
                t.scenario,
                e.wire
            );
        }
    }
}

#[test]
fn via_depth_counts_the_hops_taken() {
    for w in ims_worlds() {
        let t = w.trace();
        let known: BTreeSet<String> = t.nodes.iter().map(|n| n.address.to_string()).collect();
        for e in t.wire_events.iter().filter(|e| e.is_request()) {
            let msg = parse_message(e.wire.as_bytes()).unwrap();
            let hops: Vec<String> = msg
                .vias
                .iter()
                .map(|v| format!("{}:{}", v.host, v.sent_by_port()))
                .collect();
            assert_eq!(
                hops[0],
                address(t, &e.src),
                "{}: top Via is not the sender",
                t.scenario
            );
            let distinct: BTreeSet<&String> = hops.iter().collect();
            assert_eq!(
                distinct.len(),
                hops.len(),
                "{}: a node appears twice in {hops:?}",
                t.scenario
            );
            assert!(
                hops.iter().all(|h| known.contains(h)),
                "{}: unknown Via in {hops:?}",
                t.scenario
            );
            if let Some(mf) = msg.max_forwards {
                // Each proxy that added a Via also spent one Max-Forwards.
                assert_eq!(
                    70 - mf as usize,
                    hops.len() - 1,
                    "{}: {hops:?} with Max-Forwards {mf}",
                    t.scenario
                );
            }
        }
    }
}

#[test]
fn duplicates_on_the_wire_reach_applications_once() {
    for seed in 0..3 {
        let w = finished(with_loss("fig8_exam_e2e", 0.05, seed));
        for n in w.trace().nodes.iter().filter(|n| n.role == Role::Ua) {
            let ua: &UaNode = w.node(&n.name).unwrap();
            let items: Vec<String> = ua
                .inbox()
                .iter()
                .map(|i| serde_json::to_string(i).unwrap())
                .collect();
            let distinct: BTreeSet<&String> = items.iter().collect();
            assert_eq!(
                distinct.len(),
                items.len(),
                "seed {seed}: {} inbox has duplicates",
                n.name
            );
        }
        let exam_as: &imsbed_core::exam::ExamAs = w.node("exam-as").unwrap();
        let students: BTreeSet<String> = exam_as
            .journal()
            .iter()
            .map(|s| s.student.aor_key())
            .collect();
        assert_eq!(
            students.len(),
            exam_as.journal().len(),
            "seed {seed}: a submission was recorded twice"
        );
    }
}
