use imsbed_core::hss::{
    Assignment, CxMessage, CxOp, CxResult, HssStore, ProfileRole, SubscriberProfile,
};
use imsbed_core::ims::{TriggerCondition, TriggerRule};
use imsbed_core::sip::{Method, SipUri};
use proptest::prelude::*;

const USERS: usize = 5;

fn impu(u: usize) -> SipUri {
    SipUri::parse(&format!("sip:u{u}@ims.kau.test")).unwrap()
}

fn store() -> HssStore {
    let mut s = HssStore::new();
    for u in 0..USERS {
        let mut p =
            SubscriberProfile::new(&format!("u{u}@ims.kau.test"), impu(u), &format!("pk-{u}"));
        if u == 0 {
            p = p.with_role(ProfileRole::Teacher).with_rule(TriggerRule {
                priority: 1,
                condition: TriggerCondition {
                    method: Some(Method::Message),
                    ..TriggerCondition::default()
                },
                target: "10.0.3.1:5060".parse().unwrap(),
            });
        }
        s.provision(p).unwrap();
    }
    s
}

#[derive(Debug, Clone, Copy)]
enum Offer {
    Right,
    Wrong,
    Absent,
}

impl Offer {
    fn text(self, u: usize) -> Option<String> {
        match self {
            Offer::Right => Some(format!("pk-{u}")),
            Offer::Wrong => Some(format!("pk-{u}x")),
            Offer::Absent => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Uar(usize),
    Lir(usize),
    Mar(usize, Offer),
    Sar(usize, &'static str, Assignment, Offer),
}

fn offer() -> impl Strategy<Value = Offer> {
    prop_oneof![Just(Offer::Right), Just(Offer::Wrong), Just(Offer::Absent)]
}

fn wrong_offer() -> impl Strategy<Value = Offer> {
    prop_oneof![Just(Offer::Wrong), Just(Offer::Absent)]
}

/// Users past `USERS - 1` are not provisioned.
fn op(offers: BoxedStrategy<Offer>) -> impl Strategy<Value = Op> {
    let user = 0..=USERS;
    let assignment = prop_oneof![Just(Assignment::Register), Just(Assignment::Deregister)];
    let scscf = prop::sample::select(vec!["scscf-1", "scscf-2"]);
    prop_oneof![
        user.clone().prop_map(Op::Uar),
        user.clone().prop_map(Op::Lir),
        (user.clone(), offers.clone()).prop_map(|(u, o)| Op::Mar(u, o)),
        (user, scscf, assignment, offers).prop_map(|(u, s, a, o)| Op::Sar(u, s, a, o)),
    ]
}

fn message(id: u64, op: &Op) -> CxMessage {
    match *op {
        Op::Uar(u) => CxMessage::uar(id, impu(u)),
        Op::Lir(u) => CxMessage::lir(id, impu(u)),
        Op::Mar(u, o) => {
            let mut m = CxMessage::mar(id, impu(u), "");
            m.passkey_offer = o.text(u);
            m
        }
        Op::Sar(u, s, a, o) => CxMessage::sar(id, impu(u), s, a, o.text(u).as_deref()),
    }
}

proptest! {
    #[test]
    fn registered_exactly_when_assigned(ops in prop::collection::vec(op(offer().boxed()), 1..80)) {
        let mut s = store();
        for (i, op) in ops.iter().enumerate() {
            let ans = s.handle(&message(i as u64, op)).unwrap();
            prop_assert_eq!(ans.correlation_id, i as u64);
            for p in s.profiles() {
                prop_assert!(p.assignment_consistent(), "{} after {:?}", p.impi, op);
            }
        }
    }

    #[test]
    fn wrong_passkeys_never_register(ops in prop::collection::vec(op(wrong_offer().boxed()), 1..80)) {
        let mut s = store();
        for (i, op) in ops.iter().enumerate() {
            let ans = s.handle(&message(i as u64, op)).unwrap();
            if matches!(op, Op::Sar(_, _, Assignment::Register, _) | Op::Mar(..)) {
                prop_assert_ne!(ans.result, Some(CxResult::Success));
            }
            prop_assert!(s.profiles().all(|p| !p.is_registered()));
        }
    }

    #[test]
    fn queries_leave_the_store_alone(ops in prop::collection::vec(op(offer().boxed()), 1..60)) {
        let mut s = store();
        for (i, op) in ops.iter().enumerate() {
            let before = s.state_digest();
            let revision = s.revision();
            let req = message(i as u64, op);
            s.handle(&req).unwrap();
            if matches!(req.op, CxOp::UAR | CxOp::LIR | CxOp::MAR) {
                prop_assert_eq!(s.state_digest(), before);
                prop_assert_eq!(s.revision(), revision);
            }
        }
    }

    #[test]
    fn saved_store_reloads_equal(ops in prop::collection::vec(op(offer().boxed()), 0..40)) {
        let mut s = store();
        for (i, op) in ops.iter().enumerate() {
            s.handle(&message(i as u64, op)).unwrap();
        }
        let reloaded = HssStore::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(reloaded.to_file(), s.to_file());
        prop_assert_eq!(reloaded.to_json(), s.to_json());
    }
}

#[test]
fn lir_names_the_assigned_scscf() {
    let mut s = store();
    s.handle(&CxMessage::sar(
        1,
        impu(1),
        "scscf-2",
        Assignment::Register,
        Some("pk-1"),
    ))
    .unwrap();
    let lia = s.handle(&CxMessage::lir(2, impu(1))).unwrap();
    assert_eq!(lia.result, Some(CxResult::Success));
    assert_eq!(lia.scscf_name.as_deref(), Some("scscf-2"));
    let uaa = s.handle(&CxMessage::uar(3, impu(1))).unwrap();
    assert_eq!(uaa.scscf_name.as_deref(), Some("scscf-2"));
}

#[test]
fn answer_ops_are_not_requests() {
    let mut s = store();
    let mut m = CxMessage::uar(1, impu(1));
    m.op = CxOp::UAA;
    assert!(s.handle(&m).is_err());
}
