use std::collections::BTreeSet;

use imsbed_core::sip::{
    make_request, make_response, parse_message, serialize_message, IdGen, Method, SipUri,
    StatusCode, BRANCH_MAGIC,
};
use proptest::prelude::*;

fn uri(user: &str, host: &str) -> SipUri {
    SipUri::parse(&format!("sip:{user}@{host}")).unwrap()
}

fn method() -> impl Strategy<Value = Method> {
    prop::sample::select(Method::ALL.to_vec())
}

fn status() -> impl Strategy<Value = StatusCode> {
    prop::sample::select(StatusCode::ALLOWED.to_vec()).prop_map(|c| StatusCode::new(c).unwrap())
}

/// Opaque headers: canonical `X-` names, values without surrounding space.
fn extra_headers() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec(("X-[A-Z][a-z]{0,6}", "[!-~]([ -~]{0,20}[!-~])?"), 0..6)
}

prop_compose! {
    fn request()(
        m in method(),
        user in "[a-z][a-z0-9]{0,7}",
        peer in "[a-z][a-z0-9]{0,7}",
        host in prop::sample::select(vec!["ims.kau.test", "10.0.0.1", "example.org"]),
        call_id in "[a-zA-Z0-9.@-]{1,24}",
        cseq in 1u32..100_000,
        port in 1u16..,
        extra in extra_headers(),
        body in prop::option::of(prop::collection::vec(any::<u8>(), 0..64)),
    ) -> imsbed_core::sip::SipMessage {
        let mut ids = IdGen::new(&user);
        let mut msg = make_request(&mut ids, ("10.0.0.9", port), m, uri(&peer, host), uri(&user, host), uri(&peer, host), &call_id, cseq);
        msg.extra = extra;
        if let Some(b) = body {
            msg = msg.with_body("application/octet-stream", b);
        }
        msg
    }
}

proptest! {
    #[test]
    fn requests_round_trip(msg in request()) {
        let bytes = serialize_message(&msg);
        let parsed = parse_message(&bytes).unwrap();
        prop_assert_eq!(&parsed, &msg);
        prop_assert_eq!(serialize_message(&parsed), bytes);
    }

    #[test]
    fn responses_round_trip(msg in request(), st in status(), body in prop::collection::vec(any::<u8>(), 0..32)) {
        let resp = make_response(&msg, st, body).unwrap();
        let parsed = parse_message(&serialize_message(&resp)).unwrap();
        prop_assert_eq!(&parsed.vias, &msg.vias);
        prop_assert_eq!(parsed.cseq, msg.cseq);
        prop_assert_eq!(parsed, resp);
    }

    #[test]
    fn opaque_headers_keep_their_order(msg in request()) {
        let parsed = parse_message(&serialize_message(&msg)).unwrap();
        let names: Vec<&str> = parsed.extra.iter().map(|(n, _)| n.as_str()).collect();
        let expected: Vec<&str> = msg.extra.iter().map(|(n, _)| n.as_str()).collect();
        prop_assert_eq!(names, expected);
    }

    #[test]
    fn content_length_matches_body(msg in request()) {
        let text = String::from_utf8_lossy(&serialize_message(&msg)).into_owned();
        let line = format!("Content-Length: {}\r\n", msg.body.len());
        prop_assert!(text.contains(&line));
    }

    #[test]
    fn arbitrary_bytes_never_panic(raw in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = parse_message(&raw);
    }
}

#[test]
fn ten_thousand_requests_get_distinct_branches() {
    let mut ids = IdGen::new("10.0.0.1:5060");
    let target = uri("s2", "ims.kau.test");
    let me = uri("s1", "ims.kau.test");
    let branches: BTreeSet<String> = (1..=10_000)
        .map(|i| {
            let m = make_request(
                &mut ids,
                ("10.0.0.1", 5060),
                Method::Message,
                target.clone(),
                me.clone(),
                target.clone(),
                "c",
                i,
            );
            m.top_via().unwrap().branch.clone()
        })
        .collect();
    assert_eq!(branches.len(), 10_000);
    assert!(branches.iter().all(|b| b.starts_with(BRANCH_MAGIC)));
}

#[test]
fn branches_differ_across_endpoints() {
    let a = IdGen::new("10.0.0.1:5060").branch();
    let b = IdGen::new("10.0.0.2:5060").branch();
    assert_ne!(a, b);
}
