use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::endpoint::NetAddress;
use crate::sip::{Method, SipMessage};

/// Match condition of a trigger rule. Absent fields match anything.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriggerCondition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_uri_domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_uri_user: Option<String>,
}

impl TriggerCondition {
    pub fn matches(&self, msg: &SipMessage) -> bool {
        let Some(uri) = msg.request_uri() else {
            return false;
        };
        self.method.is_none_or(|m| m == msg.method())
            && self.event.as_deref().is_none_or(|e| {
                msg.event
                    .as_deref()
                    .is_some_and(|v| v.eq_ignore_ascii_case(e))
            })
            && self
                .request_uri_domain
                .as_deref()
                .is_none_or(|d| uri.host.eq_ignore_ascii_case(d))
            && self
                .request_uri_user
                .as_deref()
                .is_none_or(|u| uri.user.as_deref() == Some(u))
    }
}

/// One initial filter criterion: requests matching `condition` are sent to
/// the application server at `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerRule {
    pub priority: i32,
    pub condition: TriggerCondition,
    pub target: NetAddress,
}

/// Targets of matching rules, lowest priority first, ties in insertion
/// order. At most one application server hop is taken per request, so the
/// result holds zero or one entries.
pub fn evaluate_ifc(rules: &[TriggerRule], msg: &SipMessage) -> Vec<NetAddress> {
    let mut ordered: Vec<&TriggerRule> = rules.iter().collect();
    ordered.sort_by_key(|r| r.priority);
    ordered
        .into_iter()
        .find(|r| r.condition.matches(msg))
        .map(|r| r.target.clone())
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sip::{make_request, IdGen, SipUri};

    fn message(method: Method, target: &str) -> SipMessage {
        let u = SipUri::parse("sip:s1@ims.kau.test").unwrap();
        make_request(
            &mut IdGen::new("t"),
            ("10.0.0.1", 5060),
            method,
            SipUri::parse(target).unwrap(),
            u.clone(),
            u,
            "c",
            1,
        )
    }

    fn rule(priority: i32, method: Option<Method>, target: &str) -> TriggerRule {
        TriggerRule {
            priority,
            condition: TriggerCondition {
                method,
                ..Default::default()
            },
            target: target.parse().unwrap(),
        }
    }

    #[test]
    fn message_rule_matches() {
        let rules = [rule(0, Some(Method::Message), "10.0.3.1:5060")];
        assert_eq!(
            evaluate_ifc(&rules, &message(Method::Message, "sip:exam@ims.kau.test")),
            ["10.0.3.1:5060".parse::<NetAddress>().unwrap()]
        );
    }

    #[test]
    fn empty_rules() {
        assert!(evaluate_ifc(&[], &message(Method::Message, "sip:x@ims.kau.test")).is_empty());
    }

    #[test]
    fn lowest_priority_wins() {
        let rules = [
            rule(2, None, "10.0.3.2:5060"),
            rule(1, None, "10.0.3.1:5060"),
        ];
        let got = evaluate_ifc(&rules, &message(Method::Message, "sip:x@ims.kau.test"));
        assert_eq!(got, ["10.0.3.1:5060".parse::<NetAddress>().unwrap()]);
    }

    #[test]
    fn ties_keep_insertion_order() {
        let rules = [
            rule(1, None, "10.0.3.2:5060"),
            rule(1, None, "10.0.3.1:5060"),
        ];
        let got = evaluate_ifc(&rules, &message(Method::Message, "sip:x@ims.kau.test"));
        assert_eq!(got, ["10.0.3.2:5060".parse::<NetAddress>().unwrap()]);
    }

    #[test]
    fn user_and_domain_conditions() {
        let mut r = rule(0, Some(Method::Message), "10.0.3.1:5060");
        r.condition.request_uri_user = Some("exam".into());
        r.condition.request_uri_domain = Some("ims.kau.test".into());
        let rules = [r];
        assert_eq!(
            evaluate_ifc(&rules, &message(Method::Message, "sip:exam@ims.kau.test")).len(),
            1
        );
        assert!(evaluate_ifc(&rules, &message(Method::Message, "sip:s2@ims.kau.test")).is_empty());
        assert!(evaluate_ifc(&rules, &message(Method::Message, "sip:exam@other.test")).is_empty());
        assert!(evaluate_ifc(&rules, &message(Method::Invite, "sip:exam@ims.kau.test")).is_empty());
    }
}
