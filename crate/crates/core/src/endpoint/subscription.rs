use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::Instant;
use crate::sip::SipMessage;

/// Call-ID plus local and remote tags, as seen from the holder's side.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DialogId {
    pub call_id: String,
    pub local_tag: String,
    pub remote_tag: Option<String>,
}

impl DialogId {
    /// Dialog id of a request as seen by its recipient.
    pub fn from_request_as_uas(req: &SipMessage) -> DialogId {
        DialogId {
            call_id: req.call_id.clone(),
            local_tag: req.to.tag.clone().unwrap_or_default(),
            remote_tag: req.from.tag.clone(),
        }
    }

    /// Dialog id of a message as seen by the side that sent the request.
    pub fn from_uac(msg: &SipMessage) -> DialogId {
        DialogId {
            call_id: msg.call_id.clone(),
            local_tag: msg.from.tag.clone().unwrap_or_default(),
            remote_tag: msg.to.tag.clone(),
        }
    }

    /// Same dialog, ignoring a remote tag that one side has not learned yet.
    pub fn matches(&self, other: &DialogId) -> bool {
        self.call_id == other.call_id
            && self.local_tag == other.local_tag
            && match (&self.remote_tag, &other.remote_tag) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubState {
    Pending,
    Active,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscription {
    pub dialog: DialogId,
    pub event: String,
    pub expires_at: Instant,
    pub state: SubState,
}

impl Subscription {
    pub fn pending(dialog: DialogId, event: &str, expires_at: Instant) -> Self {
        Subscription {
            dialog,
            event: event.into(),
            expires_at,
            state: SubState::Pending,
        }
    }

    /// A 2xx to the SUBSCRIBE was seen.
    pub fn accept(&mut self, remote_tag: Option<String>) {
        if self.state == SubState::Pending {
            self.state = SubState::Active;
        }
        if self.dialog.remote_tag.is_none() {
            self.dialog.remote_tag = remote_tag;
        }
    }

    /// Applies a NOTIFY state token. Returns false when the subscription is
    /// already terminated and the NOTIFY is not valid.
    pub fn on_notify(&mut self, token: &str) -> bool {
        if self.state == SubState::Terminated {
            return false;
        }
        if token.trim() == "terminated" {
            self.state = SubState::Terminated;
        }
        true
    }

    pub fn is_live(&self, now: Instant) -> bool {
        self.state != SubState::Terminated && self.expires_at > now
    }

    pub fn terminate(&mut self) {
        self.state = SubState::Terminated;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dialog() -> DialogId {
        DialogId {
            call_id: "c".into(),
            local_tag: "l".into(),
            remote_tag: None,
        }
    }

    #[test]
    fn accept_then_notify_terminated() {
        let mut s = Subscription::pending(dialog(), "exam-service", Instant(1000));
        s.accept(Some("r".into()));
        assert_eq!(s.state, SubState::Active);
        assert!(s.on_notify("active"));
        assert!(s.on_notify("terminated"));
        assert_eq!(s.state, SubState::Terminated);
        assert!(!s.on_notify("active"));
    }

    #[test]
    fn notify_before_2xx_is_accepted() {
        let mut s = Subscription::pending(dialog(), "exam-service", Instant(1000));
        assert!(s.on_notify("active"));
        assert_eq!(s.state, SubState::Pending);
    }

    #[test]
    fn dialog_match_tolerates_unknown_remote_tag() {
        let mut d2 = dialog();
        d2.remote_tag = Some("r".into());
        assert!(dialog().matches(&d2));
        let mut d3 = dialog();
        d3.remote_tag = Some("x".into());
        assert!(!d2.matches(&d3));
    }
}
