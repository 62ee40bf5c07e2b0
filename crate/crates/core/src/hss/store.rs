use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Assignment, CxMessage, CxOp, CxResult, RegistrationState, SubscriberProfile};
use crate::digest::short_hex;
use crate::sip::SipUri;

/// Capability name handed out when no S-CSCF is assigned yet.
pub const DEFAULT_SCSCF: &str = "scscf-1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HssError {
    #[error("identity {0} is already provisioned with a different profile")]
    DuplicateIdentity(String),
    #[error("profile {0} has no public identities")]
    NoPublicIdentity(String),
    #[error("{0} is an answer, not a request")]
    UnexpectedOp(&'static str),
    #[error("subscriber file: {0}")]
    File(String),
}

/// On-disk form of the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HssFile {
    #[serde(default = "default_scscf")]
    pub default_scscf: String,
    pub subscribers: Vec<SubscriberProfile>,
}

fn default_scscf() -> String {
    DEFAULT_SCSCF.to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HssStore {
    default_scscf: String,
    profiles: BTreeMap<String, SubscriberProfile>,
    /// Public identity (AOR key) to private identity.
    impus: BTreeMap<String, String>,
    revision: u64,
}

impl Default for HssStore {
    fn default() -> Self {
        HssStore::new()
    }
}

impl HssStore {
    pub fn new() -> Self {
        HssStore {
            default_scscf: DEFAULT_SCSCF.to_string(),
            profiles: BTreeMap::new(),
            impus: BTreeMap::new(),
            revision: 0,
        }
    }

    /// Bumped on every mutation; persistence layers rewrite when it moves.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn provision(&mut self, profile: SubscriberProfile) -> Result<(), HssError> {
        if profile.impus.is_empty() {
            return Err(HssError::NoPublicIdentity(profile.impi));
        }
        if let Some(existing) = self.profiles.get(&profile.impi) {
            if *existing == profile {
                return Ok(());
            }
            return Err(HssError::DuplicateIdentity(profile.impi));
        }
        let mut seen = Vec::new();
        for u in &profile.impus {
            let key = u.aor_key();
            if self.impus.contains_key(&key) || seen.contains(&key) {
                return Err(HssError::DuplicateIdentity(key));
            }
            seen.push(key);
        }
        for key in seen {
            self.impus.insert(key, profile.impi.clone());
        }
        self.profiles.insert(profile.impi.clone(), profile);
        self.revision += 1;
        Ok(())
    }

    pub fn profile(&self, impu: &SipUri) -> Option<&SubscriberProfile> {
        self.impus
            .get(&impu.aor_key())
            .and_then(|impi| self.profiles.get(impi))
    }

    fn profile_mut(&mut self, impu: &SipUri) -> Option<&mut SubscriberProfile> {
        let impi = self.impus.get(&impu.aor_key())?;
        self.profiles.get_mut(impi)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &SubscriberProfile> {
        self.profiles.values()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn is_registered(&self, impu: &SipUri) -> bool {
        self.profile(impu)
            .is_some_and(SubscriberProfile::is_registered)
    }

    /// Dispatches a Cx-lite request to its handler.
    pub fn handle(&mut self, req: &CxMessage) -> Result<CxMessage, HssError> {
        match req.op {
            CxOp::UAR => Ok(self.handle_uar(req)),
            CxOp::SAR => Ok(self.handle_sar(req)),
            CxOp::LIR => Ok(self.handle_lir(req)),
            CxOp::MAR => Ok(self.handle_mar(req)),
            other => Err(HssError::UnexpectedOp(other.as_str())),
        }
    }

    pub fn handle_uar(&self, req: &CxMessage) -> CxMessage {
        match self.profile(&req.impu) {
            None => CxMessage::answer_to(req, CxResult::UserUnknown),
            Some(p) => CxMessage {
                scscf_name: Some(
                    p.assigned_scscf
                        .clone()
                        .unwrap_or_else(|| self.default_scscf.clone()),
                ),
                ..CxMessage::answer_to(req, CxResult::Success)
            },
        }
    }

    /// Server assignment. Register needs a passkey offer that verifies.
    /// Deregister without an offer is an administrative release (binding
    /// expiry); with an offer the offer must verify.
    pub fn handle_sar(&mut self, req: &CxMessage) -> CxMessage {
        let default = self.default_scscf.clone();
        let Some(p) = self.profile_mut(&req.impu) else {
            return CxMessage::answer_to(req, CxResult::UserUnknown);
        };
        let verified = req
            .passkey_offer
            .as_deref()
            .map(|o| p.passkey_hash.verify(o));
        match req.assignment.unwrap_or(Assignment::Register) {
            Assignment::Register => {
                if verified != Some(true) {
                    return CxMessage::answer_to(req, CxResult::AuthRejected);
                }
                p.registration_state = RegistrationState::Registered;
                p.assigned_scscf = Some(req.scscf_name.clone().unwrap_or(default));
                let profile = p.clone();
                self.revision += 1;
                CxMessage {
                    profile: Some(profile),
                    scscf_name: req.scscf_name.clone(),
                    ..CxMessage::answer_to(req, CxResult::Success)
                }
            }
            Assignment::Deregister => {
                if verified == Some(false) {
                    return CxMessage::answer_to(req, CxResult::AuthRejected);
                }
                p.registration_state = RegistrationState::Unregistered;
                p.assigned_scscf = None;
                self.revision += 1;
                CxMessage::answer_to(req, CxResult::Success)
            }
        }
    }

    pub fn handle_lir(&self, req: &CxMessage) -> CxMessage {
        match self.profile(&req.impu) {
            Some(p) if p.is_registered() => CxMessage {
                scscf_name: p.assigned_scscf.clone(),
                ..CxMessage::answer_to(req, CxResult::Success)
            },
            _ => CxMessage::answer_to(req, CxResult::UserUnknown),
        }
    }

    /// Credential check for web login: verifies the offer and returns the
    /// profile without touching registration state.
    pub fn handle_mar(&self, req: &CxMessage) -> CxMessage {
        match self.profile(&req.impu) {
            None => CxMessage::answer_to(req, CxResult::UserUnknown),
            Some(p) => {
                let ok = req
                    .passkey_offer
                    .as_deref()
                    .is_some_and(|o| p.passkey_hash.verify(o));
                if ok {
                    CxMessage {
                        profile: Some(p.clone()),
                        ..CxMessage::answer_to(req, CxResult::Success)
                    }
                } else {
                    CxMessage::answer_to(req, CxResult::AuthRejected)
                }
            }
        }
    }

    /// Hash of the full store state, for purity checks.
    pub fn state_digest(&self) -> String {
        let json = serde_json::to_vec(&self.to_file()).unwrap_or_default();
        short_hex(&[self.default_scscf.as_bytes(), &json], 32)
    }

    pub fn to_file(&self) -> HssFile {
        HssFile {
            default_scscf: self.default_scscf.clone(),
            subscribers: self.profiles.values().cloned().collect(),
        }
    }

    pub fn from_file(file: HssFile) -> Result<Self, HssError> {
        let mut store = HssStore::new();
        store.default_scscf = file.default_scscf;
        for p in file.subscribers {
            if !p.assignment_consistent() {
                return Err(HssError::File(alloc::format!(
                    "{}: registration state and assigned S-CSCF disagree",
                    p.impi
                )));
            }
            store.provision(p)?;
        }
        store.revision = 0;
        Ok(store)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).unwrap_or_default()
    }

    pub fn from_json(text: &str) -> Result<Self, HssError> {
        let file: HssFile =
            serde_json::from_str(text).map_err(|e| HssError::File(e.to_string()))?;
        HssStore::from_file(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hss::ProfileRole;

    fn uri(user: &str) -> SipUri {
        SipUri::new(Some(user), "ims.kau.test")
    }

    fn seeded() -> HssStore {
        let mut s = HssStore::new();
        for i in 1..=10 {
            let u = alloc::format!("s{i}");
            s.provision(
                SubscriberProfile::new(
                    &alloc::format!("{u}@ims.kau.test"),
                    uri(&u),
                    &alloc::format!("pw-{u}"),
                )
                .with_role(ProfileRole::Student),
            )
            .unwrap();
        }
        s.provision(
            SubscriberProfile::new("t1@ims.kau.test", uri("t1"), "pw-t1")
                .with_role(ProfileRole::Teacher),
        )
        .unwrap();
        s
    }

    fn register(s: &mut HssStore, user: &str, key: &str) -> CxMessage {
        s.handle_sar(&CxMessage::sar(
            1,
            uri(user),
            "scscf-1",
            Assignment::Register,
            Some(key),
        ))
    }

    #[test]
    fn eleven_profiles() {
        let s = seeded();
        assert_eq!(s.len(), 11);
        assert!(s
            .profile(&uri("t1"))
            .unwrap()
            .roles
            .contains(&ProfileRole::Teacher));
    }

    #[test]
    fn provisioning_rules() {
        let mut s = seeded();
        let again = s.profile(&uri("s1")).unwrap().clone();
        assert_eq!(s.provision(again), Ok(()));
        let other = SubscriberProfile::new("other@ims.kau.test", uri("s1"), "x");
        assert!(matches!(
            s.provision(other),
            Err(HssError::DuplicateIdentity(_))
        ));
        let mut empty = SubscriberProfile::new("e@ims.kau.test", uri("e"), "x");
        empty.impus.clear();
        assert!(matches!(
            s.provision(empty),
            Err(HssError::NoPublicIdentity(_))
        ));
    }

    #[test]
    fn uar_defaults_then_sticks() {
        let mut s = seeded();
        let a = s.handle_uar(&CxMessage::uar(3, uri("s1")));
        assert_eq!(
            (a.result, a.scscf_name.as_deref(), a.correlation_id),
            (Some(CxResult::Success), Some("scscf-1"), 3)
        );
        assert_eq!(
            s.handle_uar(&CxMessage::uar(4, SipUri::new(Some("unknown"), "x")))
                .result,
            Some(CxResult::UserUnknown)
        );
        s.handle_sar(&CxMessage::sar(
            5,
            uri("s1"),
            "scscf-9",
            Assignment::Register,
            Some("pw-s1"),
        ));
        assert_eq!(
            s.handle_uar(&CxMessage::uar(6, uri("s1")))
                .scscf_name
                .as_deref(),
            Some("scscf-9")
        );
    }

    #[test]
    fn sar_register_and_deregister() {
        let mut s = seeded();
        let a = register(&mut s, "s1", "pw-s1");
        assert!(a.is_success());
        assert!(a.profile.is_some());
        assert!(s.is_registered(&uri("s1")));
        let d = s.handle_sar(&CxMessage::sar(
            2,
            uri("s1"),
            "scscf-1",
            Assignment::Deregister,
            None,
        ));
        assert!(d.is_success());
        let p = s.profile(&uri("s1")).unwrap();
        assert_eq!(
            (p.registration_state, p.assigned_scscf.as_ref()),
            (RegistrationState::Unregistered, None)
        );
    }

    #[test]
    fn wrong_passkey_changes_nothing() {
        let mut s = seeded();
        let before = s.state_digest();
        assert_eq!(
            register(&mut s, "s1", "nope").result,
            Some(CxResult::AuthRejected)
        );
        assert_eq!(s.state_digest(), before);
        let no_offer = s.handle_sar(&CxMessage::sar(
            1,
            uri("s1"),
            "scscf-1",
            Assignment::Register,
            None,
        ));
        assert_eq!(no_offer.result, Some(CxResult::AuthRejected));
    }

    #[test]
    fn lir_needs_registration() {
        let mut s = seeded();
        assert_eq!(
            s.handle_lir(&CxMessage::lir(1, uri("s1"))).result,
            Some(CxResult::UserUnknown)
        );
        register(&mut s, "s1", "pw-s1");
        let a = s.handle_lir(&CxMessage::lir(1, uri("s1")));
        assert_eq!(
            (a.result, a.scscf_name.as_deref()),
            (Some(CxResult::Success), Some("scscf-1"))
        );
        assert_eq!(
            s.handle_lir(&CxMessage::lir(1, uri("ghost"))).result,
            Some(CxResult::UserUnknown)
        );
    }

    #[test]
    fn mar_checks_credentials() {
        let s = seeded();
        let ok = s.handle_mar(&CxMessage::mar(1, uri("t1"), "pw-t1"));
        assert!(ok.is_success());
        assert!(ok.profile.unwrap().roles.contains(&ProfileRole::Teacher));
        assert_eq!(
            s.handle_mar(&CxMessage::mar(1, uri("t1"), "bad")).result,
            Some(CxResult::AuthRejected)
        );
    }

    #[test]
    fn json_round_trip() {
        let mut s = seeded();
        register(&mut s, "s3", "pw-s3");
        let back = HssStore::from_json(&s.to_json()).unwrap();
        assert_eq!(back.to_file(), s.to_file());
        assert_eq!(back.state_digest(), s.state_digest());
    }

    #[test]
    fn answers_are_not_requests() {
        let mut s = seeded();
        let a = CxMessage::answer_to(&CxMessage::uar(1, uri("s1")), CxResult::Success);
        assert_eq!(s.handle(&a), Err(HssError::UnexpectedOp("UAA")));
    }
}
