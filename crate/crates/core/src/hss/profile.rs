use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::digest::{sha256_parts, short_hex};
use crate::ims::TriggerRule;
use crate::sip::SipUri;

/// Salted SHA-256 of a passkey; salt and digest are hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasskeyHash {
    pub salt: String,
    pub hash: String,
}

impl PasskeyHash {
    pub fn new(passkey: &str, salt: &[u8]) -> Self {
        PasskeyHash {
            salt: hex::encode(salt),
            hash: hex::encode(sha256_parts(&[salt, passkey.as_bytes()])),
        }
    }

    /// Hash with a salt derived from the private identity, for fixtures
    /// that need reproducible files.
    pub fn for_subscriber(impi: &str, passkey: &str) -> Self {
        let salt = short_hex(&[b"passkey-salt", impi.as_bytes()], 16);
        let salt = hex::decode(salt).unwrap_or_default();
        PasskeyHash::new(passkey, &salt)
    }

    pub fn verify(&self, offer: &str) -> bool {
        let Ok(salt) = hex::decode(&self.salt) else {
            return false;
        };
        let got = hex::encode(sha256_parts(&[&salt, offer.as_bytes()]));
        // Constant-shape comparison; both are fixed-length hex.
        got.len() == self.hash.len()
            && got
                .bytes()
                .zip(self.hash.bytes())
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RegistrationState {
    #[default]
    Unregistered,
    Registered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileRole {
    Student,
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberProfile {
    pub impi: String,
    pub impus: Vec<SipUri>,
    pub passkey_hash: PasskeyHash,
    #[serde(default)]
    pub registration_state: RegistrationState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assigned_scscf: Option<String>,
    #[serde(default)]
    pub trigger_rules: Vec<TriggerRule>,
    #[serde(default)]
    pub roles: BTreeSet<ProfileRole>,
}

impl SubscriberProfile {
    pub fn new(impi: &str, impu: SipUri, passkey: &str) -> Self {
        SubscriberProfile {
            impi: impi.into(),
            impus: alloc::vec![impu],
            passkey_hash: PasskeyHash::for_subscriber(impi, passkey),
            registration_state: RegistrationState::Unregistered,
            assigned_scscf: None,
            trigger_rules: Vec::new(),
            roles: BTreeSet::new(),
        }
    }

    pub fn with_role(mut self, role: ProfileRole) -> Self {
        self.roles.insert(role);
        self
    }

    pub fn with_rule(mut self, rule: TriggerRule) -> Self {
        self.trigger_rules.push(rule);
        self
    }

    pub fn has_impu(&self, impu: &SipUri) -> bool {
        let key = impu.aor_key();
        self.impus.iter().any(|u| u.aor_key() == key)
    }

    pub fn is_registered(&self) -> bool {
        self.registration_state == RegistrationState::Registered
    }

    /// Registered exactly when a serving S-CSCF is assigned.
    pub fn assignment_consistent(&self) -> bool {
        self.is_registered() == self.assigned_scscf.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passkey_verifies() {
        let h = PasskeyHash::new("secret", b"salty");
        assert!(h.verify("secret"));
        assert!(!h.verify("Secret"));
        assert!(!h.verify(""));
        assert_ne!(h.hash, hex::encode("secret"));
    }

    #[test]
    fn salt_separates_subscribers() {
        let a = PasskeyHash::for_subscriber("s1@ims.kau.test", "pw");
        let b = PasskeyHash::for_subscriber("s2@ims.kau.test", "pw");
        assert_ne!(a.hash, b.hash);
        assert_eq!(a, PasskeyHash::for_subscriber("s1@ims.kau.test", "pw"));
    }
}
