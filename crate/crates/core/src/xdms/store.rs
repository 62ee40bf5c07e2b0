use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::group::{parse_group_lists, GroupError, GroupList};
use crate::endpoint::{DialogId, Instant, NetAddress};
use crate::sip::SipUri;

pub const AUID_RESOURCE_LISTS: &str = "resource-lists";
pub const AUID_EXAM_DOCS: &str = "exam-docs";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DocKey {
    pub auid: String,
    pub owner: String,
    pub doc_name: String,
}

impl DocKey {
    pub fn new(auid: &str, owner: &str, doc_name: &str) -> Self {
        DocKey {
            auid: auid.into(),
            owner: owner.into(),
            doc_name: doc_name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XdmDocument {
    pub auid: String,
    pub owner: String,
    pub doc_name: String,
    pub content_type: String,
    pub body: Vec<u8>,
    pub etag: String,
}

impl XdmDocument {
    pub fn key(&self) -> DocKey {
        DocKey::new(&self.auid, &self.owner, &self.doc_name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XdmsError {
    #[error("etag does not match the stored document")]
    EtagMismatch,
    #[error("malformed group list: {0}")]
    MalformedGroupXml(#[from] GroupError),
    #[error("no such document")]
    NotFound,
    #[error("unknown group {0}")]
    UnknownGroup(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamSubscription {
    pub subscriber: SipUri,
    pub event: String,
    pub dialog: DialogId,
    pub expires_at: Instant,
    /// Hop that relayed the SUBSCRIBE; NOTIFYs go back through it.
    pub route: NetAddress,
    pub notify_cseq: u32,
}

/// A document change that watchers still need to hear about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeNotice {
    pub key: DocKey,
}

#[derive(Debug, Clone, Default)]
pub struct XdmsStore {
    docs: BTreeMap<DocKey, XdmDocument>,
    groups: BTreeMap<DocKey, Vec<GroupList>>,
    next_etag: u64,
    subscriptions: BTreeMap<(String, String), ExamSubscription>,
    changes: Vec<ChangeNotice>,
}

impl XdmsStore {
    pub fn new() -> Self {
        XdmsStore::default()
    }

    /// Stores a document. With `if_etag` the write only succeeds when it
    /// matches the current etag. Group documents are validated first.
    pub fn put(
        &mut self,
        key: DocKey,
        content_type: &str,
        body: Vec<u8>,
        if_etag: Option<&str>,
    ) -> Result<String, XdmsError> {
        if let Some(want) = if_etag {
            match self.docs.get(&key) {
                Some(d) if d.etag == want => {}
                _ => return Err(XdmsError::EtagMismatch),
            }
        }
        let parsed = if key.auid == AUID_RESOURCE_LISTS {
            let text = core::str::from_utf8(&body)
                .map_err(|_| GroupError::Xml("body is not UTF-8".into()))?;
            Some(parse_group_lists(text)?)
        } else {
            None
        };
        self.next_etag += 1;
        let etag = format!("e{}", self.next_etag);
        if let Some(lists) = parsed {
            self.groups.insert(key.clone(), lists);
        }
        if key.auid == AUID_EXAM_DOCS {
            self.changes.push(ChangeNotice { key: key.clone() });
        }
        self.docs.insert(
            key.clone(),
            XdmDocument {
                auid: key.auid,
                owner: key.owner,
                doc_name: key.doc_name,
                content_type: content_type.into(),
                body,
                etag: etag.clone(),
            },
        );
        Ok(etag)
    }

    pub fn get(&self, key: &DocKey) -> Result<&XdmDocument, XdmsError> {
        self.docs.get(key).ok_or(XdmsError::NotFound)
    }

    pub fn delete(&mut self, key: &DocKey, if_etag: Option<&str>) -> Result<(), XdmsError> {
        let doc = self.docs.get(key).ok_or(XdmsError::NotFound)?;
        if if_etag.is_some_and(|e| e != doc.etag) {
            return Err(XdmsError::EtagMismatch);
        }
        self.docs.remove(key);
        self.groups.remove(key);
        Ok(())
    }

    pub fn documents(&self) -> impl Iterator<Item = &XdmDocument> {
        self.docs.values()
    }

    /// Members of `group_uri` in document order.
    pub fn resolve_group(&self, group_uri: &SipUri) -> Result<Vec<SipUri>, XdmsError> {
        let key = group_uri.aor_key();
        self.groups
            .values()
            .flatten()
            .find(|g| g.group_uri.aor_key() == key)
            .map(|g| g.members.clone())
            .ok_or_else(|| XdmsError::UnknownGroup(group_uri.to_string()))
    }

    pub fn groups(&self) -> impl Iterator<Item = &GroupList> {
        self.groups.values().flatten()
    }

    pub fn is_group_member(&self, identity: &SipUri) -> bool {
        self.groups().any(|g| g.contains(identity))
    }

    pub fn subscription(&self, subscriber: &SipUri, event: &str) -> Option<&ExamSubscription> {
        self.subscriptions
            .get(&(subscriber.aor_key(), event.to_string()))
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &ExamSubscription> {
        self.subscriptions.values()
    }

    pub(crate) fn subscriptions_mut(&mut self) -> impl Iterator<Item = &mut ExamSubscription> {
        self.subscriptions.values_mut()
    }

    pub(crate) fn upsert_subscription(&mut self, sub: ExamSubscription) -> &mut ExamSubscription {
        let key = (sub.subscriber.aor_key(), sub.event.clone());
        let slot = self.subscriptions.entry(key).or_insert(sub.clone());
        slot.dialog = sub.dialog;
        slot.expires_at = sub.expires_at;
        slot.route = sub.route;
        slot
    }

    pub(crate) fn remove_subscription(
        &mut self,
        subscriber: &SipUri,
        event: &str,
    ) -> Option<ExamSubscription> {
        self.subscriptions
            .remove(&(subscriber.aor_key(), event.to_string()))
    }

    pub(crate) fn expire_subscriptions(&mut self, now: Instant) -> usize {
        let before = self.subscriptions.len();
        self.subscriptions.retain(|_, s| s.expires_at > now);
        before - self.subscriptions.len()
    }

    pub(crate) fn next_subscription_expiry(&self) -> Option<Instant> {
        self.subscriptions.values().map(|s| s.expires_at).min()
    }

    pub(crate) fn take_changes(&mut self) -> Vec<ChangeNotice> {
        core::mem::take(&mut self.changes)
    }

    pub fn has_pending_changes(&self) -> bool {
        !self.changes.is_empty()
    }
}

/// Document and group access used by the application server.
pub trait XdmsClient {
    fn put_document(
        &mut self,
        key: DocKey,
        content_type: &str,
        body: Vec<u8>,
        if_etag: Option<&str>,
    ) -> Result<String, XdmsError>;

    fn get_document(&mut self, key: &DocKey) -> Result<XdmDocument, XdmsError>;

    fn resolve_group(&mut self, group_uri: &SipUri) -> Result<Vec<SipUri>, XdmsError>;
}

/// In-process client over a shared store.
#[derive(Debug, Clone)]
pub struct LocalXdms(pub alloc::rc::Rc<core::cell::RefCell<XdmsStore>>);

impl XdmsClient for LocalXdms {
    fn put_document(
        &mut self,
        key: DocKey,
        content_type: &str,
        body: Vec<u8>,
        if_etag: Option<&str>,
    ) -> Result<String, XdmsError> {
        self.0.borrow_mut().put(key, content_type, body, if_etag)
    }

    fn get_document(&mut self, key: &DocKey) -> Result<XdmDocument, XdmsError> {
        self.0.borrow().get(key).cloned()
    }

    fn resolve_group(&mut self, group_uri: &SipUri) -> Result<Vec<SipUri>, XdmsError> {
        self.0.borrow().resolve_group(group_uri)
    }
}
