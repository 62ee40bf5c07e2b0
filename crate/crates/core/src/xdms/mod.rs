//! Document store for group lists and exam documents, and the
//! subscription server for the exam service.

mod group;
mod node;
mod store;

pub use group::{lists_to_xml, parse_group_lists, GroupError, GroupList};
pub use node::{SubscribeOutcome, XdmsNode, DEFAULT_SUBSCRIPTION_SECS, NOTIFY_CONTENT_TYPE};
pub use store::{
    ChangeNotice, DocKey, ExamSubscription, LocalXdms, XdmDocument, XdmsClient, XdmsError,
    XdmsStore, AUID_EXAM_DOCS, AUID_RESOURCE_LISTS,
};
