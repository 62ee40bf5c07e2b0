use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::sip::SipUri;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("not well-formed XML: {0}")]
    Xml(String),
    #[error("unexpected element <{0}>")]
    UnexpectedElement(String),
    #[error("<{0}> is missing its uri attribute")]
    MissingUri(&'static str),
    #[error("bad SIP URI {0:?}")]
    BadUri(String),
    #[error("{member} is listed twice in {group}")]
    DuplicateMember { group: String, member: String },
}

/// A named set of public identities, in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupList {
    pub group_uri: SipUri,
    pub members: Vec<SipUri>,
}

impl GroupList {
    pub fn new(group_uri: SipUri, members: Vec<SipUri>) -> Self {
        GroupList { group_uri, members }
    }

    pub fn contains(&self, identity: &SipUri) -> bool {
        let key = identity.aor_key();
        self.members.iter().any(|m| m.aor_key() == key)
    }

    /// `<list uri="..."><entry uri="..."/>...</list>`
    pub fn to_xml(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "<list uri=\"{}\">", escape(&self.group_uri.to_string()));
        for m in &self.members {
            let _ = write!(s, "<entry uri=\"{}\"/>", escape(&m.to_string()));
        }
        s.push_str("</list>");
        s
    }
}

fn escape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Serializes several lists under a `<resource-lists>` root.
pub fn lists_to_xml(lists: &[GroupList]) -> String {
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<resource-lists>");
    for l in lists {
        s.push_str(&l.to_xml());
    }
    s.push_str("</resource-lists>\n");
    s
}

fn uri_attr(node: roxmltree::Node<'_, '_>, what: &'static str) -> Result<SipUri, GroupError> {
    let raw = node.attribute("uri").ok_or(GroupError::MissingUri(what))?;
    SipUri::parse(raw.trim()).map_err(|_| GroupError::BadUri(raw.to_string()))
}

fn parse_list(node: roxmltree::Node<'_, '_>) -> Result<GroupList, GroupError> {
    let group_uri = uri_attr(node, "list")?;
    let mut members: Vec<SipUri> = Vec::new();
    for child in node.children().filter(|n| n.is_element()) {
        if child.tag_name().name() != "entry" {
            // Display names and other decorations are tolerated.
            if child.tag_name().name() == "display-name" {
                continue;
            }
            return Err(GroupError::UnexpectedElement(
                child.tag_name().name().to_string(),
            ));
        }
        let m = uri_attr(child, "entry")?;
        if members.iter().any(|x| x.aor_key() == m.aor_key()) {
            return Err(GroupError::DuplicateMember {
                group: group_uri.to_string(),
                member: m.to_string(),
            });
        }
        members.push(m);
    }
    Ok(GroupList { group_uri, members })
}

/// Parses a bare `<list>` or a `<resource-lists>` document holding lists.
pub fn parse_group_lists(xml: &str) -> Result<Vec<GroupList>, GroupError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| GroupError::Xml(e.to_string()))?;
    let root = doc.root_element();
    match root.tag_name().name() {
        "list" => Ok(alloc::vec![parse_list(root)?]),
        "resource-lists" => root
            .children()
            .filter(|n| n.is_element())
            .map(|n| match n.tag_name().name() {
                "list" => parse_list(n),
                other => Err(GroupError::UnexpectedElement(other.to_string())),
            })
            .collect(),
        other => Err(GroupError::UnexpectedElement(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CS101: &str = r#"<list uri="sip:cs101@ims.kau.test"><entry uri="sip:s1@ims.kau.test"/><entry uri="sip:s2@ims.kau.test"/></list>"#;

    #[test]
    fn parses_minimal_list() {
        let g = parse_group_lists(CS101).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].members.len(), 2);
        assert_eq!(g[0].members[1].user.as_deref(), Some("s2"));
    }

    #[test]
    fn round_trip() {
        let g = parse_group_lists(CS101).unwrap();
        assert_eq!(g[0].to_xml(), CS101);
        assert_eq!(parse_group_lists(&lists_to_xml(&g)).unwrap(), g);
    }

    #[test]
    fn namespaced_resource_lists() {
        let xml = r#"<?xml version="1.0"?><resource-lists xmlns="urn:ietf:params:xml:ns:resource-lists">
            <list uri="sip:a@h"><display-name>A</display-name><entry uri="sip:x@h"/></list>
            <list uri="sip:b@h"/></resource-lists>"#;
        let g = parse_group_lists(xml).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g[1].members.is_empty());
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(
            parse_group_lists("<list uri="),
            Err(GroupError::Xml(_))
        ));
        assert!(matches!(
            parse_group_lists("<list/>"),
            Err(GroupError::MissingUri("list"))
        ));
        assert!(matches!(
            parse_group_lists(r#"<list uri="x"/>"#),
            Err(GroupError::BadUri(_))
        ));
        assert!(matches!(
            parse_group_lists(
                r#"<list uri="sip:g@h"><entry uri="sip:a@h"/><entry uri="sip:a@h"/></list>"#
            ),
            Err(GroupError::DuplicateMember { .. })
        ));
        assert!(matches!(
            parse_group_lists("<group/>"),
            Err(GroupError::UnexpectedElement(_))
        ));
    }

    #[test]
    fn escapes_attributes() {
        let g = GroupList::new(SipUri::parse("sip:a&b@h").unwrap(), Vec::new());
        assert!(g.to_xml().contains("a&amp;b"));
        assert_eq!(parse_group_lists(&g.to_xml()).unwrap()[0], g);
    }
}
