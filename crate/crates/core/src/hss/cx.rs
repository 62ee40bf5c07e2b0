use alloc::rc::Rc;
use alloc::string::String;
use core::cell::{Cell, RefCell};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{HssStore, SubscriberProfile};
use crate::endpoint::NetAddress;
use crate::sip::SipUri;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CxOp {
    UAR,
    UAA,
    SAR,
    SAA,
    LIR,
    LIA,
    MAR,
    MAA,
}

impl CxOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CxOp::UAR => "UAR",
            CxOp::UAA => "UAA",
            CxOp::SAR => "SAR",
            CxOp::SAA => "SAA",
            CxOp::LIR => "LIR",
            CxOp::LIA => "LIA",
            CxOp::MAR => "MAR",
            CxOp::MAA => "MAA",
        }
    }

    pub fn is_request(self) -> bool {
        matches!(self, CxOp::UAR | CxOp::SAR | CxOp::LIR | CxOp::MAR)
    }

    pub fn answer(self) -> CxOp {
        match self {
            CxOp::UAR => CxOp::UAA,
            CxOp::SAR => CxOp::SAA,
            CxOp::LIR => CxOp::LIA,
            CxOp::MAR => CxOp::MAA,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    Register,
    Deregister,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CxResult {
    Success,
    UserUnknown,
    AuthRejected,
}

/// One Cx-lite request or answer. On the wire this is a single JSON object
/// per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CxMessage {
    pub correlation_id: u64,
    pub op: CxOp,
    pub impu: SipUri,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scscf_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Assignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passkey_offer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<CxResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<SubscriberProfile>,
}

impl CxMessage {
    pub fn request(correlation_id: u64, op: CxOp, impu: SipUri) -> Self {
        CxMessage {
            correlation_id,
            op,
            impu,
            impi: None,
            scscf_name: None,
            assignment: None,
            passkey_offer: None,
            result: None,
            profile: None,
        }
    }

    pub fn uar(id: u64, impu: SipUri) -> Self {
        CxMessage::request(id, CxOp::UAR, impu)
    }

    pub fn lir(id: u64, impu: SipUri) -> Self {
        CxMessage::request(id, CxOp::LIR, impu)
    }

    pub fn sar(
        id: u64,
        impu: SipUri,
        scscf: &str,
        assignment: Assignment,
        offer: Option<&str>,
    ) -> Self {
        CxMessage {
            scscf_name: Some(scscf.into()),
            assignment: Some(assignment),
            passkey_offer: offer.map(String::from),
            ..CxMessage::request(id, CxOp::SAR, impu)
        }
    }

    pub fn mar(id: u64, impu: SipUri, offer: &str) -> Self {
        CxMessage {
            passkey_offer: Some(offer.into()),
            ..CxMessage::request(id, CxOp::MAR, impu)
        }
    }

    /// An answer to `req` carrying `result`, echoing the correlation id.
    pub fn answer_to(req: &CxMessage, result: CxResult) -> Self {
        CxMessage {
            result: Some(result),
            ..CxMessage::request(req.correlation_id, req.op.answer(), req.impu.clone())
        }
    }

    pub fn is_success(&self) -> bool {
        self.result == Some(CxResult::Success)
    }

    /// Copy safe to write into traces: the passkey offer is masked.
    pub fn redacted(&self) -> CxMessage {
        let mut m = self.clone();
        if m.passkey_offer.is_some() {
            m.passkey_offer = Some("***".into());
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CxError {
    #[error("HSS unreachable: {0}")]
    Unreachable(String),
    #[error("malformed Cx-lite message: {0}")]
    Malformed(String),
    #[error("answer correlation id {got} does not match request {expected}")]
    Correlation { expected: u64, got: u64 },
    #[error("HSS rejected the request: {0}")]
    Rejected(String),
}

/// A synchronous Cx-lite peer.
pub trait CxClient {
    fn call(&mut self, req: &CxMessage) -> Result<CxMessage, CxError>;

    /// Address of the HSS, for tracing.
    fn peer(&self) -> NetAddress;
}

/// In-process Cx-lite client sharing the store with the simulated HSS node.
#[derive(Debug, Clone)]
pub struct LocalCx {
    store: Rc<RefCell<HssStore>>,
    addr: NetAddress,
    up: Rc<Cell<bool>>,
}

impl LocalCx {
    pub fn new(store: Rc<RefCell<HssStore>>, addr: NetAddress) -> Self {
        LocalCx {
            store,
            addr,
            up: Rc::new(Cell::new(true)),
        }
    }

    /// Shared switch; clearing it makes every call fail as unreachable.
    pub fn availability(&self) -> Rc<Cell<bool>> {
        self.up.clone()
    }

    pub fn with_availability(mut self, up: Rc<Cell<bool>>) -> Self {
        self.up = up;
        self
    }
}

impl CxClient for LocalCx {
    fn call(&mut self, req: &CxMessage) -> Result<CxMessage, CxError> {
        if !self.up.get() {
            return Err(CxError::Unreachable(alloc::format!("{}", self.addr)));
        }
        self.store
            .borrow_mut()
            .handle(req)
            .map_err(|e| CxError::Rejected(alloc::format!("{e}")))
    }

    fn peer(&self) -> NetAddress {
        self.addr.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shape() {
        let m = CxMessage::uar(7, SipUri::parse("sip:s1@ims.kau.test").unwrap());
        let line = serde_json::to_string(&m).unwrap();
        assert_eq!(
            line,
            r#"{"correlation_id":7,"op":"UAR","impu":"sip:s1@ims.kau.test"}"#
        );
        assert_eq!(serde_json::from_str::<CxMessage>(&line).unwrap(), m);
    }

    #[test]
    fn answer_echoes_correlation() {
        let m = CxMessage::lir(42, SipUri::parse("sip:s1@ims.kau.test").unwrap());
        let a = CxMessage::answer_to(&m, CxResult::UserUnknown);
        assert_eq!(a.correlation_id, 42);
        assert_eq!(a.op, CxOp::LIA);
    }

    #[test]
    fn redaction_masks_offer() {
        let m = CxMessage::mar(1, SipUri::parse("sip:t1@ims.kau.test").unwrap(), "pw");
        assert_eq!(m.redacted().passkey_offer.as_deref(), Some("***"));
    }
}
