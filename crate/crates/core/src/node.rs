//! The sans-IO node contract shared by every testbed element.
//!
//! A node reacts to SIP datagrams, timer expiry, scenario commands and HTTP
//! traffic, and reports what it wants done as [`Effect`]s. Drivers (the
//! virtual-time world, or the UDP runtime) carry effects out.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::any::Any;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::endpoint::{Instant, NetAddress};
use crate::exam::{Channel, ExamSpec};
use crate::hss::{CxError, CxMessage};
use crate::http::{HttpRequest, HttpResponse};
use crate::sip::{SipMessage, SipUri};

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Sip {
        dst: NetAddress,
        msg: SipMessage,
    },
    /// A completed Cx-lite exchange, reported for tracing.
    Cx {
        hss: NetAddress,
        request: CxMessage,
        answer: Result<CxMessage, CxError>,
    },
    Http {
        id: u64,
        dst: NetAddress,
        request: HttpRequest,
    },
    Transition {
        from: String,
        to: String,
        cause: String,
    },
}

#[derive(Debug, Default)]
pub struct Outbox {
    effects: Vec<Effect>,
}

impl Outbox {
    pub fn new() -> Self {
        Outbox::default()
    }

    pub fn send(&mut self, dst: NetAddress, msg: SipMessage) {
        self.effects.push(Effect::Sip { dst, msg });
    }

    pub fn cx(&mut self, hss: NetAddress, request: CxMessage, answer: Result<CxMessage, CxError>) {
        self.effects.push(Effect::Cx {
            hss,
            request,
            answer,
        });
    }

    pub fn http(&mut self, id: u64, dst: NetAddress, request: HttpRequest) {
        self.effects.push(Effect::Http { id, dst, request });
    }

    pub fn transition(&mut self, from: impl ToString, to: impl ToString, cause: impl ToString) {
        self.effects.push(Effect::Transition {
            from: from.to_string(),
            to: to.to_string(),
            cause: cause.to_string(),
        });
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn drain(&mut self) -> alloc::vec::Drain<'_, Effect> {
        self.effects.drain(..)
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    /// SIP messages queued so far, with their destinations.
    pub fn sip(&self) -> impl Iterator<Item = (&NetAddress, &SipMessage)> {
        self.effects.iter().filter_map(|e| match e {
            Effect::Sip { dst, msg } => Some((dst, msg)),
            _ => None,
        })
    }
}

/// Scripted actions a scenario can ask an actor to perform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "args", rename_all = "snake_case")]
pub enum Command {
    Register {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        passkey: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expires: Option<u32>,
    },
    Deregister {},
    Subscribe {},
    Unsubscribe {},
    Invite {
        target: SipUri,
    },
    ProvisionExam {
        exam: ExamSpec,
    },
    Submit {
        exam_id: String,
        answers: BTreeMap<String, usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        channel: Option<Channel>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Register { .. } => "register",
            Command::Deregister {} => "deregister",
            Command::Subscribe {} => "subscribe",
            Command::Unsubscribe {} => "unsubscribe",
            Command::Invite { .. } => "invite",
            Command::ProvisionExam { .. } => "provision_exam",
            Command::Submit { .. } => "submit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandError {
    #[error("{node} does not support {command}")]
    Unsupported { node: String, command: String },
    #[error("{0}")]
    Rejected(String),
}

pub trait Node: Any {
    fn name(&self) -> &str;

    fn address(&self) -> &NetAddress;

    fn on_sip(&mut self, now: Instant, from: &NetAddress, msg: SipMessage, out: &mut Outbox);

    fn on_timer(&mut self, now: Instant, out: &mut Outbox);

    fn next_deadline(&self) -> Option<Instant>;

    /// Earliest deadline that must fire before the node counts as idle.
    /// Housekeeping deadlines such as binding expiry or registration
    /// refresh are left out.
    fn next_activity(&self) -> Option<Instant> {
        self.next_deadline()
    }

    fn on_command(
        &mut self,
        _now: Instant,
        command: &Command,
        _out: &mut Outbox,
    ) -> Result<(), CommandError> {
        Err(CommandError::Unsupported {
            node: self.name().to_string(),
            command: command.name().to_string(),
        })
    }

    /// Serves an HTTP request addressed to this node, if it has an HTTP face.
    fn on_http_request(
        &mut self,
        _now: Instant,
        _req: &HttpRequest,
        _out: &mut Outbox,
    ) -> Option<HttpResponse> {
        None
    }

    fn on_http_response(
        &mut self,
        _now: Instant,
        _id: u64,
        _resp: HttpResponse,
        _out: &mut Outbox,
    ) {
    }

    /// Called after every driver step, for work triggered by shared state.
    fn poll(&mut self, _now: Instant, _out: &mut Outbox) {}

    /// True when no transaction is still in progress.
    fn transactions_settled(&self) -> bool {
        true
    }

    fn as_any(&self) -> &dyn Any;

    fn as_any_mut(&mut self) -> &mut dyn Any;
}
