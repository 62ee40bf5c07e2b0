use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::{EventRef, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMode {
    /// The events touching the pattern's endpoints equal the steps.
    Exact,
    /// The steps appear in order, possibly with other events between.
    Subsequence,
}

/// One expected arrow. `src` and `dst` name a node or a role (`ua`,
/// `pcscf`, ...). `kind` is a method, a Cx op, a status code or a status
/// class such as `2xx`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowStep {
    pub src: String,
    pub dst: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
    /// Substring the serialized message must contain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
}

impl FlowStep {
    pub fn new(src: &str, dst: &str, kind: &str) -> Self {
        FlowStep {
            src: src.into(),
            dst: dst.into(),
            kind: kind.into(),
            content_type: None,
            contains: None,
        }
    }

    pub fn with_content_type(mut self, ct: &str) -> Self {
        self.content_type = Some(ct.into());
        self
    }

    pub fn containing(mut self, text: &str) -> Self {
        self.contains = Some(text.into());
        self
    }
}

impl fmt::Display for FlowStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}→{}", self.kind, self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowPattern {
    pub name: String,
    pub mode: MatchMode,
    pub steps: Vec<FlowStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("pattern {0} has no steps")]
    Empty(String),
    #[error("pattern {pattern} refers to {endpoint}, which is neither a node nor a role in the topology")]
    UnknownEndpoint { pattern: String, endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowResult {
    Match,
    Mismatch {
        /// Index of the first step that could not be matched.
        step: usize,
        detail: String,
    },
}

impl FlowResult {
    pub fn is_match(&self) -> bool {
        *self == FlowResult::Match
    }
}

impl FlowPattern {
    pub fn new(name: &str, mode: MatchMode, steps: Vec<FlowStep>) -> Self {
        FlowPattern {
            name: name.into(),
            mode,
            steps,
        }
    }

    pub fn validate(&self, trace: &Trace) -> Result<(), PatternError> {
        if self.steps.is_empty() {
            return Err(PatternError::Empty(self.name.clone()));
        }
        for s in &self.steps {
            for e in [&s.src, &s.dst] {
                let known = trace
                    .nodes
                    .iter()
                    .any(|n| n.name == *e || n.role.as_str() == e.as_str());
                if !known {
                    return Err(PatternError::UnknownEndpoint {
                        pattern: self.name.clone(),
                        endpoint: e.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn endpoint_matches(trace: &Trace, selector: &str, node: &str) -> bool {
    selector == node || trace.role_of(node).is_some_and(|r| r.as_str() == selector)
}

fn kind_matches(want: &str, got: &str) -> bool {
    if want.eq_ignore_ascii_case(got) {
        return true;
    }
    let w = want.as_bytes();
    w.len() == 3
        && (w[1] == b'x' || w[1] == b'X')
        && (w[2] == b'x' || w[2] == b'X')
        && got.len() == 3
        && got.as_bytes()[0] == w[0]
        && got.bytes().all(|b| b.is_ascii_digit())
}

fn step_matches(trace: &Trace, step: &FlowStep, ev: &EventRef<'_>) -> bool {
    if !endpoint_matches(trace, &step.src, ev.src())
        || !endpoint_matches(trace, &step.dst, ev.dst())
        || !kind_matches(&step.kind, &ev.kind())
    {
        return false;
    }
    match ev {
        EventRef::Wire(w) => {
            step.content_type
                .as_deref()
                .is_none_or(|ct| w.content_type.as_deref() == Some(ct))
                && step.contains.as_deref().is_none_or(|t| w.wire.contains(t))
        }
        EventRef::Cx(_) | EventRef::Http(_) => {
            step.content_type.is_none() && step.contains.is_none()
        }
    }
}

fn describe(ev: &EventRef<'_>) -> String {
    format!(
        "#{} {} {}→{} at {}",
        ev.seq(),
        ev.kind(),
        ev.src(),
        ev.dst(),
        ev.time()
    )
}

/// Checks `trace` against `pattern`. Dropped datagrams never reached their
/// destination and are not part of the observed flow.
pub fn assert_flow(trace: &Trace, pattern: &FlowPattern) -> FlowResult {
    if let Err(e) = pattern.validate(trace) {
        return FlowResult::Mismatch {
            step: 0,
            detail: format!("{e}"),
        };
    }
    let events: Vec<EventRef<'_>> = trace
        .events()
        .into_iter()
        .filter(|e| !e.dropped())
        .collect();
    match pattern.mode {
        MatchMode::Subsequence => {
            let mut it = events.iter();
            for (i, step) in pattern.steps.iter().enumerate() {
                if !it.any(|e| step_matches(trace, step, e)) {
                    return FlowResult::Mismatch {
                        step: i,
                        detail: format!("no {step} after the previous step"),
                    };
                }
            }
            FlowResult::Match
        }
        MatchMode::Exact => {
            let touches = |name: &str| {
                pattern.steps.iter().any(|s| {
                    endpoint_matches(trace, &s.src, name) || endpoint_matches(trace, &s.dst, name)
                })
            };
            let filtered: Vec<&EventRef<'_>> = events
                .iter()
                .filter(|e| touches(e.src()) || touches(e.dst()))
                .collect();
            for (i, step) in pattern.steps.iter().enumerate() {
                match filtered.get(i) {
                    Some(e) if step_matches(trace, step, e) => {}
                    Some(e) => {
                        return FlowResult::Mismatch {
                            step: i,
                            detail: format!("expected {step}, found {}", describe(e)),
                        }
                    }
                    None => {
                        return FlowResult::Mismatch {
                            step: i,
                            detail: format!("expected {step}, trace ended"),
                        }
                    }
                }
            }
            match filtered.get(pattern.steps.len()) {
                None => FlowResult::Match,
                Some(e) => FlowResult::Mismatch {
                    step: pattern.steps.len(),
                    detail: format!("unexpected extra event {}", describe(e)),
                },
            }
        }
    }
}
