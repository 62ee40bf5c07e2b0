use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::trace::{EventRef, Trace, TraceNode};

const COL: usize = 16;
const TIME: usize = 10;

/// Columns in order of first appearance. Without a filter, nodes that
/// never send or receive are left out; named nodes that stay idle go last.
fn columns<'a>(trace: &'a Trace, filter: &[&str]) -> Vec<&'a TraceNode> {
    let wanted = |n: &TraceNode| {
        filter.is_empty() || filter.iter().any(|f| *f == n.name || *f == n.role.as_str())
    };
    let mut cols: Vec<&TraceNode> = Vec::new();
    let mut add = |n: &'a TraceNode| {
        if wanted(n) && !cols.iter().any(|c| c.name == n.name) {
            cols.push(n);
        }
    };
    for ev in trace.events() {
        if matches!(ev, EventRef::Http(_)) {
            continue;
        }
        for name in [ev.src(), ev.dst()] {
            if let Some(n) = trace.nodes.iter().find(|n| n.name == name) {
                add(n);
            }
        }
    }
    if !filter.is_empty() {
        trace.nodes.iter().for_each(add);
    }
    cols
}

fn centred(text: &str, width: usize) -> String {
    let len = text.chars().count().min(width);
    let left = (width - len) / 2;
    let mut s: String = core::iter::repeat_n(' ', left).collect();
    s.extend(text.chars().take(width));
    s.extend(core::iter::repeat_n(' ', width - len - left));
    s
}

/// Fixed-width message sequence chart of the trace's wire and Cx events.
/// `filter` keeps only the named nodes or roles (all when empty); events
/// with an endpoint outside the kept columns are left out. Dropped
/// datagrams end in "✗" instead of an arrow head.
pub fn render_ladder(trace: &Trace, filter: &[&str]) -> String {
    let cols = columns(trace, filter);
    let mut out = String::new();
    for heading in [
        cols.iter()
            .map(|c| centred(&c.name, COL))
            .collect::<String>(),
        cols.iter()
            .map(|c| centred(c.role.display_name(), COL))
            .collect::<String>(),
    ] {
        let line = alloc::format!("{}{heading}", " ".repeat(TIME));
        out.push_str(line.trim_end());
        out.push('\n');
    }
    let centre = |i: usize| i * COL + COL / 2;
    for ev in trace.events() {
        if matches!(ev, EventRef::Http(_)) {
            continue;
        }
        let (Some(a), Some(b)) = (
            cols.iter().position(|c| c.name == ev.src()),
            cols.iter().position(|c| c.name == ev.dst()),
        ) else {
            continue;
        };
        let mut line: Vec<char> = (0..cols.len() * COL).map(|_| ' ').collect();
        for i in 0..cols.len() {
            line[centre(i)] = '|';
        }
        let (lo, hi) = (centre(a.min(b)), centre(a.max(b)));
        for c in line.iter_mut().take(hi).skip(lo + 1) {
            *c = '-';
        }
        let head = if ev.dropped() {
            '✗'
        } else if b > a {
            '>'
        } else {
            '<'
        };
        if a == b {
            line[lo] = head;
        } else if b > a {
            line[hi - 1] = head;
        } else {
            line[lo + 1] = head;
        }
        let label: Vec<char> = ev.kind().chars().collect();
        let span = hi.saturating_sub(lo + 3);
        if span > 0 {
            let take = label.len().min(span);
            let start = lo + 2 + (span - take) / 2;
            line[start..start + take].copy_from_slice(&label[..take]);
        }
        let _ = write!(out, "{:>width$} ", ev.time().millis(), width = TIME - 1);
        let text: String = line.into_iter().collect();
        out.push_str(text.trim_end());
        out.push('\n');
    }
    out
}
