//! Reply parsers for the remote critic. Each returns `None` when the reply
//! does not contain a usable answer.

use crate::render::ViewName;

use super::SubtaskPlan;

fn last_nonempty_line(reply: &str) -> Option<&str> {
    reply.lines().rev().map(str::trim).find(|l| !l.is_empty())
}

/// The last unsigned integer on the last nonempty line.
pub fn last_integer(reply: &str) -> Option<usize> {
    let line = last_nonempty_line(reply)?;
    let mut last = None;
    let mut current = String::new();
    for c in line.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_digit() {
            current.push(c);
        } else if !current.is_empty() {
            last = Some(std::mem::take(&mut current));
        }
    }
    last?.parse().ok()
}

/// An index below `bound`, following the last-integer rule.
pub fn index_below(reply: &str, bound: usize) -> Option<usize> {
    last_integer(reply).filter(|&i| i < bound)
}

/// The last view name mentioned on the last nonempty line. Accepts
/// "top-down", "top down", "topdown" and "top_down" in any case.
pub fn view_name(reply: &str) -> Option<ViewName> {
    let line = last_nonempty_line(reply)?.to_ascii_lowercase();
    let normalized = line.replace("top down", "top-down").replace("top_down", "top-down").replace("topdown", "top-down");
    let mut best: Option<(usize, ViewName)> = None;
    for view in ViewName::ALL {
        let name = view.as_str();
        let mut start = 0;
        while let Some(pos) = normalized[start..].find(name) {
            let at = start + pos;
            let before_ok = at == 0 || !normalized.as_bytes()[at - 1].is_ascii_alphanumeric();
            let end = at + name.len();
            let after_ok = end == normalized.len() || !normalized.as_bytes()[end].is_ascii_alphanumeric();
            if before_ok && after_ok && best.is_none_or(|(p, _)| at > p) {
                best = Some((at, view));
            }
            start = at + 1;
        }
    }
    best.map(|(_, v)| v)
}

fn yes_no(line: &str, key: &str) -> Option<bool> {
    let lower = line.trim().to_ascii_lowercase();
    let rest = lower.trim_start_matches(|c: char| !c.is_ascii_alphanumeric());
    let value = rest.strip_prefix(key)?.trim_start().strip_prefix(':')?.trim();
    if value.starts_with("yes") || value.starts_with("true") {
        Some(true)
    } else if value.starts_with("no") || value.starts_with("false") {
        Some(false)
    } else {
        None
    }
}

/// Numbered list items ("1. text" or "1) text") in reply order, plus the
/// `fingers:` and `rotation:` flags (absent flags read as no).
pub fn subtask_plan(reply: &str) -> Option<SubtaskPlan> {
    let mut subtasks = vec![];
    let mut needs_fingers = false;
    let mut needs_rotation = false;
    for line in reply.lines() {
        if let Some(v) = yes_no(line, "fingers") {
            needs_fingers = v;
            continue;
        }
        if let Some(v) = yes_no(line, "rotation") {
            needs_rotation = v;
            continue;
        }
        let t = line.trim();
        let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits == 0 {
            continue;
        }
        let rest = &t[digits..];
        if let Some(text) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            let text = text.trim();
            if !text.is_empty() {
                subtasks.push(text.to_string());
            }
        }
    }
    if subtasks.is_empty() {
        return None;
    }
    Some(SubtaskPlan {
        subtasks,
        needs_fingers,
        needs_rotation,
    })
}
