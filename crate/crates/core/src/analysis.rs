//! Termination, deadlock and partial deadlock over the reachability graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::engine::{prepared, ReachGraph};
use crate::model::{Configuration, SystemSpec, Tag};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("configuration has prepared actions")]
    NotTerminal,
    #[error("reachability graph is truncated")]
    TruncatedGraph,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Termination,
    Deadlock,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Tags with a pending passed item.
    pub stuck_tags: BTreeSet<Tag>,
}

/// Terminal configuration: termination when no passed item is left,
/// deadlock otherwise.
pub fn classify_terminal(config: &Configuration, spec: &SystemSpec) -> Result<Verdict, AnalysisError> {
    if !prepared(config, spec).is_empty() {
        return Err(AnalysisError::NotTerminal);
    }
    let stuck_tags = config.tags();
    let kind = if stuck_tags.is_empty() {
        VerdictKind::Termination
    } else {
        VerdictKind::Deadlock
    };
    Ok(Verdict { kind, stuck_tags })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TagStatus {
    /// Pending somewhere, and wherever it pends it can still be consumed.
    Live,
    /// States where the tag pends and no path consumes it.
    DeadlockedFrom(BTreeSet<usize>),
    /// Never pending in a reachable state.
    Absent,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProgressReport {
    pub tags: BTreeMap<Tag, TagStatus>,
    /// States with a deadlocked tag next to a pending tag that is not.
    pub partial_deadlock: BTreeSet<usize>,
}

impl ProgressReport {
    pub fn is_deadlocked_at(&self, tag: Tag, state: usize) -> bool {
        matches!(self.tags.get(&tag), Some(TagStatus::DeadlockedFrom(s)) if s.contains(&state))
    }
}

/// Per-tag progress: a tag is deadlocked from a state where it pends if no
/// path from there fires an action consuming one of its passed items.
pub fn tag_progress(graph: &ReachGraph, spec: &SystemSpec) -> Result<ProgressReport, AnalysisError> {
    if graph.truncated {
        return Err(AnalysisError::TruncatedGraph);
    }
    let preds = graph.predecessors();
    let mut tags: BTreeSet<Tag> = spec.universe_tags();
    for s in &graph.states {
        tags.extend(s.tags());
    }
    let mut report = ProgressReport::default();
    let mut dead_in: Vec<BTreeSet<Tag>> = vec![BTreeSet::new(); graph.states.len()];
    for &t in &tags {
        // states from which an edge consuming t is reachable
        let mut can = vec![false; graph.states.len()];
        let mut queue = VecDeque::new();
        for e in &graph.edges {
            if e.fired.input_passed.tag == t && !can[e.source] {
                can[e.source] = true;
                queue.push_back(e.source);
            }
        }
        while let Some(s) = queue.pop_front() {
            for &e in &preds[s] {
                let src = graph.edges[e].source;
                if !can[src] {
                    can[src] = true;
                    queue.push_back(src);
                }
            }
        }
        let pending: Vec<usize> = (0..graph.states.len())
            .filter(|&s| graph.states[s].tags().contains(&t))
            .collect();
        let dead: BTreeSet<usize> = pending.iter().copied().filter(|&s| !can[s]).collect();
        for &s in &dead {
            dead_in[s].insert(t);
        }
        let status = if pending.is_empty() {
            TagStatus::Absent
        } else if dead.is_empty() {
            TagStatus::Live
        } else {
            TagStatus::DeadlockedFrom(dead)
        };
        report.tags.insert(t, status);
    }
    for (s, dead) in dead_in.iter().enumerate() {
        if !dead.is_empty() && graph.states[s].tags().iter().any(|t| !dead.contains(t)) {
            report.partial_deadlock.insert(s);
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TerminalRecord {
    pub state: usize,
    pub items: Vec<String>,
    pub verdict: VerdictKind,
    pub stuck_tags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TagRecord {
    pub tag: String,
    pub status: &'static str,
    pub deadlocked_from: Vec<usize>,
}

/// Machine-readable analysis: terminal states in state order, then tags in
/// name order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnalysisReport {
    pub states: usize,
    pub terminals: Vec<TerminalRecord>,
    pub tags: Vec<TagRecord>,
    pub partial_deadlock: Vec<usize>,
}

pub fn analyze(graph: &ReachGraph, spec: &SystemSpec) -> Result<AnalysisReport, AnalysisError> {
    let sym = spec.symbols();
    let progress = tag_progress(graph, spec)?;
    let mut terminals = Vec::new();
    for &s in &graph.terminal {
        let v = classify_terminal(&graph.states[s], spec)?;
        terminals.push(TerminalRecord {
            state: s,
            items: graph.states[s].render(sym),
            verdict: v.kind,
            stuck_tags: v.stuck_tags.iter().map(|t| sym.tag_name(*t).to_string()).collect(),
        });
    }
    let mut tags: Vec<TagRecord> = progress
        .tags
        .iter()
        .map(|(t, st)| {
            let (status, from) = match st {
                TagStatus::Live => ("live", Vec::new()),
                TagStatus::Absent => ("absent", Vec::new()),
                TagStatus::DeadlockedFrom(s) => ("deadlocked", s.iter().copied().collect()),
            };
            TagRecord {
                tag: sym.tag_name(*t).to_string(),
                status,
                deadlocked_from: from,
            }
        })
        .collect();
    tags.sort_by(|a, b| a.tag.cmp(&b.tag));
    Ok(AnalysisReport {
        states: graph.states.len(),
        terminals,
        tags,
        partial_deadlock: progress.partial_deadlock.into_iter().collect(),
    })
}

pub fn render_report_text(r: &AnalysisReport) -> String {
    let mut out = format!("{} states, {} terminal\n", r.states, r.terminals.len());
    for t in &r.terminals {
        out.push_str(&format!(
            "terminal s{} {} {{{}}}",
            t.state,
            match t.verdict {
                VerdictKind::Termination => "termination",
                VerdictKind::Deadlock => "deadlock",
            },
            t.items.join(", ")
        ));
        if !t.stuck_tags.is_empty() {
            out.push_str(&format!(" stuck [{}]", t.stuck_tags.join(", ")));
        }
        out.push('\n');
    }
    for t in &r.tags {
        out.push_str(&format!("tag {} {}", t.tag, t.status));
        if !t.deadlocked_from.is_empty() {
            let states: Vec<String> = t.deadlocked_from.iter().map(|s| format!("s{s}")).collect();
            out.push_str(&format!(" from [{}]", states.join(", ")));
        }
        out.push('\n');
    }
    if !r.partial_deadlock.is_empty() {
        let states: Vec<String> = r.partial_deadlock.iter().map(|s| format!("s{s}")).collect();
        out.push_str(&format!("partial deadlock at [{}]\n", states.join(", ")));
    }
    out
}
