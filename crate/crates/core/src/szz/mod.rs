//! Issue linkage and bug-introducing change tracing (SZZ).
//!
//! [`link_issues`] finds bug-fixing changes (BFCs) by matching issue ids in
//! commit messages. [`trace_bic_candidates`] blames the lines each BFC
//! deleted or modified at its first parent; the origin commits become
//! candidate bug-introducing changes (BICs) with line evidence. The
//! filters then move candidates to the dropped list, never deleting them,
//! so `retained + dropped` is conserved and filters commute.

mod linkage;

pub use linkage::{link_issues, IdPattern, LinkOptions};

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::time::{self, Timestamp};
use crate::vcs::{CommitRecord, LineKind, Miner};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub issue_id: String,
    #[serde(with = "time::iso8601::option", default)]
    pub reported_time: Option<Timestamp>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub reporter: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    /// Pre-image path at the BFC's parent.
    pub path: String,
    pub line: u32,
    pub kind: LineKind,
    pub bfc_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BicCandidate {
    pub commit_id: String,
    pub author_time: Timestamp,
    pub commit_time: Timestamp,
    pub evidence: Vec<Evidence>,
}

impl BicCandidate {
    pub fn is_cosmetic(&self) -> bool {
        self.evidence.iter().all(|e| e.kind.is_cosmetic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Cosmetic,
    FutureDated,
    SuspiciousFlag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCandidate {
    pub candidate: BicCandidate,
    pub reasons: BTreeSet<DropReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugLinkage {
    pub issue_id: String,
    pub bfc_ids: Vec<String>,
    #[serde(default)]
    pub bic_candidates: Vec<BicCandidate>,
    #[serde(default)]
    pub dropped: Vec<DroppedCandidate>,
    /// BFCs that only added lines and so trace to no candidate.
    #[serde(default)]
    pub pure_addition_bfcs: Vec<String>,
    /// Set from an external suspicious-change annotation.
    #[serde(default)]
    pub suspicious: bool,
}

impl BugLinkage {
    pub fn new(issue_id: impl Into<String>, bfc_ids: Vec<String>) -> Self {
        Self {
            issue_id: issue_id.into(),
            bfc_ids,
            bic_candidates: Vec::new(),
            dropped: Vec::new(),
            pure_addition_bfcs: Vec::new(),
            suspicious: false,
        }
    }

    pub fn candidate_count(&self) -> usize {
        self.bic_candidates.len() + self.dropped.len()
    }

    pub fn retained_ids(&self) -> impl Iterator<Item = &str> {
        self.bic_candidates.iter().map(|c| c.commit_id.as_str())
    }

    /// Moves candidates matching `pred` to `dropped` with `reason`; already
    /// dropped candidates matching `pred` gain the reason too.
    fn drop_where(&mut self, reason: DropReason, mut pred: impl FnMut(&BicCandidate) -> bool) {
        for d in &mut self.dropped {
            if pred(&d.candidate) {
                d.reasons.insert(reason);
            }
        }
        let (drop, keep): (Vec<_>, Vec<_>) = std::mem::take(&mut self.bic_candidates)
            .into_iter()
            .partition(|c| pred(c));
        self.bic_candidates = keep;
        self.dropped.extend(drop.into_iter().map(|candidate| DroppedCandidate {
            candidate,
            reasons: BTreeSet::from([reason]),
        }));
        self.dropped
            .sort_by(|a, b| a.candidate.commit_id.cmp(&b.candidate.commit_id));
    }
}

/// Access to commits (with deltas) and blame, as needed for tracing.
pub trait CommitSource: Sync {
    fn commit(&self, id: &str) -> Result<Cow<'_, CommitRecord>>;
    fn blame(&self, commit: &str, path: &str, lines: &BTreeSet<u32>) -> Result<BTreeMap<u32, String>>;
}

impl CommitSource for Miner {
    fn commit(&self, id: &str) -> Result<Cow<'_, CommitRecord>> {
        let mut record = self.commit_record(id)?;
        record.files = self.compute_file_deltas(&record)?;
        Ok(Cow::Owned(record))
    }

    fn blame(&self, commit: &str, path: &str, lines: &BTreeSet<u32>) -> Result<BTreeMap<u32, String>> {
        self.blame_lines(commit, path, lines)
    }
}

/// Already-mined history plus a miner for blame queries.
pub struct MinedHistory<'a> {
    miner: &'a Miner,
    by_id: HashMap<&'a str, &'a CommitRecord>,
}

impl<'a> MinedHistory<'a> {
    pub fn new(miner: &'a Miner, commits: &'a [CommitRecord]) -> Self {
        Self {
            miner,
            by_id: commits.iter().map(|c| (c.id.as_str(), c)).collect(),
        }
    }
}

impl CommitSource for MinedHistory<'_> {
    fn commit(&self, id: &str) -> Result<Cow<'_, CommitRecord>> {
        match self.by_id.get(id) {
            Some(c) => Ok(Cow::Borrowed(*c)),
            None => self.miner.commit(id).map(|c| Cow::Owned(c.into_owned())),
        }
    }

    fn blame(&self, commit: &str, path: &str, lines: &BTreeSet<u32>) -> Result<BTreeMap<u32, String>> {
        self.miner.blame_lines(commit, path, lines)
    }
}

/// Blames every deleted pre-image line of each BFC at its first parent.
/// Replaces any previous candidates and dropped entries.
pub fn trace_bic_candidates(linkage: &BugLinkage, source: &dyn CommitSource) -> Result<BugLinkage> {
    let mut out = linkage.clone();
    out.bic_candidates.clear();
    out.dropped.clear();
    out.pure_addition_bfcs.clear();
    let mut evidence: BTreeMap<String, BTreeSet<Evidence>> = BTreeMap::new();
    for bfc_id in &linkage.bfc_ids {
        let bfc = source.commit(bfc_id)?;
        let Some(parent) = bfc.first_parent() else {
            out.pure_addition_bfcs.push(bfc_id.clone());
            continue;
        };
        let mut traced_any = false;
        for delta in bfc.files.iter().filter(|d| !d.binary) {
            if delta.deleted_line_numbers.is_empty() {
                continue;
            }
            let path = delta.pre_image_path();
            let origins = source.blame(parent, path, &delta.deleted_line_numbers)?;
            for (line, origin) in origins {
                traced_any = true;
                let kind = delta
                    .deleted_kinds
                    .get(&line)
                    .copied()
                    .unwrap_or(LineKind::Code);
                evidence.entry(origin).or_default().insert(Evidence {
                    path: path.to_string(),
                    line,
                    kind,
                    bfc_id: bfc_id.clone(),
                });
            }
        }
        if !traced_any {
            out.pure_addition_bfcs.push(bfc_id.clone());
        }
    }
    for (commit_id, ev) in evidence {
        let c = source.commit(&commit_id)?;
        out.bic_candidates.push(BicCandidate {
            author_time: c.author_time,
            commit_time: c.commit_time,
            commit_id,
            evidence: ev.into_iter().collect(),
        });
    }
    Ok(out)
}

/// Drops candidates evidenced only by comment or whitespace lines.
pub fn filter_cosmetic(linkage: &BugLinkage) -> BugLinkage {
    let mut out = linkage.clone();
    out.drop_where(DropReason::Cosmetic, BicCandidate::is_cosmetic);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBasis {
    #[default]
    AuthorTime,
    CommitTime,
}

/// Drops candidates authored strictly after the issue was reported.
pub fn filter_future(linkage: &BugLinkage, issue: &IssueRecord) -> Result<BugLinkage> {
    filter_future_by(linkage, issue, TimeBasis::AuthorTime)
}

pub fn filter_future_by(linkage: &BugLinkage, issue: &IssueRecord, basis: TimeBasis) -> Result<BugLinkage> {
    let reported = issue
        .reported_time
        .ok_or_else(|| Error::MissingReportedTime(issue.issue_id.clone()))?;
    let mut out = linkage.clone();
    out.drop_where(DropReason::FutureDated, |c| {
        let t = match basis {
            TimeBasis::AuthorTime => c.author_time,
            TimeBasis::CommitTime => c.commit_time,
        };
        t > reported
    });
    Ok(out)
}

/// External suspicious-change annotation: flagged issues and/or commits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuspiciousAnnotations {
    #[serde(default)]
    pub issues: BTreeSet<String>,
    #[serde(default)]
    pub commits: BTreeSet<String>,
}

impl SuspiciousAnnotations {
    /// Sets the linkage's pass-through flag when its issue or one of its BFCs is listed.
    pub fn annotate(&self, linkage: &mut BugLinkage) {
        linkage.suspicious = linkage.suspicious
            || self.issues.contains(&linkage.issue_id)
            || linkage.bfc_ids.iter().any(|b| self.commits.contains(b));
    }
}

/// Drops every candidate of a suspicious linkage, and listed candidate commits.
pub fn filter_suspicious(linkage: &BugLinkage, annotations: &SuspiciousAnnotations) -> BugLinkage {
    let mut out = linkage.clone();
    let all = out.suspicious;
    out.drop_where(DropReason::SuspiciousFlag, |c| {
        all || annotations.commits.contains(&c.commit_id)
    });
    out
}
