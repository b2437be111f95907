use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RuleCatalog, Verdict};
use crate::stats::krippendorff_alpha;
use crate::szz::IssueRecord;
use crate::time::{self, Timestamp};
use crate::{Error, Result};

/// One rater's current verdict on one issue. `revision` starts at 1 and
/// grows with every overwrite by the same rater.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub issue_id: String,
    pub rater: String,
    pub verdict: Verdict,
    pub rule_id: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(with = "time::iso8601")]
    pub labeled_time: Timestamp,
    #[serde(default = "first_revision")]
    pub revision: u64,
}

fn first_revision() -> u64 {
    1
}

/// A label submission. `revision` is the revision the caller last saw
/// (0 for "no label yet"); when given, a mismatch is rejected as stale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub issue_id: String,
    pub rater: String,
    pub verdict: Verdict,
    pub rule_id: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub revision: Option<u64>,
    #[serde(default, with = "time::iso8601::option")]
    pub labeled_time: Option<Timestamp>,
}

impl LabelRequest {
    pub fn new(issue_id: &str, rater: &str, verdict: Verdict, rule_id: &str) -> Self {
        Self {
            issue_id: issue_id.into(),
            rater: rater.into(),
            verdict,
            rule_id: rule_id.into(),
            rationale: String::new(),
            revision: None,
            labeled_time: None,
        }
    }
}

/// Consensus verdict recorded after raters discussed a disagreement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub issue_id: String,
    pub verdict: Verdict,
    pub rule_id: String,
    #[serde(default)]
    pub note: String,
    pub resolved_by: String,
    #[serde(with = "time::iso8601")]
    pub resolved_time: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Label(LabelRecord),
    Resolution(Resolution),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub alpha_bug_vs_not: f64,
    /// `None` when no double-rated issue was called a bug by every rater.
    pub alpha_intrinsic_vs_extrinsic: Option<f64>,
    pub double_rated: usize,
    /// Double-rated issues over all issues in the corpus.
    pub coverage: f64,
    pub disagreements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub issue_id: String,
    pub labels: Vec<LabelRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total_issues: usize,
    pub labeled_issues: usize,
    pub double_rated: usize,
    pub open_disagreements: usize,
    pub resolved: usize,
    pub per_rater: BTreeMap<String, usize>,
}

/// Label store backed by an append-only newline-JSON audit log.
///
/// Writers must be serialized by the caller (e.g. behind a mutex); the
/// log records every accepted write so the current state can be replayed.
#[derive(Debug)]
pub struct LabelStore {
    catalog: RuleCatalog,
    issues: BTreeMap<String, IssueRecord>,
    labels: BTreeMap<(String, String), LabelRecord>,
    resolutions: BTreeMap<String, Resolution>,
    audit: Vec<AuditEvent>,
    log: Option<(PathBuf, File)>,
}

impl LabelStore {
    /// In-memory store over the given issue corpus.
    pub fn new(issues: impl IntoIterator<Item = IssueRecord>, catalog: RuleCatalog) -> Self {
        Self {
            catalog,
            issues: issues.into_iter().map(|i| (i.issue_id.clone(), i)).collect(),
            labels: BTreeMap::new(),
            resolutions: BTreeMap::new(),
            audit: Vec::new(),
            log: None,
        }
    }

    /// Opens (or creates) a store whose audit log lives at `path`, replaying
    /// any events already there.
    pub fn open(path: &Path, issues: impl IntoIterator<Item = IssueRecord>, catalog: RuleCatalog) -> Result<Self> {
        let mut store = Self::new(issues, catalog);
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: AuditEvent = serde_json::from_str(&line)
                    .map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), n + 1)))?;
                store.apply(event)?;
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        store.log = Some((path.to_path_buf(), file));
        Ok(store)
    }

    pub fn catalog(&self) -> &RuleCatalog {
        &self.catalog
    }

    pub fn issue(&self, issue_id: &str) -> Option<&IssueRecord> {
        self.issues.get(issue_id)
    }

    pub fn issues(&self) -> impl Iterator<Item = &IssueRecord> {
        self.issues.values()
    }

    pub fn audit(&self) -> &[AuditEvent] {
        &self.audit
    }

    /// Current labels ordered by (issue, rater).
    pub fn labels(&self) -> impl Iterator<Item = &LabelRecord> {
        self.labels.values()
    }

    pub fn label(&self, issue_id: &str, rater: &str) -> Option<&LabelRecord> {
        self.labels.get(&(issue_id.to_string(), rater.to_string()))
    }

    pub fn labels_for<'a>(&'a self, issue_id: &'a str) -> impl Iterator<Item = &'a LabelRecord> + 'a {
        self.labels
            .range((issue_id.to_string(), String::new())..)
            .take_while(move |((i, _), _)| i == issue_id)
            .map(|(_, r)| r)
    }

    pub fn resolution(&self, issue_id: &str) -> Option<&Resolution> {
        self.resolutions.get(issue_id)
    }

    pub fn record_label(&mut self, request: LabelRequest) -> Result<LabelRecord> {
        if !self.issues.contains_key(&request.issue_id) {
            return Err(Error::UnknownIssue(request.issue_id));
        }
        if request.rater.trim().is_empty() {
            return Err(Error::invalid("rater must not be empty"));
        }
        self.catalog.check(request.verdict, &request.rule_id)?;
        let found = self.label(&request.issue_id, &request.rater).map(|r| r.revision);
        if let Some(expected) = request.revision {
            if expected != found.unwrap_or(0) {
                return Err(Error::StaleRevision {
                    issue_id: request.issue_id,
                    rater: request.rater,
                    expected: Some(expected),
                    found,
                });
            }
        }
        let record = LabelRecord {
            issue_id: request.issue_id,
            rater: request.rater,
            verdict: request.verdict,
            rule_id: request.rule_id,
            rationale: request.rationale,
            labeled_time: request.labeled_time.unwrap_or_else(now),
            revision: found.unwrap_or(0) + 1,
        };
        self.commit(AuditEvent::Label(record.clone()))?;
        Ok(record)
    }

    pub fn resolve(
        &mut self,
        issue_id: &str,
        verdict: Verdict,
        rule_id: &str,
        note: &str,
        resolved_by: &str,
    ) -> Result<Resolution> {
        if !self.issues.contains_key(issue_id) {
            return Err(Error::UnknownIssue(issue_id.to_string()));
        }
        self.catalog.check(verdict, rule_id)?;
        let resolution = Resolution {
            issue_id: issue_id.into(),
            verdict,
            rule_id: rule_id.into(),
            note: note.into(),
            resolved_by: resolved_by.into(),
            resolved_time: now(),
        };
        self.commit(AuditEvent::Resolution(resolution.clone()))?;
        Ok(resolution)
    }

    fn commit(&mut self, event: AuditEvent) -> Result<()> {
        if let Some((path, file)) = &mut self.log {
            let mut line = serde_json::to_string(&event)?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(path.clone(), e))?;
        }
        self.apply(event)
    }

    fn apply(&mut self, event: AuditEvent) -> Result<()> {
        match &event {
            AuditEvent::Label(r) => {
                self.catalog.check(r.verdict, &r.rule_id)?;
                self.labels.insert((r.issue_id.clone(), r.rater.clone()), r.clone());
            }
            AuditEvent::Resolution(r) => {
                self.catalog.check(r.verdict, &r.rule_id)?;
                self.resolutions.insert(r.issue_id.clone(), r.clone());
            }
        }
        self.audit.push(event);
        Ok(())
    }

    fn verdicts_by_issue(&self) -> BTreeMap<&str, BTreeMap<&str, Verdict>> {
        let mut out: BTreeMap<&str, BTreeMap<&str, Verdict>> = BTreeMap::new();
        for r in self.labels.values() {
            out.entry(&r.issue_id).or_default().insert(&r.rater, r.verdict);
        }
        out
    }

    /// Issues whose raters disagree and that have not been resolved.
    pub fn disagreements(&self) -> Vec<Disagreement> {
        self.verdicts_by_issue()
            .into_iter()
            .filter(|(issue, v)| {
                !self.resolutions.contains_key(*issue) && v.values().collect::<BTreeSet<_>>().len() > 1
            })
            .map(|(issue, _)| Disagreement {
                issue_id: issue.to_string(),
                labels: self.labels_for(issue).cloned().collect(),
            })
            .collect()
    }

    /// One verdict per labeled issue: the resolution if any, else the
    /// unanimous rater verdict. Open disagreements are an error.
    pub fn final_verdicts(&self) -> Result<BTreeMap<String, Verdict>> {
        let open: Vec<String> = self.disagreements().into_iter().map(|d| d.issue_id).collect();
        if !open.is_empty() {
            return Err(Error::UnresolvedDisagreements(open));
        }
        let mut out: BTreeMap<String, Verdict> = self
            .verdicts_by_issue()
            .into_iter()
            .filter_map(|(issue, v)| v.values().next().map(|&x| (issue.to_string(), x)))
            .collect();
        for r in self.resolutions.values() {
            out.insert(r.issue_id.clone(), r.verdict);
        }
        Ok(out)
    }

    pub fn agreement_report(&self) -> Result<AgreementReport> {
        let by_issue = self.verdicts_by_issue();
        let shared: Vec<(&str, &BTreeMap<&str, Verdict>)> =
            by_issue.iter().filter(|(_, v)| v.len() >= 2).map(|(i, v)| (*i, v)).collect();
        if shared.is_empty() {
            return Err(Error::NoOverlap);
        }
        let raters: BTreeSet<&str> = shared.iter().flat_map(|(_, v)| v.keys().copied()).collect();
        let matrix = |items: &[&BTreeMap<&str, Verdict>], f: fn(Verdict) -> bool| -> Vec<Vec<Option<bool>>> {
            raters
                .iter()
                .map(|r| items.iter().map(|v| v.get(r).map(|&x| f(x))).collect())
                .collect()
        };
        let all: Vec<_> = shared.iter().map(|(_, v)| *v).collect();
        let alpha_bug_vs_not = krippendorff_alpha(&matrix(&all, Verdict::is_bug))?;
        let bugs: Vec<_> = all.iter().copied().filter(|v| v.values().all(|x| x.is_bug())).collect();
        let alpha_intrinsic_vs_extrinsic = if bugs.is_empty() {
            None
        } else {
            Some(krippendorff_alpha(&matrix(&bugs, |v| v == Verdict::Extrinsic))?)
        };
        let coverage = if self.issues.is_empty() {
            0.0
        } else {
            shared.len() as f64 / self.issues.len() as f64
        };
        Ok(AgreementReport {
            alpha_bug_vs_not,
            alpha_intrinsic_vs_extrinsic,
            double_rated: shared.len(),
            coverage,
            disagreements: self.disagreements().into_iter().map(|d| d.issue_id).collect(),
        })
    }

    pub fn progress(&self) -> Progress {
        let by_issue = self.verdicts_by_issue();
        let mut per_rater = BTreeMap::new();
        for r in self.labels.values() {
            *per_rater.entry(r.rater.clone()).or_insert(0) += 1;
        }
        Progress {
            total_issues: self.issues.len(),
            labeled_issues: by_issue.len(),
            double_rated: by_issue.values().filter(|v| v.len() >= 2).count(),
            open_disagreements: self.disagreements().len(),
            resolved: self.resolutions.len(),
            per_rater,
        }
    }

    /// Next issue for `rater`: an open disagreement they took part in, else
    /// the first issue they have not labeled yet.
    pub fn next_task(&self, rater: &str) -> Option<&IssueRecord> {
        let disputed = self
            .disagreements()
            .into_iter()
            .find(|d| d.labels.iter().any(|l| l.rater == rater));
        if let Some(d) = disputed {
            return self.issues.get(&d.issue_id);
        }
        self.issues.values().find(|i| self.label(&i.issue_id, rater).is_none())
    }

    /// Writes current labels as newline-JSON.
    pub fn export<W: Write>(&self, mut out: W) -> Result<usize> {
        for r in self.labels.values() {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::io("<export>", e))?;
        }
        Ok(self.labels.len())
    }

    /// Imports labels from newline-JSON (`LabelRecord` or `LabelRequest`
    /// objects) or CSV with columns issue_id, rater, verdict, rule_id and
    /// optional rationale and labeled_time. Each row goes through
    /// [`LabelStore::record_label`].
    pub fn import<R: Read>(&mut self, input: R, csv_format: bool) -> Result<usize> {
        let requests: Vec<LabelRequest> = if csv_format {
            csv::Reader::from_reader(input)
                .deserialize()
                .collect::<std::result::Result<_, _>>()?
        } else {
            let mut v = Vec::new();
            for (n, line) in BufReader::new(input).lines().enumerate() {
                let line = line.map_err(|e| Error::io("<import>", e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut req: LabelRequest =
                    serde_json::from_str(&line).map_err(|e| Error::invalid(format!("line {}: {e}", n + 1)))?;
                req.revision = None;
                v.push(req);
            }
            v
        };
        let n = requests.len();
        for req in requests {
            self.record_label(req)?;
        }
        Ok(n)
    }
}

fn now() -> Timestamp {
    chrono::Utc::now().timestamp()
}
