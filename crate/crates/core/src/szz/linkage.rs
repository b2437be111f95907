use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;

use super::{BugLinkage, IssueRecord};
use crate::vcs::CommitRecord;
use crate::{Error, Result};

/// An issue-id extraction pattern.
///
/// Either a template containing a literal `{id}` placeholder (everything
/// else matched verbatim, case-insensitively, with flexible whitespace), or
/// a regular expression with a named `id` group or a first capture group.
#[derive(Debug, Clone)]
pub struct IdPattern {
    source: String,
    regex: Regex,
}

impl IdPattern {
    pub fn new(pattern: &str) -> Result<Self> {
        let malformed = |reason: String| Error::Pattern {
            pattern: pattern.to_string(),
            reason,
        };
        let expr = if pattern.contains("{id}") {
            let parts: Vec<&str> = pattern.split("{id}").collect();
            if parts.len() != 2 {
                return Err(malformed("template must contain exactly one {id}".into()));
            }
            let literal = |s: &str| {
                s.split_whitespace()
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"\s*")
            };
            let lead_ws = if parts[0].ends_with(char::is_whitespace) { r"\s*" } else { "" };
            format!(
                r"(?i){}{}(?P<id>[A-Za-z0-9][A-Za-z0-9_.-]*){}",
                literal(parts[0]),
                lead_ws,
                literal(parts[1])
            )
        } else {
            pattern.to_string()
        };
        let regex = Regex::new(&expr).map_err(|e| malformed(e.to_string()))?;
        if regex.captures_len() < 2 {
            return Err(malformed("pattern has no capture group for the issue id".into()));
        }
        Ok(Self {
            source: pattern.to_string(),
            regex,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Every issue id mentioned in `message`.
    pub fn extract<'s, 'm>(&'s self, message: &'m str) -> impl Iterator<Item = &'m str> + use<'s, 'm> {
        self.regex.captures_iter(message).filter_map(|c| {
            c.name("id")
                .or_else(|| c.get(1))
                .map(|m| m.as_str())
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinkOptions {
    /// Skip merge commits when looking for BFCs.
    pub skip_merges: bool,
}

/// Links every issue to the commits whose message mentions its id.
///
/// Issues without any matching commit yield no linkage. Duplicate commit or
/// issue ids in the inputs are an error.
pub fn link_issues(
    commits: &[CommitRecord],
    issues: &[IssueRecord],
    patterns: &[IdPattern],
    options: &LinkOptions,
) -> Result<Vec<BugLinkage>> {
    check_unique("commit", commits.iter().map(|c| c.id.as_str()))?;
    check_unique("issue", issues.iter().map(|i| i.issue_id.as_str()))?;
    let known: BTreeSet<&str> = issues.iter().map(|i| i.issue_id.as_str()).collect();
    let mut bfcs: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for commit in commits {
        if options.skip_merges && commit.is_merge() {
            continue;
        }
        let mut mentioned: BTreeSet<&str> = BTreeSet::new();
        for pattern in patterns {
            for raw in pattern.extract(&commit.message) {
                let id = raw.trim_start_matches('#');
                if let Some(&issue) = known.get(id) {
                    mentioned.insert(issue);
                }
            }
        }
        for issue in mentioned {
            bfcs.entry(issue).or_default().push(commit.id.clone());
        }
    }
    Ok(bfcs
        .into_iter()
        .map(|(issue, ids)| BugLinkage::new(issue, ids))
        .collect())
}

fn check_unique<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            dups.insert(id.to_string());
        }
    }
    if dups.is_empty() {
        Ok(())
    } else {
        Err(Error::Duplicate {
            kind,
            ids: dups.into_iter().collect(),
        })
    }
}
