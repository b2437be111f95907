//! Human labels, the classification rule catalog, agreement, and the
//! filtering and period stratification that produce the modelling dataset.

mod filter;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use filter::{
    apply_filters, filter_changes, filter_periods, stratify_periods, write_filter_ledger, ChangeFilterResult, FilterOptions, FilteredDataset, Partition, Period, Stage,
    StageCount,
};
pub use store::{
    AgreementReport, AuditEvent, Disagreement, LabelRecord, LabelRequest, LabelStore, Progress, Resolution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Intrinsic,
    Extrinsic,
    Mislabeled,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Intrinsic, Verdict::Extrinsic, Verdict::Mislabeled];

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Intrinsic => "intrinsic",
            Verdict::Extrinsic => "extrinsic",
            Verdict::Mislabeled => "mislabeled",
        }
    }

    pub fn is_bug(self) -> bool {
        self != Verdict::Mislabeled
    }

    /// Sections whose rules may justify this verdict.
    pub fn sections(self) -> &'static [Section] {
        match self {
            Verdict::Mislabeled => &[Section::Mislabeled],
            Verdict::Extrinsic => &[Section::Extrinsic],
            Verdict::Intrinsic => &[Section::Intrinsic, Section::Bug],
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intrinsic" => Ok(Verdict::Intrinsic),
            "extrinsic" => Ok(Verdict::Extrinsic),
            "mislabeled" | "not_a_bug" | "not-a-bug" => Ok(Verdict::Mislabeled),
            other => Err(Error::invalid(format!("unknown verdict `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Mislabeled,
    Bug,
    Extrinsic,
    Intrinsic,
}

impl Section {
    pub fn name(self) -> &'static str {
        match self {
            Section::Mislabeled => "mislabeled",
            Section::Bug => "bug",
            Section::Extrinsic => "extrinsic",
            Section::Intrinsic => "intrinsic",
        }
    }

    /// Lead-in sentence shown above the section's rules.
    pub fn heading(self) -> &'static str {
        match self {
            Section::Mislabeled => "An issue is classified as not a bug report (Mislabeled) if ...",
            Section::Bug => "An issue is classified as bug report if ...",
            Section::Extrinsic => "A bug report is classified as extrinsic if ...",
            Section::Intrinsic => "A bug report is classified as intrinsic if ...",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub rule_id: String,
    pub section: Section,
    pub number: u32,
    pub text: String,
}

/// The two-step classification protocol: first bug vs. not a bug, then
/// intrinsic vs. extrinsic for bugs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCatalog {
    pub rules: Vec<Rule>,
}

const RULES: &[(Section, &str)] = &[
    (
        Section::Mislabeled,
        "It reports a bug in test files. We assume that these bugs are caused by how developers understand and test the code. Thus, there is no change introducing buggy code to source code of the project.",
    ),
    (
        Section::Mislabeled,
        "It reports a clean up in the source code that does not interfere with the performance of the software.",
    ),
    (Section::Mislabeled, "It reports a misspelling or typo in the inline comments."),
    (Section::Mislabeled, "It reports a change in the source code to prevent future bugs."),
    (Section::Mislabeled, "The report has discordance in the comments between developers."),
    (Section::Mislabeled, "The report does not have a BFC."),
    (Section::Bug, "It reports a misspelling or typo in the source code."),
    (Section::Bug, "It reports that a previous change to the source code caused the bug."),
    (
        Section::Bug,
        "It reports a buggy functionality implemented that should be known at the time of coding.",
    ),
    (
        Section::Bug,
        "It reports an omission in the original code that should be considered at the time of coding.",
    ),
    (
        Section::Extrinsic,
        "It reports a bug caused by a change in the environment where the software is used.",
    ),
    (Section::Extrinsic, "It reports a bug because requirements have changed."),
    (
        Section::Extrinsic,
        "It reports a bug caused by an external change to the VCS of the project.",
    ),
    (Section::Extrinsic, "It reports a bug in an external library used by the project."),
    (Section::Intrinsic, "There is no evidence to be classified as an extrinsic bug."),
];

impl Default for RuleCatalog {
    fn default() -> Self {
        Self::standard()
    }
}

impl RuleCatalog {
    /// Rule ids are `<section>-<n>`, e.g. `extrinsic-1`.
    pub fn standard() -> Self {
        let mut rules: Vec<Rule> = Vec::new();
        for &(section, text) in RULES {
            let number = rules.iter().filter(|r| r.section == section).count() as u32 + 1;
            rules.push(Rule {
                rule_id: format!("{}-{number}", section.name()),
                section,
                number,
                text: text.to_string(),
            });
        }
        Self { rules }
    }

    pub fn get(&self, rule_id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    pub fn section(&self, section: Section) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(move |r| r.section == section)
    }

    /// Checks that `rule_id` exists and may justify `verdict`.
    pub fn check(&self, verdict: Verdict, rule_id: &str) -> Result<&Rule> {
        let rule = self.get(rule_id).ok_or_else(|| Error::UnknownRule(rule_id.to_string()))?;
        if !verdict.sections().contains(&rule.section) {
            return Err(Error::RuleMismatch {
                rule_id: rule_id.to_string(),
                section: rule.section.name().to_string(),
                verdict: verdict.name().to_string(),
            });
        }
        Ok(rule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shape() {
        let c = RuleCatalog::standard();
        assert_eq!(c.section(Section::Mislabeled).count(), 6);
        assert_eq!(c.section(Section::Bug).count(), 4);
        assert_eq!(c.section(Section::Extrinsic).count(), 4);
        assert_eq!(c.section(Section::Intrinsic).count(), 1);
        assert_eq!(
            c.get("mislabeled-3").unwrap().text,
            "It reports a misspelling or typo in the inline comments."
        );
        let ids: std::collections::BTreeSet<_> = c.rules.iter().map(|r| &r.rule_id).collect();
        assert_eq!(ids.len(), c.rules.len());
    }

    #[test]
    fn verdict_rule_consistency() {
        let c = RuleCatalog::standard();
        assert!(c.check(Verdict::Extrinsic, "extrinsic-1").is_ok());
        assert!(c.check(Verdict::Intrinsic, "intrinsic-1").is_ok());
        assert!(c.check(Verdict::Intrinsic, "bug-2").is_ok());
        assert!(c.check(Verdict::Mislabeled, "mislabeled-6").is_ok());
        assert!(matches!(
            c.check(Verdict::Intrinsic, "mislabeled-1"),
            Err(Error::RuleMismatch { .. })
        ));
        assert!(matches!(c.check(Verdict::Extrinsic, "bug-1"), Err(Error::RuleMismatch { .. })));
        assert!(matches!(c.check(Verdict::Extrinsic, "extrinsic-9"), Err(Error::UnknownRule(_))));
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!("Extrinsic".parse::<Verdict>().unwrap(), Verdict::Extrinsic);
        assert_eq!("not-a-bug".parse::<Verdict>().unwrap(), Verdict::Mislabeled);
        assert!("maybe".parse::<Verdict>().is_err());
    }
}
