use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::metrics::ChangeMetrics;
use crate::szz::BugLinkage;
use crate::time::{add_months, start_of_day, Timestamp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    F0,
    F1,
    F2,
    F3,
    F4,
    F5,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::F0, Stage::F1, Stage::F2, Stage::F3, Stage::F4, Stage::F5];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: Stage,
    pub filter: String,
    pub issues: usize,
    pub bics: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    /// Changes with `la + ld` at or above this are dropped.
    pub churn_threshold: f64,
    /// Changes touching at least this many files are dropped.
    pub files_threshold: f64,
    pub drop_mislabeled: bool,
    pub period_months: u32,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            churn_threshold: 10_000.0,
            files_threshold: 100.0,
            drop_mislabeled: false,
            period_months: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    /// 1-based.
    pub index: u32,
    pub start: Timestamp,
    /// Exclusive.
    pub end: Timestamp,
    pub rows: usize,
    pub bics: usize,
}

/// Fixed-width calendar windows anchored at midnight of the earliest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub months: u32,
    pub origin: Timestamp,
    pub periods: Vec<Period>,
    pub assignment: BTreeMap<String, u32>,
    /// Rows in the trailing incomplete window.
    pub dropped: Vec<String>,
}

impl Partition {
    pub fn period_of(&self, change_id: &str) -> Option<u32> {
        self.assignment.get(change_id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredDataset {
    pub stage_counts: Vec<StageCount>,
    /// Surviving rows with final `is_bic` and `period`.
    pub rows: Vec<ChangeMetrics>,
    pub partition: Partition,
    /// Linked issues that had no verdict and were treated as intrinsic.
    pub assumed_intrinsic: Vec<String>,
}

/// Splits rows into consecutive `months`-wide windows starting at the
/// earliest row's date. A window counts only if the data reaches its end;
/// rows past the last complete window are dropped.
pub fn stratify_periods(rows: &[ChangeMetrics], months: u32) -> Result<Partition> {
    if months == 0 {
        return Err(Error::invalid("period width must be at least one month"));
    }
    let Some(min) = rows.iter().map(|r| r.author_time).min() else {
        return Ok(Partition {
            months,
            origin: 0,
            periods: vec![],
            assignment: BTreeMap::new(),
            dropped: vec![],
        });
    };
    let max = rows.iter().map(|r| r.author_time).max().unwrap_or(min);
    let origin = start_of_day(min);
    let mut bounds = vec![origin];
    loop {
        let k = bounds.len() as u32;
        let end = add_months(origin, k * months);
        if end > max {
            break;
        }
        bounds.push(end);
    }
    let mut periods: Vec<Period> = bounds
        .windows(2)
        .enumerate()
        .map(|(i, w)| Period {
            index: i as u32 + 1,
            start: w[0],
            end: w[1],
            rows: 0,
            bics: 0,
        })
        .collect();
    let mut assignment = BTreeMap::new();
    let mut dropped = Vec::new();
    for r in rows {
        let slot = bounds.partition_point(|&b| b <= r.author_time);
        if slot >= 1 && slot < bounds.len() {
            let p = &mut periods[slot - 1];
            p.rows += 1;
            p.bics += r.is_bic as usize;
            assignment.insert(r.change_id.clone(), p.index);
        } else {
            dropped.push(r.change_id.clone());
        }
    }
    dropped.sort();
    Ok(Partition {
        months,
        origin,
        periods,
        assignment,
        dropped,
    })
}

/// Runs the filtering ledger:
///
/// * F0 every linked issue and every traced BIC present in `rows`
/// * F1 unlink BICs of extrinsic issues (and mislabeled ones if asked)
/// * F2 drop changes with `la + ld >= churn_threshold`
/// * F3 drop changes with `nf >= files_threshold`
/// * F4 drop changes that add no lines
/// * F5 drop changes outside complete periods
///
/// The issue count is fixed after F1; F2..F5 remove changes only.
pub fn apply_filters(
    rows: &[ChangeMetrics],
    linkages: &[BugLinkage],
    labels: &BTreeMap<String, Verdict>,
    options: &FilterOptions,
) -> Result<FilteredDataset> {
    filter_periods(filter_changes(rows, linkages, labels, options), options.period_months)
}

/// Ledger stages F0..F4 before period stratification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeFilterResult {
    pub stage_counts: Vec<StageCount>,
    /// Surviving rows with final `is_bic`; `period` is unset.
    pub rows: Vec<ChangeMetrics>,
    pub assumed_intrinsic: Vec<String>,
}

/// Runs F0..F4 of the ledger.
pub fn filter_changes(
    rows: &[ChangeMetrics],
    linkages: &[BugLinkage],
    labels: &BTreeMap<String, Verdict>,
    options: &FilterOptions,
) -> ChangeFilterResult {
    let mut assumed_intrinsic = Vec::new();
    let verdict_of = |issue: &str, assumed: &mut Vec<String>| match labels.get(issue) {
        Some(&v) => v,
        None => {
            assumed.push(issue.to_string());
            Verdict::Intrinsic
        }
    };
    let present: BTreeSet<&str> = rows.iter().map(|r| r.change_id.as_str()).collect();
    let bics_of = |links: &[&BugLinkage]| -> BTreeSet<String> {
        links
            .iter()
            .flat_map(|l| l.retained_ids())
            .filter(|id| present.contains(id))
            .map(str::to_string)
            .collect()
    };

    let all: Vec<&BugLinkage> = linkages.iter().collect();
    let kept: Vec<&BugLinkage> = linkages
        .iter()
        .filter(|l| match verdict_of(&l.issue_id, &mut assumed_intrinsic) {
            Verdict::Intrinsic => true,
            Verdict::Extrinsic => false,
            Verdict::Mislabeled => !options.drop_mislabeled,
        })
        .collect();
    if !assumed_intrinsic.is_empty() {
        log::warn!(
            "{} linked issues have no verdict and are treated as intrinsic",
            assumed_intrinsic.len()
        );
    }
    let issues = kept.len();
    let bics = bics_of(&kept);

    let mut counts = vec![
        StageCount {
            stage: Stage::F0,
            filter: "Issue-VCS dataset".into(),
            issues: all.len(),
            bics: bics_of(&all).len(),
        },
        StageCount {
            stage: Stage::F1,
            filter: if options.drop_mislabeled {
                "Extrinsic and mislabeled bugs".into()
            } else {
                "Extrinsic bugs".into()
            },
            issues,
            bics: bics.len(),
        },
    ];

    let mut current: Vec<ChangeMetrics> = rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.is_bic = bics.contains(&r.change_id);
            r.period = None;
            r
        })
        .collect();
    let count_bics = |rows: &[ChangeMetrics]| rows.iter().filter(|r| r.is_bic).count();

    let steps: [(Stage, &str, Box<dyn Fn(&ChangeMetrics) -> bool>); 3] = [
        (
            Stage::F2,
            "Too much churn",
            Box::new(|r| r.la + r.ld < options.churn_threshold),
        ),
        (Stage::F3, "Too many files", Box::new(|r| r.nf < options.files_threshold)),
        (Stage::F4, "No lines added", Box::new(|r| r.la > 0.0)),
    ];
    for (stage, name, keep) in steps {
        current.retain(|r| keep(r));
        counts.push(StageCount {
            stage,
            filter: name.into(),
            issues,
            bics: count_bics(&current),
        });
    }

    assumed_intrinsic.sort();
    assumed_intrinsic.dedup();
    ChangeFilterResult {
        stage_counts: counts,
        rows: current,
        assumed_intrinsic,
    }
}

/// F5: stratifies the F4 survivors and drops rows outside complete periods.
pub fn filter_periods(changes: ChangeFilterResult, months: u32) -> Result<FilteredDataset> {
    let ChangeFilterResult {
        mut stage_counts,
        rows: mut current,
        assumed_intrinsic,
    } = changes;
    let issues = stage_counts.last().map_or(0, |c| c.issues);
    let partition = stratify_periods(&current, months)?;
    current.retain_mut(|r| {
        r.period = partition.period_of(&r.change_id);
        r.period.is_some()
    });
    stage_counts.push(StageCount {
        stage: Stage::F5,
        filter: "Period".into(),
        issues,
        bics: current.iter().filter(|r| r.is_bic).count(),
    });
    Ok(FilteredDataset {
        stage_counts,
        rows: current,
        partition,
        assumed_intrinsic,
    })
}

/// Writes the ledger with columns `#,Filter,Issues,BICs`.
pub fn write_filter_ledger<W: Write>(counts: &[StageCount], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["#", "Filter", "Issues", "BICs"])?;
    for c in counts {
        w.write_record([
            format!("{:?}", c.stage),
            c.filter.clone(),
            c.issues.to_string(),
            c.bics.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ledger>", e))?;
    Ok(())
}
