use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize};

use crate::time::{self, days_between, Timestamp};
use crate::{Error, Result};

/// Code-review data for one change, ingested from CSV or newline-JSON.
/// In CSV, `voters` and `reviewers` are `;`-separated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub change_id: String,
    #[serde(with = "time::iso8601")]
    pub created_time: Timestamp,
    #[serde(with = "time::iso8601")]
    pub approved_time: Timestamp,
    pub revisions: u32,
    #[serde(deserialize_with = "identity_set", default)]
    pub voters: BTreeSet<String>,
    pub human_nonowner_comments: u32,
    #[serde(deserialize_with = "identity_set", default)]
    pub reviewers: BTreeSet<String>,
}

fn identity_set<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeSet<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<String>),
        Text(String),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::List(v) => v.into_iter().filter(|s| !s.is_empty()).collect(),
        Raw::Text(t) => t
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReviewMetrics {
    pub nrev: u32,
    pub app: usize,
    pub hcmt: u32,
    pub rtime: f64,
}

pub fn review_metrics(record: &ReviewRecord) -> Result<ReviewMetrics> {
    if record.approved_time < record.created_time {
        return Err(Error::InvalidReview {
            change_id: record.change_id.clone(),
            reason: "approved before it was created".into(),
        });
    }
    if record.revisions < 1 {
        return Err(Error::InvalidReview {
            change_id: record.change_id.clone(),
            reason: "a review has at least one revision".into(),
        });
    }
    Ok(ReviewMetrics {
        nrev: record.revisions,
        app: record.voters.len(),
        hcmt: record.human_nonowner_comments,
        rtime: days_between(record.created_time, record.approved_time),
    })
}
