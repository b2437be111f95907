//! Change properties for just-in-time models.
//!
//! Six families: Size (`la`, `ld`), Diffusion (`ns`, `nd`, `nf`, `ent`),
//! History (`nuc`, `ndev`, `age`), Author experience (`aexp`, `arexp`,
//! `asexp`, `asawr`), Reviewer experience (`rexp`, `rrexp`, `rsexp`,
//! `rsawr`) and Review (`nrev`, `app`, `hcmt`, `rtime`).

mod history;
mod review;

pub use history::{experience_metrics, history_metrics, Experience, HistoryIndex, HistoryMetrics};
pub use review::{review_metrics, ReviewMetrics, ReviewRecord};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::time::Timestamp;
use crate::vcs::CommitRecord;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    Size,
    Diffusion,
    History,
    AuthorExperience,
    ReviewerExperience,
    Review,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Size,
        Family::Diffusion,
        Family::History,
        Family::AuthorExperience,
        Family::ReviewerExperience,
        Family::Review,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Size => "Size",
            Family::Diffusion => "Diffusion",
            Family::History => "History",
            Family::AuthorExperience => "Author Experience",
            Family::ReviewerExperience => "Reviewer Experience",
            Family::Review => "Review",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Change properties in taxonomy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    La,
    Ld,
    Ns,
    Nd,
    Nf,
    Ent,
    Nuc,
    Ndev,
    Age,
    Aexp,
    Arexp,
    Asexp,
    Asawr,
    Rexp,
    Rrexp,
    Rsexp,
    Rsawr,
    Nrev,
    App,
    Hcmt,
    Rtime,
}

impl Property {
    pub const ALL: [Property; 21] = [
        Property::La,
        Property::Ld,
        Property::Ns,
        Property::Nd,
        Property::Nf,
        Property::Ent,
        Property::Nuc,
        Property::Ndev,
        Property::Age,
        Property::Aexp,
        Property::Arexp,
        Property::Asexp,
        Property::Asawr,
        Property::Rexp,
        Property::Rrexp,
        Property::Rsexp,
        Property::Rsawr,
        Property::Nrev,
        Property::App,
        Property::Hcmt,
        Property::Rtime,
    ];

    pub fn acronym(self) -> &'static str {
        match self {
            Property::La => "la",
            Property::Ld => "ld",
            Property::Ns => "ns",
            Property::Nd => "nd",
            Property::Nf => "nf",
            Property::Ent => "ent",
            Property::Nuc => "nuc",
            Property::Ndev => "ndev",
            Property::Age => "age",
            Property::Aexp => "aexp",
            Property::Arexp => "arexp",
            Property::Asexp => "asexp",
            Property::Asawr => "asawr",
            Property::Rexp => "rexp",
            Property::Rrexp => "rrexp",
            Property::Rsexp => "rsexp",
            Property::Rsawr => "rsawr",
            Property::Nrev => "nrev",
            Property::App => "app",
            Property::Hcmt => "hcmt",
            Property::Rtime => "rtime",
        }
    }

    pub fn from_acronym(s: &str) -> Option<Property> {
        Property::ALL.into_iter().find(|p| p.acronym() == s)
    }

    pub fn family(self) -> Family {
        use Property::*;
        match self {
            La | Ld => Family::Size,
            Ns | Nd | Nf | Ent => Family::Diffusion,
            Nuc | Ndev | Age => Family::History,
            Aexp | Arexp | Asexp | Asawr => Family::AuthorExperience,
            Rexp | Rrexp | Rsexp | Rsawr => Family::ReviewerExperience,
            Nrev | App | Hcmt | Rtime => Family::Review,
        }
    }
}

impl std::fmt::Display for Property {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.acronym())
    }
}

/// All properties of one change plus the outcome label.
///
/// Field names double as CSV column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeMetrics {
    pub change_id: String,
    pub author_time: Timestamp,
    pub la: f64,
    pub ld: f64,
    pub ns: f64,
    pub nd: f64,
    pub nf: f64,
    pub ent: f64,
    pub nuc: f64,
    pub ndev: f64,
    pub age: f64,
    pub aexp: f64,
    pub arexp: f64,
    pub asexp: f64,
    pub asawr: f64,
    pub rexp: f64,
    pub rrexp: f64,
    pub rsexp: f64,
    pub rsawr: f64,
    pub nrev: f64,
    pub app: f64,
    pub hcmt: f64,
    pub rtime: f64,
    pub missing_review: bool,
    pub is_bic: bool,
    #[serde(default)]
    pub period: Option<u32>,
}

impl ChangeMetrics {
    pub fn empty(change_id: impl Into<String>, author_time: Timestamp) -> Self {
        Self {
            change_id: change_id.into(),
            author_time,
            la: 0.0,
            ld: 0.0,
            ns: 0.0,
            nd: 0.0,
            nf: 0.0,
            ent: 0.0,
            nuc: 0.0,
            ndev: 0.0,
            age: 0.0,
            aexp: 0.0,
            arexp: 0.0,
            asexp: 0.0,
            asawr: 0.0,
            rexp: 0.0,
            rrexp: 0.0,
            rsexp: 0.0,
            rsawr: 0.0,
            nrev: 0.0,
            app: 0.0,
            hcmt: 0.0,
            rtime: 0.0,
            missing_review: true,
            is_bic: false,
            period: None,
        }
    }

    pub fn get(&self, p: Property) -> f64 {
        use Property::*;
        match p {
            La => self.la,
            Ld => self.ld,
            Ns => self.ns,
            Nd => self.nd,
            Nf => self.nf,
            Ent => self.ent,
            Nuc => self.nuc,
            Ndev => self.ndev,
            Age => self.age,
            Aexp => self.aexp,
            Arexp => self.arexp,
            Asexp => self.asexp,
            Asawr => self.asawr,
            Rexp => self.rexp,
            Rrexp => self.rrexp,
            Rsexp => self.rsexp,
            Rsawr => self.rsawr,
            Nrev => self.nrev,
            App => self.app,
            Hcmt => self.hcmt,
            Rtime => self.rtime,
        }
    }

    pub fn set(&mut self, p: Property, v: f64) {
        use Property::*;
        let slot = match p {
            La => &mut self.la,
            Ld => &mut self.ld,
            Ns => &mut self.ns,
            Nd => &mut self.nd,
            Nf => &mut self.nf,
            Ent => &mut self.ent,
            Nuc => &mut self.nuc,
            Ndev => &mut self.ndev,
            Age => &mut self.age,
            Aexp => &mut self.aexp,
            Arexp => &mut self.arexp,
            Asexp => &mut self.asexp,
            Asawr => &mut self.asawr,
            Rexp => &mut self.rexp,
            Rrexp => &mut self.rrexp,
            Rsexp => &mut self.rsexp,
            Rsawr => &mut self.rsawr,
            Nrev => &mut self.nrev,
            App => &mut self.app,
            Hcmt => &mut self.hcmt,
            Rtime => &mut self.rtime,
        };
        *slot = v;
    }
}

/// Subsystem of a path: its first component, or `.` for top-level files.
pub fn subsystem_of(path: &str) -> &str {
    match path.split_once('/') {
        Some((head, _)) => head,
        None => ".",
    }
}

/// Directory of a path: everything before the last `/`, or `.`.
pub fn directory_of(path: &str) -> &str {
    match path.rsplit_once('/') {
        Some((dir, _)) => dir,
        None => ".",
    }
}

pub fn size_metrics(commit: &CommitRecord) -> (u64, u64) {
    commit.files.iter().fold((0, 0), |(la, ld), f| {
        (la + f.lines_added as u64, ld + f.lines_deleted as u64)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusion {
    pub ns: usize,
    pub nd: usize,
    pub nf: usize,
    pub ent: f64,
}

/// Distinct subsystems, directories and files, and normalized entropy of
/// modified lines across files.
pub fn diffusion_metrics(commit: &CommitRecord) -> Diffusion {
    let files: BTreeSet<&str> = commit.files.iter().map(|f| f.path.as_str()).collect();
    let dirs: BTreeSet<&str> = files.iter().map(|p| directory_of(p)).collect();
    let subs: BTreeSet<&str> = files.iter().map(|p| subsystem_of(p)).collect();
    let modified: Vec<f64> = commit
        .files
        .iter()
        .map(|f| f.lines_modified() as f64)
        .collect();
    Diffusion {
        ns: subs.len(),
        nd: dirs.len(),
        nf: files.len(),
        ent: normalized_entropy(&modified),
    }
}

/// Shannon entropy (bits) of the shares in `counts`, divided by log2 of
/// the number of entries; 0 for fewer than two entries or a zero total.
pub fn normalized_entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if counts.len() <= 1 || total <= 0.0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum();
    (h / (counts.len() as f64).log2()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeAggregate {
    #[default]
    Mean,
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewerAggregate {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Change age is weighted by `1 / (age / recency_unit_days + 1)`.
    pub recency_unit_days: f64,
    pub age_aggregate: AgeAggregate,
    pub reviewer_aggregate: ReviewerAggregate,
    pub include_merges: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            recency_unit_days: crate::time::DAYS_PER_YEAR,
            age_aggregate: AgeAggregate::Mean,
            reviewer_aggregate: ReviewerAggregate::Mean,
            include_merges: false,
        }
    }
}

/// Computes every property for each (non-merge, unless configured) commit.
/// `bics` marks the outcome label.
pub fn compute_all(
    commits: &[CommitRecord],
    reviews: &BTreeMap<String, ReviewRecord>,
    bics: &BTreeSet<String>,
    config: &MetricsConfig,
) -> Result<Vec<ChangeMetrics>> {
    let index = HistoryIndex::build(commits, reviews);
    commits
        .par_iter()
        .filter(|c| config.include_merges || !c.is_merge())
        .map(|c| change_metrics(c, reviews.get(&c.id), &index, config, bics.contains(&c.id)))
        .collect()
}

pub fn change_metrics(
    commit: &CommitRecord,
    review: Option<&ReviewRecord>,
    index: &HistoryIndex,
    config: &MetricsConfig,
    is_bic: bool,
) -> Result<ChangeMetrics> {
    let mut m = ChangeMetrics::empty(&commit.id, commit.author_time);
    let (la, ld) = size_metrics(commit);
    m.la = la as f64;
    m.ld = ld as f64;
    let d = diffusion_metrics(commit);
    m.ns = d.ns as f64;
    m.nd = d.nd as f64;
    m.nf = d.nf as f64;
    m.ent = d.ent;
    let h = history_metrics(commit, index, config.age_aggregate);
    m.nuc = h.nuc as f64;
    m.ndev = h.ndev as f64;
    m.age = h.age;
    let a = experience_metrics(commit, &commit.author, index, config.recency_unit_days);
    m.aexp = a.exp;
    m.arexp = a.rexp;
    m.asexp = a.sexp;
    m.asawr = a.awr;
    m.is_bic = is_bic;
    if let Some(r) = review {
        m.missing_review = false;
        let rm = review_metrics(r)?;
        m.nrev = rm.nrev as f64;
        m.app = rm.app as f64;
        m.hcmt = rm.hcmt as f64;
        m.rtime = rm.rtime;
        let reviewers: Vec<&String> = r.reviewers.iter().collect();
        if !reviewers.is_empty() {
            let per: Vec<Experience> = reviewers
                .iter()
                .map(|rv| experience_metrics(commit, rv, index, config.recency_unit_days))
                .collect();
            let agg = |f: fn(&Experience) -> f64| {
                let s: f64 = per.iter().map(f).sum();
                match config.reviewer_aggregate {
                    ReviewerAggregate::Mean => s / per.len() as f64,
                    ReviewerAggregate::Sum => s,
                }
            };
            m.rexp = agg(|e| e.exp);
            m.rrexp = agg(|e| e.rexp);
            m.rsexp = agg(|e| e.sexp);
            m.rsawr = agg(|e| e.awr);
        }
    }
    Ok(m)
}

pub fn write_metrics_csv<W: Write>(rows: &[ChangeMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| crate::Error::invalid(e.to_string()))?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<ChangeMetrics>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}
