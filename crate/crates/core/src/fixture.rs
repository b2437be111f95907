//! Deterministic demo corpus: a small repository with injected and later
//! fixed bugs, plus the matching issue export, review data and labels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curation::{LabelRequest, LabelStore, RuleCatalog, Verdict};
use crate::pipeline::PipelineConfig;
use crate::szz::IssueRecord;
use crate::time::{format_timestamp, parse_timestamp, Timestamp};
use crate::vcs::builder::RepoBuilder;
use crate::{Error, Result};

const HOUR: i64 = 3_600;
const DAY: i64 = 86_400;
const DEVELOPERS: [&str; 6] = ["ana", "ben", "chloe", "dev", "eli", "fay"];
const FILES: [&str; 12] = [
    "core/engine.py",
    "core/rules.py",
    "core/state.py",
    "net/client.py",
    "net/server.py",
    "net/codec.py",
    "ui/views.py",
    "ui/forms.py",
    "ui/theme.py",
    "storage/db.py",
    "storage/cache.py",
    "storage/schema.py",
];

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub seed: u64,
    /// Length of the history in months.
    pub months: u32,
    pub start: Timestamp,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            months: 18,
            start: parse_timestamp("2020-01-06T09:00:00Z").expect("valid date"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoCorpus {
    pub root: PathBuf,
    pub config: PipelineConfig,
    pub issues: Vec<IssueRecord>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub commits: usize,
}

struct Bug {
    path: &'static str,
    line: String,
    introduced: Timestamp,
    due: Timestamp,
}

struct Generator {
    rng: ChaCha8Rng,
    counter: u64,
    files: BTreeMap<&'static str, Vec<String>>,
}

impl Generator {
    fn line(&mut self) -> String {
        self.counter += 1;
        let f = self.rng.random_range(0..1000);
        format!("x{} = step({}, {})", self.counter, self.counter % 17, f)
    }

    fn content(&self, path: &str) -> String {
        let mut s = self.files[path].join("\n");
        s.push('\n');
        s
    }
}

fn email(dev: &str) -> String {
    format!("{dev}@example.org")
}

fn verdict_of(issue: u32) -> Verdict {
    match issue % 7 {
        3 => Verdict::Extrinsic,
        5 => Verdict::Mislabeled,
        _ => Verdict::Intrinsic,
    }
}

/// Writes the corpus under `root` (repo/, issues.csv, reviews.csv,
/// labels.ndjson) and returns a config whose output is `root/out`.
pub fn demo_corpus(root: &Path, options: &DemoOptions) -> Result<DemoCorpus> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let repo_dir = root.join("repo");
    let mut builder = RepoBuilder::init(&repo_dir)?;
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(options.seed),
        counter: 0,
        files: BTreeMap::new(),
    };
    for path in FILES {
        let lines = (0..20).map(|_| g.line()).collect();
        g.files.insert(path, lines);
    }
    let initial: Vec<(String, String)> = FILES.iter().map(|p| (p.to_string(), g.content(p))).collect();
    let changes: Vec<(&str, Option<&str>)> = initial.iter().map(|(p, c)| (p.as_str(), Some(c.as_str()))).collect();
    let mut t = options.start;
    builder.commit("main", &email("ana"), t, "Initial import", &changes)?;
    let mut commit_times: Vec<(String, Timestamp, &str)> = Vec::new();
    let end = crate::time::add_months(options.start, options.months);

    let mut pending: Vec<Bug> = Vec::new();
    let mut issues = Vec::new();
    let mut verdicts = BTreeMap::new();
    let mut next_issue = 1u32;
    loop {
        t += g.rng.random_range(6 * HOUR..3 * DAY);
        if t >= end {
            break;
        }
        let dev = *DEVELOPERS.choose(&mut g.rng).expect("developers");
        let due = pending.iter().position(|b| b.due <= t);
        let (message, touched) = if let Some(i) = due {
            let bug = pending.remove(i);
            let lines = g.files.get_mut(bug.path).expect("known file");
            let Some(at) = lines.iter().position(|l| *l == bug.line) else {
                continue;
            };
            let issue = next_issue;
            next_issue += 1;
            let replacement = g.line();
            let lines = g.files.get_mut(bug.path).expect("known file");
            lines[at] = replacement;
            if g.rng.random_bool(0.3) && lines.len() > 1 {
                let other = g.rng.random_range(0..lines.len());
                if other != at {
                    g.counter += 1;
                    lines[other] = format!("y{} = guard(x)", g.counter);
                }
            }
            let reported = (t - DAY).max(bug.introduced + HOUR);
            issues.push(IssueRecord {
                issue_id: issue.to_string(),
                reported_time: Some(reported),
                title: format!("Wrong result in {}", bug.path),
                description: format!("Observed a failure in {} after recent changes.", bug.path),
                reporter: email(DEVELOPERS[issue as usize % DEVELOPERS.len()]),
            });
            verdicts.insert(issue.to_string(), verdict_of(issue));
            (format!("Fix {} handling\n\nCloses-Bug: #{issue}\n", bug.path), vec![bug.path])
        } else {
            let nfiles = if g.rng.random_bool(0.1) {
                g.rng.random_range(4..9)
            } else {
                g.rng.random_range(1..3)
            };
            let paths: Vec<&'static str> = FILES.choose_multiple(&mut g.rng, nfiles).copied().collect();
            let mut added = 0usize;
            let mut fresh: Vec<(&'static str, String)> = Vec::new();
            for &path in &paths {
                let n = (g.rng.random::<f64>().powi(3) * 80.0).round() as usize + 1;
                let at = g.rng.random_range(0..=g.files[path].len());
                let new: Vec<String> = (0..n).map(|_| g.line()).collect();
                fresh.extend(new.iter().map(|l| (path, l.clone())));
                let lines = g.files.get_mut(path).expect("known file");
                lines.splice(at..at, new);
                added += n;
            }
            let eta = -3.2 + 0.9 * (added as f64).ln();
            if g.rng.random_bool(1.0 / (1.0 + (-eta).exp())) {
                let (path, line) = fresh.choose(&mut g.rng).cloned().expect("added lines");
                pending.push(Bug {
                    path,
                    line,
                    introduced: t,
                    due: t + g.rng.random_range(5 * DAY..60 * DAY),
                });
            }
            (format!("Update {}", paths.join(", ")), paths)
        };
        let contents: Vec<(&str, String)> = touched.iter().map(|p| (*p, g.content(p))).collect();
        let changes: Vec<(&str, Option<&str>)> = contents.iter().map(|(p, c)| (*p, Some(c.as_str()))).collect();
        let id = builder.commit("main", &email(dev), t, &message, &changes)?;
        commit_times.push((id, t, dev));
    }

    let issues_path = root.join("issues.csv");
    let mut w = csv::Writer::from_path(&issues_path)?;
    for issue in &issues {
        w.serialize(issue)?;
    }
    w.flush().map_err(|e| Error::io(&issues_path, e))?;

    let reviews_path = root.join("reviews.csv");
    let mut w = csv::Writer::from_path(&reviews_path)?;
    w.write_record([
        "change_id",
        "created_time",
        "approved_time",
        "revisions",
        "voters",
        "human_nonowner_comments",
        "reviewers",
    ])?;
    for (id, t, dev) in &commit_times {
        let others: Vec<&str> = DEVELOPERS.iter().copied().filter(|d| d != dev).collect();
        let k = g.rng.random_range(1..=3);
        let reviewers: Vec<String> = others.choose_multiple(&mut g.rng, k).map(|d| email(d)).collect();
        let created = t - g.rng.random_range(HOUR..2 * DAY);
        let approved = created + g.rng.random_range(HOUR..6 * DAY);
        w.write_record([
            id.clone(),
            format_timestamp(created),
            format_timestamp(approved),
            g.rng.random_range(1..6u32).to_string(),
            reviewers.join(";"),
            g.rng.random_range(0..12u32).to_string(),
            reviewers.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&reviews_path, e))?;

    let labels_path = root.join("labels.ndjson");
    if labels_path.exists() {
        std::fs::remove_file(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    }
    let mut store = LabelStore::open(&labels_path, issues.clone(), RuleCatalog::standard())?;
    for (issue, &verdict) in &verdicts {
        let rule = match verdict {
            Verdict::Intrinsic => "intrinsic-1",
            Verdict::Extrinsic => "extrinsic-1",
            Verdict::Mislabeled => "mislabeled-2",
        };
        for rater in ["rater-a", "rater-b"] {
            let mut req = LabelRequest::new(issue, rater, verdict, rule);
            req.labeled_time = Some(options.start);
            store.record_label(req)?;
        }
    }

    let config = PipelineConfig {
        repo: repo_dir,
        issues: issues_path,
        reviews: Some(reviews_path),
        labels: Some(labels_path),
        output: root.join("out"),
        ..PipelineConfig::default()
    };
    Ok(DemoCorpus {
        root: root.to_path_buf(),
        config,
        issues,
        verdicts,
        commits: commit_times.len() + 1,
    })
}
