use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{subsystem_of, AgeAggregate, ReviewRecord};
use crate::time::{days_between, Timestamp};
use crate::vcs::CommitRecord;

#[derive(Debug, Clone)]
struct Touch {
    time: Timestamp,
    change: usize,
    author: usize,
}

#[derive(Debug, Clone)]
struct Participation {
    time: Timestamp,
    subsystems: Vec<usize>,
}

/// Time-ordered record of who changed what, built once from the mined
/// history. Every query only looks at entries strictly earlier than the
/// queried change, so adding later commits never changes earlier metrics.
#[derive(Debug, Default)]
pub struct HistoryIndex {
    interner: HashMap<String, usize>,
    files: HashMap<String, Vec<Touch>>,
    actors: HashMap<usize, Vec<Participation>>,
    subsystems: HashMap<usize, Vec<(Timestamp, usize)>>,
}

impl HistoryIndex {
    pub fn build(commits: &[CommitRecord], reviews: &BTreeMap<String, ReviewRecord>) -> Self {
        let mut order: Vec<&CommitRecord> = commits.iter().collect();
        // stable: equal timestamps keep history order
        order.sort_by_key(|c| c.author_time);
        let mut index = HistoryIndex::default();
        for commit in order {
            let change = index.intern(&commit.id);
            let author = index.intern(&commit.author);
            let t = commit.author_time;
            let mut subs = BTreeSet::new();
            for f in &commit.files {
                if let Some(old) = &f.old_path {
                    if old != &f.path {
                        let inherited = index.files.get(old).cloned().unwrap_or_default();
                        index.files.entry(f.path.clone()).or_default().extend(inherited);
                    }
                }
                index.files.entry(f.path.clone()).or_default().push(Touch {
                    time: t,
                    change,
                    author,
                });
                subs.insert(subsystem_of(&f.path).to_string());
            }
            let subs: Vec<usize> = subs.iter().map(|s| index.intern(s)).collect();
            for &s in &subs {
                index.subsystems.entry(s).or_default().push((t, change));
            }
            let mut actors = BTreeSet::from([author]);
            if let Some(r) = reviews.get(&commit.id) {
                for rv in &r.reviewers {
                    actors.insert(index.intern(rv));
                }
            }
            for a in actors {
                index.actors.entry(a).or_default().push(Participation {
                    time: t,
                    subsystems: subs.clone(),
                });
            }
        }
        for touches in index.files.values_mut() {
            touches.sort_by_key(|t| t.time);
        }
        index
    }

    fn intern(&mut self, s: &str) -> usize {
        let next = self.interner.len();
        *self.interner.entry(s.to_string()).or_insert(next)
    }

    fn lookup(&self, s: &str) -> Option<usize> {
        self.interner.get(s).copied()
    }

    fn touches_before(&self, path: &str, t: Timestamp) -> &[Touch] {
        match self.files.get(path) {
            Some(v) => &v[..v.partition_point(|x| x.time < t)],
            None => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryMetrics {
    pub nuc: usize,
    pub ndev: usize,
    /// Days since the modified files were last changed, aggregated over files.
    pub age: f64,
}

pub fn history_metrics(commit: &CommitRecord, index: &HistoryIndex, aggregate: AgeAggregate) -> HistoryMetrics {
    let t = commit.author_time;
    let mut changes = BTreeSet::new();
    let mut devs = BTreeSet::new();
    let mut ages = Vec::new();
    for f in &commit.files {
        let prior = index.touches_before(f.pre_image_path(), t);
        for touch in prior {
            changes.insert(touch.change);
            devs.insert(touch.author);
        }
        if let Some(last) = prior.iter().map(|x| x.time).max() {
            ages.push(days_between(last, t));
        }
    }
    let age = if ages.is_empty() {
        0.0
    } else {
        match aggregate {
            AgeAggregate::Mean => ages.iter().sum::<f64>() / ages.len() as f64,
            AgeAggregate::Max => ages.iter().copied().fold(f64::MIN, f64::max),
            AgeAggregate::Min => ages.iter().copied().fold(f64::MAX, f64::min),
        }
    };
    HistoryMetrics {
        nuc: changes.len(),
        ndev: devs.len(),
        age,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Experience {
    /// Prior changes the actor participated in.
    pub exp: f64,
    /// `exp` weighted by recency.
    pub rexp: f64,
    /// Prior changes to this change's subsystems the actor participated in.
    pub sexp: f64,
    /// `sexp` over all prior changes to those subsystems.
    pub awr: f64,
}

pub fn experience_metrics(
    commit: &CommitRecord,
    actor: &str,
    index: &HistoryIndex,
    recency_unit_days: f64,
) -> Experience {
    let t = commit.author_time;
    let Some(actor) = index.lookup(actor) else {
        return Experience::default();
    };
    let Some(parts) = index.actors.get(&actor) else {
        return Experience::default();
    };
    let subs: BTreeSet<usize> = commit
        .files
        .iter()
        .filter_map(|f| index.lookup(subsystem_of(&f.path)))
        .collect();
    let prior: Vec<&Participation> = parts.iter().filter(|p| p.time < t).collect();
    let exp = prior.len() as f64;
    let rexp = prior
        .iter()
        .map(|p| 1.0 / (days_between(p.time, t) / recency_unit_days + 1.0))
        .sum();
    let sexp = prior
        .iter()
        .filter(|p| p.subsystems.iter().any(|s| subs.contains(s)))
        .count() as f64;
    let total: BTreeSet<usize> = subs
        .iter()
        .filter_map(|s| index.subsystems.get(s))
        .flat_map(|v| v.iter().filter(|(time, _)| *time < t).map(|(_, c)| *c))
        .collect();
    let awr = if total.is_empty() {
        0.0
    } else {
        (sexp / total.len() as f64).min(1.0)
    };
    Experience { exp, rexp, sexp, awr }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tests::delta;

    const DAY: i64 = 86_400;

    fn commit(id: &str, author: &str, day: i64, paths: &[&str]) -> CommitRecord {
        CommitRecord {
            id: id.into(),
            author: author.into(),
            author_time: day * DAY,
            commit_time: day * DAY,
            message: String::new(),
            parents: vec![],
            files: paths.iter().map(|p| delta(p, 1, 0)).collect(),
        }
    }

    #[test]
    fn empty_history() {
        let c = commit("c", "a", 0, &["x/f"]);
        let idx = HistoryIndex::build(std::slice::from_ref(&c), &BTreeMap::new());
        let h = history_metrics(&c, &idx, AgeAggregate::Mean);
        assert_eq!((h.nuc, h.ndev, h.age), (0, 0, 0.0));
        assert_eq!(experience_metrics(&c, "a", &idx, 365.25), Experience::default());
    }

    #[test]
    fn one_file_three_changes_two_authors() {
        let commits = vec![
            commit("c1", "a", 0, &["x/f"]),
            commit("c2", "b", 3, &["x/f"]),
            commit("c3", "a", 5, &["x/f"]),
            commit("now", "c", 15, &["x/f"]),
        ];
        let idx = HistoryIndex::build(&commits, &BTreeMap::new());
        let h = history_metrics(&commits[3], &idx, AgeAggregate::Mean);
        assert_eq!((h.nuc, h.ndev), (3, 2));
        assert!((h.age - 10.0).abs() < 1e-12);
    }

    #[test]
    fn age_is_mean_over_previously_touched_files() {
        let commits = vec![
            commit("c1", "a", 0, &["x/f"]),
            commit("c2", "a", 2, &["x/g"]),
            commit("now", "a", 4, &["x/f", "x/g", "x/new"]),
        ];
        let idx = HistoryIndex::build(&commits, &BTreeMap::new());
        let h = history_metrics(&commits[2], &idx, AgeAggregate::Mean);
        // f: 4 days, g: 2 days; new file is excluded
        assert!((h.age - 3.0).abs() < 1e-12);
        assert_eq!(history_metrics(&commits[2], &idx, AgeAggregate::Max).age, 4.0);
    }

    #[test]
    fn experience_weights_and_awareness() {
        let commits = vec![
            commit("c1", "me", 0, &["nova/a"]),
            commit("c2", "other", 1, &["nova/b"]),
            commit("c3", "me", 2, &["neutron/c"]),
            commit("c4", "other", 3, &["nova/d"]),
            commit("c5", "other", 10, &["nova/e"]),
            commit("now", "me", 10, &["nova/z"]),
        ];
        let idx = HistoryIndex::build(&commits, &BTreeMap::new());
        let e = experience_metrics(&commits[5], "me", &idx, 365.25);
        assert_eq!(e.exp, 2.0);
        let expected_rexp = 1.0 / (10.0 / 365.25 + 1.0) + 1.0 / (8.0 / 365.25 + 1.0);
        assert!((e.rexp - expected_rexp).abs() < 1e-12);
        // nova saw c1, c2, c4 before day 10 (c5 is simultaneous, excluded); me made c1
        assert_eq!(e.sexp, 1.0);
        assert!((e.awr - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn same_day_change_has_unit_recency_weight() {
        let mut commits = vec![commit("c1", "me", 0, &["s/a"]), commit("now", "me", 0, &["s/b"])];
        commits[1].author_time += 60;
        let idx = HistoryIndex::build(&commits, &BTreeMap::new());
        let e = experience_metrics(&commits[1], "me", &idx, 365.25);
        assert_eq!(e.exp, 1.0);
        assert!((e.rexp - 1.0).abs() < 1e-5);
    }

    #[test]
    fn awareness_half() {
        let commits = vec![
            commit("c1", "me", 0, &["s/a"]),
            commit("c2", "x", 1, &["s/b"]),
            commit("c3", "me", 2, &["s/c"]),
            commit("c4", "y", 3, &["s/d"]),
            commit("now", "me", 4, &["s/e"]),
        ];
        let idx = HistoryIndex::build(&commits, &BTreeMap::new());
        assert_eq!(experience_metrics(&commits[4], "me", &idx, 365.25).awr, 0.5);
    }

    #[test]
    fn reviewers_participate() {
        let commits = vec![commit("c1", "a", 0, &["s/a"]), commit("now", "b", 1, &["s/b"])];
        let reviews = BTreeMap::from([(
            "c1".to_string(),
            ReviewRecord {
                change_id: "c1".into(),
                created_time: 0,
                approved_time: 0,
                revisions: 1,
                voters: BTreeSet::new(),
                human_nonowner_comments: 0,
                reviewers: BTreeSet::from(["r".to_string()]),
            },
        )]);
        let idx = HistoryIndex::build(&commits, &reviews);
        assert_eq!(experience_metrics(&commits[1], "r", &idx, 365.25).exp, 1.0);
    }

    #[test]
    fn renamed_files_inherit_history() {
        let mut moved = commit("mv", "a", 2, &["s/new"]);
        moved.files[0].old_path = Some("s/old".into());
        let commits = vec![commit("c1", "x", 0, &["s/old"]), moved, commit("now", "a", 3, &["s/new"])];
        let idx = HistoryIndex::build(&commits, &BTreeMap::new());
        let h = history_metrics(&commits[1], &idx, AgeAggregate::Mean);
        assert_eq!(h.nuc, 1);
        let h = history_metrics(&commits[2], &idx, AgeAggregate::Mean);
        assert_eq!((h.nuc, h.ndev), (2, 2));
    }
}
