#![allow(dead_code)]

use std::path::Path;

use jitlab::szz::IssueRecord;
use jitlab::vcs::builder::RepoBuilder;

pub const DAY: i64 = 86_400;
pub const T0: i64 = 1_600_000_000;

/// Commit ids of the six-commit SZZ fixture.
pub struct SzzFixture {
    pub c1_initial: String,
    pub c2_comment: String,
    pub c3_scale: String,
    pub c4_late: String,
    pub c5_fix: String,
    pub c6_pure_add: String,
    pub issues: Vec<IssueRecord>,
}

/// Six commits on `main`:
///
/// 1. alice adds `geo.py` (perimeter bug at line 5)
/// 2. bob prepends a comment and a blank line (cosmetic decoy)
/// 3. carol changes `scale` and adds `factor`
/// 4. dave edits `factor` on day 10, after issue 101 was reported (day 5)
/// 5. bob fixes issue 101, touching lines from commits 1-4
/// 6. alice fixes issue 102 by pure addition
pub fn build_szz_fixture(path: &Path) -> SzzFixture {
    let mut b = RepoBuilder::init(path).unwrap();
    let v1 = "def area(w, h):\n    return w * h\n\ndef perimeter(w, h):\n    return 2 * w + h\n\ndef scale(x):\n    return x\n";
    let c1 = b.commit("main", "alice@example.org", T0, "Add geometry", &[("geo.py", Some(v1))]).unwrap();
    let v2 = format!("# geometry helpers\n\n{v1}");
    let c2 = b.commit("main", "bob@example.org", T0 + DAY, "Docs", &[("geo.py", Some(&v2))]).unwrap();
    let v3 = v2.replace("    return x\n", "    return x * factor()\n\ndef factor():\n    return 1\n");
    let c3 = b.commit("main", "carol@example.org", T0 + 2 * DAY, "Scale by factor", &[("geo.py", Some(&v3))]).unwrap();
    let v4 = v3.replace("def factor():\n    return 1\n", "def factor():\n    return 2\n");
    let c4 = b.commit("main", "dave@example.org", T0 + 10 * DAY, "Tune factor", &[("geo.py", Some(&v4))]).unwrap();
    let v5 = v4
        .replace("# geometry helpers\n\n", "")
        .replace("2 * w + h", "2 * (w + h)")
        .replace("return x * factor()", "return x * factor() if x else 0")
        .replace("    return 2\n", "    return 1\n");
    let c5 = b
        .commit("main", "bob@example.org", T0 + 11 * DAY, "Fix perimeter\n\nCloses-Bug: #101\n", &[("geo.py", Some(&v5))])
        .unwrap();
    let v6 = format!("{v5}\ndef volume(w, h, d):\n    return w * h * d\n");
    let c6 = b
        .commit("main", "alice@example.org", T0 + 12 * DAY, "Add volume\n\nCloses-Bug: #102\n", &[("geo.py", Some(&v6))])
        .unwrap();
    let issue = |id: &str, day: i64| IssueRecord {
        issue_id: id.into(),
        reported_time: Some(T0 + day * DAY),
        title: format!("issue {id}"),
        description: String::new(),
        reporter: "qa@example.org".into(),
    };
    SzzFixture {
        c1_initial: c1,
        c2_comment: c2,
        c3_scale: c3,
        c4_late: c4,
        c5_fix: c5,
        c6_pure_add: c6,
        issues: vec![issue("101", 5), issue("102", 11), issue("103", 1)],
    }
}

pub mod corpus {
    use std::collections::BTreeMap;

    use jitlab::curation::Verdict;
    use jitlab::metrics::ChangeMetrics;
    use jitlab::szz::{BicCandidate, BugLinkage, DropReason, DroppedCandidate};
    use jitlab::time::parse_timestamp;

    pub fn candidate(id: &str) -> BicCandidate {
        BicCandidate {
            commit_id: id.into(),
            author_time: 0,
            commit_time: 0,
            evidence: vec![],
        }
    }

    pub fn linkage(issue: &str, bics: &[&str]) -> BugLinkage {
        let mut l = BugLinkage::new(issue, vec![format!("fix-{issue}")]);
        l.bic_candidates = bics.iter().map(|b| candidate(b)).collect();
        l
    }

    pub fn change(id: &str, date: &str, la: f64, ld: f64, nf: f64) -> ChangeMetrics {
        let mut r = ChangeMetrics::empty(id, parse_timestamp(date).unwrap());
        r.la = la;
        r.ld = ld;
        r.nf = nf;
        r
    }

    /// Rows, linkages and verdicts with one planted violation per filter.
    ///
    /// Hand counts (issues, BICs), extrinsic only / extrinsic + mislabeled:
    /// F0 (4, 8); F1 (3, 7) / (2, 6); F2 6 / 5; F3 5 / 4; F4 4 / 3; F5 3 / 2.
    pub fn ledger_corpus() -> (Vec<ChangeMetrics>, Vec<BugLinkage>, BTreeMap<String, Verdict>) {
        let rows = vec![
            change("n1", "2020-01-05", 3.0, 0.0, 1.0),
            change("b1", "2020-01-10", 10.0, 2.0, 2.0),
            change("b2", "2020-02-01", 6_000.0, 4_000.0, 3.0),
            change("b3", "2020-02-15", 5.0, 0.0, 100.0),
            change("b4", "2020-03-01", 0.0, 5.0, 1.0),
            change("n3", "2020-03-02", 9_000.0, 999.0, 99.0),
            change("b5", "2020-04-10", 4.0, 1.0, 1.0),
            change("b6", "2020-05-01", 4.0, 1.0, 1.0),
            change("b7", "2020-06-01", 4.0, 1.0, 1.0),
            change("b8", "2020-07-05", 4.0, 1.0, 1.0),
            change("n2", "2020-08-01", 1.0, 0.0, 1.0),
        ];
        let mut i1 = linkage("I1", &["b1", "b2", "b6"]);
        i1.dropped.push(DroppedCandidate {
            candidate: candidate("n1"),
            reasons: [DropReason::Cosmetic].into(),
        });
        let linkages = vec![
            i1,
            linkage("I2", &["b3", "b4", "b8", "ghost"]),
            linkage("I3", &["b5", "b6"]),
            linkage("I4", &["b7"]),
        ];
        let labels = BTreeMap::from([
            ("I1".to_string(), Verdict::Intrinsic),
            ("I2".to_string(), Verdict::Intrinsic),
            ("I3".to_string(), Verdict::Extrinsic),
            ("I4".to_string(), Verdict::Mislabeled),
        ]);
        (rows, linkages, labels)
    }
}

pub mod synthetic {
    use jitlab::metrics::ChangeMetrics;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, LogNormal};

    pub const DAY: i64 = 86_400;
    /// 2015-01-01T00:00:00Z
    pub const ORIGIN: i64 = 1_420_070_400;

    /// `per_period` changes per 91-day block for `periods` blocks, plus a
    /// closing change so the last block is complete. BIC probability grows
    /// with `ln(la)` when `signal` is set; otherwise labels are shuffled.
    pub fn signal_rows(periods: u32, per_period: usize, seed: u64, signal: bool) -> Vec<ChangeMetrics> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let la_dist: LogNormal<f64> = LogNormal::new(3.0, 1.2).unwrap();
        let mut rows = Vec::new();
        // calendar quarters of 2015-2016 are 90-92 days; spread inside 89 days
        let quarter_starts: Vec<i64> = (0..=periods)
            .map(|k| jitlab::time::add_months(ORIGIN, 3 * k))
            .collect();
        for k in 0..periods as usize {
            for i in 0..per_period {
                let start = quarter_starts[k];
                let t = start + rng.random_range(0..(quarter_starts[k + 1] - start));
                let mut r = ChangeMetrics::empty(format!("p{k}-{i:05}"), t);
                r.la = la_dist.sample(&mut rng).round().max(1.0);
                r.ld = (r.la * rng.random_range(0.0..0.6)).round();
                r.nf = rng.random_range(1..12) as f64;
                r.ns = rng.random_range(1..4) as f64;
                r.nuc = rng.random_range(0..30) as f64;
                r.age = rng.random_range(0.0..400.0);
                r.aexp = rng.random_range(0..500) as f64;
                r.rexp = rng.random_range(0..300) as f64;
                r.nrev = rng.random_range(1..6) as f64;
                r.rtime = rng.random_range(0.0..10.0);
                let eta = -4.2 + 0.9 * r.la.ln();
                r.is_bic = rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp());
                rows.push(r);
            }
        }
        if !signal {
            let mut labels: Vec<bool> = rows.iter().map(|r| r.is_bic).collect();
            labels.shuffle(&mut rng);
            for (r, l) in rows.iter_mut().zip(labels) {
                r.is_bic = l;
            }
        }
        let mut closing = ChangeMetrics::empty("closing", quarter_starts[periods as usize]);
        closing.la = 1.0;
        closing.nf = 1.0;
        rows.push(closing);
        rows
    }
}
