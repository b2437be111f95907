mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::corpus::{change, ledger_corpus, linkage};
use jitlab::curation::{
    apply_filters, stratify_periods, FilterOptions, LabelRequest, LabelStore, RuleCatalog, Stage, Verdict,
};
use jitlab::metrics::ChangeMetrics;
use jitlab::szz::{BugLinkage, IssueRecord};
use jitlab::time::DAYS_PER_YEAR;
use proptest::prelude::*;

fn counts(d: &jitlab::curation::FilteredDataset) -> Vec<(usize, usize)> {
    d.stage_counts.iter().map(|c| (c.issues, c.bics)).collect()
}

#[test]
fn ledger_matches_hand_counts() {
    let (rows, links, labels) = ledger_corpus();
    let d = apply_filters(&rows, &links, &labels, &FilterOptions::default()).unwrap();
    assert_eq!(
        d.stage_counts.iter().map(|c| c.stage).collect::<Vec<_>>(),
        Stage::ALL.to_vec()
    );
    assert_eq!(counts(&d), [(4, 8), (3, 7), (3, 6), (3, 5), (3, 4), (3, 3)]);
    let bics: BTreeSet<&str> = d.rows.iter().filter(|r| r.is_bic).map(|r| r.change_id.as_str()).collect();
    assert_eq!(bics, BTreeSet::from(["b1", "b6", "b7"]));
    // BFC rows and non-BIC rows survive as ordinary changes
    assert!(d.rows.iter().any(|r| r.change_id == "b5" && !r.is_bic));
    assert!(d.rows.iter().any(|r| r.change_id == "n3"));
    assert!(d.rows.iter().all(|r| r.period.is_some()));
    assert_eq!(d.partition.periods.len(), 2);

    let gt = FilterOptions {
        drop_mislabeled: true,
        ..FilterOptions::default()
    };
    let d = apply_filters(&rows, &links, &labels, &gt).unwrap();
    assert_eq!(counts(&d), [(4, 8), (2, 6), (2, 5), (2, 4), (2, 3), (2, 2)]);
}

#[test]
fn missing_verdicts_default_to_intrinsic() {
    let (rows, links, mut labels) = ledger_corpus();
    labels.remove("I3");
    let d = apply_filters(&rows, &links, &labels, &FilterOptions::default()).unwrap();
    assert_eq!(d.assumed_intrinsic, vec!["I3".to_string()]);
    assert_eq!(d.stage_counts[1].issues, 4);
}

#[test]
fn months_six_roughly_halves_period_count() {
    for span_months in 6..40u32 {
        let rows: Vec<ChangeMetrics> = (0..=span_months * 30)
            .step_by(5)
            .map(|d| {
                let mut r = change(&format!("c{d}"), "2019-01-01", 1.0, 0.0, 1.0);
                r.author_time += d as i64 * 86_400;
                r
            })
            .collect();
        let three = stratify_periods(&rows, 3).unwrap().periods.len() as i64;
        let six = stratify_periods(&rows, 6).unwrap().periods.len() as i64;
        assert!((three / 2 - six).abs() <= 1, "span {span_months}: {three} vs {six}");
    }
}

#[test]
fn store_feeds_filter() {
    let issues: Vec<IssueRecord> = ["I1", "I2", "I3", "I4"]
        .iter()
        .map(|id| IssueRecord {
            issue_id: id.to_string(),
            reported_time: None,
            title: String::new(),
            description: String::new(),
            reporter: String::new(),
        })
        .collect();
    let mut store = LabelStore::new(issues, RuleCatalog::standard());
    let (rows, links, labels) = ledger_corpus();
    for (issue, v) in &labels {
        let rule = match v {
            Verdict::Intrinsic => "bug-2",
            Verdict::Extrinsic => "extrinsic-3",
            Verdict::Mislabeled => "mislabeled-4",
        };
        store.record_label(LabelRequest::new(issue, "ana", *v, rule)).unwrap();
    }
    store
        .record_label(LabelRequest::new("I3", "bo", Verdict::Intrinsic, "intrinsic-1"))
        .unwrap();
    assert!(store.final_verdicts().is_err());
    store.resolve("I3", Verdict::Extrinsic, "extrinsic-3", "", "ana").unwrap();
    let verdicts = store.final_verdicts().unwrap();
    assert_eq!(verdicts, labels);
    let d = apply_filters(&rows, &links, &verdicts, &FilterOptions::default()).unwrap();
    assert_eq!(d.stage_counts[5].bics, 3);
}

fn corpus_strategy() -> impl Strategy<Value = (Vec<ChangeMetrics>, Vec<BugLinkage>, BTreeMap<String, Verdict>)> {
    let rows = prop::collection::vec((0i64..800, 0u32..40, 0u32..40, 1u32..130), 1..60);
    (rows, prop::collection::vec((prop::collection::vec(0usize..60, 0..5), 0u8..4), 0..15)).prop_map(
        |(raw, issues)| {
            let rows: Vec<ChangeMetrics> = raw
                .iter()
                .enumerate()
                .map(|(i, &(day, la, ld, nf))| {
                    let mut r = change(&format!("c{i:02}"), "2018-01-01", la as f64 * 400.0, ld as f64 * 200.0, nf as f64);
                    r.author_time += day * 86_400;
                    r
                })
                .collect();
            let mut links = Vec::new();
            let mut labels = BTreeMap::new();
            for (k, (bics, v)) in issues.into_iter().enumerate() {
                let ids: Vec<String> = bics.iter().filter(|&&b| b < rows.len()).map(|b| format!("c{b:02}")).collect();
                let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
                let issue = format!("I{k}");
                links.push(linkage(&issue, &refs));
                match v {
                    0 => {}
                    1 => {
                        labels.insert(issue, Verdict::Intrinsic);
                    }
                    2 => {
                        labels.insert(issue, Verdict::Extrinsic);
                    }
                    _ => {
                        labels.insert(issue, Verdict::Mislabeled);
                    }
                }
            }
            (rows, links, labels)
        },
    )
}

proptest! {
    #[test]
    fn filter_conservation((rows, links, labels) in corpus_strategy(), drop_mislabeled: bool, six: bool) {
        let opts = FilterOptions { drop_mislabeled, period_months: if six { 6 } else { 3 }, ..FilterOptions::default() };
        let d = apply_filters(&rows, &links, &labels, &opts).unwrap();
        for w in d.stage_counts.windows(2) {
            prop_assert!(w[1].issues <= w[0].issues);
            prop_assert!(w[1].bics <= w[0].bics);
        }
        let f1_issues = d.stage_counts[1].issues;
        prop_assert!(d.stage_counts[1..].iter().all(|c| c.issues == f1_issues));

        // F1 keeps exactly the BICs linked to retained issues
        let keep = |issue: &str| match labels.get(issue) {
            Some(Verdict::Extrinsic) => false,
            Some(Verdict::Mislabeled) => !drop_mislabeled,
            _ => true,
        };
        let expected: BTreeSet<String> = links
            .iter()
            .filter(|l| keep(&l.issue_id))
            .flat_map(|l| l.retained_ids().map(str::to_string))
            .collect();
        prop_assert_eq!(d.stage_counts[1].bics, expected.len());
        for r in &d.rows {
            prop_assert_eq!(r.is_bic, expected.contains(&r.change_id));
            prop_assert!(r.la + r.ld < 10_000.0 && r.nf < 100.0 && r.la > 0.0);
        }
        prop_assert_eq!(d.stage_counts[5].bics, d.rows.iter().filter(|r| r.is_bic).count());
    }

    #[test]
    fn partition_is_total_disjoint_contiguous((rows, _, _) in corpus_strategy(), six: bool) {
        let p = stratify_periods(&rows, if six { 6 } else { 3 }).unwrap();
        prop_assert_eq!(p.assignment.len() + p.dropped.len(), rows.len());
        for w in p.periods.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert_eq!(w[1].index, w[0].index + 1);
        }
        for r in &rows {
            if let Some(k) = p.period_of(&r.change_id) {
                let period = &p.periods[k as usize - 1];
                prop_assert!(period.start <= r.author_time && r.author_time < period.end);
            } else if let Some(last) = p.periods.last() {
                prop_assert!(r.author_time >= last.end);
            }
        }
        if let Some(last) = p.periods.last() {
            let max = rows.iter().map(|r| r.author_time).max().unwrap();
            prop_assert!(last.end <= max);
            let span_days = (last.end - p.origin) as f64 / 86_400.0;
            prop_assert!(span_days <= DAYS_PER_YEAR * 3.0);
        }
    }
}
