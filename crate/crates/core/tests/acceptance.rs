//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run with `cargo test -p jitlab-core --test acceptance`. Set
//! `JITLAB_REPLICATION_DIR` to a directory holding `metrics.csv`,
//! `linkages.ndjson` and `verdicts.csv` to add the replication ledger check.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use jitlab::curation::{apply_filters, stratify_periods, FilterOptions};
use jitlab::eval::{
    auc, brier, family_importance, fis_diff, run_scheme, FamilyImportance, Normalization, Scheme,
};
use jitlab::metrics::{ChangeMetrics, Family, Property};
use jitlab::model::{
    fit_irls, log_likelihood, score, FittedModel, ModelConfig, RestrictedCubicSpline,
};
use jitlab::pipeline::{run_pipeline, PipelineConfig, MANIFEST_FILE};
use jitlab::stats::{kruskal_wallis, krippendorff_alpha, mid_ranks, spearman, wilcoxon_rank_sum};
use jitlab::szz::{
    filter_cosmetic, filter_future, link_issues, trace_bic_candidates, BugLinkage, IdPattern, LinkOptions,
    MinedHistory,
};
use jitlab::vcs::Miner;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let n = rng.random_range(2..=50);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n)
            .map(|_| if k % 2 == 0 { rng.random_range(0..6) as f64 } else { rng.random() })
            .collect();
        let got = auc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((got - pairwise_auc(&scores, &labels)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!("1000 sets, max deviation {worst:e}, {secs:.2} s"))
}

fn brier_cases() -> Outcome {
    let a = brier(&[0.8, 0.4], &[true, false]).map_err(|e| e.to_string())?;
    let b = brier(&[0.5; 6], &[true, false, true, true, false, false]).map_err(|e| e.to_string())?;
    ensure!(close(a, 0.10, 1e-12), "hand case {a}");
    ensure!(b == 0.25, "all-0.5 case {b}");
    Ok(format!("{a:.12}, {b}"))
}

fn grid_search(x: &DMatrix<f64>, y: &[bool]) -> (f64, f64) {
    let (mut c0, mut c1, mut step) = (0.0, 0.0, 1.0);
    while step > 1e-7 {
        let mut best = (f64::NEG_INFINITY, c0, c1);
        for a in -20..=20 {
            for b in -20..=20 {
                let beta = DVector::from_vec(vec![c0 + a as f64 * step, c1 + b as f64 * step]);
                let ll = log_likelihood(x, y, &beta);
                if ll > best.0 {
                    best = (ll, beta[0], beta[1]);
                }
            }
        }
        (c0, c1) = (best.1, best.2);
        step /= 4.0;
    }
    (c0, c1)
}

fn logistic_fit() -> Outcome {
    let y: Vec<bool> = (0..10).map(|i| i < 3).collect();
    let ones = DMatrix::from_element(10, 1, 1.0);
    let fit = fit_irls(&ones, &y).map_err(|e| e.to_string())?;
    let expected = (3.0f64 / 7.0).ln();
    ensure!(close(fit.beta[0], expected, 1e-6), "intercept {} vs {expected}", fit.beta[0]);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<f64> = (0..60).map(|_| rng.random_range(-2.0..2.0)).collect();
    let ys: Vec<bool> = xs.iter().map(|&v| rng.random::<f64>() < 1.0 / (1.0 + (-(0.3 + 1.1 * v)).exp())).collect();
    let x = DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
    let fit = fit_irls(&x, &ys).map_err(|e| e.to_string())?;
    let (b0, b1) = grid_search(&x, &ys);
    let dev = (fit.beta[0] - b0).abs().max((fit.beta[1] - b1).abs());
    ensure!(dev < 1e-4, "grid search deviation {dev:e}");

    let mut residual: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let p = 1 + seed as usize % 4;
        let x = DMatrix::from_fn(200, p + 1, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.5..1.5) });
        let beta: Vec<f64> = (0..=p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<bool> = (0..200)
            .map(|i| {
                let eta: f64 = (0..=p).map(|j| x[(i, j)] * beta[j]).sum();
                rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())
            })
            .collect();
        let fit = fit_irls(&x, &y).map_err(|e| e.to_string())?;
        residual = residual.max(score(&x, &y, &fit.beta).amax());
    }
    ensure!(residual < 1e-6, "score residual {residual:e}");
    Ok(format!("intercept {:.9}, grid deviation {dev:.1e}, score residual {residual:.1e}", expected))
}

fn spline_basis() -> Outcome {
    let mut worst: f64 = 0.0;
    for knots in [vec![4.0, 30.0, 61.0, 95.0], vec![0.0, 1.0, 2.5, 7.0, 20.0]] {
        let s = RestrictedCubicSpline::with_knots(knots.clone()).map_err(|e| e.to_string())?;
        let f = |x: f64, j: usize| s.eval(x)[j];
        let d = 1e-6;
        for &t in &s.knots {
            for j in 1..s.terms() {
                worst = worst.max((f(t - d, j) - f(t + d, j)).abs());
                let h1 = 1e-5;
                let d1 = |x: f64| (f(x + h1, j) - f(x - h1, j)) / (2.0 * h1);
                worst = worst.max((d1(t - d - h1) - d1(t + d + h1)).abs());
                let h2 = 1e-4;
                let d2 = |x: f64| (f(x + h2, j) - 2.0 * f(x, j) + f(x - h2, j)) / (h2 * h2);
                worst = worst.max((d2(t - d - h2) - d2(t + d + h2)).abs());
            }
        }
        for x in [knots[0] - 100.0, knots[0] - 1.0, knots[0]] {
            ensure!(s.eval(x)[1..].iter().all(|&v| v == 0.0), "nonzero nonlinear term at {x}");
        }
    }
    ensure!(worst < 1e-5, "largest jump {worst:e}");
    Ok(format!("largest jump across knots {worst:.1e}"))
}

fn toy_model(coefficients: Vec<f64>, covariance: Vec<Vec<f64>>, families: &[(Family, Property, Vec<usize>)]) -> FittedModel {
    let mut term_map = BTreeMap::new();
    let mut family_map: BTreeMap<Family, Vec<Property>> = BTreeMap::new();
    let mut knots = BTreeMap::new();
    for (f, p, idx) in families {
        term_map.insert(*p, idx.clone());
        family_map.entry(*f).or_default().push(*p);
        knots.insert(*p, vec![]);
    }
    FittedModel {
        terms: (1..coefficients.len()).map(|i| format!("t{i}")).collect(),
        coefficients,
        covariance,
        converged: true,
        iterations: 1,
        deviance: 0.0,
        n_obs: 0,
        n_events: 0,
        knots,
        term_map,
        family_map,
        warnings: vec![],
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect()
}

fn wald_importance(fitted: &[FamilyImportance]) -> Outcome {
    let m = toy_model(vec![0.2, 1.0, 1.0, 1.0], identity(4), &[(Family::Size, Property::La, vec![1, 2, 3])]);
    let imp = family_importance(&m, 1, Scheme::Short, Normalization::FamilySum).map_err(|e| e.to_string())?;
    let size = imp.get(Family::Size).ok_or("no size family")?;
    let w = size.wald_chi2.ok_or("singular block")?;
    ensure!(close(w, 3.0, 1e-12) && size.df == 3, "W = {w}, df = {}", size.df);
    ensure!(close(size.p_value, 0.392, 1e-3), "p = {}", size.p_value);
    let mut worst: f64 = 0.0;
    for imp in fitted {
        let sum: f64 = imp.families.iter().filter_map(|f| f.normalized).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    ensure!(!fitted.is_empty(), "no fitted models");
    ensure!(worst <= 1e-9, "normalized sum off by {worst:e}");
    Ok(format!("W = {w}, p = {:.4}, {} fitted models sum to 1 within {worst:.1e}", size.p_value, fitted.len()))
}

fn fis_diff_properties(fitted: &[FamilyImportance]) -> Outcome {
    let mut pairs = 0;
    for a in fitted {
        for b in fitted {
            let ab = fis_diff(a, b).map_err(|e| e.to_string())?;
            let ba = fis_diff(b, a).map_err(|e| e.to_string())?;
            for (family, d) in &ab {
                ensure!(*d == ba[family].map(|v| -v), "antisymmetry fails for {family:?}");
            }
            pairs += 1;
        }
        let own = fis_diff(a, a).map_err(|e| e.to_string())?;
        ensure!(own.values().all(|d| d.is_none_or(|v| v == 0.0)), "nonzero self difference");
    }
    ensure!(pairs > 0, "no pairs");
    Ok(format!("{pairs} ordered pairs"))
}

fn statistics() -> Outcome {
    let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).map_err(|e| e.to_string())?;
    ensure!(close(kw.h, 7.2, 1e-9) && close(kw.p_value, 0.027, 1e-3), "KW H = {}, p = {}", kw.h, kw.p_value);
    // the oracle: exact chi-square tail with 2 df is exp(-H/2)
    ensure!(close(kw.p_value, (-kw.h / 2.0).exp(), 1e-12), "KW tail {}", kw.p_value);
    let w = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0]).map_err(|e| e.to_string())?;
    ensure!(close(w.p_value, 1.0 / 3.0, 1e-12), "Wilcoxon p = {}", w.p_value);
    let ratings = vec![
        vec![Some('A'), Some('A'), Some('B'), Some('A')],
        vec![Some('A'), Some('A'), Some('B'), Some('B')],
    ];
    let alpha = krippendorff_alpha(&ratings).map_err(|e| e.to_string())?;
    // D_o = 2/8, D_e = 30/56 from the pooled values A A A A A B B B
    let oracle = 1.0 - 0.25 / (30.0 / 56.0);
    ensure!(close(alpha, 0.53333, 1e-5) && close(alpha, oracle, 1e-12), "alpha = {alpha}");
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [2.0, 1.0, 4.0, 3.0];
    let rho = spearman(&x, &y).map_err(|e| e.to_string())?;
    let d2: f64 = mid_ranks(&x).iter().zip(mid_ranks(&y)).map(|(a, b)| (a - b).powi(2)).sum();
    ensure!(close(rho, 0.6, 1e-12) && close(rho, 1.0 - 6.0 * d2 / 60.0, 1e-12), "rho = {rho}");
    Ok(format!("H = {:.9}, p = {:.4}; W p = {:.12}; alpha = {alpha:.6}; rho = {rho}", kw.h, kw.p_value, w.p_value))
}

fn conserved(before: &BugLinkage, after: &BugLinkage) -> bool {
    after.candidate_count() == before.candidate_count()
        && after.bic_candidates.len() + after.dropped.len() == before.candidate_count()
}

fn szz_fixture() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = common::build_szz_fixture(dir.path());
    let miner = Miner::open(dir.path()).map_err(|e| e.to_string())?;
    let history = miner.scan_history("main").map_err(|e| e.to_string())?;
    let patterns = vec![IdPattern::new("Closes-Bug: #{id}").map_err(|e| e.to_string())?];
    let links = link_issues(&history, &fx.issues, &patterns, &LinkOptions::default()).map_err(|e| e.to_string())?;
    ensure!(links.len() == 2, "{} linked issues", links.len());
    let source = MinedHistory::new(&miner, &history);
    let ids = |l: &BugLinkage| -> BTreeSet<String> { l.retained_ids().map(str::to_string).collect() };
    let set = |v: &[&String]| -> BTreeSet<String> { v.iter().map(|s| s.to_string()).collect() };

    let traced = trace_bic_candidates(&links[0], &source).map_err(|e| e.to_string())?;
    ensure!(
        ids(&traced) == set(&[&fx.c1_initial, &fx.c2_comment, &fx.c3_scale, &fx.c4_late]),
        "traced {:?}",
        ids(&traced)
    );
    let cosmetic = filter_cosmetic(&traced);
    ensure!(conserved(&traced, &cosmetic), "cosmetic filter lost candidates");
    let dropped: Vec<&str> = cosmetic.dropped.iter().map(|d| d.candidate.commit_id.as_str()).collect();
    ensure!(dropped == [fx.c2_comment.as_str()], "cosmetic dropped {dropped:?}");
    let dated = filter_future(&cosmetic, &fx.issues[0]).map_err(|e| e.to_string())?;
    ensure!(conserved(&traced, &dated), "date filter lost candidates");
    ensure!(ids(&dated) == set(&[&fx.c1_initial, &fx.c3_scale]), "retained {:?}", ids(&dated));
    let mut decoys: Vec<&str> = dated.dropped.iter().map(|d| d.candidate.commit_id.as_str()).collect();
    decoys.sort();
    let mut planted = vec![fx.c2_comment.as_str(), fx.c4_late.as_str()];
    planted.sort();
    ensure!(decoys == planted, "dropped {decoys:?}");

    let pure = trace_bic_candidates(&links[1], &source).map_err(|e| e.to_string())?;
    ensure!(pure.bic_candidates.is_empty() && pure.pure_addition_bfcs == [fx.c6_pure_add.clone()], "pure addition case");
    Ok("4 traced, 1 cosmetic and 1 future-dated decoy dropped, counts conserved".into())
}

fn filter_ledger() -> Outcome {
    let (rows, links, labels) = common::corpus::ledger_corpus();
    let counts = |d: &jitlab::curation::FilteredDataset| -> Vec<(usize, usize)> {
        d.stage_counts.iter().map(|c| (c.issues, c.bics)).collect()
    };
    let d = apply_filters(&rows, &links, &labels, &FilterOptions::default()).map_err(|e| e.to_string())?;
    let expected = [(4, 8), (3, 7), (3, 6), (3, 5), (3, 4), (3, 3)];
    ensure!(counts(&d) == expected, "default mode {:?}", counts(&d));
    let gt = FilterOptions {
        drop_mislabeled: true,
        ..FilterOptions::default()
    };
    let d = apply_filters(&rows, &links, &labels, &gt).map_err(|e| e.to_string())?;
    let expected_gt = [(4, 8), (2, 6), (2, 5), (2, 4), (2, 3), (2, 2)];
    ensure!(counts(&d) == expected_gt, "ground-truth mode {:?}", counts(&d));
    Ok(format!("F0-F5 {expected:?}; ground truth {expected_gt:?}"))
}

fn replication_ledger(dir: &Path) -> Outcome {
    let file = std::fs::File::open(dir.join("metrics.csv")).map_err(|e| e.to_string())?;
    let rows = jitlab::metrics::read_metrics_csv(file).map_err(|e| e.to_string())?;
    let links: Vec<BugLinkage> =
        jitlab::pipeline::io::read_records(&dir.join("linkages.ndjson")).map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        labels: Some(dir.join("verdicts.csv")),
        ..PipelineConfig::default()
    };
    let labels = jitlab::pipeline::load_verdicts(&config).map_err(|e| e.to_string())?;
    let d = apply_filters(&rows, &links, &labels, &FilterOptions::default()).map_err(|e| e.to_string())?;
    let got: Vec<(usize, usize)> = d.stage_counts.iter().map(|c| (c.issues, c.bics)).collect();
    let bics: Vec<usize> = got.iter().map(|c| c.1).collect();
    ensure!(got[0] == (1880, 3486) && got[1] == (1668, 2925), "F0/F1 {:?}", &got[..2]);
    ensure!(bics[2..] == [2920, 2911, 2907, 2506], "F2-F5 BICs {:?}", &bics[2..]);
    let gt = FilterOptions {
        drop_mislabeled: true,
        ..FilterOptions::default()
    };
    let d = apply_filters(&rows, &links, &labels, &gt).map_err(|e| e.to_string())?;
    let last = d.stage_counts.last().ok_or("empty ledger")?;
    ensure!((last.issues, last.bics) == (1120, 1571), "ground truth {} / {}", last.issues, last.bics);
    Ok(format!("{got:?}"))
}

fn periodized(signal: bool, seed: u64) -> Vec<ChangeMetrics> {
    let mut rows = common::synthetic::signal_rows(8, 1200, seed, signal);
    let p = stratify_periods(&rows, 3).expect("stratify");
    rows.retain_mut(|r| {
        r.period = p.period_of(&r.change_id);
        r.period.is_some()
    });
    rows
}

fn end_to_end(importances: &mut Vec<FamilyImportance>) -> Outcome {
    let start = Instant::now();
    let config = ModelConfig::default();
    let mut lines = Vec::new();
    for (signal, seed) in [(true, 21), (false, 22)] {
        let rows = periodized(signal, seed);
        let periods: BTreeSet<u32> = rows.iter().filter_map(|r| r.period).collect();
        ensure!(periods.len() == 8, "{} periods", periods.len());
        for scheme in Scheme::ALL {
            let r = run_scheme(&rows, scheme, &Property::ALL, &config).map_err(|e| e.to_string())?;
            ensure!(r.cells.len() == 28, "{scheme}: {} cells", r.cells.len());
            let lo = r.cells.iter().map(|c| c.auc).fold(f64::INFINITY, f64::min);
            let mean = r.cells.iter().map(|c| c.auc).sum::<f64>() / r.cells.len() as f64;
            let hi = r.cells.iter().map(|c| c.auc).fold(f64::NEG_INFINITY, f64::max);
            if signal {
                ensure!(lo > 0.65, "{scheme}: lowest AUC {lo:.3}");
                for (n, m) in &r.models {
                    importances.push(
                        family_importance(&m.model, *n, scheme, Normalization::FamilySum).map_err(|e| e.to_string())?,
                    );
                }
            } else {
                ensure!((mean - 0.5).abs() <= 0.05, "{scheme} shuffled: mean AUC {mean:.3}");
            }
            lines.push(format!("{}{scheme} AUC {lo:.3}..{hi:.3} (mean {mean:.3})", if signal { "" } else { "shuffled " }));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{}; {secs:.1} s", lines.join(", ")))
}

fn artifacts(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap_or_default());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = jitlab::fixture::demo_corpus(&tmp.path().join("demo"), &Default::default()).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let mut config = corpus.config.clone();
        config.output = tmp.path().join(name);
        run_pipeline(config.clone()).map_err(|e| e.to_string())?;
        outputs.push(artifacts(&config.output));
    }
    ensure!(outputs[0].len() > 10, "only {} artifacts", outputs[0].len());
    ensure!(
        outputs[0].keys().eq(outputs[1].keys()),
        "artifact sets differ"
    );
    for (path, bytes) in &outputs[0] {
        ensure!(outputs[1][path] == *bytes, "{} differs", path.display());
    }
    Ok(format!("{} CSV/JSON artifacts byte-identical", outputs[0].len()))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut importances = Vec::new();
    results.push(("AUC oracle", auc_oracle()));
    results.push(("Brier hand cases", brier_cases()));
    results.push(("logistic fit", logistic_fit()));
    results.push(("spline basis", spline_basis()));
    let e2e = end_to_end(&mut importances);
    results.push(("Wald importance", wald_importance(&importances)));
    results.push(("FISDiff antisymmetry", fis_diff_properties(&importances)));
    results.push(("statistics oracles", statistics()));
    results.push(("SZZ fixture", szz_fixture()));
    results.push(("filter ledger", filter_ledger()));
    results.push(("end-to-end signal", e2e));
    results.push(("determinism", determinism()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    match std::env::var_os("JITLAB_REPLICATION_DIR") {
        Some(dir) => match replication_ledger(Path::new(&dir)) {
            Ok(detail) => println!("PASS filter ledger (replication data): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL filter ledger (replication data): {why}");
            }
        },
        None => println!("SKIP filter ledger (replication data): JITLAB_REPLICATION_DIR not set"),
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
