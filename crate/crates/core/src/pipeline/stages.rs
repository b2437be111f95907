use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::io::{self, json_bytes, ndjson_bytes, read_json, read_ndjson, read_records, sha256_file, sha256_hex};
use super::{PipelineConfig, StageName};
use crate::curation::{
    filter_changes, filter_periods, stratify_periods, write_filter_ledger, LabelStore, RuleCatalog, StageCount,
    Verdict,
};
use crate::eval::{
    evaluate_scheme, family_importance, fit_scheme, heatmap_csv, importance_csv, stability, stability_csv,
    FamilyImportance, FittedScheme, HeatmapMetric, PeriodEval, Scheme, Skipped,
};
use crate::metrics::{compute_all, read_metrics_csv, write_metrics_csv, ChangeMetrics, Family, Property, ReviewRecord};
use crate::stats::{
    default_grid, kernel_density, kruskal_wallis, skewness, wilcoxon_rank_sum_with, RankSumMethod,
};
use crate::szz::{
    filter_cosmetic, filter_future_by, filter_suspicious, link_issues, trace_bic_candidates, BugLinkage, IdPattern,
    IssueRecord, LinkOptions, MinedHistory, SuspiciousAnnotations,
};
use crate::vcs::{CommitRecord, Miner};
use crate::{Error, Result};

pub(super) type Outputs = Vec<(String, Vec<u8>)>;

const COMMITS: &str = "commits.ndjson";
const LINKAGES: &str = "linkages.ndjson";
const SZZ: &str = "szz.ndjson";
const SZZ_SUMMARY: &str = "szz_summary.json";
const METRICS: &str = "metrics.csv";
const LEDGER: &str = "filter_ledger.csv";
const FILTERED: &str = "filtered.csv";
const FILTER_SUMMARY: &str = "filter_summary.json";
const DATASET: &str = "dataset.csv";
const PERIODS: &str = "periods.json";
const IMPORTANCE_JSON: &str = "importance.json";

fn models_file(scheme: Scheme) -> String {
    format!("models/{}.json", scheme.name())
}

pub(super) struct Context<'a> {
    config: &'a PipelineConfig,
}

impl<'a> Context<'a> {
    pub(super) fn new(config: &'a PipelineConfig) -> Self {
        Self { config }
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.config.output.join(name)
    }

    fn optional_hash(path: Option<&Path>) -> Result<Option<String>> {
        path.map(sha256_file).transpose()
    }

    /// Hash of everything the stage reads besides its predecessors' files.
    pub(super) fn input_checksum(&self, stage: StageName, deps: &BTreeMap<StageName, String>) -> Result<String> {
        let c = self.config;
        let external = match stage {
            StageName::Mine => {
                let miner = Miner::open(&c.repo)?;
                let ids = miner.commit_ids(&c.branch)?;
                json!({ "branch": c.branch, "history": sha256_hex(ids.join("\n").as_bytes()) })
            }
            StageName::Link => json!({
                "issues": sha256_file(&c.issues)?,
                "patterns": c.patterns,
                "skip_merges": c.skip_merges,
            }),
            StageName::Szz => json!({
                "issues": sha256_file(&c.issues)?,
                "suspicious": Self::optional_hash(c.suspicious.as_deref())?,
                "cosmetic_filter": c.cosmetic_filter,
                "date_filter": c.date_filter,
                "date_basis": c.date_basis,
            }),
            StageName::Metrics => json!({
                "reviews": Self::optional_hash(c.reviews.as_deref())?,
                "metrics": c.metrics_config(),
            }),
            StageName::Filter => json!({
                "labels": Self::optional_hash(c.labels.as_deref())?,
                "issues": sha256_file(&c.issues)?,
                "filter": c.filter_options(),
            }),
            StageName::Stratify => json!({ "months": c.months }),
            StageName::Fit => json!({
                "schemes": c.schemes,
                "candidates": c.candidates(),
                "model": c.model_config(),
            }),
            StageName::Evaluate => json!({ "schemes": c.schemes }),
            StageName::Importance => json!({ "normalization": c.normalization }),
            StageName::Stability => json!({}),
            StageName::Stats => json!({
                "labels": Self::optional_hash(c.labels.as_deref())?,
                "issues": sha256_file(&c.issues)?,
                "wilcoxon_exact_max": c.wilcoxon_exact_max,
                "density_points": c.density_points,
            }),
        };
        let doc = json!({
            "stage": stage.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "deps": deps,
            "external": external,
        });
        Ok(sha256_hex(&serde_json::to_vec(&doc)?))
    }

    fn commits(&self) -> Result<Vec<CommitRecord>> {
        read_ndjson(&self.path(COMMITS))
    }

    fn issues(&self) -> Result<Vec<IssueRecord>> {
        read_records(&self.config.issues)
    }

    fn metrics(&self, name: &str) -> Result<Vec<ChangeMetrics>> {
        let path = self.path(name);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        read_metrics_csv(file)
    }
}

pub(super) fn run(stage: StageName, ctx: &Context) -> Result<Outputs> {
    match stage {
        StageName::Mine => mine(ctx),
        StageName::Link => link(ctx),
        StageName::Szz => szz(ctx),
        StageName::Metrics => metrics(ctx),
        StageName::Filter => filter(ctx),
        StageName::Stratify => stratify(ctx),
        StageName::Fit => fit(ctx),
        StageName::Evaluate => evaluate(ctx),
        StageName::Importance => importance(ctx),
        StageName::Stability => stability_stage(ctx),
        StageName::Stats => stats(ctx),
    }
}

fn metrics_bytes(rows: &[ChangeMetrics]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_metrics_csv(rows, &mut buf)?;
    Ok(buf)
}

fn mine(ctx: &Context) -> Result<Outputs> {
    let miner = Miner::open(&ctx.config.repo)?;
    let commits = miner.scan_history(&ctx.config.branch)?;
    log::info!("mined {} commits", commits.len());
    Ok(vec![(COMMITS.into(), ndjson_bytes(&commits)?)])
}

fn link(ctx: &Context) -> Result<Outputs> {
    let commits = ctx.commits()?;
    let issues = ctx.issues()?;
    let patterns = ctx
        .config
        .patterns
        .iter()
        .map(|p| IdPattern::new(p))
        .collect::<Result<Vec<_>>>()?;
    let options = LinkOptions {
        skip_merges: ctx.config.skip_merges,
    };
    let linkages = link_issues(&commits, &issues, &patterns, &options)?;
    log::info!("linked {} of {} issues", linkages.len(), issues.len());
    Ok(vec![(LINKAGES.into(), ndjson_bytes(&linkages)?)])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct SzzSummary {
    issues: usize,
    bfcs: usize,
    candidates: usize,
    retained: usize,
    unique_bics: usize,
    pure_addition_bfcs: usize,
    dropped_by_reason: BTreeMap<String, usize>,
}

fn szz(ctx: &Context) -> Result<Outputs> {
    let c = ctx.config;
    let commits = ctx.commits()?;
    let linkages: Vec<BugLinkage> = read_ndjson(&ctx.path(LINKAGES))?;
    let issues: HashMap<String, IssueRecord> = ctx.issues()?.into_iter().map(|i| (i.issue_id.clone(), i)).collect();
    let annotations: SuspiciousAnnotations = match &c.suspicious {
        Some(p) => read_json(p)?,
        None => SuspiciousAnnotations::default(),
    };
    let miner = Miner::open(&c.repo)?;
    let history = MinedHistory::new(&miner, &commits);
    let traced: Vec<BugLinkage> = linkages
        .par_iter()
        .map(|l| {
            let mut l = trace_bic_candidates(l, &history)?;
            annotations.annotate(&mut l);
            if c.cosmetic_filter {
                l = filter_cosmetic(&l);
            }
            if c.date_filter {
                let issue = issues
                    .get(&l.issue_id)
                    .ok_or_else(|| Error::UnknownIssue(l.issue_id.clone()))?;
                l = filter_future_by(&l, issue, c.date_basis)?;
            }
            Ok(filter_suspicious(&l, &annotations))
        })
        .collect::<Result<_>>()?;

    let mut summary = SzzSummary {
        issues: traced.len(),
        ..Default::default()
    };
    let mut unique = BTreeSet::new();
    for l in &traced {
        summary.bfcs += l.bfc_ids.len();
        summary.candidates += l.candidate_count();
        summary.retained += l.bic_candidates.len();
        summary.pure_addition_bfcs += l.pure_addition_bfcs.len();
        unique.extend(l.retained_ids());
        for d in &l.dropped {
            for r in &d.reasons {
                let key = serde_json::to_value(r)?.as_str().unwrap_or_default().to_string();
                *summary.dropped_by_reason.entry(key).or_default() += 1;
            }
        }
    }
    summary.unique_bics = unique.len();
    Ok(vec![
        (SZZ.into(), ndjson_bytes(&traced)?),
        (SZZ_SUMMARY.into(), json_bytes(&summary)?),
    ])
}

fn metrics(ctx: &Context) -> Result<Outputs> {
    let commits = ctx.commits()?;
    let linkages: Vec<BugLinkage> = read_ndjson(&ctx.path(SZZ))?;
    let bics: BTreeSet<String> = linkages
        .iter()
        .flat_map(|l| l.retained_ids().map(str::to_string))
        .collect();
    let reviews: BTreeMap<String, ReviewRecord> = match &ctx.config.reviews {
        Some(p) => read_records::<ReviewRecord>(p)?
            .into_iter()
            .map(|r| (r.change_id.clone(), r))
            .collect(),
        None => BTreeMap::new(),
    };
    let rows = compute_all(&commits, &reviews, &bics, &ctx.config.metrics_config())?;
    Ok(vec![(METRICS.into(), metrics_bytes(&rows)?)])
}

#[derive(Debug, Deserialize)]
struct VerdictRow {
    issue_id: String,
    verdict: String,
}

/// Final verdicts from the configured label source: a label store log
/// (disagreements must be resolved) or a CSV of `issue_id,verdict`.
pub fn load_verdicts(config: &PipelineConfig) -> Result<BTreeMap<String, Verdict>> {
    let Some(path) = &config.labels else {
        return Ok(BTreeMap::new());
    };
    if io::Format::of(path)? == io::Format::Csv {
        let rows: Vec<VerdictRow> = read_records(path)?;
        return rows
            .into_iter()
            .map(|r| Ok((r.issue_id, r.verdict.parse()?)))
            .collect();
    }
    let issues: Vec<IssueRecord> = read_records(&config.issues)?;
    LabelStore::open(path, issues, RuleCatalog::standard())?.final_verdicts()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FilterSummary {
    stage_counts: Vec<StageCount>,
    assumed_intrinsic: Vec<String>,
}

fn filter(ctx: &Context) -> Result<Outputs> {
    let rows = ctx.metrics(METRICS)?;
    let linkages: Vec<BugLinkage> = read_ndjson(&ctx.path(SZZ))?;
    let verdicts = load_verdicts(ctx.config)?;
    let options = ctx.config.filter_options();
    let changes = filter_changes(&rows, &linkages, &verdicts, &options);
    let filtered = metrics_bytes(&changes.rows)?;
    let dataset = filter_periods(changes, options.period_months)?;
    let mut ledger = Vec::new();
    write_filter_ledger(&dataset.stage_counts, &mut ledger)?;
    let summary = FilterSummary {
        stage_counts: dataset.stage_counts,
        assumed_intrinsic: dataset.assumed_intrinsic,
    };
    Ok(vec![
        (LEDGER.into(), ledger),
        (FILTERED.into(), filtered),
        (FILTER_SUMMARY.into(), json_bytes(&summary)?),
    ])
}

fn stratify(ctx: &Context) -> Result<Outputs> {
    let rows = ctx.metrics(FILTERED)?;
    let partition = stratify_periods(&rows, ctx.config.months)?;
    let dataset: Vec<ChangeMetrics> = rows
        .into_iter()
        .filter_map(|mut r| {
            r.period = partition.period_of(&r.change_id);
            r.period.map(|_| r)
        })
        .collect();
    log::info!("{} rows in {} periods", dataset.len(), partition.periods.len());
    Ok(vec![
        (DATASET.into(), metrics_bytes(&dataset)?),
        (PERIODS.into(), json_bytes(&partition)?),
    ])
}

fn fit(ctx: &Context) -> Result<Outputs> {
    let rows = ctx.metrics(DATASET)?;
    let candidates = ctx.config.candidates();
    let model_config = ctx.config.model_config();
    ctx.config
        .schemes
        .iter()
        .map(|&scheme| {
            let fitted = fit_scheme(&rows, scheme, &candidates, &model_config)?;
            Ok((models_file(scheme), json_bytes(&fitted)?))
        })
        .collect()
}

/// Per-scheme evaluation grid without the models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub scheme: Scheme,
    pub cells: Vec<PeriodEval>,
    pub skipped: Vec<Skipped>,
}

fn evaluate(ctx: &Context) -> Result<Outputs> {
    let rows = ctx.metrics(DATASET)?;
    let mut out = Vec::new();
    for &scheme in &ctx.config.schemes {
        let fitted: FittedScheme = read_json(&ctx.path(&models_file(scheme)))?;
        let result = evaluate_scheme(&rows, &fitted)?;
        for metric in HeatmapMetric::ALL {
            let csv = heatmap_csv(&result.cells, metric)?;
            out.push((
                format!("evaluation/{}_{}.csv", metric.name(), scheme.name()),
                csv.into_bytes(),
            ));
        }
        let summary = EvaluationSummary {
            scheme,
            cells: result.cells,
            skipped: result.skipped,
        };
        out.push((format!("evaluation/{}.json", scheme.name()), json_bytes(&summary)?));
    }
    Ok(out)
}

fn importance(ctx: &Context) -> Result<Outputs> {
    let mut all = Vec::new();
    for &scheme in &ctx.config.schemes {
        let fitted: FittedScheme = read_json(&ctx.path(&models_file(scheme)))?;
        for (&period, report) in &fitted.models {
            all.push(family_importance(&report.model, period, scheme, ctx.config.normalization)?);
        }
    }
    Ok(vec![
        ("importance.csv".into(), importance_csv(&all)?.into_bytes()),
        (IMPORTANCE_JSON.into(), json_bytes(&all)?),
    ])
}

fn stability_stage(ctx: &Context) -> Result<Outputs> {
    let all: Vec<FamilyImportance> = read_json(&ctx.path(IMPORTANCE_JSON))?;
    let rows = stability(&all)?;
    Ok(vec![("stability.csv".into(), stability_csv(&rows)?.into_bytes())])
}

#[derive(Serialize)]
struct KruskalRow<'a> {
    subject: &'a str,
    family: &'a str,
    property: &'a str,
    h: Option<f64>,
    df: Option<usize>,
    p_value: Option<f64>,
    n_intrinsic: usize,
    n_extrinsic: usize,
    n_mislabeled: usize,
    note: String,
}

#[derive(Serialize)]
struct WilcoxonRow<'a> {
    subject: &'a str,
    family: &'a str,
    property: &'a str,
    group_a: &'a str,
    group_b: &'a str,
    u: Option<f64>,
    p_value: Option<f64>,
    method: Option<RankSumMethod>,
    note: String,
}

#[derive(Serialize)]
struct SkewRow<'a> {
    subject: &'a str,
    property: &'a str,
    group: &'a str,
    n: usize,
    skewness: Option<f64>,
}

#[derive(Serialize)]
struct ViolinRow<'a> {
    subject: &'a str,
    property: &'a str,
    group: &'a str,
    grid_point: f64,
    density: f64,
}

struct StatsWriter {
    kruskal: csv::Writer<Vec<u8>>,
    wilcoxon: csv::Writer<Vec<u8>>,
    skew: csv::Writer<Vec<u8>>,
    exact_max: usize,
    density_points: usize,
}

impl StatsWriter {
    fn groups(&mut self, subject: &str, family: &str, property: &str, groups: &[Vec<f64>; 3]) -> Result<()> {
        let names = Verdict::ALL.map(Verdict::name);
        let kw = if groups.iter().all(|g| !g.is_empty()) {
            kruskal_wallis(groups)
        } else {
            Err(Error::invalid("a verdict group is empty"))
        };
        let note = kw.as_ref().err().map(ToString::to_string).unwrap_or_default();
        let kw = kw.ok();
        self.kruskal.serialize(KruskalRow {
            subject,
            family,
            property,
            h: kw.map(|k| k.h),
            df: kw.map(|k| k.df),
            p_value: kw.map(|k| k.p_value),
            n_intrinsic: groups[0].len(),
            n_extrinsic: groups[1].len(),
            n_mislabeled: groups[2].len(),
            note,
        })?;
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let res = wilcoxon_rank_sum_with(&groups[a], &groups[b], self.exact_max);
            let note = res.as_ref().err().map(ToString::to_string).unwrap_or_default();
            let res = res.ok();
            self.wilcoxon.serialize(WilcoxonRow {
                subject,
                family,
                property,
                group_a: names[a],
                group_b: names[b],
                u: res.map(|r| r.u),
                p_value: res.map(|r| r.p_value),
                method: res.map(|r| r.method),
                note,
            })?;
        }
        for (g, values) in groups.iter().enumerate() {
            self.skew.serialize(SkewRow {
                subject,
                property,
                group: names[g],
                n: values.len(),
                skewness: skewness(values).ok(),
            })?;
        }
        Ok(())
    }

    fn violin(&self, w: &mut csv::Writer<Vec<u8>>, subject: &str, property: &str, groups: &[Vec<f64>; 3]) -> Result<()> {
        let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
        if pooled.len() < 2 {
            return Ok(());
        }
        let grid = default_grid(&pooled, self.density_points);
        for (g, values) in groups.iter().enumerate() {
            let Ok(d) = kernel_density(values, &grid) else { continue };
            if d.degenerate {
                continue;
            }
            for (x, y) in d.grid.iter().zip(&d.density) {
                w.serialize(ViolinRow {
                    subject,
                    property,
                    group: Verdict::ALL[g].name(),
                    grid_point: *x,
                    density: *y,
                })?;
            }
        }
        Ok(())
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::invalid(e.to_string()))
}

/// Distribution comparisons across verdict groups: BICs per issue and each
/// property of the BICs and BFCs linked to intrinsic, extrinsic and
/// mislabeled issues. Unlabeled issues are left out.
fn stats(ctx: &Context) -> Result<Outputs> {
    let verdicts = load_verdicts(ctx.config)?;
    if verdicts.is_empty() {
        log::warn!("no verdicts available; verdict-group statistics are empty");
    }
    let linkages: Vec<BugLinkage> = read_ndjson(&ctx.path(SZZ))?;
    let rows = ctx.metrics(METRICS)?;
    let by_id: HashMap<&str, &ChangeMetrics> = rows.iter().map(|r| (r.change_id.as_str(), r)).collect();
    let slot = |v: Verdict| Verdict::ALL.iter().position(|&x| x == v).unwrap_or(0);

    let mut per_issue: [Vec<f64>; 3] = Default::default();
    let mut bic_ids: [BTreeSet<&str>; 3] = Default::default();
    let mut bfc_ids: [BTreeSet<&str>; 3] = Default::default();
    for l in &linkages {
        let Some(&v) = verdicts.get(&l.issue_id) else { continue };
        let g = slot(v);
        per_issue[g].push(l.bic_candidates.len() as f64);
        bic_ids[g].extend(l.retained_ids());
        bfc_ids[g].extend(l.bfc_ids.iter().map(String::as_str));
    }

    let mut w = StatsWriter {
        kruskal: csv::Writer::from_writer(Vec::new()),
        wilcoxon: csv::Writer::from_writer(Vec::new()),
        skew: csv::Writer::from_writer(Vec::new()),
        exact_max: ctx.config.wilcoxon_exact_max,
        density_points: ctx.config.density_points,
    };
    let mut violin_issue = csv::Writer::from_writer(Vec::new());
    w.groups("bics_per_issue", "", "", &per_issue)?;
    w.violin(&mut violin_issue, "bics_per_issue", "", &per_issue)?;

    let mut violins: BTreeMap<Family, csv::Writer<Vec<u8>>> = Family::ALL
        .iter()
        .map(|&f| (f, csv::Writer::from_writer(Vec::new())))
        .collect();
    for (subject, ids) in [("bic", &bic_ids), ("bfc", &bfc_ids)] {
        for p in Property::ALL {
            let groups: [Vec<f64>; 3] = std::array::from_fn(|g| {
                ids[g]
                    .iter()
                    .filter_map(|id| by_id.get(id))
                    .map(|r| r.get(p))
                    .collect()
            });
            w.groups(subject, p.family().name(), p.acronym(), &groups)?;
            let vw = violins.get_mut(&p.family()).expect("every family has a writer");
            w.violin(vw, subject, p.acronym(), &groups)?;
        }
    }

    let mut out = vec![
        ("stats/kruskal.csv".to_string(), finish(w.kruskal)?),
        ("stats/wilcoxon.csv".to_string(), finish(w.wilcoxon)?),
        ("stats/skewness.csv".to_string(), finish(w.skew)?),
        ("stats/violin_bics_per_issue.csv".to_string(), finish(violin_issue)?),
    ];
    for (family, vw) in violins {
        out.push((format!("stats/violin_{}.csv", family.name().to_lowercase().replace(' ', "_")), finish(vw)?));
    }
    Ok(out)
}
