use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{FamilyImportance, PeriodEval, Scheme, StabilityRow};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapMetric {
    Auc,
    Brier,
    DeltaAuc,
    DeltaBrier,
}

impl HeatmapMetric {
    pub const ALL: [HeatmapMetric; 4] = [
        HeatmapMetric::Auc,
        HeatmapMetric::Brier,
        HeatmapMetric::DeltaAuc,
        HeatmapMetric::DeltaBrier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeatmapMetric::Auc => "auc",
            HeatmapMetric::Brier => "brier",
            HeatmapMetric::DeltaAuc => "delta_auc",
            HeatmapMetric::DeltaBrier => "delta_brier",
        }
    }

    fn value(self, cell: &PeriodEval) -> Option<f64> {
        match self {
            HeatmapMetric::Auc => Some(cell.auc),
            HeatmapMetric::Brier => Some(cell.brier),
            HeatmapMetric::DeltaAuc => cell.delta_auc(),
            HeatmapMetric::DeltaBrier => cell.delta_brier(),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Matrix with one row per training period and one column per test
/// period; cells without a value are left empty.
pub fn heatmap_csv(cells: &[PeriodEval], metric: HeatmapMetric) -> Result<String> {
    let trains: BTreeSet<u32> = cells.iter().map(|c| c.train_period).collect();
    let tests: BTreeSet<u32> = cells.iter().map(|c| c.test_period).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["train\\test".to_string()];
    header.extend(tests.iter().map(u32::to_string));
    w.write_record(&header)?;
    for &n in &trains {
        let mut rec = vec![n.to_string()];
        for &m in &tests {
            let v = cells
                .iter()
                .find(|c| c.train_period == n && c.test_period == m)
                .and_then(|c| metric.value(c));
            rec.push(fmt_opt(v));
        }
        w.write_record(&rec)?;
    }
    finish(w)
}

/// One row per (period, family).
pub fn importance_csv(importances: &[FamilyImportance]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scheme", "period", "family", "wald_chi2", "df", "p_value", "normalized"])?;
    for imp in importances {
        for f in &imp.families {
            w.write_record([
                imp.scheme.name().to_string(),
                imp.period.to_string(),
                f.family.name().to_string(),
                fmt_opt(f.wald_chi2),
                f.df.to_string(),
                f.p_value.to_string(),
                fmt_opt(f.normalized),
            ])?;
        }
    }
    finish(w)
}

pub fn stability_csv(rows: &[StabilityRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scheme", "train_period", "future_period", "family", "fis_train", "fis_future", "fis_diff"])?;
    for r in rows {
        w.write_record([
            r.scheme.name().to_string(),
            r.train_period.to_string(),
            r.future_period.to_string(),
            r.family.name().to_string(),
            fmt_opt(r.fis_train),
            fmt_opt(r.fis_future),
            fmt_opt(r.fis_diff),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// Writes `<metric>_<scheme>.csv` for each heatmap metric into `dir` and
/// returns the written paths.
pub fn export_heatmaps(dir: &Path, scheme: Scheme, cells: &[PeriodEval]) -> Result<Vec<PathBuf>> {
    if cells.is_empty() {
        return Err(Error::invalid("no evaluation cells to export"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for metric in HeatmapMetric::ALL {
        let path = dir.join(format!("{}_{}.csv", metric.name(), scheme.name()));
        std::fs::write(&path, heatmap_csv(cells, metric)?).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}
