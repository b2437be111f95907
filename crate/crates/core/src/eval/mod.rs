//! Period-grid evaluation, family importance and its stability over time.

mod export;
mod importance;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{ChangeMetrics, Property};
use crate::model::{build_model, ModelConfig, ModelReport};
use crate::stats::mid_ranks;
use crate::{Error, Result};

pub use export::{export_heatmaps, heatmap_csv, importance_csv, stability_csv, HeatmapMetric};
pub use importance::{
    family_importance, fis_diff, stability, FamilyImportance, FamilyScore, Normalization, StabilityRow,
};

/// Area under the ROC curve as the Mann-Whitney statistic: the share of
/// (positive, negative) pairs where the positive scores higher, ties 0.5.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("auc: NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("auc needs at least one positive and one negative"));
    }
    let ranks = mid_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Mean squared difference between probability and outcome.
pub fn brier(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::invalid(format!("{} probabilities but {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(Error::invalid("brier score of an empty sample"));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| (p - if y { 1.0 } else { 0.0 }).powi(2))
        .sum();
    Ok(sum / probs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Train on one period.
    Short,
    /// Train on every period up to and including the training period.
    Long,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Short, Scheme::Long];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Short => "short",
            Scheme::Long => "long",
        }
    }

    pub fn includes(self, train_period: u32, period: u32) -> bool {
        match self {
            Scheme::Short => period == train_period,
            Scheme::Long => period <= train_period,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(Scheme::Short),
            "long" => Ok(Scheme::Long),
            other => Err(Error::invalid(format!("unknown scheme `{other}` (short|long)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEval {
    pub scheme: Scheme,
    pub train_period: u32,
    pub test_period: u32,
    pub auc: f64,
    pub brier: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub converged: bool,
    /// Same model scored on its own (most recent) training period.
    pub self_auc: Option<f64>,
    pub self_brier: Option<f64>,
}

impl PeriodEval {
    pub fn delta_auc(&self) -> Option<f64> {
        self.self_auc.map(|s| self.auc - s)
    }

    pub fn delta_brier(&self) -> Option<f64> {
        self.self_brier.map(|s| self.brier - s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub train_period: u32,
    pub test_period: Option<u32>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub cells: Vec<PeriodEval>,
    /// Model per training period.
    pub models: BTreeMap<u32, ModelReport>,
    pub skipped: Vec<Skipped>,
}

/// Rows of `period`, in input order.
pub fn period_rows(rows: &[ChangeMetrics], period: u32) -> Vec<&ChangeMetrics> {
    rows.iter().filter(|r| r.period == Some(period)).collect()
}

/// Training rows for `train_period` under `scheme`.
pub fn training_rows(rows: &[ChangeMetrics], scheme: Scheme, train_period: u32) -> Vec<ChangeMetrics> {
    rows.iter()
        .filter(|r| r.period.is_some_and(|p| scheme.includes(train_period, p)))
        .cloned()
        .collect()
}

fn score(model: &ModelReport, rows: &[&ChangeMetrics]) -> Result<Option<(f64, f64)>> {
    let labels: Vec<bool> = rows.iter().map(|r| r.is_bic).collect();
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Ok(None);
    }
    let probs = model.model.predict_rows(rows.iter().copied())?;
    Ok(Some((auc(&probs, &labels)?, brier(&probs, &labels)?)))
}

/// Models fitted per training period under one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedScheme {
    pub scheme: Scheme,
    pub models: BTreeMap<u32, ModelReport>,
    pub skipped: Vec<Skipped>,
}

/// Fits one model per training period and tests it on every later period.
/// Rows must carry a `period`. Training sets with a single class and test
/// sets with a single class are skipped and reported.
pub fn run_scheme(
    rows: &[ChangeMetrics],
    scheme: Scheme,
    candidates: &[Property],
    config: &ModelConfig,
) -> Result<SchemeResult> {
    evaluate_scheme(rows, &fit_scheme(rows, scheme, candidates, config)?)
}

fn periods_of(rows: &[ChangeMetrics]) -> Result<BTreeSet<u32>> {
    let periods: BTreeSet<u32> = rows.iter().filter_map(|r| r.period).collect();
    if periods.len() < 2 {
        return Err(Error::invalid(format!(
            "evaluation needs at least two periods, found {}",
            periods.len()
        )));
    }
    Ok(periods)
}

/// Fits the model of every training period (all but the last) in parallel.
pub fn fit_scheme(
    rows: &[ChangeMetrics],
    scheme: Scheme,
    candidates: &[Property],
    config: &ModelConfig,
) -> Result<FittedScheme> {
    let periods = periods_of(rows)?;
    let last = *periods.iter().next_back().unwrap_or(&0);
    let train_periods: Vec<u32> = periods.iter().copied().filter(|&p| p < last).collect();
    let fitted: Vec<(u32, std::result::Result<ModelReport, String>)> = train_periods
        .par_iter()
        .map(|&n| {
            let train = training_rows(rows, scheme, n);
            (n, build_model(&train, candidates, config).map_err(|e| e.to_string()))
        })
        .collect();

    let mut models = BTreeMap::new();
    let mut skipped = Vec::new();
    for (n, res) in fitted {
        match res {
            Ok(m) => {
                models.insert(n, m);
            }
            Err(reason) => {
                log::warn!("{scheme} model for period {n} skipped: {reason}");
                skipped.push(Skipped {
                    train_period: n,
                    test_period: None,
                    reason,
                });
            }
        }
    }
    Ok(FittedScheme {
        scheme,
        models,
        skipped,
    })
}

/// Scores every fitted model on each later period.
pub fn evaluate_scheme(rows: &[ChangeMetrics], fitted: &FittedScheme) -> Result<SchemeResult> {
    let periods = periods_of(rows)?;
    let scheme = fitted.scheme;
    let mut skipped = fitted.skipped.clone();
    let mut cells = Vec::new();
    for (&n, model) in &fitted.models {
        let own = period_rows(rows, n);
        let self_scores = score(model, &own)?;
        let n_train = rows
            .iter()
            .filter(|r| r.period.is_some_and(|p| scheme.includes(n, p)))
            .count();
        for &m in periods.iter().filter(|&&m| m > n) {
            let test = period_rows(rows, m);
            match score(model, &test)? {
                Some((a, b)) => cells.push(PeriodEval {
                    scheme,
                    train_period: n,
                    test_period: m,
                    auc: a,
                    brier: b,
                    n_train,
                    n_test: test.len(),
                    converged: model.model.converged,
                    self_auc: self_scores.map(|s| s.0),
                    self_brier: self_scores.map(|s| s.1),
                }),
                None => skipped.push(Skipped {
                    train_period: n,
                    test_period: Some(m),
                    reason: "test period has a single class".into(),
                }),
            }
        }
    }
    Ok(SchemeResult {
        scheme,
        cells,
        models: fitted.models.clone(),
        skipped,
    })
}
