use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Scheme;
use crate::metrics::Family;
use crate::model::FittedModel;
use crate::stats::chi_square_upper_tail;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the sum of the per-family statistics.
    #[default]
    FamilySum,
    /// Divide by the joint statistic over every model term.
    JointTotal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyScore {
    pub family: Family,
    /// `None` when the family's covariance block is singular.
    pub wald_chi2: Option<f64>,
    pub df: usize,
    pub p_value: f64,
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyImportance {
    pub period: u32,
    pub scheme: Scheme,
    pub normalization: Normalization,
    /// Joint statistic over all non-intercept terms.
    pub total_wald_chi2: Option<f64>,
    /// One entry per family, in taxonomy order. Families without terms in
    /// the model score zero.
    pub families: Vec<FamilyScore>,
}

impl FamilyImportance {
    pub fn get(&self, family: Family) -> Option<&FamilyScore> {
        self.families.iter().find(|f| f.family == family)
    }
}

/// `βᵀ V⁻¹ β`, or `None` when `V` is not positive definite.
fn wald(beta: &DVector<f64>, cov: &DMatrix<f64>) -> Option<f64> {
    let chol = cov.clone().cholesky()?;
    let w = beta.dot(&chol.solve(beta));
    w.is_finite().then_some(w.max(0.0))
}

fn sub(model: &FittedModel, idx: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let beta = DVector::from_iterator(idx.len(), idx.iter().map(|&i| model.coefficients[i]));
    let cov = DMatrix::from_fn(idx.len(), idx.len(), |a, b| model.covariance[idx[a]][idx[b]]);
    (beta, cov)
}

/// Joint Wald chi-square per family of model terms.
pub fn family_importance(
    model: &FittedModel,
    period: u32,
    scheme: Scheme,
    normalization: Normalization,
) -> Result<FamilyImportance> {
    let p = model.coefficients.len();
    if model.covariance.len() != p || model.covariance.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("covariance does not match the coefficients"));
    }
    let mut raw: Vec<(Family, Option<f64>, usize)> = Vec::new();
    for family in Family::ALL {
        let idx: Vec<usize> = model
            .family_map
            .get(&family)
            .into_iter()
            .flatten()
            .flat_map(|prop| model.term_map.get(prop).into_iter().flatten().copied())
            .collect();
        if idx.is_empty() {
            raw.push((family, Some(0.0), 0));
            continue;
        }
        let (beta, cov) = sub(model, &idx);
        let w = wald(&beta, &cov);
        if w.is_none() {
            log::warn!("{family} covariance block is singular; family left out of the normalization");
        }
        raw.push((family, w, idx.len()));
    }
    let all: Vec<usize> = (1..p).collect();
    let total = if all.is_empty() {
        Some(0.0)
    } else {
        let (beta, cov) = sub(model, &all);
        wald(&beta, &cov)
    };
    let denom = match normalization {
        Normalization::FamilySum => Some(raw.iter().filter_map(|(_, w, _)| *w).sum::<f64>()),
        Normalization::JointTotal => total,
    };
    let families = raw
        .into_iter()
        .map(|(family, w, df)| FamilyScore {
            family,
            wald_chi2: w,
            df,
            p_value: match (w, df) {
                (Some(w), df) if df > 0 => chi_square_upper_tail(w, df),
                _ => 1.0,
            },
            normalized: w.map(|w| match denom {
                Some(d) if d > 0.0 => w / d,
                _ => 0.0,
            }),
        })
        .collect();
    Ok(FamilyImportance {
        period,
        scheme,
        normalization,
        total_wald_chi2: total,
        families,
    })
}

/// `FIS(f, i) - FIS(f, j)` per family; `None` where either side is
/// untestable. Positive values mean model `i` overestimates the importance
/// that family has in model `j`.
pub fn fis_diff(imp_i: &FamilyImportance, imp_j: &FamilyImportance) -> Result<BTreeMap<Family, Option<f64>>> {
    let fams = |imp: &FamilyImportance| imp.families.iter().map(|f| f.family).collect::<Vec<_>>();
    if fams(imp_i) != fams(imp_j) {
        return Err(Error::invalid("family sets differ between the two importance results"));
    }
    Ok(imp_i
        .families
        .iter()
        .zip(&imp_j.families)
        .map(|(a, b)| {
            let d = match (a.normalized, b.normalized) {
                (Some(x), Some(y)) => Some(x - y),
                _ => None,
            };
            (a.family, d)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub scheme: Scheme,
    pub train_period: u32,
    pub future_period: u32,
    pub family: Family,
    pub fis_train: Option<f64>,
    pub fis_future: Option<f64>,
    pub fis_diff: Option<f64>,
}

/// FISDiff for every pair of training periods `i < j`.
pub fn stability(importances: &[FamilyImportance]) -> Result<Vec<StabilityRow>> {
    let mut out = Vec::new();
    for a in importances {
        for b in importances.iter().filter(|b| b.scheme == a.scheme && b.period > a.period) {
            for (family, d) in fis_diff(a, b)? {
                out.push(StabilityRow {
                    scheme: a.scheme,
                    train_period: a.period,
                    future_period: b.period,
                    family,
                    fis_train: a.get(family).and_then(|f| f.normalized),
                    fis_future: b.get(family).and_then(|f| f.normalized),
                    fis_diff: d,
                });
            }
        }
    }
    out.sort_by(|x, y| {
        (x.scheme, x.train_period, x.future_period, x.family).cmp(&(y.scheme, y.train_period, y.future_period, y.family))
    });
    Ok(out)
}
