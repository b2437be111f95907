//! Property pruning, restricted cubic spline expansion and logistic fits.

mod logistic;
mod prune;
mod spline;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::metrics::{ChangeMetrics, Family, Property};
use crate::{Error, Result};

pub use logistic::{
    check_rank, fit_irls, log_likelihood, score, sigmoid, LogisticFit, MAX_ITERATIONS, RIDGE, SEPARATION_BOUND,
    TOLERANCE,
};
pub use prune::{
    collinearity_filter, r_squared, redundancy_filter, CollinearDrop, CollinearityResult, PropertyTable,
    RedundancyResult, RedundancyScale,
};
pub use spline::{knot_quantiles, rcs_basis, RestrictedCubicSpline, KNOT_QUANTILES_4};

/// Model terms for a set of properties. Column `j` of `x` is term `terms[j]`;
/// the intercept is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub terms: Vec<String>,
    pub x: DMatrix<f64>,
    pub term_map: BTreeMap<Property, Vec<usize>>,
    pub family_map: BTreeMap<Family, Vec<Property>>,
    pub splines: BTreeMap<Property, RestrictedCubicSpline>,
}

fn term_name(p: Property, j: usize) -> String {
    format!("{}{}", p.acronym(), "'".repeat(j))
}

impl DesignMatrix {
    /// Expands every property of `table` into a spline basis with `df` terms.
    pub fn build(table: &PropertyTable, df: usize) -> Result<Self> {
        let splines = table
            .properties
            .iter()
            .zip(&table.columns)
            .map(|(p, c)| Ok((*p, RestrictedCubicSpline::fit(c, df)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::with_splines(table, &splines)
    }

    /// Expands `table` with previously fitted splines (e.g. a model's knots).
    pub fn with_splines(table: &PropertyTable, splines: &BTreeMap<Property, RestrictedCubicSpline>) -> Result<Self> {
        let n = table.rows();
        let mut terms = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut term_map = BTreeMap::new();
        let mut family_map: BTreeMap<Family, Vec<Property>> = BTreeMap::new();
        for (&p, spline) in splines {
            let values = table
                .column(p)
                .ok_or_else(|| Error::invalid(format!("design needs property {}", p.acronym())))?;
            let basis = spline.basis(values);
            let idx: Vec<usize> = (terms.len()..terms.len() + basis.len()).collect();
            for (j, c) in basis.into_iter().enumerate() {
                terms.push(term_name(p, j));
                cols.push(c);
            }
            term_map.insert(p, idx);
            family_map.entry(p.family()).or_default().push(p);
        }
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Ok(Self {
            terms,
            x,
            term_map,
            family_map,
            splines: splines.clone(),
        })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    fn with_intercept(&self) -> DMatrix<f64> {
        let n = self.x.nrows();
        DMatrix::from_fn(n, self.x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { self.x[(i, j - 1)] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    /// Term names, excluding the intercept.
    pub terms: Vec<String>,
    /// Intercept first, then one per term.
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub n_obs: usize,
    pub n_events: usize,
    pub knots: BTreeMap<Property, Vec<f64>>,
    /// Indices into `coefficients` (so the intercept is never listed).
    pub term_map: BTreeMap<Property, Vec<usize>>,
    pub family_map: BTreeMap<Family, Vec<Property>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FittedModel {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let p = self.coefficients.len();
        DMatrix::from_fn(p, p, |i, j| self.covariance[i][j])
    }

    pub fn properties(&self) -> Vec<Property> {
        self.knots.keys().copied().collect()
    }

    pub fn splines(&self) -> Result<BTreeMap<Property, RestrictedCubicSpline>> {
        self.knots
            .iter()
            .map(|(p, k)| Ok((*p, RestrictedCubicSpline::with_knots(k.clone())?)))
            .collect()
    }

    /// Design for new rows using this model's knots.
    pub fn design_for<'a>(&self, rows: impl IntoIterator<Item = &'a ChangeMetrics>) -> Result<DesignMatrix> {
        let table = PropertyTable::from_rows(rows, &self.properties());
        DesignMatrix::with_splines(&table, &self.splines()?)
    }

    pub fn predict_rows<'a>(&self, rows: impl IntoIterator<Item = &'a ChangeMetrics>) -> Result<Vec<f64>> {
        predict(self, &self.design_for(rows)?)
    }
}

pub fn fit_logistic(design: &DesignMatrix, outcome: &[bool]) -> Result<FittedModel> {
    let fit = fit_irls(&design.with_intercept(), outcome)?;
    let p = fit.beta.len();
    Ok(FittedModel {
        terms: design.terms.clone(),
        coefficients: fit.beta.iter().copied().collect(),
        covariance: (0..p).map(|i| (0..p).map(|j| fit.covariance[(i, j)]).collect()).collect(),
        converged: fit.converged,
        iterations: fit.iterations,
        deviance: fit.deviance,
        n_obs: outcome.len(),
        n_events: outcome.iter().filter(|&&v| v).count(),
        knots: design.splines.iter().map(|(p, s)| (*p, s.knots.clone())).collect(),
        term_map: design
            .term_map
            .iter()
            .map(|(p, idx)| (*p, idx.iter().map(|i| i + 1).collect()))
            .collect(),
        family_map: design.family_map.clone(),
        warnings: fit.warnings,
    })
}

/// Inverse-logit of the linear predictor for each design row, kept strictly
/// inside (0, 1).
pub fn predict(model: &FittedModel, design: &DesignMatrix) -> Result<Vec<f64>> {
    if design.terms != model.terms {
        return Err(Error::invalid(format!(
            "design terms {:?} do not match model terms {:?}",
            design.terms, model.terms
        )));
    }
    let beta = DVector::from_column_slice(&model.coefficients[1..]);
    let eta = &design.x * beta;
    let hi = 1.0 - f64::EPSILON / 2.0;
    Ok(eta
        .iter()
        .map(|e| sigmoid(e + model.intercept()).clamp(f64::MIN_POSITIVE, hi))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub collinearity_threshold: f64,
    pub redundancy_threshold: f64,
    pub redundancy_scale: RedundancyScale,
    pub spline_df: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            collinearity_threshold: 0.7,
            redundancy_threshold: 0.9,
            redundancy_scale: RedundancyScale::Rank,
            spline_df: 3,
        }
    }
}

/// A fitted model together with the pruning that preceded it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub collinearity: CollinearityResult,
    pub redundancy: RedundancyResult,
    pub model: FittedModel,
}

/// Prunes `candidates`, expands the survivors and fits `is_bic`.
pub fn build_model(rows: &[ChangeMetrics], candidates: &[Property], config: &ModelConfig) -> Result<ModelReport> {
    let table = PropertyTable::from_rows(rows, candidates);
    let collinearity = collinearity_filter(&table, config.collinearity_threshold)?;
    let table = table.select(&collinearity.retained);
    let redundancy = redundancy_filter(&table, config.redundancy_threshold, config.redundancy_scale)?;
    let table = table.select(&redundancy.retained);
    let design = DesignMatrix::build(&table, config.spline_df)?;
    let outcome: Vec<bool> = rows.iter().map(|r| r.is_bic).collect();
    let model = fit_logistic(&design, &outcome)?;
    Ok(ModelReport {
        collinearity,
        redundancy,
        model,
    })
}
