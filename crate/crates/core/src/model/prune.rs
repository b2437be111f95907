use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::metrics::{ChangeMetrics, Property};
use crate::stats::{mid_ranks, pearson};
use crate::{Error, Result};

/// Property values by column, in taxonomy order.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyTable {
    pub properties: Vec<Property>,
    pub columns: Vec<Vec<f64>>,
}

impl PropertyTable {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a ChangeMetrics>, properties: &[Property]) -> Self {
        let mut props = properties.to_vec();
        props.sort();
        props.dedup();
        let mut columns = vec![Vec::new(); props.len()];
        for r in rows {
            for (c, &p) in columns.iter_mut().zip(&props) {
                c.push(r.get(p));
            }
        }
        Self {
            properties: props,
            columns,
        }
    }

    /// Builds a table from explicit columns; properties are sorted into
    /// taxonomy order together with their columns.
    pub fn new(columns: Vec<(Property, Vec<f64>)>) -> Result<Self> {
        let mut columns = columns;
        columns.sort_by_key(|(p, _)| *p);
        if columns.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("duplicate property column"));
        }
        let n = columns.first().map_or(0, |c| c.1.len());
        if columns.iter().any(|c| c.1.len() != n) {
            return Err(Error::invalid("property columns differ in length"));
        }
        let (properties, columns) = columns.into_iter().unzip();
        Ok(Self { properties, columns })
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, p: Property) -> Option<&[f64]> {
        self.properties.iter().position(|&q| q == p).map(|i| self.columns[i].as_slice())
    }

    pub fn select(&self, keep: &[Property]) -> Self {
        let (properties, columns) = self
            .properties
            .iter()
            .zip(&self.columns)
            .filter(|(p, _)| keep.contains(p))
            .map(|(p, c)| (*p, c.clone()))
            .unzip();
        Self { properties, columns }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearDrop {
    pub property: Property,
    pub kept: Property,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearityResult {
    pub retained: Vec<Property>,
    pub dropped: Vec<CollinearDrop>,
    pub constant: Vec<Property>,
}

/// Greedy scan in taxonomy order: a property is kept unless its Spearman
/// |rho| with an already kept property exceeds `threshold`. Constant
/// columns are dropped up front.
pub fn collinearity_filter(table: &PropertyTable, threshold: f64) -> Result<CollinearityResult> {
    if table.rows() < 2 {
        return Err(Error::invalid("collinearity filter needs at least two observations"));
    }
    let mut constant = Vec::new();
    let mut candidates: Vec<(Property, Vec<f64>)> = Vec::new();
    for (p, c) in table.properties.iter().zip(&table.columns) {
        if c.iter().all(|v| *v == c[0]) {
            log::warn!("property {} is constant and was dropped", p.acronym());
            constant.push(*p);
        } else {
            candidates.push((*p, mid_ranks(c)));
        }
    }
    let mut kept: Vec<(Property, Vec<f64>)> = Vec::new();
    let mut dropped = Vec::new();
    for (p, ranks) in candidates {
        let clash = kept.iter().find_map(|(q, other)| {
            let rho = pearson(&ranks, other).unwrap_or(0.0);
            (rho.abs() > threshold).then_some((*q, rho))
        });
        match clash {
            Some((q, rho)) => dropped.push(CollinearDrop {
                property: p,
                kept: q,
                rho,
            }),
            None => kept.push((p, ranks)),
        }
    }
    Ok(CollinearityResult {
        retained: kept.into_iter().map(|(p, _)| p).collect(),
        dropped,
        constant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedundancyScale {
    /// Regress mid-ranks on mid-ranks.
    #[default]
    Rank,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyResult {
    pub retained: Vec<Property>,
    /// Dropped properties with the R² that removed them, in drop order.
    pub dropped: Vec<(Property, f64)>,
}

/// R² of an OLS fit of `y` on `xs` with intercept.
pub fn r_squared(y: &[f64], xs: &[&[f64]]) -> f64 {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return 1.0;
    }
    let x = DMatrix::from_fn(n, xs.len() + 1, |i, j| if j == 0 { 1.0 } else { xs[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let beta = match x.clone().svd(true, true).solve(&yv, 1e-12) {
        Ok(b) => b,
        Err(_) => return 0.0,
    };
    let resid = &yv - &x * beta;
    let ssr = resid.norm_squared();
    (1.0 - ssr / sst).clamp(0.0, 1.0)
}

/// Repeatedly regresses each remaining property on the others and drops the
/// one with the largest R² at or above `threshold`. Ties go to the property
/// listed later in taxonomy order.
pub fn redundancy_filter(table: &PropertyTable, threshold: f64, scale: RedundancyScale) -> Result<RedundancyResult> {
    if table.rows() < table.properties.len() {
        return Err(Error::invalid(format!(
            "redundancy filter: {} observations for {} properties",
            table.rows(),
            table.properties.len()
        )));
    }
    let data: Vec<Vec<f64>> = table
        .columns
        .iter()
        .map(|c| match scale {
            RedundancyScale::Rank => mid_ranks(c),
            RedundancyScale::Raw => c.clone(),
        })
        .collect();
    let mut alive: Vec<usize> = (0..table.properties.len()).collect();
    let mut dropped = Vec::new();
    while alive.len() >= 2 {
        let mut worst: Option<(usize, f64)> = None;
        for (pos, &j) in alive.iter().enumerate() {
            let others: Vec<&[f64]> = alive.iter().filter(|&&k| k != j).map(|&k| data[k].as_slice()).collect();
            let r2 = r_squared(&data[j], &others);
            if r2 >= threshold && worst.is_none_or(|(_, w)| r2 >= w - 1e-10) {
                worst = Some((pos, r2));
            }
        }
        match worst {
            Some((pos, r2)) => {
                let j = alive.remove(pos);
                dropped.push((table.properties[j], r2));
            }
            None => break,
        }
    }
    Ok(RedundancyResult {
        retained: alive.into_iter().map(|j| table.properties[j]).collect(),
        dropped,
    })
}
