use serde::{Deserialize, Serialize};

use crate::stats::quantile_sorted;
use crate::{Error, Result};

/// Knot quantiles for four knots.
pub const KNOT_QUANTILES_4: [f64; 4] = [0.05, 0.35, 0.65, 0.95];

/// Default knot quantiles for `k` knots (3 to 7).
pub fn knot_quantiles(k: usize) -> Result<Vec<f64>> {
    Ok(match k {
        3 => vec![0.10, 0.5, 0.90],
        4 => KNOT_QUANTILES_4.to_vec(),
        5 => vec![0.05, 0.275, 0.5, 0.725, 0.95],
        6 => vec![0.05, 0.23, 0.41, 0.59, 0.77, 0.95],
        7 => vec![0.025, 0.1833, 0.3417, 0.5, 0.6583, 0.8167, 0.975],
        _ => return Err(Error::invalid(format!("unsupported knot count {k}; use 3 to 7"))),
    })
}

/// A restricted cubic spline: linear below the first and above the last
/// knot, cubic in between. An empty knot vector means linear only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedCubicSpline {
    pub knots: Vec<f64>,
}

impl RestrictedCubicSpline {
    /// Places `df + 1` knots at the default quantiles of `values`. Falls back
    /// to linear when there are too few distinct values or knots coincide.
    pub fn fit(values: &[f64], df: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("spline basis of an empty vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("spline basis of non-finite values"));
        }
        if df <= 1 {
            return Ok(Self { knots: vec![] });
        }
        let k = df + 1;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < k {
            return Ok(Self { knots: vec![] });
        }
        let mut knots: Vec<f64> = knot_quantiles(k)?
            .into_iter()
            .map(|q| quantile_sorted(&sorted, q))
            .collect();
        knots.dedup();
        if knots.len() < 3 {
            knots.clear();
        }
        Ok(Self { knots })
    }

    pub fn with_knots(knots: Vec<f64>) -> Result<Self> {
        if !knots.is_empty() && (knots.len() < 3 || knots.windows(2).any(|w| w[0] >= w[1])) {
            return Err(Error::invalid("spline knots must be at least 3 and strictly increasing"));
        }
        Ok(Self { knots })
    }

    /// Number of columns: one linear term plus `knots - 2` nonlinear terms.
    pub fn terms(&self) -> usize {
        1 + self.knots.len().saturating_sub(2)
    }

    /// Writes the basis at `x` into `out` (length [`Self::terms`]).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        out[0] = x;
        let t = &self.knots;
        if t.len() < 3 {
            return;
        }
        let k = t.len();
        let (tk, tk1) = (t[k - 1], t[k - 2]);
        let norm = (tk - t[0]).powi(2);
        let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
        for j in 0..k - 2 {
            let tj = t[j];
            out[j + 1] = (cube(x - tj) - cube(x - tk1) * (tk - tj) / (tk - tk1) + cube(x - tk) * (tk1 - tj) / (tk - tk1))
                / norm;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.terms()];
        self.eval_into(x, &mut out);
        out
    }

    /// Column-wise basis for `values`.
    pub fn basis(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let mut cols = vec![Vec::with_capacity(values.len()); self.terms()];
        let mut buf = vec![0.0; self.terms()];
        for &x in values {
            self.eval_into(x, &mut buf);
            for (c, v) in cols.iter_mut().zip(&buf) {
                c.push(*v);
            }
        }
        cols
    }
}

/// Basis columns and knots for `values` with `df` terms.
pub fn rcs_basis(values: &[f64], df: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let spline = RestrictedCubicSpline::fit(values, df)?;
    Ok((spline.basis(values), spline.knots))
}
