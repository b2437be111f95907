use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 25;
pub const TOLERANCE: f64 = 1e-8;
pub const RIDGE: f64 = 1e-8;
pub const SEPARATION_BOUND: f64 = 15.0;

/// Raw IRLS result on a design that already includes the intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub beta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub warnings: Vec<String>,
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^eta)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

pub fn log_likelihood(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| if yi { e - softplus(e) } else { -softplus(e) })
        .sum()
}

/// Gradient of the log-likelihood: `Xᵀ(y - p)`.
pub fn score(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let resid = DVector::from_iterator(y.len(), eta.iter().zip(y).map(|(&e, &yi)| yi as u8 as f64 - sigmoid(e)));
    x.transpose() * resid
}

fn information(x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let mut xw = x.clone();
    for (i, e) in eta.iter().enumerate() {
        let p = sigmoid(*e);
        let w = p * (1.0 - p);
        xw.row_mut(i).scale_mut(w);
    }
    let mut h = x.transpose() * xw;
    for i in 0..h.nrows() {
        h[(i, i)] += RIDGE;
    }
    h
}

fn invert(h: DMatrix<f64>) -> Result<DMatrix<f64>> {
    match h.clone().cholesky() {
        Some(c) => Ok(c.inverse()),
        None => h
            .try_inverse()
            .ok_or_else(|| Error::Numerical("information matrix is singular".into())),
    }
}

/// Checks that `x` has full column rank after scaling columns to unit norm.
pub fn check_rank(x: &DMatrix<f64>) -> Result<()> {
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let n = col.norm();
        if n == 0.0 {
            return Err(Error::Numerical("design has an all-zero column".into()));
        }
        col /= n;
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= max * 1e-10 {
        return Err(Error::Numerical("design matrix is rank deficient".into()));
    }
    Ok(())
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares (Newton steps with step halving). `x` must contain the intercept.
pub fn fit_irls(x: &DMatrix<f64>, y: &[bool]) -> Result<LogisticFit> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} outcomes", x.nrows(), y.len())));
    }
    let events = y.iter().filter(|&&v| v).count();
    if events == 0 || events == y.len() {
        return Err(Error::invalid("outcome has a single class; a logistic fit needs both"));
    }
    check_rank(x)?;
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let g = score(x, y, &beta);
        let h = information(x, &beta);
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => h
                .lu()
                .solve(&g)
                .ok_or_else(|| Error::Numerical("information matrix is singular".into()))?,
        };
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut next_ll = log_likelihood(x, y, &next);
        let mut halvings = 0;
        while !(next_ll >= ll - 1e-12 * ll.abs()) && halvings < 30 {
            scale *= 0.5;
            next = &beta + &step * scale;
            next_ll = log_likelihood(x, y, &next);
            halvings += 1;
        }
        let change = (&step * scale).amax();
        beta = next;
        ll = next_ll;
        if change < TOLERANCE {
            converged = true;
            break;
        }
    }
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("no convergence after {MAX_ITERATIONS} iterations"));
    }
    if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
        converged = false;
        let msg = format!("coefficient beyond ±{SEPARATION_BOUND}: possible separation");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let covariance = invert(information(x, &beta))?;
    Ok(LogisticFit {
        beta,
        covariance,
        converged,
        iterations,
        deviance: -2.0 * ll,
        warnings,
    })
}
