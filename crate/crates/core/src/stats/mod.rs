//! Rank-based statistics and small descriptive helpers.
//!
//! Distribution tails (chi-square, normal) come from `statrs`; every test
//! statistic is computed here.

mod agreement;
mod density;
mod ranks;

pub use agreement::{krippendorff_alpha, Rating};
pub use density::{default_grid, kernel_density, silverman_bandwidth, Density};
pub use ranks::{mid_ranks, spearman, RankVector};
pub(crate) use density::quantile_sorted;
pub(crate) use ranks::pearson;
pub use tests::{
    chi_square_upper_tail, kruskal_wallis, kruskal_wallis_unchecked, wilcoxon_rank_sum,
    wilcoxon_rank_sum_with, KruskalWallis, RankSum, RankSumMethod, DEFAULT_EXACT_MAX,
};

use crate::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample skewness `g1 = m3 / m2^(3/2)` using population central moments.
pub fn skewness(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::invalid("skewness needs at least three values"));
    }
    let m = mean(values);
    let n = values.len() as f64;
    let m2 = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    if m2 <= f64::EPSILON * m.abs().max(1.0) * 1e-6 || m2 == 0.0 {
        return Err(Error::invalid("skewness of a zero-variance sample"));
    }
    Ok(m3 / m2.powf(1.5))
}
