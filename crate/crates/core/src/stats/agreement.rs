use std::collections::BTreeMap;

use crate::{Error, Result};

/// One cell of a rater × item matrix; `None` when the rater skipped the item.
pub type Rating<T> = Option<T>;

/// Krippendorff's alpha for nominal data via the coincidence matrix.
///
/// `ratings[r][i]` is rater `r`'s value for item `i`. Items with fewer than
/// two values are not pairable and are ignored. When every pairable value
/// falls in one category the expected disagreement is zero; alpha is then
/// reported as 1.0 (nothing to disagree on).
pub fn krippendorff_alpha<T: Ord + Clone>(ratings: &[Vec<Rating<T>>]) -> Result<f64> {
    let items = ratings.iter().map(Vec::len).max().unwrap_or(0);
    let mut coincidence: BTreeMap<(T, T), f64> = BTreeMap::new();
    for item in 0..items {
        let values: Vec<&T> = ratings
            .iter()
            .filter_map(|row| row.get(item).and_then(Option::as_ref))
            .collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        let weight = 1.0 / (m - 1) as f64;
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                if i != j {
                    *coincidence.entry(((*a).clone(), (*b).clone())).or_default() += weight;
                }
            }
        }
    }
    if coincidence.is_empty() {
        return Err(Error::invalid("krippendorff's alpha: no pairable values"));
    }
    let mut marginals: BTreeMap<&T, f64> = BTreeMap::new();
    let mut observed = 0.0;
    for ((c, k), o) in &coincidence {
        *marginals.entry(c).or_default() += o;
        if c != k {
            observed += o;
        }
    }
    let n: f64 = marginals.values().sum();
    let expected_pairs: f64 = {
        let sum: f64 = marginals.values().sum();
        let sq: f64 = marginals.values().map(|v| v * v).sum();
        sum * sum - sq
    };
    let d_o = observed / n;
    let d_e = expected_pairs / (n * (n - 1.0));
    if d_e <= 0.0 {
        return Ok(if d_o == 0.0 { 1.0 } else { f64::NAN });
    }
    Ok(1.0 - d_o / d_e)
}
