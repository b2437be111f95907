use serde::{Deserialize, Serialize};

use super::mean;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// The sample had zero spread; the density is a spike at its value.
    pub degenerate: bool,
}

/// Silverman's rule of thumb: 0.9 · min(sd, IQR/1.34) · n^(-1/5).
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = mean(values);
    let sd = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Linear-interpolation quantile (type 7) of an already sorted slice.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gaussian kernel density estimate evaluated on `grid`.
pub fn kernel_density(values: &[f64], grid: &[f64]) -> Result<Density> {
    if values.len() < 2 {
        return Err(Error::invalid("kernel density needs at least two values"));
    }
    let bandwidth = silverman_bandwidth(values);
    if bandwidth <= 0.0 || !bandwidth.is_finite() {
        let spike = values[0];
        let density = grid
            .iter()
            .map(|&g| if g == spike { f64::INFINITY } else { 0.0 })
            .collect();
        return Ok(Density {
            grid: grid.to_vec(),
            density,
            bandwidth: 0.0,
            degenerate: true,
        });
    }
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&g| {
            norm * values
                .iter()
                .map(|&v| {
                    let z = (g - v) / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(Density {
        grid: grid.to_vec(),
        density,
        bandwidth,
        degenerate: false,
    })
}

/// Evenly spaced grid covering the sample padded by three bandwidths.
pub fn default_grid(values: &[f64], points: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 3.0 * silverman_bandwidth(values).max(0.0);
    let (lo, hi) = (lo - pad, hi + pad);
    if points < 2 || hi <= lo {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn symmetric_input_gives_symmetric_density() {
        let values = [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0];
        let grid = linspace(-6.0, 6.0, 241);
        let d = kernel_density(&values, &grid).unwrap();
        let n = d.density.len();
        let asym = (0..n)
            .map(|i| (d.density[i] - d.density[n - 1 - i]).abs())
            .fold(0.0, f64::max);
        assert!(asym < 1e-9);
        assert!(d.density.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn integrates_to_one() {
        let values = [0.3, 1.2, 2.2, 2.4, 5.0, 7.5, 7.7];
        let grid = linspace(-20.0, 30.0, 5001);
        let d = kernel_density(&values, &grid).unwrap();
        let h = grid[1] - grid[0];
        let integral: f64 = d
            .density
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * h)
            .sum();
        assert!((integral - 1.0).abs() < 0.01);
    }

    #[test]
    fn bimodal_clusters_have_two_maxima() {
        let values = [-0.2, -0.1, 0.0, 0.1, 0.2, 9.8, 9.9, 10.0, 10.1, 10.2];
        let grid = linspace(-5.0, 15.0, 401);
        let d = kernel_density(&values, &grid).unwrap();
        let maxima = (1..d.density.len() - 1)
            .filter(|&i| d.density[i] > d.density[i - 1] && d.density[i] > d.density[i + 1])
            .count();
        assert_eq!(maxima, 2);
    }

    #[test]
    fn constant_sample_is_flagged() {
        let d = kernel_density(&[2.0, 2.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(d.degenerate);
        assert!(kernel_density(&[1.0], &[0.0]).is_err());
    }
}
