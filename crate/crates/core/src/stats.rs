//! Weighted statistics. All reductions run left to right over the input so
//! results do not depend on how the inputs were produced.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn weight_sum(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::DegenerateWeights);
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        Ok(total)
    } else {
        Err(Error::DegenerateWeights)
    }
}

fn check_lengths(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    Ok(())
}

/// `Σ wᵢvᵢ / Σ wᵢ`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    check_lengths(values, weights)?;
    let total = weight_sum(weights)?;
    let acc: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    Ok(acc / total)
}

/// Weighted (biased, normalized-weight) variance.
pub fn weighted_variance(values: &[f64], weights: &[f64]) -> Result<f64> {
    let mean = weighted_mean(values, weights)?;
    let total = weight_sum(weights)?;
    let acc: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum();
    Ok(acc / total)
}

/// Delta-method standard error of a self-normalized weighted mean:
/// `sqrt(Σ wᵢ²(vᵢ − μ)²) / Σ wᵢ`.
pub fn weighted_mean_std_error(values: &[f64], weights: &[f64]) -> Result<f64> {
    let mean = weighted_mean(values, weights)?;
    let total = weight_sum(weights)?;
    let acc: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| (w * (v - mean)).powi(2))
        .sum();
    Ok(acc.sqrt() / total)
}

/// `(Σwᵢ)² / Σwᵢ²`, in `(0, K]`.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let total = weight_sum(weights)?;
    // Scale by the maximum so tiny weights do not underflow when squared.
    let max = weights.iter().cloned().fold(0.0, f64::max);
    let scaled_total = total / max;
    let sq: f64 = weights.iter().map(|w| (w / max) * (w / max)).sum();
    Ok(scaled_total * scaled_total / sq)
}

/// Sample mean and sample standard deviation (n − 1 denominator, 0 for n ≤ 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Normalized bin masses plus the mass that fell outside the edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub below: f64,
    pub above: f64,
}

impl Histogram {
    pub fn in_range_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.in_range_mass() + self.below + self.above
    }
}

/// Evenly spaced edges over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let step = (hi - lo) / bins as f64;
    (0..=bins)
        .map(|i| if i == bins { hi } else { lo + step * i as f64 })
        .collect()
}

/// Bins are half-open `[e_i, e_{i+1})` except the last, which includes its
/// right edge. Non-finite values count as out of range.
pub fn histogram(values: &[f64], weights: Option<&[f64]>, edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 {
        return Err(Error::InvalidBins(format!(
            "need at least 2 edges, got {}",
            edges.len()
        )));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidBins("edges must be finite and strictly increasing".into()));
    }
    let nbins = edges.len() - 1;
    let mut hist = Histogram {
        edges: edges.to_vec(),
        masses: vec![0.0; nbins],
        below: 0.0,
        above: 0.0,
    };
    if values.is_empty() {
        return Ok(hist);
    }
    let owned;
    let weights = match weights {
        Some(w) => {
            check_lengths(values, w)?;
            w
        }
        None => {
            owned = vec![1.0; values.len()];
            &owned
        }
    };
    let total = weight_sum(weights)?;
    let (lo, hi) = (edges[0], edges[nbins]);
    for (&x, &w) in values.iter().zip(weights) {
        let w = w / total;
        if x.is_nan() || x < lo {
            hist.below += w;
        } else if x > hi {
            hist.above += w;
        } else {
            // First edge strictly greater than x, minus one.
            let idx = edges.partition_point(|e| *e <= x).saturating_sub(1).min(nbins - 1);
            hist.masses[idx] += w;
        }
    }
    Ok(hist)
}
