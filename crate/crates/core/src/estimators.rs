//! Binned marginal densities on the circle and the torus, and metrics for
//! comparing them with reference densities.

use std::f64::consts::TAU;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::torus::Phase;

pub const DEFAULT_BINS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("histogram is empty")]
    Empty,
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("grid mismatch: {left} bins vs {right}")]
    GridMismatch { left: usize, right: usize },
}

#[inline]
fn bin_of(theta: Phase, n_bins: usize) -> usize {
    // floor(θ·B/2π), clamped against rounding at the top edge
    ((theta.radians() * n_bins as f64 / TAU) as usize).min(n_bins - 1)
}

/// Centre of bin `b` out of `n_bins` on `[0, 2π)`.
pub fn bin_center(b: usize, n_bins: usize) -> f64 {
    (b as f64 + 0.5) * TAU / n_bins as f64
}

/// Histogram of phases on `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram1D {
    counts: Vec<u64>,
    density: Option<Vec<f64>>,
}

impl Histogram1D {
    pub fn new(n_bins: usize) -> Result<Self, EstimatorError> {
        if n_bins == 0 {
            return Err(EstimatorError::NoBins);
        }
        Ok(Self {
            counts: vec![0; n_bins],
            density: None,
        })
    }

    pub fn from_counts(counts: Vec<u64>) -> Result<Self, EstimatorError> {
        if counts.is_empty() {
            return Err(EstimatorError::NoBins);
        }
        Ok(Self {
            counts,
            density: None,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, theta: Phase) {
        let b = bin_of(theta, self.n_bins());
        self.counts[b] += 1;
        self.density = None;
    }

    pub fn merge(&mut self, other: &Histogram1D) -> Result<(), EstimatorError> {
        if other.n_bins() != self.n_bins() {
            return Err(EstimatorError::GridMismatch {
                left: self.n_bins(),
                right: other.n_bins(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.density = None;
        Ok(())
    }

    /// `density_b = counts_b · B / total`, so `Σ density_b / B = 1`.
    pub fn finalize(&mut self) -> Result<&[f64], EstimatorError> {
        let total = self.total();
        if total == 0 {
            return Err(EstimatorError::Empty);
        }
        let scale = self.n_bins() as f64 / total as f64;
        let d = self.counts.iter().map(|&c| c as f64 * scale).collect();
        Ok(self.density.insert(d))
    }

    pub fn density(&self) -> Option<&[f64]> {
        self.density.as_deref()
    }

    pub fn bin_measure(&self) -> f64 {
        1.0 / self.n_bins() as f64
    }
}

/// Histogram of phase pairs on `[0, 2π)²`, row index from the first phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    n_bins: usize,
    counts: Vec<u64>,
    density: Option<Vec<f64>>,
}

impl Histogram2D {
    pub fn new(n_bins: usize) -> Result<Self, EstimatorError> {
        if n_bins == 0 {
            return Err(EstimatorError::NoBins);
        }
        Ok(Self {
            n_bins,
            counts: vec![0; n_bins * n_bins],
            density: None,
        })
    }

    pub fn from_counts(n_bins: usize, counts: Vec<u64>) -> Result<Self, EstimatorError> {
        if n_bins == 0 {
            return Err(EstimatorError::NoBins);
        }
        if counts.len() != n_bins * n_bins {
            return Err(EstimatorError::GridMismatch {
                left: n_bins * n_bins,
                right: counts.len(),
            });
        }
        Ok(Self {
            n_bins,
            counts,
            density: None,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, a: Phase, b: Phase) {
        let (i, j) = (bin_of(a, self.n_bins), bin_of(b, self.n_bins));
        self.counts[i * self.n_bins + j] += 1;
        self.density = None;
    }

    /// Adds `(a, b)` and `(b, a)`.
    pub fn accumulate_symmetric(&mut self, a: Phase, b: Phase) {
        self.accumulate(a, b);
        self.accumulate(b, a);
    }

    pub fn merge(&mut self, other: &Histogram2D) -> Result<(), EstimatorError> {
        if other.n_bins != self.n_bins {
            return Err(EstimatorError::GridMismatch {
                left: self.n_bins,
                right: other.n_bins,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.density = None;
        Ok(())
    }

    /// `density = counts · B² / total`.
    pub fn finalize(&mut self) -> Result<&[f64], EstimatorError> {
        let total = self.total();
        if total == 0 {
            return Err(EstimatorError::Empty);
        }
        let scale = (self.n_bins * self.n_bins) as f64 / total as f64;
        let d = self.counts.iter().map(|&c| c as f64 * scale).collect();
        Ok(self.density.insert(d))
    }

    pub fn density(&self) -> Option<&[f64]> {
        self.density.as_deref()
    }

    pub fn bin_measure(&self) -> f64 {
        1.0 / (self.n_bins * self.n_bins) as f64
    }

    /// Row sums, i.e. the histogram of the first coordinate.
    pub fn first_marginal(&self) -> Histogram1D {
        let b = self.n_bins;
        let counts = (0..b)
            .map(|i| self.counts[i * b..(i + 1) * b].iter().sum())
            .collect();
        Histogram1D {
            counts,
            density: None,
        }
    }

    /// Circular standard deviation `√(-2 ln R)` of `θ₁ - θ₂`, using bin centres.
    pub fn difference_circular_std(&self) -> Result<f64, EstimatorError> {
        let total = self.total();
        if total == 0 {
            return Err(EstimatorError::Empty);
        }
        let b = self.n_bins;
        let (mut c, mut s) = (0.0, 0.0);
        for i in 0..b {
            for j in 0..b {
                let w = self.counts[i * b + j] as f64;
                if w > 0.0 {
                    let d = bin_center(i, b) - bin_center(j, b);
                    c += w * d.cos();
                    s += w * d.sin();
                }
            }
        }
        let r = c.hypot(s) / total as f64;
        Ok((-2.0 * r.ln()).sqrt())
    }
}

/// Distances between an empirical density and a reference density, both on
/// the same bin grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `Σ |e - r| · (bin measure)`.
    pub l1: f64,
    /// `max |e - r|`.
    pub linf: f64,
    /// Pearson χ² of raw counts against `total · r · (bin measure)`; absent
    /// when no counts are available.
    pub chi2: Option<f64>,
    /// Degrees of freedom of the χ² statistic: categories minus one, where
    /// bins expecting fewer than [`MIN_EXPECTED_COUNT`] counts share one
    /// pooled category.
    pub dof: Option<usize>,
}

impl Metrics {
    /// Upper-tail probability of the χ² statistic.
    pub fn chi2_p_value(&self) -> Option<f64> {
        let (chi2, dof) = (self.chi2?, self.dof?);
        chi2_upper_tail(chi2, dof)
    }
}

pub fn chi2_upper_tail(chi2: f64, dof: usize) -> Option<f64> {
    if dof == 0 {
        return None;
    }
    if chi2.is_infinite() {
        return Some(0.0);
    }
    let d = ChiSquared::new(dof as f64).ok()?;
    Some(1.0 - d.cdf(chi2))
}

/// Critical value `x` with `P(χ²_dof > x) = 1 - level`.
pub fn chi2_critical(dof: usize, level: f64) -> Option<f64> {
    let d = ChiSquared::new(dof as f64).ok()?;
    Some(d.inverse_cdf(level))
}

/// L¹ and L∞ distance between two densities sampled on the same grid.
pub fn compare_densities(
    a: &[f64],
    b: &[f64],
    bin_measure: f64,
) -> Result<Metrics, EstimatorError> {
    if a.len() != b.len() {
        return Err(EstimatorError::GridMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut l1, mut linf) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let d = (x - y).abs();
        l1 += d;
        linf = linf.max(d);
    }
    Ok(Metrics {
        l1: l1 * bin_measure,
        linf,
        chi2: None,
        dof: None,
    })
}

/// Bins expecting fewer counts than this are pooled into one category.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

fn chi2_counts(counts: &[u64], reference: &[f64], bin_measure: f64) -> (f64, usize) {
    let total: u64 = counts.iter().sum();
    let mut chi2 = 0.0;
    let mut categories = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &r) in counts.iter().zip(reference) {
        let expected = total as f64 * r * bin_measure;
        if expected >= MIN_EXPECTED_COUNT {
            chi2 += (c as f64 - expected).powi(2) / expected;
            categories += 1;
        } else {
            pooled_obs += c as f64;
            pooled_exp += expected.max(0.0);
        }
    }
    if pooled_exp > 0.0 {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        categories += 1;
    } else if pooled_obs > 0.0 {
        chi2 = f64::INFINITY;
    }
    (chi2, categories.saturating_sub(1))
}

fn compare_counts(
    counts: &[u64],
    density: &[f64],
    reference: &[f64],
    bin_measure: f64,
) -> Result<Metrics, EstimatorError> {
    let mut m = compare_densities(density, reference, bin_measure)?;
    let (chi2, dof) = chi2_counts(counts, reference, bin_measure);
    m.chi2 = Some(chi2);
    m.dof = Some(dof);
    Ok(m)
}

/// Compares a histogram with a reference density evaluated at bin centres.
pub fn compare_1d(hist: &Histogram1D, reference: &[f64]) -> Result<Metrics, EstimatorError> {
    let mut h = hist.clone();
    let density = h.finalize()?.to_vec();
    compare_counts(hist.counts(), &density, reference, hist.bin_measure())
}

pub fn compare_2d(hist: &Histogram2D, reference: &[f64]) -> Result<Metrics, EstimatorError> {
    let mut h = hist.clone();
    let density = h.finalize()?.to_vec();
    compare_counts(hist.counts(), &density, reference, hist.bin_measure())
}

/// Reference density `f(θ)` at the centres of `n_bins` bins.
pub fn sample_at_centers_1d(n_bins: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..n_bins).map(|b| f(bin_center(b, n_bins))).collect()
}

/// Reference density `f(θ₁, θ₂)` at bin centres, row-major.
pub fn sample_at_centers_2d(n_bins: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_bins * n_bins);
    for i in 0..n_bins {
        for j in 0..n_bins {
            out.push(f(bin_center(i, n_bins), bin_center(j, n_bins)));
        }
    }
    out
}
