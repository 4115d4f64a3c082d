//! Charge-state discrimination and the readout noise it implies.
//!
//! A readout window yields an integer photon count; counts above a threshold
//! are called NV-, at or below it NV0. Because the protocol maps ms = 0 to
//! NV0 and ms = 1 to NV-, the misclassification probabilities
//! eps0 = P(call NV- | ms = 0) and eps1 = P(call NV0 | ms = 1) set the
//! spin-projection-noise factor sigma_R for the whole readout.

use std::collections::BTreeMap;

use crate::charge::{ChargeLabel, CountDistribution};
use crate::error::{Error, Result};

/// Threshold classifier: strictly more than `threshold` photons reads NV-.
pub fn classify_charge(count: u32, threshold: i64) -> ChargeLabel {
    if count as i64 > threshold {
        ChargeLabel::NvMinus
    } else {
        ChargeLabel::NvZero
    }
}

/// Spin misclassification probabilities of a thresholded readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutErrorPair {
    /// P(count > threshold | ms = 0), i.e. ms = 0 read as the ms = 1 side.
    pub eps0: f64,
    /// P(count <= threshold | ms = 1).
    pub eps1: f64,
}

impl ReadoutErrorPair {
    pub fn sum(&self) -> f64 {
        self.eps0 + self.eps1
    }
}

/// Readout noise factor relative to an ideal projective measurement:
/// sigma_R = sqrt(1 - (eps0 - eps1)^2) / (1 - eps0 - eps1).
///
/// Equals 1 for a perfect readout and diverges as eps0 + eps1 -> 1, where
/// the two spin classes become indistinguishable.
pub fn sigma_r_scc(errors: &ReadoutErrorPair) -> Result<f64> {
    for (name, value) in [("eps0", errors.eps0), ("eps1", errors.eps1)] {
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            return Err(Error::invalid(name, format!("must lie in [0, 1], got {value}")));
        }
    }
    let sum = errors.sum();
    if sum >= 1.0 {
        return Err(Error::Divergent { sum });
    }
    let diff = errors.eps0 - errors.eps1;
    Ok((1.0 - diff * diff).sqrt() / (1.0 - sum))
}

/// Noise factor of a conventional photoluminescence readout with fringe
/// visibility `v` and `n_bar` detected photons per shot: 2 / (v sqrt(n_bar)).
pub fn sigma_r_conventional(v: f64, n_bar: f64) -> Result<f64> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::invalid("v", format!("must lie in (0, 1], got {v}")));
    }
    if !(n_bar > 0.0) {
        return Err(Error::invalid("n_bar", format!("must be > 0, got {n_bar}")));
    }
    Ok(2.0 / (v * n_bar.sqrt()))
}

/// Error pair of a threshold applied to the two spin-class count laws.
pub fn spin_errors_from_distributions(
    dist_ms0: &CountDistribution,
    dist_ms1: &CountDistribution,
    threshold: i64,
) -> ReadoutErrorPair {
    ReadoutErrorPair {
        eps0: dist_ms0.prob_above(threshold),
        eps1: 1.0 - dist_ms1.prob_above(threshold),
    }
}

/// Scan thresholds and return the one minimizing sigma_R, with its value.
/// The first minimum wins, so pass thresholds in ascending order to prefer
/// the smallest on ties.
pub fn optimal_threshold(
    dist_ms0: &CountDistribution,
    dist_ms1: &CountDistribution,
    thresholds: impl IntoIterator<Item = i64>,
) -> Result<(i64, f64)> {
    let mut best: Option<(i64, f64)> = None;
    for threshold in thresholds {
        let errors = spin_errors_from_distributions(dist_ms0, dist_ms1, threshold);
        let Ok(sigma) = sigma_r_scc(&errors) else {
            continue;
        };
        if best.map_or(true, |(_, s)| sigma < s) {
            best = Some((threshold, sigma));
        }
    }
    best.ok_or(Error::AllThresholdsDivergent)
}

/// Kolmogorov-Smirnov distance between two count laws, evaluated on the
/// integer grid: max_n |CDF0(n) - CDF1(n)|.
pub fn ks_statistic(dist0: &CountDistribution, dist1: &CountDistribution) -> f64 {
    let len = dist0.probs().len().max(dist1.probs().len());
    let mut cdf0 = 0.0;
    let mut cdf1 = 0.0;
    let mut ks: f64 = 0.0;
    for n in 0..len {
        cdf0 += dist0.prob(n);
        cdf1 += dist1.prob(n);
        ks = ks.max((cdf0 - cdf1).abs());
    }
    ks
}

/// Histogram of integer photon counts over a shot ensemble.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhotonHistogram {
    counts: BTreeMap<u32, u64>,
    total_shots: u64,
}

impl PhotonHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tally(tally: &[u64]) -> Self {
        let mut hist = PhotonHistogram::new();
        for (n, &shots) in tally.iter().enumerate() {
            if shots > 0 {
                hist.counts.insert(n as u32, shots);
                hist.total_shots += shots;
            }
        }
        hist
    }

    pub fn record(&mut self, count: u32) {
        *self.counts.entry(count).or_insert(0) += 1;
        self.total_shots += 1;
    }

    pub fn merge(&mut self, other: &PhotonHistogram) {
        for (&n, &shots) in &other.counts {
            *self.counts.entry(n).or_insert(0) += shots;
        }
        self.total_shots += other.total_shots;
    }

    pub fn total_shots(&self) -> u64 {
        self.total_shots
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts.iter().map(|(&n, &shots)| (n, shots))
    }

    pub fn max_count(&self) -> u32 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        assert!(self.total_shots > 0, "mean of an empty histogram");
        let weighted: f64 = self.counts.iter().map(|(&n, &s)| n as f64 * s as f64).sum();
        weighted / self.total_shots as f64
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let weighted: f64 = self
            .counts
            .iter()
            .map(|(&n, &s)| (n as f64 - mean).powi(2) * s as f64)
            .sum();
        weighted / self.total_shots as f64
    }

    /// Fraction of shots strictly above `threshold`.
    pub fn fraction_above(&self, threshold: i64) -> f64 {
        assert!(self.total_shots > 0, "fraction of an empty histogram");
        let above: u64 = self
            .counts
            .iter()
            .filter(|(&n, _)| n as i64 > threshold)
            .map(|(_, &s)| s)
            .sum();
        above as f64 / self.total_shots as f64
    }

    pub fn to_distribution(&self, window: f64) -> Result<CountDistribution> {
        let mut tally = vec![0u64; self.max_count() as usize + 1];
        for (n, shots) in self.iter() {
            tally[n as usize] = shots;
        }
        CountDistribution::from_histogram(&tally, window)
    }
}

/// Summary statistics comparing the two spin-class histograms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub ks_statistic: f64,
    /// Relative mean separation (mean1 - mean0) / mean1; positive when the
    /// ms = 1 class is brighter, as the NV- mapping makes it.
    pub contrast: f64,
    pub mean0: f64,
    pub mean1: f64,
}

pub fn compare_histograms(hist_ms0: &PhotonHistogram, hist_ms1: &PhotonHistogram) -> ComparisonReport {
    assert!(
        hist_ms0.total_shots > 0 && hist_ms1.total_shots > 0,
        "comparison needs nonempty histograms"
    );
    let len = hist_ms0.max_count().max(hist_ms1.max_count()) as i64;
    let mut ks: f64 = 0.0;
    for n in 0..len {
        // fraction_above gives 1 - CDF(n); the difference is the same.
        let diff = hist_ms0.fraction_above(n) - hist_ms1.fraction_above(n);
        ks = ks.max(diff.abs());
    }
    let mean0 = hist_ms0.mean();
    let mean1 = hist_ms1.mean();
    ComparisonReport {
        ks_statistic: ks,
        contrast: (mean1 - mean0) / mean1,
        mean0,
        mean1,
    }
}
