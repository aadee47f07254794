//! Relative entropies, decay-rate fits, confidence steps and collapse statistics.

use crate::linalg::ProbVector;
use crate::measurement::{MeasurementMethod, SectorPartition};
use crate::prelude::*;
use crate::protocol::{ProtocolError, ProtocolPolicy};
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("fit needs at least 3 points with distinct abscissae, got {0}")]
    InsufficientWindow(usize),
    #[error("method weights have {got} entries, expected {expected}")]
    WeightCount { expected: usize, got: usize },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("no reports to summarize")]
    Empty,
}

/// S^o(β|α) = Σ_i p(i|β) ln(p(i|β)/p(i|α)) in nats; `+inf` when some p(i|α) = 0 < p(i|β).
pub fn relative_entropy(method: &MeasurementMethod, beta: usize, alpha: usize) -> f64 {
    (0..method.num_outcomes())
        .map(|i| {
            let pb = method.probability(i, beta);
            let pa = method.probability(i, alpha);
            if pb == 0.0 {
                0.0
            } else if pa == 0.0 {
                f64::INFINITY
            } else {
                pb * (pb / pa).ln()
            }
        })
        .sum::<f64>()
        .max(0.0)
}

/// S̄(β|α) = Σ_o w(o) S^o(β|α).
pub fn mean_relative_entropy(methods: &[MeasurementMethod], weights: &[f64], beta: usize, alpha: usize) -> Result<f64, AnalysisError> {
    if weights.len() != methods.len() {
        return Err(AnalysisError::WeightCount { expected: methods.len(), got: weights.len() });
    }
    Ok(methods.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(m, &w)| w * relative_entropy(m, beta, alpha)).sum())
}

/// Per-method and mean relative entropies for every ordered pointer pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    /// `per_method[o][(β, α)] = S^o(β|α)`.
    pub per_method: Vec<DMatrix<f64>>,
    /// `mean[(β, α)] = S̄(β|α)`.
    pub mean: DMatrix<f64>,
    /// Method weights used for row β (μ_β^red or c).
    pub weights: Vec<ProbVector>,
}

impl RateTable {
    /// Weights from the policy: c for the random protocol, μ_β^red otherwise.
    pub fn compute(methods: &[MeasurementMethod], policy: &ProtocolPolicy, dim: usize) -> Result<Self, AnalysisError> {
        let weights = (0..dim)
            .map(|beta| match policy {
                ProtocolPolicy::Random { weights } => Ok(weights.clone()),
                _ => policy.reduced_kernel(methods, beta)?.invariant_measure().map_err(AnalysisError::from),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_weights(methods, weights, dim)
    }

    /// Same weights for every limit pointer.
    pub fn with_fixed_weights(methods: &[MeasurementMethod], weights: &ProbVector, dim: usize) -> Result<Self, AnalysisError> {
        Self::from_weights(methods, vec![weights.clone(); dim], dim)
    }

    fn from_weights(methods: &[MeasurementMethod], weights: Vec<ProbVector>, dim: usize) -> Result<Self, AnalysisError> {
        let per_method: Vec<DMatrix<f64>> = methods.iter().map(|m| DMatrix::from_fn(dim, dim, |b, a| relative_entropy(m, b, a))).collect();
        let mut mean = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            for a in 0..dim {
                mean[(b, a)] = mean_relative_entropy(methods, weights[b].as_slice(), b, a)?;
            }
        }
        Ok(Self { per_method, mean, weights })
    }

    /// min over α outside sector(Υ) of S̄(Υ|α); `None` when Υ's sector is everything.
    pub fn min_rate(&self, limit: usize, sectors: &SectorPartition) -> Option<f64> {
        (0..self.mean.ncols())
            .filter(|&a| !sectors.same_sector(a, limit))
            .map(|a| self.mean[(limit, a)])
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |m| m.min(r))))
    }

    /// Leading-order step estimate for localizing on Υ at the given confidence level.
    pub fn confidence_steps(&self, limit: usize, level: f64, sectors: &SectorPartition) -> Option<u64> {
        self.min_rate(limit, sectors).and_then(|r| confidence_steps(r, level))
    }
}

/// ceil(−ln(1 − level)/rate); `None` for a zero rate.
pub fn confidence_steps(rate: f64, level: f64) -> Option<u64> {
    if !(rate > 0.0) {
        return None;
    }
    if rate.is_infinite() {
        return Some(1);
    }
    let steps = -(1.0 - level).ln() / rate;
    // Absorb rounding so that an exact ratio such as 4.605…/4.605… gives 1.
    Some((steps - 1e-9).ceil().max(1.0) as u64)
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub points: usize,
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<SlopeFit, AnalysisError> {
    let n = points.len();
    if n < 3 {
        return Err(AnalysisError::InsufficientWindow(n));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(AnalysisError::InsufficientWindow(n));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (rss / (nf - 2.0) / sxx).sqrt();
    Ok(SlopeFit { slope, intercept, stderr, points: n })
}

/// Decay rate of the ensemble mean of ln Q_n(α) over the last half of the common window.
///
/// `histories[k][n]` is ln Q_n(α) along trajectory k; each step enters with its time
/// coordinate `n · time_step`.
pub fn ensemble_decay_rate(histories: &[Vec<f64>], time_step: f64) -> Result<SlopeFit, AnalysisError> {
    let len = histories.iter().map(|h| h.len()).min().ok_or(AnalysisError::Empty)?;
    let points: Vec<(f64, f64)> = (len / 2..len)
        .filter_map(|n| {
            let values: Vec<f64> = histories.iter().map(|h| h[n]).collect();
            values.iter().all(|v| v.is_finite()).then(|| (n as f64 * time_step, values.iter().sum::<f64>() / values.len() as f64))
        })
        .collect();
    let fit = fit_line(&points)?;
    Ok(SlopeFit { slope: -fit.slope, ..fit })
}

/// Central acceptance interval [lo, hi] of Binomial(n, p) with tail mass ≤ (1 − level)/2 on each side.
pub fn binomial_interval(n: u64, p: f64, level: f64) -> (u64, u64) {
    if p <= 0.0 {
        return (0, 0);
    }
    if p >= 1.0 {
        return (n, n);
    }
    let tail = (1.0 - level) / 2.0;
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_pmf = Vec::with_capacity(n as usize + 1);
    let mut current = n as f64 * lq;
    log_pmf.push(current);
    for k in 0..n {
        current += ((n - k) as f64).ln() - ((k + 1) as f64).ln() + lp - lq;
        log_pmf.push(current);
    }
    let pmf: Vec<f64> = log_pmf.iter().map(|l| l.exp()).collect();
    let mut lo = 0;
    let mut below = 0.0;
    while lo < n && below + pmf[lo as usize] <= tail {
        below += pmf[lo as usize];
        lo += 1;
    }
    let mut hi = n;
    let mut above = 0.0;
    while hi > lo && above + pmf[hi as usize] <= tail {
        above += pmf[hi as usize];
        hi -= 1;
    }
    (lo, hi)
}

/// Observed frequency of one sector against its expected probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorFrequency {
    pub sector: usize,
    pub count: u64,
    pub frequency: f64,
    pub expected: f64,
    /// Acceptance interval for the frequency.
    pub low: f64,
    pub high: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseStatistics {
    pub trajectories: u64,
    pub level: f64,
    pub rows: Vec<SectorFrequency>,
    pub passed: bool,
}

/// Limit-sector frequencies with exact binomial intervals around `expected`.
pub fn collapse_statistics(limit_sectors: &[usize], expected: &[f64], level: f64) -> Result<CollapseStatistics, AnalysisError> {
    if limit_sectors.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = limit_sectors.len() as u64;
    let rows: Vec<SectorFrequency> = expected
        .iter()
        .enumerate()
        .map(|(sector, &p)| {
            let count = limit_sectors.iter().filter(|&&s| s == sector).count() as u64;
            let (lo, hi) = binomial_interval(n, p, level);
            SectorFrequency {
                sector,
                count,
                frequency: count as f64 / n as f64,
                expected: p,
                low: lo as f64 / n as f64,
                high: hi as f64 / n as f64,
                pass: (lo..=hi).contains(&count),
            }
        })
        .collect();
    let passed = rows.iter().all(|r| r.pass);
    Ok(CollapseStatistics { trajectories: n, level, rows, passed })
}

/// Median of a sample (mean of the two central values for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}
