//! Mean subtraction and delay embedding, in both orders, with
//! companion-order bookkeeping.
//!
//! The two compositions are *not* the same operation: subtracting the mean
//! and then delay-embedding removes the original temporal mean from every
//! block, while delay-embedding first and then centering removes the mean of
//! the delayed series. Downstream indicators are explicit about which one
//! they use.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::dmd::TimeSeries;
use crate::error::{KdmdError, Result};
use crate::linalg::{CMat, CVec};

/// One preprocessing step applied to a series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineStep {
    MeanSubtract,
    Delay(usize),
}

/// Ordered preprocessing record plus the resulting companion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PipelineDescriptor {
    pub steps: Vec<PipelineStep>,
    /// Companion order θ = (#columns after all steps) − 1.
    pub theta: usize,
    pub source_label: String,
}

/// Where the companion order θ sits relative to the system dimension r.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingRegime {
    UnderSampled,
    JustSampled,
    OverSampled,
}

/// Temporal mean of the series (average over columns).
pub fn temporal_mean(z: &TimeSeries) -> CVec {
    let n1 = z.num_snapshots() as f64;
    z.data.sum_axis(Axis(1)).mapv(|v| v / n1)
}

/// Remove the temporal mean from every snapshot; returns (Z_ms, μ).
pub fn mean_subtract(z: &TimeSeries) -> (TimeSeries, CVec) {
    let mu = temporal_mean(z);
    let mut data = z.data.clone();
    for mut col in data.axis_iter_mut(Axis(1)) {
        col.zip_mut_with(&mu, |c, m| *c -= m);
    }
    let mut steps = z.steps.clone();
    steps.push(PipelineStep::MeanSubtract);
    let ts = TimeSeries { data, label: z.label.clone(), steps };
    (ts, mu)
}

/// Stack `d+1` time-shifted copies of the series: the output has `m(d+1)`
/// rows and `n+1−d` columns, with block row `k` holding snapshots
/// `z_{1+k} … z_{n+1−d+k}` (earliest snapshots in the top block).
pub fn delay_embed(z: &TimeSeries, d: usize) -> Result<TimeSeries> {
    let m = z.num_observables();
    let n1 = z.num_snapshots();
    if n1 < d + 2 {
        return Err(KdmdError::InvalidInput(format!(
            "delay embedding with d = {d} needs at least {} snapshots, got {n1}",
            d + 2
        )));
    }
    if d == 0 {
        return Ok(z.clone());
    }
    let cols = n1 - d;
    let mut data = CMat::zeros((m * (d + 1), cols));
    for k in 0..=d {
        for j in 0..cols {
            for r in 0..m {
                data[(k * m + r, j)] = z.data[(r, j + k)];
            }
        }
    }
    let mut steps = z.steps.clone();
    steps.push(PipelineStep::Delay(d));
    Ok(TimeSeries { data, label: z.label.clone(), steps })
}

/// Mean subtraction followed by delay embedding: `(Z_ms)_{d-delayed}`.
pub fn ms_then_delay(z: &TimeSeries, d: usize) -> Result<TimeSeries> {
    let (ms, _) = mean_subtract(z);
    delay_embed(&ms, d)
}

/// Delay embedding followed by mean subtraction: `(Z_{d-delayed})_ms`.
/// The removed mean is the delayed series' own temporal mean, which in
/// general differs from the original one.
pub fn delay_then_ms(z: &TimeSeries, d: usize) -> Result<TimeSeries> {
    let delayed = delay_embed(z, d)?;
    Ok(mean_subtract(&delayed).0)
}

/// Classify θ against the invariant-subspace dimension r.
pub fn classify_regime(theta: usize, r: usize) -> Result<SamplingRegime> {
    if theta == 0 || r == 0 {
        return Err(KdmdError::InvalidInput("classify_regime: theta and r must be >= 1".into()));
    }
    Ok(match theta.cmp(&r) {
        std::cmp::Ordering::Less => SamplingRegime::UnderSampled,
        std::cmp::Ordering::Equal => SamplingRegime::JustSampled,
        std::cmp::Ordering::Greater => SamplingRegime::OverSampled,
    })
}

/// Relative size of the temporal mean: ‖μ‖ / max column norm.
/// Used to reject pipeline misuse where a centered input is required.
pub fn relative_mean(z: &TimeSeries) -> f64 {
    let mu = temporal_mean(z);
    let mu_norm = mu.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let scale = z
        .data
        .axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        mu_norm / scale
    }
}
