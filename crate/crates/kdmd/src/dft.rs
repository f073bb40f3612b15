//! DMD–DFT equivalence diagnostics.
//!
//! Mean-subtracted companion DMD can silently collapse into the temporal
//! DFT: the optimum `c_ms` equals `−1_θ`, pinning every eigenvalue to a
//! root of unity regardless of the data. The *relative distance to DFT*
//! `‖c_ms + 1_θ‖₂ / √θ ∈ [0, 1]` detects this, and because
//! `c_ms + 1_θ = P_{N(X_ms)} 1_θ`, a projection onto the null space of the
//! mean-subtracted regressor block gives an equivalent test.
//!
//! Scanning the distance over the companion order θ (at a fixed, generous
//! delay count) yields a data-driven lower bound on the dimension of the
//! underlying invariant subspace: the distance jumps from ~0 to O(1) as θ
//! crosses that dimension.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::dmd::{fit_companion, DmdModel, TimeSeries};
use crate::error::{KdmdError, Result};
use crate::linalg::{nullspace_projection, vec_norm, CVec, SvdThreshold};
use crate::preprocess::{delay_then_ms, relative_mean};

/// Distance below which the fit is declared DFT-equivalent. The theory
/// separates the two branches by many orders of magnitude, so the exact
/// cutoff is uncritical.
pub const DEFAULT_DECISION_TOL: f64 = 1e-6;

/// Relative temporal mean above which a "mean-subtracted" input is rejected.
pub const CENTERED_TOL: f64 = 1e-8;

/// Outcome of one mean-subtracted fit, scored against the DFT.
#[derive(Debug, Clone, Serialize)]
pub struct DftDistanceReport {
    pub theta: usize,
    pub d: usize,
    /// ‖c_ms + 1_θ‖₂ / √θ, in [0, 1].
    pub distance: f64,
    #[serde(skip)]
    pub c_ms: CVec,
    pub equivalent: bool,
    pub decision_tol: f64,
}

/// Distance scan over θ with the jump analysis applied.
#[derive(Debug, Clone, Serialize)]
pub struct SufficiencyReport {
    pub r_max_assumed: usize,
    pub d: usize,
    /// (θ, relative distance to DFT) pairs in scan order.
    pub distances: Vec<(usize, f64)>,
    /// Smallest θ where the distance jumps by the detection factor.
    pub jump_location: Option<usize>,
    /// Data-driven lower bound on the invariant-subspace dimension.
    pub lower_bound_on_r: Option<usize>,
}

/// Jump detection factor: a distance counts as a jump when it exceeds
/// `JUMP_FACTOR × max(median of smaller-θ distances, JUMP_FLOOR)`.
pub const JUMP_FACTOR: f64 = 100.0;
pub const JUMP_FLOOR: f64 = 1e-12;

/// Relative distance of a coefficient vector to the DFT optimum `−1_θ`.
pub fn dft_distance(c_ms: &CVec) -> f64 {
    let theta = c_ms.len() as f64;
    let shifted: CVec = c_ms.mapv(|z| z + C64::new(1.0, 0.0));
    vec_norm(&shifted) / theta.sqrt()
}

/// Fit companion DMD on the delayed-then-centered pipeline
/// `(Z_{d-delayed})_ms` and score the optimum against the DFT.
pub fn fit_mean_subtracted(
    z: &TimeSeries,
    d: usize,
    tol: SvdThreshold,
) -> Result<(DmdModel, DftDistanceReport)> {
    let pipeline = delay_then_ms(z, d)?;
    let model = fit_companion(&pipeline, tol)?;
    let distance = dft_distance(&model.c_star);
    let report = DftDistanceReport {
        theta: model.companion_order,
        d,
        distance,
        c_ms: model.c_star.clone(),
        equivalent: distance < DEFAULT_DECISION_TOL,
        decision_tol: DEFAULT_DECISION_TOL,
    };
    Ok((model, report))
}

/// Test equivalence directly: `‖P_{N(X_ms)} 1_θ‖ / √θ < decision tol`.
///
/// `z_pipeline` must already be mean-subtracted; an uncentered input is
/// rejected as pipeline misuse. Agrees with the distance test through the
/// identity `c_ms + 1_θ = P_{N(X_ms)} 1_θ`.
pub fn equivalence_via_projection(z_pipeline: &TimeSeries, tol: SvdThreshold) -> Result<bool> {
    let rel_mean = relative_mean(z_pipeline);
    if rel_mean > CENTERED_TOL {
        return Err(KdmdError::NotCentered(rel_mean));
    }
    let x = z_pipeline.x_block();
    let theta = x.ncols();
    let ones = CVec::from_elem(theta, C64::new(1.0, 0.0));
    let proj = nullspace_projection(&x, &ones, tol)?;
    Ok(vec_norm(&proj) / (theta as f64).sqrt() < DEFAULT_DECISION_TOL)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Locate the first θ whose distance jumps above the plateau of smaller-θ
/// distances. Returns `None` when the scan never jumps.
pub fn detect_jump(distances: &[(usize, f64)]) -> Option<usize> {
    let mut sorted_pairs: Vec<(usize, f64)> = distances.to_vec();
    sorted_pairs.sort_by_key(|p| p.0);
    for i in 1..sorted_pairs.len() {
        let mut before: Vec<f64> = sorted_pairs[..i].iter().map(|p| p.1).collect();
        before.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let base = median(&before).max(JUMP_FLOOR);
        if sorted_pairs[i].1 > JUMP_FACTOR * base {
            return Some(sorted_pairs[i].0);
        }
    }
    None
}

/// Scan the relative distance to DFT over `theta_range` at `d = r_max − 1`
/// delays and report the jump location as a lower bound on the
/// invariant-subspace dimension. When no jump appears through
/// `θ = r_max + 1`, the dimension is at least `r_max + 1`.
pub fn sufficiency_scan(
    z: &TimeSeries,
    r_max: usize,
    theta_range: &[usize],
    tol: SvdThreshold,
) -> Result<SufficiencyReport> {
    if r_max == 0 {
        return Err(KdmdError::InvalidInput("sufficiency_scan: r_max must be >= 1".into()));
    }
    if theta_range.is_empty() {
        return Err(KdmdError::InvalidInput("sufficiency_scan: empty theta range".into()));
    }
    let d = r_max - 1;
    let mut distances = Vec::with_capacity(theta_range.len());
    for &theta in theta_range {
        if theta < 1 {
            return Err(KdmdError::InvalidInput("sufficiency_scan: theta must be >= 1".into()));
        }
        let needed = theta + d + 1;
        if z.num_snapshots() < needed {
            return Err(KdmdError::InvalidInput(format!(
                "sufficiency_scan: theta = {theta}, d = {d} needs {needed} snapshots, \
                 trajectory has {}",
                z.num_snapshots()
            )));
        }
        let window = z.truncate_snapshots(needed)?;
        let (_, report) = fit_mean_subtracted(&window, d, tol)?;
        distances.push((theta, report.distance));
    }
    let jump_location = detect_jump(&distances);
    let scanned_past_rmax = theta_range.iter().any(|&t| t >= r_max + 1);
    let lower_bound_on_r = match jump_location {
        Some(theta) => Some(theta),
        None if scanned_past_rmax => Some(r_max + 1),
        None => None,
    };
    Ok(SufficiencyReport { r_max_assumed: r_max, d, distances, jump_location, lower_bound_on_r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat;
    use crate::preprocess::mean_subtract;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn constant_series_distance_is_one() {
        // X_ms = 0, so the minimum-norm optimum is c_ms = 0 and the distance
        // is ‖1_θ‖/√θ = 1.
        let data = CMat::from_elem((2, 6), r(3.0));
        let z = TimeSeries::new(data, "const").unwrap();
        let (model, report) = fit_mean_subtracted(&z, 0, SvdThreshold::default()).unwrap();
        assert!(model.c_star.iter().all(|v| v.norm() < 1e-12));
        assert!((report.distance - 1.0).abs() < 1e-12);
        assert!(!report.equivalent);
    }

    #[test]
    fn projection_rejects_uncentered_input() {
        let data = CMat::from_elem((1, 5), r(2.0));
        let z = TimeSeries::new(data, "raw").unwrap();
        let err = equivalence_via_projection(&z, SvdThreshold::default()).unwrap_err();
        assert!(matches!(err, KdmdError::NotCentered(_)));
    }

    #[test]
    fn projection_false_on_centered_constantlike_series() {
        // Alternating series: centered, X_ms is 1x(n) with entries ±1; the
        // all-ones vector has a large component in the null space.
        let data = CMat::from_shape_fn((1, 6), |(_, j)| r(if j % 2 == 0 { 1.0 } else { -1.0 }));
        let z = TimeSeries::new(data, "alt").unwrap();
        assert!(relative_mean(&z) < 1e-12);
        // X = [1,-1,1,-1,1]; P_N(X) 1 has norm^2 = 5 - 1/5 > 0.
        let got = equivalence_via_projection(&z, SvdThreshold::default()).unwrap();
        assert!(!got);
    }

    #[test]
    fn projection_true_on_full_column_rank_centered_series() {
        // Random centered series with more rows than columns: X_ms generically
        // has full column rank, so its null space is trivial.
        let mut rng = crate::testutil::rng(21);
        let data = crate::testutil::random_cmat(&mut rng, 8, 5);
        let z = TimeSeries::new(data, "tall").unwrap();
        let (zc, _) = mean_subtract(&z);
        assert!(equivalence_via_projection(&zc, SvdThreshold::default()).unwrap());
    }

    #[test]
    fn projection_agrees_with_distance() {
        let mut rng = crate::testutil::rng(33);
        for _ in 0..20 {
            let m = 2 + (rng_next(&mut rng) % 3);
            let cols = 6 + (rng_next(&mut rng) % 5);
            let data = crate::testutil::random_cmat(&mut rng, m, cols);
            let z = TimeSeries::new(data, "r").unwrap();
            let (_, report) = fit_mean_subtracted(&z, 0, SvdThreshold::default()).unwrap();
            let (zc, _) = mean_subtract(&z);
            let proj = equivalence_via_projection(&zc, SvdThreshold::default()).unwrap();
            assert_eq!(proj, report.equivalent);
        }
    }

    fn rng_next(rng: &mut rand_chacha::ChaCha8Rng) -> usize {
        use rand::Rng;
        rng.gen_range(0..1000)
    }

    #[test]
    fn jump_detection_step_profile() {
        let distances = vec![
            (2, 1e-9),
            (3, 2e-9),
            (4, 1.5e-9),
            (5, 1e-9),
            (6, 2e-9),
            (7, 0.3),
            (8, 0.4),
        ];
        assert_eq!(detect_jump(&distances), Some(7));
        let flat: Vec<(usize, f64)> = (2..10).map(|t| (t, 1e-9)).collect();
        assert_eq!(detect_jump(&flat), None);
    }
}
