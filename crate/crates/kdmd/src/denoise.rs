//! Noise-robust companion-DMD variants.
//!
//! * `tls_companion` — total-least-squares flavored: replace the (delayed)
//!   noisy data by its best rank-k approximation before fitting, so the
//!   regressors and targets are denoised together.
//! * `noise_resistant_companion` — premultiply the delayed noisy data by the
//!   conjugate transpose of a delayed *filter* window drawn from the same
//!   trajectory with no temporal overlap; independent noise then averages
//!   out of the cross-moments.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dmd::{fit_companion, DmdModel, TimeSeries};
use crate::error::{KdmdError, Result};
use crate::linalg::{low_rank_approx, SvdThreshold};
use crate::preprocess::delay_embed;

/// Zero-mean uniform noise, parameterized by its standard deviation
/// (support `[−σ√3, σ√3]`).
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub std_dev: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(std_dev: f64, seed: u64) -> Result<Self> {
        if !(std_dev >= 0.0 && std_dev.is_finite()) {
            return Err(KdmdError::InvalidInput(format!(
                "noise std must be a finite nonnegative number, got {std_dev}"
            )));
        }
        Ok(Self { std_dev, seed })
    }
}

/// Add element-wise independent uniform noise. Real-valued series receive
/// real noise of std σ; complex-valued series receive independent real and
/// imaginary perturbations of std σ/√2 each, so the per-entry std is σ
/// either way.
pub fn add_noise(z: &TimeSeries, spec: &NoiseSpec) -> TimeSeries {
    if spec.std_dev == 0.0 {
        return z.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let is_real = z.data.iter().all(|v| v.im == 0.0);
    let mut data = z.data.clone();
    if is_real {
        let half = spec.std_dev * 3f64.sqrt();
        data.mapv_inplace(|v| v + C64::new(rng.gen_range(-half..half), 0.0));
    } else {
        let half = (spec.std_dev / 2f64.sqrt()) * 3f64.sqrt();
        data.mapv_inplace(|v| {
            v + C64::new(rng.gen_range(-half..half), rng.gen_range(-half..half))
        });
    }
    TimeSeries { data, label: format!("{}+noise", z.label), steps: z.steps.clone() }
}

/// Fit companion DMD on the best rank-`rank` approximation of the data.
pub fn tls_companion(z_noisy: &TimeSeries, rank: usize, tol: SvdThreshold) -> Result<DmdModel> {
    let denoised = low_rank_approx(&z_noisy.data, rank)?;
    let ts = TimeSeries::with_steps(denoised, z_noisy.label.clone(), z_noisy.steps.clone())?;
    fit_companion(&ts, tol)
}

/// Fit companion DMD on `(1/(d+1)) · (Z_filter)_d^H · (Z_noisy)_d`.
///
/// The filter window must come from the same trajectory as the noisy window
/// with no temporal overlap (caller contract); overlapping windows correlate
/// the noise and defeat the averaging.
pub fn noise_resistant_companion(
    z_noisy: &TimeSeries,
    z_filter: &TimeSeries,
    d: usize,
    tol: SvdThreshold,
) -> Result<DmdModel> {
    if z_noisy.num_observables() != z_filter.num_observables() {
        return Err(KdmdError::DimensionMismatch(format!(
            "noise_resistant_companion: {} vs {} observables",
            z_noisy.num_observables(),
            z_filter.num_observables()
        )));
    }
    let noisy_d = delay_embed(z_noisy, d)?;
    let filter_d = delay_embed(z_filter, d)?;
    let scale = C64::new(1.0 / (d as f64 + 1.0), 0.0);
    let fh = filter_d.data.t().mapv(|v| v.conj() * scale);
    let product = fh.dot(&noisy_d.data);
    let ts = TimeSeries::with_steps(product, z_noisy.label.clone(), noisy_d.steps.clone())?;
    fit_companion(&ts, tol)
}
