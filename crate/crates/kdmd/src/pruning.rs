//! Mode-norm spectral pruning and the KMD-Quality score.
//!
//! Companion DMD at order θ > r produces θ eigenvalues of which only r are
//! genuine; the spurious ones carry modes of (numerically) zero norm.
//! `sigma_nontriv` prunes on that criterion. `kmd_quality` scores a fitted
//! coefficient vector against a target eigenvalue set `B` by combining
//!
//! * `ρ_subset(B, σ)` — how far `B` is from being contained in the fitted
//!   spectrum (max–min distance), and
//! * `δ_trivial` — the fraction of squared mode norm carried by eigenvalues
//!   outside `B`, measured on the *closest* companion matrix whose spectrum
//!   contains `B` exactly,
//!
//! as `quality = 1 − max(1 − 10^{−ρ}, δ)`, which is 1 exactly when the
//! pruned spectrum equals the target.
//!
//! `msub_efficacy` answers whether mean subtraction removes precisely the
//! Koopman mode at eigenvalue 1: it does iff all eigenvalues are roots of
//! unity of a common order p* dividing the trajectory length.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::dmd::{DmdModel, SpectrumSet, TimeSeries};
use crate::error::{KdmdError, Result};
use crate::linalg::{companion_from, eigenvalues, min_norm_lstsq, CMat, CVec, SvdThreshold};

/// Default relative mode-norm threshold: a mode is "trivial" when its norm
/// is below this fraction of the largest mode norm.
pub const DEFAULT_NORM_THRESHOLD_REL: f64 = 1e-8;

/// Eigenvalue match tolerance when pairing a target eigenvalue with the
/// spectrum of the superset companion matrix.
pub const MATCH_TOL: f64 = 1e-6;

/// Root-of-unity detection tolerance: λ counts as a p-th root of unity when
/// |λ^p − 1| is below this.
pub const UNITY_TOL: f64 = 1e-9;

/// Default scan limit for the common root-of-unity order p*.
pub const DEFAULT_P_MAX: usize = 64;

/// Result of mode-norm pruning.
#[derive(Debug, Clone)]
pub struct PrunedSpectrum {
    pub kept: SpectrumSet,
    pub discarded: SpectrumSet,
    /// Mode norm per eigenvalue index (model ordering).
    pub mode_norms: Vec<f64>,
    /// Absolute norm cutoff actually applied.
    pub norm_threshold: f64,
}

/// KMD-Quality score with its two ingredients.
#[derive(Debug, Clone, Serialize)]
pub struct KmdQualityReport {
    pub rho_subset: f64,
    pub delta_trivial: f64,
    pub quality: f64,
    /// Coefficients of the closest companion matrix containing the target.
    #[serde(skip)]
    pub superset_c: CVec,
}

/// Whether (and when) mean subtraction removes exactly the mode at 1.
#[derive(Debug, Clone)]
pub struct MsubEfficacy {
    /// Least common order p ≤ p_max for which every eigenvalue satisfies
    /// λ^p = 1, when one exists.
    pub p_star: Option<usize>,
    pub one_in_spectrum: bool,
}

impl MsubEfficacy {
    /// Does mean subtraction succeed on a trajectory of `n_plus_1` columns?
    pub fn succeeds_at(&self, n_plus_1: usize) -> bool {
        match self.p_star {
            Some(p) => n_plus_1 % p == 0,
            None => false,
        }
    }
}

/// Split a model's spectrum into eigenvalues with non-trivial modes (norm
/// above `norm_threshold_rel × max norm`) and the rest.
pub fn sigma_nontriv(
    model: &DmdModel,
    norm_threshold_rel: f64,
) -> Result<PrunedSpectrum> {
    if model.degenerate {
        return Err(KdmdError::DegenerateSpectrum);
    }
    let n = model.companion_order;
    let mode_norms: Vec<f64> = (0..n)
        .map(|j| {
            model
                .modes
                .column(j)
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let max_norm = mode_norms.iter().cloned().fold(0.0f64, f64::max);
    let norm_threshold = norm_threshold_rel * max_norm;
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    for (j, &nrm) in mode_norms.iter().enumerate() {
        if nrm > norm_threshold {
            kept.push(model.eigenvalues[j]);
        } else {
            discarded.push(model.eigenvalues[j]);
        }
    }
    Ok(PrunedSpectrum {
        kept: SpectrumSet::new(kept, MATCH_TOL),
        discarded: SpectrumSet::new(discarded, MATCH_TOL),
        mode_norms,
        norm_threshold,
    })
}

/// Max over b1 ∈ B1 of the distance from b1 to B2: zero iff B1 ⊆ B2.
pub fn rho_subset(b1: &SpectrumSet, b2: &SpectrumSet) -> Result<f64> {
    if b1.is_empty() || b2.is_empty() {
        return Err(KdmdError::InvalidInput("rho_subset: empty spectrum set".into()));
    }
    Ok(b1
        .values()
        .iter()
        .map(|x| {
            b2.values()
                .iter()
                .map(|y| (x - y).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max))
}

/// Ascending coefficients of the monic polynomial with the given roots.
fn monic_root_poly(roots: &[C64]) -> Vec<C64> {
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    for &root in roots {
        // Multiply by (z − root).
        let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= root * c;
        }
        coeffs = next;
    }
    coeffs
}

/// Companion coefficients γ closest to `c` (in ℓ²) among those whose
/// companion matrix has `B` inside its spectrum.
///
/// Convention: a coefficient vector γ of length n encodes the polynomial
/// `γ_1 + γ_2 z + … + γ_n z^{n−1} − z^n`, i.e. γ = −(ascending coefficients
/// of the monic target). For B = {2, 3} this gives γ = [−6, 5].
pub fn closest_superset_companion(b: &SpectrumSet, c: &CVec) -> Result<CVec> {
    let k = b.len();
    let n = c.len();
    if k == 0 {
        return Err(KdmdError::InvalidInput("closest_superset_companion: empty target".into()));
    }
    if k > n {
        return Err(KdmdError::InvalidInput(format!(
            "closest_superset_companion: target has {k} roots but only {n} coefficients"
        )));
    }
    let bp = monic_root_poly(b.values()); // degree k, ascending, bp[k] = 1
    if k == n {
        return Ok((0..n).map(|i| -bp[i]).collect());
    }
    // Target q = bp · s with s monic of degree f = n − k; γ_i = −q_i.
    // With s_f = 1 fixed, γ is affine in s's free coefficients:
    //   γ_i = −bp[i−f]  −  Σ_{j<f} bp[i−j] s_j .
    let f = n - k;
    let mut gamma_fixed = CVec::zeros(n);
    for i in 0..n {
        if i >= f && i - f <= k {
            gamma_fixed[i] = -bp[i - f];
        }
    }
    let mut m = CMat::zeros((n, f));
    for i in 0..n {
        for j in 0..f {
            if i >= j && i - j <= k {
                m[(i, j)] = -bp[i - j];
            }
        }
    }
    let rhs = c - &gamma_fixed;
    let s_free = min_norm_lstsq(&m, &rhs, SvdThreshold::default())?;
    Ok(&gamma_fixed + &m.dot(&s_free))
}

/// Factor on the attainable accuracy `ε · ‖X̃‖_F · ‖v_λ‖` below which a
/// computed mode norm is indistinguishable from zero and reported as such.
/// Ill-separated *spurious* eigenvalues have enormous `‖v_λ‖`, so their
/// formally-zero modes would otherwise pick up amplified rounding noise.
const MODE_NOISE_FLOOR: f64 = 100.0 * f64::EPSILON;

/// Mode norms of the companion matrix `T[gamma]` measured on the data block
/// `X̃` (the series without its last snapshot), with the inverse-Vandermonde
/// eigenvector normalization. Returns (eigenvalues, squared mode norms).
///
/// `targets` must each match an eigenvalue within [`MATCH_TOL`]; the matched
/// eigenvalues must be separated from *all* other eigenvalues by more than
/// [`MATCH_TOL`] so their mode norms are well conditioned. The remaining
/// (spurious) eigenvalues may cluster freely — each column is computed from
/// its own Lagrange product, and norms below the rounding floor are zeroed.
fn superset_mode_norms(
    x_tilde: &CMat,
    gamma: &CVec,
    targets: &SpectrumSet,
) -> Result<(CVec, Vec<f64>, Vec<bool>)> {
    let n = gamma.len();
    let evals_raw = eigenvalues(&companion_from(gamma))?;
    let mut evals: Vec<C64> = evals_raw.to_vec();
    crate::dmd::sort_spectrum(&mut evals);
    let evals: CVec = evals.into_iter().collect();

    let mut matched = vec![false; n];
    for &target in targets.values() {
        let (best_idx, best_dist) = evals
            .iter()
            .enumerate()
            .map(|(i, lam)| (i, (lam - target).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if best_dist > MATCH_TOL {
            return Err(KdmdError::MatchingFailure(format!(
                "target eigenvalue {target} is {best_dist:.3e} away from the closest \
                 eigenvalue of the superset companion matrix"
            )));
        }
        if matched[best_idx] {
            return Err(KdmdError::DegenerateSpectrum);
        }
        matched[best_idx] = true;
    }
    // Matched eigenvalues must be isolated; unmatched ones may cluster.
    for i in 0..n {
        if !matched[i] {
            continue;
        }
        for j in 0..n {
            if j != i && (evals[i] - evals[j]).norm() <= MATCH_TOL {
                return Err(KdmdError::DegenerateSpectrum);
            }
        }
    }

    let x_scale = crate::linalg::mat_fro_norm(x_tilde);
    let mut norms_sq = Vec::with_capacity(n);
    for j in 0..n {
        let v = crate::linalg::lagrange_column(&evals, j)?;
        let mode = x_tilde.dot(&v);
        let norm = crate::linalg::vec_norm(&mode);
        let floor = MODE_NOISE_FLOOR * x_scale * crate::linalg::vec_norm(&v);
        norms_sq.push(if norm <= floor { 0.0 } else { norm * norm });
    }
    Ok((evals, norms_sq, matched))
}

/// Fraction of squared mode norm carried by eigenvalues outside `B`, on the
/// closest companion matrix containing `B`.
pub fn delta_trivial(z_used: &TimeSeries, b: &SpectrumSet, c: &CVec) -> Result<f64> {
    let gamma = closest_superset_companion(b, c)?;
    delta_trivial_with_superset(z_used, b, &gamma)
}

fn delta_trivial_with_superset(z_used: &TimeSeries, b: &SpectrumSet, gamma: &CVec) -> Result<f64> {
    let n = gamma.len();
    if z_used.num_snapshots() != n + 1 {
        return Err(KdmdError::DimensionMismatch(format!(
            "delta_trivial: {} coefficients need {} snapshots, series has {}",
            n,
            n + 1,
            z_used.num_snapshots()
        )));
    }
    let x_tilde = z_used.x_block();
    let (_evals, norms_sq, matched) = superset_mode_norms(&x_tilde, gamma, b)?;
    let total: f64 = norms_sq.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let in_b: f64 = norms_sq.iter().zip(&matched).filter(|(_, &m)| m).map(|(n, _)| n).sum();
    Ok((1.0 - in_b / total).clamp(0.0, 1.0))
}

/// Combine ρ_subset and δ_trivial into the scalar quality score.
pub fn quality_from(rho: f64, delta: f64) -> f64 {
    1.0 - (1.0 - 10f64.powf(-rho)).max(delta)
}

/// Score the fit `c` on `z_used` against the target eigenvalue set `B`.
pub fn kmd_quality(z_used: &TimeSeries, b: &SpectrumSet, c: &CVec) -> Result<KmdQualityReport> {
    let fitted_spectrum = {
        let vals = eigenvalues(&companion_from(c))?;
        SpectrumSet::new(vals.iter().cloned(), 0.0)
    };
    let rho = rho_subset(b, &fitted_spectrum)?;
    let superset_c = closest_superset_companion(b, c)?;
    let delta = delta_trivial_with_superset(z_used, b, &superset_c)?;
    Ok(KmdQualityReport {
        rho_subset: rho,
        delta_trivial: delta,
        quality: quality_from(rho, delta),
        superset_c,
    })
}

/// Determine the common root-of-unity order p* of a spectrum, if any, and
/// hence the trajectory lengths at which mean subtraction succeeds.
///
/// Assumes the observables span a Koopman-invariant dictionary; with that
/// caveat, mean subtraction removes exactly the mode at eigenvalue 1 on a
/// trajectory of n+1 columns iff p* exists and divides n+1.
pub fn msub_efficacy(spectrum: &SpectrumSet, p_max: usize) -> Result<MsubEfficacy> {
    if spectrum.is_empty() {
        return Err(KdmdError::InvalidInput("msub_efficacy: empty spectrum".into()));
    }
    let one_in_spectrum = spectrum.contains(C64::new(1.0, 0.0));
    let mut powers: Vec<C64> = vec![C64::new(1.0, 0.0); spectrum.len()];
    let mut p_star = None;
    for p in 1..=p_max {
        for (pw, lam) in powers.iter_mut().zip(spectrum.values()) {
            *pw *= lam;
        }
        if powers.iter().all(|pw| (pw - C64::new(1.0, 0.0)).norm() < UNITY_TOL) {
            p_star = Some(p);
            break;
        }
    }
    Ok(MsubEfficacy { p_star, one_in_spectrum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmd::fit_companion;
    use crate::linalg::vec_norm;
    use ndarray::array;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn set(vals: &[C64]) -> SpectrumSet {
        SpectrumSet::new(vals.iter().cloned(), 1e-9)
    }

    #[test]
    fn rho_hand_cases() {
        let b = set(&[r(1.0), C64::new(0.0, 1.0)]);
        assert!(rho_subset(&b, &b).unwrap() < 1e-15);

        let zero = set(&[r(0.0)]);
        let other = set(&[r(3.0), C64::new(0.0, 4.0)]);
        assert!((rho_subset(&zero, &other).unwrap() - 3.0).abs() < 1e-14);

        let one = set(&[r(1.0)]);
        let got = rho_subset(&b, &one).unwrap();
        assert!((got - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn superset_already_contained() {
        // c = [1, 0] has characteristic polynomial z^2 − 1, roots {1, −1}.
        let b = set(&[r(1.0), r(-1.0)]);
        let c = array![r(1.0), r(0.0)];
        let gamma = closest_superset_companion(&b, &c).unwrap();
        assert!(vec_norm(&(&gamma - &c)) < 1e-12);
    }

    #[test]
    fn superset_single_root_hand_case() {
        // B = {1}, c = 0: minimize ‖γ‖ subject to γ_1 + γ_2 = 1.
        let b = set(&[r(1.0)]);
        let c = array![r(0.0), r(0.0)];
        let gamma = closest_superset_companion(&b, &c).unwrap();
        assert!((gamma[0] - r(0.5)).norm() < 1e-12);
        assert!((gamma[1] - r(0.5)).norm() < 1e-12);
    }

    #[test]
    fn superset_full_target_sign_convention() {
        // B = {2, 3}: z^2 − 5z + 6 encodes as γ = [−6, 5].
        let b = set(&[r(2.0), r(3.0)]);
        let c = array![r(0.3), r(-0.7)];
        let gamma = closest_superset_companion(&b, &c).unwrap();
        assert!((gamma[0] - r(-6.0)).norm() < 1e-12);
        assert!((gamma[1] - r(5.0)).norm() < 1e-12);
    }

    #[test]
    fn superset_spectrum_contains_target() {
        let mut rng = crate::testutil::rng(17);
        for _ in 0..10 {
            let b_vals = crate::testutil::random_cvec(&mut rng, 3);
            let b = set(&b_vals.to_vec());
            let c = crate::testutil::random_cvec(&mut rng, 7);
            let gamma = closest_superset_companion(&b, &c).unwrap();
            let spec = SpectrumSet::new(
                eigenvalues(&companion_from(&gamma)).unwrap().iter().cloned(),
                0.0,
            );
            assert!(rho_subset(&b, &spec).unwrap() < 1e-7);
        }
    }

    #[test]
    fn scalar_series_pruning_keeps_the_true_eigenvalue() {
        let data = CMat::from_shape_fn((1, 4), |(_, j)| r([1.0, 2.0, 4.0, 8.0][j]));
        let z = TimeSeries::new(data, "geo").unwrap();
        let model = fit_companion(&z, SvdThreshold::default()).unwrap();
        let pruned = sigma_nontriv(&model, DEFAULT_NORM_THRESHOLD_REL).unwrap();
        assert_eq!(pruned.kept.len(), 1);
        assert!(pruned.kept.contains(r(2.0)));
        assert_eq!(pruned.discarded.len(), 2);
    }

    #[test]
    fn delta_trivial_full_spectrum_is_zero() {
        let mut rng = crate::testutil::rng(23);
        let data = crate::testutil::random_cmat(&mut rng, 3, 6);
        let z = TimeSeries::new(data, "r").unwrap();
        let model = fit_companion(&z, SvdThreshold::default()).unwrap();
        let b = SpectrumSet::new(model.eigenvalues.iter().cloned(), 1e-9);
        let d = delta_trivial(&z, &b, &model.c_star).unwrap();
        assert!(d < 1e-10, "delta = {d}");
    }

    #[test]
    fn delta_trivial_scalar_series_true_mode_only() {
        let data = CMat::from_shape_fn((1, 4), |(_, j)| r([1.0, 2.0, 4.0, 8.0][j]));
        let z = TimeSeries::new(data, "geo").unwrap();
        let model = fit_companion(&z, SvdThreshold::default()).unwrap();
        let b = set(&[r(2.0)]);
        let d = delta_trivial(&z, &b, &model.c_star).unwrap();
        assert!(d < 1e-10, "delta = {d}");
    }

    #[test]
    fn quality_formula_cases() {
        assert!((quality_from(0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((quality_from(1.0, 0.0) - 0.1).abs() < 1e-15);
        assert!((quality_from(0.0, 0.25) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn msub_efficacy_roots_of_unity() {
        let roots: Vec<C64> = (1..=7)
            .map(|j| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / 7.0))
            .collect();
        let eff = msub_efficacy(&set(&roots), DEFAULT_P_MAX).unwrap();
        assert_eq!(eff.p_star, Some(7));
        assert!(eff.one_in_spectrum);
        assert!(eff.succeeds_at(14));
        assert!(!eff.succeeds_at(10));
    }

    #[test]
    fn msub_efficacy_no_common_order() {
        let spec = set(&[r(-0.5), r(1.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)]);
        let eff = msub_efficacy(&spec, DEFAULT_P_MAX).unwrap();
        assert_eq!(eff.p_star, None);
        for n1 in 2..100 {
            assert!(!eff.succeeds_at(n1));
        }
    }
}
