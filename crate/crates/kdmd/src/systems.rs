//! Test-system generators and external time-series I/O.
//!
//! The LTI families produce trajectories of a finite-dimensional linear
//! recurrence observed through a random dictionary: `Z = C · Θ` with
//! `C = C̃ · diag(φ₁)` and `Θ` the Vandermonde matrix on the eigenvalues.
//! Trajectories are computed by that product rather than by iterating the
//! recurrence, so unit-modulus eigenvalues suffer no drift and theorem-level
//! tests can be exact.
//!
//! `LTI1a` has spectrum = the 7th roots of unity (contains 1); `LTI1b` has 7
//! random points on the unit circle (almost surely avoids 1); `LTI3` mixes 4
//! unit-modulus eigenvalues with three of moduli 0.97, 0.93, 0.87.

use std::fmt;
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dmd::{SpectrumSet, TimeSeries};
use crate::error::{KdmdError, Result};
use crate::linalg::{numerical_rank, vandermonde, CMat, CVec, SvdThreshold};

/// Magnitude range for random dictionary entries and initial-state
/// components; bounded away from zero so no observable or eigen-direction
/// silently vanishes.
const MAG_RANGE: (f64, f64) = (0.5, 1.5);

/// The built-in LTI families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtiPreset {
    Lti1a,
    Lti1b,
    Lti3,
}

impl fmt::Display for LtiPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LtiPreset::Lti1a => write!(f, "lti1a"),
            LtiPreset::Lti1b => write!(f, "lti1b"),
            LtiPreset::Lti3 => write!(f, "lti3"),
        }
    }
}

impl std::str::FromStr for LtiPreset {
    type Err = KdmdError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lti1a" | "lti_1a" | "1a" => Ok(LtiPreset::Lti1a),
            "lti1b" | "lti_1b" | "1b" => Ok(LtiPreset::Lti1b),
            "lti3" | "lti_3" | "3" => Ok(LtiPreset::Lti3),
            other => Err(KdmdError::InvalidInput(format!("unknown LTI preset '{other}'"))),
        }
    }
}

/// A finite-dimensional linear system observed through a dictionary.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    pub eigenvalues: SpectrumSet,
    /// The dictionary C̃ (m × r).
    pub dictionary: CMat,
    /// Initial eigenfunction values φ(υ₁) (length r), all nonzero.
    pub initial_state: CVec,
}

impl LtiSystem {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }
}

fn random_mag_phase(rng: &mut ChaCha8Rng) -> C64 {
    let mag = rng.gen_range(MAG_RANGE.0..MAG_RANGE.1);
    let phase = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    C64::from_polar(mag, phase)
}

fn unit_circle_point(rng: &mut ChaCha8Rng) -> C64 {
    C64::from_polar(1.0, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
}

fn preset_eigenvalues(preset: LtiPreset, rng: &mut ChaCha8Rng) -> Vec<C64> {
    match preset {
        LtiPreset::Lti1a => (1..=7)
            .map(|j| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / 7.0))
            .collect(),
        LtiPreset::Lti1b => (0..7).map(|_| unit_circle_point(rng)).collect(),
        LtiPreset::Lti3 => {
            let mut vals: Vec<C64> = (0..4).map(|_| unit_circle_point(rng)).collect();
            for &modulus in &[0.97, 0.93, 0.87] {
                vals.push(C64::from_polar(
                    modulus,
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                ));
            }
            vals
        }
    }
}

/// Build an LTI system with a seeded random dictionary and initial state.
/// With `full_rank_dictionary`, the dictionary is regenerated until its
/// numerical rank is r (requires m ≥ r), making it Koopman-invariant.
pub fn make_lti(
    preset: LtiPreset,
    m: usize,
    full_rank_dictionary: bool,
    seed: u64,
) -> Result<LtiSystem> {
    if m == 0 {
        return Err(KdmdError::InvalidInput("make_lti: m must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eigs = loop {
        let candidate = preset_eigenvalues(preset, &mut rng);
        // Random draws make collisions measure-zero, but re-draw defensively.
        let distinct = candidate
            .iter()
            .enumerate()
            .all(|(i, a)| candidate[..i].iter().all(|b| (a - b).norm() > 1e-9));
        if distinct {
            break candidate;
        }
    };
    let r = eigs.len();
    if full_rank_dictionary && m < r {
        return Err(KdmdError::InvalidInput(format!(
            "make_lti: a full-rank dictionary needs m >= r = {r}, got m = {m}"
        )));
    }
    let dictionary = loop {
        let cand = CMat::from_shape_fn((m, r), |_| random_mag_phase(&mut rng));
        if !full_rank_dictionary
            || numerical_rank(&cand, SvdThreshold::default())? == r
        {
            break cand;
        }
    };
    let initial_state: CVec = (0..r).map(|_| random_mag_phase(&mut rng)).collect();
    Ok(LtiSystem {
        eigenvalues: SpectrumSet::new(eigs, 1e-9),
        dictionary,
        initial_state,
    })
}

/// Build an LTI system from an explicit eigenvalue list (randomized
/// dictionary and initial state, as in `make_lti`).
pub fn make_custom_lti(
    eigenvalues: &[C64],
    m: usize,
    full_rank_dictionary: bool,
    seed: u64,
) -> Result<LtiSystem> {
    if m == 0 || eigenvalues.is_empty() {
        return Err(KdmdError::InvalidInput("make_custom_lti: need m >= 1 and eigenvalues".into()));
    }
    let r = eigenvalues.len();
    if full_rank_dictionary && m < r {
        return Err(KdmdError::InvalidInput(format!(
            "make_custom_lti: a full-rank dictionary needs m >= r = {r}, got m = {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dictionary = loop {
        let cand = CMat::from_shape_fn((m, r), |_| random_mag_phase(&mut rng));
        if !full_rank_dictionary
            || numerical_rank(&cand, SvdThreshold::default())? == r
        {
            break cand;
        }
    };
    let initial_state: CVec = (0..r).map(|_| random_mag_phase(&mut rng)).collect();
    Ok(LtiSystem {
        eigenvalues: SpectrumSet::new(eigenvalues.iter().cloned(), 1e-12),
        dictionary,
        initial_state,
    })
}

/// Exact trajectory `Z = C · Θ` with `C = dictionary · diag(initial_state)`
/// and `Θ = vandermonde(eigenvalues, num_snapshots)`.
pub fn lti_trajectory(sys: &LtiSystem, num_snapshots: usize) -> Result<TimeSeries> {
    if num_snapshots < 2 {
        return Err(KdmdError::InvalidInput("lti_trajectory: need at least 2 snapshots".into()));
    }
    let eigs: CVec = sys.eigenvalues.values().iter().cloned().collect();
    let theta = vandermonde(&eigs, num_snapshots)?;
    let mut c = sys.dictionary.clone();
    for (j, mut col) in c.columns_mut().into_iter().enumerate() {
        let phi = sys.initial_state[j];
        col.mapv_inplace(|v| v * phi);
    }
    TimeSeries::new(c.dot(&theta), "lti")
}

/// Van der Pol sampling configuration.
#[derive(Debug, Clone, Copy)]
pub struct VdpConfig {
    pub initial: (f64, f64),
    /// Integrator step; keep ≤ 0.01 for the default μ = 1 stiffness.
    pub dt: f64,
    /// Observation interval in steps (samples every `sample_stride` steps).
    pub sample_stride: usize,
    pub num_samples: usize,
}

impl Default for VdpConfig {
    fn default() -> Self {
        Self { initial: (0.1, 0.0), dt: 0.01, sample_stride: 10, num_samples: 64 }
    }
}

fn vdp_field(u: (f64, f64)) -> (f64, f64) {
    (u.1, (1.0 - u.0 * u.0) * u.1 - u.0)
}

fn rk4_step(u: (f64, f64), dt: f64) -> (f64, f64) {
    let k1 = vdp_field(u);
    let k2 = vdp_field((u.0 + 0.5 * dt * k1.0, u.1 + 0.5 * dt * k1.1));
    let k3 = vdp_field((u.0 + 0.5 * dt * k2.0, u.1 + 0.5 * dt * k2.1));
    let k4 = vdp_field((u.0 + dt * k3.0, u.1 + dt * k3.1));
    (
        u.0 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        u.1 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Integrate the Van der Pol state for test oracles. Returns the state after
/// `steps` fixed RK4 steps of size `dt`.
pub fn vdp_integrate(initial: (f64, f64), dt: f64, steps: usize) -> Result<(f64, f64)> {
    let mut u = initial;
    for _ in 0..steps {
        u = rk4_step(u, dt);
        if !u.0.is_finite() || !u.1.is_finite() {
            return Err(KdmdError::NonFinite("Van der Pol state"));
        }
    }
    Ok(u)
}

/// Sample a Van der Pol trajectory through a 1×2 linear observable.
pub fn vdp_trajectory(cfg: &VdpConfig, dictionary: &CMat) -> Result<TimeSeries> {
    if dictionary.dim() != (1, 2) {
        return Err(KdmdError::DimensionMismatch(format!(
            "vdp_trajectory: dictionary must be 1x2, got {}x{}",
            dictionary.nrows(),
            dictionary.ncols()
        )));
    }
    if cfg.num_samples < 2 {
        return Err(KdmdError::InvalidInput("vdp_trajectory: need at least 2 samples".into()));
    }
    let mut u = cfg.initial;
    let mut data = CMat::zeros((1, cfg.num_samples));
    for j in 0..cfg.num_samples {
        data[(0, j)] =
            dictionary[(0, 0)] * C64::new(u.0, 0.0) + dictionary[(0, 1)] * C64::new(u.1, 0.0);
        if j + 1 < cfg.num_samples {
            for _ in 0..cfg.sample_stride {
                u = rk4_step(u, cfg.dt);
                if !u.0.is_finite() || !u.1.is_finite() {
                    return Err(KdmdError::NonFinite("Van der Pol state"));
                }
            }
        }
    }
    TimeSeries::new(data, "vdp")
}

/// How complex entries are laid out in CSV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvComplexFormat {
    /// One cell per entry, `a+bi` / `a-bi`; pure reals stay plain.
    Combined,
    /// Two adjacent cells per entry: real part, imaginary part.
    PairedColumns,
}

fn format_complex(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im >= 0.0 {
        format!("{}+{}i", z.re, z.im)
    } else {
        format!("{}-{}i", z.re, -z.im)
    }
}

fn parse_complex(cell: &str) -> Result<C64> {
    let s = cell.trim();
    if s.is_empty() {
        return Err(KdmdError::CsvParse("empty cell".into()));
    }
    if let Ok(re) = s.parse::<f64>() {
        return Ok(C64::new(re, 0.0));
    }
    // a+bi / a-bi: find the sign that separates the parts (not at index 0,
    // not part of an exponent).
    let body = s.strip_suffix(['i', 'I']).ok_or_else(|| {
        KdmdError::CsvParse(format!("cannot parse '{s}' as a number"))
    })?;
    let bytes = body.as_bytes();
    let mut split = None;
    for idx in (1..bytes.len()).rev() {
        let ch = bytes[idx] as char;
        if (ch == '+' || ch == '-') && !matches!(bytes[idx - 1] as char, 'e' | 'E') {
            split = Some(idx);
            break;
        }
    }
    let idx = split.ok_or_else(|| KdmdError::CsvParse(format!("cannot parse '{s}'")))?;
    let re: f64 = body[..idx]
        .parse()
        .map_err(|_| KdmdError::CsvParse(format!("bad real part in '{s}'")))?;
    let im_str = &body[idx..];
    let im: f64 = if im_str == "+" {
        1.0
    } else if im_str == "-" {
        -1.0
    } else {
        im_str.parse().map_err(|_| KdmdError::CsvParse(format!("bad imaginary part in '{s}'")))?
    };
    Ok(C64::new(re, im))
}

/// Write a series as CSV: rows = observables, columns = snapshots.
pub fn export_csv(z: &TimeSeries, path: &Path, format: CsvComplexFormat) -> Result<()> {
    let mut out = String::new();
    for row in z.data.rows() {
        let cells: Vec<String> = match format {
            CsvComplexFormat::Combined => row.iter().map(|v| format_complex(*v)).collect(),
            CsvComplexFormat::PairedColumns => row
                .iter()
                .flat_map(|v| [format!("{}", v.re), format!("{}", v.im)])
                .collect(),
        };
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a series from CSV. An optional header row (non-numeric first cell)
/// is skipped. `paired` interprets adjacent column pairs as (re, im).
pub fn ingest_csv(path: &Path, format: CsvComplexFormat) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if rows.is_empty() && lineno == 0 && parse_complex(cells[0]).is_err() {
            continue; // header row
        }
        let parsed: Vec<C64> = match format {
            CsvComplexFormat::Combined => {
                cells.iter().map(|c| parse_complex(c)).collect::<Result<_>>()?
            }
            CsvComplexFormat::PairedColumns => {
                if cells.len() % 2 != 0 {
                    return Err(KdmdError::CsvParse(format!(
                        "line {}: paired format needs an even cell count, got {}",
                        lineno + 1,
                        cells.len()
                    )));
                }
                cells
                    .chunks(2)
                    .map(|pair| {
                        let re = parse_complex(pair[0])?;
                        let im = parse_complex(pair[1])?;
                        Ok(C64::new(re.re, im.re))
                    })
                    .collect::<Result<_>>()?
            }
        };
        if let Some(first) = rows.first() {
            if first.len() != parsed.len() {
                return Err(KdmdError::CsvParse(format!(
                    "line {}: ragged row ({} cells, expected {})",
                    lineno + 1,
                    parsed.len(),
                    first.len()
                )));
            }
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(KdmdError::CsvParse("empty file".into()));
    }
    let (m, n1) = (rows.len(), rows[0].len());
    if n1 < 2 {
        return Err(KdmdError::CsvParse("need at least 2 snapshot columns".into()));
    }
    let data = CMat::from_shape_fn((m, n1), |(i, j)| rows[i][j]);
    TimeSeries::new(data, path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_fro_norm;
    use crate::preprocess::temporal_mean;

    #[test]
    fn lti1a_contains_one() {
        let sys = make_lti(LtiPreset::Lti1a, 1, false, 1).unwrap();
        assert!(sys.eigenvalues.contains(C64::new(1.0, 0.0)));
        assert_eq!(sys.dimension(), 7);
    }

    #[test]
    fn lti1b_on_unit_circle() {
        let sys = make_lti(LtiPreset::Lti1b, 1, false, 2).unwrap();
        assert_eq!(sys.dimension(), 7);
        for v in sys.eigenvalues.values() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lti3_moduli_tail() {
        let sys = make_lti(LtiPreset::Lti3, 1, false, 3).unwrap();
        let mut moduli: Vec<f64> = sys.eigenvalues.values().iter().map(|v| v.norm()).collect();
        moduli.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((moduli[4] - 0.97).abs() < 1e-12);
        assert!((moduli[5] - 0.93).abs() < 1e-12);
        assert!((moduli[6] - 0.87).abs() < 1e-12);
    }

    #[test]
    fn full_rank_dictionary_has_rank_r() {
        let sys = make_lti(LtiPreset::Lti1a, 9, true, 4).unwrap();
        assert_eq!(numerical_rank(&sys.dictionary, SvdThreshold::default()).unwrap(), 7);
    }

    #[test]
    fn trajectory_satisfies_recursion() {
        let sys = make_lti(LtiPreset::Lti3, 2, false, 5).unwrap();
        let z = lti_trajectory(&sys, 10).unwrap();
        assert_eq!(z.data.dim(), (2, 10));
        // z_{j+1} = C Λ^j φ with C = dictionary · diag(initial).
        let eigs = sys.eigenvalues.values();
        for j in 0..10 {
            for row in 0..2 {
                let mut expect = C64::new(0.0, 0.0);
                for (k, lam) in eigs.iter().enumerate() {
                    expect += sys.dictionary[(row, k)]
                        * sys.initial_state[k]
                        * lam.powi(j as i32);
                }
                assert!((z.data[(row, j)] - expect).norm() < 1e-12 * expect.norm().max(1.0));
            }
        }
    }

    #[test]
    fn lti1a_mean_at_multiple_of_seven_is_the_mode_at_one() {
        // With n+1 = 14 the geometric sums of all λ ≠ 1 vanish, so the
        // temporal mean is exactly the Koopman mode at eigenvalue 1.
        let sys = make_lti(LtiPreset::Lti1a, 3, false, 6).unwrap();
        let z = lti_trajectory(&sys, 14).unwrap();
        let mu = temporal_mean(&z);
        let one_idx = sys
            .eigenvalues
            .values()
            .iter()
            .position(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-9)
            .unwrap();
        for row in 0..3 {
            let mode = sys.dictionary[(row, one_idx)] * sys.initial_state[one_idx];
            assert!((mu[row] - mode).norm() < 1e-10);
        }
    }

    #[test]
    fn seed_determinism() {
        let a = make_lti(LtiPreset::Lti1b, 2, false, 42).unwrap();
        let b = make_lti(LtiPreset::Lti1b, 2, false, 42).unwrap();
        let za = lti_trajectory(&a, 8).unwrap();
        let zb = lti_trajectory(&b, 8).unwrap();
        assert!(mat_fro_norm(&(&za.data - &zb.data)) == 0.0);
    }

    #[test]
    fn vdp_rk4_order_of_convergence() {
        // End-state error vs a dt/8 reference should shrink ~16x when dt
        // halves (4th-order method).
        let t_final = 2.0;
        let reference = vdp_integrate((0.5, 0.5), t_final / 1600.0, 1600).unwrap();
        let coarse = vdp_integrate((0.5, 0.5), t_final / 200.0, 200).unwrap();
        let fine = vdp_integrate((0.5, 0.5), t_final / 400.0, 400).unwrap();
        let err = |u: (f64, f64)| {
            ((u.0 - reference.0).powi(2) + (u.1 - reference.1).powi(2)).sqrt()
        };
        let ratio = err(coarse) / err(fine);
        assert!(ratio > 10.0 && ratio < 24.0, "convergence ratio {ratio}");
    }

    #[test]
    fn vdp_limit_cycle_amplitude() {
        // After the transient, the limit cycle peaks near |u1| ≈ 2.009.
        let mut u = (0.1, 0.0);
        for _ in 0..30_000 {
            u = rk4_step(u, 0.01);
        }
        let mut peak = 0.0f64;
        for _ in 0..10_000 {
            u = rk4_step(u, 0.01);
            peak = peak.max(u.0.abs());
        }
        assert!((peak - 2.009).abs() < 0.01, "peak {peak}");
    }

    #[test]
    fn vdp_stays_bounded() {
        let mut u = (0.1, 0.0);
        let mut max_norm = 0.0f64;
        for _ in 0..100_000 {
            u = rk4_step(u, 0.01);
            max_norm = max_norm.max((u.0 * u.0 + u.1 * u.1).sqrt());
        }
        assert!(max_norm < 10.0, "max norm {max_norm}");
    }

    #[test]
    fn csv_round_trip_real() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("real.csv");
        let data = CMat::from_shape_fn((2, 3), |(i, j)| C64::new((i * 3 + j) as f64 * 0.5, 0.0));
        let z = TimeSeries::new(data, "t").unwrap();
        export_csv(&z, &path, CsvComplexFormat::Combined).unwrap();
        let back = ingest_csv(&path, CsvComplexFormat::Combined).unwrap();
        assert!(mat_fro_norm(&(&back.data - &z.data)) == 0.0);
    }

    #[test]
    fn csv_complex_combined_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cx.csv");
        std::fs::write(&path, "1.5+2i,3-0.25i\n").unwrap();
        let z = ingest_csv(&path, CsvComplexFormat::Combined).unwrap();
        assert_eq!(z.data.dim(), (1, 2));
        assert!((z.data[(0, 0)] - C64::new(1.5, 2.0)).norm() < 1e-15);
        assert!((z.data[(0, 1)] - C64::new(3.0, -0.25)).norm() < 1e-15);
    }

    #[test]
    fn csv_paired_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("paired.csv");
        let mut rng = crate::testutil::rng(31);
        let data = crate::testutil::random_cmat(&mut rng, 2, 4);
        let z = TimeSeries::new(data, "t").unwrap();
        export_csv(&z, &path, CsvComplexFormat::PairedColumns).unwrap();
        let back = ingest_csv(&path, CsvComplexFormat::PairedColumns).unwrap();
        assert!(mat_fro_norm(&(&back.data - &z.data)) == 0.0);
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(ingest_csv(&empty, CsvComplexFormat::Combined).is_err());

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
        assert!(ingest_csv(&ragged, CsvComplexFormat::Combined).is_err());

        let words = dir.path().join("words.csv");
        std::fs::write(&words, "a,b\nc,d\n").unwrap();
        assert!(ingest_csv(&words, CsvComplexFormat::Combined).is_err());
    }
}
