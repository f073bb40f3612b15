//! Companion-matrix DMD: fit the minimum-norm companion coefficients of a
//! time series, expose the spectrum and canonically normalized modes, and
//! reconstruct / forecast with them.
//!
//! For a series `Z = [z_1 … z_{n+1}]` the fit splits `Z` into `X` (first `n`
//! columns) and the final snapshot `z_{n+1}`, then solves
//! `min ‖X c − z_{n+1}‖₂` for the minimum-norm `c*`. The companion matrix
//! `T[c*]` carries the DMD eigenvalues; modes are the columns of
//! `D* = X · V*` where `(V*)^{-1}` is the Vandermonde matrix on those
//! eigenvalues, which makes the spectral expansion
//! `z_i = Σ_j d*_j λ_j^{i-1}` an identity on zero-residual data.

use ndarray::{s, Axis};
use num_complex::Complex64 as C64;

use crate::error::{KdmdError, Result};
use crate::linalg::{
    self, companion_from, eigen_pairs, min_norm_lstsq, vandermonde, vec_norm, CMat, CVec,
    SvdThreshold,
};
use crate::preprocess::{PipelineDescriptor, PipelineStep};

/// Eigenvalue separation below which the Vandermonde normalization is
/// abandoned in favor of raw unit-norm eigenvectors.
pub const DEGENERACY_TOL: f64 = 1e-6;

/// A complex time series: rows are observables, columns are snapshots.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub data: CMat,
    pub label: String,
    /// Preprocessing already applied to `data`, in application order.
    pub steps: Vec<PipelineStep>,
}

impl TimeSeries {
    pub fn new(data: CMat, label: impl Into<String>) -> Result<Self> {
        if data.ncols() < 2 {
            return Err(KdmdError::InvalidInput(
                "a time series needs at least 2 snapshots".into(),
            ));
        }
        if !linalg::all_finite_mat(&data) {
            return Err(KdmdError::NonFinite("time series"));
        }
        Ok(Self { data, label: label.into(), steps: Vec::new() })
    }

    pub fn with_steps(data: CMat, label: impl Into<String>, steps: Vec<PipelineStep>) -> Result<Self> {
        let mut ts = Self::new(data, label)?;
        ts.steps = steps;
        Ok(ts)
    }

    /// Number of observables (rows).
    pub fn num_observables(&self) -> usize {
        self.data.nrows()
    }

    /// Number of snapshots (columns), i.e. n+1.
    pub fn num_snapshots(&self) -> usize {
        self.data.ncols()
    }

    /// Companion order θ = number of snapshots − 1.
    pub fn companion_order(&self) -> usize {
        self.data.ncols() - 1
    }

    /// All snapshots except the last: the regressor block X.
    pub fn x_block(&self) -> CMat {
        self.data.slice(s![.., ..self.data.ncols() - 1]).to_owned()
    }

    /// All snapshots except the first: the target block Y.
    pub fn y_block(&self) -> CMat {
        self.data.slice(s![.., 1..]).to_owned()
    }

    /// The final snapshot z_{n+1}.
    pub fn last_snapshot(&self) -> CVec {
        self.data.index_axis(Axis(1), self.data.ncols() - 1).to_owned()
    }

    /// Keep only the first `k` snapshots.
    pub fn truncate_snapshots(&self, k: usize) -> Result<Self> {
        if k < 2 || k > self.num_snapshots() {
            return Err(KdmdError::InvalidInput(format!(
                "cannot truncate a {}-snapshot series to {k} snapshots",
                self.num_snapshots()
            )));
        }
        Ok(Self {
            data: self.data.slice(s![.., ..k]).to_owned(),
            label: self.label.clone(),
            steps: self.steps.clone(),
        })
    }
}

/// A finite set of complex eigenvalues with a comparison tolerance.
/// Values closer than the tolerance are merged on construction.
#[derive(Debug, Clone)]
pub struct SpectrumSet {
    values: Vec<C64>,
    match_tolerance: f64,
}

impl SpectrumSet {
    pub fn new(values: impl IntoIterator<Item = C64>, match_tolerance: f64) -> Self {
        let mut kept: Vec<C64> = Vec::new();
        for v in values {
            if !kept.iter().any(|k| (k - v).norm() <= match_tolerance) {
                kept.push(v);
            }
        }
        sort_spectrum(&mut kept);
        Self { values: kept, match_tolerance }
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn match_tolerance(&self) -> f64 {
        self.match_tolerance
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, z: C64) -> bool {
        self.values.iter().any(|v| (v - z).norm() <= self.match_tolerance)
    }

    /// Set union under the receiver's tolerance.
    pub fn union(&self, other: &SpectrumSet) -> SpectrumSet {
        SpectrumSet::new(
            self.values.iter().chain(other.values.iter()).cloned(),
            self.match_tolerance,
        )
    }

    /// Elements of `self` not matched by any element of `other`.
    pub fn difference(&self, other: &SpectrumSet) -> SpectrumSet {
        SpectrumSet::new(
            self.values.iter().filter(|v| !other.contains(**v)).cloned(),
            self.match_tolerance,
        )
    }
}

/// Deterministic ordering: descending modulus, ties broken by ascending
/// phase in (−π, π].
pub fn sort_spectrum(values: &mut [C64]) {
    values.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(a.arg().partial_cmp(&b.arg()).unwrap())
    });
}

/// A fitted companion-DMD model.
#[derive(Debug, Clone)]
pub struct DmdModel {
    /// Minimum-norm companion coefficients (length θ).
    pub c_star: CVec,
    /// Fit residual r* = z_{n+1} − X c* (length m).
    pub residual: CVec,
    /// DMD eigenvalues, sorted descending by modulus (phase breaks ties).
    pub eigenvalues: CVec,
    /// Mode matrix D* (m × θ); column j pairs with eigenvalue j.
    pub modes: CMat,
    /// θ, the companion order.
    pub companion_order: usize,
    /// True when eigenvalues were too close for the Vandermonde
    /// normalization; modes then come from unit-norm eigenvectors.
    pub degenerate: bool,
    /// Preprocessing provenance of the training data.
    pub pipeline: PipelineDescriptor,
}

impl DmdModel {
    pub fn spectrum(&self, match_tolerance: f64) -> SpectrumSet {
        SpectrumSet::new(self.eigenvalues.iter().cloned(), match_tolerance)
    }
}

/// Fit companion DMD on `Z`.
pub fn fit_companion(z: &TimeSeries, tol: SvdThreshold) -> Result<DmdModel> {
    let x = z.x_block();
    let z_last = z.last_snapshot();
    let n = x.ncols();

    let c_star = min_norm_lstsq(&x, &z_last, tol)?;
    let residual = &z_last - &x.dot(&c_star);

    let t = companion_from(&c_star);
    let (raw_vals, raw_vecs) = eigen_pairs(&t)?;

    // Sort eigenpairs into the canonical order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        raw_vals[j]
            .norm()
            .partial_cmp(&raw_vals[i].norm())
            .unwrap()
            .then(raw_vals[i].arg().partial_cmp(&raw_vals[j].arg()).unwrap())
    });
    let eigenvalues: CVec = order.iter().map(|&i| raw_vals[i]).collect();

    let degenerate = min_separation(&eigenvalues) <= DEGENERACY_TOL;
    let modes = if degenerate {
        // Vandermonde inverse is unusable; fall back to unit-norm
        // eigenvectors of the companion matrix.
        let mut v = CMat::zeros((n, n));
        for (col, &src) in order.iter().enumerate() {
            let vec = raw_vecs.index_axis(Axis(1), src);
            let nrm = vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for r in 0..n {
                v[(r, col)] = vec[r] / nrm;
            }
        }
        x.dot(&v)
    } else {
        // D* = X · V* with (V*)^{-1} the Vandermonde matrix on the spectrum.
        x.dot(&linalg::inverse_vandermonde(&eigenvalues)?)
    };

    Ok(DmdModel {
        c_star,
        residual,
        eigenvalues,
        modes,
        companion_order: n,
        degenerate,
        pipeline: PipelineDescriptor {
            steps: z.steps.clone(),
            theta: n,
            source_label: z.label.clone(),
        },
    })
}

fn min_separation(vals: &CVec) -> f64 {
    let n = vals.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            best = best.min((vals[i] - vals[j]).norm());
        }
    }
    best
}

/// The model's reproduction of the shifted block Y: `D* Λ* (V*)^{-1} + r* e_n^H`.
pub fn reconstruct(model: &DmdModel, x: &CMat) -> Result<CMat> {
    if model.degenerate {
        return Err(KdmdError::DegenerateSpectrum);
    }
    let n = model.companion_order;
    if x.ncols() != n {
        return Err(KdmdError::DimensionMismatch(format!(
            "reconstruct: X has {} columns, model order is {n}",
            x.ncols()
        )));
    }
    // Λ* (V*)^{-1} scales row i of the Vandermonde matrix by λ_i.
    let mut w = vandermonde(&model.eigenvalues, n)?;
    for (i, mut row) in w.axis_iter_mut(Axis(0)).enumerate() {
        let lam = model.eigenvalues[i];
        row.mapv_inplace(|z| z * lam);
    }
    let mut y = model.modes.dot(&w);
    // Residual lands on the final column only.
    for r in 0..y.nrows() {
        y[(r, n - 1)] += model.residual[r];
    }
    Ok(y)
}

/// One-step prediction `X_test · c*` of the snapshot following `X_test`.
pub fn forecast(model: &DmdModel, x_test: &CMat) -> Result<CVec> {
    if x_test.ncols() != model.companion_order {
        return Err(KdmdError::DimensionMismatch(format!(
            "forecast: X_test has {} columns, model order is {}",
            x_test.ncols(),
            model.companion_order
        )));
    }
    Ok(x_test.dot(&model.c_star))
}

/// Roll a model forward from a window of `θ` snapshots, one step at a time.
pub fn forecast_rollout(model: &DmdModel, window: &CMat, steps: usize) -> Result<CMat> {
    let n = model.companion_order;
    if window.ncols() != n {
        return Err(KdmdError::DimensionMismatch(format!(
            "forecast_rollout: window has {} columns, model order is {n}",
            window.ncols()
        )));
    }
    let m = window.nrows();
    let mut buf = window.to_owned();
    let mut out = CMat::zeros((m, steps));
    for s_idx in 0..steps {
        let next = buf.dot(&model.c_star);
        for r in 0..m {
            out[(r, s_idx)] = next[r];
        }
        // Shift the window left and append the prediction.
        for c in 0..n - 1 {
            for r in 0..m {
                buf[(r, c)] = buf[(r, c + 1)];
            }
        }
        for r in 0..m {
            buf[(r, n - 1)] = next[r];
        }
    }
    Ok(out)
}

/// Relative fit residual ‖r*‖ / ‖z_{n+1}‖.
pub fn relative_residual(model: &DmdModel, z: &TimeSeries) -> f64 {
    let denom = vec_norm(&z.last_snapshot());
    if denom == 0.0 {
        vec_norm(&model.residual)
    } else {
        vec_norm(&model.residual) / denom
    }
}
