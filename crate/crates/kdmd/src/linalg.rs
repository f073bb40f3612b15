//! Dense complex linear-algebra kernel: truncated-SVD pseudo-inverse,
//! minimum-norm least squares, Vandermonde/companion constructors and
//! orthogonal projectors.
//!
//! Everything works on `Array2<Complex64>` / `Array1<Complex64>` with data
//! stored row-major (ndarray's default layout). Real inputs are promoted to
//! complex at the boundary.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eig, SVD};
use num_complex::Complex64 as C64;

use crate::error::{KdmdError, Result};

pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

/// Relative cutoff for singular values: anything below
/// `relative_tolerance * sigma_max` is treated as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdThreshold {
    relative_tolerance: f64,
}

impl SvdThreshold {
    pub fn new(relative_tolerance: f64) -> Result<Self> {
        if !(relative_tolerance > 0.0 && relative_tolerance < 1.0) {
            return Err(KdmdError::InvalidInput(format!(
                "SVD threshold must lie in (0, 1), got {relative_tolerance}"
            )));
        }
        Ok(Self { relative_tolerance })
    }

    pub fn value(&self) -> f64 {
        self.relative_tolerance
    }
}

impl Default for SvdThreshold {
    fn default() -> Self {
        // Relative threshold used in all pseudo-inverse computations.
        Self { relative_tolerance: 1e-8 }
    }
}

pub fn all_finite_mat(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn all_finite_vec(v: &CVec) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn check_finite_mat(a: &CMat, what: &'static str) -> Result<()> {
    if all_finite_mat(a) {
        Ok(())
    } else {
        Err(KdmdError::NonFinite(what))
    }
}

/// Thin SVD with rank decided by a relative singular-value cutoff.
///
/// Caches the factors so the pseudo-inverse, row-space projector and
/// null-space projector can all be applied without refactorizing.
pub struct TruncatedSvd {
    u: CMat,
    singular_values: Array1<f64>,
    vh: CMat,
    rank: usize,
}

impl TruncatedSvd {
    pub fn new(a: &CMat, tol: SvdThreshold) -> Result<Self> {
        check_finite_mat(a, "SVD input")?;
        if a.dim() == (1, 1) {
            // The LAPACK wrapper rejects 1x1 inputs; factor by hand.
            let z = a[(0, 0)];
            let sigma = z.norm();
            let phase = if sigma == 0.0 { C64::new(1.0, 0.0) } else { z / sigma };
            return Ok(Self {
                u: CMat::eye(1),
                singular_values: ndarray::array![sigma],
                vh: ndarray::array![[phase]],
                rank: usize::from(sigma > 0.0),
            });
        }
        let (u, s, vh) = a.svd(true, true)?;
        let u = u.expect("requested U");
        let vh = vh.expect("requested V^H");
        let smax = s.iter().cloned().fold(0.0f64, f64::max);
        let cutoff = tol.value() * smax;
        let rank = s.iter().filter(|&&sv| sv > cutoff).count();
        Ok(Self { u, singular_values: s, vh, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn singular_values(&self) -> &Array1<f64> {
        &self.singular_values
    }

    /// `A^+ b` using only the retained singular triplets.
    pub fn pinv_apply(&self, b: &CVec) -> Result<CVec> {
        if self.u.nrows() != b.len() {
            return Err(KdmdError::DimensionMismatch(format!(
                "pinv_apply: A has {} rows, b has length {}",
                self.u.nrows(),
                b.len()
            )));
        }
        let n = self.vh.ncols();
        let mut x = CVec::zeros(n);
        for k in 0..self.rank {
            let uk = self.u.index_axis(Axis(1), k);
            let coef: C64 = uk.iter().zip(b.iter()).map(|(u, b)| u.conj() * b).sum();
            let scaled = coef / self.singular_values[k];
            x.scaled_add(scaled, &self.vh.index_axis(Axis(0), k).mapv(|z| z.conj()));
        }
        Ok(x)
    }

    /// Projection of `v` onto the (numerical) row space of A, i.e. `A^+ A v`.
    pub fn row_space_projection(&self, v: &CVec) -> Result<CVec> {
        if self.vh.ncols() != v.len() {
            return Err(KdmdError::DimensionMismatch(format!(
                "row_space_projection: A has {} columns, v has length {}",
                self.vh.ncols(),
                v.len()
            )));
        }
        let mut p = CVec::zeros(v.len());
        for k in 0..self.rank {
            let row = self.vh.index_axis(Axis(0), k);
            let coef: C64 = row.iter().zip(v.iter()).map(|(r, v)| r * v).sum();
            p.scaled_add(coef, &row.mapv(|z| z.conj()));
        }
        Ok(p)
    }

    /// Projection of `v` onto the (numerical) null space of A: `(I - A^+ A) v`.
    pub fn nullspace_projection(&self, v: &CVec) -> Result<CVec> {
        let p = self.row_space_projection(v)?;
        Ok(v - &p)
    }
}

/// Minimum-norm least-squares solution `A^+ b` via truncated SVD.
pub fn min_norm_lstsq(a: &CMat, b: &CVec, tol: SvdThreshold) -> Result<CVec> {
    if a.nrows() != b.len() {
        return Err(KdmdError::DimensionMismatch(format!(
            "min_norm_lstsq: A is {}x{}, b has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if !all_finite_vec(b) {
        return Err(KdmdError::NonFinite("right-hand side"));
    }
    TruncatedSvd::new(a, tol)?.pinv_apply(b)
}

/// Row `i` is the geometric progression `[1, node_i, node_i^2, ...]`.
pub fn vandermonde(nodes: &CVec, num_cols: usize) -> Result<CMat> {
    if nodes.is_empty() {
        return Err(KdmdError::InvalidInput("vandermonde: empty node set".into()));
    }
    if num_cols == 0 {
        return Err(KdmdError::InvalidInput("vandermonde: num_cols must be >= 1".into()));
    }
    let mut m = CMat::zeros((nodes.len(), num_cols));
    for (i, &lambda) in nodes.iter().enumerate() {
        let mut p = C64::new(1.0, 0.0);
        for j in 0..num_cols {
            m[(i, j)] = p;
            p *= lambda;
        }
    }
    Ok(m)
}

/// Companion matrix with ones on the first sub-diagonal and `c` as the last
/// column.
pub fn companion_from(c: &CVec) -> CMat {
    let n = c.len();
    let mut t = CMat::zeros((n, n));
    for i in 1..n {
        t[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        t[(i, n - 1)] = c[i];
    }
    t
}

/// `[1, lambda, lambda^2, ..., lambda^{length-1}]`.
pub fn gp_vector(lambda: C64, length: usize) -> CVec {
    let mut v = CVec::zeros(length);
    let mut p = C64::new(1.0, 0.0);
    for i in 0..length {
        v[i] = p;
        p *= lambda;
    }
    v
}

/// `P_{N(A)} v = (I - A^+ A) v` with the truncated SVD deciding the rank.
pub fn nullspace_projection(a: &CMat, v: &CVec, tol: SvdThreshold) -> Result<CVec> {
    if a.ncols() != v.len() {
        return Err(KdmdError::DimensionMismatch(format!(
            "nullspace_projection: A has {} columns, v has length {}",
            a.ncols(),
            v.len()
        )));
    }
    TruncatedSvd::new(a, tol)?.nullspace_projection(v)
}

/// Number of singular values above the relative threshold.
pub fn numerical_rank(a: &CMat, tol: SvdThreshold) -> Result<usize> {
    Ok(TruncatedSvd::new(a, tol)?.rank())
}

/// Eigenvalues of a general (square) complex matrix.
pub fn eigenvalues(a: &CMat) -> Result<CVec> {
    check_finite_mat(a, "eigenvalue input")?;
    if a.nrows() == 1 {
        // The LAPACK wrapper rejects 1x1 inputs; the answer is immediate.
        return Ok(ndarray::array![a[(0, 0)]]);
    }
    let (vals, _) = a.eig()?;
    Ok(vals)
}

/// Eigen-decomposition returning unit-norm right eigenvectors as columns.
pub fn eigen_pairs(a: &CMat) -> Result<(CVec, CMat)> {
    check_finite_mat(a, "eigenvalue input")?;
    if a.nrows() == 1 {
        return Ok((ndarray::array![a[(0, 0)]], CMat::eye(1)));
    }
    let (vals, vecs) = a.eig()?;
    Ok((vals, vecs))
}

/// Column `j` of the inverse of `vandermonde(nodes, n)`: the monomial
/// coefficients of the Lagrange basis polynomial `ℓ_j` of the node set.
///
/// Computed per column from the product formula, so accuracy for one node
/// depends only on that node's separation from the others — a tight cluster
/// elsewhere in the node set does not contaminate well-separated columns
/// the way a blanket LU inversion would.
pub fn lagrange_column(nodes: &CVec, j: usize) -> Result<CVec> {
    let n = nodes.len();
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    let mut denom = C64::new(1.0, 0.0);
    for (i, &node) in nodes.iter().enumerate() {
        if i == j {
            continue;
        }
        let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
        for (t, &c) in coeffs.iter().enumerate() {
            next[t + 1] += c;
            next[t] -= node * c;
        }
        coeffs = next;
        denom *= nodes[j] - node;
    }
    if denom.norm() == 0.0 {
        return Err(KdmdError::DegenerateSpectrum);
    }
    let mut v = CVec::zeros(n);
    for (t, &c) in coeffs.iter().enumerate() {
        v[t] = c / denom;
    }
    if !all_finite_vec(&v) {
        return Err(KdmdError::DegenerateSpectrum);
    }
    Ok(v)
}

/// Inverse of `vandermonde(nodes, n)` assembled column-by-column from the
/// Lagrange product formula.
pub fn inverse_vandermonde(nodes: &CVec) -> Result<CMat> {
    let n = nodes.len();
    let mut v = CMat::zeros((n, n));
    for j in 0..n {
        let col = lagrange_column(nodes, j)?;
        for i in 0..n {
            v[(i, j)] = col[i];
        }
    }
    Ok(v)
}

/// Best rank-`rank` approximation in the Frobenius norm (truncated SVD).
pub fn low_rank_approx(a: &CMat, rank: usize) -> Result<CMat> {
    let (m, n) = a.dim();
    if rank == 0 || rank > m.min(n) {
        return Err(KdmdError::InvalidInput(format!(
            "low_rank_approx: rank {rank} invalid for a {m}x{n} matrix"
        )));
    }
    check_finite_mat(a, "low-rank input")?;
    let (u, s, vh) = a.svd(true, true)?;
    let u = u.expect("requested U");
    let vh = vh.expect("requested V^H");
    let mut out = CMat::zeros((m, n));
    for k in 0..rank {
        let uk = u.index_axis(Axis(1), k);
        let vk = vh.index_axis(Axis(0), k);
        let sk = C64::new(s[k], 0.0);
        for i in 0..m {
            for j in 0..n {
                out[(i, j)] += uk[i] * sk * vk[j];
            }
        }
    }
    Ok(out)
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn mat_fro_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian inner product `<a, b> = a^H b`.
pub fn inner(a: &CVec, b: &CVec) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}
