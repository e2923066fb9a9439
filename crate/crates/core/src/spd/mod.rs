//! Operations on symmetric positive-(semi)definite matrices.
//!
//! Everything here is a pure function of its inputs. Symmetric eigenproblems
//! go through [`SymEigen`], which sorts eigenvalues ascending so that any
//! serialized decomposition is deterministic.

mod spectral;

pub use spectral::{spectral_backward, spectral_forward, GapStats, SpectralCache, SpectralFn, EIGENGAP_TOL};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, mismatch, Error, Result};

/// Default ReEig threshold.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Orthonormality tolerance for Stiefel weights.
pub const STIEFEL_TOL: f64 = 1e-10;

/// A real symmetric matrix. Construction symmetrizes, so `(i, j)` and `(j, i)`
/// are always bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Relative asymmetry accepted by [`SymMatrix::new`] before symmetrizing.
    pub const SYMMETRY_TOL: f64 = 1e-12;

    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(mismatch(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
        }
        let asym = max_asymmetry(&m);
        let scale = m.amax().max(1.0);
        if !(asym <= Self::SYMMETRY_TOL * scale) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrize `(m + mᵀ)/2` without checking how far off `m` was.
    pub fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let d = m.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(mismatch("ragged or non-square rows"));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn eigen(&self) -> SymEigen {
        SymEigen::new(&self.0)
    }

    pub fn frobenius_distance(&self, other: &SymMatrix) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

/// A symmetric matrix whose smallest eigenvalue is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(SymMatrix);

impl SpdMatrix {
    /// Checks strict positive-definiteness.
    pub fn new(m: SymMatrix) -> Result<Self> {
        let lmin = m.eigen().min();
        if lmin > 0.0 {
            Ok(SpdMatrix(m))
        } else {
            Err(Error::NotPositiveDefinite(lmin))
        }
    }

    pub(crate) fn new_unchecked(m: SymMatrix) -> Self {
        SpdMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix(SymMatrix::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.0.as_matrix()
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }
}

/// Eigendecomposition `X = U diag(λ) Uᵀ` with `λ` sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
        let mut vectors = DMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        SymEigen { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `U diag(f(λ)) Uᵀ`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, &l) in self.values.iter().enumerate() {
            let s = f(l);
            scaled.column_mut(k).scale_mut(s);
        }
        SymMatrix::symmetrized(&scaled * self.vectors.transpose()).into_matrix()
    }
}

/// Sample mean and population covariance of a set of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

impl GaussianStats {
    /// Population statistics (divisor `n`).
    pub fn from_samples<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyAggregation)?;
        let d = first.as_ref().len();
        if d == 0 {
            return Err(invalid("samples must have positive dimension"));
        }
        let n = samples.len();
        let mut mean = DVector::zeros(d);
        for s in samples {
            let s = s.as_ref();
            if s.len() != d {
                return Err(mismatch(format!("sample of length {} among samples of length {d}", s.len())));
            }
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for s in samples {
            let c = DVector::from_iterator(d, s.as_ref().iter().zip(mean.iter()).map(|(v, m)| v - m));
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= n as f64;
        Ok(GaussianStats {
            mean,
            covariance: SymMatrix::symmetrized(cov).into_matrix(),
            count: n,
        })
    }

    /// The block embedding `[[Σ + μμᵀ, μ], [μᵀ, 1]]`.
    pub fn embed(&self) -> SymMatrix {
        let d = self.mean.len();
        let mut y = DMatrix::zeros(d + 1, d + 1);
        let outer = &self.mean * self.mean.transpose();
        y.view_mut((0, 0), (d, d)).copy_from(&(&self.covariance + outer));
        for i in 0..d {
            y[(i, d)] = self.mean[i];
            y[(d, i)] = self.mean[i];
        }
        y[(d, d)] = 1.0;
        SymMatrix::symmetrized(y)
    }
}

/// A `d_out × d_in` matrix with orthonormal rows (`W Wᵀ = I`).
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelWeight(DMatrix<f64>);

impl StiefelWeight {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() > w.ncols() || w.nrows() == 0 {
            return Err(mismatch(format!("stiefel weight must be d_out x d_in with 0 < d_out <= d_in, got {}x{}", w.nrows(), w.ncols())));
        }
        let err = orthonormality_error(&w);
        if err > STIEFEL_TOL {
            return Err(invalid(format!("rows are not orthonormal (error {err:e})")));
        }
        Ok(StiefelWeight(w))
    }

    /// Wraps `w` without checking orthonormality. Meant for finite-difference
    /// probes that step off the manifold.
    #[doc(hidden)]
    pub fn from_matrix_unchecked(w: DMatrix<f64>) -> Self {
        StiefelWeight(w)
    }

    /// Orthonormalize the rows of `m` via QR, with the sign convention that
    /// keeps an already-orthonormal input unchanged.
    pub fn retract(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows > cols || rows == 0 {
            return Err(mismatch(format!("cannot retract a {rows}x{cols} matrix onto row-orthonormal weights")));
        }
        let qr = m.transpose().qr();
        let mut q = qr.q();
        let r = qr.r();
        for k in 0..rows {
            if r[(k, k)] < 0.0 {
                q.column_mut(k).neg_mut();
            }
        }
        Ok(StiefelWeight(q.transpose()))
    }

    /// QR of a Gaussian matrix, which is Haar-distributed on the manifold.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Self> {
        let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::retract(&g)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `max |W Wᵀ − I|`.
pub fn orthonormality_error(w: &DMatrix<f64>) -> f64 {
    let g = w * w.transpose();
    (g - DMatrix::identity(w.nrows(), w.nrows())).amax()
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            let diff = (m[(i, j)] - m[(j, i)]).abs();
            if diff.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(diff);
        }
    }
    worst
}

/// Gaussian embedding of a sample set: a `(d+1)×(d+1)` PSD matrix, strictly
/// PD iff the population covariance is.
pub fn gaussian_aggregate<S: AsRef<[f64]>>(samples: &[S]) -> Result<SymMatrix> {
    Ok(GaussianStats::from_samples(samples)?.embed())
}

/// Clamp eigenvalues from below at `eps`.
pub fn re_eig(x: &SymMatrix, eps: f64) -> Result<SpdMatrix> {
    if !(eps > 0.0) {
        return Err(invalid("ReEig threshold must be positive"));
    }
    let out = x.eigen().map(|l| l.max(eps));
    Ok(SpdMatrix::new_unchecked(SymMatrix(out)))
}

/// Matrix logarithm through the eigendecomposition.
pub fn log_eig(x: &SpdMatrix) -> Result<SymMatrix> {
    log_eig_sym(x.as_sym())
}

/// Like [`log_eig`], for a symmetric matrix not yet known to be PD.
pub fn log_eig_sym(x: &SymMatrix) -> Result<SymMatrix> {
    let eig = x.eigen();
    let lmin = eig.min();
    if !(lmin > 0.0) {
        return Err(Error::NotPositiveDefinite(lmin));
    }
    Ok(SymMatrix(eig.map(f64::ln)))
}

/// Matrix exponential through the eigendecomposition.
pub fn exp_eig(s: &SymMatrix) -> SpdMatrix {
    SpdMatrix::new_unchecked(SymMatrix(s.eigen().map(f64::exp)))
}

/// Length of [`vec_map`] output for a `d×d` input.
pub const fn vec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Isometric vectorization of a symmetric matrix.
///
/// Row-major upper triangle: for `i` in rows, `j ≥ i`, emit `a_ii` on the
/// diagonal and `√2·a_ij` off it, so `‖vec(A) − vec(B)‖₂ = ‖A − B‖_F`.
pub fn vec_map(s: &SymMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(vec_len(s.dim()));
    vec_upper_into(s.as_matrix(), &mut out);
    out
}

pub(crate) fn vec_upper_into(m: &DMatrix<f64>, out: &mut Vec<f64>) {
    let d = m.nrows();
    for i in 0..d {
        out.push(m[(i, i)]);
        for j in (i + 1)..d {
            out.push(std::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
}

/// Adjoint of [`vec_map`]: the symmetric matrix `G` with
/// `⟨g, vec(dS)⟩ = ⟨G, dS⟩_F` for every symmetric `dS`.
pub(crate) fn vec_adjoint(g: &[f64], d: usize) -> DMatrix<f64> {
    debug_assert_eq!(g.len(), vec_len(d));
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        m[(i, i)] = g[k];
        k += 1;
        for j in (i + 1)..d {
            let v = g[k] * std::f64::consts::FRAC_1_SQRT_2;
            m[(i, j)] = v;
            m[(j, i)] = v;
            k += 1;
        }
    }
    m
}

/// Bilinear compression `Σ Wᵢ Xᵢ Wᵢᵀ`.
pub fn spdc_transform(inputs: &[SpdMatrix], weights: &[StiefelWeight]) -> Result<SpdMatrix> {
    if inputs.is_empty() {
        return Err(invalid("spdc_transform needs at least one input"));
    }
    if inputs.len() != weights.len() {
        return Err(mismatch(format!("{} inputs but {} weights", inputs.len(), weights.len())));
    }
    let d_out = weights[0].rows();
    let mut acc = DMatrix::zeros(d_out, d_out);
    for (k, (x, w)) in inputs.iter().zip(weights).enumerate() {
        if w.rows() != d_out {
            return Err(mismatch(format!("weight {k} has {} rows, expected {d_out}", w.rows())));
        }
        if w.cols() != x.dim() {
            return Err(mismatch(format!("weight {k} has {} columns but input is {}x{}", w.cols(), x.dim(), x.dim())));
        }
        congruence_add(&mut acc, w.as_matrix(), x.as_matrix());
    }
    Ok(SpdMatrix::new_unchecked(SymMatrix::symmetrized(acc)))
}

/// `acc += W X Wᵀ`
pub(crate) fn congruence_add(acc: &mut DMatrix<f64>, w: &DMatrix<f64>, x: &DMatrix<f64>) {
    let wx = w * x;
    acc.gemm(1.0, &wx, &w.transpose(), 1.0);
}

/// True iff `m` is square, symmetric within `tol` and has `λ_min > tol`.
pub fn is_spd(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() || m.nrows() == 0 {
        return false;
    }
    if !(max_asymmetry(m) <= tol) {
        return false;
    }
    SymEigen::new(&SymMatrix::symmetrized(m.clone()).into_matrix()).min() > tol
}
