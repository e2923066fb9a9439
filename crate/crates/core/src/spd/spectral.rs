//! Spectral matrix functions `F(X) = U f(Λ) Uᵀ` and their reverse-mode
//! derivative (Daleckii–Krein form).

use nalgebra::DMatrix;

use super::SymEigen;

/// Eigengap below which the divided difference is replaced by its limit.
pub const EIGENGAP_TOL: f64 = 1e-8;

/// Scalar functions applied to eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralFn {
    /// `max(λ, ε)`, the ReEig rectification.
    Clamp(f64),
    /// `ln(max(λ, ε))`, ReEig fused with LogEig.
    ClampLog(f64),
    Log,
    Exp,
}

impl SpectralFn {
    pub fn value(self, l: f64) -> f64 {
        match self {
            SpectralFn::Clamp(eps) => l.max(eps),
            SpectralFn::ClampLog(eps) => l.max(eps).ln(),
            SpectralFn::Log => l.ln(),
            SpectralFn::Exp => l.exp(),
        }
    }

    pub fn derivative(self, l: f64) -> f64 {
        match self {
            SpectralFn::Clamp(eps) => {
                if l > eps {
                    1.0
                } else {
                    0.0
                }
            }
            SpectralFn::ClampLog(eps) => {
                if l > eps {
                    1.0 / l
                } else {
                    0.0
                }
            }
            SpectralFn::Log => 1.0 / l,
            SpectralFn::Exp => l.exp(),
        }
    }

    fn is_flat_at(self, l: f64) -> bool {
        match self {
            SpectralFn::Clamp(eps) | SpectralFn::ClampLog(eps) => l <= eps,
            _ => false,
        }
    }
}

/// Saved state for the backward pass of one spectral function application.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    pub eigen: SymEigen,
    pub func: SpectralFn,
}

/// Diagnostic counter for near-repeated eigenvalues met during backprop.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct GapStats {
    pub degenerate_pairs: usize,
}

impl GapStats {
    pub fn merge(&mut self, other: GapStats) {
        self.degenerate_pairs += other.degenerate_pairs;
    }
}

pub fn spectral_forward(x: &DMatrix<f64>, func: SpectralFn) -> (DMatrix<f64>, SpectralCache) {
    let eigen = SymEigen::new(x);
    let out = eigen.map(|l| func.value(l));
    (out, SpectralCache { eigen, func })
}

/// Given the symmetric gradient `G` of a scalar loss w.r.t. `F(X)`, return its
/// gradient w.r.t. `X`: `U (K ∘ (Uᵀ G U)) Uᵀ` with `K` the matrix of divided
/// differences of `f` over the eigenvalues.
///
/// When two eigenvalues are closer than [`EIGENGAP_TOL`], the divided
/// difference is replaced by the mean derivative at the pair and the pair is
/// counted in `stats` (unless `f` is flat at both, where the quotient is
/// exactly zero anyway).
pub fn spectral_backward(cache: &SpectralCache, grad: &DMatrix<f64>, stats: &mut GapStats) -> DMatrix<f64> {
    let u = &cache.eigen.vectors;
    let l = &cache.eigen.values;
    let f = cache.func;
    let d = l.len();
    let mut inner = u.transpose() * grad * u;
    let fv: Vec<f64> = l.iter().map(|&x| f.value(x)).collect();
    for i in 0..d {
        inner[(i, i)] *= f.derivative(l[i]);
        for j in (i + 1)..d {
            let gap = l[i] - l[j];
            let k = if gap.abs() >= EIGENGAP_TOL {
                (fv[i] - fv[j]) / gap
            } else if f.is_flat_at(l[i]) && f.is_flat_at(l[j]) {
                0.0
            } else {
                stats.degenerate_pairs += 1;
                0.5 * (f.derivative(l[i]) + f.derivative(l[j]))
            };
            inner[(i, j)] *= k;
            inner[(j, i)] *= k;
        }
    }
    let out = u * inner * u.transpose();
    super::SymMatrix::symmetrized(out).into_matrix()
}
