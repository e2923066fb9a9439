use nalgebra::DMatrix;

use crate::error::{invalid, mismatch, Result};
use crate::spd::StiefelWeight;

/// Projection of a Euclidean gradient onto the tangent space of the
/// row-orthonormal Stiefel manifold at `w`: `G − sym(G Wᵀ) W`.
pub fn tangent_projection(w: &StiefelWeight, grad: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let w = w.as_matrix();
    if grad.shape() != w.shape() {
        return Err(mismatch(format!("gradient is {:?}, weight is {:?}", grad.shape(), w.shape())));
    }
    let gw = grad * w.transpose();
    let sym = (&gw + gw.transpose()) * 0.5;
    Ok(grad - sym * w)
}

/// One Riemannian gradient step followed by QR retraction.
pub fn stiefel_step(w: &StiefelWeight, grad: &DMatrix<f64>, lr: f64) -> Result<StiefelWeight> {
    if !(lr > 0.0) {
        return Err(invalid("learning rate must be positive"));
    }
    let xi = tangent_projection(w, grad)?;
    StiefelWeight::retract(&(w.as_matrix() - xi * lr))
}
