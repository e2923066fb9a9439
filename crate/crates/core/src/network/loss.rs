use super::FeatureVector;
use crate::error::{invalid, mismatch, Result};

fn check(y1: &FeatureVector, y2: &FeatureVector, margin: f64) -> Result<()> {
    if y1.dim() != y2.dim() {
        return Err(mismatch(format!("features of dimension {} and {}", y1.dim(), y2.dim())));
    }
    if !(margin > 0.0) {
        return Err(invalid("margin must be positive"));
    }
    Ok(())
}

/// `b·‖y1 − y2‖ + (1 − b)·max(0, g − ‖y1 − y2‖)`, with `b = 1` for a
/// same-class pair.
pub fn contrastive_loss(y1: &FeatureVector, y2: &FeatureVector, same: bool, margin: f64) -> Result<f64> {
    check(y1, y2, margin)?;
    let d = y1.distance(y2);
    Ok(if same { d } else { (margin - d).max(0.0) })
}

/// Gradients of [`contrastive_loss`] w.r.t. `y1` and `y2`. At zero distance
/// the (sub)gradient taken is zero.
pub fn contrastive_loss_grad(y1: &FeatureVector, y2: &FeatureVector, same: bool, margin: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check(y1, y2, margin)?;
    let d = y1.distance(y2);
    let coef = if d == 0.0 {
        0.0
    } else if same {
        1.0 / d
    } else if d < margin {
        -1.0 / d
    } else {
        0.0
    };
    let g1: Vec<f64> = y1.0.iter().zip(&y2.0).map(|(a, b)| coef * (a - b)).collect();
    let g2 = g1.iter().map(|g| -g).collect();
    Ok((g1, g2))
}
