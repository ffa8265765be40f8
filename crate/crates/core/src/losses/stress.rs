use ndarray::Array2;

use super::{with_perturbation_retry, LossEvaluation};
use crate::error::{Error, Result};
use crate::graph::DistanceMatrix;
use crate::layout::Layout;

/// `sum_{u<v} w_uv (|x_u - x_v| - d_uv)^2` with `w_uv = d_uv^-2`, each
/// unordered pair counted once.
pub fn stress_value(pos: &Array2<f64>, d: &DistanceMatrix) -> f64 {
    let n = pos.nrows();
    let mut total = 0.0;
    for u in 0..n {
        for v in u + 1..n {
            let r = (pos[[u, 0]] - pos[[v, 0]]).hypot(pos[[u, 1]] - pos[[v, 1]]);
            let duv = f64::from(d.get(u, v));
            let diff = r - duv;
            total += diff * diff / (duv * duv);
        }
    }
    total
}

pub fn stress_loss(x: &Layout, d: &DistanceMatrix) -> Result<LossEvaluation> {
    if x.node_count() != d.node_count() {
        return Err(Error::DimensionMismatch { expected: d.node_count(), actual: x.node_count() });
    }
    with_perturbation_retry(x, |x| stress_exact(x, d))
}

fn stress_exact(x: &Layout, d: &DistanceMatrix) -> Result<LossEvaluation> {
    let pos = x.positions();
    let n = pos.nrows();
    let mut value = 0.0;
    let mut grad = Array2::zeros((n, 2));
    for u in 0..n {
        for v in u + 1..n {
            let dx = pos[[u, 0]] - pos[[v, 0]];
            let dy = pos[[u, 1]] - pos[[v, 1]];
            let r = dx.hypot(dy);
            if r == 0.0 {
                return Err(Error::CoincidentNodes(u, v));
            }
            let duv = f64::from(d.get(u, v));
            let w = 1.0 / (duv * duv);
            let diff = r - duv;
            value += w * diff * diff;
            let coef = 2.0 * w * diff / r;
            grad[[u, 0]] += coef * dx;
            grad[[u, 1]] += coef * dy;
            grad[[v, 0]] -= coef * dx;
            grad[[v, 1]] -= coef * dy;
        }
    }
    Ok(LossEvaluation { value, grad })
}
