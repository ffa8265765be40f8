use ndarray::Array2;

use super::LossEvaluation;
use crate::layout::Layout;

/// `sum_{u != v} exp(-|x_u - x_v|)` over ordered pairs. The gradient of a
/// coincident pair is taken as 0.
pub fn occlusion_loss(x: &Layout) -> LossEvaluation {
    let pos = x.positions();
    let n = pos.nrows();
    let mut value = 0.0;
    let mut grad = Array2::zeros((n, 2));
    for u in 0..n {
        for v in u + 1..n {
            let dx = pos[[u, 0]] - pos[[v, 0]];
            let dy = pos[[u, 1]] - pos[[v, 1]];
            let r = dx.hypot(dy);
            let e = (-r).exp();
            value += 2.0 * e;
            if r > 0.0 {
                let coef = -2.0 * e / r;
                grad[[u, 0]] += coef * dx;
                grad[[u, 1]] += coef * dy;
                grad[[v, 0]] -= coef * dx;
                grad[[v, 1]] -= coef * dy;
            }
        }
    }
    LossEvaluation { value, grad }
}
