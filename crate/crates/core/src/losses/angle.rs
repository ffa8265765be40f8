//! Angular resolution: deviation of the gaps between consecutive incident
//! edges from the uniform gap `2 pi / deg(v)`.

use std::f64::consts::TAU;

use ndarray::Array2;

use super::{with_perturbation_retry, LossEvaluation};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layout::Layout;

/// Incident edges of `v` as `(neighbour, polar angle)` sorted by angle.
fn sorted_directions(x: &Layout, g: &Graph, v: usize) -> Result<Vec<(usize, f64)>> {
    let [xv, yv] = x.point(v);
    let mut dirs = Vec::with_capacity(g.degree(v));
    for &u in g.neighbors(v) {
        let [xu, yu] = x.point(u);
        let (dx, dy) = (xu - xv, yu - yv);
        if dx == 0.0 && dy == 0.0 {
            return Err(Error::CoincidentNodes(u.min(v), u.max(v)));
        }
        dirs.push((u, dy.atan2(dx)));
    }
    dirs.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(dirs)
}

fn gaps(dirs: &[(usize, f64)]) -> Vec<f64> {
    let k = dirs.len();
    (0..k)
        .map(|i| if i + 1 < k { dirs[i + 1].1 - dirs[i].1 } else { dirs[0].1 + TAU - dirs[i].1 })
        .collect()
}

/// Consecutive angular gaps around `v`; they sum to `2 pi`. A degree-1 node
/// has the single gap `2 pi`.
pub fn node_angles(x: &Layout, g: &Graph, v: usize) -> Result<Vec<f64>> {
    Ok(gaps(&sorted_directions(x, g, v)?))
}

pub fn angle_loss(x: &Layout, g: &Graph) -> Result<LossEvaluation> {
    if x.node_count() != g.node_count() {
        return Err(Error::DimensionMismatch { expected: g.node_count(), actual: x.node_count() });
    }
    with_perturbation_retry(x, |x| angle_exact(x, g))
}

/// Value only; edges of zero length are skipped instead of failing.
pub(crate) fn angle_value(x: &Layout, g: &Graph) -> f64 {
    match angle_exact(x, g) {
        Ok(e) => e.value,
        Err(_) => angle_loss(x, g).map(|e| e.value).unwrap_or(f64::NAN),
    }
}

fn angle_exact(x: &Layout, g: &Graph) -> Result<LossEvaluation> {
    let n = g.node_count();
    let mut value = 0.0;
    let mut grad = Array2::zeros((n, 2));
    for v in 0..n {
        let k = g.degree(v);
        if k < 2 {
            continue;
        }
        let dirs = sorted_directions(x, g, v)?;
        let target = TAU / k as f64;
        // dL/dphi for each sorted incident direction
        let mut dphi = vec![0.0; k];
        for (i, theta) in gaps(&dirs).into_iter().enumerate() {
            let dev = theta - target;
            value += dev.abs();
            let s = if dev > 0.0 {
                1.0
            } else if dev < 0.0 {
                -1.0
            } else {
                0.0
            };
            // gap i runs from direction i to direction i+1 (wrapping)
            dphi[(i + 1) % k] += s;
            dphi[i] -= s;
        }
        let [xv, yv] = x.point(v);
        for (&(u, _), &gphi) in dirs.iter().zip(&dphi) {
            if gphi == 0.0 {
                continue;
            }
            let [xu, yu] = x.point(u);
            let (dx, dy) = (xu - xv, yu - yv);
            let r2 = dx * dx + dy * dy;
            // d atan2(dy, dx) = (-dy, dx) / r^2 with respect to x_u
            let (gx, gy) = (-gphi * dy / r2, gphi * dx / r2);
            grad[[u, 0]] += gx;
            grad[[u, 1]] += gy;
            grad[[v, 0]] -= gx;
            grad[[v, 1]] -= gy;
        }
    }
    Ok(LossEvaluation { value, grad })
}
