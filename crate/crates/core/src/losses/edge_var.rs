use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::LossEvaluation;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layout::Layout;

/// Reference edge length for the variation loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeVarMode {
    /// Squared deviation from a fixed target length of 1.
    #[default]
    UnitTarget,
    /// Squared deviation from the current mean length, divided by its square.
    MeanNormalized,
}

/// `(1/|E|) sum_E (l_uv - 1)^2`.
pub fn edge_var_loss(x: &Layout, g: &Graph) -> Result<LossEvaluation> {
    edge_var_loss_with(x, g, EdgeVarMode::UnitTarget)
}

pub fn edge_var_loss_with(x: &Layout, g: &Graph, mode: EdgeVarMode) -> Result<LossEvaluation> {
    let m = g.edge_count();
    if m == 0 {
        return Err(Error::InvalidSize("edge length variation needs at least one edge".into()));
    }
    if x.node_count() != g.node_count() {
        return Err(Error::DimensionMismatch { expected: g.node_count(), actual: x.node_count() });
    }
    let pos = x.positions();
    let mf = m as f64;
    // (length, dx, dy) per edge
    let edges: Vec<(f64, f64, f64)> = g
        .edges()
        .iter()
        .map(|&(u, v)| {
            let dx = pos[[u, 0]] - pos[[v, 0]];
            let dy = pos[[u, 1]] - pos[[v, 1]];
            (dx.hypot(dy), dx, dy)
        })
        .collect();

    // dL/dl_e for every edge
    let (value, dl): (f64, Vec<f64>) = match mode {
        EdgeVarMode::UnitTarget => {
            let value = edges.iter().map(|&(l, _, _)| (l - 1.0).powi(2)).sum::<f64>() / mf;
            (value, edges.iter().map(|&(l, _, _)| 2.0 * (l - 1.0) / mf).collect())
        }
        EdgeVarMode::MeanNormalized => {
            let mean = edges.iter().map(|e| e.0).sum::<f64>() / mf;
            if mean == 0.0 {
                return Ok(LossEvaluation { value: 0.0, grad: Array2::zeros(pos.raw_dim()) });
            }
            let r: Vec<f64> = edges.iter().map(|&(l, _, _)| l / mean).collect();
            let value = r.iter().map(|ri| (ri - 1.0).powi(2)).sum::<f64>() / mf;
            let cross = r.iter().map(|ri| (ri - 1.0) * ri).sum::<f64>();
            let dl = r.iter().map(|ri| 2.0 / mf * ((ri - 1.0) / mean - cross / (mean * mf))).collect();
            (value, dl)
        }
    };

    let mut grad = Array2::zeros(pos.raw_dim());
    for (&(u, v), (&(l, dx, dy), &g_l)) in g.edges().iter().zip(edges.iter().zip(&dl)) {
        if l > 0.0 {
            let (gx, gy) = (g_l * dx / l, g_l * dy / l);
            grad[[u, 0]] += gx;
            grad[[u, 1]] += gy;
            grad[[v, 0]] -= gx;
            grad[[v, 1]] -= gy;
        }
    }
    Ok(LossEvaluation { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::random_init;
    use crate::graph::{generate_synthetic, GraphKind};
    use crate::losses::finite_difference_gradient;

    #[test]
    fn closed_forms() {
        let square = generate_synthetic(GraphKind::Cycle, 4, 0).unwrap();
        let x = Layout::from_points(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(edge_var_loss(&x, &square).unwrap().value, 0.0);

        let single = Graph::new(2, [(0, 1)]).unwrap();
        let x = Layout::from_points(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(edge_var_loss(&x, &single).unwrap().value, 1.0);

        let two = generate_synthetic(GraphKind::Path, 3, 0).unwrap();
        let x = Layout::from_points(&[[0.0, 0.0], [1.0, 0.0], [4.0, 0.0]]).unwrap();
        assert_eq!(edge_var_loss(&x, &two).unwrap().value, 2.0);

        let lonely = Graph::new(1, []).unwrap();
        assert!(edge_var_loss(&Layout::zeros(1), &lonely).is_err());
    }

    #[test]
    fn mean_normalized_variant() {
        let two = generate_synthetic(GraphKind::Path, 3, 0).unwrap();
        // lengths 1 and 3, mean 2 -> ((0.5-1)^2 + (1.5-1)^2) / 2
        let x = Layout::from_points(&[[0.0, 0.0], [1.0, 0.0], [4.0, 0.0]]).unwrap();
        let e = edge_var_loss_with(&x, &two, EdgeVarMode::MeanNormalized).unwrap();
        assert!((e.value - 0.25).abs() < 1e-15);
        // scale invariant, unlike the unit-target form
        let e2 = edge_var_loss_with(&x.scaled(3.0), &two, EdgeVarMode::MeanNormalized).unwrap();
        assert!((e.value - e2.value).abs() < 1e-12);

        let g = generate_synthetic(GraphKind::RandomConnected, 10, 5).unwrap();
        let x = random_init(10, 6);
        let e = edge_var_loss_with(&x, &g, EdgeVarMode::MeanNormalized).unwrap();
        let fd = finite_difference_gradient(
            |y| edge_var_loss_with(y, &g, EdgeVarMode::MeanNormalized).unwrap().value,
            &x,
            1e-6,
        );
        let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!((&fd - &e.grad).iter().all(|d| d.abs() / scale < 1e-4));
    }
}
