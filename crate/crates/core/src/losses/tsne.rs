//! Graph-space Gaussian affinities and the layout-space KL objective.

use ndarray::Array2;

use super::LossEvaluation;
use crate::error::{Error, Result};
use crate::graph::DistanceMatrix;
use crate::layout::Layout;

const ENTROPY_TOL: f64 = 1e-10;
const MAX_SEARCH_STEPS: usize = 200;

/// Symmetric joint affinities over ordered pairs (summing to 1) and the
/// per-node bandwidths that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneAffinities {
    pub p: Array2<f64>,
    pub sigma: Vec<f64>,
    pub perplexity: f64,
}

/// `min(30, (n - 1) / 3)`, raised to 1 for graphs too small to reach it.
pub fn default_perplexity(n: usize) -> f64 {
    (n.saturating_sub(1) as f64 / 3.0).min(30.0).max(1.0)
}

/// Conditional row `p_{.|i}` and its Shannon entropy (nats) at precision
/// `beta = 1 / (2 sigma^2)`. `sq` holds squared distances to the other nodes.
fn conditional(sq: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = sq.iter().map(|&s| (-beta * (s - min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let entropy = -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
    (probs, entropy)
}

/// Bisection on `beta` (with doubling until bracketed) so that the
/// perplexity `exp(H)` of each conditional matches `perplexity`.
///
/// When a node's nearest-neighbour tie count exceeds the target, the target
/// is unreachable and the search stops at the sharpest kernel tried.
pub fn tsne_affinities(d: &DistanceMatrix, perplexity: f64) -> Result<TsneAffinities> {
    let n = d.node_count();
    let max = n.saturating_sub(1) as f64;
    if !(perplexity >= 1.0 && perplexity <= max) {
        return Err(Error::PerplexityOutOfRange { perplexity, max });
    }
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        let sq: Vec<f64> = others.iter().map(|&k| f64::from(d.get(i, k)).powi(2)).collect();
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut beta = 1.0;
        let (mut row, mut h) = conditional(&sq, beta);
        for _ in 0..MAX_SEARCH_STEPS {
            let diff = h - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                // too flat: sharpen
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            (row, h) = conditional(&sq, beta);
        }
        sigma.push((0.5 / beta).sqrt());
        for (&k, &pk) in others.iter().zip(&row) {
            p[[i, k]] = pk;
        }
    }
    // p_ij = (p_{j|i} + p_{i|j}) / 2n
    let sym = (&p + &p.t()) / (2.0 * n as f64);
    Ok(TsneAffinities { p: sym, sigma, perplexity })
}

/// `KL(P || Q)` with Student-t layout affinities `q_ij` normalized over
/// ordered pairs; terms with `p_ij = 0` are dropped.
pub fn tsne_loss(x: &Layout, a: &TsneAffinities) -> LossEvaluation {
    let pos = x.positions();
    let n = pos.nrows();
    let mut kernel = Array2::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = pos[[i, 0]] - pos[[j, 0]];
            let dy = pos[[i, 1]] - pos[[j, 1]];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            kernel[[i, j]] = k;
            kernel[[j, i]] = k;
            z += 2.0 * k;
        }
    }
    let mut value = 0.0;
    let mut grad = Array2::zeros((n, 2));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = a.p[[i, j]];
            let k = kernel[[i, j]];
            let qij = k / z;
            if pij > 0.0 {
                value += pij * (pij / qij).ln();
            }
            let coef = 4.0 * (pij - qij) * k;
            grad[[i, 0]] += coef * (pos[[i, 0]] - pos[[j, 0]]);
            grad[[i, 1]] += coef * (pos[[i, 1]] - pos[[j, 1]]);
        }
    }
    LossEvaluation { value, grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::random_init;
    use crate::graph::{generate_synthetic, shortest_paths, Graph, GraphKind};
    use crate::losses::finite_difference_gradient;

    /// Perplexity of row `i` of the conditional recomputed from sigma alone.
    fn row_perplexity(d: &DistanceMatrix, sigma: f64, i: usize) -> f64 {
        let n = d.node_count();
        let w: Vec<f64> = (0..n)
            .filter(|&k| k != i)
            .map(|k| (-(f64::from(d.get(i, k)).powi(2)) / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = w.iter().sum();
        let h: f64 = w.iter().map(|x| x / s).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum();
        h.exp()
    }

    #[test]
    fn two_nodes_forced_half() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let a = tsne_affinities(&shortest_paths(&g), 1.0).unwrap();
        assert_eq!(a.p[[0, 1]], 0.5);
        assert_eq!(a.p[[1, 0]], 0.5);
        let e = tsne_loss(&random_init(2, 4), &a);
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn normalization_and_symmetry() {
        let g = generate_synthetic(GraphKind::RandomConnected, 25, 3).unwrap();
        let a = tsne_affinities(&shortest_paths(&g), 6.0).unwrap();
        assert!((a.p.sum() - 1.0).abs() < 1e-9);
        for i in 0..25 {
            assert_eq!(a.p[[i, i]], 0.0);
            for j in 0..25 {
                assert_eq!(a.p[[i, j]], a.p[[j, i]]);
                assert!(a.p[[i, j]] >= 0.0);
            }
        }
    }

    #[test]
    fn star_leaves_are_exchangeable() {
        let g = Graph::new(6, (1..6).map(|i| (0, i))).unwrap();
        let a = tsne_affinities(&shortest_paths(&g), 2.0).unwrap();
        let ref_p = a.p[[1, 2]];
        for i in 1..6 {
            for j in 1..6 {
                if i != j {
                    assert!((a.p[[i, j]] - ref_p).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sigma_search_hits_target() {
        let g = generate_synthetic(GraphKind::Path, 20, 0).unwrap();
        let d = shortest_paths(&g);
        let a = tsne_affinities(&d, 5.0).unwrap();
        for i in 0..20 {
            assert!((row_perplexity(&d, a.sigma[i], i) - 5.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_out_of_range_perplexity() {
        let g = generate_synthetic(GraphKind::Path, 4, 0).unwrap();
        let d = shortest_paths(&g);
        assert!(matches!(tsne_affinities(&d, 0.5), Err(Error::PerplexityOutOfRange { .. })));
        assert!(matches!(tsne_affinities(&d, 3.5), Err(Error::PerplexityOutOfRange { .. })));
        assert!(tsne_affinities(&d, 3.0).is_ok());
    }

    #[test]
    fn gradient_and_positivity() {
        let g = generate_synthetic(GraphKind::RandomConnected, 6, 8).unwrap();
        let a = tsne_affinities(&shortest_paths(&g), 2.0).unwrap();
        let x = random_init(6, 9);
        let e = tsne_loss(&x, &a);
        assert!(e.value > 0.0);
        let fd = finite_difference_gradient(|y| tsne_loss(y, &a).value, &x, 1e-5);
        let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let err = (&fd - &e.grad).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err / scale < 1e-4, "rel err {}", err / scale);
    }
}
