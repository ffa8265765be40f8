//! Differentiable aesthetic criteria over a layout.
//!
//! Every criterion returns its value together with the exact gradient with
//! respect to all node coordinates.

pub mod angle;
pub mod edge_var;
pub mod occlusion;
pub mod stress;
pub mod tsne;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{shortest_paths, DistanceMatrix, Graph};
use crate::layout::Layout;

pub use angle::{angle_loss, node_angles};
pub use edge_var::{edge_var_loss, edge_var_loss_with, EdgeVarMode};
pub use occlusion::occlusion_loss;
pub use stress::{stress_loss, stress_value};
pub use tsne::{default_perplexity, tsne_affinities, tsne_loss, TsneAffinities};

/// Value and per-node gradient of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub value: f64,
    pub grad: Array2<f64>,
}

impl LossEvaluation {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Stress,
    Tsne,
    Angle,
    EdgeVar,
    Occlusion,
}

impl Criterion {
    pub const ALL: [Criterion; 5] =
        [Criterion::Stress, Criterion::Tsne, Criterion::Angle, Criterion::EdgeVar, Criterion::Occlusion];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Stress => "stress",
            Criterion::Tsne => "tsne",
            Criterion::Angle => "angle",
            Criterion::EdgeVar => "edge_var",
            Criterion::Occlusion => "occlusion",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidCriteria(format!("unknown criterion {s:?}")))
    }
}

/// Per-graph data shared by all criteria: distances and, when needed,
/// the t-SNE affinities.
#[derive(Debug, Clone)]
pub struct LossContext {
    pub graph: Graph,
    pub dist: DistanceMatrix,
    pub tsne: Option<TsneAffinities>,
    pub edge_var_mode: EdgeVarMode,
}

impl LossContext {
    /// Context with affinities precomputed if `criteria` contains t-SNE.
    pub fn new(graph: Graph, criteria: &[Criterion], perplexity: Option<f64>) -> Result<Self> {
        let dist = shortest_paths(&graph);
        let tsne = if criteria.contains(&Criterion::Tsne) {
            let n = graph.node_count();
            Some(tsne_affinities(&dist, perplexity.unwrap_or_else(|| default_perplexity(n)))?)
        } else {
            None
        };
        Ok(LossContext { graph, dist, tsne, edge_var_mode: EdgeVarMode::default() })
    }

    pub fn with_edge_var_mode(mut self, mode: EdgeVarMode) -> Self {
        self.edge_var_mode = mode;
        self
    }

    fn affinities(&self) -> Result<std::borrow::Cow<'_, TsneAffinities>> {
        match &self.tsne {
            Some(a) => Ok(std::borrow::Cow::Borrowed(a)),
            None => {
                let n = self.graph.node_count();
                Ok(std::borrow::Cow::Owned(tsne_affinities(&self.dist, default_perplexity(n))?))
            }
        }
    }

    pub fn evaluate(&self, criterion: Criterion, x: &Layout) -> Result<LossEvaluation> {
        match criterion {
            Criterion::Stress => stress_loss(x, &self.dist),
            Criterion::Tsne => Ok(tsne_loss(x, &*self.affinities()?)),
            Criterion::Angle => angle_loss(x, &self.graph),
            Criterion::EdgeVar => edge_var_loss_with(x, &self.graph, self.edge_var_mode),
            Criterion::Occlusion => Ok(occlusion_loss(x)),
        }
    }

    /// Value only; coincident nodes are not an error here.
    pub fn value(&self, criterion: Criterion, x: &Layout) -> Result<f64> {
        match criterion {
            Criterion::Stress => Ok(stress_value(x.positions(), &self.dist)),
            Criterion::Angle => Ok(angle::angle_value(x, &self.graph)),
            other => Ok(self.evaluate(other, x)?.value),
        }
    }
}

/// Central differences `(f(x + h e) - f(x - h e)) / 2h` per coordinate.
pub fn finite_difference_gradient(loss: impl Fn(&Layout) -> f64, x: &Layout, h: f64) -> Array2<f64> {
    assert!(h > 0.0, "step must be positive");
    let base = x.positions();
    let mut grad = Array2::zeros(base.raw_dim());
    let mut probe = base.clone();
    for i in 0..base.nrows() {
        for j in 0..2 {
            let orig = probe[[i, j]];
            probe[[i, j]] = orig + h;
            let up = loss(&Layout::new(probe.clone()).expect("finite"));
            probe[[i, j]] = orig - h;
            let down = loss(&Layout::new(probe.clone()).expect("finite"));
            probe[[i, j]] = orig;
            grad[[i, j]] = (up - down) / (2.0 * h);
        }
    }
    grad
}

const PERTURBATION: f64 = 1e-9;
const MAX_PERTURBATIONS: usize = 3;

/// Retries `f` on deterministically perturbed copies of `x` while it reports
/// coincident nodes. Each retry moves every node that shares its position
/// with another node, so groups of coincident nodes separate in one pass.
pub(crate) fn with_perturbation_retry(
    x: &Layout,
    f: impl Fn(&Layout) -> Result<LossEvaluation>,
) -> Result<LossEvaluation> {
    let mut current = std::borrow::Cow::Borrowed(x);
    let mut attempt = 0;
    loop {
        match f(&current) {
            Err(Error::CoincidentNodes(..)) if attempt < MAX_PERTURBATIONS => {
                let extent = current.positions().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                current = std::borrow::Cow::Owned(current.separate_coincident(PERTURBATION * (1.0 + extent), attempt));
                attempt += 1;
            }
            other => return other,
        }
    }
}
