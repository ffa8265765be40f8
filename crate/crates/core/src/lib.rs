//! Graph-drawing lab: differentiable aesthetic losses with analytic
//! gradients, adaptive multi-objective weighting, classical baselines and a
//! message-passing layout network trained end to end.

pub mod autodiff;
pub mod baselines;
pub mod direct;
pub mod error;
pub mod eval;
pub mod graph;
pub mod layout;
pub mod losses;
pub mod model;
pub mod objective;
pub mod render;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{AugmentedGraph, DistanceMatrix, Graph};
pub use layout::Layout;
pub use losses::{Criterion, LossEvaluation};
