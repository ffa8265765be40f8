//! Dense layers, activations and batch normalization on top of the tape.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Negative-side slope of [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.01;

/// Largest double below 1.
const TANH_BOUND: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            // saturated tanh rounds to exactly +-1; keep outputs strictly inside
            Activation::Tanh => x.tanh().clamp(-TANH_BOUND, TANH_BOUND),
        }
    }

    /// Derivative at input `x` with forward output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Weight `in x out` and bias stored as a `1 x out` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl DenseParams {
    /// Glorot-uniform weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-limit..limit));
        DenseParams { w, b: Array2::zeros((1, fan_out)) }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }
}

/// Tape handles for one dense layer.
#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub w: Var,
    pub b: Var,
}

impl DenseVars {
    pub fn register(tape: &mut Tape, p: &DenseParams) -> Self {
        DenseVars { w: tape.leaf(p.w.clone()), b: tape.leaf(p.b.clone()) }
    }
}

/// `x W + b`.
pub fn dense_forward(tape: &mut Tape, x: Var, p: DenseVars) -> Result<Var> {
    let xw = tape.matmul(x, p.w)?;
    tape.add_row(xw, p.b)
}

pub fn activation(tape: &mut Tape, x: Var, kind: Activation) -> Var {
    tape.act(x, kind)
}

/// Learnable affine part and running statistics of one normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub scale: Array2<f64>,
    pub shift: Array2<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        BatchNormState {
            scale: Array2::ones((1, features)),
            shift: Array2::zeros((1, features)),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchNormVars {
    pub scale: Var,
    pub shift: Var,
}

impl BatchNormVars {
    pub fn register(tape: &mut Tape, s: &BatchNormState) -> Self {
        BatchNormVars { scale: tape.leaf(s.scale.clone()), shift: tape.leaf(s.shift.clone()) }
    }
}

/// Normalizes every column of `x` over its rows. In training mode the batch
/// statistics are used and folded into the running estimates
/// (`r <- (1 - momentum) r + momentum * batch`, unbiased variance).
pub fn batch_norm(
    tape: &mut Tape,
    x: Var,
    vars: BatchNormVars,
    state: &mut BatchNormState,
    training: bool,
) -> Result<Var> {
    let rows = tape.value(x).nrows();
    if tape.value(x).ncols() != state.features() {
        return Err(Error::ShapeMismatch {
            op: "batch_norm",
            detail: format!("{} features vs {}", tape.value(x).ncols(), state.features()),
        });
    }
    if training {
        let (out, mean, var) = tape.batch_norm_op(x, vars.scale, vars.shift, None, state.eps)?;
        let m = state.momentum;
        let unbiased = if rows > 1 { &var * (rows as f64 / (rows - 1) as f64) } else { var };
        state.running_mean = &state.running_mean * (1.0 - m) + &mean * m;
        state.running_var = &state.running_var * (1.0 - m) + &unbiased * m;
        Ok(out)
    } else {
        let (out, _, _) = tape.batch_norm_op(
            x,
            vars.scale,
            vars.shift,
            Some((&state.running_mean, &state.running_var)),
            state.eps,
        )?;
        Ok(out)
    }
}
