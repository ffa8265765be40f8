//! Mini-batch training loop for the layout network.

use std::fmt::Write as _;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{deepgd_forward, initial_layout, model_graph, ArchConfig, Batch, DeepGDParams, InitKind};
use crate::autodiff::{adamw_step, lr_schedule, AdamWState, BatchNormState};
use crate::error::{Error, Result};
use crate::graph::{AugmentedGraph, Graph};
use crate::layout::Layout;
use crate::losses::{Criterion, LossContext, LossEvaluation};
use crate::objective::{composite_loss, CriterionSpec, Strategy, WeightState};
use crate::rng;

/// Losses are floored here before feeding the weight strategies, which
/// need strictly positive inputs.
const LOSS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub strategy: Strategy,
    pub spec: CriterionSpec,
    pub init: InitKind,
    pub seed: u64,
    pub perplexity: Option<f64>,
    pub max_nodes: usize,
    pub arch: ArchConfig,
    /// Return the parameters from the epoch with the best validation score
    /// instead of the last epoch. Ignored without a validation set.
    pub keep_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            epochs: 100,
            lr0: 0.01,
            lr_decay: 0.99,
            weight_decay: 0.01,
            strategy: Strategy::Fixed,
            spec: CriterionSpec::single(Criterion::Stress),
            init: InitKind::Pivotmds,
            seed: 0,
            perplexity: None,
            max_nodes: 1000,
            arch: ArchConfig::default(),
            keep_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_nodes == 0 {
            return Err(Error::InvalidConfig("batch_size and max_nodes must be positive".into()));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) || !(self.lr_decay > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("lr0, lr_decay and weight_decay must be non-negative and finite".into()));
        }
        CriterionSpec::new(self.spec.criteria().to_vec(), self.spec.gamma().to_vec())?;
        self.arch.validate()
    }
}

/// Splits into train/validation/test by proportion after a seeded shuffle.
pub fn split_dataset<T: Clone>(items: &[T], seed: u64, fractions: (f64, f64)) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let n = items.len();
    let n_train = ((n as f64) * fractions.0).round() as usize;
    let n_val = (((n as f64) * fractions.1).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    (pick(&order[..n_train]), pick(&order[n_train..n_train + n_val]), pick(&order[n_train + n_val..]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: Vec<f64>,
    /// Weights used during this epoch.
    pub alpha: Vec<f64>,
    /// Empty when no validation set was given.
    pub val_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub criteria: Vec<Criterion>,
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned, when chosen by validation.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr");
        for c in &self.criteria {
            write!(out, ",loss_{c}").unwrap();
        }
        for c in &self.criteria {
            write!(out, ",alpha_{c}").unwrap();
        }
        for c in &self.criteria {
            write!(out, ",val_{c}").unwrap();
        }
        out.push('\n');
        for r in &self.records {
            write!(out, "{},{}", r.epoch, r.lr).unwrap();
            for v in r.train_loss.iter().chain(&r.alpha) {
                write!(out, ",{v}").unwrap();
            }
            for k in 0..self.criteria.len() {
                match r.val_loss.get(k) {
                    Some(v) => write!(out, ",{v}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Everything about one graph that stays fixed during training.
pub struct Prepared {
    pub name: String,
    pub ctx: LossContext,
    pub ag: AugmentedGraph,
    pub init: Layout,
}

/// Precomputes distances, model input graph, initial layout and affinities.
pub fn prepare(graphs: &[Graph], cfg: &TrainConfig, purpose: &str) -> Result<Vec<Prepared>> {
    graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            if g.node_count() > cfg.max_nodes {
                return Err(Error::InvalidSize(format!(
                    "{purpose} graph {i} has {} nodes, cap is {}",
                    g.node_count(),
                    cfg.max_nodes
                )));
            }
            let ctx = LossContext::new(g.clone(), cfg.spec.criteria(), cfg.perplexity)?;
            let ag = model_graph(g, &ctx.dist, &cfg.arch)?;
            let init_seed = rng::indexed_stream(cfg.seed, purpose, i as u64).next_u64();
            let init = initial_layout(&ctx.dist, cfg.init, init_seed)?;
            Ok(Prepared { name: format!("{purpose}[{i}]"), ctx, ag, init })
        })
        .collect()
}

/// Per-graph, per-criterion evaluations of a forward output.
fn evaluate_batch(
    items: &[&Prepared],
    output: &Array2<f64>,
    batch: &Batch,
    criteria: &[Criterion],
) -> Result<Vec<Vec<LossEvaluation>>> {
    items
        .par_iter()
        .enumerate()
        .map(|(g, item)| {
            let rows = output.slice(s![batch.node_range(g), ..]);
            if rows.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { graph: item.name.clone(), criterion: "output".into() });
            }
            let x = Layout::new(rows.to_owned())?;
            criteria
                .iter()
                .map(|&c| {
                    let e = item.ctx.evaluate(c, &x)?;
                    if !e.is_finite() {
                        return Err(Error::NonFiniteLoss { graph: item.name.clone(), criterion: c.to_string() });
                    }
                    Ok(e)
                })
                .collect()
        })
        .collect()
}

/// Mean per-criterion loss of the network in inference mode.
pub fn mean_losses(params: &DeepGDParams, data: &[Prepared], criteria: &[Criterion], batch_size: usize) -> Result<Vec<f64>> {
    let mut totals = vec![0.0; criteria.len()];
    for chunk in data.chunks(batch_size.max(1)) {
        let refs: Vec<&Prepared> = chunk.iter().collect();
        let pairs: Vec<(&AugmentedGraph, &Layout)> = refs.iter().map(|p| (&p.ag, &p.init)).collect();
        let batch = Batch::new(&pairs)?;
        let fwd = deepgd_forward(params, &batch, false)?;
        let evals = evaluate_batch(&refs, fwd.tape.value(fwd.output), &batch, criteria)?;
        for per_graph in &evals {
            for (t, e) in totals.iter_mut().zip(per_graph) {
                *t += e.value;
            }
        }
    }
    let n = data.len().max(1) as f64;
    Ok(totals.iter().map(|t| t / n).collect())
}

/// Outcome of one training-mode forward/backward pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchStep {
    /// Batch mean of the weighted composite loss.
    pub loss: f64,
    /// Per-criterion loss summed over the batch's graphs.
    pub loss_sums: Vec<f64>,
    /// Gradient of `loss` for each tensor in [`DeepGDParams::tensors`] order.
    pub grads: Vec<Array2<f64>>,
    pub norm_states: Vec<BatchNormState>,
}

/// Forward in training mode, analytic loss gradients per graph, then
/// backpropagation through the network.
pub fn batch_step(params: &DeepGDParams, items: &[&Prepared], criteria: &[Criterion], alpha: &[f64]) -> Result<BatchStep> {
    let pairs: Vec<(&AugmentedGraph, &Layout)> = items.iter().map(|p| (&p.ag, &p.init)).collect();
    let batch = Batch::new(&pairs)?;
    let fwd = deepgd_forward(params, &batch, true)?;
    let evals = evaluate_batch(items, fwd.tape.value(fwd.output), &batch, criteria)?;

    let mut seed = Array2::zeros(fwd.tape.value(fwd.output).raw_dim());
    let scale = 1.0 / items.len() as f64;
    let mut loss = 0.0;
    let mut loss_sums = vec![0.0; criteria.len()];
    for (g, per_graph) in evals.iter().enumerate() {
        for (t, e) in loss_sums.iter_mut().zip(per_graph) {
            *t += e.value;
        }
        let combined = composite_loss(per_graph, alpha)?;
        loss += scale * combined.value;
        seed.slice_mut(s![batch.node_range(g), ..]).scaled_add(scale, &combined.grad);
    }

    let grads = fwd.tape.backward_with(fwd.output, seed)?;
    let grads = fwd
        .params
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| grads.get_or_zeros(v, t.dim()))
        .collect();
    Ok(BatchStep { loss, loss_sums, grads, norm_states: fwd.norm_states })
}

/// `sum_k gamma_k ln L_k`: comparable across epochs whatever the weights in
/// force, and blind to the scale of each criterion.
fn validation_score(gamma: &[f64], val: &[f64]) -> f64 {
    gamma.iter().zip(val).map(|(g, l)| g * l.max(LOSS_FLOOR).ln()).sum()
}

/// Trains a fresh network. With `keep_best`, the returned parameters are
/// those of the epoch with the lowest validation score.
pub fn train(train_set: &[Graph], val_set: &[Graph], cfg: &TrainConfig) -> Result<(DeepGDParams, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput);
    }
    let train_data = prepare(train_set, cfg, "train")?;
    let val_data = prepare(val_set, cfg, "val")?;
    let mut params = DeepGDParams::init(&cfg.arch, cfg.seed)?;
    let history = train_prepared(&mut params, &train_data, &val_data, cfg)?;
    Ok((params, history))
}

/// Training loop over prepared data, updating `params` in place.
pub fn train_prepared(
    params: &mut DeepGDParams,
    train_data: &[Prepared],
    val_data: &[Prepared],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    let criteria = cfg.spec.criteria().to_vec();
    let gamma = cfg.spec.gamma().to_vec();
    let mut adam = AdamWState::new(params.tensors().iter().map(|t| t.dim()));
    let mut weights = WeightState::new(&gamma);
    let mut shuffle_rng = rng::stream(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, DeepGDParams)> = None;

    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(cfg.lr0, cfg.lr_decay, epoch);
        order.shuffle(&mut shuffle_rng);
        let alpha = weights.alpha.clone();
        let mut totals = vec![0.0; criteria.len()];

        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<&Prepared> = chunk.iter().map(|&i| &train_data[i]).collect();
            let step = batch_step(params, &items, &criteria, &alpha)?;
            for (t, v) in totals.iter_mut().zip(&step.loss_sums) {
                *t += v;
            }
            adamw_step(&mut params.tensors_mut(), &step.grads, &mut adam, lr, cfg.weight_decay)?;
            params.apply_norm_updates(&step.norm_states);
        }

        let n = train_data.len() as f64;
        let train_loss: Vec<f64> = totals.iter().map(|t| t / n).collect();
        let val_loss = if val_data.is_empty() {
            Vec::new()
        } else {
            mean_losses(params, val_data, &criteria, cfg.batch_size)?
        };
        let floored: Vec<f64> = train_loss.iter().map(|l| l.max(LOSS_FLOOR)).collect();
        weights = cfg.strategy.update(&gamma, &weights, &floored)?;
        if cfg.keep_best && !val_loss.is_empty() {
            let score = validation_score(&gamma, &val_loss);
            if best.as_ref().map_or(true, |b| score < b.0) {
                best = Some((score, epoch, params.clone()));
            }
        }
        records.push(EpochRecord { epoch, lr, train_loss, alpha, val_loss });
    }
    let best_epoch = best.map(|(_, epoch, p)| {
        *params = p;
        epoch
    });
    Ok(TrainHistory { criteria, records, best_epoch })
}
