//! Layout metrics, the symmetric percent change statistic and Pareto sweeps.

use std::fmt::Write as _;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{default_pivots, pivot_mds};
use crate::direct::{optimize_with_context, DescentConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layout::Layout;
use crate::losses::{Criterion, LossContext};
use crate::model::{infer, split_dataset, train, TrainConfig};
use crate::objective::{CriterionSpec, Strategy};
use crate::rng;

/// Values of all five criteria for one layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stress: f64,
    pub tsne: f64,
    pub angle: f64,
    pub edge_var: f64,
    pub occlusion: f64,
    /// Wall-clock seconds spent producing the layout, when known.
    pub layout_seconds: f64,
}

impl MetricsReport {
    pub fn get(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Stress => self.stress,
            Criterion::Tsne => self.tsne,
            Criterion::Angle => self.angle,
            Criterion::EdgeVar => self.edge_var,
            Criterion::Occlusion => self.occlusion,
        }
    }

    /// Column-wise mean.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricsReport {
            stress: avg(|r| r.stress),
            tsne: avg(|r| r.tsne),
            angle: avg(|r| r.angle),
            edge_var: avg(|r| r.edge_var),
            occlusion: avg(|r| r.occlusion),
            layout_seconds: avg(|r| r.layout_seconds),
        })
    }
}

pub fn evaluate_layout(g: &Graph, x: &Layout) -> Result<MetricsReport> {
    let ctx = LossContext::new(g.clone(), &Criterion::ALL, None)?;
    evaluate_with_context(&ctx, x)
}

pub fn evaluate_with_context(ctx: &LossContext, x: &Layout) -> Result<MetricsReport> {
    if x.node_count() != ctx.graph.node_count() {
        return Err(Error::DimensionMismatch { expected: ctx.graph.node_count(), actual: x.node_count() });
    }
    Ok(MetricsReport {
        stress: ctx.value(Criterion::Stress, x)?,
        tsne: ctx.value(Criterion::Tsne, x)?,
        angle: ctx.value(Criterion::Angle, x)?,
        edge_var: ctx.value(Criterion::EdgeVar, x)?,
        occlusion: ctx.value(Criterion::Occlusion, x)?,
        layout_seconds: 0.0,
    })
}

/// Per-graph reports plus their mean, as written to metrics JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub graphs: Vec<MetricsReport>,
    pub mean: Option<MetricsReport>,
}

impl DatasetMetrics {
    pub fn new(graphs: Vec<MetricsReport>) -> Self {
        let mean = MetricsReport::mean(&graphs);
        DatasetMetrics { graphs, mean }
    }
}

/// Symmetric percent change `100 * mean((D_i - G_i) / max(D_i, G_i))`.
/// Positive values mean `g` is better (lower) than `d`.
pub fn spc(d: &[f64], g: &[f64]) -> Result<f64> {
    if d.len() != g.len() {
        return Err(Error::LengthMismatch { left: d.len(), right: g.len() });
    }
    if d.is_empty() {
        return Err(Error::EmptyInput);
    }
    let bad = d.iter().chain(g).enumerate().find(|(_, &v)| !(v > 0.0) || !v.is_finite());
    if let Some((i, &value)) = bad {
        return Err(Error::NonPositiveValue { index: i % d.len(), value });
    }
    let sum: f64 = d.iter().zip(g).map(|(&a, &b)| (a - b) / a.max(b)).sum();
    Ok(100.0 * sum / d.len() as f64)
}

/// What produces layouts in a sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Engine {
    /// Descent from PivotMDS on every graph; the spec and strategy fields of
    /// the config are replaced per cell.
    Direct(DescentConfig),
    /// Train on an 80% split and measure on the held-out 10% test split.
    Model(TrainConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub strategy: String,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub mean_loss_a: f64,
    pub mean_loss_b: f64,
}

pub fn pareto_csv(points: &[ParetoPoint]) -> String {
    let mut out = String::from("strategy,gamma_a,gamma_b,mean_loss_a,mean_loss_b\n");
    for p in points {
        writeln!(out, "{},{},{},{},{}", p.strategy, p.gamma_a, p.gamma_b, p.mean_loss_a, p.mean_loss_b).unwrap();
    }
    out
}

/// Spec for one grid cell. A zero share drops that criterion from the
/// objective; it is still measured.
fn cell_spec(pair: (Criterion, Criterion), gamma: (f64, f64)) -> Result<CriterionSpec> {
    let parts: Vec<(Criterion, f64)> = [(pair.0, gamma.0), (pair.1, gamma.1)].into_iter().filter(|(_, g)| *g > 0.0).collect();
    CriterionSpec::normalized(parts.iter().map(|p| p.0).collect(), parts.iter().map(|p| p.1).collect())
}

fn validate_sweep(pair: (Criterion, Criterion), strategies: &[Strategy], grid: &[(f64, f64)]) -> Result<()> {
    if pair.0 == pair.1 {
        return Err(Error::InvalidConfig("pareto pair must name two different criteria".into()));
    }
    if strategies.is_empty() || grid.is_empty() {
        return Err(Error::InvalidConfig("pareto sweep needs at least one strategy and one grid point".into()));
    }
    for (i, &(a, b)) in grid.iter().enumerate() {
        if !(a >= 0.0 && b >= 0.0) || !a.is_finite() || !b.is_finite() || (a + b - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("grid point {i} ({a}, {b}) must be non-negative and sum to 1")));
        }
        if grid[..i].contains(&(a, b)) {
            return Err(Error::InvalidConfig(format!("duplicate grid point ({a}, {b})")));
        }
    }
    for (i, s) in strategies.iter().enumerate() {
        if strategies[..i].iter().any(|t| t.name() == s.name()) {
            return Err(Error::InvalidConfig(format!("duplicate strategy {}", s.name())));
        }
    }
    Ok(())
}

/// Runs every (strategy, gamma) cell and reports mean losses of both
/// criteria. Points are ordered by strategy as given, then by `gamma_a`.
pub fn pareto_sweep(
    dataset: &[Graph],
    pair: (Criterion, Criterion),
    strategies: &[Strategy],
    grid: &[(f64, f64)],
    engine: &Engine,
) -> Result<Vec<ParetoPoint>> {
    validate_sweep(pair, strategies, grid)?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut gammas = grid.to_vec();
    gammas.sort_by(|x, y| x.0.total_cmp(&y.0));
    let cells: Vec<(Strategy, (f64, f64))> =
        strategies.iter().flat_map(|&s| gammas.iter().map(move |&g| (s, g))).collect();

    match engine {
        Engine::Direct(base) => {
            let measured = [pair.0, pair.1];
            let prepared: Vec<(LossContext, Layout)> = dataset
                .par_iter()
                .enumerate()
                .map(|(i, g)| {
                    let ctx = LossContext::new(g.clone(), &measured, base.perplexity)?.with_edge_var_mode(base.edge_var_mode);
                    let seed = rng::indexed_stream(base.seed, "pareto-init", i as u64).next_u64();
                    let init = pivot_mds(&ctx.dist, default_pivots(g.node_count()), seed)?;
                    Ok((ctx, init))
                })
                .collect::<Result<_>>()?;
            cells
                .par_iter()
                .map(|&(strategy, gamma)| {
                    let cfg = DescentConfig { spec: cell_spec(pair, gamma)?, strategy, ..base.clone() };
                    let mut sums = (0.0, 0.0);
                    for (ctx, init) in &prepared {
                        let (x, _) = optimize_with_context(ctx, init, &cfg)?;
                        sums.0 += ctx.value(pair.0, &x)?;
                        sums.1 += ctx.value(pair.1, &x)?;
                    }
                    let n = prepared.len() as f64;
                    Ok(point(strategy, gamma, sums.0 / n, sums.1 / n))
                })
                .collect()
        }
        Engine::Model(base) => {
            let (train_set, val_set, test_set) = split_dataset(dataset, base.seed, (0.8, 0.1));
            if test_set.is_empty() {
                return Err(Error::InvalidSize("dataset too small for a test split".into()));
            }
            let measured = [pair.0, pair.1];
            let contexts: Vec<LossContext> =
                test_set.iter().map(|g| LossContext::new(g.clone(), &measured, base.perplexity)).collect::<Result<_>>()?;
            // cells run sequentially; training already parallelizes per batch
            cells
                .iter()
                .map(|&(strategy, gamma)| {
                    let cfg = TrainConfig { spec: cell_spec(pair, gamma)?, strategy, ..base.clone() };
                    let (params, _) = train(&train_set, &val_set, &cfg)?;
                    let mut sums = (0.0, 0.0);
                    for (i, ctx) in contexts.iter().enumerate() {
                        let seed = rng::indexed_stream(base.seed, "test", i as u64).next_u64();
                        let x = infer(&ctx.graph, &params, cfg.init, seed)?;
                        sums.0 += ctx.value(pair.0, &x)?;
                        sums.1 += ctx.value(pair.1, &x)?;
                    }
                    let n = contexts.len() as f64;
                    Ok(point(strategy, gamma, sums.0 / n, sums.1 / n))
                })
                .collect()
        }
    }
}

fn point(strategy: Strategy, gamma: (f64, f64), a: f64, b: f64) -> ParetoPoint {
    ParetoPoint { strategy: strategy.name().to_string(), gamma_a: gamma.0, gamma_b: gamma.1, mean_loss_a: a, mean_loss_b: b }
}
