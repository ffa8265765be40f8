//! Gradient descent directly over node positions.
//!
//! The weights `alpha` are updated every `epoch_length` steps from that
//! epoch's mean per-criterion losses, the same way the training loop does
//! once per pass over the data.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adamw_step, lr_schedule, AdamWState};
use crate::baselines::random_init;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layout::Layout;
use crate::losses::{Criterion, EdgeVarMode, LossContext};
use crate::objective::{CriterionSpec, Strategy, WeightState};
use crate::rng;

const LOSS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Plain,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Optimizer::Plain),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::InvalidConfig(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescentConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Multiplicative step-size decay applied once per epoch.
    pub step_decay: f64,
    pub optimizer: Optimizer,
    pub spec: CriterionSpec,
    pub strategy: Strategy,
    pub seed: u64,
    /// Extra runs from random starts on top of the run from the given init.
    pub restarts: usize,
    /// Steps per weight-update epoch.
    pub epoch_length: usize,
    pub perplexity: Option<f64>,
    pub edge_var_mode: EdgeVarMode,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            steps: 500,
            step_size: 0.05,
            step_decay: 1.0,
            optimizer: Optimizer::Adam,
            spec: CriterionSpec::single(Criterion::Stress),
            strategy: Strategy::Fixed,
            seed: 0,
            restarts: 0,
            epoch_length: 100,
            perplexity: None,
            edge_var_mode: EdgeVarMode::UnitTarget,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epoch_length == 0 {
            return Err(Error::InvalidConfig("epoch_length must be positive".into()));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) || !(self.step_decay > 0.0) {
            return Err(Error::InvalidConfig("step_size must be non-negative and step_decay positive".into()));
        }
        CriterionSpec::new(self.spec.criteria().to_vec(), self.spec.gamma().to_vec())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub losses: Vec<f64>,
    pub composite: f64,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub criteria: Vec<Criterion>,
    pub rows: Vec<TrajectoryRow>,
    /// Row index of the returned iterate.
    pub best: usize,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for c in &self.criteria {
            write!(out, ",{c}").unwrap();
        }
        out.push_str(",composite");
        for c in &self.criteria {
            write!(out, ",alpha_{c}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{}", r.step).unwrap();
            for v in &r.losses {
                write!(out, ",{v}").unwrap();
            }
            write!(out, ",{}", r.composite).unwrap();
            for a in &r.alpha {
                write!(out, ",{a}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    fn weighted(&self, row: usize, alpha: &[f64]) -> f64 {
        self.rows[row].losses.iter().zip(alpha).map(|(l, a)| l * a).sum()
    }
}

struct Run {
    layout: Layout,
    trajectory: Trajectory,
    final_alpha: Vec<f64>,
}

/// Optimizes positions from `init`; with restarts, additional runs start from
/// seeded random layouts and the best run wins.
///
/// Each run returns its iterate with the lowest composite loss under the
/// weights in force at the end of that run; runs are compared under the
/// first run's final weights.
pub fn optimize_layout(g: &Graph, init: &Layout, cfg: &DescentConfig) -> Result<(Layout, Trajectory)> {
    cfg.validate()?;
    if init.node_count() != g.node_count() {
        return Err(Error::DimensionMismatch { expected: g.node_count(), actual: init.node_count() });
    }
    let ctx = LossContext::new(g.clone(), cfg.spec.criteria(), cfg.perplexity)?.with_edge_var_mode(cfg.edge_var_mode);
    let starts: Vec<Layout> = std::iter::once(init.clone())
        .chain((0..cfg.restarts).map(|r| {
            let seed = rng::indexed_stream(cfg.seed, "restart", r as u64).next_u64();
            random_init(g.node_count(), seed)
        }))
        .collect();
    let runs: Vec<Run> = starts.par_iter().map(|x0| descend(&ctx, x0, cfg)).collect::<Result<_>>()?;
    let reference = runs[0].final_alpha.clone();
    let score = |r: &Run| r.trajectory.weighted(r.trajectory.best, &reference);
    let mut best = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        if score(r) < score(&runs[best]) {
            best = i;
        }
    }
    let run = runs.into_iter().nth(best).expect("at least one run");
    Ok((run.layout, run.trajectory))
}

/// Optimizes with the given context, starting from `init` only.
pub fn optimize_with_context(ctx: &LossContext, init: &Layout, cfg: &DescentConfig) -> Result<(Layout, Trajectory)> {
    cfg.validate()?;
    let run = descend(ctx, init, cfg)?;
    Ok((run.layout, run.trajectory))
}

fn descend(ctx: &LossContext, init: &Layout, cfg: &DescentConfig) -> Result<Run> {
    let criteria = cfg.spec.criteria();
    let gamma = cfg.spec.gamma();
    let mut weights = WeightState::new(gamma);
    let mut x = init.positions().clone();
    let mut adam = AdamWState::new([x.dim()]);
    let mut iterates = Vec::with_capacity(cfg.steps + 1);
    let mut rows = Vec::with_capacity(cfg.steps + 1);
    let mut epoch_sum = vec![0.0; criteria.len()];
    let mut epoch_steps = 0;

    for step in 0..=cfg.steps {
        let layout = Layout::new(x.clone())
            .map_err(|_| Error::NonFiniteLoss { graph: "layout".into(), criterion: "positions".into() })?;
        let mut grad = Array2::zeros(x.raw_dim());
        let mut losses = Vec::with_capacity(criteria.len());
        for (&c, &a) in criteria.iter().zip(&weights.alpha) {
            let e = ctx.evaluate(c, &layout)?;
            if !e.is_finite() {
                return Err(Error::NonFiniteLoss { graph: "layout".into(), criterion: c.to_string() });
            }
            grad.scaled_add(a, &e.grad);
            losses.push(e.value);
        }
        let composite = losses.iter().zip(&weights.alpha).map(|(l, a)| l * a).sum();
        rows.push(TrajectoryRow { step, losses: losses.clone(), composite, alpha: weights.alpha.clone() });
        iterates.push(layout);
        if step == cfg.steps {
            break;
        }

        let epoch = step / cfg.epoch_length;
        let lr = lr_schedule(cfg.step_size, cfg.step_decay, epoch);
        match cfg.optimizer {
            Optimizer::Plain => x.scaled_add(-lr, &grad),
            Optimizer::Adam => adamw_step(&mut [&mut x], &[grad], &mut adam, lr, 0.0)?,
        }

        for (s, l) in epoch_sum.iter_mut().zip(&losses) {
            *s += l;
        }
        epoch_steps += 1;
        if epoch_steps == cfg.epoch_length {
            let mean: Vec<f64> = epoch_sum.iter().map(|s| (s / epoch_steps as f64).max(LOSS_FLOOR)).collect();
            weights = cfg.strategy.update(gamma, &weights, &mean)?;
            epoch_sum.iter_mut().for_each(|s| *s = 0.0);
            epoch_steps = 0;
        }
    }

    let mut trajectory = Trajectory { criteria: criteria.to_vec(), rows, best: 0 };
    let final_alpha = weights.alpha;
    for i in 1..trajectory.rows.len() {
        if trajectory.weighted(i, &final_alpha) < trajectory.weighted(trajectory.best, &final_alpha) {
            trajectory.best = i;
        }
    }
    let layout = iterates.swap_remove(trajectory.best);
    Ok(Run { layout, trajectory, final_alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{default_pivots, pivot_mds, stress_majorization, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
    use crate::graph::{generate_synthetic, grid, shortest_paths, GraphKind};
    use crate::losses::stress::stress_value;

    fn stress_of(g: &Graph, x: &Layout) -> f64 {
        stress_value(x.positions(), &shortest_paths(g))
    }

    #[test]
    fn path3_reaches_zero_stress() {
        let g = generate_synthetic(GraphKind::Path, 3, 0).unwrap();
        let init = random_init(3, 7);
        let (x, _) = optimize_layout(&g, &init, &DescentConfig::default()).unwrap();
        assert!(stress_of(&g, &x) < 1e-6, "{}", stress_of(&g, &x));
    }

    #[test]
    fn four_cycle_optimum() {
        let g = generate_synthetic(GraphKind::Cycle, 4, 0).unwrap();
        let init = pivot_mds(&shortest_paths(&g), 4, 0).unwrap();
        let (x, _) = optimize_layout(&g, &init, &DescentConfig::default()).unwrap();
        assert!((stress_of(&g, &x) - 0.137).abs() < 5e-3, "{}", stress_of(&g, &x));
        // with restarts the crossed-square local minimum is escaped from any start
        let cfg = DescentConfig { restarts: 4, ..DescentConfig::default() };
        for seed in 0..5 {
            let (x, _) = optimize_layout(&g, &random_init(4, seed), &cfg).unwrap();
            assert!((stress_of(&g, &x) - 0.137).abs() < 5e-3, "seed {seed}: {}", stress_of(&g, &x));
        }
    }

    #[test]
    fn zero_step_size_returns_input() {
        let g = generate_synthetic(GraphKind::RandomTree, 9, 3).unwrap();
        let init = random_init(9, 1);
        let cfg = DescentConfig { step_size: 0.0, ..DescentConfig::default() };
        let (x, traj) = optimize_layout(&g, &init, &cfg).unwrap();
        assert_eq!(x, init);
        assert_eq!(traj.best, 0);
        let cfg = DescentConfig { step_size: 0.0, optimizer: Optimizer::Plain, ..DescentConfig::default() };
        assert_eq!(optimize_layout(&g, &init, &cfg).unwrap().0, init);
    }

    #[test]
    fn best_never_worse_than_start() {
        let spec = CriterionSpec::new(vec![Criterion::Stress, Criterion::Angle], vec![0.5, 0.5]).unwrap();
        for (i, strategy) in [Strategy::Fixed, Strategy::Adaptive, Strategy::Softadapt { beta: 0.1, tau: 0.9 }]
            .into_iter()
            .enumerate()
        {
            let g = generate_synthetic(GraphKind::RandomConnected, 12, i as u64).unwrap();
            let init = random_init(12, i as u64);
            let cfg = DescentConfig { spec: spec.clone(), strategy, steps: 120, ..DescentConfig::default() };
            let (_, traj) = optimize_layout(&g, &init, &cfg).unwrap();
            let alpha = &traj.rows.last().unwrap().alpha;
            assert!(traj.weighted(traj.best, alpha) <= traj.weighted(0, alpha));
            assert_eq!(traj.rows.len(), 121);
        }
    }

    #[test]
    fn agrees_with_majorization() {
        let graphs = [
            generate_synthetic(GraphKind::Path, 10, 0).unwrap(),
            generate_synthetic(GraphKind::Cycle, 8, 0).unwrap(),
            grid(4, 4).unwrap(),
        ];
        for g in &graphs {
            let d = shortest_paths(g);
            let init = pivot_mds(&d, default_pivots(g.node_count()), 0).unwrap();
            let maj = stress_majorization(&init, &d, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
            let (x, _) = optimize_layout(g, &init, &DescentConfig::default()).unwrap();
            let diff = (stress_of(g, &x) - maj.final_stress()).abs();
            assert!(diff < 1e-3, "{diff}");
        }
    }

    #[test]
    fn trajectory_csv_shape() {
        let g = generate_synthetic(GraphKind::Path, 4, 0).unwrap();
        let cfg = DescentConfig { steps: 3, ..DescentConfig::default() };
        let (_, traj) = optimize_layout(&g, &random_init(4, 0), &cfg).unwrap();
        let csv = traj.to_csv();
        assert!(csv.starts_with("step,stress,composite,alpha_stress\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn rejects_mismatched_init() {
        let g = generate_synthetic(GraphKind::Path, 4, 0).unwrap();
        let err = optimize_layout(&g, &random_init(3, 0), &DescentConfig::default()).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 4, actual: 3 });
    }
}
