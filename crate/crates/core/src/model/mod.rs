//! Message-passing layout network.
//!
//! Every convolution layer pairs a node transform `W` with an edge feature
//! network `phi` that maps each directed edge's features to a
//! `F_in x F_out` matrix in `(-1, 1)`. A layer's update for node `v` is
//! `W h_v + mean_{u -> v} h_u T_uv`. The network stacks an input block
//! (two layers on hop-distance edge features), a run of residual blocks
//! whose edge features also carry the direction and length of
//! `h_u - h_v` at block entry, and an output block whose last layer emits
//! 2D positions with no activation.

pub mod train;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::autodiff::nn::{BatchNormVars, DenseVars};
use crate::autodiff::{batch_norm, dense_forward, Activation, BatchNormState, DenseParams, EdgeIndex, Tape, Var};
use crate::baselines::{default_pivots, pivot_mds, random_init};
use crate::error::{Error, Result};
use crate::graph::{augment, shortest_paths, AugmentedGraph, DistanceMatrix, Graph};
use crate::layout::Layout;
use crate::rng;

pub use train::{batch_step, mean_losses, prepare, split_dataset, train, BatchStep, EpochRecord, Prepared, TrainConfig, TrainHistory};

const HIDDEN_ACTIVATION: Activation = Activation::LeakyRelu;

/// Which extra edge features the residual blocks receive besides `d_uv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockEdgeFeatures {
    None,
    Direction,
    Distance,
    Both,
}

impl BlockEdgeFeatures {
    fn width(self, f: usize) -> usize {
        1 + match self {
            BlockEdgeFeatures::None => 0,
            BlockEdgeFeatures::Direction => f,
            BlockEdgeFeatures::Distance => 1,
            BlockEdgeFeatures::Both => f + 1,
        }
    }
}

/// Network shape and ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub interior_blocks: usize,
    pub layers_per_block: usize,
    pub width: usize,
    pub edge_hidden: usize,
    pub use_residual: bool,
    pub use_virtual_edges: bool,
    pub block_edge_features: BlockEdgeFeatures,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            interior_blocks: 9,
            layers_per_block: 3,
            width: 8,
            edge_hidden: 8,
            use_residual: true,
            use_virtual_edges: true,
            block_edge_features: BlockEdgeFeatures::Both,
        }
    }
}

impl ArchConfig {
    /// Desk-scale shape: two residual blocks.
    pub fn small() -> Self {
        ArchConfig { interior_blocks: 2, ..ArchConfig::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.edge_hidden == 0 || self.layers_per_block == 0 {
            return Err(Error::InvalidConfig("width, edge_hidden and layers_per_block must be positive".into()));
        }
        Ok(())
    }
}

/// Two-layer edge network `e -> tanh(W2 leaky(W1 e + b1) + b2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeatureNetParams {
    pub hidden: DenseParams,
    pub out: DenseParams,
}

/// One message-aggregation layer, optionally followed by normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub node: DenseParams,
    pub phi: EdgeFeatureNetParams,
    pub norm: Option<BatchNormState>,
    /// Hidden layers apply the activation; the final output layer does not.
    pub activate: bool,
}

impl ConvLayer {
    fn init(fin: usize, fout: usize, edge_dim: usize, edge_hidden: usize, hidden: bool, rng: &mut rng::Rng) -> Self {
        ConvLayer {
            node: DenseParams::init(fin, fout, rng),
            phi: EdgeFeatureNetParams {
                hidden: DenseParams::init(edge_dim, edge_hidden, rng),
                out: DenseParams::init(edge_hidden, fin * fout, rng),
            },
            norm: hidden.then(|| BatchNormState::new(fout)),
            activate: hidden,
        }
    }

    pub fn fin(&self) -> usize {
        self.node.fan_in()
    }

    pub fn fout(&self) -> usize {
        self.node.fan_out()
    }

    fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut t = vec![&self.node.w, &self.node.b, &self.phi.hidden.w, &self.phi.hidden.b, &self.phi.out.w, &self.phi.out.b];
        if let Some(bn) = &self.norm {
            t.push(&bn.scale);
            t.push(&bn.shift);
        }
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut t = vec![
            &mut self.node.w,
            &mut self.node.b,
            &mut self.phi.hidden.w,
            &mut self.phi.hidden.b,
            &mut self.phi.out.w,
            &mut self.phi.out.b,
        ];
        if let Some(bn) = &mut self.norm {
            t.push(&mut bn.scale);
            t.push(&mut bn.shift);
        }
        t
    }

    fn register(&self, tape: &mut Tape, all: &mut Vec<Var>) -> LayerVars {
        let vars = LayerVars {
            node: DenseVars::register(tape, &self.node),
            phi_hidden: DenseVars::register(tape, &self.phi.hidden),
            phi_out: DenseVars::register(tape, &self.phi.out),
            norm: self.norm.as_ref().map(|bn| BatchNormVars::register(tape, bn)),
        };
        all.extend([vars.node.w, vars.node.b, vars.phi_hidden.w, vars.phi_hidden.b, vars.phi_out.w, vars.phi_out.b]);
        if let Some(n) = vars.norm {
            all.extend([n.scale, n.shift]);
        }
        vars
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub node: DenseVars,
    pub phi_hidden: DenseVars,
    pub phi_out: DenseVars,
    pub norm: Option<BatchNormVars>,
}

/// All learnable weights and normalization statistics of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepGDParams {
    pub arch: ArchConfig,
    pub input: Vec<ConvLayer>,
    pub blocks: Vec<Vec<ConvLayer>>,
    pub output: Vec<ConvLayer>,
}

impl DeepGDParams {
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng::stream(seed, "params");
        let f = arch.width;
        let h = arch.edge_hidden;
        let block_edge = arch.block_edge_features.width(f);
        let input = vec![ConvLayer::init(2, f, 1, h, true, &mut rng), ConvLayer::init(f, f, 1, h, true, &mut rng)];
        let blocks = (0..arch.interior_blocks)
            .map(|_| (0..arch.layers_per_block).map(|_| ConvLayer::init(f, f, block_edge, h, true, &mut rng)).collect())
            .collect();
        let output = vec![ConvLayer::init(f, f, 1, h, true, &mut rng), ConvLayer::init(f, 2, 1, h, false, &mut rng)];
        Ok(DeepGDParams { arch: arch.clone(), input, blocks, output })
    }

    fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.input.iter().chain(self.blocks.iter().flatten()).chain(self.output.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer> {
        self.input.iter_mut().chain(self.blocks.iter_mut().flatten()).chain(self.output.iter_mut())
    }

    /// Learnable tensors in a fixed order shared with [`Self::tensors_mut`]
    /// and the variables returned by the forward pass.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        self.layers().flat_map(ConvLayer::tensors).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers_mut().flat_map(ConvLayer::tensors_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn layer_count(&self) -> usize {
        self.layers().count()
    }

    fn norm_states(&self) -> Vec<BatchNormState> {
        self.layers().filter_map(|l| l.norm.clone()).collect()
    }

    /// Replaces normalization statistics with those produced by a training
    /// forward pass, keeping the learnable scale/shift untouched.
    pub fn apply_norm_updates(&mut self, updates: &[BatchNormState]) {
        for (layer, upd) in self.layers_mut().filter_map(|l| l.norm.as_mut()).zip(updates) {
            layer.running_mean = upd.running_mean.clone();
            layer.running_var = upd.running_var.clone();
        }
    }
}

/// Several graphs stacked into one disjoint union for a single forward pass.
#[derive(Debug, Clone)]
pub struct Batch {
    pub edges: EdgeIndex,
    /// `E x 1` hop distances per directed edge.
    pub distance: Array2<f64>,
    /// `N x 2` initial positions.
    pub init: Array2<f64>,
    /// Node offset of each graph; one extra trailing entry holds `N`.
    pub offsets: Vec<usize>,
}

impl Batch {
    pub fn new(items: &[(&AugmentedGraph, &Layout)]) -> Result<Self> {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut dist = Vec::new();
        let mut offsets = vec![0];
        let mut inits = Vec::new();
        for (ag, x) in items {
            if ag.node_count() != x.node_count() {
                return Err(Error::DimensionMismatch { expected: ag.node_count(), actual: x.node_count() });
            }
            let base = *offsets.last().expect("non-empty");
            src.extend(ag.sources().iter().map(|s| s + base));
            dst.extend(ag.targets().iter().map(|t| t + base));
            dist.extend_from_slice(ag.edge_features());
            inits.push(x.positions().view());
            offsets.push(base + ag.node_count());
        }
        let total = *offsets.last().expect("non-empty");
        if total == 0 {
            return Err(Error::InvalidSize("empty batch".into()));
        }
        let edge_count = dist.len();
        Ok(Batch {
            edges: EdgeIndex::new(src, dst, total),
            distance: Array2::from_shape_vec((edge_count, 1), dist).expect("E x 1"),
            init: ndarray::concatenate(Axis(0), &inits).expect("n x 2 blocks"),
            offsets,
        })
    }

    pub fn graph_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn node_range(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }
}

/// Result of a forward pass.
#[derive(Debug)]
pub struct Forward {
    pub tape: Tape,
    pub output: Var,
    /// Tape leaves in [`DeepGDParams::tensors`] order.
    pub params: Vec<Var>,
    /// Normalization states after this pass (running stats updated when training).
    pub norm_states: Vec<BatchNormState>,
}

impl Forward {
    /// Per-graph output layouts.
    pub fn layouts(&self, batch: &Batch) -> Result<Vec<Layout>> {
        let out = self.tape.value(self.output);
        (0..batch.graph_count())
            .map(|g| Layout::new(out.slice(ndarray::s![batch.node_range(g), ..]).to_owned()))
            .collect()
    }
}

/// Alg. 1 core given precomputed edge transforms `t` (`E x fin*fout`):
/// `h W + b + mean_{u -> v} h_u T_uv`.
pub fn message_aggregation_with(tape: &mut Tape, h: Var, t: Var, node: DenseVars, edges: &EdgeIndex) -> Result<Var> {
    let m = tape.edge_message(h, t, edges)?;
    let self_term = dense_forward(tape, h, node)?;
    tape.add(self_term, m)
}

/// Edge network followed by aggregation.
pub fn message_aggregation(tape: &mut Tape, h: Var, e: Var, layer: &LayerVars, edges: &EdgeIndex) -> Result<Var> {
    let t = edge_transform(tape, e, layer)?;
    message_aggregation_with(tape, h, t, layer.node, edges)
}

/// `tanh(W2 leaky(W1 e + b1) + b2)`, one flattened matrix per edge.
pub fn edge_transform(tape: &mut Tape, e: Var, layer: &LayerVars) -> Result<Var> {
    let hidden = dense_forward(tape, e, layer.phi_hidden)?;
    let hidden = tape.act(hidden, HIDDEN_ACTIVATION);
    let out = dense_forward(tape, hidden, layer.phi_out)?;
    Ok(tape.act(out, Activation::Tanh))
}

/// Residual-block edge features `(d_uv, direction, distance)` computed from
/// the block's input embeddings, trimmed to the configured subset.
pub fn block_edge_features(
    tape: &mut Tape,
    h: Var,
    distance: Var,
    edges: &EdgeIndex,
    which: BlockEdgeFeatures,
) -> Result<Var> {
    if which == BlockEdgeFeatures::None {
        return Ok(distance);
    }
    let f = tape.value(h).ncols();
    let pair = tape.pair_features(h, edges);
    let extra = match which {
        BlockEdgeFeatures::Both => pair,
        BlockEdgeFeatures::Direction => tape.slice_cols(pair, 0, f)?,
        BlockEdgeFeatures::Distance => tape.slice_cols(pair, f, f + 1)?,
        BlockEdgeFeatures::None => unreachable!(),
    };
    tape.concat_cols(&[distance, extra])
}

fn apply_layer(
    tape: &mut Tape,
    layer: &ConvLayer,
    vars: &LayerVars,
    h: Var,
    e: Var,
    edges: &EdgeIndex,
    norm: &mut Vec<BatchNormState>,
    training: bool,
) -> Result<Var> {
    let mut out = message_aggregation(tape, h, e, vars, edges)?;
    if layer.activate {
        out = tape.act(out, HIDDEN_ACTIVATION);
    }
    if let (Some(state), Some(nv)) = (&layer.norm, vars.norm) {
        let mut state = state.clone();
        out = batch_norm(tape, out, nv, &mut state, training)?;
        norm.push(state);
    }
    Ok(out)
}

/// Full forward pass over a batch.
pub fn deepgd_forward(params: &DeepGDParams, batch: &Batch, training: bool) -> Result<Forward> {
    let mut tape = Tape::new();
    let mut all = Vec::new();
    let input_vars: Vec<LayerVars> = params.input.iter().map(|l| l.register(&mut tape, &mut all)).collect();
    let block_vars: Vec<Vec<LayerVars>> = params
        .blocks
        .iter()
        .map(|b| b.iter().map(|l| l.register(&mut tape, &mut all)).collect())
        .collect();
    let output_vars: Vec<LayerVars> = params.output.iter().map(|l| l.register(&mut tape, &mut all)).collect();

    let edges = &batch.edges;
    let distance = tape.leaf(batch.distance.clone());
    let mut norm = Vec::with_capacity(params.layer_count());
    let mut h = tape.leaf(batch.init.clone());

    for (layer, vars) in params.input.iter().zip(&input_vars) {
        h = apply_layer(&mut tape, layer, vars, h, distance, edges, &mut norm, training)?;
    }
    for (block, vars) in params.blocks.iter().zip(&block_vars) {
        let block_in = h;
        let e = block_edge_features(&mut tape, block_in, distance, edges, params.arch.block_edge_features)?;
        for (layer, v) in block.iter().zip(vars) {
            h = apply_layer(&mut tape, layer, v, h, e, edges, &mut norm, training)?;
        }
        if params.arch.use_residual {
            h = tape.add(h, block_in)?;
        }
    }
    for (layer, vars) in params.output.iter().zip(&output_vars) {
        h = apply_layer(&mut tape, layer, vars, h, distance, edges, &mut norm, training)?;
    }
    debug_assert_eq!(norm.len(), params.norm_states().len());
    Ok(Forward { tape, output: h, params: all, norm_states: norm })
}

/// How the network's input positions are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Random,
    Pivotmds,
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitKind::Random),
            "pivotmds" => Ok(InitKind::Pivotmds),
            other => Err(Error::InvalidConfig(format!("unknown init {other:?}"))),
        }
    }
}

/// Starting positions closer than this (relative to the layout extent)
/// count as coincident.
const TWIN_TOL: f64 = 1e-6;
/// Offset in graph-distance units given to coincident starting positions.
const TWIN_OFFSET: f64 = 0.25;

/// Network input positions. Nodes with identical distance rows (such as
/// sibling leaves) get (nearly) identical PivotMDS coordinates, and an
/// equivariant network can never pull them apart; such nodes are moved a
/// quarter unit off each other so the direction edge features can tell
/// them apart.
pub fn initial_layout(d: &DistanceMatrix, init: InitKind, seed: u64) -> Result<Layout> {
    let x = match init {
        InitKind::Random => random_init(d.node_count(), seed),
        InitKind::Pivotmds => pivot_mds(d, default_pivots(d.node_count()), seed)?,
    };
    let extent = x.positions().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(x.offset_nodes(&x.nodes_within(TWIN_TOL * (1.0 + extent)), TWIN_OFFSET, 0))
}

/// Model input graph honoring the virtual-edge switch.
pub fn model_graph(g: &Graph, d: &DistanceMatrix, arch: &ArchConfig) -> Result<AugmentedGraph> {
    if arch.use_virtual_edges {
        augment(g, d)
    } else {
        AugmentedGraph::real_edges_only(g, d)
    }
}

/// Lays out one graph with a trained network in inference mode.
pub fn infer(g: &Graph, params: &DeepGDParams, init: InitKind, seed: u64) -> Result<Layout> {
    let d = shortest_paths(g);
    let ag = model_graph(g, &d, &params.arch)?;
    let x0 = initial_layout(&d, init, seed)?;
    let batch = Batch::new(&[(&ag, &x0)])?;
    let fwd = deepgd_forward(params, &batch, false)?;
    fwd.layouts(&batch)?.pop().ok_or(Error::InvalidSize("empty batch".into()))
}

const CHECKPOINT_FORMAT: &str = "deepgd-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    params: DeepGDParams,
}

impl DeepGDParams {
    /// Versioned JSON; floats are written in shortest round-trip form.
    pub fn to_checkpoint(&self) -> Result<String> {
        let ck = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, params: self.clone() };
        serde_json::to_string(&ck).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        ck.params.arch.validate()?;
        Ok(ck.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, GraphKind};
    use ndarray::arr2;

    #[test]
    fn aggregation_examples() {
        // identity transforms, W = 0 -> mean of neighbours
        let g = generate_synthetic(GraphKind::Path, 3, 0).unwrap();
        let d = shortest_paths(&g);
        let ag = augment(&g, &d).unwrap();
        let edges = EdgeIndex::new(ag.sources().to_vec(), ag.targets().to_vec(), 3);
        let h0 = arr2(&[[1.0, 2.0], [3.0, 5.0], [-1.0, 0.5]]);

        let mut tape = Tape::new();
        let h = tape.leaf(h0.clone());
        let ident = Array2::from_shape_fn((ag.edge_count(), 4), |(_, j)| if j == 0 || j == 3 { 1.0 } else { 0.0 });
        let t = tape.leaf(ident);
        let zero = DenseParams { w: Array2::zeros((2, 2)), b: Array2::zeros((1, 2)) };
        let zv = DenseVars::register(&mut tape, &zero);
        let out = message_aggregation_with(&mut tape, h, t, zv, &edges).unwrap();
        assert_eq!(tape.value(out), &arr2(&[[1.0, 2.75], [0.0, 1.25], [2.0, 3.5]]));

        // zero transforms, W = I -> identity
        let t0 = tape.leaf(Array2::zeros((ag.edge_count(), 4)));
        let eye = DenseParams { w: Array2::eye(2), b: Array2::zeros((1, 2)) };
        let ev = DenseVars::register(&mut tape, &eye);
        let out = message_aggregation_with(&mut tape, h, t0, ev, &edges).unwrap();
        assert_eq!(tape.value(out), &h0);

        // single node: empty neighbourhood contributes nothing
        let lone = EdgeIndex::new(vec![], vec![], 1);
        let h1 = tape.leaf(arr2(&[[2.0, -1.0]]));
        let t1 = tape.leaf(Array2::zeros((0, 4)));
        let w = DenseParams { w: arr2(&[[1.0, 2.0], [3.0, 4.0]]), b: Array2::zeros((1, 2)) };
        let wv = DenseVars::register(&mut tape, &w);
        let out = message_aggregation_with(&mut tape, h1, t1, wv, &lone).unwrap();
        assert_eq!(tape.value(out), &arr2(&[[-1.0, 0.0]]));
    }

    #[test]
    fn block_edge_feature_layout() {
        let edges = EdgeIndex::new(vec![0, 1], vec![1, 0], 2);
        let mut tape = Tape::new();
        let h = tape.leaf(arr2(&[[3.0, 4.0], [0.0, 0.0]]));
        let d = tape.leaf(arr2(&[[1.0], [1.0]]));
        let e = block_edge_features(&mut tape, h, d, &edges, BlockEdgeFeatures::Both).unwrap();
        assert_eq!(tape.value(e).ncols(), 4);
        assert_eq!(tape.value(e).row(0).to_vec(), vec![1.0, 0.6, 0.8, 5.0]);
        assert_eq!(tape.value(e).row(1).to_vec(), vec![1.0, -0.6, -0.8, 5.0]);
        let e = block_edge_features(&mut tape, h, d, &edges, BlockEdgeFeatures::Distance).unwrap();
        assert_eq!(tape.value(e).row(0).to_vec(), vec![1.0, 5.0]);
        let e = block_edge_features(&mut tape, h, d, &edges, BlockEdgeFeatures::Direction).unwrap();
        assert_eq!(tape.value(e).row(0).to_vec(), vec![1.0, 0.6, 0.8]);

        let same = tape.leaf(arr2(&[[1.0, 1.0], [1.0, 1.0]]));
        let e = block_edge_features(&mut tape, same, d, &edges, BlockEdgeFeatures::Both).unwrap();
        assert_eq!(tape.value(e).row(0).to_vec(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn default_architecture_shape() {
        let p = DeepGDParams::init(&ArchConfig::default(), 0).unwrap();
        assert_eq!(p.blocks.len(), 9);
        assert_eq!(p.layer_count(), 2 + 27 + 2);
        assert_eq!(p.output.last().unwrap().fout(), 2);
        assert!(p.blocks.iter().flatten().all(|l| l.fin() == 8 && l.fout() == 8));
        assert!(p.output.last().unwrap().norm.is_none());
    }

    #[test]
    fn forward_contract() {
        let g = generate_synthetic(GraphKind::RandomConnected, 12, 5).unwrap();
        let p = DeepGDParams::init(&ArchConfig::small(), 3).unwrap();
        let a = infer(&g, &p, InitKind::Pivotmds, 1).unwrap();
        let b = infer(&g, &p, InitKind::Pivotmds, 1).unwrap();
        assert_eq!(a.node_count(), 12);
        assert_eq!(a, b);

        let arch = ArchConfig { use_residual: false, ..ArchConfig::small() };
        let q = DeepGDParams { arch, ..p.clone() };
        let c = infer(&g, &q, InitKind::Pivotmds, 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn edge_network_output_is_bounded() {
        let g = generate_synthetic(GraphKind::RandomTree, 15, 2).unwrap();
        let d = shortest_paths(&g);
        let ag = augment(&g, &d).unwrap();
        let p = DeepGDParams::init(&ArchConfig::small(), 9).unwrap();
        let mut tape = Tape::new();
        let mut all = Vec::new();
        let vars = p.input[0].register(&mut tape, &mut all);
        let feats = Array2::from_shape_vec((ag.edge_count(), 1), ag.edge_features().to_vec()).unwrap() * 50.0;
        let e = tape.leaf(feats);
        let t = edge_transform(&mut tape, e, &vars).unwrap();
        assert_eq!(tape.value(t).ncols(), 2 * 8);
        assert!(tape.value(t).iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let p = DeepGDParams::init(&ArchConfig::small(), 17).unwrap();
        let text = p.to_checkpoint().unwrap();
        let back = DeepGDParams::from_checkpoint(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_checkpoint().unwrap(), text);
        assert!(DeepGDParams::from_checkpoint("{\"format\":\"x\"}").is_err());
    }

    #[test]
    fn tensor_order_matches_registration() {
        let p = DeepGDParams::init(&ArchConfig::small(), 1).unwrap();
        let g = generate_synthetic(GraphKind::Path, 4, 0).unwrap();
        let d = shortest_paths(&g);
        let ag = augment(&g, &d).unwrap();
        let x0 = random_init(4, 0);
        let batch = Batch::new(&[(&ag, &x0)]).unwrap();
        let fwd = deepgd_forward(&p, &batch, true).unwrap();
        let tensors = p.tensors();
        assert_eq!(fwd.params.len(), tensors.len());
        for (v, t) in fwd.params.iter().zip(tensors) {
            assert_eq!(fwd.tape.value(*v), t);
        }
    }
}
