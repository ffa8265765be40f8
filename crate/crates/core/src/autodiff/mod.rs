//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! Operations are appended to a [`Tape`] in evaluation order, so creation
//! order is already a topological order; [`Tape::backward`] walks it in
//! reverse and visits each node once, accumulating gradients additively
//! across fan-out.

pub mod nn;
pub mod optim;

use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};

pub use nn::{
    activation, batch_norm, dense_forward, Activation, BatchNormState, DenseParams, LEAKY_SLOPE,
};
pub use optim::{adamw_step, lr_schedule, AdamWState};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Directed edge index lists shared by the message-passing ops.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// `1 / in_degree(v)`, or 0 for nodes without incoming edges.
    pub inv_deg: Arc<[f64]>,
}

impl EdgeIndex {
    pub fn new(src: Vec<usize>, dst: Vec<usize>, nodes: usize) -> Self {
        let mut deg = vec![0usize; nodes];
        for &v in &dst {
            deg[v] += 1;
        }
        let inv_deg = deg.iter().map(|&d| if d == 0 { 0.0 } else { 1.0 / d as f64 }).collect();
        EdgeIndex { src: src.into(), dst: dst.into(), inv_deg }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Sum(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    BatchNorm { x: Var, scale: Var, shift: Var, xhat: Array2<f64>, inv_std: Array1<f64>, training: bool },
    EdgeMessage { h: Var, t: Var, edges: EdgeIndex, fin: usize, fout: usize },
    PairFeatures { h: Var, edges: EdgeIndex },
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Error {
    Error::ShapeMismatch { op, detail: format!("{:?} vs {:?}", a.dim(), b.dim()) }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.nrows() {
            return Err(shape_err("matmul", x, y));
        }
        let out = x.dot(y);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dim() != y.dim() {
            return Err(shape_err("add", x, y));
        }
        let out = x + y;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// `a + row` with a `1 x c` row broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.nrows() != 1 || r.ncols() != x.ncols() {
            return Err(shape_err("add_row", x, r));
        }
        let out = x + r;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dim() != y.dim() {
            return Err(shape_err("mul", x, y));
        }
        let out = x * y;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn act(&mut self, a: Var, kind: Activation) -> Var {
        let out = self.value(a).mapv(|x| kind.apply(x));
        self.push(out, Op::Act(a, kind))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::ShapeMismatch {
            op: "concat_cols",
            detail: e.to_string(),
        })?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if start > end || end > x.ncols() {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                detail: format!("{start}..{end} of {} columns", x.ncols()),
            });
        }
        let out = x.slice(s![.., start..end]).to_owned();
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Per-column normalization followed by `scale * xhat + shift`.
    /// Training mode uses the batch statistics of `x` (biased variance) and
    /// returns them; inference mode uses the supplied running statistics.
    pub(crate) fn batch_norm_op(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        stats: Option<(&Array1<f64>, &Array1<f64>)>,
        eps: f64,
    ) -> Result<(Var, Array1<f64>, Array1<f64>)> {
        let xv = self.value(x);
        let f = xv.ncols();
        if xv.nrows() == 0 {
            return Err(Error::ShapeMismatch { op: "batch_norm", detail: "no rows".into() });
        }
        if self.value(scale).dim() != (1, f) || self.value(shift).dim() != (1, f) {
            return Err(shape_err("batch_norm", xv, self.value(scale)));
        }
        let training = stats.is_none();
        let (mean, var) = match stats {
            Some((m, v)) => (m.clone(), v.clone()),
            None => {
                let mean = xv.mean_axis(Axis(0)).expect("rows > 0");
                let var = xv.var_axis(Axis(0), 0.0);
                (mean, var)
            }
        };
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = (xv - &mean) * &inv_std;
        let out = &xhat * self.value(scale) + self.value(shift);
        let v = self.push(out, Op::BatchNorm { x, scale, shift, xhat, inv_std, training });
        Ok((v, mean, var))
    }

    /// `out[v] = inv_deg[v] * sum_{(u,v)} h[u] . T_uv` with `T_uv` the
    /// `fin x fout` matrix stored row-major in row `e` of `t`.
    pub fn edge_message(&mut self, h: Var, t: Var, edges: &EdgeIndex) -> Result<Var> {
        let (hv, tv) = (self.value(h), self.value(t));
        let fin = hv.ncols();
        if tv.nrows() != edges.len() || fin == 0 || tv.ncols() % fin != 0 {
            return Err(shape_err("edge_message", hv, tv));
        }
        let fout = tv.ncols() / fin;
        let mut out = Array2::zeros((hv.nrows(), fout));
        for e in 0..edges.len() {
            let (u, v) = (edges.src[e], edges.dst[e]);
            let w = edges.inv_deg[v];
            let hu = hv.row(u);
            let te = tv.row(e);
            let mut ov = out.row_mut(v);
            for i in 0..fin {
                let a = w * hu[i];
                if a == 0.0 {
                    continue;
                }
                let block = te.slice(s![i * fout..(i + 1) * fout]);
                ov.scaled_add(a, &block);
            }
        }
        let edges = edges.clone();
        Ok(self.push(out, Op::EdgeMessage { h, t, edges, fin, fout }))
    }

    /// Per directed edge `(u, v)`: `(h_u - h_v) / |h_u - h_v|` followed by
    /// `|h_u - h_v|`; the direction is 0 when the embeddings coincide.
    pub fn pair_features(&mut self, h: Var, edges: &EdgeIndex) -> Var {
        let hv = self.value(h);
        let f = hv.ncols();
        let mut out = Array2::zeros((edges.len(), f + 1));
        for (e, mut row) in out.rows_mut().into_iter().enumerate() {
            let delta = &hv.row(edges.src[e]) - &hv.row(edges.dst[e]);
            let r = delta.dot(&delta).sqrt();
            if r > 0.0 {
                row.slice_mut(s![..f]).assign(&(&delta / r));
            }
            row[f] = r;
        }
        let edges = edges.clone();
        self.push(out, Op::PairFeatures { h, edges })
    }

    /// Gradients of a `1 x 1` root with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.dim() != (1, 1) {
            return Err(Error::NonScalarRoot { rows: rv.nrows(), cols: rv.ncols() });
        }
        self.backward_with(root, Array2::ones((1, 1)))
    }

    /// Vector-Jacobian product: propagates `seed` (shaped like `node`)
    /// back through the tape.
    pub fn backward_with(&self, node: Var, seed: Array2<f64>) -> Result<Gradients> {
        if seed.dim() != self.value(node).dim() {
            return Err(shape_err("backward_with", self.value(node), &seed));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; node.0 + 1];
        grads[node.0] = Some(seed);
        for i in (0..=node.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let mut acc = |v: Var, delta: Array2<f64>| match &mut grads[v.0] {
            Some(existing) => *existing += &delta,
            slot @ None => *slot = Some(delta),
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(*a, g.dot(&self.value(*b).t()));
                acc(*b, self.value(*a).t().dot(g));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Mul(a, b) => {
                acc(*a, g * self.value(*b));
                acc(*b, g * self.value(*a));
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::Act(a, kind) => {
                let mut d = Array2::zeros(g.raw_dim());
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .and(&self.nodes[i].value)
                    .and(g)
                    .for_each(|d, &x, &y, &g| *d = g * kind.derivative(x, y));
                acc(*a, d);
            }
            Op::Sum(a) => acc(*a, Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]])),
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    acc(p, g.slice(s![.., offset..offset + w]).to_owned());
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let mut d = Array2::zeros(self.value(*a).raw_dim());
                d.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                acc(*a, d);
            }
            Op::BatchNorm { x, scale, shift, xhat, inv_std, training } => {
                let sc = self.value(*scale);
                acc(*shift, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                acc(*scale, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                let dxhat = g * sc;
                let dx = if *training {
                    let m = xhat.nrows() as f64;
                    let sum_d = dxhat.sum_axis(Axis(0));
                    let sum_dx = (&dxhat * xhat).sum_axis(Axis(0));
                    ((&dxhat * m - &sum_d) - xhat * &sum_dx) * &(inv_std / m)
                } else {
                    dxhat * inv_std
                };
                acc(*x, dx);
            }
            Op::EdgeMessage { h, t, edges, fin, fout } => {
                let (hv, tv) = (self.value(*h), self.value(*t));
                let (fin, fout) = (*fin, *fout);
                let mut dh = Array2::zeros(hv.raw_dim());
                let mut dt = Array2::zeros(tv.raw_dim());
                for e in 0..edges.len() {
                    let (u, v) = (edges.src[e], edges.dst[e]);
                    let w = edges.inv_deg[v];
                    if w == 0.0 {
                        continue;
                    }
                    let gv = g.row(v);
                    let te = tv.row(e);
                    let hu = hv.row(u);
                    let mut dte = dt.row_mut(e);
                    for k in 0..fin {
                        let block = te.slice(s![k * fout..(k + 1) * fout]);
                        dh[[u, k]] += w * block.dot(&gv);
                        dte.slice_mut(s![k * fout..(k + 1) * fout]).scaled_add(w * hu[k], &gv);
                    }
                }
                acc(*h, dh);
                acc(*t, dt);
            }
            Op::PairFeatures { h, edges } => {
                let hv = self.value(*h);
                let out = &self.nodes[i].value;
                let f = hv.ncols();
                let mut dh = Array2::zeros(hv.raw_dim());
                for e in 0..edges.len() {
                    let r = out[[e, f]];
                    if r == 0.0 {
                        continue;
                    }
                    let dir = out.slice(s![e, ..f]);
                    let gdir = g.slice(s![e, ..f]);
                    let along = dir.dot(&gdir);
                    // d(delta) = (gdir - dir (dir . gdir)) / r + gdist * dir
                    let ddelta = (&gdir - &(&dir * along)) / r + &(&dir * g[[e, f]]);
                    let (u, v) = (edges.src[e], edges.dst[e]);
                    dh.row_mut(u).scaled_add(1.0, &ddelta);
                    dh.row_mut(v).scaled_add(-1.0, &ddelta);
                }
                acc(*h, dh);
            }
        }
    }
}

/// Result of a backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the root.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zero-filled to `shape` when absent.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    /// Central-difference check of d(sum(w * f(leaf)))/d(leaf) against
    /// the tape, for a function that rebuilds the graph on a fresh tape.
    pub(crate) fn check_grad(
        x0: &Array2<f64>,
        build: impl Fn(&mut Tape, Var) -> Var,
        h: f64,
        tol: f64,
    ) {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let out = build(&mut tape, x);
        let root = tape.sum(out);
        let analytic = tape.backward(root).unwrap().get_or_zeros(x, x0.dim());
        let eval = |p: &Array2<f64>| {
            let mut t = Tape::new();
            let x = t.leaf(p.clone());
            let o = build(&mut t, x);
            t.value(o).sum()
        };
        let mut probe = x0.clone();
        for idx in 0..x0.len() {
            let (r, c) = (idx / x0.ncols(), idx % x0.ncols());
            let orig = probe[[r, c]];
            probe[[r, c]] = orig + h;
            let up = eval(&probe);
            probe[[r, c]] = orig - h;
            let down = eval(&probe);
            probe[[r, c]] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = analytic[[r, c]];
            let err = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
            assert!(err < tol, "entry ({r},{c}): fd {fd} vs analytic {a}");
        }
    }

    #[test]
    fn sum_of_squares() {
        let mut tape = Tape::new();
        let x0 = arr2(&[[1.0, -2.0], [0.5, 3.0]]);
        let x = tape.leaf(x0.clone());
        let sq = tape.mul(x, x).unwrap();
        let root = tape.sum(sq);
        let g = tape.backward(root).unwrap();
        assert_eq!(g.get(x).unwrap(), &(&x0 * 2.0));
    }

    #[test]
    fn tanh_derivative_at_zero_weight() {
        let mut tape = Tape::new();
        let x = tape.leaf(arr2(&[[1.5]]));
        let w = tape.leaf(arr2(&[[0.0]]));
        let wx = tape.matmul(x, w).unwrap();
        let y = tape.act(wx, Activation::Tanh);
        let root = tape.sum(y);
        assert_eq!(tape.backward(root).unwrap().get(w).unwrap()[[0, 0]], 1.5);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Array2::zeros((2, 2)));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarRoot { rows: 2, cols: 2 })));
    }

    #[test]
    fn fan_out_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(arr2(&[[2.0]]));
        let a = tape.scale(x, 3.0);
        let b = tape.add(a, x).unwrap();
        let c = tape.mul(b, x).unwrap(); // 4x^2
        let root = tape.sum(c);
        assert_eq!(tape.backward(root).unwrap().get(x).unwrap()[[0, 0]], 16.0);
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::new();
        let a = tape.leaf(Array2::zeros((2, 3)));
        let b = tape.leaf(Array2::zeros((2, 3)));
        assert!(matches!(tape.matmul(a, b), Err(Error::ShapeMismatch { .. })));
        let r = tape.leaf(Array2::zeros((1, 2)));
        assert!(tape.add_row(a, r).is_err());
    }

    #[test]
    fn edge_message_gradients() {
        let edges = EdgeIndex::new(vec![0, 1, 2, 0, 2], vec![1, 0, 0, 2, 1], 3);
        let h0 = arr2(&[[0.3, -1.2], [0.7, 0.1], [-0.4, 0.9]]);
        let t0 = Array2::from_shape_fn((5, 6), |(i, j)| ((i * 7 + j * 3) as f64).sin());
        check_grad(
            &h0,
            |tape, h| {
                let t = tape.leaf(t0.clone());
                let m = tape.edge_message(h, t, &edges).unwrap();
                tape.mul(m, m).unwrap()
            },
            1e-5,
            1e-6,
        );
        check_grad(
            &t0,
            |tape, t| {
                let h = tape.leaf(h0.clone());
                let m = tape.edge_message(h, t, &edges).unwrap();
                tape.mul(m, m).unwrap()
            },
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn edge_message_mean_of_neighbours() {
        // T = identity: plain mean of incoming neighbour embeddings
        let edges = EdgeIndex::new(vec![1, 2, 0], vec![0, 0, 1], 3);
        let mut tape = Tape::new();
        let h = tape.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]));
        let t = tape.leaf(Array2::from_shape_fn((3, 4), |(_, j)| if j == 0 || j == 3 { 1.0 } else { 0.0 }));
        let m = tape.edge_message(h, t, &edges).unwrap();
        assert_eq!(tape.value(m), &arr2(&[[4.0, 5.0], [1.0, 2.0], [0.0, 0.0]]));
    }

    #[test]
    fn pair_feature_values_and_gradients() {
        let edges = EdgeIndex::new(vec![0, 1], vec![1, 0], 2);
        let mut tape = Tape::new();
        let h = tape.leaf(arr2(&[[3.0, 4.0], [0.0, 0.0]]));
        let p = tape.pair_features(h, &edges);
        assert_eq!(tape.value(p).row(0).to_vec(), vec![0.6, 0.8, 5.0]);

        let same = tape.leaf(arr2(&[[1.0, 1.0], [1.0, 1.0]]));
        let q = tape.pair_features(same, &edges);
        assert!(tape.value(q).iter().all(|&v| v == 0.0));

        let all = EdgeIndex::new(vec![0, 0, 1, 1, 2, 2], vec![1, 2, 0, 2, 0, 1], 3);
        let h0 = arr2(&[[0.3, -1.2, 0.5], [0.7, 0.1, -0.2], [-0.4, 0.9, 1.1]]);
        let wts = Array2::from_shape_fn((6, 4), |(i, j)| 0.3 + ((i + 2 * j) as f64).cos());
        check_grad(
            &h0,
            |tape, h| {
                let p = tape.pair_features(h, &all);
                let w = tape.leaf(wts.clone());
                tape.mul(p, w).unwrap()
            },
            1e-6,
            1e-6,
        );
    }

    #[test]
    fn concat_and_add_row_gradients() {
        let x0 = Array2::from_shape_fn((3, 2), |(i, j)| (i as f64) - 0.5 * j as f64);
        check_grad(
            &x0,
            |tape, x| {
                let y = tape.act(x, Activation::Tanh);
                let c = tape.concat_cols(&[x, y]).unwrap();
                let r = tape.leaf(ndarray::arr2(&[[0.1, 0.2, 0.3, 0.4]]));
                let z = tape.add_row(c, r).unwrap();
                tape.mul(z, z).unwrap()
            },
            1e-5,
            1e-7,
        );
    }
}
