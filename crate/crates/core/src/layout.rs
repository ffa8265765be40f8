use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Per-node 2D positions, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pos: Array2<f64>,
}

impl Layout {
    pub fn new(pos: Array2<f64>) -> Result<Self> {
        if pos.ncols() != 2 {
            return Err(Error::ShapeMismatch {
                op: "layout",
                detail: format!("expected 2 columns, got {}", pos.ncols()),
            });
        }
        if pos.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("layout contains non-finite coordinates".into()));
        }
        Ok(Layout { pos })
    }

    pub fn from_points(points: &[[f64; 2]]) -> Result<Self> {
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        let pos = Array2::from_shape_vec((points.len(), 2), flat).expect("n x 2");
        Layout::new(pos)
    }

    pub fn zeros(n: usize) -> Self {
        Layout { pos: Array2::zeros((n, 2)) }
    }

    pub fn node_count(&self) -> usize {
        self.pos.nrows()
    }

    pub fn positions(&self) -> &Array2<f64> {
        &self.pos
    }

    pub fn into_positions(self) -> Array2<f64> {
        self.pos
    }

    pub fn point(&self, v: usize) -> [f64; 2] {
        [self.pos[[v, 0]], self.pos[[v, 1]]]
    }

    pub fn row(&self, v: usize) -> ArrayView1<'_, f64> {
        self.pos.row(v)
    }

    pub fn distance(&self, u: usize, v: usize) -> f64 {
        let dx = self.pos[[u, 0]] - self.pos[[v, 0]];
        let dy = self.pos[[u, 1]] - self.pos[[v, 1]];
        dx.hypot(dy)
    }

    /// `Some((u, v))` for the first pair closer than `eps`.
    pub fn coincident_pair(&self, eps: f64) -> Option<(usize, usize)> {
        let n = self.node_count();
        (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).find(|&(u, v)| self.distance(u, v) <= eps)
    }

    /// Nodes whose position equals some other node's position exactly.
    pub fn coincident_nodes(&self) -> Vec<usize> {
        let pos = &self.pos;
        let key = |i: usize| (pos[[i, 0]], pos[[i, 1]]);
        let mut order: Vec<usize> = (0..pos.nrows()).collect();
        order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).expect("finite positions"));
        let mut out: Vec<usize> =
            order.windows(2).filter(|w| key(w[0]) == key(w[1])).flat_map(|w| [w[0], w[1]]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Nodes within `eps` of some other node.
    pub fn nodes_within(&self, eps: f64) -> Vec<usize> {
        let n = self.node_count();
        let mut close = vec![false; n];
        for u in 0..n {
            for v in u + 1..n {
                if self.distance(u, v) <= eps {
                    close[u] = true;
                    close[v] = true;
                }
            }
        }
        (0..n).filter(|&u| close[u]).collect()
    }

    /// Moves every exactly coincident node by `magnitude` in a direction
    /// fixed by its index and `salt`.
    pub fn separate_coincident(&self, magnitude: f64, salt: usize) -> Layout {
        self.offset_nodes(&self.coincident_nodes(), magnitude, salt)
    }

    pub fn offset_nodes(&self, nodes: &[usize], magnitude: f64, salt: usize) -> Layout {
        let mut pos = self.pos.clone();
        for &u in nodes {
            let angle = (u as f64 * 2.399_963_229_728_653 + salt as f64 * 1.1).rem_euclid(std::f64::consts::TAU);
            pos[[u, 0]] += magnitude * angle.cos();
            pos[[u, 1]] += magnitude * angle.sin();
        }
        Layout { pos }
    }

    /// Applies `p -> R p + t` with `R` the rotation by `angle`.
    pub fn rigid_transform(&self, angle: f64, tx: f64, ty: f64) -> Layout {
        let (s, c) = angle.sin_cos();
        let mut pos = self.pos.clone();
        for mut row in pos.rows_mut() {
            let (x, y) = (row[0], row[1]);
            row[0] = c * x - s * y + tx;
            row[1] = s * x + c * y + ty;
        }
        Layout { pos }
    }

    pub fn scaled(&self, factor: f64) -> Layout {
        Layout { pos: &self.pos * factor }
    }

    /// `node_id<TAB>x<TAB>y` lines using the graph's external labels.
    /// Floats are printed in shortest round-trip form.
    pub fn to_tsv(&self, g: &Graph) -> String {
        let mut out = String::new();
        for (v, label) in g.labels().iter().enumerate() {
            let _ = writeln!(out, "{label}\t{}\t{}", self.pos[[v, 0]], self.pos[[v, 1]]);
        }
        out
    }

    /// Parses TSV written by [`Layout::to_tsv`]; rows are matched to nodes by
    /// label, so any row order is accepted.
    pub fn from_tsv(text: &str, g: &Graph) -> Result<Layout> {
        let index: std::collections::HashMap<&str, usize> =
            g.labels().iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let n = g.node_count();
        let mut pos = Array2::from_elem((n, 2), f64::NAN);
        let mut seen = vec![false; n];
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = || Error::MalformedLine { line: lineno + 1, content: line.to_string() };
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, x, y] = fields[..] else {
                return Err(malformed());
            };
            let v = *index.get(id).ok_or_else(|| Error::UnknownNodeRef(id.to_string()))?;
            if seen[v] {
                return Err(malformed());
            }
            seen[v] = true;
            pos[[v, 0]] = x.trim().parse().map_err(|_| malformed())?;
            pos[[v, 1]] = y.trim().parse().map_err(|_| malformed())?;
        }
        let found = seen.iter().filter(|&&s| s).count();
        if found != n {
            return Err(Error::DimensionMismatch { expected: n, actual: found });
        }
        Layout::new(pos)
    }
}
